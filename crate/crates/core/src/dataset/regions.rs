use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Axis-aligned box in pixel coordinates, as read from a region file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundingBox {
    pub x: i64,
    pub y: i64,
    pub w: i64,
    pub h: i64,
}

/// Half-open pixel rectangle `[x0, x1) × [y0, y1)` inside a frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelRect {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl PixelRect {
    pub fn full(width: usize, height: usize) -> Self {
        PixelRect {
            x0: 0,
            y0: 0,
            x1: width,
            y1: height,
        }
    }

    #[inline]
    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }

    pub fn area(&self) -> usize {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }
}

impl BoundingBox {
    pub fn new(x: i64, y: i64, w: i64, h: i64) -> Result<Self> {
        if w < 1 || h < 1 {
            return Err(Error::InvalidArgument(format!("box size {w}x{h}")));
        }
        Ok(BoundingBox { x, y, w, h })
    }

    /// Intersection with the frame; `None` when nothing remains.
    pub fn clamp(&self, width: usize, height: usize) -> Option<PixelRect> {
        let x0 = self.x.clamp(0, width as i64) as usize;
        let y0 = self.y.clamp(0, height as i64) as usize;
        let x1 = (self.x + self.w).clamp(0, width as i64) as usize;
        let y1 = (self.y + self.h).clamp(0, height as i64) as usize;
        (x1 > x0 && y1 > y0).then_some(PixelRect { x0, y0, x1, y1 })
    }
}

/// Per-pixel membership in the union of `rects`.
pub(crate) fn union_mask(rects: &[PixelRect], width: usize, height: usize) -> Vec<bool> {
    let mut mask = vec![false; width * height];
    for r in rects {
        for y in r.y0..r.y1 {
            mask[y * width + r.x0..y * width + r.x1].fill(true);
        }
    }
    mask
}

/// Detection boxes grouped by frame timestamp.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RegionSet {
    frames: Vec<(f64, Vec<BoundingBox>)>,
}

impl RegionSet {
    pub fn new(mut entries: Vec<(f64, BoundingBox)>) -> Self {
        entries.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut frames: Vec<(f64, Vec<BoundingBox>)> = Vec::new();
        for (t, b) in entries {
            match frames.last_mut() {
                Some((last, boxes)) if *last == t => boxes.push(b),
                _ => frames.push((t, vec![b])),
            }
        }
        RegionSet { frames }
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    pub fn frames(&self) -> &[(f64, Vec<BoundingBox>)] {
        &self.frames
    }

    /// Boxes for the frame whose timestamp is nearest to `t` within
    /// `tolerance`; empty when no frame matches.
    pub fn boxes_at(&self, t: f64, tolerance: f64) -> &[BoundingBox] {
        let idx = self.frames.partition_point(|(ft, _)| *ft < t);
        let mut best: Option<(f64, usize)> = None;
        for k in [idx.wrapping_sub(1), idx] {
            if let Some((ft, _)) = self.frames.get(k) {
                let d = (ft - t).abs();
                if d <= tolerance && best.is_none_or(|(bd, _)| d < bd) {
                    best = Some((d, k));
                }
            }
        }
        best.map_or(&[], |(_, k)| &self.frames[k].1)
    }

    /// Clamped rectangles for the frame at `t`.
    pub fn rects_at(&self, t: f64, tolerance: f64, width: usize, height: usize) -> Vec<PixelRect> {
        self.boxes_at(t, tolerance)
            .iter()
            .filter_map(|b| b.clamp(width, height))
            .collect()
    }
}

/// Parse `timestamp x y w h` lines (`#` comments allowed).
pub fn parse_regions(text: &str, origin: &Path) -> Result<RegionSet> {
    let mut entries = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let malformed = |msg: String| Error::Parse {
            path: origin.to_path_buf(),
            line: n + 1,
            msg,
        };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(malformed(format!("expected 5 fields, found {}", fields.len())));
        }
        let t: f64 = fields[0]
            .parse()
            .ok()
            .filter(|t: &f64| t.is_finite() && *t >= 0.0)
            .ok_or_else(|| malformed(format!("bad timestamp {:?}", fields[0])))?;
        let mut nums = [0i64; 4];
        for (slot, field) in nums.iter_mut().zip(&fields[1..]) {
            let v: f64 = field
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| malformed(format!("bad number {field:?}")))?;
            *slot = v.round() as i64;
        }
        let [x, y, w, h] = nums;
        if w < 0 || h < 0 {
            return Err(malformed(format!("negative box size {w}x{h}")));
        }
        let b = BoundingBox::new(x, y, w, h).map_err(|e| malformed(e.to_string()))?;
        entries.push((t, b));
    }
    Ok(RegionSet::new(entries))
}

pub fn load_regions(path: &Path) -> Result<RegionSet> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_regions(&text, path)
}
