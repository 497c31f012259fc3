//! FAST-9 segment-test corners with 3×3 non-maximum suppression and a
//! per-cell cap.

use super::Keypoint;

/// Bresenham circle of radius 3, clockwise from the top.
pub(crate) const CIRCLE: [(i32, i32); 16] = [
    (0, -3),
    (1, -3),
    (2, -2),
    (3, -1),
    (3, 0),
    (3, 1),
    (2, 2),
    (1, 3),
    (0, 3),
    (-1, 3),
    (-2, 2),
    (-3, 1),
    (-3, 0),
    (-3, -1),
    (-2, -2),
    (-1, -3),
];

const ARC: usize = 9;
const BORDER: usize = 3;

/// Corner score at `(x, y)`, or 0 when the segment test fails. The score is
/// the larger of the two polarities' summed excess over the threshold.
fn corner_score(gray: &[f64], width: usize, x: usize, y: usize, threshold: f64) -> f64 {
    let p = gray[y * width + x];
    let mut ring = [0.0f64; 16];
    for (slot, (dx, dy)) in ring.iter_mut().zip(CIRCLE) {
        let (cx, cy) = ((x as i32 + dx) as usize, (y as i32 + dy) as usize);
        *slot = gray[cy * width + cx] - p;
    }
    let mut best = 0.0f64;
    for polarity in [1.0, -1.0] {
        let passes = |d: f64| polarity * d > threshold;
        // longest run on the doubled ring
        let (mut run, mut longest) = (0, 0);
        for k in 0..32 {
            if passes(ring[k % 16]) {
                run += 1;
                longest = longest.max(run);
            } else {
                run = 0;
            }
        }
        if longest >= ARC {
            let score: f64 = ring
                .iter()
                .filter(|d| passes(**d))
                .map(|d| polarity * d - threshold)
                .sum();
            best = best.max(score);
        }
    }
    best
}

pub(crate) fn score_map(gray: &[f64], width: usize, height: usize, threshold: f64) -> Vec<f64> {
    let mut scores = vec![0.0; width * height];
    if width <= 2 * BORDER || height <= 2 * BORDER {
        return scores;
    }
    for y in BORDER..height - BORDER {
        for x in BORDER..width - BORDER {
            scores[y * width + x] = corner_score(gray, width, x, y, threshold);
        }
    }
    scores
}

/// Offset of the vertex of the parabola through `(-1, a), (0, b), (1, c)`.
fn parabola_peak(a: f64, b: f64, c: f64) -> f64 {
    let denom = a - 2.0 * b + c;
    if denom < 0.0 {
        (0.5 * (a - c) / denom).clamp(-0.5, 0.5)
    } else {
        0.0
    }
}

/// Corners surviving NMS, capped per grid cell and overall, ordered by
/// `(cell, response descending)`.
pub fn detect_corners(
    gray: &[f64],
    width: usize,
    height: usize,
    threshold: f64,
    max_features: usize,
    cell: usize,
) -> Vec<Keypoint> {
    let scores = score_map(gray, width, height, threshold);
    let cell = cell.max(1);
    let cols = width.div_ceil(cell);
    let rows = height.div_ceil(cell);
    let mut candidates: Vec<(usize, Keypoint)> = Vec::new();
    for y in 1..height.saturating_sub(1) {
        for x in 1..width.saturating_sub(1) {
            let s = scores[y * width + x];
            if s <= 0.0 {
                continue;
            }
            // ties go to the pixel scanned first
            let mut is_max = true;
            'nbhd: for dy in -1i32..=1 {
                for dx in -1i32..=1 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let n = scores[(y as i32 + dy) as usize * width + (x as i32 + dx) as usize];
                    let earlier = dy < 0 || (dy == 0 && dx < 0);
                    if n > s || (earlier && n == s) {
                        is_max = false;
                        break 'nbhd;
                    }
                }
            }
            if !is_max {
                continue;
            }
            let at = |xx: usize, yy: usize| scores[yy * width + xx];
            let ox = parabola_peak(at(x - 1, y), s, at(x + 1, y));
            let oy = parabola_peak(at(x, y - 1), s, at(x, y + 1));
            let kp = Keypoint {
                x: x as f64 + ox,
                y: y as f64 + oy,
                response: s,
            };
            candidates.push(((y / cell) * cols + x / cell, kp));
        }
    }
    let by_response = |a: &(usize, Keypoint), b: &(usize, Keypoint)| {
        b.1.response
            .total_cmp(&a.1.response)
            .then(a.1.y.total_cmp(&b.1.y))
            .then(a.1.x.total_cmp(&b.1.x))
    };
    candidates.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| by_response(a, b)));
    let per_cell = max_features.div_ceil(cols * rows).max(1);
    let mut kept: Vec<(usize, Keypoint)> = Vec::new();
    let mut i = 0;
    while i < candidates.len() {
        let c = candidates[i].0;
        let end = candidates[i..].iter().position(|k| k.0 != c).map_or(candidates.len(), |n| i + n);
        kept.extend_from_slice(&candidates[i..end.min(i + per_cell)]);
        i = end;
    }
    if kept.len() > max_features {
        kept.sort_by(by_response);
        kept.truncate(max_features);
        kept.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| by_response(a, b)));
    }
    kept.into_iter().map(|(_, k)| k).collect()
}
