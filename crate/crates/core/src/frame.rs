//! Timestamped pixel grids: the attack substrate and the tracker input.

use crate::error::{Error, Result};

/// Colour or grayscale frame with intensities normalized to `[0, 1]`.
///
/// Pixels are stored row-major with interleaved channels, so the value of
/// channel `c` at `(x, y)` lives at `(y * width + x) * channels + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageFrame {
    timestamp: f64,
    width: usize,
    height: usize,
    channels: usize,
    pixels: Vec<f64>,
}

impl ImageFrame {
    pub fn new(
        timestamp: f64,
        width: usize,
        height: usize,
        channels: usize,
        pixels: Vec<f64>,
    ) -> Result<Self> {
        check_timestamp(timestamp)?;
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidArgument(format!(
                "image frames have 1 or 3 channels, got {channels}"
            )));
        }
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument("empty image frame".into()));
        }
        if pixels.len() != width * height * channels {
            return Err(Error::ShapeMismatch {
                expected: format!("{width}x{height}x{channels}"),
                actual: format!("{} values", pixels.len()),
            });
        }
        if let Some(bad) = pixels.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidArgument(format!(
                "pixel value {bad} outside [0, 1]"
            )));
        }
        Ok(ImageFrame {
            timestamp,
            width,
            height,
            channels,
            pixels,
        })
    }

    /// Frame with every value set to `value`.
    pub fn filled(
        timestamp: f64,
        width: usize,
        height: usize,
        channels: usize,
        value: f64,
    ) -> Result<Self> {
        Self::new(
            timestamp,
            width,
            height,
            channels,
            vec![value; width * height * channels],
        )
    }

    pub fn timestamp(&self) -> f64 {
        self.timestamp
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.pixels[(y * self.width + x) * self.channels + c]
    }

    /// Same geometry and timestamp, new pixel buffer.
    pub fn with_pixels(&self, pixels: Vec<f64>) -> Result<Self> {
        Self::new(
            self.timestamp,
            self.width,
            self.height,
            self.channels,
            pixels,
        )
    }

    /// Luminance `0.299 R + 0.587 G + 0.114 B`; a single-channel frame is
    /// returned unchanged.
    pub fn to_gray(&self) -> ImageFrame {
        if self.channels == 1 {
            return self.clone();
        }
        let pixels = self
            .pixels
            .chunks_exact(3)
            .map(|p| (0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]).clamp(0.0, 1.0))
            .collect();
        ImageFrame {
            timestamp: self.timestamp,
            width: self.width,
            height: self.height,
            channels: 1,
            pixels,
        }
    }

    /// Largest per-value absolute difference to `other`.
    pub fn linf_distance(&self, other: &ImageFrame) -> f64 {
        linf(&self.pixels, &other.pixels)
    }
}

/// Metric depth map; `0.0` marks an invalid pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthFrame {
    timestamp: f64,
    width: usize,
    height: usize,
    depth: Vec<f64>,
}

impl DepthFrame {
    pub fn new(timestamp: f64, width: usize, height: usize, depth: Vec<f64>) -> Result<Self> {
        check_timestamp(timestamp)?;
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument("empty depth frame".into()));
        }
        if depth.len() != width * height {
            return Err(Error::ShapeMismatch {
                expected: format!("{width}x{height}"),
                actual: format!("{} values", depth.len()),
            });
        }
        if let Some(bad) = depth.iter().find(|d| !d.is_finite() || **d < 0.0) {
            return Err(Error::InvalidArgument(format!("depth value {bad}")));
        }
        Ok(DepthFrame {
            timestamp,
            width,
            height,
            depth,
        })
    }

    pub fn timestamp(&self) -> f64 {
        self.timestamp
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn depth(&self) -> &[f64] {
        &self.depth
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.depth[y * self.width + x]
    }

    pub fn with_depth(&self, depth: Vec<f64>) -> Result<Self> {
        Self::new(self.timestamp, self.width, self.height, depth)
    }

    pub fn invalid_count(&self) -> usize {
        self.depth.iter().filter(|d| **d == 0.0).count()
    }
}

fn check_timestamp(t: f64) -> Result<()> {
    if !t.is_finite() || t < 0.0 {
        return Err(Error::InvalidArgument(format!("timestamp {t}")));
    }
    Ok(())
}

pub(crate) fn linf(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
