//! Feature layer of the tracked pipeline: corners, binary descriptors and
//! descriptor matching on grayscale frames.

mod brief;
mod detect;
mod matcher;

pub use brief::{describe, fits, gaussian_blur, SamplingPattern, DESCRIPTOR_BITS, PATTERN_RADIUS, SMOOTHING_SIGMA};
pub use detect::detect_corners;
pub use matcher::{match_descriptors, match_features, Match};

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::frame::ImageFrame;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub response: f64,
}

/// 256-bit binary descriptor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Descriptor(pub [u64; 4]);

impl Descriptor {
    #[inline]
    pub fn distance(&self, other: &Descriptor) -> u32 {
        self.0.iter().zip(&other.0).map(|(a, b)| (a ^ b).count_ones()).sum()
    }

    pub fn to_hex(&self) -> String {
        self.0.iter().map(|w| format!("{w:016x}")).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureSet {
    pub keypoints: Vec<Keypoint>,
    pub descriptors: Vec<Descriptor>,
    /// Detections discarded because the sampling pattern left the frame.
    pub dropped: usize,
}

impl FeatureSet {
    pub fn len(&self) -> usize {
        self.keypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keypoints.is_empty()
    }

    /// One `x y response descriptor-hex` line per feature.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (k, d) in self.keypoints.iter().zip(&self.descriptors) {
            let _ = writeln!(out, "{:.3} {:.3} {:.6} {}", k.x, k.y, k.response, d.to_hex());
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrontendConfig {
    /// Segment-test threshold in `[0, 1]` intensity units.
    pub threshold: f64,
    pub max_features: usize,
    /// Grid cell side in pixels for the per-cell cap.
    pub grid: usize,
    pub max_distance: u32,
    pub ratio: f64,
    pub pattern_seed: u64,
}

impl Default for FrontendConfig {
    fn default() -> Self {
        FrontendConfig {
            threshold: 0.06,
            max_features: 1000,
            grid: 32,
            max_distance: 64,
            ratio: 0.8,
            pattern_seed: 0,
        }
    }
}

impl FrontendConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::Config(format!("corner threshold {} outside (0, 1)", self.threshold)));
        }
        if self.max_features == 0 || self.grid == 0 {
            return Err(Error::Config("max_features and grid must be positive".into()));
        }
        if self.max_distance as usize > DESCRIPTOR_BITS {
            return Err(Error::Config(format!("match distance {} > {DESCRIPTOR_BITS}", self.max_distance)));
        }
        if !(self.ratio > 0.0 && self.ratio <= 1.0) {
            return Err(Error::Config(format!("ratio {} outside (0, 1]", self.ratio)));
        }
        Ok(())
    }
}

/// Corners of a single-channel frame.
pub fn detect_features(gray: &ImageFrame, config: &FrontendConfig) -> Result<Vec<Keypoint>> {
    if gray.channels() != 1 {
        return Err(Error::ShapeMismatch {
            expected: "single-channel frame".into(),
            actual: format!("{} channels", gray.channels()),
        });
    }
    Ok(detect_corners(
        gray.pixels(),
        gray.width(),
        gray.height(),
        config.threshold,
        config.max_features,
        config.grid,
    ))
}

/// Descriptors for `keypoints`; those too close to the border are dropped
/// and counted.
pub fn compute_descriptors(gray: &ImageFrame, keypoints: &[Keypoint], pattern: &SamplingPattern) -> FeatureSet {
    let (w, h) = (gray.width(), gray.height());
    let smoothed = gaussian_blur(gray.pixels(), w, h, SMOOTHING_SIGMA);
    let mut set = FeatureSet::default();
    for k in keypoints {
        if fits(k, w, h) {
            set.descriptors.push(describe(&smoothed, w, k, pattern));
            set.keypoints.push(*k);
        } else {
            set.dropped += 1;
        }
    }
    set
}

/// Detection and description; colour frames are converted to luminance.
pub fn extract_features(frame: &ImageFrame, config: &FrontendConfig, pattern: &SamplingPattern) -> Result<FeatureSet> {
    let gray = if frame.channels() == 1 {
        frame.clone()
    } else {
        frame.to_gray()
    };
    let keypoints = detect_features(&gray, config)?;
    Ok(compute_descriptors(&gray, &keypoints, pattern))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn textured(w: usize, h: usize, seed: u64) -> ImageFrame {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut px = vec![0.5; w * h];
        for _ in 0..60 {
            let (x0, y0) = (rng.random_range(0..w), rng.random_range(0..h));
            let (bw, bh) = (rng.random_range(4..20), rng.random_range(4..20));
            let v = rng.random::<f64>();
            for y in y0..(y0 + bh).min(h) {
                for x in x0..(x0 + bw).min(w) {
                    px[y * w + x] = v;
                }
            }
        }
        ImageFrame::new(0.0, w, h, 1, px).unwrap()
    }

    #[test]
    fn extraction_is_deterministic_and_pure() {
        let f = textured(160, 120, 1);
        let cfg = FrontendConfig::default();
        let pattern = SamplingPattern::new(0);
        let a = extract_features(&f, &cfg, &pattern).unwrap();
        let b = extract_features(&f.clone(), &cfg, &pattern).unwrap();
        assert_eq!(a, b);
        assert!(a.len() > 20);
        assert_eq!(a.keypoints.len(), a.descriptors.len());
        assert!(a.keypoints.iter().all(|k| k.x >= 0.0 && k.y >= 0.0 && k.x < 160.0 && k.y < 120.0));
        assert_eq!(a.dump().lines().count(), a.len());
    }

    #[test]
    fn shifted_frame_matches_consistently() {
        let (w, h) = (200, 150);
        let f = textured(w, h, 2);
        let shift = 3;
        let mut px = vec![0.5; w * h];
        for y in 0..h {
            for x in shift..w {
                px[y * w + x] = f.pixels()[y * w + x - shift];
            }
        }
        let g = ImageFrame::new(0.0, w, h, 1, px).unwrap();
        let cfg = FrontendConfig::default();
        let pattern = SamplingPattern::new(3);
        let a = extract_features(&f, &cfg, &pattern).unwrap();
        let b = extract_features(&g, &cfg, &pattern).unwrap();
        let m = match_features(&a, &b, cfg.max_distance, cfg.ratio);
        assert!(m.len() > a.len() / 3, "{} of {}", m.len(), a.len());
        let good = m
            .iter()
            .filter(|mm| {
                let (ka, kb) = (a.keypoints[mm.a], b.keypoints[mm.b]);
                (kb.x - ka.x - shift as f64).abs() < 1.0 && (kb.y - ka.y).abs() < 1.0
            })
            .count();
        assert!(good * 10 >= m.len() * 9, "{good} of {}", m.len());
    }

    #[test]
    fn colour_frames_are_converted() {
        let g = textured(64, 64, 4);
        let rgb = ImageFrame::new(0.0, 64, 64, 3, g.pixels().iter().flat_map(|v| [*v; 3]).collect()).unwrap();
        let cfg = FrontendConfig::default();
        let pattern = SamplingPattern::new(0);
        assert!(detect_features(&rgb, &cfg).is_err());
        let a = extract_features(&rgb, &cfg, &pattern).unwrap();
        let b = extract_features(&g, &cfg, &pattern).unwrap();
        assert_eq!(a.len(), b.len());
    }

    #[test]
    fn config_validation() {
        assert!(FrontendConfig::default().validate().is_ok());
        let bad = FrontendConfig { ratio: 1.5, ..Default::default() };
        assert!(bad.validate().is_err());
    }
}
