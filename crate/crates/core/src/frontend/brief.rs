//! BRIEF-style binary descriptors: 256 intensity comparisons between
//! seeded point pairs on a Gaussian-smoothed image.

use rand_distr::{Distribution, Normal};

use super::{Descriptor, Keypoint};
use crate::rng::{frame_rng, stream};

pub const DESCRIPTOR_BITS: usize = 256;
/// Largest pattern offset from the keypoint, pixels.
pub const PATTERN_RADIUS: i32 = 15;
const PATTERN_SIGMA: f64 = 31.0 / 5.0;
pub const SMOOTHING_SIGMA: f64 = 2.0;

/// Fixed comparison pairs, shared by every frame of a run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SamplingPattern {
    pairs: Vec<[(i32, i32); 2]>,
}

impl SamplingPattern {
    pub fn new(seed: u64) -> Self {
        let mut rng = frame_rng(seed, stream::PATTERN, 0);
        let normal = Normal::new(0.0, PATTERN_SIGMA).expect("positive sigma");
        let mut offset = || {
            (normal.sample(&mut rng).round() as i32).clamp(-PATTERN_RADIUS, PATTERN_RADIUS)
        };
        let mut pairs = Vec::with_capacity(DESCRIPTOR_BITS);
        while pairs.len() < DESCRIPTOR_BITS {
            let a = (offset(), offset());
            let b = (offset(), offset());
            if a != b {
                pairs.push([a, b]);
            }
        }
        SamplingPattern { pairs }
    }

    pub fn pairs(&self) -> &[[(i32, i32); 2]] {
        &self.pairs
    }
}

/// Separable Gaussian blur with edge clamping.
pub fn gaussian_blur(img: &[f64], width: usize, height: usize, sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as i64;
    let mut kernel: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= sum);
    let clamp = |v: i64, n: usize| v.clamp(0, n as i64 - 1) as usize;

    let mut tmp = vec![0.0; img.len()];
    for y in 0..height {
        let row = &img[y * width..(y + 1) * width];
        for x in 0..width {
            tmp[y * width + x] = kernel
                .iter()
                .enumerate()
                .map(|(k, w)| w * row[clamp(x as i64 + k as i64 - radius, width)])
                .sum();
        }
    }
    let mut out = vec![0.0; img.len()];
    for y in 0..height {
        for x in 0..width {
            out[y * width + x] = kernel
                .iter()
                .enumerate()
                .map(|(k, w)| w * tmp[clamp(y as i64 + k as i64 - radius, height) * width + x])
                .sum();
        }
    }
    out
}

/// Pixel a keypoint is sampled at.
#[inline]
pub(crate) fn anchor(k: &Keypoint) -> (i64, i64) {
    (k.x.round() as i64, k.y.round() as i64)
}

/// Whether the whole pattern around `k` lies inside the frame.
pub fn fits(k: &Keypoint, width: usize, height: usize) -> bool {
    let (x, y) = anchor(k);
    let r = i64::from(PATTERN_RADIUS);
    x >= r && y >= r && x + r < width as i64 && y + r < height as i64
}

/// Descriptor of one keypoint on an already smoothed image. The keypoint
/// must satisfy [`fits`].
pub fn describe(smoothed: &[f64], width: usize, k: &Keypoint, pattern: &SamplingPattern) -> Descriptor {
    let (x, y) = anchor(k);
    let at = |(dx, dy): (i32, i32)| smoothed[(y + i64::from(dy)) as usize * width + (x + i64::from(dx)) as usize];
    let mut bits = [0u64; 4];
    for (i, [a, b]) in pattern.pairs.iter().enumerate() {
        if at(*a) < at(*b) {
            bits[i / 64] |= 1 << (i % 64);
        }
    }
    Descriptor(bits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(w: usize, h: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..w * h).map(|_| rng.random::<f64>()).collect()
    }

    #[test]
    fn pattern_is_seeded_and_bounded() {
        let a = SamplingPattern::new(1);
        assert_eq!(a, SamplingPattern::new(1));
        assert_ne!(a, SamplingPattern::new(2));
        assert_eq!(a.pairs().len(), 256);
        for [p, q] in a.pairs() {
            assert_ne!(p, q);
            for v in [p.0, p.1, q.0, q.1] {
                assert!(v.abs() <= PATTERN_RADIUS);
            }
        }
    }

    #[test]
    fn blur_preserves_constants_and_mass() {
        let c = gaussian_blur(&vec![0.3; 20 * 10], 20, 10, 2.0);
        assert!(c.iter().all(|v| (v - 0.3).abs() < 1e-12));
        let img = noise(40, 40, 3);
        let b = gaussian_blur(&img, 40, 40, 2.0);
        let var = |v: &[f64]| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            v.iter().map(|x| (x - m).powi(2)).sum::<f64>()
        };
        assert!(var(&b) < var(&img) / 10.0);
    }

    #[test]
    fn identical_and_inverted_patches() {
        let (w, h) = (48, 48);
        let img = gaussian_blur(&noise(w, h, 5), w, h, SMOOTHING_SIGMA);
        let inverted: Vec<f64> = img.iter().map(|v| 1.0 - v).collect();
        let pattern = SamplingPattern::new(9);
        let k = Keypoint { x: 24.0, y: 24.0, response: 1.0 };
        let d = describe(&img, w, &k, &pattern);
        assert_eq!(d.distance(&describe(&img.clone(), w, &k, &pattern)), 0);
        // strict comparisons flip for every pair except exact ties
        let ties = pattern
            .pairs()
            .iter()
            .filter(|[a, b]| {
                let at = |(dx, dy): (i32, i32)| img[(24 + dy) as usize * w + (24 + dx) as usize];
                at(*a) == at(*b)
            })
            .count() as u32;
        assert_eq!(d.distance(&describe(&inverted, w, &k, &pattern)), 256 - ties);
        assert!(ties < 8);
        let other = describe(&img, w, &k, &SamplingPattern::new(10));
        assert_ne!(d, other);
    }

    #[test]
    fn border_fit() {
        let k = |x, y| Keypoint { x, y, response: 1.0 };
        assert!(fits(&k(15.0, 15.0), 31, 31));
        assert!(!fits(&k(14.4, 20.0), 40, 40));
        assert!(!fits(&k(20.0, 24.5), 40, 40));
        assert!(fits(&k(24.4, 24.0), 40, 40));
    }
}
