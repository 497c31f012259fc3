//! Robust rigid registration of 3D–3D correspondences.

use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::{fit_rigid, Point3, Pose};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorConfig {
    pub iterations: usize,
    /// Inlier threshold on `‖dst − T src‖`, metres.
    pub inlier_radius: f64,
    pub min_inliers: usize,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            iterations: 200,
            inlier_radius: 0.03,
            min_inliers: 15,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.min_inliers < 3 {
            return Err(Error::Config("RANSAC needs iterations >= 1 and min_inliers >= 3".into()));
        }
        if !(self.inlier_radius > 0.0 && self.inlier_radius.is_finite()) {
            return Err(Error::Config(format!("inlier radius {}", self.inlier_radius)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RigidEstimate {
    /// `dst ≈ pose · src`; `None` when fewer than `min_inliers` agree.
    pub pose: Option<Pose>,
    pub inliers: Vec<bool>,
    pub inlier_count: usize,
    /// Hypotheses scored (excluding resampled degenerate draws).
    pub hypotheses: usize,
}

/// Smallest sample triangle area (m²) accepted as non-collinear.
const MIN_SAMPLE_AREA: f64 = 1e-6;
const MAX_REFINEMENTS: usize = 5;

fn is_degenerate(p: [&Point3; 3]) -> bool {
    (p[1] - p[0]).cross(&(p[2] - p[0])).norm() * 0.5 < MIN_SAMPLE_AREA
}

fn score(pose: &Pose, src: &[Point3], dst: &[Point3], radius: f64) -> (usize, Vec<bool>) {
    let r2 = radius * radius;
    let mask: Vec<bool> = src
        .iter()
        .zip(dst)
        .map(|(s, d)| (d - pose.transform(s)).norm_squared() <= r2)
        .collect();
    (mask.iter().filter(|b| **b).count(), mask)
}

/// 3-point RANSAC with closed-form fits, refined on the best consensus set.
pub fn estimate_rigid<R: Rng>(
    src: &[Point3],
    dst: &[Point3],
    config: &EstimatorConfig,
    rng: &mut R,
) -> Result<RigidEstimate> {
    if src.len() != dst.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} points", src.len()),
            actual: format!("{} points", dst.len()),
        });
    }
    let n = src.len();
    let failure = |inliers: Vec<bool>, count, hypotheses| RigidEstimate {
        pose: None,
        inliers,
        inlier_count: count,
        hypotheses,
    };
    if n < 3 {
        return Ok(failure(vec![false; n], 0, 0));
    }
    let mut best: Option<(usize, Pose, Vec<bool>)> = None;
    let mut hypotheses = 0;
    let mut draws = 0;
    let max_draws = config.iterations * 10;
    while hypotheses < config.iterations && draws < max_draws {
        draws += 1;
        let i = rng.random_range(0..n);
        let mut j = rng.random_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        let mut k = rng.random_range(0..n - 2);
        for taken in [i.min(j), i.max(j)] {
            if k >= taken {
                k += 1;
            }
        }
        if is_degenerate([&src[i], &src[j], &src[k]]) || is_degenerate([&dst[i], &dst[j], &dst[k]]) {
            continue;
        }
        hypotheses += 1;
        let fit = fit_rigid(&[src[i], src[j], src[k]], &[dst[i], dst[j], dst[k]])?;
        let (count, mask) = score(&fit.pose, src, dst, config.inlier_radius);
        if best.as_ref().is_none_or(|b| count > b.0) {
            let all = count == n;
            best = Some((count, fit.pose, mask));
            if all {
                break;
            }
        }
    }
    let Some((count, pose, mask)) = best else {
        return Ok(failure(vec![false; n], 0, hypotheses));
    };
    if count < config.min_inliers {
        return Ok(failure(mask, count, hypotheses));
    }
    // least-squares refit on the consensus set, repeated while it changes
    let (mut pose, mut mask, mut count) = (pose, mask, count);
    for _ in 0..MAX_REFINEMENTS {
        let (in_src, in_dst): (Vec<Point3>, Vec<Point3>) = mask
            .iter()
            .zip(src.iter().zip(dst))
            .filter(|(m, _)| **m)
            .map(|(_, (s, d))| (*s, *d))
            .unzip();
        let refined = fit_rigid(&in_src, &in_dst)?.pose.orthonormalized();
        let (refined_count, refined_mask) = score(&refined, src, dst, config.inlier_radius);
        if refined_count < config.min_inliers {
            break;
        }
        let stable = refined_mask == mask;
        (pose, mask, count) = (refined, refined_mask, refined_count);
        if stable {
            break;
        }
    }
    Ok(RigidEstimate {
        pose: Some(pose),
        inliers: mask,
        inlier_count: count,
        hypotheses,
    })
}

/// RANSAC iterations needed to draw one all-inlier triple with 99%
/// confidence at the given inlier ratio, capped at `max`.
pub fn needed_iterations(inlier_ratio: f64, max: usize) -> usize {
    let w3 = inlier_ratio.clamp(0.0, 1.0).powi(3);
    if w3 >= 1.0 {
        return 1;
    }
    if w3 <= 0.0 {
        return max;
    }
    let k = (0.01f64).ln() / (1.0 - w3).ln();
    (k.ceil() as usize).clamp(1, max)
}
