//! Trajectory containers and absolute trajectory error.

use crate::dataset::{associate, write_tum_trajectory};
use crate::error::{Error, Result};
use crate::geometry::{fit_rigid, Point3, Pose};
use crate::odometry::{Outcome, TrackingResult};

/// Timestamped poses with strictly increasing timestamps.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    entries: Vec<(f64, Pose)>,
}

impl Trajectory {
    pub fn new(entries: Vec<(f64, Pose)>) -> Result<Self> {
        for (i, (t, pose)) in entries.iter().enumerate() {
            if !t.is_finite() {
                return Err(Error::InvalidArgument(format!("timestamp {t} at {i}")));
            }
            if i > 0 && *t <= entries[i - 1].0 {
                return Err(Error::InvalidArgument(format!(
                    "timestamps not strictly increasing at {i} ({} then {t})",
                    entries[i - 1].0
                )));
            }
            if !pose.is_valid(1e-9) {
                return Err(Error::InvalidArgument(format!("pose {i} is not a rigid transform")));
            }
        }
        Ok(Trajectory { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(f64, Pose)] {
        &self.entries
    }

    pub fn timestamps(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.0).collect()
    }

    pub fn positions(&self) -> Vec<Point3> {
        self.entries.iter().map(|e| e.1.translation).collect()
    }

    /// `timestamp tx ty tz qx qy qz qw` lines.
    pub fn to_tum(&self) -> String {
        write_tum_trajectory(&self.entries)
    }
}

/// Untracked frames take the pose of the latest preceding tracked frame;
/// frames before the first tracked one take its pose.
pub fn fill_untracked(results: &[TrackingResult]) -> Result<Trajectory> {
    let first = results
        .iter()
        .find_map(|r| match r.outcome {
            Outcome::Tracked(p) => Some(p),
            Outcome::Untracked => None,
        })
        .ok_or_else(|| Error::Insufficient("every frame is untracked".into()))?;
    let mut last = first;
    let entries = results
        .iter()
        .map(|r| {
            if let Outcome::Tracked(p) = r.outcome {
                last = p;
            }
            (r.timestamp, last)
        })
        .collect();
    Trajectory::new(entries)
}

/// Fraction of untracked frames, counted from the frame that bootstrapped
/// tracking (inclusive). Frames before it never had a reference and are
/// excluded; a run that never bootstrapped counts as fully untracked.
pub fn untracked_fraction(results: &[TrackingResult]) -> f64 {
    let Some(start) = results.iter().position(|r| r.is_tracked()) else {
        return if results.is_empty() { 0.0 } else { 1.0 };
    };
    let counted = &results[start..];
    counted.iter().filter(|r| !r.is_tracked()).count() as f64 / counted.len() as f64
}

/// Least-squares rigid transform taking `estimated` onto `ground_truth`.
///
/// Fails with `Degenerate` when the rotation is not unique (collinear or
/// coincident points).
pub fn align_rigid(estimated: &[Point3], ground_truth: &[Point3]) -> Result<Pose> {
    if estimated.len() < 3 {
        return Err(Error::Insufficient(format!(
            "alignment needs 3 pairs, got {}",
            estimated.len()
        )));
    }
    let fit = fit_rigid(estimated, ground_truth)?;
    if fit.rank_deficient {
        return Err(Error::Degenerate("collinear point configuration".into()));
    }
    Ok(fit.pose)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameError {
    pub timestamp: f64,
    /// Translational error after alignment, metres.
    pub error: f64,
    pub tracked: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AteReport {
    pub frames: Vec<FrameError>,
    pub mean: f64,
    pub rmse: f64,
    pub max: f64,
    pub untracked_fraction: f64,
    /// Maps estimated positions into the ground-truth frame.
    pub alignment: Pose,
    /// False when the alignment rotation was not unique. Per-frame errors
    /// are the same for every minimizer, so the report is still valid.
    pub alignment_unique: bool,
}

impl AteReport {
    /// `timestamp,error,tracked` rows with a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("timestamp,error,tracked\n");
        for f in &self.frames {
            out += &format!("{:.6},{:.9},{}\n", f.timestamp, f.error, u8::from(f.tracked));
        }
        out
    }
}

/// ATE of `estimated` against `ground_truth` after rigid alignment over
/// timestamp-associated pairs. Every frame is reported as tracked.
pub fn compute_ate(estimated: &Trajectory, ground_truth: &Trajectory, tolerance: f64) -> Result<AteReport> {
    let pairs = associate(&estimated.timestamps(), &ground_truth.timestamps(), tolerance);
    if pairs.len() < 3 {
        return Err(Error::Insufficient(format!(
            "ATE needs 3 associated poses, got {}",
            pairs.len()
        )));
    }
    let est: Vec<Point3> = pairs.iter().map(|(i, _)| estimated.entries[*i].1.translation).collect();
    let gt: Vec<Point3> = pairs.iter().map(|(_, j)| ground_truth.entries[*j].1.translation).collect();
    let fit = fit_rigid(&est, &gt)?;
    let frames: Vec<FrameError> = pairs
        .iter()
        .zip(est.iter().zip(&gt))
        .map(|((i, _), (e, g))| FrameError {
            timestamp: estimated.entries[*i].0,
            error: (g - fit.pose.transform(e)).norm(),
            tracked: true,
        })
        .collect();
    let n = frames.len() as f64;
    let mean = frames.iter().map(|f| f.error).sum::<f64>() / n;
    let rmse = (frames.iter().map(|f| f.error * f.error).sum::<f64>() / n).sqrt();
    let max = frames.iter().map(|f| f.error).fold(0.0, f64::max);
    Ok(AteReport {
        frames,
        mean,
        rmse,
        max,
        untracked_fraction: 0.0,
        alignment: fit.pose,
        alignment_unique: !fit.rank_deficient,
    })
}

/// Fill, align and score a tracking run: ATE over the filled trajectory
/// with per-frame tracked flags and the untracked fraction.
pub fn evaluate(results: &[TrackingResult], ground_truth: &Trajectory, tolerance: f64) -> Result<AteReport> {
    let filled = fill_untracked(results)?;
    let mut report = compute_ate(&filled, ground_truth, tolerance)?;
    let mut k = 0;
    for f in &mut report.frames {
        while results[k].timestamp != f.timestamp {
            k += 1;
        }
        f.tracked = results[k].is_tracked();
    }
    report.untracked_fraction = untracked_fraction(results);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tracked(t: f64, x: f64) -> TrackingResult {
        TrackingResult::new(t, Outcome::Tracked(Pose::new(nalgebra::Matrix3::identity(), Vector3::new(x, 0.0, 0.0))), 20, 0.01)
    }

    fn untracked(t: f64) -> TrackingResult {
        TrackingResult::new(t, Outcome::Untracked, 0, 0.01)
    }

    fn traj(points: &[[f64; 3]]) -> Trajectory {
        Trajectory::new(
            points
                .iter()
                .enumerate()
                .map(|(i, p)| (i as f64, Pose::new(nalgebra::Matrix3::identity(), Vector3::from(*p))))
                .collect(),
        )
        .unwrap()
    }

    fn random_pose(rng: &mut ChaCha8Rng, scale: f64) -> Pose {
        let aa = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * std::f64::consts::PI / 3f64.sqrt();
        let t = Vector3::new(rng.random_range(-scale..scale), rng.random_range(-scale..scale), rng.random_range(-scale..scale));
        Pose::from_axis_angle(aa, t)
    }

    fn random_points(rng: &mut ChaCha8Rng, n: usize) -> Vec<Point3> {
        (0..n)
            .map(|_| Vector3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)))
            .collect()
    }

    fn sq_residual(pose: &Pose, est: &[Point3], gt: &[Point3]) -> f64 {
        est.iter().zip(gt).map(|(e, g)| (g - pose.transform(e)).norm_squared()).sum()
    }

    #[test]
    fn trajectory_validation() {
        let p = Pose::identity();
        assert!(Trajectory::new(vec![(1.0, p), (1.0, p)]).is_err());
        assert!(Trajectory::new(vec![(2.0, p), (1.0, p)]).is_err());
        let mut bad = p;
        bad.rotation[(0, 0)] = 1.1;
        assert!(Trajectory::new(vec![(1.0, bad)]).is_err());
        assert!(Trajectory::new(vec![]).unwrap().is_empty());
    }

    #[test]
    fn fill_rule() {
        let r = [tracked(0.0, 1.0), untracked(1.0), untracked(2.0), tracked(3.0, 2.0)];
        let xs: Vec<f64> = fill_untracked(&r).unwrap().positions().iter().map(|p| p.x).collect();
        assert_eq!(xs, vec![1.0, 1.0, 1.0, 2.0]);

        let r = [untracked(0.0), tracked(1.0, 5.0)];
        let filled = fill_untracked(&r).unwrap();
        assert_eq!(filled.timestamps(), vec![0.0, 1.0]);
        assert!(filled.positions().iter().all(|p| p.x == 5.0));

        let r = [tracked(0.0, 1.0), tracked(1.0, 2.0)];
        let xs: Vec<f64> = fill_untracked(&r).unwrap().positions().iter().map(|p| p.x).collect();
        assert_eq!(xs, vec![1.0, 2.0]);

        assert!(fill_untracked(&[untracked(0.0), untracked(1.0)]).is_err());
    }

    #[test]
    fn untracked_fraction_convention() {
        assert_eq!(untracked_fraction(&[tracked(0.0, 0.0), tracked(1.0, 0.0)]), 0.0);
        let r = [tracked(0.0, 0.0), untracked(1.0), untracked(2.0), untracked(3.0)];
        assert_eq!(untracked_fraction(&r), 0.75);
        // frames before the bootstrap frame are not counted
        let r = [untracked(0.0), tracked(1.0, 0.0), untracked(2.0)];
        assert_eq!(untracked_fraction(&r), 0.5);
        assert_eq!(untracked_fraction(&[untracked(0.0)]), 1.0);
    }

    #[test]
    fn align_identity_and_known_transform() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts = random_points(&mut rng, 12);
        let id = align_rigid(&pts, &pts).unwrap();
        assert!((id.rotation - nalgebra::Matrix3::identity()).abs().max() < 1e-12);
        assert!(id.translation.norm() < 1e-12);

        for _ in 0..20 {
            let truth = random_pose(&mut rng, 5.0);
            let gt: Vec<Point3> = pts.iter().map(|p| truth.transform(p)).collect();
            let got = align_rigid(&pts, &gt).unwrap();
            assert!((got.rotation - truth.rotation).abs().max() < 1e-9);
            assert!((got.translation - truth.translation).abs().max() < 1e-9);
        }
    }

    #[test]
    fn alignment_beats_random_candidates() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let est = random_points(&mut rng, 15);
        let truth = random_pose(&mut rng, 1.0);
        let gt: Vec<Point3> = est
            .iter()
            .map(|p| truth.transform(p) + Vector3::new(rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1)))
            .collect();
        let best = sq_residual(&align_rigid(&est, &gt).unwrap(), &est, &gt);
        for _ in 0..10_000 {
            // candidates concentrated around the truth make the check meaningful
            let mut c = random_pose(&mut rng, 0.05);
            c = truth.compose(&Pose::from_axis_angle(
                Vector3::new(rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05)),
                c.translation,
            ));
            assert!(sq_residual(&c, &est, &gt) >= best - 1e-12);
        }
    }

    #[test]
    fn alignment_errors() {
        let p = [Vector3::zeros(), Vector3::x()];
        assert!(matches!(align_rigid(&p, &p), Err(Error::Insufficient(_))));
        let line: Vec<Point3> = (0..5).map(|i| Vector3::new(i as f64, 0.0, 0.0)).collect();
        assert!(matches!(align_rigid(&line, &line), Err(Error::Degenerate(_))));
    }

    #[test]
    fn ate_zero_for_identical_and_offset() {
        let gt = traj(&[[0.0, 0.0, 0.0], [1.0, 0.2, 0.0], [2.0, 0.1, 0.5], [3.0, 1.0, 0.2]]);
        let r = compute_ate(&gt, &gt, 0.01).unwrap();
        assert!(r.max < 1e-12 && r.mean <= r.max);
        let shifted = traj(&[[5.0, 1.0, -1.0], [6.0, 1.2, -1.0], [7.0, 1.1, -0.5], [8.0, 2.0, -0.8]]);
        let r = compute_ate(&shifted, &gt, 0.01).unwrap();
        assert!(r.max < 1e-9);
    }

    #[test]
    fn ate_three_pose_toy_matches_planar_closed_form() {
        let gt = traj(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]]);
        let est = traj(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 1.0, 0.0]]);
        let report = compute_ate(&est, &gt, 0.01).unwrap();
        // gt is collinear, so the rotation is not unique but the errors are
        assert!(!report.alignment_unique);

        // independent oracle: 2D Procrustes angle atan2(Σ e×g, Σ e·g) on centred points
        let e: Vec<[f64; 2]> = vec![[0.0, 0.0], [1.0, 0.0], [2.0, 1.0]];
        let g: Vec<[f64; 2]> = vec![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]];
        let mean = |v: &[[f64; 2]]| [v.iter().map(|p| p[0]).sum::<f64>() / 3.0, v.iter().map(|p| p[1]).sum::<f64>() / 3.0];
        let (em, gm) = (mean(&e), mean(&g));
        let (mut dot, mut cross) = (0.0, 0.0);
        for (a, b) in e.iter().zip(&g) {
            let (ax, ay, bx, by) = (a[0] - em[0], a[1] - em[1], b[0] - gm[0], b[1] - gm[1]);
            dot += ax * bx + ay * by;
            cross += ax * by - ay * bx;
        }
        let th = cross.atan2(dot);
        let errors: Vec<f64> = e
            .iter()
            .zip(&g)
            .map(|(a, b)| {
                let (ax, ay) = (a[0] - em[0], a[1] - em[1]);
                let (rx, ry) = (th.cos() * ax - th.sin() * ay, th.sin() * ax + th.cos() * ay);
                ((b[0] - gm[0] - rx).powi(2) + (b[1] - gm[1] - ry).powi(2)).sqrt()
            })
            .collect();
        for (f, want) in report.frames.iter().zip(&errors) {
            assert!((f.error - want).abs() < 1e-9, "{} vs {want}", f.error);
        }
        let mean_err = errors.iter().sum::<f64>() / 3.0;
        assert!((report.mean - mean_err).abs() < 1e-9);
        let rmse = (errors.iter().map(|x| x * x).sum::<f64>() / 3.0).sqrt();
        assert!((report.rmse - rmse).abs() < 1e-9);
    }

    #[test]
    fn ate_needs_three_associations() {
        let a = traj(&[[0.0; 3], [1.0, 0.0, 0.0]]);
        assert!(matches!(compute_ate(&a, &a, 0.01), Err(Error::Insufficient(_))));
    }

    #[test]
    fn subsampled_self_association_is_zero() {
        let gt = traj(&[[0.0, 0.0, 0.0], [1.0, 0.5, 0.0], [2.0, 0.0, 1.0], [2.5, 1.0, 1.0], [3.0, 2.0, 0.0], [4.0, 0.0, 0.3]]);
        let sub = Trajectory::new(gt.entries().iter().step_by(2).copied().collect()).unwrap();
        let r = compute_ate(&sub, &gt, 0.01).unwrap();
        assert_eq!(r.frames.len(), 3);
        assert!(r.max < 1e-12);
    }

    #[test]
    fn evaluate_marks_tracked_frames() {
        let gt = traj(&[[0.0, 0.0, 0.0], [1.0, 0.5, 0.0], [2.0, 0.0, 1.0], [3.0, 2.0, 0.0]]);
        let results: Vec<TrackingResult> = gt
            .entries()
            .iter()
            .enumerate()
            .map(|(i, (t, p))| {
                if i == 2 {
                    untracked(*t)
                } else {
                    TrackingResult::new(*t, Outcome::Tracked(*p), 30, 0.0)
                }
            })
            .collect();
        let r = evaluate(&results, &gt, 0.01).unwrap();
        assert_eq!(r.frames.iter().map(|f| f.tracked).collect::<Vec<_>>(), vec![true, true, false, true]);
        assert_eq!(r.untracked_fraction, 0.25);
        assert!(r.frames[2].error > 0.1);
        assert!(r.to_csv().starts_with("timestamp,error,tracked\n0.000000,"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn ate_invariant_under_rigid_motion_of_estimate(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let gt_pts = random_points(&mut rng, 8);
            let est_pts: Vec<Point3> = gt_pts.iter().map(|p| p + Vector3::new(rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2))).collect();
            let motion = random_pose(&mut rng, 3.0);
            let make = |pts: &[Point3]| Trajectory::new(pts.iter().enumerate().map(|(i, p)| (i as f64, Pose::new(nalgebra::Matrix3::identity(), *p))).collect()).unwrap();
            let moved: Vec<Point3> = est_pts.iter().map(|p| motion.transform(p)).collect();
            let a = compute_ate(&make(&est_pts), &make(&gt_pts), 0.01).unwrap();
            let b = compute_ate(&make(&moved), &make(&gt_pts), 0.01).unwrap();
            for (x, y) in a.frames.iter().zip(&b.frames) {
                prop_assert!((x.error - y.error).abs() < 1e-9);
            }
            prop_assert!(a.mean <= a.max + 1e-15);
            prop_assert!(a.frames.iter().all(|f| f.error >= 0.0));
        }
    }
}
