//! Frame-to-keyframe RGB-D odometry built on the feature frontend.

mod pipeline;
mod ransac;
mod tracker;

pub use pipeline::{run_sequence, FrameLog, RunOptions, RunOutput};
pub use ransac::{estimate_rigid, needed_iterations, EstimatorConfig, RigidEstimate};
pub use tracker::{Keyframe, TimingMode, TimingModel, Tracker, TrackerConfig};

use crate::frame::DepthFrame;
use crate::frontend::Keypoint;
use crate::geometry::{Intrinsics, Point3, Pose};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Outcome {
    Tracked(Pose),
    Untracked,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackingResult {
    pub timestamp: f64,
    pub outcome: Outcome,
    /// RANSAC inliers (or 3D points for the bootstrap frame).
    pub inliers: usize,
    /// Seconds spent tracking the frame.
    pub exec_time: f64,
}

impl TrackingResult {
    pub fn new(timestamp: f64, outcome: Outcome, inliers: usize, exec_time: f64) -> Self {
        TrackingResult {
            timestamp,
            outcome,
            inliers,
            exec_time,
        }
    }

    pub fn is_tracked(&self) -> bool {
        matches!(self.outcome, Outcome::Tracked(_))
    }

    pub fn pose(&self) -> Option<Pose> {
        match self.outcome {
            Outcome::Tracked(p) => Some(p),
            Outcome::Untracked => None,
        }
    }
}

/// Camera-frame point for a keypoint, using the depth at the nearest pixel.
pub fn back_project(keypoint: &Keypoint, depth: &DepthFrame, intrinsics: &Intrinsics) -> Option<Point3> {
    let (x, y) = (keypoint.x.round(), keypoint.y.round());
    if x < 0.0 || y < 0.0 || x >= depth.width() as f64 || y >= depth.height() as f64 {
        return None;
    }
    let d = depth.get(x as usize, y as usize);
    (d > 0.0 && d.is_finite()).then(|| intrinsics.ray(keypoint.x, keypoint.y) * d)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kp(x: f64, y: f64) -> Keypoint {
        Keypoint { x, y, response: 1.0 }
    }

    #[test]
    fn back_projection_examples() {
        let intr = Intrinsics::new(500.0, 500.0, 320.0, 240.0).unwrap();
        let mut d = vec![1.0; 640 * 480];
        d[240 * 640 + 320] = 2.0;
        d[10 * 640 + 10] = 0.0;
        let depth = DepthFrame::new(0.0, 640, 480, d).unwrap();
        assert_eq!(back_project(&kp(320.0, 240.0), &depth, &intr), Some(Point3::new(0.0, 0.0, 2.0)));
        let p = back_project(&kp(420.0, 240.0), &depth, &intr).unwrap();
        assert!((p - Point3::new(0.2, 0.0, 1.0)).norm() < 1e-15);
        assert_eq!(back_project(&kp(10.2, 9.7), &depth, &intr), None);
        assert_eq!(back_project(&kp(639.6, 3.0), &depth, &intr), None);
    }

    #[test]
    fn result_accessors() {
        let r = TrackingResult::new(1.0, Outcome::Tracked(Pose::identity()), 20, 0.01);
        assert!(r.is_tracked());
        assert_eq!(r.pose(), Some(Pose::identity()));
        assert_eq!(TrackingResult::new(1.0, Outcome::Untracked, 0, 0.0).pose(), None);
    }
}
