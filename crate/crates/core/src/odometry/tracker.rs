//! Keyframe-based tracking loop state.

use std::time::Instant;

use super::ransac::{estimate_rigid, needed_iterations, EstimatorConfig};
use super::{back_project, Outcome, TrackingResult};
use crate::error::{Error, Result};
use crate::frame::{DepthFrame, ImageFrame};
use crate::frontend::{extract_features, match_features, FeatureSet, FrontendConfig, SamplingPattern};
use crate::geometry::{Intrinsics, Point3, Pose};
use crate::rng::{frame_rng, stream};

/// How per-frame execution time is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TimingMode {
    /// Deterministic cost model of the work done on the frame.
    #[default]
    Modeled,
    /// Wall-clock time of the tracking call; not reproducible.
    Wall,
}

impl std::str::FromStr for TimingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "modeled" => Ok(TimingMode::Modeled),
            "wall" => Ok(TimingMode::Wall),
            other => Err(Error::Config(format!("unknown timing mode {other:?}"))),
        }
    }
}

impl std::fmt::Display for TimingMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TimingMode::Modeled => "modeled",
            TimingMode::Wall => "wall",
        })
    }
}

/// Seconds per unit of work for [`TimingMode::Modeled`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimingModel {
    pub base: f64,
    pub per_pixel: f64,
    pub per_feature: f64,
    /// Per descriptor comparison during matching.
    pub per_comparison: f64,
    /// Per correspondence per RANSAC hypothesis.
    pub per_residual: f64,
}

impl Default for TimingModel {
    fn default() -> Self {
        TimingModel {
            base: 0.010,
            per_pixel: 1e-7,
            per_feature: 2e-6,
            per_comparison: 2e-8,
            per_residual: 1e-7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackerConfig {
    pub frontend: FrontendConfig,
    pub estimator: EstimatorConfig,
    /// Replace the keyframe when a tracked frame has fewer inliers.
    pub refresh_inliers: usize,
    /// Replace the keyframe beyond this translation from it, metres.
    pub refresh_distance: f64,
    pub timing: TimingMode,
    pub timing_model: TimingModel,
    pub seed: u64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            frontend: FrontendConfig::default(),
            estimator: EstimatorConfig::default(),
            refresh_inliers: 40,
            refresh_distance: 0.15,
            timing: TimingMode::Modeled,
            timing_model: TimingModel::default(),
            seed: 0,
        }
    }
}

/// Features with valid depth and their camera-frame points.
#[derive(Debug, Clone, PartialEq)]
pub struct Keyframe {
    /// Camera-to-world pose.
    pub pose: Pose,
    pub features: FeatureSet,
    pub points: Vec<Point3>,
}

#[derive(Debug, Clone)]
pub struct Tracker {
    config: TrackerConfig,
    intrinsics: Intrinsics,
    pattern: SamplingPattern,
    keyframe: Option<Keyframe>,
    last_pose: Pose,
    frame: usize,
}

/// Keep only features whose depth is valid.
fn lift(features: FeatureSet, depth: &DepthFrame, intrinsics: &Intrinsics) -> (FeatureSet, Vec<Point3>) {
    let mut out = FeatureSet {
        dropped: features.dropped,
        ..Default::default()
    };
    let mut points = Vec::new();
    for (k, d) in features.keypoints.into_iter().zip(features.descriptors) {
        if let Some(p) = back_project(&k, depth, intrinsics) {
            out.keypoints.push(k);
            out.descriptors.push(d);
            points.push(p);
        }
    }
    (out, points)
}

impl Tracker {
    pub fn new(config: TrackerConfig, intrinsics: Intrinsics) -> Result<Self> {
        config.frontend.validate()?;
        config.estimator.validate()?;
        Ok(Tracker {
            pattern: SamplingPattern::new(config.frontend.pattern_seed),
            config,
            intrinsics,
            keyframe: None,
            last_pose: Pose::identity(),
            frame: 0,
        })
    }

    pub fn keyframe(&self) -> Option<&Keyframe> {
        self.keyframe.as_ref()
    }

    pub fn last_pose(&self) -> Pose {
        self.last_pose
    }

    /// Track one frame against the current keyframe. The first frame with
    /// enough valid 3D features becomes the keyframe at the identity pose.
    pub fn track_frame(&mut self, rgb: &ImageFrame, depth: &DepthFrame) -> Result<TrackingResult> {
        let start = Instant::now();
        let index = self.frame;
        self.frame += 1;
        if (rgb.width(), rgb.height()) != (depth.width(), depth.height()) {
            return Err(Error::ShapeMismatch {
                expected: format!("{}x{} depth", rgb.width(), rgb.height()),
                actual: format!("{}x{}", depth.width(), depth.height()),
            });
        }
        let features = extract_features(rgb, &self.config.frontend, &self.pattern)?;
        let detected = features.len() + features.dropped;
        let (features, points) = lift(features, depth, &self.intrinsics);
        let model = &self.config.timing_model;
        let mut modeled = model.base
            + model.per_pixel * (rgb.width() * rgb.height()) as f64
            + model.per_feature * detected as f64;
        let min_inliers = self.config.estimator.min_inliers;

        let (outcome, inliers) = match &self.keyframe {
            None if points.len() >= min_inliers => {
                let n = points.len();
                self.keyframe = Some(Keyframe {
                    pose: Pose::identity(),
                    features,
                    points,
                });
                self.last_pose = Pose::identity();
                (Outcome::Tracked(Pose::identity()), n)
            }
            None => (Outcome::Untracked, 0),
            Some(kf) => {
                modeled += model.per_comparison * (kf.features.len() * features.len()) as f64;
                let matches = match_features(&kf.features, &features, self.config.frontend.max_distance, self.config.frontend.ratio);
                let (src, dst): (Vec<Point3>, Vec<Point3>) =
                    matches.iter().map(|m| (points[m.b], kf.points[m.a])).unzip();
                let mut rng = frame_rng(self.config.seed, stream::RANSAC, index as u64);
                let est = estimate_rigid(&src, &dst, &self.config.estimator, &mut rng)?;
                let ratio = if src.is_empty() { 0.0 } else { est.inlier_count as f64 / src.len() as f64 };
                modeled += model.per_residual
                    * (needed_iterations(ratio, self.config.estimator.iterations) * src.len()) as f64;
                match est.pose {
                    Some(kf_from_cur) => {
                        let pose = kf.pose.compose(&kf_from_cur).orthonormalized();
                        let refresh = est.inlier_count < self.config.refresh_inliers
                            || kf_from_cur.translation.norm() > self.config.refresh_distance;
                        if refresh && points.len() >= min_inliers {
                            self.keyframe = Some(Keyframe { pose, features, points });
                        }
                        self.last_pose = pose;
                        (Outcome::Tracked(pose), est.inlier_count)
                    }
                    None => (Outcome::Untracked, est.inlier_count),
                }
            }
        };
        let exec_time = match self.config.timing {
            TimingMode::Modeled => modeled,
            TimingMode::Wall => start.elapsed().as_secs_f64(),
        };
        Ok(TrackingResult::new(rgb.timestamp(), outcome, inliers, exec_time))
    }
}
