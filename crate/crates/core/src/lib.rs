//! Adversarial perturbation of RGB-D visual odometry.
//!
//! A small differentiable surrogate classifier supplies gradients for FGSM and
//! PGD perturbations of colour and depth frames. Perturbed frames are fed to a
//! feature-based RGB-D tracker and the damage is measured as absolute
//! trajectory error against ground truth.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attack;
pub mod dataset;
pub mod error;
pub mod experiment;
pub mod frame;
pub mod frontend;
pub mod geometry;
pub mod metrics;
pub mod odometry;
pub mod rng;
pub mod schedule;
pub mod surrogate;

pub use attack::{AttackConfig, AttackTarget, Attacker, Method, Mode, Perturbation, TargetPolicy};
pub use dataset::{FrameSource, RegionSet};
pub use error::{Error, ErrorKind, Result};
pub use experiment::{ExperimentConfig, RunReport};
pub use frame::{DepthFrame, ImageFrame};
pub use geometry::{Intrinsics, Point3, Pose};
pub use metrics::{AteReport, Trajectory};
pub use odometry::{Outcome, TrackingResult};
pub use schedule::Schedule;
pub use surrogate::Model;
