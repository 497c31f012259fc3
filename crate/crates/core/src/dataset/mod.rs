//! Sequence loading: TUM RGB-D lists, PNG codecs, detection regions and a
//! deterministic synthetic RGB-D renderer.

mod png;
mod regions;
mod synthetic;
mod tum;

pub use png::{decode_depth, decode_rgb, encode_depth, encode_rgb};
pub(crate) use regions::union_mask;
pub use regions::{load_regions, parse_regions, BoundingBox, PixelRect, RegionSet};
pub use synthetic::{
    generate_synthetic_sequence, SyntheticSequence, SyntheticSpec, TrajectorySpec,
};
pub use tum::{
    load_tum_sequence, parse_groundtruth, parse_list, write_tum_trajectory, Association,
    SequenceManifest, TumSequence,
};

use crate::error::Result;
use crate::frame::{DepthFrame, ImageFrame};
use crate::geometry::Intrinsics;
use crate::metrics::Trajectory;

/// Default maximum timestamp difference when pairing streams, in seconds.
pub const DEFAULT_ASSOCIATION_TOLERANCE: f64 = 0.02;
/// Raw 16-bit depth units per metre.
pub const DEFAULT_DEPTH_SCALE: f64 = 5000.0;

/// Random access to an associated RGB-D sequence.
pub trait FrameSource: Sync {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn timestamp(&self, index: usize) -> f64;

    /// `(width, height)` shared by every frame.
    fn dimensions(&self) -> (usize, usize);

    fn intrinsics(&self) -> Intrinsics;

    fn load(&self, index: usize) -> Result<(ImageFrame, DepthFrame)>;

    fn ground_truth(&self) -> Option<Trajectory>;
}

/// Greedy nearest-timestamp association between two sorted streams.
///
/// Candidate pairs with `|a - b| <= tolerance` are visited in increasing
/// order of time difference (ties by index) and accepted when neither side
/// is already used. The result is sorted by the index into `a`.
pub fn associate(a: &[f64], b: &[f64], tolerance: f64) -> Vec<(usize, usize)> {
    let mut candidates = Vec::new();
    let mut start = 0;
    for (i, &ta) in a.iter().enumerate() {
        while start < b.len() && b[start] < ta - tolerance {
            start += 1;
        }
        let mut j = start;
        while j < b.len() && b[j] <= ta + tolerance {
            let diff = (ta - b[j]).abs();
            if diff <= tolerance {
                candidates.push((diff, i, j));
            }
            j += 1;
        }
    }
    candidates.sort_by(|x, y| {
        x.0.total_cmp(&y.0)
            .then(x.1.cmp(&y.1))
            .then(x.2.cmp(&y.2))
    });
    let mut used_a = vec![false; a.len()];
    let mut used_b = vec![false; b.len()];
    let mut pairs = Vec::new();
    for (_, i, j) in candidates {
        if !used_a[i] && !used_b[j] {
            used_a[i] = true;
            used_b[j] = true;
            pairs.push((i, j));
        }
    }
    pairs.sort_unstable();
    pairs
}
