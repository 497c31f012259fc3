use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;

use super::{associate, decode_depth, decode_rgb, FrameSource};
use crate::error::{Error, Result};
use crate::frame::{DepthFrame, ImageFrame};
use crate::geometry::{Intrinsics, Pose};
use crate::metrics::Trajectory;

/// One associated RGB-D sample: indices into the manifest's entry lists.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Association {
    pub rgb: usize,
    pub depth: usize,
    pub ground_truth: Option<usize>,
}

/// Parsed TUM sequence directory.
#[derive(Debug, Clone)]
pub struct SequenceManifest {
    pub root: PathBuf,
    pub rgb: Vec<(f64, PathBuf)>,
    pub depth: Vec<(f64, PathBuf)>,
    pub ground_truth: Vec<(f64, Pose)>,
    pub associations: Vec<Association>,
    pub tolerance: f64,
}

impl SequenceManifest {
    pub fn rgb_timestamp(&self, assoc: usize) -> f64 {
        self.rgb[self.associations[assoc].rgb].0
    }
}

/// Parse a TUM list file (`timestamp payload...`, `#` comments) into
/// `(timestamp, tokens)` rows sorted by timestamp.
pub fn parse_list(path: &Path, min_tokens: usize) -> Result<Vec<(f64, Vec<String>)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let malformed = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            msg,
        };
        let stamp = tokens.next().unwrap_or_default();
        let t: f64 = stamp
            .parse()
            .map_err(|_| malformed(format!("bad timestamp {stamp:?}")))?;
        if !t.is_finite() || t < 0.0 {
            return Err(malformed(format!("bad timestamp {stamp:?}")));
        }
        let rest: Vec<String> = tokens.map(str::to_owned).collect();
        if rest.len() < min_tokens {
            return Err(malformed(format!(
                "expected {min_tokens} fields after the timestamp, found {}",
                rest.len()
            )));
        }
        rows.push((t, rest));
    }
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(rows)
}

/// Parse `timestamp tx ty tz qx qy qz qw` rows.
pub fn parse_groundtruth(path: &Path) -> Result<Vec<(f64, Pose)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let malformed = |msg: &str| Error::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            msg: msg.to_owned(),
        };
        let values: Vec<f64> = line
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| malformed("non-numeric field"))?;
        if values.len() != 8 || values.iter().any(|v| !v.is_finite()) {
            return Err(malformed("expected 8 finite fields"));
        }
        let pose = Pose::from_quaternion(
            Vector3::new(values[1], values[2], values[3]),
            [values[4], values[5], values[6], values[7]],
        )
        .map_err(|_| malformed("degenerate quaternion"))?;
        out.push((values[0], pose));
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(out)
}

/// Read `rgb.txt`, `depth.txt` and `groundtruth.txt` under `root` and pair
/// them by timestamp. RGB frames without a depth partner are dropped; a
/// frame without ground truth keeps `ground_truth: None`.
pub fn load_tum_sequence(root: &Path, tolerance: f64) -> Result<SequenceManifest> {
    if !(tolerance >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "association tolerance {tolerance}"
        )));
    }
    let with_paths = |rows: Vec<(f64, Vec<String>)>| -> Vec<(f64, PathBuf)> {
        rows.into_iter()
            .map(|(t, tok)| (t, root.join(&tok[0])))
            .collect()
    };
    let rgb = with_paths(parse_list(&root.join("rgb.txt"), 1)?);
    let depth = with_paths(parse_list(&root.join("depth.txt"), 1)?);
    let ground_truth = parse_groundtruth(&root.join("groundtruth.txt"))?;

    let rgb_t: Vec<f64> = rgb.iter().map(|e| e.0).collect();
    let depth_t: Vec<f64> = depth.iter().map(|e| e.0).collect();
    let pairs = associate(&rgb_t, &depth_t, tolerance);
    let paired_t: Vec<f64> = pairs.iter().map(|&(i, _)| rgb_t[i]).collect();
    let gt_t: Vec<f64> = ground_truth.iter().map(|e| e.0).collect();
    let mut gt_for = vec![None; pairs.len()];
    for (k, g) in associate(&paired_t, &gt_t, tolerance) {
        gt_for[k] = Some(g);
    }
    let associations: Vec<Association> = pairs
        .iter()
        .zip(gt_for)
        .map(|(&(r, d), g)| Association {
            rgb: r,
            depth: d,
            ground_truth: g,
        })
        .collect();
    if associations.is_empty() {
        return Err(Error::Insufficient(format!(
            "{}: no rgb/depth pairs within {tolerance} s",
            root.display()
        )));
    }
    log::info!(
        "{}: {} associations ({} rgb, {} depth, {} ground-truth entries)",
        root.display(),
        associations.len(),
        rgb.len(),
        depth.len(),
        ground_truth.len()
    );
    Ok(SequenceManifest {
        root: root.to_path_buf(),
        rgb,
        depth,
        ground_truth,
        associations,
        tolerance,
    })
}

/// Write `timestamp tx ty tz qx qy qz qw` lines.
pub fn write_tum_trajectory(poses: &[(f64, Pose)]) -> String {
    let mut out = String::from("# timestamp tx ty tz qx qy qz qw\n");
    for (t, pose) in poses {
        let q = pose.quaternion();
        let p = pose.translation;
        let _ = writeln!(
            out,
            "{t:.6} {:.9} {:.9} {:.9} {:.9} {:.9} {:.9} {:.9}",
            p.x, p.y, p.z, q[0], q[1], q[2], q[3]
        );
    }
    out
}

/// A manifest bound to decoding parameters, usable as a [`FrameSource`].
#[derive(Debug, Clone)]
pub struct TumSequence {
    manifest: SequenceManifest,
    intrinsics: Intrinsics,
    depth_scale: f64,
    dimensions: (usize, usize),
}

impl TumSequence {
    pub fn open(manifest: SequenceManifest, intrinsics: Intrinsics, depth_scale: f64) -> Result<Self> {
        if !(depth_scale > 0.0) {
            return Err(Error::InvalidArgument(format!("depth scale {depth_scale}")));
        }
        let first = &manifest.associations[0];
        let rgb = decode_rgb(&manifest.rgb[first.rgb].1, manifest.rgb[first.rgb].0)?;
        let seq = TumSequence {
            dimensions: (rgb.width(), rgb.height()),
            manifest,
            intrinsics,
            depth_scale,
        };
        // validates the depth dimensions too
        seq.load(0)?;
        Ok(seq)
    }

    pub fn manifest(&self) -> &SequenceManifest {
        &self.manifest
    }
}

impl FrameSource for TumSequence {
    fn len(&self) -> usize {
        self.manifest.associations.len()
    }

    fn timestamp(&self, index: usize) -> f64 {
        self.manifest.rgb_timestamp(index)
    }

    fn dimensions(&self) -> (usize, usize) {
        self.dimensions
    }

    fn intrinsics(&self) -> Intrinsics {
        self.intrinsics
    }

    fn load(&self, index: usize) -> Result<(ImageFrame, DepthFrame)> {
        let assoc = self.manifest.associations[index];
        let (t, rgb_path) = &self.manifest.rgb[assoc.rgb];
        let rgb = decode_rgb(rgb_path, *t)?;
        let depth_path = &self.manifest.depth[assoc.depth].1;
        let depth = decode_depth(depth_path, self.depth_scale, *t)?;
        if (rgb.width(), rgb.height()) != (depth.width(), depth.height())
            || (rgb.width(), rgb.height()) != self.dimensions
        {
            return Err(Error::Image {
                path: depth_path.clone(),
                msg: format!(
                    "depth {}x{} does not match rgb {}x{}",
                    depth.width(),
                    depth.height(),
                    rgb.width(),
                    rgb.height()
                ),
            });
        }
        Ok((rgb, depth))
    }

    fn ground_truth(&self) -> Option<Trajectory> {
        let entries: Vec<(f64, Pose)> = self.manifest.ground_truth.clone();
        Trajectory::new(entries).ok()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, body: &str) {
        fs::write(dir.join(name), body).unwrap();
    }

    const GT: &str = "# gt\n1.00 0 0 0 0 0 0 1\n1.10 0.1 0 0 0 0 0 1\n1.20 0.2 0 0 0 0 0 1\n";

    #[test]
    fn exact_timestamps_associate_fully() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "rgb.txt", "# rgb\n1.00 rgb/a.png\n1.10 rgb/b.png\n1.20 rgb/c.png\n");
        write(dir.path(), "depth.txt", "1.00 d/a.png\n1.10 d/b.png\n1.20 d/c.png\n");
        write(dir.path(), "groundtruth.txt", GT);
        let m = load_tum_sequence(dir.path(), 0.02).unwrap();
        assert_eq!(m.associations.len(), 3);
        assert!(m.associations.iter().all(|a| a.ground_truth.is_some()));
        assert_eq!(m.rgb[0].1, dir.path().join("rgb/a.png"));
    }

    #[test]
    fn out_of_tolerance_rgb_is_dropped() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "rgb.txt", "1.00 a.png\n2.00 b.png\n");
        write(dir.path(), "depth.txt", "1.019 a.png\n2.05 b.png\n");
        write(dir.path(), "groundtruth.txt", GT);
        let m = load_tum_sequence(dir.path(), 0.02).unwrap();
        assert_eq!(m.associations.len(), 1);
        assert_eq!(m.associations[0].rgb, 0);
        assert_eq!(m.associations[0].ground_truth, Some(0));
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "rgb.txt", "# c\n1.00 a.png\nabc b.png\n");
        write(dir.path(), "depth.txt", "1.00 a.png\n");
        write(dir.path(), "groundtruth.txt", GT);
        match load_tum_sequence(dir.path(), 0.02) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_file_and_zero_associations_are_errors() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "rgb.txt", "1.00 a.png\n");
        assert!(matches!(
            load_tum_sequence(dir.path(), 0.02),
            Err(Error::Io { .. })
        ));
        write(dir.path(), "depth.txt", "5.00 a.png\n");
        write(dir.path(), "groundtruth.txt", GT);
        assert!(matches!(
            load_tum_sequence(dir.path(), 0.02),
            Err(Error::Insufficient(_))
        ));
    }

    #[test]
    fn trajectory_lines_round_trip() {
        let poses = vec![(
            1.5,
            Pose::from_axis_angle(Vector3::new(0.1, 0.2, 0.3), Vector3::new(1.0, -2.0, 0.5)),
        )];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("traj.txt");
        fs::write(&path, write_tum_trajectory(&poses)).unwrap();
        let back = parse_groundtruth(&path).unwrap();
        assert_eq!(back.len(), 1);
        assert!((back[0].1.rotation - poses[0].1.rotation).abs().max() < 1e-8);
        assert!((back[0].1.translation - poses[0].1.translation).norm() < 1e-8);
    }
}
