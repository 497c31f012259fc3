//! Deterministic RGB-D renderer: a textured box-shaped room seen by a
//! pinhole camera moving along a scripted trajectory.

use std::f64::consts::TAU;
use std::fs;
use std::path::Path;

use nalgebra::Vector3;
use rayon::prelude::*;

use super::{encode_depth, encode_rgb, write_tum_trajectory, FrameSource};
use crate::error::{Error, Result};
use crate::frame::{DepthFrame, ImageFrame};
use crate::geometry::{Intrinsics, Pose};
use crate::metrics::Trajectory;
use crate::rng::mix64;

/// Scripted camera motion, expressed per frame index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrajectorySpec {
    Static,
    /// Constant velocity (metres per frame) and angular velocity (axis-angle
    /// radians per frame).
    Linear {
        velocity: Vector3<f64>,
        angular_velocity: Vector3<f64>,
    },
    /// Smooth closed Lissajous-like motion resembling a hand-held sweep.
    Handheld {
        amplitude: f64,
        rotation_amplitude: f64,
        period: f64,
    },
}

impl TrajectorySpec {
    /// Hand-held sweep used by the default synthetic suite.
    pub fn default_handheld() -> Self {
        TrajectorySpec::Handheld {
            amplitude: 0.3,
            rotation_amplitude: 0.1,
            period: 200.0,
        }
    }

    pub fn pose_at(&self, index: usize) -> Pose {
        let i = index as f64;
        match *self {
            TrajectorySpec::Static => Pose::identity(),
            TrajectorySpec::Linear {
                velocity,
                angular_velocity,
            } => Pose::from_axis_angle(angular_velocity * i, velocity * i),
            TrajectorySpec::Handheld {
                amplitude,
                rotation_amplitude,
                period,
            } => {
                let t = TAU * i / period;
                let translation = Vector3::new(
                    amplitude * t.sin(),
                    0.25 * amplitude * (2.0 * t).sin(),
                    0.5 * amplitude * (1.0 - t.cos()),
                );
                let rot = Vector3::new(
                    0.5 * rotation_amplitude * (2.0 * t + 0.3).sin() - 0.5 * rotation_amplitude * 0.3f64.sin(),
                    rotation_amplitude * (t + 0.5).sin() - rotation_amplitude * 0.5f64.sin(),
                    0.3 * rotation_amplitude * (3.0 * t).sin(),
                );
                Pose::from_axis_angle(rot, translation)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub width: usize,
    pub height: usize,
    pub intrinsics: Intrinsics,
    pub frames: usize,
    pub texture_seed: u64,
    pub trajectory: TrajectorySpec,
    pub frame_rate: f64,
    pub start_time: f64,
    pub depth_scale: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            width: 320,
            height: 240,
            intrinsics: Intrinsics {
                fx: 260.0,
                fy: 260.0,
                cx: 159.5,
                cy: 119.5,
            },
            frames: 200,
            texture_seed: 7,
            trajectory: TrajectorySpec::default_handheld(),
            frame_rate: 30.0,
            start_time: 1.0,
            depth_scale: super::DEFAULT_DEPTH_SCALE,
        }
    }
}

/// Room walls as `(axis, coordinate)`: the plane `p[axis] = coordinate`.
const ROOM: [(usize, f64); 6] = [
    (2, 4.0),
    (2, -2.0),
    (1, 1.4),
    (1, -1.4),
    (0, -2.5),
    (0, 2.5),
];
const WALL_MARGIN: f64 = 0.25;
const SUPERSAMPLE: usize = 2;

/// Rendered sequence held in quantized form (8-bit colour, 16-bit depth),
/// exactly what a TUM-style export on disk contains.
#[derive(Debug, Clone)]
pub struct SyntheticSequence {
    spec: SyntheticSpec,
    rgb: Vec<Vec<u8>>,
    depth: Vec<Vec<u16>>,
    poses: Vec<Pose>,
}

pub fn generate_synthetic_sequence(spec: &SyntheticSpec) -> Result<SyntheticSequence> {
    if spec.frames < 2 {
        return Err(Error::InvalidArgument(format!(
            "synthetic sequences need at least 2 frames, got {}",
            spec.frames
        )));
    }
    if spec.width < 8 || spec.height < 8 {
        return Err(Error::InvalidArgument("synthetic frames must be at least 8x8".into()));
    }
    if !(spec.frame_rate > 0.0) || !(spec.depth_scale > 0.0) || !(spec.start_time >= 0.0) {
        return Err(Error::InvalidArgument(
            "frame rate and depth scale must be positive".into(),
        ));
    }
    Intrinsics::new(
        spec.intrinsics.fx,
        spec.intrinsics.fy,
        spec.intrinsics.cx,
        spec.intrinsics.cy,
    )?;
    let poses: Vec<Pose> = (0..spec.frames).map(|i| spec.trajectory.pose_at(i)).collect();
    for (i, pose) in poses.iter().enumerate() {
        let p = pose.translation;
        let inside = ROOM.iter().all(|&(axis, c)| (p[axis] - c).abs() >= WALL_MARGIN)
            && p.x > -2.5
            && p.x < 2.5
            && p.y > -1.4
            && p.y < 1.4
            && p.z > -2.0
            && p.z < 4.0;
        if !inside || !pose.is_valid(1e-9) {
            return Err(Error::Degenerate(format!(
                "camera at frame {i} ({:.3}, {:.3}, {:.3}) is not inside the scene",
                p.x, p.y, p.z
            )));
        }
    }
    let rendered: Vec<(Vec<u8>, Vec<u16>)> = poses
        .par_iter()
        .map(|pose| render(spec, pose))
        .collect();
    let (rgb, depth) = rendered.into_iter().unzip();
    Ok(SyntheticSequence {
        spec: spec.clone(),
        rgb,
        depth,
        poses,
    })
}

fn render(spec: &SyntheticSpec, pose: &Pose) -> (Vec<u8>, Vec<u16>) {
    let (w, h) = (spec.width, spec.height);
    let k = &spec.intrinsics;
    let mut rgb = vec![0u8; w * h * 3];
    let mut depth = vec![0u16; w * h];
    let origin = pose.translation;
    let step = 1.0 / SUPERSAMPLE as f64;
    for y in 0..h {
        for x in 0..w {
            let mut acc = [0.0; 3];
            for sy in 0..SUPERSAMPLE {
                for sx in 0..SUPERSAMPLE {
                    let px = x as f64 - 0.5 + step * (sx as f64 + 0.5);
                    let py = y as f64 - 0.5 + step * (sy as f64 + 0.5);
                    let dir = pose.rotation * k.ray(px, py);
                    let (s, wall) = cast(&origin, &dir);
                    let c = shade(spec.texture_seed, wall, &(origin + dir * s));
                    acc.iter_mut().zip(c).for_each(|(a, v)| *a += v);
                }
            }
            let n = (SUPERSAMPLE * SUPERSAMPLE) as f64;
            for c in 0..3 {
                rgb[(y * w + x) * 3 + c] = (acc[c] / n * 255.0).round().clamp(0.0, 255.0) as u8;
            }
            let dir = pose.rotation * k.ray(x as f64, y as f64);
            let (s, _) = cast(&origin, &dir);
            depth[y * w + x] = (s * spec.depth_scale).round().clamp(0.0, u16::MAX as f64) as u16;
        }
    }
    (rgb, depth)
}

/// Nearest wall hit along `origin + s * dir`, `s > 0`. The ray's camera z
/// component is 1, so `s` is the depth of the hit point.
fn cast(origin: &Vector3<f64>, dir: &Vector3<f64>) -> (f64, usize) {
    let mut best = (f64::INFINITY, 0);
    for (wall, &(axis, c)) in ROOM.iter().enumerate() {
        if dir[axis].abs() < 1e-12 {
            continue;
        }
        let s = (c - origin[axis]) / dir[axis];
        if s > 0.0 && s < best.0 {
            best = (s, wall);
        }
    }
    best
}

fn shade(seed: u64, wall: usize, p: &Vector3<f64>) -> [f64; 3] {
    let (u, v) = match ROOM[wall].0 {
        0 => (p.z, p.y),
        1 => (p.x, p.z),
        _ => (p.x, p.y),
    };
    texel(seed, wall as u64, u, v)
}

fn unit(h: u64, k: u64) -> f64 {
    (mix64(h ^ k.wrapping_mul(0x9E37_79B9_7F4A_7C15)) >> 11) as f64 / (1u64 << 53) as f64
}

fn cell_hash(seed: u64, wall: u64, level: u64, i: i64, j: i64) -> u64 {
    let mut h = mix64(seed ^ 0xA076_1D64_78BD_642F);
    for v in [wall, level, i as u64, j as u64] {
        h = mix64(h ^ v);
    }
    h
}

fn colour(h: u64) -> [f64; 3] {
    let lum = 0.08 + 0.84 * unit(h, 10);
    [11, 12, 13].map(|k| (lum * (0.7 + 0.6 * unit(h, k))).clamp(0.0, 1.0))
}

/// Layered "Mondrian" texture: a coarse cell colour overridden by randomly
/// placed rectangles at two finer scales.
fn texel(seed: u64, wall: u64, u: f64, v: f64) -> [f64; 3] {
    const LEVELS: [(f64, f64); 3] = [(0.55, 1.0), (0.2, 0.55), (0.075, 0.35)];
    let mut out = [0.5; 3];
    for (level, &(size, prob)) in LEVELS.iter().enumerate() {
        let (fu, fv) = (u / size, v / size);
        let (ci, cj) = (fu.floor(), fv.floor());
        let h = cell_hash(seed, wall, level as u64, ci as i64, cj as i64);
        if level == 0 {
            out = colour(h);
            continue;
        }
        if unit(h, 0) >= prob {
            continue;
        }
        let (ru, rv) = (fu - ci, fv - cj);
        let a0 = 0.05 + 0.35 * unit(h, 1);
        let a1 = a0 + 0.3 + (0.95 - a0 - 0.3) * unit(h, 2);
        let b0 = 0.05 + 0.35 * unit(h, 3);
        let b1 = b0 + 0.3 + (0.95 - b0 - 0.3) * unit(h, 4);
        if ru >= a0 && ru < a1 && rv >= b0 && rv < b1 {
            out = colour(h);
        }
    }
    out
}

impl SyntheticSequence {
    pub fn spec(&self) -> &SyntheticSpec {
        &self.spec
    }

    pub fn poses(&self) -> &[Pose] {
        &self.poses
    }

    pub fn frame(&self, index: usize) -> ImageFrame {
        let pixels = self.rgb[index].iter().map(|b| f64::from(*b) / 255.0).collect();
        ImageFrame::new(
            self.timestamp(index),
            self.spec.width,
            self.spec.height,
            3,
            pixels,
        )
        .expect("rendered frames are valid")
    }

    pub fn depth(&self, index: usize) -> DepthFrame {
        let depth = self.depth[index]
            .iter()
            .map(|r| f64::from(*r) / self.spec.depth_scale)
            .collect();
        DepthFrame::new(self.timestamp(index), self.spec.width, self.spec.height, depth)
            .expect("rendered depth is valid")
    }

    /// Export in TUM layout: `rgb/`, `depth/`, the three list files and
    /// `camera.txt` (`fx fy cx cy`).
    pub fn write_tum(&self, dir: &Path) -> Result<()> {
        for sub in ["rgb", "depth"] {
            fs::create_dir_all(dir.join(sub)).map_err(|e| Error::io(dir.join(sub), e))?;
        }
        let mut rgb_list = String::from("# timestamp filename\n");
        let mut depth_list = String::from("# timestamp filename\n");
        for i in 0..self.len() {
            let t = self.timestamp(i);
            let name = format!("{t:.6}.png");
            encode_rgb(&self.frame(i), &dir.join("rgb").join(&name))?;
            encode_depth(&self.depth(i), self.spec.depth_scale, &dir.join("depth").join(&name))?;
            rgb_list.push_str(&format!("{t:.6} rgb/{name}\n"));
            depth_list.push_str(&format!("{t:.6} depth/{name}\n"));
        }
        let gt: Vec<(f64, Pose)> = (0..self.len()).map(|i| (self.timestamp(i), self.poses[i])).collect();
        let k = &self.spec.intrinsics;
        let files = [
            ("rgb.txt", rgb_list),
            ("depth.txt", depth_list),
            ("groundtruth.txt", write_tum_trajectory(&gt)),
            ("camera.txt", format!("{} {} {} {}\n", k.fx, k.fy, k.cx, k.cy)),
        ];
        for (name, body) in files {
            fs::write(dir.join(name), body).map_err(|e| Error::io(dir.join(name), e))?;
        }
        Ok(())
    }
}

impl FrameSource for SyntheticSequence {
    fn len(&self) -> usize {
        self.poses.len()
    }

    fn timestamp(&self, index: usize) -> f64 {
        self.spec.start_time + index as f64 / self.spec.frame_rate
    }

    fn dimensions(&self) -> (usize, usize) {
        (self.spec.width, self.spec.height)
    }

    fn intrinsics(&self) -> Intrinsics {
        self.spec.intrinsics
    }

    fn load(&self, index: usize) -> Result<(ImageFrame, DepthFrame)> {
        Ok((self.frame(index), self.depth(index)))
    }

    fn ground_truth(&self) -> Option<Trajectory> {
        let entries = (0..self.len())
            .map(|i| (self.timestamp(i), self.poses[i]))
            .collect();
        Trajectory::new(entries).ok()
    }
}
