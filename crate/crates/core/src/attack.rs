//! FGSM and PGD perturbations of RGB and depth frames under an L∞ budget.
//!
//! Gradients come from the surrogate at its own input resolution and are
//! pulled back to frame resolution through the exact transpose of the
//! resize, so the sign step is taken per frame pixel.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::frame::{DepthFrame, ImageFrame};
use crate::rng::{frame_rng, stream};
use crate::schedule::AttackArea;
use crate::surrogate::{InputBridge, Label, Model};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Fgsm,
    Pgd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Ascend the loss of the clean prediction.
    Untargeted,
    /// Descend the loss of a chosen target label.
    Targeted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetPolicy {
    /// Uniform over every label except the clean prediction, per frame.
    Random,
    Fixed(Label),
}

/// Which stream of an RGB-D frame is perturbed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttackTarget {
    Rgb,
    Depth,
    Both,
}

impl AttackTarget {
    pub fn rgb(self) -> bool {
        matches!(self, AttackTarget::Rgb | AttackTarget::Both)
    }

    pub fn depth(self) -> bool {
        matches!(self, AttackTarget::Depth | AttackTarget::Both)
    }
}

macro_rules! keyword_enum {
    ($ty:ident { $($word:literal => $variant:ident),+ $(,)? }) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $($ty::$variant => $word),+ })
            }
        }

        impl FromStr for $ty {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s.trim().to_ascii_lowercase().as_str() {
                    $($word => Ok($ty::$variant),)+
                    other => Err(Error::Config(format!(
                        concat!("unknown ", stringify!($ty), " {:?}"), other
                    ))),
                }
            }
        }
    };
}

keyword_enum!(Method { "fgsm" => Fgsm, "pgd" => Pgd });
keyword_enum!(Mode { "untargeted" => Untargeted, "targeted" => Targeted });
keyword_enum!(AttackTarget { "rgb" => Rgb, "depth" => Depth, "both" => Both });

impl fmt::Display for TargetPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TargetPolicy::Random => f.write_str("random"),
            TargetPolicy::Fixed(l) => write!(f, "fixed:{l}"),
        }
    }
}

impl FromStr for TargetPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "random" {
            return Ok(TargetPolicy::Random);
        }
        s.strip_prefix("fixed:")
            .and_then(|n| n.trim().parse().ok())
            .map(TargetPolicy::Fixed)
            .ok_or_else(|| Error::Config(format!("unknown target policy {s:?}")))
    }
}

pub const DEFAULT_PGD_ITERATIONS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackConfig {
    pub method: Method,
    pub mode: Mode,
    /// L∞ bound in `[0, 1]` pixel units.
    pub epsilon: f64,
    /// PGD step; `None` means `epsilon / 4`.
    pub alpha: Option<f64>,
    pub iterations: usize,
    pub target_policy: Option<TargetPolicy>,
    pub seed: u64,
}

impl AttackConfig {
    pub fn fgsm(epsilon: f64) -> Self {
        AttackConfig {
            method: Method::Fgsm,
            mode: Mode::Untargeted,
            epsilon,
            alpha: None,
            iterations: 1,
            target_policy: None,
            seed: 0,
        }
    }

    pub fn pgd(epsilon: f64, alpha: Option<f64>, iterations: usize) -> Self {
        AttackConfig {
            method: Method::Pgd,
            iterations,
            alpha,
            ..AttackConfig::fgsm(epsilon)
        }
    }

    pub fn targeted(mut self, policy: TargetPolicy) -> Self {
        self.mode = Mode::Targeted;
        self.target_policy = Some(policy);
        self
    }

    pub fn step_size(&self) -> f64 {
        self.alpha.unwrap_or(self.epsilon / 4.0)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.epsilon >= 0.0 && self.epsilon <= 1.0) {
            return bad(format!("epsilon {} outside [0, 1]", self.epsilon));
        }
        if self.method == Method::Pgd {
            if self.iterations == 0 {
                return bad("PGD needs at least one iteration".into());
            }
            if let Some(a) = self.alpha {
                if !(a > 0.0 && a.is_finite()) {
                    return bad(format!("PGD step {a} must be positive"));
                }
            }
        }
        if self.mode == Mode::Targeted && self.target_policy.is_none() {
            return bad("targeted mode needs a target policy".into());
        }
        Ok(())
    }

    /// Targeted FGSM is accepted but is a weak, non-standard combination.
    pub fn is_canonical(&self) -> bool {
        !(self.method == Method::Fgsm && self.mode == Mode::Targeted)
    }

    fn direction(&self) -> f64 {
        match self.mode {
            Mode::Untargeted => 1.0,
            Mode::Targeted => -1.0,
        }
    }
}

/// Additive perturbation with the shape of its frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Perturbation {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub delta: Vec<f64>,
    pub epsilon: f64,
}

impl Perturbation {
    pub fn max_abs(&self) -> f64 {
        self.delta.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

#[derive(Debug, Clone)]
pub struct AdversarialFrame<'a> {
    pub original: &'a ImageFrame,
    pub perturbation: Perturbation,
    pub frame: ImageFrame,
}

#[inline]
fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Clamp `y` into the ε-ball around `x` and into `[0, 1]`, then nudge it
/// by single ulps towards `x` until the rounded distance is within `eps`.
#[inline]
fn project(x: f64, y: f64, eps: f64) -> f64 {
    let mut z = y.clamp(x - eps, x + eps).clamp(0.0, 1.0);
    while (z - x).abs() > eps {
        z = if z > x { z.next_down() } else { z.next_up() };
    }
    z
}

/// One masked sign step `scale · sign(∇J)` evaluated at `point`.
#[allow(clippy::too_many_arguments)]
fn sign_step(
    model: &Model,
    bridge: &InputBridge,
    point: &[f64],
    label: Label,
    scale: f64,
    channels: usize,
    mask: Option<&[bool]>,
) -> Result<Vec<f64>> {
    let grad = model.loss_gradient(&bridge.to_model_input(point), label)?;
    let mut step: Vec<f64> = bridge
        .gradient_to_frame(&grad)
        .into_iter()
        .map(|g| scale * sign(g))
        .collect();
    if let Some(mask) = mask {
        for (p, keep) in mask.iter().enumerate() {
            if !keep {
                step[p * channels..(p + 1) * channels].fill(0.0);
            }
        }
    }
    Ok(step)
}

/// Attack raw interleaved pixels in `[0, 1]`. `label` is the loss label:
/// the true label when untargeted, the target when targeted. Returns the
/// perturbation and the adversarial pixels.
#[allow(clippy::too_many_arguments)]
pub fn attack_pixels(
    model: &Model,
    pixels: &[f64],
    width: usize,
    height: usize,
    channels: usize,
    label: Label,
    config: &AttackConfig,
    mask: Option<&[bool]>,
) -> Result<(Vec<f64>, Vec<f64>)> {
    config.validate()?;
    if pixels.len() != width * height * channels {
        return Err(Error::ShapeMismatch {
            expected: format!("{width}x{height}x{channels}"),
            actual: format!("{} values", pixels.len()),
        });
    }
    if mask.is_some_and(|m| m.len() != width * height) {
        return Err(Error::ShapeMismatch {
            expected: format!("{} mask entries", width * height),
            actual: mask.map_or(0, <[bool]>::len).to_string(),
        });
    }
    let eps = config.epsilon;
    if eps == 0.0 {
        return Ok((vec![0.0; pixels.len()], pixels.to_vec()));
    }
    let bridge = InputBridge::new(model, width, height, channels)?;
    let dir = config.direction();
    match config.method {
        Method::Fgsm => {
            let delta = sign_step(model, &bridge, pixels, label, dir * eps, channels, mask)?;
            let adv = pixels
                .iter()
                .zip(&delta)
                .map(|(x, d)| project(*x, x + d, eps))
                .collect();
            Ok((delta, adv))
        }
        Method::Pgd => {
            let alpha = config.step_size();
            let mut z = pixels.to_vec();
            for _ in 0..config.iterations {
                let step = sign_step(model, &bridge, &z, label, dir * alpha, channels, mask)?;
                for ((zi, x), s) in z.iter_mut().zip(pixels).zip(&step) {
                    *zi = project(*x, *zi + s, eps);
                }
            }
            let delta = z.iter().zip(pixels).map(|(a, x)| a - x).collect();
            Ok((delta, z))
        }
    }
}

fn attack_frame<'a>(
    model: &Model,
    frame: &'a ImageFrame,
    label: Label,
    config: &AttackConfig,
    mask: Option<&[bool]>,
) -> Result<AdversarialFrame<'a>> {
    let (w, h, c) = (frame.width(), frame.height(), frame.channels());
    let (delta, adv) = attack_pixels(model, frame.pixels(), w, h, c, label, config, mask)?;
    Ok(AdversarialFrame {
        original: frame,
        perturbation: Perturbation {
            width: w,
            height: h,
            channels: c,
            delta,
            epsilon: config.epsilon,
        },
        frame: frame.with_pixels(adv)?,
    })
}

/// Single-step attack `δ = ±ε · sign(∇J(x, label))`.
pub fn fgsm<'a>(model: &Model, frame: &'a ImageFrame, label: Label, config: &AttackConfig) -> Result<AdversarialFrame<'a>> {
    if config.method != Method::Fgsm {
        return Err(Error::Config("fgsm called with a PGD config".into()));
    }
    attack_frame(model, frame, label, config, None)
}

/// Iterated sign steps of size α from δ = 0, projected onto the ε-ball and
/// the pixel range after every step.
pub fn pgd<'a>(model: &Model, frame: &'a ImageFrame, label: Label, config: &AttackConfig) -> Result<AdversarialFrame<'a>> {
    if config.method != Method::Pgd {
        return Err(Error::Config("pgd called with an FGSM config".into()));
    }
    attack_frame(model, frame, label, config, None)
}

/// Either method, restricted to `mask` (per pixel, all channels).
pub fn attack_masked<'a>(
    model: &Model,
    frame: &'a ImageFrame,
    label: Label,
    config: &AttackConfig,
    mask: Option<&[bool]>,
) -> Result<AdversarialFrame<'a>> {
    attack_frame(model, frame, label, config, mask)
}

/// Zero `δ` outside the union of the area's boxes.
pub fn mask_perturbation(perturbation: &Perturbation, area: &AttackArea) -> Perturbation {
    let mut out = perturbation.clone();
    if let Some(mask) = area.mask(out.width, out.height) {
        let c = out.channels;
        for (p, keep) in mask.iter().enumerate() {
            if !keep {
                out.delta[p * c..(p + 1) * c].fill(0.0);
            }
        }
    }
    out
}

pub fn pick_target_label<R: Rng>(policy: TargetPolicy, rng: &mut R, true_label: Label, classes: usize) -> Result<Label> {
    match policy {
        TargetPolicy::Fixed(l) if l < classes => Ok(l),
        TargetPolicy::Fixed(l) => Err(Error::Config(format!("target label {l} outside [0, {classes})"))),
        TargetPolicy::Random => {
            if classes < 2 {
                return Err(Error::InvalidArgument("random target needs at least 2 classes".into()));
            }
            let r = rng.random_range(0..classes - 1);
            Ok(if r >= true_label { r + 1 } else { r })
        }
    }
}

/// Affine map between metric depth and the unit range used for gradients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepthRange {
    pub min: f64,
    pub max: f64,
}

impl Default for DepthRange {
    fn default() -> Self {
        DepthRange { min: 0.0, max: 10.0 }
    }
}

impl DepthRange {
    pub fn new(min: f64, max: f64) -> Result<Self> {
        if !(min.is_finite() && max.is_finite() && max > min) {
            return Err(Error::Config(format!("depth range ({min}, {max}) is degenerate")));
        }
        Ok(DepthRange { min, max })
    }

    pub fn span(&self) -> f64 {
        self.max - self.min
    }

    pub fn normalize(&self, depth: &DepthFrame) -> Vec<f64> {
        depth
            .depth()
            .iter()
            .map(|d| ((d - self.min) / self.span()).clamp(0.0, 1.0))
            .collect()
    }
}

/// Labels involved in one attack.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LabelInfo {
    /// Surrogate prediction on the clean input.
    pub clean: Label,
    pub target: Option<Label>,
    /// Surrogate prediction on the adversarial input.
    pub adversarial: Label,
}

fn loss_label<R: Rng>(config: &AttackConfig, rng: &mut R, clean: Label, classes: usize) -> Result<(Label, Option<Label>)> {
    match (config.mode, config.target_policy) {
        (Mode::Targeted, Some(policy)) => {
            let t = pick_target_label(policy, rng, clean, classes)?;
            Ok((t, Some(t)))
        }
        _ => Ok((clean, None)),
    }
}

/// Depth attack: normalize to `[0, 1]`, attack as a one-channel image,
/// map the change back to metres. Invalid (zero) pixels are never touched
/// and attacked pixels stay strictly positive.
pub fn attack_depth(
    model: &Model,
    depth: &DepthFrame,
    label: Label,
    config: &AttackConfig,
    range: DepthRange,
    mask: Option<&[bool]>,
) -> Result<DepthFrame> {
    let (w, h) = (depth.width(), depth.height());
    let normalized = range.normalize(depth);
    let valid: Vec<bool> = depth
        .depth()
        .iter()
        .enumerate()
        .map(|(i, d)| *d > 0.0 && mask.is_none_or(|m| m[i]))
        .collect();
    let (_, adv) = attack_pixels(model, &normalized, w, h, 1, label, config, Some(&valid))?;
    let out = depth
        .depth()
        .iter()
        .zip(normalized.iter().zip(&adv))
        .zip(&valid)
        .map(|((d, (n, a)), ok)| {
            if !ok || a == n {
                *d
            } else {
                (d + (a - n) * range.span()).max(d.min(1e-4))
            }
        })
        .collect();
    depth.with_depth(out)
}

/// Surrogate and attack settings applied to whole RGB-D frames.
#[derive(Debug, Clone)]
pub struct Attacker<'m> {
    pub model: &'m Model,
    pub config: AttackConfig,
    pub target: AttackTarget,
    pub depth_range: DepthRange,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackedFrame {
    pub rgb: ImageFrame,
    pub depth: DepthFrame,
    pub rgb_labels: Option<LabelInfo>,
    pub depth_labels: Option<LabelInfo>,
}

impl Attacker<'_> {
    /// Attack frame `index` inside `area`. Deterministic in
    /// `(model, frames, config, index)`.
    pub fn attack(&self, index: usize, rgb: &ImageFrame, depth: &DepthFrame, area: &AttackArea) -> Result<AttackedFrame> {
        let mask = area.mask(rgb.width(), rgb.height());
        let classes = self.model.classes();
        let mut out = AttackedFrame {
            rgb: rgb.clone(),
            depth: depth.clone(),
            rgb_labels: None,
            depth_labels: None,
        };
        if self.target.rgb() {
            let bridge = InputBridge::new(self.model, rgb.width(), rgb.height(), rgb.channels())?;
            let clean = self.model.classify(&bridge.to_model_input(rgb.pixels()))?;
            let mut rng = frame_rng(self.config.seed, stream::TARGET_LABEL, index as u64);
            let (label, target) = loss_label(&self.config, &mut rng, clean, classes)?;
            let adv = attack_masked(self.model, rgb, label, &self.config, mask.as_deref())?;
            out.rgb_labels = Some(LabelInfo {
                clean,
                target,
                adversarial: self.model.classify(&bridge.to_model_input(adv.frame.pixels()))?,
            });
            out.rgb = adv.frame;
        }
        if self.target.depth() {
            let bridge = InputBridge::new(self.model, depth.width(), depth.height(), 1)?;
            let clean_n = self.depth_range.normalize(depth);
            let clean = self.model.classify(&bridge.to_model_input(&clean_n))?;
            let mut rng = frame_rng(self.config.seed, stream::DEPTH_TARGET_LABEL, index as u64);
            let (label, target) = loss_label(&self.config, &mut rng, clean, classes)?;
            let adv = attack_depth(self.model, depth, label, &self.config, self.depth_range, mask.as_deref())?;
            let adv_n = self.depth_range.normalize(&adv);
            out.depth_labels = Some(LabelInfo {
                clean,
                target,
                adversarial: self.model.classify(&bridge.to_model_input(&adv_n))?,
            });
            out.depth = adv;
        }
        Ok(out)
    }
}
