//! Experiment configuration files.
//!
//! Grammar, one item per line:
//!
//! ```text
//! # comment            (also `;`)
//! [section]
//! key = value
//! ```
//!
//! Keys are lower-case identifiers; values run to the end of the line and
//! are trimmed. Keys outside a section, duplicate sections or keys, and
//! keys the section does not understand are errors. Relative paths are
//! resolved against the directory holding the file.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::Vector3;

use crate::attack::{AttackConfig, AttackTarget, DepthRange, Method, Mode, TargetPolicy, DEFAULT_PGD_ITERATIONS};
use crate::dataset::{SyntheticSpec, TrajectorySpec, DEFAULT_ASSOCIATION_TOLERANCE, DEFAULT_DEPTH_SCALE};
use crate::error::{Error, Result};
use crate::geometry::Intrinsics;
use crate::odometry::{TimingMode, TrackerConfig};
use crate::schedule::{Schedule, DEFAULT_REGION_TOLERANCE};

/// Parsed but not yet interpreted configuration text.
#[derive(Debug, Clone, Default)]
pub struct Ini {
    origin: PathBuf,
    sections: BTreeMap<String, BTreeMap<String, (String, usize)>>,
}

fn is_ident(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

impl Ini {
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut ini = Ini {
            origin: origin.to_path_buf(),
            sections: BTreeMap::new(),
        };
        let mut current: Option<String> = None;
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let malformed = |msg: String| Error::ConfigSyntax {
                path: origin.to_path_buf(),
                line: n + 1,
                msg,
            };
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                let name = name.trim();
                if !is_ident(name) {
                    return Err(malformed(format!("bad section name {name:?}")));
                }
                if ini.sections.insert(name.to_string(), BTreeMap::new()).is_some() {
                    return Err(malformed(format!("duplicate section [{name}]")));
                }
                current = Some(name.to_string());
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(malformed(format!("expected `key = value`, found {line:?}")));
            };
            let key = key.trim();
            if !is_ident(key) {
                return Err(malformed(format!("bad key {key:?}")));
            }
            let Some(section) = &current else {
                return Err(malformed(format!("key {key:?} outside a section")));
            };
            let entries = ini.sections.get_mut(section).expect("section exists");
            if entries.insert(key.to_string(), (value.trim().to_string(), n + 1)).is_some() {
                return Err(malformed(format!("duplicate key {key:?} in [{section}]")));
            }
        }
        Ok(ini)
    }

    pub fn has_section(&self, section: &str) -> bool {
        self.sections.contains_key(section)
    }

    /// Remove and return a raw value.
    pub fn take_raw(&mut self, section: &str, key: &str) -> Option<(String, usize)> {
        self.sections.get_mut(section)?.remove(key)
    }

    /// Remove and parse a value.
    pub fn take<T: FromStr>(&mut self, section: &str, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        let Some((value, line)) = self.take_raw(section, key) else {
            return Ok(None);
        };
        value.parse().map(Some).map_err(|e| Error::ConfigSyntax {
            path: self.origin.clone(),
            line,
            msg: format!("[{section}] {key} = {value:?}: {e}"),
        })
    }

    fn take_or<T: FromStr>(&mut self, section: &str, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.take(section, key)?.unwrap_or(default))
    }

    fn take_vector(&mut self, section: &str, key: &str) -> Result<Option<Vector3<f64>>> {
        let Some((value, line)) = self.take_raw(section, key) else {
            return Ok(None);
        };
        let nums: Vec<f64> = value
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::ConfigSyntax {
                path: self.origin.clone(),
                line,
                msg: format!("[{section}] {key}: expected three numbers"),
            })?;
        match nums[..] {
            [x, y, z] => Ok(Some(Vector3::new(x, y, z))),
            _ => Err(Error::ConfigSyntax {
                path: self.origin.clone(),
                line,
                msg: format!("[{section}] {key}: expected three numbers"),
            }),
        }
    }

    fn take_path(&mut self, section: &str, key: &str) -> Option<PathBuf> {
        let (value, _) = self.take_raw(section, key)?;
        let p = PathBuf::from(value);
        Some(if p.is_absolute() {
            p
        } else {
            self.origin.parent().unwrap_or(Path::new("")).join(p)
        })
    }

    fn take_section(&mut self, section: &str) {
        self.sections.remove(section);
    }

    /// Error on anything that was never consumed.
    pub fn finish(self) -> Result<()> {
        for (section, entries) in &self.sections {
            if let Some((key, (_, line))) = entries.iter().next() {
                return Err(Error::ConfigSyntax {
                    path: self.origin.clone(),
                    line: *line,
                    msg: format!("unknown or unused key {key:?} in [{section}]"),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSource {
    Synthetic(SyntheticSpec),
    Tum {
        path: PathBuf,
        intrinsics: Intrinsics,
        depth_scale: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetConfig {
    pub source: DatasetSource,
    pub association_tolerance: f64,
    pub regions: Option<PathBuf>,
    pub region_tolerance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SurrogateSource {
    Seeded(u64),
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    pub surrogate: SurrogateSource,
    /// `None` disables the attack entirely.
    pub attack: Option<AttackConfig>,
    pub target: AttackTarget,
    pub depth_range: DepthRange,
    pub schedule: Schedule,
    pub tracker: TrackerConfig,
    pub output: Option<PathBuf>,
    pub seed: u64,
    /// Also run the clean pipeline for side-by-side deltas.
    pub baseline: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: DatasetConfig {
                source: DatasetSource::Synthetic(SyntheticSpec::default()),
                association_tolerance: DEFAULT_ASSOCIATION_TOLERANCE,
                regions: None,
                region_tolerance: DEFAULT_REGION_TOLERANCE,
            },
            surrogate: SurrogateSource::Seeded(0),
            attack: None,
            target: AttackTarget::Rgb,
            depth_range: DepthRange::default(),
            schedule: Schedule::AllFrames,
            tracker: TrackerConfig::default(),
            output: None,
            seed: 0,
            baseline: false,
        }
    }
}

fn parse_synthetic(ini: &mut Ini) -> Result<SyntheticSpec> {
    const S: &str = "synthetic";
    let d = SyntheticSpec::default();
    let intrinsics = Intrinsics::new(
        ini.take_or(S, "fx", d.intrinsics.fx)?,
        ini.take_or(S, "fy", d.intrinsics.fy)?,
        ini.take_or(S, "cx", d.intrinsics.cx)?,
        ini.take_or(S, "cy", d.intrinsics.cy)?,
    )
    .map_err(|e| Error::Config(e.to_string()))?;
    let kind: String = ini.take_or(S, "trajectory", "handheld".to_string())?;
    let trajectory = match kind.as_str() {
        "static" => TrajectorySpec::Static,
        "linear" => TrajectorySpec::Linear {
            velocity: ini.take_vector(S, "velocity")?.unwrap_or_else(Vector3::zeros),
            angular_velocity: ini.take_vector(S, "angular_velocity")?.unwrap_or_else(Vector3::zeros),
        },
        "handheld" => {
            let TrajectorySpec::Handheld {
                amplitude,
                rotation_amplitude,
                period,
            } = TrajectorySpec::default_handheld()
            else {
                unreachable!()
            };
            TrajectorySpec::Handheld {
                amplitude: ini.take_or(S, "amplitude", amplitude)?,
                rotation_amplitude: ini.take_or(S, "rotation_amplitude", rotation_amplitude)?,
                period: ini.take_or(S, "period", period)?,
            }
        }
        other => return Err(Error::Config(format!("unknown trajectory {other:?}"))),
    };
    Ok(SyntheticSpec {
        width: ini.take_or(S, "width", d.width)?,
        height: ini.take_or(S, "height", d.height)?,
        intrinsics,
        frames: ini.take_or(S, "frames", d.frames)?,
        texture_seed: ini.take_or(S, "texture_seed", d.texture_seed)?,
        trajectory,
        frame_rate: ini.take_or(S, "frame_rate", d.frame_rate)?,
        start_time: ini.take_or(S, "start_time", d.start_time)?,
        depth_scale: ini.take_or(S, "depth_scale", d.depth_scale)?,
    })
}

/// A synthetic sequence description: a file with a single `[synthetic]`
/// section using the same keys as experiment configs.
pub fn parse_synthetic_spec(text: &str, origin: &Path) -> Result<SyntheticSpec> {
    let mut ini = Ini::parse(text, origin)?;
    let spec = parse_synthetic(&mut ini)?;
    ini.finish()?;
    if spec.frames < 2 {
        return Err(Error::Config("synthetic sequence needs >= 2 frames".into()));
    }
    Ok(spec)
}

fn parse_attack(ini: &mut Ini, seed: u64) -> Result<Option<AttackConfig>> {
    const S: &str = "attack";
    let method: String = ini.take_or(S, "method", "none".to_string())?;
    let method = match method.as_str() {
        "none" => {
            ini.take_section(S);
            return Ok(None);
        }
        m => Method::from_str(m)?,
    };
    let epsilon: f64 = ini
        .take(S, "epsilon")?
        .ok_or_else(|| Error::Config("[attack] needs epsilon".into()))?;
    let mut cfg = match method {
        Method::Fgsm => AttackConfig::fgsm(epsilon),
        Method::Pgd => AttackConfig::pgd(
            epsilon,
            ini.take(S, "alpha")?,
            ini.take_or(S, "iterations", DEFAULT_PGD_ITERATIONS)?,
        ),
    };
    let mode: Mode = ini.take_or(S, "mode", Mode::Untargeted)?;
    if mode == Mode::Targeted {
        cfg = cfg.targeted(ini.take_or(S, "target_label", TargetPolicy::Random)?);
    }
    cfg.seed = seed;
    cfg.validate()?;
    Ok(Some(cfg))
}

impl ExperimentConfig {
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut ini = Ini::parse(text, origin)?;
        let d = ExperimentConfig::default();
        let seed: u64 = ini.take_or("run", "seed", d.seed)?;

        let source: String = ini
            .take("dataset", "source")?
            .ok_or_else(|| Error::Config("[dataset] needs source = synthetic | tum".into()))?;
        let source = match source.as_str() {
            "synthetic" => DatasetSource::Synthetic(parse_synthetic(&mut ini)?),
            "tum" => {
                if ini.has_section("synthetic") {
                    return Err(Error::Config("[synthetic] given for a tum dataset".into()));
                }
                let path = ini
                    .take_path("dataset", "path")
                    .ok_or_else(|| Error::Config("[dataset] tum source needs path".into()))?;
                let k = Intrinsics::TUM_FR1;
                let intrinsics = Intrinsics::new(
                    ini.take_or("dataset", "fx", k.fx)?,
                    ini.take_or("dataset", "fy", k.fy)?,
                    ini.take_or("dataset", "cx", k.cx)?,
                    ini.take_or("dataset", "cy", k.cy)?,
                )
                .map_err(|e| Error::Config(e.to_string()))?;
                DatasetSource::Tum {
                    path,
                    intrinsics,
                    depth_scale: ini.take_or("dataset", "depth_scale", DEFAULT_DEPTH_SCALE)?,
                }
            }
            other => return Err(Error::Config(format!("unknown dataset source {other:?}"))),
        };
        let dataset = DatasetConfig {
            source,
            association_tolerance: ini.take_or("dataset", "association_tolerance", d.dataset.association_tolerance)?,
            regions: ini.take_path("dataset", "regions"),
            region_tolerance: ini.take_or("dataset", "region_tolerance", d.dataset.region_tolerance)?,
        };

        let surrogate = match (ini.take_path("surrogate", "weights"), ini.take::<u64>("surrogate", "seed")?) {
            (Some(_), Some(_)) => return Err(Error::Config("[surrogate] takes weights or seed, not both".into())),
            (Some(p), None) => SurrogateSource::File(p),
            (None, s) => SurrogateSource::Seeded(s.unwrap_or(seed)),
        };

        let target: AttackTarget = ini.take_or("attack", "target", d.target)?;
        let depth_range = DepthRange::new(
            ini.take_or("attack", "depth_min", d.depth_range.min)?,
            ini.take_or("attack", "depth_max", d.depth_range.max)?,
        )?;
        let attack = parse_attack(&mut ini, seed)?;

        let schedule: Schedule = ini.take_or("schedule", "policy", d.schedule)?;

        let t = TrackerConfig::default();
        let mut tracker = t;
        tracker.frontend.threshold = ini.take_or("frontend", "threshold", t.frontend.threshold)?;
        tracker.frontend.max_features = ini.take_or("frontend", "max_features", t.frontend.max_features)?;
        tracker.frontend.grid = ini.take_or("frontend", "grid", t.frontend.grid)?;
        tracker.frontend.max_distance = ini.take_or("frontend", "max_distance", t.frontend.max_distance)?;
        tracker.frontend.ratio = ini.take_or("frontend", "ratio", t.frontend.ratio)?;
        tracker.frontend.pattern_seed = ini.take_or("frontend", "pattern_seed", t.frontend.pattern_seed)?;
        tracker.estimator.iterations = ini.take_or("estimator", "iterations", t.estimator.iterations)?;
        tracker.estimator.inlier_radius = ini.take_or("estimator", "inlier_radius", t.estimator.inlier_radius)?;
        tracker.estimator.min_inliers = ini.take_or("estimator", "min_inliers", t.estimator.min_inliers)?;
        tracker.refresh_inliers = ini.take_or("estimator", "refresh_inliers", t.refresh_inliers)?;
        tracker.refresh_distance = ini.take_or("estimator", "refresh_distance", t.refresh_distance)?;
        tracker.timing = ini.take_or::<TimingMode>("estimator", "timing", t.timing)?;
        tracker.seed = seed;

        let output = ini.take_path("run", "output");
        let baseline = ini.take_or("run", "baseline", d.baseline)?;
        ini.finish()?;

        let cfg = ExperimentConfig {
            dataset,
            surrogate,
            attack,
            target,
            depth_range,
            schedule,
            tracker,
            output,
            seed,
            baseline,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text, path)
    }

    pub fn validate(&self) -> Result<()> {
        self.tracker.frontend.validate()?;
        self.tracker.estimator.validate()?;
        if let Some(a) = &self.attack {
            a.validate()?;
        }
        let positive = |name: &str, v: f64| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} = {v}")))
            }
        };
        positive("association_tolerance", self.dataset.association_tolerance)?;
        positive("region_tolerance", self.dataset.region_tolerance)?;
        if let DatasetSource::Synthetic(s) = &self.dataset.source {
            if s.frames < 2 || s.width < 32 || s.height < 32 {
                return Err(Error::Config("synthetic sequence needs >= 2 frames of at least 32x32".into()));
            }
        }
        if self.schedule == Schedule::SpatiallyAdaptive && self.dataset.regions.is_none() && self.attack.is_some() {
            log::warn!("spatial schedule without a region file attacks nothing");
        }
        Ok(())
    }

    /// The attack with epsilon replaced, or a fresh FGSM attack when none
    /// was configured.
    pub fn with_epsilon(&self, epsilon: f64) -> Self {
        let mut out = self.clone();
        let mut attack = self.attack.unwrap_or_else(|| AttackConfig {
            seed: self.seed,
            ..AttackConfig::fgsm(epsilon)
        });
        attack.epsilon = epsilon;
        out.attack = Some(attack);
        out
    }

    /// Fully resolved configuration text; parsing it reproduces `self`.
    pub fn to_ini(&self) -> String {
        let mut s = String::new();
        let path = |p: &Path| p.display().to_string();
        s.push_str("[dataset]\n");
        match &self.dataset.source {
            DatasetSource::Synthetic(_) => s.push_str("source = synthetic\n"),
            DatasetSource::Tum {
                path: p,
                intrinsics: k,
                depth_scale,
            } => {
                let _ = writeln!(s, "source = tum\npath = {}", path(p));
                let _ = writeln!(s, "fx = {}\nfy = {}\ncx = {}\ncy = {}", k.fx, k.fy, k.cx, k.cy);
                let _ = writeln!(s, "depth_scale = {depth_scale}");
            }
        }
        let _ = writeln!(s, "association_tolerance = {}", self.dataset.association_tolerance);
        if let Some(r) = &self.dataset.regions {
            let _ = writeln!(s, "regions = {}", path(r));
        }
        let _ = writeln!(s, "region_tolerance = {}", self.dataset.region_tolerance);

        if let DatasetSource::Synthetic(spec) = &self.dataset.source {
            let k = &spec.intrinsics;
            let _ = writeln!(s, "\n[synthetic]\nwidth = {}\nheight = {}", spec.width, spec.height);
            let _ = writeln!(s, "fx = {}\nfy = {}\ncx = {}\ncy = {}", k.fx, k.fy, k.cx, k.cy);
            let _ = writeln!(s, "frames = {}\ntexture_seed = {}", spec.frames, spec.texture_seed);
            let _ = writeln!(s, "frame_rate = {}\nstart_time = {}", spec.frame_rate, spec.start_time);
            let _ = writeln!(s, "depth_scale = {}", spec.depth_scale);
            match spec.trajectory {
                TrajectorySpec::Static => s.push_str("trajectory = static\n"),
                TrajectorySpec::Linear {
                    velocity: v,
                    angular_velocity: w,
                } => {
                    let _ = writeln!(s, "trajectory = linear\nvelocity = {} {} {}", v.x, v.y, v.z);
                    let _ = writeln!(s, "angular_velocity = {} {} {}", w.x, w.y, w.z);
                }
                TrajectorySpec::Handheld {
                    amplitude,
                    rotation_amplitude,
                    period,
                } => {
                    let _ = writeln!(s, "trajectory = handheld\namplitude = {amplitude}");
                    let _ = writeln!(s, "rotation_amplitude = {rotation_amplitude}\nperiod = {period}");
                }
            }
        }

        s.push_str("\n[surrogate]\n");
        match &self.surrogate {
            SurrogateSource::Seeded(seed) => {
                let _ = writeln!(s, "seed = {seed}");
            }
            SurrogateSource::File(p) => {
                let _ = writeln!(s, "weights = {}", path(p));
            }
        }

        s.push_str("\n[attack]\n");
        let _ = writeln!(s, "target = {}", self.target);
        let _ = writeln!(s, "depth_min = {}\ndepth_max = {}", self.depth_range.min, self.depth_range.max);
        match &self.attack {
            None => s.push_str("method = none\n"),
            Some(a) => {
                let _ = writeln!(s, "method = {}\nepsilon = {}", a.method, a.epsilon);
                if a.method == Method::Pgd {
                    if let Some(alpha) = a.alpha {
                        let _ = writeln!(s, "alpha = {alpha}");
                    }
                    let _ = writeln!(s, "iterations = {}", a.iterations);
                }
                let _ = writeln!(s, "mode = {}", a.mode);
                if let Some(p) = a.target_policy {
                    let _ = writeln!(s, "target_label = {p}");
                }
            }
        }

        let _ = writeln!(s, "\n[schedule]\npolicy = {}", self.schedule);

        let f = &self.tracker.frontend;
        let _ = writeln!(s, "\n[frontend]\nthreshold = {}\nmax_features = {}", f.threshold, f.max_features);
        let _ = writeln!(s, "grid = {}\nmax_distance = {}\nratio = {}", f.grid, f.max_distance, f.ratio);
        let _ = writeln!(s, "pattern_seed = {}", f.pattern_seed);

        let e = &self.tracker.estimator;
        let _ = writeln!(s, "\n[estimator]\niterations = {}\ninlier_radius = {}", e.iterations, e.inlier_radius);
        let _ = writeln!(s, "min_inliers = {}", e.min_inliers);
        let _ = writeln!(s, "refresh_inliers = {}", self.tracker.refresh_inliers);
        let _ = writeln!(s, "refresh_distance = {}", self.tracker.refresh_distance);
        let _ = writeln!(s, "timing = {}", self.tracker.timing);

        let _ = writeln!(s, "\n[run]\nseed = {}", self.seed);
        if let Some(o) = &self.output {
            let _ = writeln!(s, "output = {}", path(o));
        }
        let _ = writeln!(s, "baseline = {}", self.baseline);
        s
    }

    /// Text identifying everything a clean run depends on.
    pub fn baseline_key(&self) -> String {
        let mut clean = self.clone();
        clean.attack = None;
        clean.target = AttackTarget::Rgb;
        clean.depth_range = DepthRange::default();
        clean.schedule = Schedule::AllFrames;
        clean.surrogate = SurrogateSource::Seeded(0);
        clean.output = None;
        clean.baseline = false;
        clean.to_ini()
    }
}
