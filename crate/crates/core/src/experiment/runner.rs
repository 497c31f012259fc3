//! Single experiment runs and their on-disk reports.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::config::{DatasetSource, ExperimentConfig, SurrogateSource};
use crate::attack::{Attacker, LabelInfo};
use crate::dataset::{generate_synthetic_sequence, load_regions, load_tum_sequence, FrameSource, RegionSet, TumSequence};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, fill_untracked, AteReport, Trajectory};
use crate::odometry::{run_sequence, FrameLog, RunOptions};
use crate::schedule::CoverageStats;
use crate::surrogate::{load_weights, Model};

/// Write `contents` to `path` through a temporary file and a rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Loaded inputs shared by every run over the same dataset and surrogate.
pub struct Workspace {
    source: Box<dyn FrameSource>,
    ground_truth: Trajectory,
    regions: Option<RegionSet>,
    model: Model,
    dataset_key: String,
}

fn dataset_key(config: &ExperimentConfig) -> String {
    format!("{:?}|{:?}", config.dataset, config.surrogate)
}

impl Workspace {
    pub fn load(config: &ExperimentConfig) -> Result<Self> {
        let source: Box<dyn FrameSource> = match &config.dataset.source {
            DatasetSource::Synthetic(spec) => Box::new(generate_synthetic_sequence(spec)?),
            DatasetSource::Tum {
                path,
                intrinsics,
                depth_scale,
            } => {
                let manifest = load_tum_sequence(path, config.dataset.association_tolerance)?;
                log::info!("{}: {} associated frames", path.display(), manifest.associations.len());
                Box::new(TumSequence::open(manifest, *intrinsics, *depth_scale)?)
            }
        };
        let ground_truth = source
            .ground_truth()
            .ok_or_else(|| Error::Insufficient("sequence has no associated ground truth".into()))?;
        let regions = config.dataset.regions.as_deref().map(load_regions).transpose()?;
        let model = match &config.surrogate {
            SurrogateSource::Seeded(seed) => Model::default_seeded(*seed),
            SurrogateSource::File(path) => load_weights(path)?,
        };
        Ok(Workspace {
            source,
            ground_truth,
            regions,
            model,
            dataset_key: dataset_key(config),
        })
    }

    pub fn source(&self) -> &dyn FrameSource {
        self.source.as_ref()
    }

    pub fn ground_truth(&self) -> &Trajectory {
        &self.ground_truth
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    /// Run `config` on the loaded inputs. The config must describe the same
    /// dataset and surrogate the workspace was loaded from. The baseline
    /// flag is ignored here; see [`run`].
    pub fn execute(&self, config: &ExperimentConfig) -> Result<RunReport> {
        if dataset_key(config) != self.dataset_key {
            return Err(Error::InvalidArgument("config does not match the loaded dataset".into()));
        }
        config.validate()?;
        let attacker = config.attack.map(|attack| Attacker {
            model: &self.model,
            config: attack,
            target: config.target,
            depth_range: config.depth_range,
        });
        let options = RunOptions {
            tracker: config.tracker,
            attacker,
            schedule: config.schedule,
            regions: self.regions.as_ref(),
            region_tolerance: config.dataset.region_tolerance,
        };
        let out = run_sequence(self.source(), &options)?;
        let tolerance = config.dataset.association_tolerance;
        let ate = evaluate(&out.results, &self.ground_truth, tolerance)?;
        let estimated = fill_untracked(&out.results)?;
        let mut errors = ate.frames.iter().peekable();
        let frames = out
            .logs
            .into_iter()
            .map(|log| {
                let ate = errors.next_if(|e| e.timestamp == log.timestamp).map(|e| e.error);
                FrameRecord { log, ate }
            })
            .collect();
        Ok(RunReport {
            config: config.clone(),
            ate,
            coverage: out.coverage,
            frames,
            estimated,
            ground_truth: self.ground_truth.clone(),
            baseline: None,
        })
    }

    /// Clean companion of `config`.
    pub fn execute_baseline(&self, config: &ExperimentConfig) -> Result<RunReport> {
        let mut clean = config.clone();
        clean.attack = None;
        clean.baseline = false;
        self.execute(&clean)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub log: FrameLog,
    /// Aligned position error; `None` when the frame has no ground truth.
    pub ate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    /// Resolved configuration; re-running it reproduces the report.
    pub config: ExperimentConfig,
    pub ate: AteReport,
    pub coverage: CoverageStats,
    pub frames: Vec<FrameRecord>,
    /// Estimated trajectory with untracked frames filled.
    pub estimated: Trajectory,
    pub ground_truth: Trajectory,
    pub baseline: Option<Box<RunReport>>,
}

pub const FRAMES_HEADER: &str = "frame,timestamp,attacked,pixel_fraction,tracked,inliers,exec_time,moving_avg,ate,\
rgb_clean,rgb_target,rgb_adv,depth_clean,depth_target,depth_adv";

fn label_fields(out: &mut String, info: &Option<LabelInfo>) {
    match info {
        Some(l) => {
            let target = l.target.map(|t| t.to_string()).unwrap_or_default();
            let _ = write!(out, ",{},{},{}", l.clean, target, l.adversarial);
        }
        None => out.push_str(",,,"),
    }
}

impl RunReport {
    pub fn frames_csv(&self) -> String {
        let mut out = format!("{FRAMES_HEADER}\n");
        for r in &self.frames {
            let l = &r.log;
            let _ = write!(
                out,
                "{},{:.6},{},{:.6},{},{},{:.9},{:.9},",
                l.index,
                l.timestamp,
                u8::from(l.attacked),
                l.pixel_fraction,
                u8::from(l.tracked),
                l.inliers,
                l.exec_time,
                l.moving_average
            );
            if let Some(e) = r.ate {
                let _ = write!(out, "{e:.9}");
            }
            label_fields(&mut out, &l.rgb_labels);
            label_fields(&mut out, &l.depth_labels);
            out.push('\n');
        }
        out
    }

    /// Fraction of attacked frames whose surrogate label changed, per
    /// attacked input (`None` when that input was never attacked).
    pub fn flip_rates(&self) -> (Option<f64>, Option<f64>) {
        let rate = |pick: fn(&FrameLog) -> Option<LabelInfo>| {
            let labels: Vec<LabelInfo> = self.frames.iter().filter_map(|r| pick(&r.log)).collect();
            (!labels.is_empty())
                .then(|| labels.iter().filter(|l| l.adversarial != l.clean).count() as f64 / labels.len() as f64)
        };
        (rate(|l| l.rgb_labels), rate(|l| l.depth_labels))
    }

    pub fn tracked_frames(&self) -> usize {
        self.frames.iter().filter(|r| r.log.tracked).count()
    }

    /// `key = value` lines summarizing the run.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        let c = &self.config;
        let attack = match &c.attack {
            Some(a) => format!("{} {} eps={} target={}", a.method, a.mode, a.epsilon, c.target),
            None => "none".to_string(),
        };
        let _ = writeln!(s, "attack = {attack}");
        let _ = writeln!(s, "schedule = {}", c.schedule);
        let _ = writeln!(s, "frames = {}", self.frames.len());
        let _ = writeln!(s, "tracked_frames = {}", self.tracked_frames());
        let _ = writeln!(s, "untracked_fraction = {:.6}", self.ate.untracked_fraction);
        let _ = writeln!(s, "ate_mean = {:.9}", self.ate.mean);
        let _ = writeln!(s, "ate_rmse = {:.9}", self.ate.rmse);
        let _ = writeln!(s, "ate_max = {:.9}", self.ate.max);
        let _ = writeln!(s, "alignment_unique = {}", self.ate.alignment_unique);
        let _ = writeln!(s, "attacked_frames = {}", self.coverage.attacked_frames);
        let _ = writeln!(s, "attacked_frame_fraction = {:.6}", self.coverage.frame_fraction);
        let _ = writeln!(s, "attacked_pixel_fraction = {:.6}", self.coverage.pixel_fraction);
        let (rgb, depth) = self.flip_rates();
        if let Some(r) = rgb {
            let _ = writeln!(s, "rgb_label_flip_rate = {r:.6}");
        }
        if let Some(r) = depth {
            let _ = writeln!(s, "depth_label_flip_rate = {r:.6}");
        }
        if let Some(b) = &self.baseline {
            let _ = writeln!(s, "baseline_ate_mean = {:.9}", b.ate.mean);
            let _ = writeln!(s, "baseline_untracked_fraction = {:.6}", b.ate.untracked_fraction);
            if b.ate.mean > 0.0 {
                let _ = writeln!(s, "ate_ratio_to_baseline = {:.6}", self.ate.mean / b.ate.mean);
            }
        }
        s
    }

    /// Write the report files into `dir`; the baseline goes to
    /// `dir/baseline`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let files = [
            ("config.ini", self.config.to_ini()),
            ("frames.csv", self.frames_csv()),
            ("ate.csv", self.ate.to_csv()),
            ("summary.txt", self.summary()),
            ("trajectory.txt", self.estimated.to_tum()),
            ("groundtruth.txt", self.ground_truth.to_tum()),
        ];
        for (name, body) in files {
            write_atomic(&dir.join(name), body.as_bytes())?;
        }
        if let Some(b) = &self.baseline {
            b.write(&dir.join("baseline"))?;
        }
        Ok(())
    }
}

/// Load inputs, run `config` (plus its baseline when requested) and write
/// the report to the configured output directory, if any.
pub fn run(config: &ExperimentConfig) -> Result<RunReport> {
    let ws = Workspace::load(config)?;
    let mut report = ws.execute(config)?;
    if config.baseline {
        report.baseline = Some(Box::new(ws.execute_baseline(config)?));
    }
    if let Some(dir) = &config.output {
        report.write(dir)?;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attack::AttackConfig;
    use crate::dataset::SyntheticSpec;

    fn config(frames: usize) -> ExperimentConfig {
        let mut c = ExperimentConfig::default();
        c.dataset.source = DatasetSource::Synthetic(SyntheticSpec {
            frames,
            ..SyntheticSpec::default()
        });
        c
    }

    #[test]
    fn clean_run_tracks_everything() {
        let r = run(&config(10)).unwrap();
        assert_eq!(r.frames.len(), 10);
        assert_eq!(r.ate.untracked_fraction, 0.0);
        assert!(r.ate.mean < 0.01);
        assert!(r.frames.iter().all(|f| f.ate.is_some() && !f.log.attacked));
        assert_eq!(r.frames_csv().lines().count(), 11);
    }

    #[test]
    fn reports_are_reproducible_from_their_echo() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = config(8);
        c.attack = Some(AttackConfig::fgsm(0.05));
        c.baseline = true;
        c.output = Some(dir.path().join("out"));
        let a = run(&c).unwrap();
        let echo = fs::read_to_string(dir.path().join("out/config.ini")).unwrap();
        let again = ExperimentConfig::parse(&echo, &dir.path().join("out/config.ini")).unwrap();
        assert_eq!(again, c);
        let mut again = again;
        again.output = Some(dir.path().join("again"));
        run(&again).unwrap();
        for f in ["frames.csv", "ate.csv", "summary.txt", "trajectory.txt", "baseline/frames.csv"] {
            let x = fs::read(dir.path().join("out").join(f)).unwrap();
            let y = fs::read(dir.path().join("again").join(f)).unwrap();
            assert_eq!(x, y, "{f}");
        }
        assert!(a.summary().contains("baseline_ate_mean"));
        assert!(!dir.path().join("out/frames.csv.tmp").exists());
    }

    #[test]
    fn mismatched_workspace_is_rejected() {
        let ws = Workspace::load(&config(3)).unwrap();
        assert!(ws.execute(&config(4)).is_err());
    }
}
