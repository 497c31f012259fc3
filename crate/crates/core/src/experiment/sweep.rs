//! Grids of runs over epsilon and schedule.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;

use super::config::ExperimentConfig;
use super::runner::{write_atomic, RunReport, Workspace};
use crate::error::{Error, Result};
use crate::schedule::Schedule;

/// Headline numbers of one run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellSummary {
    pub ate_mean: f64,
    pub ate_rmse: f64,
    pub untracked_fraction: f64,
    pub attacked_frames: usize,
    pub frames: usize,
}

impl From<&RunReport> for CellSummary {
    fn from(r: &RunReport) -> Self {
        CellSummary {
            ate_mean: r.ate.mean,
            ate_rmse: r.ate.rmse,
            untracked_fraction: r.ate.untracked_fraction,
            attacked_frames: r.coverage.attacked_frames,
            frames: r.frames.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub schedule: Schedule,
    pub epsilon: f64,
    /// Error message for a failed cell.
    pub result: std::result::Result<CellSummary, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub epsilons: Vec<f64>,
    pub schedules: Vec<Schedule>,
    pub baseline: CellSummary,
    /// Schedule-major: all epsilons of the first schedule come first.
    pub cells: Vec<SweepCell>,
}

/// Clean runs keyed by everything they depend on.
#[derive(Default)]
pub struct BaselineCache {
    runs: Mutex<HashMap<String, Arc<RunReport>>>,
}

impl BaselineCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get_or_run(&self, workspace: &Workspace, config: &ExperimentConfig) -> Result<Arc<RunReport>> {
        let key = config.baseline_key();
        if let Some(r) = self.runs.lock().expect("cache lock").get(&key) {
            return Ok(Arc::clone(r));
        }
        let report = Arc::new(workspace.execute_baseline(config)?);
        self.runs
            .lock()
            .expect("cache lock")
            .insert(key, Arc::clone(&report));
        Ok(report)
    }

    pub fn len(&self) -> usize {
        self.runs.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn cell_dir_name(schedule: &Schedule, epsilon: f64) -> String {
    format!("{}-eps{epsilon}", schedule.to_string().replace([':', '/'], "_"))
}

/// Run every `(schedule, epsilon)` cell of `base` on a shared workspace.
/// Cells run in parallel; a failing cell is recorded, not fatal. When
/// `base.output` is set, per-cell reports go to `cells/` under it along with
/// `sweep.csv`, `ate_table.csv`, `untracked_table.csv` and `baseline/`.
pub fn sweep(
    base: &ExperimentConfig,
    epsilons: &[f64],
    schedules: &[Schedule],
    cache: &BaselineCache,
) -> Result<SweepReport> {
    if epsilons.is_empty() || schedules.is_empty() {
        return Err(Error::Config("sweep needs at least one epsilon and one schedule".into()));
    }
    let workspace = Workspace::load(base)?;
    let baseline = cache.get_or_run(&workspace, base)?;
    let grid: Vec<(Schedule, f64)> = schedules
        .iter()
        .flat_map(|s| epsilons.iter().map(move |e| (*s, *e)))
        .collect();
    let cells = grid
        .par_iter()
        .map(|&(schedule, epsilon)| {
            let mut cfg = base.with_epsilon(epsilon);
            cfg.schedule = schedule;
            cfg.baseline = false;
            let result = workspace.execute(&cfg).and_then(|report| {
                if let Some(dir) = &base.output {
                    let cell_dir = dir.join("cells").join(cell_dir_name(&schedule, epsilon));
                    let mut cfg_echo = report.clone();
                    cfg_echo.config.output = Some(cell_dir.clone());
                    cfg_echo.write(&cell_dir)?;
                }
                Ok(CellSummary::from(&report))
            });
            if let Err(e) = &result {
                log::warn!("cell {schedule} eps={epsilon} failed: {e}");
            }
            SweepCell {
                schedule,
                epsilon,
                result: result.map_err(|e| e.to_string()),
            }
        })
        .collect();
    let report = SweepReport {
        epsilons: epsilons.to_vec(),
        schedules: schedules.to_vec(),
        baseline: CellSummary::from(baseline.as_ref()),
        cells,
    };
    if let Some(dir) = &base.output {
        baseline.write(&dir.join("baseline"))?;
        report.write(dir)?;
    }
    Ok(report)
}

impl SweepReport {
    pub fn cell(&self, schedule: &Schedule, epsilon: f64) -> Option<&SweepCell> {
        self.cells
            .iter()
            .find(|c| c.schedule == *schedule && c.epsilon == epsilon)
    }

    /// One row per cell, schedule-major, with the baseline first.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("schedule,epsilon,status,ate_mean,ate_rmse,untracked_pct,attacked_frames,frames,error\n");
        let row = |out: &mut String, schedule: &str, eps: &str, s: &CellSummary| {
            let _ = writeln!(
                out,
                "{schedule},{eps},ok,{:.9},{:.9},{:.4},{},{},",
                s.ate_mean,
                s.ate_rmse,
                100.0 * s.untracked_fraction,
                s.attacked_frames,
                s.frames
            );
        };
        row(&mut out, "baseline", "0", &self.baseline);
        for c in &self.cells {
            match &c.result {
                Ok(s) => row(&mut out, &c.schedule.to_string(), &c.epsilon.to_string(), s),
                Err(e) => {
                    let msg = e.replace([',', '\n'], ";");
                    let _ = writeln!(out, "{},{},failed,,,,,,{msg}", c.schedule, c.epsilon);
                }
            }
        }
        out
    }

    /// Wide table: one row per schedule, one column per epsilon.
    pub fn table(&self, value: fn(&CellSummary) -> f64) -> String {
        let mut out = String::from("schedule,baseline");
        for e in &self.epsilons {
            let _ = write!(out, ",{e}");
        }
        out.push('\n');
        for s in &self.schedules {
            let _ = write!(out, "{s},{:.6}", value(&self.baseline));
            for e in &self.epsilons {
                match self.cell(s, *e).map(|c| &c.result) {
                    Some(Ok(summary)) => {
                        let _ = write!(out, ",{:.6}", value(summary));
                    }
                    _ => out.push_str(",failed"),
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        write_atomic(&dir.join("sweep.csv"), self.to_csv().as_bytes())?;
        write_atomic(&dir.join("ate_table.csv"), self.table(|s| s.ate_mean).as_bytes())?;
        write_atomic(
            &dir.join("untracked_table.csv"),
            self.table(|s| 100.0 * s.untracked_fraction).as_bytes(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::SyntheticSpec;
    use crate::experiment::config::DatasetSource;
    use crate::experiment::run;

    fn base(frames: usize) -> ExperimentConfig {
        let mut c = ExperimentConfig::default();
        c.dataset.source = DatasetSource::Synthetic(SyntheticSpec {
            frames,
            ..SyntheticSpec::default()
        });
        c
    }

    #[test]
    fn zero_epsilon_cells_equal_the_baseline() {
        let cache = BaselineCache::new();
        let schedules = [Schedule::AllFrames, Schedule::rate(1, 2).unwrap()];
        let r = sweep(&base(8), &[0.0], &schedules, &cache).unwrap();
        assert_eq!(r.cells.len(), 2);
        for c in &r.cells {
            let s = c.result.as_ref().unwrap();
            assert_eq!((s.ate_mean, s.untracked_fraction), (r.baseline.ate_mean, r.baseline.untracked_fraction));
        }
        // second sweep reuses the cached baseline
        sweep(&base(8), &[0.0], &schedules, &cache).unwrap();
        assert_eq!(cache.len(), 1);
    }

    #[test]
    fn cells_match_standalone_runs_and_layout() {
        let dir = tempfile::tempdir().unwrap();
        let mut b = base(8);
        b.output = Some(dir.path().to_path_buf());
        let eps = [0.05, 0.3];
        let schedules = [Schedule::AllFrames, Schedule::rate(1, 3).unwrap(), Schedule::time_adaptive(Some(4)).unwrap()];
        let r = sweep(&b, &eps, &schedules, &BaselineCache::new()).unwrap();
        assert_eq!(r.cells.len(), eps.len() * schedules.len());
        let order: Vec<(Schedule, f64)> = r.cells.iter().map(|c| (c.schedule, c.epsilon)).collect();
        assert_eq!(order[..2], [(Schedule::AllFrames, 0.05), (Schedule::AllFrames, 0.3)]);

        let mut single = b.with_epsilon(0.3);
        single.schedule = schedules[1];
        single.output = None;
        let standalone = run(&single).unwrap();
        assert_eq!(r.cell(&schedules[1], 0.3).unwrap().result, Ok(CellSummary::from(&standalone)));

        let csv = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
        assert_eq!(csv.lines().count(), 2 + r.cells.len());
        let table = std::fs::read_to_string(dir.path().join("ate_table.csv")).unwrap();
        assert_eq!(table.lines().next().unwrap(), "schedule,baseline,0.05,0.3");
        assert!(dir.path().join("cells/rate_1_3-eps0.3/frames.csv").exists());
        assert!(dir.path().join("baseline/summary.txt").exists());
    }

    #[test]
    fn empty_axes_are_rejected() {
        assert!(sweep(&base(3), &[], &[Schedule::AllFrames], &BaselineCache::new()).is_err());
    }
}
