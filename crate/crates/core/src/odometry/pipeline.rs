//! Whole-sequence runs: schedule, optional attack, tracking.

use rayon::prelude::*;

use super::tracker::{Tracker, TrackerConfig};
use super::TrackingResult;
use crate::attack::{Attacker, LabelInfo};
use crate::dataset::{FrameSource, RegionSet};
use crate::error::{Error, Result};
use crate::frame::{DepthFrame, ImageFrame};
use crate::metrics::Trajectory;
use crate::schedule::{coverage_stats, CoverageStats, Schedule, SchedulerState, DEFAULT_REGION_TOLERANCE};

#[derive(Debug, Clone)]
pub struct RunOptions<'a> {
    pub tracker: TrackerConfig,
    /// `None` runs the clean pipeline.
    pub attacker: Option<Attacker<'a>>,
    pub schedule: Schedule,
    pub regions: Option<&'a RegionSet>,
    pub region_tolerance: f64,
}

impl<'a> RunOptions<'a> {
    pub fn clean(tracker: TrackerConfig) -> Self {
        RunOptions {
            tracker,
            attacker: None,
            schedule: Schedule::AllFrames,
            regions: None,
            region_tolerance: DEFAULT_REGION_TOLERANCE,
        }
    }
}

/// Per-frame record of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameLog {
    pub index: usize,
    pub timestamp: f64,
    pub attacked: bool,
    /// Fraction of pixels inside the attack area (0 when not attacked).
    pub pixel_fraction: f64,
    pub tracked: bool,
    pub inliers: usize,
    pub exec_time: f64,
    /// Scheduler moving average after recording this frame.
    pub moving_average: f64,
    pub rgb_labels: Option<LabelInfo>,
    pub depth_labels: Option<LabelInfo>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub results: Vec<TrackingResult>,
    pub logs: Vec<FrameLog>,
    pub coverage: CoverageStats,
}

impl RunOutput {
    /// Poses of tracked frames only.
    pub fn tracked_trajectory(&self) -> Result<Trajectory> {
        Trajectory::new(
            self.results
                .iter()
                .filter_map(|r| r.pose().map(|p| (r.timestamp, p)))
                .collect(),
        )
    }
}

struct Prepared {
    rgb: ImageFrame,
    depth: DepthFrame,
    attacked: bool,
    pixel_fraction: f64,
    rgb_labels: Option<LabelInfo>,
    depth_labels: Option<LabelInfo>,
}

fn prepare(source: &dyn FrameSource, options: &RunOptions<'_>, state: &SchedulerState, index: usize) -> Result<Prepared> {
    let (rgb, depth) = source.load(index).map_err(|e| e.at_stage(index, "load"))?;
    let (w, h) = (rgb.width(), rgb.height());
    let Some(attacker) = &options.attacker else {
        return Ok(Prepared {
            rgb,
            depth,
            attacked: false,
            pixel_fraction: 0.0,
            rgb_labels: None,
            depth_labels: None,
        });
    };
    let area = options
        .schedule
        .regions_for(source.timestamp(index), options.regions, options.region_tolerance, w, h);
    if !options.schedule.should_attack(state, index, &area) {
        return Ok(Prepared {
            rgb,
            depth,
            attacked: false,
            pixel_fraction: 0.0,
            rgb_labels: None,
            depth_labels: None,
        });
    }
    let out = attacker
        .attack(index, &rgb, &depth, &area)
        .map_err(|e| e.at_stage(index, "attack"))?;
    Ok(Prepared {
        rgb: out.rgb,
        depth: out.depth,
        attacked: true,
        pixel_fraction: area.pixel_fraction(w, h),
        rgb_labels: out.rgb_labels,
        depth_labels: out.depth_labels,
    })
}

/// Run the pipeline over every frame of `source`.
///
/// Attacks for schedules that do not depend on timing are computed in
/// parallel ahead of the (sequential) tracker; time-adaptive runs decide
/// and attack one frame at a time.
pub fn run_sequence(source: &dyn FrameSource, options: &RunOptions<'_>) -> Result<RunOutput> {
    let n = source.len();
    if n == 0 {
        return Err(Error::Insufficient("sequence has no frames".into()));
    }
    let mut tracker = Tracker::new(options.tracker, source.intrinsics())?;
    let mut state = options.schedule.new_state();
    let mut results = Vec::with_capacity(n);
    let mut logs = Vec::with_capacity(n);

    let mut track = |i: usize, p: Prepared, state: &mut SchedulerState| -> Result<()> {
        let r = tracker
            .track_frame(&p.rgb, &p.depth)
            .map_err(|e| e.at_stage(i, "track"))?;
        state.record_execution_time(r.exec_time)?;
        logs.push(FrameLog {
            index: i,
            timestamp: source.timestamp(i),
            attacked: p.attacked,
            pixel_fraction: p.pixel_fraction,
            tracked: r.is_tracked(),
            inliers: r.inliers,
            exec_time: r.exec_time,
            moving_average: state.moving_average().unwrap_or(0.0),
            rgb_labels: p.rgb_labels,
            depth_labels: p.depth_labels,
        });
        results.push(r);
        Ok(())
    };

    if options.schedule.needs_timing() && options.attacker.is_some() {
        for i in 0..n {
            let p = prepare(source, options, &state, i)?;
            track(i, p, &mut state)?;
        }
    } else {
        let chunk = (rayon::current_num_threads() * 2).max(4);
        let frozen = SchedulerState::with_window(None);
        for start in (0..n).step_by(chunk) {
            let prepared: Vec<Prepared> = (start..(start + chunk).min(n))
                .into_par_iter()
                .map(|i| prepare(source, options, &frozen, i))
                .collect::<Result<_>>()?;
            for (k, p) in prepared.into_iter().enumerate() {
                track(start + k, p, &mut state)?;
            }
        }
    }

    let timestamps: Vec<f64> = (0..n).map(|i| source.timestamp(i)).collect();
    let decisions: Vec<bool> = logs.iter().map(|l| l.attacked).collect();
    let (w, h) = source.dimensions();
    let coverage = coverage_stats(
        &options.schedule,
        &timestamps,
        options.regions,
        options.region_tolerance,
        (w, h),
        Some(&decisions),
    )?;
    Ok(RunOutput {
        results,
        logs,
        coverage,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attack::{AttackConfig, AttackTarget, DepthRange};
    use crate::dataset::{generate_synthetic_sequence, SyntheticSequence, SyntheticSpec};
    use crate::surrogate::Model;

    fn seq(frames: usize) -> SyntheticSequence {
        generate_synthetic_sequence(&SyntheticSpec {
            frames,
            ..SyntheticSpec::default()
        })
        .unwrap()
    }

    fn attacked<'m>(model: &'m Model, eps: f64, schedule: Schedule, target: AttackTarget) -> RunOptions<'m> {
        RunOptions {
            attacker: Some(Attacker {
                model,
                config: AttackConfig::fgsm(eps),
                target,
                depth_range: DepthRange::default(),
            }),
            schedule,
            ..RunOptions::clean(TrackerConfig::default())
        }
    }

    #[test]
    fn zero_epsilon_equals_clean_run() {
        let s = seq(12);
        let model = Model::default_seeded(1);
        let clean = run_sequence(&s, &RunOptions::clean(TrackerConfig::default())).unwrap();
        let zero = run_sequence(&s, &attacked(&model, 0.0, Schedule::AllFrames, AttackTarget::Both)).unwrap();
        assert_eq!(clean.results, zero.results);
        assert!(clean.results.iter().all(|r| r.is_tracked()));
    }

    #[test]
    fn rate_schedule_attacks_every_other_frame() {
        let s = seq(10);
        let model = Model::default_seeded(1);
        let out = run_sequence(&s, &attacked(&model, 0.01, Schedule::rate(1, 2).unwrap(), AttackTarget::Rgb)).unwrap();
        let flags: Vec<bool> = out.logs.iter().map(|l| l.attacked).collect();
        assert_eq!(flags, (0..10).map(|i| i % 2 == 0).collect::<Vec<_>>());
        assert_eq!(out.coverage.frame_fraction, 0.5);
        assert!(out.logs.iter().filter(|l| l.attacked).all(|l| l.rgb_labels.is_some()));
    }

    #[test]
    fn runs_are_deterministic_including_time_adaptive() {
        let s = seq(10);
        let model = Model::default_seeded(2);
        for schedule in [Schedule::AllFrames, Schedule::time_adaptive(Some(3)).unwrap()] {
            let opts = attacked(&model, 0.05, schedule, AttackTarget::Rgb);
            let a = run_sequence(&s, &opts).unwrap();
            let b = run_sequence(&s, &opts).unwrap();
            assert_eq!(a.results, b.results);
            assert_eq!(a.logs, b.logs);
        }
    }

    #[test]
    fn time_adaptive_follows_previous_frame_time() {
        let s = seq(16);
        let model = Model::default_seeded(2);
        let out = run_sequence(&s, &attacked(&model, 0.05, Schedule::time_adaptive(Some(4)).unwrap(), AttackTarget::Rgb)).unwrap();
        let mut state = SchedulerState::with_window(Some(4));
        for (i, log) in out.logs.iter().enumerate() {
            let expect = i > 0 && state.last().unwrap() > state.moving_average().unwrap();
            assert_eq!(log.attacked, expect, "frame {i}");
            state.record_execution_time(log.exec_time).unwrap();
        }
    }

    #[test]
    fn depth_attack_touches_only_depth() {
        let s = seq(6);
        let model = Model::default_seeded(1);
        let clean = run_sequence(&s, &RunOptions::clean(TrackerConfig::default())).unwrap();
        let out = run_sequence(&s, &attacked(&model, 0.10, Schedule::AllFrames, AttackTarget::Depth)).unwrap();
        assert!(out.logs.iter().all(|l| l.rgb_labels.is_none() && l.depth_labels.is_some()));
        // the bootstrap frame defines the origin; later poses move
        assert_eq!(out.results[0], clean.results[0]);
        assert_ne!(out.results, clean.results);
    }

    struct Empty;

    impl FrameSource for Empty {
        fn len(&self) -> usize {
            0
        }
        fn timestamp(&self, _: usize) -> f64 {
            unreachable!()
        }
        fn dimensions(&self) -> (usize, usize) {
            (32, 32)
        }
        fn intrinsics(&self) -> crate::geometry::Intrinsics {
            crate::geometry::Intrinsics::TUM_FR1
        }
        fn load(&self, _: usize) -> Result<(ImageFrame, DepthFrame)> {
            unreachable!()
        }
        fn ground_truth(&self) -> Option<Trajectory> {
            None
        }
    }

    #[test]
    fn empty_source_is_an_error() {
        let err = run_sequence(&Empty, &RunOptions::clean(TrackerConfig::default())).unwrap_err();
        assert!(matches!(err, Error::Insufficient(_)));
    }
}
