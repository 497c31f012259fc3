//! Per-frame attack decisions and attack regions.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use crate::dataset::{PixelRect, RegionSet};
use crate::error::{Error, Result};

pub const DEFAULT_TIME_WINDOW: usize = 30;
/// Maximum timestamp difference when looking up a frame's regions, seconds.
pub const DEFAULT_REGION_TOLERANCE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schedule {
    AllFrames,
    /// Attack `num` out of every `den` frames, the first `num` of each block.
    Rate { num: u32, den: u32 },
    /// Attack frame `i` when frame `i - 1` took longer than the moving
    /// average of recent execution times. `None` averages over every frame.
    TimeAdaptive { window: Option<usize> },
    /// Attack only frames with detection regions, and only inside them.
    SpatiallyAdaptive,
}

/// Where in a frame the attack applies.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AttackArea {
    Full,
    Boxes(Vec<PixelRect>),
}

impl AttackArea {
    pub fn is_empty(&self) -> bool {
        matches!(self, AttackArea::Boxes(b) if b.is_empty())
    }

    /// Per-pixel mask, `None` for the full frame.
    pub fn mask(&self, width: usize, height: usize) -> Option<Vec<bool>> {
        match self {
            AttackArea::Full => None,
            AttackArea::Boxes(rects) => Some(crate::dataset::union_mask(rects, width, height)),
        }
    }

    pub fn pixel_fraction(&self, width: usize, height: usize) -> f64 {
        match self.mask(width, height) {
            None => 1.0,
            Some(m) => m.iter().filter(|b| **b).count() as f64 / m.len() as f64,
        }
    }
}

fn gcd(mut a: u32, mut b: u32) -> u32 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

impl Schedule {
    pub fn rate(num: u32, den: u32) -> Result<Self> {
        if num == 0 || den == 0 || num > den {
            return Err(Error::InvalidArgument(format!("rate {num}/{den} outside (0, 1]")));
        }
        let g = gcd(num, den);
        Ok(Schedule::Rate {
            num: num / g,
            den: den / g,
        })
    }

    pub fn time_adaptive(window: Option<usize>) -> Result<Self> {
        if window == Some(0) {
            return Err(Error::InvalidArgument("time-adaptive window must be >= 1".into()));
        }
        Ok(Schedule::TimeAdaptive { window })
    }

    /// Whether the decision for a frame depends on earlier frames' timing.
    pub fn needs_timing(&self) -> bool {
        matches!(self, Schedule::TimeAdaptive { .. })
    }

    pub fn new_state(&self) -> SchedulerState {
        match self {
            Schedule::TimeAdaptive { window } => SchedulerState::with_window(*window),
            _ => SchedulerState::with_window(Some(DEFAULT_TIME_WINDOW)),
        }
    }

    /// Attack area for a frame: the frame's boxes under the spatial
    /// schedule (possibly none), the full frame otherwise.
    pub fn regions_for(
        &self,
        timestamp: f64,
        regions: Option<&RegionSet>,
        tolerance: f64,
        width: usize,
        height: usize,
    ) -> AttackArea {
        match self {
            Schedule::SpatiallyAdaptive => AttackArea::Boxes(
                regions.map_or_else(Vec::new, |r| r.rects_at(timestamp, tolerance, width, height)),
            ),
            _ => AttackArea::Full,
        }
    }

    /// `state` must contain every frame before `index`.
    pub fn should_attack(&self, state: &SchedulerState, index: usize, area: &AttackArea) -> bool {
        match *self {
            Schedule::AllFrames => true,
            // evenly spread: frame i is attacked when (i·p mod q) < p, which
            // keeps every prefix count at floor or ceil of n·p/q
            Schedule::Rate { num, den } => (index as u64 * u64::from(num)) % u64::from(den) < u64::from(num),
            Schedule::TimeAdaptive { .. } => match (state.last(), state.moving_average()) {
                (Some(last), Some(avg)) => index > 0 && last > avg,
                _ => false,
            },
            Schedule::SpatiallyAdaptive => !area.is_empty(),
        }
    }
}

impl fmt::Display for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Schedule::AllFrames => write!(f, "all"),
            Schedule::Rate { num, den } => write!(f, "rate:{num}/{den}"),
            Schedule::TimeAdaptive { window: Some(w) } => write!(f, "time:{w}"),
            Schedule::TimeAdaptive { window: None } => write!(f, "time:inf"),
            Schedule::SpatiallyAdaptive => write!(f, "spatial"),
        }
    }
}

impl FromStr for Schedule {
    type Err = Error;

    /// `all`, `rate:p/q` (or `rate:1`), `time`, `time:N`, `time:inf`, `spatial`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::Config(format!("unknown schedule {s:?}"));
        let (kind, arg) = s.split_once(':').map_or((s, None), |(k, a)| (k, Some(a.trim())));
        match (kind, arg) {
            ("all", None) => Ok(Schedule::AllFrames),
            ("spatial", None) => Ok(Schedule::SpatiallyAdaptive),
            ("rate", Some(a)) => {
                let (p, q) = a.split_once('/').unwrap_or((a, "1"));
                let p = p.trim().parse().map_err(|_| bad())?;
                let q = q.trim().parse().map_err(|_| bad())?;
                Schedule::rate(p, q)
            }
            ("time", None) => Schedule::time_adaptive(Some(DEFAULT_TIME_WINDOW)),
            ("time", Some("inf")) => Schedule::time_adaptive(None),
            ("time", Some(a)) => Schedule::time_adaptive(Some(a.parse().map_err(|_| bad())?)),
            _ => Err(bad()),
        }
    }
}

/// Recent per-frame execution times.
#[derive(Debug, Clone, PartialEq)]
pub struct SchedulerState {
    window: Option<usize>,
    times: VecDeque<f64>,
    frames: usize,
}

impl SchedulerState {
    /// `None` keeps every time (cumulative average).
    pub fn with_window(window: Option<usize>) -> Self {
        SchedulerState {
            window: window.map(|w| w.max(1)),
            times: VecDeque::new(),
            frames: 0,
        }
    }

    pub fn record_execution_time(&mut self, seconds: f64) -> Result<()> {
        if !(seconds >= 0.0) || !seconds.is_finite() {
            return Err(Error::InvalidArgument(format!("execution time {seconds}")));
        }
        if self.window.is_some_and(|w| self.times.len() == w) {
            self.times.pop_front();
        }
        self.times.push_back(seconds);
        self.frames += 1;
        Ok(())
    }

    /// Number of frames recorded so far.
    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn buffer(&self) -> impl Iterator<Item = f64> + '_ {
        self.times.iter().copied()
    }

    pub fn last(&self) -> Option<f64> {
        self.times.back().copied()
    }

    /// Mean of the buffered times.
    pub fn moving_average(&self) -> Option<f64> {
        (!self.times.is_empty()).then(|| self.times.iter().sum::<f64>() / self.times.len() as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoverageStats {
    pub attacked_frames: usize,
    pub total_frames: usize,
    /// Attacked frames over all frames.
    pub frame_fraction: f64,
    /// Mean attacked-pixel fraction over attacked frames (0 when none).
    pub pixel_fraction: f64,
}

/// Frame and pixel coverage of a schedule over a sequence.
///
/// Static schedules are evaluated directly. Time-adaptive decisions depend
/// on a run's timing, so they must be supplied through `observed`, which
/// otherwise overrides the simulated decisions.
pub fn coverage_stats(
    schedule: &Schedule,
    timestamps: &[f64],
    regions: Option<&RegionSet>,
    tolerance: f64,
    dimensions: (usize, usize),
    observed: Option<&[bool]>,
) -> Result<CoverageStats> {
    let (w, h) = dimensions;
    if let Some(obs) = observed {
        if obs.len() != timestamps.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} decisions", timestamps.len()),
                actual: obs.len().to_string(),
            });
        }
    } else if schedule.needs_timing() {
        return Err(Error::InvalidArgument(
            "time-adaptive coverage needs the observed decisions".into(),
        ));
    }
    let state = SchedulerState::with_window(None);
    let mut attacked = 0;
    let mut pixel_sum = 0.0;
    for (i, &t) in timestamps.iter().enumerate() {
        let area = schedule.regions_for(t, regions, tolerance, w, h);
        let hit = match observed {
            Some(obs) => obs[i],
            None => schedule.should_attack(&state, i, &area),
        };
        if hit {
            attacked += 1;
            pixel_sum += area.pixel_fraction(w, h);
        }
    }
    let n = timestamps.len();
    Ok(CoverageStats {
        attacked_frames: attacked,
        total_frames: n,
        frame_fraction: if n == 0 { 0.0 } else { attacked as f64 / n as f64 },
        pixel_fraction: if attacked == 0 { 0.0 } else { pixel_sum / attacked as f64 },
    })
}
