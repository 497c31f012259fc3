//! Plot-ready CSV derived from report directories.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::config::ExperimentConfig;
use super::runner::write_atomic;
use crate::dataset::parse_groundtruth;
use crate::error::{Error, Result};
use crate::geometry::Pose;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    Trajectory2d,
    Timeline,
}

impl FromStr for PlotKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "trajectory2d" => Ok(PlotKind::Trajectory2d),
            "timeline" => Ok(PlotKind::Timeline),
            other => Err(Error::Config(format!("unknown plot kind {other:?}"))),
        }
    }
}

/// `series,index,timestamp,x,y` with each series re-expressed relative to
/// its own first pose; the third coordinate is dropped.
pub fn trajectory2d_csv(series: &[(&str, &[(f64, Pose)])]) -> String {
    let mut out = String::from("series,index,timestamp,x,y\n");
    for (name, poses) in series {
        let Some((_, first)) = poses.first() else { continue };
        let origin = first.inverse();
        for (i, (t, p)) in poses.iter().enumerate() {
            let rel = origin.compose(p).translation;
            let _ = writeln!(out, "{name},{i},{t:.6},{:.9},{:.9}", rel.x, rel.y);
        }
    }
    out
}

/// One timeline sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimelineRow {
    pub frame: usize,
    pub timestamp: f64,
    pub exec_time: f64,
    pub moving_avg: f64,
    pub ate: Option<f64>,
    pub attacked: bool,
}

pub const TIMELINE_HEADER: &str = "frame,exec_time,moving_avg,ate,attacked";

pub fn timeline_csv(rows: &[TimelineRow]) -> String {
    let mut out = format!("{TIMELINE_HEADER}\n");
    for r in rows {
        let ate = r.ate.map(|e| format!("{e:.9}")).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{:.9},{:.9},{ate},{}",
            r.frame,
            r.exec_time,
            r.moving_avg,
            u8::from(r.attacked)
        );
    }
    out
}

/// Maximal run of consecutive attacked frames.
#[derive(Debug, Clone, PartialEq)]
pub struct Span {
    pub label: String,
    pub start_frame: usize,
    pub end_frame: usize,
    pub start_time: f64,
    pub end_time: f64,
}

/// `A`, `B`, ..., `Z`, `AA`, `AB`, ...
pub fn span_label(mut n: usize) -> String {
    let mut s = Vec::new();
    loop {
        s.push(b'A' + (n % 26) as u8);
        if n < 26 {
            break;
        }
        n = n / 26 - 1;
    }
    s.reverse();
    String::from_utf8(s).expect("ascii")
}

/// Contiguous attacked spans, in frame order. Rows must be consecutive
/// frames.
pub fn attacked_spans(rows: &[TimelineRow]) -> Vec<Span> {
    let mut spans: Vec<Span> = Vec::new();
    let mut open = false;
    for r in rows {
        match (r.attacked, open) {
            (true, true) => {
                let s = spans.last_mut().expect("open span");
                s.end_frame = r.frame;
                s.end_time = r.timestamp;
            }
            (true, false) => spans.push(Span {
                label: span_label(spans.len()),
                start_frame: r.frame,
                end_frame: r.frame,
                start_time: r.timestamp,
                end_time: r.timestamp,
            }),
            _ => {}
        }
        open = r.attacked;
    }
    spans
}

pub fn spans_csv(spans: &[Span]) -> String {
    let mut out = String::from("span,start_frame,end_frame,start_time,end_time,frames\n");
    for s in spans {
        let _ = writeln!(
            out,
            "{},{},{},{:.6},{:.6},{}",
            s.label,
            s.start_frame,
            s.end_frame,
            s.start_time,
            s.end_time,
            s.end_frame - s.start_frame + 1
        );
    }
    out
}

/// Read the timeline columns from a report's `frames.csv`.
pub fn read_timeline(path: &Path) -> Result<Vec<TimelineRow>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap_or_default().split(',').collect();
    let col = |name: &str| {
        header.iter().position(|h| *h == name).ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            msg: format!("missing column {name:?}"),
        })
    };
    let idx = [
        col("frame")?,
        col("timestamp")?,
        col("exec_time")?,
        col("moving_avg")?,
        col("ate")?,
        col("attacked")?,
    ];
    let mut rows = Vec::new();
    for (n, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        let bad = |what: &str| Error::Parse {
            path: path.to_path_buf(),
            line: n + 2,
            msg: format!("bad {what}"),
        };
        let get = |i: usize| fields.get(i).copied().unwrap_or("");
        let num = |i: usize, what: &str| get(i).parse::<f64>().map_err(|_| bad(what));
        rows.push(TimelineRow {
            frame: get(idx[0]).parse().map_err(|_| bad("frame"))?,
            timestamp: num(idx[1], "timestamp")?,
            exec_time: num(idx[2], "exec_time")?,
            moving_avg: num(idx[3], "moving_avg")?,
            ate: match get(idx[4]) {
                "" => None,
                s => Some(s.parse().map_err(|_| bad("ate"))?),
            },
            attacked: match get(idx[5]) {
                "0" => false,
                "1" => true,
                _ => return Err(bad("attacked")),
            },
        });
    }
    Ok(rows)
}

/// Write plot data for the report in `report` into `out_dir`; returns the
/// files written.
///
/// `trajectory2d` writes `trajectory2d.csv` with the estimated series: the
/// clean run (the report itself when it has no attack, otherwise its
/// `baseline/` companion if present) and the attacked run. The ground
/// truth goes to `trajectory2d_groundtruth.csv` in the same schema.
/// `timeline` writes `timeline.csv` and `timeline_spans.csv`.
pub fn emit_plot_data(report: &Path, kind: PlotKind, out_dir: &Path) -> Result<Vec<PathBuf>> {
    match kind {
        PlotKind::Trajectory2d => {
            let config = ExperimentConfig::load(&report.join("config.ini"))?;
            let gt = parse_groundtruth(&report.join("groundtruth.txt"))?;
            let own = parse_groundtruth(&report.join("trajectory.txt"))?;
            let baseline_path = report.join("baseline").join("trajectory.txt");
            let mut series: Vec<(&str, &[(f64, Pose)])> = Vec::new();
            let baseline;
            if config.attack.is_none() {
                series.push(("baseline", &own));
            } else {
                if baseline_path.exists() {
                    baseline = parse_groundtruth(&baseline_path)?;
                    series.push(("baseline", &baseline));
                }
                series.push(("attacked", &own));
            }
            let path = out_dir.join("trajectory2d.csv");
            let gt_path = out_dir.join("trajectory2d_groundtruth.csv");
            write_atomic(&path, trajectory2d_csv(&series).as_bytes())?;
            write_atomic(&gt_path, trajectory2d_csv(&[("groundtruth", &gt)]).as_bytes())?;
            Ok(vec![path, gt_path])
        }
        PlotKind::Timeline => {
            let rows = read_timeline(&report.join("frames.csv"))?;
            let timeline = out_dir.join("timeline.csv");
            let spans = out_dir.join("timeline_spans.csv");
            write_atomic(&timeline, timeline_csv(&rows).as_bytes())?;
            write_atomic(&spans, spans_csv(&attacked_spans(&rows)).as_bytes())?;
            Ok(vec![timeline, spans])
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;

    fn row(frame: usize, attacked: bool) -> TimelineRow {
        TimelineRow {
            frame,
            timestamp: frame as f64 * 0.1,
            exec_time: 0.01,
            moving_avg: 0.01,
            ate: Some(0.001),
            attacked,
        }
    }

    #[test]
    fn spans_follow_attacked_runs() {
        let flags = [false, true, true, false, true, false, false, true];
        let rows: Vec<TimelineRow> = flags.iter().enumerate().map(|(i, a)| row(i, *a)).collect();
        let spans = attacked_spans(&rows);
        let got: Vec<(&str, usize, usize)> = spans.iter().map(|s| (s.label.as_str(), s.start_frame, s.end_frame)).collect();
        assert_eq!(got, [("A", 1, 2), ("B", 4, 4), ("C", 7, 7)]);
        assert!(attacked_spans(&rows[..1]).is_empty());
        assert_eq!(spans_csv(&spans).lines().count(), 4);
    }

    #[test]
    fn span_labels() {
        let got: Vec<String> = [0, 1, 25, 26, 27, 51, 52, 701, 702].iter().map(|n| span_label(*n)).collect();
        assert_eq!(got, ["A", "B", "Z", "AA", "AB", "AZ", "BA", "ZZ", "AAA"]);
    }

    #[test]
    fn trajectories_start_at_origin() {
        let start = Pose::from_axis_angle(Vector3::new(0.0, 0.0, 0.5), Vector3::new(1.0, 2.0, 3.0));
        let step = Pose::new(nalgebra::Matrix3::identity(), Vector3::new(0.1, 0.0, 0.7));
        let poses = vec![(0.0, start), (1.0, start.compose(&step))];
        let csv = trajectory2d_csv(&[("a", &poses)]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[1], "a,0,0.000000,0.000000000,0.000000000");
        assert_eq!(lines[2], "a,1,1.000000,0.100000000,0.000000000");
    }

    #[test]
    fn timeline_round_trips_through_csv() {
        let dir = tempfile::tempdir().unwrap();
        let rows = vec![row(0, false), row(1, true)];
        let mut csv = String::from("frame,timestamp,attacked,exec_time,moving_avg,ate,extra\n");
        for r in &rows {
            csv += &format!("{},{},{},{},{},{},x\n", r.frame, r.timestamp, u8::from(r.attacked), r.exec_time, r.moving_avg, r.ate.unwrap());
        }
        let path = dir.path().join("frames.csv");
        fs::write(&path, csv).unwrap();
        assert_eq!(read_timeline(&path).unwrap(), rows);
        let out = timeline_csv(&rows);
        assert_eq!(out.lines().next().unwrap(), TIMELINE_HEADER);
    }
}
