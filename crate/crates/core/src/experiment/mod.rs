//! Config-driven experiments: single runs, epsilon/schedule sweeps and
//! plot-ready outputs.

mod config;
mod plot;
mod runner;
mod sweep;

pub use config::{parse_synthetic_spec, DatasetConfig, DatasetSource, ExperimentConfig, Ini, SurrogateSource};
pub use plot::{
    attacked_spans, emit_plot_data, read_timeline, span_label, spans_csv, timeline_csv, trajectory2d_csv, PlotKind,
    Span, TimelineRow, TIMELINE_HEADER,
};
pub use runner::{run, write_atomic, FrameRecord, RunReport, Workspace, FRAMES_HEADER};
pub use sweep::{sweep, BaselineCache, CellSummary, SweepCell, SweepReport};
