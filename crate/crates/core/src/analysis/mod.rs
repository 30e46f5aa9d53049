//! Performance metrics, learning-curve aggregation, and CSV/SVG export.

mod curves;
mod export;
mod metrics;

pub use curves::{aggregate_aligned, interpolate, interpolate_cost_curves, AggregateCurve, LearningCurve, XKind};
pub use export::{export_results, render_svg, write_csv, ExportedFiles, PlotSeries};
pub use metrics::{accuracy, auc, f1, metric_eval, Metric, Predictions};
