//! Post-run analytics.

pub mod metrics;
pub mod oracle;
pub mod series;
pub mod shapley;
pub mod stats;

pub use metrics::{binned_metrics, BinMetrics, BinnedReport, RoutedTask};
pub use oracle::{diagnose, oracle_route, Category, ConfusionMatrix, Diagnostics, EvalEntry, EvalMatrix, RoutingDiagnosis};
pub use series::{cumulative_selection, mean_series, running_share};
pub use shapley::{shapley, shapley_from_table, ShapleyReport, MAX_PLAYERS};
pub use stats::{bootstrap_ci, mean, one_sample_t, std_dev, Interval, TTest};
