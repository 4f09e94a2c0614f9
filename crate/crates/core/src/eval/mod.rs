//! User-weighted MAPE metrics, evaluation reports and the ablation harness.

pub mod ablation;
pub mod metrics;
pub mod report;

pub use ablation::{
    fingerprint, fit_holdout, run_ablation, run_cell, AblationCell, AblationGrid, AblationRow, AblationTable, HoldoutRun,
    InputMode,
};
pub use metrics::{mape, mape_a, mape_counted, mape_p, record_mape_a, PredictionRecord, EPSILON};
pub use report::{predict_records, recompose, write_plot_data, ChannelMetrics, EvalReport};
