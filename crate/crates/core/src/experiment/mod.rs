//! Splits, training, metrics, early detection and evidence analyses.

mod analysis;
mod metrics;
mod report;
mod run;
mod split;
mod train;

pub use analysis::{
    early_detection_curve, evidence_count_sweep, evidence_distribution, prepare_all, refutes_probability,
    EvidenceDistribution, RefutesReport, SweepPoint, EARLY_COUNTS,
};
pub use metrics::{compute_metrics, Metrics};
pub use report::{curve_csv, metric_records, metrics_table, write_jsonl, write_text, MetricRecord};
pub use run::{
    event_texts, make_checkpoint, model_from_checkpoint, split_events, train_options, train_run, vocab_from_events,
    TrainedRun, CHECKPOINT_FILE, CONFIG_FILE, LOG_FILE, METRICS_FILE, METRICS_TABLE_FILE, SPLIT_FILE, VOCAB_FILE,
};
pub use split::{split_dataset, split_sizes, Split};
pub use train::{evaluate, evaluate_with_loss, predict_all, train, EpochLog, TrainOptions, TrainOutcome};
