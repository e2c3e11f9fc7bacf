//! Experiment driver: configuration, labeling, featurization, training,
//! evaluation, model comparison and the timing benchmark.

pub mod bench;
pub mod config;
pub mod data;
pub mod experiment;

pub use bench::{bench_csv, run_benchmark, BenchConfig, BenchRow};
pub use config::{ExperimentConfig, TargetMode};
pub use data::{build_frame, generate_labeled, label_objects, Frame, Label, LabelSet, LabeledSet};
pub use experiment::{
    compare_models, comparison_csv, prepare_data, run_experiment, run_on, score, write_artifacts, ComparisonRow,
    EvalReport, ExperimentRun, GroupMape, PreparedData, StageTimes,
};
