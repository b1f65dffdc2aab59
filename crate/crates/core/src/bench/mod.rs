//! Benchmark datasets, the three sensing tasks and parameter sweeps.
//!
//! Each repeat simulates one reference ensemble and one perturbed ensemble
//! per sample on a shared reservoir realisation, then fits the linear and
//! network readouts on the same features.

mod dataset;
mod sweep;
mod task;

pub use dataset::{
    classification_label, confusion_matrix, generate_dataset, generate_dataset_with, Dataset,
    GridOptions, Label, Sample, Task, CAT_AMPLITUDE, CAT_PHASE, CAT_REGION, COHERENT_AMPLITUDE,
    COHERENT_PHASE, N_CLASSES, SQUEEZED_REGION, SQUEEZE_MAGNITUDE, SQUEEZE_PHASE,
};
pub use sweep::{sweep, RepeatSeeds, Series, SweepAxis, SweepBase, SweepCell};
pub use task::{
    default_hidden, evaluate_readout, features_from_responses, fit_readout, mean_std, run_readouts,
    run_task, simulate_features, simulate_responses, source_seed, FeatureSet, FittedReadout,
    Predictions, Readout, ReadoutModel, ReadoutOptions, Responses, TaskResult,
};
