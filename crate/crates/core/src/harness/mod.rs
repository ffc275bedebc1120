//! Experiment configuration, orchestration and result files.

mod config;
mod experiments;
mod methods;
mod report;
mod verify;

pub use config::{
    csl_roster, synth_roster, BenchConfig, ExperimentConfig, FeatureSource, MethodSpec, ModelKind, ModelSpec, Task,
    VerifyConfig,
};
pub use experiments::{
    d_sweep_checks, run, run_bench_scaling, run_csl, run_d_sweep, run_synth_sweep, synth_checks, time_eigenbasis,
    TRAIN_SIZE_NOTE,
};
pub use methods::{build_model, graph_eigenbasis, node_input, sub_seed, train_node_method, truncate_basis};
pub use report::{mean_std, repetition_seeds, summarize, BenchRow, Check, Manifest, Report, ResultRow, SummaryRow};
pub use verify::{
    bounds_check, bounds_graph, equivariance_suite, gradient_error, gradient_suite, limit_check, mixed_graph,
    oracle_check, run_verify,
};
