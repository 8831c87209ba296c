//! Experiment configuration and the generate / train / detect / report
//! pipelines behind the command-line tool.

mod commands;
mod config;
mod pipeline;

pub use commands::{
    cmd_detect, cmd_evaluate, cmd_generate, cmd_report, cmd_train_central, cmd_train_fed,
    load_reference, Evaluation, ReferenceMeta, CENTRAL_REPORT, FED_REPORT, REFERENCE_LABELS,
    REFERENCE_META,
};
pub use config::{
    AnnotationSection, DataSection, DataSource, DetectSection, ExperimentConfig, FlSection,
    ModelSection,
};
pub use pipeline::{
    load_sw_graph, prepare_data, resolve_detector, similarity_series, train_central,
    train_federated, CentralRun, EdgeMode, FedRun, PreparedData,
};
