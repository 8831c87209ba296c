//! Telemetry panels: synthetic generation, CSV ingestion, robust scaling,
//! fault injection and sliding-window batching.

mod annotate;
mod panel;
mod scale;
pub mod synth;
mod window;

pub use annotate::{
    annotate, AmplitudeMap, Annotated, AnnotationConfig, AnnotationReport, CellRule, Scenario,
};
pub use panel::{
    format_timestamp, parse_timestamp, LabelSet, TimeSeriesPanel, DEFAULT_START,
    DEFAULT_STEP_SECONDS,
};
pub use scale::{
    median_iqr, quantile_sorted, robust_scale, robust_std, ScalerParams, IQR_FLOOR, NORMAL_IQR,
};
pub use synth::{generate_synthetic_panel, synthetic_cells, SynthProfile, SyntheticPanel};
pub use window::{
    assemble_batches, num_windows, shuffle_refs, training_batches, window_refs, window_split,
    WindowBatch, WindowRef,
};
