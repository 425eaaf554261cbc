//! Pipeline driver library behind the `driftrec` binary: configuration,
//! checkpoint container, pipeline commands, and a synthetic corpus
//! generator for tests and demos.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod synth;

pub use checkpoint::Checkpoint;
pub use commands::{
    cmd_ablate, cmd_embed, cmd_evaluate, cmd_prepare, cmd_sweep, cmd_train, Artifacts, SweepAxis,
};
pub use config::RunConfig;

/// Machine-parsable error category for the CLI contract.
pub fn error_category(err: &driftrec_core::CoreError) -> (&'static str, i32) {
    use driftrec_core::CoreError::*;
    match err {
        Io { .. } => ("io", 3),
        Parse { .. } => ("parse", 4),
        InvalidConfig(_) => ("config", 2),
        EmptyInput(_) | Data(_) => ("data", 5),
        IndexOutOfRange { .. } | ShapeMismatch { .. } | DimMismatch { .. } => ("shape", 6),
        Numeric(_) => ("numeric", 7),
    }
}
