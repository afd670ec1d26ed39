use thiserror::Error;

use crate::dynamics::State;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("argument outside the domain: {0}")]
    Domain(String),

    /// A non-finite value appeared while assembling the vector field.
    #[error("non-finite value in mode {mode}")]
    Overflow { mode: usize },

    /// The step could not be completed at the requested size; retry smaller.
    #[error("step rejected: {0}")]
    StepRejected(String),

    #[error("step size {dt:e} fell below dt_min at t = {}", state.t)]
    StepTooSmall { dt: f64, state: Box<State> },

    /// Hard failure of a time integration. `last_sampled` is the most recent
    /// state that was handed to the diagnostics sink.
    #[error("integration failed at t = {t}: {source}")]
    Integration {
        t: f64,
        #[source]
        source: Box<Error>,
        last_sampled: Option<Box<State>>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("config parse error: {0}")]
    TomlDe(#[from] toml::de::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
