//! Experiment orchestration: seeded deterministic runs, hyper-parameter
//! grids, per-episode metrics with CSV persistence, SVG plot emission, and
//! the small analysis helpers the plots are built from.

mod config;
mod grid;
mod metrics;
mod plot;
mod runner;

pub use config::{AgentMode, ExperimentConfig};
pub use grid::{grid_search, GridSpec, RankedCell};
pub use metrics::{
    moving_average, plotted_reward, read_metrics_csv, visit_frequency, write_metrics_csv,
    MetricsRow,
};
pub use plot::{emit_plot, render_bar_chart, render_line_plot, render_scatter, PlotKind, Series};
pub use runner::{run_experiment, run_experiment_with, RunOutcome};

use std::path::PathBuf;

use thiserror::Error;

use crate::agents::AgentsError;
use crate::envs::{EnvError, EnvId};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config line {line}: {reason}")]
    BadConfig { line: usize, reason: String },
    #[error("config key {key}: {reason}")]
    BadValue { key: String, reason: String },
    #[error("missing required config key {0}")]
    MissingKey(&'static str),
    #[error("agent mode {agent} cannot run on {env}: {reason}")]
    IncompatibleAgent {
        agent: String,
        env: String,
        reason: String,
    },
    #[error("non-finite value encountered in episode {episode}")]
    NonFinite { episode: usize },
    #[error("visit frequency requires a chain run; {0} has no visit bitmaps")]
    NoVisitBitmaps(EnvId),
    #[error("metrics file {path} is missing column {column}")]
    MissingColumn { path: PathBuf, column: String },
    #[error("malformed metrics row {row} in {path}: {reason}")]
    BadMetricsRow {
        path: PathBuf,
        row: usize,
        reason: String,
    },
    #[error("empty grid")]
    EmptyGrid,
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Agents(#[from] AgentsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, HarnessError>;

/// `sum_t gamma^t r_t`.
pub fn discounted_return(rewards: &[f64], gamma: f64) -> f64 {
    debug_assert!(gamma > 0.0 && gamma <= 1.0);
    let mut total = 0.0;
    for &r in rewards.iter().rev() {
        total = r + gamma * total;
    }
    total
}
