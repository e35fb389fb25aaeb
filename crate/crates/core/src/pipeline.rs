//! Acquisition, reconstruction and scoring of one configured run.

use crate::acquisition::{run_and_reconstruct, RunOptions, RunStats};
use crate::analysis::{compute_metrics, MetricsReport};
use crate::config::RunConfig;
use crate::error::Result;
use crate::reconstruction::GhostImage;

#[derive(Debug, Clone)]
pub struct Simulation {
    pub ghost: GhostImage,
    /// Unobstructed-beam image for the field width.
    pub field: GhostImage,
    pub stats: RunStats,
    pub metrics: MetricsReport,
    /// Why any metric is missing.
    pub notes: Vec<String>,
}

/// Runs the masked acquisition and its open-beam companion, then scores it.
pub fn simulate(cfg: &RunConfig, ghost_opts: RunOptions<'_>, field_opts: RunOptions<'_>) -> Result<Simulation> {
    let (mut ghost, stats) = run_and_reconstruct(&cfg.experiment, cfg.threshold, ghost_opts)?;
    ghost.meta.config_echo = Some(cfg.echo());
    let (field, _) = run_and_reconstruct(&cfg.open_beam()?, cfg.threshold, field_opts)?;
    let (metrics, notes) = compute_metrics(&ghost, Some(&field), Some(&stats), &cfg.experiment, &cfg.analysis);
    Ok(Simulation {
        ghost,
        field,
        stats,
        metrics,
        notes,
    })
}
