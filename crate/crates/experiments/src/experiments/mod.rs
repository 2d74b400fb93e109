//! One module per experiment. Each turns a config into tables, checks and
//! plot specifications; the runner writes them out.

use creditlab::rng::SeedTree;

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::error::Result;
use crate::plot::PlotSpec;
use crate::table::{Check, Table};

pub mod bounds;
pub mod cpi_compare;
pub mod localization;
pub mod separation;
pub mod srpo_toy;
pub mod tightness;

#[derive(Debug, Clone, Default)]
pub struct ExperimentOutput {
    pub replicates: Table,
    pub aggregate: Table,
    /// Additional named tables, written as `<name>.csv`.
    pub extra: Vec<(String, Table)>,
    pub checks: Vec<Check>,
    pub plots: Vec<PlotSpec>,
}

pub fn run(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    match config.experiment {
        ExperimentKind::Tightness => tightness::run(config),
        ExperimentKind::Separation => separation::run(config),
        ExperimentKind::Bounds => bounds::run(config),
        ExperimentKind::CpiCompare => cpi_compare::run(config),
        ExperimentKind::SrpoToy => srpo_toy::run(config),
        ExperimentKind::LocalizationQuality => localization::run(config),
    }
}

/// Root of the seed tree for a config: `SeedTree::new(master_seed)`.
/// Replicate `r` draws from `root.named(<stream>).child(r)` (plus further
/// labelled children), so results do not depend on execution order.
pub(crate) fn seed_root(config: &ExperimentConfig) -> SeedTree {
    SeedTree::new(config.master_seed)
}
