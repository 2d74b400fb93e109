//! Experiment configuration: a TOML document with the experiment kind, the
//! replicate count, the master seed, an optional output directory, and one
//! parameter table named after the experiment.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use creditlab::constructions::{BaseReward, CoverageSpec, GadgetSpec, RandomMdpSpec};
use creditlab::cpi::Estimator;
use creditlab::thought::{BufferConfig, BufferVariant, Localizer, Split};
use serde::{Deserialize, Serialize};

use crate::error::{config_err, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Tightness,
    Separation,
    Bounds,
    CpiCompare,
    SrpoToy,
    LocalizationQuality,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 6] = [
        ExperimentKind::Tightness,
        ExperimentKind::Separation,
        ExperimentKind::Bounds,
        ExperimentKind::CpiCompare,
        ExperimentKind::SrpoToy,
        ExperimentKind::LocalizationQuality,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Tightness => "tightness",
            ExperimentKind::Separation => "separation",
            ExperimentKind::Bounds => "bounds",
            ExperimentKind::CpiCompare => "cpi-compare",
            ExperimentKind::SrpoToy => "srpo-toy",
            ExperimentKind::LocalizationQuality => "localization-quality",
        }
    }

    /// What the experiment reproduces, used as its anchor in reports.
    pub fn anchor(self) -> &'static str {
        match self {
            ExperimentKind::Tightness => "sign failure of the random-reset advantage estimate on the one-step gadget",
            ExperimentKind::Separation => "sample-size scaling in coverage: random resets vs oracle resets",
            ExperimentKind::Bounds => "classical and credit-aware improvement lower bounds and the simulation TV bound",
            ExperimentKind::CpiCompare => "per-iteration exact improvement of CPI-CARO vs CPI-RR at matched samples",
            ExperimentKind::SrpoToy => "thought-level training: GRPO vs RRPO vs SRPO final success",
            ExperimentKind::LocalizationQuality => "localization audit: clean vs erroneous prefixes and per-token signal",
        }
    }

    /// The bundled default configuration.
    pub fn default_config_text(self) -> &'static str {
        match self {
            ExperimentKind::Tightness => include_str!("../configs/tightness.toml"),
            ExperimentKind::Separation => include_str!("../configs/separation.toml"),
            ExperimentKind::Bounds => include_str!("../configs/bounds.toml"),
            ExperimentKind::CpiCompare => include_str!("../configs/cpi-compare.toml"),
            ExperimentKind::SrpoToy => include_str!("../configs/srpo-toy.toml"),
            ExperimentKind::LocalizationQuality => include_str!("../configs/localization-quality.toml"),
        }
    }

    pub fn default_config(self) -> ExperimentConfig {
        ExperimentConfig::from_toml(self.default_config_text()).expect("bundled configs are valid")
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ExperimentKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| config_err(format!("unknown experiment `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub replicates: usize,
    pub master_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tightness: Option<TightnessParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub separation: Option<SeparationParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<BoundsParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cpi_compare: Option<CpiCompareParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub srpo_toy: Option<SrpoToyParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub localization_quality: Option<LocalizationParams>,
}

impl ExperimentConfig {
    /// Parse, fill in the experiment's parameter table with defaults, and validate.
    pub fn from_toml(text: &str) -> Result<Self> {
        let mut config: ExperimentConfig = toml::from_str(text)?;
        config.resolve()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// The resolved configuration as TOML; re-parsing it gives the same config.
    pub fn snapshot(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    fn resolve(&mut self) -> Result<()> {
        let present = [
            (ExperimentKind::Tightness, self.tightness.is_some()),
            (ExperimentKind::Separation, self.separation.is_some()),
            (ExperimentKind::Bounds, self.bounds.is_some()),
            (ExperimentKind::CpiCompare, self.cpi_compare.is_some()),
            (ExperimentKind::SrpoToy, self.srpo_toy.is_some()),
            (ExperimentKind::LocalizationQuality, self.localization_quality.is_some()),
        ];
        for (kind, is_set) in present {
            if is_set && kind != self.experiment {
                return Err(config_err(format!(
                    "parameter table for `{kind}` does not apply to experiment `{}`",
                    self.experiment
                )));
            }
        }
        match self.experiment {
            ExperimentKind::Tightness => {
                self.tightness.get_or_insert_with(Default::default);
            }
            ExperimentKind::Separation => {
                self.separation.get_or_insert_with(Default::default);
            }
            ExperimentKind::Bounds => {
                self.bounds.get_or_insert_with(Default::default);
            }
            ExperimentKind::CpiCompare => {
                self.cpi_compare.get_or_insert_with(Default::default);
            }
            ExperimentKind::SrpoToy => {
                self.srpo_toy.get_or_insert_with(Default::default);
            }
            ExperimentKind::LocalizationQuality => {
                self.localization_quality.get_or_insert_with(Default::default);
            }
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        match self.experiment {
            ExperimentKind::Tightness => self.tightness().validate(),
            ExperimentKind::Separation => self.separation().validate(),
            ExperimentKind::Bounds => self.bounds().validate(),
            ExperimentKind::CpiCompare => self.cpi_compare().validate(),
            ExperimentKind::SrpoToy => self.srpo_toy().validate(),
            ExperimentKind::LocalizationQuality => self.localization_quality().validate(),
        }
    }

    pub fn tightness(&self) -> TightnessParams {
        self.tightness.clone().unwrap_or_default()
    }
    pub fn separation(&self) -> SeparationParams {
        self.separation.clone().unwrap_or_default()
    }
    pub fn bounds(&self) -> BoundsParams {
        self.bounds.clone().unwrap_or_default()
    }
    pub fn cpi_compare(&self) -> CpiCompareParams {
        self.cpi_compare.clone().unwrap_or_default()
    }
    pub fn srpo_toy(&self) -> SrpoToyParams {
        self.srpo_toy.clone().unwrap_or_default()
    }
    pub fn localization_quality(&self) -> LocalizationParams {
        self.localization_quality.clone().unwrap_or_default()
    }
}

fn core<T>(r: creditlab::Result<T>) -> Result<T> {
    r.map_err(Error::from)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TightnessParams {
    pub num_actions: usize,
    pub r_max: f64,
    pub tau: f64,
    pub p: f64,
    pub epsilon: f64,
    /// Sample sizes to test; empty means powers of two from 16 up to the
    /// tightness limit, plus the limit itself.
    pub n_grid: Vec<usize>,
    /// Required `Pr(A_hat <= 0)` at every `n` up to the limit.
    pub min_failure_rate: f64,
}

impl Default for TightnessParams {
    fn default() -> Self {
        TightnessParams { num_actions: 4, r_max: 1.0, tau: 0.25, p: 0.1, epsilon: 0.001, n_grid: Vec::new(), min_failure_rate: 0.15 }
    }
}

impl TightnessParams {
    pub fn gadget(&self) -> GadgetSpec {
        GadgetSpec { num_actions: self.num_actions, r_max: self.r_max, tau: self.tau, p: self.p, epsilon: self.epsilon }
    }

    pub fn resolved_grid(&self) -> Vec<usize> {
        if !self.n_grid.is_empty() {
            return self.n_grid.clone();
        }
        let limit = self.gadget().tightness_limit().floor() as usize;
        let mut grid: Vec<usize> = (4..).map(|k| 1usize << k).take_while(|&n| n <= limit).collect();
        if grid.last() != Some(&limit) && limit >= 1 {
            grid.push(limit);
        }
        grid
    }

    fn validate(&self) -> Result<()> {
        core(self.gadget().validate())?;
        if self.n_grid.contains(&0) {
            return Err(config_err("tightness.n_grid entries must be positive"));
        }
        Ok(())
    }
}

/// Random MDPs with a controlled improvable-set coverage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoverageFamily {
    pub num_states: usize,
    pub num_actions: usize,
    pub horizon: usize,
    pub concentration: f64,
    pub tau: f64,
    pub gap_min: f64,
    pub gap_max: f64,
    pub off_gap: f64,
    pub tolerance: f64,
    pub base_reward: BaseReward,
}

impl Default for CoverageFamily {
    fn default() -> Self {
        CoverageFamily {
            num_states: 6,
            num_actions: 2,
            horizon: 3,
            concentration: 1.0,
            tau: 0.2,
            gap_min: 1.25,
            gap_max: 1.25,
            off_gap: 0.001,
            tolerance: 0.01,
            base_reward: BaseReward::Terminal { value: 0.75 },
        }
    }
}

impl CoverageFamily {
    pub fn spec(&self, target: f64) -> RandomMdpSpec {
        let mut coverage = CoverageSpec::new(target, self.tau);
        coverage.gap_min = self.gap_min;
        coverage.gap_max = self.gap_max;
        coverage.off_gap = self.off_gap;
        coverage.tolerance = self.tolerance;
        coverage.base_reward = self.base_reward;
        RandomMdpSpec {
            concentration: self.concentration,
            coverage: Some(coverage),
            ..RandomMdpSpec::new(self.num_states, self.num_actions, self.horizon)
        }
    }

    fn validate(&self, target: f64) -> Result<()> {
        core(self.spec(target).validate())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeparationParams {
    pub family: CoverageFamily,
    pub coverages: Vec<f64>,
    /// Grid `n_k = round(grid_start * 2^(k / grid_steps_per_doubling))`, `k < grid_points`.
    pub grid_start: f64,
    pub grid_steps_per_doubling: u32,
    pub grid_points: usize,
    /// Fraction of replicates with `A_hat >= target / 2` that defines `n*`.
    pub pass_fraction: f64,
    pub estimator: Estimator,
    pub use_exact_visitation: bool,
    pub rr_slope_min: f64,
    pub rr_slope_max: f64,
    pub caro_max_ratio: f64,
}

impl Default for SeparationParams {
    fn default() -> Self {
        SeparationParams {
            family: CoverageFamily::default(),
            coverages: vec![0.5, 0.25, 0.125],
            grid_start: 8.0,
            grid_steps_per_doubling: 4,
            grid_points: 81,
            pass_fraction: 0.9,
            estimator: Estimator::CrossFit,
            use_exact_visitation: true,
            rr_slope_min: -2.6,
            rr_slope_max: -1.4,
            caro_max_ratio: 2.0,
        }
    }
}

impl SeparationParams {
    /// Geometric grid with duplicates removed.
    pub fn grid(&self) -> Vec<usize> {
        let mut grid: Vec<usize> = (0..self.grid_points)
            .map(|k| (self.grid_start * 2f64.powf(k as f64 / self.grid_steps_per_doubling as f64)).round() as usize)
            .collect();
        grid.dedup();
        grid
    }

    fn validate(&self) -> Result<()> {
        if self.coverages.len() < 2 {
            return Err(config_err("separation.coverages needs at least two levels"));
        }
        for &c in &self.coverages {
            self.family.validate(c)?;
        }
        if !(self.grid_start >= 2.0) || self.grid_steps_per_doubling == 0 || self.grid_points == 0 {
            return Err(config_err("separation grid needs grid_start >= 2, grid_steps_per_doubling >= 1, grid_points >= 1"));
        }
        if !(self.pass_fraction > 0.0 && self.pass_fraction <= 1.0) {
            return Err(config_err("separation.pass_fraction must lie in (0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundsParams {
    pub max_states: usize,
    pub min_actions: usize,
    pub max_actions: usize,
    pub max_horizon: usize,
    pub concentration: f64,
    /// `tau` as a fraction of the largest advantage in the MDP.
    pub tau_fraction: f64,
    pub alpha_step: f64,
    /// Allowed floating-point error in the exact identities.
    pub identity_tolerance: f64,
    /// Allowed floating-point shortfall below zero for bound slacks.
    pub slack_tolerance: f64,
}

impl Default for BoundsParams {
    fn default() -> Self {
        BoundsParams {
            max_states: 8,
            min_actions: 2,
            max_actions: 4,
            max_horizon: 6,
            concentration: 1.0,
            tau_fraction: 0.5,
            alpha_step: 0.05,
            identity_tolerance: 1e-10,
            slack_tolerance: 0.0,
        }
    }
}

impl BoundsParams {
    fn validate(&self) -> Result<()> {
        if self.max_states == 0 || self.max_horizon == 0 || self.min_actions < 2 || self.max_actions < self.min_actions {
            return Err(config_err("bounds sizes need max_states, max_horizon >= 1 and 2 <= min_actions <= max_actions"));
        }
        if !(self.tau_fraction > 0.0 && self.tau_fraction <= 1.0) {
            return Err(config_err("bounds.tau_fraction must lie in (0, 1]"));
        }
        if !(self.alpha_step > 0.0 && self.alpha_step <= 1.0) {
            return Err(config_err("bounds.alpha_step must lie in (0, 1]"));
        }
        if !(self.concentration > 0.0) {
            return Err(config_err("bounds.concentration must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CpiCompareParams {
    pub family: CoverageFamily,
    pub target_coverage: f64,
    /// Samples per step, shared by both variants.
    pub n: usize,
    pub estimator: Estimator,
    pub use_exact_visitation: bool,
    /// Level of the one-sided paired t-test.
    pub significance: f64,
}

impl Default for CpiCompareParams {
    fn default() -> Self {
        CpiCompareParams {
            family: CoverageFamily::default(),
            target_coverage: 0.125,
            n: 200,
            estimator: Estimator::PlugIn,
            use_exact_visitation: true,
            significance: 0.01,
        }
    }
}

impl CpiCompareParams {
    fn validate(&self) -> Result<()> {
        self.family.validate(self.target_coverage)?;
        if self.n == 0 || (self.estimator == Estimator::CrossFit && self.n < 2) {
            return Err(config_err("cpi_compare.n is too small for the estimator"));
        }
        if !(self.significance > 0.0 && self.significance < 1.0) {
            return Err(config_err("cpi_compare.significance must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// Trap-step task and its initial policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThoughtSetup {
    pub branching: usize,
    pub depth: usize,
    pub prompts: usize,
    pub trap_min: usize,
    pub trap_max: usize,
    /// Initial logit penalty on each prompt's safe thought.
    pub bias: f64,
    pub noise: f64,
    pub temperature: f64,
}

impl Default for ThoughtSetup {
    fn default() -> Self {
        ThoughtSetup { branching: 3, depth: 5, prompts: 8, trap_min: 2, trap_max: 4, bias: 1.0, noise: 0.3, temperature: 1.0 }
    }
}

impl ThoughtSetup {
    fn validate(&self) -> Result<()> {
        if self.branching < 2 || self.depth == 0 || self.prompts == 0 {
            return Err(config_err("thought task needs branching >= 2, depth >= 1, prompts >= 1"));
        }
        if self.trap_min == 0 || self.trap_min > self.trap_max || self.trap_max > self.depth {
            return Err(config_err("thought task needs 1 <= trap_min <= trap_max <= depth"));
        }
        if !(self.temperature > 0.0) || !(self.noise >= 0.0) {
            return Err(config_err("thought policy needs temperature > 0 and noise >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SrpoToyParams {
    pub setup: ThoughtSetup,
    pub g: usize,
    pub split: Split,
    /// Localizer used by SRPO.
    pub localizer: Localizer,
    pub max_seed_attempts: usize,
    pub learning_rate: f64,
    pub updates: usize,
    /// Fraction of seeds on which SRPO must beat both baselines.
    pub min_win_fraction: f64,
}

impl Default for SrpoToyParams {
    fn default() -> Self {
        SrpoToyParams {
            setup: ThoughtSetup::default(),
            g: 4,
            split: Split::OneByG,
            localizer: Localizer::Oracle,
            max_seed_attempts: 16,
            learning_rate: 3.0,
            updates: 150,
            min_win_fraction: 2.0 / 3.0,
        }
    }
}

impl SrpoToyParams {
    pub fn buffer(&self, variant: BufferVariant) -> BufferConfig {
        BufferConfig { max_seed_attempts: self.max_seed_attempts, ..BufferConfig::new(self.g, variant, self.split, self.localizer) }
    }

    fn validate(&self) -> Result<()> {
        self.setup.validate()?;
        for v in [BufferVariant::Grpo, BufferVariant::Rrpo, BufferVariant::Srpo] {
            core(self.buffer(v).validate())?;
        }
        if !(self.learning_rate > 0.0) {
            return Err(config_err("srpo_toy.learning_rate must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LocalizationParams {
    pub setup: ThoughtSetup,
    pub g: usize,
    pub localizer: Localizer,
    /// Audited buffers per replicate.
    pub records: usize,
}

impl Default for LocalizationParams {
    fn default() -> Self {
        LocalizationParams {
            setup: ThoughtSetup::default(),
            g: 4,
            localizer: Localizer::Noisy { p_exact: 0.5, max_offset: 2 },
            records: 2000,
        }
    }
}

impl LocalizationParams {
    fn validate(&self) -> Result<()> {
        self.setup.validate()?;
        core(self.localizer.validate())?;
        if self.g < 2 || self.records == 0 {
            return Err(config_err("localization_quality needs g >= 2 and records >= 1"));
        }
        Ok(())
    }
}
