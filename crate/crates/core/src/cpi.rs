//! Conservative policy iteration with random resets (RR) or with a
//! credit-assignment reset oracle (CARO).
//!
//! One step runs three phases:
//!
//! 1. draw `n` resets (on-policy for RR, improvable-set restricted for CARO),
//!    a uniform action at each, and one Q rollout per sample;
//! 2. fit Q by tabular least squares (per-cell means), take the empirical
//!    greedy policy, and form the plug-in advantage estimate
//!    `A_hat = (1/n) sum_i |Y| (pi_hat_plus(y_i|x_i) - pi(y_i|x_i)) Q_hat(x_i, y_i, h_i)`;
//! 3. step toward the greedy policy with `alpha = min(1, A_hat / (c H^2 R_max))`,
//!    `c = 1` for RR and `c = 2` for CARO. CARO applies the mixture only on the
//!    improvable set.
//!
//! A non-positive `A_hat` does not give a valid mixture coefficient; the step
//! is then a flagged no-op.

use std::fmt;

use ndarray::Array3;
use serde::{Deserialize, Serialize};

use crate::error::{param_err, Result};
use crate::mdp::Mdp;
use crate::oracle::{expected_return, improvable_stats, ImprovableStats};
use crate::policy::{credit_greedy, greedy_from_q, mixture, Policy};
use crate::sampling::{q_rollout_unchecked, CreditSampler, ResetSample, ResetSampler};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Random (on-policy) resets, update on all states.
    Rr,
    /// Oracle-targeted resets, update on the improvable set only.
    Caro,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Rr => "rr",
            Variant::Caro => "caro",
        })
    }
}

/// How the greedy policy and `A_hat` share the Phase-1 samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    /// Greedy policy and `A_hat` both from all `n` samples.
    #[default]
    PlugIn,
    /// Greedy policy from the first `ceil(n/2)` samples, `A_hat` from the rest.
    /// Removes the selection bias of evaluating a policy on the data that chose it.
    CrossFit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpiConfig {
    pub variant: Variant,
    pub tau: f64,
    /// Number of Q samples per step.
    pub n: usize,
    pub seed: u64,
    /// Fitted value for cells with no samples.
    #[serde(default)]
    pub default_q: f64,
    /// Rejection budget per CARO draw; `None` uses the pilot-based default.
    #[serde(default)]
    pub max_trials: Option<usize>,
    #[serde(default)]
    pub use_exact_visitation: bool,
    #[serde(default)]
    pub estimator: Estimator,
}

impl CpiConfig {
    pub fn new(variant: Variant, tau: f64, n: usize) -> Self {
        Self {
            variant,
            tau,
            n,
            seed: 0,
            default_q: 0.0,
            max_trials: None,
            use_exact_visitation: false,
            estimator: Estimator::PlugIn,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(param_err("n", self.n, "must be at least 1"));
        }
        if self.estimator == Estimator::CrossFit && self.n < 2 {
            return Err(param_err("n", self.n, "cross-fitting needs at least 2 samples"));
        }
        if !(self.tau > 0.0) {
            return Err(param_err("tau", self.tau, "must be positive"));
        }
        Ok(())
    }
}

/// Tabular least-squares fit: per-cell sample means, `default_q` elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct QFit {
    pub q: Array3<f64>,
    pub counts: Array3<usize>,
}

impl QFit {
    pub fn value(&self, step: usize, state: usize, action: usize) -> f64 {
        self.q[[step, state, action]]
    }
}

pub fn fit_q(samples: &[ResetSample], dims: (usize, usize, usize), default_q: f64) -> Result<QFit> {
    if samples.is_empty() {
        return Err(param_err("samples", 0, "fit needs at least one sample"));
    }
    let mut sums = Array3::<f64>::zeros(dims);
    let mut counts = Array3::<usize>::zeros(dims);
    for s in samples {
        let idx = [s.step, s.state, s.action];
        if s.step >= dims.0 || s.state >= dims.1 || s.action >= dims.2 {
            return Err(crate::error::Error::InvalidIndex { what: "sample cell", index: s.step, bound: dims.0 });
        }
        sums[idx] += s.q_hat;
        counts[idx] += 1;
    }
    let mut q = Array3::from_elem(dims, default_q);
    for ((idx, &c), &total) in counts.indexed_iter().zip(sums.iter()) {
        if c > 0 {
            q[idx] = total / c as f64;
        }
    }
    Ok(QFit { q, counts })
}

/// Per-sample terms `Y_i = |Y| (pi_hat_plus(y_i|x_i) - pi(y_i|x_i)) Q_hat(x_i, y_i, h_i)`.
pub fn advantage_terms(samples: &[ResetSample], q_fit: &QFit, pi_hat_plus: &Policy, pi: &Policy) -> Vec<f64> {
    let num_actions = pi.num_actions() as f64;
    samples
        .iter()
        .map(|s| {
            let diff = pi_hat_plus.prob(s.step, s.state, s.action) - pi.prob(s.step, s.state, s.action);
            num_actions * diff * q_fit.value(s.step, s.state, s.action)
        })
        .collect()
}

/// Plug-in policy-advantage estimate `A_hat`, the mean of [`advantage_terms`].
pub fn estimate_advantage(samples: &[ResetSample], q_fit: &QFit, pi_hat_plus: &Policy, pi: &Policy) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let terms = advantage_terms(samples, q_fit, pi_hat_plus, pi);
    terms.iter().sum::<f64>() / terms.len() as f64
}

/// Phase 2: fitted Q, empirical greedy policy and `A_hat`.
#[derive(Debug, Clone)]
pub struct AdvantageFit {
    pub q_fit: QFit,
    pub greedy: Policy,
    pub a_hat: f64,
}

pub fn fit_and_estimate(samples: &[ResetSample], pi: &Policy, default_q: f64, estimator: Estimator) -> Result<AdvantageFit> {
    match estimator {
        Estimator::PlugIn => {
            let q_fit = fit_q(samples, pi.dim(), default_q)?;
            let greedy = greedy_from_q(&q_fit.q);
            let a_hat = estimate_advantage(samples, &q_fit, &greedy, pi);
            Ok(AdvantageFit { q_fit, greedy, a_hat })
        }
        Estimator::CrossFit => {
            if samples.len() < 2 {
                return Err(param_err("samples", samples.len(), "cross-fitting needs at least 2 samples"));
            }
            let (fit_half, eval_half) = samples.split_at(samples.len().div_ceil(2));
            let q_fit = fit_q(fit_half, pi.dim(), default_q)?;
            let greedy = greedy_from_q(&q_fit.q);
            let eval_fit = fit_q(eval_half, pi.dim(), default_q)?;
            let a_hat = estimate_advantage(eval_half, &eval_fit, &greedy, pi);
            Ok(AdvantageFit { q_fit, greedy, a_hat })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepStatus {
    Updated,
    /// `A_hat <= 0`: no valid mixture coefficient, policy unchanged.
    NonPositiveAdvantage,
    /// CARO with zero coverage: nothing to improve, policy unchanged.
    EmptyImprovableSet,
}

impl StepStatus {
    pub fn is_noop(self) -> bool {
        self != StepStatus::Updated
    }
}

impl fmt::Display for StepStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StepStatus::Updated => "updated",
            StepStatus::NonPositiveAdvantage => "non_positive_advantage",
            StepStatus::EmptyImprovableSet => "empty_improvable_set",
        })
    }
}

/// Phase-1 output.
#[derive(Debug, Clone)]
pub struct SampleBatch {
    pub samples: Vec<ResetSample>,
    /// Reset draws consumed (equals `samples.len()` for RR).
    pub trials: usize,
    pub simulated_steps: usize,
}

/// Phase 1: draw `config.n` reset samples with the variant's sampler.
pub fn collect_samples<R: rand::Rng + ?Sized>(
    mdp: &Mdp,
    pi: &Policy,
    config: &CpiConfig,
    improvable: Option<&ImprovableStats>,
    rng: &mut R,
) -> Result<SampleBatch> {
    config.validate()?;
    let resets = ResetSampler::new(mdp, pi, config.use_exact_visitation)?;
    let mut samples = Vec::with_capacity(config.n);
    let (mut trials, mut simulated_steps) = (0, 0);
    let mut push = |state, step, accepted, rng: &mut R| {
        let action = rng.random_range(0..mdp.num_actions);
        let q_hat = q_rollout_unchecked(mdp, pi, state, action, step, rng);
        samples.push(ResetSample { state, step, action, q_hat, accepted_via_oracle: accepted });
    };
    match (config.variant, improvable) {
        (Variant::Caro, Some(stats)) => {
            let sampler = CreditSampler::new(resets, stats)?;
            let max_trials = match config.max_trials {
                Some(m) => m,
                None => sampler.default_max_trials(rng),
            };
            for _ in 0..config.n {
                let d = sampler.draw(rng, max_trials)?;
                trials += d.trials;
                simulated_steps += d.simulated_steps;
                push(d.state, d.step, true, rng);
            }
        }
        (Variant::Caro, None) => {
            return Err(param_err("improvable", "none", "CARO sampling needs improvable-set masks"));
        }
        (Variant::Rr, _) => {
            for _ in 0..config.n {
                let d = resets.draw(rng);
                trials += 1;
                simulated_steps += d.simulated_steps;
                push(d.state, d.step, false, rng);
            }
        }
    }
    Ok(SampleBatch { samples, trials, simulated_steps })
}

#[derive(Debug, Clone)]
pub struct CpiStepReport {
    pub variant: Variant,
    pub status: StepStatus,
    pub a_hat: f64,
    pub alpha_hat: f64,
    pub pi_out: Policy,
    pub j_before: f64,
    pub j_after: f64,
    /// Exact coverage of the input policy at `config.tau`.
    pub coverage: f64,
    pub samples_used: usize,
    /// Reset draws consumed by the credit sampler (CARO only; 0 for RR).
    pub trials_used: usize,
    pub simulated_steps: usize,
    pub empirical_greedy: Policy,
    pub samples: Vec<ResetSample>,
    pub q_fit: Option<QFit>,
}

impl CpiStepReport {
    pub fn improvement(&self) -> f64 {
        self.j_after - self.j_before
    }

    fn noop(variant: Variant, status: StepStatus, pi: &Policy, j: f64, coverage: f64) -> Self {
        CpiStepReport {
            variant,
            status,
            a_hat: 0.0,
            alpha_hat: 0.0,
            pi_out: pi.clone(),
            j_before: j,
            j_after: j,
            coverage,
            samples_used: 0,
            trials_used: 0,
            simulated_steps: 0,
            empirical_greedy: pi.clone(),
            samples: Vec::new(),
            q_fit: None,
        }
    }
}

/// One CPI step (all three phases) with exact before/after returns.
pub fn cpi_step<R: rand::Rng + ?Sized>(mdp: &Mdp, pi: &Policy, config: &CpiConfig, rng: &mut R) -> Result<CpiStepReport> {
    config.validate()?;
    let j_before = expected_return(mdp, pi)?;
    let stats = improvable_stats(mdp, pi, config.tau, None)?;
    if config.variant == Variant::Caro && stats.is_empty() {
        return Ok(CpiStepReport::noop(config.variant, StepStatus::EmptyImprovableSet, pi, j_before, stats.p));
    }

    let batch = collect_samples(mdp, pi, config, Some(&stats), rng)?;
    let AdvantageFit { q_fit, greedy, a_hat } = fit_and_estimate(&batch.samples, pi, config.default_q, config.estimator)?;

    let scale = match config.variant {
        Variant::Rr => 1.0,
        Variant::Caro => 2.0,
    };
    let h = mdp.horizon as f64;
    let (status, alpha_hat, pi_out) = if a_hat > 0.0 {
        let alpha = (a_hat / (scale * h * h * mdp.r_max)).min(1.0);
        let target = match config.variant {
            Variant::Rr => greedy.clone(),
            Variant::Caro => credit_greedy(pi, &greedy, &stats)?,
        };
        (StepStatus::Updated, alpha, mixture(pi, &target, alpha)?)
    } else {
        (StepStatus::NonPositiveAdvantage, 0.0, pi.clone())
    };
    let j_after = if status == StepStatus::Updated { expected_return(mdp, &pi_out)? } else { j_before };

    Ok(CpiStepReport {
        variant: config.variant,
        status,
        a_hat,
        alpha_hat,
        pi_out,
        j_before,
        j_after,
        coverage: stats.p,
        samples_used: batch.samples.len(),
        trials_used: if config.variant == Variant::Caro { batch.trials } else { 0 },
        simulated_steps: batch.simulated_steps,
        empirical_greedy: greedy,
        samples: batch.samples,
        q_fit: Some(q_fit),
    })
}

/// Iterate [`cpi_step`], threading each output policy into the next step.
pub fn run_cpi<R: rand::Rng + ?Sized>(
    mdp: &Mdp,
    pi0: &Policy,
    iterations: usize,
    config: &CpiConfig,
    rng: &mut R,
) -> Result<Vec<CpiStepReport>> {
    let mut trace = Vec::with_capacity(iterations);
    let mut pi = pi0.clone();
    for _ in 0..iterations {
        let report = cpi_step(mdp, &pi, config, rng)?;
        pi = report.pi_out.clone();
        trace.push(report);
    }
    Ok(trace)
}
