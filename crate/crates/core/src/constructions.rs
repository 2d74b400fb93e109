//! MDP generators: the one-step tightness gadget and random tabular families,
//! optionally with a controlled improvable-set coverage.

use ndarray::{Array1, Array2, Array3, Array4};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{param_err, Error, Result};
use crate::mdp::Mdp;
use crate::oracle::{improvable_stats, visitation};
use crate::policy::Policy;

/// Two states, one step. The base policy always plays action 0. Action 1
/// gains `tau` on the rare state `x1` (mass `p`) and only `epsilon` on `x2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GadgetSpec {
    pub num_actions: usize,
    pub r_max: f64,
    pub tau: f64,
    pub p: f64,
    pub epsilon: f64,
}

impl GadgetSpec {
    /// Spec with the default `epsilon = tau p / (100 (1 - p))`.
    pub fn new(num_actions: usize, r_max: f64, tau: f64, p: f64) -> Result<Self> {
        let spec = GadgetSpec { num_actions, r_max, tau, p, epsilon: Self::default_epsilon(tau, p) };
        spec.validate()?;
        Ok(spec)
    }

    pub fn default_epsilon(tau: f64, p: f64) -> f64 {
        tau * p / (100.0 * (1.0 - p))
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_actions < 2 {
            return Err(param_err("num_actions", self.num_actions, "gadget needs at least 2 actions"));
        }
        if !(self.r_max > 0.0) {
            return Err(param_err("r_max", self.r_max, "must be positive"));
        }
        if !(self.tau > 0.0 && self.tau <= self.r_max / 2.0) {
            return Err(param_err("tau", self.tau, "must lie in (0, r_max/2]"));
        }
        if !(self.p > 0.0 && self.p < 1.0) {
            return Err(param_err("p", self.p, "must lie in (0, 1)"));
        }
        let cap = self.tau * self.p / (1.0 - self.p);
        if !(self.epsilon >= 0.0 && self.epsilon < cap) {
            return Err(param_err("epsilon", self.epsilon, "must lie in [0, tau p / (1 - p))"));
        }
        Ok(())
    }

    /// Exact policy advantage of the always-action-1 policy: `p tau + (1-p) eps`.
    pub fn policy_advantage(&self) -> f64 {
        self.p * self.tau + (1.0 - self.p) * self.epsilon
    }

    /// `E[Y^2]` of one advantage term with the exact `Q` and greedy policy.
    pub fn second_moment(&self) -> f64 {
        let k = self.num_actions as f64;
        let half = self.r_max / 2.0;
        let at = |gap: f64| k * half * half + k * (half + gap) * (half + gap);
        self.p * at(self.tau) + (1.0 - self.p) * at(self.epsilon)
    }

    /// Variance `sigma^2` of one advantage term.
    pub fn term_variance(&self) -> f64 {
        self.second_moment() - self.policy_advantage().powi(2)
    }

    /// Sample sizes up to `sigma^2 / (4 A^2)` cannot resolve the sign of the
    /// random-reset estimate reliably.
    pub fn tightness_limit(&self) -> f64 {
        self.term_variance() / (4.0 * self.policy_advantage().powi(2))
    }
}

/// Build the gadget MDP and its base policy.
pub fn gadget_mdp(spec: &GadgetSpec) -> Result<(Mdp, Policy)> {
    spec.validate()?;
    let k = spec.num_actions;
    let half = spec.r_max / 2.0;
    let mut rewards = Array3::from_elem((1, 2, k), half);
    rewards[[0, 0, 1]] = half + spec.tau;
    rewards[[0, 1, 1]] = half + spec.epsilon;
    // Transitions are never used at H = 1; self-loops keep the kernel valid.
    let mut transitions = Array4::zeros((1, 2, k, 2));
    for x in 0..2 {
        for y in 0..k {
            transitions[[0, x, y, x]] = 1.0;
        }
    }
    let mdp = Mdp::new(Array1::from(vec![spec.p, 1.0 - spec.p]), transitions, rewards, spec.r_max)?;
    let base = Policy::deterministic(&Array2::zeros((1, 2)), k)?;
    Ok((mdp, base))
}

/// Controlled improvable-set coverage for [`random_mdp`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageSpec {
    /// Target time-averaged coverage in `(0, 1]`.
    pub target: f64,
    pub tau: f64,
    #[serde(default = "CoverageSpec::default_tolerance")]
    pub tolerance: f64,
    /// Injected gaps are uniform in `[gap_min, gap_max] * tau`.
    #[serde(default = "CoverageSpec::default_gap_min")]
    pub gap_min: f64,
    #[serde(default = "CoverageSpec::default_gap_max")]
    pub gap_max: f64,
    /// Gap of one action on cells outside the set, as a fraction of `tau`.
    #[serde(default = "CoverageSpec::default_off_gap")]
    pub off_gap: f64,
    #[serde(default)]
    pub base_reward: BaseReward,
    #[serde(default = "CoverageSpec::default_max_retries")]
    pub max_retries: usize,
}

impl CoverageSpec {
    pub fn new(target: f64, tau: f64) -> Self {
        CoverageSpec {
            target,
            tau,
            tolerance: Self::default_tolerance(),
            gap_min: Self::default_gap_min(),
            gap_max: Self::default_gap_max(),
            off_gap: Self::default_off_gap(),
            base_reward: BaseReward::default(),
            max_retries: Self::default_max_retries(),
        }
    }

    fn default_tolerance() -> f64 {
        0.02
    }
    fn default_gap_min() -> f64 {
        1.0
    }
    fn default_gap_max() -> f64 {
        1.5
    }
    fn default_off_gap() -> f64 {
        0.01
    }
    fn default_max_retries() -> usize {
        200
    }
}

/// Reward of the base action (and of tied actions) in coverage mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BaseReward {
    /// One draw per step, uniform in `[0, max]`; `max` defaults to
    /// `r_max - gap_max * tau`.
    PerStep { max: Option<f64> },
    /// Zero before the last step and `value` on it, so every `Q` of the base
    /// policy sits at the same level plus the injected gap.
    Terminal { value: f64 },
}

impl Default for BaseReward {
    fn default() -> Self {
        BaseReward::PerStep { max: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomMdpSpec {
    pub num_states: usize,
    pub num_actions: usize,
    pub horizon: usize,
    #[serde(default = "RandomMdpSpec::default_r_max")]
    pub r_max: f64,
    /// Symmetric Dirichlet concentration for kernels, the initial
    /// distribution and random policies.
    #[serde(default = "RandomMdpSpec::default_concentration")]
    pub concentration: f64,
    #[serde(default)]
    pub coverage: Option<CoverageSpec>,
}

impl RandomMdpSpec {
    pub fn new(num_states: usize, num_actions: usize, horizon: usize) -> Self {
        RandomMdpSpec {
            num_states,
            num_actions,
            horizon,
            r_max: Self::default_r_max(),
            concentration: Self::default_concentration(),
            coverage: None,
        }
    }

    fn default_r_max() -> f64 {
        1.0
    }
    fn default_concentration() -> f64 {
        1.0
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("num_states", self.num_states), ("num_actions", self.num_actions), ("horizon", self.horizon)] {
            if v == 0 {
                return Err(param_err(name, v, "must be at least 1"));
            }
        }
        if !(self.r_max > 0.0) {
            return Err(param_err("r_max", self.r_max, "must be positive"));
        }
        if !(self.concentration > 0.0) {
            return Err(param_err("concentration", self.concentration, "must be positive"));
        }
        if let Some(c) = &self.coverage {
            if !(c.target > 0.0 && c.target <= 1.0) {
                return Err(param_err("coverage.target", c.target, "must lie in (0, 1]"));
            }
            if !(c.tau > 0.0) {
                return Err(param_err("coverage.tau", c.tau, "must be positive"));
            }
            if self.num_actions < 2 {
                return Err(param_err("num_actions", self.num_actions, "coverage control needs at least 2 actions"));
            }
            if !(c.gap_min >= 1.0 && c.gap_max >= c.gap_min) {
                return Err(param_err("coverage.gap", format!("[{}, {}]", c.gap_min, c.gap_max), "need 1 <= gap_min <= gap_max"));
            }
            if !(c.off_gap >= 0.0 && c.off_gap < 1.0) {
                return Err(param_err("coverage.off_gap", c.off_gap, "must lie in [0, 1)"));
            }
            let cap = self.r_max - c.gap_max * c.tau;
            if !(cap >= 0.0) {
                return Err(param_err("coverage", c.gap_max * c.tau, "largest gap exceeds r_max"));
            }
            let level = match c.base_reward {
                BaseReward::PerStep { max } => max.unwrap_or(cap),
                BaseReward::Terminal { value } => value,
            };
            if !(level >= 0.0 && level <= cap) {
                return Err(param_err("coverage.base_reward", level, "must lie in [0, r_max - gap_max * tau]"));
            }
            if !(c.tolerance >= 0.0) {
                return Err(param_err("coverage.tolerance", c.tolerance, "must be non-negative"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct GeneratedMdp {
    pub mdp: Mdp,
    pub base_policy: Policy,
    /// Exact coverage of `base_policy` at the coverage `tau` (coverage mode only).
    pub realized_coverage: Option<f64>,
    /// `[step, state]` cells that received an injected gap (coverage mode only).
    pub designated: Option<Array2<bool>>,
}

fn dirichlet<R: Rng + ?Sized>(k: usize, concentration: f64, rng: &mut R) -> Vec<f64> {
    let gamma = Gamma::new(concentration, 1.0).expect("positive concentration");
    let mut w: Vec<f64> = (0..k).map(|_| gamma.sample(rng)).collect();
    let total: f64 = w.iter().sum();
    if total > 0.0 && total.is_finite() {
        w.iter_mut().for_each(|v| *v /= total);
    } else {
        w.iter_mut().for_each(|v| *v = 0.0);
        w[rng.random_range(0..k)] = 1.0;
    }
    w
}

/// A policy with independent symmetric-Dirichlet rows.
pub fn random_policy<R: Rng + ?Sized>(horizon: usize, num_states: usize, num_actions: usize, concentration: f64, rng: &mut R) -> Policy {
    let mut probs = Array3::zeros((horizon, num_states, num_actions));
    for mut row in probs.lanes_mut(ndarray::Axis(2)) {
        let w = dirichlet(num_actions, concentration, rng);
        row.iter_mut().zip(w).for_each(|(p, v)| *p = v);
    }
    Policy::from_array(probs).expect("dirichlet rows are distributions")
}

/// Draw a random MDP.
///
/// Without coverage control, every `(step, state, action)` has its own
/// Dirichlet kernel and a `U[0, r_max]` reward, and the base policy is a
/// random Dirichlet policy.
///
/// With coverage control, kernels ignore the action and the base policy plays
/// action 0 everywhere, so advantages are exactly reward differences and Q
/// rollouts are noiseless. Base rewards depend only on the step. A subset of `(step, state)` cells is chosen
/// to hit the target coverage and one designated action there is given a gap
/// in `[gap_min, gap_max] * tau`; the other cells get a gap of `off_gap * tau`
/// on one action. Kernels are redrawn until the target is met within tolerance.
pub fn random_mdp<R: Rng + ?Sized>(spec: &RandomMdpSpec, rng: &mut R) -> Result<GeneratedMdp> {
    spec.validate()?;
    match &spec.coverage {
        None => Ok(unconstrained(spec, rng)),
        Some(c) => {
            for _ in 0..c.max_retries.max(1) {
                if let Some(generated) = with_coverage(spec, c, rng)? {
                    return Ok(generated);
                }
            }
            Err(Error::Infeasible(format!(
                "coverage {} within {} not reached after {} retries",
                c.target, c.tolerance, c.max_retries
            )))
        }
    }
}

fn unconstrained<R: Rng + ?Sized>(spec: &RandomMdpSpec, rng: &mut R) -> GeneratedMdp {
    let (h, s, a) = (spec.horizon, spec.num_states, spec.num_actions);
    let initial = Array1::from(dirichlet(s, spec.concentration, rng));
    let mut transitions = Array4::zeros((h, s, a, s));
    for mut row in transitions.lanes_mut(ndarray::Axis(3)) {
        let w = dirichlet(s, spec.concentration, rng);
        row.iter_mut().zip(w).for_each(|(p, v)| *p = v);
    }
    let rewards = Array3::from_shape_fn((h, s, a), |_| rng.random_range(0.0..=spec.r_max));
    let mdp = Mdp::new(initial, transitions, rewards, spec.r_max).expect("generator output is valid");
    let base_policy = random_policy(h, s, a, spec.concentration, rng);
    GeneratedMdp { mdp, base_policy, realized_coverage: None, designated: None }
}

fn with_coverage<R: Rng + ?Sized>(spec: &RandomMdpSpec, c: &CoverageSpec, rng: &mut R) -> Result<Option<GeneratedMdp>> {
    let (h, s, a) = (spec.horizon, spec.num_states, spec.num_actions);
    let initial = Array1::from(dirichlet(s, spec.concentration, rng));
    let mut transitions = Array4::zeros((h, s, a, s));
    for step in 0..h {
        for x in 0..s {
            let w = dirichlet(s, spec.concentration, rng);
            for y in 0..a {
                for (n, &p) in w.iter().enumerate() {
                    transitions[[step, x, y, n]] = p;
                }
            }
        }
    }
    let base_policy = Policy::deterministic(&Array2::zeros((h, s)), a)?;
    let base: Vec<f64> = match c.base_reward {
        BaseReward::PerStep { max } => {
            let hi = max.unwrap_or(spec.r_max - c.gap_max * c.tau);
            (0..h).map(|_| rng.random_range(0.0..=hi)).collect()
        }
        BaseReward::Terminal { value } => (0..h).map(|step| if step + 1 == h { value } else { 0.0 }).collect(),
    };
    let mut rewards = Array3::from_shape_fn((h, s, a), |(step, _, _)| base[step]);
    let probe = Mdp::new(initial.clone(), transitions.clone(), rewards.clone(), spec.r_max)?;
    let visit = visitation(&probe, &base_policy)?;

    let designated = match choose_cells(&visit.per_step, c.target, c.tolerance, rng) {
        Some(d) => d,
        None => return Ok(None),
    };
    for step in 0..h {
        for x in 0..s {
            let y = rng.random_range(1..a);
            let gap = if designated[[step, x]] {
                c.tau * rng.random_range(c.gap_min..=c.gap_max)
            } else {
                c.tau * c.off_gap
            };
            rewards[[step, x, y]] = base[step] + gap;
        }
    }
    let mdp = Mdp::new(initial, transitions, rewards, spec.r_max)?;
    let stats = improvable_stats(&mdp, &base_policy, c.tau, None)?;
    if stats.masks != designated || (stats.p - c.target).abs() > c.tolerance + 1e-12 {
        return Ok(None);
    }
    Ok(Some(GeneratedMdp { mdp, base_policy, realized_coverage: Some(stats.p), designated: Some(designated) }))
}

/// Pick `(step, state)` cells whose total weight `d^h(x) / H` lands within
/// `tolerance` of `target`, scanning cells in random order.
fn choose_cells<R: Rng + ?Sized>(per_step: &Array2<f64>, target: f64, tolerance: f64, rng: &mut R) -> Option<Array2<bool>> {
    let (h, s) = per_step.dim();
    let mut mask = Array2::from_elem((h, s), false);
    if target >= 1.0 {
        mask.fill(true);
        return Some(mask);
    }
    let mut cells: Vec<(usize, usize)> = (0..h).flat_map(|step| (0..s).map(move |x| (step, x))).collect();
    cells.shuffle(rng);
    let mut total = 0.0;
    for (step, x) in cells {
        let w = per_step[[step, x]] / h as f64;
        if w > 0.0 && total + w <= target + tolerance {
            mask[[step, x]] = true;
            total += w;
        }
        if (total - target).abs() <= tolerance {
            return Some(mask);
        }
    }
    None
}
