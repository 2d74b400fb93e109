//! Finite-horizon tabular MDPs and trajectory simulation.
//!
//! Tables are dense and indexed `[step][state][action]` (rewards) or
//! `[step][state][action][next_state]` (transitions). Steps, states and actions
//! are all 0-based, so a horizon-`H` MDP has steps `0..H`.

use std::fmt;
use std::path::Path;

use ndarray::{Array1, Array3, Array4};
use serde::{Deserialize, Serialize};

use crate::error::{param_err, shape_err, Error, Result};
use crate::policy::Policy;
use crate::rng::sample_index;

/// Tolerance on probability vectors read from input.
pub const PROB_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Mdp {
    pub num_states: usize,
    pub num_actions: usize,
    pub horizon: usize,
    pub r_max: f64,
    /// Initial state distribution.
    pub initial_dist: Array1<f64>,
    /// `[step, state, action, next_state]`
    pub transitions: Array4<f64>,
    /// `[step, state, action]`
    pub rewards: Array3<f64>,
}

/// One invariant violation found by [`Mdp::validate`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    EmptyDimension { what: &'static str },
    NonPositiveRMax { r_max: f64 },
    Shape { what: &'static str, expected: Vec<usize>, found: Vec<usize> },
    InitialDistSum { sum: f64 },
    InitialDistNegative { state: usize, value: f64 },
    TransitionRowSum { step: usize, state: usize, action: usize, sum: f64 },
    TransitionNegative { step: usize, state: usize, action: usize, next: usize, value: f64 },
    RewardRange { step: usize, state: usize, action: usize, value: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyDimension { what } => write!(f, "{what} must be at least 1"),
            Violation::NonPositiveRMax { r_max } => write!(f, "r_max = {r_max} must be positive"),
            Violation::Shape { what, expected, found } => {
                write!(f, "{what} has shape {found:?}, expected {expected:?}")
            }
            Violation::InitialDistSum { sum } => write!(f, "initial_dist sums to {sum}"),
            Violation::InitialDistNegative { state, value } => {
                write!(f, "initial_dist[{state}] = {value} is negative")
            }
            Violation::TransitionRowSum { step, state, action, sum } => {
                write!(f, "transitions[{step}][{state}][{action}] sums to {sum}")
            }
            Violation::TransitionNegative { step, state, action, next, value } => {
                write!(f, "transitions[{step}][{state}][{action}][{next}] = {value} is negative")
            }
            Violation::RewardRange { step, state, action, value } => {
                write!(f, "rewards[{step}][{state}][{action}] = {value} outside [0, r_max]")
            }
        }
    }
}

/// Outcome of [`Mdp::validate`]; empty means the MDP is well formed.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            return write!(f, "pass");
        }
        for v in &self.violations {
            writeln!(f, "  - {v}")?;
        }
        Ok(())
    }
}

fn check_prob_row(row: impl Iterator<Item = f64>) -> (f64, Option<(usize, f64)>) {
    let mut sum = 0.0;
    let mut negative = None;
    for (i, p) in row.enumerate() {
        if p < 0.0 && negative.is_none() {
            negative = Some((i, p));
        }
        sum += p;
    }
    (sum, negative)
}

impl Mdp {
    /// Build an MDP and reject it if any invariant fails.
    pub fn new(
        initial_dist: Array1<f64>,
        transitions: Array4<f64>,
        rewards: Array3<f64>,
        r_max: f64,
    ) -> Result<Self> {
        let (horizon, num_states, num_actions, _) = transitions.dim();
        let mdp = Mdp {
            num_states,
            num_actions,
            horizon,
            r_max,
            initial_dist,
            transitions,
            rewards,
        };
        let report = mdp.validate();
        if report.is_ok() {
            Ok(mdp)
        } else {
            Err(Error::Validation(report))
        }
    }

    /// Check every structural invariant and report all violations with indices.
    pub fn validate(&self) -> ValidationReport {
        let mut violations = Vec::new();
        let (h, s, a) = (self.horizon, self.num_states, self.num_actions);
        for (what, n) in [("horizon", h), ("num_states", s), ("num_actions", a)] {
            if n == 0 {
                violations.push(Violation::EmptyDimension { what });
            }
        }
        if !(self.r_max > 0.0) {
            violations.push(Violation::NonPositiveRMax { r_max: self.r_max });
        }
        let shapes: [(&'static str, Vec<usize>, Vec<usize>); 3] = [
            ("initial_dist", vec![s], self.initial_dist.shape().to_vec()),
            ("transitions", vec![h, s, a, s], self.transitions.shape().to_vec()),
            ("rewards", vec![h, s, a], self.rewards.shape().to_vec()),
        ];
        let mut shapes_ok = true;
        for (what, expected, found) in shapes {
            if expected != found {
                shapes_ok = false;
                violations.push(Violation::Shape { what, expected, found });
            }
        }
        if !shapes_ok || h == 0 || s == 0 || a == 0 {
            return ValidationReport { violations };
        }

        let (sum, neg) = check_prob_row(self.initial_dist.iter().copied());
        if let Some((state, value)) = neg {
            violations.push(Violation::InitialDistNegative { state, value });
        }
        if (sum - 1.0).abs() > PROB_TOL {
            violations.push(Violation::InitialDistSum { sum });
        }
        for step in 0..h {
            for state in 0..s {
                for action in 0..a {
                    let row = (0..s).map(|n| self.transitions[[step, state, action, n]]);
                    let (sum, neg) = check_prob_row(row);
                    if let Some((next, value)) = neg {
                        violations.push(Violation::TransitionNegative { step, state, action, next, value });
                    }
                    if (sum - 1.0).abs() > PROB_TOL {
                        violations.push(Violation::TransitionRowSum { step, state, action, sum });
                    }
                    let r = self.rewards[[step, state, action]];
                    if !(0.0..=self.r_max).contains(&r) {
                        violations.push(Violation::RewardRange { step, state, action, value: r });
                    }
                }
            }
        }
        ValidationReport { violations }
    }

    /// Next-state distribution row as a contiguous slice.
    pub fn next_dist(&self, step: usize, state: usize, action: usize) -> Vec<f64> {
        (0..self.num_states)
            .map(|n| self.transitions[[step, state, action, n]])
            .collect()
    }

    pub fn reward(&self, step: usize, state: usize, action: usize) -> f64 {
        self.rewards[[step, state, action]]
    }

    pub fn check_state(&self, state: usize) -> Result<()> {
        if state >= self.num_states {
            return Err(Error::InvalidIndex { what: "state", index: state, bound: self.num_states });
        }
        Ok(())
    }

    pub fn check_action(&self, action: usize) -> Result<()> {
        if action >= self.num_actions {
            return Err(Error::InvalidIndex { what: "action", index: action, bound: self.num_actions });
        }
        Ok(())
    }

    pub fn check_step(&self, step: usize) -> Result<()> {
        if step >= self.horizon {
            return Err(Error::InvalidIndex { what: "step", index: step, bound: self.horizon });
        }
        Ok(())
    }

    /// Policy shape must match `[horizon, num_states, num_actions]`.
    pub fn check_policy(&self, policy: &Policy) -> Result<()> {
        let expected = (self.horizon, self.num_states, self.num_actions);
        if policy.dim() != expected {
            return Err(shape_err("policy", format!("{expected:?}"), format!("{:?}", policy.dim())));
        }
        Ok(())
    }

    /// Read an MDP from its JSON file format and validate it.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: MdpFile = serde_json::from_str(text)?;
        file.into_mdp()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&MdpFile::from(self)).expect("MDP serialises")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }
}

/// On-disk layout: nested row-major arrays, one outer entry per step.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MdpFile {
    pub num_states: usize,
    pub num_actions: usize,
    pub horizon: usize,
    pub r_max: f64,
    pub initial_dist: Vec<f64>,
    /// `transitions[h][x][y][x']`
    pub transitions: Vec<Vec<Vec<Vec<f64>>>>,
    /// `rewards[h][x][y]`
    pub rewards: Vec<Vec<Vec<f64>>>,
}

impl From<&Mdp> for MdpFile {
    fn from(mdp: &Mdp) -> Self {
        let (h, s, a) = (mdp.horizon, mdp.num_states, mdp.num_actions);
        MdpFile {
            num_states: s,
            num_actions: a,
            horizon: h,
            r_max: mdp.r_max,
            initial_dist: mdp.initial_dist.to_vec(),
            transitions: (0..h)
                .map(|t| (0..s).map(|x| (0..a).map(|y| mdp.next_dist(t, x, y)).collect()).collect())
                .collect(),
            rewards: (0..h)
                .map(|t| (0..s).map(|x| (0..a).map(|y| mdp.rewards[[t, x, y]]).collect()).collect())
                .collect(),
        }
    }
}

impl MdpFile {
    pub fn into_mdp(self) -> Result<Mdp> {
        let (h, s, a) = (self.horizon, self.num_states, self.num_actions);
        let flat_t: Vec<f64> = self.transitions.iter().flatten().flatten().flatten().copied().collect();
        let flat_r: Vec<f64> = self.rewards.iter().flatten().flatten().copied().collect();
        let ragged = self.transitions.len() != h
            || self.transitions.iter().any(|t| t.len() != s || t.iter().any(|x| x.len() != a || x.iter().any(|y| y.len() != s)))
            || self.rewards.len() != h
            || self.rewards.iter().any(|t| t.len() != s || t.iter().any(|x| x.len() != a));
        if ragged {
            return Err(shape_err("MDP file arrays", format!("[{h}][{s}][{a}]"), "ragged or mis-sized"));
        }
        if !(self.r_max > 0.0) {
            return Err(param_err("r_max", self.r_max, "must be positive"));
        }
        let transitions = Array4::from_shape_vec((h, s, a, s), flat_t).map_err(|e| shape_err("transitions", "", e))?;
        let rewards = Array3::from_shape_vec((h, s, a), flat_r).map_err(|e| shape_err("rewards", "", e))?;
        Mdp::new(Array1::from(self.initial_dist), transitions, rewards, self.r_max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryStep {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
}

/// A simulated path from `start_step` to the final step inclusive.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub start_step: usize,
    pub steps: Vec<TrajectoryStep>,
    pub total_return: f64,
}

/// Simulate `policy` on `mdp`, either from `x ~ initial_dist` at step 0 or
/// from a reset `(state, step)`.
pub fn sample_trajectory<R: rand::Rng + ?Sized>(
    mdp: &Mdp,
    policy: &Policy,
    rng: &mut R,
    start: Option<(usize, usize)>,
) -> Result<Trajectory> {
    mdp.check_policy(policy)?;
    let (mut state, start_step) = match start {
        Some((state, step)) => {
            mdp.check_state(state)?;
            mdp.check_step(step)?;
            (state, step)
        }
        None => (sample_index(mdp.initial_dist.as_slice().expect("contiguous"), rng), 0),
    };
    let mut steps = Vec::with_capacity(mdp.horizon - start_step);
    let mut total_return = 0.0;
    for step in start_step..mdp.horizon {
        let action = sample_index(policy.row(step, state), rng);
        let reward = mdp.rewards[[step, state, action]];
        total_return += reward;
        steps.push(TrajectoryStep { state, action, reward });
        if step + 1 < mdp.horizon {
            state = sample_next(mdp, step, state, action, rng);
        }
    }
    Ok(Trajectory { start_step, steps, total_return })
}

/// Draw `x' ~ P_step(. | state, action)` without allocating.
pub(crate) fn sample_next<R: rand::Rng + ?Sized>(
    mdp: &Mdp,
    step: usize,
    state: usize,
    action: usize,
    rng: &mut R,
) -> usize {
    let row = mdp.transitions.slice(ndarray::s![step, state, action, ..]);
    match row.as_slice() {
        Some(slice) => sample_index(slice, rng),
        None => sample_index(&row.to_vec(), rng),
    }
}
