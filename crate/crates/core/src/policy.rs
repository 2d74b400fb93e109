//! Tabular stochastic policies and the three policy transforms used by CPI:
//! the greedy policy of a Q table, the conservative mixture, and the
//! credit-assignment greedy policy that deviates only on the improvable set.

use std::path::Path;

use ndarray::{Array2, Array3, ArrayView3};
use serde::{Deserialize, Serialize};

use crate::error::{param_err, shape_err, Error, Result};
use crate::mdp::PROB_TOL;
use crate::oracle::ImprovableStats;

/// Per-step decision rules `probs[step][state][action]`, stored densely.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    horizon: usize,
    num_states: usize,
    num_actions: usize,
    probs: Vec<f64>,
}

impl Policy {
    /// Wrap a probability table, rejecting rows that are not distributions.
    pub fn from_array(probs: Array3<f64>) -> Result<Self> {
        let (h, s, a) = probs.dim();
        let policy = Policy {
            horizon: h,
            num_states: s,
            num_actions: a,
            probs: probs.iter().copied().collect(),
        };
        policy.check_rows()?;
        Ok(policy)
    }

    pub fn uniform(horizon: usize, num_states: usize, num_actions: usize) -> Self {
        Policy {
            horizon,
            num_states,
            num_actions,
            probs: vec![1.0 / num_actions as f64; horizon * num_states * num_actions],
        }
    }

    /// Point-mass policy playing `actions[[step, state]]`.
    pub fn deterministic(actions: &Array2<usize>, num_actions: usize) -> Result<Self> {
        let (h, s) = actions.dim();
        let mut probs = vec![0.0; h * s * num_actions];
        for ((step, state), &a) in actions.indexed_iter() {
            if a >= num_actions {
                return Err(Error::InvalidIndex { what: "action", index: a, bound: num_actions });
            }
            probs[(step * s + state) * num_actions + a] = 1.0;
        }
        Ok(Policy { horizon: h, num_states: s, num_actions, probs })
    }

    fn check_rows(&self) -> Result<()> {
        for step in 0..self.horizon {
            for state in 0..self.num_states {
                let row = self.row(step, state);
                let sum: f64 = row.iter().sum();
                if row.iter().any(|&p| p < 0.0) || (sum - 1.0).abs() > PROB_TOL {
                    return Err(param_err(
                        "policy row",
                        format!("[{step}][{state}] = {row:?}"),
                        "must be a probability vector",
                    ));
                }
            }
        }
        Ok(())
    }

    /// `(horizon, num_states, num_actions)`
    pub fn dim(&self) -> (usize, usize, usize) {
        (self.horizon, self.num_states, self.num_actions)
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    #[inline]
    pub fn row(&self, step: usize, state: usize) -> &[f64] {
        let start = (step * self.num_states + state) * self.num_actions;
        &self.probs[start..start + self.num_actions]
    }

    #[inline]
    pub fn prob(&self, step: usize, state: usize, action: usize) -> f64 {
        self.row(step, state)[action]
    }

    fn row_mut(&mut self, step: usize, state: usize) -> &mut [f64] {
        let start = (step * self.num_states + state) * self.num_actions;
        &mut self.probs[start..start + self.num_actions]
    }

    pub fn as_array(&self) -> ArrayView3<'_, f64> {
        ArrayView3::from_shape(self.dim(), &self.probs).expect("consistent dims")
    }

    /// The action with the largest probability at each `(step, state)`; ties go
    /// to the lowest index.
    pub fn modal_actions(&self) -> Array2<usize> {
        Array2::from_shape_fn((self.horizon, self.num_states), |(h, x)| argmax_lowest(self.row(h, x)))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let file: PolicyFile = serde_json::from_str(&text)?;
        file.into_policy()
    }

    pub fn to_json(&self) -> String {
        let file = PolicyFile {
            horizon: self.horizon,
            num_states: self.num_states,
            num_actions: self.num_actions,
            probs: (0..self.horizon)
                .map(|h| (0..self.num_states).map(|x| self.row(h, x).to_vec()).collect())
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("policy serialises")
    }
}

/// On-disk layout mirroring the MDP file: `probs[h][x][y]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolicyFile {
    pub horizon: usize,
    pub num_states: usize,
    pub num_actions: usize,
    pub probs: Vec<Vec<Vec<f64>>>,
}

impl PolicyFile {
    pub fn into_policy(self) -> Result<Policy> {
        let flat: Vec<f64> = self.probs.iter().flatten().flatten().copied().collect();
        let arr = Array3::from_shape_vec((self.horizon, self.num_states, self.num_actions), flat)
            .map_err(|e| shape_err("policy file", format!("[{}][{}][{}]", self.horizon, self.num_states, self.num_actions), e))?;
        Policy::from_array(arr)
    }
}

/// Index of the maximum entry, lowest index on ties.
pub fn argmax_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Deterministic policy putting all mass on `argmax_y q[[h, x, y]]`.
pub fn greedy_from_q(q: &Array3<f64>) -> Policy {
    let (h, s, a) = q.dim();
    let actions = Array2::from_shape_fn((h, s), |(step, state)| {
        let row: Vec<f64> = (0..a).map(|y| q[[step, state, y]]).collect();
        argmax_lowest(&row)
    });
    Policy::deterministic(&actions, a).expect("argmax is in range")
}

/// Conservative mixture `(1 - alpha) * pi + alpha * pi_prime`, row by row.
pub fn mixture(pi: &Policy, pi_prime: &Policy, alpha: f64) -> Result<Policy> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(param_err("alpha", alpha, "must lie in [0, 1]"));
    }
    if pi.dim() != pi_prime.dim() {
        return Err(shape_err("mixture", format!("{:?}", pi.dim()), format!("{:?}", pi_prime.dim())));
    }
    // The endpoints return their operand unchanged rather than a rounded copy.
    if alpha == 0.0 {
        return Ok(pi.clone());
    }
    if alpha == 1.0 {
        return Ok(pi_prime.clone());
    }
    let probs = pi
        .probs
        .iter()
        .zip(&pi_prime.probs)
        .map(|(p, q)| (1.0 - alpha) * p + alpha * q)
        .collect();
    Ok(Policy { probs, ..pi.clone() })
}

/// Play `pi_plus` on the improvable set and `pi` elsewhere.
pub fn credit_greedy(pi: &Policy, pi_plus: &Policy, improvable: &ImprovableStats) -> Result<Policy> {
    credit_greedy_masked(pi, pi_plus, &improvable.masks)
}

/// [`credit_greedy`] with an explicit `[step, state]` membership mask.
pub fn credit_greedy_masked(pi: &Policy, pi_plus: &Policy, masks: &Array2<bool>) -> Result<Policy> {
    if pi.dim() != pi_plus.dim() {
        return Err(shape_err("credit_greedy", format!("{:?}", pi.dim()), format!("{:?}", pi_plus.dim())));
    }
    if masks.dim() != (pi.horizon, pi.num_states) {
        return Err(shape_err("improvable mask", format!("{:?}", (pi.horizon, pi.num_states)), format!("{:?}", masks.dim())));
    }
    let mut out = pi.clone();
    for ((step, state), &member) in masks.indexed_iter() {
        if member {
            out.row_mut(step, state).copy_from_slice(pi_plus.row(step, state));
        }
    }
    Ok(out)
}
