//! Prefix-masked group-relative loss, its analytic gradient, and the
//! per-token gradient signal.
//!
//! For each group `k` of size `G_k`,
//! `L_k = -(1/G_k) sum_i (1/T_i) sum_{t active} A_i log pi(y_{i,t} | s_{i,t})`,
//! where `T_i` counts the active (unmasked) thoughts of rollout `i`. Base
//! rollouts are fully active; shared-prefix rollouts mask their copied
//! prefix. The buffer loss is the sum over groups.

use ndarray::Array2;

use crate::error::{shape_err, Result};
use crate::thought::buffer::RolloutBuffer;
use crate::thought::policy::ThoughtPolicy;
use crate::thought::task::TrapTask;

/// One thought position of one rollout.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenGrad {
    pub state: usize,
    pub thought: usize,
    pub masked: bool,
    /// `pi(thought | state)`.
    pub prob: f64,
    /// Gradient of this position's loss term with respect to the softmax
    /// inputs `logits[state] / temperature`. Exactly zero when masked.
    pub grad: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub loss: f64,
    /// Gradient with respect to the raw logits.
    pub grad: Array2<f64>,
    /// `[group][rollout][position]`.
    pub tokens: Vec<Vec<Vec<TokenGrad>>>,
}

fn check(task: &TrapTask, policy: &ThoughtPolicy, buffer: &RolloutBuffer) -> Result<()> {
    policy.check_task(task)?;
    task.check_prompt(buffer.prompt)?;
    for g in &buffer.groups {
        if g.advantages.len() != g.rollouts.len() {
            return Err(shape_err("advantages", g.rollouts.len(), g.advantages.len()));
        }
        for r in &g.rollouts {
            if r.thoughts.len() != task.depth || r.prefix_len >= task.depth || r.thoughts.iter().any(|&t| t >= task.branching) {
                return Err(shape_err("rollout", format!("{} thoughts < {}", task.depth, task.branching), format!("{:?}", r.thoughts)));
            }
        }
    }
    Ok(())
}

pub fn masked_loss_and_grad(task: &TrapTask, policy: &ThoughtPolicy, buffer: &RolloutBuffer) -> Result<LossGrad> {
    check(task, policy, buffer)?;
    let b = task.branching;
    let mut loss = 0.0;
    let mut grad = Array2::zeros(policy.logits.dim());
    let mut tokens = Vec::with_capacity(buffer.groups.len());
    for group in &buffer.groups {
        let size = group.len() as f64;
        let mut group_tokens = Vec::with_capacity(group.len());
        for (r, &adv) in group.rollouts.iter().zip(&group.advantages) {
            let coef = adv / (size * r.active_len() as f64);
            let mut rollout_tokens = Vec::with_capacity(task.depth);
            for t in 0..task.depth {
                let state = task.state_id(buffer.prompt, &r.thoughts[..t]);
                let thought = r.thoughts[t];
                let probs = policy.probs(state);
                let masked = t < r.prefix_len;
                let mut g = vec![0.0; b];
                if !masked {
                    loss -= coef * policy.log_prob(state, thought);
                    for (a, ga) in g.iter_mut().enumerate() {
                        let indicator = if a == thought { 1.0 } else { 0.0 };
                        *ga = -coef * (indicator - probs[a]);
                        grad[[state, a]] += *ga / policy.temperature;
                    }
                }
                rollout_tokens.push(TokenGrad { state, thought, masked, prob: probs[thought], grad: g });
            }
            group_tokens.push(rollout_tokens);
        }
        tokens.push(group_tokens);
    }
    Ok(LossGrad { loss, grad, tokens })
}

/// The loss alone, for finite-difference checks.
pub fn masked_loss(task: &TrapTask, policy: &ThoughtPolicy, buffer: &RolloutBuffer) -> Result<f64> {
    check(task, policy, buffer)?;
    let mut loss = 0.0;
    for group in &buffer.groups {
        let size = group.len() as f64;
        for (r, &adv) in group.rollouts.iter().zip(&group.advantages) {
            let coef = adv / (size * r.active_len() as f64);
            for t in r.prefix_len..task.depth {
                let state = task.state_id(buffer.prompt, &r.thoughts[..t]);
                loss -= coef * policy.log_prob(state, r.thoughts[t]);
            }
        }
    }
    Ok(loss)
}

/// `g_{i,t} = (|A_i| / T_i) (1 - pi(y_{i,t}))` per position; `None` where masked.
pub fn per_token_signal(task: &TrapTask, policy: &ThoughtPolicy, buffer: &RolloutBuffer) -> Result<Vec<Vec<Vec<Option<f64>>>>> {
    check(task, policy, buffer)?;
    Ok(buffer
        .groups
        .iter()
        .map(|group| {
            group
                .rollouts
                .iter()
                .zip(&group.advantages)
                .map(|(r, &adv)| {
                    let scale = adv.abs() / r.active_len() as f64;
                    (0..task.depth)
                        .map(|t| {
                            (t >= r.prefix_len).then(|| {
                                let state = task.state_id(buffer.prompt, &r.thoughts[..t]);
                                scale * (1.0 - policy.probs(state)[r.thoughts[t]])
                            })
                        })
                        .collect()
                })
                .collect()
        })
        .collect())
}

/// Mean `g_{i,t}` over the active positions of rollouts with nonzero
/// advantage, per group. `None` when no rollout in the group carries signal.
pub fn group_mean_signal(buffer: &RolloutBuffer, signal: &[Vec<Vec<Option<f64>>>]) -> Vec<Option<f64>> {
    buffer
        .groups
        .iter()
        .zip(signal)
        .map(|(group, rows)| {
            let values: Vec<f64> = group
                .advantages
                .iter()
                .zip(rows)
                .filter(|(a, _)| **a != 0.0)
                .flat_map(|(_, row)| row.iter().flatten().copied())
                .collect();
            (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
        })
        .collect()
}
