//! Repeated buffer construction and plain gradient steps.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{param_err, Result};
use crate::thought::buffer::{build_buffer, BufferConfig, GroupKind};
use crate::thought::loss::{group_mean_signal, masked_loss_and_grad, per_token_signal};
use crate::thought::policy::ThoughtPolicy;
use crate::thought::task::TrapTask;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub buffer: BufferConfig,
    pub learning_rate: f64,
    pub updates: usize,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.buffer.validate()?;
        if !(self.learning_rate > 0.0) {
            return Err(param_err("learning_rate", self.learning_rate, "must be positive"));
        }
        Ok(())
    }
}

/// Per-update diagnostics; `success` is exact and measured after the step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UpdateRecord {
    pub update: usize,
    pub success: f64,
    pub loss: f64,
    pub fallbacks: usize,
    pub degenerate_groups: usize,
    /// Prompts whose base and shared-prefix groups both carry signal.
    pub dual_signal_prompts: usize,
    /// Mean per-token signal over dual-signal prompts.
    pub g_base: Option<f64>,
    pub g_shared_prefix: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainTrace {
    pub initial_success: f64,
    pub records: Vec<UpdateRecord>,
    pub policy: ThoughtPolicy,
}

impl TrainTrace {
    pub fn final_success(&self) -> f64 {
        self.records.last().map_or(self.initial_success, |r| r.success)
    }
}

/// One buffer per prompt per update; the gradient is averaged over prompts.
pub fn train<R: Rng + ?Sized>(task: &TrapTask, policy0: &ThoughtPolicy, config: &TrainConfig, rng: &mut R) -> Result<TrainTrace> {
    config.validate()?;
    policy0.check_task(task)?;
    let mut policy = policy0.clone();
    let initial_success = policy.mean_success(task);
    let mut records = Vec::with_capacity(config.updates);
    let prompts = task.num_prompts() as f64;
    for update in 1..=config.updates {
        let mut grad = Array2::zeros(policy.logits.dim());
        let mut rec = UpdateRecord {
            update,
            success: 0.0,
            loss: 0.0,
            fallbacks: 0,
            degenerate_groups: 0,
            dual_signal_prompts: 0,
            g_base: None,
            g_shared_prefix: None,
        };
        let (mut sum_base, mut sum_sp) = (0.0, 0.0);
        for prompt in 0..task.num_prompts() {
            let buffer = build_buffer(task, &policy, prompt, &config.buffer, rng)?;
            let lg = masked_loss_and_grad(task, &policy, &buffer)?;
            grad.scaled_add(1.0 / prompts, &lg.grad);
            rec.loss += lg.loss / prompts;
            rec.fallbacks += buffer.fallback as usize;
            rec.degenerate_groups += buffer.groups.iter().filter(|g| g.degenerate).count();

            let signal = group_mean_signal(&buffer, &per_token_signal(task, &policy, &buffer)?);
            let pick = |kind| buffer.groups.iter().zip(&signal).find(|(g, _)| g.kind == kind).and_then(|(_, s)| *s);
            if let (Some(b), Some(s)) = (pick(GroupKind::Base), pick(GroupKind::SharedPrefix)) {
                rec.dual_signal_prompts += 1;
                sum_base += b;
                sum_sp += s;
            }
        }
        if rec.dual_signal_prompts > 0 {
            let n = rec.dual_signal_prompts as f64;
            rec.g_base = Some(sum_base / n);
            rec.g_shared_prefix = Some(sum_sp / n);
        }
        policy.descend(&grad, config.learning_rate);
        rec.success = policy.mean_success(task);
        records.push(rec);
    }
    Ok(TrainTrace { initial_success, records, policy })
}
