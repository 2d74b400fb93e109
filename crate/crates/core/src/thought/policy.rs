//! Tabular softmax policy over thoughts.

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{param_err, shape_err, Result};
use crate::rng::sample_index;
use crate::thought::task::TrapTask;

/// `pi(y | s) = softmax(logits[s, :] / temperature)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThoughtPolicy {
    pub logits: Array2<f64>,
    pub temperature: f64,
}

impl ThoughtPolicy {
    pub fn new(logits: Array2<f64>, temperature: f64) -> Result<Self> {
        if !(temperature > 0.0) {
            return Err(param_err("temperature", temperature, "must be positive"));
        }
        Ok(ThoughtPolicy { logits, temperature })
    }

    pub fn uniform(task: &TrapTask) -> Self {
        ThoughtPolicy { logits: Array2::zeros((task.num_states(), task.branching)), temperature: 1.0 }
    }

    /// Logits `N(0, noise^2)` with `-bias` added to the safe thought of every
    /// state, so the trap starts out hard to pass.
    pub fn biased<R: Rng + ?Sized>(task: &TrapTask, bias: f64, noise: f64, temperature: f64, rng: &mut R) -> Result<Self> {
        let normal = Normal::new(0.0, noise.max(0.0)).map_err(|_| param_err("noise", noise, "must be finite"))?;
        let per = task.states_per_prompt();
        let mut logits = Array2::zeros((task.num_states(), task.branching));
        for ((s, y), z) in logits.indexed_iter_mut() {
            let safe = task.prompts[s / per].safe_thought;
            *z = normal.sample(rng) - if y == safe { bias } else { 0.0 };
        }
        Self::new(logits, temperature)
    }

    pub fn check_task(&self, task: &TrapTask) -> Result<()> {
        let want = (task.num_states(), task.branching);
        if self.logits.dim() != want {
            return Err(shape_err("thought policy", format!("{want:?}"), format!("{:?}", self.logits.dim())));
        }
        Ok(())
    }

    pub fn probs(&self, state: usize) -> Vec<f64> {
        let row = self.logits.row(state);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut p: Vec<f64> = row.iter().map(|z| ((z - max) / self.temperature).exp()).collect();
        let total: f64 = p.iter().sum();
        p.iter_mut().for_each(|v| *v /= total);
        p
    }

    pub fn log_prob(&self, state: usize, thought: usize) -> f64 {
        let row = self.logits.row(state);
        let scaled: Vec<f64> = row.iter().map(|z| z / self.temperature).collect();
        let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + scaled.iter().map(|u| (u - max).exp()).sum::<f64>().ln();
        scaled[thought] - lse
    }

    /// Extend `prefix` to a full chain by sampling the remaining thoughts.
    pub fn complete<R: Rng + ?Sized>(&self, task: &TrapTask, prompt: usize, prefix: &[usize], rng: &mut R) -> Vec<usize> {
        let mut thoughts = prefix.to_vec();
        while thoughts.len() < task.depth {
            let p = self.probs(task.state_id(prompt, &thoughts));
            thoughts.push(sample_index(&p, rng));
        }
        thoughts
    }

    /// Exact success probability of `prompt`, summing over trap-step states.
    pub fn success_probability(&self, task: &TrapTask, prompt: usize) -> f64 {
        let trap = task.prompts[prompt];
        let mut total = 0.0;
        let mut stack: Vec<(Vec<usize>, f64)> = vec![(Vec::new(), 1.0)];
        while let Some((prefix, reach)) = stack.pop() {
            let p = self.probs(task.state_id(prompt, &prefix));
            if prefix.len() + 1 == trap.trap_step {
                total += reach * p[trap.safe_thought];
                continue;
            }
            for (y, &py) in p.iter().enumerate() {
                let mut next = prefix.clone();
                next.push(y);
                stack.push((next, reach * py));
            }
        }
        total
    }

    /// Success probability averaged over prompts.
    pub fn mean_success(&self, task: &TrapTask) -> f64 {
        (0..task.num_prompts()).map(|p| self.success_probability(task, p)).sum::<f64>() / task.num_prompts() as f64
    }

    /// Plain gradient descent step `logits -= lr * grad`.
    pub fn descend(&mut self, grad: &Array2<f64>, learning_rate: f64) {
        self.logits.scaled_add(-learning_rate, grad);
    }
}
