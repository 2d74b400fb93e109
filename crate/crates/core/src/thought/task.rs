//! Trap-step thought task: a `B`-ary tree of thought chains of fixed depth.
//! A chain succeeds iff it picks the safe thought at its prompt's trap step.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{param_err, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrapPrompt {
    /// 1-based step at which the safe thought must be chosen.
    pub trap_step: usize,
    pub safe_thought: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrapTask {
    pub branching: usize,
    pub depth: usize,
    pub prompts: Vec<TrapPrompt>,
}

impl TrapTask {
    pub fn new(branching: usize, depth: usize, prompts: Vec<TrapPrompt>) -> Result<Self> {
        let task = TrapTask { branching, depth, prompts };
        task.validate()?;
        Ok(task)
    }

    /// Prompts with trap steps uniform in `trap_range` (inclusive) and uniform safe thoughts.
    pub fn random<R: Rng + ?Sized>(
        branching: usize,
        depth: usize,
        num_prompts: usize,
        trap_range: (usize, usize),
        rng: &mut R,
    ) -> Result<Self> {
        let (lo, hi) = trap_range;
        if lo == 0 || hi < lo || hi > depth {
            return Err(param_err("trap_range", format!("{lo}..={hi}"), "must lie within 1..=depth"));
        }
        if branching < 2 {
            return Err(param_err("branching", branching, "must be at least 2"));
        }
        let prompts = (0..num_prompts)
            .map(|_| TrapPrompt { trap_step: rng.random_range(lo..=hi), safe_thought: rng.random_range(0..branching) })
            .collect();
        Self::new(branching, depth, prompts)
    }

    pub fn validate(&self) -> Result<()> {
        if self.branching < 2 {
            return Err(param_err("branching", self.branching, "must be at least 2"));
        }
        if self.depth == 0 {
            return Err(param_err("depth", self.depth, "must be at least 1"));
        }
        if self.prompts.is_empty() {
            return Err(param_err("prompts", 0, "need at least one prompt"));
        }
        for p in &self.prompts {
            if p.trap_step == 0 || p.trap_step > self.depth {
                return Err(param_err("trap_step", p.trap_step, "must lie in 1..=depth"));
            }
            if p.safe_thought >= self.branching {
                return Err(param_err("safe_thought", p.safe_thought, "must be a valid thought"));
            }
        }
        Ok(())
    }

    pub fn num_prompts(&self) -> usize {
        self.prompts.len()
    }

    /// Decision states per prompt: all prefixes of length `0..depth`.
    pub fn states_per_prompt(&self) -> usize {
        (0..self.depth).map(|l| self.branching.pow(l as u32)).sum()
    }

    pub fn num_states(&self) -> usize {
        self.states_per_prompt() * self.prompts.len()
    }

    /// State id of the decision point after `prefix` in `prompt`.
    pub fn state_id(&self, prompt: usize, prefix: &[usize]) -> usize {
        debug_assert!(prefix.len() < self.depth);
        let level_offset: usize = (0..prefix.len()).map(|l| self.branching.pow(l as u32)).sum();
        let index = prefix.iter().fold(0, |acc, &t| acc * self.branching + t);
        prompt * self.states_per_prompt() + level_offset + index
    }

    pub fn check_prompt(&self, prompt: usize) -> Result<()> {
        if prompt >= self.prompts.len() {
            return Err(Error::InvalidIndex { what: "prompt", index: prompt, bound: self.prompts.len() });
        }
        Ok(())
    }

    /// Terminal reward of a full chain: 1 on success, 0 otherwise.
    pub fn reward(&self, prompt: usize, thoughts: &[usize]) -> f64 {
        debug_assert_eq!(thoughts.len(), self.depth);
        let p = self.prompts[prompt];
        if thoughts[p.trap_step - 1] == p.safe_thought {
            1.0
        } else {
            0.0
        }
    }

    /// Ground-truth first erroneous step (1-based) of a failed chain.
    pub fn first_error(&self, prompt: usize, thoughts: &[usize]) -> Option<usize> {
        (self.reward(prompt, thoughts) == 0.0).then_some(self.prompts[prompt].trap_step)
    }

    /// Whether some continuation of `prefix` succeeds.
    pub fn can_succeed_from(&self, prompt: usize, prefix: &[usize]) -> bool {
        let p = self.prompts[prompt];
        prefix.len() < p.trap_step || prefix[p.trap_step - 1] == p.safe_thought
    }
}
