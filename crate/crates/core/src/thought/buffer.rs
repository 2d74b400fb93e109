//! Two-group rollout buffers: a base group from the prompt and shared-prefix
//! groups resampled from a reset point inside a failed seed chain.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{param_err, Result};
use crate::thought::localizer::Localizer;
use crate::thought::policy::ThoughtPolicy;
use crate::thought::task::TrapTask;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BufferVariant {
    /// No resets: a single base group of `2g` rollouts.
    Grpo,
    /// Reset index uniform over the seed's steps.
    Rrpo,
    /// Reset index from the localizer.
    Srpo,
}

impl fmt::Display for BufferVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BufferVariant::Grpo => "grpo",
            BufferVariant::Rrpo => "rrpo",
            BufferVariant::Srpo => "srpo",
        })
    }
}

/// Layout of the `2g` rollout budget, named for `g = 4`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Split {
    /// `g` base rollouts plus `g` suffixes from one reset.
    #[serde(rename = "1x4")]
    OneByG,
    /// `g` suffixes from each of two resets (two seeds), no base group.
    #[serde(rename = "2x4")]
    TwoByG,
    /// `2g` suffixes from one reset, no base group.
    #[serde(rename = "1x8")]
    OneByTwoG,
}

impl Split {
    fn seeds_needed(self) -> usize {
        match self {
            Split::TwoByG => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::OneByG => "1x4",
            Split::TwoByG => "2x4",
            Split::OneByTwoG => "1x8",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupKind {
    Base,
    SharedPrefix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    /// The full chain, prefix included.
    pub thoughts: Vec<usize>,
    /// Leading thoughts copied from the seed; masked in the loss.
    pub prefix_len: usize,
    pub reward: f64,
    /// Base rollouts drawn during the seed search, before the seed appeared.
    pub collected_before_seed: bool,
}

impl Rollout {
    /// Active (unmasked) thought count `T_i`.
    pub fn active_len(&self) -> usize {
        self.thoughts.len() - self.prefix_len
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutGroup {
    pub kind: GroupKind,
    /// 1-based reset index `h*` (shared-prefix groups).
    pub reset_index: Option<usize>,
    /// Ground-truth first error of the seed (shared-prefix groups).
    pub seed_first_error: Option<usize>,
    pub rollouts: Vec<Rollout>,
    pub advantages: Vec<f64>,
    /// All rewards equal: advantages are zero and the group carries no signal.
    pub degenerate: bool,
}

impl RolloutGroup {
    fn new(kind: GroupKind, reset_index: Option<usize>, seed_first_error: Option<usize>, rollouts: Vec<Rollout>) -> Self {
        let rewards: Vec<f64> = rollouts.iter().map(|r| r.reward).collect();
        let (advantages, degenerate) = group_advantages(&rewards);
        RolloutGroup { kind, reset_index, seed_first_error, rollouts, advantages, degenerate }
    }

    pub fn len(&self) -> usize {
        self.rollouts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rollouts.is_empty()
    }

    pub fn successes(&self) -> usize {
        self.rollouts.iter().filter(|r| r.reward > 0.0).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutBuffer {
    pub prompt: usize,
    pub variant: BufferVariant,
    pub split: Split,
    pub groups: Vec<RolloutGroup>,
    /// No failing seed was found; the buffer holds `2g` base rollouts only.
    pub fallback: bool,
    /// Rollouts drawn from the prompt during the seed search (seeds included).
    pub seed_attempts: usize,
    pub seeds: Vec<Vec<usize>>,
    /// Correct seed-search rollouts that did not fit in the base group.
    pub discarded_correct: usize,
}

impl RolloutBuffer {
    pub fn base_group(&self) -> Option<&RolloutGroup> {
        self.groups.iter().find(|g| g.kind == GroupKind::Base)
    }

    pub fn shared_prefix_groups(&self) -> impl Iterator<Item = &RolloutGroup> {
        self.groups.iter().filter(|g| g.kind == GroupKind::SharedPrefix)
    }

    /// Masked prefix positions summed over all rollouts.
    pub fn prefix_length_tokens(&self) -> usize {
        self.groups.iter().flat_map(|g| &g.rollouts).map(|r| r.prefix_len).sum()
    }

    pub fn num_rollouts(&self) -> usize {
        self.groups.iter().map(RolloutGroup::len).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BufferConfig {
    /// Group size.
    pub g: usize,
    pub variant: BufferVariant,
    pub split: Split,
    pub localizer: Localizer,
    #[serde(default = "BufferConfig::default_max_seed_attempts")]
    pub max_seed_attempts: usize,
}

impl BufferConfig {
    pub fn new(g: usize, variant: BufferVariant, split: Split, localizer: Localizer) -> Self {
        BufferConfig { g, variant, split, localizer, max_seed_attempts: Self::default_max_seed_attempts() }
    }

    fn default_max_seed_attempts() -> usize {
        16
    }

    pub fn validate(&self) -> Result<()> {
        if self.g < 2 {
            return Err(param_err("g", self.g, "group size must be at least 2"));
        }
        if self.max_seed_attempts == 0 {
            return Err(param_err("max_seed_attempts", 0, "must be at least 1"));
        }
        self.localizer.validate()
    }
}

/// `(r_i - mean) / std` with the population standard deviation. A group with
/// zero spread gets all-zero advantages and is flagged degenerate.
pub fn group_advantages(rewards: &[f64]) -> (Vec<f64>, bool) {
    if rewards.is_empty() {
        return (Vec::new(), true);
    }
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let var = rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if std == 0.0 {
        return (vec![0.0; rewards.len()], true);
    }
    (rewards.iter().map(|r| (r - mean) / std).collect(), false)
}

/// Build one buffer for `prompt`.
///
/// Phase 1 draws chains from the prompt until the split's seeds (failed
/// chains) are found, keeping the correct ones drawn before the first seed as
/// base-group members. Phase 2 resets inside each seed and samples suffixes.
/// Without enough seeds within `max_seed_attempts` the buffer falls back to
/// `2g` base rollouts.
pub fn build_buffer<R: Rng + ?Sized>(
    task: &TrapTask,
    policy: &ThoughtPolicy,
    prompt: usize,
    config: &BufferConfig,
    rng: &mut R,
) -> Result<RolloutBuffer> {
    config.validate()?;
    task.check_prompt(prompt)?;
    policy.check_task(task)?;
    let g = config.g;
    let fresh = |rng: &mut R, before: bool| {
        let thoughts = policy.complete(task, prompt, &[], rng);
        let reward = task.reward(prompt, &thoughts);
        Rollout { thoughts, prefix_len: 0, reward, collected_before_seed: before }
    };
    let fill_base = |mut members: Vec<Rollout>, size: usize, rng: &mut R| {
        while members.len() < size {
            members.push(fresh(rng, false));
        }
        RolloutGroup::new(GroupKind::Base, None, None, members)
    };

    let mut buffer = RolloutBuffer {
        prompt,
        variant: config.variant,
        split: config.split,
        groups: Vec::new(),
        fallback: false,
        seed_attempts: 0,
        seeds: Vec::new(),
        discarded_correct: 0,
    };
    if config.variant == BufferVariant::Grpo {
        buffer.groups.push(fill_base(Vec::new(), 2 * g, rng));
        return Ok(buffer);
    }

    let mut correct = Vec::new();
    while buffer.seeds.len() < config.split.seeds_needed() && buffer.seed_attempts < config.max_seed_attempts {
        let r = fresh(rng, buffer.seeds.is_empty());
        buffer.seed_attempts += 1;
        if r.reward > 0.0 {
            if buffer.seeds.is_empty() {
                correct.push(r);
            }
        } else {
            buffer.seeds.push(r.thoughts);
        }
    }

    if buffer.seeds.len() < config.split.seeds_needed() {
        buffer.fallback = true;
        buffer.discarded_correct = correct.len().saturating_sub(2 * g);
        correct.truncate(2 * g);
        buffer.groups.push(fill_base(correct, 2 * g, rng));
        return Ok(buffer);
    }

    if config.split == Split::OneByG {
        buffer.discarded_correct = correct.len().saturating_sub(g);
        correct.truncate(g);
        buffer.groups.push(fill_base(correct, g, rng));
    } else {
        buffer.discarded_correct = correct.len();
    }

    let suffixes = if config.split == Split::OneByTwoG { 2 * g } else { g };
    for seed in buffer.seeds.clone() {
        let truth = task.first_error(prompt, &seed).expect("seeds are failed chains");
        let h_star = match config.variant {
            BufferVariant::Rrpo => rng.random_range(1..=task.depth),
            _ => config.localizer.localize(truth, task.depth, rng),
        };
        let prefix = &seed[..h_star - 1];
        let rollouts = (0..suffixes)
            .map(|_| {
                let thoughts = policy.complete(task, prompt, prefix, rng);
                let reward = task.reward(prompt, &thoughts);
                Rollout { thoughts, prefix_len: h_star - 1, reward, collected_before_seed: false }
            })
            .collect();
        buffer.groups.push(RolloutGroup::new(GroupKind::SharedPrefix, Some(h_star), Some(truth), rollouts));
    }
    Ok(buffer)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use crate::thought::task::TrapPrompt;
    use ndarray::Array2;

    fn task() -> TrapTask {
        TrapTask::new(3, 4, vec![TrapPrompt { trap_step: 3, safe_thought: 0 }]).unwrap()
    }

    fn forced(task: &TrapTask, safe_logit: f64) -> ThoughtPolicy {
        let mut logits = Array2::zeros((task.num_states(), 3));
        logits.column_mut(0).fill(safe_logit);
        ThoughtPolicy::new(logits, 1.0).unwrap()
    }

    #[test]
    fn advantage_examples() {
        let (a, d) = group_advantages(&[1.0, 0.0, 0.0, 1.0]);
        assert_eq!(a, vec![1.0, -1.0, -1.0, 1.0]);
        assert!(!d);
        let (a, d) = group_advantages(&[1.0; 4]);
        assert_eq!(a, vec![0.0; 4]);
        assert!(d);
        let (a, _) = group_advantages(&[1.0, 0.0, 0.0, 0.0]);
        assert!((a[0] - 3f64.sqrt()).abs() < 1e-12);
        for v in &a[1..] {
            assert!((v + 1.0 / 3f64.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn always_failing_policy_finds_seed_immediately() {
        let t = task();
        let pol = forced(&t, -60.0);
        let cfg = BufferConfig::new(4, BufferVariant::Srpo, Split::OneByG, Localizer::Oracle);
        let b = build_buffer(&t, &pol, 0, &cfg, &mut rng_from_seed(1)).unwrap();
        assert_eq!(b.seed_attempts, 1);
        assert!(!b.fallback);
        let base = b.base_group().unwrap();
        assert_eq!(base.len(), 4);
        assert!(base.rollouts.iter().all(|r| r.reward == 0.0 && !r.collected_before_seed));
        assert!(base.degenerate);
    }

    #[test]
    fn always_succeeding_policy_falls_back() {
        let t = task();
        let pol = forced(&t, 60.0);
        let cfg = BufferConfig::new(4, BufferVariant::Srpo, Split::OneByG, Localizer::Oracle);
        let b = build_buffer(&t, &pol, 0, &cfg, &mut rng_from_seed(1)).unwrap();
        assert!(b.fallback);
        assert_eq!(b.groups.len(), 1);
        assert_eq!(b.base_group().unwrap().len(), 8);
        assert_eq!(b.shared_prefix_groups().count(), 0);
        assert_eq!(b.seed_attempts, 16);
    }

    #[test]
    fn oracle_resets_at_truth_and_shares_prefix() {
        let t = task();
        let pol = forced(&t, -0.5);
        let cfg = BufferConfig::new(4, BufferVariant::Srpo, Split::OneByG, Localizer::Oracle);
        let mut rng = rng_from_seed(5);
        for _ in 0..1000 {
            let b = build_buffer(&t, &pol, 0, &cfg, &mut rng).unwrap();
            if b.fallback {
                continue;
            }
            let sp = b.shared_prefix_groups().next().unwrap();
            assert_eq!(sp.reset_index, Some(3));
            let seed = &b.seeds[0];
            for r in &sp.rollouts {
                assert_eq!(&r.thoughts[..2], &seed[..2]);
                assert_eq!(r.prefix_len, 2);
            }
            assert_eq!(b.num_rollouts(), 8);
        }
    }

    #[test]
    fn split_layouts() {
        let t = task();
        let pol = forced(&t, -1.0);
        let mut rng = rng_from_seed(8);
        let mut sizes = |split| {
            let cfg = BufferConfig::new(4, BufferVariant::Rrpo, split, Localizer::Oracle);
            let b = build_buffer(&t, &pol, 0, &cfg, &mut rng).unwrap();
            assert!(!b.fallback);
            b.groups.iter().map(|g| (g.kind, g.len())).collect::<Vec<_>>()
        };
        assert_eq!(sizes(Split::OneByG), vec![(GroupKind::Base, 4), (GroupKind::SharedPrefix, 4)]);
        assert_eq!(sizes(Split::TwoByG), vec![(GroupKind::SharedPrefix, 4), (GroupKind::SharedPrefix, 4)]);
        assert_eq!(sizes(Split::OneByTwoG), vec![(GroupKind::SharedPrefix, 8)]);
    }

    #[test]
    fn grpo_is_one_base_group() {
        let t = task();
        let cfg = BufferConfig::new(3, BufferVariant::Grpo, Split::OneByG, Localizer::Oracle);
        let b = build_buffer(&t, &forced(&t, 0.0), 0, &cfg, &mut rng_from_seed(0)).unwrap();
        assert_eq!(b.groups.len(), 1);
        assert_eq!(b.groups[0].len(), 6);
        assert_eq!(b.seed_attempts, 0);
    }

    #[test]
    fn rejects_small_groups() {
        let t = task();
        let cfg = BufferConfig::new(1, BufferVariant::Srpo, Split::OneByG, Localizer::Oracle);
        assert!(build_buffer(&t, &forced(&t, 0.0), 0, &cfg, &mut rng_from_seed(0)).is_err());
    }
}
