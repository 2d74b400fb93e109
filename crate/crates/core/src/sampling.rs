//! Sampling primitives: on-policy random-reset draws, the rejection-sampling
//! credit sampler, and single-rollout Q estimates.


use crate::error::{param_err, Error, Result};
use crate::mdp::{sample_next, Mdp};
use crate::oracle::{reset_distribution, visitation, ImprovableStats};
use crate::policy::Policy;
use crate::rng::sample_index;

/// One Phase-1 sample: a reset `(state, step)`, a uniform action, and the
/// return of a single rollout from there.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResetSample {
    pub state: usize,
    pub step: usize,
    pub action: usize,
    pub q_hat: f64,
    pub accepted_via_oracle: bool,
}

/// A `(state, step)` reset draw and its simulation cost.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ResetDraw {
    pub state: usize,
    pub step: usize,
    /// States drawn while reaching the reset point (0 on the exact path).
    pub simulated_steps: usize,
}

/// Draws `h ~ Unif[H]`, `x ~ d^h`.
///
/// By default the state is reached by rolling the policy forward from the
/// initial distribution, which is the honest cost model when `d^h` is unknown.
/// With `use_exact_visitation` the draw instead comes from the exact joint
/// distribution, which is distributionally identical and much cheaper.
#[derive(Debug, Clone)]
pub struct ResetSampler<'a> {
    mdp: &'a Mdp,
    policy: &'a Policy,
    exact_joint: Option<Vec<f64>>,
}

impl<'a> ResetSampler<'a> {
    pub fn new(mdp: &'a Mdp, policy: &'a Policy, use_exact_visitation: bool) -> Result<Self> {
        mdp.check_policy(policy)?;
        let exact_joint = if use_exact_visitation {
            let visit = visitation(mdp, policy)?;
            Some(reset_distribution(&visit).iter().copied().collect())
        } else {
            None
        };
        Ok(Self { mdp, policy, exact_joint })
    }

    pub fn mdp(&self) -> &'a Mdp {
        self.mdp
    }

    pub fn policy(&self) -> &'a Policy {
        self.policy
    }

    pub fn draw<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> ResetDraw {
        let mdp = self.mdp;
        if let Some(joint) = &self.exact_joint {
            let idx = sample_index(joint, rng);
            return ResetDraw {
                state: idx % mdp.num_states,
                step: idx / mdp.num_states,
                simulated_steps: 0,
            };
        }
        let step = rng.random_range(0..mdp.horizon);
        let mut state = sample_index(mdp.initial_dist.as_slice().expect("contiguous"), rng);
        for t in 0..step {
            let action = sample_index(self.policy.row(t, state), rng);
            state = sample_next(mdp, t, state, action, rng);
        }
        ResetDraw { state, step, simulated_steps: step + 1 }
    }
}

/// `reset_sample`: one on-policy `(state, step)` draw by forward simulation.
pub fn reset_sample<R: rand::Rng + ?Sized>(mdp: &Mdp, policy: &Policy, rng: &mut R) -> Result<(usize, usize)> {
    let draw = ResetSampler::new(mdp, policy, false)?.draw(rng);
    Ok((draw.state, draw.step))
}

/// An accepted credit-sampler draw with its trial accounting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CreditDraw {
    pub state: usize,
    pub step: usize,
    /// Reset draws consumed, including the accepted one.
    pub trials: usize,
    pub simulated_steps: usize,
}

/// Rejection sampler for the on-policy distribution restricted to the
/// improvable set: draw resets until the membership oracle accepts.
#[derive(Debug, Clone)]
pub struct CreditSampler<'a> {
    resets: ResetSampler<'a>,
    improvable: &'a ImprovableStats,
}

impl<'a> CreditSampler<'a> {
    pub fn new(resets: ResetSampler<'a>, improvable: &'a ImprovableStats) -> Result<Self> {
        let mdp = resets.mdp();
        if improvable.masks.dim() != (mdp.horizon, mdp.num_states) {
            return Err(crate::error::shape_err(
                "improvable mask",
                format!("{:?}", (mdp.horizon, mdp.num_states)),
                format!("{:?}", improvable.masks.dim()),
            ));
        }
        Ok(Self { resets, improvable })
    }

    pub fn resets(&self) -> &ResetSampler<'a> {
        &self.resets
    }

    pub fn draw<R: rand::Rng + ?Sized>(&self, rng: &mut R, max_trials: usize) -> Result<CreditDraw> {
        let mut simulated_steps = 0;
        for trial in 1..=max_trials {
            let d = self.resets.draw(rng);
            simulated_steps += d.simulated_steps;
            if self.improvable.contains(d.step, d.state) {
                return Ok(CreditDraw { state: d.state, step: d.step, trials: trial, simulated_steps });
            }
        }
        Err(Error::SamplerExhausted { trials: max_trials })
    }

    /// Trial budget: `ceil(200 / p_hat)` from a 1000-trial pilot, at least 10^4.
    ///
    /// A pilot with no acceptances is treated as `p_hat = 1/1000`.
    pub fn default_max_trials<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> usize {
        const PILOT: usize = 1000;
        let accepted = (0..PILOT)
            .filter(|_| {
                let d = self.resets.draw(rng);
                self.improvable.contains(d.step, d.state)
            })
            .count()
            .max(1);
        let p_hat = accepted as f64 / PILOT as f64;
        ((200.0 / p_hat).ceil() as usize).max(10_000)
    }
}

/// `credit_sample`: one accepted `(state, step)` draw from the improvable set.
pub fn credit_sample<R: rand::Rng + ?Sized>(
    mdp: &Mdp,
    policy: &Policy,
    improvable: &ImprovableStats,
    rng: &mut R,
    max_trials: usize,
) -> Result<CreditDraw> {
    if max_trials == 0 {
        return Err(param_err("max_trials", 0, "must be at least 1"));
    }
    CreditSampler::new(ResetSampler::new(mdp, policy, false)?, improvable)?.draw(rng, max_trials)
}

/// Take `action` at `(state, step)`, follow `policy` to the horizon, and
/// return the realised reward sum from `step` on.
pub fn q_rollout<R: rand::Rng + ?Sized>(
    mdp: &Mdp,
    policy: &Policy,
    state: usize,
    action: usize,
    step: usize,
    rng: &mut R,
) -> Result<f64> {
    mdp.check_policy(policy)?;
    mdp.check_state(state)?;
    mdp.check_action(action)?;
    mdp.check_step(step)?;
    Ok(q_rollout_unchecked(mdp, policy, state, action, step, rng))
}

pub(crate) fn q_rollout_unchecked<R: rand::Rng + ?Sized>(
    mdp: &Mdp,
    policy: &Policy,
    mut state: usize,
    mut action: usize,
    step: usize,
    rng: &mut R,
) -> f64 {
    let mut total = 0.0;
    for t in step..mdp.horizon {
        if t > step {
            action = sample_index(policy.row(t, state), rng);
        }
        total += mdp.rewards[[t, state, action]];
        if t + 1 < mdp.horizon {
            state = sample_next(mdp, t, state, action, rng);
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::improvable_stats;
    use crate::rng::rng_from_seed;
    use ndarray::{array, Array2, Array3, Array4};

    fn chain() -> (Mdp, Policy) {
        let (h, s, a) = (3, 3, 2);
        let mut t = Array4::zeros((h, s, a, s));
        let mut r = Array3::zeros((h, s, a));
        for step in 0..h {
            for x in 0..s {
                t[[step, x, 0, (x + 1) % s]] = 1.0;
                t[[step, x, 1, x]] = 1.0;
                r[[step, x, 0]] = 0.2;
                r[[step, x, 1]] = 0.1 * (x + 1) as f64;
            }
        }
        let mdp = Mdp::new(array![1.0, 0.0, 0.0], t, r, 1.0).unwrap();
        (mdp, Policy::deterministic(&Array2::zeros((h, s)), a).unwrap())
    }

    #[test]
    fn horizon_one_resets_use_initial_dist() {
        let mut t = Array4::zeros((1, 2, 2, 2));
        t.slice_mut(ndarray::s![.., .., .., 0]).fill(1.0);
        let mdp = Mdp::new(array![0.25, 0.75], t, Array3::zeros((1, 2, 2)), 1.0).unwrap();
        let pi = Policy::uniform(1, 2, 2);
        let mut rng = rng_from_seed(3);
        let n = 20_000;
        let mut ones = 0;
        for _ in 0..n {
            let (x, h) = reset_sample(&mdp, &pi, &mut rng).unwrap();
            assert_eq!(h, 0);
            ones += x;
        }
        let f = ones as f64 / n as f64;
        assert!((f - 0.75).abs() < 4.0 * (0.75 * 0.25 / n as f64).sqrt());
    }

    #[test]
    fn deterministic_chain_reset_state_is_forced() {
        let (mdp, pi) = chain();
        let mut rng = rng_from_seed(4);
        for _ in 0..200 {
            let (x, h) = reset_sample(&mdp, &pi, &mut rng).unwrap();
            assert_eq!(x, h % 3);
        }
    }

    #[test]
    fn last_step_rollout_is_the_reward() {
        let (mdp, pi) = chain();
        let q = q_rollout(&mdp, &pi, 2, 1, 2, &mut rng_from_seed(0)).unwrap();
        assert_eq!(q, mdp.reward(2, 2, 1));
    }

    #[test]
    fn deterministic_rollout_is_exact_q() {
        let (mdp, pi) = chain();
        let values = crate::oracle::compute_values(&mdp, &pi).unwrap();
        let mut rng = rng_from_seed(1);
        for h in 0..3 {
            for x in 0..3 {
                for y in 0..2 {
                    let q = q_rollout(&mdp, &pi, x, y, h, &mut rng).unwrap();
                    assert!((q - values.q[[h, x, y]]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn rollout_rejects_bad_indices() {
        let (mdp, pi) = chain();
        let mut rng = rng_from_seed(1);
        assert!(q_rollout(&mdp, &pi, 3, 0, 0, &mut rng).is_err());
        assert!(q_rollout(&mdp, &pi, 0, 2, 0, &mut rng).is_err());
        assert!(q_rollout(&mdp, &pi, 0, 0, 3, &mut rng).is_err());
    }

    #[test]
    fn all_improvable_accepts_first_draw() {
        let (mdp, pi) = chain();
        let mut stats = improvable_stats(&mdp, &pi, 1e-3, None).unwrap();
        stats.masks.fill(true);
        let mut rng = rng_from_seed(9);
        for _ in 0..100 {
            assert_eq!(credit_sample(&mdp, &pi, &stats, &mut rng, 10).unwrap().trials, 1);
        }
    }

    #[test]
    fn empty_set_exhausts() {
        let (mdp, pi) = chain();
        let mut stats = improvable_stats(&mdp, &pi, 1e-3, None).unwrap();
        stats.masks.fill(false);
        let err = credit_sample(&mdp, &pi, &stats, &mut rng_from_seed(9), 50).unwrap_err();
        assert!(matches!(err, Error::SamplerExhausted { trials: 50 }));
    }
}
