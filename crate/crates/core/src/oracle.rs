//! Exact quantities by backward induction and forward recursion.
//!
//! Nothing here samples: values, visitation, returns, policy advantages,
//! improvable sets and coverage are all computed in closed form so they can
//! serve as ground truth for the Monte Carlo estimators elsewhere.

use ndarray::{Array1, Array2, Array3};

use crate::error::{param_err, Result};
use crate::mdp::Mdp;
use crate::policy::{greedy_from_q, Policy};

/// `V`, `Q` and `A` for one `(mdp, policy)` pair, indexed `[step, state(, action)]`.
/// `V` past the final step is zero and is not stored.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTables {
    pub v: Array2<f64>,
    pub q: Array3<f64>,
    pub a: Array3<f64>,
}

impl ValueTables {
    /// `max_y A[step, state, y]`
    pub fn max_advantage(&self, step: usize, state: usize) -> f64 {
        let (_, _, na) = self.a.dim();
        (0..na).map(|y| self.a[[step, state, y]]).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Largest advantage anywhere in the table.
    pub fn global_max_advantage(&self) -> f64 {
        self.a.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `E_{y ~ pi'(.|x)} A[step, x, y]`
    pub fn expected_advantage(&self, pi_prime: &Policy, step: usize, state: usize) -> f64 {
        pi_prime
            .row(step, state)
            .iter()
            .enumerate()
            .map(|(y, p)| p * self.a[[step, state, y]])
            .sum()
    }
}

/// Per-step state distributions `d^h` and their time average.
#[derive(Debug, Clone, PartialEq)]
pub struct Visitation {
    pub per_step: Array2<f64>,
    pub time_averaged: Array1<f64>,
}

/// Membership masks of the `tau`-improvable sets, their coverage, and
/// (optionally) the conditional policy advantages of a queried policy.
#[derive(Debug, Clone, PartialEq)]
pub struct ImprovableStats {
    pub tau: f64,
    /// `masks[[step, state]]` iff `max_y A >= tau`.
    pub masks: Array2<bool>,
    /// Time-`h` coverage `P_{x ~ d^h}[x in G_h]`.
    pub p_per_step: Vec<f64>,
    /// Time-averaged coverage.
    pub p: f64,
    pub conditional: Option<ConditionalAdvantage>,
}

/// Policy advantage of a query policy conditioned on and off the improvable set.
///
/// An empty side (zero probability) reports 0 with its `*_empty` flag set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionalAdvantage {
    pub on: f64,
    pub off: f64,
    pub on_empty: bool,
    pub off_empty: bool,
}

impl ImprovableStats {
    pub fn is_empty(&self) -> bool {
        self.p <= 0.0
    }

    pub fn contains(&self, step: usize, state: usize) -> bool {
        self.masks[[step, state]]
    }
}

/// Exact backward induction from the last step down to the first.
pub fn compute_values(mdp: &Mdp, policy: &Policy) -> Result<ValueTables> {
    mdp.check_policy(policy)?;
    let (h, s, a) = (mdp.horizon, mdp.num_states, mdp.num_actions);
    let mut v = Array2::zeros((h, s));
    let mut q = Array3::zeros((h, s, a));
    let mut adv = Array3::zeros((h, s, a));
    for step in (0..h).rev() {
        for x in 0..s {
            for y in 0..a {
                let mut cont = 0.0;
                if step + 1 < h {
                    for n in 0..s {
                        cont += mdp.transitions[[step, x, y, n]] * v[[step + 1, n]];
                    }
                }
                q[[step, x, y]] = mdp.rewards[[step, x, y]] + cont;
            }
            let row = policy.row(step, x);
            v[[step, x]] = (0..a).map(|y| row[y] * q[[step, x, y]]).sum();
            for y in 0..a {
                adv[[step, x, y]] = q[[step, x, y]] - v[[step, x]];
            }
        }
    }
    Ok(ValueTables { v, q, a: adv })
}

/// Forward recursion `d^0 = mu`, `d^{h+1}(x') = sum_x d^h(x) sum_y pi(y|x) P(x'|x,y)`.
pub fn visitation(mdp: &Mdp, policy: &Policy) -> Result<Visitation> {
    mdp.check_policy(policy)?;
    let (h, s, a) = (mdp.horizon, mdp.num_states, mdp.num_actions);
    let mut per_step = Array2::zeros((h, s));
    per_step.row_mut(0).assign(&mdp.initial_dist);
    for step in 0..h.saturating_sub(1) {
        for x in 0..s {
            let mass = per_step[[step, x]];
            if mass == 0.0 {
                continue;
            }
            let row = policy.row(step, x);
            for (y, &py) in row.iter().enumerate().take(a) {
                if py == 0.0 {
                    continue;
                }
                for n in 0..s {
                    per_step[[step + 1, n]] += mass * py * mdp.transitions[[step, x, y, n]];
                }
            }
        }
    }
    let time_averaged = per_step.mean_axis(ndarray::Axis(0)).expect("horizon >= 1");
    Ok(Visitation { per_step, time_averaged })
}

/// `J(pi) = sum_x mu(x) V_0(x)`
pub fn expected_return(mdp: &Mdp, policy: &Policy) -> Result<f64> {
    let values = compute_values(mdp, policy)?;
    Ok(mdp.initial_dist.dot(&values.v.row(0)))
}

/// The exact greedy policy `argmax_y A^pi` (lowest index on ties).
pub fn greedy_policy(mdp: &Mdp, policy: &Policy) -> Result<Policy> {
    Ok(greedy_from_q(&compute_values(mdp, policy)?.q))
}

/// `(1/H) sum_h E_{x ~ d^h} E_{y ~ pi'} A^pi_h(x, y)`
pub fn policy_advantage(mdp: &Mdp, pi: &Policy, pi_prime: &Policy) -> Result<f64> {
    mdp.check_policy(pi_prime)?;
    let values = compute_values(mdp, pi)?;
    let visit = visitation(mdp, pi)?;
    Ok(policy_advantage_from(&values, &visit, pi_prime))
}

/// [`policy_advantage`] from precomputed tables.
pub fn policy_advantage_from(values: &ValueTables, visit: &Visitation, pi_prime: &Policy) -> f64 {
    let (h, s) = visit.per_step.dim();
    let mut total = 0.0;
    for step in 0..h {
        for x in 0..s {
            let d = visit.per_step[[step, x]];
            if d > 0.0 {
                total += d * values.expected_advantage(pi_prime, step, x);
            }
        }
    }
    total / h as f64
}

/// Improvable-set masks and coverage at threshold `tau`, with conditional
/// advantages of `query` when given.
pub fn improvable_stats(mdp: &Mdp, pi: &Policy, tau: f64, query: Option<&Policy>) -> Result<ImprovableStats> {
    if let Some(q) = query {
        mdp.check_policy(q)?;
    }
    let values = compute_values(mdp, pi)?;
    let visit = visitation(mdp, pi)?;
    improvable_stats_from(&values, &visit, tau, query)
}

/// [`improvable_stats`] from precomputed tables.
pub fn improvable_stats_from(
    values: &ValueTables,
    visit: &Visitation,
    tau: f64,
    query: Option<&Policy>,
) -> Result<ImprovableStats> {
    if !(tau > 0.0) {
        return Err(param_err("tau", tau, "must be positive"));
    }
    let (h, s) = visit.per_step.dim();
    let masks = Array2::from_shape_fn((h, s), |(step, x)| values.max_advantage(step, x) >= tau);
    let p_per_step: Vec<f64> = (0..h)
        .map(|step| (0..s).filter(|&x| masks[[step, x]]).map(|x| visit.per_step[[step, x]]).sum())
        .collect();
    let p = p_per_step.iter().sum::<f64>() / h as f64;

    let conditional = query.map(|q| {
        let (mut on_sum, mut off_sum) = (0.0, 0.0);
        for step in 0..h {
            for x in 0..s {
                let d = visit.per_step[[step, x]];
                if d == 0.0 {
                    continue;
                }
                let contrib = d * values.expected_advantage(q, step, x) / h as f64;
                if masks[[step, x]] {
                    on_sum += contrib;
                } else {
                    off_sum += contrib;
                }
            }
        }
        let on_empty = p <= 0.0;
        let off_empty = p >= 1.0;
        ConditionalAdvantage {
            on: if on_empty { 0.0 } else { on_sum / p },
            off: if off_empty { 0.0 } else { off_sum / (1.0 - p) },
            on_empty,
            off_empty,
        }
    });

    Ok(ImprovableStats { tau, masks, p_per_step, p, conditional })
}

/// The joint on-policy distribution over `(step, state)`: `d^h(x) / H`.
pub fn reset_distribution(visit: &Visitation) -> Array2<f64> {
    let h = visit.per_step.nrows() as f64;
    visit.per_step.mapv(|d| d / h)
}

/// The on-policy `(step, state)` distribution restricted to the improvable set
/// and renormalised. All zeros when the set has no mass.
pub fn restricted_reset_distribution(visit: &Visitation, masks: &Array2<bool>) -> Array2<f64> {
    let joint = reset_distribution(visit);
    let mut restricted = Array2::zeros(joint.dim());
    let mut total = 0.0;
    for ((idx, &d), &m) in joint.indexed_iter().zip(masks.iter()) {
        if m {
            restricted[idx] = d;
            total += d;
        }
    }
    if total > 0.0 {
        restricted.mapv_inplace(|d| d / total);
    }
    restricted
}

/// `E_{(h,x) ~ weights} E_{y ~ pi'} A^pi_h(x, y)` for an arbitrary `(step, state)` distribution.
pub fn advantage_under(values: &ValueTables, weights: &Array2<f64>, pi_prime: &Policy) -> f64 {
    weights
        .indexed_iter()
        .filter(|(_, &w)| w > 0.0)
        .map(|((step, x), &w)| w * values.expected_advantage(pi_prime, step, x))
        .sum()
}

/// Total variation distance `0.5 * sum |p - q|`.
pub fn tv_distance<'a>(p: impl IntoIterator<Item = &'a f64>, q: impl IntoIterator<Item = &'a f64>) -> f64 {
    0.5 * p.into_iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array4};

    fn zero_reward_mdp() -> Mdp {
        let mut t = Array4::zeros((3, 2, 2, 2));
        t.slice_mut(ndarray::s![.., .., .., 0]).fill(0.3);
        t.slice_mut(ndarray::s![.., .., .., 1]).fill(0.7);
        Mdp::new(array![0.4, 0.6], t, Array3::zeros((3, 2, 2)), 1.0).unwrap()
    }

    fn identity_kernel_mdp() -> Mdp {
        let mut t = Array4::zeros((4, 3, 2, 3));
        for h in 0..4 {
            for x in 0..3 {
                for y in 0..2 {
                    t[[h, x, y, x]] = 1.0;
                }
            }
        }
        let r = Array3::from_shape_fn((4, 3, 2), |(h, x, y)| 0.1 * ((h + x + y) % 3) as f64);
        Mdp::new(array![0.2, 0.3, 0.5], t, r, 1.0).unwrap()
    }

    #[test]
    fn zero_rewards_give_zero_values() {
        let mdp = zero_reward_mdp();
        let pi = Policy::uniform(3, 2, 2);
        let vt = compute_values(&mdp, &pi).unwrap();
        assert!(vt.v.iter().chain(vt.q.iter()).chain(vt.a.iter()).all(|&v| v == 0.0));
        assert_eq!(expected_return(&mdp, &pi).unwrap(), 0.0);
    }

    #[test]
    fn first_step_visitation_is_initial_dist() {
        let mdp = zero_reward_mdp();
        let visit = visitation(&mdp, &Policy::uniform(3, 2, 2)).unwrap();
        assert_eq!(visit.per_step.row(0), mdp.initial_dist);
    }

    #[test]
    fn identity_kernel_keeps_initial_dist() {
        let mdp = identity_kernel_mdp();
        let visit = visitation(&mdp, &Policy::uniform(4, 3, 2)).unwrap();
        for h in 0..4 {
            for x in 0..3 {
                assert!((visit.per_step[[h, x]] - mdp.initial_dist[x]).abs() < 1e-15);
            }
        }
        for x in 0..3 {
            assert!((visit.time_averaged[x] - mdp.initial_dist[x]).abs() < 1e-15);
        }
    }

    #[test]
    fn self_advantage_is_zero() {
        let mdp = identity_kernel_mdp();
        let pi = Policy::uniform(4, 3, 2);
        assert!(policy_advantage(&mdp, &pi, &pi).unwrap().abs() < 1e-15);
    }

    #[test]
    fn tau_above_max_advantage_gives_empty_set() {
        let mdp = identity_kernel_mdp();
        let pi = Policy::uniform(4, 3, 2);
        let vt = compute_values(&mdp, &pi).unwrap();
        let tau = vt.global_max_advantage() + 0.01;
        let stats = improvable_stats(&mdp, &pi, tau, Some(&pi)).unwrap();
        assert!(stats.masks.iter().all(|&m| !m));
        assert_eq!(stats.p, 0.0);
        let cond = stats.conditional.unwrap();
        assert!(cond.on_empty);
        assert_eq!(cond.on, 0.0);
    }

    #[test]
    fn non_positive_tau_rejected() {
        let mdp = identity_kernel_mdp();
        let pi = Policy::uniform(4, 3, 2);
        assert!(improvable_stats(&mdp, &pi, 0.0, None).is_err());
        assert!(improvable_stats(&mdp, &pi, -1.0, None).is_err());
    }

    #[test]
    fn restricted_distribution_normalises() {
        let mdp = identity_kernel_mdp();
        let pi = Policy::uniform(4, 3, 2);
        let visit = visitation(&mdp, &pi).unwrap();
        let masks = Array2::from_shape_fn((4, 3), |(h, x)| (h + x) % 2 == 0);
        let r = restricted_reset_distribution(&visit, &masks);
        assert!((r.sum() - 1.0).abs() < 1e-12);
        for ((idx, &v), &m) in r.indexed_iter().zip(masks.iter()) {
            if !m {
                assert_eq!(v, 0.0, "{idx:?}");
            }
        }
    }
}
