//! Exact checks of the improvement and simulation bounds behind CPI with
//! random and credit-assignment resets. Slacks are `lhs - rhs` for `>=`
//! bounds and `rhs - lhs` for `<=` bounds, so a valid bound has slack >= 0.

use serde::Serialize;

use crate::error::Result;
use crate::mdp::Mdp;
use crate::oracle::{compute_values, expected_return, improvable_stats_from, policy_advantage_from, tv_distance, visitation};
use crate::policy::{credit_greedy, greedy_from_q, mixture, Policy};

/// `{0, step, 2 step, ..., 1}`
pub fn alpha_grid(step: f64) -> Vec<f64> {
    let k = (1.0 / step).round() as usize;
    (0..=k).map(|i| i as f64 / k as f64).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundCheck {
    pub tau: f64,
    pub coverage: f64,
    /// `|A - (p A_on + (1-p) A_off)|` for the query policy.
    pub decomposition_error: f64,
    /// `max_{h,x} |sum_y pi(y|x) A(x,y)|`
    pub zero_mean_error: f64,
    /// Classical bound `alpha H A(pi+) - alpha^2 H^3 R / 2`, worst alpha.
    pub classical_min_slack: f64,
    /// Same with the exact `eps_CPI` in place of `H R`.
    pub classical_exact_eps_min_slack: f64,
    /// Credit-aware bound `alpha H p A_G(pi+) - alpha^2 H^3 R p`, worst alpha.
    pub credit_min_slack: f64,
    /// Same with the exact `eps_CPI` of the credit greedy policy.
    pub credit_exact_eps_min_slack: f64,
    /// `alpha H^2 p - sum_h TV(d^h_alpha, d^h)`, worst alpha.
    pub tv_min_slack: f64,
    /// `A(pi+) - A(pi_G)`
    pub greedy_dominance_slack: f64,
    /// `A(pi_G) - tau p`
    pub credit_floor_slack: f64,
}

impl BoundCheck {
    pub fn min_slack(&self) -> f64 {
        [self.classical_min_slack, self.credit_min_slack, self.tv_min_slack, self.greedy_dominance_slack, self.credit_floor_slack]
            .into_iter()
            .fold(f64::INFINITY, f64::min)
    }
}

/// Evaluate every bound for `(mdp, pi)` at threshold `tau`, using `query`
/// for the decomposition identity and `alphas` for the mixture grid.
pub fn check_bounds(mdp: &Mdp, pi: &Policy, tau: f64, query: &Policy, alphas: &[f64]) -> Result<BoundCheck> {
    mdp.check_policy(query)?;
    let values = compute_values(mdp, pi)?;
    let visit = visitation(mdp, pi)?;
    let stats = improvable_stats_from(&values, &visit, tau, Some(query))?;
    let p = stats.p;
    let cond = stats.conditional.expect("query given");
    let decomposition_error = (policy_advantage_from(&values, &visit, query) - (p * cond.on + (1.0 - p) * cond.off)).abs();

    let (h, s, _) = values.q.dim();
    let mut zero_mean_error: f64 = 0.0;
    for step in 0..h {
        for x in 0..s {
            zero_mean_error = zero_mean_error.max(values.expected_advantage(pi, step, x).abs());
        }
    }

    let plus = greedy_from_q(&values.q);
    let pi_g = credit_greedy(pi, &plus, &stats)?;
    let adv_plus = policy_advantage_from(&values, &visit, &plus);
    let adv_g = policy_advantage_from(&values, &visit, &pi_g);
    // A_G(pi+) restricted to the improvable set: p A_G(pi+) = A(pi_G).
    let p_adv_on = adv_g;
    let eps = |target: &Policy| {
        let mut m: f64 = 0.0;
        for step in 0..h {
            for x in 0..s {
                m = m.max(values.expected_advantage(target, step, x).abs());
            }
        }
        m
    };
    let (eps_plus, eps_g) = (eps(&plus), eps(&pi_g));

    let hf = h as f64;
    let r = mdp.r_max;
    let j0 = expected_return(mdp, pi)?;
    let mut check = BoundCheck {
        tau,
        coverage: p,
        decomposition_error,
        zero_mean_error,
        classical_min_slack: f64::INFINITY,
        classical_exact_eps_min_slack: f64::INFINITY,
        credit_min_slack: f64::INFINITY,
        credit_exact_eps_min_slack: f64::INFINITY,
        tv_min_slack: f64::INFINITY,
        greedy_dominance_slack: adv_plus - adv_g,
        credit_floor_slack: if p > 0.0 { adv_g - tau * p } else { 0.0 },
    };
    for &alpha in alphas {
        let mix_plus = mixture(pi, &plus, alpha)?;
        let gain = expected_return(mdp, &mix_plus)? - j0;
        let linear = alpha * hf * adv_plus;
        check.classical_min_slack = check.classical_min_slack.min(gain - (linear - 0.5 * alpha * alpha * hf.powi(3) * r));
        check.classical_exact_eps_min_slack =
            check.classical_exact_eps_min_slack.min(gain - (linear - 0.5 * alpha * alpha * hf * hf * eps_plus));

        let mix_g = mixture(pi, &pi_g, alpha)?;
        let gain_g = expected_return(mdp, &mix_g)? - j0;
        let linear_g = alpha * hf * p_adv_on;
        check.credit_min_slack = check.credit_min_slack.min(gain_g - (linear_g - alpha * alpha * hf.powi(3) * r * p));
        check.credit_exact_eps_min_slack =
            check.credit_exact_eps_min_slack.min(gain_g - (linear_g - alpha * alpha * hf * hf * p * eps_g));

        let visit_g = visitation(mdp, &mix_g)?;
        let tv: f64 = (0..h).map(|step| tv_distance(visit_g.per_step.row(step), visit.per_step.row(step))).sum();
        check.tv_min_slack = check.tv_min_slack.min(alpha * hf * hf * p - tv);
    }
    Ok(check)
}
