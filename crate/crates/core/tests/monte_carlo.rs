//! Monte Carlo estimators against the exact oracle.

use creditlab::constructions::{gadget_mdp, random_mdp, GadgetSpec, RandomMdpSpec};
use creditlab::cpi::{estimate_advantage, fit_q, CpiConfig, Variant};
use creditlab::mdp::sample_trajectory;
use creditlab::oracle::{
    advantage_under, compute_values, expected_return, improvable_stats, reset_distribution, restricted_reset_distribution,
    tv_distance, visitation,
};
use creditlab::policy::{greedy_from_q, Policy};
use creditlab::rng::{rng_from_seed, SeedTree};
use creditlab::sampling::{credit_sample, q_rollout, ResetSampler};
use creditlab::{cpi, Mdp};
use ndarray::Array2;

fn generated(states: usize, actions: usize, horizon: usize, seed: u64) -> (Mdp, Policy) {
    let g = random_mdp(&RandomMdpSpec::new(states, actions, horizon), &mut rng_from_seed(seed)).unwrap();
    (g.mdp, g.base_policy)
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

#[test]
fn q_rollouts_match_exact_q() {
    let (mdp, pi) = generated(4, 2, 3, 1);
    let values = compute_values(&mdp, &pi).unwrap();
    let mut rng = rng_from_seed(10);
    for h in 0..3 {
        for x in 0..4 {
            for y in 0..2 {
                let draws: Vec<f64> = (0..100_000).map(|_| q_rollout(&mdp, &pi, x, y, h, &mut rng).unwrap()).collect();
                let (m, se) = mean_se(&draws);
                let exact = values.q[[h, x, y]];
                assert!((m - exact).abs() <= 3.0 * se.max(1e-12), "Q[{h},{x},{y}]: {m} vs {exact} (se {se})");
                assert!(draws.iter().all(|&q| (0.0..=3.0 * mdp.r_max).contains(&q)));
            }
        }
    }
}

#[test]
fn visitation_matches_simulated_frequencies() {
    let (mdp, pi) = generated(5, 3, 4, 2);
    let visit = visitation(&mdp, &pi).unwrap();
    let mut counts = Array2::<f64>::zeros((4, 5));
    let mut rng = rng_from_seed(11);
    let n = 100_000;
    for _ in 0..n {
        let traj = sample_trajectory(&mdp, &pi, &mut rng, None).unwrap();
        for (h, s) in traj.steps.iter().enumerate() {
            counts[[h, s.state]] += 1.0;
        }
    }
    for h in 0..4 {
        let freq: Vec<f64> = counts.row(h).iter().map(|c| c / n as f64).collect();
        let tv = tv_distance(&freq, visit.per_step.row(h));
        assert!(tv <= 0.02, "step {h}: TV {tv}");
    }
    let sum: f64 = visit.time_averaged.sum();
    assert!((sum - 1.0).abs() < 1e-12);
}

#[test]
fn returns_match_exact_j() {
    let (mdp, pi) = generated(5, 3, 4, 3);
    let mut rng = rng_from_seed(12);
    let draws: Vec<f64> = (0..100_000).map(|_| sample_trajectory(&mdp, &pi, &mut rng, None).unwrap().total_return).collect();
    let (m, se) = mean_se(&draws);
    let exact = expected_return(&mdp, &pi).unwrap();
    assert!((m - exact).abs() <= 3.0 * se, "{m} vs {exact}");
}

#[test]
fn reset_draws_match_joint_distribution() {
    let (mdp, pi) = generated(5, 3, 4, 4);
    let exact = reset_distribution(&visitation(&mdp, &pi).unwrap());
    let sampler = ResetSampler::new(&mdp, &pi, false).unwrap();
    let mut rng = rng_from_seed(13);
    let n = 100_000;
    let mut counts = Array2::<f64>::zeros(exact.dim());
    for _ in 0..n {
        let d = sampler.draw(&mut rng);
        counts[[d.step, d.state]] += 1.0 / n as f64;
    }
    let tv = tv_distance(counts.iter(), exact.iter());
    assert!(tv <= 0.02, "TV {tv}");
}

#[test]
fn exact_path_reset_draws_match_too() {
    let (mdp, pi) = generated(5, 3, 4, 5);
    let exact = reset_distribution(&visitation(&mdp, &pi).unwrap());
    let sampler = ResetSampler::new(&mdp, &pi, true).unwrap();
    let mut rng = rng_from_seed(14);
    let n = 100_000;
    let mut counts = Array2::<f64>::zeros(exact.dim());
    for _ in 0..n {
        let d = sampler.draw(&mut rng);
        assert_eq!(d.simulated_steps, 0);
        counts[[d.step, d.state]] += 1.0 / n as f64;
    }
    assert!(tv_distance(counts.iter(), exact.iter()) <= 0.02);
}

#[test]
fn gadget_credit_sampler_costs_one_over_p_trials() {
    let spec = GadgetSpec { num_actions: 4, r_max: 1.0, tau: 0.25, p: 0.1, epsilon: 0.001 };
    let (mdp, base) = gadget_mdp(&spec).unwrap();
    let stats = improvable_stats(&mdp, &base, spec.tau, None).unwrap();
    let mut rng = rng_from_seed(15);
    let calls = 10_000;
    let mut trials = 0;
    for _ in 0..calls {
        let d = credit_sample(&mdp, &base, &stats, &mut rng, 100_000).unwrap();
        assert_eq!((d.state, d.step), (0, 0));
        trials += d.trials;
    }
    let mean = trials as f64 / calls as f64;
    assert!((mean - 10.0).abs() <= 1.0, "mean trials {mean}");
}

#[test]
fn credit_sampler_draws_restricted_distribution() {
    let (mdp, pi) = generated(5, 3, 4, 6);
    let values = compute_values(&mdp, &pi).unwrap();
    let tau = 0.5 * values.global_max_advantage();
    let stats = improvable_stats(&mdp, &pi, tau, None).unwrap();
    assert!(stats.p > 0.0);
    let exact = restricted_reset_distribution(&visitation(&mdp, &pi).unwrap(), &stats.masks);
    let mut rng = rng_from_seed(16);
    let n = 100_000;
    let mut counts = Array2::<f64>::zeros(exact.dim());
    for _ in 0..n {
        let d = credit_sample(&mdp, &pi, &stats, &mut rng, 1_000_000).unwrap();
        assert!(stats.contains(d.step, d.state));
        counts[[d.step, d.state]] += 1.0 / n as f64;
    }
    assert!(tv_distance(counts.iter(), exact.iter()) <= 0.02);
}

#[test]
fn fitted_q_is_within_three_se_on_visited_cells() {
    let (mdp, pi) = generated(3, 2, 3, 7);
    let values = compute_values(&mdp, &pi).unwrap();
    let mut config = CpiConfig::new(Variant::Rr, 0.1, 10_000);
    config.use_exact_visitation = false;
    let batch = cpi::collect_samples(&mdp, &pi, &config, None, &mut rng_from_seed(17)).unwrap();
    let fit = fit_q(&batch.samples, pi.dim(), 0.0).unwrap();
    let mut sq = ndarray::Array3::<f64>::zeros(pi.dim());
    for s in &batch.samples {
        sq[[s.step, s.state, s.action]] += (s.q_hat - fit.q[[s.step, s.state, s.action]]).powi(2);
    }
    for (idx, &c) in fit.counts.indexed_iter() {
        if c < 30 {
            continue;
        }
        let sd = (sq[idx] / (c - 1) as f64).sqrt();
        let se = (sd / (c as f64).sqrt()).max(1e-12);
        assert!((fit.q[idx] - values.q[idx]).abs() <= 3.0 * se, "cell {idx:?}");
    }
}

/// With the greedy policy held fixed, the plug-in estimate is unbiased for the
/// policy advantage under the variant's sampling distribution.
#[test]
fn fixed_greedy_estimate_is_unbiased() {
    let (mdp, pi) = generated(3, 3, 2, 8);
    let values = compute_values(&mdp, &pi).unwrap();
    let visit = visitation(&mdp, &pi).unwrap();
    let tau = 0.5 * values.global_max_advantage();
    let stats = improvable_stats(&mdp, &pi, tau, None).unwrap();
    let fixed = greedy_from_q(&values.q);
    let tree = SeedTree::new(18);
    for variant in [Variant::Rr, Variant::Caro] {
        let weights = match variant {
            Variant::Rr => reset_distribution(&visit),
            Variant::Caro => restricted_reset_distribution(&visit, &stats.masks),
        };
        let exact = advantage_under(&values, &weights, &fixed);
        let config = CpiConfig { max_trials: Some(1_000_000), ..CpiConfig::new(variant, tau, 20) };
        let estimates: Vec<f64> = (0..10_000)
            .map(|r| {
                let mut rng = tree.named(&variant.to_string()).child(r).rng();
                let batch = cpi::collect_samples(&mdp, &pi, &config, Some(&stats), &mut rng).unwrap();
                let fit = fit_q(&batch.samples, pi.dim(), 0.0).unwrap();
                estimate_advantage(&batch.samples, &fit, &fixed, &pi)
            })
            .collect();
        let (m, se) = mean_se(&estimates);
        assert!((m - exact).abs() <= 3.0 * se, "{variant}: {m} vs {exact} (se {se})");
    }
}
