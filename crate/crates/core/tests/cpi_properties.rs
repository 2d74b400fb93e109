//! Statistical and structural properties of the CPI step.

use creditlab::constructions::{gadget_mdp, random_mdp, GadgetSpec, RandomMdpSpec};
use creditlab::cpi::{advantage_terms, collect_samples, cpi_step, fit_and_estimate, run_cpi, CpiConfig, Estimator, QFit, StepStatus, Variant};
use creditlab::oracle::{compute_values, expected_return, improvable_stats};
use creditlab::policy::{greedy_from_q, Policy};
use creditlab::rng::{rng_from_seed, SeedTree};
use creditlab::Mdp;
use ndarray::Array3;

fn generated(states: usize, actions: usize, horizon: usize, seed: u64) -> (Mdp, Policy) {
    let g = random_mdp(&RandomMdpSpec::new(states, actions, horizon), &mut rng_from_seed(seed)).unwrap();
    (g.mdp, g.base_policy)
}

fn tau_half(mdp: &Mdp, pi: &Policy) -> f64 {
    0.5 * compute_values(mdp, pi).unwrap().global_max_advantage()
}

fn sd(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

fn reference_gadget() -> GadgetSpec {
    GadgetSpec { num_actions: 4, r_max: 1.0, tau: 0.25, p: 0.1, epsilon: 0.001 }
}

#[test]
fn caro_only_moves_on_the_improvable_set() {
    for seed in 0..10 {
        let (mdp, pi) = generated(5, 3, 3, seed);
        let tau = tau_half(&mdp, &pi);
        let config = CpiConfig { max_trials: Some(1_000_000), ..CpiConfig::new(Variant::Caro, tau, 300) };
        let report = cpi_step(&mdp, &pi, &config, &mut rng_from_seed(100 + seed)).unwrap();
        let stats = improvable_stats(&mdp, &pi, tau, None).unwrap();
        assert!(report.samples.iter().all(|s| s.accepted_via_oracle && stats.contains(s.step, s.state)));
        assert!(report.trials_used >= report.samples_used);
        let alpha = report.alpha_hat;
        for h in 0..3 {
            for x in 0..5 {
                for y in 0..3 {
                    let expect = if stats.contains(h, x) {
                        (1.0 - alpha) * pi.prob(h, x, y) + alpha * report.empirical_greedy.prob(h, x, y)
                    } else {
                        pi.prob(h, x, y)
                    };
                    assert!((report.pi_out.prob(h, x, y) - expect).abs() < 1e-12);
                }
            }
        }
    }
}

#[test]
fn rr_mixes_toward_the_empirical_greedy_everywhere() {
    let (mdp, pi) = generated(4, 3, 3, 20);
    let report = cpi_step(&mdp, &pi, &CpiConfig::new(Variant::Rr, 0.1, 400), &mut rng_from_seed(21)).unwrap();
    assert_eq!(report.status, StepStatus::Updated);
    assert_eq!(report.trials_used, 0);
    let expect_alpha = (report.a_hat / 9.0).min(1.0);
    assert!((report.alpha_hat - expect_alpha).abs() < 1e-15);
    let greedy = greedy_from_q(&report.q_fit.as_ref().unwrap().q);
    assert_eq!(greedy, report.empirical_greedy);
    for h in 0..3 {
        for x in 0..4 {
            for y in 0..3 {
                let expect = (1.0 - expect_alpha) * pi.prob(h, x, y) + expect_alpha * greedy.prob(h, x, y);
                assert!((report.pi_out.prob(h, x, y) - expect).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn advantage_terms_are_bounded() {
    for seed in 0..10 {
        let (mdp, pi) = generated(5, 4, 4, seed);
        let batch = collect_samples(&mdp, &pi, &CpiConfig::new(Variant::Rr, 0.1, 2000), None, &mut rng_from_seed(seed)).unwrap();
        let fit = fit_and_estimate(&batch.samples, &pi, 0.0, Estimator::PlugIn).unwrap();
        let terms = advantage_terms(&batch.samples, &fit.q_fit, &fit.greedy, &pi);
        let (k, h, r) = (4.0, 4.0, mdp.r_max);
        assert!(terms.iter().all(|t| t.abs() <= k * h * r + 1e-12));
        let var = sd(&terms).powi(2);
        assert!(var <= 2.0 * k * h * h * r * r, "variance {var}");
    }
}

/// With exact `Q` and the fixed greedy action the gadget's terms have the
/// closed-form mean and second moment.
#[test]
fn gadget_term_moments_match_closed_form() {
    let spec = reference_gadget();
    let (mdp, base) = gadget_mdp(&spec).unwrap();
    let values = compute_values(&mdp, &base).unwrap();
    let exact = QFit { q: values.q.clone(), counts: Array3::ones(values.q.dim()) };
    let plus = greedy_from_q(&values.q);
    assert_eq!(plus.prob(0, 0, 1), 1.0);
    assert_eq!(plus.prob(0, 1, 1), 1.0);
    let batch = collect_samples(&mdp, &base, &CpiConfig::new(Variant::Rr, spec.tau, 200_000), None, &mut rng_from_seed(30)).unwrap();
    let terms = advantage_terms(&batch.samples, &exact, &plus, &base);
    let n = terms.len() as f64;
    let mean = terms.iter().sum::<f64>() / n;
    let second: Vec<f64> = terms.iter().map(|t| t * t).collect();
    let m2 = second.iter().sum::<f64>() / n;
    assert!((mean - spec.policy_advantage()).abs() <= 3.0 * sd(&terms) / n.sqrt());
    assert!((m2 - spec.second_moment()).abs() <= 3.0 * sd(&second) / n.sqrt());
}

#[test]
fn estimate_spread_shrinks_as_root_n() {
    let (mdp, pi) = generated(4, 3, 3, 40);
    let tree = SeedTree::new(41);
    let mut points = Vec::new();
    for n in [100usize, 1000, 10_000] {
        let estimates: Vec<f64> = (0..200)
            .map(|r| {
                let mut rng = tree.child(n as u64).child(r).rng();
                let mut config = CpiConfig::new(Variant::Rr, 0.1, n);
                config.use_exact_visitation = true;
                let batch = collect_samples(&mdp, &pi, &config, None, &mut rng).unwrap();
                fit_and_estimate(&batch.samples, &pi, 0.0, Estimator::PlugIn).unwrap().a_hat
            })
            .collect();
        points.push(((n as f64).ln(), sd(&estimates).ln()));
    }
    let mx = points.iter().map(|p| p.0).sum::<f64>() / 3.0;
    let my = points.iter().map(|p| p.1).sum::<f64>() / 3.0;
    let slope = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / points.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    assert!((slope + 0.5).abs() <= 0.1, "slope {slope}");
}

#[test]
fn gadget_caro_reliably_improves() {
    let spec = reference_gadget();
    let (mdp, base) = gadget_mdp(&spec).unwrap();
    let config = CpiConfig { max_trials: Some(100_000), ..CpiConfig::new(Variant::Caro, spec.tau, 2000) };
    let tree = SeedTree::new(50);
    let improved = (0..500)
        .filter(|&r| {
            let report = cpi_step(&mdp, &base, &config, &mut tree.child(r).rng()).unwrap();
            report.improvement() > 0.0
        })
        .count();
    assert!(improved >= 475, "{improved}/500");
}

#[test]
fn gadget_caro_beats_rr_on_average() {
    let spec = reference_gadget();
    let (mdp, base) = gadget_mdp(&spec).unwrap();
    let tree = SeedTree::new(60);
    let mean_gain = |variant: Variant| {
        let config = CpiConfig { max_trials: Some(100_000), ..CpiConfig::new(variant, spec.tau, 200) };
        (0..200)
            .map(|r| cpi_step(&mdp, &base, &config, &mut tree.child(r).named(&variant.to_string()).rng()).unwrap().improvement())
            .sum::<f64>()
            / 200.0
    };
    let (rr, caro) = (mean_gain(Variant::Rr), mean_gain(Variant::Caro));
    assert!(caro > rr, "caro {caro} rr {rr}");
}

#[test]
fn zero_iterations_is_empty() {
    let (mdp, pi) = generated(3, 2, 2, 70);
    let trace = run_cpi(&mdp, &pi, 0, &CpiConfig::new(Variant::Rr, 0.1, 10), &mut rng_from_seed(0)).unwrap();
    assert!(trace.is_empty());
}

#[test]
fn optimal_policy_is_a_fixed_point_for_caro() {
    let (mdp, pi) = generated(4, 3, 3, 71);
    // Policy iteration to the optimum.
    let mut opt = pi;
    for _ in 0..10 {
        opt = greedy_from_q(&compute_values(&mdp, &opt).unwrap().q);
    }
    assert!(compute_values(&mdp, &opt).unwrap().global_max_advantage() <= 1e-12);
    let trace = run_cpi(&mdp, &opt, 5, &CpiConfig::new(Variant::Caro, 1e-6, 50), &mut rng_from_seed(1)).unwrap();
    assert_eq!(trace.len(), 5);
    for step in &trace {
        assert_eq!(step.status, StepStatus::EmptyImprovableSet);
        assert_eq!(step.pi_out, opt);
    }
}

#[test]
fn caro_iterations_rarely_lose_value() {
    let runs = 20;
    let monotone = (0..runs)
        .filter(|&seed| {
            let (mdp, pi) = generated(5, 3, 3, 200 + seed);
            let tau = tau_half(&mdp, &pi);
            let config = CpiConfig { max_trials: Some(1_000_000), ..CpiConfig::new(Variant::Caro, tau, 500) };
            let trace = run_cpi(&mdp, &pi, 10, &config, &mut rng_from_seed(300 + seed)).unwrap();
            let j0 = expected_return(&mdp, &pi).unwrap();
            let mut prev = j0;
            trace.iter().all(|s| {
                let ok = s.j_after >= prev - 1e-12 && (s.j_before - prev).abs() < 1e-12;
                prev = s.j_after;
                ok
            })
        })
        .count();
    assert!(monotone * 10 >= runs as usize * 9, "{monotone}/{runs}");
}
