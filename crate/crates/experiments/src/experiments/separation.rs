use creditlab::constructions::random_mdp;
use creditlab::cpi::{collect_samples, fit_and_estimate, CpiConfig, Variant};
use creditlab::oracle::improvable_stats;
use creditlab::rng::SeedTree;
use creditlab::{Mdp, Policy};
use rayon::prelude::*;

use super::{seed_root, ExperimentOutput};
use crate::config::{ExperimentConfig, SeparationParams};
use crate::error::{ReplicateContext, Result};
use crate::plot::PlotSpec;
use crate::stats::{mean, ols_slope};
use crate::table::{cell, opt_cell, Check, Table};

struct Level {
    target: f64,
    realized: f64,
    mdp: Mdp,
    base: Policy,
}

struct Scan {
    variant: Variant,
    level: usize,
    /// `(grid index, n, per-replicate A_hat)` for every grid point evaluated.
    points: Vec<(usize, usize, Vec<f64>)>,
    n_star: Option<usize>,
}

fn goal(variant: Variant, tau: f64, realized: f64) -> f64 {
    match variant {
        Variant::Rr => tau * realized,
        Variant::Caro => tau,
    }
}

/// Scan the grid upward until the pass fraction is reached.
fn scan(params: &SeparationParams, level: &Level, variant: Variant, reps: usize, stream: SeedTree) -> Result<Vec<(usize, usize, Vec<f64>)>> {
    let tau = params.family.tau;
    let stats = improvable_stats(&level.mdp, &level.base, tau, None)?;
    let max_trials = ((200.0 / level.realized).ceil() as usize).max(10_000);
    let threshold = goal(variant, tau, level.realized) / 2.0;
    let mut points = Vec::new();
    if reps == 0 {
        return Ok(points);
    }
    for (k, n) in params.grid().into_iter().enumerate() {
        let cpi = CpiConfig {
            max_trials: Some(max_trials),
            use_exact_visitation: params.use_exact_visitation,
            estimator: params.estimator,
            ..CpiConfig::new(variant, tau, n)
        };
        let a_hats: Vec<f64> = (0..reps)
            .into_par_iter()
            .map(|r| {
                let mut rng = stream.child(k as u64).child(r as u64).rng();
                let batch = collect_samples(&level.mdp, &level.base, &cpi, Some(&stats), &mut rng).replicate(r)?;
                let fit = fit_and_estimate(&batch.samples, &level.base, cpi.default_q, cpi.estimator).replicate(r)?;
                Ok(fit.a_hat)
            })
            .collect::<Result<_>>()?;
        let frac = a_hats.iter().filter(|&&a| a >= threshold).count() as f64 / reps as f64;
        points.push((k, n, a_hats));
        if frac >= params.pass_fraction {
            break;
        }
    }
    Ok(points)
}

/// `n*` per variant and coverage level. Replicate streams are shared across
/// levels and variants at each grid point.
pub fn run(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    let params = config.separation();
    let root = seed_root(config);
    let tau = params.family.tau;
    let levels: Vec<Level> = params
        .coverages
        .iter()
        .map(|&target| {
            let generated = random_mdp(&params.family.spec(target), &mut root.named("mdp").named(&target.to_string()).rng())?;
            Ok(Level {
                target,
                realized: generated.realized_coverage.expect("coverage mode"),
                mdp: generated.mdp,
                base: generated.base_policy,
            })
        })
        .collect::<Result<_>>()?;

    let stream = root.named("replicates");
    let mut scans = Vec::new();
    for variant in [Variant::Rr, Variant::Caro] {
        for (li, level) in levels.iter().enumerate() {
            let points = scan(&params, level, variant, config.replicates, stream)?;
            let threshold = goal(variant, tau, level.realized) / 2.0;
            let n_star = points.last().and_then(|(_, n, a)| {
                let frac = a.iter().filter(|&&x| x >= threshold).count() as f64 / a.len() as f64;
                (frac >= params.pass_fraction).then_some(*n)
            });
            scans.push(Scan { variant, level: li, points, n_star });
        }
    }

    let mut replicates = Table::new(&["variant", "target_coverage", "realized_coverage", "n", "replicate", "a_hat", "passed"]);
    let mut aggregate =
        Table::new(&["variant", "target_coverage", "realized_coverage", "n", "replicates", "pass_fraction", "mean_a_hat", "goal"]);
    let mut n_star = Table::new(&["variant", "target_coverage", "realized_coverage", "n_star"]);
    for s in &scans {
        let level = &levels[s.level];
        let g = goal(s.variant, tau, level.realized);
        for (_, n, a_hats) in &s.points {
            for (r, &a) in a_hats.iter().enumerate() {
                replicates.push(vec![
                    cell(s.variant),
                    cell(level.target),
                    cell(level.realized),
                    cell(n),
                    cell(r),
                    cell(a),
                    cell(a >= g / 2.0),
                ]);
            }
            let frac = a_hats.iter().filter(|&&a| a >= g / 2.0).count() as f64 / a_hats.len() as f64;
            aggregate.push(vec![
                cell(s.variant),
                cell(level.target),
                cell(level.realized),
                cell(n),
                cell(a_hats.len()),
                cell(frac),
                cell(mean(a_hats)),
                cell(g),
            ]);
        }
        if config.replicates > 0 {
            n_star.push(vec![cell(s.variant), cell(level.target), cell(level.realized), opt_cell(s.n_star)]);
        }
    }

    let mut checks = Vec::new();
    if config.replicates > 0 {
        let found = |v: Variant| -> Option<Vec<(f64, f64)>> {
            scans.iter().filter(|s| s.variant == v).map(|s| Some((levels[s.level].realized, s.n_star? as f64))).collect()
        };
        match found(Variant::Rr) {
            Some(rr) => {
                let mut by_p = rr.clone();
                by_p.sort_by(|a, b| b.0.total_cmp(&a.0));
                let increasing = by_p.windows(2).all(|w| w[1].1 > w[0].1);
                checks.push(Check::at_least("rr_n_star_increases_as_coverage_falls", increasing as u8 as f64, 1.0));
                let xs: Vec<f64> = rr.iter().map(|p| p.0.ln()).collect();
                let ys: Vec<f64> = rr.iter().map(|p| p.1.ln()).collect();
                checks.push(Check::within("rr_log_log_slope", ols_slope(&xs, &ys), params.rr_slope_min, params.rr_slope_max));
            }
            None => checks.push(Check::at_least("rr_n_star_found", 0.0, 1.0)),
        }
        match found(Variant::Caro) {
            Some(caro) => {
                let lo = caro.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
                let hi = caro.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
                checks.push(Check::less_than("caro_n_star_ratio", hi / lo, params.caro_max_ratio));
            }
            None => checks.push(Check::at_least("caro_n_star_found", 0.0, 1.0)),
        }
    }

    let plots = vec![
        PlotSpec::lines("n_star", "n_star.csv", "realized_coverage", "n_star")
            .titled("n* vs coverage")
            .by("variant")
            .log_x()
            .log_y(),
        PlotSpec::points("pass_fraction", "aggregate.csv", "n", "pass_fraction")
            .titled("pass fraction along the grid")
            .by("variant")
            .log_x()
            .reference(params.pass_fraction),
    ];
    Ok(ExperimentOutput { replicates, aggregate, extra: vec![("n_star".into(), n_star)], checks, plots })
}
