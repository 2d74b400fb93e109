use creditlab::constructions::gadget_mdp;
use creditlab::cpi::{collect_samples, estimate_advantage, fit_q, CpiConfig, Variant};
use creditlab::oracle::compute_values;
use creditlab::policy::greedy_from_q;
use rayon::prelude::*;

use super::{seed_root, ExperimentOutput};
use crate::config::ExperimentConfig;
use crate::error::{ReplicateContext, Result};
use crate::plot::PlotSpec;
use crate::stats::{mean, std_dev};
use crate::table::{cell, Check, Table};

/// Random-reset `A_hat` on the gadget with the greedy policy held at the
/// exact improving action, at each `n` of the grid.
pub fn run(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    let params = config.tightness();
    let spec = params.gadget();
    let (mdp, base) = gadget_mdp(&spec)?;
    let plus = greedy_from_q(&compute_values(&mdp, &base)?.q);
    let grid = params.resolved_grid();
    let limit = spec.tightness_limit();
    let stream = seed_root(config).named("replicates");

    let estimates: Vec<Vec<f64>> = (0..config.replicates)
        .into_par_iter()
        .map(|r| {
            grid.iter()
                .map(|&n| {
                    let mut rng = stream.child(r as u64).child(n as u64).rng();
                    let cpi = CpiConfig { use_exact_visitation: true, ..CpiConfig::new(Variant::Rr, spec.tau, n) };
                    let batch = collect_samples(&mdp, &base, &cpi, None, &mut rng).replicate(r)?;
                    let fit = fit_q(&batch.samples, base.dim(), 0.0).replicate(r)?;
                    Ok(estimate_advantage(&batch.samples, &fit, &plus, &base))
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let mut replicates = Table::new(&["replicate", "n", "a_hat", "nonpositive"]);
    for (r, row) in estimates.iter().enumerate() {
        for (&n, &a) in grid.iter().zip(row) {
            replicates.push(vec![cell(r), cell(n), cell(a), cell(a <= 0.0)]);
        }
    }

    let mut aggregate = Table::new(&[
        "n",
        "replicates",
        "failure_rate",
        "failure_se",
        "mean_a_hat",
        "sd_a_hat",
        "policy_advantage",
        "term_variance",
        "tightness_limit",
    ]);
    let mut checks = Vec::new();
    if config.replicates > 0 {
        for (i, &n) in grid.iter().enumerate() {
            let column: Vec<f64> = estimates.iter().map(|row| row[i]).collect();
            let reps = column.len() as f64;
            let rate = column.iter().filter(|&&a| a <= 0.0).count() as f64 / reps;
            aggregate.push(vec![
                cell(n),
                cell(column.len()),
                cell(rate),
                cell((rate * (1.0 - rate) / reps).sqrt()),
                cell(mean(&column)),
                cell(std_dev(&column)),
                cell(spec.policy_advantage()),
                cell(spec.term_variance()),
                cell(limit),
            ]);
            if n as f64 <= limit {
                checks.push(Check::at_least(format!("failure_rate_n{n}"), rate, params.min_failure_rate));
            }
        }
    }

    let plots = vec![PlotSpec::lines("failure_rate", "aggregate.csv", "n", "failure_rate")
        .titled("Pr(A_hat <= 0) vs n on the gadget")
        .log_x()
        .reference(params.min_failure_rate)];
    Ok(ExperimentOutput { replicates, aggregate, extra: Vec::new(), checks, plots })
}
