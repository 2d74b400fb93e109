use creditlab::constructions::random_mdp;
use creditlab::cpi::{cpi_step, CpiConfig, CpiStepReport, Variant};
use rayon::prelude::*;

use super::{seed_root, ExperimentOutput};
use crate::config::ExperimentConfig;
use crate::error::{ReplicateContext, Result};
use crate::plot::PlotSpec;
use crate::stats::{mean, paired_t_test, std_dev};
use crate::table::{cell, Check, Table};

/// One CPI step of each variant from the same base policy, paired by
/// replicate: both variants of replicate `r` start from the same stream.
pub fn run(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    let params = config.cpi_compare();
    let root = seed_root(config);
    let tau = params.family.tau;
    let generated = random_mdp(&params.family.spec(params.target_coverage), &mut root.named("mdp").rng())?;
    let realized = generated.realized_coverage.expect("coverage mode");
    let (mdp, base) = (&generated.mdp, &generated.base_policy);
    let max_trials = ((200.0 / realized).ceil() as usize).max(10_000);
    let stream = root.named("replicates");

    let pairs: Vec<(CpiStepReport, CpiStepReport)> = (0..config.replicates)
        .into_par_iter()
        .map(|r| {
            let step = |variant| {
                let cpi = CpiConfig {
                    max_trials: Some(max_trials),
                    use_exact_visitation: params.use_exact_visitation,
                    estimator: params.estimator,
                    ..CpiConfig::new(variant, tau, params.n)
                };
                cpi_step(mdp, base, &cpi, &mut stream.child(r as u64).rng()).replicate(r)
            };
            Ok((step(Variant::Rr)?, step(Variant::Caro)?))
        })
        .collect::<Result<_>>()?;

    let mut replicates = Table::new(&[
        "replicate",
        "rr_gain",
        "caro_gain",
        "difference",
        "rr_status",
        "caro_status",
        "rr_alpha",
        "caro_alpha",
        "caro_trials",
    ]);
    for (r, (rr, caro)) in pairs.iter().enumerate() {
        replicates.push(vec![
            cell(r),
            cell(rr.improvement()),
            cell(caro.improvement()),
            cell(caro.improvement() - rr.improvement()),
            cell(rr.status),
            cell(caro.status),
            cell(rr.alpha_hat),
            cell(caro.alpha_hat),
            cell(caro.trials_used),
        ]);
    }

    let rr: Vec<f64> = pairs.iter().map(|p| p.0.improvement()).collect();
    let caro: Vec<f64> = pairs.iter().map(|p| p.1.improvement()).collect();
    let mut aggregate =
        Table::new(&["variant", "replicates", "mean_gain", "sd_gain", "noop_rate", "coverage", "n"]);
    let mut checks = Vec::new();
    let mut differences = Table::new(&["rank", "difference"]);
    if !pairs.is_empty() {
        for (variant, gains, idx) in [(Variant::Rr, &rr, 0), (Variant::Caro, &caro, 1)] {
            let noops = pairs.iter().filter(|p| if idx == 0 { p.0.status.is_noop() } else { p.1.status.is_noop() }).count();
            aggregate.push(vec![
                cell(variant),
                cell(gains.len()),
                cell(mean(gains)),
                cell(std_dev(gains)),
                cell(noops as f64 / gains.len() as f64),
                cell(realized),
                cell(params.n),
            ]);
        }
        let test = paired_t_test(&caro, &rr);
        checks.push(Check::less_than("paired_t_p_value", test.p_one_sided, params.significance));
        checks.push(Check {
            name: "caro_mean_gain".into(),
            value: mean(&caro),
            threshold: "> 0".into(),
            pass: mean(&caro) > 0.0,
        });
        let mut sorted: Vec<f64> = caro.iter().zip(&rr).map(|(c, r)| c - r).collect();
        sorted.sort_by(f64::total_cmp);
        for (i, d) in sorted.iter().enumerate() {
            differences.push(vec![cell(i), cell(d)]);
        }
    }

    let plots = vec![PlotSpec::lines("differences", "differences.csv", "rank", "difference")
        .titled("sorted paired gain differences (CARO - RR)")
        .reference(0.0)];
    Ok(ExperimentOutput { replicates, aggregate, extra: vec![("differences".into(), differences)], checks, plots })
}
