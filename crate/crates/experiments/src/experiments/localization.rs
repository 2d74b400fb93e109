use creditlab::thought::audit::summarize;
use creditlab::thought::{localization_audit, AuditReport};
use rayon::prelude::*;

use super::srpo_toy::instance;
use super::{seed_root, ExperimentOutput};
use crate::config::ExperimentConfig;
use crate::error::{ReplicateContext, Result};
use crate::plot::PlotSpec;
use crate::table::{cell, opt_cell, Check, Table};

/// Localization audits on independent tasks, pooled for the checks.
pub fn run(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    let params = config.localization_quality();
    let stream = seed_root(config).named("replicates");
    let reports: Vec<AuditReport> = (0..config.replicates)
        .into_par_iter()
        .map(|r| {
            let tree = stream.child(r as u64);
            let (task, policy) = instance(&params.setup, tree).replicate(r)?;
            localization_audit(&task, &policy, params.localizer, params.g, params.records, &mut tree.named("audit").rng()).replicate(r)
        })
        .collect::<Result<_>>()?;

    let mut replicates = Table::new(&[
        "replicate",
        "record",
        "prompt",
        "fallback",
        "index",
        "truth",
        "deviation",
        "clean",
        "suffix_successes",
        "pass_at_g",
        "g_base",
        "g_shared_prefix",
    ]);
    let mut per_replicate = Table::new(&[
        "replicate",
        "records",
        "fallbacks",
        "clean_pass_at_g",
        "erroneous_pass_at_g",
        "dual_signal_records",
        "shared_prefix_wins",
    ]);
    for (r, rep) in reports.iter().enumerate() {
        for a in &rep.records {
            replicates.push(vec![
                cell(r),
                cell(a.record),
                cell(a.prompt),
                cell(a.fallback),
                cell(a.index),
                cell(a.truth),
                cell(a.deviation),
                cell(a.clean),
                cell(a.suffix_successes),
                cell(a.pass_at_g),
                opt_cell(a.g_base),
                opt_cell(a.g_shared_prefix),
            ]);
        }
        let s = &rep.summary;
        per_replicate.push(vec![
            cell(r),
            cell(s.records),
            cell(s.fallbacks),
            opt_cell(s.clean_pass_at_g),
            opt_cell(s.erroneous_pass_at_g),
            cell(s.dual_signal_records),
            opt_cell(s.shared_prefix_wins),
        ]);
    }

    let pooled: Vec<_> = reports.iter().flat_map(|r| r.records.iter().cloned()).collect();
    let summary = summarize(&pooled);
    let mut aggregate = Table::new(&["deviation", "records", "correction_rate"]);
    for b in &summary.by_deviation {
        aggregate.push(vec![cell(b.deviation), cell(b.records), cell(b.correction_rate)]);
    }

    let mut checks = Vec::new();
    if let (Some(clean), Some(err)) = (summary.clean_pass_at_g, summary.erroneous_pass_at_g) {
        checks.push(Check {
            name: "clean_minus_erroneous_pass_at_g".into(),
            value: clean - err,
            threshold: "> 0".into(),
            pass: clean > err,
        });
    } else if !pooled.is_empty() {
        checks.push(Check::at_least("both_prefix_kinds_observed", 0.0, 1.0));
    }

    let plots = vec![PlotSpec::lines("correction_rate", "aggregate.csv", "deviation", "correction_rate")
        .titled("Pass@G of the shared-prefix group by localization deviation")];
    Ok(ExperimentOutput { replicates, aggregate, extra: vec![("per_replicate".into(), per_replicate)], checks, plots })
}
