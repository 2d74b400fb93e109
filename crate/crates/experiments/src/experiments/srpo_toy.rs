use creditlab::rng::SeedTree;
use creditlab::thought::{train, BufferVariant, ThoughtPolicy, TrainConfig, TrainTrace, TrapTask};
use rayon::prelude::*;

use super::{seed_root, ExperimentOutput};
use crate::config::{ExperimentConfig, ThoughtSetup};
use crate::error::{ReplicateContext, Result};
use crate::plot::PlotSpec;
use crate::stats::{mean, std_dev};
use crate::table::{cell, opt_cell, Check, Table};

const VARIANTS: [BufferVariant; 3] = [BufferVariant::Grpo, BufferVariant::Rrpo, BufferVariant::Srpo];

/// Task and initial policy for one replicate.
pub(crate) fn instance(setup: &ThoughtSetup, tree: SeedTree) -> creditlab::Result<(TrapTask, ThoughtPolicy)> {
    let task = TrapTask::random(
        setup.branching,
        setup.depth,
        setup.prompts,
        (setup.trap_min, setup.trap_max),
        &mut tree.named("task").rng(),
    )?;
    let policy = ThoughtPolicy::biased(&task, setup.bias, setup.noise, setup.temperature, &mut tree.named("policy").rng())?;
    Ok((task, policy))
}

/// Train all three variants from the same task and initial policy per replicate.
pub fn run(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    let params = config.srpo_toy();
    let stream = seed_root(config).named("replicates");
    let traces: Vec<Vec<TrainTrace>> = (0..config.replicates)
        .into_par_iter()
        .map(|r| {
            let tree = stream.child(r as u64);
            let (task, policy) = instance(&params.setup, tree).replicate(r)?;
            VARIANTS
                .iter()
                .map(|&v| {
                    let tc = TrainConfig { buffer: params.buffer(v), learning_rate: params.learning_rate, updates: params.updates };
                    train(&task, &policy, &tc, &mut tree.named(&v.to_string()).rng()).replicate(r)
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let mut replicates = Table::new(&["replicate", "variant", "initial_success", "final_success"]);
    let mut updates = Table::new(&[
        "replicate",
        "variant",
        "update",
        "success",
        "loss",
        "fallbacks",
        "degenerate_groups",
        "dual_signal_prompts",
        "g_base",
        "g_shared_prefix",
    ]);
    for (r, per_variant) in traces.iter().enumerate() {
        for (v, trace) in VARIANTS.iter().zip(per_variant) {
            replicates.push(vec![cell(r), cell(v), cell(trace.initial_success), cell(trace.final_success())]);
            for u in &trace.records {
                updates.push(vec![
                    cell(r),
                    cell(v),
                    cell(u.update),
                    cell(u.success),
                    cell(u.loss),
                    cell(u.fallbacks),
                    cell(u.degenerate_groups),
                    cell(u.dual_signal_prompts),
                    opt_cell(u.g_base),
                    opt_cell(u.g_shared_prefix),
                ]);
            }
        }
    }

    let mut aggregate = Table::new(&["variant", "replicates", "mean_final_success", "sd_final_success", "srpo_wins"]);
    let mut curves = Table::new(&["variant", "update", "mean_success"]);
    let mut checks = Vec::new();
    if !traces.is_empty() {
        let finals = |i: usize| -> Vec<f64> { traces.iter().map(|t| t[i].final_success()).collect() };
        let srpo = finals(2);
        for (i, v) in VARIANTS.iter().enumerate() {
            let f = finals(i);
            let wins = srpo.iter().zip(&f).filter(|(s, o)| s > o).count();
            aggregate.push(vec![cell(v), cell(f.len()), cell(mean(&f)), cell(std_dev(&f)), cell(wins)]);
            for u in 0..params.updates {
                let at: Vec<f64> = traces.iter().map(|t| t[i].records[u].success).collect();
                curves.push(vec![cell(v), cell(u + 1), cell(mean(&at))]);
            }
        }
        let (grpo, rrpo) = (finals(0), finals(1));
        let beats_both = (0..srpo.len()).filter(|&r| srpo[r] > grpo[r] && srpo[r] > rrpo[r]).count();
        checks.push(Check::at_least(
            "srpo_beats_grpo_and_rrpo_fraction",
            beats_both as f64 / srpo.len() as f64,
            params.min_win_fraction,
        ));

        let dual: Vec<(f64, f64)> = traces
            .iter()
            .flat_map(|t| t[2].records.iter())
            .filter_map(|u| Some((u.g_shared_prefix?, u.g_base?)))
            .collect();
        let sp_wins = dual.iter().filter(|(sp, b)| sp > b).count();
        let frac = if dual.is_empty() { 0.0 } else { sp_wins as f64 / dual.len() as f64 };
        checks.push(Check { name: "shared_prefix_signal_majority".into(), value: frac, threshold: "> 0.5".into(), pass: frac > 0.5 });
    }

    let plots = vec![PlotSpec::lines("success_curves", "curves.csv", "update", "mean_success")
        .titled("mean exact success during training")
        .by("variant")];
    Ok(ExperimentOutput {
        replicates,
        aggregate,
        extra: vec![("updates".into(), updates), ("curves".into(), curves)],
        checks,
        plots,
    })
}
