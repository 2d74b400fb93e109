//! Localization-quality audit: how often a reset at the localized index
//! leads to a corrected chain, split by whether the index was clean.

use std::collections::BTreeMap;

use rand::Rng;
use serde::Serialize;

use crate::error::Result;
use crate::thought::buffer::{build_buffer, BufferConfig, BufferVariant, GroupKind, Split};
use crate::thought::localizer::{is_clean, Localizer};
use crate::thought::loss::{group_mean_signal, per_token_signal};
use crate::thought::policy::ThoughtPolicy;
use crate::thought::task::TrapTask;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditRecord {
    pub record: usize,
    pub prompt: usize,
    pub fallback: bool,
    /// Localized reset index (0 when no seed was found).
    pub index: usize,
    pub truth: usize,
    pub deviation: i64,
    pub clean: bool,
    pub suffix_successes: usize,
    /// At least one of the `g` suffixes succeeded.
    pub pass_at_g: bool,
    pub g_base: Option<f64>,
    pub g_shared_prefix: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeviationBucket {
    pub deviation: i64,
    pub records: usize,
    pub correction_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditSummary {
    pub records: usize,
    pub fallbacks: usize,
    pub clean_records: usize,
    pub erroneous_records: usize,
    pub clean_pass_at_g: Option<f64>,
    pub erroneous_pass_at_g: Option<f64>,
    pub by_deviation: Vec<DeviationBucket>,
    pub dual_signal_records: usize,
    pub mean_g_base: Option<f64>,
    pub mean_g_shared_prefix: Option<f64>,
    /// Fraction of dual-signal records with `g_shared_prefix > g_base`.
    pub shared_prefix_wins: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct AuditReport {
    pub records: Vec<AuditRecord>,
    pub summary: AuditSummary,
}

fn mean(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.into_iter().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Build `num_records` SRPO buffers (one reset, base group included), cycling
/// over prompts, and score each localization.
pub fn localization_audit<R: Rng + ?Sized>(
    task: &TrapTask,
    policy: &ThoughtPolicy,
    localizer: Localizer,
    g: usize,
    num_records: usize,
    rng: &mut R,
) -> Result<AuditReport> {
    let config = BufferConfig::new(g, BufferVariant::Srpo, Split::OneByG, localizer);
    let mut records = Vec::with_capacity(num_records);
    for record in 0..num_records {
        let prompt = record % task.num_prompts();
        let buffer = build_buffer(task, policy, prompt, &config, rng)?;
        let signal = group_mean_signal(&buffer, &per_token_signal(task, policy, &buffer)?);
        let pick = |kind| buffer.groups.iter().zip(&signal).find(|(g, _)| g.kind == kind).and_then(|(_, s)| *s);
        let truth = task.prompts[prompt].trap_step;
        let rec = match buffer.shared_prefix_groups().next() {
            Some(sp) => {
                let index = sp.reset_index.expect("shared-prefix groups carry their reset");
                let successes = sp.successes();
                AuditRecord {
                    record,
                    prompt,
                    fallback: false,
                    index,
                    truth,
                    deviation: index as i64 - truth as i64,
                    clean: is_clean(index, truth),
                    suffix_successes: successes,
                    pass_at_g: successes > 0,
                    g_base: pick(GroupKind::Base),
                    g_shared_prefix: pick(GroupKind::SharedPrefix),
                }
            }
            None => AuditRecord {
                record,
                prompt,
                fallback: true,
                index: 0,
                truth,
                deviation: 0,
                clean: false,
                suffix_successes: 0,
                pass_at_g: false,
                g_base: pick(GroupKind::Base),
                g_shared_prefix: None,
            },
        };
        records.push(rec);
    }
    let summary = summarize(&records);
    Ok(AuditReport { records, summary })
}

pub fn summarize(records: &[AuditRecord]) -> AuditSummary {
    let live: Vec<&AuditRecord> = records.iter().filter(|r| !r.fallback).collect();
    let rate = |rs: &[&AuditRecord]| mean(rs.iter().map(|r| r.pass_at_g as u8 as f64));
    let clean: Vec<&AuditRecord> = live.iter().copied().filter(|r| r.clean).collect();
    let erroneous: Vec<&AuditRecord> = live.iter().copied().filter(|r| !r.clean).collect();

    let mut buckets: BTreeMap<i64, Vec<&AuditRecord>> = BTreeMap::new();
    for r in &live {
        buckets.entry(r.deviation).or_default().push(r);
    }
    let by_deviation = buckets
        .into_iter()
        .map(|(deviation, rs)| DeviationBucket { deviation, records: rs.len(), correction_rate: rate(&rs).unwrap_or(0.0) })
        .collect();

    let dual: Vec<(f64, f64)> = live.iter().filter_map(|r| Some((r.g_base?, r.g_shared_prefix?))).collect();
    AuditSummary {
        records: records.len(),
        fallbacks: records.len() - live.len(),
        clean_records: clean.len(),
        erroneous_records: erroneous.len(),
        clean_pass_at_g: rate(&clean),
        erroneous_pass_at_g: rate(&erroneous),
        by_deviation,
        dual_signal_records: dual.len(),
        mean_g_base: mean(dual.iter().map(|d| d.0)),
        mean_g_shared_prefix: mean(dual.iter().map(|d| d.1)),
        shared_prefix_wins: mean(dual.iter().map(|d| (d.1 > d.0) as u8 as f64)),
    }
}
