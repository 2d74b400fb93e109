//! `summary.md` for one artifact directory or a suite of them.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::runner::{verify_manifest, CHECKS, MANIFEST, SNAPSHOT};
use crate::table::{fmt_num, Check, Table};

pub const SUMMARY: &str = "summary.md";

struct Page {
    config: ExperimentConfig,
    dir: PathBuf,
    files: Vec<String>,
    checks: Vec<Check>,
}

fn read_page(dir: &Path) -> Result<Page> {
    let files = verify_manifest(dir)?;
    let snapshot = dir.join(SNAPSHOT);
    let config = ExperimentConfig::load(&snapshot)
        .map_err(|e| Error::CorruptArtifact { path: snapshot.clone(), reason: e.to_string() })?;
    let checks_path = dir.join(CHECKS);
    let checks = Check::from_table(&Table::read(&checks_path)?)
        .ok_or_else(|| Error::CorruptArtifact { path: checks_path, reason: "unreadable checks table".into() })?;
    Ok(Page { config, dir: dir.to_path_buf(), files, checks })
}

/// Experiment directories: `dir` itself if it has a manifest, else its
/// immediate subdirectories that do, in name order.
fn experiment_dirs(dir: &Path) -> Result<Vec<PathBuf>> {
    if dir.join(MANIFEST).exists() {
        return Ok(vec![dir.to_path_buf()]);
    }
    if !dir.is_dir() {
        return Err(Error::MissingArtifact(dir.to_path_buf()));
    }
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(MANIFEST).exists())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(Error::MissingArtifact(dir.join(MANIFEST)));
    }
    Ok(dirs)
}

fn render_page(out: &mut String, page: &Page, base: &Path) {
    let kind = page.config.experiment;
    let rel = page.dir.strip_prefix(base).unwrap_or(&page.dir);
    let prefix = if rel.as_os_str().is_empty() { String::new() } else { format!("{}/", rel.display()) };
    let verdict = if page.checks.is_empty() {
        "NO CHECKS"
    } else if page.checks.iter().all(|c| c.pass) {
        "PASS"
    } else {
        "FAIL"
    };
    writeln!(out, "## {kind}: {verdict}\n").unwrap();
    writeln!(out, "{kind} → {}\n", kind.anchor()).unwrap();
    writeln!(out, "replicates = {}, master_seed = {}\n", page.config.replicates, page.config.master_seed).unwrap();
    if !page.checks.is_empty() {
        writeln!(out, "| check | value | threshold | result |\n|---|---|---|---|").unwrap();
        for c in &page.checks {
            let result = if c.pass { "PASS" } else { "FAIL" };
            writeln!(out, "| {} | {} | {} | {result} |", c.name, fmt_num(c.value), c.threshold).unwrap();
        }
        writeln!(out).unwrap();
    }
    writeln!(out, "Artifacts:\n").unwrap();
    for f in &page.files {
        let role = if f.ends_with(".svg") { "figure" } else if f.ends_with(".csv") { "table" } else { "config" };
        writeln!(out, "- {role}: [{f}]({prefix}{f})").unwrap();
    }
    writeln!(out).unwrap();
}

/// Verify the artifacts under `dir` and write `dir/summary.md`.
pub fn emit_report(dir: &Path) -> Result<PathBuf> {
    let pages = experiment_dirs(dir)?.iter().map(|d| read_page(d)).collect::<Result<Vec<_>>>()?;
    let mut out = String::from("# creditlab experiment summary\n\n");
    writeln!(out, "{} experiment(s).\n", pages.len()).unwrap();
    for page in &pages {
        render_page(&mut out, page, dir);
    }
    let path = dir.join(SUMMARY);
    std::fs::write(&path, out)?;
    Ok(path)
}
