//! Writing an experiment's artifact directory and its checksum manifest.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::experiments;
use crate::plot;
use crate::table::{Check, Table};

pub const SNAPSHOT: &str = "config.snapshot";
pub const MANIFEST: &str = "manifest.sha256";
pub const CHECKS: &str = "checks.csv";
/// Environment variable naming the default output root.
pub const OUTPUT_ROOT_VAR: &str = "CREDITLAB_OUTPUT_ROOT";
const FALLBACK_ROOT: &str = "creditlab-out";

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub checks: Vec<Check>,
}

impl RunOutcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

/// Output directory: the explicit override, else the config's `output_dir`,
/// else `<root>/<experiment>` with the root taken from the environment.
pub fn resolve_output_dir(config: &ExperimentConfig, explicit: Option<&Path>) -> PathBuf {
    if let Some(p) = explicit {
        return p.to_path_buf();
    }
    if let Some(p) = &config.output_dir {
        return p.clone();
    }
    default_root().join(config.experiment.name())
}

pub fn default_root() -> PathBuf {
    std::env::var_os(OUTPUT_ROOT_VAR).map_or_else(|| PathBuf::from(FALLBACK_ROOT), PathBuf::from)
}

/// Run `config` and write its artifacts into `dir`.
pub fn run_experiment(config: &ExperimentConfig, dir: &Path) -> Result<RunOutcome> {
    config.validate()?;
    let output = experiments::run(config)?;
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(SNAPSHOT), config.snapshot())?;

    let mut files = vec![SNAPSHOT.to_string()];
    let mut tables: Vec<(String, &Table)> = vec![("replicates.csv".into(), &output.replicates), ("aggregate.csv".into(), &output.aggregate)];
    tables.extend(output.extra.iter().map(|(name, t)| (format!("{name}.csv"), t)));
    let checks = Check::table(&output.checks);
    tables.push((CHECKS.into(), &checks));
    for (name, table) in tables {
        table.write(&dir.join(&name))?;
        files.push(name);
    }
    for spec in &output.plots {
        plot::render(dir, spec)?;
        files.push(format!("plots/{}", spec.file_name()));
    }
    write_manifest(dir, &files)?;
    Ok(RunOutcome { dir: dir.to_path_buf(), checks: output.checks })
}

fn digest(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingArtifact(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    let hash = Sha256::digest(&bytes);
    let mut hex = String::with_capacity(64);
    for b in hash.iter() {
        write!(hex, "{b:02x}").expect("writing to a String");
    }
    Ok(hex)
}

fn write_manifest(dir: &Path, files: &[String]) -> Result<()> {
    let mut sorted = files.to_vec();
    sorted.sort();
    let mut text = String::new();
    for f in &sorted {
        writeln!(text, "{}  {f}", digest(&dir.join(f))?).expect("writing to a String");
    }
    std::fs::write(dir.join(MANIFEST), text)?;
    Ok(())
}

/// Check every file listed in the manifest against its recorded digest.
pub fn verify_manifest(dir: &Path) -> Result<Vec<String>> {
    let path = dir.join(MANIFEST);
    if !path.exists() {
        return Err(Error::MissingArtifact(path));
    }
    let text = std::fs::read_to_string(&path)?;
    let mut files = Vec::new();
    for line in text.lines() {
        let (hash, name) = line
            .split_once("  ")
            .ok_or_else(|| Error::CorruptArtifact { path: path.clone(), reason: format!("malformed line `{line}`") })?;
        let file = dir.join(name);
        if digest(&file)? != hash {
            return Err(Error::CorruptArtifact { path: file, reason: "checksum mismatch".into() });
        }
        files.push(name.to_string());
    }
    Ok(files)
}
