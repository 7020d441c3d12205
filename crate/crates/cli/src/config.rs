//! The declarative experiment description: one TOML file (or the built-in
//! defaults) plus dotted command-line overrides, resolved into the exact
//! configuration a run executes and snapshots next to its artifacts.

use std::path::{Path, PathBuf};

use gradbal::{LongTailSpec, MethodConfig, ModelConfig, SGDConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Everything one experiment needs: the data recipe, the training method,
/// the model shape, the optimizer, where artifacts go, and how many
/// replicates to run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: LongTailSpec,
    pub method: MethodConfig,
    pub model: ModelConfig,
    pub sgd: SGDConfig,
    /// Artifact directory used when `--output-dir` is not given.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Number of replicate runs. Replicate `k` adds `k` to both the
    /// dataset seed and the optimizer seed.
    pub repeats: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: LongTailSpec::default(),
            method: MethodConfig::default(),
            model: ModelConfig::default(),
            sgd: SGDConfig::default(),
            output_dir: None,
            repeats: 1,
        }
    }
}

impl ExperimentConfig {
    /// Checks every nested configuration plus the replicate count.
    pub fn validate(&self) -> gradbal::Result<()> {
        self.dataset.validate()?;
        self.method.validate()?;
        self.sgd.validate()?;
        if self.repeats == 0 {
            return Err(gradbal::Error::InvalidConfig(
                "repeats must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// The configuration replicate `k` actually runs: both seeds offset
    /// by `k` so replicates differ in data draw and in init/shuffle.
    pub fn replicate(&self, k: u64) -> ExperimentConfig {
        let mut rep = self.clone();
        rep.dataset.seed = rep.dataset.seed.wrapping_add(k);
        rep.sgd.seed = rep.sgd.seed.wrapping_add(k);
        rep
    }

    /// Parses a config file, mapping every problem to a usage error that
    /// names the file.
    pub fn load(path: &Path) -> Result<ExperimentConfig, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| CliError::usage(format!("config {}: {e}", path.display())))
    }

    /// Serializes the exact configuration a run executed, for the
    /// `config.toml` snapshot written next to its artifacts. Re-running
    /// the snapshot reproduces the run bit for bit, so the replicate
    /// count is pinned to 1 and the output directory is left to the
    /// caller.
    pub fn snapshot_toml(&self) -> String {
        let mut snap = self.clone();
        snap.repeats = 1;
        snap.output_dir = None;
        toml::to_string_pretty(&snap).expect("config serializes to TOML")
    }
}

/// Applies dotted-path overrides like `method.mapping.alpha=0` on top of a
/// base configuration. Values are parsed as TOML (numbers, booleans,
/// arrays, quoted strings); anything that does not parse is taken as a
/// bare string, so `method.method=eql_v2` works without quotes. Unknown
/// keys are rejected with a message naming them.
pub fn apply_overrides(
    base: &ExperimentConfig,
    overrides: &[String],
) -> Result<ExperimentConfig, CliError> {
    if overrides.is_empty() {
        return Ok(base.clone());
    }
    let mut tree = toml::Value::try_from(base).expect("config serializes to TOML");
    for token in overrides {
        let (path, raw) = token.split_once('=').ok_or_else(|| {
            CliError::usage(format!("override `{token}` must look like key.path=value"))
        })?;
        set_path(&mut tree, path.trim(), parse_value(raw.trim()), token)?;
    }
    tree.try_into()
        .map_err(|e| CliError::usage(format!("invalid override: {e}")))
}

/// Parses an override value as a TOML literal, falling back to a bare
/// string.
fn parse_value(raw: &str) -> toml::Value {
    if let Ok(table) = format!("v = {raw}").parse::<toml::Table>() {
        if let Some(v) = table.get("v") {
            return v.clone();
        }
    }
    toml::Value::String(raw.to_string())
}

/// Walks `path` segments into `root`, creating intermediate tables, and
/// sets the leaf to `value`.
fn set_path(
    root: &mut toml::Value,
    path: &str,
    value: toml::Value,
    token: &str,
) -> Result<(), CliError> {
    if path.is_empty() {
        return Err(CliError::usage(format!(
            "override `{token}` is missing the key before `=`"
        )));
    }
    let segments: Vec<&str> = path.split('.').collect();
    let mut current = root;
    for (i, segment) in segments.iter().enumerate() {
        if segment.is_empty() {
            return Err(CliError::usage(format!(
                "override `{token}` has an empty path segment"
            )));
        }
        let table = current.as_table_mut().ok_or_else(|| {
            CliError::usage(format!(
                "override `{token}`: `{}` is not a table",
                segments[..i].join(".")
            ))
        })?;
        if i + 1 == segments.len() {
            table.insert(segment.to_string(), value);
            return Ok(());
        }
        current = table
            .entry(segment.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    }
    unreachable!("split always yields at least one segment")
}
