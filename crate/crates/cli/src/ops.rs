//! The three operations behind the subcommands: `run` trains and writes
//! artifacts, `compare` tabulates finished runs, `ablate` sweeps one
//! mapping parameter.

use std::env;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use gradbal::datagen::{assign_groups, zipf_counts};
use gradbal::io::{atomic_write, fmt_float};
use gradbal::metrics::{median, write_metrics_csv, write_ratios_csv, write_weight_norms_csv};
use gradbal::{generate, train_run, Group};

use crate::config::ExperimentConfig;
use crate::CliError;

/// Environment variable naming the default root for artifact directories.
pub const OUTPUT_ROOT_ENV: &str = "GRADBAL_OUTPUT_ROOT";

/// Picks the artifact directory: the explicit flag wins, then the config
/// file's `output_dir`, then `$GRADBAL_OUTPUT_ROOT/<default_name>`.
pub fn resolve_output_dir(
    flag: Option<&Path>,
    from_config: Option<&Path>,
    default_name: &str,
) -> Result<PathBuf, CliError> {
    if let Some(dir) = flag {
        return Ok(dir.to_path_buf());
    }
    if let Some(dir) = from_config {
        return Ok(dir.to_path_buf());
    }
    if let Some(root) = env::var_os(OUTPUT_ROOT_ENV) {
        return Ok(PathBuf::from(root).join(default_name));
    }
    Err(CliError::usage(format!(
        "no output directory: pass --output-dir, set output_dir in the config, \
         or export {OUTPUT_ROOT_ENV}"
    )))
}

/// Trains every replicate of `cfg` and writes the artifacts — directly
/// into `out_dir` for a single run, into `seed<k>/` subdirectories for
/// several. Each replicate leaves four files: `config.toml` (the resolved
/// snapshot), `ratios.csv`, `metrics.csv`, and `weight_norms.csv`.
pub fn cmd_run(cfg: &ExperimentConfig, out_dir: &Path) -> Result<(), CliError> {
    cfg.validate().map_err(|e| CliError::usage(e.to_string()))?;
    for k in 0..cfg.repeats as u64 {
        let rep = cfg.replicate(k);
        let dir = if cfg.repeats == 1 {
            out_dir.to_path_buf()
        } else {
            out_dir.join(format!("seed{k:03}"))
        };
        run_one(&rep, &dir)?;
    }
    Ok(())
}

/// Executes one already-replicated configuration into one directory.
fn run_one(rep: &ExperimentConfig, dir: &Path) -> Result<(), CliError> {
    let fail = |e: gradbal::Error| CliError::runtime(format!("{}: {e}", dir.display()));
    fs::create_dir_all(dir)
        .map_err(|e| CliError::runtime(format!("cannot create {}: {e}", dir.display())))?;
    let dataset = generate(&rep.dataset).map_err(fail)?;
    let outcome = train_run(&dataset, &rep.method, &rep.sgd, &rep.model).map_err(fail)?;
    atomic_write(&dir.join("config.toml"), rep.snapshot_toml().as_bytes()).map_err(fail)?;
    write_ratios_csv(&outcome.trace, &dir.join("ratios.csv")).map_err(fail)?;
    write_metrics_csv(&outcome.trace, &dir.join("metrics.csv")).map_err(fail)?;
    write_weight_norms_csv(
        &outcome.trace.final_weight_norms,
        &dir.join("weight_norms.csv"),
    )
    .map_err(fail)?;
    Ok(())
}

/// Final-epoch numbers extracted from one completed single-seed directory.
struct SeedSummary {
    method: String,
    overall: f64,
    rare: f64,
    common: f64,
    frequent: f64,
    g_rare: f64,
    g_common: f64,
    g_frequent: f64,
    weight_cv: f64,
}

/// Aggregate view of a run directory — one seed or several.
pub struct RunSummary {
    /// Directory name, used as the row label.
    pub name: String,
    pub method: String,
    pub seeds: usize,
    /// Final-epoch accuracies as (mean, population std) over seeds.
    pub overall: (f64, f64),
    pub rare: (f64, f64),
    pub common: (f64, f64),
    pub frequent: (f64, f64),
    /// Final median accumulated ratio per frequency group, mean over seeds.
    pub g_rare: f64,
    pub g_common: f64,
    pub g_frequent: f64,
    /// Weight-norm coefficient of variation, mean over seeds.
    pub weight_cv: f64,
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn population_std(values: &[f64]) -> f64 {
    let m = mean(values);
    (values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / values.len() as f64).sqrt()
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    (mean(values), population_std(values))
}

/// Loads and aggregates a run directory, reporting every incomplete seed
/// directory it finds.
pub fn load_run_summary(dir: &Path) -> Result<RunSummary, CliError> {
    let seed_dirs = seed_layout(dir)?;
    let mut seeds = Vec::new();
    let mut problems = Vec::new();
    for seed_dir in &seed_dirs {
        match load_seed(seed_dir) {
            Ok(s) => seeds.push(s),
            Err(e) => problems.push(e.message().to_string()),
        }
    }
    if !problems.is_empty() {
        return Err(CliError::runtime(problems.join("\n")));
    }
    let method = seeds[0].method.clone();
    let col = |f: fn(&SeedSummary) -> f64| -> Vec<f64> { seeds.iter().map(f).collect() };
    Ok(RunSummary {
        name: dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| dir.display().to_string()),
        method,
        seeds: seeds.len(),
        overall: mean_std(&col(|s| s.overall)),
        rare: mean_std(&col(|s| s.rare)),
        common: mean_std(&col(|s| s.common)),
        frequent: mean_std(&col(|s| s.frequent)),
        g_rare: mean(&col(|s| s.g_rare)),
        g_common: mean(&col(|s| s.g_common)),
        g_frequent: mean(&col(|s| s.g_frequent)),
        weight_cv: mean(&col(|s| s.weight_cv)),
    })
}

/// The single-seed directories making up a run: the directory itself for
/// the flat layout, its `seed*/` children otherwise.
fn seed_layout(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    if dir.join("metrics.csv").exists() {
        return Ok(vec![dir.to_path_buf()]);
    }
    let entries = fs::read_dir(dir)
        .map_err(|e| CliError::runtime(format!("cannot read run dir {}: {e}", dir.display())))?;
    let mut subs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| {
            p.is_dir()
                && p.file_name()
                    .is_some_and(|n| n.to_string_lossy().starts_with("seed"))
        })
        .collect();
    subs.sort();
    if subs.is_empty() {
        return Err(CliError::runtime(format!(
            "{}: not a run directory (no metrics.csv and no seed*/ subdirectories)",
            dir.display()
        )));
    }
    Ok(subs)
}

/// Reads a whole artifact file, tagging errors with the path.
fn read_file(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path)
        .map_err(|e| CliError::runtime(format!("missing or unreadable {}: {e}", path.display())))
}

/// Parses one of our header-plus-rows CSV files (no quoting, no escapes).
fn read_csv(path: &Path, expected_header: &str) -> Result<Vec<Vec<String>>, CliError> {
    let text = read_file(path)?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("");
    if header != expected_header {
        return Err(CliError::runtime(format!(
            "{}: unexpected header `{header}` (wanted `{expected_header}`)",
            path.display()
        )));
    }
    Ok(lines
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect())
}

fn parse_field(path: &Path, row: &[String], idx: usize) -> Result<f64, CliError> {
    row.get(idx)
        .and_then(|s| s.parse::<f64>().ok())
        .ok_or_else(|| {
            CliError::runtime(format!(
                "{}: malformed row {:?} (field {idx})",
                path.display(),
                row
            ))
        })
}

/// Extracts the final-epoch summary of one single-seed run directory.
fn load_seed(dir: &Path) -> Result<SeedSummary, CliError> {
    let cfg: ExperimentConfig = toml::from_str(&read_file(&dir.join("config.toml"))?)
        .map_err(|e| CliError::runtime(format!("{}/config.toml: {e}", dir.display())))?;

    let metrics_path = dir.join("metrics.csv");
    let metrics = read_csv(&metrics_path, "epoch,overall,rare,common,frequent")?;
    let last = metrics.last().ok_or_else(|| {
        CliError::runtime(format!("{}: no epochs recorded", metrics_path.display()))
    })?;
    let acc = |idx| parse_field(&metrics_path, last, idx);

    let ratios_path = dir.join("ratios.csv");
    let ratio_rows = read_csv(&ratios_path, "iteration,category,pos_sum,neg_sum,g")?;
    let final_iter = ratio_rows
        .iter()
        .map(|r| r.first().cloned().unwrap_or_default())
        .next_back()
        .ok_or_else(|| CliError::runtime(format!("{}: no snapshots", ratios_path.display())))?;
    let mut final_g = Vec::new();
    for row in ratio_rows.iter().filter(|r| r[0] == final_iter) {
        final_g.push(parse_field(&ratios_path, row, 4)?);
    }

    let counts = zipf_counts(&cfg.dataset)
        .map_err(|e| CliError::runtime(format!("{}/config.toml: {e}", dir.display())))?;
    let groups = assign_groups(&counts, cfg.dataset.rare_max, cfg.dataset.common_max);
    if groups.len() != final_g.len() {
        return Err(CliError::runtime(format!(
            "{}: {} categories in ratios.csv but config implies {}",
            ratios_path.display(),
            final_g.len(),
            groups.len()
        )));
    }
    let group_median = |g: Group| -> f64 {
        let vals: Vec<f64> = groups
            .iter()
            .zip(&final_g)
            .filter(|(grp, _)| **grp == g)
            .map(|(_, &v)| v)
            .collect();
        median(&vals)
    };

    let norms_path = dir.join("weight_norms.csv");
    let norm_rows = read_csv(&norms_path, "category,norm")?;
    let mut norms = Vec::new();
    for row in &norm_rows {
        norms.push(parse_field(&norms_path, row, 1)?);
    }
    if norms.is_empty() {
        return Err(CliError::runtime(format!(
            "{}: no categories",
            norms_path.display()
        )));
    }
    let norm_mean = mean(&norms);
    let weight_cv = if norm_mean == 0.0 {
        0.0
    } else {
        population_std(&norms) / norm_mean
    };

    Ok(SeedSummary {
        method: cfg.method.method.name().to_string(),
        overall: acc(1)?,
        rare: acc(2)?,
        common: acc(3)?,
        frequent: acc(4)?,
        g_rare: group_median(Group::Rare),
        g_common: group_median(Group::Common),
        g_frequent: group_median(Group::Frequent),
        weight_cv,
    })
}

/// Renders rows into columns padded to their widest cell.
fn aligned_table(headers: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = headers.iter().map(|h| h.len()).collect();
    for row in rows {
        for (i, cell) in row.iter().enumerate() {
            widths[i] = widths[i].max(cell.len());
        }
    }
    let mut out = String::new();
    let emit = |out: &mut String, cells: &[String]| {
        for (i, cell) in cells.iter().enumerate() {
            if i > 0 {
                out.push_str("  ");
            }
            let _ = write!(out, "{cell:<width$}", width = widths[i]);
        }
        while out.ends_with(' ') {
            out.pop();
        }
        out.push('\n');
    };
    let header_cells: Vec<String> = headers.iter().map(|h| h.to_string()).collect();
    emit(&mut out, &header_cells);
    for row in rows {
        emit(&mut out, row);
    }
    out
}

fn fmt_mean_std((m, s): (f64, f64)) -> String {
    format!("{m:.4}±{s:.4}")
}

const COMPARE_HEADER: &str = "run,method,seeds,overall_mean,overall_std,rare_mean,rare_std,\
common_mean,common_std,frequent_mean,frequent_std,g_rare,g_common,g_frequent,weight_cv";

/// Summarizes completed run directories side by side, writing
/// `compare.csv` and the aligned `compare.txt` into `out_dir`. Every
/// incomplete input is reported before the command fails.
pub fn cmd_compare(dirs: &[PathBuf], out_dir: &Path) -> Result<(), CliError> {
    let mut summaries = Vec::new();
    let mut failures = Vec::new();
    for dir in dirs {
        match load_run_summary(dir) {
            Ok(s) => summaries.push(s),
            Err(e) => failures.push(format!("{}: {}", dir.display(), e.message())),
        }
    }
    if !failures.is_empty() {
        return Err(CliError::runtime(failures.join("\n")));
    }

    let mut csv = String::from(COMPARE_HEADER);
    csv.push('\n');
    let mut txt_rows = Vec::new();
    for s in &summaries {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            s.name,
            s.method,
            s.seeds,
            fmt_float(s.overall.0),
            fmt_float(s.overall.1),
            fmt_float(s.rare.0),
            fmt_float(s.rare.1),
            fmt_float(s.common.0),
            fmt_float(s.common.1),
            fmt_float(s.frequent.0),
            fmt_float(s.frequent.1),
            fmt_float(s.g_rare),
            fmt_float(s.g_common),
            fmt_float(s.g_frequent),
            fmt_float(s.weight_cv),
        );
        txt_rows.push(vec![
            s.name.clone(),
            s.method.clone(),
            s.seeds.to_string(),
            fmt_mean_std(s.overall),
            fmt_mean_std(s.rare),
            fmt_mean_std(s.common),
            fmt_mean_std(s.frequent),
            format!("{:.4}", s.g_rare),
            format!("{:.4}", s.g_common),
            format!("{:.4}", s.g_frequent),
            format!("{:.4}", s.weight_cv),
        ]);
    }
    let txt = aligned_table(
        &[
            "run",
            "method",
            "seeds",
            "overall",
            "rare",
            "common",
            "frequent",
            "g_rare",
            "g_common",
            "g_frequent",
            "weight_cv",
        ],
        &txt_rows,
    );

    fs::create_dir_all(out_dir)
        .map_err(|e| CliError::runtime(format!("cannot create {}: {e}", out_dir.display())))?;
    let fail = |e: gradbal::Error| CliError::runtime(e.to_string());
    atomic_write(&out_dir.join("compare.csv"), csv.as_bytes()).map_err(fail)?;
    atomic_write(&out_dir.join("compare.txt"), txt.as_bytes()).map_err(fail)?;
    Ok(())
}

/// Which mapping parameter an ablation sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AblationAxis {
    Gamma,
    Mu,
    Alpha,
}

impl AblationAxis {
    pub fn key(&self) -> &'static str {
        match self {
            AblationAxis::Gamma => "gamma",
            AblationAxis::Mu => "mu",
            AblationAxis::Alpha => "alpha",
        }
    }

    fn apply(&self, cfg: &mut ExperimentConfig, value: f64) {
        match self {
            AblationAxis::Gamma => cfg.method.mapping.gamma = value,
            AblationAxis::Mu => cfg.method.mapping.mu = value,
            AblationAxis::Alpha => cfg.method.mapping.alpha = value,
        }
    }
}

const ABLATION_HEADER: &str = "axis,value,seeds,overall_mean,overall_std,rare_mean,rare_std,\
common_mean,common_std,frequent_mean,frequent_std,g_rare,g_common,g_frequent,status";

/// Runs one experiment per axis value into `<axis>_<value>/` cells under
/// `out_dir` and aggregates the finished cells into `ablation.csv`. A
/// failing cell is reported and skipped; the command fails at the end if
/// any cell failed.
pub fn cmd_ablate(
    cfg: &ExperimentConfig,
    axis: AblationAxis,
    values: &[f64],
    out_dir: &Path,
) -> Result<(), CliError> {
    cfg.validate().map_err(|e| CliError::usage(e.to_string()))?;
    if values.is_empty() {
        return Err(CliError::usage("ablate needs at least one --values entry"));
    }
    fs::create_dir_all(out_dir)
        .map_err(|e| CliError::runtime(format!("cannot create {}: {e}", out_dir.display())))?;

    let mut csv = String::from(ABLATION_HEADER);
    csv.push('\n');
    let mut failed = 0usize;
    for &value in values {
        let mut cell_cfg = cfg.clone();
        axis.apply(&mut cell_cfg, value);
        let cell_dir = out_dir.join(format!("{}_{}", axis.key(), value));
        let outcome = cmd_run(&cell_cfg, &cell_dir).and_then(|()| load_run_summary(&cell_dir));
        match outcome {
            Ok(s) => {
                let _ = writeln!(
                    csv,
                    "{},{},{},{},{},{},{},{},{},{},{},{},{},{},ok",
                    axis.key(),
                    value,
                    s.seeds,
                    fmt_float(s.overall.0),
                    fmt_float(s.overall.1),
                    fmt_float(s.rare.0),
                    fmt_float(s.rare.1),
                    fmt_float(s.common.0),
                    fmt_float(s.common.1),
                    fmt_float(s.frequent.0),
                    fmt_float(s.frequent.1),
                    fmt_float(s.g_rare),
                    fmt_float(s.g_common),
                    fmt_float(s.g_frequent),
                );
            }
            Err(e) => {
                eprintln!("{}={} failed: {}", axis.key(), value, e.message());
                failed += 1;
                let _ = writeln!(csv, "{},{},0,,,,,,,,,,,,error", axis.key(), value);
            }
        }
    }
    atomic_write(&out_dir.join("ablation.csv"), csv.as_bytes())
        .map_err(|e| CliError::runtime(e.to_string()))?;
    if failed > 0 {
        return Err(CliError::runtime(format!(
            "{failed} of {} ablation cells failed",
            values.len()
        )));
    }
    Ok(())
}
