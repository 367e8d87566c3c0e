//! Seed sweeps, per-timestep aggregation and the CSV files written for each run.
//!
//! A run directory holds three files:
//!
//! * `config.json`: the resolved config, every field spelled out
//! * `episodes.csv`: `seed,t,step_reward,cumulative_reward,total_w1,prey_w1`
//! * `aggregate.csv`: `t,cumulative_reward,total_w1,prey_w1`, means over seeds
//!
//! Floats are written with 17 significant digits so they parse back exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::config::{ConfigError, ExperimentConfig};
use crate::error::EpisodeError;
use crate::sim::{run_episode, MetricsRecord};

pub const EPISODES_FILE: &str = "episodes.csv";
pub const AGGREGATE_FILE: &str = "aggregate.csv";
pub const CONFIG_FILE: &str = "config.json";

pub const EPISODES_HEADER: &str = "seed,t,step_reward,cumulative_reward,total_w1,prey_w1";
pub const AGGREGATE_HEADER: &str = "t,cumulative_reward,total_w1,prey_w1";

/// Metric columns of `aggregate.csv`, in file order.
pub const METRICS: [&str; 3] = ["cumulative_reward", "total_w1", "prey_w1"];

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("seed {seed}: {source}")]
    Episode {
        seed: u64,
        #[source]
        source: EpisodeError,
        /// Every failing seed in the sweep, ascending.
        failed_seeds: Vec<u64>,
    },
    #[error("streams disagree on horizon: {expected} vs {got}")]
    HorizonMismatch { expected: usize, got: usize },
    #[error("nothing to aggregate")]
    Empty,
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl ExperimentError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_owned(),
            source,
        }
    }

    fn format(path: &Path, message: impl Into<String>) -> Self {
        Self::Format {
            path: path.to_owned(),
            message: message.into(),
        }
    }
}

/// Means over seeds at one timestep.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub t: usize,
    pub cumulative_reward: f64,
    pub total_w1: f64,
    pub prey_w1: Option<f64>,
}

impl AggregateRow {
    pub fn metric(&self, name: &str) -> Option<f64> {
        match name {
            "cumulative_reward" => Some(self.cumulative_reward),
            "total_w1" => Some(self.total_w1),
            "prey_w1" => self.prey_w1,
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub config: ExperimentConfig,
    /// One stream per seed, ascending by seed.
    pub streams: Vec<Vec<MetricsRecord>>,
    pub aggregate: Vec<AggregateRow>,
}

/// Runs every seed of `config` in parallel. Results come back ordered by seed
/// whatever the completion order.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput, ExperimentError> {
    let config = config.resolve()?;
    let mut seeds = config.seeds.clone();
    seeds.sort_unstable();
    let results: Vec<_> = seeds
        .par_iter()
        .map(|&seed| (seed, run_episode(&config, seed)))
        .collect();
    let failed: Vec<(u64, EpisodeError)> = results
        .iter()
        .filter_map(|(seed, r)| r.as_ref().err().map(|e| (*seed, e.clone())))
        .collect();
    if let Some((seed, source)) = failed.first().cloned() {
        return Err(ExperimentError::Episode {
            seed,
            source,
            failed_seeds: failed.iter().map(|(s, _)| *s).collect(),
        });
    }
    let streams: Vec<_> = results.into_iter().map(|(_, r)| r.unwrap()).collect();
    let aggregate = aggregate(&streams)?;
    Ok(ExperimentOutput {
        config,
        streams,
        aggregate,
    })
}

/// Arithmetic mean across streams of each metric at each timestep.
pub fn aggregate(streams: &[Vec<MetricsRecord>]) -> Result<Vec<AggregateRow>, ExperimentError> {
    let first = streams.first().ok_or(ExperimentError::Empty)?;
    let horizon = first.len();
    if let Some(bad) = streams.iter().find(|s| s.len() != horizon) {
        return Err(ExperimentError::HorizonMismatch {
            expected: horizon,
            got: bad.len(),
        });
    }
    let n = streams.len() as f64;
    Ok((0..horizon)
        .map(|k| {
            let at = || streams.iter().map(move |s| &s[k]);
            let has_prey = at().all(|r| r.prey_w1.is_some());
            AggregateRow {
                t: first[k].t,
                cumulative_reward: at().map(|r| r.cumulative_reward as f64).sum::<f64>() / n,
                total_w1: at().map(|r| r.total_w1).sum::<f64>() / n,
                prey_w1: has_prey.then(|| at().filter_map(|r| r.prey_w1).sum::<f64>() / n),
            }
        })
        .collect())
}

/// Seventeen significant digits, enough to round-trip any `f64`.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn format_opt(x: Option<f64>) -> String {
    x.map(format_float).unwrap_or_default()
}

pub fn episodes_csv(streams: &[Vec<MetricsRecord>]) -> String {
    let mut out = String::from(EPISODES_HEADER);
    out.push('\n');
    for r in streams.iter().flatten() {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.seed,
            r.t,
            r.step_reward,
            r.cumulative_reward,
            format_float(r.total_w1),
            format_opt(r.prey_w1)
        );
    }
    out
}

pub fn aggregate_csv(rows: &[AggregateRow]) -> String {
    let mut out = String::from(AGGREGATE_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            r.t,
            format_float(r.cumulative_reward),
            format_float(r.total_w1),
            format_opt(r.prey_w1)
        );
    }
    out
}

fn write(path: &Path, contents: &str) -> Result<(), ExperimentError> {
    fs::write(path, contents).map_err(|e| ExperimentError::io(path, e))
}

/// Writes the three run files into `dir`, creating it if needed.
pub fn write_run(output: &ExperimentOutput, dir: &Path) -> Result<(), ExperimentError> {
    fs::create_dir_all(dir).map_err(|e| ExperimentError::io(dir, e))?;
    let mut config = output.config.clone();
    config.output_path = dir.to_owned();
    write(&dir.join(CONFIG_FILE), &config.to_json())?;
    write(&dir.join(EPISODES_FILE), &episodes_csv(&output.streams))?;
    write(&dir.join(AGGREGATE_FILE), &aggregate_csv(&output.aggregate))?;
    Ok(())
}

fn parse_field<T: std::str::FromStr>(field: &str, path: &Path, line: usize) -> Result<T, ExperimentError> {
    field
        .parse()
        .map_err(|_| ExperimentError::format(path, format!("line {line}: bad value {field:?}")))
}

fn parse_opt(field: &str, path: &Path, line: usize) -> Result<Option<f64>, ExperimentError> {
    if field.is_empty() {
        Ok(None)
    } else {
        parse_field(field, path, line).map(Some)
    }
}

fn csv_rows<'a>(
    text: &'a str,
    header: &str,
    columns: usize,
    path: &Path,
) -> Result<Vec<(usize, Vec<&'a str>)>, ExperimentError> {
    let mut lines = text.lines();
    if lines.next() != Some(header) {
        return Err(ExperimentError::format(path, format!("expected header {header:?}")));
    }
    lines
        .enumerate()
        .map(|(k, line)| {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != columns {
                return Err(ExperimentError::format(
                    path,
                    format!("line {}: expected {columns} fields", k + 2),
                ));
            }
            Ok((k + 2, fields))
        })
        .collect()
}

pub fn parse_episodes_csv(text: &str, path: &Path) -> Result<Vec<MetricsRecord>, ExperimentError> {
    csv_rows(text, EPISODES_HEADER, 6, path)?
        .into_iter()
        .map(|(line, f)| {
            Ok(MetricsRecord {
                seed: parse_field(f[0], path, line)?,
                t: parse_field(f[1], path, line)?,
                step_reward: parse_field(f[2], path, line)?,
                cumulative_reward: parse_field(f[3], path, line)?,
                total_w1: parse_field(f[4], path, line)?,
                prey_w1: parse_opt(f[5], path, line)?,
            })
        })
        .collect()
}

pub fn parse_aggregate_csv(text: &str, path: &Path) -> Result<Vec<AggregateRow>, ExperimentError> {
    csv_rows(text, AGGREGATE_HEADER, 4, path)?
        .into_iter()
        .map(|(line, f)| {
            Ok(AggregateRow {
                t: parse_field(f[0], path, line)?,
                cumulative_reward: parse_field(f[1], path, line)?,
                total_w1: parse_field(f[2], path, line)?,
                prey_w1: parse_opt(f[3], path, line)?,
            })
        })
        .collect()
}

/// One aggregate stream and the variant name it is plotted under.
#[derive(Debug, Clone)]
pub struct VariantAggregate {
    pub variant: String,
    pub rows: Vec<AggregateRow>,
}

/// Plot tables, one per metric: `t` then one column per variant, in the
/// given variant order. Metrics that some variant lacks (prey divergence in
/// congregation) are left out.
pub fn emit_plotdata(
    variants: &[VariantAggregate],
) -> Result<Vec<(&'static str, String)>, ExperimentError> {
    let first = variants.first().ok_or(ExperimentError::Empty)?;
    let horizon = first.rows.len();
    if let Some(bad) = variants.iter().find(|v| v.rows.len() != horizon) {
        return Err(ExperimentError::HorizonMismatch {
            expected: horizon,
            got: bad.rows.len(),
        });
    }
    let mut tables = Vec::new();
    for metric in METRICS {
        if variants
            .iter()
            .any(|v| v.rows.iter().any(|r| r.metric(metric).is_none()))
        {
            continue;
        }
        let mut out = String::from("t");
        for v in variants {
            out.push(',');
            out.push_str(&v.variant);
        }
        out.push('\n');
        for k in 0..horizon {
            out.push_str(&first.rows[k].t.to_string());
            for v in variants {
                out.push(',');
                out.push_str(&format_float(v.rows[k].metric(metric).expect("checked above")));
            }
            out.push('\n');
        }
        tables.push((metric, out));
    }
    Ok(tables)
}

/// Loads every run directory directly under `dir`, ordered by directory name.
pub fn load_variants(dir: &Path) -> Result<Vec<VariantAggregate>, ExperimentError> {
    let mut runs: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| ExperimentError::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.join(AGGREGATE_FILE).is_file() && p.join(CONFIG_FILE).is_file())
        .collect();
    runs.sort();
    runs.iter()
        .map(|run| {
            let config = ExperimentConfig::load(&run.join(CONFIG_FILE))?;
            let path = run.join(AGGREGATE_FILE);
            let text = fs::read_to_string(&path).map_err(|e| ExperimentError::io(&path, e))?;
            Ok(VariantAggregate {
                variant: config.variant,
                rows: parse_aggregate_csv(&text, &path)?,
            })
        })
        .collect()
}

/// Reads every run under `input` and writes `<metric>.csv` plot tables into `out`.
/// Returns the written paths.
pub fn write_plotdata(input: &Path, out: &Path) -> Result<Vec<PathBuf>, ExperimentError> {
    let variants = load_variants(input)?;
    fs::create_dir_all(out).map_err(|e| ExperimentError::io(out, e))?;
    emit_plotdata(&variants)?
        .into_iter()
        .map(|(metric, table)| {
            let path = out.join(format!("{metric}.csv"));
            write(&path, &table)?;
            Ok(path)
        })
        .collect()
}

/// Config files (`*.json`) directly under `dir`, sorted by path.
pub fn config_files(dir: &Path) -> Result<Vec<PathBuf>, ExperimentError> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| ExperimentError::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json") && p.is_file())
        .collect();
    files.sort();
    Ok(files)
}

/// Where a sweep puts one config's run: `<base>/<task>/<variant>` when a base
/// is given, the config's own `output_path` otherwise.
pub fn sweep_destination(config: &ExperimentConfig, base: Option<&Path>) -> PathBuf {
    match base {
        Some(base) => base.join(config.task.name()).join(&config.variant),
        None => config.output_path.clone(),
    }
}

/// Loads and validates every config under `dir` before running any of them,
/// then runs and writes each one. Returns the run directories in config order.
pub fn sweep(dir: &Path, base: Option<&Path>) -> Result<Vec<PathBuf>, ExperimentError> {
    let configs = config_files(dir)?
        .iter()
        .map(|p| {
            let c = ExperimentConfig::load(p)?;
            c.resolve()?;
            Ok(c)
        })
        .collect::<Result<Vec<_>, ExperimentError>>()?;
    configs
        .iter()
        .map(|config| {
            let dest = sweep_destination(config, base);
            write_run(&run_experiment(config)?, &dest)?;
            Ok(dest)
        })
        .collect()
}

/// Writes the standard experiment grid as one JSON file per config into `dir`.
pub fn write_standard_configs(dir: &Path) -> Result<Vec<PathBuf>, ExperimentError> {
    fs::create_dir_all(dir).map_err(|e| ExperimentError::io(dir, e))?;
    ExperimentConfig::standard_grid()
        .into_iter()
        .map(|c| {
            let path = dir.join(format!("{}_{}.json", c.task.name(), c.variant));
            write(&path, &c.to_json())?;
            Ok(path)
        })
        .collect()
}
