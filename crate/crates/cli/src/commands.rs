use std::path::{Path, PathBuf};

use orthosim::engine::{run_simulation, run_simulation_observed, weight_shift_trace, write_metrics_file, GlobalHistory};
use orthosim::presets::{self, SLOW_LATENCIES};
use orthosim::report::{default_target, oscillation_amplitude, summarize, write_heatmap, write_summary, Cell};
use orthosim::strategies::StrategyKind;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{load_experiment, Experiment, Overrides};
use crate::error::{CliError, Result};

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn create_file(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    let f = std::fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    Ok(std::io::BufWriter::new(f))
}

/// Files written by [`run_experiment`].
#[derive(Debug, Clone)]
pub struct RunOutputs {
    pub metrics: Vec<PathBuf>,
    pub summaries: Vec<PathBuf>,
}

/// Runs every cell on the rayon pool, then writes one summary per alpha group
/// (`summary.csv`, or `summary_alpha{a}.csv` under a sweep).
pub fn run_experiment(exp: &Experiment) -> Result<RunOutputs> {
    let out_dir = &exp.config.output_dir;
    create_dir(out_dir)?;
    let results: Vec<(Cell, PathBuf)> = exp
        .cells
        .par_iter()
        .map(|cell| {
            let rows = run_simulation(&cell.sim)?;
            let path = out_dir.join(format!("{}.csv", cell.file_stem()));
            write_metrics_file(&rows, &path)?;
            Ok((
                Cell {
                    strategy: cell.strategy,
                    seed: cell.seed,
                    rows,
                },
                path,
            ))
        })
        .collect::<Result<_>>()?;

    let mut summaries = Vec::new();
    for alpha in exp.alpha_groups() {
        let group: Vec<Cell> = exp
            .cells
            .iter()
            .zip(&results)
            .filter(|(spec, _)| spec.alpha == alpha)
            .map(|(_, (cell, _))| cell.clone())
            .collect();
        let target = match exp.config.target_accuracy {
            Some(t) => t,
            None => default_target(&group)?,
        };
        let rows = summarize(&group, target, exp.relative)?;
        let path = match alpha {
            Some(a) => out_dir.join(format!("summary_alpha{a}.csv")),
            None => out_dir.join("summary.csv"),
        };
        write_summary(&rows, create_file(&path)?)?;
        summaries.push(path);
    }
    Ok(RunOutputs {
        metrics: results.into_iter().map(|(_, p)| p).collect(),
        summaries,
    })
}

/// Settings for the two-client disjoint-class study.
#[derive(Debug, Clone)]
pub struct MotivatingOptions {
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    pub duration: Option<f64>,
    /// Strategy parameters and local training taken from a config's `[sim]`.
    pub from_config: Option<Experiment>,
}

#[derive(Debug, Clone, Serialize)]
struct MotivatingRow {
    strategy: StrategyKind,
    slow_latency: f64,
    seed: u64,
    final_accuracy: f64,
    oscillation_amplitude: f64,
    accuracy_csv: String,
    heatmap_csv: String,
}

pub const MOTIVATING_STRATEGIES: [StrategyKind; 2] = [StrategyKind::Fedasync, StrategyKind::Orthofl];

pub fn motivating_options(config: Option<&Path>, overrides: &Overrides, env_seeds: Option<&str>) -> Result<MotivatingOptions> {
    let exp = config.map(|p| load_experiment(p, overrides, env_seeds)).transpose()?;
    let seeds = match (&exp, env_seeds) {
        (Some(e), _) => e.config.seeds.clone(),
        (None, _) if !overrides.seeds.is_empty() => overrides.seeds.clone(),
        (None, Some(raw)) => crate::config::parse_seed_list(raw)?,
        (None, None) => vec![1],
    };
    let out_dir = match (&overrides.out, &exp) {
        (Some(o), _) => o.clone(),
        (None, Some(e)) => e.config.output_dir.clone(),
        (None, None) => PathBuf::from("results"),
    };
    Ok(MotivatingOptions {
        seeds,
        out_dir,
        duration: overrides.duration,
        from_config: exp,
    })
}

/// FedAsync and OrthoFL at each slow-client latency: one accuracy CSV and one
/// weight-shift heatmap CSV per (strategy, latency, seed), plus
/// `motivating_summary.csv`. Returns the accuracy CSV paths.
pub fn run_motivating(opts: &MotivatingOptions) -> Result<Vec<PathBuf>> {
    create_dir(&opts.out_dir)?;
    let mut jobs = Vec::new();
    for &seed in &opts.seeds {
        for &latency in &SLOW_LATENCIES {
            for &strategy in &MOTIVATING_STRATEGIES {
                jobs.push((strategy, latency, seed));
            }
        }
    }
    let rows: Vec<MotivatingRow> = jobs
        .par_iter()
        .map(|&(strategy, latency, seed)| {
            let mut cfg = presets::motivating(strategy, latency, seed);
            if let Some(exp) = &opts.from_config {
                cfg.params = exp.config.sim.params;
                cfg.train = exp.config.sim.train;
            }
            if let Some(d) = opts.duration {
                cfg.duration = d;
            }
            cfg.validate()?;
            let mut history = GlobalHistory::default();
            let metrics = run_simulation_observed(&cfg, &mut history)?;
            let stem = format!("{strategy}_slow{latency}_seed{seed}");
            let acc_path = opts.out_dir.join(format!("motivating_{stem}.csv"));
            write_metrics_file(&metrics, &acc_path)?;
            let trace = weight_shift_trace(&history.snapshots, cfg.model.feature_group())?;
            let heat_path = opts.out_dir.join(format!("heatmap_{stem}.csv"));
            write_heatmap(&trace, create_file(&heat_path)?)?;
            let final_accuracy = metrics.last().map_or(0.0, |r| r.accuracy);
            Ok(MotivatingRow {
                strategy,
                slow_latency: latency,
                seed,
                final_accuracy,
                oscillation_amplitude: oscillation_amplitude(&metrics, cfg.duration / 2.0).unwrap_or(0.0),
                accuracy_csv: acc_path.display().to_string(),
                heatmap_csv: heat_path.display().to_string(),
            })
        })
        .collect::<Result<_>>()?;

    let summary = opts.out_dir.join("motivating_summary.csv");
    let mut w = csv::Writer::from_writer(create_file(&summary)?);
    for r in &rows {
        w.serialize(r).map_err(|e| CliError::io(&summary, e.into()))?;
    }
    w.flush().map_err(|e| CliError::io(&summary, e))?;
    Ok(rows.into_iter().map(|r| PathBuf::from(r.accuracy_csv)).collect())
}
