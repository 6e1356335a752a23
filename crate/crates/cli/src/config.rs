//! Experiment configuration files.
//!
//! An experiment is a TOML document: the top level lists what to compare
//! (strategies, seeds, an optional Dirichlet `alphas` sweep) and where to
//! write results, and the `[sim]` table describes the scenario with the same
//! keys as [`SimConfig`] minus `strategy` and `seed`. Relative paths inside
//! `[sim]` are resolved against the directory holding the config file.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use orthosim::engine::{DataConfig, DataSource, DelayConfig, LatencySource, PartitionConfig, SimConfig};
use orthosim::models::{ModelSpec, TrainConfig};
use orthosim::strategies::{StrategyKind, StrategyParams};
use serde::Deserialize;

use crate::error::{CliError, Result};

/// Environment variable holding a comma-separated seed list that replaces the
/// config's `seeds`.
pub const SEED_ENV: &str = "ORTHOSIM_SEED";

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub strategies: Vec<StrategyKind>,
    pub seeds: Vec<u64>,
    /// Dirichlet concentrations to sweep; empty runs the `[sim]` partition as is.
    #[serde(default)]
    pub alphas: Vec<f64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Report time relative to FedAvg. Defaults to whether fedavg is compared.
    #[serde(default)]
    pub relative_time: Option<bool>,
    /// Fixed target accuracy; defaults to 95% of the lowest mean final accuracy.
    #[serde(default)]
    pub target_accuracy: Option<f64>,
    pub sim: SimSection,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    #[serde(default)]
    pub params: StrategyParams,
    pub num_clients: usize,
    pub model: ModelSpec,
    pub data: DataConfig,
    pub delays: DelayConfig,
    #[serde(default)]
    pub train: TrainConfig,
    pub duration: f64,
    #[serde(default = "default_eval_every")]
    pub eval_every: u64,
    #[serde(default)]
    pub clients_per_round: Option<usize>,
}

fn default_eval_every() -> u64 {
    1
}

impl SimSection {
    pub fn to_sim(&self, strategy: StrategyKind, seed: u64) -> SimConfig {
        SimConfig {
            strategy,
            params: self.params,
            num_clients: self.num_clients,
            model: self.model,
            data: self.data.clone(),
            delays: self.delays.clone(),
            train: self.train,
            duration: self.duration,
            eval_every: self.eval_every,
            clients_per_round: self.clients_per_round,
            seed,
        }
    }
}

/// Command-line replacements for config values. Empty lists and `None` keep
/// the file's value.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seeds: Vec<u64>,
    pub strategies: Vec<String>,
    pub duration: Option<f64>,
    pub out: Option<PathBuf>,
}

/// One (strategy, alpha, seed) simulation.
#[derive(Debug, Clone)]
pub struct CellSpec {
    pub strategy: StrategyKind,
    pub seed: u64,
    pub alpha: Option<f64>,
    pub sim: SimConfig,
}

impl CellSpec {
    /// Stem shared by this cell's output files; unique within an experiment.
    pub fn file_stem(&self) -> String {
        match self.alpha {
            Some(a) => format!("{}_alpha{a}_seed{}", self.strategy, self.seed),
            None => format!("{}_seed{}", self.strategy, self.seed),
        }
    }
}

/// A parsed config with overrides applied and every cell validated.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub path: PathBuf,
    pub config: ExperimentConfig,
    pub relative: bool,
    pub cells: Vec<CellSpec>,
}

impl Experiment {
    /// Alpha groups in config order; `[None]` without a sweep.
    pub fn alpha_groups(&self) -> Vec<Option<f64>> {
        if self.config.alphas.is_empty() {
            vec![None]
        } else {
            self.config.alphas.iter().copied().map(Some).collect()
        }
    }
}

pub fn parse_config(text: &str, path: &Path) -> Result<ExperimentConfig> {
    let de = toml::Deserializer::parse(text).map_err(|e| toml_error(text, path, "<document>", &e))?;
    serde_path_to_error::deserialize(de).map_err(|e| {
        let key = e.path().to_string();
        let key = if key == "." { "<document>".to_string() } else { key };
        toml_error(text, path, &key, e.inner())
    })
}

fn toml_error(text: &str, path: &Path, key: &str, e: &toml::de::Error) -> CliError {
    let detail = match e.span() {
        Some(span) => {
            let line = text[..span.start.min(text.len())].matches('\n').count() + 1;
            format!("{} (line {line})", e.message())
        }
        None => e.message().to_string(),
    };
    CliError::config(path, key, detail)
}

/// Seeds from `ORTHOSIM_SEED`, e.g. `"1,2,3"`.
pub fn parse_seed_list(raw: &str) -> Result<Vec<u64>> {
    raw.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map_err(|_| CliError::config(SEED_ENV, SEED_ENV, format!("`{s}` is not a seed")))
        })
        .collect()
}

pub fn parse_strategies(names: &[String], origin: &Path) -> Result<Vec<StrategyKind>> {
    names
        .iter()
        .map(|n| n.parse().map_err(|e: orthosim::Error| CliError::config(origin, "--strategy", e.to_string())))
        .collect()
}

/// Reads, overrides and validates an experiment. Flags win over
/// `env_seeds`, which wins over the file.
pub fn load_experiment(path: &Path, overrides: &Overrides, env_seeds: Option<&str>) -> Result<Experiment> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut config = parse_config(&text, path)?;
    let base = path.parent().unwrap_or(Path::new(""));
    resolve_paths(&mut config.sim, base);
    apply_overrides(&mut config, overrides, env_seeds, path)?;
    if let Some(out) = &overrides.out {
        config.output_dir = out.clone();
    } else if config.output_dir.is_relative() {
        config.output_dir = base.join(&config.output_dir);
    }
    build_experiment(path, config)
}

fn resolve_paths(sim: &mut SimSection, base: &Path) {
    let fix = |p: &mut PathBuf| {
        if p.is_relative() {
            *p = base.join(&*p);
        }
    };
    if let DataSource::Idx { images, labels } = &mut sim.data.source {
        fix(images);
        fix(labels);
    }
    if let LatencySource::Trace { path } = &mut sim.delays.source {
        fix(path);
    }
}

pub(crate) fn apply_overrides(
    config: &mut ExperimentConfig,
    overrides: &Overrides,
    env_seeds: Option<&str>,
    origin: &Path,
) -> Result<()> {
    if !overrides.seeds.is_empty() {
        config.seeds = overrides.seeds.clone();
    } else if let Some(raw) = env_seeds {
        config.seeds = parse_seed_list(raw)?;
    }
    if !overrides.strategies.is_empty() {
        config.strategies = parse_strategies(&overrides.strategies, origin)?;
    }
    if let Some(d) = overrides.duration {
        config.sim.duration = d;
    }
    Ok(())
}

fn build_experiment(path: &Path, config: ExperimentConfig) -> Result<Experiment> {
    let err = |key: &str, detail: String| CliError::config(path, key, detail);
    if config.strategies.is_empty() {
        return Err(err("strategies", "at least one strategy is required".into()));
    }
    if config.seeds.is_empty() {
        return Err(err("seeds", "at least one seed is required".into()));
    }
    if let Some(dup) = first_duplicate(&config.strategies) {
        return Err(err("strategies", format!("`{dup}` listed twice")));
    }
    if let Some(dup) = first_duplicate(&config.seeds) {
        return Err(err("seeds", format!("seed {dup} listed twice")));
    }
    if !config.alphas.is_empty() {
        if !matches!(config.sim.data.partition, PartitionConfig::Dirichlet { .. }) {
            return Err(err("alphas", "an alpha sweep needs a dirichlet partition".into()));
        }
        if let Some(bad) = config.alphas.iter().find(|a| !(**a > 0.0 && a.is_finite())) {
            return Err(err("alphas", format!("alpha must be positive, got {bad}")));
        }
        let bits: Vec<u64> = config.alphas.iter().map(|a| a.to_bits()).collect();
        if first_duplicate(&bits).is_some() {
            return Err(err("alphas", "duplicate alpha".into()));
        }
    }
    if let Some(t) = config.target_accuracy {
        if !(t > 0.0 && t <= 1.0) {
            return Err(err("target_accuracy", format!("must lie in (0, 1], got {t}")));
        }
    }
    let has_fedavg = config.strategies.contains(&StrategyKind::Fedavg);
    let relative = config.relative_time.unwrap_or(has_fedavg);
    if relative && !has_fedavg {
        return Err(err("relative_time", "relative time needs fedavg among the strategies".into()));
    }
    check_files(path, &config.sim)?;

    let alphas: Vec<Option<f64>> = if config.alphas.is_empty() {
        vec![None]
    } else {
        config.alphas.iter().copied().map(Some).collect()
    };
    let mut cells = Vec::new();
    for &alpha in &alphas {
        for &strategy in &config.strategies {
            for &seed in &config.seeds {
                let mut sim = config.sim.to_sim(strategy, seed);
                if let (Some(a), PartitionConfig::Dirichlet { alpha, .. }) = (alpha, &mut sim.data.partition) {
                    *alpha = a;
                }
                sim.validate().map_err(|e| err("sim", e.to_string()))?;
                cells.push(CellSpec {
                    strategy,
                    seed,
                    alpha,
                    sim,
                });
            }
        }
    }
    Ok(Experiment {
        path: path.to_path_buf(),
        config,
        relative,
        cells,
    })
}

fn first_duplicate<T: Ord + Copy>(items: &[T]) -> Option<T> {
    let mut seen = BTreeSet::new();
    items.iter().copied().find(|x| !seen.insert(*x))
}

fn check_files(path: &Path, sim: &SimSection) -> Result<()> {
    let mut files = Vec::new();
    if let DataSource::Idx { images, labels } = &sim.data.source {
        files.push(("sim.data.source.images", images));
        files.push(("sim.data.source.labels", labels));
    }
    if let LatencySource::Trace { path: p } = &sim.delays.source {
        files.push(("sim.delays.source.path", p));
    }
    for (key, file) in files {
        if !file.is_file() {
            return Err(CliError::config(path, key, format!("{} does not exist", file.display())));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
strategies = ["fedavg", "orthofl"]
seeds = [1, 2]

[sim]
num_clients = 3
duration = 10.0

[sim.model]
kind = "linear_softmax"
input_dim = 4
num_classes = 3

[sim.data]
source = { kind = "blobs", num_classes = 3, input_dim = 4, per_class = 30, spread = 0.3 }
partition = { kind = "dirichlet", alpha = 1.0 }

[sim.delays]
source = { kind = "fixed", values = [1.0, 2.0, 3.0] }
"#;

    fn build(text: &str, overrides: &Overrides, env: Option<&str>) -> Result<Experiment> {
        let path = Path::new("test.toml");
        let mut cfg = parse_config(text, path)?;
        apply_overrides(&mut cfg, overrides, env, path)?;
        build_experiment(path, cfg)
    }

    #[test]
    fn minimal_config_expands_cells() {
        let exp = build(MINIMAL, &Overrides::default(), None).unwrap();
        assert_eq!(exp.cells.len(), 4);
        assert!(exp.relative);
        assert_eq!(exp.cells[0].file_stem(), "fedavg_seed1");
        assert_eq!(exp.config.output_dir, PathBuf::from("results"));
        assert_eq!(exp.cells[3].sim.params, StrategyParams::default());
    }

    #[test]
    fn unknown_strategy_names_the_key() {
        let text = MINIMAL.replace("\"orthofl\"", "\"orthofl_turbo\"");
        let e = build(&text, &Overrides::default(), None).unwrap_err().to_string();
        assert!(e.contains("`strategies[1]`"), "{e}");

        let o = Overrides {
            strategies: vec!["nope".into()],
            ..Overrides::default()
        };
        let e = build(MINIMAL, &o, None).unwrap_err().to_string();
        assert!(e.contains("`--strategy`"), "{e}");
    }

    #[test]
    fn nested_errors_carry_path_and_line() {
        let text = MINIMAL.replace("duration = 10.0", "duration = \"long\"");
        let e = build(&text, &Overrides::default(), None).unwrap_err().to_string();
        assert!(e.contains("`sim.duration`"), "{e}");
        assert!(e.contains("line 7"), "{e}");

        let text = MINIMAL.replace("spread = 0.3", "spread = 0.3, sigma = 2");
        let e = build(&text, &Overrides::default(), None).unwrap_err().to_string();
        assert!(e.contains("sim.data.source"), "{e}");
    }

    #[test]
    fn seed_precedence() {
        let exp = build(MINIMAL, &Overrides::default(), Some("7, 8,9")).unwrap();
        assert_eq!(exp.config.seeds, vec![7, 8, 9]);
        let o = Overrides {
            seeds: vec![5],
            ..Overrides::default()
        };
        let exp = build(MINIMAL, &o, Some("7")).unwrap();
        assert_eq!(exp.config.seeds, vec![5]);
        assert!(build(MINIMAL, &Overrides::default(), Some("x")).is_err());
        assert!(build(MINIMAL, &Overrides::default(), Some("")).is_err());
    }

    #[test]
    fn relative_time_requires_fedavg() {
        let text = MINIMAL.replace("\"fedavg\", ", "");
        let exp = build(&text, &Overrides::default(), None).unwrap();
        assert!(!exp.relative);
        let text = format!("relative_time = true\n{text}");
        let e = build(&text, &Overrides::default(), None).unwrap_err().to_string();
        assert!(e.contains("`relative_time`"), "{e}");
    }

    #[test]
    fn alpha_sweep_sets_partition() {
        let text = format!("alphas = [0.1, 10000.0]\n{MINIMAL}");
        let exp = build(&text, &Overrides::default(), None).unwrap();
        assert_eq!(exp.cells.len(), 8);
        let last = exp.cells.last().unwrap();
        assert_eq!(last.file_stem(), "orthofl_alpha10000_seed2");
        assert!(matches!(last.sim.data.partition, PartitionConfig::Dirichlet { alpha, .. } if alpha == 1e4));
    }

    #[test]
    fn invalid_cells_are_config_errors() {
        let o = Overrides {
            duration: Some(-1.0),
            ..Overrides::default()
        };
        let e = build(MINIMAL, &o, None).unwrap_err().to_string();
        assert!(e.contains("`sim`") && e.contains("duration"), "{e}");
        let text = MINIMAL.replace("seeds = [1, 2]", "seeds = []");
        assert!(build(&text, &Overrides::default(), None).unwrap_err().to_string().contains("`seeds`"));
    }

    #[test]
    fn missing_trace_is_reported_at_parse_time() {
        let text = MINIMAL.replace(
            "source = { kind = \"fixed\", values = [1.0, 2.0, 3.0] }",
            "source = { kind = \"trace\", path = \"/no/such/trace.csv\" }",
        );
        let e = build(&text, &Overrides::default(), None).unwrap_err().to_string();
        assert!(e.contains("sim.delays.source.path"), "{e}");
    }
}
