//! Discrete-event simulation.
//!
//! Simulated time advances only through sampled client latencies; local
//! training, aggregation and evaluation take zero simulated time. The event
//! loop is single threaded, and every random draw comes from a stream keyed
//! by the config seed, so a config fully determines its metrics.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::data::{
    dirichlet_partition_with, gen_blobs, load_idx, train_test_split, two_client_disjoint_split, DirichletOptions,
    LabeledSet,
};
use crate::delays::{
    fit_halfnormal, fit_lognormal, fit_uniform, load_trace, sample_delay, DelayModel, LatencyStats, DEFAULT_DELAY_FLOOR,
};
use crate::error::{Error, Result};
use crate::models::{evaluate, init_weights, local_train, ModelSpec, TrainConfig};
use crate::rng::{derive_seed, stream, SimRng, Stream};
use crate::strategies::{build_server, AsyncServer, ClientUpdateMsg, Server, StrategyKind, StrategyParams, SyncServer};
use crate::tensor::{Matrix, ModelWeights, ProjectionCheck};

/// A pending client arrival.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimEvent {
    pub arrival_time: f64,
    pub client_id: usize,
    pub sequence_number: u64,
}

impl Eq for SimEvent {}

impl Ord for SimEvent {
    fn cmp(&self, other: &Self) -> Ordering {
        self.arrival_time
            .total_cmp(&other.arrival_time)
            .then(self.sequence_number.cmp(&other.sequence_number))
    }
}

impl PartialOrd for SimEvent {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Min-queue of arrivals with sequence numbers assigned at scheduling time.
#[derive(Debug, Default)]
pub struct EventQueue {
    heap: BinaryHeap<std::cmp::Reverse<SimEvent>>,
    next_seq: u64,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn schedule(&mut self, arrival_time: f64, client_id: usize) -> SimEvent {
        let ev = SimEvent {
            arrival_time,
            client_id,
            sequence_number: self.next_seq,
        };
        self.next_seq += 1;
        self.heap.push(std::cmp::Reverse(ev));
        ev
    }

    pub fn pop(&mut self) -> Option<SimEvent> {
        self.heap.pop().map(|r| r.0)
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    Blobs {
        num_classes: usize,
        input_dim: usize,
        per_class: usize,
        spread: f64,
    },
    Idx { images: PathBuf, labels: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PartitionConfig {
    Dirichlet {
        alpha: f64,
        #[serde(default)]
        options: DirichletOptions,
    },
    /// Two clients holding the lower and upper halves of the label set.
    DisjointHalves,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub source: DataSource,
    pub partition: PartitionConfig,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    /// Seed for generation, splitting and partitioning; the run seed if absent.
    #[serde(default)]
    pub data_seed: Option<u64>,
}

fn default_test_fraction() -> f64 {
    0.2
}

/// Where per-client latency statistics come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LatencySource {
    /// Trace CSV; client `m` uses the `m mod rows`-th row in id order.
    Trace { path: PathBuf },
    /// Explicit statistics, one entry per client.
    Stats { clients: Vec<LatencyStats> },
    /// Means spaced geometrically from `mean_min` to `mean_max`, each with
    /// standard deviation `cv * mean`, shuffled across clients by the seed.
    Spread { mean_min: f64, mean_max: f64, cv: f64 },
    /// Deterministic per-client delays; the distribution setting is ignored.
    Fixed { values: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DelayDistribution {
    #[default]
    Gaussian,
    Lognormal,
    Halfnormal,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelayConfig {
    pub source: LatencySource,
    #[serde(default)]
    pub distribution: DelayDistribution,
    #[serde(default = "default_floor")]
    pub floor: f64,
    /// Draw each client's latency once and reuse it for the whole run.
    #[serde(default)]
    pub freeze_latency: bool,
}

fn default_floor() -> f64 {
    DEFAULT_DELAY_FLOOR
}

/// Pseudo-observations per client when fitting the uniform model to stats.
pub const UNIFORM_FIT_DRAWS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub strategy: StrategyKind,
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
    /// Synchronous strategies only; defaults to `min(10, num_clients)`.
    #[serde(default)]
    pub clients_per_round: Option<usize>,
    pub seed: u64,
}

fn default_eval_every() -> u64 {
    1
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(Error::param(format!("duration must be positive, got {}", self.duration)));
        }
        if self.num_clients == 0 {
            return Err(Error::param("num_clients must be at least 1"));
        }
        if self.eval_every == 0 {
            return Err(Error::param("eval_every must be at least 1"));
        }
        if let Some(k) = self.clients_per_round {
            if k == 0 || k > self.num_clients {
                return Err(Error::param(format!(
                    "clients_per_round must be in 1..={}, got {k}",
                    self.num_clients
                )));
            }
        }
        if !(self.data.test_fraction > 0.0 && self.data.test_fraction < 1.0) {
            return Err(Error::param("test_fraction must be in (0, 1)"));
        }
        if !(self.delays.floor >= 0.0 && self.delays.floor.is_finite()) {
            return Err(Error::param("delay floor must be non-negative"));
        }
        if matches!(self.data.partition, PartitionConfig::DisjointHalves) && self.num_clients != 2 {
            return Err(Error::param("disjoint_halves needs exactly 2 clients"));
        }
        self.model.validate()?;
        self.train.validate()?;
        self.params.validate()
    }

    pub fn clients_per_round(&self) -> usize {
        self.clients_per_round.unwrap_or(self.num_clients.min(10))
    }

    fn data_seed(&self) -> u64 {
        self.data.data_seed.unwrap_or(self.seed)
    }
}

/// Everything a run needs besides the strategy state.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub clients: Vec<LabeledSet>,
    pub test: LabeledSet,
    pub delay_models: Vec<DelayModel>,
    pub initial: ModelWeights,
}

pub fn prepare(cfg: &SimConfig) -> Result<Scenario> {
    cfg.validate()?;
    let data_seed = cfg.data_seed();
    let pool = match &cfg.data.source {
        DataSource::Blobs {
            num_classes,
            input_dim,
            per_class,
            spread,
        } => gen_blobs(*num_classes, *input_dim, *per_class, *spread, data_seed)?,
        DataSource::Idx { images, labels } => load_idx(images, labels)?,
    };
    if pool.input_dim() != cfg.model.input_dim || pool.num_classes() > cfg.model.num_classes {
        return Err(Error::param(format!(
            "data has {} features and {} classes; model expects {} and {}",
            pool.input_dim(),
            pool.num_classes(),
            cfg.model.input_dim,
            cfg.model.num_classes
        )));
    }
    let (train, test) = train_test_split(&pool, cfg.data.test_fraction, data_seed)?;
    let plan = match &cfg.data.partition {
        PartitionConfig::Dirichlet { alpha, options } => {
            dirichlet_partition_with(&train, cfg.num_clients, *alpha, options, data_seed)?
        }
        PartitionConfig::DisjointHalves => two_client_disjoint_split(&train)?,
    };
    plan.validate(train.len())?;
    let clients = plan.client_sets(&train);
    let delay_models = assign_delay_models(&cfg.delays, cfg.num_clients, cfg.seed)?;
    let initial = init_weights(&cfg.model, cfg.seed)?;
    Ok(Scenario {
        clients,
        test,
        delay_models,
        initial,
    })
}

/// Per-client delay distributions for `delays`.
pub fn assign_delay_models(delays: &DelayConfig, num_clients: usize, seed: u64) -> Result<Vec<DelayModel>> {
    let stats: Vec<LatencyStats> = match &delays.source {
        LatencySource::Fixed { values } => {
            if values.len() != num_clients {
                return Err(Error::param(format!("{} fixed delays for {num_clients} clients", values.len())));
            }
            return values
                .iter()
                .map(|&v| {
                    if v >= 0.0 && v.is_finite() {
                        Ok(DelayModel::fixed(v))
                    } else {
                        Err(Error::param(format!("fixed delay {v} is invalid")))
                    }
                })
                .collect();
        }
        LatencySource::Stats { clients } => {
            if clients.len() != num_clients {
                return Err(Error::param(format!("{} latency entries for {num_clients} clients", clients.len())));
            }
            clients
                .iter()
                .map(|s| LatencyStats::new(s.mean, s.std))
                .collect::<Result<_>>()?
        }
        LatencySource::Trace { path } => {
            let rows: Vec<LatencyStats> = load_trace(path)?.into_values().collect();
            if rows.is_empty() {
                return Err(Error::format(path, "line 1", "trace has no clients"));
            }
            (0..num_clients).map(|m| rows[m % rows.len()]).collect()
        }
        LatencySource::Spread { mean_min, mean_max, cv } => spread_stats(*mean_min, *mean_max, *cv, num_clients, seed)?,
    };
    stats
        .into_iter()
        .enumerate()
        .map(|(m, s)| match delays.distribution {
            DelayDistribution::Gaussian => Ok(DelayModel::gaussian(s)),
            DelayDistribution::Lognormal => fit_lognormal(s),
            DelayDistribution::Halfnormal => fit_halfnormal(s),
            DelayDistribution::Uniform => {
                let mut rng = stream(seed, Stream::DelayFit, m as u64);
                let gauss = DelayModel::gaussian(s);
                let draws: Vec<f64> = (0..UNIFORM_FIT_DRAWS)
                    .map(|_| sample_delay(&gauss, &mut rng, f64::NEG_INFINITY))
                    .collect();
                fit_uniform(&draws)
            }
        })
        .collect()
}

fn spread_stats(mean_min: f64, mean_max: f64, cv: f64, n: usize, seed: u64) -> Result<Vec<LatencyStats>> {
    if !(mean_min > 0.0 && mean_max >= mean_min && mean_max.is_finite()) {
        return Err(Error::param("spread needs 0 < mean_min <= mean_max"));
    }
    if !(cv >= 0.0 && cv.is_finite()) {
        return Err(Error::param("spread cv must be non-negative"));
    }
    let ratio = mean_max / mean_min;
    let mut means: Vec<f64> = (0..n)
        .map(|i| {
            let f = if n == 1 { 0.0 } else { i as f64 / (n - 1) as f64 };
            mean_min * ratio.powf(f)
        })
        .collect();
    let mut rng = stream(seed, Stream::DelayAssign, 0);
    rand::seq::SliceRandom::shuffle(means.as_mut_slice(), &mut rng);
    means.into_iter().map(|m| LatencyStats::new(m, cv * m)).collect()
}

/// One evaluation of the global model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub sim_time: f64,
    pub round: u64,
    /// Reporting client (async) or the round's slowest client (sync).
    pub client_id: usize,
    pub staleness: u64,
    pub accuracy: f64,
    pub loss: f64,
    pub strategy: StrategyKind,
    pub seed: u64,
}

pub const METRICS_HEADER: [&str; 8] = [
    "sim_time",
    "round",
    "client_id",
    "staleness",
    "accuracy",
    "loss",
    "strategy",
    "seed",
];

/// Per-update view handed to an [`Observer`].
#[derive(Debug)]
pub struct UpdateRecord<'a> {
    pub sim_time: f64,
    pub round: u64,
    pub client_id: usize,
    pub staleness: u64,
    pub global: &'a ModelWeights,
    /// Async only: what the client submitted and what it got back.
    pub submitted: Option<&'a ModelWeights>,
    pub payload: Option<&'a ModelWeights>,
    pub projection: &'a [ProjectionCheck],
    /// Sync only: the sampled clients and their latencies for this round.
    pub round_latencies: &'a [(usize, f64)],
    pub round_started: f64,
}

/// Hook into the event loop; every method defaults to a no-op.
pub trait Observer {
    fn on_start(&mut self, _initial: &ModelWeights) {}
    fn on_update(&mut self, _rec: &UpdateRecord<'_>) {}
}

impl Observer for () {}

/// Records the global weights after every update, starting with the initial
/// weights.
#[derive(Debug, Clone, Default)]
pub struct GlobalHistory {
    pub snapshots: Vec<ModelWeights>,
    pub clients: Vec<usize>,
}

impl Observer for GlobalHistory {
    fn on_start(&mut self, initial: &ModelWeights) {
        self.snapshots.push(initial.clone());
    }

    fn on_update(&mut self, rec: &UpdateRecord<'_>) {
        self.snapshots.push(rec.global.clone());
        self.clients.push(rec.client_id);
    }
}

pub fn run_simulation(cfg: &SimConfig) -> Result<Vec<MetricsRow>> {
    run_simulation_observed(cfg, &mut ())
}

pub fn run_simulation_observed(cfg: &SimConfig, observer: &mut dyn Observer) -> Result<Vec<MetricsRow>> {
    let scenario = prepare(cfg)?;
    run_scenario(cfg, &scenario, observer)
}

/// Runs `cfg` on an already prepared scenario.
pub fn run_scenario(cfg: &SimConfig, scenario: &Scenario, observer: &mut dyn Observer) -> Result<Vec<MetricsRow>> {
    cfg.validate()?;
    if scenario.clients.len() != cfg.num_clients || scenario.delay_models.len() != cfg.num_clients {
        return Err(Error::param("scenario does not match num_clients"));
    }
    let server = build_server(cfg.strategy, &cfg.params, scenario.initial.clone(), cfg.num_clients)?;
    observer.on_start(&scenario.initial);
    let run = Run::new(cfg, scenario);
    match server {
        Server::Async(server) => run.asynchronous(server, observer),
        Server::Sync(server) => run.synchronous(server, observer),
    }
}

struct Run<'a> {
    cfg: &'a SimConfig,
    scenario: &'a Scenario,
    delay_rngs: Vec<SimRng>,
    frozen: Vec<Option<f64>>,
    local_rounds: Vec<u64>,
    rows: Vec<MetricsRow>,
}

impl<'a> Run<'a> {
    fn new(cfg: &'a SimConfig, scenario: &'a Scenario) -> Self {
        let n = cfg.num_clients;
        Self {
            cfg,
            scenario,
            delay_rngs: (0..n).map(|m| stream(cfg.seed, Stream::ClientDelay, m as u64)).collect(),
            frozen: vec![None; n],
            local_rounds: vec![0; n],
            rows: Vec::new(),
        }
    }

    fn latency(&mut self, m: usize) -> f64 {
        if let Some(v) = self.frozen[m] {
            return v;
        }
        let v = sample_delay(&self.scenario.delay_models[m], &mut self.delay_rngs[m], self.cfg.delays.floor);
        if self.cfg.delays.freeze_latency {
            self.frozen[m] = Some(v);
        }
        v
    }

    fn train(&mut self, m: usize, start: &ModelWeights) -> Result<ModelWeights> {
        let prox_mu = self.cfg.strategy.client_prox_mu(&self.cfg.params);
        let tc = TrainConfig {
            prox_mu,
            shuffle_seed: derive_seed(&[self.cfg.seed, Stream::ClientShuffle as u64, m as u64, self.local_rounds[m]]),
            ..self.cfg.train
        };
        self.local_rounds[m] += 1;
        let center = (prox_mu > 0.0).then_some(start);
        local_train(&self.cfg.model, start, &self.scenario.clients[m], &tc, center)
    }

    fn record(&mut self, sim_time: f64, round: u64, client_id: usize, staleness: u64, global: &ModelWeights) -> Result<()> {
        if round % self.cfg.eval_every != 0 {
            return Ok(());
        }
        let ev = evaluate(&self.cfg.model, global, &self.scenario.test)?;
        self.rows.push(MetricsRow {
            sim_time,
            round,
            client_id,
            staleness,
            accuracy: ev.accuracy,
            loss: ev.mean_loss,
            strategy: self.cfg.strategy,
            seed: self.cfg.seed,
        });
        Ok(())
    }

    fn asynchronous(mut self, mut server: Box<dyn AsyncServer>, observer: &mut dyn Observer) -> Result<Vec<MetricsRow>> {
        let n = self.cfg.num_clients;
        let mut payloads = vec![self.scenario.initial.clone(); n];
        let mut received = vec![0u64; n];
        let mut round = 0u64;
        let mut queue = EventQueue::new();
        for m in 0..n {
            let d = self.latency(m);
            queue.schedule(d, m);
        }
        while let Some(ev) = queue.pop() {
            if ev.arrival_time > self.cfg.duration {
                break;
            }
            let m = ev.client_id;
            let trained = self.train(m, &payloads[m])?;
            let outcome = server.on_update(ClientUpdateMsg {
                client_id: m,
                round_received: received[m],
                trained_weights: trained.clone(),
                num_examples: self.scenario.clients[m].len(),
            })?;
            round += 1;
            let staleness = round - received[m];
            if outcome.round != round || outcome.staleness != staleness {
                return Err(Error::Protocol(format!(
                    "engine saw round {round} staleness {staleness}, strategy recorded round {} staleness {}",
                    outcome.round, outcome.staleness
                )));
            }
            payloads[m] = outcome.payload.weights_for_client;
            received[m] = round;
            observer.on_update(&UpdateRecord {
                sim_time: ev.arrival_time,
                round,
                client_id: m,
                staleness,
                global: server.global(),
                submitted: Some(&trained),
                payload: Some(&payloads[m]),
                projection: &outcome.projection,
                round_latencies: &[],
                round_started: ev.arrival_time,
            });
            self.record(ev.arrival_time, round, m, staleness, server.global())?;
            let d = self.latency(m);
            queue.schedule(ev.arrival_time + d, m);
            debug_assert_eq!(queue.len(), n);
        }
        Ok(self.rows)
    }

    fn synchronous(mut self, mut server: SyncServer, observer: &mut dyn Observer) -> Result<Vec<MetricsRow>> {
        let n = self.cfg.num_clients;
        let k = self.cfg.clients_per_round();
        let mut global = self.scenario.initial.clone();
        let mut now = 0.0;
        let mut round = 0u64;
        loop {
            let mut rng = stream(self.cfg.seed, Stream::ClientSampling, round);
            let mut chosen = sample(&mut rng, n, k).into_vec();
            chosen.sort_unstable();
            let latencies: Vec<(usize, f64)> = chosen.iter().map(|&m| (m, self.latency(m))).collect();
            // the slowest client gates the round; ties go to the lowest id
            let (straggler, slowest) = latencies
                .iter()
                .copied()
                .fold((usize::MAX, f64::NEG_INFINITY), |acc, (m, d)| if d > acc.1 { (m, d) } else { acc });
            let end = now + slowest;
            if end > self.cfg.duration {
                break;
            }
            let mut updates = Vec::with_capacity(k);
            for &m in &chosen {
                updates.push(ClientUpdateMsg {
                    client_id: m,
                    round_received: round,
                    trained_weights: self.train(m, &global)?,
                    num_examples: self.scenario.clients[m].len(),
                });
            }
            global = server.aggregate(&global, &updates)?;
            round += 1;
            observer.on_update(&UpdateRecord {
                sim_time: end,
                round,
                client_id: straggler,
                staleness: 1,
                global: &global,
                submitted: None,
                payload: None,
                projection: &[],
                round_latencies: &latencies,
                round_started: now,
            });
            self.record(end, round, straggler, 1, &global)?;
            now = end;
        }
        Ok(self.rows)
    }
}

/// First `sim_time` at which accuracy reaches `target`.
pub fn time_to_target(rows: &[MetricsRow], target: f64) -> Option<f64> {
    rows.iter().find(|r| r.accuracy >= target).map(|r| r.sim_time)
}

pub fn relative_time(candidate: f64, fedavg_baseline: f64) -> Result<f64> {
    if !(fedavg_baseline > 0.0 && fedavg_baseline.is_finite()) {
        return Err(Error::param(format!("baseline time must be positive, got {fedavg_baseline}")));
    }
    Ok(candidate / fedavg_baseline)
}

/// Per-neuron mean-weight change of `group` across consecutive snapshots.
///
/// Rows follow the group's leading (output) dimension; column `j` holds the
/// change made by update `j + 1`.
pub fn weight_shift_trace(history: &[ModelWeights], group: &str) -> Result<Matrix> {
    let first = history.first().ok_or_else(|| Error::param("empty weight history"))?;
    let g0 = first
        .group(group)
        .ok_or_else(|| Error::param(format!("unknown parameter group `{group}`")))?;
    let rows = g0.shape()[0];
    let width = g0.len() / rows;
    let neuron_means = |w: &ModelWeights| -> Result<Vec<f64>> {
        let g = w
            .group(group)
            .ok_or_else(|| Error::param(format!("unknown parameter group `{group}`")))?;
        if g.shape() != g0.shape() {
            return Err(Error::conformance(group, "shape changed within the history"));
        }
        Ok(g.values().chunks(width).map(|c| c.iter().sum::<f64>() / width as f64).collect())
    };
    let cols = history.len() - 1;
    let mut out = Matrix::zeros(rows, cols);
    let mut prev = neuron_means(first)?;
    for (j, w) in history[1..].iter().enumerate() {
        let cur = neuron_means(w)?;
        for (i, (c, p)) in cur.iter().zip(&prev).enumerate() {
            out.set(i, j, c - p);
        }
        prev = cur;
    }
    Ok(out)
}

pub fn write_metrics<W: Write>(rows: &[MetricsRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if rows.is_empty() {
        w.write_record(METRICS_HEADER).map_err(csv_err)?;
    }
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Protocol(format!("writing metrics: {e}")))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Protocol(format!("writing metrics: {e}"))
}

pub fn write_metrics_file(rows: &[MetricsRow], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_metrics(rows, std::io::BufWriter::new(file))
}

/// Parses a metrics CSV; `origin` is only used in error messages.
pub fn parse_metrics(text: &str, origin: &Path) -> Result<Vec<MetricsRow>> {
    let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| Error::format(origin, "line 1", e.to_string()))?
        .clone();
    if header.iter().ne(METRICS_HEADER) {
        return Err(Error::format(
            origin,
            "line 1",
            format!("expected header `{}`", METRICS_HEADER.join(",")),
        ));
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            Error::format(origin, format!("line {line}"), e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let row: MetricsRow = record
            .deserialize(Some(&header))
            .map_err(|e| Error::format(origin, format!("line {line}"), e.to_string()))?;
        if !(row.sim_time.is_finite() && row.accuracy.is_finite()) {
            return Err(Error::format(origin, format!("line {line}"), "non-finite value"));
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn read_metrics_file(path: &Path) -> Result<Vec<MetricsRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_metrics(&text, path)
}
