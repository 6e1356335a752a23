//! Server-side aggregation strategies.
//!
//! Asynchronous and semi-asynchronous strategies implement [`AsyncServer`]:
//! the server processes one client update per global round and answers with
//! the weights that client trains from next. Synchronous strategies aggregate
//! a whole round of updates at once through [`SyncServer`].
//!
//! Every asynchronous server starts with all clients holding the initial
//! global weights at round 0, so a client's first update already has a
//! well-defined staleness.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{
    add_delta, delta, moving_average, orthogonalize_with, staleness_decay, ModelWeights, ProjectionCheck,
    ProjectionGranularity, WeightDelta, DEFAULT_PROJECTION_EPS,
};

/// A trained model returned by a client.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientUpdateMsg {
    pub client_id: usize,
    /// Global round at which the client received the weights it trained from.
    pub round_received: u64,
    pub trained_weights: ModelWeights,
    pub num_examples: usize,
}

/// Weights sent back to the reporting client.
#[derive(Debug, Clone, PartialEq)]
pub struct ServerPayload {
    pub weights_for_client: ModelWeights,
}

/// Everything the server did with one update.
#[derive(Debug, Clone)]
pub struct UpdateOutcome {
    pub payload: ServerPayload,
    pub round: u64,
    pub staleness: u64,
    /// Mixing weight used for the moving average, where one applies.
    pub mixing_weight: Option<f64>,
    /// Per-unit projection diagnostics, for strategies that project.
    pub projection: Vec<ProjectionCheck>,
    pub global_changed: bool,
}

/// A server that consumes client updates one at a time.
pub trait AsyncServer: Send {
    fn kind(&self) -> StrategyKind;
    fn global(&self) -> &ModelWeights;
    /// Number of updates processed so far.
    fn round(&self) -> u64;
    /// Round at which `client` last communicated (0 before its first update).
    fn last_round(&self, client: usize) -> Option<u64>;
    fn on_update(&mut self, msg: ClientUpdateMsg) -> Result<UpdateOutcome>;
}

/// Round counter and per-client last-communication rounds.
#[derive(Debug, Clone)]
struct RoundLedger {
    round: u64,
    last_round: Vec<u64>,
}

impl RoundLedger {
    fn new(num_clients: usize) -> Self {
        Self {
            round: 0,
            last_round: vec![0; num_clients],
        }
    }

    fn check(&self, msg: &ClientUpdateMsg, global: &ModelWeights) -> Result<()> {
        let Some(&tau) = self.last_round.get(msg.client_id) else {
            return Err(Error::Protocol(format!("unknown client {}", msg.client_id)));
        };
        if msg.round_received != tau {
            return Err(Error::Protocol(format!(
                "client {} trained from round {} but the server last answered it at round {tau}",
                msg.client_id, msg.round_received
            )));
        }
        global.check_conformant(&msg.trained_weights)
    }

    /// Advances the round and returns `(t, staleness)`.
    fn advance(&mut self, client: usize) -> Result<(u64, u64)> {
        self.round += 1;
        let staleness = self.round - self.last_round[client];
        if staleness < 1 {
            return Err(Error::Staleness(staleness));
        }
        self.last_round[client] = self.round;
        Ok((self.round, staleness))
    }
}

/// Which global update an OrthoFL server applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OrthoVariant {
    /// Staleness-weighted moving average of the client weights.
    MovingAverage,
    /// The calibrated client weights replace the global model.
    LoadCalibrated,
}

/// Orthogonal calibration with separate global and per-client weights.
#[derive(Debug, Clone)]
pub struct OrthoFlServer {
    global: ModelWeights,
    client_snapshot: Vec<ModelWeights>,
    global_snapshot: Vec<ModelWeights>,
    ledger: RoundLedger,
    beta: f64,
    a: f64,
    eps: f64,
    granularity: ProjectionGranularity,
    variant: OrthoVariant,
}

impl OrthoFlServer {
    pub fn new(initial: ModelWeights, num_clients: usize, params: &StrategyParams, variant: OrthoVariant) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            client_snapshot: vec![initial.clone(); num_clients],
            global_snapshot: vec![initial.clone(); num_clients],
            global: initial,
            ledger: RoundLedger::new(num_clients),
            beta: params.beta,
            a: params.a,
            eps: params.eps,
            granularity: params.granularity,
            variant,
        })
    }

    /// Weights last sent to `client`.
    pub fn client_snapshot(&self, client: usize) -> Option<&ModelWeights> {
        self.client_snapshot.get(client)
    }

    /// Global weights right after `client` last communicated.
    pub fn global_snapshot(&self, client: usize) -> Option<&ModelWeights> {
        self.global_snapshot.get(client)
    }
}

impl AsyncServer for OrthoFlServer {
    fn kind(&self) -> StrategyKind {
        match self.variant {
            OrthoVariant::MovingAverage => StrategyKind::Orthofl,
            OrthoVariant::LoadCalibrated => StrategyKind::OrthoflNoMa,
        }
    }

    fn global(&self) -> &ModelWeights {
        &self.global
    }

    fn round(&self) -> u64 {
        self.ledger.round
    }

    fn last_round(&self, client: usize) -> Option<u64> {
        self.ledger.last_round.get(client).copied()
    }

    fn on_update(&mut self, msg: ClientUpdateMsg) -> Result<UpdateOutcome> {
        self.ledger.check(&msg, &self.global)?;
        let m = msg.client_id;
        let (round, staleness) = self.ledger.advance(m)?;
        let client_w = &msg.trained_weights;

        let global_shift = delta(&self.global, &self.global_snapshot[m])?;
        let local_delta = delta(client_w, &self.client_snapshot[m])?;
        let (calibrated_shift, projection) = orthogonalize_with(&global_shift, &local_delta, self.eps, self.granularity)?;
        let payload = add_delta(client_w, &calibrated_shift)?;

        let (new_global, mixing_weight) = match self.variant {
            OrthoVariant::MovingAverage => {
                let beta_t = staleness_decay(staleness, self.beta, self.a)?;
                (moving_average(&self.global, client_w, beta_t)?, Some(beta_t))
            }
            OrthoVariant::LoadCalibrated => (payload.clone(), None),
        };
        new_global.ensure_finite()?;
        self.global = new_global;
        self.client_snapshot[m] = payload.clone();
        self.global_snapshot[m] = self.global.clone();

        Ok(UpdateOutcome {
            payload: ServerPayload {
                weights_for_client: payload,
            },
            round,
            staleness,
            mixing_weight,
            projection,
            global_changed: true,
        })
    }
}

/// Staleness-weighted moving average; the client resumes from the new global.
#[derive(Debug, Clone)]
pub struct FedAsyncServer {
    global: ModelWeights,
    ledger: RoundLedger,
    beta: f64,
    a: f64,
}

impl FedAsyncServer {
    pub fn new(initial: ModelWeights, num_clients: usize, params: &StrategyParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            global: initial,
            ledger: RoundLedger::new(num_clients),
            beta: params.beta,
            a: params.a,
        })
    }
}

impl AsyncServer for FedAsyncServer {
    fn kind(&self) -> StrategyKind {
        StrategyKind::Fedasync
    }

    fn global(&self) -> &ModelWeights {
        &self.global
    }

    fn round(&self) -> u64 {
        self.ledger.round
    }

    fn last_round(&self, client: usize) -> Option<u64> {
        self.ledger.last_round.get(client).copied()
    }

    fn on_update(&mut self, msg: ClientUpdateMsg) -> Result<UpdateOutcome> {
        self.ledger.check(&msg, &self.global)?;
        let (round, staleness) = self.ledger.advance(msg.client_id)?;
        let beta_t = staleness_decay(staleness, self.beta, self.a)?;
        let new_global = moving_average(&self.global, &msg.trained_weights, beta_t)?;
        new_global.ensure_finite()?;
        self.global = new_global;
        Ok(UpdateOutcome {
            payload: ServerPayload {
                weights_for_client: self.global.clone(),
            },
            round,
            staleness,
            mixing_weight: Some(beta_t),
            projection: Vec::new(),
            global_changed: true,
        })
    }
}

/// The incoming client delta is stripped of its components along every other
/// client's most recent delta before the moving average.
#[derive(Debug, Clone)]
pub struct PairwiseProjectionServer {
    global: ModelWeights,
    sent: Vec<ModelWeights>,
    last_delta: Vec<Option<WeightDelta>>,
    ledger: RoundLedger,
    beta: f64,
    a: f64,
    eps: f64,
    granularity: ProjectionGranularity,
}

impl PairwiseProjectionServer {
    pub fn new(initial: ModelWeights, num_clients: usize, params: &StrategyParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            sent: vec![initial.clone(); num_clients],
            last_delta: vec![None; num_clients],
            global: initial,
            ledger: RoundLedger::new(num_clients),
            beta: params.beta,
            a: params.a,
            eps: params.eps,
            granularity: params.granularity,
        })
    }
}

impl AsyncServer for PairwiseProjectionServer {
    fn kind(&self) -> StrategyKind {
        StrategyKind::OrthoflPairwise
    }

    fn global(&self) -> &ModelWeights {
        &self.global
    }

    fn round(&self) -> u64 {
        self.ledger.round
    }

    fn last_round(&self, client: usize) -> Option<u64> {
        self.ledger.last_round.get(client).copied()
    }

    fn on_update(&mut self, msg: ClientUpdateMsg) -> Result<UpdateOutcome> {
        self.ledger.check(&msg, &self.global)?;
        let m = msg.client_id;
        let (round, staleness) = self.ledger.advance(m)?;

        let local_delta = delta(&msg.trained_weights, &self.sent[m])?;
        let mut calibrated = local_delta.clone();
        let mut projection = Vec::new();
        for (j, other) in self.last_delta.iter().enumerate() {
            if j == m {
                continue;
            }
            if let Some(other) = other {
                let (next, checks) = orthogonalize_with(&calibrated, other, self.eps, self.granularity)?;
                calibrated = next;
                projection.extend(checks);
            }
        }
        let calibrated_client = add_delta(&self.sent[m], &calibrated)?;
        let beta_t = staleness_decay(staleness, self.beta, self.a)?;
        let new_global = moving_average(&self.global, &calibrated_client, beta_t)?;
        new_global.ensure_finite()?;
        self.global = new_global;
        self.sent[m] = self.global.clone();
        self.last_delta[m] = Some(local_delta);

        Ok(UpdateOutcome {
            payload: ServerPayload {
                weights_for_client: self.global.clone(),
            },
            round,
            staleness,
            mixing_weight: Some(beta_t),
            projection,
            global_changed: true,
        })
    }
}

/// Buffered aggregation; `cache_calibration` switches FedBuff to CA²FL.
#[derive(Debug, Clone)]
pub struct BufferedServer {
    global: ModelWeights,
    sent: Vec<ModelWeights>,
    buffer: Vec<(usize, WeightDelta)>,
    /// Latest flushed delta per client (CA²FL only).
    cache: Vec<Option<WeightDelta>>,
    ledger: RoundLedger,
    buffer_size: usize,
    server_lr: f64,
    cache_calibration: bool,
}

impl BufferedServer {
    pub fn fedbuff(initial: ModelWeights, num_clients: usize, params: &StrategyParams) -> Result<Self> {
        Self::build(initial, num_clients, params, false)
    }

    pub fn ca2fl(initial: ModelWeights, num_clients: usize, params: &StrategyParams) -> Result<Self> {
        Self::build(initial, num_clients, params, true)
    }

    fn build(initial: ModelWeights, num_clients: usize, params: &StrategyParams, cache_calibration: bool) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            sent: vec![initial.clone(); num_clients],
            buffer: Vec::with_capacity(params.buffer_size),
            cache: vec![None; num_clients],
            global: initial,
            ledger: RoundLedger::new(num_clients),
            buffer_size: params.buffer_size,
            server_lr: params.buffer_lr,
            cache_calibration,
        })
    }

    pub fn buffered(&self) -> usize {
        self.buffer.len()
    }

    pub fn cached(&self, client: usize) -> Option<&WeightDelta> {
        self.cache.get(client).and_then(Option::as_ref)
    }

    /// Seeds the CA²FL cache for `client`.
    pub fn set_cache(&mut self, client: usize, d: WeightDelta) -> Result<()> {
        self.global.check_conformant(&d)?;
        match self.cache.get_mut(client) {
            Some(slot) => {
                *slot = Some(d);
                Ok(())
            }
            None => Err(Error::Protocol(format!("unknown client {client}"))),
        }
    }

    /// Global step for the current buffer.
    fn flush_step(&self) -> Result<WeightDelta> {
        let n = self.buffer.len() as f64;
        if !self.cache_calibration {
            return WeightDelta::linear_combination(&self.global, self.buffer.iter().map(|(_, d)| (self.server_lr / n, d)));
        }
        // mean over buffered clients of (Δ_m − h_m) plus mean over cached clients of h
        let mut terms: Vec<(f64, &WeightDelta)> = Vec::new();
        for (c, d) in &self.buffer {
            terms.push((self.server_lr / n, d));
            if let Some(h) = &self.cache[*c] {
                terms.push((-self.server_lr / n, h));
            }
        }
        let known: Vec<&WeightDelta> = self.cache.iter().flatten().collect();
        if !known.is_empty() {
            let k = known.len() as f64;
            terms.extend(known.into_iter().map(|h| (self.server_lr / k, h)));
        }
        WeightDelta::linear_combination(&self.global, terms)
    }
}

impl AsyncServer for BufferedServer {
    fn kind(&self) -> StrategyKind {
        if self.cache_calibration {
            StrategyKind::Ca2fl
        } else {
            StrategyKind::Fedbuff
        }
    }

    fn global(&self) -> &ModelWeights {
        &self.global
    }

    fn round(&self) -> u64 {
        self.ledger.round
    }

    fn last_round(&self, client: usize) -> Option<u64> {
        self.ledger.last_round.get(client).copied()
    }

    fn on_update(&mut self, msg: ClientUpdateMsg) -> Result<UpdateOutcome> {
        self.ledger.check(&msg, &self.global)?;
        let m = msg.client_id;
        let (round, staleness) = self.ledger.advance(m)?;
        let raw = delta(&msg.trained_weights, &self.sent[m])?;
        self.buffer.push((m, raw.scaled(1.0 / (staleness as f64).sqrt())));

        let mut global_changed = false;
        if self.buffer.len() >= self.buffer_size {
            let step = self.flush_step()?;
            let new_global = add_delta(&self.global, &step)?;
            new_global.ensure_finite()?;
            self.global = new_global;
            if self.cache_calibration {
                for (c, d) in self.buffer.drain(..) {
                    self.cache[c] = Some(d);
                }
            } else {
                self.buffer.clear();
            }
            global_changed = true;
        }
        self.sent[m] = self.global.clone();
        Ok(UpdateOutcome {
            payload: ServerPayload {
                weights_for_client: self.global.clone(),
            },
            round,
            staleness,
            mixing_weight: None,
            projection: Vec::new(),
            global_changed,
        })
    }
}

/// Example-count-weighted average of the client weights.
pub fn fedavg_round(global: &ModelWeights, updates: &[ClientUpdateMsg]) -> Result<ModelWeights> {
    if updates.is_empty() {
        return Err(Error::Protocol("a synchronous round needs at least one update".into()));
    }
    let total: usize = updates.iter().map(|u| u.num_examples).sum();
    if total == 0 {
        return Err(Error::Protocol("updates carry no examples".into()));
    }
    let mut terms = Vec::with_capacity(updates.len());
    let deltas: Vec<WeightDelta> = updates
        .iter()
        .map(|u| delta(&u.trained_weights, global))
        .collect::<Result<_>>()?;
    for (u, d) in updates.iter().zip(&deltas) {
        terms.push((u.num_examples as f64 / total as f64, d));
    }
    let mean_shift = WeightDelta::linear_combination(global, terms)?;
    add_delta(global, &mean_shift)
}

/// Server-side adaptive-moment optimizer state.
#[derive(Debug, Clone)]
pub struct AdamState {
    first_moment: WeightDelta,
    second_moment: WeightDelta,
    step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub server_lr: f64,
}

impl AdamState {
    pub fn new(like: &ModelWeights, params: &StrategyParams) -> Self {
        Self {
            first_moment: WeightDelta::zeros_like(like),
            second_moment: WeightDelta::zeros_like(like),
            step: 0,
            beta1: params.adam_beta1,
            beta2: params.adam_beta2,
            eps: params.adam_eps,
            server_lr: params.adam_lr,
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }
}

/// One adaptive-moment step on the pseudo-gradient `global − round_avg`.
pub fn fedadam_apply(state: &mut AdamState, global: &ModelWeights, round_avg: &ModelWeights) -> Result<ModelWeights> {
    let g = delta(global, round_avg)?;
    state.first_moment.check_conformant(&g)?;
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let m = WeightDelta::linear_combination(global, [(b1, &state.first_moment), (1.0 - b1, &g)])?;
    let g_sq = g.with_flat_values(&g.flatten().iter().map(|x| x * x).collect::<Vec<_>>())?;
    let v = WeightDelta::linear_combination(global, [(b2, &state.second_moment), (1.0 - b2, &g_sq)])?;
    let bias1 = 1.0 - b1.powi(t);
    let bias2 = 1.0 - b2.powi(t);
    let step: Vec<f64> = m
        .flatten()
        .iter()
        .zip(v.flatten())
        .map(|(mi, vi)| -state.server_lr * (mi / bias1) / ((vi / bias2).sqrt() + state.eps))
        .collect();
    state.first_moment = m;
    state.second_moment = v;
    let updated = add_delta(global, &g.with_flat_values(&step)?)?;
    updated.ensure_finite()?;
    Ok(updated)
}

/// Aggregator for synchronous rounds.
#[derive(Debug, Clone)]
pub enum SyncServer {
    /// FedAvg, and FedProx (whose difference lives in client training).
    Average,
    Adam(AdamState),
}

impl SyncServer {
    pub fn aggregate(&mut self, global: &ModelWeights, updates: &[ClientUpdateMsg]) -> Result<ModelWeights> {
        let avg = fedavg_round(global, updates)?;
        match self {
            SyncServer::Average => Ok(avg),
            SyncServer::Adam(state) => fedadam_apply(state, global, &avg),
        }
    }
}

/// Every supported strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    Fedavg,
    Fedprox,
    Fedadam,
    Fedasync,
    Fedbuff,
    Ca2fl,
    Orthofl,
    OrthoflNoMa,
    OrthoflPairwise,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 9] = [
        StrategyKind::Fedavg,
        StrategyKind::Fedprox,
        StrategyKind::Fedadam,
        StrategyKind::Fedasync,
        StrategyKind::Fedbuff,
        StrategyKind::Ca2fl,
        StrategyKind::Orthofl,
        StrategyKind::OrthoflNoMa,
        StrategyKind::OrthoflPairwise,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            StrategyKind::Fedavg => "fedavg",
            StrategyKind::Fedprox => "fedprox",
            StrategyKind::Fedadam => "fedadam",
            StrategyKind::Fedasync => "fedasync",
            StrategyKind::Fedbuff => "fedbuff",
            StrategyKind::Ca2fl => "ca2fl",
            StrategyKind::Orthofl => "orthofl",
            StrategyKind::OrthoflNoMa => "orthofl_no_ma",
            StrategyKind::OrthoflPairwise => "orthofl_pairwise",
        }
    }

    pub fn is_synchronous(&self) -> bool {
        matches!(self, StrategyKind::Fedavg | StrategyKind::Fedprox | StrategyKind::Fedadam)
    }

    /// Proximal coefficient clients use under this strategy.
    pub fn client_prox_mu(&self, params: &StrategyParams) -> f64 {
        if *self == StrategyKind::Fedprox {
            params.prox_mu
        } else {
            0.0
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::param(format!("unknown strategy `{s}`")))
    }
}

/// Hyperparameters shared by all strategies; each reads only its own.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StrategyParams {
    pub beta: f64,
    pub a: f64,
    pub eps: f64,
    pub granularity: ProjectionGranularity,
    pub buffer_size: usize,
    pub buffer_lr: f64,
    pub prox_mu: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub adam_lr: f64,
}

impl Default for StrategyParams {
    fn default() -> Self {
        Self {
            beta: 0.6,
            a: 0.5,
            eps: DEFAULT_PROJECTION_EPS,
            granularity: ProjectionGranularity::Group,
            buffer_size: 5,
            buffer_lr: 1.0,
            prox_mu: 0.01,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            adam_lr: 0.01,
        }
    }
}

impl StrategyParams {
    pub fn validate(&self) -> Result<()> {
        staleness_decay(1, self.beta, self.a)?;
        if !(self.eps > 0.0) {
            return Err(Error::param("eps must be positive"));
        }
        if self.buffer_size == 0 {
            return Err(Error::param("buffer_size must be at least 1"));
        }
        if !(self.buffer_lr > 0.0 && self.buffer_lr.is_finite()) {
            return Err(Error::param("buffer_lr must be positive"));
        }
        if !(self.prox_mu >= 0.0) {
            return Err(Error::param("prox_mu must be non-negative"));
        }
        if !((0.0..1.0).contains(&self.adam_beta1) && (0.0..1.0).contains(&self.adam_beta2)) {
            return Err(Error::param("adam betas must lie in [0, 1)"));
        }
        if !(self.adam_eps > 0.0 && self.adam_lr > 0.0) {
            return Err(Error::param("adam eps and learning rate must be positive"));
        }
        Ok(())
    }
}

/// A constructed server for any strategy.
pub enum Server {
    Async(Box<dyn AsyncServer>),
    Sync(SyncServer),
}

pub fn build_server(kind: StrategyKind, params: &StrategyParams, initial: ModelWeights, num_clients: usize) -> Result<Server> {
    params.validate()?;
    Ok(match kind {
        StrategyKind::Fedavg | StrategyKind::Fedprox => Server::Sync(SyncServer::Average),
        StrategyKind::Fedadam => Server::Sync(SyncServer::Adam(AdamState::new(&initial, params))),
        StrategyKind::Fedasync => Server::Async(Box::new(FedAsyncServer::new(initial, num_clients, params)?)),
        StrategyKind::Fedbuff => Server::Async(Box::new(BufferedServer::fedbuff(initial, num_clients, params)?)),
        StrategyKind::Ca2fl => Server::Async(Box::new(BufferedServer::ca2fl(initial, num_clients, params)?)),
        StrategyKind::Orthofl => Server::Async(Box::new(OrthoFlServer::new(
            initial,
            num_clients,
            params,
            OrthoVariant::MovingAverage,
        )?)),
        StrategyKind::OrthoflNoMa => Server::Async(Box::new(OrthoFlServer::new(
            initial,
            num_clients,
            params,
            OrthoVariant::LoadCalibrated,
        )?)),
        StrategyKind::OrthoflPairwise => Server::Async(Box::new(PairwiseProjectionServer::new(initial, num_clients, params)?)),
    })
}
