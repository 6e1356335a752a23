//! Desk-scale scenarios used by the acceptance suite and the CLI.

use std::path::PathBuf;

use crate::data::DirichletOptions;
use crate::delays::DEFAULT_DELAY_FLOOR;
use crate::engine::{DataConfig, DataSource, DelayConfig, DelayDistribution, LatencySource, PartitionConfig, SimConfig};
use crate::models::{ModelSpec, TrainConfig};
use crate::strategies::{StrategyKind, StrategyParams};
use crate::tensor::ProjectionGranularity;

pub const BLOB_CLASSES: usize = 10;
pub const BLOB_DIM: usize = 20;
pub const BLOB_SPREAD: f64 = 0.25;

pub const FAST_LATENCY: f64 = 10.0;
pub const SLOW_LATENCIES: [f64; 3] = [30.0, 60.0, 100.0];

fn blob_train() -> TrainConfig {
    TrainConfig {
        epochs: 5,
        batch_size: 32,
        learning_rate: 0.1,
        ..TrainConfig::default()
    }
}

fn fused_params() -> StrategyParams {
    StrategyParams {
        granularity: ProjectionGranularity::FusedLayer,
        ..StrategyParams::default()
    }
}

/// Two clients with disjoint halves of a 10-class blob task; client 0
/// answers every 10 s, client 1 every `slow_latency` s.
pub fn motivating(strategy: StrategyKind, slow_latency: f64, seed: u64) -> SimConfig {
    SimConfig {
        strategy,
        params: fused_params(),
        num_clients: 2,
        model: ModelSpec::linear(BLOB_DIM, BLOB_CLASSES),
        data: DataConfig {
            source: DataSource::Blobs {
                num_classes: BLOB_CLASSES,
                input_dim: BLOB_DIM,
                per_class: 100,
                spread: BLOB_SPREAD,
            },
            partition: PartitionConfig::DisjointHalves,
            test_fraction: 0.2,
            data_seed: None,
        },
        delays: DelayConfig {
            source: LatencySource::Fixed {
                values: vec![FAST_LATENCY, slow_latency],
            },
            distribution: DelayDistribution::Gaussian,
            floor: DEFAULT_DELAY_FLOOR,
            freeze_latency: false,
        },
        train: blob_train(),
        duration: 6000.0,
        eval_every: 1,
        clients_per_round: None,
        seed,
    }
}

/// Ten clients over a Dir(`alpha`) split of a 10-class blob task with
/// Gaussian delays drawn from the per-client stats in `trace`.
pub fn heterogeneous(strategy: StrategyKind, alpha: f64, seed: u64, trace: PathBuf) -> SimConfig {
    SimConfig {
        strategy,
        params: fused_params(),
        num_clients: 10,
        model: ModelSpec::linear(BLOB_DIM, BLOB_CLASSES),
        data: DataConfig {
            source: DataSource::Blobs {
                num_classes: BLOB_CLASSES,
                input_dim: BLOB_DIM,
                per_class: 300,
                spread: BLOB_SPREAD,
            },
            partition: PartitionConfig::Dirichlet {
                alpha,
                options: DirichletOptions::default(),
            },
            test_fraction: 0.2,
            data_seed: None,
        },
        delays: DelayConfig {
            source: LatencySource::Trace { path: trace },
            distribution: DelayDistribution::Gaussian,
            floor: DEFAULT_DELAY_FLOOR,
            freeze_latency: false,
        },
        train: blob_train(),
        duration: 3000.0,
        eval_every: 1,
        clients_per_round: None,
        seed,
    }
}
