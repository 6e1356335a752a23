//! Multi-seed summaries and trace statistics.

use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;

use crate::engine::{relative_time, time_to_target, MetricsRow};
use crate::error::{Error, Result};
use crate::strategies::StrategyKind;
use crate::tensor::Matrix;

/// Fraction of the lowest mean final accuracy used as the shared target.
pub const TARGET_FRACTION: f64 = 0.95;

/// Metrics of one (strategy, seed) run.
#[derive(Debug, Clone)]
pub struct Cell {
    pub strategy: StrategyKind,
    pub seed: u64,
    pub rows: Vec<MetricsRow>,
}

impl Cell {
    pub fn final_accuracy(&self) -> Result<f64> {
        self.rows
            .last()
            .map(|r| r.accuracy)
            .ok_or_else(|| Error::Data(format!("{} seed {} produced no metrics", self.strategy, self.seed)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub strategy: StrategyKind,
    pub final_acc_mean: f64,
    pub final_acc_std: f64,
    /// Mean over seeds; absent if any seed misses the target.
    pub time_to_target: Option<f64>,
    pub relative_time: Option<f64>,
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation; zero for fewer than two values.
pub fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

fn group_cells(cells: &[Cell]) -> BTreeMap<StrategyKind, Vec<&Cell>> {
    let mut by: BTreeMap<StrategyKind, Vec<&Cell>> = BTreeMap::new();
    for c in cells {
        by.entry(c.strategy).or_default().push(c);
    }
    for v in by.values_mut() {
        v.sort_by_key(|c| c.seed);
    }
    by
}

/// `TARGET_FRACTION` times the lowest per-strategy mean final accuracy.
pub fn default_target(cells: &[Cell]) -> Result<f64> {
    let mut lowest = f64::INFINITY;
    for group in group_cells(cells).values() {
        let finals: Vec<f64> = group.iter().map(|c| c.final_accuracy()).collect::<Result<_>>()?;
        lowest = lowest.min(mean(&finals));
    }
    if lowest.is_finite() {
        Ok(TARGET_FRACTION * lowest)
    } else {
        Err(Error::Data("no cells to summarize".into()))
    }
}

/// One row per strategy. With `relative`, a FedAvg cell must be present.
pub fn summarize(cells: &[Cell], target: f64, relative: bool) -> Result<Vec<SummaryRow>> {
    let by = group_cells(cells);
    if relative && !by.contains_key(&StrategyKind::Fedavg) {
        return Err(Error::param("relative time needs a fedavg cell"));
    }
    let mut rows = Vec::with_capacity(by.len());
    for (&strategy, group) in &by {
        let finals: Vec<f64> = group.iter().map(|c| c.final_accuracy()).collect::<Result<_>>()?;
        let times: Option<Vec<f64>> = group.iter().map(|c| time_to_target(&c.rows, target)).collect();
        rows.push(SummaryRow {
            strategy,
            final_acc_mean: mean(&finals),
            final_acc_std: sample_std(&finals),
            time_to_target: times.map(|t| mean(&t)),
            relative_time: None,
        });
    }
    if relative {
        let baseline = rows
            .iter()
            .find(|r| r.strategy == StrategyKind::Fedavg)
            .and_then(|r| r.time_to_target);
        if let Some(base) = baseline {
            for r in &mut rows {
                r.relative_time = r.time_to_target.map(|t| relative_time(t, base)).transpose()?;
            }
        }
    }
    Ok(rows)
}

pub const SUMMARY_HEADER: [&str; 5] = [
    "strategy",
    "final_acc_mean",
    "final_acc_std",
    "time_to_target",
    "relative_time",
];

pub fn write_summary<W: Write>(rows: &[SummaryRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::Protocol(format!("writing summary: {e}"));
    if rows.is_empty() {
        w.write_record(SUMMARY_HEADER).map_err(err)?;
    }
    for r in rows {
        w.serialize(r).map_err(err)?;
    }
    w.flush().map_err(|e| Error::Protocol(format!("writing summary: {e}")))
}

/// Peak-to-trough accuracy range over rows with `sim_time >= from`.
pub fn oscillation_amplitude(rows: &[MetricsRow], from: f64) -> Option<f64> {
    let window = rows.iter().filter(|r| r.sim_time >= from).map(|r| r.accuracy);
    let (lo, hi) = window.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), a| (lo.min(a), hi.max(a)));
    (hi >= lo).then_some(hi - lo)
}

/// Average, over updates where the acting client changes, of the fraction of
/// rows whose shift sign differs from the previous column. Zero entries count
/// as their own sign.
pub fn switch_sign_flip_fraction(trace: &Matrix, clients: &[usize]) -> Result<Option<f64>> {
    if clients.len() != trace.cols() {
        return Err(Error::param(format!(
            "{} client ids for a trace with {} updates",
            clients.len(),
            trace.cols()
        )));
    }
    let sign = |v: f64| (v > 0.0) as i8 - (v < 0.0) as i8;
    let mut fractions = Vec::new();
    for j in 1..trace.cols() {
        if clients[j] == clients[j - 1] {
            continue;
        }
        let flips = (0..trace.rows())
            .filter(|&i| sign(trace.get(i, j)) != sign(trace.get(i, j - 1)))
            .count();
        fractions.push(flips as f64 / trace.rows() as f64);
    }
    Ok((!fractions.is_empty()).then(|| mean(&fractions)))
}

/// Writes a matrix as CSV with a `neuron,u1,u2,...` header.
pub fn write_heatmap<W: Write>(trace: &Matrix, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::Protocol(format!("writing heatmap: {e}"));
    let mut header = vec!["neuron".to_string()];
    header.extend((1..=trace.cols()).map(|j| format!("u{j}")));
    w.write_record(&header).map_err(err)?;
    for i in 0..trace.rows() {
        let mut rec = vec![i.to_string()];
        rec.extend(trace.row(i).iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(err)?;
    }
    w.flush().map_err(|e| Error::Protocol(format!("writing heatmap: {e}")))
}
