//! Labeled datasets, synthetic generation and client partitioning.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream, SimRng, Stream};
use crate::tensor::Matrix;

/// Inputs with integer class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet {
    inputs: Matrix,
    labels: Vec<usize>,
    num_classes: usize,
}

impl LabeledSet {
    pub fn new(inputs: Matrix, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if inputs.rows() != labels.len() {
            return Err(Error::Data(format!(
                "{} input rows but {} labels",
                inputs.rows(),
                labels.len()
            )));
        }
        if num_classes < 2 {
            return Err(Error::Data(format!("need at least 2 classes, got {num_classes}")));
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::Data(format!("label {bad} out of range for {num_classes} classes")));
        }
        Ok(Self {
            inputs,
            labels,
            num_classes,
        })
    }

    pub fn inputs(&self) -> &Matrix {
        &self.inputs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.cols()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn subset(&self, indices: &[usize]) -> LabeledSet {
        LabeledSet {
            inputs: self.inputs.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
        }
    }

    /// Example indices grouped by class, each in ascending order.
    pub fn indices_by_class(&self) -> Vec<Vec<usize>> {
        let mut by_class = vec![Vec::new(); self.num_classes];
        for (i, &l) in self.labels.iter().enumerate() {
            by_class[l].push(i);
        }
        by_class
    }

    pub fn class_counts(&self) -> Vec<usize> {
        class_histogram(&self.labels, self.num_classes)
    }
}

pub fn class_histogram(labels: &[usize], num_classes: usize) -> Vec<usize> {
    let mut counts = vec![0; num_classes];
    for &l in labels {
        counts[l] += 1;
    }
    counts
}

/// Shannon entropy (nats) of a class histogram.
pub fn histogram_entropy(counts: &[usize]) -> f64 {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total as f64;
            -p * p.ln()
        })
        .sum()
}

/// Isotropic Gaussian blobs around seeded unit-norm class centers, emitted
/// class by class.
pub fn gen_blobs(num_classes: usize, input_dim: usize, per_class: usize, spread: f64, seed: u64) -> Result<LabeledSet> {
    if num_classes < 2 {
        return Err(Error::param(format!("need at least 2 classes, got {num_classes}")));
    }
    if per_class == 0 || input_dim == 0 {
        return Err(Error::param("per_class and input_dim must be positive"));
    }
    if input_dim == 1 && num_classes > 2 {
        return Err(Error::param("a 1-d input space holds at most 2 unit-norm centers"));
    }
    if !(spread > 0.0 && spread.is_finite()) {
        return Err(Error::param(format!("spread must be positive, got {spread}")));
    }
    let mut rng = stream(seed, Stream::DataGen, 0);
    let centers = unit_centers(num_classes, input_dim, &mut rng);

    let n = num_classes * per_class;
    let mut data = Vec::with_capacity(n * input_dim);
    let mut labels = Vec::with_capacity(n);
    for (c, center) in centers.iter().enumerate() {
        for _ in 0..per_class {
            data.extend(center.iter().map(|&m| {
                let z: f64 = StandardNormal.sample(&mut rng);
                m + spread * z
            }));
            labels.push(c);
        }
    }
    LabeledSet::new(Matrix::new(n, input_dim, data)?, labels, num_classes)
}

fn unit_centers(k: usize, dim: usize, rng: &mut SimRng) -> Vec<Vec<f64>> {
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
    while centers.len() < k {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut *rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-12 {
            continue;
        }
        let v: Vec<f64> = v.into_iter().map(|x| x / norm).collect();
        let distinct = centers.iter().all(|c| {
            let cos: f64 = c.iter().zip(&v).map(|(a, b)| a * b).sum();
            cos < 1.0 - 1e-9
        });
        if distinct {
            centers.push(v);
        }
    }
    centers
}

/// Assignment of example indices to clients.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionPlan {
    pub client_indices: Vec<Vec<usize>>,
    /// Concentration used to draw the plan, if it came from a Dirichlet.
    pub alpha: Option<f64>,
}

impl PartitionPlan {
    pub fn num_clients(&self) -> usize {
        self.client_indices.len()
    }

    /// Checks the plan is a partition of `0..pool_size` with no empty client.
    pub fn validate(&self, pool_size: usize) -> Result<()> {
        let mut seen = vec![false; pool_size];
        for (client, idx) in self.client_indices.iter().enumerate() {
            if idx.is_empty() {
                return Err(Error::Partition(format!("client {client} is empty")));
            }
            for &i in idx {
                if i >= pool_size {
                    return Err(Error::Partition(format!("index {i} outside pool of {pool_size}")));
                }
                if std::mem::replace(&mut seen[i], true) {
                    return Err(Error::Partition(format!("index {i} assigned twice")));
                }
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::Partition(format!("index {i} not assigned")));
        }
        Ok(())
    }

    pub fn client_sets(&self, data: &LabeledSet) -> Vec<LabeledSet> {
        self.client_indices.iter().map(|idx| data.subset(idx)).collect()
    }
}

/// Which way the Dirichlet draws run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirichletDirection {
    /// One draw per class over clients; each class is split proportionally.
    #[default]
    PerClass,
    /// One draw per client over classes; each client fills an equal quota.
    PerClient,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DirichletOptions {
    pub min_per_client: usize,
    pub max_retries: usize,
    pub direction: DirichletDirection,
}

impl Default for DirichletOptions {
    fn default() -> Self {
        Self {
            min_per_client: 16,
            max_retries: 100,
            direction: DirichletDirection::PerClass,
        }
    }
}

pub fn dirichlet_partition(
    data: &LabeledSet,
    num_clients: usize,
    alpha: f64,
    min_per_client: usize,
    seed: u64,
) -> Result<PartitionPlan> {
    let opts = DirichletOptions {
        min_per_client,
        ..DirichletOptions::default()
    };
    dirichlet_partition_with(data, num_clients, alpha, &opts, seed)
}

/// Non-IID split of `data` across clients driven by `Dir(alpha)`.
///
/// In the per-class direction, clients already holding at least `N / clients`
/// examples are excluded from later class draws, which keeps very small
/// `alpha` feasible. The whole allocation is redrawn until every client holds
/// `min_per_client` examples or the retry budget runs out.
pub fn dirichlet_partition_with(
    data: &LabeledSet,
    num_clients: usize,
    alpha: f64,
    opts: &DirichletOptions,
    seed: u64,
) -> Result<PartitionPlan> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::param(format!("alpha must be positive, got {alpha}")));
    }
    if num_clients == 0 {
        return Err(Error::param("num_clients must be at least 1"));
    }
    if data.len() < num_clients * opts.min_per_client.max(1) {
        return Err(Error::Partition(format!(
            "{} examples cannot give {num_clients} clients {} each",
            data.len(),
            opts.min_per_client.max(1)
        )));
    }
    let mut rng = stream(seed, Stream::Partition, 0);
    let by_class = data.indices_by_class();
    for _ in 0..=opts.max_retries {
        let mut clients = match opts.direction {
            DirichletDirection::PerClass => allocate_per_class(&by_class, data.len(), num_clients, alpha, &mut rng)?,
            DirichletDirection::PerClient => allocate_per_client(&by_class, data.len(), num_clients, alpha, &mut rng)?,
        };
        if clients.iter().all(|c| c.len() >= opts.min_per_client.max(1)) {
            for c in &mut clients {
                c.sort_unstable();
            }
            return Ok(PartitionPlan {
                client_indices: clients,
                alpha: Some(alpha),
            });
        }
    }
    Err(Error::Partition(format!(
        "no allocation gave every client {} examples after {} retries (alpha {alpha})",
        opts.min_per_client, opts.max_retries
    )))
}

/// Log of a `Gamma(alpha, 1)` draw, computed as
/// `ln Gamma(alpha + 1) + ln(U) / alpha` so tiny `alpha` does not underflow.
fn log_gamma_draw(alpha: f64, rng: &mut SimRng) -> Result<f64> {
    let gamma = Gamma::new(alpha + 1.0, 1.0).map_err(|e| Error::param(format!("gamma({alpha}): {e}")))?;
    let g: f64 = gamma.sample(rng);
    let u: f64 = rng.random::<f64>();
    // random::<f64>() lies in [0, 1); shift away from zero
    let u = 1.0 - u;
    Ok(g.ln() + u.ln() / alpha)
}

/// Dirichlet(alpha) draw restricted to the `active` coordinates; inactive
/// coordinates get probability 0.
fn masked_dirichlet(k: usize, alpha: f64, active: &[bool], rng: &mut SimRng) -> Result<Vec<f64>> {
    let mut logs = vec![f64::NEG_INFINITY; k];
    for (j, l) in logs.iter_mut().enumerate() {
        let draw = log_gamma_draw(alpha, rng)?;
        if active[j] {
            *l = draw;
        }
    }
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::Partition("no client can accept more examples".into()));
    }
    let w: Vec<f64> = logs.iter().map(|&l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    Ok(w.into_iter().map(|x| x / total).collect())
}

fn allocate_per_class(
    by_class: &[Vec<usize>],
    total: usize,
    num_clients: usize,
    alpha: f64,
    rng: &mut SimRng,
) -> Result<Vec<Vec<usize>>> {
    let cap = total as f64 / num_clients as f64;
    let mut clients: Vec<Vec<usize>> = vec![Vec::new(); num_clients];
    for idx in by_class {
        let mut idx = idx.clone();
        idx.shuffle(rng);
        let active: Vec<bool> = clients.iter().map(|c| (c.len() as f64) < cap).collect();
        let p = masked_dirichlet(num_clients, alpha, &active, rng)?;
        let n = idx.len();
        let mut start = 0;
        let mut cum = 0.0;
        for (j, pj) in p.iter().enumerate() {
            cum += pj;
            let end = if j + 1 == num_clients {
                n
            } else {
                ((cum * n as f64) as usize).clamp(start, n)
            };
            clients[j].extend_from_slice(&idx[start..end]);
            start = end;
        }
    }
    Ok(clients)
}

fn allocate_per_client(
    by_class: &[Vec<usize>],
    total: usize,
    num_clients: usize,
    alpha: f64,
    rng: &mut SimRng,
) -> Result<Vec<Vec<usize>>> {
    let mut pools: Vec<Vec<usize>> = by_class.to_vec();
    for pool in &mut pools {
        pool.shuffle(rng);
    }
    let k = pools.len();
    let mut clients = Vec::with_capacity(num_clients);
    for j in 0..num_clients {
        let quota = total / num_clients + usize::from(j < total % num_clients);
        let all = vec![true; k];
        let p = masked_dirichlet(k, alpha, &all, rng)?;
        let mut mine = Vec::with_capacity(quota);
        for _ in 0..quota {
            let weights: Vec<f64> = p
                .iter()
                .zip(&pools)
                .map(|(&pc, pool)| if pool.is_empty() { 0.0 } else { pc })
                .collect();
            let sum: f64 = weights.iter().sum();
            let class = if sum > 0.0 {
                let mut r = rng.random::<f64>() * sum;
                let mut pick = None;
                for (c, w) in weights.iter().enumerate() {
                    if *w > 0.0 {
                        pick = Some(c);
                        if r < *w {
                            break;
                        }
                        r -= w;
                    }
                }
                pick
            } else {
                // the client's preferred classes are exhausted; take the first non-empty pool
                pools.iter().position(|p| !p.is_empty())
            };
            match class.and_then(|c| pools[c].pop()) {
                Some(i) => mine.push(i),
                None => break,
            }
        }
        clients.push(mine);
    }
    Ok(clients)
}

/// Client 0 receives the lower half of the classes, client 1 the rest.
pub fn two_client_disjoint_split(data: &LabeledSet) -> Result<PartitionPlan> {
    let k = data.num_classes();
    if k % 2 != 0 {
        return Err(Error::param(format!("disjoint split needs an even class count, got {k}")));
    }
    let half = k / 2;
    let mut clients = vec![Vec::new(), Vec::new()];
    for (i, &l) in data.labels().iter().enumerate() {
        clients[usize::from(l >= half)].push(i);
    }
    if clients.iter().any(Vec::is_empty) {
        return Err(Error::Partition("a client received no examples".into()));
    }
    Ok(PartitionPlan {
        client_indices: clients,
        alpha: None,
    })
}

/// Stratified split returning `(train_indices, test_indices)`, each ascending.
pub fn train_test_split_indices(data: &LabeledSet, test_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::param(format!("test fraction must be in (0, 1), got {test_fraction}")));
    }
    let mut rng = stream(seed, Stream::Split, 0);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (c, idx) in data.indices_by_class().into_iter().enumerate() {
        if idx.is_empty() {
            continue;
        }
        if idx.len() < 2 {
            return Err(Error::Data(format!("class {c} has fewer than 2 examples")));
        }
        let mut idx = idx;
        idx.shuffle(&mut rng);
        let n_test = ((idx.len() as f64 * test_fraction).round() as usize).clamp(1, idx.len() - 1);
        test.extend_from_slice(&idx[..n_test]);
        train.extend_from_slice(&idx[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

pub fn train_test_split(data: &LabeledSet, test_fraction: f64, seed: u64) -> Result<(LabeledSet, LabeledSet)> {
    let (train, test) = train_test_split_indices(data, test_fraction, seed)?;
    Ok((data.subset(&train), data.subset(&test)))
}

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Reads an MNIST-style pair of IDX files; pixels are scaled to `[0, 1]`.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<LabeledSet> {
    let images = std::fs::read(images_path).map_err(|e| Error::io(images_path, e))?;
    let labels = std::fs::read(labels_path).map_err(|e| Error::io(labels_path, e))?;

    let read_u32 = |bytes: &[u8], offset: usize, path: &Path| -> Result<u32> {
        bytes
            .get(offset..offset + 4)
            .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
            .ok_or_else(|| Error::format(path, format!("byte {offset}"), "truncated header"))
    };

    let magic = read_u32(&images, 0, images_path)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::format(
            images_path,
            "byte 0",
            format!("bad magic {magic:#010x}, expected {IDX_IMAGES_MAGIC:#010x}"),
        ));
    }
    let n = read_u32(&images, 4, images_path)? as usize;
    let rows = read_u32(&images, 8, images_path)? as usize;
    let cols = read_u32(&images, 12, images_path)? as usize;
    let dim = rows * cols;
    let body = &images[16..];
    if body.len() < n * dim {
        return Err(Error::format(
            images_path,
            format!("byte {}", images.len()),
            format!("truncated pixel data: need {} bytes, found {}", n * dim, body.len()),
        ));
    }

    let magic = read_u32(&labels, 0, labels_path)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::format(
            labels_path,
            "byte 0",
            format!("bad magic {magic:#010x}, expected {IDX_LABELS_MAGIC:#010x}"),
        ));
    }
    let n_labels = read_u32(&labels, 4, labels_path)? as usize;
    if n_labels != n {
        return Err(Error::format(
            labels_path,
            "byte 4",
            format!("{n_labels} labels for {n} images"),
        ));
    }
    let label_body = &labels[8..];
    if label_body.len() < n {
        return Err(Error::format(
            labels_path,
            format!("byte {}", labels.len()),
            format!("truncated labels: need {n} bytes, found {}", label_body.len()),
        ));
    }

    let pixels = body[..n * dim].iter().map(|&b| f64::from(b) / 255.0).collect();
    let labels: Vec<usize> = label_body[..n].iter().map(|&b| usize::from(b)).collect();
    let num_classes = labels.iter().max().map_or(2, |&m| (m + 1).max(2));
    LabeledSet::new(Matrix::new(n, dim, pixels)?, labels, num_classes)
}
