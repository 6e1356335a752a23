//! Small classifiers with hand-written gradients.
//!
//! Two families are supported: a linear softmax classifier and a one-hidden-layer
//! tanh MLP. Parameters live in [`ModelWeights`] with a fixed group layout;
//! internally the training loop runs on a flat copy of the parameters.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::LabeledSet;
use crate::error::{Error, Result};
use crate::rng::{stream, Stream};
use crate::tensor::{GroupLayout, Matrix, ModelWeights, ParamGroup, WeightDelta};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    LinearSoftmax,
    MlpOneHidden,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub input_dim: usize,
    /// Ignored for the linear model.
    #[serde(default)]
    pub hidden_dim: usize,
    pub num_classes: usize,
}

impl ModelSpec {
    pub fn linear(input_dim: usize, num_classes: usize) -> Self {
        Self {
            kind: ModelKind::LinearSoftmax,
            input_dim,
            hidden_dim: 0,
            num_classes,
        }
    }

    pub fn mlp(input_dim: usize, hidden_dim: usize, num_classes: usize) -> Self {
        Self {
            kind: ModelKind::MlpOneHidden,
            input_dim,
            hidden_dim,
            num_classes,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::param("input_dim must be positive"));
        }
        if self.num_classes < 2 {
            return Err(Error::param("num_classes must be at least 2"));
        }
        if self.kind == ModelKind::MlpOneHidden && self.hidden_dim == 0 {
            return Err(Error::param("hidden_dim must be positive for the MLP"));
        }
        Ok(())
    }

    /// `(name, shape)` of every parameter group, in storage order.
    pub fn layout(&self) -> Vec<(&'static str, Vec<usize>)> {
        let (d, h, c) = (self.input_dim, self.hidden_dim, self.num_classes);
        match self.kind {
            ModelKind::LinearSoftmax => vec![("fc.weight", vec![c, d]), ("fc.bias", vec![c])],
            ModelKind::MlpOneHidden => vec![
                ("hidden.weight", vec![h, d]),
                ("hidden.bias", vec![h]),
                ("out.weight", vec![c, h]),
                ("out.bias", vec![c]),
            ],
        }
    }

    /// Name of the group closest to the classifier output that represents
    /// learned features: the hidden layer for the MLP, the classifier itself
    /// for the linear model.
    pub fn feature_group(&self) -> &'static str {
        match self.kind {
            ModelKind::LinearSoftmax => "fc.weight",
            ModelKind::MlpOneHidden => "hidden.weight",
        }
    }

    pub fn num_params(&self) -> usize {
        self.layout().iter().map(|(_, s)| s.iter().product::<usize>()).sum()
    }

    fn check_weights(&self, w: &impl GroupLayout) -> Result<()> {
        let groups = w.param_groups();
        let layout = self.layout();
        for (i, (name, shape)) in layout.iter().enumerate() {
            match groups.get(i) {
                Some(g) if g.name() == *name && g.shape() == shape.as_slice() => {}
                Some(g) => {
                    return Err(Error::conformance(
                        g.name(),
                        format!("expected `{name}` with shape {shape:?}, found shape {:?}", g.shape()),
                    ))
                }
                None => return Err(Error::conformance(*name, "missing from weights")),
            }
        }
        if groups.len() > layout.len() {
            return Err(Error::conformance(groups[layout.len()].name(), "not part of the model layout"));
        }
        Ok(())
    }

    fn check_inputs(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.input_dim {
            return Err(Error::conformance(
                "inputs",
                format!("{} columns, model expects {}", x.cols(), self.input_dim),
            ));
        }
        Ok(())
    }
}

/// Local training hyperparameters for one client round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Proximal coefficient; zero disables the term.
    pub prox_mu: f64,
    pub shuffle_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 5,
            batch_size: 32,
            learning_rate: 0.01,
            prox_mu: 0.0,
            shuffle_seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::param("epochs must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::param("batch_size must be at least 1"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::param(format!("learning rate {} is invalid", self.learning_rate)));
        }
        if !(self.prox_mu >= 0.0 && self.prox_mu.is_finite()) {
            return Err(Error::param(format!("prox_mu {} is invalid", self.prox_mu)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub inputs: Matrix,
    pub labels: Vec<usize>,
}

impl Batch {
    pub fn new(inputs: Matrix, labels: Vec<usize>) -> Result<Self> {
        if labels.is_empty() || inputs.rows() != labels.len() {
            return Err(Error::Data(format!(
                "batch with {} rows and {} labels",
                inputs.rows(),
                labels.len()
            )));
        }
        Ok(Self { inputs, labels })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub mean_loss: f64,
}

/// Glorot-uniform weights, zero biases.
pub fn init_weights(spec: &ModelSpec, seed: u64) -> Result<ModelWeights> {
    spec.validate()?;
    let mut rng = stream(seed, Stream::ModelInit, 0);
    let groups = spec
        .layout()
        .into_iter()
        .map(|(name, shape)| {
            let n: usize = shape.iter().product();
            let values = if shape.len() == 2 {
                let s = (6.0 / (shape[0] + shape[1]) as f64).sqrt();
                (0..n).map(|_| rng.random_range(-s..=s)).collect()
            } else {
                vec![0.0; n]
            };
            ParamGroup::new(name, shape, values)
        })
        .collect::<Result<Vec<_>>>()?;
    ModelWeights::new(groups)
}

/// Class probabilities, one softmax row per input row.
pub fn forward(spec: &ModelSpec, w: &ModelWeights, inputs: &Matrix) -> Result<Matrix> {
    spec.check_weights(w)?;
    spec.check_inputs(inputs)?;
    let params = w.flatten();
    let net = Net::new(spec, &params);
    let mut out = Matrix::zeros(inputs.rows(), spec.num_classes);
    let mut scratch = Scratch::new(spec);
    for i in 0..inputs.rows() {
        net.logits(inputs.row(i), &mut scratch);
        softmax_in_place(&mut scratch.logits);
        out.row_mut(i).copy_from_slice(&scratch.logits);
    }
    Ok(out)
}

/// Mean cross-entropy over the batch plus `(prox_mu / 2)·‖w − prox_center‖²`,
/// with its exact gradient.
pub fn loss_and_grad(
    spec: &ModelSpec,
    w: &ModelWeights,
    batch: &Batch,
    prox_center: Option<&ModelWeights>,
    prox_mu: f64,
) -> Result<(f64, WeightDelta)> {
    spec.check_weights(w)?;
    spec.check_inputs(&batch.inputs)?;
    check_labels(spec, &batch.labels)?;
    let center = prox_flat(spec, prox_center, prox_mu)?;
    let params = w.flatten();
    let mut grad = vec![0.0; params.len()];
    let rows: Vec<usize> = (0..batch.labels.len()).collect();
    let mut scratch = Scratch::new(spec);
    let mut loss = Net::new(spec, &params).loss_grad(&batch.inputs, &batch.labels, &rows, Some(&mut grad), &mut scratch);
    if let Some(c) = &center {
        loss += add_prox(&params, c, prox_mu, &mut grad);
    }
    let grad = WeightDelta::zeros_like(w).with_flat_values(&grad)?;
    Ok((loss, grad))
}

/// Minibatch SGD for `cfg.epochs` epochs, reshuffling every epoch from
/// `cfg.shuffle_seed`.
pub fn local_train(
    spec: &ModelSpec,
    w0: &ModelWeights,
    data: &LabeledSet,
    cfg: &TrainConfig,
    prox_center: Option<&ModelWeights>,
) -> Result<ModelWeights> {
    cfg.validate()?;
    spec.check_weights(w0)?;
    if data.is_empty() {
        return Err(Error::Data("cannot train on an empty partition".into()));
    }
    spec.check_inputs(data.inputs())?;
    check_labels(spec, data.labels())?;
    let center = prox_flat(spec, prox_center, cfg.prox_mu)?;

    let mut params = w0.flatten();
    let mut grad = vec![0.0; params.len()];
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.shuffle_seed);
    let mut scratch = Scratch::new(spec);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            Net::new(spec, &params).loss_grad(data.inputs(), data.labels(), chunk, Some(&mut grad), &mut scratch);
            if let Some(c) = &center {
                add_prox(&params, c, cfg.prox_mu, &mut grad);
            }
            for (p, g) in params.iter_mut().zip(&grad) {
                *p -= cfg.learning_rate * g;
            }
        }
    }
    let trained = w0.with_flat_values(&params)?;
    trained.ensure_finite()?;
    Ok(trained)
}

/// Top-1 accuracy (ties resolve to the lowest class index) and mean
/// cross-entropy.
pub fn evaluate(spec: &ModelSpec, w: &ModelWeights, test: &LabeledSet) -> Result<Evaluation> {
    spec.check_weights(w)?;
    if test.is_empty() {
        return Err(Error::Data("cannot evaluate on an empty test set".into()));
    }
    spec.check_inputs(test.inputs())?;
    check_labels(spec, test.labels())?;
    let params = w.flatten();
    let net = Net::new(spec, &params);
    let mut scratch = Scratch::new(spec);
    let (mut correct, mut loss) = (0usize, 0.0);
    for (i, &y) in test.labels().iter().enumerate() {
        net.logits(test.inputs().row(i), &mut scratch);
        let logits = &scratch.logits;
        let mut best = 0;
        for c in 1..logits.len() {
            if logits[c] > logits[best] {
                best = c;
            }
        }
        correct += usize::from(best == y);
        loss += log_sum_exp(logits) - logits[y];
    }
    let n = test.len() as f64;
    Ok(Evaluation {
        accuracy: correct as f64 / n,
        mean_loss: loss / n,
    })
}

fn check_labels(spec: &ModelSpec, labels: &[usize]) -> Result<()> {
    match labels.iter().find(|&&l| l >= spec.num_classes) {
        Some(l) => Err(Error::Data(format!("label {l} out of range for {} classes", spec.num_classes))),
        None => Ok(()),
    }
}

fn prox_flat(spec: &ModelSpec, center: Option<&ModelWeights>, mu: f64) -> Result<Option<Vec<f64>>> {
    if mu < 0.0 {
        return Err(Error::param(format!("prox_mu {mu} is negative")));
    }
    if mu == 0.0 {
        return Ok(None);
    }
    let c = center.ok_or_else(|| Error::param("prox_mu > 0 requires a proximal center"))?;
    spec.check_weights(c)?;
    Ok(Some(c.flatten()))
}

fn add_prox(params: &[f64], center: &[f64], mu: f64, grad: &mut [f64]) -> f64 {
    let mut sq = 0.0;
    for ((g, p), c) in grad.iter_mut().zip(params).zip(center) {
        let diff = p - c;
        sq += diff * diff;
        *g += mu * diff;
    }
    0.5 * mu * sq
}

fn log_sum_exp(x: &[f64]) -> f64 {
    let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + x.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

fn softmax_in_place(x: &mut [f64]) {
    let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in x.iter_mut() {
        *v = (*v - m).exp();
        sum += *v;
    }
    for v in x.iter_mut() {
        *v /= sum;
    }
}

struct Scratch {
    hidden: Vec<f64>,
    logits: Vec<f64>,
    dhidden: Vec<f64>,
}

impl Scratch {
    fn new(spec: &ModelSpec) -> Self {
        Self {
            hidden: vec![0.0; spec.hidden_dim],
            logits: vec![0.0; spec.num_classes],
            dhidden: vec![0.0; spec.hidden_dim],
        }
    }
}

/// Borrowed view of flat parameters split into their layers.
struct Net<'a> {
    spec: &'a ModelSpec,
    params: &'a [f64],
}

impl<'a> Net<'a> {
    fn new(spec: &'a ModelSpec, params: &'a [f64]) -> Self {
        Self { spec, params }
    }

    /// Offsets of (hidden W, hidden b, out W, out b); the hidden pair is empty
    /// for the linear model.
    fn offsets(&self) -> [usize; 4] {
        let (d, h, c) = (self.spec.input_dim, self.spec.hidden_dim, self.spec.num_classes);
        match self.spec.kind {
            ModelKind::LinearSoftmax => [0, 0, 0, c * d],
            ModelKind::MlpOneHidden => [0, h * d, h * d + h, h * d + h + c * h],
        }
    }

    /// Fills `scratch.logits` (and `scratch.hidden` for the MLP).
    fn logits(&self, x: &[f64], scratch: &mut Scratch) {
        let (d, h) = (self.spec.input_dim, self.spec.hidden_dim);
        let [w1, b1, w2, b2] = self.offsets();
        let p = self.params;
        let (features, fdim): (&[f64], usize) = match self.spec.kind {
            ModelKind::LinearSoftmax => (x, d),
            ModelKind::MlpOneHidden => {
                for j in 0..h {
                    let row = &p[w1 + j * d..w1 + (j + 1) * d];
                    let z = p[b1 + j] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
                    scratch.hidden[j] = z.tanh();
                }
                (&scratch.hidden, h)
            }
        };
        for (c, out) in scratch.logits.iter_mut().enumerate() {
            let row = &p[w2 + c * fdim..w2 + (c + 1) * fdim];
            *out = p[b2 + c] + row.iter().zip(features).map(|(a, b)| a * b).sum::<f64>();
        }
    }

    /// Mean cross-entropy over `rows`; accumulates the gradient into `grad`.
    fn loss_grad(
        &self,
        inputs: &Matrix,
        labels: &[usize],
        rows: &[usize],
        mut grad: Option<&mut [f64]>,
        scratch: &mut Scratch,
    ) -> f64 {
        let (d, h, k) = (self.spec.input_dim, self.spec.hidden_dim, self.spec.num_classes);
        let [w1, b1, w2, b2] = self.offsets();
        let inv_n = 1.0 / rows.len() as f64;
        let mut loss = 0.0;
        for &r in rows {
            let x = inputs.row(r);
            let y = labels[r];
            self.logits(x, scratch);
            loss += log_sum_exp(&scratch.logits) - scratch.logits[y];
            let Some(g) = grad.as_deref_mut() else { continue };

            softmax_in_place(&mut scratch.logits);
            // dL/dlogit = (p − onehot) / n
            scratch.logits[y] -= 1.0;
            for v in scratch.logits.iter_mut() {
                *v *= inv_n;
            }
            let (features, fdim): (&[f64], usize) = match self.spec.kind {
                ModelKind::LinearSoftmax => (x, d),
                ModelKind::MlpOneHidden => (&scratch.hidden, h),
            };
            for c in 0..k {
                let dl = scratch.logits[c];
                g[b2 + c] += dl;
                let grow = &mut g[w2 + c * fdim..w2 + (c + 1) * fdim];
                for (gv, f) in grow.iter_mut().zip(features) {
                    *gv += dl * f;
                }
            }
            if self.spec.kind == ModelKind::MlpOneHidden {
                for j in 0..h {
                    let back: f64 = (0..k).map(|c| scratch.logits[c] * self.params[w2 + c * h + j]).sum();
                    let a = scratch.hidden[j];
                    scratch.dhidden[j] = back * (1.0 - a * a);
                }
                for j in 0..h {
                    let dz = scratch.dhidden[j];
                    g[b1 + j] += dz;
                    let grow = &mut g[w1 + j * d..w1 + (j + 1) * d];
                    for (gv, xv) in grow.iter_mut().zip(x) {
                        *gv += dz * xv;
                    }
                }
            }
        }
        loss * inv_n
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{add_delta, delta};

    fn random_batch(spec: &ModelSpec, n: usize, seed: u64) -> Batch {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..n * spec.input_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let labels = (0..n).map(|_| rng.random_range(0..spec.num_classes)).collect();
        Batch::new(Matrix::new(n, spec.input_dim, data).unwrap(), labels).unwrap()
    }

    fn zero_weights(spec: &ModelSpec) -> ModelWeights {
        init_weights(spec, 0)
            .unwrap()
            .with_flat_values(&vec![0.0; spec.num_params()]).unwrap()
    }

    #[test]
    fn init_is_deterministic_with_zero_bias() {
        let spec = ModelSpec::linear(4, 3);
        let a = init_weights(&spec, 5).unwrap();
        assert_eq!(a, init_weights(&spec, 5).unwrap());
        assert_ne!(a, init_weights(&spec, 6).unwrap());
        let shapes: Vec<&[usize]> = a.groups().iter().map(|g| g.shape()).collect();
        assert_eq!(shapes, vec![&[3, 4][..], &[3][..]]);
        assert!(a.group("fc.bias").unwrap().values().iter().all(|&v| v == 0.0));
        let bound = (6.0f64 / 7.0).sqrt();
        assert!(a.group("fc.weight").unwrap().values().iter().all(|v| v.abs() <= bound));

        let mlp = init_weights(&ModelSpec::mlp(4, 6, 3), 1).unwrap();
        assert_eq!(mlp.groups().len(), 4);
        assert!(mlp.group("hidden.bias").unwrap().values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn forward_rows_are_distributions() {
        let spec = ModelSpec::mlp(3, 5, 4);
        let w = init_weights(&spec, 2).unwrap();
        let batch = random_batch(&spec, 16, 3);
        let probs = forward(&spec, &w, &batch.inputs).unwrap();
        for i in 0..probs.rows() {
            let row = probs.row(i);
            assert!(row.iter().all(|&p| p >= 0.0));
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let zeros = forward(&spec, &zero_weights(&spec), &batch.inputs).unwrap();
        assert!(zeros.as_slice().iter().all(|&p| (p - 0.25).abs() < 1e-15));
    }

    #[test]
    fn large_logit_dominates() {
        let spec = ModelSpec::linear(2, 3);
        let mut flat = vec![0.0; spec.num_params()];
        flat[2] = 100.0; // W[1][0]
        let w = zero_weights(&spec).with_flat_values(&flat).unwrap();
        let x = Matrix::from_rows(&[vec![1.0, 0.0]]).unwrap();
        assert!(forward(&spec, &w, &x).unwrap().get(0, 1) > 0.999);
    }

    #[test]
    fn forward_checks_dimensions() {
        let spec = ModelSpec::linear(2, 3);
        let w = init_weights(&spec, 0).unwrap();
        assert!(matches!(forward(&spec, &w, &Matrix::zeros(1, 3)), Err(Error::Conformance { .. })));
        let other = init_weights(&ModelSpec::linear(3, 3), 0).unwrap();
        assert!(matches!(forward(&spec, &other, &Matrix::zeros(1, 2)), Err(Error::Conformance { .. })));
    }

    #[test]
    fn zero_weights_loss_is_log_k() {
        let spec = ModelSpec::linear(3, 5);
        let w = zero_weights(&spec);
        let batch = random_batch(&spec, 7, 1);
        let (loss, _) = loss_and_grad(&spec, &w, &batch, None, 0.0).unwrap();
        assert!((loss - 5f64.ln()).abs() < 1e-12);

        let center = init_weights(&spec, 3).unwrap();
        let sq: f64 = center.flatten().iter().map(|v| v * v).sum();
        let (loss, _) = loss_and_grad(&spec, &w, &batch, Some(&center), 0.2).unwrap();
        assert!((loss - (5f64.ln() + 0.1 * sq)).abs() < 1e-12);
    }

    #[test]
    fn prox_requires_center_and_is_ignored_at_zero() {
        let spec = ModelSpec::linear(3, 2);
        let w = init_weights(&spec, 1).unwrap();
        let batch = random_batch(&spec, 4, 2);
        assert!(matches!(loss_and_grad(&spec, &w, &batch, None, 0.1), Err(Error::Parameter(_))));
        let (_, g0) = loss_and_grad(&spec, &w, &batch, None, 0.0).unwrap();
        let (_, g1) = loss_and_grad(&spec, &w, &batch, Some(&init_weights(&spec, 9).unwrap()), 0.0).unwrap();
        assert_eq!(g0, g1);
    }

    fn finite_difference_check(spec: ModelSpec, seed: u64, mu: f64) {
        let w = init_weights(&spec, seed).unwrap();
        let center = init_weights(&spec, seed + 100).unwrap();
        let batch = random_batch(&spec, 6, seed + 7);
        let (_, grad) = loss_and_grad(&spec, &w, &batch, Some(&center), mu).unwrap();
        let base = w.flatten();
        let h = 1e-6;
        for (i, g) in grad.flatten().into_iter().enumerate() {
            let mut plus = base.clone();
            plus[i] += h;
            let mut minus = base.clone();
            minus[i] -= h;
            let f = |p: &[f64]| loss_and_grad(&spec, &w.with_flat_values(p).unwrap(), &batch, Some(&center), mu).unwrap().0;
            let fd = (f(&plus) - f(&minus)) / (2.0 * h);
            if g.abs() < 1e-8 {
                continue;
            }
            assert!(((fd - g) / g).abs() < 1e-5, "coord {i}: analytic {g} vs fd {fd}");
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        finite_difference_check(ModelSpec::linear(4, 3), 1, 0.0);
        finite_difference_check(ModelSpec::mlp(3, 4, 3), 2, 0.0);
        finite_difference_check(ModelSpec::mlp(3, 4, 3), 3, 0.05);
    }

    fn toy_set(spec: &ModelSpec, n: usize, seed: u64) -> LabeledSet {
        let b = random_batch(spec, n, seed);
        LabeledSet::new(b.inputs, b.labels, spec.num_classes).unwrap()
    }

    #[test]
    fn zero_learning_rate_is_identity() {
        let spec = ModelSpec::mlp(3, 4, 3);
        let w = init_weights(&spec, 1).unwrap();
        let cfg = TrainConfig {
            learning_rate: 0.0,
            batch_size: 4,
            ..Default::default()
        };
        assert_eq!(local_train(&spec, &w, &toy_set(&spec, 10, 4), &cfg, None).unwrap(), w);
    }

    #[test]
    fn single_full_batch_step_matches_gradient() {
        let spec = ModelSpec::linear(3, 3);
        let w = init_weights(&spec, 1).unwrap();
        let set = toy_set(&spec, 12, 5);
        let cfg = TrainConfig {
            epochs: 1,
            batch_size: 12,
            learning_rate: 0.3,
            ..Default::default()
        };
        let trained = local_train(&spec, &w, &set, &cfg, None).unwrap();
        let batch = Batch::new(set.inputs().clone(), set.labels().to_vec()).unwrap();
        let (_, g) = loss_and_grad(&spec, &w, &batch, None, 0.0).unwrap();
        let expected = add_delta(&w, &g.scaled(-0.3)).unwrap();
        let diff = delta(&trained, &expected).unwrap();
        assert!(diff.flatten().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn training_is_deterministic_and_rejects_empty_data() {
        let spec = ModelSpec::mlp(3, 4, 3);
        let w = init_weights(&spec, 1).unwrap();
        let set = toy_set(&spec, 20, 6);
        let cfg = TrainConfig {
            shuffle_seed: 77,
            batch_size: 3,
            ..Default::default()
        };
        let a = local_train(&spec, &w, &set, &cfg, None).unwrap();
        let b = local_train(&spec, &w, &set, &cfg, None).unwrap();
        assert_eq!(a.flatten().iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.flatten().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        let empty = set.subset(&[]);
        assert!(matches!(local_train(&spec, &w, &empty, &cfg, None), Err(Error::Data(_))));
    }

    #[test]
    fn training_reduces_loss_on_separable_blobs() {
        let data = crate::data::gen_blobs(3, 4, 30, 0.1, 3).unwrap();
        let spec = ModelSpec::linear(4, 3);
        let w = init_weights(&spec, 0).unwrap();
        let before = evaluate(&spec, &w, &data).unwrap().mean_loss;
        let trained = local_train(&spec, &w, &data, &TrainConfig::default(), None).unwrap();
        let after = evaluate(&spec, &trained, &data).unwrap().mean_loss;
        assert!(after < before, "{after} !< {before}");
    }

    #[test]
    fn evaluate_examples() {
        let spec = ModelSpec::linear(2, 2);
        let zero = zero_weights(&spec);
        // zero weights tie every class; ties resolve to class 0
        let balanced = LabeledSet::new(Matrix::zeros(4, 2), vec![0, 1, 0, 1], 2).unwrap();
        assert_eq!(evaluate(&spec, &zero, &balanced).unwrap().accuracy, 0.5);
        let all_zero = LabeledSet::new(Matrix::zeros(3, 2), vec![0, 0, 0], 2).unwrap();
        assert_eq!(evaluate(&spec, &zero, &all_zero).unwrap().accuracy, 1.0);
        assert!(matches!(evaluate(&spec, &zero, &balanced.subset(&[])), Err(Error::Data(_))));
    }
}
