//! Value-semantic arithmetic over model parameters.
//!
//! A model is an ordered list of named [`ParamGroup`]s. Every binary operation
//! requires both operands to be *conformant*: identical `(name, shape)`
//! sequences. Differences between two models are kept in a separate
//! [`WeightDelta`] type so a shift can never be mistaken for a model.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default squared-norm threshold below which a client delta is treated as
/// "did not move" and the projection is skipped.
pub const DEFAULT_PROJECTION_EPS: f64 = 1e-24;

/// A named block of parameters stored as a flat row-major array.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGroup {
    name: String,
    shape: Vec<usize>,
    values: Vec<f64>,
}

impl ParamGroup {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let name = name.into();
        if shape.is_empty() || shape.iter().any(|&d| d == 0) {
            return Err(Error::conformance(
                name,
                format!("shape {shape:?} must have positive dimensions"),
            ));
        }
        let expected: usize = shape.iter().product();
        if values.len() != expected {
            return Err(Error::conformance(
                name,
                format!(
                    "{} values for shape {shape:?} (expected {expected})",
                    values.len()
                ),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(name));
        }
        Ok(Self {
            name,
            shape,
            values,
        })
    }

    pub fn zeros(name: impl Into<String>, shape: Vec<usize>) -> Result<Self> {
        let n = shape.iter().product();
        Self::new(name, shape, vec![0.0; n])
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Builds a group with the same name and shape but new values. Callers
    /// guarantee the length matches.
    fn with_values(&self, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), self.values.len());
        Self {
            name: self.name.clone(),
            shape: self.shape.clone(),
            values,
        }
    }

    fn zip_map(&self, other: &ParamGroup, f: impl Fn(f64, f64) -> f64) -> Result<ParamGroup> {
        self.check_same_shape(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(self.with_values(values))
    }

    fn check_same_shape(&self, other: &ParamGroup) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::conformance(
                self.name.clone(),
                format!("shape {:?} vs {:?}", self.shape, other.shape),
            ));
        }
        Ok(())
    }

    fn check_conformant(&self, other: &ParamGroup) -> Result<()> {
        if self.name != other.name {
            return Err(Error::conformance(
                self.name.clone(),
                format!("group name `{}` vs `{}`", self.name, other.name),
            ));
        }
        self.check_same_shape(other)
    }
}

/// Inner product over the flattened values of two equally shaped groups.
pub fn group_dot(x: &ParamGroup, y: &ParamGroup) -> Result<f64> {
    x.check_same_shape(y)?;
    Ok(dot(&x.values, &y.values))
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// Removes from `global_shift` its component parallel to `local_delta`.
///
/// When `‖local_delta‖² ≤ eps` the local delta carries no direction and the
/// shift is returned unchanged.
pub fn project_out(global_shift: &ParamGroup, local_delta: &ParamGroup, eps: f64) -> Result<ParamGroup> {
    check_eps(eps)?;
    global_shift.check_same_shape(local_delta)?;
    let denom = local_delta.norm_sq();
    if denom <= eps {
        return Ok(global_shift.clone());
    }
    let coeff = dot(&global_shift.values, &local_delta.values) / denom;
    global_shift.zip_map(local_delta, |g, l| g - coeff * l)
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::param(format!("projection eps must be positive, got {eps}")));
    }
    Ok(())
}

macro_rules! group_collection {
    ($ty:ident) => {
        impl $ty {
            pub fn new(groups: Vec<ParamGroup>) -> Result<Self> {
                let mut seen = HashSet::new();
                for g in &groups {
                    if !seen.insert(g.name.as_str()) {
                        return Err(Error::conformance(g.name.clone(), "duplicate group name"));
                    }
                }
                Ok(Self { groups })
            }

            pub fn groups(&self) -> &[ParamGroup] {
                &self.groups
            }

            pub fn group(&self, name: &str) -> Option<&ParamGroup> {
                self.groups.iter().find(|g| g.name == name)
            }

            pub fn num_params(&self) -> usize {
                self.groups.iter().map(ParamGroup::len).sum()
            }

            /// Flattened copy of every value in group order.
            pub fn flatten(&self) -> Vec<f64> {
                self.groups.iter().flat_map(|g| g.values.iter().copied()).collect()
            }

            /// Checks that `other` has the same `(name, shape)` sequence,
            /// reporting the first mismatched group.
            pub fn check_conformant<O: GroupLayout>(&self, other: &O) -> Result<()> {
                check_layouts(&self.groups, other.param_groups())
            }

            pub fn is_finite(&self) -> bool {
                self.groups.iter().all(ParamGroup::is_finite)
            }

            /// Errors with the name of the first group holding a NaN or infinity.
            pub fn ensure_finite(&self) -> Result<()> {
                match self.groups.iter().find(|g| !g.is_finite()) {
                    Some(g) => Err(Error::NonFinite(g.name.clone())),
                    None => Ok(()),
                }
            }

            /// Same layout with the given flat values.
            pub fn with_flat_values(&self, flat: &[f64]) -> Result<Self> {
                if flat.len() != self.num_params() {
                    return Err(Error::param(format!(
                        "{} flat values for a layout of {} parameters",
                        flat.len(),
                        self.num_params()
                    )));
                }
                let mut offset = 0;
                let groups = self
                    .groups
                    .iter()
                    .map(|g| {
                        let vals = flat[offset..offset + g.len()].to_vec();
                        offset += g.len();
                        ParamGroup::new(g.name.clone(), g.shape.clone(), vals)
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(Self { groups })
            }

            fn zip_map(&self, other: &impl GroupLayout, f: impl Fn(f64, f64) -> f64 + Copy) -> Result<Vec<ParamGroup>> {
                self.check_conformant(other)?;
                self.groups
                    .iter()
                    .zip(other.param_groups())
                    .map(|(a, b)| a.zip_map(b, f))
                    .collect()
            }
        }

        impl GroupLayout for $ty {
            fn param_groups(&self) -> &[ParamGroup] {
                &self.groups
            }
        }
    };
}

/// Anything that exposes an ordered list of parameter groups.
pub trait GroupLayout {
    fn param_groups(&self) -> &[ParamGroup];
}

fn check_layouts(a: &[ParamGroup], b: &[ParamGroup]) -> Result<()> {
    for (x, y) in a.iter().zip(b) {
        x.check_conformant(y)?;
    }
    match a.len().cmp(&b.len()) {
        std::cmp::Ordering::Equal => Ok(()),
        std::cmp::Ordering::Greater => Err(Error::conformance(
            a[b.len()].name.clone(),
            "group missing from other operand",
        )),
        std::cmp::Ordering::Less => Err(Error::conformance(
            b[a.len()].name.clone(),
            "unexpected extra group in other operand",
        )),
    }
}

/// A full set of model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    groups: Vec<ParamGroup>,
}

group_collection!(ModelWeights);

/// A difference between two conformant [`ModelWeights`].
#[derive(Debug, Clone, PartialEq)]
pub struct WeightDelta {
    groups: Vec<ParamGroup>,
}

group_collection!(WeightDelta);

impl WeightDelta {
    /// All-zero delta with the layout of `like`.
    pub fn zeros_like(like: &impl GroupLayout) -> Self {
        let groups = like
            .param_groups()
            .iter()
            .map(|g| g.with_values(vec![0.0; g.len()]))
            .collect();
        Self { groups }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let groups = self
            .groups
            .iter()
            .map(|g| g.with_values(g.values.iter().map(|v| v * factor).collect()))
            .collect();
        Self { groups }
    }

    pub fn plus(&self, other: &WeightDelta) -> Result<WeightDelta> {
        Ok(Self {
            groups: self.zip_map(other, |a, b| a + b)?,
        })
    }

    pub fn minus(&self, other: &WeightDelta) -> Result<WeightDelta> {
        Ok(Self {
            groups: self.zip_map(other, |a, b| a - b)?,
        })
    }

    /// Sum of `coeff * delta` over the given terms, all conformant with `like`.
    pub fn linear_combination<'a>(
        like: &impl GroupLayout,
        terms: impl IntoIterator<Item = (f64, &'a WeightDelta)>,
    ) -> Result<WeightDelta> {
        let mut acc = WeightDelta::zeros_like(like);
        for (coeff, d) in terms {
            acc.check_conformant(d)?;
            for (ga, gd) in acc.groups.iter_mut().zip(&d.groups) {
                for (a, v) in ga.values.iter_mut().zip(&gd.values) {
                    *a += coeff * v;
                }
            }
        }
        Ok(acc)
    }

    pub fn dot(&self, other: &WeightDelta) -> Result<f64> {
        self.check_conformant(other)?;
        Ok(self
            .groups
            .iter()
            .zip(&other.groups)
            .map(|(a, b)| dot(&a.values, &b.values))
            .sum())
    }

    pub fn norm_sq(&self) -> f64 {
        self.groups.iter().map(ParamGroup::norm_sq).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.groups.iter().all(|g| g.values.iter().all(|&v| v == 0.0))
    }
}

/// `a − b`, elementwise.
pub fn delta(a: &ModelWeights, b: &ModelWeights) -> Result<WeightDelta> {
    Ok(WeightDelta {
        groups: a.zip_map(b, |x, y| x - y)?,
    })
}

/// `weights + d`, elementwise.
pub fn add_delta(weights: &ModelWeights, d: &WeightDelta) -> Result<ModelWeights> {
    Ok(ModelWeights {
        groups: weights.zip_map(d, |w, x| w + x)?,
    })
}

/// `(1 − beta_t)·global + beta_t·client`.
pub fn moving_average(global: &ModelWeights, client: &ModelWeights, beta_t: f64) -> Result<ModelWeights> {
    if !(0.0..=1.0).contains(&beta_t) {
        return Err(Error::param(format!("moving-average weight {beta_t} outside [0, 1]")));
    }
    let keep = 1.0 - beta_t;
    Ok(ModelWeights {
        groups: global.zip_map(client, |g, c| keep * g + beta_t * c)?,
    })
}

/// Staleness-discounted mixing weight `staleness^(−a) · beta`.
///
/// `a = 0` is accepted and yields a constant `beta`.
pub fn staleness_decay(staleness: u64, beta: f64, a: f64) -> Result<f64> {
    if staleness < 1 {
        return Err(Error::Staleness(staleness));
    }
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::param(format!("beta must lie in (0, 1], got {beta}")));
    }
    if !(a >= 0.0 && a.is_finite()) {
        return Err(Error::param(format!("staleness exponent must be non-negative, got {a}")));
    }
    Ok((staleness as f64).powf(-a) * beta)
}

/// What counts as one "layer" when projecting a global shift.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionGranularity {
    /// Every named parameter group is projected on its own.
    #[default]
    Group,
    /// Groups sharing a layer prefix (`fc.weight`, `fc.bias` → `fc`) are
    /// projected jointly as one vector.
    FusedLayer,
}

/// Layer key of a group name: everything before the last `.`.
pub fn layer_key(name: &str) -> &str {
    name.rsplit_once('.').map_or(name, |(layer, _)| layer)
}

/// Outcome of projecting one unit (group or fused layer).
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionCheck {
    pub unit: String,
    /// ⟨projected shift, local delta⟩ after projection.
    pub residual_dot: f64,
    pub shift_norm: f64,
    pub projected_norm: f64,
    pub local_norm: f64,
    /// The local delta was below `eps` and the shift passed through.
    pub guarded: bool,
}

impl ProjectionCheck {
    /// |cos| between the projected shift and the local delta; zero when either
    /// side vanishes.
    pub fn abs_cosine(&self) -> f64 {
        let denom = self.projected_norm * self.local_norm;
        if denom == 0.0 {
            0.0
        } else {
            self.residual_dot.abs() / denom
        }
    }
}

/// Per-group projection of `global_shift` onto the orthogonal complement of
/// `local_delta`.
pub fn orthogonalize(global_shift: &WeightDelta, local_delta: &WeightDelta, eps: f64) -> Result<WeightDelta> {
    orthogonalize_with(global_shift, local_delta, eps, ProjectionGranularity::Group).map(|(d, _)| d)
}

/// [`orthogonalize`] with a selectable granularity, also returning one
/// [`ProjectionCheck`] per projected unit.
pub fn orthogonalize_with(
    global_shift: &WeightDelta,
    local_delta: &WeightDelta,
    eps: f64,
    granularity: ProjectionGranularity,
) -> Result<(WeightDelta, Vec<ProjectionCheck>)> {
    check_eps(eps)?;
    global_shift.check_conformant(local_delta)?;

    let units: Vec<(String, Vec<usize>)> = match granularity {
        ProjectionGranularity::Group => global_shift
            .groups
            .iter()
            .enumerate()
            .map(|(i, g)| (g.name.clone(), vec![i]))
            .collect(),
        ProjectionGranularity::FusedLayer => {
            let mut units: Vec<(String, Vec<usize>)> = Vec::new();
            for (i, g) in global_shift.groups.iter().enumerate() {
                let key = layer_key(&g.name);
                match units.iter_mut().find(|(k, _)| k == key) {
                    Some((_, idx)) => idx.push(i),
                    None => units.push((key.to_string(), vec![i])),
                }
            }
            units
        }
    };

    let mut out = global_shift.groups.clone();
    let mut checks = Vec::with_capacity(units.len());
    for (unit, members) in units {
        let (mut num, mut denom, mut shift_sq) = (0.0, 0.0, 0.0);
        for &i in &members {
            let (g, l) = (&global_shift.groups[i], &local_delta.groups[i]);
            num += dot(&g.values, &l.values);
            denom += l.norm_sq();
            shift_sq += g.norm_sq();
        }
        let guarded = denom <= eps;
        if !guarded {
            let coeff = num / denom;
            for &i in &members {
                let l = &local_delta.groups[i];
                for (o, lv) in out[i].values.iter_mut().zip(&l.values) {
                    *o -= coeff * lv;
                }
            }
        }
        let (mut residual_dot, mut projected_sq) = (0.0, 0.0);
        for &i in &members {
            residual_dot += dot(&out[i].values, &local_delta.groups[i].values);
            projected_sq += out[i].norm_sq();
        }
        checks.push(ProjectionCheck {
            unit,
            residual_dot,
            shift_norm: shift_sq.sqrt(),
            projected_norm: projected_sq.sqrt(),
            local_norm: denom.sqrt(),
            guarded,
        });
    }
    Ok((WeightDelta { groups: out }, checks))
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::param(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::param("ragged rows"));
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// New matrix holding the listed rows in order.
    pub fn select_rows(&self, indices: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }
}
