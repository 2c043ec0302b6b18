//! Loss functions, gradients, the mini-batch gradient-difference estimator
//! and smoothness constants.
//!
//! Two families are supported:
//!
//! * regularized logistic regression over a sparse shard,
//!   `f_i(x) = (1/m) Σ_j log(1 + exp(-y_j a_jᵀx)) + (λ/2) r(x)`, with either
//!   the non-convex regularizer `r(x) = Σ x_j² / (1 + x_j²)` or ridge
//!   `r(x) = ‖x‖²`;
//! * shifted quadratics `f_i(x) = ½‖x‖² + ⟨ζ_i, x⟩`.
//!
//! The regularizer is folded into every per-sample loss `f_{i,j}`, so that
//! `f_i` is exactly the average of its per-sample terms.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::rng::{sample_without_replacement, RngStream};

/// Sparse design matrix rows with ±1 labels, stored row-compressed.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    d: usize,
    row_ptr: Vec<usize>,
    indices: Vec<u32>,
    values: Vec<f64>,
    labels: Vec<f64>,
}

impl LabeledDataset {
    pub fn new(d: usize) -> Self {
        LabeledDataset {
            d,
            row_ptr: vec![0],
            indices: Vec::new(),
            values: Vec::new(),
            labels: Vec::new(),
        }
    }

    /// Appends one sample. Indices are 0-based and must be `< d`.
    pub fn push_row(&mut self, indices: &[u32], values: &[f64], label: f64) -> Result<()> {
        if indices.len() != values.len() {
            return Err(Error::InvalidArgument(format!(
                "row has {} indices but {} values",
                indices.len(),
                values.len()
            )));
        }
        if label != 1.0 && label != -1.0 {
            return Err(Error::InvalidArgument(format!("label {label} is not ±1")));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i as usize >= self.d) {
            return Err(Error::InvalidArgument(format!(
                "feature index {bad} out of range for d = {}",
                self.d
            )));
        }
        self.indices.extend_from_slice(indices);
        self.values.extend_from_slice(values);
        self.labels.push(label);
        self.row_ptr.push(self.indices.len());
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn label(&self, j: usize) -> f64 {
        self.labels[j]
    }

    pub fn row(&self, j: usize) -> (&[u32], &[f64]) {
        let (lo, hi) = (self.row_ptr[j], self.row_ptr[j + 1]);
        (&self.indices[lo..hi], &self.values[lo..hi])
    }

    pub fn row_dot(&self, j: usize, x: &[f64]) -> f64 {
        let (idx, val) = self.row(j);
        idx.iter().zip(val).map(|(&i, v)| v * x[i as usize]).sum()
    }

    pub fn row_norm_sq(&self, j: usize) -> f64 {
        self.row(j).1.iter().map(|v| v * v).sum()
    }

    /// Copy with every label negated.
    pub fn with_flipped_labels(&self) -> LabeledDataset {
        let mut out = self.clone();
        for y in &mut out.labels {
            *y = -*y;
        }
        out
    }

    /// Copy of rows `range` in order.
    pub fn slice(&self, range: std::ops::Range<usize>) -> LabeledDataset {
        let mut out = LabeledDataset::new(self.d);
        for j in range {
            let (idx, val) = self.row(j);
            out.indices.extend_from_slice(idx);
            out.values.extend_from_slice(val);
            out.labels.push(self.labels[j]);
            out.row_ptr.push(out.indices.len());
        }
        out
    }

    /// Same rows, different declared dimension (must cover every index).
    pub fn with_dim(mut self, d: usize) -> Result<LabeledDataset> {
        if let Some(&max) = self.indices.iter().max() {
            if max as usize >= d {
                return Err(Error::InvalidArgument(format!(
                    "dimension {d} does not cover feature index {max}"
                )));
            }
        }
        self.d = d;
        Ok(self)
    }

    /// Dense `AᵀA` as a row-major `d × d` matrix.
    fn gram(&self) -> Vec<f64> {
        let d = self.d;
        let mut g = vec![0.0; d * d];
        for j in 0..self.len() {
            let (idx, val) = self.row(j);
            for (&p, &vp) in idx.iter().zip(val) {
                let row = p as usize * d;
                for (&q, &vq) in idx.iter().zip(val) {
                    g[row + q as usize] += vp * vq;
                }
            }
        }
        g
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegularizerKind {
    /// `r(x) = Σ x_j² / (1 + x_j²)`
    NonConvex,
    /// `r(x) = ‖x‖²`
    Ridge,
}

/// Regularizer `(λ/2) r(x)` added to the logistic loss.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Regularizer {
    pub kind: RegularizerKind,
    pub lambda: f64,
}

impl Regularizer {
    pub fn new(kind: RegularizerKind, lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidArgument(format!("lambda must be >= 0, got {lambda}")));
        }
        Ok(Regularizer { kind, lambda })
    }

    pub fn non_convex(lambda: f64) -> Self {
        Self::new(RegularizerKind::NonConvex, lambda).expect("lambda >= 0")
    }

    pub fn ridge(lambda: f64) -> Self {
        Self::new(RegularizerKind::Ridge, lambda).expect("lambda >= 0")
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let r: f64 = match self.kind {
            RegularizerKind::NonConvex => x.iter().map(|v| v * v / (1.0 + v * v)).sum(),
            RegularizerKind::Ridge => x.iter().map(|v| v * v).sum(),
        };
        0.5 * self.lambda * r
    }

    /// Adds `∇((λ/2) r)(x)` into `out`.
    pub fn add_grad(&self, x: &[f64], out: &mut [f64]) {
        let lam = self.lambda;
        match self.kind {
            RegularizerKind::NonConvex => {
                for (o, v) in out.iter_mut().zip(x) {
                    let q = 1.0 + v * v;
                    *o += lam * v / (q * q);
                }
            }
            RegularizerKind::Ridge => {
                for (o, v) in out.iter_mut().zip(x) {
                    *o += lam * v;
                }
            }
        }
    }

    /// Upper bound on the regularizer's curvature, `λ · c_r`.
    pub fn curvature_bound(&self) -> f64 {
        // NonConvex: sup |r_j''| / 2 = 1; Ridge: Hessian is λI.
        self.lambda
    }
}

/// One worker's loss `f_i`.
#[derive(Clone, Debug)]
pub enum LocalObjective {
    Logistic {
        shard: Arc<LabeledDataset>,
        reg: Regularizer,
    },
    Quadratic {
        shift: Vector,
    },
}

#[inline]
fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

#[inline]
fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

impl LocalObjective {
    pub fn logistic(shard: Arc<LabeledDataset>, reg: Regularizer) -> Result<Self> {
        if shard.is_empty() {
            return Err(Error::Empty("logistic objective needs a nonempty shard"));
        }
        Ok(LocalObjective::Logistic { shard, reg })
    }

    pub fn quadratic(shift: Vector) -> Self {
        LocalObjective::Quadratic { shift }
    }

    pub fn dim(&self) -> usize {
        match self {
            LocalObjective::Logistic { shard, .. } => shard.dim(),
            LocalObjective::Quadratic { shift } => shift.len(),
        }
    }

    /// Number of per-sample terms `m`; a quadratic task counts as one.
    pub fn num_samples(&self) -> usize {
        match self {
            LocalObjective::Logistic { shard, .. } => shard.len(),
            LocalObjective::Quadratic { .. } => 1,
        }
    }

    /// Same loss with labels negated (label-flipping adversary).
    pub fn label_flipped(&self) -> LocalObjective {
        match self {
            LocalObjective::Logistic { shard, reg } => LocalObjective::Logistic {
                shard: Arc::new(shard.with_flipped_labels()),
                reg: *reg,
            },
            LocalObjective::Quadratic { shift } => LocalObjective::Quadratic {
                shift: shift.clone(),
            },
        }
    }

    /// True when both describe the same function without comparing data
    /// row by row (shards are compared by identity).
    pub fn same_function(&self, other: &LocalObjective) -> bool {
        match (self, other) {
            (
                LocalObjective::Logistic { shard: a, reg: ra },
                LocalObjective::Logistic { shard: b, reg: rb },
            ) => Arc::ptr_eq(a, b) && ra == rb,
            (LocalObjective::Quadratic { shift: a }, LocalObjective::Quadratic { shift: b }) => a == b,
            _ => false,
        }
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::dim(self.dim(), x.len()));
        }
        Ok(())
    }

    pub fn loss(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(match self {
            LocalObjective::Logistic { shard, reg } => {
                let sum: f64 = (0..shard.len())
                    .map(|j| softplus(-shard.label(j) * shard.row_dot(j, x)))
                    .sum();
                sum / shard.len() as f64 + reg.value(x)
            }
            LocalObjective::Quadratic { shift } => {
                0.5 * crate::linalg::norm_sq(x) + crate::linalg::dot(shift, x)?
            }
        })
    }

    pub fn grad(&self, x: &[f64]) -> Result<Vector> {
        self.check_dim(x)?;
        Ok(match self {
            LocalObjective::Logistic { shard, reg } => {
                let mut out = Vector::zeros(shard.dim());
                for j in 0..shard.len() {
                    let y = shard.label(j);
                    let coef = -y * sigmoid(-y * shard.row_dot(j, x));
                    let (idx, val) = shard.row(j);
                    for (&i, v) in idx.iter().zip(val) {
                        out[i as usize] += coef * v;
                    }
                }
                out.scale(1.0 / shard.len() as f64);
                reg.add_grad(x, &mut out);
                out
            }
            LocalObjective::Quadratic { shift } => x.iter().zip(shift.iter()).map(|(a, b)| a + b).collect(),
        })
    }

    /// Gradient of the single per-sample term `f_{i,j}`.
    pub fn sample_grad(&self, j: usize, x: &[f64]) -> Result<Vector> {
        self.check_dim(x)?;
        match self {
            LocalObjective::Logistic { shard, reg } => {
                let mut out = Vector::zeros(shard.dim());
                let y = shard.label(j);
                let coef = -y * sigmoid(-y * shard.row_dot(j, x));
                let (idx, val) = shard.row(j);
                for (&i, v) in idx.iter().zip(val) {
                    out[i as usize] += coef * v;
                }
                reg.add_grad(x, &mut out);
                Ok(out)
            }
            LocalObjective::Quadratic { .. } => self.grad(x),
        }
    }

    /// Mini-batch estimate of `∇f_i(x) - ∇f_i(y)` on a uniform
    /// without-replacement batch of size `b`; the same batch is used at both
    /// points. With `b = m` the result is exactly `grad(x) - grad(y)`.
    pub fn grad_diff_estimator(
        &self,
        x: &[f64],
        y: &[f64],
        b: usize,
        rng: &mut RngStream,
    ) -> Result<Vector> {
        self.check_dim(x)?;
        self.check_dim(y)?;
        let m = self.num_samples();
        if b == 0 || b > m {
            return Err(Error::InvalidArgument(format!(
                "batch size {b} out of range 1..={m}"
            )));
        }
        if b == m {
            return Ok(self.grad(x)?.sub(&self.grad(y)?));
        }
        let LocalObjective::Logistic { shard, reg } = self else {
            unreachable!("quadratic objectives have m = 1");
        };
        let batch = sample_without_replacement(rng, m, b)?;
        let mut out = Vector::zeros(shard.dim());
        for j in batch {
            let lbl = shard.label(j);
            let cx = -lbl * sigmoid(-lbl * shard.row_dot(j, x));
            let cy = -lbl * sigmoid(-lbl * shard.row_dot(j, y));
            let coef = cx - cy;
            if coef == 0.0 {
                continue;
            }
            let (idx, val) = shard.row(j);
            for (&i, v) in idx.iter().zip(val) {
                out[i as usize] += coef * v;
            }
        }
        out.scale(1.0 / b as f64);
        reg.add_grad(x, &mut out);
        let mut neg = vec![0.0; y.len()];
        reg.add_grad(y, &mut neg);
        for (o, n) in out.iter_mut().zip(&neg) {
            *o -= n;
        }
        Ok(out)
    }
}

/// `f = (1/G) Σ f_i` over the good workers, with identical local
/// functions evaluated once and weighted.
#[derive(Clone, Debug)]
pub struct GlobalObjective {
    parts: Vec<(LocalObjective, usize)>,
    total: usize,
    dim: usize,
}

impl GlobalObjective {
    pub fn new(objectives: &[LocalObjective]) -> Result<Self> {
        let first = objectives.first().ok_or(Error::Empty("no objectives"))?;
        let dim = first.dim();
        let mut parts: Vec<(LocalObjective, usize)> = Vec::new();
        for obj in objectives {
            if obj.dim() != dim {
                return Err(Error::dim(dim, obj.dim()));
            }
            match parts.iter_mut().find(|(o, _)| o.same_function(obj)) {
                Some((_, count)) => *count += 1,
                None => parts.push((obj.clone(), 1)),
            }
        }
        Ok(GlobalObjective {
            parts,
            total: objectives.len(),
            dim,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn loss(&self, x: &[f64]) -> Result<f64> {
        let mut acc = 0.0;
        for (obj, count) in &self.parts {
            acc += *count as f64 * obj.loss(x)?;
        }
        Ok(acc / self.total as f64)
    }

    pub fn grad(&self, x: &[f64]) -> Result<Vector> {
        let mut acc = Vector::zeros(self.dim);
        for (obj, count) in &self.parts {
            acc.axpy(*count as f64, &obj.grad(x)?);
        }
        acc.scale(1.0 / self.total as f64);
        Ok(acc)
    }
}

/// Smoothness constants feeding the theoretical stepsizes. All are
/// conservative upper bounds except `mu`, which is a lower bound.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessConstants {
    /// Smoothness of the global objective.
    pub l: f64,
    /// Global Hessian variance bound `L_±`.
    pub l_pm: f64,
    /// Local Hessian variance bound `𝓛_±`.
    pub cal_l_pm: f64,
    /// PŁ constant, 0 when unknown.
    pub mu: f64,
    /// Per-worker smoothness constants `L_i`.
    pub l_workers: Vec<f64>,
}

impl SmoothnessConstants {
    pub fn l_avg(&self) -> f64 {
        let n = self.l_workers.len().max(1) as f64;
        (self.l_workers.iter().map(|l| l * l).sum::<f64>() / n).sqrt()
    }
}

/// Largest eigenvalue of a symmetric PSD row-major `d × d` matrix by power
/// iteration, to relative tolerance `tol`.
pub fn power_iteration(matrix: &[f64], d: usize, tol: f64, max_iters: usize) -> f64 {
    assert_eq!(matrix.len(), d * d);
    // deterministic start with a component along every direction
    let mut v: Vec<f64> = (0..d).map(|i| 1.0 + 0.01 * i as f64).collect();
    let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    v.iter_mut().for_each(|a| *a /= norm);
    let mut w = vec![0.0; d];
    let mut lambda = 0.0;
    for _ in 0..max_iters {
        for (i, wi) in w.iter_mut().enumerate() {
            *wi = matrix[i * d..(i + 1) * d].iter().zip(&v).map(|(a, b)| a * b).sum();
        }
        let next: f64 = w.iter().zip(&v).map(|(a, b)| a * b).sum();
        let wn = w.iter().map(|a| a * a).sum::<f64>().sqrt();
        if wn == 0.0 {
            return 0.0;
        }
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / wn;
        }
        let converged = (next - lambda).abs() <= tol * next.abs();
        lambda = next;
        if converged {
            break;
        }
    }
    // Rayleigh quotient approaches λ_max from below; the norm of Mv is an
    // upper bound once v has converged.
    for (i, wi) in w.iter_mut().enumerate() {
        *wi = matrix[i * d..(i + 1) * d].iter().zip(&v).map(|(a, b)| a * b).sum();
    }
    lambda.max(w.iter().map(|a| a * a).sum::<f64>().sqrt())
}

const POWER_TOL: f64 = 1e-10;
const POWER_MAX_ITERS: usize = 20_000;

/// Estimates `L`, `L_±`, `𝓛_±` and `μ` for the good workers' objectives.
pub fn estimate_constants(objectives: &[LocalObjective]) -> Result<SmoothnessConstants> {
    let first = objectives.first().ok_or(Error::Empty("no objectives"))?;
    match first {
        LocalObjective::Quadratic { .. } => {
            if !objectives
                .iter()
                .all(|o| matches!(o, LocalObjective::Quadratic { .. }))
            {
                return Err(Error::InvalidArgument("mixed objective families".into()));
            }
            Ok(SmoothnessConstants {
                l: 1.0,
                l_pm: 0.0,
                cal_l_pm: 0.0,
                mu: 1.0,
                l_workers: vec![1.0; objectives.len()],
            })
        }
        LocalObjective::Logistic { reg, .. } => {
            let reg = *reg;
            let d = first.dim();
            let mut global = vec![0.0; d * d];
            let mut l_workers = Vec::with_capacity(objectives.len());
            let mut cal_l_pm: f64 = 0.0;
            // identical shards (homogeneous split) are processed once
            let mut seen: Vec<(*const LabeledDataset, f64, f64)> = Vec::new();
            for obj in objectives {
                let LocalObjective::Logistic { shard, reg: r } = obj else {
                    return Err(Error::InvalidArgument("mixed objective families".into()));
                };
                if *r != reg {
                    return Err(Error::InvalidArgument("workers use different regularizers".into()));
                }
                if shard.dim() != d {
                    return Err(Error::dim(d, shard.dim()));
                }
                let key = Arc::as_ptr(shard);
                let (lam_max, row_max) = match seen.iter().find(|(k, _, _)| *k == key) {
                    Some(&(_, lm, rm)) => {
                        let gram = shard.gram();
                        accumulate_scaled(&mut global, &gram, 1.0 / (4.0 * shard.len() as f64));
                        (lm, rm)
                    }
                    None => {
                        let mut gram = shard.gram();
                        let scale = 1.0 / (4.0 * shard.len() as f64);
                        gram.iter_mut().for_each(|g| *g *= scale);
                        accumulate_scaled(&mut global, &gram, 1.0);
                        let lm = power_iteration(&gram, d, POWER_TOL, POWER_MAX_ITERS);
                        let rm = (0..shard.len()).map(|j| shard.row_norm_sq(j)).fold(0.0, f64::max);
                        seen.push((key, lm, rm));
                        (lm, rm)
                    }
                };
                l_workers.push(lam_max + reg.curvature_bound());
                cal_l_pm = cal_l_pm.max(row_max / 4.0 + reg.curvature_bound());
            }
            let g = objectives.len() as f64;
            global.iter_mut().for_each(|v| *v /= g);
            let l = power_iteration(&global, d, POWER_TOL, POWER_MAX_ITERS) + reg.curvature_bound();
            let mut consts = SmoothnessConstants {
                l,
                l_pm: 0.0,
                cal_l_pm,
                mu: match reg.kind {
                    RegularizerKind::Ridge => reg.lambda,
                    RegularizerKind::NonConvex => 0.0,
                },
                l_workers,
            };
            consts.l_pm = consts.l_avg();
            Ok(consts)
        }
    }
}

fn accumulate_scaled(acc: &mut [f64], m: &[f64], scale: f64) {
    for (a, v) in acc.iter_mut().zip(m) {
        *a += scale * v;
    }
}

#[derive(Clone, Debug)]
pub struct FStarEstimate {
    pub value: f64,
    pub x: Vector,
    pub grad_norm_sq: f64,
    pub iterations: usize,
    /// False when the iteration cap was hit before `‖∇f‖² ≤ tol`; `value`
    /// is then the best loss seen.
    pub converged: bool,
}

pub const F_STAR_MAX_ITERS: usize = 200_000;

/// Minimizes the global objective by gradient descent with stepsize `1/L`
/// from the origin.
pub fn estimate_f_star(objectives: &[LocalObjective], tol: f64) -> Result<FStarEstimate> {
    let d = objectives.first().ok_or(Error::Empty("no objectives"))?.dim();
    let l = estimate_constants(objectives)?.l;
    estimate_f_star_from(objectives, &Vector::zeros(d), l, tol, F_STAR_MAX_ITERS)
}

pub fn estimate_f_star_from(
    objectives: &[LocalObjective],
    start: &Vector,
    l: f64,
    tol: f64,
    max_iters: usize,
) -> Result<FStarEstimate> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be > 0, got {tol}")));
    }
    let global = GlobalObjective::new(objectives)?;
    let step = 1.0 / l;
    let mut x = start.clone();
    let mut best = (global.loss(&x)?, x.clone());
    for it in 0..=max_iters {
        let g = global.grad(&x)?;
        let gn = g.norm_sq();
        let f = global.loss(&x)?;
        if f < best.0 {
            best = (f, x.clone());
        }
        if gn <= tol {
            return Ok(FStarEstimate {
                value: f,
                x,
                grad_norm_sq: gn,
                iterations: it,
                converged: true,
            });
        }
        if it == max_iters {
            break;
        }
        x.axpy(-step, &g);
    }
    let gn = global.grad(&best.1)?.norm_sq();
    Ok(FStarEstimate {
        value: best.0,
        x: best.1,
        grad_norm_sq: gn,
        iterations: max_iters,
        converged: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::finite_diff_grad;

    fn shard(rows: &[(&[(u32, f64)], f64)], d: usize) -> Arc<LabeledDataset> {
        let mut ds = LabeledDataset::new(d);
        for (feats, y) in rows {
            let idx: Vec<u32> = feats.iter().map(|f| f.0).collect();
            let val: Vec<f64> = feats.iter().map(|f| f.1).collect();
            ds.push_row(&idx, &val, *y).unwrap();
        }
        Arc::new(ds)
    }

    fn three_sample() -> Arc<LabeledDataset> {
        shard(
            &[
                (&[(0, 1.0), (2, -0.5)], 1.0),
                (&[(1, 2.0)], -1.0),
                (&[(0, 0.3), (1, -1.2), (2, 0.7)], 1.0),
            ],
            3,
        )
    }

    #[test]
    fn test_single_sample_loss_at_origin_is_log2() {
        let obj = LocalObjective::logistic(shard(&[(&[(0, 1.0)], 1.0)], 2), Regularizer::ridge(0.0)).unwrap();
        assert!((obj.loss(&[0.0, 0.0]).unwrap() - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn test_quadratic_loss_and_grad() {
        let q = LocalObjective::quadratic(Vector::zeros(3));
        assert_eq!(q.loss(&[0.0; 3]).unwrap(), 0.0);
        let q = LocalObjective::quadratic(Vector::filled(4, 1.0));
        assert_eq!(q.grad(&[0.0; 4]).unwrap(), Vector::filled(4, 1.0));
    }

    #[test]
    fn test_loss_matches_reverse_summation() {
        let ds = three_sample();
        let reg = Regularizer::non_convex(0.1);
        let obj = LocalObjective::logistic(ds.clone(), reg).unwrap();
        let x = [0.37, -1.4, 2.2];
        // independent oracle: naive formula, terms summed in reverse order
        let mut acc = 0.0;
        for j in (0..3).rev() {
            let (idx, val) = ds.row(j);
            let mut z = 0.0;
            for (i, v) in idx.iter().zip(val) {
                z += v * x[*i as usize];
            }
            acc += (1.0 + (-ds.label(j) * z).exp()).ln();
        }
        let r: f64 = x.iter().rev().map(|v| v * v / (1.0 + v * v)).sum();
        let oracle = acc / 3.0 + 0.05 * r;
        assert!((obj.loss(&x).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn test_ridge_gradient_contribution() {
        // margin terms cancel for a zero row, leaving the regularizer
        let ds = shard(&[(&[], 1.0)], 3);
        let obj = LocalObjective::logistic(ds, Regularizer::ridge(0.7)).unwrap();
        let e1 = Vector::basis(3, 0);
        let g = obj.grad(&e1).unwrap();
        // zero feature row gives logistic gradient 0
        assert!((g[0] - 0.7).abs() < 1e-15);
        assert_eq!(g[1], 0.0);
    }

    #[test]
    fn test_empty_shard_rejected() {
        let ds = Arc::new(LabeledDataset::new(2));
        assert!(LocalObjective::logistic(ds, Regularizer::ridge(0.1)).is_err());
    }

    #[test]
    fn test_dimension_mismatch() {
        let obj = LocalObjective::logistic(three_sample(), Regularizer::ridge(0.1)).unwrap();
        assert!(matches!(obj.loss(&[0.0; 2]), Err(Error::Dimension { .. })));
        assert!(obj.grad(&[0.0; 4]).is_err());
    }

    #[test]
    fn test_grad_matches_finite_differences_at_origin() {
        let obj = LocalObjective::logistic(three_sample(), Regularizer::ridge(0.0)).unwrap();
        let x = Vector::zeros(3);
        let fd = finite_diff_grad(|v| obj.loss(v).unwrap(), &x, 1e-6).unwrap();
        let g = obj.grad(&x).unwrap();
        for j in 0..3 {
            assert!((fd[j] - g[j]).abs() < 1e-6);
        }
    }

    #[test]
    fn test_grad_diff_full_batch_exact_and_zero_at_equal_points() {
        let obj = LocalObjective::logistic(three_sample(), Regularizer::non_convex(0.1)).unwrap();
        let mut rng = RngStream::new(1, 1);
        let x = [0.1, 0.2, -0.3];
        let y = [1.0, -2.0, 0.5];
        let est = obj.grad_diff_estimator(&x, &y, 3, &mut rng).unwrap();
        let exact = obj.grad(&x).unwrap().sub(&obj.grad(&y).unwrap());
        assert_eq!(est, exact);
        for b in 1..=3 {
            let z = obj.grad_diff_estimator(&x, &x, b, &mut rng).unwrap();
            assert_eq!(z, Vector::zeros(3));
        }
        assert!(obj.grad_diff_estimator(&x, &y, 4, &mut rng).is_err());
        assert!(obj.grad_diff_estimator(&x, &y, 0, &mut rng).is_err());
    }

    #[test]
    fn test_constants_quadratic() {
        let objs = vec![
            LocalObjective::quadratic(Vector::filled(5, 1.0)),
            LocalObjective::quadratic(Vector::filled(5, -2.0)),
        ];
        let c = estimate_constants(&objs).unwrap();
        assert_eq!(c.l, 1.0);
        assert_eq!(c.l_pm, 0.0);
        assert_eq!(c.cal_l_pm, 0.0);
    }

    #[test]
    fn test_constants_two_sample_hand_eigenvalue() {
        // AᵀA = 1 + 4 = 5, L = 5 / (4 · 2)
        let ds = shard(&[(&[(0, 1.0)], 1.0), (&[(0, 2.0)], -1.0)], 1);
        let obj = LocalObjective::logistic(ds, Regularizer::ridge(0.0)).unwrap();
        let c = estimate_constants(&[obj]).unwrap();
        assert!((c.l - 5.0 / 8.0).abs() < 1e-12);
        assert!((c.cal_l_pm - 1.0).abs() < 1e-15);
        assert_eq!(c.mu, 0.0);
    }

    #[test]
    fn test_constants_homogeneous_replication() {
        let ds = three_sample();
        let objs: Vec<_> = (0..13)
            .map(|_| LocalObjective::logistic(ds.clone(), Regularizer::ridge(0.1)).unwrap())
            .collect();
        let c = estimate_constants(&objs).unwrap();
        let single = estimate_constants(&objs[..1]).unwrap();
        assert!((c.l_pm - single.l_workers[0]).abs() < 1e-12);
        assert!((c.l - single.l).abs() < 1e-9 * single.l);
        assert!((c.mu - 0.1).abs() < 1e-15);
    }

    #[test]
    fn test_power_iteration_diagonal() {
        let m = [3.0, 0.0, 0.0, 0.0, 7.0, 0.0, 0.0, 0.0, 1.0];
        assert!((power_iteration(&m, 3, 1e-12, 10_000) - 7.0).abs() < 1e-9);
    }

    #[test]
    fn test_f_star_quadratic_closed_form() {
        let z1 = Vector::from([1.0, -2.0, 0.5]);
        let z2 = Vector::from([3.0, 0.0, -0.5]);
        let objs = vec![LocalObjective::quadratic(z1.clone()), LocalObjective::quadratic(z2.clone())];
        let zbar = Vector::mean(&[z1, z2]).unwrap();
        let est = estimate_f_star(&objs, 1e-20).unwrap();
        assert!(est.converged);
        assert!((est.value + 0.5 * zbar.norm_sq()).abs() < 1e-12);
    }

    #[test]
    fn test_f_star_infinite_tolerance_returns_start_value() {
        let obj = LocalObjective::logistic(three_sample(), Regularizer::ridge(0.1)).unwrap();
        let est = estimate_f_star(std::slice::from_ref(&obj), f64::INFINITY).unwrap();
        assert_eq!(est.iterations, 0);
        assert_eq!(est.value, obj.loss(&[0.0; 3]).unwrap());
    }

    #[test]
    fn test_f_star_two_starts_agree_for_ridge() {
        let obj = LocalObjective::logistic(three_sample(), Regularizer::ridge(0.1)).unwrap();
        let objs = [obj];
        let l = estimate_constants(&objs).unwrap().l;
        let tol = 1e-14;
        let a = estimate_f_star_from(&objs, &Vector::zeros(3), l, tol, F_STAR_MAX_ITERS).unwrap();
        let b = estimate_f_star_from(&objs, &Vector::from([5.0, -5.0, 3.0]), l, tol, F_STAR_MAX_ITERS).unwrap();
        assert!(a.converged && b.converged);
        assert!((a.value - b.value).abs() <= 10.0 * tol);
    }

    #[test]
    fn test_f_star_reports_non_convergence() {
        let obj = LocalObjective::logistic(three_sample(), Regularizer::ridge(0.1)).unwrap();
        let objs = [obj];
        let est = estimate_f_star_from(&objs, &Vector::from([3.0, 3.0, 3.0]), 1.0, 1e-30, 3).unwrap();
        assert!(!est.converged);
    }

    #[test]
    fn test_push_row_validation() {
        let mut ds = LabeledDataset::new(2);
        assert!(ds.push_row(&[2], &[1.0], 1.0).is_err());
        assert!(ds.push_row(&[0], &[1.0], 0.0).is_err());
        assert!(ds.push_row(&[0, 1], &[1.0], 1.0).is_err());
        ds.push_row(&[1], &[1.0], -1.0).unwrap();
        assert_eq!(ds.with_flipped_labels().label(0), 1.0);
    }
}
