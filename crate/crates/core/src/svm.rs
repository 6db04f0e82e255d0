//! Soft-margin support vector machines with an RBF kernel.
//!
//! Binary machines are trained by SMO on the dual problem, picking at each
//! step the pair that violates the optimality conditions the most. Several
//! classes are handled one-vs-one with majority voting. Features are
//! z-scored with statistics from the training rows unless scaling is turned
//! off.
//!
//! The default `gamma = 0.0018` is close to `1 / 531`, the reciprocal of the
//! LBP dimension, but it is a fixed constant rather than derived from the
//! data.

use std::cmp::Ordering;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{compare_labels, label_alphabet};
use crate::numfmt;

pub const DEFAULT_GAMMA: f64 = 0.0018;
pub const DEFAULT_COST: f64 = 1.0;
pub const DEFAULT_TOL: f64 = 1e-3;
pub const MODEL_VERSION: u32 = 1;
/// Training sets up to this many rows get a precomputed Gram matrix.
pub const GRAM_CACHE_ROWS: usize = 4096;

const TAU: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingParams {
    #[serde(serialize_with = "numfmt::ser_vec")]
    pub mean: Vec<f64>,
    /// Sample standard deviation; 0 marks a constant dimension.
    #[serde(serialize_with = "numfmt::ser_vec")]
    pub std: Vec<f64>,
}

impl ScalingParams {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(x.len(), self.dim())?;
        Ok(x.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(&v, (&m, &s))| if s > 0.0 { (v - m) / s } else { 0.0 })
            .collect())
    }
}

fn check_dim(got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::InvalidInput(format!(
            "expected {want} features, got {got}"
        )));
    }
    Ok(())
}

/// Per-dimension mean and sample (n - 1) standard deviation.
pub fn fit_scaling<R: AsRef<[f64]>>(rows: &[R]) -> Result<ScalingParams> {
    let first = rows
        .first()
        .ok_or_else(|| Error::InvalidInput("cannot fit scaling on zero rows".into()))?;
    let d = first.as_ref().len();
    let n = rows.len() as f64;
    let mut mean = vec![0.0; d];
    for r in rows {
        check_dim(r.as_ref().len(), d)?;
        for (m, &v) in mean.iter_mut().zip(r.as_ref()) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut var = vec![0.0; d];
    for r in rows {
        for ((acc, &v), &m) in var.iter_mut().zip(r.as_ref()).zip(&mean) {
            *acc += (v - m) * (v - m);
        }
    }
    let std = var
        .into_iter()
        .map(|v| {
            if rows.len() > 1 {
                (v / (n - 1.0)).sqrt()
            } else {
                0.0
            }
        })
        .collect();
    Ok(ScalingParams { mean, std })
}

pub fn apply_scaling(params: &ScalingParams, x: &[f64]) -> Result<Vec<f64>> {
    params.apply(x)
}

pub fn rbf_kernel(a: &[f64], b: &[f64], gamma: f64) -> Result<f64> {
    check_dim(b.len(), a.len())?;
    if !(gamma > 0.0) {
        return Err(Error::InvalidInput(format!(
            "gamma must be positive, got {gamma}"
        )));
    }
    Ok(rbf(a, b, gamma))
}

#[inline]
fn rbf(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-gamma * d2).exp()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoParams {
    pub gamma: f64,
    pub cost: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SmoParams {
    fn default() -> Self {
        Self {
            gamma: DEFAULT_GAMMA,
            cost: DEFAULT_COST,
            tol: DEFAULT_TOL,
            max_iter: 10_000_000,
        }
    }
}

impl SmoParams {
    fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return Err(Error::InvalidInput(format!(
                "gamma must be positive, got {}",
                self.gamma
            )));
        }
        if !(self.cost > 0.0) || !self.cost.is_finite() {
            return Err(Error::InvalidInput(format!(
                "cost must be positive, got {}",
                self.cost
            )));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidInput(format!(
                "tolerance must be positive, got {}",
                self.tol
            )));
        }
        Ok(())
    }
}

/// Dual solution of one binary problem. `alphas` and `labels` follow the
/// input order: positives first, then negatives.
#[derive(Debug, Clone, PartialEq)]
pub struct BinarySolution {
    pub alphas: Vec<f64>,
    pub labels: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl BinarySolution {
    /// `sum(alpha) - 1/2 sum_ij alpha_i alpha_j y_i y_j K(x_i, x_j)`.
    pub fn dual_objective(&self, points: &[&[f64]], gamma: f64) -> f64 {
        let n = self.alphas.len();
        let mut quad = 0.0;
        for i in 0..n {
            for j in 0..n {
                quad += self.alphas[i]
                    * self.alphas[j]
                    * self.labels[i]
                    * self.labels[j]
                    * rbf(points[i], points[j], gamma);
            }
        }
        self.alphas.iter().sum::<f64>() - 0.5 * quad
    }
}

enum Gram<'a> {
    Cached(Vec<f64>),
    OnDemand(&'a [&'a [f64]], f64),
}

impl Gram<'_> {
    fn row(&self, i: usize, n: usize, out: &mut [f64]) {
        match self {
            Gram::Cached(k) => out.copy_from_slice(&k[i * n..(i + 1) * n]),
            Gram::OnDemand(points, gamma) => {
                for (o, p) in out.iter_mut().zip(points.iter()) {
                    *o = rbf(points[i], p, *gamma);
                }
            }
        }
    }
}

/// Trains one machine separating `pos` (label +1) from `neg` (label -1).
pub fn train_binary<P: AsRef<[f64]>>(
    pos: &[P],
    neg: &[P],
    params: &SmoParams,
) -> Result<BinarySolution> {
    params.validate()?;
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::InvalidInput(format!(
            "binary training needs both classes, got {} positive and {} negative rows",
            pos.len(),
            neg.len()
        )));
    }
    let points: Vec<&[f64]> = pos.iter().chain(neg).map(AsRef::as_ref).collect();
    let d = points[0].len();
    for p in &points {
        check_dim(p.len(), d)?;
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(
                "training rows contain non-finite values".into(),
            ));
        }
    }
    let y: Vec<f64> = (0..points.len())
        .map(|i| if i < pos.len() { 1.0 } else { -1.0 })
        .collect();
    Ok(smo(&points, &y, params))
}

fn smo(points: &[&[f64]], y: &[f64], params: &SmoParams) -> BinarySolution {
    let n = points.len();
    let c = params.cost;
    let gram = if n <= GRAM_CACHE_ROWS {
        let mut k = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let v = rbf(points[i], points[j], params.gamma);
                k[i * n + j] = v;
                k[j * n + i] = v;
            }
        }
        Gram::Cached(k)
    } else {
        Gram::OnDemand(points, params.gamma)
    };
    let mut alpha = vec![0.0; n];
    // gradient of 1/2 a'Qa - e'a with Q_ij = y_i y_j K_ij
    let mut grad = vec![-1.0; n];
    let mut ki = vec![0.0; n];
    let mut kj = vec![0.0; n];
    let in_up = |a: f64, yt: f64| (yt > 0.0 && a < c) || (yt < 0.0 && a > 0.0);
    let in_low = |a: f64, yt: f64| (yt > 0.0 && a > 0.0) || (yt < 0.0 && a < c);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < params.max_iter {
        let mut i = usize::MAX;
        let mut gmax = f64::NEG_INFINITY;
        let mut j = usize::MAX;
        let mut gmin = f64::INFINITY;
        for t in 0..n {
            let v = -y[t] * grad[t];
            if in_up(alpha[t], y[t]) && v > gmax {
                gmax = v;
                i = t;
            }
            if in_low(alpha[t], y[t]) && v < gmin {
                gmin = v;
                j = t;
            }
        }
        if i == usize::MAX || j == usize::MAX || gmax - gmin < params.tol {
            converged = true;
            break;
        }
        iterations += 1;
        gram.row(i, n, &mut ki);
        gram.row(j, n, &mut kj);
        let (old_i, old_j) = (alpha[i], alpha[j]);
        let qij = y[i] * y[j] * ki[j];
        if y[i] != y[j] {
            let mut quad = ki[i] + kj[j] + 2.0 * qij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let mut quad = ki[i] + kj[j] - 2.0 * qij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..n {
            grad[t] += y[t] * (y[i] * ki[t] * di + y[j] * kj[t] * dj);
        }
    }
    BinarySolution {
        bias: -rho(&alpha, y, &grad, c),
        alphas: alpha,
        labels: y.to_vec(),
        iterations,
        converged,
    }
}

/// Offset from free variables when there are any, else the midpoint of the
/// feasible interval.
fn rho(alpha: &[f64], y: &[f64], grad: &[f64], c: f64) -> f64 {
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free, mut sum) = (0usize, 0.0);
    for t in 0..alpha.len() {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            sum += yg;
        }
    }
    if free > 0 {
        sum / free as f64
    } else {
        (ub + lb) / 2.0
    }
}

/// One pairwise machine; `positive` and `negative` index the model's classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryMachine {
    pub positive: usize,
    pub negative: usize,
    #[serde(serialize_with = "numfmt::ser_mat")]
    pub support_vectors: Vec<Vec<f64>>,
    /// `alpha_i * y_i` per support vector.
    #[serde(serialize_with = "numfmt::ser_vec")]
    pub coefficients: Vec<f64>,
    #[serde(serialize_with = "numfmt::ser_f64")]
    pub bias: f64,
}

impl BinaryMachine {
    pub fn decision(&self, x: &[f64], gamma: f64) -> f64 {
        self.support_vectors
            .iter()
            .zip(&self.coefficients)
            .map(|(sv, &c)| c * rbf(sv, x, gamma))
            .sum::<f64>()
            + self.bias
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvmParams {
    pub smo: SmoParams,
    pub scale: bool,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self {
            smo: SmoParams::default(),
            scale: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub version: u32,
    #[serde(serialize_with = "numfmt::ser_f64")]
    pub gamma: f64,
    #[serde(serialize_with = "numfmt::ser_f64")]
    pub cost: f64,
    pub classes: Vec<String>,
    pub dim: usize,
    pub scaling: Option<ScalingParams>,
    pub machines: Vec<BinaryMachine>,
}

/// Trains one machine per unordered pair of classes.
///
/// Rows are put in a canonical order (by label, then by feature values)
/// and shuffled by `seed` before training, so the model does not depend on
/// the order of the input rows.
pub fn train_multiclass<R, S>(
    rows: &[R],
    labels: &[S],
    params: &SvmParams,
    seed: u64,
) -> Result<SvmModel>
where
    R: AsRef<[f64]> + Sync,
    S: AsRef<str>,
{
    params.smo.validate()?;
    if rows.len() != labels.len() {
        return Err(Error::InvalidInput(format!(
            "{} rows but {} labels",
            rows.len(),
            labels.len()
        )));
    }
    let classes = label_alphabet(labels);
    if classes.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "training needs at least 2 classes, found {}",
            classes.len()
        )));
    }
    let dim = rows[0].as_ref().len();
    for r in rows {
        check_dim(r.as_ref().len(), dim)?;
    }
    let class_of: Vec<usize> = labels
        .iter()
        .map(|l| {
            classes
                .iter()
                .position(|c| c == l.as_ref())
                .expect("label in alphabet")
        })
        .collect();
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.sort_by(|&a, &b| {
        class_of[a].cmp(&class_of[b]).then_with(|| {
            rows[a]
                .as_ref()
                .iter()
                .zip(rows[b].as_ref())
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(Ordering::Equal)
        })
    });
    let canonical: Vec<&[f64]> = order.iter().map(|&i| rows[i].as_ref()).collect();
    let scaling = if params.scale {
        Some(fit_scaling(&canonical)?)
    } else {
        None
    };
    let scaled: Vec<Vec<f64>> = match &scaling {
        Some(s) => rows
            .iter()
            .map(|r| s.apply(r.as_ref()))
            .collect::<Result<_>>()?,
        None => rows.iter().map(|r| r.as_ref().to_vec()).collect(),
    };
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let k = classes.len();
    let pairs: Vec<(usize, usize)> = (0..k)
        .flat_map(|a| (a + 1..k).map(move |b| (a, b)))
        .collect();
    let machines = pairs
        .par_iter()
        .map(|&(a, b)| {
            let pos: Vec<&[f64]> = order
                .iter()
                .filter(|&&i| class_of[i] == a)
                .map(|&i| &scaled[i][..])
                .collect();
            let neg: Vec<&[f64]> = order
                .iter()
                .filter(|&&i| class_of[i] == b)
                .map(|&i| &scaled[i][..])
                .collect();
            let sol = train_binary(&pos, &neg, &params.smo)?;
            if !sol.converged {
                log::warn!(
                    "machine {} vs {} stopped after {} iterations without converging",
                    classes[a],
                    classes[b],
                    sol.iterations
                );
            }
            let mut support_vectors = Vec::new();
            let mut coefficients = Vec::new();
            for (t, p) in pos.iter().chain(&neg).enumerate() {
                if sol.alphas[t] > 0.0 {
                    support_vectors.push(p.to_vec());
                    coefficients.push(sol.alphas[t] * sol.labels[t]);
                }
            }
            Ok(BinaryMachine {
                positive: a,
                negative: b,
                support_vectors,
                coefficients,
                bias: sol.bias,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SvmModel {
        version: MODEL_VERSION,
        gamma: params.smo.gamma,
        cost: params.smo.cost,
        classes,
        dim,
        scaling,
        machines,
    })
}

impl SvmModel {
    fn prepare(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(x.len(), self.dim)?;
        match &self.scaling {
            Some(s) => s.apply(x),
            None => Ok(x.to_vec()),
        }
    }

    /// Decision value of every pairwise machine, in `machines` order.
    pub fn decision_values(&self, x: &[f64]) -> Result<Vec<f64>> {
        let z = self.prepare(x)?;
        Ok(self
            .machines
            .iter()
            .map(|m| m.decision(&z, self.gamma))
            .collect())
    }

    /// Index into `classes`. Each machine votes for its positive class when
    /// its decision is positive. Ties go to the class with the largest sum
    /// of |decision| over the votes it won, then to the earlier class.
    pub fn predict_index(&self, x: &[f64]) -> Result<usize> {
        let decisions = self.decision_values(x)?;
        let k = self.classes.len();
        let mut votes = vec![0usize; k];
        let mut strength = vec![0.0f64; k];
        for (m, &d) in self.machines.iter().zip(&decisions) {
            let winner = if d > 0.0 { m.positive } else { m.negative };
            votes[winner] += 1;
            strength[winner] += d.abs();
        }
        let mut best = 0;
        for c in 1..k {
            if votes[c] > votes[best] || (votes[c] == votes[best] && strength[c] > strength[best]) {
                best = c;
            }
        }
        Ok(best)
    }

    pub fn predict(&self, x: &[f64]) -> Result<&str> {
        Ok(&self.classes[self.predict_index(x)?])
    }

    pub fn predict_batch<R: AsRef<[f64]> + Sync>(&self, rows: &[R]) -> Result<Vec<String>> {
        rows.par_iter()
            .map(|r| self.predict(r.as_ref()).map(str::to_string))
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: SvmModel = serde_json::from_str(text)?;
        model.validate()?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()? + "\n").map_err(|e| Error::file(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        Self::from_json(&text)
    }

    fn validate(&self) -> Result<()> {
        if self.version != MODEL_VERSION {
            return Err(Error::InvalidInput(format!(
                "unsupported model version {} (expected {MODEL_VERSION})",
                self.version
            )));
        }
        if !(self.gamma > 0.0) || !(self.cost > 0.0) {
            return Err(Error::InvalidInput(
                "model gamma and cost must be positive".into(),
            ));
        }
        let k = self.classes.len();
        if k < 2 || self.machines.len() != k * (k - 1) / 2 {
            return Err(Error::InvalidInput(format!(
                "{} machines do not match {k} classes",
                self.machines.len()
            )));
        }
        if self
            .classes
            .windows(2)
            .any(|w| compare_labels(&w[0], &w[1]) != Ordering::Less)
        {
            return Err(Error::InvalidInput(
                "model classes are not in canonical order".into(),
            ));
        }
        if let Some(s) = &self.scaling {
            check_dim(s.mean.len(), self.dim)?;
            check_dim(s.std.len(), self.dim)?;
        }
        for m in &self.machines {
            if m.positive >= k || m.negative >= k || m.support_vectors.len() != m.coefficients.len()
            {
                return Err(Error::InvalidInput("malformed pairwise machine".into()));
            }
            for sv in &m.support_vectors {
                check_dim(sv.len(), self.dim)?;
            }
        }
        Ok(())
    }
}
