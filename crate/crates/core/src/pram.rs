//! Randomized-response channels and invariant post-randomization.
//!
//! Matrix convention: entry `(i, j)` of a [`TransitionMatrix`] is
//! `Pr(output = c_j | input = c_i)`, so rows sum to one and an input
//! distribution `π` (a column vector) maps to the output distribution `Mᵀπ`.
//!
//! Double perturbation of a column: apply an RR channel `Q`, measure the
//! perturbed frequencies `λ̂`, estimate the source distribution by solving
//! `Qᵀπ̂ = λ̂`, then apply the Bayes-posterior channel
//! `Q̃(i, j) = π̂_j Q(j, i) / Σ_k π̂_k Q(k, i)` to the perturbed column.
//! In expectation `Q̃ᵀQᵀπ = π`.

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{marginal_counts, strides_of, DistributionVector, EncodedDataset};
use crate::error::{Error, Result};
use crate::seed::{Seeder, Stage};

const ROW_SUM_TOLERANCE: f64 = 1e-12;

/// Entries of `Q⁻ᵀλ̂` at or above this (but below zero) are treated as
/// solver rounding and zeroed without raising the clamping flag.
const ROUNDING_FLOOR: f64 = -1e-12;

/// Largest compound domain for which the joint-vs-product estimate gap is computed.
pub const GAP_CELL_CAP: usize = 4096;

/// Row-stochastic square matrix stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionMatrix {
    size: usize,
    entries: Vec<f64>,
}

impl TransitionMatrix {
    pub fn new(size: usize, entries: Vec<f64>) -> Result<Self> {
        if size == 0 || entries.len() != size * size {
            return Err(Error::DomainMismatch(format!(
                "{} entries for a {size}x{size} matrix",
                entries.len()
            )));
        }
        if entries.iter().any(|e| !(*e >= 0.0) || !e.is_finite()) {
            return Err(Error::InvalidParameter(
                "transition entries must be finite and non-negative".into(),
            ));
        }
        for (i, row) in entries.chunks(size).enumerate() {
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::InvalidParameter(format!("row {i} sums to {sum}")));
            }
        }
        Ok(Self { size, entries })
    }

    pub fn identity(size: usize) -> Self {
        let mut entries = vec![0.0; size * size];
        for i in 0..size {
            entries[i * size + i] = 1.0;
        }
        Self { size, entries }
    }

    pub fn uniform(size: usize) -> Self {
        Self {
            size,
            entries: vec![1.0 / size as f64; size * size],
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, input: usize, output: usize) -> f64 {
        self.entries[input * self.size + output]
    }

    pub fn row(&self, input: usize) -> &[f64] {
        &self.entries[input * self.size..(input + 1) * self.size]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    /// Output distribution `Mᵀπ` for input distribution `π`.
    pub fn push_forward(&self, input: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.size];
        for (i, &p) in input.iter().enumerate() {
            for (o, &m) in out.iter_mut().zip(self.row(i)) {
                *o += p * m;
            }
        }
        out
    }

    /// `max_i max_{j,j'} M(j, i) / M(j', i)`: the worst-case likelihood
    /// ratio of any output across two inputs.
    pub fn max_column_ratio(&self) -> f64 {
        (0..self.size)
            .map(|col| {
                let column = (0..self.size).map(|r| self.get(r, col));
                let (lo, hi) = column.fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(v), hi.max(v)));
                hi / lo
            })
            .fold(0.0, f64::max)
    }

    fn transpose_entries(&self) -> Vec<f64> {
        let s = self.size;
        let mut t = vec![0.0; s * s];
        for i in 0..s {
            for j in 0..s {
                t[j * s + i] = self.entries[i * s + j];
            }
        }
        t
    }
}

/// Randomized response over `s` categories: keep with probability
/// `e^eps / (s - 1 + e^eps)`, otherwise move to each other category with
/// probability `1 / (s - 1 + e^eps)`.
pub fn rr_matrix(s: usize, eps: f64) -> Result<TransitionMatrix> {
    if s < 2 {
        return Err(Error::InvalidParameter(format!(
            "domain size must be at least 2, got {s}"
        )));
    }
    if !(eps > 0.0) || eps.is_nan() {
        return Err(Error::InvalidParameter(format!("eps must be positive, got {eps}")));
    }
    // Divide through by e^eps so large budgets do not overflow.
    let damp = (-eps).exp();
    let denom = 1.0 + (s - 1) as f64 * damp;
    let keep = 1.0 / denom;
    let other = damp / denom;
    let mut entries = vec![other; s * s];
    for i in 0..s {
        entries[i * s + i] = keep;
    }
    Ok(TransitionMatrix { size: s, entries })
}

/// Samples outputs row by row from a transition matrix.
pub struct ChannelSampler {
    rows: Vec<WeightedIndex<f64>>,
}

impl ChannelSampler {
    pub fn new(m: &TransitionMatrix) -> Self {
        let rows = (0..m.size())
            .map(|i| WeightedIndex::new(m.row(i)).expect("row-stochastic rows have positive mass"))
            .collect();
        Self { rows }
    }

    pub fn size(&self) -> usize {
        self.rows.len()
    }

    pub fn sample<R: Rng + ?Sized>(&self, input: u32, rng: &mut R) -> Result<u32> {
        let row = self.rows.get(input as usize).ok_or(Error::IndexOutOfRange {
            index: input as usize,
            size: self.rows.len(),
        })?;
        Ok(row.sample(rng) as u32)
    }
}

/// Resamples each entry independently from its row of `m`.
pub fn apply_channel<R: Rng + ?Sized>(column: &[u32], m: &TransitionMatrix, rng: &mut R) -> Result<Vec<u32>> {
    if let Some(&bad) = column.iter().find(|&&v| v as usize >= m.size()) {
        return Err(Error::IndexOutOfRange {
            index: bad as usize,
            size: m.size(),
        });
    }
    let sampler = ChannelSampler::new(m);
    column.iter().map(|&v| sampler.sample(v, rng)).collect()
}

/// Gaussian elimination with partial pivoting on a dense `s×s` system.
fn solve_dense(mut a: Vec<f64>, mut b: Vec<f64>, s: usize) -> Result<Vec<f64>> {
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for col in 0..s {
        let pivot = (col..s)
            .max_by(|&x, &y| a[x * s + col].abs().total_cmp(&a[y * s + col].abs()))
            .expect("non-empty range");
        if a[pivot * s + col].abs() <= 1e-12 * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::SingularMatrix);
        }
        if pivot != col {
            for k in 0..s {
                a.swap(pivot * s + k, col * s + k);
            }
            b.swap(pivot, col);
        }
        let p = a[col * s + col];
        for row in col + 1..s {
            let f = a[row * s + col] / p;
            if f == 0.0 {
                continue;
            }
            for k in col..s {
                a[row * s + k] -= f * a[col * s + k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; s];
    for row in (0..s).rev() {
        let tail: f64 = (row + 1..s).map(|k| a[row * s + k] * x[k]).sum();
        x[row] = (b[row] - tail) / a[row * s + row];
    }
    Ok(x)
}

/// Result of inverting a channel on observed frequencies.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    /// Projected estimate on the simplex.
    pub distribution: DistributionVector,
    /// Unconstrained solution of `Qᵀπ = λ̂`.
    pub raw: Vec<f64>,
    /// Whether any negative entry had to be clamped.
    pub clamped: bool,
}

/// Solves `Qᵀπ̂ = λ̂`, clamps negative entries to zero and renormalizes.
pub fn estimate_distribution(lambda_hat: &DistributionVector, q: &TransitionMatrix) -> Result<Estimate> {
    if lambda_hat.len() != q.size() {
        return Err(Error::DomainMismatch(format!(
            "observed distribution has {} cells, channel has {}",
            lambda_hat.len(),
            q.size()
        )));
    }
    let raw = solve_dense(q.transpose_entries(), lambda_hat.probabilities().to_vec(), q.size())?;
    let (projected, clamped) = project_to_simplex(&raw);
    Ok(Estimate {
        distribution: DistributionVector::new(lambda_hat.domain_sizes().to_vec(), projected)?,
        raw,
        clamped,
    })
}

fn project_to_simplex(raw: &[f64]) -> (Vec<f64>, bool) {
    let clamped = raw.iter().any(|&v| v < ROUNDING_FLOOR);
    let mut p: Vec<f64> = raw.iter().map(|&v| v.max(0.0)).collect();
    let total: f64 = p.iter().sum();
    if total > 0.0 {
        p.iter_mut().for_each(|v| *v /= total);
    } else {
        let u = 1.0 / p.len() as f64;
        p.iter_mut().for_each(|v| *v = u);
    }
    (p, clamped)
}

/// Bayes-posterior channel `Q̃(i, j) = Pr(X = c_j | X₁ = c_i)` under prior `π̂`.
pub fn inverse_channel(q: &TransitionMatrix, pi_hat: &DistributionVector) -> Result<TransitionMatrix> {
    let s = q.size();
    if pi_hat.len() != s {
        return Err(Error::DomainMismatch(format!(
            "prior has {} cells, channel has {s}",
            pi_hat.len()
        )));
    }
    let prior = pi_hat.probabilities();
    let mut entries = vec![0.0; s * s];
    for i in 0..s {
        let joint: Vec<f64> = (0..s).map(|j| prior[j] * q.get(j, i)).collect();
        let denom: f64 = joint.iter().sum();
        if !(denom > 0.0) {
            return Err(Error::ZeroDenominator(i));
        }
        for (j, v) in joint.into_iter().enumerate() {
            entries[i * s + j] = v / denom;
        }
    }
    TransitionMatrix::new(s, entries)
}

/// Kronecker product: entry `((i,k),(j,l))` is `a(i,j)·b(k,l)` with compound
/// index `i·|b| + k`, matching the row-major layout of [`DistributionVector`].
pub fn kronecker(a: &TransitionMatrix, b: &TransitionMatrix) -> TransitionMatrix {
    let (r, s) = (a.size(), b.size());
    let n = r * s;
    let mut entries = vec![0.0; n * n];
    for i in 0..r {
        for k in 0..s {
            let row = i * s + k;
            for j in 0..r {
                let aij = a.get(i, j);
                for l in 0..s {
                    entries[row * n + j * s + l] = aij * b.get(k, l);
                }
            }
        }
    }
    TransitionMatrix { size: n, entries }
}

/// Compound channel of independent per-attribute channels, in the given order.
pub fn compound_channel(channels: &[&TransitionMatrix]) -> Option<TransitionMatrix> {
    let (first, rest) = channels.split_first()?;
    Some(rest.iter().fold((*first).clone(), |acc, m| kronecker(&acc, m)))
}

/// Everything fitted for one attribute.
#[derive(Debug, Clone)]
pub struct AttributeChannel {
    pub attribute: usize,
    pub eps: f64,
    pub forward: TransitionMatrix,
    pub lambda_hat: DistributionVector,
    pub estimate: Estimate,
    pub inverse: TransitionMatrix,
}

/// Per-attribute diagnostics written to reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelDiagnostics {
    pub attribute: String,
    pub eps: f64,
    pub lambda_hat: Vec<f64>,
    pub pi_hat: Vec<f64>,
    pub clamped: bool,
}

impl AttributeChannel {
    /// Fits `π̂` and `Q̃` from a column that already went through `forward`.
    pub fn fit(attribute: usize, eps: f64, forward: TransitionMatrix, perturbed: &[u32]) -> Result<Self> {
        let s = forward.size();
        let mut counts = vec![0u64; s];
        for &v in perturbed {
            *counts.get_mut(v as usize).ok_or(Error::IndexOutOfRange {
                index: v as usize,
                size: s,
            })? += 1;
        }
        let lambda_hat = DistributionVector::from_counts(vec![s], &counts)?;
        let estimate = estimate_distribution(&lambda_hat, &forward)?;
        let inverse = inverse_channel(&forward, &estimate.distribution)?;
        Ok(Self {
            attribute,
            eps,
            forward,
            lambda_hat,
            estimate,
            inverse,
        })
    }

    pub fn diagnostics(&self, name: &str) -> ChannelDiagnostics {
        ChannelDiagnostics {
            attribute: name.to_string(),
            eps: self.eps,
            lambda_hat: self.lambda_hat.probabilities().to_vec(),
            pi_hat: self.estimate.distribution.probabilities().to_vec(),
            clamped: self.estimate.clamped,
        }
    }
}

/// Output of double-perturbing one cluster.
#[derive(Debug, Clone)]
pub struct ClusterPerturbation {
    /// `(attribute, published column)` in member order.
    pub columns: Vec<(usize, Vec<u32>)>,
    pub channels: Vec<AttributeChannel>,
    /// Total variation distance between the joint estimate of the cluster
    /// (compound channel inverted on the once-perturbed joint) and the
    /// product of per-attribute estimates. `None` for singletons or when
    /// the compound domain exceeds [`GAP_CELL_CAP`].
    pub joint_product_gap: Option<f64>,
}

impl ClusterPerturbation {
    /// Compound second-perturbation channel `Q̃_1 ⊗ … ⊗ Q̃_m`.
    pub fn compound_inverse(&self) -> Option<TransitionMatrix> {
        compound_channel(&self.channels.iter().map(|c| &c.inverse).collect::<Vec<_>>())
    }
}

/// Double-perturbs every member of a cluster with `budget / |members|` per
/// attribute. Attribute `a` draws from the substream `(Perturbation, a)`.
pub fn pram_cluster(
    data: &EncodedDataset,
    members: &[usize],
    budget: f64,
    seeder: &Seeder,
) -> Result<ClusterPerturbation> {
    if members.is_empty() {
        return Err(Error::InvalidAttributes("cluster has no members".into()));
    }
    if !(budget > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "cluster budget must be positive, got {budget}"
        )));
    }
    let eps = budget / members.len() as f64;
    let results = members
        .par_iter()
        .map(|&a| {
            if a >= data.num_attributes() {
                return Err(Error::InvalidAttributes(format!("attribute {a} out of range")));
            }
            let mut rng = seeder.rng(Stage::Perturbation, a as u64);
            let forward = rr_matrix(data.schema().domain_size(a), eps)?;
            let once = apply_channel(data.column(a), &forward, &mut rng)?;
            let channel = AttributeChannel::fit(a, eps, forward, &once)?;
            let twice = apply_channel(&once, &channel.inverse, &mut rng)?;
            Ok((once, twice, channel))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut once_columns = Vec::with_capacity(results.len());
    let mut columns = Vec::with_capacity(results.len());
    let mut channels = Vec::with_capacity(results.len());
    for ((once, twice, channel), &a) in results.into_iter().zip(members) {
        once_columns.push(once);
        columns.push((a, twice));
        channels.push(channel);
    }
    let joint_product_gap = if members.len() > 1 {
        let once = data.with_columns(
            (0..data.num_attributes())
                .map(|a| match members.iter().position(|&m| m == a) {
                    Some(pos) => std::mem::take(&mut once_columns[pos]),
                    None => vec![0; data.len()],
                })
                .collect(),
        )?;
        joint_product_gap(&once, members, &channels)?
    } else {
        None
    };
    Ok(ClusterPerturbation {
        columns,
        channels,
        joint_product_gap,
    })
}

/// Applies the `s×s` matrix `m` along `axis` of a row-major tensor.
fn apply_along_axis(tensor: &[f64], sizes: &[usize], axis: usize, m: &[f64]) -> Vec<f64> {
    let strides = strides_of(sizes);
    let s = sizes[axis];
    let stride = strides[axis];
    let mut out = vec![0.0; tensor.len()];
    for (cell, slot) in out.iter_mut().enumerate() {
        let j = (cell / stride) % s;
        let base = cell - j * stride;
        *slot = (0..s).map(|i| m[j * s + i] * tensor[base + i * stride]).sum();
    }
    out
}

fn invert_dense(a: &[f64], s: usize) -> Result<Vec<f64>> {
    let mut inv = vec![0.0; s * s];
    for col in 0..s {
        let mut e = vec![0.0; s];
        e[col] = 1.0;
        let x = solve_dense(a.to_vec(), e, s)?;
        for row in 0..s {
            inv[row * s + col] = x[row];
        }
    }
    Ok(inv)
}

/// Joint-vs-product divergence of the per-cluster source estimate.
pub fn joint_product_gap(
    once: &EncodedDataset,
    members: &[usize],
    channels: &[AttributeChannel],
) -> Result<Option<f64>> {
    let sizes: Vec<usize> = members.iter().map(|&a| once.schema().domain_size(a)).collect();
    let cells: usize = sizes.iter().product();
    if members.len() < 2 || cells > GAP_CELL_CAP {
        return Ok(None);
    }
    let counts = marginal_counts(once, members, GAP_CELL_CAP)?;
    let n = once.len() as f64;
    let mut joint: Vec<f64> = counts.iter().map(|&c| c as f64 / n).collect();
    // Solving (Q_1 ⊗ … ⊗ Q_m)ᵀ π = λ factorizes into one solve per axis.
    for (axis, channel) in channels.iter().enumerate() {
        let inv_t = invert_dense(&channel.forward.transpose_entries(), sizes[axis])?;
        joint = apply_along_axis(&joint, &sizes, axis, &inv_t);
    }
    let (joint, _) = project_to_simplex(&joint);
    let strides = strides_of(&sizes);
    let gap = joint
        .iter()
        .enumerate()
        .map(|(cell, &p)| {
            let product: f64 = channels
                .iter()
                .enumerate()
                .map(|(axis, c)| c.estimate.distribution.probabilities()[(cell / strides[axis]) % sizes[axis]])
                .product();
            (p - product).abs()
        })
        .sum::<f64>()
        / 2.0;
    Ok(Some(gap))
}
