//! Group summary vectors and counterfactual conditioning targets.
//!
//! Each group is summarized by an m-dimensional vector built from
//! training-split ratings only: either the arithmetic mean of the group's
//! rating columns, or the unit-norm first principal component of the
//! group's item-by-item covariance (users as samples, items as variables),
//! found by power iteration without materializing the covariance.

use crate::data::{DatasetSplit, GroupAssignment, InteractionMatrix};
use crate::error::CoreError;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupVectorMethod {
    MeanPool,
    Pca,
}

impl GroupVectorMethod {
    pub fn name(&self) -> &'static str {
        match self {
            GroupVectorMethod::MeanPool => "mean_pool",
            GroupVectorMethod::Pca => "pca",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "mean_pool" => Ok(GroupVectorMethod::MeanPool),
            "pca" => Ok(GroupVectorMethod::Pca),
            other => Err(CoreError::InvalidArgument(format!(
                "unknown group vector method '{other}'"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GroupVectors {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub method: GroupVectorMethod,
    /// Set when the corresponding group had a degenerate spectrum and the
    /// canonical fallback vector was returned.
    pub degenerate_a: bool,
    pub degenerate_b: bool,
}

/// Per-user conditioning targets: group-A users get vector b, group-B users
/// get vector a.
#[derive(Debug, Clone)]
pub struct CounterfactualTargets {
    /// s label per user column (0 = group A, 1 = group B).
    pub labels: Vec<u8>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl CounterfactualTargets {
    /// Build directly from per-column labels, e.g. when loading a dataset
    /// dump plus checkpointed group vectors.
    pub fn from_labels(labels: Vec<u8>, vectors: &GroupVectors) -> Self {
        CounterfactualTargets {
            labels,
            a: vectors.a.clone(),
            b: vectors.b.clone(),
        }
    }

    /// Column j of the target matrix G.
    pub fn column(&self, user: usize) -> &[f64] {
        if self.labels[user] == 0 {
            &self.b
        } else {
            &self.a
        }
    }

    pub fn n_users(&self) -> usize {
        self.labels.len()
    }
}

/// Train-masked rating columns of one group.
fn group_columns(
    matrix: &InteractionMatrix,
    split: &DatasetSplit,
    labels: &[u8],
    group: u8,
) -> Vec<Vec<f64>> {
    let m = matrix.n_items;
    let mut cols = Vec::new();
    for (user, &s) in labels.iter().enumerate() {
        if s != group {
            continue;
        }
        let values = matrix.user_column(user);
        let train = split.train_col(user);
        let col: Vec<f64> = (0..m)
            .map(|i| if train[i] == 1 { values[i] } else { 0.0 })
            .collect();
        cols.push(col);
    }
    cols
}

/// Arithmetic mean of the group's train-masked rating columns.
pub fn mean_pool(
    matrix: &InteractionMatrix,
    split: &DatasetSplit,
    assignment: &GroupAssignment,
) -> Result<GroupVectors> {
    let labels = assignment.column_labels(matrix)?;
    let a = mean_of_group(matrix, split, &labels, 0)?;
    let b = mean_of_group(matrix, split, &labels, 1)?;
    Ok(GroupVectors {
        a,
        b,
        method: GroupVectorMethod::MeanPool,
        degenerate_a: false,
        degenerate_b: false,
    })
}

fn mean_of_group(
    matrix: &InteractionMatrix,
    split: &DatasetSplit,
    labels: &[u8],
    group: u8,
) -> Result<Vec<f64>> {
    let cols = group_columns(matrix, split, labels, group);
    if cols.is_empty() {
        return Err(CoreError::Groups(format!(
            "group {} has no users in the matrix",
            if group == 0 { "A" } else { "B" }
        )));
    }
    let m = matrix.n_items;
    let mut mean = vec![0.0; m];
    for col in &cols {
        for (acc, v) in mean.iter_mut().zip(col) {
            *acc += v;
        }
    }
    let inv = 1.0 / cols.len() as f64;
    for v in mean.iter_mut() {
        *v *= inv;
    }
    Ok(mean)
}

/// First principal component of each group's covariance, by power iteration.
///
/// The covariance matvec is computed through the thin factors
/// C v = X~ (X~^T v) / (n_g - 1), where X~ is the row-centered group block,
/// so the m x m covariance is never formed. Groups whose top two eigenvalues
/// coincide (relative gap <= 1e-10) get the canonical basis vector e1 and a
/// degeneracy flag.
pub fn pca_first_pc(
    matrix: &InteractionMatrix,
    split: &DatasetSplit,
    assignment: &GroupAssignment,
    tol: f64,
    max_iter: usize,
) -> Result<GroupVectors> {
    let labels = assignment.column_labels(matrix)?;
    let (a, degenerate_a) = pca_of_group(matrix, split, &labels, 0, tol, max_iter)?;
    let (b, degenerate_b) = pca_of_group(matrix, split, &labels, 1, tol, max_iter)?;
    Ok(GroupVectors {
        a,
        b,
        method: GroupVectorMethod::Pca,
        degenerate_a,
        degenerate_b,
    })
}

/// Row-centered covariance operator over thin factors.
struct CovOperator {
    cols: Vec<Vec<f64>>,
    row_mean: Vec<f64>,
    m: usize,
}

impl CovOperator {
    fn new(cols: Vec<Vec<f64>>, m: usize) -> Self {
        let mut row_mean = vec![0.0; m];
        for col in &cols {
            for (acc, v) in row_mean.iter_mut().zip(col) {
                *acc += v;
            }
        }
        let inv = 1.0 / cols.len() as f64;
        for v in row_mean.iter_mut() {
            *v *= inv;
        }
        CovOperator { cols, row_mean, m }
    }

    /// C v via two thin products.
    fn matvec(&self, v: &[f64]) -> Vec<f64> {
        let n = self.cols.len();
        let rm_dot: f64 = self.row_mean.iter().zip(v).map(|(a, b)| a * b).sum();
        // w_j = (col_j - row_mean) . v
        let w: Vec<f64> = self
            .cols
            .iter()
            .map(|col| col.iter().zip(v).map(|(a, b)| a * b).sum::<f64>() - rm_dot)
            .collect();
        // out = sum_j w_j (col_j - row_mean) / (n - 1)
        let mut out = vec![0.0; self.m];
        let mut w_sum = 0.0;
        for (col, &wj) in self.cols.iter().zip(&w) {
            w_sum += wj;
            for (o, c) in out.iter_mut().zip(col) {
                *o += wj * c;
            }
        }
        let denom = (n - 1) as f64;
        for (o, rm) in out.iter_mut().zip(&self.row_mean) {
            *o = (*o - w_sum * rm) / denom;
        }
        out
    }
}

fn normalize(v: &mut [f64]) -> f64 {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
    norm
}

fn canonical_e1(m: usize) -> Vec<f64> {
    let mut v = vec![0.0; m];
    v[0] = 1.0;
    v
}

fn apply_sign_convention(v: &mut [f64]) {
    if let Some(&first) = v.iter().find(|x| x.abs() > 1e-12) {
        if first < 0.0 {
            for x in v.iter_mut() {
                *x = -*x;
            }
        }
    }
}

/// Power iteration for the dominant eigenpair of a PSD operator.
/// Returns (eigenvector, eigenvalue). Errors when the successive-vector
/// distance stays above `tol` for `max_iter` iterations.
fn power_iteration(
    op: &CovOperator,
    start: Vec<f64>,
    tol: f64,
    max_iter: usize,
    deflate: Option<(&[f64], f64)>,
) -> Result<(Vec<f64>, f64)> {
    let mut v = start;
    normalize(&mut v);
    let mut residual = f64::INFINITY;
    for _ in 0..max_iter {
        let mut w = op.matvec(&v);
        if let Some((u, lambda)) = deflate {
            // (C - lambda u u^T) v = C v - lambda (u . v) u
            let coef: f64 = u.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>() * lambda;
            for (wi, ui) in w.iter_mut().zip(u) {
                *wi -= coef * ui;
            }
        }
        let norm = normalize(&mut w);
        if norm == 0.0 {
            // Operator annihilates the iterate: zero spectrum direction.
            return Ok((v, 0.0));
        }
        residual = w
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        v = w;
        if residual <= tol {
            let cv = {
                let mut cv = op.matvec(&v);
                if let Some((u, lambda)) = deflate {
                    let coef: f64 = u.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>() * lambda;
                    for (ci, ui) in cv.iter_mut().zip(u) {
                        *ci -= coef * ui;
                    }
                }
                cv
            };
            let lambda: f64 = v.iter().zip(&cv).map(|(a, b)| a * b).sum();
            return Ok((v, lambda));
        }
    }
    Err(CoreError::NoConvergence { max_iter, residual })
}

fn pca_of_group(
    matrix: &InteractionMatrix,
    split: &DatasetSplit,
    labels: &[u8],
    group: u8,
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, bool)> {
    let cols = group_columns(matrix, split, labels, group);
    if cols.len() < 2 {
        return Err(CoreError::Groups(format!(
            "PCA needs at least 2 users in group {}, found {}",
            if group == 0 { "A" } else { "B" },
            cols.len()
        )));
    }
    let m = matrix.n_items;
    let op = CovOperator::new(cols, m);

    // Fixed internal seed: the group vector must not depend on the run seed.
    let start = crate::rng::normal_vec(&mut crate::rng::stream(0x9c0ffee, "pca-init", 0), m);
    let (mut v1, lambda1) = power_iteration(&op, start, tol, max_iter, None)?;

    if lambda1 <= f64::MIN_POSITIVE {
        // Zero covariance: every unit vector is an eigenvector.
        return Ok((canonical_e1(m), true));
    }

    // Estimate the second eigenvalue on the deflated operator to detect a
    // degenerate leading eigenspace. Convergence is not required here; the
    // Rayleigh quotient after a bounded number of iterations is enough for
    // the gap test.
    let start2 = crate::rng::normal_vec(&mut crate::rng::stream(0x9c0ffee, "pca-init", 1), m);
    let lambda2 = match power_iteration(&op, start2, tol, max_iter.min(500), Some((&v1, lambda1))) {
        Ok((_, l2)) => l2,
        Err(CoreError::NoConvergence { .. }) => {
            // Use the non-converged Rayleigh estimate: rerun briefly.
            let mut v = crate::rng::normal_vec(&mut crate::rng::stream(0x9c0ffee, "pca-init", 2), m);
            normalize(&mut v);
            for _ in 0..200 {
                let mut w = op.matvec(&v);
                let coef: f64 = v1.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>() * lambda1;
                for (wi, ui) in w.iter_mut().zip(&v1) {
                    *wi -= coef * ui;
                }
                if normalize(&mut w) == 0.0 {
                    break;
                }
                v = w;
            }
            let cv = op.matvec(&v);
            let coef: f64 = v1.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>() * lambda1;
            v.iter()
                .zip(&cv)
                .map(|(a, b)| a * b)
                .sum::<f64>()
                - coef * v1.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>()
        }
        Err(e) => return Err(e),
    };

    if (lambda1 - lambda2).abs() / lambda1 <= 1e-10 {
        return Ok((canonical_e1(m), true));
    }

    apply_sign_convention(&mut v1);
    Ok((v1, false))
}

/// Build the counterfactual target assignment: column j of G is b when user
/// j is in group A, and a when user j is in group B.
pub fn counterfactual_targets(
    matrix: &InteractionMatrix,
    assignment: &GroupAssignment,
    vectors: &GroupVectors,
) -> Result<CounterfactualTargets> {
    if vectors.a.len() != matrix.n_items || vectors.b.len() != matrix.n_items {
        return Err(CoreError::DimensionMismatch {
            context: "counterfactual_targets".to_string(),
            expected: matrix.n_items,
            actual: vectors.a.len(),
        });
    }
    let labels = assignment.column_labels(matrix)?;
    Ok(CounterfactualTargets {
        labels,
        a: vectors.a.clone(),
        b: vectors.b.clone(),
    })
}
