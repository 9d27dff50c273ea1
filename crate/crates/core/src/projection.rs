//! Incremental least-squares engine for an active column set `S`.
//!
//! The state keeps the upper-triangular Cholesky factor `R` of `X_S^T X_S`,
//! the residual `M_S Y` and its squared norm. Every query costs `O(n |S|)`;
//! the `n x n` projection `M_S` is never formed.
//!
//! States are persistent: [`ActiveSetState::extend`] and
//! [`ActiveSetState::shrink_to`] return new states and leave the receiver
//! untouched, so a frozen state can be scanned from many threads.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::model::{Dataset, IndexSet};

/// A column is treated as collinear with the active set when its projected
/// squared norm falls below this fraction of its raw squared norm.
pub const RANK_TOLERANCE: f64 = 1e-10;

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone)]
pub struct ActiveSetState<'a> {
    data: &'a Dataset,
    active: IndexSet,
    /// Columns of the upper-triangular factor; `r_cols[j]` has length `j + 1`.
    r_cols: Vec<Vec<f64>>,
    residual: Vec<f64>,
    coefficients: Vec<f64>,
    rss: f64,
}

impl<'a> ActiveSetState<'a> {
    /// Empty model: `M_∅ = I`, so the residual is `Y` itself.
    pub fn new(data: &'a Dataset) -> Self {
        let residual = data.y_slice().to_vec();
        let rss = dot(&residual, &residual);
        Self {
            data,
            active: IndexSet::empty(),
            r_cols: Vec::new(),
            residual,
            coefficients: Vec::new(),
            rss,
        }
    }

    /// State for the model `active`, factorized from scratch in the given order.
    pub fn for_model(data: &'a Dataset, active: &IndexSet) -> Result<Self> {
        Self::new(data).extend(active)
    }

    pub fn dataset(&self) -> &'a Dataset {
        self.data
    }

    pub fn active(&self) -> &IndexSet {
        &self.active
    }

    pub fn residual(&self) -> &[f64] {
        &self.residual
    }

    pub fn rss(&self) -> f64 {
        self.rss
    }

    /// OLS coefficients of `Y` on `X_S`, aligned with [`Self::active`].
    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    /// Dense copy of the Cholesky factor `R` with `R^T R = X_S^T X_S`.
    pub fn factor(&self) -> DMatrix<f64> {
        let k = self.r_cols.len();
        DMatrix::from_fn(k, k, |i, j| if i <= j { self.r_cols[j][i] } else { 0.0 })
    }

    fn check_inactive(&self, j: usize) -> Result<()> {
        if j >= self.data.p() {
            return Err(Error::InvalidIndexSet(format!(
                "index {j} out of range for p = {}",
                self.data.p()
            )));
        }
        if self.active.contains(j) {
            return Err(Error::IndexActive(j));
        }
        Ok(())
    }

    /// Solves `R^T w = g` by forward substitution.
    fn solve_rt(&self, g: &mut [f64]) {
        for i in 0..g.len() {
            let col = &self.r_cols[i];
            let s: f64 = (0..i).map(|l| col[l] * g[l]).sum();
            g[i] = (g[i] - s) / col[i];
        }
    }

    /// Solves `R b = v` by back substitution.
    fn solve_r(&self, v: &mut [f64]) {
        let k = v.len();
        for i in (0..k).rev() {
            let s: f64 = (i + 1..k).map(|l| self.r_cols[l][i] * v[l]).sum();
            v[i] = (v[i] - s) / self.r_cols[i][i];
        }
    }

    fn cross(&self, j: usize) -> Vec<f64> {
        let xj = self.data.col(j);
        self.active.iter().map(|s| dot(self.data.col(s), xj)).collect()
    }

    /// `R^{-T} X_S^T X_j`.
    fn whitened_cross(&self, j: usize) -> Vec<f64> {
        let mut w = self.cross(j);
        self.solve_rt(&mut w);
        w
    }

    /// Least-squares coefficients of `v` on `X_S`, with one refinement step.
    fn fit(&self, v: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let k = self.active.len();
        if k == 0 {
            return (Vec::new(), v.to_vec());
        }
        let cols: Vec<&[f64]> = self.active.iter().map(|s| self.data.col(s)).collect();
        let normal_solve = |rhs: &[f64]| {
            let mut g: Vec<f64> = cols.iter().map(|c| dot(c, rhs)).collect();
            self.solve_rt(&mut g);
            self.solve_r(&mut g);
            g
        };
        let residual_of = |b: &[f64]| {
            let mut r = v.to_vec();
            for (c, bi) in cols.iter().zip(b) {
                for (ri, ci) in r.iter_mut().zip(c.iter()) {
                    *ri -= bi * ci;
                }
            }
            r
        };
        let mut b = normal_solve(v);
        let r = residual_of(&b);
        let delta = normal_solve(&r);
        for (bi, di) in b.iter_mut().zip(&delta) {
            *bi += di;
        }
        let r = residual_of(&b);
        (b, r)
    }

    /// `M_S v` for an arbitrary vector of length n.
    pub fn project_out(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.data.n() {
            return Err(Error::DimensionMismatch(format!(
                "vector of length {} for n = {}",
                v.len(),
                self.data.n()
            )));
        }
        Ok(self.fit(v).1)
    }

    /// Signed `X_j^T M_S Y`.
    pub fn marginal_stat(&self, j: usize) -> Result<f64> {
        self.check_inactive(j)?;
        Ok(dot(self.data.col(j), &self.residual))
    }

    /// `X_j^T M_S X_j = ||X_j||^2 - ||R^{-T} X_S^T X_j||^2`, clamped at zero.
    pub fn projected_col_norm_sq(&self, j: usize) -> Result<f64> {
        self.check_inactive(j)?;
        Ok(self.projected_norm_unchecked(j))
    }

    fn projected_norm_unchecked(&self, j: usize) -> f64 {
        let xj = self.data.col(j);
        let w = self.whitened_cross(j);
        (dot(xj, xj) - dot(&w, &w)).max(0.0)
    }

    /// Whether column j passes the rank guard against the active set.
    pub fn is_eligible(&self, j: usize) -> Result<bool> {
        self.check_inactive(j)?;
        Ok(self.guarded_norm(j).is_some())
    }

    fn guarded_norm(&self, j: usize) -> Option<f64> {
        let xj = self.data.col(j);
        let raw = dot(xj, xj);
        let pn = self.projected_norm_unchecked(j);
        (raw > 0.0 && pn >= RANK_TOLERANCE * raw).then_some(pn)
    }

    /// `(marginal, projected norm)` for an inactive column that passes the rank
    /// guard.
    pub fn guarded_stats(&self, j: usize) -> Result<(f64, f64)> {
        self.check_inactive(j)?;
        let pn = self.guarded_norm(j).ok_or(Error::NearCollinear(j))?;
        Ok((dot(self.data.col(j), &self.residual), pn))
    }

    /// Exact RSS reduction from adding column j:
    /// `(X_j^T M_S Y)^2 / X_j^T M_S X_j`.
    pub fn rss_delta_single(&self, j: usize) -> Result<f64> {
        let (m, pn) = self.guarded_stats(j)?;
        Ok(m * m / pn)
    }

    /// Coefficient of column j in the joint OLS fit on `[X_S, X_j]`:
    /// `X_j^T M_S Y / X_j^T M_S X_j`.
    pub fn beta_hat_last(&self, j: usize) -> Result<f64> {
        let (m, pn) = self.guarded_stats(j)?;
        Ok(m / pn)
    }

    /// State for `S ∪ add`. Columns are appended to the factor in the order
    /// given; on failure every column whose pivot fails the rank guard is
    /// named and the receiver is unchanged.
    pub fn extend(&self, add: &IndexSet) -> Result<Self> {
        add.check_bounds(self.data.p())?;
        if !self.active.is_disjoint(add) {
            let j = add.iter().find(|&j| self.active.contains(j)).unwrap_or_default();
            return Err(Error::IndexActive(j));
        }
        if add.is_empty() {
            return Ok(self.clone());
        }
        let mut next = self.clone();
        let mut rejected = Vec::new();
        for j in add.iter() {
            let xj = self.data.col(j);
            let raw = dot(xj, xj);
            let w = next.whitened_cross(j);
            let pivot_sq = raw - dot(&w, &w);
            if !(raw > 0.0 && pivot_sq >= RANK_TOLERANCE * raw) {
                rejected.push(j);
                continue;
            }
            let mut col = w;
            col.push(pivot_sq.sqrt());
            next.r_cols.push(col);
            next.active = next.active.union(&IndexSet(vec![j]));
        }
        if !rejected.is_empty() {
            return Err(Error::RankDeficient(rejected));
        }
        let (b, r) = next.fit(self.data.y_slice());
        next.rss = dot(&r, &r);
        next.coefficients = b;
        next.residual = r;
        Ok(next)
    }

    /// State for a sub-model, refactorized from scratch in the order of `keep`.
    pub fn shrink_to(&self, keep: &IndexSet) -> Result<Self> {
        if !keep.is_subset_of(&self.active) {
            return Err(Error::NotSubset);
        }
        Self::for_model(self.data, keep)
    }

    /// Returns `(lhs, rhs)` with `lhs = ||M_S Y||^2 - ||M_{S∪A} Y||^2` and
    /// `rhs = Σ_{i∈A} (X_i^T M_S Y)^2 / λ_max(X_A^T M_S X_A)`; `lhs >= rhs`.
    pub fn rss_lower_bound_check(&self, add: &IndexSet) -> Result<(f64, f64)> {
        let extended = self.extend(add)?;
        let lhs = self.rss - extended.rss;
        if add.is_empty() {
            return Ok((lhs, 0.0));
        }
        let idx = add.as_slice();
        let whitened: Vec<Vec<f64>> = idx.iter().map(|&j| self.whitened_cross(j)).collect();
        let m = idx.len();
        let gram = DMatrix::from_fn(m, m, |a, b| {
            dot(self.data.col(idx[a]), self.data.col(idx[b])) - dot(&whitened[a], &whitened[b])
        });
        let lambda_max = SymmetricEigen::new(gram)
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        let numer: f64 = idx
            .iter()
            .map(|&j| dot(self.data.col(j), &self.residual).powi(2))
            .sum();
        Ok((lhs, numer / lambda_max))
    }
}
