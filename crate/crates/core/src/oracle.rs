//! Brute-force reference implementations.
//!
//! Nothing here shares code with the fast paths: least squares goes through a
//! column-pivoted Householder QR of the explicit design, screening refits
//! every candidate model from scratch, and penalized fits are found by
//! exhaustive grid search. These routines are slow and exist to audit the
//! engine.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::{IndexSet, PenaltySpec, ScreeningCriterion};
use crate::penalty::penalty_value;

/// Remaining squared column norm, relative to the original, below which a
/// pivot is declared rank deficient.
const QR_RANK_TOLERANCE: f64 = 1e-10;

/// Ordinary least squares by Householder QR with column pivoting.
/// Returns `(coefficients, residual sum of squares)`.
pub fn dense_ols(x: &DMatrix<f64>, y: &[f64]) -> Result<(Vec<f64>, f64)> {
    let (n, m) = x.shape();
    if y.len() != n {
        return Err(Error::DimensionMismatch("response length".into()));
    }
    let mut qty: Vec<f64> = y.to_vec();
    if m == 0 {
        let rss = qty.iter().map(|v| v * v).sum();
        return Ok((Vec::new(), rss));
    }
    if m > n {
        return Err(Error::RankDeficient((0..m).collect()));
    }
    let mut a = x.clone();
    let mut perm: Vec<usize> = (0..m).collect();
    let orig_norm: Vec<f64> = (0..m).map(|j| a.column(j).norm_squared()).collect();
    for k in 0..m {
        // Pivot: the remaining column with the largest trailing norm.
        let trailing = |a: &DMatrix<f64>, j: usize| -> f64 { (k..n).map(|i| a[(i, j)] * a[(i, j)]).sum() };
        let (best, best_norm) = (k..m)
            .map(|j| (j, trailing(&a, j)))
            .fold((k, -1.0), |acc, c| if c.1 > acc.1 { c } else { acc });
        if best != k {
            a.swap_columns(k, best);
            perm.swap(k, best);
        }
        let orig = orig_norm[perm[k]];
        if !(orig > 0.0 && best_norm >= QR_RANK_TOLERANCE * orig) {
            return Err(Error::RankDeficient(perm[k..].to_vec()));
        }
        // Householder reflector zeroing a[k+1.., k].
        let alpha = -a[(k, k)].signum() * best_norm.sqrt();
        let alpha = if alpha == 0.0 { -best_norm.sqrt() } else { alpha };
        let mut v: Vec<f64> = (k..n).map(|i| a[(i, k)]).collect();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|t| t * t).sum();
        if vnorm2 > 0.0 {
            for j in k..m {
                let s: f64 = (k..n).map(|i| v[i - k] * a[(i, j)]).sum::<f64>() * 2.0 / vnorm2;
                for i in k..n {
                    a[(i, j)] -= s * v[i - k];
                }
            }
            let s: f64 = (k..n).map(|i| v[i - k] * qty[i]).sum::<f64>() * 2.0 / vnorm2;
            for i in k..n {
                qty[i] -= s * v[i - k];
            }
        }
    }
    let mut b = vec![0.0; m];
    for i in (0..m).rev() {
        let s: f64 = (i + 1..m).map(|l| a[(i, l)] * b[l]).sum();
        b[i] = (qty[i] - s) / a[(i, i)];
    }
    let mut coef = vec![0.0; m];
    for (pos, &orig) in perm.iter().enumerate() {
        coef[orig] = b[pos];
    }
    let rss = qty[m..].iter().map(|v| v * v).sum();
    Ok((coef, rss))
}

/// `||Y - H_S Y||^2` by a direct solve on `X_S`.
pub fn dense_rss(x: &DMatrix<f64>, y: &[f64], s: &IndexSet) -> Result<f64> {
    s.check_bounds(x.ncols())?;
    Ok(dense_ols(&x.select_columns(s.as_slice()), y)?.1)
}

/// Last coefficient of the joint OLS fit on `[X_S, X_j]`.
pub fn dense_joint_ols_last_coef(x: &DMatrix<f64>, y: &[f64], s: &IndexSet, j: usize) -> Result<f64> {
    let mut cols = s.as_slice().to_vec();
    cols.push(j);
    let joint = IndexSet::new(cols)?;
    joint.check_bounds(x.ncols())?;
    let (coef, _) = dense_ols(&x.select_columns(joint.as_slice()), y)?;
    Ok(coef[coef.len() - 1])
}

/// Screening by literal evaluation of each criterion: a refit of `S ∪ {i}`
/// for every inactive `i` under Scr2 and Scr3. Same ordering and tie-break as
/// the fast path (best first, lower index on ties).
pub fn brute_screen(
    criterion: ScreeningCriterion,
    x: &DMatrix<f64>,
    y: &[f64],
    s: &IndexSet,
    a: usize,
) -> Result<IndexSet> {
    if a == 0 {
        return Err(Error::InvalidConfig("screen size must be at least 1".into()));
    }
    let p = x.ncols();
    s.check_bounds(p)?;
    let inactive: Vec<usize> = (0..p).filter(|&j| !s.contains(j)).collect();
    // (index, key) with smaller key ranking first.
    let mut keyed: Vec<(usize, f64)> = Vec::new();
    match criterion {
        ScreeningCriterion::Scr1 => {
            let (coef, _) = dense_ols(&x.select_columns(s.as_slice()), y)?;
            let mut resid = y.to_vec();
            for (&c, b) in s.as_slice().iter().zip(&coef) {
                for (r, xv) in resid.iter_mut().zip(x.column(c).iter()) {
                    *r -= b * xv;
                }
            }
            for j in inactive {
                let v: f64 = x.column(j).iter().zip(&resid).map(|(a, b)| a * b).sum();
                keyed.push((j, -v.abs()));
            }
        }
        ScreeningCriterion::Scr2 => {
            for j in inactive {
                let mut cols = s.as_slice().to_vec();
                cols.push(j);
                match dense_ols(&x.select_columns(&cols), y) {
                    Ok((_, rss)) => keyed.push((j, rss)),
                    Err(Error::RankDeficient(_)) => {}
                    Err(e) => return Err(e),
                }
            }
        }
        ScreeningCriterion::Scr3 => {
            for j in inactive {
                match dense_joint_ols_last_coef(x, y, s, j) {
                    Ok(b) => keyed.push((j, -b.abs())),
                    Err(Error::RankDeficient(_)) => {}
                    Err(e) => return Err(e),
                }
            }
        }
    }
    if keyed.is_empty() {
        return Err(Error::NoEligibleColumns);
    }
    keyed.sort_by(|l, r| l.1.total_cmp(&r.1).then(l.0.cmp(&r.0)));
    IndexSet::new(keyed.into_iter().take(a).map(|(j, _)| j).collect())
}

/// Exhaustive minimization of `||z - X b||^2 + n Σ p_λ(|b_j|)` over the grid
/// `{i * step : |i * step| <= radius}` in each of at most two coordinates.
pub fn grid_pls(
    x_cols: &DMatrix<f64>,
    z: &[f64],
    penalty: &PenaltySpec,
    radius: f64,
    step: f64,
) -> Result<(Vec<f64>, f64)> {
    let (n, m) = x_cols.shape();
    if !(m == 1 || m == 2) {
        return Err(Error::DimensionMismatch(format!("grid search supports 1 or 2 columns, got {m}")));
    }
    if z.len() != n {
        return Err(Error::DimensionMismatch("response length".into()));
    }
    if !(step > 0.0 && radius >= 0.0) {
        return Err(Error::InvalidConfig("grid needs step > 0 and radius >= 0".into()));
    }
    let nf = n as f64;
    let zz: f64 = z.iter().map(|v| v * v).sum();
    let c: Vec<f64> = (0..m)
        .map(|j| x_cols.column(j).iter().zip(z).map(|(a, b)| a * b).sum())
        .collect();
    let g = x_cols.transpose() * x_cols;
    let k = (radius / step).floor() as i64;
    let pen: Vec<f64> = (-k..=k).map(|i| nf * penalty_value(penalty, i as f64 * step)).collect();
    let mut best = (vec![0.0; m], f64::INFINITY);
    if m == 1 {
        for (ii, i) in (-k..=k).enumerate() {
            let b = i as f64 * step;
            let f = zz - 2.0 * c[0] * b + g[(0, 0)] * b * b + pen[ii];
            if f < best.1 {
                best = (vec![b], f);
            }
        }
    } else {
        for (ii, i) in (-k..=k).enumerate() {
            let b0 = i as f64 * step;
            let base = zz - 2.0 * c[0] * b0 + g[(0, 0)] * b0 * b0 + pen[ii];
            for (jj, j) in (-k..=k).enumerate() {
                let b1 = j as f64 * step;
                let f = base - 2.0 * c[1] * b1 + 2.0 * g[(0, 1)] * b0 * b1 + g[(1, 1)] * b1 * b1 + pen[jj];
                if f < best.1 {
                    best = (vec![b0, b1], f);
                }
            }
        }
    }
    Ok(best)
}
