//! LASSO and SCAD penalties and the penalized least-squares solver.
//!
//! The objective is `||z - X beta||^2 + n * Σ_j p_λ(|beta_j|)`, with the
//! penalty multiplied by the sample size and no `1/2` on the loss. A
//! coordinate update therefore soft-thresholds `X_j^T r` at `n * λ / 2`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{IndexSet, PenaltyKind, PenaltySpec};
use crate::projection::dot;

/// `λ |θ|`.
pub fn lasso_penalty(theta: f64, lambda: f64) -> f64 {
    lambda * theta.abs()
}

/// SCAD derivative for `θ >= 0`: `λ` up to `λ`, then `(aλ - θ)_+ / (a - 1)`.
pub fn scad_derivative(theta: f64, lambda: f64, a: f64) -> f64 {
    if theta <= lambda {
        lambda
    } else {
        (a * lambda - theta).max(0.0) / (a - 1.0)
    }
}

/// SCAD penalty for `θ >= 0`, the antiderivative of [`scad_derivative`] with
/// `p(0) = 0`.
pub fn scad_penalty(theta: f64, lambda: f64, a: f64) -> f64 {
    if theta <= lambda {
        lambda * theta
    } else if theta <= a * lambda {
        (2.0 * a * lambda * theta - theta * theta - lambda * lambda) / (2.0 * (a - 1.0))
    } else {
        lambda * lambda * (a + 1.0) / 2.0
    }
}

/// `p_λ(|θ|)` for the configured penalty.
pub fn penalty_value(spec: &PenaltySpec, theta: f64) -> f64 {
    match spec.kind {
        PenaltyKind::Lasso => lasso_penalty(theta, spec.lambda),
        PenaltyKind::Scad => scad_penalty(theta.abs(), spec.lambda, spec.scad_a),
    }
}

/// `p'_λ(|θ|)`.
pub fn penalty_derivative(spec: &PenaltySpec, theta: f64) -> f64 {
    match spec.kind {
        PenaltyKind::Lasso => spec.lambda,
        PenaltyKind::Scad => scad_derivative(theta.abs(), spec.lambda, spec.scad_a),
    }
}

/// `||z - X beta||^2 + n Σ p_λ(|beta_j|)`.
pub fn objective_value(x: &DMatrix<f64>, z: &[f64], beta: &[f64], penalty: &PenaltySpec) -> Result<f64> {
    let (n, m) = x.shape();
    if z.len() != n || beta.len() != m {
        return Err(Error::DimensionMismatch(format!(
            "x is {n}x{m}, z has {} entries, beta has {}",
            z.len(),
            beta.len()
        )));
    }
    let r = residual(x, z, beta);
    Ok(objective_from_residual(&r, beta, penalty))
}

fn residual(x: &DMatrix<f64>, z: &[f64], beta: &[f64]) -> Vec<f64> {
    let n = z.len();
    let mut r = z.to_vec();
    for (j, &b) in beta.iter().enumerate() {
        if b != 0.0 {
            let col = &x.as_slice()[j * n..(j + 1) * n];
            for (ri, ci) in r.iter_mut().zip(col) {
                *ri -= b * ci;
            }
        }
    }
    r
}

fn objective_from_residual(r: &[f64], beta: &[f64], penalty: &PenaltySpec) -> f64 {
    let n = r.len() as f64;
    dot(r, r) + n * beta.iter().map(|&b| penalty_value(penalty, b)).sum::<f64>()
}

/// Largest violation of the LASSO optimality conditions
/// `|X_j^T r| <= nλ/2` (zero coefficients) and `X_j^T r = (nλ/2) sign(beta_j)`.
pub fn lasso_kkt_violation(x: &DMatrix<f64>, z: &[f64], beta: &[f64], lambda: f64) -> f64 {
    let n = z.len();
    let r = residual(x, z, beta);
    let half = n as f64 * lambda / 2.0;
    (0..beta.len())
        .map(|j| {
            let g = dot(&x.as_slice()[j * n..(j + 1) * n], &r);
            if beta[j] == 0.0 {
                (g.abs() - half).max(0.0)
            } else {
                (g - half * beta[j].signum()).abs()
            }
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Relative coordinate-change tolerance.
    pub tol: f64,
    pub max_sweeps: usize,
    pub max_lla_iters: usize,
    /// Coefficients smaller than this in magnitude are set to zero.
    pub zero_threshold: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_sweeps: 10_000,
            max_lla_iters: 25,
            zero_threshold: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlsSolution {
    /// One coefficient per candidate column.
    pub coefficients: Vec<f64>,
    /// Positions (within the candidate columns) of the nonzero coefficients.
    pub support: IndexSet,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

struct CdResult {
    beta: Vec<f64>,
    sweeps: usize,
    converged: bool,
}

/// Coordinate descent for `||z - X b||^2 + n Σ w_j |b_j|`.
fn weighted_lasso_cd(
    x: &DMatrix<f64>,
    z: &[f64],
    weights: &[f64],
    start: &[f64],
    col_sq: &[f64],
    opts: &SolverOptions,
) -> CdResult {
    let (n, m) = x.shape();
    let nf = n as f64;
    let mut beta = start.to_vec();
    let mut r = residual(x, z, &beta);
    let z_norm = dot(z, z).sqrt().max(f64::MIN_POSITIVE);
    let data = x.as_slice();
    for sweep in 1..=opts.max_sweeps {
        let mut max_change = 0.0f64;
        for j in 0..m {
            if col_sq[j] == 0.0 {
                beta[j] = 0.0;
                continue;
            }
            let col = &data[j * n..(j + 1) * n];
            let old = beta[j];
            let c = dot(col, &r) + col_sq[j] * old;
            let thr = nf * weights[j] / 2.0;
            let new = if c > thr {
                (c - thr) / col_sq[j]
            } else if c < -thr {
                (c + thr) / col_sq[j]
            } else {
                0.0
            };
            let delta = new - old;
            if delta != 0.0 {
                for (ri, ci) in r.iter_mut().zip(col) {
                    *ri -= delta * ci;
                }
                beta[j] = new;
                max_change = max_change.max(delta.abs() * col_sq[j].sqrt());
            }
        }
        if max_change <= opts.tol * z_norm {
            return CdResult {
                beta,
                sweeps: sweep,
                converged: true,
            };
        }
    }
    CdResult {
        beta,
        sweeps: opts.max_sweeps,
        converged: false,
    }
}

fn finish(
    x: &DMatrix<f64>,
    z: &[f64],
    mut beta: Vec<f64>,
    penalty: &PenaltySpec,
    opts: &SolverOptions,
    iterations: usize,
    converged: bool,
) -> PlsSolution {
    for b in beta.iter_mut() {
        if b.abs() < opts.zero_threshold {
            *b = 0.0;
        }
    }
    let r = residual(x, z, &beta);
    let objective = objective_from_residual(&r, &beta, penalty);
    let support = IndexSet(
        beta.iter()
            .enumerate()
            .filter(|(_, b)| **b != 0.0)
            .map(|(j, _)| j)
            .collect(),
    );
    PlsSolution {
        coefficients: beta,
        support,
        objective,
        iterations,
        converged,
    }
}

/// Local linear approximation for SCAD: repeated weighted LASSO solves with
/// weights `p'(|beta_j|)` from the current iterate. The objective is tracked
/// and the loop stops rather than accept an increase.
fn lla(
    x: &DMatrix<f64>,
    z: &[f64],
    penalty: &PenaltySpec,
    opts: &SolverOptions,
    col_sq: &[f64],
    start: Vec<f64>,
) -> (Vec<f64>, f64, usize, bool) {
    let mut beta = start;
    let mut obj = objective_from_residual(&residual(x, z, &beta), &beta, penalty);
    let mut sweeps = 0;
    let mut converged = true;
    let z_norm = dot(z, z).sqrt().max(f64::MIN_POSITIVE);
    for _ in 0..opts.max_lla_iters {
        let weights: Vec<f64> = beta.iter().map(|&b| penalty_derivative(penalty, b)).collect();
        let cd = weighted_lasso_cd(x, z, &weights, &beta, col_sq, opts);
        sweeps += cd.sweeps;
        converged &= cd.converged;
        let new_obj = objective_from_residual(&residual(x, z, &cd.beta), &cd.beta, penalty);
        if new_obj > obj {
            break;
        }
        let change = cd
            .beta
            .iter()
            .zip(&beta)
            .zip(col_sq)
            .map(|((a, b), s)| (a - b).abs() * s.sqrt())
            .fold(0.0, f64::max);
        beta = cd.beta;
        obj = new_obj;
        if change <= opts.tol * z_norm {
            break;
        }
    }
    (beta, obj, sweeps, converged)
}

fn solve_impl(
    x: &DMatrix<f64>,
    z: &[f64],
    penalty: &PenaltySpec,
    opts: &SolverOptions,
    warm: Option<&[f64]>,
) -> Result<PlsSolution> {
    penalty.validate()?;
    let (n, m) = x.shape();
    if m == 0 {
        return Err(Error::DimensionMismatch("no candidate columns".into()));
    }
    if z.len() != n {
        return Err(Error::DimensionMismatch(format!("z has {} entries for n = {n}", z.len())));
    }
    if let Some(w) = warm {
        if w.len() != m {
            return Err(Error::DimensionMismatch("warm start length".into()));
        }
    }
    if x.iter().chain(z).any(|v| !v.is_finite()) {
        return Err(Error::InvalidDataset("non-finite input to penalized solver".into()));
    }
    let col_sq: Vec<f64> = (0..m)
        .map(|j| {
            let c = &x.as_slice()[j * n..(j + 1) * n];
            dot(c, c)
        })
        .collect();
    let lasso_w = vec![penalty.lambda; m];
    let cd = weighted_lasso_cd(x, z, &lasso_w, &vec![0.0; m], &col_sq, opts);
    let sol = match penalty.kind {
        PenaltyKind::Lasso => finish(x, z, cd.beta, penalty, opts, cd.sweeps, cd.converged),
        PenaltyKind::Scad => {
            let (mut best, best_obj, mut sweeps, mut conv) = lla(x, z, penalty, opts, &col_sq, cd.beta);
            sweeps += cd.sweeps;
            conv &= cd.converged;
            if let Some(w) = warm {
                let (b, o, s, c) = lla(x, z, penalty, opts, &col_sq, w.to_vec());
                sweeps += s;
                if o < best_obj {
                    best = b;
                    conv = c;
                }
            }
            finish(x, z, best, penalty, opts, sweeps, conv)
        }
    };
    if sol.converged {
        Ok(sol)
    } else {
        Err(Error::NotConverged(Box::new(sol)))
    }
}

/// Minimizes the penalized least-squares objective over the columns of `x`.
///
/// LASSO is solved to its global minimum by cyclic coordinate descent from
/// zero. SCAD starts from the LASSO solution and runs the local linear
/// approximation, which never increases the objective. Hitting the sweep cap
/// yields [`Error::NotConverged`] carrying the best iterate.
pub fn solve_pls(
    x: &DMatrix<f64>,
    z: &[f64],
    penalty: &PenaltySpec,
    opts: &SolverOptions,
) -> Result<PlsSolution> {
    solve_impl(x, z, penalty, opts, None)
}

/// As [`solve_pls`], additionally running SCAD's local linear approximation
/// from `start` and keeping whichever local solution has the lower objective.
/// For LASSO the start is ignored.
pub fn solve_pls_from(
    x: &DMatrix<f64>,
    z: &[f64],
    penalty: &PenaltySpec,
    opts: &SolverOptions,
    start: &[f64],
) -> Result<PlsSolution> {
    solve_impl(x, z, penalty, opts, Some(start))
}

/// Accepts a non-converged solve as a soft failure: returns the best iterate
/// with `converged = false`.
pub fn accept_soft(result: Result<PlsSolution>) -> Result<PlsSolution> {
    match result {
        Err(Error::NotConverged(sol)) => Ok(*sol),
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn lasso_values() {
        assert_eq!(lasso_penalty(0.0, 0.5), 0.0);
        assert_eq!(lasso_penalty(2.0, 0.5), 1.0);
        assert_eq!(lasso_penalty(-2.0, 0.5), 1.0);
    }

    #[test]
    fn scad_derivative_values() {
        assert_eq!(scad_derivative(0.5, 1.0, 3.7), 1.0);
        assert!((scad_derivative(2.0, 1.0, 3.7) - 1.7 / 2.7).abs() < 1e-15);
        assert!((scad_derivative(2.0, 1.0, 3.7) - 0.62963).abs() < 1e-5);
        assert_eq!(scad_derivative(5.0, 1.0, 3.7), 0.0);
    }

    #[test]
    fn scad_penalty_values() {
        assert_eq!(scad_penalty(0.0, 1.0, 3.7), 0.0);
        assert_eq!(scad_penalty(1.0, 1.0, 3.7), 1.0);
        assert!((scad_penalty(10.0, 1.0, 3.7) - 2.35).abs() < 1e-12);
    }

    /// Trapezoid integration of the derivative reproduces the closed form.
    #[test]
    fn scad_penalty_integrates_derivative() {
        let (lam, a) = (1.0, 3.7);
        let steps = 200_000;
        let h = 10.0 / steps as f64;
        let mut acc = 0.0;
        for i in 0..steps {
            let t0 = i as f64 * h;
            acc += 0.5 * h * (scad_derivative(t0, lam, a) + scad_derivative(t0 + h, lam, a));
        }
        assert!((acc - 2.35).abs() < 1e-6);
    }

    #[test]
    fn penalties_bounded_by_lasso_and_scad_continuous() {
        for &(lam, a) in &[(0.3, 3.7), (1.0, 2.5), (2.0, 10.0)] {
            let lasso = PenaltySpec::lasso(lam).unwrap();
            let scad = PenaltySpec::scad(lam, a).unwrap();
            let mut prev = 0.0;
            for i in -400..=400 {
                let th = i as f64 * 0.05;
                assert!(penalty_value(&lasso, th) <= lam * th.abs() + 1e-15);
                assert!(penalty_value(&scad, th) <= lam * th.abs() + 1e-12);
                if th >= 0.0 {
                    let v = penalty_value(&scad, th);
                    assert!(v >= prev - 1e-15);
                    prev = v;
                }
            }
            for knot in [lam, a * lam] {
                let lo = scad_penalty(knot - 1e-9, lam, a);
                let hi = scad_penalty(knot + 1e-9, lam, a);
                assert!((hi - lo).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn scad_finite_differences_match_derivative() {
        let (lam, a) = (0.7, 3.7);
        let h = 1e-6;
        for i in 1..200 {
            let th = i as f64 * 0.017;
            if (th - lam).abs() < 1e-3 || (th - a * lam).abs() < 1e-3 {
                continue;
            }
            let fd = (scad_penalty(th + h, lam, a) - scad_penalty(th - h, lam, a)) / (2.0 * h);
            assert!((fd - scad_derivative(th, lam, a)).abs() < 1e-6, "theta = {th}");
        }
    }

    #[test]
    fn objective_direct_arithmetic() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 2.0, 1.0, 0.0, 1.0, -1.0, 3.0]);
        let z = [1.0, 2.0, 3.0, 4.0];
        let pen = PenaltySpec::lasso(1.0).unwrap();
        let zero = objective_value(&x, &z, &[0.0, 0.0], &pen).unwrap();
        assert_eq!(zero, 30.0);
        let e1 = objective_value(&x, &z, &[1.0, 0.0], &pen).unwrap();
        // ||z - X_1||^2 = 0 + 0 + 9 + 25
        assert_eq!(e1, 34.0 + 4.0);
        assert!(objective_value(&x, &z, &[1.0], &pen).is_err());
    }

    #[test]
    fn kill_condition_gives_empty_support() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 0.5, -1.0, 2.0, 0.3, -0.7, 2.0, 0.1]);
        let z = [0.5, -0.2, 1.0, 0.4];
        let max_corr = (0..2)
            .map(|j| dot(x.column(j).as_slice(), &z).abs())
            .fold(0.0, f64::max);
        let lam = 2.0 * max_corr / 4.0 * 1.01;
        for pen in [PenaltySpec::lasso(lam).unwrap(), PenaltySpec::scad(lam, 3.7).unwrap()] {
            let sol = solve_pls(&x, &z, &pen, &SolverOptions::default()).unwrap();
            assert!(sol.support.is_empty());
            assert_eq!(sol.objective, dot(&z, &z));
        }
    }

    #[test]
    fn single_column_soft_threshold() {
        let x = DMatrix::from_column_slice(5, 1, &[1.0, -2.0, 0.5, 1.5, 0.0]);
        let z = [2.0, -3.0, 1.0, 2.5, 0.7];
        let pen = PenaltySpec::lasso(0.8).unwrap();
        let c = dot(x.as_slice(), &z);
        let nrm = dot(x.as_slice(), x.as_slice());
        let expected = c.signum() * (c.abs() - 5.0 * 0.8 / 2.0).max(0.0) / nrm;
        let sol = solve_pls(&x, &z, &pen, &SolverOptions::default()).unwrap();
        assert!((sol.coefficients[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_columns_soft_threshold_componentwise() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 1.0, 1.0, -1.0, -1.0, 1.0, -1.0, -1.0]);
        let z = [3.0, 1.0, -0.5, 0.2];
        let pen = PenaltySpec::lasso(0.9).unwrap();
        let sol = solve_pls(&x, &z, &pen, &SolverOptions::default()).unwrap();
        for j in 0..2 {
            let c = dot(x.column(j).as_slice(), &z);
            let want = c.signum() * (c.abs() - 4.0 * 0.9 / 2.0).max(0.0) / 4.0;
            assert!((sol.coefficients[j] - want).abs() < 1e-12);
        }
        assert!(lasso_kkt_violation(&x, &z, &sol.coefficients, 0.9) < 1e-10);
    }

    #[test]
    fn scad_unbiased_for_large_signal() {
        // One column, strong signal: SCAD leaves the estimate unshrunk once
        // it exceeds aλ.
        let x = DMatrix::from_column_slice(4, 1, &[1.0, 1.0, 1.0, 1.0]);
        let z = [5.0, 5.0, 5.0, 5.0];
        let scad = PenaltySpec::scad(0.5, 3.7).unwrap();
        let sol = solve_pls(&x, &z, &scad, &SolverOptions::default()).unwrap();
        assert!((sol.coefficients[0] - 5.0).abs() < 1e-10);
        let lasso = PenaltySpec::lasso(0.5).unwrap();
        let sol = solve_pls(&x, &z, &lasso, &SolverOptions::default()).unwrap();
        assert!((sol.coefficients[0] - 4.75).abs() < 1e-10);
    }

    #[test]
    fn sweep_cap_is_soft_error() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.99, 1.0, 1.01, 1.0, 1.0]);
        let z = [1.0, 2.0, 3.0];
        let pen = PenaltySpec::lasso(0.01).unwrap();
        let opts = SolverOptions {
            max_sweeps: 1,
            ..SolverOptions::default()
        };
        let err = solve_pls(&x, &z, &pen, &opts).unwrap_err();
        assert!(matches!(err, Error::NotConverged(_)));
        let best = accept_soft(Err(err)).unwrap();
        assert!(!best.converged);
        assert!(best.objective <= dot(&z, &z));
    }
}
