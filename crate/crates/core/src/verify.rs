//! Randomized agreement suites between the engine and the dense oracles.
//!
//! Each suite draws Gaussian instances, evaluates an identity or inequality
//! through the engine, and checks it against an independent computation.
//! The engine is reached through [`FastPath`] so a deliberately broken
//! implementation can be swapped in to confirm that a suite actually fails.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::criteria;
use crate::error::{Error, Result};
use crate::model::{Dataset, IndexSet, PenaltySpec, ScreeningCriterion, DEFAULT_SCAD_A};
use crate::oracle::{brute_screen, dense_joint_ols_last_coef, dense_ols, grid_pls};
use crate::penalty::{accept_soft, solve_pls, PlsSolution, SolverOptions};
use crate::projection::ActiveSetState;
use crate::sim::derive_seed;

/// Engine entry points exercised by the suites.
pub trait FastPath: Sync {
    fn rss(&self, state: &ActiveSetState<'_>) -> f64 {
        state.rss()
    }
    fn rss_delta(&self, state: &ActiveSetState<'_>, j: usize) -> Result<f64> {
        state.rss_delta_single(j)
    }
    fn beta_last(&self, state: &ActiveSetState<'_>, j: usize) -> Result<f64> {
        state.beta_hat_last(j)
    }
    fn marginal(&self, state: &ActiveSetState<'_>, j: usize) -> Result<f64> {
        state.marginal_stat(j)
    }
    fn projected_norm(&self, state: &ActiveSetState<'_>, j: usize) -> Result<f64> {
        state.projected_col_norm_sq(j)
    }
    fn lower_bound(&self, state: &ActiveSetState<'_>, add: &IndexSet) -> Result<(f64, f64)> {
        state.rss_lower_bound_check(add)
    }
    fn screen(&self, criterion: ScreeningCriterion, state: &ActiveSetState<'_>, a: usize) -> Result<IndexSet> {
        Ok(criteria::screen(criterion, state, a)?.selected)
    }
    fn solve(&self, x: &DMatrix<f64>, z: &[f64], penalty: &PenaltySpec) -> Result<PlsSolution> {
        accept_soft(solve_pls(x, z, penalty, &SolverOptions::default()))
    }
}

/// The production engine.
pub struct Engine;

impl FastPath for Engine {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub name: String,
    pub checks: usize,
    pub failures: usize,
    /// Largest relative error (agreement suites), largest violation
    /// (inequality suites), mismatch count (screening) or objective excess
    /// over the grid (penalized fits).
    pub max_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub instances: usize,
    pub seed: u64,
    pub suites: Vec<SuiteResult>,
    pub all_passed: bool,
}

impl VerifyReport {
    pub fn failed_suites(&self) -> Vec<&str> {
        self.suites.iter().filter(|s| !s.passed).map(|s| s.name.as_str()).collect()
    }

    /// Fixed-width pass/fail table.
    pub fn table(&self) -> String {
        let mut out = format!(
            "{:<28} {:>8} {:>8} {:>12} {:>10}  result\n",
            "suite", "checks", "failed", "max_error", "tolerance"
        );
        for s in &self.suites {
            out.push_str(&format!(
                "{:<28} {:>8} {:>8} {:>12.3e} {:>10.1e}  {}\n",
                s.name,
                s.checks,
                s.failures,
                s.max_error,
                s.tolerance,
                if s.passed { "PASS" } else { "FAIL" }
            ));
        }
        out
    }
}

pub const AGREEMENT_TOLERANCE: f64 = 1e-8;
pub const GRID_TOLERANCE: f64 = 1e-6;

pub const SUITE_RSS_DROP: &str = "rss_drop_identity";
pub const SUITE_JOINT_COEF: &str = "joint_coefficient_identity";
pub const SUITE_LOWER_BOUND: &str = "rss_lower_bound";
pub const SUITE_SIGNAL_BOUND: &str = "relevant_signal_bound";
pub const SUITE_SCREEN: &str = "screen_equivalence";
pub const SUITE_PLS_GRID: &str = "pls_grid";

struct Tally {
    name: &'static str,
    checks: usize,
    failures: usize,
    max_error: f64,
    tolerance: f64,
}

impl Tally {
    fn new(name: &'static str, tolerance: f64) -> Self {
        Self {
            name,
            checks: 0,
            failures: 0,
            max_error: 0.0,
            tolerance,
        }
    }

    fn record(&mut self, err: f64) {
        self.checks += 1;
        let err = if err.is_nan() { f64::INFINITY } else { err };
        self.max_error = self.max_error.max(err);
        if err > self.tolerance {
            self.failures += 1;
        }
    }

    fn fail(&mut self) {
        self.record(f64::INFINITY);
    }

    fn finish(self) -> SuiteResult {
        SuiteResult {
            name: self.name.to_string(),
            checks: self.checks,
            failures: self.failures,
            max_error: self.max_error,
            tolerance: self.tolerance,
            passed: self.failures == 0 && self.checks > 0,
        }
    }
}

fn rel(a: f64, b: f64, scale: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(scale).max(f64::MIN_POSITIVE)
}

fn gaussian_matrix(rng: &mut ChaCha8Rng, n: usize, p: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, p, |_, _| StandardNormal.sample(rng))
}

/// A random regression instance with a known signal and noise.
pub struct Instance {
    pub data: Dataset,
    pub s: IndexSet,
    pub truth: Vec<usize>,
    pub beta: Vec<f64>,
    pub noise: Vec<f64>,
}

/// `n` in `[10, 50]`, `p` in `[2, 20]`, `|S| <= 8`, Gaussian design and
/// noise, and a true support of up to four columns with coefficients of
/// magnitude in `[0.5, 2]`.
pub fn random_instance(seed: u64) -> Result<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(10..=50usize);
    let p = rng.random_range(2..=20usize);
    let x = gaussian_matrix(&mut rng, n, p);
    let s_max = 8.min(p - 1).min(n - 3);
    let s_len = rng.random_range(0..=s_max);
    let s = IndexSet::new(sample(&mut rng, p, s_len).into_vec())?;
    let t_len = rng.random_range(1..=4.min(p));
    let mut truth = sample(&mut rng, p, t_len).into_vec();
    truth.sort_unstable();
    let mut beta = vec![0.0; p];
    for &j in &truth {
        let mag: f64 = rng.random_range(0.5..=2.0);
        beta[j] = if rng.random::<bool>() { mag } else { -mag };
    }
    let noise: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mut y = DVector::from_column_slice(&noise);
    for &j in &truth {
        y.axpy(beta[j], &x.column(j), 1.0);
    }
    Ok(Instance {
        data: Dataset::new(x, y)?,
        s,
        truth,
        beta,
        noise,
    })
}

/// Residual of `v` after dense least squares on `xs`.
fn dense_residual(xs: &DMatrix<f64>, v: &[f64]) -> Result<Vec<f64>> {
    let (coef, _) = dense_ols(xs, v)?;
    let mut r = v.to_vec();
    for (k, b) in coef.iter().enumerate() {
        for (ri, xv) in r.iter_mut().zip(xs.column(k).iter()) {
            *ri -= b * xv;
        }
    }
    Ok(r)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct Suites {
    rss_drop: Tally,
    joint: Tally,
    lower: Tally,
    signal: Tally,
    screen: Tally,
    pls: Tally,
}

fn check_identities(fast: &dyn FastPath, inst: &Instance, rng: &mut ChaCha8Rng, t: &mut Suites) -> Result<()> {
    let data = &inst.data;
    let x = data.x();
    let y = data.y_slice();
    let state = ActiveSetState::for_model(data, &inst.s)?;
    let resid_s = dense_residual(&x.select_columns(inst.s.as_slice()), y)?;
    // The RSS drop equals the squared norm of the difference of the two
    // residual vectors, which avoids cancellation when the drop is tiny.
    let drop_between = |bigger: &IndexSet| -> Result<f64> {
        let r = dense_residual(&x.select_columns(bigger.as_slice()), y)?;
        Ok(resid_s.iter().zip(&r).map(|(a, b)| (a - b) * (a - b)).sum())
    };
    let y_scale = dot(y, y);
    for j in inst.s.complement(data.p()) {
        let oracle_drop = drop_between(&inst.s.union(&IndexSet(vec![j])))?;
        match fast.rss_delta(&state, j) {
            Ok(d) => t.rss_drop.record(rel(d, oracle_drop, 1e-12 * y_scale)),
            Err(_) => t.rss_drop.fail(),
        }
        let oracle_beta = dense_joint_ols_last_coef(x, y, &inst.s, j)?;
        let beta_scale = (y_scale / dot(data.col(j), data.col(j))).sqrt();
        match (fast.beta_last(&state, j), fast.marginal(&state, j), fast.projected_norm(&state, j)) {
            (Ok(b), Ok(m), Ok(pn)) => {
                t.joint.record(rel(b, oracle_beta, 1e-12 * beta_scale));
                // Squared-coefficient form of the same identity.
                t.joint.record(rel(b * b * pn * pn, m * m, 1e-12 * y_scale * y_scale));
            }
            _ => t.joint.fail(),
        }
    }

    // Lower bound on the RSS drop from adding a block.
    let inactive = inst.s.complement(data.p());
    let room = (data.n() - inst.s.len()).min(inactive.len());
    if room >= 1 {
        let a_len = rng.random_range(1..=room.min(4));
        let pick = sample(rng, inactive.len(), a_len).into_vec();
        let add = IndexSet::new(pick.into_iter().map(|k| inactive[k]).collect())?;
        match fast.lower_bound(&state, &add) {
            Ok((lhs, rhs)) => {
                let oracle_lhs = drop_between(&inst.s.union(&add))?;
                t.lower.record((rhs - lhs).max(0.0) / lhs.abs().max(1.0));
                t.rss_drop.record(rel(lhs, oracle_lhs, 1e-12 * y_scale));
            }
            Err(Error::RankDeficient(_)) => {}
            Err(_) => t.lower.fail(),
        }
    }

    // Lower bound on the best marginal signal among missed relevant columns.
    let missed: Vec<usize> = inst.truth.iter().copied().filter(|&j| !inst.s.contains(j)).collect();
    let s_star = inst.s.union(&IndexSet(missed.clone()));
    if !missed.is_empty() && s_star.len() <= data.n() {
        let xs_star = x.select_columns(s_star.as_slice());
        let gram = xs_star.transpose() * &xs_star;
        let lam_min = SymmetricEigen::new(gram).eigenvalues.min();
        if lam_min > 1e-8 {
            let xs = x.select_columns(inst.s.as_slice());
            let beta_min = missed.iter().map(|&j| inst.beta[j].abs()).fold(f64::INFINITY, f64::min);
            let mut lhs = 0.0f64;
            let mut col_sq = 0.0f64;
            let mut noise_term = 0.0f64;
            for &i in &missed {
                let m = fast.marginal(&state, i)?;
                lhs = lhs.max(m * m);
                col_sq = col_sq.max(dot(data.col(i), data.col(i)));
                let proj = dense_residual(&xs, data.col(i))?;
                let u = dot(&proj, &inst.noise) / dot(&proj, &proj).sqrt();
                noise_term = noise_term.max(u * u);
            }
            let rhs = beta_min * beta_min / 2.0 * lam_min * lam_min - col_sq * noise_term;
            t.signal.record((rhs - lhs).max(0.0) / lhs.max(rhs.abs()).max(1.0));
        }
    }

    // Screening equivalence, all three criteria.
    if !inactive.is_empty() {
        for criterion in [ScreeningCriterion::Scr1, ScreeningCriterion::Scr2, ScreeningCriterion::Scr3] {
            let a = rng.random_range(1..=inactive.len());
            let fast_set = fast.screen(criterion, &state, a);
            let brute = brute_screen(criterion, x, y, &inst.s, a);
            match (fast_set, brute) {
                (Ok(f), Ok(b)) => t.screen.record(if f == b { 0.0 } else { 1.0 }),
                (Err(Error::NoEligibleColumns), Err(Error::NoEligibleColumns)) => t.screen.record(0.0),
                _ => t.screen.record(1.0),
            }
        }
    }
    Ok(())
}

/// Smallest eigenvalue of `X^T X / n` for which the SCAD objective with
/// shape `a` is convex.
pub fn scad_convexity_floor(a: f64) -> f64 {
    1.0 / (2.0 * (a - 1.0))
}

/// Draws an `n x m` design (`m` in `{1, 2}`) whose Gram matrix is
/// well enough conditioned that the SCAD objective is convex, so the grid
/// minimum is the global minimum the solver must reach.
pub fn grid_instance(rng: &mut ChaCha8Rng, m: usize) -> (DMatrix<f64>, Vec<f64>) {
    loop {
        let n = rng.random_range(20..=60usize);
        let x = gaussian_matrix(rng, n, m);
        let g = x.transpose() * &x / n as f64;
        if SymmetricEigen::new(g).eigenvalues.min() <= 1.5 * scad_convexity_floor(DEFAULT_SCAD_A) {
            continue;
        }
        let mut z: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        for k in 0..m {
            let b: f64 = rng.random_range(-2.0..=2.0);
            for (zi, xv) in z.iter_mut().zip(x.column(k).iter()) {
                *zi += b * xv;
            }
        }
        return (x, z);
    }
}

fn check_grid(fast: &dyn FastPath, rng: &mut ChaCha8Rng, t: &mut Suites) -> Result<()> {
    let m = rng.random_range(1..=2usize);
    let (x, z) = grid_instance(rng, m);
    let lambda: f64 = rng.random_range(0.05..=1.0);
    let penalty = if rng.random::<bool>() {
        PenaltySpec::lasso(lambda)?
    } else {
        PenaltySpec::scad(lambda, DEFAULT_SCAD_A)?
    };
    let (ols, _) = dense_ols(&x, &z)?;
    let radius = ols.iter().fold(0.0f64, |acc, b| acc.max(b.abs())) * 1.25 + 0.1;
    let step = radius / if m == 1 { 20_000.0 } else { 500.0 };
    let (_, grid_obj) = grid_pls(&x, &z, &penalty, radius, step)?;
    match fast.solve(&x, &z, &penalty) {
        Ok(sol) => t.pls.record((sol.objective - grid_obj).max(0.0) / grid_obj.abs().max(1.0)),
        Err(_) => t.pls.fail(),
    }
    Ok(())
}

/// Runs every suite over `instances` random instances.
pub fn run_suites(fast: &dyn FastPath, instances: usize, seed: u64) -> Result<VerifyReport> {
    if instances == 0 {
        return Err(Error::InvalidConfig("instances must be at least 1".into()));
    }
    let mut t = Suites {
        rss_drop: Tally::new(SUITE_RSS_DROP, AGREEMENT_TOLERANCE),
        joint: Tally::new(SUITE_JOINT_COEF, AGREEMENT_TOLERANCE),
        lower: Tally::new(SUITE_LOWER_BOUND, AGREEMENT_TOLERANCE),
        signal: Tally::new(SUITE_SIGNAL_BOUND, AGREEMENT_TOLERANCE),
        screen: Tally::new(SUITE_SCREEN, 0.0),
        pls: Tally::new(SUITE_PLS_GRID, GRID_TOLERANCE),
    };
    for i in 0..instances as u64 {
        let inst = random_instance(derive_seed(seed, i, 11))?;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, i, 12));
        check_identities(fast, &inst, &mut rng, &mut t)?;
        check_grid(fast, &mut rng, &mut t)?;
    }
    let suites: Vec<SuiteResult> = [t.rss_drop, t.joint, t.lower, t.signal, t.screen, t.pls]
        .into_iter()
        .map(Tally::finish)
        .collect();
    let all_passed = suites.iter().all(|s| s.passed);
    Ok(VerifyReport {
        instances,
        seed,
        suites,
        all_passed,
    })
}

/// [`run_suites`] against the production engine.
pub fn verify(instances: usize, seed: u64) -> Result<VerifyReport> {
    run_suites(&Engine, instances, seed)
}
