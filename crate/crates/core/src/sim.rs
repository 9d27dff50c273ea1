//! Synthetic data under Gaussian designs, empirical checks of the eigenvalue
//! condition, the marginally-uncorrelated adversarial design, and
//! Monte-Carlo estimation of sure-screening rates.
//!
//! Every random draw is seeded from `(master seed, replication, stream)`
//! through a counter-based mixer, so results do not depend on how
//! replications are scheduled across threads.

use std::time::Instant;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AlgorithmConfig, Dataset, StopReason, TrueModel};
use crate::pipeline::{check_sure_screening, run, SuccessMode};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for one `(replication, stream)` pair under a master seed.
pub fn derive_seed(master: u64, replication: u64, stream: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ replication) ^ splitmix64(stream ^ 0xA5A5_A5A5))
}

const STREAM_DESIGN: u64 = 1;
const STREAM_RESPONSE: u64 = 2;
const STREAM_TRUTH: u64 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceFamily {
    Identity,
    Ar1(f64),
    CompoundSymmetry(f64),
    /// Row-major `p x p` entries.
    Custom(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceSpec {
    pub family: CovarianceFamily,
    pub p: usize,
}

impl CovarianceSpec {
    pub fn new(family: CovarianceFamily, p: usize) -> Result<Self> {
        let spec = Self { family, p };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.p == 0 {
            return Err(Error::InvalidConfig("covariance dimension must be positive".into()));
        }
        match &self.family {
            CovarianceFamily::Identity => Ok(()),
            CovarianceFamily::Ar1(rho) => {
                if rho.abs() < 1.0 {
                    Ok(())
                } else {
                    Err(Error::NotPositiveDefinite)
                }
            }
            CovarianceFamily::CompoundSymmetry(rho) => {
                let lower = if self.p > 1 { -1.0 / (self.p as f64 - 1.0) } else { -1.0 };
                if *rho < 1.0 && *rho > lower {
                    Ok(())
                } else {
                    Err(Error::NotPositiveDefinite)
                }
            }
            CovarianceFamily::Custom(entries) => {
                if entries.len() != self.p * self.p {
                    return Err(Error::DimensionMismatch(format!(
                        "custom covariance has {} entries for p = {}",
                        entries.len(),
                        self.p
                    )));
                }
                let m = self.matrix();
                if (&m - m.transpose()).amax() > 1e-12 * m.amax().max(1.0) {
                    return Err(Error::InvalidConfig("custom covariance is not symmetric".into()));
                }
                m.cholesky().map(|_| ()).ok_or(Error::NotPositiveDefinite)
            }
        }
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        let p = self.p;
        match &self.family {
            CovarianceFamily::Identity => DMatrix::identity(p, p),
            CovarianceFamily::Ar1(rho) => {
                DMatrix::from_fn(p, p, |i, j| rho.powi((i as i32 - j as i32).abs()))
            }
            CovarianceFamily::CompoundSymmetry(rho) => {
                DMatrix::from_fn(p, p, |i, j| if i == j { 1.0 } else { *rho })
            }
            CovarianceFamily::Custom(e) => DMatrix::from_row_slice(p, p, e),
        }
    }
}

/// Draws rows `x ~ N(0, Σ)`; the factor of Σ is computed once and reused.
#[derive(Debug, Clone)]
pub struct DesignSampler {
    p: usize,
    kind: SamplerKind,
}

#[derive(Debug, Clone)]
enum SamplerKind {
    Identity,
    /// `x_0 = z_0`, `x_j = ρ x_{j-1} + sqrt(1 - ρ^2) z_j`, which equals
    /// multiplication by the Cholesky factor of the AR(1) covariance.
    Ar1 { rho: f64, innov: f64 },
    /// Nonzero entries of each row of the lower Cholesky factor.
    Factor(Vec<Vec<(usize, f64)>>),
}

impl DesignSampler {
    pub fn new(cov: &CovarianceSpec) -> Result<Self> {
        cov.validate()?;
        let kind = match &cov.family {
            CovarianceFamily::Identity => SamplerKind::Identity,
            CovarianceFamily::Ar1(rho) => SamplerKind::Ar1 {
                rho: *rho,
                innov: (1.0 - rho * rho).sqrt(),
            },
            _ => {
                let l = cov.matrix().cholesky().ok_or(Error::NotPositiveDefinite)?.unpack();
                let rows = (0..cov.p)
                    .map(|i| {
                        (0..=i)
                            .filter_map(|j| {
                                let v = l[(i, j)];
                                (v != 0.0).then_some((j, v))
                            })
                            .collect()
                    })
                    .collect();
                SamplerKind::Factor(rows)
            }
        };
        Ok(Self { p: cov.p, kind })
    }

    /// `n x p` design; standard normals are drawn row by row.
    pub fn sample(&self, n: usize, seed: u64) -> DMatrix<f64> {
        let p = self.p;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = DMatrix::zeros(n, p);
        let mut z = vec![0.0; p];
        let mut row = vec![0.0; p];
        for i in 0..n {
            for zj in z.iter_mut() {
                *zj = StandardNormal.sample(&mut rng);
            }
            match &self.kind {
                SamplerKind::Identity => row.copy_from_slice(&z),
                SamplerKind::Ar1 { rho, innov } => {
                    row[0] = z[0];
                    for j in 1..p {
                        row[j] = rho * row[j - 1] + innov * z[j];
                    }
                }
                SamplerKind::Factor(rows) => {
                    for (j, entries) in rows.iter().enumerate() {
                        row[j] = entries.iter().map(|&(k, v)| v * z[k]).sum();
                    }
                }
            }
            for (j, v) in row.iter().enumerate() {
                x[(i, j)] = *v;
            }
        }
        x
    }
}

/// Gaussian design with `n` rows and covariance `cov`, reproducible from `seed`.
pub fn gen_design(n: usize, cov: &CovarianceSpec, seed: u64) -> Result<DMatrix<f64>> {
    Ok(DesignSampler::new(cov)?.sample(n, seed))
}

/// `Y = X beta + ε` with `ε ~ N(0, noise_sd^2)` i.i.d.
pub fn gen_response(x: &DMatrix<f64>, truth: &TrueModel, noise_sd: f64, seed: u64) -> Result<DVector<f64>> {
    if truth.p() != x.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "beta has {} entries for p = {}",
            truth.p(),
            x.ncols()
        )));
    }
    if !(noise_sd >= 0.0 && noise_sd.is_finite()) {
        return Err(Error::InvalidConfig("noise_sd must be nonnegative".into()));
    }
    let n = x.nrows();
    let mut y = DVector::zeros(n);
    for &j in truth.indices() {
        y.axpy(truth.beta()[j], &x.column(j), 1.0);
    }
    if noise_sd > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for yi in y.iter_mut() {
            let e: f64 = StandardNormal.sample(&mut rng);
            *yi += noise_sd * e;
        }
    }
    Ok(y)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignPattern {
    Positive,
    Alternating,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    First,
    Random,
}

/// Recipe for the true coefficient vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthSpec {
    pub t: usize,
    pub magnitude: f64,
    pub signs: SignPattern,
    pub placement: Placement,
}

impl TruthSpec {
    pub fn generate(&self, p: usize, seed: u64) -> Result<TrueModel> {
        if self.t > p {
            return Err(Error::InvalidConfig(format!("t = {} exceeds p = {p}", self.t)));
        }
        if self.t > 0 && !(self.magnitude > 0.0 && self.magnitude.is_finite()) {
            return Err(Error::InvalidConfig("coefficient magnitude must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut idx: Vec<usize> = match self.placement {
            Placement::First => (0..self.t).collect(),
            Placement::Random => sample(&mut rng, p, self.t).into_vec(),
        };
        idx.sort_unstable();
        let mut beta = vec![0.0; p];
        for (k, &j) in idx.iter().enumerate() {
            let sign = match self.signs {
                SignPattern::Positive => 1.0,
                SignPattern::Alternating => {
                    if k % 2 == 0 {
                        1.0
                    } else {
                        -1.0
                    }
                }
                SignPattern::Random => {
                    if rng.random::<bool>() {
                        1.0
                    } else {
                        -1.0
                    }
                }
            };
            beta[j] = sign * self.magnitude;
        }
        TrueModel::from_beta(beta)
    }
}

/// Summary of sampled sub-Gram spectra `eig(X_S^T X_S / n)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenReport {
    pub subsets_checked: usize,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    /// Fraction of sampled subsets with an eigenvalue outside `[tau_min, tau_max]`.
    pub violation_fraction: f64,
    /// Sampling can miss violating subsets, so this is a lower bound on the
    /// true violation rate over all subsets.
    pub lower_bound_on_violations: bool,
    pub subsets: Vec<SubsetSpectrum>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetSpectrum {
    pub indices: Vec<usize>,
    pub min: f64,
    pub max: f64,
}

/// Samples `n_subsets` index sets with sizes uniform on `1..=max_subset_size`
/// and records the extreme eigenvalues of each `X_S^T X_S / n`.
pub fn check_eigen_condition(
    x: &DMatrix<f64>,
    max_subset_size: usize,
    n_subsets: usize,
    tau_min: f64,
    tau_max: f64,
    seed: u64,
) -> Result<EigenReport> {
    let (n, p) = x.shape();
    if max_subset_size == 0 || max_subset_size > n.min(p) {
        return Err(Error::InvalidConfig(format!(
            "subset size must lie in 1..={}",
            n.min(p)
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut subsets = Vec::with_capacity(n_subsets);
    let mut violations = 0usize;
    for _ in 0..n_subsets {
        let size = rng.random_range(1..=max_subset_size);
        let mut idx = sample(&mut rng, p, size).into_vec();
        idx.sort_unstable();
        let xs = x.select_columns(&idx);
        let gram = xs.transpose() * &xs / n as f64;
        let eig = SymmetricEigen::new(gram).eigenvalues;
        let min = eig.iter().copied().fold(f64::INFINITY, f64::min);
        let max = eig.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if min < tau_min || max > tau_max {
            violations += 1;
        }
        subsets.push(SubsetSpectrum { indices: idx, min, max });
    }
    Ok(EigenReport {
        subsets_checked: n_subsets,
        min_eigenvalue: subsets.iter().map(|s| s.min).fold(f64::INFINITY, f64::min),
        max_eigenvalue: subsets.iter().map(|s| s.max).fold(f64::NEG_INFINITY, f64::max),
        violation_fraction: if n_subsets == 0 {
            0.0
        } else {
            violations as f64 / n_subsets as f64
        },
        lower_bound_on_violations: true,
        subsets,
    })
}

/// Population model in which predictor `t - 1` is relevant but has zero
/// marginal covariance with the response.
///
/// The first `t` predictors are equicorrelated with correlation `rho`, the
/// rest are independent. The first `t - 1` coefficients equal `magnitude`
/// and the last relevant one is `-rho (t - 1) magnitude`, which zeroes
/// `(Σ beta)_{t-1} = Cov(x_{t-1}, y)`.
pub fn adversarial_population(
    p: usize,
    t: usize,
    rho: f64,
    magnitude: f64,
) -> Result<(CovarianceSpec, TrueModel)> {
    if t < 2 || p <= t {
        return Err(Error::InfeasibleConstruction(format!(
            "need t >= 2 and p > t, got t = {t}, p = {p}"
        )));
    }
    if !(magnitude > 0.0 && magnitude.is_finite()) {
        return Err(Error::InfeasibleConstruction("magnitude must be positive".into()));
    }
    if rho == 0.0 {
        return Err(Error::InfeasibleConstruction(
            "independent predictors force the hidden coefficient to zero".into(),
        ));
    }
    if !(rho < 1.0 && rho > -1.0 / (t as f64 - 1.0)) {
        return Err(Error::InfeasibleConstruction(format!(
            "correlation {rho} does not give a positive definite block of size {t}"
        )));
    }
    let mut entries = vec![0.0; p * p];
    for i in 0..p {
        for j in 0..p {
            entries[i * p + j] = if i == j {
                1.0
            } else if i < t && j < t {
                rho
            } else {
                0.0
            };
        }
    }
    let cov = CovarianceSpec::new(CovarianceFamily::Custom(entries), p)?;
    let mut beta = vec![0.0; p];
    for b in beta.iter_mut().take(t - 1) {
        *b = magnitude;
    }
    beta[t - 1] = -rho * (t as f64 - 1.0) * magnitude;
    Ok((cov, TrueModel::from_beta(beta)?))
}

pub const ADVERSARIAL_MAGNITUDE: f64 = 5.0;

/// Samples data from [`adversarial_population`] with unit noise.
pub fn adversarial_instance(
    n: usize,
    p: usize,
    t: usize,
    rho: f64,
    seed: u64,
) -> Result<(Dataset, TrueModel)> {
    let (cov, truth) = adversarial_population(p, t, rho, ADVERSARIAL_MAGNITUDE)?;
    let x = gen_design(n, &cov, derive_seed(seed, 0, STREAM_DESIGN))?;
    let y = gen_response(&x, &truth, 1.0, derive_seed(seed, 0, STREAM_RESPONSE))?;
    Ok((Dataset::new(x, y)?, truth))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignSpec {
    Gaussian {
        covariance: CovarianceFamily,
        truth: TruthSpec,
    },
    Adversarial {
        t: usize,
        rho: f64,
        magnitude: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub n: usize,
    pub p: usize,
    pub design: DesignSpec,
    pub noise_sd: f64,
    pub replications: usize,
    pub algorithm: AlgorithmConfig,
    pub success_mode: SuccessMode,
    pub standardize: bool,
    pub seed: u64,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::InvalidConfig("replications must be at least 1".into()));
        }
        if self.n < 2 || self.p == 0 {
            return Err(Error::InvalidConfig("need n >= 2 and p >= 1".into()));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(Error::InvalidConfig("noise_sd must be nonnegative".into()));
        }
        if let DesignSpec::Gaussian { truth, .. } = &self.design {
            if truth.t > self.p {
                return Err(Error::InvalidConfig("t exceeds p".into()));
            }
        }
        self.algorithm.validate(self.p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub replication: usize,
    pub success: bool,
    pub iterations: usize,
    /// First step whose model contains the true support.
    pub iterations_to_coverage: Option<usize>,
    pub final_model_size: usize,
    pub stop_reason: Option<StopReason>,
    pub unconverged_steps: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub spec: ExperimentSpec,
    pub success_count: usize,
    pub replications: usize,
    pub success_rate: f64,
    pub mean_iterations_to_coverage: Option<f64>,
    pub median_iterations_to_coverage: Option<f64>,
    pub mean_final_model_size: f64,
    pub records: Vec<ReplicationRecord>,
    /// Wall-clock data; the only nondeterministic field.
    pub timing: Timing,
}

/// Per-experiment sampling state: the covariance factor is computed once and
/// shared by all replications.
pub struct Generator {
    sampler: DesignSampler,
    truth: TruthSource,
}

enum TruthSource {
    Random(TruthSpec),
    Fixed(TrueModel),
}

impl Generator {
    pub fn new(spec: &ExperimentSpec) -> Result<Self> {
        Ok(match &spec.design {
            DesignSpec::Gaussian { covariance, truth } => Self {
                sampler: DesignSampler::new(&CovarianceSpec::new(covariance.clone(), spec.p)?)?,
                truth: TruthSource::Random(truth.clone()),
            },
            DesignSpec::Adversarial { t, rho, magnitude } => {
                let (cov, truth) = adversarial_population(spec.p, *t, *rho, *magnitude)?;
                Self {
                    sampler: DesignSampler::new(&cov)?,
                    truth: TruthSource::Fixed(truth),
                }
            }
        })
    }

    /// Data and truth for one replication, standardized if the spec asks.
    pub fn dataset(&self, spec: &ExperimentSpec, rep: usize) -> Result<(Dataset, TrueModel)> {
        let r = rep as u64;
        let truth = match &self.truth {
            TruthSource::Random(ts) => ts.generate(spec.p, derive_seed(spec.seed, r, STREAM_TRUTH))?,
            TruthSource::Fixed(t) => t.clone(),
        };
        let x = self.sampler.sample(spec.n, derive_seed(spec.seed, r, STREAM_DESIGN));
        let y = gen_response(&x, &truth, spec.noise_sd, derive_seed(spec.seed, r, STREAM_RESPONSE))?;
        let data = Dataset::new(x, y)?;
        let data = if spec.standardize { data.standardize()? } else { data };
        Ok((data, truth))
    }
}

fn replicate(spec: &ExperimentSpec, generator: &Generator, rep: usize) -> ReplicationRecord {
    let fail = |msg: String| ReplicationRecord {
        replication: rep,
        success: false,
        iterations: 0,
        iterations_to_coverage: None,
        final_model_size: 0,
        stop_reason: None,
        unconverged_steps: 0,
        error: Some(msg),
    };
    let (data, truth) = match generator.dataset(spec, rep) {
        Ok(d) => d,
        Err(e) => return fail(e.to_string()),
    };
    let traj = match run(&data, &spec.algorithm) {
        Ok(t) => t,
        Err(e) => return fail(e.to_string()),
    };
    let success = check_sure_screening(&traj, &truth, spec.success_mode);
    let iterations_to_coverage = traj
        .records
        .iter()
        .find(|rec| truth.indices().iter().all(|&j| rec.model.contains(j)))
        .map(|rec| rec.k);
    ReplicationRecord {
        replication: rep,
        success,
        iterations: traj.records.len(),
        iterations_to_coverage,
        final_model_size: traj.final_model().map_or(0, |m| m.len()),
        stop_reason: Some(traj.stop_reason),
        unconverged_steps: traj.records.iter().filter(|r| !r.converged).count(),
        error: traj.stop_detail.clone(),
    }
}

/// Runs every replication on the global thread pool.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    run_experiment_with_workers(spec, None)
}

/// Runs the replications on a pool of `workers` threads (all cores when
/// `None`). The report does not depend on the worker count.
pub fn run_experiment_with_workers(spec: &ExperimentSpec, workers: Option<usize>) -> Result<ExperimentReport> {
    spec.validate()?;
    let start = Instant::now();
    let generator = Generator::new(spec)?;
    let work = || -> Vec<ReplicationRecord> {
        (0..spec.replications)
            .into_par_iter()
            .map(|rep| replicate(spec, &generator, rep))
            .collect()
    };
    let records = match workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    };

    let success_count = records.iter().filter(|r| r.success).count();
    let mut coverage: Vec<usize> = records.iter().filter_map(|r| r.iterations_to_coverage).collect();
    coverage.sort_unstable();
    let mean_cov = (!coverage.is_empty())
        .then(|| coverage.iter().sum::<usize>() as f64 / coverage.len() as f64);
    let median_cov = (!coverage.is_empty()).then(|| {
        let m = coverage.len();
        if m % 2 == 1 {
            coverage[m / 2] as f64
        } else {
            (coverage[m / 2 - 1] + coverage[m / 2]) as f64 / 2.0
        }
    });
    let mean_size = records.iter().map(|r| r.final_model_size).sum::<usize>() as f64 / records.len() as f64;
    Ok(ExperimentReport {
        schema_version: REPORT_SCHEMA_VERSION,
        spec: spec.clone(),
        success_count,
        replications: spec.replications,
        success_rate: success_count as f64 / spec.replications as f64,
        mean_iterations_to_coverage: mean_cov,
        median_iterations_to_coverage: median_cov,
        mean_final_model_size: mean_size,
        records,
        timing: Timing {
            wall_seconds: start.elapsed().as_secs_f64(),
        },
    })
}
