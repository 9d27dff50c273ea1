//! Domain types shared by every module: datasets, index sets, the true model,
//! penalty and algorithm configuration, rate constants and trajectories.
//!
//! Column indices are 0-based everywhere, including every I/O surface.

use std::collections::BTreeSet;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Design matrix `x` (n samples by p predictors) and response `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: DMatrix<f64>,
    y: DVector<f64>,
    column_names: Option<Vec<String>>,
    standardization: Option<Standardization>,
}

/// Affine maps applied by [`Dataset::standardize`]; column j was transformed as
/// `(x_j - x_means[j]) / x_scales[j]` and the response as `y - y_mean`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub x_means: Vec<f64>,
    pub x_scales: Vec<f64>,
    pub y_mean: f64,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        let (n, p) = x.shape();
        if n < 2 {
            return Err(Error::InvalidDataset(format!("need at least 2 samples, got {n}")));
        }
        if p < 1 {
            return Err(Error::InvalidDataset("need at least 1 predictor".into()));
        }
        if y.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "x has {n} rows but y has {} entries",
                y.len()
            )));
        }
        if let Some(pos) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset(format!(
                "non-finite entry in x at row {}, column {}",
                pos % n,
                pos / n
            )));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset(format!("non-finite entry in y at row {i}")));
        }
        Ok(Self {
            x,
            y,
            column_names: None,
            standardization: None,
        })
    }

    pub fn with_column_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.p() {
            return Err(Error::DimensionMismatch(format!(
                "{} column names for {} predictors",
                names.len(),
                self.p()
            )));
        }
        self.column_names = Some(names);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    /// Contiguous view of column `j` (storage is column-major).
    pub fn col(&self, j: usize) -> &[f64] {
        let n = self.n();
        &self.x.as_slice()[j * n..(j + 1) * n]
    }

    pub fn y_slice(&self) -> &[f64] {
        self.y.as_slice()
    }

    pub fn column_names(&self) -> Option<&[String]> {
        self.column_names.as_deref()
    }

    /// Name of column `j`, falling back to `x{j}`.
    pub fn column_name(&self, j: usize) -> String {
        match &self.column_names {
            Some(names) => names[j].clone(),
            None => format!("x{j}"),
        }
    }

    pub fn is_standardized(&self) -> bool {
        self.standardization.is_some()
    }

    pub fn standardization(&self) -> Option<&Standardization> {
        self.standardization.as_ref()
    }

    /// Centers every column and rescales it to `||x_j||^2 = n`; centers `y`.
    pub fn standardize(&self) -> Result<Dataset> {
        let (n, p) = self.x.shape();
        let nf = n as f64;
        let mut x = self.x.clone();
        let mut x_means = Vec::with_capacity(p);
        let mut x_scales = Vec::with_capacity(p);
        for j in 0..p {
            let mut col = x.column_mut(j);
            let mean = col.sum() / nf;
            let raw_sq: f64 = col.iter().map(|v| v * v).sum();
            col.add_scalar_mut(-mean);
            let centered_sq: f64 = col.iter().map(|v| v * v).sum();
            if centered_sq <= 1e-24 * raw_sq || centered_sq == 0.0 {
                return Err(Error::ConstantColumn(j));
            }
            let scale = (centered_sq / nf).sqrt();
            col /= scale;
            x_means.push(mean);
            x_scales.push(scale);
        }
        let y_mean = self.y.sum() / nf;
        let y = self.y.add_scalar(-y_mean);
        Ok(Dataset {
            x,
            y,
            column_names: self.column_names.clone(),
            standardization: Some(Standardization {
                x_means,
                x_scales,
                y_mean,
            }),
        })
    }

    /// Copy of `x` restricted to the given columns, in the given order.
    pub fn columns(&self, idx: &[usize]) -> DMatrix<f64> {
        self.x.select_columns(idx)
    }
}

impl Standardization {
    /// Maps coefficients fitted on standardized columns back to the original
    /// scale. Returns `(intercept, raw coefficients)`.
    pub fn back_transform(&self, coefs: &[(usize, f64)]) -> (f64, Vec<(usize, f64)>) {
        let raw: Vec<(usize, f64)> = coefs
            .iter()
            .map(|&(j, b)| (j, b / self.x_scales[j]))
            .collect();
        let intercept = self.y_mean - raw.iter().map(|&(j, b)| self.x_means[j] * b).sum::<f64>();
        (intercept, raw)
    }
}

/// Ordered list of distinct column indices.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct IndexSet(pub(crate) Vec<usize>);

impl IndexSet {
    pub fn empty() -> Self {
        Self(Vec::new())
    }

    pub fn new(indices: Vec<usize>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for &i in &indices {
            if !seen.insert(i) {
                return Err(Error::InvalidIndexSet(format!("duplicate index {i}")));
            }
        }
        Ok(Self(indices))
    }

    pub fn check_bounds(&self, p: usize) -> Result<()> {
        match self.0.iter().find(|&&i| i >= p) {
            Some(i) => Err(Error::InvalidIndexSet(format!("index {i} out of range for p = {p}"))),
            None => Ok(()),
        }
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, j: usize) -> bool {
        self.0.contains(&j)
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }

    pub fn sorted(&self) -> IndexSet {
        let mut v = self.0.clone();
        v.sort_unstable();
        IndexSet(v)
    }

    /// `self` followed by the members of `other` not already present.
    pub fn union(&self, other: &IndexSet) -> IndexSet {
        let mut v = self.0.clone();
        for j in other.iter() {
            if !v.contains(&j) {
                v.push(j);
            }
        }
        IndexSet(v)
    }

    pub fn is_disjoint(&self, other: &IndexSet) -> bool {
        other.iter().all(|j| !self.contains(j))
    }

    pub fn is_subset_of(&self, other: &IndexSet) -> bool {
        self.iter().all(|j| other.contains(j))
    }

    /// Equality as sets, ignoring order.
    pub fn set_eq(&self, other: &IndexSet) -> bool {
        self.len() == other.len() && self.is_subset_of(other)
    }

    /// Indices in `0..p` that are not members.
    pub fn complement(&self, p: usize) -> Vec<usize> {
        let mut mask = vec![false; p];
        for j in self.iter() {
            mask[j] = true;
        }
        (0..p).filter(|&j| !mask[j]).collect()
    }
}

impl TryFrom<Vec<usize>> for IndexSet {
    type Error = Error;

    fn try_from(v: Vec<usize>) -> Result<Self> {
        IndexSet::new(v)
    }
}

impl From<IndexSet> for Vec<usize> {
    fn from(s: IndexSet) -> Self {
        s.0
    }
}

impl fmt::Display for IndexSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, j) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{j}")?;
        }
        write!(f, "}}")
    }
}

/// Support `T` and coefficient vector `beta` of the data-generating model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueModel {
    indices: Vec<usize>,
    beta: Vec<f64>,
}

impl TrueModel {
    /// Builds the model from a full-length coefficient vector; the support is
    /// read off the nonzero entries.
    pub fn from_beta(beta: Vec<f64>) -> Result<Self> {
        if beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidConfig("non-finite coefficient".into()));
        }
        let indices = beta
            .iter()
            .enumerate()
            .filter(|(_, b)| **b != 0.0)
            .map(|(j, _)| j)
            .collect();
        Ok(Self { indices, beta })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn support(&self) -> IndexSet {
        IndexSet(self.indices.clone())
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn t(&self) -> usize {
        self.indices.len()
    }

    pub fn p(&self) -> usize {
        self.beta.len()
    }

    /// Smallest nonzero magnitude; `None` when the support is empty.
    pub fn beta_min(&self) -> Option<f64> {
        self.indices
            .iter()
            .map(|&j| self.beta[j].abs())
            .min_by(f64::total_cmp)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PenaltyKind {
    Lasso,
    Scad,
}

pub const DEFAULT_SCAD_A: f64 = 3.7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltySpec {
    pub kind: PenaltyKind,
    pub lambda: f64,
    pub scad_a: f64,
}

impl PenaltySpec {
    pub fn lasso(lambda: f64) -> Result<Self> {
        Self::new(PenaltyKind::Lasso, lambda, DEFAULT_SCAD_A)
    }

    pub fn scad(lambda: f64, a: f64) -> Result<Self> {
        Self::new(PenaltyKind::Scad, lambda, a)
    }

    pub fn new(kind: PenaltyKind, lambda: f64, scad_a: f64) -> Result<Self> {
        let spec = Self { kind, lambda, scad_a };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidPenalty(format!("lambda must be positive, got {}", self.lambda)));
        }
        if !(self.scad_a > 2.0 && self.scad_a.is_finite()) {
            return Err(Error::InvalidPenalty(format!("SCAD a must exceed 2, got {}", self.scad_a)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScreeningCriterion {
    /// Largest `|X_i^T M_S Y|`.
    Scr1,
    /// Smallest RSS after adding column i.
    Scr2,
    /// Largest joint-fit coefficient `|beta_i|`.
    Scr3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SelectionCriterion {
    /// `S_{k+1} = S_k ∪ A_{k+1}`.
    Sel1,
    /// Penalized fit of the current residual on the screened columns.
    Sel2,
    /// Penalized fit of `Y` on the current model plus the screened columns.
    Sel3,
}

impl SelectionCriterion {
    pub fn is_penalized(self) -> bool {
        !matches!(self, SelectionCriterion::Sel1)
    }
}

/// Screening sizes `a_k`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScreenSizes {
    /// Same size every step, truncated so the running total never exceeds p.
    Constant(usize),
    /// Explicit `a_1..a_k` for every step.
    Schedule(Vec<usize>),
}

impl ScreenSizes {
    /// `a_k` for 1-based step `k`; 0 once the budget of p columns is spent.
    pub fn size_at(&self, k: usize, p: usize) -> usize {
        match self {
            ScreenSizes::Constant(a) => {
                let spent = a.saturating_mul(k - 1);
                (*a).min(p.saturating_sub(spent))
            }
            ScreenSizes::Schedule(v) => v.get(k - 1).copied().unwrap_or(0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmConfig {
    pub screening: ScreeningCriterion,
    pub selection: SelectionCriterion,
    pub screen_sizes: ScreenSizes,
    pub max_iters: usize,
    pub penalty: Option<PenaltySpec>,
    pub stop_on_fixed_point: bool,
}

impl AlgorithmConfig {
    pub fn validate(&self, p: usize) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::InvalidConfig("max_iters must be positive".into()));
        }
        match &self.screen_sizes {
            ScreenSizes::Constant(a) => {
                if *a == 0 {
                    return Err(Error::InvalidConfig("screen size must be at least 1".into()));
                }
            }
            ScreenSizes::Schedule(v) => {
                if v.len() != self.max_iters {
                    return Err(Error::InvalidConfig(format!(
                        "schedule has {} entries but max_iters is {}",
                        v.len(),
                        self.max_iters
                    )));
                }
                if v.contains(&0) {
                    return Err(Error::InvalidConfig("screen size must be at least 1".into()));
                }
                let total: usize = v.iter().sum();
                if total > p {
                    return Err(Error::InvalidConfig(format!(
                        "schedule total {total} exceeds p = {p}"
                    )));
                }
            }
        }
        match (self.selection.is_penalized(), &self.penalty) {
            (true, None) => Err(Error::InvalidConfig(format!(
                "{:?} requires a penalty",
                self.selection
            ))),
            (false, Some(_)) => Err(Error::InvalidConfig("Sel1 takes no penalty".into())),
            (true, Some(pen)) => pen.validate(),
            (false, None) => Ok(()),
        }
    }
}

/// Constants of the rate assumptions that enter the iteration-count and
/// tuning-parameter bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
/// Each `(c_*, xi_*)` pair describes a quantity bounded by `c * n^xi`.
pub struct RateConstants {
    /// True model size.
    pub c_t: f64,
    pub xi_t: f64,
    /// `log p`.
    pub c_p: f64,
    pub xi_p: f64,
    /// Smallest nonzero coefficient, as a lower bound `c_beta * n^-xi_beta`.
    pub c_beta: f64,
    pub xi_beta: f64,
    /// Response variance.
    pub c_y: f64,
    pub xi_y: f64,
    /// Eigenvalue bounds of small sample Gram submatrices.
    pub tau_min: f64,
    pub tau_max: f64,
    /// Total screening budget `sum a_k`.
    pub c_s: f64,
    pub xi_s: f64,
}

impl RateConstants {
    pub fn validate(&self) -> Result<()> {
        let all = [
            ("c_t", self.c_t),
            ("xi_t", self.xi_t),
            ("c_p", self.c_p),
            ("xi_p", self.xi_p),
            ("c_beta", self.c_beta),
            ("xi_beta", self.xi_beta),
            ("c_y", self.c_y),
            ("xi_y", self.xi_y),
            ("tau_min", self.tau_min),
            ("tau_max", self.tau_max),
            ("c_s", self.c_s),
            ("xi_s", self.xi_s),
        ];
        for (name, v) in all {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidRates(format!("{name} must be finite and nonnegative")));
            }
        }
        if !(self.tau_min > 0.0 && self.tau_min < self.tau_max) {
            return Err(Error::InvalidRates("require 0 < tau_min < tau_max".into()));
        }
        if self.c_beta <= 0.0 || self.c_y <= 0.0 {
            return Err(Error::InvalidRates("c_beta and c_y must be positive".into()));
        }
        if self.xi_p + 3.0 * self.xi_t.max(self.xi_s) >= 1.0 {
            return Err(Error::InvalidRates("require xi_p + 3 max(xi_t, xi_s) < 1".into()));
        }
        Ok(())
    }

    /// `8 c_y tau_max^3 / (c_beta^2 tau_min^4)`.
    pub fn iteration_constant(&self) -> f64 {
        8.0 * self.c_y * self.tau_max.powi(3) / (self.c_beta.powi(2) * self.tau_min.powi(4))
    }

    /// `max(xi_t, xi_s)`.
    pub fn size_exponent(&self) -> f64 {
        self.xi_t.max(self.xi_s)
    }

    /// `4 c_y max(c_t, c_s) / tau_min`.
    pub fn penalty_constant(&self) -> f64 {
        4.0 * self.c_y * self.c_t.max(self.c_s) / self.tau_min
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxIters,
    FixedPoint,
    AllColumnsUsed,
    RankDeficient,
    NoEligibleColumns,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub k: usize,
    /// `A_k`, in ranking order.
    pub screened: IndexSet,
    /// `B_k` under Sel2, `A_k` under Sel1, `S_k ∩ A_k` under Sel3.
    pub selected_new: IndexSet,
    /// `S_k`.
    pub model: IndexSet,
    /// `||M_{S_k} Y||^2`.
    pub rss: f64,
    /// `rho_k`: the RSS under Sel1, otherwise the penalized objective of the step.
    pub objective: f64,
    /// Columns skipped by the rank guard during screening.
    pub ineligible: usize,
    /// False when the penalized solver hit its iteration cap.
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub records: Vec<IterationRecord>,
    pub stop_reason: StopReason,
    pub stop_detail: Option<String>,
    /// Whether the run used standardized predictors.
    pub standardized: bool,
}

impl Trajectory {
    pub fn final_model(&self) -> Option<&IndexSet> {
        self.records.last().map(|r| &r.model)
    }

    pub fn models(&self) -> impl Iterator<Item = &IndexSet> {
        self.records.iter().map(|r| &r.model)
    }

    pub fn rss_path(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.rss).collect()
    }
}
