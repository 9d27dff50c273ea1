//! The iterative screening loop, named presets, iteration/tuning helpers
//! derived from the rate constants, and the sure-screening check.

use serde::{Deserialize, Serialize};

use crate::criteria::{screen, select};
use crate::error::{Error, Result};
use crate::model::{
    AlgorithmConfig, Dataset, IndexSet, IterationRecord, PenaltySpec, RateConstants,
    ScreenSizes, ScreeningCriterion, SelectionCriterion, StopReason, Trajectory, TrueModel,
};
use crate::penalty::SolverOptions;
use crate::projection::ActiveSetState;

/// Iteration cap used when no rate constants are available.
pub const DEFAULT_MAX_ITERS: usize = 10;

/// `ceil(n / ln n)`, the classical screening size.
pub fn default_screen_size(n: usize) -> usize {
    let nf = n as f64;
    ((nf / nf.ln()).ceil() as usize).max(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Preset {
    /// Scr1-Sel2.
    Isis,
    /// Scr2-Sel3.
    VanIsis,
    /// Scr3-Sel3.
    VanIsisR,
    /// Forward regression: Scr2-Sel1 with one column per step.
    Fr,
    /// One round of marginal screening: Scr1-Sel1, a single step.
    SisOnce,
    /// Scr1-Sel1.
    NpIsis,
    /// Scr2-Sel1.
    NpVanIsis,
    /// Scr3-Sel1.
    NpVanIsisR,
}

impl Preset {
    pub fn criteria(self) -> (ScreeningCriterion, SelectionCriterion) {
        use ScreeningCriterion::*;
        use SelectionCriterion::*;
        match self {
            Preset::Isis => (Scr1, Sel2),
            Preset::VanIsis => (Scr2, Sel3),
            Preset::VanIsisR => (Scr3, Sel3),
            Preset::Fr => (Scr2, Sel1),
            Preset::SisOnce | Preset::NpIsis => (Scr1, Sel1),
            Preset::NpVanIsis => (Scr2, Sel1),
            Preset::NpVanIsisR => (Scr3, Sel1),
        }
    }

    /// Resolves the preset for a dataset of size `n`. Unspecified pieces take
    /// the defaults: `a_k = ceil(n / ln n)` (one for FR), ten iterations (one
    /// for SIS), fixed-point stopping for the Sel3 presets.
    pub fn config(
        self,
        n: usize,
        penalty: Option<PenaltySpec>,
        max_iters: Option<usize>,
        screen_sizes: Option<ScreenSizes>,
    ) -> AlgorithmConfig {
        let (screening, selection) = self.criteria();
        let screen_sizes = screen_sizes.or(match self {
            Preset::Fr => Some(ScreenSizes::Constant(1)),
            _ => None,
        });
        let max_iters = max_iters.or(match self {
            Preset::SisOnce => Some(1),
            _ => None,
        });
        explicit_config(screening, selection, n, penalty, max_iters, screen_sizes)
    }
}

/// Configuration from explicit criteria with the same defaults the presets
/// use: `a_k = ceil(n / ln n)`, ten iterations, fixed-point stopping under
/// Sel3.
pub fn explicit_config(
    screening: ScreeningCriterion,
    selection: SelectionCriterion,
    n: usize,
    penalty: Option<PenaltySpec>,
    max_iters: Option<usize>,
    screen_sizes: Option<ScreenSizes>,
) -> AlgorithmConfig {
    AlgorithmConfig {
        screening,
        selection,
        screen_sizes: screen_sizes.unwrap_or(ScreenSizes::Constant(default_screen_size(n))),
        max_iters: max_iters.unwrap_or(DEFAULT_MAX_ITERS),
        penalty,
        stop_on_fixed_point: selection == SelectionCriterion::Sel3,
    }
}

/// Runs the configured algorithm with default solver options.
pub fn run(dataset: &Dataset, config: &AlgorithmConfig) -> Result<Trajectory> {
    run_with_options(dataset, config, &SolverOptions::default())
}

/// Runs screening and selection until `max_iters` steps, an exhausted
/// budget, a fixed point (Sel3 with `stop_on_fixed_point`) or a numerical
/// failure. Numerical failures end the trajectory with a stop reason; only an
/// invalid configuration is an error.
pub fn run_with_options(
    dataset: &Dataset,
    config: &AlgorithmConfig,
    opts: &SolverOptions,
) -> Result<Trajectory> {
    let p = dataset.p();
    config.validate(p)?;
    let penalty = config.penalty.as_ref();
    let mut state = ActiveSetState::new(dataset);
    let mut records: Vec<IterationRecord> = Vec::new();
    let mut warm: Vec<(usize, f64)> = Vec::new();
    let mut stop_detail = None;

    let stop_reason = 'outer: {
        for k in 1..=config.max_iters {
            let size = config.screen_sizes.size_at(k, p);
            if size == 0 || state.active().len() == p {
                break 'outer StopReason::AllColumnsUsed;
            }
            let screened = match screen(config.screening, &state, size) {
                Ok(out) => out,
                Err(Error::NoEligibleColumns) => break 'outer StopReason::NoEligibleColumns,
                Err(e) => return Err(e),
            };
            let warm_start = (config.selection == SelectionCriterion::Sel3).then_some(warm.as_slice());
            let sel = match select(
                config.selection,
                &state,
                &screened.selected,
                penalty,
                opts,
                warm_start,
            ) {
                Ok(sel) => sel,
                Err(e) if e.is_numerical() => {
                    stop_detail = Some(e.to_string());
                    break 'outer StopReason::RankDeficient;
                }
                Err(e) => return Err(e),
            };
            let next = match config.selection {
                SelectionCriterion::Sel3 => ActiveSetState::for_model(dataset, &sel.model),
                _ => state.extend(&sel.new),
            };
            let next = match next {
                Ok(s) => s,
                Err(e @ Error::RankDeficient(_)) => {
                    stop_detail = Some(e.to_string());
                    break 'outer StopReason::RankDeficient;
                }
                Err(e) => return Err(e),
            };
            let fixed_point = config.selection == SelectionCriterion::Sel3
                && config.stop_on_fixed_point
                && sel.model.set_eq(state.active());
            records.push(IterationRecord {
                k,
                screened: screened.selected,
                selected_new: sel.new,
                model: sel.model,
                rss: next.rss(),
                objective: sel.objective.unwrap_or(next.rss()),
                ineligible: screened.ineligible.len(),
                converged: sel.converged,
            });
            warm = sel.coefficients;
            state = next;
            if fixed_point {
                break 'outer StopReason::FixedPoint;
            }
        }
        StopReason::MaxIters
    };

    Ok(Trajectory {
        records,
        stop_reason,
        stop_detail,
        standardized: dataset.is_standardized(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SelectionRegime {
    /// Unpenalized selection.
    Unpenalized,
    /// Penalized fit of the residual on the screened columns.
    ResidualPenalized,
    /// Penalized refit of the whole model.
    FullPenalized,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuggestedSchedule {
    pub iterations: u64,
    pub lambda_max: Option<f64>,
}

/// Evaluates the sufficient iteration count and the largest admissible
/// tuning parameter for the given rate constants.
///
/// The constants are unobservable on real data; this evaluates the formulas
/// as written and cannot check them against a dataset.
pub fn suggest_schedule(rates: &RateConstants, n: usize, mode: SelectionRegime) -> Result<SuggestedSchedule> {
    rates.validate()?;
    if n < 2 {
        return Err(Error::InvalidConfig(format!("need n >= 2, got {n}")));
    }
    let nf = n as f64;
    let growth = nf.powf(rates.xi_y + 2.0 * rates.xi_beta);
    let base = rates.iteration_constant();
    let sched = match mode {
        SelectionRegime::Unpenalized => SuggestedSchedule {
            iterations: (base * growth).ceil() as u64,
            lambda_max: None,
        },
        SelectionRegime::ResidualPenalized => SuggestedSchedule {
            iterations: (2.0 * base * growth).ceil() as u64,
            lambda_max: Some(
                rates.tau_min.powi(2) * rates.c_beta * nf.powf(-rates.xi_beta)
                    / (4.0 * rates.tau_max),
            ),
        },
        SelectionRegime::FullPenalized => {
            let exponent = -2.0 * rates.xi_beta - (rates.size_exponent() + rates.xi_y) / 2.0;
            SuggestedSchedule {
                iterations: (2.0 * base * growth).ceil() as u64,
                lambda_max: Some(
                    rates.tau_min.powi(4) * rates.c_beta.powi(2) * nf.powf(exponent)
                        / (8.0 * rates.penalty_constant().sqrt() * rates.tau_max.powi(3)),
                ),
            }
        }
    };
    Ok(sched)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SuccessMode {
    /// The final model contains the true support.
    Final,
    /// Some model along the trajectory contains the true support.
    Any,
}

impl SuccessMode {
    pub fn default_for(selection: SelectionCriterion) -> Self {
        match selection {
            SelectionCriterion::Sel3 => SuccessMode::Any,
            _ => SuccessMode::Final,
        }
    }
}

fn covers(model: &IndexSet, truth: &TrueModel) -> bool {
    truth.indices().iter().all(|&j| model.contains(j))
}

pub fn check_sure_screening(trajectory: &Trajectory, truth: &TrueModel, mode: SuccessMode) -> bool {
    if truth.t() == 0 {
        return true;
    }
    match mode {
        SuccessMode::Final => trajectory.final_model().is_some_and(|m| covers(m, truth)),
        SuccessMode::Any => trajectory.models().any(|m| covers(m, truth)),
    }
}
