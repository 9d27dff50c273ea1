//! Screening criteria (candidate set `A_{k+1}` from the current model) and
//! selection criteria (next model `S_{k+1}` from `S_k` and `A_{k+1}`).
//!
//! All three screening statistics are computed from `X_i^T M_S Y` and the
//! projected column norm, so one pass over the inactive columns suffices:
//!
//! * `Scr1`: `|X_i^T M_S Y|`
//! * `Scr2`: `(X_i^T M_S Y)^2 / ||M_S X_i||^2`, the RSS drop from adding `i`
//! * `Scr3`: `(X_i^T M_S Y)^2 / ||M_S X_i||^4`, the squared joint-fit coefficient
//!
//! Ties are broken towards the lower column index.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{IndexSet, PenaltySpec, ScreeningCriterion, SelectionCriterion};
use crate::penalty::{accept_soft, solve_pls, solve_pls_from, SolverOptions};
use crate::projection::ActiveSetState;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScreenScore {
    pub index: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScreenOutcome {
    /// Chosen columns, best first.
    pub selected: IndexSet,
    pub scores: Vec<ScreenScore>,
    /// Inactive columns skipped by the rank guard (Scr2/Scr3 only).
    pub ineligible: Vec<usize>,
}

/// Sorts by descending score, then ascending index, and keeps the first `a`.
pub fn top_scores(mut scores: Vec<ScreenScore>, a: usize) -> Vec<ScreenScore> {
    scores.sort_by(|l, r| r.score.total_cmp(&l.score).then(l.index.cmp(&r.index)));
    scores.truncate(a);
    scores
}

fn score_of(criterion: ScreeningCriterion, state: &ActiveSetState<'_>, j: usize) -> Option<f64> {
    match criterion {
        ScreeningCriterion::Scr1 => state.marginal_stat(j).ok().map(f64::abs),
        ScreeningCriterion::Scr2 => state.guarded_stats(j).ok().map(|(m, pn)| m * m / pn),
        ScreeningCriterion::Scr3 => state
            .guarded_stats(j)
            .ok()
            .map(|(m, pn)| m * m / (pn * pn)),
    }
}

/// Returns the `min(size, #eligible)` inactive columns ranking highest under
/// `criterion`.
pub fn screen(
    criterion: ScreeningCriterion,
    state: &ActiveSetState<'_>,
    size: usize,
) -> Result<ScreenOutcome> {
    if size == 0 {
        return Err(Error::InvalidConfig("screen size must be at least 1".into()));
    }
    let p = state.dataset().p();
    let inactive = state.active().complement(p);
    let raw: Vec<(usize, Option<f64>)> = inactive
        .par_iter()
        .map(|&j| (j, score_of(criterion, state, j)))
        .collect();
    let mut scores = Vec::with_capacity(raw.len());
    let mut ineligible = Vec::new();
    for (j, s) in raw {
        match s {
            Some(score) if score.is_finite() => scores.push(ScreenScore { index: j, score }),
            _ => ineligible.push(j),
        }
    }
    if scores.is_empty() {
        return Err(Error::NoEligibleColumns);
    }
    let top = top_scores(scores, size);
    let selected = IndexSet(top.iter().map(|s| s.index).collect());
    Ok(ScreenOutcome {
        selected,
        scores: top,
        ineligible,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionOutcome {
    /// `S_{k+1}`.
    pub model: IndexSet,
    /// Members of the screened set that entered the model.
    pub new: IndexSet,
    /// Penalized objective of the step; `None` under Sel1.
    pub objective: Option<f64>,
    pub converged: bool,
    /// Nonzero penalized coefficients keyed by column index (Sel2/Sel3).
    pub coefficients: Vec<(usize, f64)>,
}

/// Forms `S_{k+1}` from the state for `S_k` and the screened set.
///
/// `warm` holds the previous step's coefficients keyed by column; under Sel3
/// with SCAD it seeds a second local solve so the penalized objective cannot
/// rise across steps.
pub fn select(
    criterion: SelectionCriterion,
    state: &ActiveSetState<'_>,
    screened: &IndexSet,
    penalty: Option<&PenaltySpec>,
    opts: &SolverOptions,
    warm: Option<&[(usize, f64)]>,
) -> Result<SelectionOutcome> {
    let data = state.dataset();
    screened.check_bounds(data.p())?;
    if let Some(j) = screened.iter().find(|&j| state.active().contains(j)) {
        return Err(Error::IndexActive(j));
    }
    let penalty = match (criterion.is_penalized(), penalty) {
        (true, Some(p)) => Some(p),
        (true, None) => {
            return Err(Error::InvalidConfig(format!("{criterion:?} requires a penalty")))
        }
        (false, Some(_)) => return Err(Error::InvalidConfig("Sel1 takes no penalty".into())),
        (false, None) => None,
    };
    match criterion {
        SelectionCriterion::Sel1 => Ok(SelectionOutcome {
            model: state.active().union(screened),
            new: screened.clone(),
            objective: None,
            converged: true,
            coefficients: Vec::new(),
        }),
        SelectionCriterion::Sel2 => {
            let pen = penalty.expect("checked above");
            if screened.is_empty() {
                return Ok(SelectionOutcome {
                    model: state.active().clone(),
                    new: IndexSet::empty(),
                    objective: Some(state.rss()),
                    converged: true,
                    coefficients: Vec::new(),
                });
            }
            let xa = data.columns(screened.as_slice());
            let sol = accept_soft(solve_pls(&xa, state.residual(), pen, opts))?;
            let new = IndexSet(sol.support.iter().map(|pos| screened.as_slice()[pos]).collect());
            let coefficients = sol
                .support
                .iter()
                .map(|pos| (screened.as_slice()[pos], sol.coefficients[pos]))
                .collect();
            Ok(SelectionOutcome {
                model: state.active().union(&new),
                new,
                objective: Some(sol.objective),
                converged: sol.converged,
                coefficients,
            })
        }
        SelectionCriterion::Sel3 => {
            let pen = penalty.expect("checked above");
            let cand = state.active().union(screened).sorted();
            if cand.is_empty() {
                return Ok(SelectionOutcome {
                    model: IndexSet::empty(),
                    new: IndexSet::empty(),
                    objective: Some(data.y().norm_squared()),
                    converged: true,
                    coefficients: Vec::new(),
                });
            }
            let xc = data.columns(cand.as_slice());
            let result = match warm {
                Some(prev) => {
                    let start: Vec<f64> = cand
                        .iter()
                        .map(|j| prev.iter().find(|(i, _)| *i == j).map_or(0.0, |(_, b)| *b))
                        .collect();
                    solve_pls_from(&xc, data.y_slice(), pen, opts, &start)
                }
                None => solve_pls(&xc, data.y_slice(), pen, opts),
            };
            let sol = accept_soft(result)?;
            let model = IndexSet(sol.support.iter().map(|pos| cand.as_slice()[pos]).collect());
            let new = IndexSet(model.iter().filter(|&j| screened.contains(j)).collect());
            let coefficients = sol
                .support
                .iter()
                .map(|pos| (cand.as_slice()[pos], sol.coefficients[pos]))
                .collect();
            Ok(SelectionOutcome {
                model,
                new,
                objective: Some(sol.objective),
                converged: sol.converged,
                coefficients,
            })
        }
    }
}
