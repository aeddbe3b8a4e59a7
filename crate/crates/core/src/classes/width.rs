//! Constrained widths `Δ_t(x) = max_{f ∈ ℱ} ‖f(x) − f_t(x)‖` over the members
//! whose queried history deviation stays within the budget Ψ.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{dist, sq_dist, ModelClass};
use crate::error::{invalid, AilError, Result};
use crate::link::ScoreVector;

/// Ridge added to linear Gram matrices against rank deficiency.
const GRAM_JITTER: f64 = 1e-9;

/// One past round as seen by the width constraint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub context: usize,
    /// The learner's prediction `f_s(x_s)` at that round (the anchor).
    pub prediction: ScoreVector,
    /// `Z_s`.
    pub queried: bool,
}

/// Budget Ψ and the history it constrains.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct WidthBudget {
    pub psi: f64,
    pub history: Vec<HistoryEntry>,
}

fn check_budget(class: &ModelClass, budget: &WidthBudget) -> Result<()> {
    if !(budget.psi >= 0.0) {
        return Err(invalid("psi must be nonnegative"));
    }
    for h in &budget.history {
        if h.context >= class.num_contexts() {
            return Err(AilError::UnknownContext { context: h.context, size: class.num_contexts() });
        }
        if h.prediction.len() != class.actions() {
            return Err(invalid("history prediction has the wrong length"));
        }
    }
    Ok(())
}

/// Members with `Σ_s Z_s ‖f(x_s) − f_s(x_s)‖² ≤ Ψ` (finite kinds).
pub fn feasible_members(class: &ModelClass, budget: &WidthBudget) -> Result<Vec<usize>> {
    let n = class.members_or_err()?;
    check_budget(class, budget)?;
    let mut v = vec![0.0; class.actions()];
    Ok((0..n)
        .filter(|&m| {
            let mut s = 0.0;
            for h in budget.history.iter().filter(|h| h.queried) {
                class.score_into(m, h.context, &mut v);
                s += sq_dist(&v, &h.prediction);
            }
            s <= budget.psi
        })
        .collect())
}

/// Reference width computation from the full history.
///
/// Returns `None` when no member satisfies the budget (the caller then
/// force-queries). Linear classes use the closed-form ellipsoid maximum
/// `√Ψ‖φ(x)‖_{A⁻¹}` per action combined by the 2-norm, with
/// `A = I + Σ_s Z_s φ(x_s)φ(x_s)ᵀ`.
pub fn constrained_width(class: &ModelClass, budget: &WidthBudget, x: usize, anchor: &[f64]) -> Result<Option<f64>> {
    check_budget(class, budget)?;
    if x >= class.num_contexts() {
        return Err(AilError::UnknownContext { context: x, size: class.num_contexts() });
    }
    if anchor.len() != class.actions() {
        return Err(invalid("anchor has the wrong length"));
    }
    if class.is_finite() {
        let feasible = feasible_members(class, budget)?;
        let mut v = vec![0.0; class.actions()];
        Ok(feasible
            .into_iter()
            .map(|m| {
                class.score_into(m, x, &mut v);
                dist(&v, anchor)
            })
            .fold(None, |acc: Option<f64>, d| Some(acc.map_or(d, |a| a.max(d)))))
    } else {
        let d = class.feature_dim().expect("linear");
        let mut gram = DMatrix::<f64>::identity(d, d) * (1.0 + GRAM_JITTER);
        for h in budget.history.iter().filter(|h| h.queried) {
            let phi = DVector::from_column_slice(class.features(h.context).expect("context checked"));
            gram += &phi * phi.transpose();
        }
        Ok(Some(linear_width(&gram, class.features(x).expect("context checked"), budget.psi, class.actions())))
    }
}

fn linear_width(gram: &DMatrix<f64>, phi: &[f64], psi: f64, actions: usize) -> f64 {
    let phi = DVector::from_column_slice(phi);
    let chol = gram.clone().cholesky().expect("Gram matrix is positive definite");
    let q = phi.dot(&chol.solve(&phi)).max(0.0);
    (actions as f64 * psi * q).sqrt()
}

/// How a [`WidthTracker`] evaluates widths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WidthMode {
    /// Recompute from the full history every call.
    Reference,
    /// Maintain per-member deviation sums (or the Gram matrix) incrementally.
    #[default]
    Cached,
}

/// Running width state of one learner.
#[derive(Debug, Clone)]
pub struct WidthTracker {
    mode: WidthMode,
    budget: WidthBudget,
    sums: Vec<f64>,
    gram: Option<DMatrix<f64>>,
    scratch: Vec<f64>,
}

impl WidthTracker {
    pub fn new(class: &ModelClass, psi: f64, mode: WidthMode) -> Result<Self> {
        if !(psi >= 0.0) {
            return Err(invalid("psi must be nonnegative"));
        }
        let (sums, gram) = match class.num_members() {
            Some(n) => (vec![0.0; if mode == WidthMode::Cached { n } else { 0 }], None),
            None => {
                let d = class.feature_dim().expect("linear");
                (Vec::new(), Some(DMatrix::<f64>::identity(d, d) * (1.0 + GRAM_JITTER)))
            }
        };
        Ok(Self { mode, budget: WidthBudget { psi, history: Vec::new() }, sums, gram, scratch: vec![0.0; class.actions()] })
    }

    pub fn psi(&self) -> f64 {
        self.budget.psi
    }

    pub fn budget(&self) -> &WidthBudget {
        &self.budget
    }

    /// Width at `x` around `anchor = f_t(x)`; `None` if nothing is feasible.
    pub fn width(&mut self, class: &ModelClass, x: usize, anchor: &[f64]) -> Result<Option<f64>> {
        match self.mode {
            WidthMode::Reference => constrained_width(class, &self.budget, x, anchor),
            WidthMode::Cached => match &self.gram {
                Some(gram) => {
                    let phi = class.features(x).ok_or(AilError::UnknownContext { context: x, size: class.num_contexts() })?;
                    Ok(Some(linear_width(gram, phi, self.budget.psi, class.actions())))
                }
                None => {
                    let psi = self.budget.psi;
                    let mut best: Option<f64> = None;
                    for (m, &s) in self.sums.iter().enumerate() {
                        if s <= psi {
                            class.score_into(m, x, &mut self.scratch);
                            let d = dist(&self.scratch, anchor);
                            best = Some(best.map_or(d, |b| b.max(d)));
                        }
                    }
                    Ok(best)
                }
            },
        }
    }

    /// Whether finite member `m` satisfies the budget.
    pub fn is_feasible(&self, class: &ModelClass, m: usize) -> bool {
        match self.mode {
            WidthMode::Cached => self.sums[m] <= self.budget.psi,
            WidthMode::Reference => {
                let mut v = vec![0.0; class.actions()];
                let s: f64 = self
                    .budget
                    .history
                    .iter()
                    .filter(|h| h.queried)
                    .map(|h| {
                        class.score_into(m, h.context, &mut v);
                        sq_dist(&v, &h.prediction)
                    })
                    .sum();
                s <= self.budget.psi
            }
        }
    }

    /// Feasible finite members.
    pub fn feasible(&self, class: &ModelClass) -> Vec<usize> {
        let n = class.num_members().unwrap_or(0);
        (0..n).filter(|&m| self.is_feasible(class, m)).collect()
    }

    /// Append round `(x, f_t(x), Z_t)` to the history.
    pub fn record(&mut self, class: &ModelClass, x: usize, prediction: &[f64], queried: bool) {
        if queried && self.mode == WidthMode::Cached {
            match &mut self.gram {
                Some(gram) => {
                    let phi = DVector::from_column_slice(class.features(x).expect("linear context"));
                    *gram += &phi * phi.transpose();
                }
                None => {
                    for (m, s) in self.sums.iter_mut().enumerate() {
                        match class.table_row(m, x) {
                            Some(row) => *s += sq_dist(row, prediction),
                            None => {
                                class.score_into(m, x, &mut self.scratch);
                                *s += sq_dist(&self.scratch, prediction);
                            }
                        }
                    }
                }
            }
        }
        if self.mode == WidthMode::Reference {
            self.budget.history.push(HistoryEntry { context: x, prediction: prediction.to_vec(), queried });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Scalar class `{f₁ ≡ 0, f₂}` with `f₂ = 0.6` at context 0 and `1` at context 1.
    fn two_members() -> ModelClass {
        ModelClass::finite(1, vec![vec![vec![0.0], vec![0.0]], vec![vec![0.6], vec![1.0]]], 0, 1.0).unwrap()
    }

    #[test]
    fn width_examples() {
        let c = two_members();
        let empty = WidthBudget { psi: 1.0, history: vec![] };
        assert!((constrained_width(&c, &empty, 0, &[0.0]).unwrap().unwrap() - 0.6).abs() < 1e-15);
        let hist = vec![HistoryEntry { context: 1, prediction: vec![0.0], queried: true }];
        let tight = WidthBudget { psi: 0.5, history: hist.clone() };
        assert_eq!(constrained_width(&c, &tight, 0, &[0.0]).unwrap(), Some(0.0));
        // Degenerate budget: Ψ = 0 leaves only members matching the anchors exactly.
        let zero = WidthBudget { psi: 0.0, history: vec![] };
        assert!((constrained_width(&c, &zero, 0, &[0.0]).unwrap().unwrap() - 0.6).abs() < 1e-15);
        let zero_hist = WidthBudget { psi: 0.0, history: hist };
        assert_eq!(feasible_members(&c, &zero_hist).unwrap(), vec![0]);
        // Unqueried history rounds never constrain.
        let silent = WidthBudget { psi: 0.0, history: vec![HistoryEntry { context: 1, prediction: vec![0.0], queried: false }] };
        assert_eq!(feasible_members(&c, &silent).unwrap(), vec![0, 1]);
    }

    #[test]
    fn empty_feasible_set_is_none() {
        let c = two_members();
        let hist = vec![HistoryEntry { context: 1, prediction: vec![0.5], queried: true }];
        let b = WidthBudget { psi: 0.1, history: hist };
        assert_eq!(constrained_width(&c, &b, 0, &[0.0]).unwrap(), None);
    }

    #[test]
    fn linear_width_closed_form() {
        let c =
            ModelClass::linear(2, vec![vec![1.0, 0.0], vec![0.0, 1.0]], 1.0, vec![vec![0.5, 0.0], vec![0.0, 0.5]], 1.0).unwrap();
        let b = WidthBudget { psi: 4.0, history: vec![] };
        // A = I: √(KΨ)·‖φ‖ = √8.
        let w = constrained_width(&c, &b, 0, &[0.0, 0.0]).unwrap().unwrap();
        assert!((w - 8f64.sqrt()).abs() < 1e-6);
        let hist = vec![HistoryEntry { context: 0, prediction: vec![0.0, 0.0], queried: true }; 3];
        let b = WidthBudget { psi: 4.0, history: hist };
        let w = constrained_width(&c, &b, 0, &[0.0, 0.0]).unwrap().unwrap();
        assert!((w - 2f64.sqrt()).abs() < 1e-6);
    }

    #[test]
    fn cached_matches_reference() {
        let c = ModelClass::from_fn(2, 6, 4, 0, 1.0, |m, x| {
            let p = ((m * 7 + x * 3) % 10) as f64 / 10.0;
            vec![p, 1.0 - p]
        })
        .unwrap();
        let mut a = WidthTracker::new(&c, 0.8, WidthMode::Reference).unwrap();
        let mut b = WidthTracker::new(&c, 0.8, WidthMode::Cached).unwrap();
        for t in 0..40 {
            let x = (t * 5) % 4;
            let pred = vec![0.5 + 0.01 * (t % 7) as f64, 0.5 - 0.01 * (t % 7) as f64];
            assert_eq!(a.width(&c, x, &pred).unwrap(), b.width(&c, x, &pred).unwrap());
            a.record(&c, x, &pred, t % 3 != 0);
            b.record(&c, x, &pred, t % 3 != 0);
            assert_eq!(a.feasible(&c), b.feasible(&c));
        }
    }
}
