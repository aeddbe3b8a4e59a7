//! Online regression oracles and regret budgets Ψ.
//!
//! Finite classes use exponential weights with mixture prediction; linear
//! classes use per-action forward (Vovk–Azoury–Warmuth) ridge regression under
//! the identity link. Oracles are only ever updated on queried rounds.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::classes::ModelClass;
use crate::error::{invalid, mismatch, AilError, Result};
use crate::link::{loss_of, ActionLabel, LinkKind, LinkSpec, ScoreVector};
use crate::numfmt::g17;

/// Oracle algorithm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleKind {
    ExpWeights,
    Ridge,
}

#[derive(Debug, Clone)]
enum Inner {
    Weights {
        /// Normalised weights.
        weights: Vec<f64>,
        /// Cumulative loss per member.
        ledger: Vec<f64>,
    },
    Ridge {
        /// Per-action `I + Σ φφᵀ`.
        grams: Vec<DMatrix<f64>>,
        /// Per-action `Σ φ·target`.
        targets: Vec<DVector<f64>>,
        /// Per-action cumulative square loss.
        ledger: Vec<f64>,
    },
}

/// Evolving oracle state `f_t`.
#[derive(Debug, Clone)]
pub struct OracleState {
    class: Arc<ModelClass>,
    link: LinkSpec,
    learning_rate: f64,
    inner: Inner,
    update_count: u64,
}

/// Default exponential-weights rate `η = λ / (2(1+B)²)`.
pub fn default_learning_rate(link: &LinkSpec) -> f64 {
    link.lambda / (2.0 * (1.0 + link.score_bound).powi(2))
}

/// Initialise an oracle on `class`: uniform weights or zeroed ridge statistics.
pub fn oracle_init(class: Arc<ModelClass>, link: LinkSpec, learning_rate: f64, kind: OracleKind) -> Result<OracleState> {
    link.validate()?;
    if !(learning_rate >= 0.0 && learning_rate.is_finite()) {
        return Err(invalid("learning rate must be finite and nonnegative"));
    }
    let inner = match (kind, class.num_members()) {
        (OracleKind::ExpWeights, Some(n)) => Inner::Weights { weights: vec![1.0 / n as f64; n], ledger: vec![0.0; n] },
        (OracleKind::Ridge, None) => {
            if link.kind != LinkKind::Identity {
                return Err(AilError::Unsupported("ridge oracle needs the identity link".into()));
            }
            let d = class.feature_dim().expect("linear");
            let k = class.actions();
            Inner::Ridge { grams: vec![DMatrix::identity(d, d); k], targets: vec![DVector::zeros(d); k], ledger: vec![0.0; k] }
        }
        (OracleKind::ExpWeights, None) => return Err(mismatch("exponential weights need a finite class")),
        (OracleKind::Ridge, Some(_)) => return Err(mismatch("ridge oracle needs a linear class")),
    };
    Ok(OracleState { class, link, learning_rate, inner, update_count: 0 })
}

impl OracleState {
    /// Oracle for `class` with the kind matching its representation.
    pub fn for_class(class: Arc<ModelClass>, link: LinkSpec, learning_rate: f64) -> Result<Self> {
        let kind = if class.is_finite() { OracleKind::ExpWeights } else { OracleKind::Ridge };
        oracle_init(class, link, learning_rate, kind)
    }

    pub fn class(&self) -> &Arc<ModelClass> {
        &self.class
    }

    pub fn link(&self) -> &LinkSpec {
        &self.link
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn update_count(&self) -> u64 {
        self.update_count
    }

    /// Member weights (finite kind).
    pub fn weights(&self) -> Option<&[f64]> {
        match &self.inner {
            Inner::Weights { weights, .. } => Some(weights),
            Inner::Ridge { .. } => None,
        }
    }

    /// Cumulative loss ledger: per member (finite) or per action (ridge).
    pub fn ledger(&self) -> &[f64] {
        match &self.inner {
            Inner::Weights { ledger, .. } | Inner::Ridge { ledger, .. } => ledger,
        }
    }

    /// Weights at 17 significant digits, one per line.
    pub fn snapshot(&self) -> String {
        let values: Vec<f64> = match &self.inner {
            Inner::Weights { weights, .. } => weights.clone(),
            Inner::Ridge { targets, .. } => targets.iter().flat_map(|b| b.iter().copied()).collect(),
        };
        values.iter().map(|&w| g17(w) + "\n").collect()
    }

    /// A regret bound `R` for the oracle over `horizon` updates.
    ///
    /// Exponential weights: `log|ℱ| / η`. Ridge (half square loss per action,
    /// targets in `[0, 1]`): `½K(W² + d·log(1 + T·X²/d))` with `X` the largest feature norm.
    pub fn regret_bound(&self, horizon: usize) -> f64 {
        match &self.inner {
            Inner::Weights { weights, .. } => {
                if self.learning_rate == 0.0 {
                    f64::INFINITY
                } else {
                    (weights.len() as f64).ln() / self.learning_rate
                }
            }
            Inner::Ridge { .. } => {
                let d = self.class.feature_dim().expect("linear") as f64;
                let w = self.class.weight_bound().expect("linear");
                let x2 = (0..self.class.num_contexts())
                    .map(|x| self.class.features(x).expect("linear").iter().map(|v| v * v).sum::<f64>())
                    .fold(0.0, f64::max);
                0.5 * self.class.actions() as f64 * (w * w + d * (1.0 + horizon as f64 * x2 / d).ln())
            }
        }
    }

    fn check_context(&self, x: usize) -> Result<()> {
        if x >= self.class.num_contexts() {
            return Err(AilError::UnknownContext { context: x, size: self.class.num_contexts() });
        }
        Ok(())
    }

    /// `f_t(x)` into `out` (unchecked hot path).
    pub(crate) fn predict_into(&self, x: usize, out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        match &self.inner {
            Inner::Weights { weights, .. } => {
                let mut v = vec![0.0; out.len()];
                for (m, &w) in weights.iter().enumerate() {
                    if w == 0.0 {
                        continue;
                    }
                    match self.class.table_row(m, x) {
                        Some(row) => out.iter_mut().zip(row).for_each(|(o, s)| *o += w * s),
                        None => {
                            self.class.score_into(m, x, &mut v);
                            out.iter_mut().zip(&v).for_each(|(o, s)| *o += w * s);
                        }
                    }
                }
            }
            Inner::Ridge { grams, targets, .. } => {
                let phi = DVector::from_column_slice(self.class.features(x).expect("linear context"));
                for (k, o) in out.iter_mut().enumerate() {
                    // Forward regularisation: include the current point in the Gram matrix.
                    let a = &grams[k] + &phi * phi.transpose();
                    let w = a.cholesky().expect("positive definite").solve(&targets[k]);
                    *o = w.dot(&phi);
                }
                let b = self.class.score_bound();
                let n = out.iter().map(|v| v * v).sum::<f64>().sqrt();
                if n > b {
                    out.iter_mut().for_each(|o| *o *= b / n);
                }
            }
        }
    }

    /// Add `losses` to the ledger and reset weights to `∝ exp(−η·ledger)`.
    fn reweight(weights: &mut [f64], ledger: &mut [f64], eta: f64, losses: &[f64]) {
        for (l, d) in ledger.iter_mut().zip(losses) {
            *l += d;
        }
        let best = ledger.iter().copied().fold(f64::INFINITY, f64::min);
        let mut z = 0.0;
        for (w, l) in weights.iter_mut().zip(ledger.iter()) {
            *w = (-eta * (l - best)).exp();
            z += *w;
        }
        weights.iter_mut().for_each(|w| *w /= z);
    }
}

/// `g(f(x))` for every finite member.
fn member_values(class: &ModelClass, x: usize, g: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let n = class.num_members().expect("finite");
    let mut v = vec![0.0; class.actions()];
    (0..n)
        .map(|m| match class.table_row(m, x) {
            Some(row) => g(row),
            None => {
                class.score_into(m, x, &mut v);
                g(&v)
            }
        })
        .collect()
}

/// `f_t(x)`: weight mixture (finite) or clipped ridge prediction (linear).
pub fn oracle_predict(state: &OracleState, x: usize) -> Result<ScoreVector> {
    state.check_context(x)?;
    let mut out = vec![0.0; state.class.actions()];
    state.predict_into(x, &mut out);
    Ok(out)
}

/// Full-feedback update with label `y`.
pub fn oracle_update(state: &mut OracleState, x: usize, y: ActionLabel) -> Result<()> {
    state.check_context(x)?;
    let k = state.class.actions();
    if y.index() >= k {
        return Err(AilError::ActionOutOfRange { action: y.one_based(), k });
    }
    let eta = state.learning_rate;
    let (class, link) = (state.class.clone(), state.link);
    let mut pred = vec![0.0; k];
    state.predict_into(x, &mut pred);
    match &mut state.inner {
        Inner::Weights { weights, ledger } => {
            let losses = member_values(&class, x, |v| loss_of(&link, v, y.index()));
            OracleState::reweight(weights, ledger, eta, &losses);
        }
        Inner::Ridge { grams, targets, ledger } => {
            let phi = DVector::from_column_slice(class.features(x).expect("linear context"));
            let outer = &phi * phi.transpose();
            for a in 0..k {
                let target = if a == y.index() { 1.0 } else { 0.0 };
                ledger[a] += 0.5 * (pred[a] - target).powi(2);
                grams[a] += &outer;
                targets[a] += &phi * target;
            }
        }
    }
    state.update_count += 1;
    Ok(())
}

/// Bandit-feedback update on coordinate `a` with square loss `(f(x)[a] − target)²`.
pub fn oracle_update_scalar(state: &mut OracleState, x: usize, a: ActionLabel, target: f64) -> Result<()> {
    state.check_context(x)?;
    let k = state.class.actions();
    if a.index() >= k {
        return Err(AilError::ActionOutOfRange { action: a.one_based(), k });
    }
    if !(0.0..=1.0).contains(&target) {
        return Err(invalid("scalar target must lie in [0, 1]"));
    }
    let eta = state.learning_rate;
    let class = state.class.clone();
    let mut pred = vec![0.0; k];
    state.predict_into(x, &mut pred);
    match &mut state.inner {
        Inner::Weights { weights, ledger } => {
            let losses = member_values(&class, x, |v| (v[a.index()] - target).powi(2));
            OracleState::reweight(weights, ledger, eta, &losses);
        }
        Inner::Ridge { grams, targets, ledger } => {
            let phi = DVector::from_column_slice(class.features(x).expect("linear context"));
            ledger[a.index()] += (pred[a.index()] - target).powi(2);
            grams[a.index()] += &phi * phi.transpose();
            targets[a.index()] += &phi * target;
        }
    }
    state.update_count += 1;
    Ok(())
}

/// `Σ_t ℓ_φ(f_t(x_t), y_t) − min_{f∈ℱ} Σ_t ℓ_φ(f(x_t), y_t)`, replaying `stream`
/// from a copy of `state`.
pub fn empirical_regret(state: &OracleState, stream: &[(usize, ActionLabel)]) -> Result<f64> {
    let n = state.class.members_or_err()?;
    let mut s = state.clone();
    let k = s.class.actions();
    let mut learner = 0.0;
    let mut members = vec![0.0; n];
    let mut v = vec![0.0; k];
    for &(x, y) in stream {
        let p = oracle_predict(&s, x)?;
        learner += loss_of(&s.link, &p, y.index());
        for (m, tot) in members.iter_mut().enumerate() {
            s.class.score_into(m, x, &mut v);
            *tot += loss_of(&s.link, &v, y.index());
        }
        oracle_update(&mut s, x, y)?;
    }
    let best = members.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(if stream.is_empty() { 0.0 } else { learner - best })
}

/// Which concentration argument a budget follows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "flavor")]
pub enum BudgetFlavor {
    /// `(4/λ)R + (112/λ²)·log(4·log²T/δ)`.
    FullFeedback,
    /// `2R + 8·log(T/δ)`.
    Bandit,
    /// `(4/λ)R + (112/λ²)·log(4M·log²T/δ)`.
    PerExpert { experts: usize },
    /// `(4/λ)R + (112/λ²)·log(4H·log²T/δ)`.
    PerStep { horizon: usize },
    /// `(4/λ)R + (112/λ²)·log(4MH·log²T/δ)`.
    PerExpertStep { experts: usize, horizon: usize },
    /// `2K·R + 8K·log(T/δ)`.
    TwoQuery { actions: usize },
}

/// Inputs of a budget formula.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetParams {
    pub lambda: f64,
    /// Oracle regret bound `R`.
    pub regret: f64,
    /// Number of rounds `T`.
    pub rounds: usize,
    pub delta: f64,
}

/// A computed budget Ψ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegretBudget {
    pub psi: f64,
    pub flavor: BudgetFlavor,
    pub params: BudgetParams,
}

/// Evaluate Ψ for `flavor` (natural logarithms).
pub fn regret_budget(flavor: BudgetFlavor, params: BudgetParams) -> Result<RegretBudget> {
    let BudgetParams { lambda, regret, rounds, delta } = params;
    if !(delta > 0.0 && delta < 1.0) {
        return Err(invalid(format!("delta = {delta} outside (0, 1)")));
    }
    if rounds < 3 {
        return Err(invalid(format!("T = {rounds} below 3")));
    }
    if !(lambda > 0.0) || !(regret >= 0.0) {
        return Err(invalid("need lambda > 0 and R >= 0"));
    }
    let t = rounds as f64;
    let full = |mult: f64| 4.0 / lambda * regret + 112.0 / (lambda * lambda) * (4.0 * mult * t.ln().powi(2) / delta).ln();
    let psi = match flavor {
        BudgetFlavor::FullFeedback => full(1.0),
        BudgetFlavor::PerExpert { experts } => full(experts.max(1) as f64),
        BudgetFlavor::PerStep { horizon } => full(horizon.max(1) as f64),
        BudgetFlavor::PerExpertStep { experts, horizon } => full((experts.max(1) * horizon.max(1)) as f64),
        BudgetFlavor::Bandit => 2.0 * regret + 8.0 * (t / delta).ln(),
        BudgetFlavor::TwoQuery { actions } => {
            let k = actions as f64;
            2.0 * k * regret + 8.0 * k * (t / delta).ln()
        }
    };
    Ok(RegretBudget { psi, flavor, params })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_class() -> Arc<ModelClass> {
        Arc::new(ModelClass::finite(2, vec![vec![vec![0.0, 1.0]], vec![vec![1.0, 0.0]]], 0, 1.0).unwrap())
    }

    #[test]
    fn init_and_predict() {
        let c = Arc::new(ModelClass::from_fn(2, 4, 1, 0, 1.0, |m, _| vec![m as f64 / 4.0, 1.0 - m as f64 / 4.0]).unwrap());
        let s = oracle_init(c, LinkSpec::identity(), 0.1, OracleKind::ExpWeights).unwrap();
        assert_eq!(s.weights().unwrap(), &[0.25; 4]);
        let p = oracle_predict(&s, 0).unwrap();
        assert!((p[0] - 0.375).abs() < 1e-15);
        let s = oracle_init(two_class(), LinkSpec::identity(), 0.1, OracleKind::ExpWeights).unwrap();
        assert_eq!(oracle_predict(&s, 0).unwrap(), vec![0.5, 0.5]);
        assert!(oracle_init(two_class(), LinkSpec::identity(), 0.1, OracleKind::Ridge).is_err());
    }

    #[test]
    fn linear_init_is_identity_gram() {
        let c = Arc::new(
            ModelClass::linear(2, vec![vec![1.0, 0.0, 0.0]], 1.0, vec![vec![0.5, 0.0, 0.0], vec![0.5, 0.0, 0.0]], 1.0).unwrap(),
        );
        let s = oracle_init(c.clone(), LinkSpec::identity(), 0.1, OracleKind::Ridge).unwrap();
        match &s.inner {
            Inner::Ridge { grams, targets, .. } => {
                assert_eq!(grams[0], DMatrix::identity(3, 3));
                assert_eq!(targets[1], DVector::zeros(3));
            }
            _ => unreachable!(),
        }
        assert!(oracle_init(c, LinkSpec::softmax(1.0, 2).unwrap(), 0.1, OracleKind::Ridge).is_err());
    }

    #[test]
    fn zero_rate_keeps_weights() {
        let mut s = oracle_init(two_class(), LinkSpec::identity(), 0.0, OracleKind::ExpWeights).unwrap();
        oracle_update(&mut s, 0, ActionLabel::from_index(0)).unwrap();
        assert_eq!(s.weights().unwrap(), &[0.5, 0.5]);
        assert_eq!(s.update_count(), 1);
    }

    #[test]
    fn huge_rate_concentrates() {
        let mut s = oracle_init(two_class(), LinkSpec::identity(), 1e6, OracleKind::ExpWeights).unwrap();
        oracle_update(&mut s, 0, ActionLabel::from_index(0)).unwrap();
        assert!(s.weights().unwrap()[1] > 1.0 - 1e-12);
    }

    #[test]
    fn scalar_update_ratio_is_geometric() {
        // Members differ only at (x, a): values 0.8 vs 0.2; target 0.8.
        let c = Arc::new(ModelClass::finite(2, vec![vec![vec![0.8, 0.2]], vec![vec![0.2, 0.8]]], 0, 1.0).unwrap());
        let eta = 0.5;
        let mut s = oracle_init(c, LinkSpec::identity(), eta, OracleKind::ExpWeights).unwrap();
        for n in 1..=5 {
            oracle_update_scalar(&mut s, 0, ActionLabel::from_index(0), 0.8).unwrap();
            let w = s.weights().unwrap();
            let expected = (eta * 0.36 * n as f64).exp();
            assert!((w[0] / w[1] / expected - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn scalar_update_with_agreeing_members_is_noop() {
        let c = Arc::new(ModelClass::finite(2, vec![vec![vec![0.3, 0.7]], vec![vec![0.3, 0.7]]], 0, 1.0).unwrap());
        let mut s = oracle_init(c, LinkSpec::identity(), 1.0, OracleKind::ExpWeights).unwrap();
        oracle_update_scalar(&mut s, 0, ActionLabel::from_index(1), 0.7).unwrap();
        assert_eq!(s.weights().unwrap(), &[0.5, 0.5]);
    }

    #[test]
    fn ridge_scalar_update_touches_one_action() {
        let c = Arc::new(
            ModelClass::linear(3, vec![vec![1.0, 0.5]], 1.0, vec![vec![0.3, 0.0], vec![0.3, 0.0], vec![0.3, 0.0]], 1.0).unwrap(),
        );
        let mut s = OracleState::for_class(c, LinkSpec::identity(), 0.1).unwrap();
        oracle_update_scalar(&mut s, 0, ActionLabel::from_index(1), 1.0).unwrap();
        assert_eq!(s.ledger()[0], 0.0);
        assert_eq!(s.ledger()[2], 0.0);
        assert!(s.ledger()[1] > 0.0);
        match &s.inner {
            Inner::Ridge { grams, .. } => assert_eq!(grams[0], DMatrix::identity(2, 2)),
            _ => unreachable!(),
        }
    }

    #[test]
    fn ridge_learns_one_hot_targets() {
        let feats = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let c = Arc::new(ModelClass::linear(2, feats, 1.0, vec![vec![1.0, 0.0], vec![0.0, 1.0]], 1.0).unwrap());
        let mut s = OracleState::for_class(c, LinkSpec::identity(), 0.1).unwrap();
        for _ in 0..200 {
            oracle_update(&mut s, 0, ActionLabel::from_index(0)).unwrap();
            oracle_update(&mut s, 1, ActionLabel::from_index(1)).unwrap();
        }
        let p = oracle_predict(&s, 0).unwrap();
        assert!(p[0] > 0.98 && p[1].abs() < 1e-9);
    }

    #[test]
    fn empirical_regret_examples() {
        let s = oracle_init(two_class(), LinkSpec::identity(), 1.0, OracleKind::ExpWeights).unwrap();
        assert_eq!(empirical_regret(&s, &[]).unwrap(), 0.0);
        assert!(empirical_regret(&s, &[(0, ActionLabel::from_index(1))]).unwrap() >= 0.0);
        // Adversarial alternation against the current leader.
        let mut stream = Vec::new();
        let mut replay = s.clone();
        for _ in 0..200 {
            let p = oracle_predict(&replay, 0).unwrap();
            let y = ActionLabel::from_index(if p[0] >= p[1] { 1 } else { 0 });
            oracle_update(&mut replay, 0, y).unwrap();
            stream.push((0, y));
        }
        assert!(empirical_regret(&s, &stream).unwrap() <= 2f64.ln() + 1.0);
    }

    #[test]
    fn budget_examples() {
        let p = BudgetParams { lambda: 1.0, regret: 10.0, rounds: 100, delta: 0.1 };
        let b = regret_budget(BudgetFlavor::FullFeedback, p).unwrap();
        let expected = 40.0 + 112.0 * (4.0 * 100f64.ln().powi(2) / 0.1).ln();
        assert!((b.psi - expected).abs() < 1e-9);
        let b = regret_budget(BudgetFlavor::Bandit, p).unwrap();
        assert!((b.psi - (20.0 + 8.0 * 1000f64.ln())).abs() < 1e-9);
        let p2 = BudgetParams { lambda: 2.0, ..p };
        let a = regret_budget(BudgetFlavor::FullFeedback, p).unwrap().psi;
        let b = regret_budget(BudgetFlavor::FullFeedback, p2).unwrap().psi;
        let second = 112.0 * (4.0 * 100f64.ln().powi(2) / 0.1).ln();
        assert!((b - (20.0 + second / 4.0)).abs() < 1e-9 && (a - (40.0 + second)).abs() < 1e-9);
        assert!(regret_budget(BudgetFlavor::Bandit, BudgetParams { delta: 1.5, ..p }).is_err());
        assert!(regret_budget(BudgetFlavor::Bandit, BudgetParams { rounds: 2, ..p }).is_err());
    }
}
