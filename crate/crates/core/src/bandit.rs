//! Selective sampling with bandit feedback.
//!
//! [`sage_bandit_run`] keeps a version space over a finite class, constrained
//! on the coordinate played in each past queried round, and queries whenever
//! the candidate argmax set is ambiguous. Queried actions are sampled
//! uniformly from the candidates until the accumulated width passes a
//! threshold, and from inverse gap weighting afterwards.
//! [`multiquery_bandit_run`] instead plays the oracle's argmax and spends a
//! second, uniformly random query purely on exploration.
//!
//! Feedback is the bit `1{ŷ = y}`, used as a square-loss target on the played
//! coordinate. Only the identity link is supported.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::classes::{dist, ModelClass, WidthMode, WidthTracker};
use crate::error::{invalid, AilError, Result};
use crate::link::{argmax, margin_of, select_action, ActionLabel, LinkKind, LinkSpec};
use crate::oracles::{default_learning_rate, oracle_update_scalar, OracleState};
use crate::rng::{sample_categorical, RngStream, Substream};
use crate::selsamp::{count_margins, BanditInfo, RunLog, SageOptions, StepRecord};

/// Inverse-gap-weighting parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IGWParams {
    /// Coefficient `γ_t ≥ 0`.
    pub coef: f64,
    pub actions: usize,
}

impl IGWParams {
    /// `γ = √(KT/Ψ)`.
    pub fn for_budget(actions: usize, rounds: usize, psi: f64) -> Result<Self> {
        if !(psi > 0.0) {
            return Err(invalid("IGW coefficient needs a positive budget"));
        }
        Ok(Self { coef: (actions as f64 * rounds as f64 / psi).sqrt(), actions })
    }
}

/// `p[y] = 1/(K + γ(v[y*] − v[y]))` off the argmax, remaining mass on `y*`.
pub fn igw_distribution(v: &[f64], params: &IGWParams) -> Result<Vec<f64>> {
    crate::link::check_finite(v)?;
    if !(params.coef >= 0.0) || params.coef.is_infinite() {
        return Err(invalid("IGW coefficient must be finite and nonnegative"));
    }
    if v.len() != params.actions || v.is_empty() {
        return Err(AilError::Mismatch(format!("{} scores for {} actions", v.len(), params.actions)));
    }
    let k = v.len() as f64;
    let best = argmax(v);
    let mut p: Vec<f64> = v.iter().map(|&x| 1.0 / (k + params.coef * (v[best] - x))).collect();
    p[best] = 0.0;
    p[best] = (1.0 - p.iter().sum::<f64>()).max(0.0);
    Ok(p)
}

/// Parameters of the single-query bandit learner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BanditParams {
    pub psi: f64,
    pub igw: IGWParams,
    /// `ξ` switches on once `Σ Z_s w_s` reaches this value.
    pub xi_threshold: f64,
}

impl BanditParams {
    /// Defaults: `γ_t` and the ξ threshold both equal `√(KT/Ψ)`.
    pub fn new(actions: usize, rounds: usize, psi: f64) -> Result<Self> {
        let igw = IGWParams::for_budget(actions, rounds, psi)?;
        Ok(Self { psi, igw, xi_threshold: igw.coef })
    }
}

/// Version-space state of one bandit run.
#[derive(Debug, Clone, PartialEq)]
pub struct BanditRoundState {
    /// Membership of `ℱ_t`.
    pub feasible: Vec<bool>,
    /// `𝒜_t`, ascending.
    pub candidates: Vec<ActionLabel>,
    /// `w_t`.
    pub width: f64,
    /// `ξ_t`.
    pub xi: bool,
    /// `Σ_{s<t} Z_s w_s`.
    pub cum_zw: f64,
    /// Per-member `Σ Z_s (f(x_s)[ŷ_s] − f_s(x_s)[ŷ_s])²`.
    sums: Vec<f64>,
}

impl BanditRoundState {
    pub fn new(class: &ModelClass) -> Result<Self> {
        let n = class.members_or_err()?;
        Ok(Self { feasible: vec![true; n], candidates: Vec::new(), width: 0.0, xi: false, cum_zw: 0.0, sums: vec![0.0; n] })
    }

    /// Constraint sum of member `m`.
    pub fn deviation_sum(&self, m: usize) -> f64 {
        self.sums[m]
    }
}

/// Outcome of [`bandit_round`].
#[derive(Debug, Clone, PartialEq)]
pub struct BanditDecision {
    pub prediction: Vec<f64>,
    pub action: ActionLabel,
    pub queried: bool,
    /// The version space was empty and has been reset to the full class.
    pub reset: bool,
}

/// One round: version space, candidates, width, `Z_t`, `ξ_t` and the played
/// action. `u` is the round's exploration uniform.
pub fn bandit_round(
    state: &mut BanditRoundState,
    oracle: &OracleState,
    x: usize,
    params: &BanditParams,
    u: f64,
) -> Result<BanditDecision> {
    let class = oracle.class().clone();
    if oracle.link().kind != LinkKind::Identity {
        return Err(AilError::Unsupported("bandit feedback needs the identity link".into()));
    }
    if x >= class.num_contexts() {
        return Err(AilError::UnknownContext { context: x, size: class.num_contexts() });
    }
    let k = class.actions();
    let mut reset = false;
    for (f, &s) in state.feasible.iter_mut().zip(&state.sums) {
        *f = s <= params.psi;
    }
    if !state.feasible.iter().any(|&f| f) {
        state.sums.iter_mut().for_each(|s| *s = 0.0);
        state.feasible.iter_mut().for_each(|f| *f = true);
        reset = true;
    }
    let mut lo = vec![f64::INFINITY; k];
    let mut hi = vec![f64::NEG_INFINITY; k];
    let mut in_set = vec![false; k];
    let mut v = vec![0.0; k];
    for m in (0..state.feasible.len()).filter(|&m| state.feasible[m]) {
        class.score_into(m, x, &mut v);
        in_set[argmax(&v)] = true;
        for a in 0..k {
            lo[a] = lo[a].min(v[a]);
            hi[a] = hi[a].max(v[a]);
        }
    }
    state.candidates = (0..k).filter(|&a| in_set[a]).map(ActionLabel::from_index).collect();
    state.width = (0..k).filter(|&a| in_set[a]).map(|a| hi[a] - lo[a]).fold(0.0, f64::max);
    state.xi = state.cum_zw >= params.xi_threshold;
    let mut prediction = vec![0.0; k];
    oracle.predict_into(x, &mut prediction);
    let queried = state.candidates.len() > 1;
    let action = if !queried {
        select_action(oracle.link(), &prediction)
    } else if !state.xi {
        let n = state.candidates.len();
        state.candidates[((u * n as f64) as usize).min(n - 1)]
    } else {
        ActionLabel::from_index(sample_categorical(&igw_distribution(&prediction, &params.igw)?, u))
    };
    Ok(BanditDecision { prediction, action, queried, reset })
}

/// Record the round: on a query, extend the constraint sums with the played
/// coordinate, accumulate `w_t` and update the oracle with the feedback bit.
pub fn bandit_commit(
    state: &mut BanditRoundState,
    oracle: &mut OracleState,
    x: usize,
    d: &BanditDecision,
    feedback: Option<bool>,
) -> Result<()> {
    let Some(bit) = feedback else { return Ok(()) };
    let class = oracle.class().clone();
    let a = d.action.index();
    let mut v = vec![0.0; class.actions()];
    for (m, s) in state.sums.iter_mut().enumerate() {
        class.score_into(m, x, &mut v);
        *s += (v[a] - d.prediction[a]).powi(2);
    }
    state.cum_zw += state.width;
    oracle_update_scalar(oracle, x, d.action, if bit { 1.0 } else { 0.0 })
}

/// Knobs of the bandit drivers.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BanditOptions {
    /// Oracle learning rate; `None` uses the default.
    pub learning_rate: Option<f64>,
    /// Override of the ξ threshold.
    pub xi_threshold: Option<f64>,
    pub width_mode: WidthMode,
}

fn check_bandit_inputs(class: &ModelClass, link: &LinkSpec, psi: f64, contexts: &[usize]) -> Result<()> {
    class.validate_for_link(link)?;
    if link.kind != LinkKind::Identity {
        return Err(AilError::Unsupported("bandit feedback needs the identity link".into()));
    }
    if !(psi >= 0.0) {
        return Err(invalid("psi must be nonnegative"));
    }
    if let Some(&x) = contexts.iter().find(|&&x| x >= class.num_contexts()) {
        return Err(AilError::UnknownContext { context: x, size: class.num_contexts() });
    }
    Ok(())
}

struct Truth {
    scores: Vec<f64>,
    label: ActionLabel,
    comparator: ActionLabel,
}

fn draw_truth(class: &ModelClass, x: usize, rng: &RngStream, t: usize) -> Truth {
    let mut scores = vec![0.0; class.actions()];
    class.truth_into(x, &mut scores);
    let label = ActionLabel::from_index(sample_categorical(&scores, rng.uniform(Substream::Labels, [t as u64, 0, 0])));
    let comparator = ActionLabel::from_index(argmax(&scores));
    Truth { scores, label, comparator }
}

#[allow(clippy::too_many_arguments)]
fn record(
    t: usize,
    x: usize,
    action: ActionLabel,
    queried: bool,
    width: f64,
    pred: &[f64],
    truth: &Truth,
    feasible: Option<bool>,
    info: Option<BanditInfo>,
) -> StepRecord {
    let identity = LinkSpec::identity();
    StepRecord {
        t,
        context: x,
        action,
        queried,
        labels: if queried { vec![truth.label] } else { vec![] },
        widths: vec![width],
        truth_margin: margin_of(&identity, &truth.scores),
        comparator: truth.comparator,
        inst_regret: (action != truth.label) as i32 as f64 - (truth.comparator != truth.label) as i32 as f64,
        expected_regret: truth.scores[truth.comparator.index()] - truth.scores[action.index()],
        truth_deviation: vec![dist(pred, &truth.scores)],
        truth_feasible: feasible,
        bandit: info,
    }
}

/// Run the single-query bandit learner. The logged label is the expert's
/// (hidden) label; the learner only ever sees `1{ŷ_t = y_t}`.
pub fn sage_bandit_run(
    class: &Arc<ModelClass>,
    link: &LinkSpec,
    psi: f64,
    contexts: &[usize],
    rng: &RngStream,
    opts: &BanditOptions,
) -> Result<RunLog> {
    check_bandit_inputs(class, link, psi, contexts)?;
    let eta = opts.learning_rate.unwrap_or_else(|| default_learning_rate(link));
    let mut oracle = OracleState::for_class(class.clone(), *link, eta)?;
    let mut state = BanditRoundState::new(class)?;
    let mut params = BanditParams::new(class.actions(), contexts.len().max(1), psi)?;
    if let Some(th) = opts.xi_threshold {
        params.xi_threshold = th;
    }
    let mut records = Vec::with_capacity(contexts.len());
    let mut anomalies = Vec::new();
    for (i, &x) in contexts.iter().enumerate() {
        let t = i + 1;
        let truth_feasible = class.truth_index().map(|m| state.deviation_sum(m) <= psi);
        let u = rng.uniform(Substream::Exploration, [t as u64, 0, 0]);
        let d = bandit_round(&mut state, &oracle, x, &params, u)?;
        if d.reset {
            anomalies.push(format!("t={t}: empty version space, reset to the full class"));
        }
        let truth = draw_truth(class, x, rng, t);
        let info = BanditInfo { width_w: state.width, candidates: state.candidates.len(), xi: state.xi };
        let width = state.width;
        bandit_commit(&mut state, &mut oracle, x, &d, d.queried.then_some(d.action == truth.label))?;
        records.push(record(t, x, d.action, d.queried, width, &d.prediction, &truth, truth_feasible, Some(info)));
    }
    Ok(finish(records, vec![psi], anomalies))
}

fn finish(records: Vec<StepRecord>, psi: Vec<f64>, anomalies: Vec<String>) -> RunLog {
    let grid = SageOptions::default().eps_grid;
    let t_eps = count_margins(records.iter().map(|r| r.truth_margin), &grid);
    RunLog::assemble(records, grid, t_eps, psi, anomalies)
}

/// Run the two-query variant: play `select_action(f_t(x_t))`, query iff
/// `margin ≤ 2Δ_t`, and on a query explore `ỹ_t ~ Uniform([K])`, updating the
/// oracle only with `(x_t, ỹ_t, 1{ỹ_t = y_t})`.
pub fn multiquery_bandit_run(
    class: &Arc<ModelClass>,
    link: &LinkSpec,
    psi: f64,
    contexts: &[usize],
    rng: &RngStream,
    opts: &BanditOptions,
) -> Result<RunLog> {
    check_bandit_inputs(class, link, psi, contexts)?;
    let eta = opts.learning_rate.unwrap_or_else(|| default_learning_rate(link));
    let mut oracle = OracleState::for_class(class.clone(), *link, eta)?;
    let mut tracker = WidthTracker::new(class, psi, opts.width_mode)?;
    let k = class.actions();
    let mut records = Vec::with_capacity(contexts.len());
    let mut anomalies = Vec::new();
    for (i, &x) in contexts.iter().enumerate() {
        let t = i + 1;
        let truth_feasible = class.truth_index().map(|m| tracker.is_feasible(class, m));
        let mut pred = vec![0.0; k];
        oracle.predict_into(x, &mut pred);
        let action = select_action(link, &pred);
        let width = tracker.width(class, x, &pred)?;
        let queried = match width {
            None => {
                anomalies.push(format!("t={t}: empty feasible set, forced query"));
                true
            }
            Some(w) => margin_of(link, &pred) <= 2.0 * link.gamma * w,
        };
        let truth = draw_truth(class, x, rng, t);
        if queried {
            let u = rng.uniform(Substream::Exploration, [t as u64, 1, 0]);
            let explore = ActionLabel::from_index(((u * k as f64) as usize).min(k - 1));
            oracle_update_scalar(&mut oracle, x, explore, if explore == truth.label { 1.0 } else { 0.0 })?;
        }
        tracker.record(class, x, &pred, queried);
        records.push(record(t, x, action, queried, width.unwrap_or(f64::INFINITY), &pred, &truth, truth_feasible, None));
    }
    Ok(finish(records, vec![psi], anomalies))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn igw_examples() {
        let p = igw_distribution(&[0.8, 0.2], &IGWParams { coef: 10.0, actions: 2 }).unwrap();
        assert!((p[0] - 7.0 / 8.0).abs() < 1e-12 && (p[1] - 1.0 / 8.0).abs() < 1e-12);
        let p = igw_distribution(&[0.1, 0.5, 0.4], &IGWParams { coef: 0.0, actions: 3 }).unwrap();
        assert!(p.iter().all(|&q| (q - 1.0 / 3.0).abs() < 1e-12));
    }

    fn two_member() -> Arc<ModelClass> {
        Arc::new(ModelClass::finite(2, vec![vec![vec![0.65, 0.35]], vec![vec![0.35, 0.65]]], 0, 1.0).unwrap())
    }

    #[test]
    fn ambiguous_version_space_queries_uniformly() {
        let c = two_member();
        let oracle = OracleState::for_class(c.clone(), LinkSpec::identity(), 0.125).unwrap();
        let mut st = BanditRoundState::new(&c).unwrap();
        let params = BanditParams::new(2, 100, 10.0).unwrap();
        let d = bandit_round(&mut st, &oracle, 0, &params, 0.7).unwrap();
        assert!(d.queried && !st.xi);
        assert!((st.width - 0.3).abs() < 1e-12);
        assert_eq!(st.candidates.len(), 2);
        assert_eq!(d.action, ActionLabel::from_index(1));
    }

    #[test]
    fn singleton_plays_truth() {
        let c = Arc::new(ModelClass::finite(2, vec![vec![vec![0.2, 0.8]]], 0, 1.0).unwrap());
        let log =
            sage_bandit_run(&c, &LinkSpec::identity(), 5.0, &[0; 20], &RngStream::new(2), &BanditOptions::default()).unwrap();
        assert_eq!(log.queries, 0);
        assert!(log.records.iter().all(|r| r.action.index() == 1));
        let log = multiquery_bandit_run(&c, &LinkSpec::identity(), 5.0, &[0; 20], &RngStream::new(2), &BanditOptions::default())
            .unwrap();
        assert_eq!(log.queries, 0);
    }

    #[test]
    fn xi_flips_when_ledger_reaches_threshold() {
        let c = two_member();
        let mut oracle = OracleState::for_class(c.clone(), LinkSpec::identity(), 0.0).unwrap();
        let mut st = BanditRoundState::new(&c).unwrap();
        let mut params = BanditParams::new(2, 100, 1e9).unwrap();
        params.xi_threshold = 0.9;
        let mut flips = Vec::new();
        for _ in 0..5 {
            let d = bandit_round(&mut st, &oracle, 0, &params, 0.1).unwrap();
            flips.push(st.xi);
            bandit_commit(&mut st, &mut oracle, 0, &d, Some(true)).unwrap();
        }
        // w = 0.3 per round: sums before rounds are 0, .3, .6, .9, 1.2.
        assert_eq!(flips, vec![false, false, false, true, true]);
    }

    #[test]
    fn empty_log_for_zero_rounds() {
        let log = sage_bandit_run(&two_member(), &LinkSpec::identity(), 5.0, &[], &RngStream::new(2), &BanditOptions::default())
            .unwrap();
        assert!(log.records.is_empty() && log.queries == 0);
    }

    #[test]
    fn softmax_rejected() {
        let c = Arc::new(ModelClass::finite(2, vec![vec![vec![0.2, 0.8]]], 0, 1.0).unwrap());
        let sm = LinkSpec::softmax(1.0, 2).unwrap();
        assert!(sage_bandit_run(&c, &sm, 5.0, &[0], &RngStream::new(2), &BanditOptions::default()).is_err());
    }
}
