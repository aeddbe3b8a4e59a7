//! SAGE (query when the margin is within twice the width) and the epoch
//! variant that queries from a version space fixed at powers of two.

use std::sync::Arc;

use super::que::{que, Aggregator};
use super::{count_margins, QueryRule, RunLog, SageOptions, StepRecord};
use crate::classes::{dist, ModelClass, WidthTracker};
use crate::error::{invalid, AilError, Result};
use crate::link::{apply_link, margin_of, select_action, ActionLabel, LinkSpec};
use crate::oracles::{default_learning_rate, oracle_update, OracleState};
use crate::rng::{sample_categorical, RngStream, Substream};

/// What a learner decided at one context.
#[derive(Debug, Clone)]
pub(crate) struct Decision {
    pub prediction: Vec<f64>,
    pub action: ActionLabel,
    pub width: Option<f64>,
    pub queried: bool,
}

/// Oracle plus width state of one expert's class; the unit shared by every
/// full-feedback driver so that reductions between drivers are exact.
#[derive(Debug, Clone)]
pub(crate) struct SingleLearner {
    pub class: Arc<ModelClass>,
    pub link: LinkSpec,
    pub oracle: OracleState,
    pub tracker: WidthTracker,
    pub rule: QueryRule,
}

impl SingleLearner {
    pub fn new(class: &Arc<ModelClass>, link: &LinkSpec, psi: f64, opts: &SageOptions) -> Result<Self> {
        class.validate_for_link(link)?;
        if !(psi >= 0.0) {
            return Err(invalid("psi must be nonnegative"));
        }
        let eta = opts.learning_rate.unwrap_or_else(|| default_learning_rate(link));
        Ok(Self {
            class: class.clone(),
            link: *link,
            oracle: OracleState::for_class(class.clone(), *link, eta)?,
            tracker: WidthTracker::new(class, psi, opts.width_mode)?,
            rule: opts.rule,
        })
    }

    /// Prediction and width at `x` (no query decision).
    pub fn observe(&mut self, x: usize) -> Result<(Vec<f64>, Option<f64>)> {
        let mut pred = vec![0.0; self.class.actions()];
        self.oracle.predict_into(x, &mut pred);
        let width = match self.rule {
            QueryRule::Never => Some(0.0),
            _ => self.tracker.width(&self.class, x, &pred)?,
        };
        Ok((pred, width))
    }

    pub fn decide(&mut self, x: usize) -> Result<Decision> {
        let (prediction, width) = self.observe(x)?;
        let action = select_action(&self.link, &prediction);
        let queried = match (self.rule, width) {
            (QueryRule::Always, _) => true,
            (QueryRule::Never, _) => false,
            (_, None) => true,
            (QueryRule::MarginWidth, Some(w)) => margin_of(&self.link, &prediction) <= 2.0 * self.link.gamma * w,
            (QueryRule::Que { resolution }, Some(w)) => {
                que(std::slice::from_ref(&prediction), &[w], &Aggregator::random_mix(1), &self.link, resolution)
            }
        };
        Ok(Decision { prediction, action, width, queried })
    }

    /// Record the round in the width history and update on a query.
    pub fn commit(&mut self, x: usize, prediction: &[f64], label: Option<ActionLabel>) -> Result<()> {
        self.tracker.record(&self.class, x, prediction, label.is_some());
        if let Some(y) = label {
            oracle_update(&mut self.oracle, x, y)?;
        }
        Ok(())
    }

    pub fn truth_feasible(&self) -> Option<bool> {
        self.class.truth_index().map(|i| self.tracker.is_feasible(&self.class, i))
    }
}

/// Draw `y ~ φ(v)` at address `(t, h, m)` of the label substream.
pub(crate) fn draw_label(link: &LinkSpec, v: &[f64], rng: &RngStream, key: [u64; 3]) -> ActionLabel {
    let p = apply_link(link, v).expect("finite truth scores");
    ActionLabel::from_index(sample_categorical(&p, rng.uniform(Substream::Labels, key)))
}

pub(crate) fn check_contexts(class: &ModelClass, contexts: &[usize]) -> Result<()> {
    if let Some(&x) = contexts.iter().find(|&&x| x >= class.num_contexts()) {
        return Err(AilError::UnknownContext { context: x, size: class.num_contexts() });
    }
    Ok(())
}

/// Regret bookkeeping against a single truth.
pub(crate) fn regret_terms(link: &LinkSpec, truth: &[f64], action: ActionLabel, y: ActionLabel) -> (ActionLabel, f64, f64) {
    let comparator = select_action(link, truth);
    let p = apply_link(link, truth).expect("finite truth scores");
    let inst = (action != y) as i32 as f64 - (comparator != y) as i32 as f64;
    (comparator, inst, p[comparator.index()] - p[action.index()])
}

/// One round of a single learner at context `x`; the label is drawn at key
/// `(t, h, 0)`. Returns the record and whether the query was forced by an
/// empty feasible set.
pub(crate) fn single_step(
    learner: &mut SingleLearner,
    x: usize,
    t: usize,
    h: u64,
    rng: &RngStream,
) -> Result<(StepRecord, bool)> {
    let link = learner.link;
    let truth_feasible = learner.truth_feasible();
    let d = learner.decide(x)?;
    let mut truth = vec![0.0; learner.class.actions()];
    learner.class.truth_into(x, &mut truth);
    let y = draw_label(&link, &truth, rng, [t as u64, h, 0]);
    let (comparator, inst, expected) = regret_terms(&link, &truth, d.action, y);
    learner.commit(x, &d.prediction, d.queried.then_some(y))?;
    let record = StepRecord {
        t,
        context: x,
        action: d.action,
        queried: d.queried,
        labels: if d.queried { vec![y] } else { vec![] },
        widths: vec![d.width.unwrap_or(f64::INFINITY)],
        truth_margin: margin_of(&link, &truth),
        comparator,
        inst_regret: inst,
        expected_regret: expected,
        truth_deviation: vec![dist(&d.prediction, &truth)],
        truth_feasible,
        bandit: None,
    };
    Ok((record, d.width.is_none()))
}

/// Run SAGE for `contexts.len()` rounds.
///
/// Per round: predict `f_t(x_t)`, play its argmax, compute the constrained
/// width, query per `opts.rule`, and update the oracle only on queries. An
/// empty feasible set force-queries and is logged as an anomaly.
pub fn sage_run(
    class: &Arc<ModelClass>,
    link: &LinkSpec,
    psi: f64,
    contexts: &[usize],
    rng: &RngStream,
    opts: &SageOptions,
) -> Result<RunLog> {
    check_contexts(class, contexts)?;
    let mut learner = SingleLearner::new(class, link, psi, opts)?;
    let mut records = Vec::with_capacity(contexts.len());
    let mut anomalies = Vec::new();
    for (i, &x) in contexts.iter().enumerate() {
        let (record, forced) = single_step(&mut learner, x, i + 1, 0, rng)?;
        if forced {
            anomalies.push(format!("t={}: empty feasible set, forced query", i + 1));
        }
        records.push(record);
    }
    let t_eps = count_margins(records.iter().map(|r| r.truth_margin), &opts.eps_grid);
    Ok(RunLog::assemble(records, opts.eps_grid.clone(), t_eps, vec![psi], anomalies))
}

/// Epoch start rounds `1, 2, 4, …` up to `T`.
pub fn epoch_starts(rounds: usize) -> Vec<usize> {
    std::iter::successors(Some(1usize), |&s| s.checked_mul(2)).take_while(|&s| s <= rounds).collect()
}

/// Run the epoch variant on i.i.d. contexts.
///
/// At each epoch start `τ_e = 2^{e−1}` the version space `ℱ_e` is frozen from
/// the queried history before `τ_e`. Each round uses the least-margin member
/// `g_t` of `ℱ_e` (lowest index on ties) and the largest pairwise distance
/// `Δ_e(x_t)` within `ℱ_e`; it queries iff `margin(g_t(x_t)) ≤ 2γΔ_e(x_t)`,
/// playing the oracle's action on queries and `g_t`'s otherwise.
pub fn dis_run(
    class: &Arc<ModelClass>,
    link: &LinkSpec,
    psi: f64,
    contexts: &[usize],
    rng: &RngStream,
    opts: &SageOptions,
) -> Result<RunLog> {
    let n = class.members_or_err()?;
    check_contexts(class, contexts)?;
    let mut learner = SingleLearner::new(class, link, psi, opts)?;
    let starts = epoch_starts(contexts.len());
    let k = class.actions();
    let mut version: Vec<usize> = (0..n).collect();
    let mut records = Vec::with_capacity(contexts.len());
    let mut anomalies = Vec::new();
    let mut truth = vec![0.0; k];
    let mut scores: Vec<Vec<f64>> = Vec::new();
    for (i, &x) in contexts.iter().enumerate() {
        let t = i + 1;
        if starts.contains(&t) {
            version = learner.tracker.feasible(class);
            if version.is_empty() {
                anomalies.push(format!("t={t}: empty version space, forced queries this epoch"));
            }
        }
        let truth_feasible = learner.truth_feasible();
        let mut pred = vec![0.0; k];
        learner.oracle.predict_into(x, &mut pred);
        scores.clear();
        for &m in &version {
            let mut v = vec![0.0; k];
            class.score_into(m, x, &mut v);
            scores.push(v);
        }
        let (queried, action, width) = if scores.is_empty() {
            (true, select_action(link, &pred), f64::INFINITY)
        } else {
            let mut g = 0;
            for (j, s) in scores.iter().enumerate().skip(1) {
                if margin_of(link, s) < margin_of(link, &scores[g]) {
                    g = j;
                }
            }
            let mut width: f64 = 0.0;
            for a in 0..scores.len() {
                for b in a + 1..scores.len() {
                    width = width.max(dist(&scores[a], &scores[b]));
                }
            }
            let queried = match opts.rule {
                QueryRule::Always => true,
                QueryRule::Never => false,
                _ => margin_of(link, &scores[g]) <= 2.0 * link.gamma * width,
            };
            let action = if queried { select_action(link, &pred) } else { select_action(link, &scores[g]) };
            (queried, action, width)
        };
        class.truth_into(x, &mut truth);
        let y = draw_label(link, &truth, rng, [t as u64, 0, 0]);
        let (comparator, inst, expected) = regret_terms(link, &truth, action, y);
        learner.commit(x, &pred, queried.then_some(y))?;
        records.push(StepRecord {
            t,
            context: x,
            action,
            queried,
            labels: if queried { vec![y] } else { vec![] },
            widths: vec![width],
            truth_margin: margin_of(link, &truth),
            comparator,
            inst_regret: inst,
            expected_regret: expected,
            truth_deviation: vec![dist(&pred, &truth)],
            truth_feasible,
            bandit: None,
        });
    }
    let t_eps = count_margins(records.iter().map(|r| r.truth_margin), &opts.eps_grid);
    Ok(RunLog::assemble(records, opts.eps_grid.clone(), t_eps, vec![psi], anomalies))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn epochs_for_sixteen() {
        assert_eq!(epoch_starts(16), vec![1, 2, 4, 8, 16]);
        assert_eq!(epoch_starts(0), Vec::<usize>::new());
    }

    #[test]
    fn singleton_class_never_queries_with_positive_margins() {
        let c = Arc::new(ModelClass::finite(2, vec![vec![vec![0.7, 0.3], vec![0.2, 0.8]]], 0, 1.0).unwrap());
        let ctx: Vec<usize> = (0..50).map(|t| t % 2).collect();
        let log = sage_run(&c, &LinkSpec::identity(), 10.0, &ctx, &RngStream::new(1), &SageOptions::default()).unwrap();
        assert_eq!(log.queries, 0);
        assert!(log.records.iter().all(|r| r.widths[0] == 0.0 && r.action == r.comparator));
        assert_eq!(log.expected_regret, 0.0);
        assert!(log.is_consistent());
        let log = dis_run(&c, &LinkSpec::identity(), 10.0, &ctx, &RngStream::new(1), &SageOptions::default()).unwrap();
        assert_eq!(log.queries, 0);
    }

    #[test]
    fn singleton_with_zero_margin_queries() {
        let c = Arc::new(ModelClass::finite(2, vec![vec![vec![0.5, 0.5]]], 0, 1.0).unwrap());
        let log = sage_run(&c, &LinkSpec::identity(), 1.0, &[0; 5], &RngStream::new(3), &SageOptions::default()).unwrap();
        assert_eq!(log.queries, 5);
    }

    #[test]
    fn rejects_unknown_context() {
        let c = Arc::new(ModelClass::finite(2, vec![vec![vec![0.5, 0.5]]], 0, 1.0).unwrap());
        assert!(sage_run(&c, &LinkSpec::identity(), 1.0, &[1], &RngStream::new(3), &SageOptions::default()).is_err());
    }
}
