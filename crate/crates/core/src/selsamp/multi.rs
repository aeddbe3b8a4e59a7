//! SAGE-M: one oracle and width tracker per expert, actions taken from the
//! aggregated distribution, queries decided by `que` on the joint widths.

use std::sync::Arc;

use super::que::{que, Aggregator};
use super::sage::{check_contexts, SingleLearner};
use super::{count_margins, QueryRule, RunLog, SageOptions, StepRecord};
use crate::classes::{dist, ModelClass};
use crate::error::{invalid, mismatch, Result};
use crate::link::{apply_link, argmax, margin_of, ActionLabel, LinkSpec};
use crate::rng::{sample_categorical, RngStream, Substream};

/// Experts sharing one aggregation rule.
#[derive(Debug, Clone)]
pub(crate) struct MultiLearner {
    pub experts: Vec<SingleLearner>,
    pub aggregator: Aggregator,
    pub link: LinkSpec,
    pub rule: QueryRule,
}

/// Joint decision of a [`MultiLearner`].
#[derive(Debug, Clone)]
pub(crate) struct MultiDecision {
    pub predictions: Vec<Vec<f64>>,
    pub widths: Vec<Option<f64>>,
    pub action: ActionLabel,
    pub queried: bool,
}

impl MultiLearner {
    pub fn new(
        classes: &[Arc<ModelClass>],
        link: &LinkSpec,
        psis: &[f64],
        aggregator: &Aggregator,
        opts: &SageOptions,
    ) -> Result<Self> {
        if classes.is_empty() {
            return Err(invalid("need at least one expert"));
        }
        if classes.len() != psis.len() {
            return Err(mismatch(format!("{} experts but {} budgets", classes.len(), psis.len())));
        }
        let k = classes[0].actions();
        if classes.iter().any(|c| c.actions() != k) {
            return Err(mismatch("experts disagree on the number of actions"));
        }
        let experts =
            classes.iter().zip(psis).map(|(c, &psi)| SingleLearner::new(c, link, psi, opts)).collect::<Result<Vec<_>>>()?;
        Ok(Self { experts, aggregator: *aggregator, link: *link, rule: opts.rule })
    }

    pub fn decide(&mut self, x: usize) -> Result<MultiDecision> {
        let mut predictions = Vec::with_capacity(self.experts.len());
        let mut widths = Vec::with_capacity(self.experts.len());
        for e in &mut self.experts {
            let (p, w) = e.observe(x)?;
            predictions.push(p);
            widths.push(w);
        }
        let p = self.aggregator.aggregate(&self.link, &predictions);
        let action = ActionLabel::from_index(argmax(&p));
        let queried = if widths.iter().any(Option::is_none) {
            !matches!(self.rule, QueryRule::Never)
        } else {
            let w: Vec<f64> = widths.iter().map(|w| w.unwrap()).collect();
            match self.rule {
                QueryRule::Always => true,
                QueryRule::Never => false,
                QueryRule::Que { resolution } => que(&predictions, &w, &self.aggregator, &self.link, resolution),
                QueryRule::MarginWidth => match self.aggregator.eta {
                    Some(eta) => {
                        let norm = w.iter().map(|d| d * d).sum::<f64>().sqrt();
                        margin_of(&LinkSpec::identity(), &p) <= 2.0 * self.link.gamma * eta * norm
                    }
                    None => que(&predictions, &w, &self.aggregator, &self.link, super::DEFAULT_QUE_RESOLUTION),
                },
            }
        };
        Ok(MultiDecision { predictions, widths, action, queried })
    }

    /// Record the round for every expert; `labels` holds one label per expert on queries.
    pub fn commit(&mut self, x: usize, d: &MultiDecision, labels: Option<&[ActionLabel]>) -> Result<()> {
        for (m, e) in self.experts.iter_mut().enumerate() {
            e.commit(x, &d.predictions[m], labels.map(|l| l[m]))?;
        }
        Ok(())
    }

    pub fn truth_feasible(&self) -> Option<bool> {
        self.experts.iter().map(SingleLearner::truth_feasible).try_fold(true, |acc, f| f.map(|f| acc && f))
    }
}

/// Aggregated comparator distribution `𝒜(φ(F*(x)))`.
pub(crate) fn aggregated_truth(
    classes: &[Arc<ModelClass>],
    link: &LinkSpec,
    agg: &Aggregator,
    x: usize,
) -> (Vec<Vec<f64>>, Vec<f64>) {
    let truths: Vec<Vec<f64>> = classes
        .iter()
        .map(|c| {
            let mut v = vec![0.0; c.actions()];
            c.truth_into(x, &mut v);
            v
        })
        .collect();
    let p = agg.aggregate(link, &truths);
    (truths, p)
}

/// One SAGE-M round at `x`; expert `m`'s label is drawn at key `(t, h, m)`.
pub(crate) fn multi_step(learner: &mut MultiLearner, x: usize, t: usize, h: u64, rng: &RngStream) -> Result<(StepRecord, bool)> {
    let link = learner.link;
    let truth_feasible = learner.truth_feasible();
    let d = learner.decide(x)?;
    let classes: Vec<Arc<ModelClass>> = learner.experts.iter().map(|e| e.class.clone()).collect();
    let (truths, p_star) = aggregated_truth(&classes, &link, &learner.aggregator, x);
    let labels: Vec<ActionLabel> = truths
        .iter()
        .enumerate()
        .map(|(m, v)| {
            let p = apply_link(&link, v).expect("finite truth scores");
            ActionLabel::from_index(sample_categorical(&p, rng.uniform(Substream::Labels, [t as u64, h, m as u64])))
        })
        .collect();
    let y_star = ActionLabel::from_index(sample_categorical(&p_star, rng.uniform(Substream::Labels, [t as u64, h, 0])));
    let comparator = ActionLabel::from_index(argmax(&p_star));
    let inst = (d.action != y_star) as i32 as f64 - (comparator != y_star) as i32 as f64;
    let expected = p_star[comparator.index()] - p_star[d.action.index()];
    learner.commit(x, &d, d.queried.then_some(labels.as_slice()))?;
    let record = StepRecord {
        t,
        context: x,
        action: d.action,
        queried: d.queried,
        labels: if d.queried { labels } else { vec![] },
        widths: d.widths.iter().map(|w| w.unwrap_or(f64::INFINITY)).collect(),
        truth_margin: margin_of(&LinkSpec::identity(), &p_star),
        comparator,
        inst_regret: inst,
        expected_regret: expected,
        truth_deviation: d.predictions.iter().zip(&truths).map(|(a, b)| dist(a, b)).collect(),
        truth_feasible,
        bandit: None,
    };
    Ok((record, d.widths.iter().any(Option::is_none)))
}

/// Run SAGE-M over `contexts`.
///
/// Expert `m` draws its label from `φ(f̆_m(x_t))` at key `(t, 0, m)`; the
/// comparator's label is drawn from `𝒜(φ(F*(x_t)))` with expert 0's uniform.
/// On a query every expert's oracle is updated with its own label.
pub fn sagem_run(
    classes: &[Arc<ModelClass>],
    link: &LinkSpec,
    psis: &[f64],
    aggregator: &Aggregator,
    contexts: &[usize],
    rng: &RngStream,
    opts: &SageOptions,
) -> Result<RunLog> {
    let mut learner = MultiLearner::new(classes, link, psis, aggregator, opts)?;
    for c in classes {
        check_contexts(c, contexts)?;
    }
    let mut records = Vec::with_capacity(contexts.len());
    let mut anomalies = Vec::new();
    for (i, &x) in contexts.iter().enumerate() {
        let (record, forced) = multi_step(&mut learner, x, i + 1, 0, rng)?;
        if forced {
            anomalies.push(format!("t={}: empty feasible set, forced query", i + 1));
        }
        records.push(record);
    }
    let t_eps = count_margins(records.iter().map(|r| r.truth_margin), &opts.eps_grid);
    Ok(RunLog::assemble(records, opts.eps_grid.clone(), t_eps, psis.to_vec(), anomalies))
}

/// `T_ε`: number of contexts whose comparator margin is at most `ε`, per grid entry.
///
/// With several truth classes the margin is taken on the aggregated
/// distribution (random mix when `aggregator` is `None`).
pub fn t_epsilon(
    truths: &[Arc<ModelClass>],
    contexts: &[usize],
    link: &LinkSpec,
    eps_grid: &[f64],
    aggregator: Option<&Aggregator>,
) -> Result<Vec<usize>> {
    if truths.is_empty() {
        return Err(invalid("need at least one truth"));
    }
    for c in truths {
        check_contexts(c, contexts)?;
    }
    let agg = aggregator.copied().unwrap_or_else(|| Aggregator::random_mix(truths.len()));
    let margins: Vec<f64> = contexts
        .iter()
        .map(|&x| {
            if truths.len() == 1 {
                let mut v = vec![0.0; truths[0].actions()];
                truths[0].truth_into(x, &mut v);
                margin_of(link, &v)
            } else {
                margin_of(&LinkSpec::identity(), &aggregated_truth(truths, link, &agg, x).1)
            }
        })
        .collect();
    Ok(count_margins(margins.iter().copied(), eps_grid))
}
