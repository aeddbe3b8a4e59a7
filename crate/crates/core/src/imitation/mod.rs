//! Interactive imitation learning with selective expert queries.
//!
//! [`ravioli_run`] runs one selective-sampling learner per step `h` along the
//! learner's own trajectory, and after every episode rolls out the comparator
//! `π*_h = select_action(f*_h)` under the same per-episode dynamics seed, so
//! regret is counterfactual. Margins `T_{ε,h}` are counted along the
//! comparator's trajectory. [`ravioli_m_run`] is the multi-expert version and
//! [`passive_il_run`] queries every step.
//!
//! Labels at step `h` (1-based) use substream key `(t, h−1, m)`, so a
//! one-step run draws exactly what the selective-sampling drivers draw.

mod envs;
mod offline;

pub use envs::{tree_mdp, BalanceChain, ContextEnv, TabularMdp, TreeMdp};
pub use offline::{
    behavior_cloning, format_demos, noisy_expert_demos, parse_demos, pdl_check, pdl_terms, recovers_comparator, Demo, PdlReport,
    TabularPolicy,
};

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::classes::ModelClass;
use crate::error::{invalid, mismatch, AilError, Result};
use crate::link::{argmax, margin_of, select_action, ActionLabel, LinkSpec};
use crate::rng::RngStream;
use crate::selsamp::multi::{aggregated_truth, multi_step, MultiLearner};
use crate::selsamp::sage::{single_step, SingleLearner};
use crate::selsamp::{count_margins, Aggregator, QueryRule, RunLog, SageOptions, StepRecord};

/// Finite-horizon environment with deterministic per-episode dynamics.
///
/// All randomness is drawn from the supplied stream at keys derived from
/// `(t, h)`, so replaying episode `t` reproduces its dynamics exactly. Steps
/// `h` are 1-based; rewards lie in `[0, 1]` and are never shown to learners.
pub trait EpisodicEnv: Send + Sync {
    fn horizon(&self) -> usize;
    fn actions(&self) -> usize;
    /// States are `0..num_states()`.
    fn num_states(&self) -> usize;
    /// `x_{t,1}`.
    fn start(&self, t: usize, rng: &RngStream) -> usize;
    /// `d_{t,h}(x, a)`.
    fn step(&self, t: usize, h: usize, x: usize, a: ActionLabel, rng: &RngStream) -> usize;
    /// Reward entered in the regret ledger.
    fn reward(&self, t: usize, h: usize, x: usize, a: ActionLabel, rng: &RngStream) -> f64;
}

/// Visited `(state, action)` pairs with their rewards.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub steps: Vec<(usize, ActionLabel)>,
    pub rewards: Vec<f64>,
    /// `R(τ) = Σ_h r(x_h, a_h)`.
    pub total: f64,
}

impl Trajectory {
    fn push(&mut self, x: usize, a: ActionLabel, r: f64) {
        self.steps.push((x, a));
        self.rewards.push(r);
        self.total += r;
    }

    pub fn is_consistent(&self) -> bool {
        self.steps.len() == self.rewards.len() && self.total == self.rewards.iter().sum::<f64>()
    }
}

/// Roll out `policy(h, x)` for episode `t`.
pub fn rollout(
    env: &dyn EpisodicEnv,
    t: usize,
    rng: &RngStream,
    mut policy: impl FnMut(usize, usize) -> ActionLabel,
) -> Trajectory {
    let mut traj = Trajectory::default();
    let mut x = env.start(t, rng);
    for h in 1..=env.horizon() {
        let a = policy(h, x);
        traj.push(x, a, env.reward(t, h, x, a, rng));
        if h < env.horizon() {
            x = env.step(t, h, x, a, rng);
        }
    }
    traj
}

/// One `(t, h)` entry of an imitation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ILStep {
    /// Step, starting at 1.
    pub h: usize,
    /// Selective-sampling telemetry at the learner's state.
    pub record: StepRecord,
    /// `r(x_{t,h}, ŷ_{t,h})`.
    pub inst_reward: f64,
    /// `r(x*_{t,h}, π*_h(x*_{t,h}))` on the comparator trajectory.
    pub comparator_reward: f64,
}

/// Completed imitation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ILRunLog {
    pub horizon: usize,
    /// Entries in `(t, h)` order.
    pub steps: Vec<ILStep>,
    pub learner: Vec<Trajectory>,
    /// Counterfactual comparator trajectories, one per episode.
    pub comparator: Vec<Trajectory>,
    /// `Σ_t R(τ*_t) − R(τ_t)`.
    pub regret: f64,
    pub queries: usize,
    pub eps_grid: Vec<f64>,
    /// `T_{ε,h}` indexed `[h−1][ε]`.
    pub t_eps: Vec<Vec<usize>>,
    /// Budgets indexed `[h−1][expert]`.
    pub psi: Vec<Vec<f64>>,
    /// Fail-open events per step.
    pub anomalies: Vec<Vec<String>>,
    /// The final greedy policy matches `π*` at every state of a fresh comparator rollout.
    pub final_path_match: bool,
}

impl ILRunLog {
    /// The step-`h` records as a selective-sampling log.
    pub fn step_log(&self, h: usize) -> RunLog {
        let records = self.steps.iter().filter(|s| s.h == h).map(|s| s.record.clone()).collect();
        RunLog::assemble(
            records,
            self.eps_grid.clone(),
            self.t_eps[h - 1].clone(),
            self.psi[h - 1].clone(),
            self.anomalies[h - 1].clone(),
        )
    }

    /// Totals agree with the per-step entries and trajectories.
    pub fn is_consistent(&self) -> bool {
        let regret: f64 = self.comparator.iter().zip(&self.learner).map(|(c, l)| c.total - l.total).sum();
        regret == self.regret
            && self.steps.iter().filter(|s| s.record.queried).count() == self.queries
            && self.learner.iter().chain(&self.comparator).all(Trajectory::is_consistent)
    }

    /// Mean learner and comparator return over the last `n` episodes.
    pub fn tail_returns(&self, n: usize) -> (f64, f64) {
        let n = n.min(self.learner.len()).max(1);
        let from = self.learner.len().saturating_sub(n);
        let mean = |v: &[Trajectory]| v[from..].iter().map(|t| t.total).sum::<f64>() / n as f64;
        (mean(&self.learner), mean(&self.comparator))
    }
}

enum StepLearners {
    Single(Vec<SingleLearner>),
    Multi(Vec<MultiLearner>),
}

impl StepLearners {
    fn step(&mut self, h: usize, x: usize, t: usize, rng: &RngStream) -> Result<(StepRecord, bool)> {
        match self {
            StepLearners::Single(v) => single_step(&mut v[h - 1], x, t, (h - 1) as u64, rng),
            StepLearners::Multi(v) => multi_step(&mut v[h - 1], x, t, (h - 1) as u64, rng),
        }
    }

    /// `π*_h(x)` and the comparator margin at `x`.
    fn comparator(&self, h: usize, x: usize) -> (ActionLabel, f64) {
        match self {
            StepLearners::Single(v) => {
                let l = &v[h - 1];
                let mut truth = vec![0.0; l.class.actions()];
                l.class.truth_into(x, &mut truth);
                (select_action(&l.link, &truth), margin_of(&l.link, &truth))
            }
            StepLearners::Multi(v) => {
                let l = &v[h - 1];
                let classes: Vec<Arc<ModelClass>> = l.experts.iter().map(|e| e.class.clone()).collect();
                let (_, p) = aggregated_truth(&classes, &l.link, &l.aggregator, x);
                (ActionLabel::from_index(argmax(&p)), margin_of(&LinkSpec::identity(), &p))
            }
        }
    }

    /// Action of the current greedy policy.
    fn greedy(&self, h: usize, x: usize) -> ActionLabel {
        let predict = |l: &SingleLearner| {
            let mut v = vec![0.0; l.class.actions()];
            l.oracle.predict_into(x, &mut v);
            v
        };
        match self {
            StepLearners::Single(v) => select_action(&v[h - 1].link, &predict(&v[h - 1])),
            StepLearners::Multi(v) => {
                let l = &v[h - 1];
                let preds: Vec<Vec<f64>> = l.experts.iter().map(predict).collect();
                ActionLabel::from_index(argmax(&l.aggregator.aggregate(&l.link, &preds)))
            }
        }
    }
}

fn check_env(env: &dyn EpisodicEnv, classes: &[&Arc<ModelClass>]) -> Result<()> {
    for c in classes {
        if c.actions() != env.actions() {
            return Err(mismatch(format!("environment has {} actions but a class has {}", env.actions(), c.actions())));
        }
        if c.num_contexts() < env.num_states() {
            return Err(AilError::Mismatch(format!(
                "environment has {} states but a class covers {}",
                env.num_states(),
                c.num_contexts()
            )));
        }
    }
    Ok(())
}

fn drive(
    env: &dyn EpisodicEnv,
    mut learners: StepLearners,
    rounds: usize,
    rng: &RngStream,
    eps_grid: &[f64],
    psi: Vec<Vec<f64>>,
) -> Result<ILRunLog> {
    let horizon = env.horizon();
    let mut steps = Vec::with_capacity(rounds * horizon);
    let mut learner_trajs = Vec::with_capacity(rounds);
    let mut comparator_trajs = Vec::with_capacity(rounds);
    let mut margins = vec![Vec::with_capacity(rounds); horizon];
    let mut anomalies = vec![Vec::new(); horizon];
    for t in 1..=rounds {
        let mut traj = Trajectory::default();
        let mut x = env.start(t, rng);
        for h in 1..=horizon {
            let (record, forced) = learners.step(h, x, t, rng)?;
            if forced {
                anomalies[h - 1].push(format!("t={t}: empty feasible set, forced query"));
            }
            let a = record.action;
            let r = env.reward(t, h, x, a, rng);
            traj.push(x, a, r);
            steps.push(ILStep { h, record, inst_reward: r, comparator_reward: 0.0 });
            if h < horizon {
                x = env.step(t, h, x, a, rng);
            }
        }
        let comp = rollout(env, t, rng, |h, x| {
            let (a, m) = learners.comparator(h, x);
            margins[h - 1].push(m);
            a
        });
        let base = steps.len() - horizon;
        for (h, r) in comp.rewards.iter().enumerate() {
            steps[base + h].comparator_reward = *r;
        }
        learner_trajs.push(traj);
        comparator_trajs.push(comp);
    }
    let final_path_match = {
        let mut ok = true;
        rollout(env, rounds + 1, rng, |h, x| {
            let (a, _) = learners.comparator(h, x);
            ok &= learners.greedy(h, x) == a;
            a
        });
        ok
    };
    let regret = comparator_trajs.iter().zip(&learner_trajs).map(|(c, l)| c.total - l.total).sum();
    let queries = steps.iter().filter(|s| s.record.queried).count();
    let t_eps = margins.iter().map(|m| count_margins(m.iter().copied(), eps_grid)).collect();
    Ok(ILRunLog {
        horizon,
        steps,
        learner: learner_trajs,
        comparator: comparator_trajs,
        regret,
        queries,
        eps_grid: eps_grid.to_vec(),
        t_eps,
        psi,
        anomalies,
        final_path_match,
    })
}

/// RAVIOLI for `rounds` episodes with one class and budget per step.
pub fn ravioli_run(
    classes: &[Arc<ModelClass>],
    link: &LinkSpec,
    psis: &[f64],
    env: &dyn EpisodicEnv,
    rounds: usize,
    rng: &RngStream,
    opts: &SageOptions,
) -> Result<ILRunLog> {
    let h = env.horizon();
    if classes.len() != h || psis.len() != h {
        return Err(mismatch(format!("horizon {h} needs {h} classes and budgets, got {} and {}", classes.len(), psis.len())));
    }
    check_env(env, &classes.iter().collect::<Vec<_>>())?;
    let learners = classes.iter().zip(psis).map(|(c, &p)| SingleLearner::new(c, link, p, opts)).collect::<Result<Vec<_>>>()?;
    drive(env, StepLearners::Single(learners), rounds, rng, &opts.eps_grid, psis.iter().map(|&p| vec![p]).collect())
}

/// RAVIOLI-M: classes and budgets indexed `[h−1][expert]`.
///
/// The default rule for multi-expert runs is the `que` test; pass
/// `QueryRule::MarginWidth` to use the Lipschitz shortcut instead.
#[allow(clippy::too_many_arguments)]
pub fn ravioli_m_run(
    classes: &[Vec<Arc<ModelClass>>],
    link: &LinkSpec,
    psis: &[Vec<f64>],
    aggregator: &Aggregator,
    env: &dyn EpisodicEnv,
    rounds: usize,
    rng: &RngStream,
    opts: &SageOptions,
) -> Result<ILRunLog> {
    let h = env.horizon();
    if classes.len() != h || psis.len() != h {
        return Err(mismatch(format!("horizon {h} needs {h} expert sets and budget rows")));
    }
    if classes.iter().any(|c| c.len() != classes[0].len()) {
        return Err(invalid("every step needs the same number of experts"));
    }
    check_env(env, &classes.iter().flatten().collect::<Vec<_>>())?;
    let learners =
        classes.iter().zip(psis).map(|(c, p)| MultiLearner::new(c, link, p, aggregator, opts)).collect::<Result<Vec<_>>>()?;
    drive(env, StepLearners::Multi(learners), rounds, rng, &opts.eps_grid, psis.to_vec())
}

/// RAVIOLI with every step queried.
pub fn passive_il_run(
    classes: &[Arc<ModelClass>],
    link: &LinkSpec,
    psis: &[f64],
    env: &dyn EpisodicEnv,
    rounds: usize,
    rng: &RngStream,
    opts: &SageOptions,
) -> Result<ILRunLog> {
    let opts = SageOptions { rule: QueryRule::Always, ..opts.clone() };
    ravioli_run(classes, link, psis, env, rounds, rng, &opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::selsamp::{sage_run, sagem_run};

    fn class() -> Arc<ModelClass> {
        Arc::new(
            ModelClass::finite(
                2,
                vec![
                    vec![vec![0.7, 0.3], vec![0.4, 0.6], vec![0.55, 0.45]],
                    vec![vec![0.3, 0.7], vec![0.6, 0.4], vec![0.45, 0.55]],
                    vec![vec![0.7, 0.3], vec![0.6, 0.4], vec![0.5, 0.5]],
                ],
                0,
                1.0,
            )
            .unwrap(),
        )
    }

    #[test]
    fn one_step_matches_sage() {
        let c = class();
        let link = LinkSpec::identity();
        let ctx: Vec<usize> = (0..80).map(|t| (t * 5 + t / 3) % 3).collect();
        let env = ContextEnv::from_class(&c, &link, ctx.clone()).unwrap();
        for seed in 0..3 {
            let rng = RngStream::new(seed);
            let opts = SageOptions::default();
            let a = sage_run(&c, &link, 1.5, &ctx, &rng, &opts).unwrap();
            let b = ravioli_run(std::slice::from_ref(&c), &link, &[1.5], &env, ctx.len(), &rng, &opts).unwrap();
            assert_eq!(a, b.step_log(1));
            assert!((b.regret - a.expected_regret).abs() < 1e-9);
            let m = sagem_run(std::slice::from_ref(&c), &link, &[1.5], &Aggregator::random_mix(1), &ctx, &rng, &opts).unwrap();
            let bm =
                ravioli_m_run(&[vec![c.clone()]], &link, &[vec![1.5]], &Aggregator::random_mix(1), &env, ctx.len(), &rng, &opts)
                    .unwrap();
            let sm = bm.step_log(1);
            for (x, y) in m.records.iter().zip(&sm.records) {
                assert_eq!((x.action, x.queried), (y.action, y.queried));
            }
        }
    }

    #[test]
    fn passive_queries_every_step_and_ledger_is_consistent() {
        let env = tree_mdp(4, 2).unwrap();
        let classes = env.classes().unwrap();
        let log =
            passive_il_run(&classes, &LinkSpec::identity(), &[5.0; 4], &env, 10, &RngStream::new(1), &SageOptions::default())
                .unwrap();
        assert_eq!(log.queries, 40);
        assert!(log.is_consistent());
        assert!(log.t_eps.iter().all(|v| v[..3] == [0, 0, 0]));
    }

    #[test]
    fn singleton_steps_track_comparator() {
        let env = tree_mdp(3, 5).unwrap();
        let classes: Vec<Arc<ModelClass>> = env
            .classes()
            .unwrap()
            .iter()
            .map(|c| {
                let tables = (0..1).map(|_| (0..c.num_contexts()).map(|x| c.truth(x).unwrap()).collect()).collect();
                Arc::new(ModelClass::finite(2, tables, 0, 1.0).unwrap())
            })
            .collect();
        let log = ravioli_run(&classes, &LinkSpec::identity(), &[1.0; 3], &env, 5, &RngStream::new(0), &SageOptions::default())
            .unwrap();
        assert_eq!(log.queries, 0);
        assert_eq!(log.regret, 0.0);
        assert!(log.final_path_match);
        assert_eq!(log.learner, log.comparator);
    }

    #[test]
    fn counterfactual_rollout_is_reproducible() {
        let env = BalanceChain::new(4, 5, 1).unwrap();
        let rng = RngStream::new(8);
        let pol = |_h: usize, x: usize| ActionLabel::from_index(env.toward_centre(x));
        assert_eq!(rollout(&env, 3, &rng, pol), rollout(&env, 3, &rng, pol));
    }
}
