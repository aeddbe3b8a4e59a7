//! Episodic environments: the binary-tree lower-bound MDP, the three-region
//! balance chain, explicit tabular MDPs and a one-step context replay.

use std::sync::Arc;

use rand::Rng;

use super::EpisodicEnv;
use crate::classes::{tree_position, tree_state, ModelClass, MAX_TREE_HORIZON};
use crate::error::{invalid, AilError, Result};
use crate::link::{apply_link, ActionLabel, LinkSpec};
use crate::rng::{RngStream, Substream};

/// Depth-`H` binary tree with hidden path `τ*`.
///
/// States are heap numbered (root 0, children `2s+1+a`). The expected reward
/// is `½ + ¼·1{x = x*}` at every step, `x*` being the leaf-layer state on
/// `τ*`; with `sampled_rewards` the ledger instead draws Bernoulli rewards,
/// shared between learner and comparator at equal `(t, h, x, a)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeMdp {
    horizon: usize,
    seed: u64,
    truth_path: u64,
    pub sampled_rewards: bool,
}

/// Tree MDP whose hidden path is drawn from `seed`.
pub fn tree_mdp(horizon: usize, seed: u64) -> Result<TreeMdp> {
    if horizon < 2 {
        return Err(invalid("tree MDP needs H >= 2"));
    }
    if horizon > MAX_TREE_HORIZON {
        return Err(AilError::ResourceCap(format!("tree horizon {horizon} exceeds {MAX_TREE_HORIZON}")));
    }
    let truth_path = RngStream::new(seed).generator(Substream::Instance, [0, 0, 0]).gen::<u64>() & ((1u64 << horizon) - 1);
    Ok(TreeMdp { horizon, seed, truth_path, sampled_rewards: false })
}

impl TreeMdp {
    pub fn truth_path(&self) -> u64 {
        self.truth_path
    }

    /// The rewarded leaf-layer state `x*`.
    pub fn special_state(&self) -> usize {
        tree_state(self.horizon, (self.truth_path >> 1) as usize)
    }

    /// Per-step classes `ℱ_h` (all `2^H` path members, truth `τ*`).
    pub fn classes(&self) -> Result<Vec<Arc<ModelClass>>> {
        (1..=self.horizon).map(|h| ModelClass::tree_layer(self.horizon, h, self.seed, self.truth_path).map(Arc::new)).collect()
    }
}

impl EpisodicEnv for TreeMdp {
    fn horizon(&self) -> usize {
        self.horizon
    }

    fn actions(&self) -> usize {
        2
    }

    fn num_states(&self) -> usize {
        (1 << self.horizon) - 1
    }

    fn start(&self, _t: usize, _rng: &RngStream) -> usize {
        0
    }

    fn step(&self, _t: usize, _h: usize, x: usize, a: ActionLabel, _rng: &RngStream) -> usize {
        if tree_position(x).0 >= self.horizon {
            x
        } else {
            2 * x + 1 + a.index()
        }
    }

    fn reward(&self, t: usize, h: usize, x: usize, a: ActionLabel, rng: &RngStream) -> f64 {
        let mean = if x == self.special_state() { 0.75 } else { 0.5 };
        if self.sampled_rewards {
            let u = rng.uniform(Substream::Rewards, [t as u64, h as u64, (2 * x + a.index()) as u64]);
            (u < mean) as u8 as f64
        } else {
            mean
        }
    }
}

/// A line of `3·R` positions split into three regions of length `R`, with
/// actions "left"/"right" (indices 0/1) and a random drift in `{−1, 0, +1}`
/// shared by every trajectory of the same `(t, h)`.
///
/// Reward `1 − |x − c|/c` favours the centre `c`. Expert `m` is confident
/// (margin 0.7) only inside region `m`, where it recommends moving toward the
/// centre; elsewhere it is unsure (margin 0.1) with a fixed pseudo-random lean.
#[derive(Debug, Clone, PartialEq)]
pub struct BalanceChain {
    region_len: usize,
    horizon: usize,
    seed: u64,
    /// Probability of each nonzero drift.
    pub drift: f64,
}

impl BalanceChain {
    pub fn new(region_len: usize, horizon: usize, seed: u64) -> Result<Self> {
        if region_len < 2 || horizon == 0 {
            return Err(invalid("balance chain needs region length >= 2 and H >= 1"));
        }
        Ok(Self { region_len, horizon, seed, drift: 0.25 })
    }

    pub fn experts(&self) -> usize {
        3
    }

    fn centre(&self) -> f64 {
        (self.num_states() as f64 - 1.0) / 2.0
    }

    /// Direction toward the centre (0 = left, 1 = right).
    pub fn toward_centre(&self, x: usize) -> usize {
        ((x as f64) < self.centre()) as usize
    }

    /// Score table of expert `m`'s truth.
    fn truth_table(&self, m: usize) -> Vec<Vec<f64>> {
        let mut lean = RngStream::new(self.seed).generator(Substream::Instance, [2, m as u64, 0]);
        (0..self.num_states())
            .map(|x| {
                let (a, hi) = if x / self.region_len == m { (self.toward_centre(x), 0.85) } else { (lean.gen_range(0..2), 0.55) };
                let mut v = vec![1.0 - hi; 2];
                v[a] = hi;
                v
            })
            .collect()
    }

    /// Expert classes: `members` tables per expert, the truth at a seeded
    /// index and every other member flipping the truth on a random half of
    /// the states.
    pub fn expert_classes(&self, members: usize) -> Result<Vec<Arc<ModelClass>>> {
        if members == 0 {
            return Err(invalid("need at least one member per class"));
        }
        (0..self.experts())
            .map(|m| {
                let truth = self.truth_table(m);
                let mut g = RngStream::new(self.seed).generator(Substream::Instance, [3, m as u64, 0]);
                let truth_index = g.gen_range(0..members);
                let tables = (0..members)
                    .map(|j| {
                        if j == truth_index {
                            return truth.clone();
                        }
                        truth.iter().map(|v| if g.gen_bool(0.5) { vec![v[1], v[0]] } else { v.clone() }).collect()
                    })
                    .collect();
                ModelClass::finite(2, tables, truth_index, 1.0).map(Arc::new)
            })
            .collect()
    }
}

impl EpisodicEnv for BalanceChain {
    fn horizon(&self) -> usize {
        self.horizon
    }

    fn actions(&self) -> usize {
        2
    }

    fn num_states(&self) -> usize {
        3 * self.region_len
    }

    fn start(&self, t: usize, rng: &RngStream) -> usize {
        let n = self.num_states();
        ((rng.uniform(Substream::Contexts, [t as u64, 0, 0]) * n as f64) as usize).min(n - 1)
    }

    fn step(&self, t: usize, h: usize, x: usize, a: ActionLabel, rng: &RngStream) -> usize {
        let u = rng.uniform(Substream::Dynamics, [t as u64, h as u64, 0]);
        let drift = if u < self.drift {
            -1
        } else if u < 2.0 * self.drift {
            1
        } else {
            0
        };
        let dir = if a.index() == 1 { 1 } else { -1 };
        (x as i64 + dir + drift).clamp(0, self.num_states() as i64 - 1) as usize
    }

    fn reward(&self, _t: usize, _h: usize, x: usize, _a: ActionLabel, _rng: &RngStream) -> f64 {
        let c = self.centre();
        1.0 - (x as f64 - c).abs() / c
    }
}

/// Explicit deterministic MDP with fixed start state.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    pub horizon: usize,
    pub actions: usize,
    pub states: usize,
    pub start: usize,
    /// `next[(h−1)·S·K + x·K + a]`.
    pub next: Vec<usize>,
    /// `rewards[x·K + a]`, in `[0, 1]`.
    pub rewards: Vec<f64>,
}

impl TabularMdp {
    /// Uniformly random transitions and rewards.
    pub fn random(g: &mut impl Rng, horizon: usize, states: usize, actions: usize) -> Self {
        Self {
            horizon,
            actions,
            states,
            start: g.gen_range(0..states),
            next: (0..horizon * states * actions).map(|_| g.gen_range(0..states)).collect(),
            rewards: (0..states * actions).map(|_| g.gen::<f64>()).collect(),
        }
    }
}

impl EpisodicEnv for TabularMdp {
    fn horizon(&self) -> usize {
        self.horizon
    }

    fn actions(&self) -> usize {
        self.actions
    }

    fn num_states(&self) -> usize {
        self.states
    }

    fn start(&self, _t: usize, _rng: &RngStream) -> usize {
        self.start
    }

    fn step(&self, _t: usize, h: usize, x: usize, a: ActionLabel, _rng: &RngStream) -> usize {
        self.next[(h - 1) * self.states * self.actions + x * self.actions + a.index()]
    }

    fn reward(&self, _t: usize, _h: usize, x: usize, a: ActionLabel, _rng: &RngStream) -> f64 {
        self.rewards[x * self.actions + a.index()]
    }
}

/// One-step episodes replaying a fixed context sequence; the reward of
/// action `a` at `x` is `φ(f̆(x))[a]`, so counterfactual regret equals the
/// expected selective-sampling regret.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextEnv {
    contexts: Vec<usize>,
    rewards: Vec<Vec<f64>>,
}

impl ContextEnv {
    pub fn from_class(class: &ModelClass, link: &LinkSpec, contexts: Vec<usize>) -> Result<Self> {
        if contexts.is_empty() {
            return Err(invalid("context replay needs at least one context"));
        }
        let rewards = (0..class.num_contexts()).map(|x| apply_link(link, &class.truth(x)?)).collect::<Result<_>>()?;
        Ok(Self { contexts, rewards })
    }
}

impl EpisodicEnv for ContextEnv {
    fn horizon(&self) -> usize {
        1
    }

    fn actions(&self) -> usize {
        self.rewards.first().map_or(0, Vec::len)
    }

    fn num_states(&self) -> usize {
        self.rewards.len()
    }

    fn start(&self, t: usize, _rng: &RngStream) -> usize {
        self.contexts[(t - 1) % self.contexts.len()]
    }

    fn step(&self, _t: usize, _h: usize, x: usize, _a: ActionLabel, _rng: &RngStream) -> usize {
        x
    }

    fn reward(&self, _t: usize, _h: usize, x: usize, a: ActionLabel, _rng: &RngStream) -> f64 {
        self.rewards[x][a.index()]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::link::margin;

    #[test]
    fn tree_counts_and_margins() {
        let env = tree_mdp(12, 4).unwrap();
        assert_eq!(env.num_states(), 4095);
        let classes = env.classes().unwrap();
        let mut x = 0;
        for h in 1..=12 {
            let v = classes[h - 1].truth(x).unwrap();
            assert!((margin(&LinkSpec::identity(), &v).unwrap() - 0.5).abs() < 1e-12);
            let a = ActionLabel::from_index(crate::link::argmax(&v));
            x = env.step(1, h, x, a, &RngStream::new(0));
        }
        assert_eq!(tree_position(x).0, 12);
        assert!((0.75f64.powi(12) - 0.0317).abs() < 1e-4);
    }

    #[test]
    fn comparator_path_reaches_special_state() {
        let env = tree_mdp(6, 11).unwrap();
        let classes = env.classes().unwrap();
        let rng = RngStream::new(0);
        let mut x = 0;
        for h in 1..6 {
            let a = ActionLabel::from_index(crate::link::argmax(&classes[h - 1].truth(x).unwrap()));
            x = env.step(1, h, x, a, &rng);
        }
        assert_eq!(x, env.special_state());
    }

    #[test]
    fn balance_chain_experts_agree_with_centre_policy_when_confident() {
        let env = BalanceChain::new(8, 8, 3).unwrap();
        let classes = env.expert_classes(8).unwrap();
        for x in 0..24 {
            let m = x / 8;
            let v = classes[m].truth(x).unwrap();
            assert_eq!(crate::link::argmax(&v), env.toward_centre(x));
            assert!(margin(&LinkSpec::identity(), &v).unwrap() > 0.2);
        }
        assert_eq!(env.toward_centre(11), 1);
        assert_eq!(env.toward_centre(12), 0);
    }
}
