//! Offline baselines and diagnostics: noisy-expert demonstrations, majority
//! vote behaviour cloning, and the modified performance-difference check.

use std::collections::HashMap;
use std::sync::Arc;

use super::{rollout, EpisodicEnv};
use crate::classes::ModelClass;
use crate::error::{invalid, Result};
use crate::link::{select_action, ActionLabel, LinkSpec};
use crate::rng::RngStream;
use crate::selsamp::sage::draw_label;

/// One demonstration: the `(state, action)` pair of every step.
pub type Demo = Vec<(usize, ActionLabel)>;

/// `n` episodes that follow the noisy expert's sampled actions.
///
/// Episode `i` uses dynamics seed `t = i + 1` and labels at key `(t, h−1, 0)`
/// of `rng`; pass a child stream to keep demos independent of a paired run.
pub fn noisy_expert_demos(
    env: &dyn EpisodicEnv,
    classes: &[Arc<ModelClass>],
    link: &LinkSpec,
    n: usize,
    rng: &RngStream,
) -> Result<Vec<Demo>> {
    if classes.len() != env.horizon() {
        return Err(invalid("need one class per step"));
    }
    Ok((1..=n)
        .map(|t| {
            rollout(env, t, rng, |h, x| {
                let mut v = vec![0.0; classes[h - 1].actions()];
                classes[h - 1].truth_into(x, &mut v);
                draw_label(link, &v, rng, [t as u64, (h - 1) as u64, 0])
            })
            .steps
        })
        .collect())
}

/// Deterministic step-indexed lookup policy.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularPolicy {
    table: Vec<HashMap<usize, ActionLabel>>,
    default: ActionLabel,
}

impl TabularPolicy {
    /// Action at step `h` (1-based) and state `x`.
    pub fn act(&self, h: usize, x: usize) -> ActionLabel {
        self.table.get(h - 1).and_then(|m| m.get(&x)).copied().unwrap_or(self.default)
    }

    /// Number of `(h, x)` entries learned from data.
    pub fn coverage(&self) -> usize {
        self.table.iter().map(HashMap::len).sum()
    }
}

/// Majority label per visited `(h, state)` (lowest action on ties); unvisited
/// states fall back to action 1.
pub fn behavior_cloning(demos: &[Demo], horizon: usize, actions: usize) -> Result<TabularPolicy> {
    if actions == 0 {
        return Err(invalid("need at least one action"));
    }
    let mut counts: Vec<HashMap<usize, Vec<usize>>> = vec![HashMap::new(); horizon];
    for demo in demos {
        if demo.len() > horizon {
            return Err(invalid(format!("demonstration of length {} exceeds the horizon {horizon}", demo.len())));
        }
        for (h, &(x, a)) in demo.iter().enumerate() {
            if a.index() >= actions {
                return Err(invalid(format!("action {a} outside 1..={actions}")));
            }
            counts[h].entry(x).or_insert_with(|| vec![0; actions])[a.index()] += 1;
        }
    }
    let table = counts
        .into_iter()
        .map(|m| {
            m.into_iter()
                .map(|(x, c)| {
                    let best = (0..actions).fold(0, |b, k| if c[k] > c[b] { k } else { b });
                    (x, ActionLabel::from_index(best))
                })
                .collect()
        })
        .collect();
    Ok(TabularPolicy { table, default: ActionLabel::from_index(0) })
}

/// Demo file text: one trajectory per line of space-separated `state:action`
/// pairs, actions 1-based.
pub fn format_demos(demos: &[Demo]) -> String {
    let mut out = String::new();
    for demo in demos {
        let line: Vec<String> = demo.iter().map(|(x, a)| format!("{x}:{}", a.one_based())).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

/// Parse [`format_demos`] output; blank lines and `#` comments are skipped.
pub fn parse_demos(text: &str, actions: usize) -> Result<Vec<Demo>> {
    let mut demos = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let demo = line
            .split_whitespace()
            .map(|pair| {
                let bad = || invalid(format!("line {}: malformed pair `{pair}`", i + 1));
                let (x, a) = pair.split_once(':').ok_or_else(bad)?;
                let x = x.parse::<usize>().map_err(|_| bad())?;
                let a = a.parse::<usize>().map_err(|_| bad())?;
                Ok((x, ActionLabel::from_one_based(a, actions).map_err(|_| bad())?))
            })
            .collect::<Result<Demo>>()?;
        demos.push(demo);
    }
    Ok(demos)
}

/// Whether `policy` matches `π*_h = select_action(f*_h)` at every state of the
/// comparator's rollout in episode `t`.
pub fn recovers_comparator(
    env: &dyn EpisodicEnv,
    classes: &[Arc<ModelClass>],
    link: &LinkSpec,
    t: usize,
    rng: &RngStream,
    policy: impl Fn(usize, usize) -> ActionLabel,
) -> bool {
    let mut ok = true;
    rollout(env, t, rng, |h, x| {
        let mut v = vec![0.0; classes[h - 1].actions()];
        classes[h - 1].truth_into(x, &mut v);
        let a = select_action(link, &v);
        ok &= policy(h, x) == a;
        a
    });
    ok
}

/// Both sides of the modified performance-difference inequality.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdlReport {
    /// `R(τ^{π₁}) − R(τ^{π₂})`.
    pub lhs: f64,
    /// `2H Σ_h 1{x_h^{π₁} ∈ 𝔛} + 2H Σ_h 1{π₂(x_h^{π₂}) ≠ π₁(x_h^{π₂}), x_h^{π₂} ∉ 𝔛}`.
    pub rhs: f64,
}

/// Evaluate both sides on episode `t` for step-indexed policies and region `𝔛`.
pub fn pdl_terms(
    env: &dyn EpisodicEnv,
    t: usize,
    rng: &RngStream,
    pi1: &dyn Fn(usize, usize) -> ActionLabel,
    pi2: &dyn Fn(usize, usize) -> ActionLabel,
    region: &dyn Fn(usize) -> bool,
) -> PdlReport {
    let tau1 = rollout(env, t, rng, pi1);
    let tau2 = rollout(env, t, rng, pi2);
    let two_h = 2.0 * env.horizon() as f64;
    let in_region = tau1.steps.iter().filter(|&&(x, _)| region(x)).count() as f64;
    let disagree = tau2.steps.iter().enumerate().filter(|&(h, &(x, a))| a != pi1(h + 1, x) && !region(x)).count() as f64;
    PdlReport { lhs: tau1.total - tau2.total, rhs: two_h * (in_region + disagree) }
}

/// `lhs ≤ rhs` (up to rounding).
pub fn pdl_check(
    env: &dyn EpisodicEnv,
    t: usize,
    rng: &RngStream,
    pi1: &dyn Fn(usize, usize) -> ActionLabel,
    pi2: &dyn Fn(usize, usize) -> ActionLabel,
    region: &dyn Fn(usize) -> bool,
) -> bool {
    let r = pdl_terms(env, t, rng, pi1, pi2, region);
    r.lhs <= r.rhs + 1e-12
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imitation::{tree_mdp, TabularMdp};
    use rand::SeedableRng;

    #[test]
    fn demos_roundtrip_and_bc_majority() {
        let a = |k| ActionLabel::from_index(k);
        let demos = vec![vec![(0, a(1)), (2, a(0))], vec![(0, a(1)), (2, a(1))], vec![(0, a(0))]];
        let text = format_demos(&demos);
        assert_eq!(text.lines().next().unwrap(), "0:2 2:1");
        assert_eq!(parse_demos(&text, 2).unwrap(), demos);
        let pol = behavior_cloning(&demos, 2, 2).unwrap();
        assert_eq!(pol.act(1, 0), a(1));
        assert_eq!(pol.act(2, 2), a(0));
        assert_eq!(pol.act(2, 7), a(0));
        assert!(parse_demos("0:3", 2).is_err());
        assert_eq!(behavior_cloning(&[], 3, 2).unwrap().coverage(), 0);
    }

    #[test]
    fn noiseless_full_coverage_recovers_comparator() {
        let env = tree_mdp(4, 3).unwrap();
        let classes = env.classes().unwrap();
        let link = LinkSpec::identity();
        let rng = RngStream::new(0);
        let demo: Demo = rollout(&env, 1, &rng, |h, x| select_action(&link, &classes[h - 1].truth(x).unwrap())).steps;
        let pol = behavior_cloning(&[demo], 4, 2).unwrap();
        assert!(recovers_comparator(&env, &classes, &link, 1, &rng, |h, x| pol.act(h, x)));
    }

    #[test]
    fn pdl_trivial_cases() {
        let mut g = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let env = TabularMdp::random(&mut g, 4, 6, 3);
        let rng = RngStream::new(0);
        let p = |_h: usize, x: usize| ActionLabel::from_index(x % 3);
        let r = pdl_terms(&env, 1, &rng, &p, &p, &|_| false);
        assert_eq!((r.lhs, r.rhs), (0.0, 0.0));
        let q = |_h: usize, _x: usize| ActionLabel::from_index(0);
        let r = pdl_terms(&env, 1, &rng, &p, &q, &|_| true);
        assert_eq!(r.rhs, 2.0 * 16.0);
        assert!(pdl_check(&env, 1, &rng, &p, &q, &|x| x < 3));
    }
}
