//! Model classes `ℱ` with a designated ground-truth member `f̆`, constrained
//! widths, and brute-force complexity measures.
//!
//! Three representations share one type:
//!
//! * dense finite tables `member × context → score vector`;
//! * the implicit path family of the binary-tree lower-bound MDP (one class per
//!   layer, `2^H` members, evaluated on demand);
//! * linear classes `f_w(x)[k] = ⟨w_k, φ(x)⟩` over a finite list of feature
//!   vectors, with a weight-norm bound.
//!
//! Contexts are integer ids `0..n`.

mod complexity;
mod width;

pub use complexity::{
    bivariate_eluder, disagreement_estimate, eluder_at_scale, eluder_dimension, normed_star_number, star_number,
    star_number_any_target, ComplexityQuery, SearchCap,
};
pub use width::{constrained_width, feasible_members, HistoryEntry, WidthBudget, WidthMode, WidthTracker};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, AilError, Result};
use crate::link::{LinkKind, LinkSpec, ScoreVector};

/// Which family a [`ModelClass`] describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassKind {
    Finite,
    Linear,
}

#[derive(Debug, Clone, PartialEq)]
enum Repr {
    Table(Table),
    Paths(PathFamily),
    Linear(LinearFamily),
}

#[derive(Debug, Clone, PartialEq)]
struct Table {
    members: usize,
    contexts: usize,
    /// Row-major `[member][context][action]`.
    data: Vec<f64>,
    truth: usize,
}

/// Layer-`h` class of the binary-tree construction.
///
/// Member `τ ∈ [0, 2^H)` is a root-to-leaf path: its action at layer `j` is bit
/// `H − j` of `τ` (most significant first). On its own path the member scores
/// `(¾, ¼)` for action 1 and `(¼, ¾)` for action 2; off its path the action is
/// an arbitrary but fixed hash bit of `(seed, τ, state)`.
#[derive(Debug, Clone, PartialEq)]
struct PathFamily {
    horizon: usize,
    layer: usize,
    seed: u64,
    truth: u64,
}

#[derive(Debug, Clone, PartialEq)]
struct LinearFamily {
    dim: usize,
    features: Vec<Vec<f64>>,
    weight_bound: f64,
    truth: Vec<Vec<f64>>,
}

/// A model class `ℱ` with its ground-truth member.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelClass {
    actions: usize,
    score_bound: f64,
    repr: Repr,
}

/// Largest horizon accepted by the tree construction.
pub const MAX_TREE_HORIZON: usize = 20;

const TOL: f64 = 1e-9;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    sq_dist(a, b).sqrt()
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Layer (1-based) and in-layer index of heap-numbered tree state `s`.
pub fn tree_position(s: usize) -> (usize, usize) {
    let layer = (usize::BITS - (s + 1).leading_zeros()) as usize;
    (layer, s + 1 - (1 << (layer - 1)))
}

/// Heap id of the `i`-th state of layer `layer`.
pub fn tree_state(layer: usize, i: usize) -> usize {
    (1 << (layer - 1)) - 1 + i
}

impl PathFamily {
    fn action(&self, member: u64, state: usize) -> usize {
        let (layer, i) = tree_position(state);
        if layer <= self.horizon && (i as u64) == member >> (self.horizon - layer + 1) {
            ((member >> (self.horizon - layer)) & 1) as usize
        } else {
            (mix(self.seed ^ mix(member ^ mix(state as u64 ^ 0x73_7461_7465))) & 1) as usize
        }
    }
}

impl ModelClass {
    /// Finite class from explicit tables `members[m][x]` (each a score vector).
    pub fn finite(actions: usize, members: Vec<Vec<ScoreVector>>, truth: usize, score_bound: f64) -> Result<Self> {
        if members.is_empty() {
            return Err(AilError::Empty("model class"));
        }
        if actions == 0 {
            return Err(invalid("K must be at least 1"));
        }
        if !(score_bound > 0.0) {
            return Err(invalid("score bound must be positive"));
        }
        if truth >= members.len() {
            return Err(AilError::UnknownMember { member: truth, size: members.len() });
        }
        let contexts = members[0].len();
        if contexts == 0 {
            return Err(AilError::Empty("domain"));
        }
        let mut data = Vec::with_capacity(members.len() * contexts * actions);
        for (m, table) in members.iter().enumerate() {
            if table.len() != contexts {
                return Err(invalid(format!("member {m} has {} contexts, expected {contexts}", table.len())));
            }
            for (x, v) in table.iter().enumerate() {
                if v.len() != actions {
                    return Err(invalid(format!("member {m} context {x}: {} scores, expected {actions}", v.len())));
                }
                crate::link::check_finite(v)?;
                if norm(v) > score_bound + TOL {
                    return Err(invalid(format!("member {m} context {x}: norm exceeds score bound {score_bound}")));
                }
                data.extend_from_slice(v);
            }
        }
        Ok(Self { actions, score_bound, repr: Repr::Table(Table { members: members.len(), contexts, data, truth }) })
    }

    /// Finite class whose scores are produced by `f(member, context)`.
    pub fn from_fn(
        actions: usize,
        members: usize,
        contexts: usize,
        truth: usize,
        score_bound: f64,
        f: impl Fn(usize, usize) -> ScoreVector,
    ) -> Result<Self> {
        let tables = (0..members).map(|m| (0..contexts).map(|x| f(m, x)).collect()).collect();
        Self::finite(actions, tables, truth, score_bound)
    }

    /// Layer-`layer` class of the depth-`horizon` tree with hidden path `truth_path`.
    pub fn tree_layer(horizon: usize, layer: usize, seed: u64, truth_path: u64) -> Result<Self> {
        if !(2..=MAX_TREE_HORIZON).contains(&horizon) {
            return Err(AilError::ResourceCap(format!("tree horizon {horizon} outside 2..={MAX_TREE_HORIZON}")));
        }
        if layer == 0 || layer > horizon {
            return Err(invalid(format!("layer {layer} outside 1..={horizon}")));
        }
        if truth_path >> horizon != 0 {
            return Err(invalid("hidden path has more bits than the horizon"));
        }
        Ok(Self { actions: 2, score_bound: 1.0, repr: Repr::Paths(PathFamily { horizon, layer, seed, truth: truth_path }) })
    }

    /// Linear class `f_W(x)[k] = ⟨W_k, features[x]⟩` with `‖W_k‖ ≤ weight_bound`.
    pub fn linear(
        actions: usize,
        features: Vec<Vec<f64>>,
        weight_bound: f64,
        truth: Vec<Vec<f64>>,
        score_bound: f64,
    ) -> Result<Self> {
        if features.is_empty() {
            return Err(AilError::Empty("domain"));
        }
        let dim = features[0].len();
        if dim == 0 || features.iter().any(|f| f.len() != dim) {
            return Err(invalid("feature vectors must share a positive dimension"));
        }
        if truth.len() != actions || truth.iter().any(|w| w.len() != dim) {
            return Err(invalid("truth weights must be K vectors of the feature dimension"));
        }
        if truth.iter().any(|w| norm(w) > weight_bound + TOL) {
            return Err(invalid("truth weights exceed the weight bound"));
        }
        for f in features.iter().chain(truth.iter()) {
            crate::link::check_finite(f)?;
        }
        let class = Self { actions, score_bound, repr: Repr::Linear(LinearFamily { dim, features, weight_bound, truth }) };
        for x in 0..class.num_contexts() {
            if norm(&class.truth(x)?) > score_bound + TOL {
                return Err(invalid(format!("truth scores at context {x} exceed the score bound")));
            }
        }
        Ok(class)
    }

    pub fn kind(&self) -> ClassKind {
        match self.repr {
            Repr::Linear(_) => ClassKind::Linear,
            _ => ClassKind::Finite,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.kind() == ClassKind::Finite
    }

    pub fn actions(&self) -> usize {
        self.actions
    }

    pub fn score_bound(&self) -> f64 {
        self.score_bound
    }

    pub fn num_contexts(&self) -> usize {
        match &self.repr {
            Repr::Table(t) => t.contexts,
            Repr::Paths(p) => (1 << p.horizon) - 1,
            Repr::Linear(l) => l.features.len(),
        }
    }

    /// Number of members for finite kinds.
    pub fn num_members(&self) -> Option<usize> {
        match &self.repr {
            Repr::Table(t) => Some(t.members),
            Repr::Paths(p) => Some(1 << p.horizon),
            Repr::Linear(_) => None,
        }
    }

    pub(crate) fn members_or_err(&self) -> Result<usize> {
        self.num_members().ok_or_else(|| AilError::Unsupported("operation needs a finite class".into()))
    }

    /// Index of `f̆` for finite kinds.
    pub fn truth_index(&self) -> Option<usize> {
        match &self.repr {
            Repr::Table(t) => Some(t.truth),
            Repr::Paths(p) => Some(p.truth as usize),
            Repr::Linear(_) => None,
        }
    }

    /// Same members with a different designated truth.
    pub fn with_truth(&self, truth: usize) -> Result<Self> {
        let mut out = self.clone();
        match &mut out.repr {
            Repr::Table(t) if truth < t.members => t.truth = truth,
            Repr::Paths(p) if truth < 1 << p.horizon => p.truth = truth as u64,
            Repr::Linear(_) => return Err(AilError::Unsupported("linear truth is a weight matrix".into())),
            _ => return Err(AilError::UnknownMember { member: truth, size: self.num_members().unwrap_or(0) }),
        }
        Ok(out)
    }

    fn check_context(&self, x: usize) -> Result<()> {
        if x >= self.num_contexts() {
            return Err(AilError::UnknownContext { context: x, size: self.num_contexts() });
        }
        Ok(())
    }

    /// Scores of a finite member; unchecked hot path.
    pub(crate) fn score_into(&self, member: usize, x: usize, out: &mut [f64]) {
        match &self.repr {
            Repr::Table(t) => {
                let k = self.actions;
                let at = (member * t.contexts + x) * k;
                out.copy_from_slice(&t.data[at..at + k]);
            }
            Repr::Paths(p) => {
                let a = p.action(member as u64, x);
                out[a] = 0.75;
                out[1 - a] = 0.25;
            }
            Repr::Linear(_) => unreachable!("linear classes have no indexed members"),
        }
    }

    /// Borrowed scores for dense tables (avoids copies in inner loops).
    pub(crate) fn table_row(&self, member: usize, x: usize) -> Option<&[f64]> {
        match &self.repr {
            Repr::Table(t) => {
                let k = self.actions;
                let at = (member * t.contexts + x) * k;
                Some(&t.data[at..at + k])
            }
            _ => None,
        }
    }

    /// `f(x)` for finite member `member`.
    pub fn evaluate(&self, member: usize, x: usize) -> Result<ScoreVector> {
        let n = self.members_or_err()?;
        if member >= n {
            return Err(AilError::UnknownMember { member, size: n });
        }
        self.check_context(x)?;
        let mut out = vec![0.0; self.actions];
        self.score_into(member, x, &mut out);
        Ok(out)
    }

    /// `f_W(x)` for a linear class, clipped to nothing (raw dot products).
    pub fn evaluate_weights(&self, weights: &[Vec<f64>], x: usize) -> Result<ScoreVector> {
        let Repr::Linear(l) = &self.repr else {
            return Err(AilError::Unsupported("weights only apply to linear classes".into()));
        };
        self.check_context(x)?;
        if weights.len() != self.actions || weights.iter().any(|w| w.len() != l.dim) {
            return Err(invalid("weights must be K vectors of the feature dimension"));
        }
        Ok(weights.iter().map(|w| dot(w, &l.features[x])).collect())
    }

    /// `f̆(x)`.
    pub fn truth(&self, x: usize) -> Result<ScoreVector> {
        self.check_context(x)?;
        let mut out = vec![0.0; self.actions];
        self.truth_into(x, &mut out);
        Ok(out)
    }

    pub(crate) fn truth_into(&self, x: usize, out: &mut [f64]) {
        match &self.repr {
            Repr::Linear(l) => {
                for (o, w) in out.iter_mut().zip(&l.truth) {
                    *o = dot(w, &l.features[x]);
                }
            }
            _ => self.score_into(self.truth_index().expect("finite"), x, out),
        }
    }

    /// Feature vector of a context (linear kind).
    pub fn features(&self, x: usize) -> Option<&[f64]> {
        match &self.repr {
            Repr::Linear(l) => l.features.get(x).map(Vec::as_slice),
            _ => None,
        }
    }

    pub fn feature_dim(&self) -> Option<usize> {
        match &self.repr {
            Repr::Linear(l) => Some(l.dim),
            _ => None,
        }
    }

    pub fn weight_bound(&self) -> Option<f64> {
        match &self.repr {
            Repr::Linear(l) => Some(l.weight_bound),
            _ => None,
        }
    }

    /// Check the class against a link: matching conventions and score bound.
    ///
    /// Under the identity link finite members must output probability vectors.
    pub fn validate_for_link(&self, link: &LinkSpec) -> Result<()> {
        if self.actions < 2 {
            return Err(invalid("learning needs K >= 2"));
        }
        if self.score_bound > link.score_bound + TOL {
            return Err(invalid(format!("class score bound {} exceeds link score bound {}", self.score_bound, link.score_bound)));
        }
        match (&self.repr, link.kind) {
            (Repr::Table(t), LinkKind::Identity) => {
                for (i, v) in t.data.chunks(self.actions).enumerate() {
                    let s: f64 = v.iter().sum();
                    if v.iter().any(|&p| p < -TOL) || (s - 1.0).abs() > 1e-6 {
                        let (m, x) = (i / t.contexts, i % t.contexts);
                        return Err(invalid(format!(
                            "identity link needs probability-vector scores; member {m} context {x} is not one"
                        )));
                    }
                }
                Ok(())
            }
            (Repr::Linear(_), LinkKind::Softmax) => {
                Err(AilError::Unsupported("linear classes are paired with the identity link only".into()))
            }
            _ => Ok(()),
        }
    }

    /// Dense `[member][context] → scores` materialisation for exhaustive searches.
    pub(crate) fn dense(&self, cap: &SearchCap) -> Result<Vec<Vec<ScoreVector>>> {
        let n = self.members_or_err()?;
        if n > cap.max_members || self.num_contexts() > cap.max_domain {
            return Err(AilError::ResourceCap(format!(
                "|F| = {n}, |domain| = {} (caps {} and {})",
                self.num_contexts(),
                cap.max_members,
                cap.max_domain
            )));
        }
        Ok((0..n)
            .map(|m| {
                (0..self.num_contexts())
                    .map(|x| {
                        let mut v = vec![0.0; self.actions];
                        self.score_into(m, x, &mut v);
                        v
                    })
                    .collect()
            })
            .collect())
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn evaluate_examples() {
        let c = ModelClass::finite(2, vec![vec![vec![0.9, 0.1]], vec![vec![0.2, 0.8]]], 0, 1.0).unwrap();
        assert_eq!(c.evaluate(0, 0).unwrap(), vec![0.9, 0.1]);
        assert_eq!(c.evaluate(0, 0).unwrap(), c.evaluate(0, 0).unwrap());
        assert!(matches!(c.evaluate(0, 1), Err(AilError::UnknownContext { .. })));
        let lin = ModelClass::linear(1, vec![vec![0.3, 0.7]], 1.0, vec![vec![0.0, 1.0]], 1.0).unwrap();
        assert_eq!(lin.evaluate_weights(&[vec![1.0, 0.0]], 0).unwrap(), vec![0.3]);
        assert_eq!(lin.truth(0).unwrap(), vec![0.7]);
    }

    #[test]
    fn construction_guards() {
        assert!(ModelClass::finite(2, vec![], 0, 1.0).is_err());
        assert!(ModelClass::finite(2, vec![vec![vec![2.0, 0.0]]], 0, 1.0).is_err());
        assert!(ModelClass::finite(2, vec![vec![vec![0.5, 0.5]]], 1, 1.0).is_err());
        let c = ModelClass::finite(2, vec![vec![vec![0.7, 0.2]]], 0, 1.0).unwrap();
        assert!(c.validate_for_link(&LinkSpec::identity()).is_err());
        let lin = ModelClass::linear(2, vec![vec![1.0]], 1.0, vec![vec![0.5], vec![0.5]], 1.0).unwrap();
        assert!(lin.validate_for_link(&LinkSpec::softmax(1.0, 2).unwrap()).is_err());
    }

    #[test]
    fn tree_positions_roundtrip() {
        for s in 0..63 {
            let (l, i) = tree_position(s);
            assert_eq!(tree_state(l, i), s);
            assert!(i < 1 << (l - 1));
        }
        assert_eq!(tree_position(0), (1, 0));
        assert_eq!(tree_position(2), (2, 1));
    }

    #[test]
    fn path_members_follow_their_path() {
        let h = 5;
        let tau = 0b10110u64;
        for layer in 1..=h {
            let c = ModelClass::tree_layer(h, layer, 9, tau).unwrap();
            let i = (tau >> (h - layer + 1)) as usize;
            let a = ((tau >> (h - layer)) & 1) as usize;
            let v = c.truth(tree_state(layer, i)).unwrap();
            assert_eq!(v[a], 0.75);
            assert_eq!(v[1 - a], 0.25);
        }
        assert!(ModelClass::tree_layer(1, 1, 0, 0).is_err());
        assert!(ModelClass::tree_layer(MAX_TREE_HORIZON + 1, 1, 0, 0).is_err());
    }
}
