//! Aggregation of several experts and the `que` disagreement test.
//!
//! `que(U, Δ⃗)` asks whether some `V` with `‖U[:,m] − V[:,m]‖ ≤ Δ⃗[m]` for every
//! expert `m` changes `select_action(𝒜(φ(V)))`.
//!
//! * Random mix (`𝒜` = mean of the `φ` columns) is separable across experts:
//!   a flip to action `j` exists iff `Σ_m max_{V_m} (φ(V_m)[j] − φ(V_m)[b])`
//!   crosses zero. Under the identity link the per-expert maximum is
//!   `U_m[j] − U_m[b] + √2·Δ_m` in closed form; under softmax it is found by
//!   projected gradient ascent. The Lipschitz bound
//!   `margin(𝒜(φ(U))) > 2γη‖Δ⃗‖` rules a flip out before any search.
//! * Majority kinds depend on each expert only through the pair
//!   (argmax, confident?). For K = 2 the reachable pairs follow exactly from
//!   the interval of reachable score differences; for K > 2 they are collected
//!   from a grid of radii and directions at the configured resolution. The
//!   product over experts is then enumerated.

use serde::{Deserialize, Serialize};

use crate::link::{apply_link_into, argmax, margin_of, LinkKind, LinkSpec};

/// Default grid resolution of the K > 2 search.
pub const DEFAULT_QUE_RESOLUTION: f64 = 0.05;

/// Aggregation rule 𝒜.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AggregatorKind {
    RandomMix,
    Majority,
    ConfidentMajority,
}

/// An aggregation function over M expert distributions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregator {
    pub kind: AggregatorKind,
    /// Confidence threshold ρ (confident majority).
    pub rho: f64,
    /// Lipschitz constant η, when known.
    pub eta: Option<f64>,
}

impl Aggregator {
    /// Mean of the experts' distributions, `η = 1/√M`.
    pub fn random_mix(experts: usize) -> Self {
        Self { kind: AggregatorKind::RandomMix, rho: 0.0, eta: Some(1.0 / (experts.max(1) as f64).sqrt()) }
    }

    pub fn majority() -> Self {
        Self { kind: AggregatorKind::Majority, rho: 0.0, eta: None }
    }

    /// Majority among experts whose margin exceeds ρ; all experts vote if none does.
    pub fn confident_majority(rho: f64) -> Self {
        Self { kind: AggregatorKind::ConfidentMajority, rho, eta: None }
    }

    /// `𝒜(φ(U))` as a probability vector (one-hot for the majority kinds).
    pub fn aggregate(&self, link: &LinkSpec, columns: &[Vec<f64>]) -> Vec<f64> {
        let k = columns[0].len();
        let mut p = vec![0.0; k];
        match self.kind {
            AggregatorKind::RandomMix => {
                let mut q = vec![0.0; k];
                for col in columns {
                    apply_link_into(link, col, &mut q);
                    p.iter_mut().zip(&q).for_each(|(a, b)| *a += b / columns.len() as f64);
                }
            }
            _ => {
                let feats: Vec<(usize, bool)> = columns.iter().map(|c| (argmax(c), margin_of(link, c) > self.rho)).collect();
                p[self.vote(&feats, k)] = 1.0;
            }
        }
        p
    }

    /// Winner of a vote over `(argmax, confident)` pairs, lowest index on ties.
    fn vote(&self, feats: &[(usize, bool)], k: usize) -> usize {
        let mut counts = vec![0usize; k];
        let confident = self.kind == AggregatorKind::ConfidentMajority && feats.iter().any(|f| f.1);
        for &(a, c) in feats {
            if !confident || c {
                counts[a] += 1;
            }
        }
        argmax_usize(&counts)
    }
}

fn argmax_usize(v: &[usize]) -> usize {
    let mut best = 0;
    for (k, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = k;
        }
    }
    best
}

/// Whether a perturbation inside the per-expert balls flips the aggregated action.
pub fn que(u: &[Vec<f64>], deltas: &[f64], agg: &Aggregator, link: &LinkSpec, resolution: f64) -> bool {
    assert_eq!(u.len(), deltas.len(), "one radius per expert");
    if deltas.iter().all(|&d| d <= 0.0) {
        return false;
    }
    let k = u[0].len();
    if k < 2 {
        return false;
    }
    let agg_u = agg.aggregate(link, u);
    let base = argmax(&agg_u);
    match agg.kind {
        AggregatorKind::RandomMix => {
            if let Some(eta) = agg.eta {
                let norm = deltas.iter().map(|d| d * d).sum::<f64>().sqrt();
                if margin_of(&LinkSpec::identity(), &agg_u) > 2.0 * link.gamma * eta * norm {
                    return false;
                }
            }
            (0..k).filter(|&j| j != base).any(|j| {
                let total: f64 = u.iter().zip(deltas).map(|(col, &d)| best_shift(link, col, d, j, base)).sum();
                total > 0.0 || (total == 0.0 && j < base)
            })
        }
        AggregatorKind::Majority | AggregatorKind::ConfidentMajority => {
            let reach: Vec<Vec<(usize, bool)>> =
                u.iter().zip(deltas).map(|(col, &d)| reachable_features(link, col, d, agg.rho, resolution)).collect();
            let mut idx = vec![0usize; u.len()];
            let mut feats = vec![(0usize, false); u.len()];
            loop {
                for (m, f) in feats.iter_mut().enumerate() {
                    *f = reach[m][idx[m]];
                }
                if agg.vote(&feats, k) != base {
                    return true;
                }
                // Odometer over the product of reachable feature sets.
                let mut m = 0;
                loop {
                    if m == idx.len() {
                        return false;
                    }
                    idx[m] += 1;
                    if idx[m] < reach[m].len() {
                        break;
                    }
                    idx[m] = 0;
                    m += 1;
                }
            }
        }
    }
}

/// `max_{‖v − u‖ ≤ Δ} φ(v)[j] − φ(v)[b]`.
fn best_shift(link: &LinkSpec, u: &[f64], delta: f64, j: usize, b: usize) -> f64 {
    match link.kind {
        LinkKind::Identity => u[j] - u[b] + std::f64::consts::SQRT_2 * delta,
        LinkKind::Softmax => softmax_best_shift(link, u, delta, j, b),
    }
}

fn softmax_best_shift(link: &LinkSpec, u: &[f64], delta: f64, j: usize, b: usize) -> f64 {
    let k = u.len();
    let mut p = vec![0.0; k];
    let objective = |v: &[f64], p: &mut Vec<f64>| {
        apply_link_into(link, v, p);
        p[j] - p[b]
    };
    let mut best = objective(u, &mut p);
    if delta <= 0.0 {
        return best;
    }
    let mut v = u.to_vec();
    v[j] += delta / std::f64::consts::SQRT_2;
    v[b] -= delta / std::f64::consts::SQRT_2;
    let mut step = delta;
    let mut grad = vec![0.0; k];
    for _ in 0..400 {
        let val = objective(&v, &mut p);
        best = best.max(val);
        for (i, g) in grad.iter_mut().enumerate() {
            let dj = if i == j { 1.0 } else { 0.0 };
            let db = if i == b { 1.0 } else { 0.0 };
            *g = p[j] * (dj - p[i]) - p[b] * (db - p[i]);
        }
        let gn = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if gn < 1e-15 {
            break;
        }
        for (vi, g) in v.iter_mut().zip(&grad) {
            *vi += step * g / gn;
        }
        project_ball(&mut v, u, delta);
        step *= 0.98;
    }
    best.max(objective(&v, &mut p))
}

fn project_ball(v: &mut [f64], center: &[f64], radius: f64) {
    let n = v.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum::<f64>().sqrt();
    if n > radius {
        for (a, c) in v.iter_mut().zip(center) {
            *a = c + (*a - c) * radius / n;
        }
    }
}

/// Reachable `(argmax, margin > ρ)` pairs of `φ(v)` over the ball around `u`.
fn reachable_features(link: &LinkSpec, u: &[f64], delta: f64, rho: f64, resolution: f64) -> Vec<(usize, bool)> {
    let mut out = Vec::new();
    let mut push = |f: (usize, bool)| {
        if !out.contains(&f) {
            out.push(f);
        }
    };
    if u.len() == 2 {
        let d0 = u[0] - u[1];
        let (lo, hi) = (d0 - std::f64::consts::SQRT_2 * delta, d0 + std::f64::consts::SQRT_2 * delta);
        // Margin as a function of d = v1 − v2: |d| (identity) or |tanh(d/2)| (softmax).
        let c = match link.kind {
            LinkKind::Identity => rho,
            LinkKind::Softmax => {
                if rho >= 1.0 {
                    f64::INFINITY
                } else {
                    2.0 * rho.atanh()
                }
            }
        };
        if hi > c {
            push((0, true));
        }
        if hi >= 0.0 && lo <= c {
            push((0, false));
        }
        if lo < -c {
            push((1, true));
        }
        if lo < 0.0 && hi >= -c {
            push((1, false));
        }
        return out;
    }
    let k = u.len();
    let r = resolution.clamp(1e-3, 1.0);
    let levels = (1.0 / r).ceil() as usize;
    let mut dirs: Vec<Vec<f64>> = Vec::new();
    for i in 0..k {
        for s in [1.0, -1.0] {
            let mut d = vec![0.0; k];
            d[i] = s;
            dirs.push(d);
        }
        for j in 0..k {
            if i != j {
                let mut d = vec![0.0; k];
                d[i] = std::f64::consts::FRAC_1_SQRT_2;
                d[j] = -std::f64::consts::FRAC_1_SQRT_2;
                dirs.push(d);
            }
        }
    }
    let mut v = vec![0.0; k];
    for level in 0..=levels {
        let rad = delta * (level as f64 / levels as f64).min(1.0);
        for d in &dirs {
            for i in 0..k {
                v[i] = u[i] + rad * d[i];
            }
            push((argmax(&v), margin_of(link, &v) > rho));
        }
    }
    out
}
