//! Link functions, margins, gaps, action selection and the surrogate loss.
//!
//! A link bundles a potential `Φ` with its gradient `φ = ∇Φ`, which maps a
//! score vector to a label distribution. Two links are built in:
//!
//! * `identity`: `Φ(v) = ½‖v‖²`, so `φ(v) = v`. Scores are expected to be
//!   probability vectors already (the simplex-score convention).
//! * `softmax`: `Φ(v) = log Σ exp(v_j)`, giving the logistic loss.
//!
//! Every argmax in the crate breaks ties toward the lowest index.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, AilError, Result};

/// A score vector `f(x) ∈ ℝ^K`.
pub type ScoreVector = Vec<f64>;

/// Which built-in potential a [`LinkSpec`] uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkKind {
    Identity,
    Softmax,
}

/// Link function bundle `(Φ, φ, λ, γ)` with the score bound used to certify the moduli.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkSpec {
    pub kind: LinkKind,
    /// Strong-convexity modulus λ of Φ on the feasible score set.
    pub lambda: f64,
    /// Smoothness modulus γ of Φ.
    pub gamma: f64,
    /// Bound B ≥ sup ‖f(x)‖.
    pub score_bound: f64,
}

impl LinkSpec {
    /// Identity link with `λ = γ = B = 1`.
    pub fn identity() -> Self {
        Self { kind: LinkKind::Identity, lambda: 1.0, gamma: 1.0, score_bound: 1.0 }
    }

    /// Softmax link over `k` actions with scores bounded by `score_bound` in sup-norm.
    ///
    /// λ is certified by [`certify_softmax_lambda`]; γ = 1.
    pub fn softmax(score_bound: f64, k: usize) -> Result<Self> {
        let lambda = certify_softmax_lambda(score_bound, k)?;
        Ok(Self { kind: LinkKind::Softmax, lambda, gamma: 1.0, score_bound })
    }

    /// Build with explicit moduli (used by config overrides).
    pub fn with_moduli(kind: LinkKind, lambda: f64, gamma: f64, score_bound: f64) -> Result<Self> {
        let spec = Self { kind, lambda, gamma, score_bound };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.gamma > 0.0 && self.score_bound > 0.0) {
            return Err(invalid("link moduli and score bound must be positive"));
        }
        if self.lambda > self.gamma {
            return Err(invalid(format!("lambda {} exceeds gamma {}", self.lambda, self.gamma)));
        }
        if self.kind == LinkKind::Identity && (self.lambda != 1.0 || self.gamma != 1.0) {
            return Err(invalid("identity link requires lambda = gamma = 1"));
        }
        Ok(())
    }
}

/// A label index, stored zero-based; displayed one-based as in `[1..K]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ActionLabel(usize);

impl ActionLabel {
    pub fn from_index(index: usize) -> Self {
        Self(index)
    }

    pub fn from_one_based(k: usize, num_actions: usize) -> Result<Self> {
        if k == 0 || k > num_actions {
            return Err(AilError::ActionOutOfRange { action: k, k: num_actions });
        }
        Ok(Self(k - 1))
    }

    /// Zero-based index.
    pub fn index(self) -> usize {
        self.0
    }

    pub fn one_based(self) -> usize {
        self.0 + 1
    }
}

impl std::fmt::Display for ActionLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0 + 1)
    }
}

pub(crate) fn check_finite(v: &[f64]) -> Result<()> {
    if v.is_empty() {
        return Err(AilError::InvalidScore("empty score vector".into()));
    }
    if let Some(bad) = v.iter().find(|x| !x.is_finite()) {
        return Err(AilError::InvalidScore(format!("non-finite entry {bad}")));
    }
    Ok(())
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (k, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = k;
        }
    }
    best
}

/// Largest entry and the largest entry off the argmax.
fn top_two(v: &[f64]) -> (usize, f64, f64) {
    let k = argmax(v);
    let second = v.iter().enumerate().filter(|&(j, _)| j != k).map(|(_, &x)| x).fold(f64::NEG_INFINITY, f64::max);
    (k, v[k], second)
}

/// `φ(v)` written into `out`.
pub fn apply_link_into(link: &LinkSpec, v: &[f64], out: &mut [f64]) {
    match link.kind {
        LinkKind::Identity => out.copy_from_slice(v),
        LinkKind::Softmax => {
            let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for (o, &x) in out.iter_mut().zip(v) {
                *o = (x - m).exp();
                z += *o;
            }
            out.iter_mut().for_each(|o| *o /= z);
        }
    }
}

/// `φ(v)`: the label distribution induced by scores `v`.
pub fn apply_link(link: &LinkSpec, v: &[f64]) -> Result<Vec<f64>> {
    check_finite(v)?;
    let mut out = vec![0.0; v.len()];
    apply_link_into(link, v, &mut out);
    Ok(out)
}

/// Unchecked margin; callers guarantee `v` is finite with `K ≥ 2`.
pub(crate) fn margin_of(link: &LinkSpec, v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let (_, top, second) = top_two(v);
    match link.kind {
        LinkKind::Identity => top - second,
        LinkKind::Softmax => {
            let z: f64 = v.iter().map(|&x| (x - top).exp()).sum();
            (1.0 - (second - top).exp()) / z
        }
    }
}

/// `φ(v)[k*] − max_{k'≠k*} φ(v)[k']`.
pub fn margin(link: &LinkSpec, v: &[f64]) -> Result<f64> {
    check_finite(v)?;
    if v.len() < 2 {
        return Err(AilError::InvalidScore("margin needs K >= 2".into()));
    }
    Ok(margin_of(link, v))
}

/// `max_k' φ(v)[k'] − φ(v)[k]`.
pub fn gap(link: &LinkSpec, v: &[f64], k: ActionLabel) -> Result<f64> {
    check_finite(v)?;
    if k.index() >= v.len() {
        return Err(AilError::ActionOutOfRange { action: k.one_based(), k: v.len() });
    }
    let top = v[argmax(v)];
    Ok(match link.kind {
        LinkKind::Identity => top - v[k.index()],
        LinkKind::Softmax => {
            let z: f64 = v.iter().map(|&x| (x - top).exp()).sum();
            (1.0 - (v[k.index()] - top).exp()) / z
        }
    })
}

/// Label with the largest score (links are order preserving).
pub fn select_action(_link: &LinkSpec, v: &[f64]) -> ActionLabel {
    ActionLabel(argmax(v))
}

/// Surrogate loss `ℓ_φ(v, y) = Φ(v) − v[y]`.
pub fn loss_phi(link: &LinkSpec, v: &[f64], y: ActionLabel) -> Result<f64> {
    check_finite(v)?;
    if y.index() >= v.len() {
        return Err(AilError::ActionOutOfRange { action: y.one_based(), k: v.len() });
    }
    Ok(loss_of(link, v, y.index()))
}

pub(crate) fn loss_of(link: &LinkSpec, v: &[f64], y: usize) -> f64 {
    potential(link, v) - v[y]
}

/// `Φ(v)`.
pub fn potential(link: &LinkSpec, v: &[f64]) -> f64 {
    match link.kind {
        LinkKind::Identity => 0.5 * v.iter().map(|x| x * x).sum::<f64>(),
        LinkKind::Softmax => {
            let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            m + v.iter().map(|&x| (x - m).exp()).sum::<f64>().ln()
        }
    }
}

/// Largest number of grid points evaluated when certifying the softmax modulus.
const CERT_GRID_CAP: usize = 200_000;

/// Certify the strong-convexity modulus of log-sum-exp on `{‖v‖_∞ ≤ B}`.
///
/// Log-sum-exp is flat along the all-ones direction (softmax is shift
/// invariant), so the modulus is taken on the sum-zero subspace: the smallest
/// eigenvalue of the Hessian `diag(p) − ppᵀ` restricted to `1^⊥`, minimised
/// over a grid. The grid uses 5 points per coordinate (`−B, −B/2, 0, B/2, B`)
/// when `5^K ≤ 200 000`, otherwise only the `2^K` cube corners; K > 17 is refused.
pub fn certify_softmax_lambda(score_bound: f64, k: usize) -> Result<f64> {
    if !(score_bound > 0.0 && score_bound.is_finite()) {
        return Err(invalid("score bound must be positive"));
    }
    if k < 2 {
        return Err(invalid("softmax needs K >= 2"));
    }
    let levels: Vec<f64> = if 5usize.checked_pow(k as u32).is_some_and(|n| n <= CERT_GRID_CAP) {
        vec![-1.0, -0.5, 0.0, 0.5, 1.0]
    } else if k <= 17 {
        vec![-1.0, 1.0]
    } else {
        return Err(AilError::ResourceCap(format!("softmax certification grid for K = {k}")));
    };
    let basis = sum_zero_basis(k);
    let softmax = LinkSpec { kind: LinkKind::Softmax, lambda: 1.0, gamma: 1.0, score_bound };
    let n = levels.len();
    let total = n.pow(k as u32);
    let mut v = vec![0.0; k];
    let mut p = vec![0.0; k];
    let mut best = f64::INFINITY;
    for idx in 0..total {
        let mut r = idx;
        for vk in v.iter_mut() {
            *vk = levels[r % n] * score_bound;
            r /= n;
        }
        apply_link_into(&softmax, &v, &mut p);
        let hess = DMatrix::from_fn(k, k, |i, j| if i == j { p[i] - p[i] * p[j] } else { -p[i] * p[j] });
        let reduced = basis.transpose() * hess * &basis;
        let eig = SymmetricEigen::new(reduced);
        best = best.min(eig.eigenvalues.min());
    }
    Ok(best)
}

/// Orthonormal basis (Helmert) of the sum-zero subspace, as columns.
fn sum_zero_basis(k: usize) -> DMatrix<f64> {
    DMatrix::from_fn(k, k - 1, |i, j| {
        let c = j + 1;
        let norm = ((c * (c + 1)) as f64).sqrt();
        if i < c {
            1.0 / norm
        } else if i == c {
            -(c as f64) / norm
        } else {
            0.0
        }
    })
}
