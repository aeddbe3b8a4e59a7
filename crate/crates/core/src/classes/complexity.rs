//! Exhaustive complexity measures on small finite classes: scale-sensitive
//! eluder dimensions (normed and bivariate), star numbers and an exact
//! disagreement-coefficient evaluation for a given context distribution.
//!
//! These are test oracles, so they refuse rather than approximate beyond the
//! configured [`SearchCap`].
//!
//! Suprema over scales are evaluated exactly. Between consecutive distinct
//! deviation values the feasibility structure is constant, and both conditions
//! only relax as the scale grows inside an interval, so the supremum over
//! `β' ≥ β` is attained as a left limit at some deviation value `d > β`:
//! "deviation ≥ d" together with "sum of squares < d²".
//!
//! Those comparisons run on squared deviations computed directly, never on
//! squares of square roots, so exact ties are not decided by rounding.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::{sq_dist, ModelClass};
use crate::error::{invalid, AilError, Result};

/// Scale parameters of a complexity query.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexityQuery {
    /// Scale β.
    pub beta: f64,
    /// Margin scale ζ (star number only).
    pub zeta: f64,
    /// Reference member `f̆` / target `f*`.
    pub truth: usize,
}

/// Hard limits of the exhaustive searches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchCap {
    pub max_domain: usize,
    pub max_members: usize,
    /// Largest number of distinct subsets visited by one search.
    pub max_states: usize,
}

impl Default for SearchCap {
    fn default() -> Self {
        Self { max_domain: 12, max_members: 64, max_states: 4_000_000 }
    }
}

/// `[member][item]` squared deviations from the reference member.
struct Deviations {
    sq: Vec<Vec<f64>>,
    items: usize,
}

fn normed_devs(class: &ModelClass, truth: usize, cap: &SearchCap) -> Result<Deviations> {
    let table = class.dense(cap)?;
    if truth >= table.len() {
        return Err(AilError::UnknownMember { member: truth, size: table.len() });
    }
    let items = class.num_contexts();
    let sq = table.iter().map(|f| (0..items).map(|x| sq_dist(&f[x], &table[truth][x])).collect()).collect();
    Ok(Deviations { sq, items })
}

fn coordinate_devs(class: &ModelClass, truth: usize, cap: &SearchCap) -> Result<Deviations> {
    let table = class.dense(cap)?;
    if truth >= table.len() {
        return Err(AilError::UnknownMember { member: truth, size: table.len() });
    }
    let k = class.actions();
    let items = class.num_contexts() * k;
    if items > 64 {
        return Err(AilError::ResourceCap(format!("{items} (context, action) pairs exceed 64")));
    }
    let sq = table.iter().map(|f| (0..items).map(|i| (f[i / k][i % k] - table[truth][i / k][i % k]).powi(2)).collect()).collect();
    Ok(Deviations { sq, items })
}

fn sum_sq(sq: &[f64], set: u64) -> f64 {
    let mut s = 0.0;
    let mut bits = set;
    while bits != 0 {
        let j = bits.trailing_zeros() as usize;
        s += sq[j];
        bits &= bits - 1;
    }
    s
}

/// Longest sequence where each new item has a witness passing `point_ok` on its
/// squared deviation at the item and `sum_ok` on the squared deviations over its predecessors.
///
/// Feasibility of appending depends only on the predecessor *set*, so a
/// breadth-first search over reachable sets is exact.
fn longest_chain(d: &Deviations, point_ok: impl Fn(f64) -> bool, sum_ok: impl Fn(f64) -> bool, cap: &SearchCap) -> Result<usize> {
    let candidates: Vec<Vec<usize>> = (0..d.items).map(|i| (0..d.sq.len()).filter(|&f| point_ok(d.sq[f][i])).collect()).collect();
    let mut layer: Vec<u64> = vec![0];
    let mut depth = 0;
    let mut visited = 0usize;
    loop {
        let mut next = HashSet::new();
        for &set in &layer {
            for (i, cands) in candidates.iter().enumerate() {
                let bit = 1u64 << i;
                if set & bit != 0 || next.contains(&(set | bit)) {
                    continue;
                }
                if cands.iter().any(|&f| sum_ok(sum_sq(&d.sq[f], set))) {
                    next.insert(set | bit);
                }
            }
        }
        if next.is_empty() {
            return Ok(depth);
        }
        visited += next.len();
        if visited > cap.max_states {
            return Err(AilError::ResourceCap(format!("more than {} subsets visited", cap.max_states)));
        }
        depth += 1;
        layer = next.into_iter().collect();
    }
}

/// Largest set in which every item has a witness passing `point_ok(f, i)` and
/// `sum_ok` on the squared deviations over the *other* items of the set.
///
/// Such sets are closed under taking subsets, so growing valid sets one item
/// at a time reaches all of them.
fn largest_star(
    d: &Deviations,
    point_ok: impl Fn(usize, usize) -> bool,
    sum_ok: impl Fn(f64) -> bool,
    cap: &SearchCap,
) -> Result<usize> {
    let candidates: Vec<Vec<usize>> = (0..d.items).map(|i| (0..d.sq.len()).filter(|&f| point_ok(f, i)).collect()).collect();
    let valid = |set: u64| {
        let mut bits = set;
        while bits != 0 {
            let i = bits.trailing_zeros() as usize;
            bits &= bits - 1;
            let others = set & !(1u64 << i);
            if !candidates[i].iter().any(|&f| sum_ok(sum_sq(&d.sq[f], others))) {
                return false;
            }
        }
        true
    };
    let mut layer: Vec<u64> = vec![0];
    let mut depth = 0;
    let mut visited = 0usize;
    loop {
        let mut next = HashSet::new();
        for &set in &layer {
            for (i, cands) in candidates.iter().enumerate() {
                let grown = set | (1u64 << i);
                if grown == set || cands.is_empty() || next.contains(&grown) {
                    continue;
                }
                if valid(grown) {
                    next.insert(grown);
                }
            }
        }
        if next.is_empty() {
            return Ok(depth);
        }
        visited += next.len();
        if visited > cap.max_states {
            return Err(AilError::ResourceCap(format!("more than {} subsets visited", cap.max_states)));
        }
        depth += 1;
        layer = next.into_iter().collect();
    }
}

/// Distinct squared deviation values above `beta²`, ascending.
fn squared_scales_above(d: &Deviations, beta: f64) -> Vec<f64> {
    let mut v: Vec<f64> = d.sq.iter().flatten().copied().filter(|&x| x > beta * beta).collect();
    v.sort_by(|a, b| a.total_cmp(b));
    v.dedup();
    v
}

/// `sup_{β' ≥ β}` of a chain length evaluated at left limits of deviation values.
fn sup_over_scales(d: &Deviations, beta: f64, cap: &SearchCap, star: bool) -> Result<usize> {
    let mut best = 0;
    for s2 in squared_scales_above(d, beta) {
        // Items that can still host a witness bound every length at this or larger scales.
        let room = (0..d.items).filter(|&i| d.sq.iter().any(|f| f[i] >= s2)).count();
        if room <= best {
            break;
        }
        let len = if star {
            largest_star(d, |f, i| d.sq[f][i] >= s2, |sum| sum < s2, cap)?
        } else {
            longest_chain(d, |sq| sq >= s2, |sum| sum < s2, cap)?
        };
        best = best.max(len);
    }
    Ok(best)
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(invalid("beta must be positive"));
    }
    Ok(())
}

/// Normed eluder dimension `𝔈(ℱ, β; f̆) = sup_{β' ≥ β} Ẽ(ℱ, β'; f̆)`.
pub fn eluder_dimension(class: &ModelClass, q: &ComplexityQuery, cap: &SearchCap) -> Result<usize> {
    check_beta(q.beta)?;
    let d = normed_devs(class, q.truth, cap)?;
    sup_over_scales(&d, q.beta, cap, false)
}

/// `Ẽ(ℱ, β; f̆)` at a single scale: deviation `> β`, predecessor sum `≤ β²`.
pub fn eluder_at_scale(class: &ModelClass, q: &ComplexityQuery, cap: &SearchCap) -> Result<usize> {
    check_beta(q.beta)?;
    let d = normed_devs(class, q.truth, cap)?;
    let b = q.beta;
    longest_chain(&d, |sq| sq > b * b, |s| s <= b * b, cap)
}

/// Bivariate eluder dimension over `(context, action)` pairs.
pub fn bivariate_eluder(class: &ModelClass, q: &ComplexityQuery, cap: &SearchCap) -> Result<usize> {
    check_beta(q.beta)?;
    let d = coordinate_devs(class, q.truth, cap)?;
    sup_over_scales(&d, q.beta, cap, false)
}

/// Strong (normed) star number `sup_{β' > β}` of the longest star set with
/// witnesses deviating by more than β' at their own context and by at most β'²
/// in squared sum elsewhere.
pub fn normed_star_number(class: &ModelClass, q: &ComplexityQuery, cap: &SearchCap) -> Result<usize> {
    check_beta(q.beta)?;
    let d = normed_devs(class, q.truth, cap)?;
    sup_over_scales(&d, q.beta, cap, true)
}

/// Weak scalar star number with the target fixed to `q.truth`.
///
/// Scalar (K = 1) classes in signed form. A set `x_1..x_m` qualifies when every
/// `i` has `|f*(x_i)| ≥ ζ` and a witness `f_i` with
/// (1) `Σ_{j≠i} (f_i(x_j) − f*(x_j))² < β²`,
/// (2) `|f_i(x_i)| > ζ/2` with sign opposite to `f*(x_i)`,
/// (3) `|f_i(x_i) − f*(x_i)| ≤ 2ζ`.
pub fn star_number(class: &ModelClass, q: &ComplexityQuery, cap: &SearchCap) -> Result<usize> {
    check_beta(q.beta)?;
    if class.actions() != 1 {
        return Err(invalid("star number needs a scalar (K = 1) class"));
    }
    if !(q.zeta > 0.0 && q.beta < q.zeta / 2.0) {
        return Err(invalid("star number needs 0 < beta < zeta / 2"));
    }
    let table = class.dense(cap)?;
    if q.truth >= table.len() {
        return Err(AilError::UnknownMember { member: q.truth, size: table.len() });
    }
    let d = coordinate_devs(class, q.truth, cap)?;
    let target: Vec<f64> = table[q.truth].iter().map(|v| v[0]).collect();
    let (zeta, beta) = (q.zeta, q.beta);
    largest_star(
        &d,
        |f, i| {
            let (fi, fs) = (table[f][i][0], target[i]);
            fs.abs() >= zeta && fi.abs() > zeta / 2.0 && fi * fs < 0.0 && (fi - fs).abs() <= 2.0 * zeta
        },
        |s| s < beta * beta,
        cap,
    )
}

/// Weak star number maximised over every member as target.
pub fn star_number_any_target(class: &ModelClass, q: &ComplexityQuery, cap: &SearchCap) -> Result<usize> {
    let n = class.members_or_err()?;
    let mut best = 0;
    for t in 0..n {
        best = best.max(star_number(class, &ComplexityQuery { truth: t, ..*q }, cap)?);
    }
    Ok(best)
}

/// Disagreement coefficient of `ℱ` around `truth` for the distribution `mu`.
///
/// `sup_{ε > ε₀, β > β₀} (ε²/β²)·Pr_μ[∃f: ‖f(x) − f*(x)‖ > ε, ‖f − f*‖_μ ≤ β] ∨ 1`,
/// evaluated exactly for this `μ`: ε runs over left limits of deviation values
/// above `ε₀`, β over `β₀⁺` and the member distances above `β₀`.
pub fn disagreement_estimate(class: &ModelClass, truth: usize, eps0: f64, beta0: f64, mu: &[f64]) -> Result<f64> {
    if mu.is_empty() || mu.iter().all(|&p| p <= 0.0) {
        return Err(AilError::Empty("context distribution"));
    }
    if mu.len() != class.num_contexts() || mu.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(invalid("distribution must be nonnegative weights, one per context"));
    }
    if !(eps0 >= 0.0 && beta0 > 0.0) {
        return Err(invalid("need eps0 >= 0 and beta0 > 0"));
    }
    let total: f64 = mu.iter().sum();
    let mu: Vec<f64> = mu.iter().map(|p| p / total).collect();
    let cap = SearchCap { max_domain: usize::MAX, max_members: usize::MAX, max_states: 0 };
    let d = normed_devs(class, truth, &cap)?;
    // Everything below is in squared units: squared μ-norms, ε² and β².
    let norms: Vec<f64> = d.sq.iter().map(|f| f.iter().zip(&mu).map(|(x, p)| p * x).sum::<f64>()).collect();
    let b0 = beta0 * beta0;
    let mut betas: Vec<f64> = norms.iter().copied().filter(|&n| n > b0).collect();
    betas.push(b0);
    betas.sort_by(|a, b| a.total_cmp(b));
    betas.dedup();
    let mut best: f64 = 1.0;
    for eps2 in squared_scales_above(&d, eps0) {
        for &beta2 in &betas {
            let mass: f64 =
                (0..d.items).filter(|&x| (0..d.sq.len()).any(|f| d.sq[f][x] >= eps2 && norms[f] <= beta2)).map(|x| mu[x]).sum();
            best = best.max(eps2 / beta2 * mass);
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cap() -> SearchCap {
        SearchCap::default()
    }

    fn q(beta: f64) -> ComplexityQuery {
        ComplexityQuery { beta, zeta: 1.0, truth: 0 }
    }

    #[test]
    fn eluder_examples() {
        let c = ModelClass::finite(1, vec![vec![vec![0.0]], vec![vec![1.0]]], 0, 1.0).unwrap();
        assert_eq!(eluder_dimension(&c, &q(0.5), &cap()).unwrap(), 1);
        let single = ModelClass::finite(1, vec![vec![vec![0.3], vec![0.1]]], 0, 1.0).unwrap();
        assert_eq!(eluder_dimension(&single, &q(0.1), &cap()).unwrap(), 0);
        assert_eq!(bivariate_eluder(&c, &q(0.5), &cap()).unwrap(), 1);
    }

    #[test]
    fn bivariate_uses_single_coordinate() {
        let c = ModelClass::finite(2, vec![vec![vec![0.0, 0.0]], vec![vec![1.0, 0.0]]], 0, 1.0).unwrap();
        assert_eq!(bivariate_eluder(&c, &q(0.5), &cap()).unwrap(), 1);
        // Pure coordinate deviation of 1 is above every β < 1 and gone at β ≥ 1.
        assert_eq!(bivariate_eluder(&c, &q(1.0), &cap()).unwrap(), 0);
    }

    #[test]
    fn sup_over_scales_is_attained_as_left_limit() {
        // One-hot deviations of size 1 on three contexts, one member each:
        // at β' just below 1 every member fits, the chain has length 3.
        let c = ModelClass::from_fn(1, 4, 3, 0, 1.0, |m, x| vec![if m > 0 && m - 1 == x { 1.0 } else { 0.0 }]).unwrap();
        assert_eq!(eluder_at_scale(&c, &q(0.5), &cap()).unwrap(), 3);
        assert_eq!(eluder_dimension(&c, &q(0.5), &cap()).unwrap(), 3);
        assert_eq!(normed_star_number(&c, &q(0.5), &cap()).unwrap(), 3);
        assert_eq!(eluder_dimension(&c, &q(1.0), &cap()).unwrap(), 0);
    }

    #[test]
    fn exact_ties_are_not_strict() {
        // Squared deviation 5/16 on both contexts: the second link's predecessor
        // sum equals the squared scale, which is not strictly below it.
        let c = ModelClass::from_fn(2, 2, 2, 0, 1.0, |m, _| if m == 0 { vec![0.0, 0.0] } else { vec![0.25, 0.5] }).unwrap();
        assert_eq!(eluder_dimension(&c, &q(0.1), &cap()).unwrap(), 1);
        assert_eq!(normed_star_number(&c, &q(0.1), &cap()).unwrap(), 1);
    }

    #[test]
    fn chain_beats_star_on_staircase() {
        // f_i deviates by 1 on contexts 0..=i: a chain of length 3 exists
        // but every witness deviates on its predecessors, so the star number is 1.
        let c = ModelClass::from_fn(1, 4, 3, 0, 1.0, |m, x| vec![if m > 0 && x + 1 >= m { 1.0 } else { 0.0 }]).unwrap();
        assert_eq!(eluder_dimension(&c, &q(0.5), &cap()).unwrap(), 3);
        assert_eq!(normed_star_number(&c, &q(0.5), &cap()).unwrap(), 1);
    }

    #[test]
    fn star_number_flip_family() {
        let zeta = 0.125;
        let m = 4;
        let c = ModelClass::from_fn(1, m + 1, m, 0, 1.0, |f, x| {
            let p = if f > 0 && f - 1 == x { 0.5 - zeta } else { 0.5 + zeta };
            vec![p - 0.5]
        })
        .unwrap();
        let query = ComplexityQuery { beta: 0.05, zeta, truth: 0 };
        assert_eq!(star_number(&c, &query, &cap()).unwrap(), 4);
        assert_eq!(star_number_any_target(&c, &query, &cap()).unwrap(), 4);
        let single = ModelClass::finite(1, vec![vec![vec![0.5]]], 0, 1.0).unwrap();
        assert_eq!(star_number(&single, &query, &cap()).unwrap(), 0);
        assert!(star_number(&c, &ComplexityQuery { beta: 0.1, ..query }, &cap()).is_err());
    }

    #[test]
    fn disagreement_floor_and_singleton() {
        let single = ModelClass::finite(1, vec![vec![vec![0.5], vec![0.1]]], 0, 1.0).unwrap();
        assert_eq!(disagreement_estimate(&single, 0, 0.1, 0.1, &[0.5, 0.5]).unwrap(), 1.0);
        assert!(disagreement_estimate(&single, 0, 0.1, 0.1, &[]).is_err());
    }

    #[test]
    fn disagreement_star_shape() {
        // n members each deviating by d on their own context: estimate = n under uniform μ.
        let n = 5;
        let c = ModelClass::from_fn(1, n + 1, n, 0, 1.0, |m, x| vec![if m > 0 && m - 1 == x { 0.8 } else { 0.0 }]).unwrap();
        let est = disagreement_estimate(&c, 0, 0.1, 0.01, &vec![1.0; n]).unwrap();
        assert!((est - n as f64).abs() < 1e-9, "{est}");
    }

    #[test]
    fn caps_refuse() {
        let c = ModelClass::from_fn(1, 3, 13, 0, 1.0, |m, _| vec![m as f64 / 3.0]).unwrap();
        assert!(matches!(eluder_dimension(&c, &q(0.1), &cap()), Err(AilError::ResourceCap(_))));
    }
}
