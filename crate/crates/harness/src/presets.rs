//! Instance builders shared by the runner and the acceptance tests.

use std::sync::Arc;

use ail_core::classes::ModelClass;
use ail_core::link::LinkSpec;
use ail_core::oracles::{default_learning_rate, regret_budget, BudgetFlavor, BudgetParams, OracleState};
use ail_core::rng::{RngStream, Substream};
use rand::Rng;

/// `x_t = ⌊u_t · n⌋` with `u_t` at key `(t, 0, 0)` of the context substream.
pub fn uniform_contexts(rng: &RngStream, n: usize, rounds: usize) -> Vec<usize> {
    (1..=rounds).map(|t| ((rng.uniform(Substream::Contexts, [t as u64, 0, 0]) * n as f64) as usize).min(n - 1)).collect()
}

/// Members whose score vectors are uniform points of the probability simplex.
pub fn random_class(rng: &RngStream, actions: usize, size: usize, contexts: usize, truth: usize) -> ail_core::Result<ModelClass> {
    let mut g = rng.generator(Substream::Instance, [1, 0, 0]);
    let tables = (0..size)
        .map(|_| {
            (0..contexts)
                .map(|_| {
                    // Normalised exponentials are uniform on the simplex.
                    let e: Vec<f64> = (0..actions).map(|_| -(1.0 - g.gen::<f64>()).ln()).collect();
                    let s: f64 = e.iter().sum();
                    e.iter().map(|v| v / s).collect()
                })
                .collect()
        })
        .collect();
    ModelClass::finite(actions, tables, truth, 1.0)
}

/// Binary instance with truth member 0 putting `confidence` on a random
/// direction per context. Every other member agrees with the truth (mass in
/// `[0.85, 1)`) at a context with probability 1/8 and otherwise leans the
/// other way (mass below 0.1 on the truth's direction).
pub fn hard_margin_class(rng: &RngStream, size: usize, contexts: usize, confidence: f64) -> ail_core::Result<ModelClass> {
    let mut g = rng.generator(Substream::Instance, [0, 0, 0]);
    let dirs: Vec<usize> = (0..contexts).map(|_| g.gen_range(0..2)).collect();
    let vector = |d: usize, p: f64| {
        let mut v = vec![1.0 - p; 2];
        v[d] = p;
        v
    };
    let mut tables = vec![dirs.iter().map(|&d| vector(d, confidence)).collect::<Vec<_>>()];
    for _ in 1..size {
        tables.push(
            dirs.iter()
                .map(|&d| {
                    let p = if g.gen_bool(1.0 / 8.0) { 0.85 + 0.15 * g.gen::<f64>() } else { 0.1 * g.gen::<f64>() };
                    vector(d, p)
                })
                .collect(),
        );
    }
    ModelClass::finite(2, tables, 0, 1.0)
}

/// The oracle's regret bound `R` over `rounds` updates.
pub fn oracle_regret(
    class: &Arc<ModelClass>,
    link: &LinkSpec,
    learning_rate: Option<f64>,
    rounds: usize,
) -> ail_core::Result<f64> {
    let eta = learning_rate.unwrap_or_else(|| default_learning_rate(link));
    Ok(OracleState::for_class(class.clone(), *link, eta)?.regret_bound(rounds))
}

/// Budget Ψ of `flavor` for `class`.
pub fn budget(
    class: &Arc<ModelClass>,
    link: &LinkSpec,
    learning_rate: Option<f64>,
    flavor: BudgetFlavor,
    rounds: usize,
    delta: f64,
) -> ail_core::Result<f64> {
    let regret = oracle_regret(class, link, learning_rate, rounds)?;
    Ok(regret_budget(flavor, BudgetParams { lambda: link.lambda, regret, rounds, delta })?.psi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ail_core::link::margin;

    #[test]
    fn hard_margin_truth_is_confident() {
        let c = hard_margin_class(&RngStream::new(3), 16, 8, 0.95).unwrap();
        for x in 0..8 {
            assert!((margin(&LinkSpec::identity(), &c.truth(x).unwrap()).unwrap() - 0.9).abs() < 1e-12);
        }
        assert_eq!(c.num_members(), Some(16));
    }

    #[test]
    fn contexts_are_in_range_and_seeded() {
        let a = uniform_contexts(&RngStream::new(1), 5, 200);
        assert!(a.iter().all(|&x| x < 5));
        assert_eq!(a, uniform_contexts(&RngStream::new(1), 5, 200));
        assert_ne!(a, uniform_contexts(&RngStream::new(2), 5, 200));
    }

    #[test]
    fn random_rows_are_distributions() {
        let c = random_class(&RngStream::new(0), 3, 4, 2, 1).unwrap();
        let v = c.evaluate(2, 1).unwrap();
        assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-12 && v.iter().all(|&p| p >= 0.0));
    }
}
