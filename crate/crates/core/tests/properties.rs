//! Property tests of core invariants against independently written oracles.

use std::sync::Arc;

use ail_core::bandit::{igw_distribution, IGWParams};
use ail_core::classes::{
    constrained_width, eluder_dimension, feasible_members, ComplexityQuery, HistoryEntry, ModelClass, SearchCap, WidthBudget,
    WidthMode, WidthTracker,
};
use ail_core::imitation::{pdl_check, TabularMdp};
use ail_core::link::{apply_link, margin, ActionLabel, LinkSpec};
use ail_core::numfmt::g17;
use ail_core::rng::RngStream;
use ail_core::selsamp::{sage_run, QueryRule, SageOptions};
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

const LEVELS: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

fn small_class(seed: u64, max_size: usize, max_domain: usize, k: usize) -> ModelClass {
    let mut g = StdRng::seed_from_u64(seed);
    let size = g.gen_range(2..=max_size);
    let domain = g.gen_range(1..=max_domain);
    let members = (0..size).map(|_| (0..domain).map(|_| (0..k).map(|_| LEVELS[g.gen_range(0..5)]).collect()).collect()).collect();
    ModelClass::finite(k, members, g.gen_range(0..size), 2.0).unwrap()
}

/// Binary members whose scores are label distributions.
fn distribution_class(seed: u64, size: usize, domain: usize) -> ModelClass {
    let mut g = StdRng::seed_from_u64(seed);
    let members = (0..size)
        .map(|_| {
            (0..domain)
                .map(|_| {
                    let p = LEVELS[g.gen_range(0..5)];
                    vec![p, 1.0 - p]
                })
                .collect()
        })
        .collect();
    ModelClass::finite(2, members, 0, 1.0).unwrap()
}

fn norm_dev(class: &ModelClass, m: usize, x: usize) -> f64 {
    let (a, b) = (class.evaluate(m, x).unwrap(), class.truth(x).unwrap());
    a.iter().zip(&b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt()
}

/// Longest ordered sequence, by depth-first search over orderings, in which
/// each context has a member deviating by more than `b` there while its
/// squared deviations over the earlier contexts total at most `b²`.
fn eluder_by_definition(class: &ModelClass, b: f64) -> usize {
    let n = class.num_members().unwrap();
    let d = class.num_contexts();
    let devs: Vec<Vec<f64>> = (0..n).map(|m| (0..d).map(|x| norm_dev(class, m, x)).collect()).collect();
    fn extend(devs: &[Vec<f64>], b: f64, used: &mut Vec<usize>) -> usize {
        let mut best = used.len();
        for x in 0..devs[0].len() {
            if used.contains(&x) {
                continue;
            }
            let ok = devs.iter().any(|f| f[x] > b && used.iter().map(|&y| f[y] * f[y]).sum::<f64>() <= b * b);
            if ok {
                used.push(x);
                best = best.max(extend(devs, b, used));
                used.pop();
            }
        }
        best
    }
    extend(&devs, b, &mut Vec::new())
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn igw_is_a_distribution_favouring_the_leader(v in prop::collection::vec(0.0f64..1.0, 2..8), coef in 0.0f64..1e3) {
        let p = igw_distribution(&v, &IGWParams { coef, actions: v.len() }).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|&x| x >= 0.0));
        let lead = ail_core::link::argmax(&v);
        prop_assert!(p.iter().all(|&x| x <= p[lead] + 1e-15));
    }

    #[test]
    fn igw_lemma_holds(
        u in prop::collection::vec(0.0f64..1.0, 2..10),
        v_seed in any::<u64>(),
        log_eps in -2.0f64..3.0,
    ) {
        let k = u.len();
        let mut g = StdRng::seed_from_u64(v_seed);
        let v: Vec<f64> = (0..k).map(|_| g.gen()).collect();
        let eps = 10f64.powf(log_eps);
        let p = igw_distribution(&v, &IGWParams { coef: eps, actions: k }).unwrap();
        let top = u.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lhs: f64 = (0..k).map(|i| p[i] * (top - u[i])).sum();
        let rhs = k as f64 / eps + eps * (0..k).map(|i| p[i] * (u[i] - v[i]).powi(2)).sum::<f64>();
        prop_assert!(lhs <= rhs + 1e-12);
    }

    #[test]
    fn g17_roundtrips(x in any::<f64>().prop_filter("finite", |x| x.is_finite())) {
        prop_assert_eq!(g17(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
    }

    #[test]
    fn softmax_is_a_distribution_with_unit_margin_bound(v in prop::collection::vec(-3.0f64..3.0, 2..6)) {
        let link = LinkSpec::softmax(6.0, v.len()).unwrap();
        let p = apply_link(&link, &v).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let m = margin(&link, &v).unwrap();
        prop_assert!((0.0..=1.0).contains(&m));
    }

    #[test]
    fn eluder_matches_definition(seed in any::<u64>(), k in 1usize..=2, beta in prop::sample::select(vec![0.1, 0.2, 0.3])) {
        let class = small_class(seed, 6, 5, k);
        let q = ComplexityQuery { beta, zeta: 1.0, truth: class.truth_index().unwrap() };
        let lib = eluder_dimension(&class, &q, &SearchCap::default()).unwrap();
        // Supremum over scales b ≥ β: β itself, just below each deviation value, and midpoints.
        let n = class.num_members().unwrap();
        let mut devs: Vec<f64> = (0..n).flat_map(|m| (0..class.num_contexts()).map(move |x| (m, x))).map(|(m, x)| norm_dev(&class, m, x)).filter(|&d| d > beta).collect();
        devs.sort_by(|a, b| a.total_cmp(b));
        devs.dedup();
        let mut scales = vec![beta];
        for (i, &d) in devs.iter().enumerate() {
            scales.push(d - 1e-9);
            let prev = if i == 0 { beta } else { devs[i - 1] };
            scales.push(0.5 * (prev + d));
        }
        let oracle = scales.into_iter().filter(|&b| b >= beta).map(|b| eluder_by_definition(&class, b)).max().unwrap();
        prop_assert_eq!(lib, oracle);
        prop_assert!(lib < n);
    }

    #[test]
    fn cached_and_reference_widths_agree(seed in any::<u64>(), psi in 0.0f64..2.0) {
        let class = small_class(seed, 8, 6, 2);
        let mut g = StdRng::seed_from_u64(seed ^ 0x5eed);
        let mut cached = WidthTracker::new(&class, psi, WidthMode::Cached).unwrap();
        let mut reference = WidthTracker::new(&class, psi, WidthMode::Reference).unwrap();
        let mut budget = WidthBudget { psi, history: vec![] };
        let mut feasible = class.num_members().unwrap();
        for _ in 0..12 {
            let x = g.gen_range(0..class.num_contexts());
            let anchor: Vec<f64> = (0..2).map(|_| LEVELS[g.gen_range(0..5)]).collect();
            let a = cached.width(&class, x, &anchor).unwrap();
            let b = reference.width(&class, x, &anchor).unwrap();
            let c = constrained_width(&class, &budget, x, &anchor).unwrap();
            prop_assert_eq!(a.is_some(), c.is_some());
            prop_assert_eq!(b.is_some(), c.is_some());
            if let (Some(a), Some(b), Some(c)) = (a, b, c) {
                prop_assert!((a - c).abs() < 1e-9 && (b - c).abs() < 1e-9);
            }
            let queried = g.gen_bool(0.6);
            cached.record(&class, x, &anchor, queried);
            reference.record(&class, x, &anchor, queried);
            budget.history.push(HistoryEntry { context: x, prediction: anchor, queried });
            // The version space only shrinks.
            let now = feasible_members(&class, &budget).unwrap().len();
            prop_assert!(now <= feasible);
            feasible = now;
        }
    }

    #[test]
    fn width_grows_with_budget(seed in any::<u64>(), psi in 0.0f64..1.0, extra in 0.0f64..1.0) {
        let class = small_class(seed, 8, 4, 2);
        let mut g = StdRng::seed_from_u64(seed.rotate_left(7));
        let history = (0..6)
            .map(|_| HistoryEntry {
                context: g.gen_range(0..class.num_contexts()),
                prediction: (0..2).map(|_| LEVELS[g.gen_range(0..5)]).collect(),
                queried: g.gen_bool(0.7),
            })
            .collect::<Vec<_>>();
        let anchor = class.evaluate(0, 0).unwrap();
        let small = constrained_width(&class, &WidthBudget { psi, history: history.clone() }, 0, &anchor).unwrap();
        let large = constrained_width(&class, &WidthBudget { psi: psi + extra, history }, 0, &anchor).unwrap();
        if let Some(s) = small {
            prop_assert!(large.is_some_and(|l| l >= s));
        }
    }

    #[test]
    fn run_logs_are_consistent(seed in any::<u64>(), rule in 0usize..3) {
        let class = Arc::new(distribution_class(seed, 10, 6));
        let rng = RngStream::new(seed);
        let n = class.num_contexts();
        let contexts: Vec<usize> = (0..150).map(|t| (seed as usize).wrapping_add(t * 7) % n).collect();
        let rule = [QueryRule::MarginWidth, QueryRule::Always, QueryRule::Never][rule];
        let opts = SageOptions { rule, ..SageOptions::default() };
        let log = sage_run(&class, &LinkSpec::identity(), 1.0, &contexts, &rng, &opts).unwrap();
        prop_assert!(log.is_consistent());
        prop_assert!(log.t_eps.windows(2).all(|w| w[0] <= w[1]));
        match rule {
            QueryRule::Always => prop_assert_eq!(log.queries, 150),
            QueryRule::Never => prop_assert_eq!(log.queries, 0),
            _ => prop_assert!(log.queries <= 150),
        }
        prop_assert_eq!(&log, &sage_run(&class, &LinkSpec::identity(), 1.0, &contexts, &rng, &opts).unwrap());
    }

    #[test]
    fn performance_difference_holds(seed in any::<u64>(), h in 1usize..=6, s in 1usize..=20, flip in 0.0f64..0.4) {
        let mut g = StdRng::seed_from_u64(seed);
        let m = TabularMdp::random(&mut g, h, s, 3);
        let pi1: Vec<Vec<usize>> = (0..h).map(|_| (0..s).map(|_| g.gen_range(0..3)).collect()).collect();
        let pi2: Vec<Vec<usize>> = pi1.iter().map(|r| r.iter().map(|&a| if g.gen_bool(flip) { g.gen_range(0..3) } else { a }).collect()).collect();
        let region: Vec<bool> = (0..s).map(|_| g.gen_bool(0.2)).collect();
        let p1 = |hh: usize, x: usize| ActionLabel::from_index(pi1[hh - 1][x]);
        let p2 = |hh: usize, x: usize| ActionLabel::from_index(pi2[hh - 1][x]);
        prop_assert!(pdl_check(&m, 1, &RngStream::new(0), &p1, &p2, &|x| region[x]));
    }
}
