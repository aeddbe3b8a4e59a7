//! End-to-end behaviour of the drivers on small instances.

use std::sync::Arc;

use ail_core::bandit::{multiquery_bandit_run, sage_bandit_run, BanditOptions};
use ail_core::classes::ModelClass;
use ail_core::imitation::{
    behavior_cloning, format_demos, noisy_expert_demos, parse_demos, ravioli_m_run, ravioli_run, tree_mdp, BalanceChain,
};
use ail_core::link::LinkSpec;
use ail_core::oracles::{default_learning_rate, regret_budget, BudgetFlavor, BudgetParams, OracleState};
use ail_core::rng::RngStream;
use ail_core::selsamp::{Aggregator, QueryRule, SageOptions};

fn psi(class: &Arc<ModelClass>, flavor: BudgetFlavor, rounds: usize) -> f64 {
    let link = LinkSpec::identity();
    let regret = OracleState::for_class(class.clone(), link, default_learning_rate(&link)).unwrap().regret_bound(rounds);
    regret_budget(flavor, BudgetParams { lambda: 1.0, regret, rounds, delta: 0.1 }).unwrap().psi
}

#[test]
fn ravioli_recovers_the_tree_path() {
    for seed in 0..5 {
        let env = tree_mdp(6, seed).unwrap();
        let classes = env.classes().unwrap();
        let psis: Vec<f64> = classes.iter().map(|c| psi(c, BudgetFlavor::PerStep { horizon: 6 }, 60)).collect();
        let log = ravioli_run(&classes, &LinkSpec::identity(), &psis, &env, 60, &RngStream::new(seed), &SageOptions::default())
            .unwrap();
        assert!(log.is_consistent());
        assert!(log.final_path_match, "seed {seed}");
        // At this horizon the budget keeps widths above the margin, so every step may query.
        assert!(log.queries <= 60 * 6);
    }
}

#[test]
fn demos_survive_a_text_roundtrip_and_feed_cloning() {
    let env = tree_mdp(5, 2).unwrap();
    let classes = env.classes().unwrap();
    let demos = noisy_expert_demos(&env, &classes, &LinkSpec::identity(), 40, &RngStream::new(9)).unwrap();
    assert_eq!(demos.len(), 40);
    assert!(demos.iter().all(|d| d.len() == 5));
    let parsed = parse_demos(&format_demos(&demos), 2).unwrap();
    assert_eq!(parsed, demos);
    let policy = behavior_cloning(&parsed, 5, 2).unwrap();
    assert!(policy.coverage() >= 5);
}

#[test]
fn bandit_drivers_log_feedback_and_replay_exactly() {
    let tables: Vec<Vec<Vec<f64>>> = (0..6)
        .map(|m| {
            (0..4)
                .map(|x| {
                    let mut v = vec![0.1; 3];
                    v[(m + x) % 3] = 0.8;
                    v
                })
                .collect()
        })
        .collect();
    let class = Arc::new(ModelClass::finite(3, tables, 0, 1.0).unwrap());
    let contexts: Vec<usize> = (0..400).map(|t| (t * 5 + t / 3) % 4).collect();
    let rng = RngStream::new(4);
    let p = psi(&class, BudgetFlavor::Bandit, 400);
    let a = sage_bandit_run(&class, &LinkSpec::identity(), p, &contexts, &rng, &BanditOptions::default()).unwrap();
    assert!(a.is_consistent());
    assert!(a.records.iter().all(|r| r.bandit.is_some()));
    assert_eq!(a, sage_bandit_run(&class, &LinkSpec::identity(), p, &contexts, &rng, &BanditOptions::default()).unwrap());
    let q = psi(&class, BudgetFlavor::TwoQuery { actions: 3 }, 400);
    let b = multiquery_bandit_run(&class, &LinkSpec::identity(), q, &contexts, &rng, &BanditOptions::default()).unwrap();
    assert!(b.is_consistent());
    assert!(b.queries <= 400);
    let softmax = LinkSpec::softmax(1.0, 3).unwrap();
    assert!(sage_bandit_run(&class, &softmax, p, &contexts, &rng, &BanditOptions::default()).is_err());
}

#[test]
fn multi_expert_chain_runs_with_every_aggregator() {
    let env = BalanceChain::new(4, 6, 3).unwrap();
    let experts = env.expert_classes(6).unwrap();
    let classes = vec![experts.clone(); 6];
    let psis: Vec<Vec<f64>> =
        vec![experts.iter().map(|c| psi(c, BudgetFlavor::PerExpertStep { experts: 3, horizon: 6 }, 50)).collect(); 6];
    let link = LinkSpec::identity();
    for agg in [Aggregator::random_mix(3), Aggregator::majority(), Aggregator::confident_majority(0.2)] {
        for rule in [QueryRule::Que { resolution: 0.05 }, QueryRule::MarginWidth] {
            let opts = SageOptions { rule, ..SageOptions::default() };
            let log = ravioli_m_run(&classes, &link, &psis, &agg, &env, 50, &RngStream::new(1), &opts).unwrap();
            assert!(log.is_consistent());
            assert_eq!(log.steps.len(), 50 * 6);
        }
    }
}
