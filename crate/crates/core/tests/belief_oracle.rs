//! Exact filtering and dynamic-programming oracles checked against brute
//! force enumeration, closed forms and Monte-Carlo.

mod common;

use std::collections::HashMap;
use std::sync::Arc;

use common::{chain_model, noisy_model};
use iape_core::belief::{belief_from_history, init_belief, predict_outcomes, ExactBelief};
use iape_core::env::{build_bandit, build_gated_corridor, CorridorParams, PomdpModel};
use iape_core::error::Error;
use iape_core::history::ObservableHistory;
use iape_core::iape::{train, Algo, LearnedPolicy, PolicyHead, TrainConfig};
use iape_core::instance::{enumerate_universe, Instance, InstanceSet, InstanceTree};
use iape_core::oracle::{
    bandit_closed_forms, evaluate_instances_exact, evaluate_policy_on_instances, evaluate_policy_on_model, monte_carlo_model, solve_instance_optimal,
    solve_pomdp_optimal, value_bound, verify_generalization_bound, verify_state_vs_instance, verify_unbiased_value, ConstantLearner, EvalMode,
    Lemma3Options, MemorizingLearner, DEFAULT_NODE_BUDGET,
};
use iape_core::policy::{ConstantPolicy, Greedy};
use iape_core::seeding::derive_seed;

const EXACT: EvalMode = EvalMode::Exact { budget: DEFAULT_NODE_BUDGET };

/// Posterior over `(s_t, k)` by enumerating every state sequence; `None`
/// when the history has zero likelihood.
fn brute_posterior(m: &PomdpModel, h: &ObservableHistory) -> Option<Vec<f64>> {
    let k_n = m.num_modalities();
    let mut post = vec![0.0; m.num_states() * k_n];
    fn walk(m: &PomdpModel, h: &ObservableHistory, k: usize, t: usize, s: usize, w: f64, post: &mut [f64]) {
        if w == 0.0 {
            return;
        }
        if t == h.actions.len() {
            post[s * m.num_modalities() + k] += w;
            return;
        }
        if m.is_terminal(s) {
            return;
        }
        let a = h.actions[t];
        for e in m.transition_row(s, a) {
            if m.reward_support()[e.reward] != h.rewards[t] {
                continue;
            }
            let po = m.observation_prob(e.next_state, a, k, h.observations[t + 1]);
            walk(m, h, k, t + 1, e.next_state, w * e.prob * po, post);
        }
    }
    for (s0, &mu) in m.initial_dist().iter().enumerate() {
        for k in 0..k_n {
            let w = mu / k_n as f64 * m.observation_prob(s0, m.no_action(), k, h.observations[0]);
            walk(m, h, k, 0, s0, w, &mut post);
        }
    }
    let z: f64 = post.iter().sum();
    (z > 0.0).then(|| post.into_iter().map(|p| p / z).collect())
}

/// Every observable history of length `<= depth` built from all
/// `(action, reward, observation)` candidates with positive likelihood.
fn all_histories(m: &PomdpModel, depth: usize) -> (Vec<ObservableHistory>, usize) {
    let mut out = Vec::new();
    let mut rejected = 0;
    let mut frontier: Vec<ObservableHistory> = (0..m.num_observations())
        .map(ObservableHistory::new)
        .filter(|h| {
            let ok = brute_posterior(m, h).is_some();
            if !ok {
                assert!(matches!(belief_from_history(m, h), Err(Error::ZeroLikelihood(_))));
                rejected += 1;
            }
            ok
        })
        .collect();
    for _ in 0..depth {
        let mut next = Vec::new();
        for h in &frontier {
            for a in 0..m.num_actions() {
                for &r in m.reward_support() {
                    for o in 0..m.num_observations() {
                        let mut c = h.clone();
                        c.push(a, o, r);
                        if brute_posterior(m, &c).is_some() {
                            next.push(c);
                        } else {
                            rejected += 1;
                        }
                    }
                }
            }
        }
        out.append(&mut frontier);
        frontier = next;
    }
    out.append(&mut frontier);
    (out, rejected)
}

#[test]
fn filter_matches_enumeration_on_every_short_history() {
    let m = noisy_model();
    let (hs, rejected) = all_histories(&m, 5);
    assert!(hs.len() > 1000 && rejected > 0);
    for h in &hs {
        let want = brute_posterior(&m, h).unwrap();
        let got = belief_from_history(&m, h).unwrap();
        let total: f64 = got.joint().iter().sum();
        assert!((total - 1.0).abs() <= 1e-10);
        for (g, w) in got.joint().iter().zip(&want) {
            assert!((g - w).abs() <= 1e-10, "{h:?}");
        }
    }
}

#[test]
fn zero_likelihood_updates_are_errors() {
    let m = noisy_model();
    let (hs, _) = all_histories(&m, 2);
    let mut seen = 0;
    for h in hs.iter().filter(|h| h.len() == 2) {
        for o in 0..m.num_observations() {
            let mut c = h.clone();
            c.push(1, o, 1.0);
            if brute_posterior(&m, &c).is_none() {
                assert!(matches!(belief_from_history(&m, &c), Err(Error::ZeroLikelihood(_))));
                seen += 1;
            }
        }
    }
    assert!(seen > 0);
}

#[test]
fn corridor_histories_match_enumeration() {
    let m = build_gated_corridor(CorridorParams::default()).unwrap();
    let m = Arc::new(m);
    for seed in 0..300u64 {
        let inst = Instance::spawn(&m, derive_seed(seed, "hist", 0));
        let acts: Vec<usize> = (0..4).map(|j| (seed as usize * 7 + j * 5) % 3).collect();
        let cut = (0..=acts.len()).rev().find(|&c| inst.path(&acts[..c]).is_ok()).unwrap();
        let path = inst.path(&acts[..cut]).unwrap();
        let mut h = ObservableHistory::new(path[0].observation);
        for (j, rec) in path.iter().enumerate().skip(1) {
            h.push(acts[j - 1], rec.observation, rec.reward);
        }
        let want = brute_posterior(&m, &h).unwrap();
        let got = belief_from_history(&m, &h).unwrap();
        assert!(got.joint().iter().zip(&want).all(|(g, w)| (g - w).abs() <= 1e-10));
    }
}

#[test]
fn modality_revealing_first_observation() {
    let m = build_gated_corridor(CorridorParams::default()).unwrap();
    for o in 0..m.num_observations() {
        let Ok(b) = init_belief(&m, o) else { continue };
        let km = b.modality_marginal();
        assert_eq!(km.iter().filter(|p| **p > 0.0).count(), 1);
        // Only the next-cell flag is revealed, so the state marginal is mu
        // restricted to that flag.
        let sm = b.state_marginal();
        let support: f64 = (0..m.num_states()).filter(|s| sm[*s] > 0.0).map(|s| m.initial_dist()[s]).sum();
        for s in 0..m.num_states() {
            if sm[s] > 0.0 {
                assert!((sm[s] - m.initial_dist()[s] / support).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn chain_belief_tracks_the_state() {
    let m = chain_model();
    let inst = Instance::spawn(&m, 3);
    let acts = [0, 1, 1, 0, 1];
    let path = inst.path(&acts).unwrap();
    let mut h = ObservableHistory::new(path[0].observation);
    for (j, rec) in path.iter().enumerate().skip(1) {
        h.push(acts[j - 1], rec.observation, rec.reward);
        let b = belief_from_history(&m, &h).unwrap();
        assert_eq!(b.prob(rec.state, 0), 1.0);
    }
}

/// Optimal value by plain recursion over the history tree (no dedup).
fn tree_value(m: &PomdpModel, depth: usize, b: &ExactBelief) -> f64 {
    if depth >= m.horizon() || b.is_terminal(m) {
        return 0.0;
    }
    (0..m.num_actions())
        .map(|a| {
            predict_outcomes(m, b, a)
                .iter()
                .map(|oc| oc.prob * (m.reward_support()[oc.reward_index] + m.discount() * tree_value(m, depth + 1, &oc.belief)))
                .sum::<f64>()
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

#[test]
fn equal_beliefs_get_equal_optimal_values() {
    let m = noisy_model();
    let (pol, rep) = solve_pomdp_optimal(&m, DEFAULT_NODE_BUDGET).unwrap();
    let (hs, _) = all_histories(&m, 3);
    let mut by_key: HashMap<(usize, _), f64> = HashMap::new();
    let mut collisions = 0;
    let mut root = 0.0;
    for h in &hs {
        let b = belief_from_history(&m, h).unwrap();
        let v = tree_value(&m, h.len(), &b);
        assert!((pol.value(h.len(), &b).unwrap() - v).abs() <= 1e-9);
        if let Some(prev) = by_key.insert((h.len(), b.key()), v) {
            assert!((prev - v).abs() <= 1e-9);
            collisions += 1;
        }
        if h.is_empty() {
            let p: f64 = (0..2).map(|k| (0..3).map(|s| m.initial_dist()[s] / 2.0 * m.observation_prob(s, m.no_action(), k, h.observations[0])).sum::<f64>()).sum();
            root += p * v;
        }
    }
    assert!(collisions > 0);
    assert!((root - rep.value).abs() <= 1e-9);
}

#[test]
fn corridor_optimum_is_pinned_and_matches_monte_carlo() {
    let m = Arc::new(build_gated_corridor(CorridorParams::default()).unwrap());
    let (pol, rep) = solve_pomdp_optimal(&m, DEFAULT_NODE_BUDGET).unwrap();
    assert!((rep.value - 6.154369875759374).abs() <= 1e-9, "{}", rep.value);
    assert!(rep.value.abs() <= value_bound(m.r_max(), m.discount(), m.horizon()));
    let mc = evaluate_policy_on_model(&m, &pol, EvalMode::MonteCarlo { episodes: 1_000_000, seed: 3 }).unwrap();
    let se = mc.stderr.unwrap();
    assert!((mc.value - rep.value).abs() <= 3.0 * se, "{} vs {} (se {se})", mc.value, rep.value);
    let exact = evaluate_policy_on_model(&m, &pol, EXACT).unwrap();
    assert!((exact.value - rep.value).abs() <= 1e-9);
}

#[test]
fn bandit_policy_values_match_closed_forms() {
    let m = Arc::new(build_bandit(0.9, 0.1, 4, 10, 0.9).unwrap());
    let cf = bandit_closed_forms(0.9, 0.1, 4, 10, 0.9).unwrap();
    let delta = evaluate_policy_on_model(&m, &ConstantPolicy::delta(4, 0), EXACT).unwrap();
    assert!((delta.value - 5.861894039100).abs() <= 1e-9);
    let uniform = ConstantPolicy::uniform(4);
    let u = evaluate_policy_on_model(&m, &uniform, EXACT).unwrap();
    assert!((u.value - 1.953964680).abs() <= 1e-9);
    // Independent evaluation of the value formula.
    let horizon_sum: f64 = (0..10).map(|t| 0.9f64.powi(t)).sum();
    assert!((u.value - (0.25 * 0.9 + 0.75 * 0.1) * horizon_sum).abs() <= 1e-12);
    assert!((cf.v_state_opt - delta.value).abs() <= 1e-9);
    let (_, star) = solve_pomdp_optimal(&m, DEFAULT_NODE_BUDGET).unwrap();
    assert!((star.value - cf.v_state_opt).abs() <= 1e-9);

    let mc = evaluate_policy_on_model(&m, &uniform, EvalMode::MonteCarlo { episodes: 1_000_000, seed: 9 }).unwrap();
    assert!((mc.value - u.value).abs() <= 3.0 * mc.stderr.unwrap());
    assert!(matches!(evaluate_policy_on_model(&m, &uniform, EvalMode::MonteCarlo { episodes: 0, seed: 9 }), Err(Error::InvalidParameter(_))));
    assert_eq!(monte_carlo_model(&m, &uniform, 100, 4).unwrap(), monte_carlo_model(&m, &uniform, 100, 4).unwrap());
}

/// Best discounted return over every action sequence of one tree.
fn best_path<T: InstanceTree>(inst: &T) -> f64 {
    fn go<T: InstanceTree>(inst: &T, node: T::Node, rec: &iape_core::instance::NodeRecord, depth: usize) -> f64 {
        let m = inst.model();
        if depth >= m.horizon() || rec.terminal {
            return 0.0;
        }
        (0..m.num_actions())
            .map(|a| {
                let (n, r) = inst.child(node, rec, depth + 1, a);
                r.reward + m.discount() * go(inst, n, &r, depth + 1)
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }
    let (n, r) = inst.root();
    go(inst, n, &r, 0)
}

#[test]
fn singleton_instance_optimum_is_the_best_path() {
    let bandit = Arc::new(build_bandit(0.9, 0.1, 3, 5, 0.9).unwrap());
    let small = Arc::new(build_gated_corridor(CorridorParams { length: 5, horizon: 7, ..Default::default() }).unwrap());
    for m in [bandit, small] {
        for seed in 0..20 {
            let set = InstanceSet::sample(&m, seed, 1);
            let (pi, rep) = solve_instance_optimal(&set, DEFAULT_NODE_BUDGET).unwrap();
            assert!((rep.value - best_path(&set.instances[0])).abs() <= 1e-12);
            let again = evaluate_policy_on_instances(&set, &pi, EXACT).unwrap();
            assert!((again.value - rep.value).abs() <= 1e-12);
        }
    }
}

#[test]
fn always_a0_on_a_singleton_reads_the_tree() {
    let m = Arc::new(build_bandit(0.9, 0.1, 4, 10, 0.9).unwrap());
    for seed in 0..20 {
        let set = InstanceSet::sample(&m, seed, 1);
        let path = set.instances[0].path(&[0; 10]).unwrap();
        let readout: f64 = path[1..].iter().enumerate().map(|(t, r)| 0.9f64.powi(t as i32) * r.reward).sum();
        let v = evaluate_policy_on_instances(&set, &ConstantPolicy::delta(4, 0), EXACT).unwrap();
        assert!((v.value - readout).abs() <= 1e-12);
    }
}

#[test]
fn instance_optimum_dominates_on_sets_and_loses_on_the_model() {
    let bandit = Arc::new(build_bandit(0.9, 0.1, 4, 6, 0.9).unwrap());
    let small = Arc::new(build_gated_corridor(CorridorParams { length: 5, horizon: 8, ..Default::default() }).unwrap());
    for (m, size) in [(bandit, 2), (small, 4)] {
        let (star, star_rep) = solve_pomdp_optimal(&m, DEFAULT_NODE_BUDGET).unwrap();
        for j in 0..50 {
            let set = InstanceSet::sample(&m, derive_seed(4, "paired", j), size);
            let (pi, rep) = solve_instance_optimal(&set, DEFAULT_NODE_BUDGET).unwrap();
            let (vals, _) = evaluate_instances_exact(&set, &star, DEFAULT_NODE_BUDGET).unwrap();
            let v_star = vals.iter().map(|v| v.0).sum::<f64>() / size as f64;
            assert!(rep.value + 1e-12 >= v_star);
            let on_model = evaluate_policy_on_model(&m, &pi, EXACT).unwrap();
            assert!(on_model.value <= star_rep.value + 1e-9);
        }
    }
    let m = Arc::new(build_bandit(0.9, 0.1, 4, 10, 0.9).unwrap());
    let opts = Lemma3Options { n_sets: 10, set_size: 1, seed: 0, budget: DEFAULT_NODE_BUDGET, lower_bound: None, state_optimal_reference: Some(5.861894039100) };
    let r = verify_state_vs_instance(&m, &opts).unwrap();
    assert!(r.pass, "{r:?}");
}

#[test]
fn unbiased_value_checks() {
    let chain = chain_model();
    let r = verify_unbiased_value(&chain, &ConstantPolicy::delta(2, 1), 3, 50, 1, DEFAULT_NODE_BUDGET).unwrap();
    assert!(r.pass);
    assert_eq!(r.details["z"], 0.0);
    assert_eq!(r.value, r.reference);

    let bandit = Arc::new(build_bandit(0.9, 0.1, 4, 10, 0.9).unwrap());
    let r = verify_unbiased_value(&bandit, &ConstantPolicy::uniform(4), 1, 2000, 2, DEFAULT_NODE_BUDGET).unwrap();
    assert!(r.pass, "{r:?}");
    assert!((r.reference - 1.953964680).abs() <= 1e-9);
    assert!((r.value - 1.953964680).abs() <= 4.0 * r.stderr.unwrap());

    let corridor = Arc::new(build_gated_corridor(CorridorParams::default()).unwrap());
    let mut cfg = TrainConfig::for_algo(Algo::Iape);
    cfg.total_steps = 20_000;
    cfg.eval.every = 20_000;
    cfg.eval.test_episodes = 10;
    let out = train(&cfg, &corridor).unwrap();
    let policy = Greedy(LearnedPolicy::new(out.params(), PolicyHead::Consensus));
    let r = verify_unbiased_value(&corridor, &policy, 4, 2000, 3, DEFAULT_NODE_BUDGET).unwrap();
    assert!(r.pass, "{r:?}");
}

#[test]
fn generalization_bound_for_reference_learners() {
    let m = Arc::new(build_bandit(0.9, 0.1, 4, 1, 0.9).unwrap());
    assert_eq!(enumerate_universe(&m, 1, 16).unwrap().len(), 16);
    let mut bounds = Vec::new();
    for n in [1, 2] {
        let c = verify_generalization_bound(&m, n, &ConstantLearner { action: 0 }, 16, DEFAULT_NODE_BUDGET, 0).unwrap();
        assert!(c.pass);
        assert!(c.value.abs() <= 1e-12);
        assert_eq!(c.details["mutual_information_nats"], 0.0);
        let mem = verify_generalization_bound(&m, n, &MemorizingLearner, 16, DEFAULT_NODE_BUDGET, 0).unwrap();
        assert!(mem.pass && mem.value < mem.reference, "{mem:?}");
        bounds.push((mem.reference, mem.details["mutual_information_nats"].as_f64().unwrap()));
    }
    // At fixed information the bound scales as 1/sqrt(n).
    let (b1, mi1) = bounds[0];
    let (b2, mi2) = bounds[1];
    assert!((b2 - b1 * (mi2 / mi1 / 2.0).sqrt()).abs() <= 1e-12);
}
