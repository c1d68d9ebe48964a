//! Evaluation metrics on constructed policies and parameters.

use std::collections::BTreeMap;
use std::sync::Arc;

use iape_core::env::{build_bandit, build_gated_corridor, CorridorParams, PomdpModel, WAIT};
use iape_core::iape::{train, Algo, LearnedPolicy, PolicyHead, TrainConfig};
use iape_core::instance::InstanceSet;
use iape_core::learner::{Architecture, Params};
use iape_core::metrics::{
    cosine_similarity_heads, delta_time_to_reward, ensemble_agreement, episode_stats, histogram_svg, kl_divergence, signatures, time_averaged_policy, Bins,
};
use iape_core::oracle::{solve_pomdp_optimal, DEFAULT_NODE_BUDGET};
use iape_core::policy::{ConstantPolicy, HistoryPolicy, HistoryTablePolicy};
use iape_core::seeding::named_stream;
use proptest::prelude::*;
use rand::Rng;

fn corridor(hazard_prob: f64) -> Arc<PomdpModel> {
    Arc::new(build_gated_corridor(CorridorParams { hazard_prob, ..Default::default() }).unwrap())
}

/// Waits once, then behaves like `inner` as if the wait never happened.
struct WaitFirst<P>(P);

impl<P: HistoryPolicy> HistoryPolicy for WaitFirst<P> {
    type State = (bool, P::State);
    fn num_actions(&self) -> usize {
        self.0.num_actions()
    }
    fn start(&self, o: usize) -> Self::State {
        (false, self.0.start(o))
    }
    fn probs(&self, state: &Self::State, out: &mut [f64]) {
        if state.0 {
            self.0.probs(&state.1, out);
        } else {
            out.fill(0.0);
            out[WAIT] = 1.0;
        }
    }
    fn advance(&self, state: &Self::State, a: usize, o: usize, r: f64) -> Self::State {
        if state.0 {
            (true, self.0.advance(&state.1, a, o, r))
        } else {
            (true, state.1.clone())
        }
    }
}

#[test]
fn constant_policy_signature_is_the_distribution() {
    let m = corridor(0.35);
    let pool = InstanceSet::sample(&m, 3, 6);
    let probs = vec![0.2, 0.3, 0.5];
    let p = ConstantPolicy::new(probs.clone()).unwrap();
    for s in signatures(&p, &pool, 2, 1) {
        for (a, b) in s.probs.iter().zip(&probs) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn two_step_signature_is_the_two_point_mean() {
    let m = Arc::new(build_bandit(0.9, 0.1, 2, 2, 0.9).unwrap());
    let mut table = BTreeMap::new();
    table.insert(vec![0u64], 0usize);
    let p = HistoryTablePolicy::new(2, table, 1);
    let pool = InstanceSet::sample(&m, 1, 3);
    for s in signatures(&p, &pool, 1, 0) {
        assert_eq!(s.probs, vec![0.5, 0.5]);
    }
}

#[test]
fn trained_signatures_are_reproducible() {
    let m = corridor(0.35);
    let mut cfg = TrainConfig::for_algo(Algo::Iape);
    cfg.total_steps = 4000;
    cfg.eval.every = 4000;
    cfg.eval.test_episodes = 10;
    let out = train(&cfg, &m).unwrap();
    let pol = LearnedPolicy::new(out.params(), PolicyHead::Consensus);
    let pool = InstanceSet::sample(&m, 5, 8);
    let a = signatures(&pol, &pool, 3, 7);
    let b = signatures(&pol, &pool, 3, 7);
    assert_eq!(a, b);
    for s in &a {
        assert!((s.probs.iter().sum::<f64>() - 1.0).abs() <= 1e-10);
    }
    let single = time_averaged_policy(&pol, &pool.instances[2], 2, 3, 7);
    assert_eq!(single, a[2]);
}

#[test]
fn kl_reference_values() {
    assert_eq!(kl_divergence(&[0.3, 0.7], &[0.3, 0.7]), 0.0);
    assert!((kl_divergence(&[1.0, 0.0], &[0.5, 0.5]) - std::f64::consts::LN_2).abs() < 1e-15);
    assert!((kl_divergence(&[1.0, 0.0], &[0.5, 0.5]) - 0.693147).abs() < 1e-6);
    assert_eq!(kl_divergence(&[0.5, 0.5], &[1.0, 0.0]), f64::INFINITY);
}

#[test]
fn kl_is_non_negative_on_random_pairs() {
    let mut rng = named_stream(0, "kl-pairs", 0);
    for _ in 0..10_000 {
        let n = rng.gen_range(2..6);
        let mut draw = || {
            let v: Vec<f64> = (0..n).map(|_| rng.gen_range(1e-6..1.0)).collect();
            let z: f64 = v.iter().sum();
            v.into_iter().map(|x| x / z).collect::<Vec<_>>()
        };
        let (p, q) = (draw(), draw());
        assert!(kl_divergence(&p, &q) >= 0.0);
    }
}

#[test]
fn delta_t_of_base_against_itself_and_a_one_step_delay() {
    for h in [0.0, 1.0] {
        let m = corridor(h);
        let (base, _) = solve_pomdp_optimal(&m, DEFAULT_NODE_BUDGET).unwrap();
        let pool = InstanceSet::sample(&m, 2, 10);
        let b = episode_stats(&base, &pool, 1);
        assert!(b.iter().all(|s| s.success));
        let same = delta_time_to_reward(&b, &b);
        assert!(same.deltas.iter().all(|d| d.1 == 0) && !same.empty);
        let late = episode_stats(&WaitFirst(&base), &pool, 1);
        let d = delta_time_to_reward(&late, &b);
        assert_eq!(d.deltas.len(), 10);
        assert!(d.deltas.iter().all(|x| x.1 == 1), "{d:?}");
        assert_eq!((d.mean, d.sd), (1.0, 0.0));
    }
    let m = corridor(0.35);
    let pool = InstanceSet::sample(&m, 2, 10);
    let never = episode_stats(&ConstantPolicy::delta(3, WAIT), &pool, 1);
    assert!(delta_time_to_reward(&never, &never).empty);
}

fn heads(m: usize, seed: u64) -> Params {
    Params::init(Architecture { num_observations: 4, num_actions: 3, hidden: 5, heads: m, reward_scale: 0.1 }, seed).unwrap()
}

fn copy_head(p: &mut Params, from: usize, to: usize, sign: f64) {
    let a = p.arch;
    let len = a.head_len();
    let src: Vec<f64> = p.data[a.head(from)..a.head(from) + len].to_vec();
    for (d, s) in p.data[a.head(to)..a.head(to) + len].iter_mut().zip(src) {
        *d = sign * s;
    }
}

#[test]
fn cosine_of_identical_negated_and_zero_heads() {
    let mut p = heads(3, 1);
    let a = p.arch;
    // Non-zero biases so the value block has a direction.
    p.data[a.val_b(0)] = 0.4;
    copy_head(&mut p, 0, 1, 1.0);
    copy_head(&mut p, 0, 2, -1.0);
    let c = cosine_similarity_heads(&p);
    for mat in [&c.policy, &c.value] {
        assert!((mat[0][1].unwrap() - 1.0).abs() < 1e-12);
        assert!((mat[0][2].unwrap() + 1.0).abs() < 1e-12);
    }
    let mut z = heads(2, 2);
    let len = z.arch.head_len();
    let start = z.arch.head(1);
    z.data[start..start + len].fill(0.0);
    let c = cosine_similarity_heads(&z);
    assert_eq!(c.policy[0][1], None);
    assert_eq!(c.value[1][1], None);
}

proptest! {
    #[test]
    fn cosine_matrices_are_symmetric_with_unit_diagonal(seed in any::<u64>(), m in 2usize..6) {
        let c = cosine_similarity_heads(&heads(m, seed));
        for mat in [&c.policy, &c.value] {
            for i in 0..m {
                prop_assert_eq!(mat[i][i], Some(1.0));
                for j in 0..m {
                    prop_assert_eq!(mat[i][j], mat[j][i]);
                    let x = mat[i][j].unwrap();
                    prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&x));
                }
            }
        }
    }
}

#[test]
fn agreement_of_equal_and_antipodal_heads() {
    let m = corridor(0.35);
    let pool = InstanceSet::sample(&m, 4, 5);
    let arch = Architecture { num_observations: m.num_observations(), num_actions: 3, hidden: 6, heads: 3, reward_scale: 0.1 };
    let mut p = Params::init(arch, 3).unwrap();
    copy_head(&mut p, 0, 1, 1.0);
    copy_head(&mut p, 0, 2, 1.0);
    let ag = ensemble_agreement(&p, &pool, 2, 1);
    assert!(ag.mean_kl.abs() < 1e-12 && !ag.infinite);

    let two = Architecture { heads: 2, ..arch };
    let mut q = Params::zeros(two);
    q.data[two.pol_b(0)] = 800.0;
    q.data[two.pol_b(1) + 1] = 800.0;
    let ag = ensemble_agreement(&q, &pool, 1, 1);
    assert!(ag.infinite && ag.mean_kl.is_infinite());
    assert_eq!(ensemble_agreement(&p, &pool, 2, 1), ensemble_agreement(&p, &pool, 2, 1));
}

#[test]
fn histogram_header_records_binning() {
    let svg = histogram_svg("dt", &[("a".into(), vec![-1.0, 0.0, 0.0, 3.0])], Bins { lo: -4.0, hi: 4.0, count: 8 });
    assert!(svg.contains("<!-- histogram bins: lo=-4 hi=4 count=8 -->"));
    assert_eq!(svg.matches("<rect").count(), 8);
}
