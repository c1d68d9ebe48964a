#![allow(dead_code)]

use std::sync::Arc;

use iape_core::env::{ModelTables, PomdpModel, TransitionEntry};

fn entry(reward: usize, next_state: usize, prob: f64) -> TransitionEntry {
    TransitionEntry { reward, next_state, prob }
}

/// Three states (state 2 absorbing), two actions, two modalities and
/// noisy, action-dependent observations.
pub fn noisy_model() -> Arc<PomdpModel> {
    let transition = vec![
        vec![entry(0, 0, 0.6), entry(1, 1, 0.4)],
        vec![entry(0, 1, 0.5), entry(0, 2, 0.2), entry(1, 0, 0.3)],
        vec![entry(1, 1, 0.7), entry(0, 0, 0.3)],
        vec![entry(0, 2, 0.5), entry(1, 2, 0.1), entry(0, 0, 0.4)],
        vec![entry(0, 2, 1.0)],
        vec![entry(0, 2, 1.0)],
    ];
    let mut observation = Vec::new();
    for s in 0..3 {
        for a in 0..3 {
            for k in 0..2 {
                let row = match (s, k, a) {
                    (0, 0, 1) => vec![(0, 0.6), (1, 0.4)],
                    (0, 0, _) => vec![(0, 0.8), (1, 0.2)],
                    (0, 1, _) => vec![(0, 0.5), (2, 0.5)],
                    (1, 0, _) => vec![(1, 0.7), (2, 0.3)],
                    (1, 1, _) => vec![(0, 0.1), (1, 0.9)],
                    _ => vec![(3, 1.0)],
                };
                observation.push(row);
            }
        }
    }
    Arc::new(
        PomdpModel::from_tables(ModelTables {
            name: "noisy".into(),
            num_states: 3,
            num_actions: 2,
            num_modalities: 2,
            num_observations: 4,
            reward_support: vec![0.0, 1.0],
            initial_dist: vec![0.7, 0.3, 0.0],
            transition,
            observation,
            terminal: vec![false, false, true],
            discount: 0.9,
            horizon: 6,
        })
        .unwrap(),
    )
}

/// Deterministic chain: action `a` moves from `s` to `(s + a + 1) % 4`,
/// paying 1 when landing on state 0; observations are the state itself.
pub fn chain_model() -> Arc<PomdpModel> {
    let mut transition = Vec::new();
    for s in 0..4 {
        for a in 0..2 {
            let ns = (s + a + 1) % 4;
            transition.push(vec![entry(usize::from(ns == 0), ns, 1.0)]);
        }
    }
    let observation = (0..4).flat_map(|s| (0..3).map(move |_| vec![(s, 1.0)])).collect();
    Arc::new(
        PomdpModel::from_tables(ModelTables {
            name: "chain".into(),
            num_states: 4,
            num_actions: 2,
            num_modalities: 1,
            num_observations: 4,
            reward_support: vec![0.0, 1.0],
            initial_dist: vec![0.0, 1.0, 0.0, 0.0],
            transition,
            observation,
            terminal: vec![false; 4],
            discount: 0.8,
            horizon: 5,
        })
        .unwrap(),
    )
}

/// Upper critical value of chi-square with `df` degrees of freedom at
/// significance 1e-3 (Wilson-Hilferty).
pub fn chi2_critical_1e3(df: usize) -> f64 {
    let z = 3.090_232_306_167_813;
    let d = df as f64;
    let c = 2.0 / (9.0 * d);
    d * (1.0 - c + z * c.sqrt()).powi(3)
}
