//! Deterministic trajectory trees ("instances") sampled from a model.
//!
//! A seeded [`Instance`] never stores its tree: the content of the node at
//! action prefix `a_0..a_{t-1}` is drawn from a stream keyed by the instance
//! seed and the prefix, so the tree is total and reproducible. An
//! [`ExplicitInstance`] holds a fully materialized depth-limited tree and is
//! used where the instance distribution must be enumerated exactly.

use std::collections::HashMap;
use std::hash::{Hash, Hasher};
use std::sync::{Arc, RwLock};

use rand::Rng;
use serde::Serialize;

use crate::env::PomdpModel;
use crate::error::{Error, Result};
use crate::history::{FullHistory, ObservableHistory};
use crate::report::VerificationReport;
use crate::seeding::{child_key, derive_seed, named_stream, node_stream, root_key};

/// Content of one tree node: the state entered, its observation and the
/// reward collected on the way in (index 0 / value 0 at the root).
#[derive(Clone, Copy, Debug, Serialize)]
pub struct NodeRecord {
    pub state: usize,
    pub observation: usize,
    pub reward_index: usize,
    pub reward: f64,
    pub terminal: bool,
}

impl PartialEq for NodeRecord {
    fn eq(&self, other: &Self) -> bool {
        self.state == other.state
            && self.observation == other.observation
            && self.reward_index == other.reward_index
            && self.terminal == other.terminal
            && self.reward.to_bits() == other.reward.to_bits()
    }
}

impl Eq for NodeRecord {}

impl Hash for NodeRecord {
    fn hash<H: Hasher>(&self, h: &mut H) {
        (self.state, self.observation, self.reward_index, self.terminal, self.reward.to_bits()).hash(h);
    }
}

/// Anything that answers action sequences with a fixed trajectory.
pub trait InstanceTree: Sync {
    type Node: Copy + Send + Sync;

    fn model(&self) -> &PomdpModel;
    fn modality(&self) -> usize;
    fn root(&self) -> (Self::Node, NodeRecord);
    /// Child of a non-terminal node; `depth` is the length of the child's
    /// action prefix.
    fn child(&self, node: Self::Node, record: &NodeRecord, depth: usize, action: usize) -> (Self::Node, NodeRecord);

    /// Visited records along `actions`, root first.
    fn path(&self, actions: &[usize]) -> Result<Vec<NodeRecord>> {
        let model = self.model();
        if actions.len() > model.horizon() {
            return Err(Error::Usage(format!(
                "action sequence of length {} exceeds horizon {}",
                actions.len(),
                model.horizon()
            )));
        }
        let (mut node, mut rec) = self.root();
        let mut out = Vec::with_capacity(actions.len() + 1);
        out.push(rec);
        for (t, &a) in actions.iter().enumerate() {
            if a >= model.num_actions() {
                return Err(Error::Usage(format!("action {a} out of range")));
            }
            if rec.terminal {
                return Err(Error::Usage(format!("action {t} extends past a terminal node")));
            }
            (node, rec) = self.child(node, &rec, t + 1, a);
            out.push(rec);
        }
        Ok(out)
    }
}

/// Seeded instance with a lazily filled prefix cache.
pub struct Instance {
    seed: u64,
    model: Arc<PomdpModel>,
    modality: usize,
    root: NodeRecord,
    memo: RwLock<HashMap<Vec<usize>, NodeRecord>>,
}

impl Clone for Instance {
    fn clone(&self) -> Self {
        Self { seed: self.seed, model: Arc::clone(&self.model), modality: self.modality, root: self.root, memo: RwLock::default() }
    }
}

impl std::fmt::Debug for Instance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Instance").field("seed", &self.seed).field("modality", &self.modality).field("root", &self.root).finish()
    }
}

/// Draw the content of the child reached by `action` from `parent`.
#[inline]
pub(crate) fn draw_child(model: &PomdpModel, modality: usize, key: u64, parent: &NodeRecord, action: usize) -> NodeRecord {
    let mut rng = node_stream(key);
    let e = model.draw_transition(parent.state, action, &mut rng);
    let observation = model.draw_observation(e.next_state, action, modality, &mut rng);
    NodeRecord {
        state: e.next_state,
        observation,
        reward_index: e.reward,
        reward: model.reward_support()[e.reward],
        terminal: model.is_terminal(e.next_state),
    }
}

impl Instance {
    /// `s_0 ~ mu`, `k ~ U(K)` and `o_0` drawn from the root stream.
    pub fn spawn(model: &Arc<PomdpModel>, instance_seed: u64) -> Self {
        let mut rng = node_stream(root_key(instance_seed));
        let state = model.draw_initial_state(&mut rng);
        let modality = model.draw_modality(&mut rng);
        let observation = model.draw_observation(state, model.no_action(), modality, &mut rng);
        let zero = model.reward_index(0.0).unwrap_or(0);
        let root = NodeRecord {
            state,
            observation,
            reward_index: zero,
            reward: model.reward_support()[zero],
            terminal: model.is_terminal(state),
        };
        Self { seed: instance_seed, model: Arc::clone(model), modality, root, memo: RwLock::default() }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn model_arc(&self) -> &Arc<PomdpModel> {
        &self.model
    }

    /// Like [`InstanceTree::path`] but consults and fills the prefix cache.
    pub fn query(&self, actions: &[usize]) -> Result<Vec<NodeRecord>> {
        if let Some(cached) = self.cached_path(actions) {
            return Ok(cached);
        }
        let path = self.path(actions)?;
        if let Ok(mut memo) = self.memo.write() {
            for t in 1..path.len() {
                memo.entry(actions[..t].to_vec()).or_insert(path[t]);
            }
        }
        Ok(path)
    }

    fn cached_path(&self, actions: &[usize]) -> Option<Vec<NodeRecord>> {
        let memo = self.memo.read().ok()?;
        let mut out = vec![self.root];
        for t in 1..=actions.len() {
            out.push(*memo.get(&actions[..t])?);
        }
        Some(out)
    }

    pub fn clear_memo(&self) {
        if let Ok(mut memo) = self.memo.write() {
            memo.clear();
        }
    }

    pub fn memo_len(&self) -> usize {
        self.memo.read().map(|m| m.len()).unwrap_or(0)
    }
}

impl InstanceTree for Instance {
    type Node = u64;

    fn model(&self) -> &PomdpModel {
        &self.model
    }
    fn modality(&self) -> usize {
        self.modality
    }
    fn root(&self) -> (u64, NodeRecord) {
        (root_key(self.seed), self.root)
    }
    #[inline]
    fn child(&self, node: u64, record: &NodeRecord, depth: usize, action: usize) -> (u64, NodeRecord) {
        let key = child_key(node, depth as u32, action);
        (key, draw_child(&self.model, self.modality, key, record, action))
    }
}

/// Fully materialized tree; nodes below the depth limit or terminal nodes
/// have no children.
#[derive(Clone, Debug)]
pub struct ExplicitInstance {
    model: Arc<PomdpModel>,
    modality: usize,
    records: Vec<NodeRecord>,
    children: Vec<Option<usize>>,
    depth: usize,
}

impl ExplicitInstance {
    pub fn records(&self) -> &[NodeRecord] {
        &self.records
    }
    pub fn depth(&self) -> usize {
        self.depth
    }
}

impl InstanceTree for ExplicitInstance {
    type Node = usize;

    fn model(&self) -> &PomdpModel {
        &self.model
    }
    fn modality(&self) -> usize {
        self.modality
    }
    fn root(&self) -> (usize, NodeRecord) {
        (0, self.records[0])
    }
    fn child(&self, node: usize, _record: &NodeRecord, depth: usize, action: usize) -> (usize, NodeRecord) {
        let a_n = self.model.num_actions();
        let idx = self.children[node * a_n + action]
            .unwrap_or_else(|| panic!("explicit instance has no child at depth {depth} (limit {})", self.depth));
        (idx, self.records[idx])
    }
}

/// Ordered collection of instances sampled uniformly per episode.
#[derive(Clone, Debug)]
pub struct InstanceSet<T = Instance> {
    pub instances: Vec<T>,
    pub set_seed: u64,
}

impl InstanceSet<Instance> {
    /// `size` instances with pairwise distinct seeds derived from `set_seed`.
    pub fn sample(model: &Arc<PomdpModel>, set_seed: u64, size: usize) -> Self {
        let mut seen = std::collections::HashSet::with_capacity(size);
        let mut instances = Vec::with_capacity(size);
        let mut index = 0u64;
        while instances.len() < size {
            let seed = derive_seed(set_seed, "instance", index);
            index += 1;
            if seen.insert(seed) {
                instances.push(Instance::spawn(model, seed));
            }
        }
        Self { instances, set_seed }
    }
}

impl<T: InstanceTree> InstanceSet<T> {
    pub fn new(instances: Vec<T>, set_seed: u64) -> Self {
        Self { instances, set_seed }
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn pick<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        rng.gen_range(0..self.instances.len())
    }
}

/// Instance weights given an observable history.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Posterior {
    pub weights: Vec<f64>,
}

impl Posterior {
    /// No instance is compatible with the history.
    pub fn is_empty(&self) -> bool {
        self.weights.iter().all(|w| *w == 0.0)
    }
}

fn compatible_observable<T: InstanceTree>(inst: &T, h: &ObservableHistory) -> bool {
    let (mut node, mut rec) = inst.root();
    if rec.observation != h.observations[0] {
        return false;
    }
    for t in 0..h.len() {
        if rec.terminal || h.actions[t] >= inst.model().num_actions() {
            return false;
        }
        (node, rec) = inst.child(node, &rec, t + 1, h.actions[t]);
        if rec.observation != h.observations[t + 1] || rec.reward != h.rewards[t] {
            return false;
        }
    }
    true
}

/// Uniform weights over the instances whose tree emits exactly the
/// `(o, r)` sequence of `history` along its actions.
pub fn instance_posterior<T: InstanceTree>(set: &InstanceSet<T>, history: &ObservableHistory) -> Result<Posterior> {
    history.validate()?;
    let flags: Vec<bool> = set.instances.iter().map(|i| compatible_observable(i, history)).collect();
    let n = flags.iter().filter(|f| **f).count();
    let weights = flags.iter().map(|&f| if f { 1.0 / n as f64 } else { 0.0 }).collect();
    Ok(Posterior { weights })
}

/// Exact law of the next `(reward index, next state)` under the uniform
/// posterior over instances compatible with the full history.
pub fn instance_set_transition<T: InstanceTree>(
    set: &InstanceSet<T>,
    history: &FullHistory,
    action: usize,
) -> Result<Vec<((usize, usize), f64)>> {
    history.validate()?;
    let h = &history.observable;
    let mut nexts = Vec::new();
    'inst: for inst in &set.instances {
        let (mut node, mut rec) = inst.root();
        if rec.state != history.states[0] || rec.observation != h.observations[0] {
            continue;
        }
        for t in 0..h.len() {
            if rec.terminal {
                continue 'inst;
            }
            (node, rec) = inst.child(node, &rec, t + 1, h.actions[t]);
            if rec.state != history.states[t + 1] || rec.observation != h.observations[t + 1] || rec.reward != h.rewards[t] {
                continue 'inst;
            }
        }
        if rec.terminal {
            return Err(Error::Usage("history ends in a terminal node".into()));
        }
        if h.len() >= inst.model().horizon() {
            return Err(Error::Usage("history already reaches the horizon".into()));
        }
        let (_, next) = inst.child(node, &rec, h.len() + 1, action);
        nexts.push((next.reward_index, next.state));
    }
    if nexts.is_empty() {
        return Err(Error::NoCompatibleInstance);
    }
    let w = 1.0 / nexts.len() as f64;
    let mut dist: Vec<((usize, usize), f64)> = Vec::new();
    nexts.sort_unstable();
    for key in nexts {
        match dist.last_mut() {
            Some((k, p)) if *k == key => *p += w,
            _ => dist.push((key, w)),
        }
    }
    Ok(dist)
}

/// Flattened `(s_0, o_0, r_1, s_1, o_1, ...)` path, cut at the first
/// terminal node.
fn path_key(records: &[NodeRecord]) -> Vec<usize> {
    let mut key = vec![records[0].state, records[0].observation];
    for r in &records[1..] {
        key.extend([r.reward_index, r.state, r.observation]);
    }
    key
}

/// Exact law of the path key under the model, for a fixed action sequence.
pub fn exact_path_law(model: &PomdpModel, actions: &[usize]) -> HashMap<Vec<usize>, f64> {
    fn rec(model: &PomdpModel, actions: &[usize], k: usize, state: usize, p: f64, key: &mut Vec<usize>, out: &mut HashMap<Vec<usize>, f64>) {
        if actions.is_empty() || model.is_terminal(state) {
            *out.entry(key.clone()).or_default() += p;
            return;
        }
        let a = actions[0];
        for e in model.transition_row(state, a) {
            for &(o, po) in model.observation_row(e.next_state, a, k) {
                key.extend([e.reward, e.next_state, o]);
                rec(model, &actions[1..], k, e.next_state, p * e.prob * po, key, out);
                key.truncate(key.len() - 3);
            }
        }
    }
    let mut out = HashMap::new();
    let k_n = model.num_modalities();
    for (s0, &mu) in model.initial_dist().iter().enumerate() {
        if mu == 0.0 {
            continue;
        }
        for k in 0..k_n {
            for &(o0, po) in model.observation_row(s0, model.no_action(), k) {
                let mut key = vec![s0, o0];
                rec(model, actions, k, s0, mu * po / k_n as f64, &mut key, &mut out);
            }
        }
    }
    out
}

fn empirical_distance(model: &Arc<PomdpModel>, actions: &[usize], exact: &HashMap<Vec<usize>, f64>, n: usize, seed: u64) -> f64 {
    let mut counts: HashMap<Vec<usize>, usize> = HashMap::new();
    for i in 0..n {
        let inst = Instance::spawn(model, derive_seed(seed, "fresh-instance", i as u64));
        let (mut node, mut rec) = inst.root();
        let mut path = vec![rec];
        for (t, &a) in actions.iter().enumerate() {
            if rec.terminal {
                break;
            }
            (node, rec) = inst.child(node, &rec, t + 1, a);
            path.push(rec);
        }
        *counts.entry(path_key(&path)).or_default() += 1;
    }
    let mut l1 = 0.0;
    for (key, &p) in exact {
        l1 += (counts.get(key).copied().unwrap_or(0) as f64 / n as f64 - p).abs();
    }
    for (key, &c) in &counts {
        if !exact.contains_key(key) {
            l1 += c as f64 / n as f64;
        }
    }
    l1
}

/// Empirical joint law of the `actions.len()`-step path over `n_instances`
/// fresh instances versus the model's exact law. Passes iff the L1
/// distance is at most `3 sqrt(|support| / n)`.
pub fn verify_expected_transition(model: &Arc<PomdpModel>, actions: &[usize], n_instances: usize, seed: u64) -> Result<VerificationReport> {
    if actions.is_empty() || actions.len() > model.horizon() {
        return Err(Error::InvalidParameter("need 1 <= steps <= horizon".into()));
    }
    if n_instances == 0 || actions.iter().any(|a| *a >= model.num_actions()) {
        return Err(Error::InvalidParameter("need n_instances > 0 and valid actions".into()));
    }
    let exact = exact_path_law(model, actions);
    let l1 = empirical_distance(model, actions, &exact, n_instances, seed);
    let tol = 3.0 * (exact.len() as f64 / n_instances as f64).sqrt();
    let mut r = VerificationReport::new("expected-instance-transition", seed)
        .detail("steps", actions.len())
        .detail("actions", actions)
        .detail("support", exact.len())
        .detail("n_instances", n_instances);
    r.value = l1;
    r.tolerance = tol;
    r.pass = l1 <= tol;
    Ok(r)
}

/// Median L1 error over `repeats` for each instance count in `ns`; passes
/// iff the medians decrease strictly.
pub fn verify_error_decay(model: &Arc<PomdpModel>, actions: &[usize], ns: &[usize], repeats: usize, seed: u64) -> Result<VerificationReport> {
    if ns.is_empty() || repeats == 0 {
        return Err(Error::InvalidParameter("need at least one sample size and one repeat".into()));
    }
    let exact = exact_path_law(model, actions);
    let mut medians = Vec::with_capacity(ns.len());
    for (j, &n) in ns.iter().enumerate() {
        let mut errs: Vec<f64> = (0..repeats)
            .map(|r| empirical_distance(model, actions, &exact, n, derive_seed(seed, "decay", (j * repeats + r) as u64)))
            .collect();
        errs.sort_by(f64::total_cmp);
        let mid = errs.len() / 2;
        medians.push(if errs.len() % 2 == 1 { errs[mid] } else { 0.5 * (errs[mid - 1] + errs[mid]) });
    }
    let mut r = VerificationReport::new("instance-transition-error-decay", seed)
        .detail("sample_sizes", ns)
        .detail("median_l1", &medians)
        .detail("repeats", repeats);
    r.value = *medians.last().unwrap_or(&0.0);
    r.pass = medians.windows(2).all(|w| w[1] < w[0]);
    Ok(r)
}

/// Every distinct depth-limited tree of the model with its probability.
/// Trees with identical records and modality are merged.
pub fn enumerate_universe(model: &Arc<PomdpModel>, depth: usize, cap: usize) -> Result<Vec<(ExplicitInstance, f64)>> {
    let depth = depth.min(model.horizon());
    let a_n = model.num_actions();

    // Child outcomes of a node entering `state`, keyed per action.
    let outcomes = |state: usize, action: usize, k: usize| -> Vec<(NodeRecord, f64)> {
        let mut v = Vec::new();
        for e in model.transition_row(state, action) {
            for &(o, p) in model.observation_row(e.next_state, action, k) {
                v.push((
                    NodeRecord {
                        state: e.next_state,
                        observation: o,
                        reward_index: e.reward,
                        reward: model.reward_support()[e.reward],
                        terminal: model.is_terminal(e.next_state),
                    },
                    e.prob * p,
                ));
            }
        }
        v
    };

    fn count(model: &PomdpModel, rec: &NodeRecord, k: usize, left: usize, outcomes: &dyn Fn(usize, usize, usize) -> Vec<(NodeRecord, f64)>) -> f64 {
        if rec.terminal || left == 0 {
            return 1.0;
        }
        (0..model.num_actions())
            .map(|a| outcomes(rec.state, a, k).iter().map(|(c, _)| count(model, c, k, left - 1, outcomes)).sum::<f64>())
            .product()
    }

    // Preorder record lists of all subtrees below `rec`.
    fn subtrees(
        model: &PomdpModel,
        rec: NodeRecord,
        k: usize,
        left: usize,
        outcomes: &dyn Fn(usize, usize, usize) -> Vec<(NodeRecord, f64)>,
    ) -> Vec<(Vec<NodeRecord>, f64)> {
        if rec.terminal || left == 0 {
            return vec![(vec![rec], 1.0)];
        }
        let mut acc: Vec<(Vec<NodeRecord>, f64)> = vec![(vec![rec], 1.0)];
        for a in 0..model.num_actions() {
            let options: Vec<(Vec<NodeRecord>, f64)> = outcomes(rec.state, a, k)
                .into_iter()
                .flat_map(|(c, p)| subtrees(model, c, k, left - 1, outcomes).into_iter().map(move |(t, q)| (t, p * q)))
                .collect();
            acc = acc
                .iter()
                .flat_map(|(prefix, p)| {
                    options.iter().map(move |(t, q)| {
                        let mut v = prefix.clone();
                        v.extend_from_slice(t);
                        (v, p * q)
                    })
                })
                .collect();
        }
        acc
    }

    let zero = model.reward_index(0.0).unwrap_or(0);
    let k_n = model.num_modalities();
    let mut roots = Vec::new();
    for (s0, &mu) in model.initial_dist().iter().enumerate() {
        if mu == 0.0 {
            continue;
        }
        for k in 0..k_n {
            for &(o0, po) in model.observation_row(s0, model.no_action(), k) {
                let rec = NodeRecord {
                    state: s0,
                    observation: o0,
                    reward_index: zero,
                    reward: model.reward_support()[zero],
                    terminal: model.is_terminal(s0),
                };
                roots.push((rec, k, mu * po / k_n as f64));
            }
        }
    }
    let total: f64 = roots.iter().map(|(r, k, _)| count(model, r, *k, depth, &outcomes)).sum();
    if total > cap as f64 {
        return Err(Error::UniverseTooLarge { count: total as usize, cap });
    }

    let mut merged: Vec<((usize, Vec<NodeRecord>), f64)> = Vec::new();
    let mut index: HashMap<(usize, Vec<NodeRecord>), usize> = HashMap::new();
    for (rec, k, p) in roots {
        for (tree, q) in subtrees(model, rec, k, depth, &outcomes) {
            let key = (k, tree);
            match index.get(&key) {
                Some(&i) => merged[i].1 += p * q,
                None => {
                    index.insert(key.clone(), merged.len());
                    merged.push((key, p * q));
                }
            }
        }
    }

    Ok(merged
        .into_iter()
        .map(|((k, preorder), p)| {
            let mut children = vec![None; preorder.len() * a_n];
            let mut cursor = 0;
            fn link(pre: &[NodeRecord], at: usize, left: usize, a_n: usize, cursor: &mut usize, children: &mut [Option<usize>]) {
                let rec = pre[at];
                if rec.terminal || left == 0 {
                    return;
                }
                for a in 0..a_n {
                    *cursor += 1;
                    let c = *cursor;
                    children[at * a_n + a] = Some(c);
                    link(pre, c, left - 1, a_n, cursor, children);
                }
            }
            link(&preorder, 0, depth, a_n, &mut cursor, &mut children);
            (ExplicitInstance { model: Arc::clone(model), modality: k, records: preorder, children, depth }, p)
        })
        .collect())
}

/// Depth-limited JSON rendering of an instance tree.
pub fn tree_json<T: InstanceTree>(inst: &T, depth: usize) -> serde_json::Value {
    fn node<T: InstanceTree>(inst: &T, n: T::Node, rec: NodeRecord, d: usize, left: usize) -> serde_json::Value {
        let mut obj = serde_json::json!({
            "state": rec.state,
            "observation": rec.observation,
            "reward": rec.reward,
            "terminal": rec.terminal,
        });
        if !rec.terminal && left > 0 {
            let kids: Vec<_> = (0..inst.model().num_actions())
                .map(|a| {
                    let (c, cr) = inst.child(n, &rec, d + 1, a);
                    node(inst, c, cr, d + 1, left - 1)
                })
                .collect();
            obj["children"] = serde_json::Value::Array(kids);
        }
        obj
    }
    let (n, rec) = inst.root();
    let depth = depth.min(inst.model().horizon());
    serde_json::json!({ "modality": inst.modality(), "root": node(inst, n, rec, 0, depth) })
}

/// Uniform instance draw followed by a replay, used by samplers that need
/// an explicit stream.
pub fn sample_instance_index(set_len: usize, root: u64, episode: u64) -> usize {
    named_stream(root, "instance-pick", episode).gen_range(0..set_len)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{build_bandit, build_gated_corridor, CorridorParams};

    fn bandit() -> Arc<PomdpModel> {
        Arc::new(build_bandit(0.9, 0.1, 4, 10, 0.9).unwrap())
    }

    #[test]
    fn same_seed_same_tree() {
        let m = Arc::new(build_gated_corridor(CorridorParams::default()).unwrap());
        let a = Instance::spawn(&m, 42);
        let b = Instance::spawn(&m, 42);
        for seq in [vec![2, 2, 2], vec![0], vec![1], vec![2, 0]] {
            assert_eq!(a.path(&seq).unwrap(), b.path(&seq).unwrap());
        }
        assert_eq!(a.modality(), b.modality());
    }

    #[test]
    fn memo_is_transparent() {
        let m = bandit();
        let inst = Instance::spawn(&m, 9);
        let first = inst.query(&[0, 1, 2, 3]).unwrap();
        assert!(inst.memo_len() > 0);
        let again = inst.query(&[0, 1, 2, 3]).unwrap();
        inst.clear_memo();
        let cleared = inst.query(&[0, 1, 2, 3]).unwrap();
        assert_eq!(first, again);
        assert_eq!(first, cleared);
        assert_eq!(inst.query(&[0, 1]).unwrap(), first[..3]);
    }

    #[test]
    fn bandit_root_is_fixed() {
        let m = bandit();
        for s in 0..50 {
            let p = Instance::spawn(&m, s).query(&[]).unwrap();
            assert_eq!((p[0].state, p[0].observation), (0, 0));
        }
    }

    #[test]
    fn query_rejects_overlong_and_post_terminal() {
        let m = bandit();
        assert!(matches!(Instance::spawn(&m, 1).query(&[0; 11]), Err(Error::Usage(_))));
        let c = Arc::new(build_gated_corridor(CorridorParams { hazard_prob: 0.0, ..Default::default() }).unwrap());
        let inst = Instance::spawn(&c, 1);
        assert!(matches!(inst.query(&[0; 9]), Err(Error::Usage(_))));
    }

    #[test]
    fn singleton_transition_is_a_delta() {
        let m = bandit();
        let set = InstanceSet::sample(&m, 3, 1);
        let h = FullHistory::new(0, 0);
        let d = instance_set_transition(&set, &h, 2).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].1, 1.0);
        let child = set.instances[0].query(&[2]).unwrap()[1];
        assert_eq!(d[0].0, (child.reward_index, child.state));
    }

    #[test]
    fn incompatible_history_is_reported() {
        let m = bandit();
        let set = InstanceSet::sample(&m, 3, 4);
        let h = FullHistory::new(0, 7);
        assert!(matches!(instance_set_transition(&set, &h, 0), Err(Error::NoCompatibleInstance)));
    }

    #[test]
    fn empty_history_posterior_is_uniform() {
        let m = bandit();
        let set = InstanceSet::sample(&m, 5, 8);
        let p = instance_posterior(&set, &ObservableHistory::new(0)).unwrap();
        assert!(p.weights.iter().all(|w| (*w - 0.125).abs() < 1e-15));
        let q = instance_posterior(&set, &ObservableHistory::new(3)).unwrap();
        assert!(q.is_empty());
    }

    #[test]
    fn bandit_universe_of_depth_one() {
        let m = Arc::new(build_bandit(0.9, 0.1, 4, 1, 0.9).unwrap());
        let u = enumerate_universe(&m, 1, 16).unwrap();
        assert_eq!(u.len(), 16);
        let total: f64 = u.iter().map(|(_, p)| p).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(matches!(enumerate_universe(&m, 1, 15), Err(Error::UniverseTooLarge { .. })));
    }

    #[test]
    fn explicit_and_seeded_paths_agree_in_shape() {
        let m = Arc::new(build_bandit(0.9, 0.1, 2, 2, 0.9).unwrap());
        let u = enumerate_universe(&m, 2, 1 << 10).unwrap();
        assert_eq!(u.len(), 2usize.pow(2 + 4));
        for (inst, _) in &u {
            assert_eq!(inst.path(&[1, 0]).unwrap().len(), 3);
        }
    }
}
