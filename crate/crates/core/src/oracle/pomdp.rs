use std::collections::HashMap;
use std::hash::{Hash, Hasher};
use std::sync::{Arc, Mutex};

use super::ValueReport;
use crate::belief::{init_belief, predict_outcomes, update_belief, BeliefKey, ExactBelief};
use crate::env::PomdpModel;
use crate::error::{Error, Result};
use crate::policy::HistoryPolicy;

#[derive(Clone, Copy, Debug)]
struct Entry {
    value: f64,
    undiscounted: f64,
    action: usize,
}

type Memo = HashMap<(u32, BeliefKey), Entry>;

struct Solver<'a> {
    model: &'a PomdpModel,
    memo: &'a mut Memo,
    budget: u64,
    expanded: u64,
}

impl Solver<'_> {
    fn value(&mut self, depth: usize, belief: &ExactBelief) -> Result<(f64, f64)> {
        if depth >= self.model.horizon() || belief.is_terminal(self.model) {
            return Ok((0.0, 0.0));
        }
        let key = (depth as u32, belief.key());
        if let Some(e) = self.memo.get(&key) {
            return Ok((e.value, e.undiscounted));
        }
        self.expanded += 1;
        if self.expanded > self.budget {
            return Err(Error::BudgetExceeded { expanded: self.expanded, budget: self.budget });
        }
        let gamma = self.model.discount();
        let mut best = Entry { value: f64::NEG_INFINITY, undiscounted: 0.0, action: 0 };
        for a in 0..self.model.num_actions() {
            let (mut q, mut u) = (0.0, 0.0);
            for oc in predict_outcomes(self.model, belief, a) {
                let r = self.model.reward_support()[oc.reward_index];
                let (v, w) = self.value(depth + 1, &oc.belief)?;
                q += oc.prob * (r + gamma * v);
                u += oc.prob * (r + w);
            }
            if q > best.value {
                best = Entry { value: q, undiscounted: u, action: a };
            }
        }
        self.memo.insert(key, best);
        Ok((best.value, best.undiscounted))
    }
}

/// Distinct initial observations with their marginal probabilities.
pub(crate) fn initial_observations(model: &PomdpModel) -> Vec<(usize, f64)> {
    let k_n = model.num_modalities();
    let mut probs: HashMap<usize, f64> = HashMap::new();
    for (s, &mu) in model.initial_dist().iter().enumerate() {
        for k in 0..k_n {
            for &(o, p) in model.observation_row(s, model.no_action(), k) {
                if mu > 0.0 {
                    *probs.entry(o).or_default() += mu * p / k_n as f64;
                }
            }
        }
    }
    let mut v: Vec<_> = probs.into_iter().collect();
    v.sort_by_key(|e| e.0);
    v
}

/// Optimal policy over deduplicated beliefs, filled by backward induction.
/// Beliefs the solve never reached are solved on first use.
pub struct BeliefPolicy {
    model: Arc<PomdpModel>,
    memo: Mutex<Memo>,
    budget: u64,
}

impl BeliefPolicy {
    pub fn model(&self) -> &PomdpModel {
        &self.model
    }

    pub fn table_len(&self) -> usize {
        self.memo.lock().map(|m| m.len()).unwrap_or(0)
    }

    fn action(&self, depth: usize, belief: &ExactBelief) -> usize {
        let Ok(mut memo) = self.memo.lock() else { return 0 };
        if let Some(e) = memo.get(&(depth as u32, belief.key())) {
            return e.action;
        }
        let mut solver = Solver { model: &self.model, memo: &mut memo, budget: u64::MAX, expanded: 0 };
        if solver.value(depth, belief).is_err() {
            return 0;
        }
        memo.get(&(depth as u32, belief.key())).map_or(0, |e| e.action)
    }

    /// Value of a belief at a depth, solving lazily if needed.
    pub fn value(&self, depth: usize, belief: &ExactBelief) -> Result<f64> {
        let mut memo = self.memo.lock().map_err(|_| Error::Usage("poisoned belief table".into()))?;
        let budget = self.budget;
        Solver { model: &self.model, memo: &mut memo, budget, expanded: 0 }.value(depth, belief).map(|v| v.0)
    }
}

/// Policy state: depth plus the filtered belief (`None` after an impossible
/// observation, where action 0 is used).
#[derive(Clone, Debug)]
pub struct BeliefState {
    depth: usize,
    key: Option<BeliefKey>,
    belief: Option<Arc<ExactBelief>>,
}

impl BeliefState {
    pub fn belief(&self) -> Option<&ExactBelief> {
        self.belief.as_deref()
    }
}

impl PartialEq for BeliefState {
    fn eq(&self, other: &Self) -> bool {
        self.depth == other.depth && self.key == other.key
    }
}
impl Eq for BeliefState {}
impl Hash for BeliefState {
    fn hash<H: Hasher>(&self, h: &mut H) {
        self.depth.hash(h);
        self.key.hash(h);
    }
}

impl HistoryPolicy for BeliefPolicy {
    type State = BeliefState;

    fn num_actions(&self) -> usize {
        self.model.num_actions()
    }

    fn start(&self, o: usize) -> BeliefState {
        match init_belief(&self.model, o) {
            Ok(b) => BeliefState { depth: 0, key: Some(b.key()), belief: Some(Arc::new(b)) },
            Err(_) => BeliefState { depth: 0, key: None, belief: None },
        }
    }

    fn probs(&self, state: &BeliefState, out: &mut [f64]) {
        out.fill(0.0);
        let a = state.belief.as_ref().map_or(0, |b| self.action(state.depth, b));
        out[a] = 1.0;
    }

    fn advance(&self, state: &BeliefState, a: usize, o: usize, r: f64) -> BeliefState {
        let next = state.belief.as_ref().and_then(|b| update_belief(&self.model, b, a, o, r).ok());
        BeliefState { depth: state.depth + 1, key: next.as_ref().map(ExactBelief::key), belief: next.map(Arc::new) }
    }
}

/// Backward induction over the belief tree with belief deduplication.
pub fn solve_pomdp_optimal(model: &Arc<PomdpModel>, budget: u64) -> Result<(BeliefPolicy, ValueReport)> {
    let mut memo = Memo::new();
    let (mut value, mut undiscounted) = (0.0, 0.0);
    {
        let mut solver = Solver { model, memo: &mut memo, budget, expanded: 0 };
        for (o, p) in initial_observations(model) {
            let b = init_belief(model, o)?;
            let (v, u) = solver.value(0, &b)?;
            value += p * v;
            undiscounted += p * u;
        }
    }
    let report = ValueReport {
        value,
        undiscounted,
        stderr: None,
        nodes_expanded: memo.len() as u64,
        horizon: model.horizon(),
        seed: None,
    };
    Ok((BeliefPolicy { model: Arc::clone(model), memo: Mutex::new(memo), budget }, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::build_bandit;

    #[test]
    fn bandit_optimum_matches_closed_form() {
        let m = Arc::new(build_bandit(0.9, 0.1, 4, 10, 0.9).unwrap());
        let (pol, rep) = solve_pomdp_optimal(&m, 1000).unwrap();
        assert!((rep.value - 5.861894039100).abs() < 1e-9);
        assert!((rep.undiscounted - 9.0).abs() < 1e-9);
        let mut out = [0.0; 4];
        let s = pol.start(0);
        pol.probs(&s, &mut out);
        assert_eq!(out, [1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn myopic_limit() {
        let m = Arc::new(build_bandit(0.7, 0.2, 3, 6, 0.0).unwrap());
        let (_, rep) = solve_pomdp_optimal(&m, 1000).unwrap();
        assert!((rep.value - 0.7).abs() < 1e-12);
    }

    #[test]
    fn budget_is_enforced() {
        let m = Arc::new(build_bandit(0.9, 0.1, 4, 10, 0.9).unwrap());
        assert!(matches!(solve_pomdp_optimal(&m, 3), Err(Error::BudgetExceeded { .. })));
    }
}
