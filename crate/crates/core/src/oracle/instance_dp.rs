use std::collections::HashMap;

use super::ValueReport;
use crate::error::{Error, Result};
use crate::instance::{InstanceSet, InstanceTree, NodeRecord};
use crate::policy::HistoryPolicy;

/// Largest set handled by the bitmask information state.
pub const MAX_SET_SIZE: usize = 64;

#[derive(Clone, Copy, Debug)]
struct Entry {
    value: f64,
    undiscounted: f64,
    action: usize,
}

type Table = HashMap<(u64, u64), Entry>;

fn extend_prefix(prefix: u64, num_actions: usize, action: usize) -> Result<u64> {
    prefix
        .checked_mul(num_actions as u64)
        .and_then(|p| p.checked_add(action as u64 + 1))
        .ok_or_else(|| Error::InvalidParameter("action prefix id overflows 64 bits".into()))
}

struct Group<N> {
    reward_index: usize,
    observation: usize,
    reward: f64,
    terminal: bool,
    mask: u64,
    nodes: Vec<(N, NodeRecord)>,
}

struct Solver<'a, T: InstanceTree> {
    set: &'a InstanceSet<T>,
    table: Table,
    budget: u64,
    expanded: u64,
}

impl<T: InstanceTree> Solver<'_, T> {
    fn value(&mut self, depth: usize, prefix: u64, mask: u64, nodes: &[(T::Node, NodeRecord)]) -> Result<(f64, f64)> {
        let model = self.set.instances[0].model();
        if depth >= model.horizon() {
            return Ok((0.0, 0.0));
        }
        self.expanded += 1;
        if self.expanded > self.budget {
            return Err(Error::BudgetExceeded { expanded: self.expanded, budget: self.budget });
        }
        let members: Vec<usize> = (0..64).filter(|i| mask >> i & 1 == 1).collect();
        let gamma = model.discount();
        let total = members.len() as f64;
        let mut best = Entry { value: f64::NEG_INFINITY, undiscounted: 0.0, action: 0 };
        for a in 0..model.num_actions() {
            let mut groups: Vec<Group<T::Node>> = Vec::new();
            for (&m, (node, rec)) in members.iter().zip(nodes) {
                let (cn, cr) = self.set.instances[m].child(*node, rec, depth + 1, a);
                match groups.iter_mut().find(|g| g.reward_index == cr.reward_index && g.observation == cr.observation) {
                    Some(g) => {
                        g.mask |= 1 << m;
                        g.nodes.push((cn, cr));
                    }
                    None => groups.push(Group {
                        reward_index: cr.reward_index,
                        observation: cr.observation,
                        reward: cr.reward,
                        terminal: cr.terminal,
                        mask: 1 << m,
                        nodes: vec![(cn, cr)],
                    }),
                }
            }
            let child_prefix = extend_prefix(prefix, model.num_actions(), a)?;
            let (mut q, mut u) = (0.0, 0.0);
            for g in &groups {
                let w = g.nodes.len() as f64 / total;
                let (v, x) = if g.terminal { (0.0, 0.0) } else { self.value(depth + 1, child_prefix, g.mask, &g.nodes)? };
                q += w * (g.reward + gamma * v);
                u += w * (g.reward + x);
            }
            if q > best.value {
                best = Entry { value: q, undiscounted: u, action: a };
            }
        }
        self.table.insert((prefix, mask), best);
        Ok((best.value, best.undiscounted))
    }
}

/// Optimal history policy for a finite instance set, indexed by
/// `(action prefix, compatible-instance mask)`.
pub struct InstanceOptimalPolicy<'a, T: InstanceTree> {
    set: &'a InstanceSet<T>,
    table: Table,
}

/// Actions taken so far and the instances still compatible.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct IpState {
    actions: Vec<usize>,
    mask: u64,
}

impl IpState {
    pub fn mask(&self) -> u64 {
        self.mask
    }
}

impl<T: InstanceTree> InstanceOptimalPolicy<'_, T> {
    pub fn table_len(&self) -> usize {
        self.table.len()
    }

    fn prefix_id(&self, actions: &[usize]) -> Option<u64> {
        let a_n = self.set.instances[0].model().num_actions();
        actions.iter().try_fold(0u64, |p, &a| extend_prefix(p, a_n, a).ok())
    }
}

impl<T: InstanceTree> HistoryPolicy for InstanceOptimalPolicy<'_, T> {
    type State = IpState;

    fn num_actions(&self) -> usize {
        self.set.instances[0].model().num_actions()
    }

    fn start(&self, o: usize) -> IpState {
        let mask = self
            .set
            .instances
            .iter()
            .enumerate()
            .filter(|(_, i)| i.root().1.observation == o)
            .fold(0u64, |m, (i, _)| m | 1 << i);
        IpState { actions: Vec::new(), mask }
    }

    /// Once no instance is compatible the policy falls back to action 0.
    fn probs(&self, state: &IpState, out: &mut [f64]) {
        out.fill(0.0);
        let a = self
            .prefix_id(&state.actions)
            .and_then(|p| self.table.get(&(p, state.mask)))
            .map_or(0, |e| e.action);
        out[a] = 1.0;
    }

    fn advance(&self, state: &IpState, a: usize, o: usize, r: f64) -> IpState {
        let mut actions = state.actions.clone();
        actions.push(a);
        let mut mask = 0;
        for i in (0..self.set.len()).filter(|i| state.mask >> i & 1 == 1) {
            if let Ok(path) = self.set.instances[i].path(&actions) {
                let last = path[path.len() - 1];
                if last.observation == o && last.reward == r {
                    mask |= 1 << i;
                }
            }
        }
        IpState { actions, mask }
    }
}

/// Backward induction over information states `(action prefix, compatible
/// subset)` of a finite instance set.
pub fn solve_instance_optimal<T: InstanceTree>(set: &InstanceSet<T>, budget: u64) -> Result<(InstanceOptimalPolicy<'_, T>, ValueReport)> {
    if set.is_empty() || set.len() > MAX_SET_SIZE {
        return Err(Error::InvalidParameter(format!("instance set size {} outside 1..={MAX_SET_SIZE}", set.len())));
    }
    let model = set.instances[0].model();
    let mut solver = Solver { set, table: Table::new(), budget, expanded: 0 };
    let mut roots: Vec<(usize, u64, Vec<(T::Node, NodeRecord)>)> = Vec::new();
    for (i, inst) in set.instances.iter().enumerate() {
        let (n, rec) = inst.root();
        match roots.iter_mut().find(|g| g.0 == rec.observation) {
            Some(g) => {
                g.1 |= 1 << i;
                g.2.push((n, rec));
            }
            None => roots.push((rec.observation, 1 << i, vec![(n, rec)])),
        }
    }
    let (mut value, mut undiscounted) = (0.0, 0.0);
    for (_, mask, nodes) in &roots {
        let w = nodes.len() as f64 / set.len() as f64;
        if nodes[0].1.terminal {
            continue;
        }
        let (v, u) = solver.value(0, 0, *mask, nodes)?;
        value += w * v;
        undiscounted += w * u;
    }
    let report = ValueReport {
        value,
        undiscounted,
        stderr: None,
        nodes_expanded: solver.table.len() as u64,
        horizon: model.horizon(),
        seed: Some(set.set_seed),
    };
    Ok((InstanceOptimalPolicy { set, table: solver.table }, report))
}
