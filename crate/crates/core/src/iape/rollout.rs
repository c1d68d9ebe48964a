use std::ops::Range;
use std::sync::Arc;

use rand::Rng;
use rand_xoshiro::Xoshiro256PlusPlus;
use rayon::prelude::*;
use serde::Serialize;

use crate::env::PomdpModel;
use crate::instance::{Instance, InstanceSet, InstanceTree, NodeRecord};
use crate::learner::{consensus_probs, encode_step, policy_probs, Params};
use crate::policy::sample_action;
use crate::seeding::named_stream;

/// Which distribution drives data collection.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Behavior {
    Consensus,
    SubsetSpecific,
}

/// Contiguous steps of one episode. Input `j` is `(o_j, r_j, a_{j-1})`;
/// action `j` was taken after input `j`, and the last input holds the
/// observation reached by the last action.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Segment {
    pub subset: usize,
    pub instance: u64,
    pub start_hidden: Vec<f64>,
    pub inputs: Vec<(usize, f64, usize)>,
    pub actions: Vec<usize>,
    pub behavior_probs: Vec<f64>,
    /// The episode ended (terminal state or horizon) at the last input.
    pub ended: bool,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// `r_{j+1}` for each action `j`.
    pub fn rewards(&self) -> Vec<f64> {
        self.inputs[1..].iter().map(|x| x.1).collect()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct RolloutBatch {
    pub segments: Vec<Segment>,
}

impl RolloutBatch {
    pub fn steps(&self) -> usize {
        self.segments.iter().map(Segment::len).sum()
    }
}

enum Cursor<N> {
    Pool { index: usize, node: N },
    Fresh { inst: Box<Instance>, node: u64 },
}

struct Live<N> {
    cursor: Cursor<N>,
    record: NodeRecord,
    depth: usize,
    subset: usize,
    instance: u64,
    prev_hidden: Vec<f64>,
    pending: (usize, f64, usize),
}

/// Persistent collector: an episode in progress survives across segments.
pub struct Actor<N> {
    rng: Xoshiro256PlusPlus,
    live: Option<Live<N>>,
    episodes: u64,
}

impl<N> Actor<N> {
    pub fn new(seed: u64, slot: usize) -> Self {
        Self { rng: named_stream(seed, "actor", slot as u64), live: None, episodes: 0 }
    }

    pub fn episodes(&self) -> u64 {
        self.episodes
    }
}

/// Instance source of a run: fixed subsets of a pool, or a fresh
/// instance per episode.
pub enum Assignment<'a, T> {
    Subsets { pool: &'a InstanceSet<T>, subsets: Vec<Range<usize>> },
    Fresh { model: Arc<PomdpModel> },
}

impl<'a, T> Assignment<'a, T> {
    /// `M` contiguous equal chunks of the pool.
    pub fn chunks(pool: &'a InstanceSet<T>, m: usize) -> Self {
        let per = pool.instances.len() / m;
        Assignment::Subsets { pool, subsets: (0..m).map(|k| k * per..(k + 1) * per).collect() }
    }
}

fn start_episode<T: InstanceTree>(actor: &mut Actor<T::Node>, assignment: &Assignment<'_, T>, hidden: usize) -> Live<T::Node> {
    actor.episodes += 1;
    let (cursor, record, subset, instance) = match assignment {
        Assignment::Subsets { pool, subsets } => {
            let m = actor.rng.gen_range(0..subsets.len());
            let index = actor.rng.gen_range(subsets[m].clone());
            let (node, record) = pool.instances[index].root();
            (Cursor::Pool { index, node }, record, m, index as u64)
        }
        Assignment::Fresh { model } => {
            let seed: u64 = actor.rng.gen();
            let inst = Box::new(Instance::spawn(model, seed));
            let (node, record) = inst.root();
            (Cursor::Fresh { inst, node }, record, 0, seed)
        }
    };
    let none = match assignment {
        Assignment::Subsets { pool, .. } => pool.instances[0].model().no_action(),
        Assignment::Fresh { model } => model.no_action(),
    };
    Live { cursor, record, depth: 0, subset, instance, prev_hidden: vec![0.0; hidden], pending: (record.observation, 0.0, none) }
}

fn collect_segment<T: InstanceTree>(actor: &mut Actor<T::Node>, assignment: &Assignment<'_, T>, behavior: Behavior, params: &Params, n: usize) -> Segment {
    let arch = params.arch;
    let mut live = match actor.live.take() {
        Some(l) => l,
        None => start_episode(actor, assignment, arch.hidden),
    };
    let horizon = match &live.cursor {
        Cursor::Pool { .. } => match assignment {
            Assignment::Subsets { pool, .. } => pool.instances[0].model().horizon(),
            Assignment::Fresh { model } => model.horizon(),
        },
        Cursor::Fresh { inst, .. } => inst.model().horizon(),
    };
    let mut seg = Segment {
        subset: live.subset,
        instance: live.instance,
        start_hidden: live.prev_hidden.clone(),
        inputs: vec![live.pending],
        actions: Vec::with_capacity(n),
        behavior_probs: Vec::with_capacity(n),
        ended: false,
    };
    if live.record.terminal {
        seg.ended = true;
        return seg;
    }
    let mut probs = vec![0.0; arch.num_actions];
    while seg.actions.len() < n {
        let (o, r, pa) = live.pending;
        let h = encode_step(params, o, r, pa, &live.prev_hidden).expect("inputs come from the model");
        match behavior {
            Behavior::Consensus => consensus_probs(params, &h, &mut probs),
            Behavior::SubsetSpecific => policy_probs(params, live.subset, &h, &mut probs),
        }
        let a = sample_action(&probs, &mut actor.rng);
        live.depth += 1;
        let rec = match &mut live.cursor {
            Cursor::Pool { index, node } => {
                let Assignment::Subsets { pool, .. } = assignment else { unreachable!() };
                let (nn, rec) = pool.instances[*index].child(*node, &live.record, live.depth, a);
                *node = nn;
                rec
            }
            Cursor::Fresh { inst, node } => {
                let (nn, rec) = inst.child(*node, &live.record, live.depth, a);
                *node = nn;
                rec
            }
        };
        live.record = rec;
        live.prev_hidden = h;
        live.pending = (rec.observation, rec.reward, a);
        seg.actions.push(a);
        seg.behavior_probs.push(probs[a]);
        seg.inputs.push(live.pending);
        if rec.terminal || live.depth >= horizon {
            seg.ended = true;
            return seg;
        }
    }
    actor.live = Some(live);
    seg
}

/// One segment of at most `n` steps per actor, collected in parallel with
/// per-actor randomness.
pub fn collect_rollout<T: InstanceTree>(
    actors: &mut [Actor<T::Node>],
    assignment: &Assignment<'_, T>,
    behavior: Behavior,
    params: &Params,
    n: usize,
) -> RolloutBatch
where
    T::Node: Send,
{
    let segments = actors.par_iter_mut().map(|a| collect_segment(a, assignment, behavior, params, n)).collect();
    RolloutBatch { segments }
}
