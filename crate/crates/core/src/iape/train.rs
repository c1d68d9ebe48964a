use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::PomdpModel;
use crate::error::{Error, Result};
use crate::instance::{InstanceSet, InstanceTree};
use crate::learner::{AdamState, Architecture, Checkpoint, Params};
use crate::oracle::{evaluate_policy_on_model, run_instance_episode, EvalMode};
use crate::policy::{Greedy, HistoryPolicy};
use crate::seeding::{derive_seed, named_stream};

use super::config::{Algo, TrainConfig};
use super::loss::{compute_losses, LossReport};
use super::policy::{LearnedPolicy, PolicyHead};
use super::rollout::{collect_rollout, Actor, Assignment, Behavior};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub step: u64,
    pub algo: Algo,
    pub seed: u64,
    pub train_return_mean: f64,
    pub test_return_mean: f64,
    pub l_v: f64,
    pub l_pi: f64,
    pub grad_norm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContinualRow {
    pub step: u64,
    pub old_train: f64,
    pub new_train: f64,
    pub test: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub log: Vec<LogRow>,
}

impl TrainOutcome {
    pub fn params(&self) -> Params {
        Params { arch: self.checkpoint.architecture, data: self.checkpoint.params.clone() }
    }

    pub fn policy(&self) -> LearnedPolicy {
        LearnedPolicy::new(self.params(), PolicyHead::Consensus)
    }
}

/// Mean discounted return over every pool instance, `episodes` each, with
/// stream `(seed, "pool-eval", i * episodes + e)`.
pub fn evaluate_pool<T: InstanceTree, P: HistoryPolicy>(pool: &InstanceSet<T>, policy: &P, episodes: usize, seed: u64) -> f64 {
    let per: Vec<f64> = pool
        .instances
        .par_iter()
        .enumerate()
        .map(|(i, inst)| {
            (0..episodes)
                .map(|e| {
                    let mut rng = named_stream(seed, "pool-eval", (i * episodes + e) as u64);
                    run_instance_episode(inst, policy, &mut rng).discounted
                })
                .sum::<f64>()
        })
        .collect();
    per.iter().sum::<f64>() / (pool.len() * episodes).max(1) as f64
}

fn eval_returns<T: InstanceTree>(cfg: &TrainConfig, model: &PomdpModel, params: &Params, pools: &[&InstanceSet<T>]) -> Result<(Vec<f64>, f64)> {
    fn go<T: InstanceTree, P: HistoryPolicy>(cfg: &TrainConfig, model: &PomdpModel, p: &P, pools: &[&InstanceSet<T>]) -> Result<(Vec<f64>, f64)> {
        let eps = if cfg.eval.greedy { 1 } else { cfg.eval.episodes_per_train_instance };
        let train = pools.iter().map(|pool| evaluate_pool(pool, p, eps, derive_seed(cfg.seed, "train-eval", 0))).collect();
        let test = evaluate_policy_on_model(
            model,
            p,
            EvalMode::MonteCarlo { episodes: cfg.eval.test_episodes, seed: derive_seed(cfg.seed, "test-eval", 0) },
        )?;
        Ok((train, test.value))
    }
    let policy = LearnedPolicy::new(params.clone(), PolicyHead::Consensus);
    if cfg.eval.greedy {
        go(cfg, model, &Greedy(policy), pools)
    } else {
        go(cfg, model, &policy, pools)
    }
}

fn architecture(cfg: &TrainConfig, model: &PomdpModel) -> Architecture {
    Architecture {
        num_observations: model.num_observations(),
        num_actions: model.num_actions(),
        hidden: cfg.hidden,
        heads: cfg.subsets,
        reward_scale: 1.0 / model.r_max(),
    }
}

#[derive(Default)]
struct Running {
    l_v: f64,
    l_pi: f64,
    grad_norm: f64,
    updates: usize,
}

impl Running {
    fn add(&mut self, r: &LossReport) {
        self.l_v += r.l_v;
        self.l_pi += r.l_pi;
        self.grad_norm += r.grad_norm;
        self.updates += 1;
    }

    fn take(&mut self) -> (f64, f64, f64) {
        let n = self.updates.max(1) as f64;
        let out = (self.l_v / n, self.l_pi / n, self.grad_norm / n);
        *self = Running::default();
        out
    }
}

/// Collect, differentiate and step until `budget` more environment steps
/// have been taken. `eval` is called at the start, whenever the step count
/// crosses a multiple of `cfg.eval.every`, and at the end.
fn run_loop<T: InstanceTree>(
    cfg: &TrainConfig,
    model: &PomdpModel,
    assignment: &Assignment<'_, T>,
    params: &mut Params,
    adam: &mut AdamState,
    start: u64,
    budget: u64,
    eval: &mut dyn FnMut(u64, &Params, (f64, f64, f64)) -> Result<()>,
) -> Result<u64>
where
    T::Node: Send,
{
    let gamma = cfg.gamma(model);
    let behavior = if cfg.algo == Algo::Eb { Behavior::SubsetSpecific } else { Behavior::Consensus };
    let actor_seed = derive_seed(cfg.seed, "actors", start);
    let mut actors: Vec<Actor<T::Node>> = (0..cfg.minibatch).map(|s| Actor::new(actor_seed, s)).collect();
    let mut running = Running::default();
    let mut step = start;
    eval(step, params, running.take())?;
    while step < start + budget {
        let batch = collect_rollout(&mut actors, assignment, behavior, params, cfg.rollout_len);
        let (report, grad) = compute_losses(&batch, params, cfg, gamma).map_err(|e| match e {
            Error::NonFinite(msg) => Error::NonFinite(format!("{msg} (environment step {step})")),
            other => other,
        })?;
        adam.update(&mut params.data, &grad, cfg.learning_rate)?;
        running.add(&report);
        let before = step;
        step += batch.steps() as u64;
        let done = step >= start + budget;
        if done || before / cfg.eval.every != step / cfg.eval.every {
            eval(step, params, running.take())?;
        }
        if batch.steps() == 0 {
            return Err(Error::Usage("rollout collected no steps; every instance starts terminal".into()));
        }
    }
    Ok(step)
}

fn checkpoint_for(cfg: &TrainConfig, model: &PomdpModel, params: &Params, adam: &AdamState, step: u64) -> Checkpoint {
    let mut c = Checkpoint::new(params, adam, cfg.seed, step);
    c.extra = serde_json::json!({ "config": cfg, "model": model.name() });
    c
}

fn initial_state(cfg: &TrainConfig, model: &PomdpModel, init: Option<&Checkpoint>) -> Result<(Params, AdamState, u64)> {
    let arch = architecture(cfg, model);
    match init {
        None => Ok((Params::init(arch, cfg.seed)?, AdamState::new(arch.len()), 0)),
        Some(c) => {
            let p = c.params()?;
            if p.arch != arch {
                return Err(Error::ShapeMismatch(format!("checkpoint architecture {:?} does not match {:?}", p.arch, arch)));
            }
            Ok((p, c.adam.clone(), c.step))
        }
    }
}

fn assignment_for<'a, T>(cfg: &TrainConfig, model: &Arc<PomdpModel>, pool: &'a InstanceSet<T>) -> Result<Assignment<'a, T>> {
    if cfg.algo == Algo::Inf {
        return Ok(Assignment::Fresh { model: Arc::clone(model) });
    }
    if pool.instances.len() != cfg.pool_size() {
        return Err(Error::InvalidParameter(format!("pool holds {} instances, config needs {}", pool.instances.len(), cfg.pool_size())));
    }
    Ok(Assignment::chunks(pool, cfg.subsets))
}

/// Pool used by [`train`]: `subsets * instances_per_subset` instances with
/// set seed `(pool_seed, "train-instances", 0)`.
pub fn training_pool(cfg: &TrainConfig, model: &Arc<PomdpModel>) -> InstanceSet {
    InstanceSet::sample(model, derive_seed(cfg.pool_seed(), "train-instances", 0), cfg.pool_size())
}

pub fn train(cfg: &TrainConfig, model: &Arc<PomdpModel>) -> Result<TrainOutcome> {
    cfg.validate()?;
    let pool = training_pool(cfg, model);
    train_on_pool(cfg, model, &pool, None)
}

/// Trains on an explicit pool (split into `M` contiguous subsets), starting
/// from `init` when given.
pub fn train_on_pool<T: InstanceTree>(cfg: &TrainConfig, model: &Arc<PomdpModel>, pool: &InstanceSet<T>, init: Option<&Checkpoint>) -> Result<TrainOutcome>
where
    T::Node: Send,
{
    cfg.validate()?;
    let assignment = assignment_for(cfg, model, pool)?;
    let (mut params, mut adam, start) = initial_state(cfg, model, init)?;
    let mut log = Vec::new();
    let mut eval = |step: u64, p: &Params, (l_v, l_pi, grad_norm): (f64, f64, f64)| -> Result<()> {
        let (train, test) = eval_returns(cfg, model, p, &[pool])?;
        log.push(LogRow { step, algo: cfg.algo, seed: cfg.seed, train_return_mean: train[0], test_return_mean: test, l_v, l_pi, grad_norm });
        Ok(())
    };
    let step = run_loop(cfg, model, &assignment, &mut params, &mut adam, start, cfg.total_steps, &mut eval)?;
    Ok(TrainOutcome { checkpoint: checkpoint_for(cfg, model, &params, &adam, step), log })
}

/// Continues a checkpoint on the pool it was trained on for `cfg.total_steps`.
pub fn resume(checkpoint: &Checkpoint, cfg: &TrainConfig, model: &Arc<PomdpModel>) -> Result<TrainOutcome> {
    let pool = training_pool(cfg, model);
    train_on_pool(cfg, model, &pool, Some(checkpoint))
}

/// Continues a checkpoint on `new_pool` for `cfg.total_steps`, logging
/// returns on the old pool, the new pool and fresh test episodes.
pub fn continual_shift<T: InstanceTree>(
    checkpoint: &Checkpoint,
    cfg: &TrainConfig,
    model: &Arc<PomdpModel>,
    old_pool: &InstanceSet<T>,
    new_pool: &InstanceSet<T>,
) -> Result<(TrainOutcome, Vec<ContinualRow>)>
where
    T::Node: Send,
{
    cfg.validate()?;
    let assignment = assignment_for(cfg, model, new_pool)?;
    let (mut params, mut adam, start) = initial_state(cfg, model, Some(checkpoint))?;
    let mut log = Vec::new();
    let mut rows = Vec::new();
    let mut eval = |step: u64, p: &Params, (l_v, l_pi, grad_norm): (f64, f64, f64)| -> Result<()> {
        let (train, test) = eval_returns(cfg, model, p, &[old_pool, new_pool])?;
        rows.push(ContinualRow { step, old_train: train[0], new_train: train[1], test });
        log.push(LogRow { step, algo: cfg.algo, seed: cfg.seed, train_return_mean: train[1], test_return_mean: test, l_v, l_pi, grad_norm });
        Ok(())
    };
    let step = run_loop(cfg, model, &assignment, &mut params, &mut adam, start, cfg.total_steps, &mut eval)?;
    Ok((TrainOutcome { checkpoint: checkpoint_for(cfg, model, &params, &adam, step), log }, rows))
}
