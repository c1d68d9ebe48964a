//! `train` and `continual` commands.

use std::path::Path;
use std::sync::Arc;

use iape_core::env::PomdpModel;
use iape_core::iape::{continual_shift, train, training_pool, ContinualRow, LogRow, TrainConfig, TrainOutcome};
use iape_core::instance::InstanceSet;
use iape_core::learner::Checkpoint;
use iape_core::metrics::series_svg;
use iape_core::seeding::derive_seed;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::output::OutputDir;

/// Run-log CSV row.
#[derive(Serialize)]
struct LogCsvRow<'a> {
    step: u64,
    algo: &'a str,
    seed: u64,
    train_return_mean: f64,
    test_return_mean: f64,
    #[serde(rename = "l_V")]
    l_v: f64,
    l_pi: f64,
    grad_norm: f64,
}

pub fn write_log(out: &mut OutputDir, name: &str, log: &[LogRow]) -> CliResult<()> {
    let rows: Vec<_> = log
        .iter()
        .map(|r| LogCsvRow {
            step: r.step,
            algo: r.algo.as_str(),
            seed: r.seed,
            train_return_mean: r.train_return_mean,
            test_return_mean: r.test_return_mean,
            l_v: r.l_v,
            l_pi: r.l_pi,
            grad_norm: r.grad_norm,
        })
        .collect();
    out.write_csv(name, &rows)?;
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
pub struct TrainSummary {
    pub algo: String,
    pub seed: u64,
    pub steps: u64,
    pub final_row: Option<LogRow>,
}

pub fn run_train(cfg: &RunConfig, out: &mut OutputDir) -> CliResult<(TrainOutcome, TrainSummary)> {
    let model = cfg.env.build()?;
    let tc = cfg.train_config()?;
    let outcome = train(&tc, &model)?;
    out.write_bytes("checkpoint.json", outcome.checkpoint.to_json()?.as_bytes())?;
    write_log(out, "log.csv", &outcome.log)?;
    let summary = TrainSummary { algo: tc.algo.to_string(), seed: tc.seed, steps: outcome.checkpoint.step, final_row: outcome.log.last().cloned() };
    Ok((outcome, summary))
}

/// Loads a checkpoint written by `train` and checks it against `model`.
/// Any mismatch is a configuration error.
pub fn load_checkpoint(path: &Path, model: &PomdpModel) -> CliResult<(Checkpoint, TrainConfig)> {
    let ck = Checkpoint::load(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let cfg: TrainConfig = ck
        .extra
        .get("config")
        .cloned()
        .map(serde_json::from_value)
        .transpose()
        .map_err(|e| CliError::Config(format!("{}: bad embedded config: {e}", path.display())))?
        .ok_or_else(|| CliError::Config(format!("{}: checkpoint carries no training config", path.display())))?;
    let trained_on = ck.extra.get("model").and_then(|m| m.as_str()).unwrap_or("");
    let arch = ck.architecture;
    if trained_on != model.name() || arch.num_observations != model.num_observations() || arch.num_actions != model.num_actions() {
        return Err(CliError::Config(format!(
            "{}: checkpoint was trained on {trained_on:?}, configured env is {:?}",
            path.display(),
            model.name()
        )));
    }
    Ok((ck, cfg))
}

#[derive(Clone, Debug, Serialize)]
pub struct ContinualSummary {
    pub algo: String,
    pub new_pool_seed: u64,
    pub steps: u64,
    pub final_row: Option<ContinualRow>,
}

pub fn continual_pool_seed(cfg: &RunConfig) -> u64 {
    cfg.continual.new_pool_seed.unwrap_or_else(|| derive_seed(cfg.seed, "continual-pool", 0))
}

pub fn run_continual(cfg: &RunConfig, checkpoint: &Path, out: &mut OutputDir) -> CliResult<(Vec<ContinualRow>, ContinualSummary)> {
    let model: Arc<PomdpModel> = cfg.env.build()?;
    let (ck, trained) = load_checkpoint(checkpoint, &model)?;
    let tc = TrainConfig { total_steps: cfg.continual.total_steps, ..trained.clone() };
    tc.validate().map_err(|e| CliError::Config(format!("[continual]: {e}")))?;
    let old_pool = training_pool(&trained, &model);
    let new_seed = continual_pool_seed(cfg);
    let new_pool = InstanceSet::sample(&model, new_seed, trained.pool_size());
    let (outcome, rows) = continual_shift(&ck, &tc, &model, &old_pool, &new_pool)?;
    out.write_csv("continual.csv", &rows)?;
    let series: Vec<(String, Vec<(f64, f64)>)> = [("old_train", 0), ("new_train", 1), ("test", 2)]
        .into_iter()
        .map(|(name, k)| {
            let pts = rows.iter().map(|r| (r.step as f64, [r.old_train, r.new_train, r.test][k])).collect();
            (name.to_string(), pts)
        })
        .collect();
    out.write_bytes("continual.svg", series_svg("continual", &series).as_bytes())?;
    out.write_bytes("checkpoint.json", outcome.checkpoint.to_json()?.as_bytes())?;
    write_log(out, "log.csv", &outcome.log)?;
    let summary = ContinualSummary { algo: tc.algo.to_string(), new_pool_seed: new_seed, steps: outcome.checkpoint.step, final_row: rows.last().cloned() };
    Ok((rows, summary))
}
