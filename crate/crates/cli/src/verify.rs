//! `verify` targets: each maps onto one or more core verification reports.

use clap::ValueEnum;
use iape_core::iape::{gradient_check, verify_eq15_degenerate, EvalConfig, IapeLearner, TrainConfig};
use iape_core::instance::{verify_error_decay, verify_expected_transition};
use iape_core::oracle::{
    bandit_closed_forms, verify_generalization_bound, verify_state_vs_instance, verify_unbiased_value, BoundLearner, ConstantLearner, Lemma3Options,
    MemorizingLearner,
};
use iape_core::policy::ConstantPolicy;
use iape_core::report::VerificationReport;
use iape_core::seeding::derive_seed;
use serde::{Deserialize, Serialize};

use crate::config::{EnvKind, RunConfig};
use crate::error::{CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum VerifyTarget {
    Lemma1,
    Corollary1,
    Lemma2,
    Lemma3,
    Lemma4,
    Gradcheck,
    Eq15Degenerate,
}

impl VerifyTarget {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Lemma1 => "lemma1",
            Self::Corollary1 => "corollary1",
            Self::Lemma2 => "lemma2",
            Self::Lemma3 => "lemma3",
            Self::Lemma4 => "lemma4",
            Self::Gradcheck => "gradcheck",
            Self::Eq15Degenerate => "eq15-degenerate",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetReport {
    pub target: VerifyTarget,
    pub env: EnvKind,
    pub pass: bool,
    pub reports: Vec<VerificationReport>,
}

pub fn run_verify(target: VerifyTarget, cfg: &RunConfig) -> CliResult<TargetReport> {
    let v = &cfg.verify;
    let seed = |i: u64| derive_seed(cfg.seed, target.as_str(), i);
    let mut reports = Vec::new();
    match target {
        VerifyTarget::Lemma1 => {
            let model = cfg.env.build()?;
            let a = v.lemma1.action;
            if a >= model.num_actions() {
                return Err(CliError::Config(format!("[verify.lemma1] action {a} out of range")));
            }
            reports.push(verify_expected_transition(&model, &[a], v.lemma1.n_instances, seed(0))?);
            reports.push(verify_error_decay(&model, &[a], &v.lemma1.decay_sizes, v.lemma1.repeats, seed(1))?);
        }
        VerifyTarget::Corollary1 => {
            let model = cfg.env.build()?;
            let actions = v.corollary1.actions_for(cfg.env.kind);
            if actions.iter().any(|a| *a >= model.num_actions()) {
                return Err(CliError::Config("[verify.corollary1] action out of range".into()));
            }
            reports.push(verify_expected_transition(&model, &actions, v.corollary1.n_instances, seed(0))?);
        }
        VerifyTarget::Lemma2 => {
            let model = cfg.env.build()?;
            let uniform = ConstantPolicy::uniform(model.num_actions());
            reports.push(verify_unbiased_value(&model, &uniform, v.lemma2.set_size, v.lemma2.n_sets, seed(0), v.budget)?);
        }
        VerifyTarget::Lemma3 => {
            let model = cfg.env.build()?;
            let mut opts = Lemma3Options {
                n_sets: v.lemma3.n_sets,
                set_size: v.lemma3.set_size,
                seed: seed(0),
                budget: v.budget,
                lower_bound: v.lemma3.lower_bound,
                state_optimal_reference: v.lemma3.state_optimal_reference,
            };
            if cfg.env.kind == EnvKind::Bandit {
                let b = &cfg.env.bandit;
                let forms = bandit_closed_forms(b.p_hi, b.p_lo, b.num_actions, b.horizon, b.discount)?;
                // Closed-form lower bound holds for size-1 sets only.
                if opts.set_size == 1 {
                    opts.lower_bound = opts.lower_bound.or(Some(forms.v_instance_lower_bound));
                }
                opts.state_optimal_reference = opts.state_optimal_reference.or(Some(forms.v_state_opt));
            }
            reports.push(verify_state_vs_instance(&model, &opts)?);
        }
        VerifyTarget::Lemma4 => {
            let l4 = &v.lemma4;
            let model = cfg.env.build_with_horizon(Some(l4.horizon))?;
            let iape = IapeLearner {
                config: TrainConfig {
                    seed: cfg.seed,
                    total_steps: l4.iape_steps,
                    hidden: l4.iape_hidden,
                    eval: EvalConfig { every: l4.iape_steps.max(1), test_episodes: 20, ..EvalConfig::default() },
                    ..cfg.train.clone()
                },
            };
            let constant = ConstantLearner { action: l4.constant_action };
            let learners: [&dyn BoundLearner; 3] = [&constant, &MemorizingLearner, &iape];
            for (j, &n) in l4.set_sizes.iter().enumerate() {
                for (k, learner) in learners.iter().enumerate() {
                    let s = seed((j * learners.len() + k) as u64);
                    reports.push(verify_generalization_bound(&model, n, *learner, l4.universe_cap, v.budget, s)?);
                }
            }
        }
        VerifyTarget::Gradcheck => reports.push(gradient_check(v.gradcheck.draws, seed(0))?),
        VerifyTarget::Eq15Degenerate => {
            let model = cfg.env.build()?;
            reports.push(verify_eq15_degenerate(&model, v.eq15.segments, seed(0))?);
        }
    }
    let pass = !reports.is_empty() && reports.iter().all(|r| r.pass);
    Ok(TargetReport { target, env: cfg.env.kind, pass, reports })
}
