//! Command-line driver: run configuration, commands, run directories and
//! manifests.
//!
//! Exit codes: 0 pass, 1 failed check or runtime error, 2 usage or
//! configuration error.

pub mod config;
pub mod error;
pub mod evaluate;
pub mod manifest;
pub mod output;
pub mod train;
pub mod verify;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use iape_core::instance::{tree_json, InstanceSet};
use serde_json::{json, Value};

use crate::config::{EnvKind, RunConfig};
use crate::error::{CliError, CliResult};
use crate::evaluate::{evaluate, Candidate};
use crate::manifest::{now_unix_ms, Command, RunManifest, MANIFEST_NAME};
use crate::output::{write_atomic, OutputDir};
use crate::verify::{run_verify, VerifyTarget};

#[derive(Debug, Parser)]
#[command(name = "iape", version, about = "Instance-based POMDP verification and ensemble training")]
struct Cli {
    /// TOML run configuration; built-in defaults when absent.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Run directory (default `out/<command>`).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Root seed, overriding the config.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Worker threads, overriding the config (0 = one per core).
    #[arg(long, global = true, value_name = "N")]
    workers: Option<usize>,
    /// Print the default configuration as TOML and exit.
    #[arg(long)]
    dump_defaults: bool,
    #[command(subcommand)]
    command: Option<Cmd>,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Run an oracle verification and write `report.json`.
    Verify {
        target: VerifyTarget,
        /// Environment, overriding `env.kind`.
        #[arg(long)]
        env: Option<EnvKind>,
    },
    /// Train one agent; writes `checkpoint.json` and `log.csv`.
    Train,
    /// Compare checkpoints; writes `table.csv`, `evaluate.json` and histograms.
    Evaluate {
        #[arg(long = "checkpoint", required = true, value_name = "PATH")]
        checkpoints: Vec<PathBuf>,
        /// Time-to-reward baseline (default: the `base` checkpoint of equal seed).
        #[arg(long, value_name = "PATH")]
        baseline: Option<PathBuf>,
        /// Signature reference (default: the `inf` checkpoint of equal seed).
        #[arg(long, value_name = "PATH")]
        reference: Option<PathBuf>,
    },
    /// Continue a checkpoint on a fresh pool; writes `continual.csv` and `continual.svg`.
    Continual {
        #[arg(long, value_name = "PATH")]
        checkpoint: PathBuf,
    },
    /// Write one instance tree, truncated to `depth`, as `tree.json`.
    DumpTree {
        #[arg(long, default_value_t = 0)]
        set_seed: u64,
        #[arg(long, default_value_t = 0)]
        index: usize,
        #[arg(long, default_value_t = 3)]
        depth: usize,
    },
    /// Write the configured model tables as `model.json`.
    DumpModel,
    /// Re-run the command recorded in a `run.json` into `--out`.
    Replay { manifest: PathBuf },
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn canonical(path: &Path) -> CliResult<PathBuf> {
    std::fs::canonicalize(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn dispatch(cli: Cli) -> CliResult<i32> {
    if cli.dump_defaults {
        print!("{}", RunConfig::default().to_toml());
        return Ok(0);
    }
    let Some(cmd) = cli.command else {
        return Err(CliError::Usage("a subcommand is required (see --help)".into()));
    };
    if let Cmd::Replay { manifest } = &cmd {
        let m = RunManifest::load(manifest)?;
        let out = cli.out.ok_or_else(|| CliError::Usage("replay needs --out".into()))?;
        let mut config = m.config;
        if let Some(w) = cli.workers {
            config.workers = w;
        }
        return run_command(&m.command, &config, &out);
    }

    let mut config = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        config.seed = s;
    }
    if let Some(w) = cli.workers {
        config.workers = w;
    }
    let command = match cmd {
        Cmd::Verify { target, env } => {
            if let Some(k) = env {
                config.env.kind = k;
            }
            Command::Verify { target }
        }
        Cmd::Train => Command::Train,
        Cmd::Evaluate { checkpoints, baseline, reference } => Command::Evaluate {
            checkpoints: checkpoints.iter().map(|p| canonical(p)).collect::<CliResult<_>>()?,
            baseline: baseline.as_deref().map(canonical).transpose()?,
            reference: reference.as_deref().map(canonical).transpose()?,
        },
        Cmd::Continual { checkpoint } => Command::Continual { checkpoint: canonical(&checkpoint)? },
        Cmd::DumpTree { set_seed, index, depth } => Command::DumpTree { set_seed, index, depth },
        Cmd::DumpModel => Command::DumpModel,
        Cmd::Replay { .. } => unreachable!("handled above"),
    };
    let out = cli.out.unwrap_or_else(|| Path::new("out").join(command.name()));
    run_command(&command, &config, &out)
}

/// Runs a resolved command in `out_dir` and writes its manifest.
pub fn run_command(command: &Command, config: &RunConfig, out_dir: &Path) -> CliResult<i32> {
    if config.workers > 0 {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(config.workers).build_global();
    }
    let started = now_unix_ms();
    let mut out = OutputDir::create(out_dir)?;
    let (pass, results) = execute(command, config, &mut out)?;
    let exit_code = if pass { 0 } else { 1 };
    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        command: command.clone(),
        config: config.clone(),
        seed: config.seed,
        workers: config.workers,
        started_unix_ms: started,
        finished_unix_ms: now_unix_ms(),
        outputs: out.written().to_vec(),
        pass,
        exit_code,
        results,
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    write_atomic(&out.path().join(MANIFEST_NAME), text.as_bytes())?;
    println!("{} {}: {}", command.name(), out.path().display(), if pass { "PASS" } else { "FAIL" });
    Ok(exit_code)
}

fn load_candidate(path: &Path, model: &iape_core::env::PomdpModel) -> CliResult<Candidate> {
    let (ck, config) = train::load_checkpoint(path, model)?;
    let params = ck.params().map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    Ok(Candidate { params, config })
}

fn execute(command: &Command, config: &RunConfig, out: &mut OutputDir) -> CliResult<(bool, Value)> {
    match command {
        Command::Verify { target } => {
            let report = run_verify(*target, config)?;
            out.write_json("report.json", &report)?;
            for r in &report.reports {
                println!(
                    "  {:<34} value {:>14.9} reference {:>14.9} tolerance {:.3e} {}",
                    r.check,
                    r.value,
                    r.reference,
                    r.tolerance,
                    if r.pass { "pass" } else { "FAIL" }
                );
            }
            Ok((report.pass, serde_json::to_value(&report)?))
        }
        Command::Train => {
            let (_, summary) = train::run_train(config, out)?;
            Ok((true, serde_json::to_value(summary)?))
        }
        Command::Evaluate { checkpoints, baseline, reference } => {
            let model = config.env.build()?;
            let cands: Vec<Candidate> = checkpoints.iter().map(|p| load_candidate(p, &model)).collect::<CliResult<_>>()?;
            let baseline = baseline.as_deref().map(|p| load_candidate(p, &model)).transpose()?;
            let reference = reference.as_deref().map(|p| load_candidate(p, &model)).transpose()?;
            let eval = evaluate(&model, &cands, baseline, reference, &config.evaluate, config.seed)?;
            eval.write(&cands, &config.evaluate, out)?;
            Ok((true, json!({ "rows": eval.rows })))
        }
        Command::Continual { checkpoint } => {
            let (_, summary) = train::run_continual(config, checkpoint, out)?;
            Ok((true, serde_json::to_value(summary)?))
        }
        Command::DumpTree { set_seed, index, depth } => {
            let model = config.env.build()?;
            let set = InstanceSet::sample(&model, *set_seed, index + 1);
            let tree = tree_json(&set.instances[*index], *depth);
            out.write_json("tree.json", &tree)?;
            Ok((true, json!({ "set_seed": set_seed, "index": index, "depth": depth })))
        }
        Command::DumpModel => {
            let model = config.env.build()?;
            let mut text = model.to_json()?;
            text.push('\n');
            out.write_bytes("model.json", text.as_bytes())?;
            Ok((true, json!({ "model": model.name() })))
        }
    }
}
