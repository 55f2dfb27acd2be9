//! `r1mq` command-line front end.
//!
//! Every command takes `--config <file>` with flat `key = value` lines.
//! Precedence is defaults, then the run file, then flags. Unknown keys and
//! flags are rejected. Exit codes: 0 success, 1 runtime failure, 2 usage or
//! configuration error.

pub mod ablate;
pub mod bench;
pub mod config;
pub mod regress;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::envs::{generate_dataset, parse_env_id, EnvKind, OfflineDataset, Tier};
use crate::error::Error;
use crate::numerics::RngStream;
use crate::offline_rl::{evaluate, train, TrainError, TrainState, TrainerConfig};
use crate::policy::GaussianPolicy;

use config::{load_config, options, ConfigEntry, Limit, UsizeList};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => m,
        }
    }
}

fn usage(e: Error) -> CliError {
    CliError::Usage(e.to_string())
}

fn runtime(e: Error) -> CliError {
    CliError::Runtime(e.to_string())
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "r1mq", version, about = "Rank-one MIMO Q-ensembles for offline RL")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train an actor-critic on an offline dataset.
    Train(TrainArgs),
    /// Roll out a saved policy and report its normalized score.
    Eval(EvalArgs),
    /// Generate a dataset from a scripted behaviour tier.
    GenData(GenDataArgs),
    /// Compare parameter counts and forward times against dense ensembles.
    Bench(BenchArgs),
    /// Fit a sinusoid and report head spread on and off the data range.
    Regress(RegressArgs),
    /// Sweep ensemble size or toggle the entropy and likelihood terms.
    Ablate(AblateArgs),
}

options! {
    /// Dataset and trainer settings shared by `train` and `ablate`.
    TrainOptions {
        /// Task id, optionally with a tier, e.g. `reach1d` or `reach1d-expert-v0`.
        env: String,
        tier: String,
        /// Load this JSONL dataset instead of generating one.
        dataset: PathBuf,
        /// Generated dataset size.
        transitions: usize,
        /// Seed for a generated dataset; defaults to `seed`.
        data_seed: u64,
        steps: usize,
        k: usize,
        beta: f64,
        gamma: f64,
        tau: f64,
        batch: usize,
        policy_delay: usize,
        seed: u64,
        critic_hidden: UsizeList,
        policy_hidden: UsizeList,
        critic_lr: f64,
        policy_lr: f64,
        alpha_lr: f64,
        /// Initial temperature.
        alpha: f64,
        /// Hold the temperature fixed at this value.
        fixed_alpha: f64,
        target_entropy: f64,
        log_every: usize,
        eval_every: usize,
        eval_episodes: usize,
        /// `|Q|` abort threshold, or `off`.
        divergence_threshold: Limit,
    }
}

options! {
    TrainOutput {
        /// Output directory for metrics and checkpoints.
        out: PathBuf,
    }
}

#[derive(clap::Args, Debug, Clone)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub opts: TrainOptions,
    #[command(flatten)]
    pub output: TrainOutput,
}

options! {
    EvalOptions {
        /// Policy checkpoint written by `train`.
        policy: PathBuf,
        env: String,
        episodes: usize,
        seed: u64,
    }
}

#[derive(clap::Args, Debug, Clone)]
pub struct EvalArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub opts: EvalOptions,
}

options! {
    GenDataOptions {
        env: String,
        tier: String,
        /// Number of transitions.
        n: usize,
        seed: u64,
        out: PathBuf,
    }
}

#[derive(clap::Args, Debug, Clone)]
pub struct GenDataArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub opts: GenDataOptions,
}

options! {
    BenchOptions {
        /// Ensemble sizes, e.g. `1,5,10,20`.
        k_list: UsizeList,
        /// Layer widths `input,hidden...,1`.
        dims: UsizeList,
        /// Rows per member.
        batch: usize,
        repeats: usize,
        warmup: usize,
        seed: u64,
        /// CSV path; stdout when unset.
        out: PathBuf,
    }
}

#[derive(clap::Args, Debug, Clone)]
pub struct BenchArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub opts: BenchOptions,
}

options! {
    RegressOptions {
        k: usize,
        seed: u64,
        hidden: UsizeList,
        n_train: usize,
        steps: usize,
        batch: usize,
        lr: f64,
        scale: f64,
        noise: f64,
        /// CSV path; stdout when unset.
        out: PathBuf,
    }
}

#[derive(clap::Args, Debug, Clone)]
pub struct RegressArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub opts: RegressOptions,
}

options! {
    AblateOptions {
        /// `k_sweep` or `components`.
        kind: String,
        /// Ensemble sizes for `k_sweep`.
        k_list: UsizeList,
        /// Summary CSV path; stdout when unset.
        out: PathBuf,
    }
}

#[derive(clap::Args, Debug, Clone)]
pub struct AblateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub opts: AblateOptions,
    #[command(flatten)]
    pub train: TrainOptions,
}

type Absorb<'a> = &'a mut dyn FnMut(&ConfigEntry) -> crate::Result<bool>;

/// Applies run-file entries to every option group; any unclaimed key is an error.
fn absorb_file(path: Option<&Path>, groups: &mut [Absorb<'_>]) -> CliResult<()> {
    let Some(path) = path else { return Ok(()) };
    for entry in load_config(path).map_err(usage)? {
        let mut claimed = false;
        for g in groups.iter_mut() {
            if g(&entry).map_err(usage)? {
                claimed = true;
                break;
            }
        }
        if !claimed {
            return Err(usage(entry.error(format!("unknown key '{}'", entry.key))));
        }
    }
    Ok(())
}

fn resolve_env(env: Option<&str>, tier: Option<&str>) -> CliResult<(EnvKind, Option<Tier>)> {
    let env = env.ok_or_else(|| CliError::Usage("--env is required".into()))?;
    let (kind, from_id) = parse_env_id(env).map_err(usage)?;
    let flag = tier.map(str::parse::<Tier>).transpose().map_err(usage)?;
    match (from_id, flag) {
        (Some(a), Some(b)) if a != b => Err(CliError::Usage(format!("env id names tier {a} but --tier is {b}"))),
        (a, b) => Ok((kind, a.or(b))),
    }
}

fn load_or_generate(o: &TrainOptions) -> CliResult<OfflineDataset> {
    if let Some(path) = &o.dataset {
        let ds = OfflineDataset::load(path).map_err(usage)?;
        if o.env.is_some() || o.tier.is_some() {
            let (kind, tier) = resolve_env(o.env.as_deref(), o.tier.as_deref())?;
            if kind != ds.env || tier.is_some_and(|t| t != ds.tier) {
                return Err(CliError::Usage(format!(
                    "{} holds {} {} data, which disagrees with the requested task",
                    path.display(),
                    ds.env,
                    ds.tier
                )));
            }
        }
        return Ok(ds);
    }
    let (kind, tier) = resolve_env(o.env.as_deref(), o.tier.as_deref())?;
    let tier = tier.ok_or_else(|| CliError::Usage("a tier is required (--tier or an env id like reach1d-expert-v0)".into()))?;
    let seed = o.data_seed.or(o.seed).unwrap_or(0);
    generate_dataset(kind, tier, o.transitions.unwrap_or(100_000), seed).map_err(usage)
}

/// Trainer configuration from options, with the tier deciding the default `β`.
pub fn trainer_config(o: &TrainOptions, tier: Tier) -> CliResult<TrainerConfig> {
    let d = TrainerConfig::default();
    let cfg = TrainerConfig {
        gamma: o.gamma.unwrap_or(d.gamma),
        tau: o.tau.unwrap_or(d.tau),
        ensemble_size: o.k.unwrap_or(d.ensemble_size),
        beta: o.beta.unwrap_or(tier.default_beta()),
        target_entropy: o.target_entropy.or(d.target_entropy),
        batch_size: o.batch.unwrap_or(d.batch_size),
        total_steps: o.steps.unwrap_or(d.total_steps),
        policy_delay: o.policy_delay.unwrap_or(d.policy_delay),
        seed: o.seed.unwrap_or(d.seed),
        critic_hidden: o.critic_hidden.clone().map_or(d.critic_hidden, |l| l.0),
        policy_hidden: o.policy_hidden.clone().map_or(d.policy_hidden, |l| l.0),
        critic_lr: o.critic_lr.unwrap_or(d.critic_lr),
        policy_lr: o.policy_lr.unwrap_or(d.policy_lr),
        alpha_lr: o.alpha_lr.unwrap_or(d.alpha_lr),
        initial_alpha: o.alpha.unwrap_or(d.initial_alpha),
        fixed_alpha: o.fixed_alpha.or(d.fixed_alpha),
        log_every: o.log_every.unwrap_or(d.log_every),
        eval_every: o.eval_every.unwrap_or(d.eval_every),
        eval_episodes: o.eval_episodes.unwrap_or(d.eval_episodes),
        divergence_threshold: o.divergence_threshold.map_or(d.divergence_threshold, |l| l.0),
    };
    cfg.validate().map_err(usage)?;
    Ok(cfg)
}

fn write_file(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| runtime(Error::io(path, e)))
}

fn emit(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(p) => write_file(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn save_state(dir: &Path, state: &TrainState, prefix: &str) -> CliResult<()> {
    state.critic.save(&dir.join(format!("{prefix}critic.r1mq"))).map_err(runtime)?;
    state.target_critic.save(&dir.join(format!("{prefix}target_critic.r1mq"))).map_err(runtime)?;
    state.policy.save(&dir.join(format!("{prefix}policy.r1pi"))).map_err(runtime)
}

fn cmd_train(mut args: TrainArgs) -> CliResult<()> {
    absorb_file(
        args.config.as_deref(),
        &mut [&mut |e| args.opts.absorb(e), &mut |e| args.output.absorb(e)],
    )?;
    let ds = load_or_generate(&args.opts)?;
    let cfg = trainer_config(&args.opts, ds.tier)?;
    let out = args.output.out.unwrap_or_else(|| PathBuf::from("r1mq-run"));
    fs::create_dir_all(&out).map_err(|e| runtime(Error::io(&out, e)))?;
    match train(&cfg, &ds) {
        Ok((state, metrics)) => {
            metrics.write_csv(&out.join("metrics.csv")).map_err(runtime)?;
            save_state(&out, &state, "")?;
            if let Some(last) = metrics.rows.iter().rev().find_map(|r| r.eval_score) {
                eprintln!("final normalized score {last:.2}");
            }
            Ok(())
        }
        Err(TrainError::Diverged(d)) => {
            d.metrics.write_csv(&out.join("metrics.csv")).map_err(runtime)?;
            save_state(&out, &d.state, "diverged_")?;
            Err(CliError::Runtime(format!(
                "training diverged at step {}: {} (alpha {:.4e}, {} critic / {} policy updates; last state saved with prefix diverged_ in {})",
                d.step,
                d.reason,
                d.state.alpha(),
                d.state.critic_updates,
                d.state.policy_updates,
                out.display()
            )))
        }
        Err(TrainError::Invalid(e)) => Err(runtime(e)),
    }
}

fn cmd_eval(mut args: EvalArgs) -> CliResult<()> {
    absorb_file(args.config.as_deref(), &mut [&mut |e| args.opts.absorb(e)])?;
    let o = args.opts;
    let path = o.policy.ok_or_else(|| CliError::Usage("--policy is required".into()))?;
    let policy = GaussianPolicy::load(&path).map_err(usage)?;
    let (kind, _) = resolve_env(o.env.as_deref(), None)?;
    let episodes = o.episodes.unwrap_or(10);
    let res = evaluate(&policy, kind, episodes, &mut RngStream::new(o.seed.unwrap_or(0))).map_err(usage)?;
    println!("env,episodes,raw_return,normalized_score");
    println!("{},{episodes},{},{}", kind.id(), res.raw, res.normalized);
    Ok(())
}

fn cmd_gen_data(mut args: GenDataArgs) -> CliResult<()> {
    absorb_file(args.config.as_deref(), &mut [&mut |e| args.opts.absorb(e)])?;
    let o = args.opts;
    let (kind, tier) = resolve_env(o.env.as_deref(), o.tier.as_deref())?;
    let tier = tier.ok_or_else(|| CliError::Usage("a tier is required".into()))?;
    let n = o.n.unwrap_or(100_000);
    let seed = o.seed.unwrap_or(0);
    let ds = generate_dataset(kind, tier, n, seed).map_err(usage)?;
    let out = o
        .out
        .unwrap_or_else(|| PathBuf::from(format!("{}-{}-s{seed}.jsonl", kind.id().trim_end_matches("-v0"), tier)));
    ds.save(&out).map_err(runtime)?;
    eprintln!("wrote {n} transitions to {}", out.display());
    Ok(())
}

fn cmd_bench(mut args: BenchArgs) -> CliResult<()> {
    absorb_file(args.config.as_deref(), &mut [&mut |e| args.opts.absorb(e)])?;
    let o = args.opts;
    let d = bench::BenchConfig::default();
    let cfg = bench::BenchConfig {
        k_list: o.k_list.map_or(d.k_list, |l| l.0),
        dims: o.dims.map_or(d.dims, |l| l.0),
        batch: o.batch.unwrap_or(d.batch),
        repeats: o.repeats.unwrap_or(d.repeats),
        warmup: o.warmup.unwrap_or(d.warmup),
        seed: o.seed.unwrap_or(d.seed),
    };
    let rows = bench::run_bench(&cfg).map_err(usage)?;
    emit(o.out.as_deref(), &bench::bench_csv(&rows))
}

fn cmd_regress(mut args: RegressArgs) -> CliResult<()> {
    absorb_file(args.config.as_deref(), &mut [&mut |e| args.opts.absorb(e)])?;
    let o = args.opts;
    let d = regress::RegressConfig::default();
    let cfg = regress::RegressConfig {
        k: o.k.unwrap_or(d.k),
        seed: o.seed.unwrap_or(d.seed),
        hidden: o.hidden.map_or(d.hidden, |l| l.0),
        n_train: o.n_train.unwrap_or(d.n_train),
        steps: o.steps.unwrap_or(d.steps),
        batch: o.batch.unwrap_or(d.batch),
        lr: o.lr.unwrap_or(d.lr),
        scale: o.scale.unwrap_or(d.scale),
        noise: o.noise.unwrap_or(d.noise),
        ..d
    };
    let res = regress::run_regression(&cfg).map_err(usage)?;
    eprintln!("head std ratio (|x| in [8,10] over |x| <= 5): {:.3}", res.ood_ratio());
    emit(o.out.as_deref(), &res.to_csv())
}

fn cmd_ablate(mut args: AblateArgs) -> CliResult<()> {
    absorb_file(
        args.config.as_deref(),
        &mut [&mut |e| args.opts.absorb(e), &mut |e| args.train.absorb(e)],
    )?;
    let ds = load_or_generate(&args.train)?;
    let cfg = trainer_config(&args.train, ds.tier)?;
    let episodes = cfg.eval_episodes;
    let kind = args.opts.kind.as_deref().ok_or_else(|| CliError::Usage("--kind is required".into()))?;
    let csv = match kind {
        "k_sweep" | "k-sweep" => {
            let ks = args.opts.k_list.map_or(ablate::K_SWEEP.to_vec(), |l| l.0);
            ablate::k_sweep_csv(&ablate::k_sweep(&cfg, &ds, &ks, episodes).map_err(runtime)?)
        }
        "components" => ablate::components_csv(&ablate::components(&cfg, &ds, episodes).map_err(usage)?),
        other => return Err(CliError::Usage(format!("unknown ablation kind '{other}' (k_sweep, components)"))),
    };
    emit(args.opts.out.as_deref(), &csv)
}

pub fn execute(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::GenData(a) => cmd_gen_data(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Regress(a) => cmd_regress(a),
        Command::Ablate(a) => cmd_ablate(a),
    }
}

/// Parses `args` (including the program name), runs the command and returns the exit code.
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
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.exit_code()
        }
    }
}
