use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use followup_core::config::{Config, PolicyConfig, StrategyConfig};
use followup_core::filters::{tensor_key, FilterKind, TransitionTensor};
use followup_core::harness::{
    emit_report, evaluate, normalize, summarize, Baselines, EvalSummary, Harness, Policy,
    RadarEntry, RadarReport, TrajectoryRecord,
};
use serde::Serialize;

/// Model-based planning of patient follow-up visits.
#[derive(Parser)]
#[command(name = "followup", version)]
struct Cli {
    /// Log planner and filter diagnostics to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one trajectory and print a per-visit trace.
    Simulate(SimulateArgs),
    /// Evaluate strategies and write summary.csv, trajectories.csv, radar.json and manifest.json.
    Evaluate(EvaluateArgs),
    /// Build the conditional-filter transition tensor into a cache directory.
    BuildCache(BuildCacheArgs),
    /// Serve the session API over HTTP.
    Serve(ServeArgs),
}

#[derive(Args)]
struct Common {
    /// JSON configuration; defaults apply to every missing field.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Trajectory-level worker threads (default: all cores).
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Pomcp,
    ModeOracle,
    UniformRandom,
}

#[derive(Clone, Copy, ValueEnum)]
enum FilterArg {
    Particle,
    Conditional,
}

impl From<FilterArg> for FilterKind {
    fn from(f: FilterArg) -> Self {
        match f {
            FilterArg::Particle => FilterKind::Particle,
            FilterArg::Conditional => FilterKind::Conditional,
        }
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = PolicyArg::Pomcp)]
    policy: PolicyArg,
    #[arg(long, value_enum)]
    filter: Option<FilterArg>,
    /// Print the full record as JSON instead of the table.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    common: Common,
    /// First seed; trajectory i uses seed + i.
    #[arg(long)]
    seed: Option<u64>,
    /// Trajectories per strategy.
    #[arg(long)]
    n: Option<usize>,
    /// Evaluate this policy alone instead of the configured strategies.
    #[arg(long, value_enum)]
    policy: Option<PolicyArg>,
    #[arg(long, value_enum)]
    filter: Option<FilterArg>,
    /// Full-scale run: 500 trajectories per strategy.
    #[arg(long)]
    full: bool,
    #[arg(long, default_value = "results")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct BuildCacheArgs {
    #[command(flatten)]
    common: Common,
    /// Cache directory; defaults to the configured one, then `cache`.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    /// Session logs are written here and replayed on start.
    #[arg(long)]
    data_dir: Option<PathBuf>,
}

const FULL_SCALE_N: usize = 500;

fn load_config(path: Option<&Path>) -> Result<Config> {
    match path {
        Some(p) => Config::load(p).with_context(|| format!("loading {}", p.display())),
        None => Ok(Config::default()),
    }
}

fn set_workers(workers: Option<usize>) -> Result<()> {
    if let Some(w) = workers {
        if w == 0 {
            bail!("--workers must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()?;
    }
    Ok(())
}

fn policy_config(policy: PolicyArg, filter: Option<FilterArg>) -> PolicyConfig {
    match policy {
        PolicyArg::Pomcp => PolicyConfig::Pomcp {
            filter: filter.map(Into::into),
            planner: None,
        },
        PolicyArg::ModeOracle => PolicyConfig::ModeOracle,
        PolicyArg::UniformRandom => PolicyConfig::UniformRandom,
    }
}

fn strategy_name(policy: PolicyArg, filter: Option<FilterArg>) -> String {
    match (policy, filter) {
        (PolicyArg::Pomcp, Some(FilterArg::Conditional)) => "pomcp-conditional".into(),
        (PolicyArg::Pomcp, Some(FilterArg::Particle)) => "pomcp-particle".into(),
        (PolicyArg::Pomcp, None) => "pomcp".into(),
        (PolicyArg::ModeOracle, _) => "mode-oracle".into(),
        (PolicyArg::UniformRandom, _) => "uniform-random".into(),
    }
}

/// Reports every record failing its self-check; true when all pass.
fn self_check(harness: &Harness, records: &[TrajectoryRecord]) -> bool {
    let mut ok = true;
    for r in records {
        if let Err(e) = r.verify(harness.model()) {
            eprintln!("invariant violated: {e}");
            ok = false;
        }
    }
    ok
}

fn simulate(args: SimulateArgs) -> Result<bool> {
    set_workers(args.common.workers)?;
    let config = load_config(args.common.config.as_deref())?;
    let policy = Policy::from_config(&policy_config(args.policy, args.filter), &config);
    let mut harness = Harness::from_config(&config)?;
    harness.prepare([&policy])?;
    let record = harness.run_trajectory(&policy, args.seed)?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&record)?);
    } else {
        println!(
            "{:>4} {:>7} {:>9} {:>9} {:>9} {:>8} {:>8}",
            "n", "t", "reading", "decision", "mode", "marker", "cost"
        );
        for (n, v) in record.visits.iter().enumerate() {
            let reading = if v.observation.terminal {
                "death".to_string()
            } else {
                format!("{:.3}", v.observation.reading)
            };
            println!(
                "{n:>4} {:>7.1} {reading:>9} {:>9} {:>9} {:>8.3} {:>8.3}",
                v.state.clock,
                v.decision.to_string(),
                format!("{:?}", v.state.mode).to_lowercase(),
                v.state.marker,
                v.cost
            );
        }
        println!(
            "terminal={:?} visits={} cost={:.3} pfs_days={:.1} treatment_days={:.1} runtime_s={:.3}",
            record.terminal,
            record.n_visits(),
            record.total_cost,
            record.pfs_days,
            record.treatment_days,
            record.runtime_s
        );
    }
    Ok(self_check(&harness, std::slice::from_ref(&record)))
}

#[derive(Serialize)]
struct TrajectoryRow<'a> {
    strategy: &'a str,
    seed: u64,
    cost: f64,
    visits: usize,
    died: bool,
    pfs_days: f64,
    treatment_days: f64,
    runtime_s: f64,
}

#[derive(Serialize)]
struct Manifest {
    version: &'static str,
    config_digest: String,
    config: Config,
    n: usize,
    seeds: Vec<u64>,
    strategies: Vec<StrategyConfig>,
    baselines: Baselines,
    /// Death rate measured for the uniform-random strategy when it was run.
    random_death_rate_measured: Option<f64>,
    outputs: Vec<PathBuf>,
}

fn evaluate_command(args: EvaluateArgs) -> Result<bool> {
    set_workers(args.common.workers)?;
    let mut config = load_config(args.common.config.as_deref())?;
    let n = if args.full {
        FULL_SCALE_N
    } else {
        args.n.unwrap_or(config.evaluation.n)
    };
    if n == 0 {
        bail!("--n must be at least 1");
    }
    let seed = args.seed.unwrap_or(config.evaluation.seed);
    if let Some(p) = args.policy {
        config.evaluation.strategies = vec![StrategyConfig {
            name: strategy_name(p, args.filter),
            policy: policy_config(p, args.filter),
        }];
    } else if let Some(f) = args.filter {
        config.filter.kind = f.into();
    }
    config.evaluation.n = n;
    config.evaluation.seed = seed;
    config.validate()?;

    let strategies: Vec<(String, Policy)> = config
        .evaluation
        .strategies
        .iter()
        .map(|s| (s.name.clone(), Policy::from_config(&s.policy, &config)))
        .collect();
    let mut harness = Harness::from_config(&config)?;
    harness.prepare(strategies.iter().map(|(_, p)| p))?;

    let mut ok = true;
    let mut summaries: Vec<EvalSummary> = Vec::new();
    let mut batches: Vec<(String, Vec<TrajectoryRecord>)> = Vec::new();
    for (name, policy) in &strategies {
        tracing::info!(strategy = %name, n, "evaluating");
        let records = evaluate(&harness, policy, n, seed)?;
        ok &= self_check(&harness, &records);
        let s = summarize(name, policy, &records);
        eprintln!(
            "{name}: value {:.2} ± {:.2}, death rate {:.3}, {:.2} s/trajectory",
            s.value, s.half_width, s.death_rate, s.duration_mean_s
        );
        summaries.push(s);
        batches.push((name.clone(), records));
    }

    let b = config.evaluation.baselines;
    let mut random_death_rate_measured = batches
        .iter()
        .zip(&strategies)
        .find(|(_, (_, p))| *p == Policy::UniformRandom)
        .map(|((_, r), _)| r.iter().filter(|x| x.died()).count() as f64 / r.len() as f64);
    let random_cost = match b.random_cost {
        Some(c) => c,
        None => {
            let runs = evaluate(&harness, &Policy::UniformRandom, b.random_runs.max(1), seed)?;
            ok &= self_check(&harness, &runs);
            random_death_rate_measured
                .get_or_insert(runs.iter().filter(|x| x.died()).count() as f64 / runs.len() as f64);
            runs.iter().map(|r| r.total_cost).sum::<f64>() / runs.len() as f64
        }
    };
    let baselines = Baselines {
        horizon: config.model.horizon,
        random_death_rate: b.random_death_rate,
        random_cost,
        v0: b.v0.unwrap_or(0.0),
    };
    let entries = batches
        .iter()
        .map(|(name, records)| {
            Ok(RadarEntry {
                strategy: name.clone(),
                metrics: normalize(records, &baselines)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let radar = RadarReport::new(baselines, b.v0.is_some(), entries);

    let mut outputs = emit_report(&args.out_dir, &summaries, Some(&radar))?;
    let traj_path = args.out_dir.join("trajectories.csv");
    let mut w = csv::Writer::from_path(&traj_path)?;
    for (name, records) in &batches {
        for r in records {
            w.serialize(TrajectoryRow {
                strategy: name,
                seed: r.seed,
                cost: r.total_cost,
                visits: r.n_visits(),
                died: r.died(),
                pfs_days: r.pfs_days,
                treatment_days: r.treatment_days,
                runtime_s: r.runtime_s,
            })?;
        }
    }
    w.flush()?;
    outputs.push(traj_path);
    let manifest_path = args.out_dir.join("manifest.json");
    outputs.push(manifest_path.clone());
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION"),
        config_digest: config.digest(),
        n,
        seeds: (0..n as u64).map(|i| seed.wrapping_add(i)).collect(),
        strategies: config.evaluation.strategies.clone(),
        baselines,
        random_death_rate_measured,
        outputs: outputs.clone(),
        config,
    };
    fs::write(&manifest_path, serde_json::to_vec_pretty(&manifest)?)?;
    for p in &outputs {
        println!("{}", p.display());
    }
    Ok(ok)
}

fn build_cache(args: BuildCacheArgs) -> Result<bool> {
    set_workers(args.common.workers)?;
    let config = load_config(args.common.config.as_deref())?;
    let dir = args
        .out_dir
        .or(config.filter.cache_dir.clone())
        .unwrap_or_else(|| PathBuf::from("cache"));
    fs::create_dir_all(&dir)?;
    let model = config.compile_model()?;
    let spec = &config.filter.grid;
    let tensor = TransitionTensor::load_or_build(&dir, &model, spec)?;
    let path = TransitionTensor::cache_path(&dir, &model, spec);
    println!(
        "{} ({} grid states, key {})",
        path.display(),
        tensor.grid().len(),
        tensor_key(&model, spec)
    );
    Ok(true)
}

fn serve(args: ServeArgs) -> Result<bool> {
    set_workers(args.common.workers)?;
    let config = load_config(args.common.config.as_deref())?;
    let state = followup_service::AppState::new(config, args.data_dir)?;
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(("0.0.0.0", args.port)).await?;
        eprintln!("listening on {}", listener.local_addr()?);
        followup_service::serve(listener, state).await
    })?;
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose {
        tracing::Level::DEBUG
    } else {
        tracing::Level::WARN
    };
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_max_level(level)
        .init();
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Evaluate(a) => evaluate_command(a),
        Command::BuildCache(a) => build_cache(a),
        Command::Serve(a) => serve(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("self-check failed");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
