use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use approxviol::algos::{AgentKind, PenaltyMode};
use approxviol::env::{make_task, EnvConfig, Task};
use approxviol::harness::{
    env_demo, parse_seeds, run_compare, run_eval, run_train, run_verify, CompareArgs, DemoPolicy, EvalArgs, RunConfig,
    VerifyArgs,
};
use approxviol::mlp::Mlp;
use approxviol::verify::{DEFAULT_GAP, DEFAULT_MAX_BOXES};

#[derive(Parser)]
#[command(name = "approxviol", version, about = "Approximate and formal violation of safety properties for navigation policies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one agent on one task for several seeds.
    Train(TrainArgs),
    /// Greedy evaluation of checkpoints (default task Evaluation_NT).
    Eval(EvalCli),
    /// Formal violation bounds of checkpoints on a property file.
    Verify(VerifyCli),
    /// Estimator against verifier, with timings.
    Compare(CompareCli),
    /// Drive the environment with a simple policy and dump a trace.
    EnvDemo(DemoCli),
}

#[derive(Args)]
struct TrainArgs {
    /// TOML run configuration; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, required_unless_present = "config")]
    task: Option<Task>,
    #[arg(long)]
    agent: Option<AgentKind>,
    #[arg(long)]
    penalty: Option<PenaltyMode>,
    /// `0..2` (inclusive), `5`, or `1,4,9`.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    steps: Option<usize>,
    /// Samples per property for the per-step violation.
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    omega: Option<f64>,
    #[arg(long)]
    no_online_properties: bool,
    #[arg(long)]
    log_every: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    plots: bool,
}

#[derive(Args)]
struct EvalCli {
    #[arg(long = "checkpoint", required = true)]
    checkpoints: Vec<PathBuf>,
    #[arg(long, default_value = "Evaluation_NT")]
    task: Task,
    #[arg(long)]
    properties: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    episodes: usize,
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "eval")]
    out: PathBuf,
}

#[derive(Args)]
struct VerifyCli {
    #[arg(long = "checkpoint", required = true)]
    checkpoints: Vec<PathBuf>,
    /// Property file; the three navigation properties if omitted.
    #[arg(long)]
    properties: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_GAP)]
    gap: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_BOXES)]
    max_boxes: usize,
    #[arg(long, default_value = "verify")]
    out: PathBuf,
}

#[derive(Args)]
struct CompareCli {
    #[arg(long = "checkpoint", required = true)]
    checkpoints: Vec<PathBuf>,
    #[arg(long)]
    properties: Option<PathBuf>,
    /// Comma-separated sample counts.
    #[arg(long, default_value = "100,1000,10000", value_delimiter = ',')]
    m: Vec<usize>,
    #[arg(long, default_value_t = DEFAULT_GAP)]
    gap: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_BOXES)]
    max_boxes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "compare")]
    out: PathBuf,
}

#[derive(Args)]
struct DemoCli {
    #[arg(long, conflicts_with = "env_config")]
    task: Option<Task>,
    /// TOML environment configuration.
    #[arg(long)]
    env_config: Option<PathBuf>,
    /// `random`, `forward`, or an action index.
    #[arg(long, default_value = "random", conflicts_with = "checkpoint")]
    policy: String,
    /// Drive with the greedy policy of this checkpoint.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 500)]
    steps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Trace CSV; standard output if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn train_cmd(a: TrainArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => RunConfig::from_toml(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?,
        None => RunConfig::default(),
    };
    if let Some(t) = a.task {
        cfg.task = t;
    }
    if let Some(v) = a.agent {
        cfg.agent = v;
    }
    if let Some(v) = a.penalty {
        cfg.penalty = v;
    }
    if let Some(s) = &a.seeds {
        cfg.seeds = parse_seeds(s)?;
    }
    if let Some(v) = a.steps {
        cfg.total_steps = v;
    }
    if let Some(v) = a.samples {
        cfg.samples = v;
    }
    if let Some(v) = a.epsilon {
        cfg.epsilon = v;
    }
    if let Some(v) = a.omega {
        cfg.omega = v;
    }
    if a.no_online_properties {
        cfg.online_properties = false;
    }
    if let Some(v) = a.log_every {
        cfg.log_every = v;
    }
    if let Some(v) = a.out {
        cfg.out_dir = v;
    }
    if let Some(v) = a.jobs {
        cfg.jobs = v;
    }
    cfg.plots |= a.plots;
    let (report, _) = run_train(&cfg)?;
    println!("{} on {}: {} seed(s) -> {}", report.label, cfg.task, report.completed_seeds.len(), cfg.out_dir.display());
    for agg in &report.aggregates {
        println!("  {:<24} {:>10.4} ± {:.4}", agg.metric, agg.mean, agg.std);
    }
    Ok(())
}

fn demo_cmd(a: DemoCli) -> Result<()> {
    let cfg = match (&a.task, &a.env_config) {
        (_, Some(p)) => EnvConfig::from_toml(&fs::read_to_string(p)?)?,
        (Some(t), None) => make_task(*t),
        (None, None) => bail!("give --task or --env-config"),
    };
    let policy = match &a.checkpoint {
        Some(p) => DemoPolicy::Greedy(Mlp::load(p)?),
        None => match a.policy.as_str() {
            "random" => DemoPolicy::Random,
            "forward" => DemoPolicy::Constant(4),
            s => DemoPolicy::Constant(s.parse().with_context(|| format!("unknown policy '{s}'"))?),
        },
    };
    match &a.out {
        Some(p) => env_demo(cfg, &policy, a.steps, a.seed, fs::File::create(p)?)?,
        None => env_demo(cfg, &policy, a.steps, a.seed, std::io::stdout().lock())?,
    }
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => {
            let rows = run_eval(&EvalArgs {
                checkpoints: a.checkpoints,
                task: a.task,
                properties: a.properties,
                episodes: a.episodes,
                samples: a.samples,
                seed: a.seed,
                out_dir: a.out.clone(),
            })?;
            println!("checkpoint,success,cost,violation");
            for r in rows {
                println!("{},{:.4},{:.4},{:.4}", r.checkpoint, r.success, r.cost, r.violation);
            }
            Ok(())
        }
        Command::Verify(a) => {
            let rows = run_verify(&VerifyArgs {
                checkpoints: a.checkpoints,
                properties: a.properties,
                gap: a.gap,
                max_boxes: a.max_boxes,
                out_dir: a.out.clone(),
            })?;
            println!("checkpoint,property,lower,upper,boxes,seconds,budget_exhausted");
            for r in rows {
                println!(
                    "{},{},{:.5},{:.5},{},{:.3},{}",
                    r.checkpoint, r.property, r.lower, r.upper, r.boxes, r.seconds, r.budget_exhausted
                );
            }
            Ok(())
        }
        Command::Compare(a) => {
            let rows = run_compare(&CompareArgs {
                checkpoints: a.checkpoints,
                properties: a.properties,
                m_values: a.m,
                gap: a.gap,
                max_boxes: a.max_boxes,
                seed: a.seed,
                out_dir: a.out.clone(),
            })?;
            for r in rows {
                println!("{:<10} {:<22} {:>10.5} ± {:.5}", r.property, r.column, r.mean, r.std);
            }
            Ok(())
        }
        Command::EnvDemo(a) => demo_cmd(a),
    }
}
