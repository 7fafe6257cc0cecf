use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::plot::{svg_line_chart, Series};
use super::stats::{mean_std, Aggregate, Report};
use super::{Manifest, RunConfig};
use crate::algos::{argmax, evaluate, train, MetricsRow, RunSummary};
use crate::env::{make_task, EnvConfig, NavEnv, Task, N_ACTIONS};
use crate::mlp::Mlp;
use crate::properties::{navigation_property_set, PropertySet};
use crate::verify::{compare_estimator, formal_violation};
use crate::{rng_from_seed, Error, Result};

fn seed_dir(out: &Path, seed: u64) -> PathBuf {
    out.join(format!("seed_{seed}"))
}

/// Result of one seed of a training run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedOutcome {
    pub seed: u64,
    pub summary: Option<RunSummary>,
    pub error: Option<String>,
}

fn write_metric_plots(dir: &Path, rows: &[MetricsRow]) -> Result<()> {
    let series = |name: &str, f: fn(&MetricsRow) -> f64| Series {
        label: name.into(),
        points: rows.iter().map(|r| (r.step as f64, f(r))).collect(),
    };
    let charts = [
        ("success_rate_1k", series("goals / 1k steps", |r| r.success_rate_1k)),
        ("cost_1k", series("collisions / 1k steps", |r| r.cost_1k)),
        ("violation_1k", series("mean violation", |r| r.violation_1k)),
    ];
    for (file, s) in charts {
        fs::write(dir.join(format!("{file}.svg")), svg_line_chart(file, "step", &[s]))?;
    }
    Ok(())
}

fn train_seed(cfg: &RunConfig, seed: u64) -> Result<RunSummary> {
    let out = train(&cfg.train_config(seed))?;
    let dir = seed_dir(&cfg.out_dir, seed);
    fs::create_dir_all(&dir)?;
    MetricsRow::write_csv(&out.metrics, fs::File::create(dir.join("metrics.csv"))?)?;
    out.actor.save(dir.join("actor.json"))?;
    out.value_net.save(dir.join("value.json"))?;
    out.properties.save(dir.join("properties.json"))?;
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&out.summary)?)?;
    if cfg.plots {
        write_metric_plots(&dir, &out.metrics)?;
    }
    Ok(out.summary)
}

/// Train every seed (up to `cfg.jobs` at a time), then aggregate.
///
/// Seeds that fail are listed in the report and make the call return an
/// error after the report has been written.
pub fn run_train(cfg: &RunConfig) -> Result<(Report, Vec<SeedOutcome>)> {
    cfg.validate()?;
    Manifest::new("train", cfg)?.write(&cfg.out_dir)?;
    fs::write(cfg.out_dir.join("config.toml"), cfg.to_toml()?)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let outcomes: Vec<SeedOutcome> = pool.install(|| {
        cfg.seeds
            .par_iter()
            .map(|&seed| match train_seed(cfg, seed) {
                Ok(s) => SeedOutcome { seed, summary: Some(s), error: None },
                Err(e) => SeedOutcome { seed, summary: None, error: Some(e.to_string()) },
            })
            .collect()
    });
    let label = cfg.train_config(0).label();
    let report = aggregate_dir(&cfg.out_dir, &label, &cfg.seeds)?;
    fs::write(cfg.out_dir.join("report.json"), serde_json::to_string_pretty(&report)?)?;
    fs::write(cfg.out_dir.join("report.csv"), report.to_csv()?)?;
    if cfg.plots {
        write_seed_overlay(&cfg.out_dir, &report.completed_seeds)?;
    }
    let failed: Vec<String> =
        outcomes.iter().filter_map(|o| o.error.as_ref().map(|e| format!("seed {}: {e}", o.seed))).collect();
    if !failed.is_empty() {
        return Err(Error::Config(failed.join("; ")));
    }
    Ok((report, outcomes))
}

fn read_metrics(dir: &Path, seed: u64) -> Result<Vec<MetricsRow>> {
    MetricsRow::read_csv(fs::File::open(seed_dir(dir, seed).join("metrics.csv"))?)
}

fn write_seed_overlay(dir: &Path, seeds: &[u64]) -> Result<()> {
    let mut per_metric: [Vec<Series>; 3] = Default::default();
    for &seed in seeds {
        let rows = read_metrics(dir, seed)?;
        let getters: [fn(&MetricsRow) -> f64; 3] = [|r| r.success_rate_1k, |r| r.cost_1k, |r| r.violation_1k];
        for (k, f) in getters.iter().enumerate() {
            per_metric[k].push(Series {
                label: format!("seed {seed}"),
                points: rows.iter().map(|r| (r.step as f64, f(r))).collect(),
            });
        }
    }
    for (name, s) in ["success_rate_1k", "cost_1k", "violation_1k"].iter().zip(&per_metric) {
        fs::write(dir.join(format!("{name}.svg")), svg_line_chart(name, "step", s))?;
    }
    Ok(())
}

/// Aggregate the per-seed metric CSVs under `dir`. Seeds without a readable
/// CSV, or with no rows, count as failed.
pub fn aggregate_dir(dir: &Path, label: &str, seeds: &[u64]) -> Result<Report> {
    let mut completed = Vec::new();
    let mut failed = Vec::new();
    let mut finals: Vec<MetricsRow> = Vec::new();
    let mut means: Vec<[f64; 4]> = Vec::new();
    for &seed in seeds {
        match read_metrics(dir, seed) {
            Ok(rows) if !rows.is_empty() => {
                let n = rows.len() as f64;
                let avg = |f: fn(&MetricsRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
                means.push([
                    avg(|r| r.success_rate_1k),
                    avg(|r| r.cost_1k),
                    avg(|r| r.violation_1k),
                    avg(|r| r.reward_1k),
                ]);
                finals.push(rows.last().cloned().expect("non-empty"));
                completed.push(seed);
            }
            _ => failed.push(seed),
        }
    }
    let col = |f: fn(&MetricsRow) -> f64| finals.iter().map(f).collect::<Vec<f64>>();
    let mcol = |k: usize| means.iter().map(|m| m[k]).collect::<Vec<f64>>();
    let mut aggregates = vec![
        Aggregate::of("final_success_rate_1k", &col(|r| r.success_rate_1k)),
        Aggregate::of("final_cost_1k", &col(|r| r.cost_1k)),
        Aggregate::of("final_violation_1k", &col(|r| r.violation_1k)),
        Aggregate::of("final_reward_1k", &col(|r| r.reward_1k)),
        Aggregate::of("mean_success_rate_1k", &mcol(0)),
        Aggregate::of("mean_cost_1k", &mcol(1)),
        Aggregate::of("mean_violation_1k", &mcol(2)),
        Aggregate::of("mean_reward_1k", &mcol(3)),
    ];
    let lambdas: Vec<f64> = finals.iter().filter_map(|r| r.lambda).collect();
    if !lambdas.is_empty() {
        aggregates.push(Aggregate::of("final_lambda", &lambdas));
    }
    Ok(Report { label: label.into(), completed_seeds: completed, failed_seeds: failed, aggregates })
}

fn load_properties(path: Option<&Path>) -> Result<PropertySet> {
    let props = match path {
        Some(p) => PropertySet::load(p)?,
        None => navigation_property_set(),
    };
    if props.is_empty() {
        return Err(Error::invalid("property set is empty"));
    }
    Ok(props)
}

fn load_checkpoints(paths: &[PathBuf]) -> Result<Vec<Mlp>> {
    if paths.is_empty() {
        return Err(Error::invalid("no checkpoints given"));
    }
    paths
        .iter()
        .map(|p| Mlp::load(p).map_err(|e| Error::Format(format!("{}: {e}", p.display()))))
        .collect()
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalArgs {
    pub checkpoints: Vec<PathBuf>,
    pub task: Task,
    pub properties: Option<PathBuf>,
    pub episodes: usize,
    pub samples: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub checkpoint: String,
    pub episodes: usize,
    pub success: f64,
    pub cost: f64,
    pub violation: f64,
}

/// Greedy evaluation of each checkpoint; writes `eval.csv` and `eval_summary.csv`.
pub fn run_eval(args: &EvalArgs) -> Result<Vec<EvalRow>> {
    let nets = load_checkpoints(&args.checkpoints)?;
    let props = load_properties(args.properties.as_deref())?;
    let env_cfg = make_task(args.task);
    Manifest::new("eval", args)?.write(&args.out_dir)?;
    let mut rows = Vec::new();
    for (net, path) in nets.iter().zip(&args.checkpoints) {
        let r = evaluate(net, &env_cfg, &props, args.episodes, args.samples, args.seed)?;
        rows.push(EvalRow {
            checkpoint: path.display().to_string(),
            episodes: r.episodes,
            success: r.success,
            cost: r.cost,
            violation: r.violation,
        });
    }
    write_csv(&args.out_dir.join("eval.csv"), &rows)?;
    let col = |f: fn(&EvalRow) -> f64| rows.iter().map(f).collect::<Vec<_>>();
    let summary = [
        Aggregate::of("success", &col(|r| r.success)),
        Aggregate::of("cost", &col(|r| r.cost)),
        Aggregate::of("violation", &col(|r| r.violation)),
    ];
    write_csv(&args.out_dir.join("eval_summary.csv"), &summary)?;
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyArgs {
    pub checkpoints: Vec<PathBuf>,
    pub properties: Option<PathBuf>,
    pub gap: f64,
    pub max_boxes: usize,
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyRow {
    pub checkpoint: String,
    pub property: String,
    pub lower: f64,
    pub upper: f64,
    pub midpoint: f64,
    pub boxes: usize,
    pub seconds: f64,
    pub budget_exhausted: bool,
    pub degenerate_boxes: usize,
}

/// Formal violation of every property under every checkpoint; writes
/// `verify.csv` and the per-property `verify_summary.csv`.
pub fn run_verify(args: &VerifyArgs) -> Result<Vec<VerifyRow>> {
    let nets = load_checkpoints(&args.checkpoints)?;
    let props = load_properties(args.properties.as_deref())?;
    Manifest::new("verify", args)?.write(&args.out_dir)?;
    let mut rows = Vec::new();
    for (net, path) in nets.iter().zip(&args.checkpoints) {
        for (i, p) in props.iter().enumerate() {
            let r = formal_violation(net, p, args.gap, args.max_boxes)?;
            rows.push(VerifyRow {
                checkpoint: path.display().to_string(),
                property: p.label(i),
                lower: r.violation_lower,
                upper: r.violation_upper,
                midpoint: r.midpoint(),
                boxes: r.boxes_explored,
                seconds: r.elapsed,
                budget_exhausted: r.budget_exhausted,
                degenerate_boxes: r.degenerate_boxes,
            });
        }
    }
    write_csv(&args.out_dir.join("verify.csv"), &rows)?;
    let summary: Vec<Aggregate> = props
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let label = p.label(i);
            let mids: Vec<f64> = rows.iter().filter(|r| r.property == label).map(|r| r.midpoint).collect();
            Aggregate::of(&label, &mids)
        })
        .collect();
    write_csv(&args.out_dir.join("verify_summary.csv"), &summary)?;
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareArgs {
    pub checkpoints: Vec<PathBuf>,
    pub properties: Option<PathBuf>,
    pub m_values: Vec<usize>,
    pub gap: f64,
    pub max_boxes: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareSummaryRow {
    pub property: String,
    pub column: String,
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

/// Estimator-versus-verifier table averaged over checkpoints; writes
/// `compare.csv` (one row per checkpoint and property) and `compare_summary.csv`.
pub fn run_compare(args: &CompareArgs) -> Result<Vec<CompareSummaryRow>> {
    let nets = load_checkpoints(&args.checkpoints)?;
    let props = load_properties(args.properties.as_deref())?;
    Manifest::new("compare", args)?.write(&args.out_dir)?;
    let mut rng = rng_from_seed(args.seed);
    let mut header = vec![
        "checkpoint".to_string(),
        "property".into(),
        "formal_lower".into(),
        "formal_upper".into(),
        "formal_mid".into(),
        "formal_seconds".into(),
        "budget_exhausted".into(),
    ];
    for m in &args.m_values {
        header.push(format!("est_{m}"));
        header.push(format!("est_{m}_seconds"));
    }
    let mut w = csv::Writer::from_path(args.out_dir.join("compare.csv"))?;
    w.write_record(&header)?;
    // (property, column) -> values across checkpoints
    let mut columns: Vec<(String, String, Vec<f64>)> = Vec::new();
    let mut push = |prop: &str, col: String, v: f64| match columns.iter_mut().find(|(p, c, _)| p == prop && *c == col) {
        Some(e) => e.2.push(v),
        None => columns.push((prop.to_string(), col, vec![v])),
    };
    for (net, path) in nets.iter().zip(&args.checkpoints) {
        let rows = compare_estimator(net, &props, &args.m_values, args.gap, args.max_boxes, &mut rng)?;
        for r in rows {
            let f = &r.formal;
            let mut rec = vec![
                path.display().to_string(),
                r.property.clone(),
                f.violation_lower.to_string(),
                f.violation_upper.to_string(),
                f.midpoint().to_string(),
                f.elapsed.to_string(),
                f.budget_exhausted.to_string(),
            ];
            push(&r.property, "formal_mid".into(), f.midpoint());
            push(&r.property, "formal_gap".into(), f.gap());
            push(&r.property, "formal_seconds".into(), f.elapsed);
            for e in &r.estimates {
                rec.push(e.value.to_string());
                rec.push(e.seconds.to_string());
                push(&r.property, format!("est_{}", e.m), e.value);
                push(&r.property, format!("est_{}_seconds", e.m), e.seconds);
                push(&r.property, format!("abs_err_{}", e.m), (e.value - f.midpoint()).abs());
            }
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    let summary: Vec<CompareSummaryRow> = columns
        .into_iter()
        .map(|(property, column, vals)| {
            let (mean, std) = mean_std(&vals);
            CompareSummaryRow { property, column, mean, std, n: vals.len() }
        })
        .collect();
    write_csv(&args.out_dir.join("compare_summary.csv"), &summary)?;
    Ok(summary)
}

/// Action source for [`env_demo`].
#[derive(Debug, Clone)]
pub enum DemoPolicy {
    Random,
    /// Always the same action.
    Constant(usize),
    Greedy(Mlp),
}

/// Roll out `policy` for `steps` steps (resetting after each episode) and
/// write a per-step trace CSV.
pub fn env_demo<W: Write>(cfg: EnvConfig, policy: &DemoPolicy, steps: usize, seed: u64, out: W) -> Result<()> {
    if let DemoPolicy::Constant(a) = policy {
        if *a >= N_ACTIONS {
            return Err(Error::invalid(format!("action {a} out of range")));
        }
    }
    let mut env = NavEnv::new(EnvConfig { rng_seed: seed, ..cfg })?;
    let mut rng = rng_from_seed(seed.wrapping_add(1));
    let n_obs = env.config().n_rays + 2;
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> =
        ["step", "episode", "x", "y", "theta", "action", "reward", "cost", "done"].iter().map(|s| s.to_string()).collect();
    header.extend((0..n_obs).map(|i| format!("obs_{i}")));
    w.write_record(&header)?;
    let mut obs = env.reset()?;
    let mut episode = 0usize;
    for step in 1..=steps {
        let action = match policy {
            DemoPolicy::Random => rng.random_range(0..N_ACTIONS),
            DemoPolicy::Constant(a) => *a,
            DemoPolicy::Greedy(net) => argmax(&net.forward(&obs)?),
        };
        let res = env.step(action)?;
        let pose = env.pose();
        let mut rec = vec![
            step.to_string(),
            episode.to_string(),
            pose.x.to_string(),
            pose.y.to_string(),
            pose.theta.to_string(),
            action.to_string(),
            res.reward.to_string(),
            res.cost().to_string(),
            res.done.to_string(),
        ];
        rec.extend(res.obs.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
        obs = if res.done {
            episode += 1;
            env.reset()?
        } else {
            res.obs
        };
    }
    w.flush()?;
    Ok(())
}
