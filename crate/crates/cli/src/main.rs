use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use bayesgame::policy::Scheme;
use bayesgame::sim::{
    benchmark_solver, classify_merge, compute_metrics, run_closed_loop, run_metrics, AgentConfig, Mode, SimError,
    SimOptions, SimTrace,
};
use bayesgame::traffic::scenario::{bundled_ids, normalize_case};
use bayesgame::traffic::Scenario;
use bayesgame::verify::suite::{run_suite, PropertyStatus, SuiteConfig};
use bayesgame::SolverConfig;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

const OUTPUT_SCHEMA_VERSION: u32 = 1;

#[derive(Parser)]
#[command(name = "bayesgame", version, about = "Interactive planning with Bayesian games")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one closed-loop simulation and write its trace, metrics and states.
    Run(RunArgs),
    /// Run every scenario of a case with both methods and summarize.
    Sweep(SweepArgs),
    /// Time the solver at several iteration budgets.
    Bench(BenchArgs),
    /// Check the solver on tiny games against brute-force oracles.
    Verify(VerifyArgs),
}

#[derive(Args, Clone)]
struct Common {
    /// Case `I` or `II`, or a path to a scenario TOML file.
    #[arg(long, env = "BAYESGAME_CASE", default_value = "I")]
    case: String,
    /// Iterations per solve.
    #[arg(long, env = "BAYESGAME_ITERS", default_value_t = 20_000)]
    iters: u64,
    #[arg(long, env = "BAYESGAME_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, env = "BAYESGAME_WORKERS", default_value_t = 1)]
    workers: usize,
    /// Replanning interval in seconds; defaults to the scenario's.
    #[arg(long, env = "BAYESGAME_REPLAN")]
    replan: Option<f64>,
    #[arg(long, env = "BAYESGAME_OUT", default_value = "out")]
    out: PathBuf,
    /// Overrides as `key=value`. Scenario keys use dotted paths such as
    /// `params.w_safety` or `observation_std`; `exploration`, `scheme` and
    /// `belief_floor` configure the agents.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    /// Scenario id within the case (ignored for a file path).
    #[arg(long, env = "BAYESGAME_SCENARIO", default_value = "A")]
    scenario: String,
    #[arg(long, env = "BAYESGAME_MODE", default_value = "bayes")]
    mode: Mode,
    /// Number of steps; defaults to the scenario's.
    #[arg(long)]
    steps: Option<usize>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 2)]
    repeats: u64,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value = "A")]
    scenario: String,
    #[arg(long, value_delimiter = ',', default_value = "10000,20000,50000")]
    budgets: Vec<u64>,
    #[arg(long, default_value_t = 3)]
    repeats: usize,
}

#[derive(Args)]
struct VerifyArgs {
    /// Iteration budget for every check; defaults to each check's own.
    #[arg(long, env = "BAYESGAME_ITERS")]
    iters: Option<u64>,
    #[arg(long, env = "BAYESGAME_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    seeds: Option<u64>,
    /// Also write the reports as JSON here.
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Config(anyhow::Error),
    Verify(String),
    Runtime(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::Verify(_) => 2,
            Failure::Runtime(_) => 3,
        }
    }
}

fn config<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Config(e.into())
}

fn runtime<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Runtime(e.into())
}

/// Agent-level settings pulled out of `--set`.
struct AgentSettings {
    solver: SolverConfig,
    scheme: Scheme,
    belief_floor: Option<f64>,
}

fn split_overrides(common: &Common) -> Result<(Vec<(String, String)>, AgentSettings), Failure> {
    let mut scenario = Vec::new();
    let mut settings = AgentSettings {
        solver: SolverConfig {
            iterations: common.iters,
            workers: common.workers,
            seed: common.seed,
            ..SolverConfig::default()
        },
        scheme: Scheme::Marginal,
        belief_floor: None,
    };
    for kv in &common.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| config(anyhow!("override {kv} is not key=value")))?;
        let (k, v) = (k.trim(), v.trim());
        let num = || v.parse::<f64>().map_err(|_| config(anyhow!("override {k} needs a number, got {v}")));
        match k {
            "exploration" | "epsilon" | "solver.exploration" => settings.solver.exploration = num()?,
            "sync_interval" | "solver.sync_interval" => settings.solver.sync_interval = num()? as u64,
            "belief_floor" => settings.belief_floor = Some(num()?),
            "scheme" => {
                settings.scheme = match v {
                    "marginal" => Scheme::Marginal,
                    "accurate" => Scheme::Accurate,
                    other => return Err(config(anyhow!("unknown scheme {other}; expected marginal or accurate"))),
                }
            }
            _ => scenario.push((k.to_string(), v.to_string())),
        }
    }
    Ok((scenario, settings))
}

fn load_scenario(case: &str, id: &str, overrides: &[(String, String)]) -> Result<Scenario, Failure> {
    let sc = if normalize_case(case).is_some() {
        Scenario::bundled(case, id, overrides)
    } else {
        let path = Path::new(case);
        if !path.exists() {
            return Err(config(anyhow!("unknown case {case}: expected I, II or a scenario file")));
        }
        Scenario::from_path(path, overrides)
    };
    sc.map_err(config)
}

fn scenario_ids(case: &str) -> Result<Vec<String>, Failure> {
    if normalize_case(case).is_some() {
        Ok(bundled_ids(case).into_iter().map(String::from).collect())
    } else {
        Ok(vec![String::new()])
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display())).map_err(runtime)
}

fn ensure_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display())).map_err(config)
}

fn simulate(
    sc: &Scenario,
    mode: Mode,
    settings: &AgentSettings,
    seed: u64,
    replan: Option<f64>,
    steps: Option<usize>,
) -> Result<SimTrace, SimError> {
    let agents = AgentConfig::for_scenario(sc, mode, &settings.solver, settings.scheme)?;
    let mut opts = SimOptions::from_scenario(sc, seed);
    if let Some(r) = replan {
        opts.replan = r;
    }
    if let Some(s) = steps {
        opts.steps = s;
    }
    if let Some(f) = settings.belief_floor {
        opts.belief_floor = f;
    }
    run_closed_loop(sc, &agents, &opts)
}

#[derive(Serialize)]
struct RunSummary<'a> {
    schema_version: u32,
    scenario: &'a str,
    mode: Mode,
    seed: u64,
    outcome: Option<String>,
    expected_outcome: Option<String>,
    run: bayesgame::sim::RunMetrics,
    report: bayesgame::sim::MetricsReport,
}

#[derive(Serialize)]
struct Timings {
    schema_version: u32,
    /// `solve_seconds[step][agent]`.
    solve_seconds: Vec<Vec<f64>>,
}

fn states_csv(trace: &SimTrace) -> String {
    let k = trace.type_names.iter().map(Vec::len).max().unwrap_or(0);
    let mut out = String::from("t,player,vehicle,x,y,heading,v_long,v_lat,a_long,a_lat");
    for t in 0..k {
        out.push_str(&format!(",belief_t{t}"));
    }
    out.push('\n');
    for (v, name) in trace.vehicles.iter().enumerate() {
        for (i, step) in trace.steps.iter().enumerate() {
            let belief = step.beliefs[trace.ego].marginal(bayesgame::PlayerId(v));
            for s in step.executed[v].iter().skip(usize::from(i > 0)) {
                out.push_str(&format!(
                    "{:.3},{v},{name},{:.4},{:.4},{:.5},{:.4},{:.4},{:.4},{:.4}",
                    s.t, s.x, s.y, s.heading, s.v_long, s.v_lat, s.a_long, s.a_lat
                ));
                for t in 0..k {
                    match belief.get(t) {
                        Some(p) => out.push_str(&format!(",{p:.6}")),
                        None => out.push(','),
                    }
                }
                out.push('\n');
            }
        }
    }
    out
}

fn write_run(dir: &Path, sc: &Scenario, mode: Mode, trace: &SimTrace) -> Result<(), Failure> {
    ensure_dir(dir)?;
    write_file(&dir.join("trace.json"), &trace.to_json())?;
    let report = compute_metrics(std::slice::from_ref(trace));
    let summary = RunSummary {
        schema_version: OUTPUT_SCHEMA_VERSION,
        scenario: &sc.name,
        mode,
        seed: trace.seed,
        outcome: classify_merge(trace).map(|o| o.to_string()),
        expected_outcome: sc.expect.outcome.clone(),
        run: run_metrics(trace),
        report,
    };
    write_file(&dir.join("metrics.json"), &serde_json::to_string_pretty(&summary).map_err(runtime)?)?;
    write_file(&dir.join("states.csv"), &states_csv(trace))?;
    let timings = Timings {
        schema_version: OUTPUT_SCHEMA_VERSION,
        solve_seconds: trace.solve_seconds.clone(),
    };
    write_file(&dir.join("timings.json"), &serde_json::to_string_pretty(&timings).map_err(runtime)?)
}

fn cmd_run(args: RunArgs) -> Result<(), Failure> {
    let (overrides, settings) = split_overrides(&args.common)?;
    let sc = load_scenario(&args.common.case, &args.scenario, &overrides)?;
    let dir = &args.common.out;
    ensure_dir(dir)?;
    match simulate(&sc, args.mode, &settings, args.common.seed, args.common.replan, args.steps) {
        Ok(trace) => {
            write_run(dir, &sc, args.mode, &trace)?;
            let m = run_metrics(&trace);
            println!(
                "{}: {} steps, outcome {}, collision {}, min distance {:.2} m",
                sc.name,
                trace.steps.len(),
                classify_merge(&trace).map(|o| o.to_string()).unwrap_or_else(|| "-".into()),
                m.collided,
                m.min_distance
            );
            Ok(())
        }
        Err(SimError::Aborted { step, message, trace }) => {
            write_file(&dir.join("trace.json"), &trace.to_json())?;
            Err(runtime(anyhow!("run aborted at step {step}: {message}")))
        }
        Err(e @ SimError::Config(_)) | Err(e @ SimError::Traffic(_)) => Err(config(e)),
    }
}

fn cmd_sweep(args: SweepArgs) -> Result<(), Failure> {
    let (overrides, settings) = split_overrides(&args.common)?;
    let ids = scenario_ids(&args.common.case)?;
    let dir = &args.common.out;
    ensure_dir(dir)?;
    let mut runs = csv::Writer::from_path(dir.join("runs.csv")).map_err(config)?;
    runs.write_record([
        "schema_version",
        "scenario",
        "method",
        "seed",
        "outcome",
        "collided",
        "max_long_acc",
        "rms_long_acc",
        "max_lat_acc",
        "rms_lat_acc",
        "min_distance",
        "min_clearance",
        "error",
    ])
    .map_err(runtime)?;
    let mut by_mode: Vec<(Mode, Vec<SimTrace>, usize)> = vec![(Mode::Bayes, Vec::new(), 0), (Mode::Baseline, Vec::new(), 0)];
    for id in &ids {
        let sc = load_scenario(&args.common.case, id, &overrides)?;
        for rep in 0..args.repeats {
            let seed = args.common.seed + rep;
            for (mode, traces, failed) in by_mode.iter_mut() {
                let result = simulate(&sc, *mode, &settings, seed, args.common.replan, None);
                let row = match &result {
                    Ok(t) => {
                        let m = run_metrics(t);
                        let outcome = classify_merge(t).map(|o| o.to_string()).unwrap_or_default();
                        vec![
                            OUTPUT_SCHEMA_VERSION.to_string(),
                            sc.name.clone(),
                            mode.to_string(),
                            seed.to_string(),
                            outcome,
                            m.collided.to_string(),
                            format!("{:.4}", m.max_a_long),
                            format!("{:.4}", m.rms_a_long),
                            format!("{:.4}", m.max_a_lat),
                            format!("{:.4}", m.rms_a_lat),
                            format!("{:.4}", m.min_distance),
                            format!("{:.4}", m.min_clearance),
                            String::new(),
                        ]
                    }
                    Err(e) => {
                        *failed += 1;
                        let mut r = vec![
                            OUTPUT_SCHEMA_VERSION.to_string(),
                            sc.name.clone(),
                            mode.to_string(),
                            seed.to_string(),
                        ];
                        r.extend(std::iter::repeat_n(String::new(), 8));
                        r.push(e.to_string());
                        r
                    }
                };
                runs.write_record(&row).map_err(runtime)?;
                runs.flush().map_err(runtime)?;
                match result {
                    Ok(t) => {
                        println!("{} {} seed {seed}: collided {}", sc.name, mode, t.collided());
                        traces.push(t);
                    }
                    Err(e) => eprintln!("{} {} seed {seed}: {e}", sc.name, mode),
                }
            }
        }
    }
    let mut summary = String::from("schema_version,case,method,");
    summary.push_str(bayesgame::sim::MetricsReport::CSV_HEADER);
    summary.push_str(",failed_runs\n");
    for (mode, traces, failed) in &by_mode {
        if traces.is_empty() {
            continue;
        }
        let r = compute_metrics(traces);
        summary.push_str(&format!(
            "{OUTPUT_SCHEMA_VERSION},{},{},{},{failed}\n",
            args.common.case,
            mode,
            r.csv_row()
        ));
        println!(
            "{mode}: {} runs, collision rate {}/{}, avg max long acc {:.3}",
            r.runs, r.collisions, r.runs, r.avg_max_a_long
        );
    }
    write_file(&dir.join("summary.csv"), &summary)
}

fn cmd_bench(args: BenchArgs) -> Result<(), Failure> {
    let (overrides, _) = split_overrides(&args.common)?;
    let sc = load_scenario(&args.common.case, &args.scenario, &overrides)?;
    let dir = &args.common.out;
    ensure_dir(dir)?;
    let rows = benchmark_solver(&sc, &args.budgets, args.repeats, args.common.workers, args.common.seed)
        .map_err(runtime)?;
    let mut out = String::from("schema_version,case,scenario,method,iterations,repeats,mean_seconds\n");
    for r in &rows {
        out.push_str(&format!(
            "{OUTPUT_SCHEMA_VERSION},{},{},{},{},{},{:.6}\n",
            args.common.case, sc.name, r.method, r.iterations, r.repeats, r.mean_seconds
        ));
        println!("{:>8} {:>7} iterations: {:.4} s", r.method.to_string(), r.iterations, r.mean_seconds);
    }
    write_file(&dir.join("bench.csv"), &out)
}

fn cmd_verify(args: VerifyArgs) -> Result<(), Failure> {
    let mut cfg = SuiteConfig::default();
    if let Some(m) = args.iters {
        cfg = cfg.with_iterations(m);
    }
    if let Some(s) = args.seeds {
        cfg.seeds = s;
        cfg.consistency_seeds = s;
    }
    cfg.base_seed = args.seed;
    let reports = run_suite(&cfg).map_err(runtime)?;
    for r in &reports {
        println!("{}", r.line());
    }
    if let Some(dir) = &args.out {
        ensure_dir(dir)?;
        #[derive(Serialize)]
        struct Doc<'a> {
            schema_version: u32,
            reports: &'a [bayesgame::verify::suite::PropertyReport],
        }
        let doc = Doc {
            schema_version: OUTPUT_SCHEMA_VERSION,
            reports: &reports,
        };
        write_file(&dir.join("verify.json"), &serde_json::to_string_pretty(&doc).map_err(runtime)?)?;
    }
    let failed: Vec<&str> = reports
        .iter()
        .filter(|r| r.status == PropertyStatus::Fail)
        .map(|r| r.name.as_str())
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Verify(format!("failed: {}", failed.join(", "))))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Verify(a) => cmd_verify(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let msg = match &f {
                Failure::Config(e) => format!("configuration error: {e:#}"),
                Failure::Verify(m) => format!("verification failed: {m}"),
                Failure::Runtime(e) => format!("runtime error: {e:#}"),
            };
            let _ = writeln!(std::io::stderr(), "{msg}");
            ExitCode::from(f.code())
        }
    }
}
