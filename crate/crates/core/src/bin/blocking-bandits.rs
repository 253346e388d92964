//! Command-line front end. Every command is a pure function of its flags,
//! input files and seed; JSON outputs carry `"spec_version": 1` and the
//! metadata needed to reproduce them.
//!
//! Exit codes: 0 success, 1 usage, 2 validation, 3 resource cap.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use blocking_bandits::env::run_policy;
use blocking_bandits::experiments::{self, DelayMode, ExperimentConfig, RegretCurve, StudyResult};
use blocking_bandits::model::{derive_stream, load_instance, Instance, SeedSpec};
use blocking_bandits::offline::{self, DEFAULT_STATE_CAP};
use blocking_bandits::pinwheel::{self, PinwheelInstance};
use blocking_bandits::plot::{render_svg, PlotOptions};
use blocking_bandits::policies::{policy_by_name, DEFAULT_ALPHA};
use blocking_bandits::regret;
use blocking_bandits::Error;

const SPEC_VERSION: u32 = 1;

#[derive(Parser)]
#[command(name = "blocking-bandits", version, about = "Blocking bandits: simulation, offline optimization, regret bounds, pinwheel tools and experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one policy on an instance and write its trace.
    Simulate {
        #[arg(long)]
        instance: PathBuf,
        /// oracle-greedy, ucb-greedy, greedy-per-round, round-robin,
        /// fixed:<ids with - for idle>, block:<top|oracle-greedy|ucb-greedy>
        #[arg(long)]
        policy: String,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        horizon: u64,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_ALPHA)]
        alpha: f64,
        /// Trace CSV path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exact optimum, LP bounds and Oracle Greedy's ratio on the mean rewards.
    Solve {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        horizon: u64,
        #[arg(long, default_value_t = DEFAULT_STATE_CAP)]
        cap: u64,
    },
    /// Closed-form regret bounds for an instance.
    Bounds {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, value_parser = clap::value_parser!(u64).range(2..))]
        horizon: u64,
        #[arg(long, default_value_t = 0.1)]
        eps: f64,
    },
    /// Pinwheel scheduling tools.
    Pinwheel {
        #[command(subcommand)]
        command: PinwheelCommand,
    },
    /// Monte-Carlo regret study of UCB Greedy against Oracle Greedy.
    Experiment {
        #[arg(long, value_enum)]
        suite: Suite,
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's master seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Maximum simulated slots (both policies) per study.
        #[arg(long)]
        cap: Option<u64>,
        /// Also render each curve as SVG.
        #[arg(long)]
        plot: bool,
        #[arg(long)]
        log_x: bool,
    },
    /// Turn a joke_id,rating CSV into an instance of empirical arms.
    Jester {
        #[arg(long)]
        ratings: PathBuf,
        #[arg(long, default_value_t = 70)]
        n_jokes: usize,
        #[arg(long, default_value_t = 15_000)]
        min_ratings: usize,
        /// small, large or identical:<D>
        #[arg(long, default_value = "small")]
        delay_mode: String,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a regret-curve CSV as SVG.
    EmitPlot {
        #[arg(long)]
        curve: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        log_x: bool,
        #[arg(long)]
        title: Option<String>,
    },
}

#[derive(Subcommand)]
enum PinwheelCommand {
    Decide {
        /// Window lengths, e.g. 2,4,4
        #[arg(long)]
        a: String,
        #[arg(long, default_value_t = DEFAULT_STATE_CAP)]
        cap: u64,
    },
    Reduce {
        #[arg(long)]
        a: String,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Suite {
    Synthetic,
    KstarScaling,
    Jester,
}

enum Failure {
    Usage(String),
    Validation(String),
    Cap(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::StateCap { .. } => Failure::Cap(e.to_string()),
            Error::UnknownPolicy(_) => Failure::Usage(e.to_string()),
            _ => Failure::Validation(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Validation(e.to_string())
    }
}

type CliResult = Result<(), Failure>;

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash of everything a command's output depends on: its arguments and the
/// bytes of its input files.
fn config_hash(args: &Value, inputs: &[&Path]) -> Result<String, Failure> {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(args).expect("json"));
    for p in inputs {
        h.update(fs::read(p).map_err(|e| Failure::Validation(format!("{}: {e}", p.display())))?);
    }
    Ok(hex::encode(h.finalize()))
}

fn metadata(command: &str, seed: Option<u64>, hash: &str, args: &Value) -> Value {
    json!({
        "command": command,
        "seed": seed,
        "config_hash": hash,
        "version": env!("CARGO_PKG_VERSION"),
        "args": args,
    })
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json");
    s.push('\n');
    s
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, bytes).map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))
}

/// Writes `path` plus a `<path>.meta.json` sidecar holding the metadata.
fn write_with_sidecar(path: &Path, bytes: &[u8], meta: &Value) -> Result<(), Failure> {
    write_file(path, bytes)?;
    let sidecar = json!({
        "spec_version": SPEC_VERSION,
        "file": path.file_name().map(|n| n.to_string_lossy().into_owned()),
        "sha256": sha256_hex(bytes),
        "metadata": meta,
    });
    let mut name = path.as_os_str().to_owned();
    name.push(".meta.json");
    write_file(Path::new(&name), pretty(&sidecar).as_bytes())
}

fn print_json(v: Value) {
    print!("{}", pretty(&v));
}

fn load(path: &Path) -> Result<Instance, Failure> {
    load_instance(path).map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))
}

fn ids_of(instance: &Instance, schedule: &[Option<usize>]) -> Vec<Option<u32>> {
    schedule.iter().map(|a| a.map(|i| instance.arm(i).id)).collect()
}

fn cmd_simulate(instance_path: &Path, policy: &str, horizon: u64, seed: u64, alpha: f64, out: Option<&Path>) -> CliResult {
    let instance = load(instance_path)?;
    let mut p = policy_by_name(policy, &instance, alpha).map_err(|e| match e {
        Error::InvalidInstance(_) => Failure::from(e),
        other => Failure::Usage(other.to_string()),
    })?;
    let args = json!({"policy": policy, "horizon": horizon, "seed": seed, "alpha": alpha});
    let hash = config_hash(&args, &[instance_path])?;
    let meta = metadata("simulate", Some(seed), &hash, &args);
    let trace = run_policy(&instance, &mut p, horizon, SeedSpec::new(seed, 0))?;
    if let Some(out) = out {
        let mut buf = Vec::new();
        trace.write_csv(&instance, &mut buf)?;
        write_with_sidecar(out, &buf, &meta)?;
    }
    let counts = trace.counts(instance.k());
    let per_arm: serde_json::Map<String, Value> =
        instance.arms().iter().zip(&counts).map(|(a, n)| (a.id.to_string(), json!(n))).collect();
    let idle = horizon - counts.iter().sum::<u64>();
    print_json(json!({
        "spec_version": SPEC_VERSION,
        "cum_reward": trace.cum_reward(),
        "counts": per_arm,
        "idle": idle,
        "trace": out.map(|p| p.display().to_string()),
        "metadata": meta,
    }));
    Ok(())
}

fn cmd_solve(instance_path: &Path, horizon: u64, cap: u64) -> CliResult {
    let instance = load(instance_path)?.to_deterministic();
    let args = json!({"horizon": horizon, "cap": cap});
    let hash = config_hash(&args, &[instance_path])?;
    let dp = offline::exact_opt(&instance, horizon, cap)?;
    let lp = offline::lp_bounds(&instance, horizon);
    let greedy = offline::oracle_greedy_reward(&instance, horizon);
    let ratio = if dp.value == 0.0 { 1.0 } else { greedy / dp.value };
    print_json(json!({
        "spec_version": SPEC_VERSION,
        "opt": dp.value,
        "schedule": ids_of(&instance, &dp.schedule),
        "states_visited": dp.states_visited,
        "oracle_greedy": greedy,
        "ratio": ratio,
        "ratio_floor": offline::greedy_ratio_floor(&instance, horizon),
        "lp": lp,
        "arm_ids": instance.ids(),
        "metadata": metadata("solve", None, &hash, &args),
    }));
    Ok(())
}

fn cmd_bounds(instance_path: &Path, horizon: u64, eps: f64) -> CliResult {
    let instance = load(instance_path)?;
    let args = json!({"horizon": horizon, "eps": eps});
    let hash = config_hash(&args, &[instance_path])?;
    let report = regret::bound_report(&instance, horizon as f64, eps)?;
    print_json(json!({
        "spec_version": SPEC_VERSION,
        "report": report,
        "metadata": metadata("bounds", None, &hash, &args),
    }));
    Ok(())
}

fn cmd_pinwheel(command: &PinwheelCommand) -> CliResult {
    match command {
        PinwheelCommand::Decide { a, cap } => {
            let inst = PinwheelInstance::parse(a)?;
            let args = json!({"a": inst.windows(), "cap": cap});
            let hash = config_hash(&args, &[])?;
            let verdict = pinwheel::decide(&inst, *cap);
            let density = inst.density();
            print_json(json!({
                "spec_version": SPEC_VERSION,
                "a": inst.windows(),
                "density": format!("{}/{}", density.numer(), density.denom()),
                "dense": inst.is_dense(),
                "verdict": verdict,
                "metadata": metadata("pinwheel decide", None, &hash, &args),
            }));
            Ok(())
        }
        PinwheelCommand::Reduce { a, out } => {
            let inst = PinwheelInstance::parse(a)?;
            if !inst.is_dense() {
                eprintln!("warning: instance is not dense; the reduction is emitted anyway");
            }
            let args = json!({"a": inst.windows()});
            let hash = config_hash(&args, &[])?;
            let meta = metadata("pinwheel reduce", None, &hash, &args);
            let reduced = pinwheel::reduce_to_maxreward(&inst);
            write_with_sidecar(out, pretty(&reduced.to_json()).as_bytes(), &meta)?;
            print_json(json!({
                "spec_version": SPEC_VERSION,
                "out": out.display().to_string(),
                "dense": inst.is_dense(),
                "metadata": meta,
            }));
            Ok(())
        }
    }
}

fn parse_delay_mode(text: &str) -> Result<DelayMode, Failure> {
    match text {
        "small" => Ok(DelayMode::Small),
        "large" => Ok(DelayMode::Large),
        _ => text
            .strip_prefix("identical:")
            .and_then(|d| d.parse::<u32>().ok())
            .filter(|&d| d >= 1)
            .map(|delay| DelayMode::Identical { delay })
            .ok_or_else(|| Failure::Usage(format!("bad delay mode {text:?}; use small, large or identical:<D>"))),
    }
}

fn instance_summary(instance: &Instance) -> Value {
    json!({
        "ids": instance.ids(),
        "mus": instance.mus(),
        "delays": instance.delays(),
        "k_star": regret::k_star(&instance.delays()),
    })
}

struct ExperimentWriter<'a> {
    out: &'a Path,
    files: Vec<Value>,
    meta: Value,
}

impl ExperimentWriter<'_> {
    fn put(&mut self, name: &str, bytes: &[u8]) -> CliResult {
        write_file(&self.out.join(name), bytes)?;
        self.files.push(json!({"path": name, "sha256": sha256_hex(bytes)}));
        Ok(())
    }

    fn manifest(&self, status: &str, note: Option<&str>) -> CliResult {
        let m = json!({
            "spec_version": SPEC_VERSION,
            "status": status,
            "note": note,
            "files": self.files,
            "metadata": self.meta,
        });
        write_file(&self.out.join("manifest.json"), pretty(&m).as_bytes())
    }
}

fn cmd_experiment(suite: Suite, config_path: &Path, seed: Option<u64>, out: &Path, cap: Option<u64>, plot: bool, log_x: bool) -> CliResult {
    let mut config = ExperimentConfig::load(config_path).map_err(|e| Failure::Validation(format!("{}: {e}", config_path.display())))?;
    if let Some(s) = seed {
        config.master_seed = s;
    }
    let suite_name = match suite {
        Suite::Synthetic => "synthetic",
        Suite::KstarScaling => "kstar-scaling",
        Suite::Jester => "jester",
    };
    let mut inputs = vec![config_path.to_path_buf()];
    if let Suite::Jester = suite {
        let jc = config.jester.as_ref().ok_or_else(|| Failure::Validation("config has no jester section".into()))?;
        if !jc.ratings_path.is_file() {
            return Err(Failure::Validation(format!("ratings file {} not found", jc.ratings_path.display())));
        }
        inputs.push(jc.ratings_path.clone());
    }
    if let Suite::KstarScaling = suite {
        if config.k_star_values.is_empty() {
            return Err(Failure::Validation("config has no k_star_values".into()));
        }
    }
    let args = json!({"suite": suite_name, "seed": seed, "cap": cap, "plot": plot, "log_x": log_x});
    let input_refs: Vec<&Path> = inputs.iter().map(|p| p.as_path()).collect();
    let hash = config_hash(&args, &input_refs)?;
    let meta = metadata("experiment", Some(config.master_seed), &hash, &args);
    fs::create_dir_all(out)?;
    let mut w = ExperimentWriter { out, files: Vec::new(), meta };

    let cost = 2 * config.horizon * config.inner_runs as u64 * config.outer_reps as u64;
    let over_cap = |w: &ExperimentWriter| -> CliResult {
        if let Some(c) = cap.filter(|&c| cost > c) {
            let msg = format!("study needs {cost} simulated slots, cap is {c}");
            w.manifest("partial", Some(&msg))?;
            return Err(Failure::Cap(msg));
        }
        Ok(())
    };

    let emit = |w: &mut ExperimentWriter, name: &str, study: &StudyResult, extra: Value| -> CliResult {
        let mut csv = Vec::new();
        study.curve.write_csv(&mut csv)?;
        w.put(&format!("{name}.csv"), &csv)?;
        if plot {
            let svg = render_svg(&study.curve, &PlotOptions { log_x, title: Some(name.to_string()) })?;
            w.put(&format!("{name}.svg"), svg.as_bytes())?;
        }
        let kg = regret::k_g(&study.instance, regret::default_kg_horizon(&study.instance));
        let meta = json!({
            "spec_version": SPEC_VERSION,
            "suite": suite_name,
            "config": config,
            "instance": instance_summary(&study.instance),
            "k_g": kg,
            "final_regrets": study.final_regrets,
            "final_median": study.curve.median.last(),
            "extra": extra,
            "metadata": w.meta,
        });
        w.put(&format!("{name}.meta.json"), pretty(&meta).as_bytes())
    };

    match suite {
        Suite::Synthetic => {
            over_cap(&w)?;
            let study = experiments::synthetic_suite(&config)?;
            emit(&mut w, "synthetic", &study, Value::Null)?;
        }
        Suite::KstarScaling => {
            for &ks in &config.k_star_values.clone() {
                over_cap(&w)?;
                let (_, study) = experiments::kstar_scaling_suite(&config, &[ks])?.pop().expect("one study");
                emit(&mut w, &format!("kstar_{ks}"), &study, json!({"k_star": ks}))?;
            }
        }
        Suite::Jester => {
            over_cap(&w)?;
            let (arms, study) = experiments::jester_suite(&config)?;
            let extra = json!({
                "delay_mode": config.delay_mode,
                "joke_ids": arms.joke_ids,
                "rating_counts": arms.rating_counts,
            });
            emit(&mut w, "jester", &study, extra)?;
        }
    }
    w.manifest("complete", None)?;
    print_json(json!({
        "spec_version": SPEC_VERSION,
        "out": out.display().to_string(),
        "files": w.files,
        "metadata": w.meta,
    }));
    Ok(())
}

fn cmd_jester(ratings: &Path, n_jokes: usize, min_ratings: usize, delay_mode: &str, seed: u64, out: &Path) -> CliResult {
    let mode = parse_delay_mode(delay_mode)?;
    if !ratings.is_file() {
        return Err(Failure::Validation(format!("ratings file {} not found", ratings.display())));
    }
    let args = json!({"n_jokes": n_jokes, "min_ratings": min_ratings, "delay_mode": mode, "seed": seed});
    let hash = config_hash(&args, &[ratings])?;
    let meta = metadata("jester", Some(seed), &hash, &args);
    let arms = experiments::jester_load(ratings, n_jokes, min_ratings)?;
    let mut rng = derive_stream(&SeedSpec::new(seed, 0));
    let delays = mode.sample(arms.instance.k(), &mut rng);
    let instance = experiments::with_delays(&arms.instance, &delays)?;
    write_with_sidecar(out, pretty(&instance.to_json()).as_bytes(), &meta)?;
    print_json(json!({
        "spec_version": SPEC_VERSION,
        "out": out.display().to_string(),
        "joke_ids": arms.joke_ids,
        "rating_counts": arms.rating_counts,
        "instance": instance_summary(&instance),
        "metadata": meta,
    }));
    Ok(())
}

fn cmd_emit_plot(curve_path: &Path, out: &Path, log_x: bool, title: Option<String>) -> CliResult {
    let curve = RegretCurve::load(curve_path).map_err(|e| Failure::Validation(format!("{}: {e}", curve_path.display())))?;
    let args = json!({"log_x": log_x, "title": title});
    let hash = config_hash(&args, &[curve_path])?;
    let meta = metadata("emit-plot", None, &hash, &args);
    let svg = render_svg(&curve, &PlotOptions { log_x, title })?;
    write_with_sidecar(out, svg.as_bytes(), &meta)?;
    print_json(json!({
        "spec_version": SPEC_VERSION,
        "out": out.display().to_string(),
        "rows": curve.len(),
        "metadata": meta,
    }));
    Ok(())
}

fn configure_threads() -> CliResult {
    let Ok(value) = std::env::var("BB_THREADS") else { return Ok(()) };
    let n: usize = value
        .parse()
        .ok()
        .filter(|&n| n >= 1)
        .ok_or_else(|| Failure::Usage(format!("BB_THREADS must be a positive integer, got {value:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Usage(e.to_string()))
}

fn run(cli: Cli) -> CliResult {
    configure_threads()?;
    match cli.command {
        Command::Simulate { instance, policy, horizon, seed, alpha, out } => {
            cmd_simulate(&instance, &policy, horizon, seed, alpha, out.as_deref())
        }
        Command::Solve { instance, horizon, cap } => cmd_solve(&instance, horizon, cap),
        Command::Bounds { instance, horizon, eps } => cmd_bounds(&instance, horizon, eps),
        Command::Pinwheel { command } => cmd_pinwheel(&command),
        Command::Experiment { suite, config, seed, out, cap, plot, log_x } => {
            cmd_experiment(suite, &config, seed, &out, cap, plot, log_x)
        }
        Command::Jester { ratings, n_jokes, min_ratings, delay_mode, seed, out } => {
            cmd_jester(&ratings, n_jokes, min_ratings, &delay_mode, seed, &out)
        }
        Command::EmitPlot { curve, out, log_x, title } => cmd_emit_plot(&curve, &out, log_x, title),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Cap(msg)) => {
            eprintln!("resource cap: {msg}");
            ExitCode::from(3)
        }
    }
}
