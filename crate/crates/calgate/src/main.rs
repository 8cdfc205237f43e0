//! calgate command-line interface.
//!
//! Subcommands: `gen-synth`, `calibrate`, `eval`, `sweep`, `simulate`,
//! `bench`. Every run writes its primary output atomically plus a
//! `<output>.manifest.json` recording the resolved configuration. Exit
//! codes: 0 success, 1 validation error, 2 I/O error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use calgate::calibration::{fit_isotonic, fit_platt, fit_temperature, Fitted};
use calgate::datamodel::{atomic_write, load_dataset, save_dataset, FileFormat};
use calgate::gate::DEFAULT_REFRACTORY_MS;
use calgate::manifest::ManifestBuilder;
use calgate::metrics::{report, DEFAULT_BINS};
use calgate::selective::{default_tau_grid, sweep};
use calgate::simulator::{
    benchmark_tick_latency, simulate_stream, simulate_sweep, write_sweep_csv, write_trace_csv,
    DEFAULT_ALPHA, DEFAULT_TOPK,
};
use calgate::synth::{generate, SynthConfig};
use calgate::{CalibrationMap, Dataset, Error, GateConfig, Real, Result, SimConfig, SimResult};

#[derive(Parser)]
#[command(
    name = "calgate",
    version,
    about = "Calibrated confidence, selective prediction, and an Act/Hold safety gate for classifier streams"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic logit dataset with a known calibration oracle.
    GenSynth(GenSynthArgs),
    /// Fit a calibration map on a validation dataset.
    Calibrate(CalibrateArgs),
    /// Evaluate reliability metrics (ECE/NLL/Brier/top-k) under a map.
    Eval(EvalArgs),
    /// Sweep a confidence threshold: coverage vs act-only precision.
    Sweep(SweepArgs),
    /// Closed-loop stream replay through smoothing, top-k filter and gate.
    Simulate(SimulateArgs),
    /// Measure per-tick pipeline latency.
    Bench(BenchArgs),
}

#[derive(Args)]
struct GenSynthArgs {
    /// Class count.
    #[arg(long, default_value_t = 21)]
    k: usize,
    #[arg(long, default_value_t = 8)]
    n_streams: usize,
    #[arg(long, default_value_t = 1000)]
    ticks_per_stream: usize,
    /// Target top-1 accuracy in (1/K, 1).
    #[arg(long, default_value_t = 0.4)]
    base_accuracy: f64,
    /// Overconfidence logit multiplier (1 = calibrated).
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    /// Expected label segment length in ticks.
    #[arg(long, default_value_t = 25.0)]
    label_persistence: f64,
    #[arg(long, env = "CALGATE_SEED", default_value_t = 0)]
    seed: u64,
    /// Output dataset path (.csv or .ndjson).
    #[arg(long)]
    out: PathBuf,
    /// Force the output format instead of inferring from the extension.
    #[arg(long)]
    format: Option<String>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Method {
    /// Temperature scaling on the full logit vector.
    Ts,
    /// Platt scaling on the top logit.
    Platt,
    /// Isotonic regression on the top-class confidence.
    Isotonic,
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long, value_enum)]
    method: Method,
    /// Validation dataset to fit on.
    #[arg(long)]
    val: PathBuf,
    #[arg(long)]
    format: Option<String>,
    /// Output calibration map (JSON).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    format: Option<String>,
    /// Calibration map JSON; omitted = identity (raw softmax confidence).
    #[arg(long)]
    map: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_BINS)]
    bins: usize,
    /// Output report (JSON).
    #[arg(long)]
    out: PathBuf,
    /// Reliability-diagram CSV (default: the report path with .csv).
    #[arg(long)]
    bins_out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    map: Option<PathBuf>,
    /// Thresholds, comma separated (default: 0.00..0.95 step 0.05, plus 0.99).
    #[arg(long, value_delimiter = ',')]
    taus: Option<Vec<f64>>,
    #[arg(long, default_value_t = DEFAULT_BINS)]
    bins: usize,
    /// Output curve CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    map: Option<PathBuf>,
    /// Exponential smoothing factor in (0, 1].
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    alpha: f64,
    /// Top-k eligibility filter width.
    #[arg(long, default_value_t = DEFAULT_TOPK)]
    topk: usize,
    /// Sweep thresholds (ignored when --tau or --tau-on/--tau-off given).
    #[arg(long, value_delimiter = ',')]
    taus: Option<Vec<f64>>,
    /// Hysteresis half-width applied around each swept threshold.
    #[arg(long)]
    band: Option<f64>,
    /// Center threshold: runs once with the default band τ ± 0.05.
    #[arg(long)]
    tau: Option<f64>,
    /// Explicit upper (entry) threshold; use with --tau-off.
    #[arg(long)]
    tau_on: Option<f64>,
    /// Explicit lower (exit) threshold; use with --tau-on.
    #[arg(long)]
    tau_off: Option<f64>,
    /// Refractory period after each transition (default: 200 ms for single
    /// runs, 0 for sweeps).
    #[arg(long)]
    refractory_ms: Option<u64>,
    /// Output CSV (`tau,coverage,precision,transitions`).
    #[arg(long)]
    out: PathBuf,
    /// Per-tick audit CSV (single-run modes only).
    #[arg(long)]
    trace_out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 21)]
    k: usize,
    #[arg(long, default_value_t = 100_000)]
    n_ticks: usize,
    #[arg(long)]
    map: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    alpha: f64,
    #[arg(long, default_value_t = DEFAULT_TOPK)]
    topk: usize,
    #[arg(long, env = "CALGATE_SEED", default_value_t = 0)]
    seed: u64,
    /// Latency report output (JSON).
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // --help / --version go to stdout with a clean exit; anything
            // else is a usage problem.
            if e.use_stderr() {
                eprint!("{e}");
                return ExitCode::from(1);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };

    let outcome = match cli.command {
        Command::GenSynth(args) => cmd_gen_synth(args),
        Command::Calibrate(args) => cmd_calibrate(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Bench(args) => cmd_bench(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn resolve_format(path: &Path, flag: &Option<String>) -> Result<FileFormat> {
    match flag {
        Some(s) => s.parse(),
        None => Ok(FileFormat::from_path(path)),
    }
}

fn load_data(path: &Path, flag: &Option<String>) -> Result<Dataset> {
    load_dataset(path, resolve_format(path, flag)?)
}

fn load_map(path: &Option<PathBuf>) -> Result<CalibrationMap> {
    match path {
        None => Ok(CalibrationMap::Identity),
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            let map: CalibrationMap = serde_json::from_str(&text)
                .map_err(|e| Error::Invalid(format!("{}: {e}", p.display())))?;
            map.validate()?;
            Ok(map)
        }
    }
}

fn write_json<T: serde::Serialize>(value: &T, path: &Path) -> Result<()> {
    atomic_write(path, |out| {
        serde_json::to_writer_pretty(&mut *out, value).map_err(std::io::Error::other)?;
        out.write_all(b"\n")?;
        Ok(())
    })
}

fn cmd_gen_synth(args: GenSynthArgs) -> Result<()> {
    let cfg = SynthConfig {
        k: args.k,
        n_streams: args.n_streams,
        ticks_per_stream: args.ticks_per_stream,
        base_accuracy: args.base_accuracy,
        overconfidence_scale: args.scale,
        label_persistence: args.label_persistence,
        seed: args.seed,
    };
    let mut manifest = ManifestBuilder::new("gen-synth", serde_json::to_value(&cfg).unwrap());
    manifest.seed(args.seed).output(&args.out);

    let ds: Dataset = generate(&cfg)?;
    let format = resolve_format(&args.out, &args.format)?;
    save_dataset(&ds, &args.out, format)?;
    manifest.write(&args.out)?;
    println!(
        "wrote {} records ({} streams, K={}) to {}",
        ds.len(),
        args.n_streams,
        args.k,
        args.out.display()
    );
    Ok(())
}

fn cmd_calibrate(args: CalibrateArgs) -> Result<()> {
    let mut manifest = ManifestBuilder::new(
        "calibrate",
        serde_json::json!({
            "method": format!("{:?}", args.method).to_lowercase(),
            "val": args.val.display().to_string(),
        }),
    );
    manifest.input(&args.val).output(&args.out);

    let val = load_data(&args.val, &args.format)?;
    let Fitted { map, warnings } = match args.method {
        Method::Ts => fit_temperature(&val),
        Method::Platt => fit_platt(&val),
        Method::Isotonic => fit_isotonic(&val),
    }
    .map_err(|e| Error::Invalid(format!("{:?} fit failed: {e}", args.method)))?;

    for w in &warnings {
        eprintln!("warning: {w}");
    }
    write_json(&map, &args.out)?;
    manifest.write(&args.out)?;
    println!(
        "fitted {} map on {} records -> {}",
        map.kind_name(),
        val.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let bins_out = args
        .bins_out
        .clone()
        .unwrap_or_else(|| args.out.with_extension("csv"));
    let mut manifest = ManifestBuilder::new(
        "eval",
        serde_json::json!({
            "data": args.data.display().to_string(),
            "map": args.map.as_ref().map(|p| p.display().to_string()),
            "bins": args.bins,
        }),
    );
    manifest
        .input(&args.data)
        .output(&args.out)
        .output(&bins_out);
    if let Some(m) = &args.map {
        manifest.input(m);
    }

    let ds = load_data(&args.data, &args.format)?;
    let map = load_map(&args.map)?;
    let rep = report(&ds, &map, args.bins)?;

    write_json(&rep, &args.out)?;
    rep.write_bins_csv(&bins_out)?;
    manifest.write(&args.out)?;

    print!(
        "map={} n={} ece={:.6} top1={:.6} top5={:.6}",
        rep.map_kind, rep.n, rep.ece, rep.top1, rep.top5
    );
    match (rep.nll, rep.brier) {
        (Some(nll), Some(brier)) => println!(" nll={nll:.6} brier={brier:.6}"),
        _ => println!(" nll=n/a brier=n/a"),
    }
    Ok(())
}

fn parse_taus(taus: &Option<Vec<f64>>) -> Vec<Real> {
    match taus {
        Some(ts) => ts.clone(),
        None => default_tau_grid(),
    }
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let taus = parse_taus(&args.taus);
    let mut manifest = ManifestBuilder::new(
        "sweep",
        serde_json::json!({
            "data": args.data.display().to_string(),
            "map": args.map.as_ref().map(|p| p.display().to_string()),
            "taus": taus,
            "bins": args.bins,
        }),
    );
    manifest.input(&args.data).output(&args.out);
    if let Some(m) = &args.map {
        manifest.input(m);
    }

    let ds = load_data(&args.data, &args.format)?;
    let map = load_map(&args.map)?;
    let curve = sweep(&ds, &map, &taus, args.bins)?;
    curve.write_csv(&args.out)?;
    manifest.write(&args.out)?;

    let violations = curve.points.iter().filter(|p| !p.bound_satisfied).count();
    println!(
        "swept {} thresholds (map={}) -> {}; bound violations: {violations}",
        curve.points.len(),
        curve.map_kind,
        args.out.display()
    );
    Ok(())
}

fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    let map = load_map(&args.map)?;
    let single_gate: Option<(Real, GateConfig)> = match (args.tau_on, args.tau_off, args.tau) {
        (Some(on), Some(off), _) => Some((
            on,
            GateConfig::new(on, off, args.refractory_ms.unwrap_or(DEFAULT_REFRACTORY_MS))?,
        )),
        (Some(_), None, _) | (None, Some(_), _) => {
            return Err(Error::Invalid(
                "--tau-on and --tau-off must be given together".into(),
            ));
        }
        (None, None, Some(center)) => {
            let mut g = GateConfig::around(center)?;
            if let Some(r) = args.refractory_ms {
                g.refractory_ms = r;
            }
            Some((center, g))
        }
        (None, None, None) => None,
    };

    let config_json = serde_json::json!({
        "data": args.data.display().to_string(),
        "map": args.map.as_ref().map(|p| p.display().to_string()),
        "alpha": args.alpha,
        "topk": args.topk,
        "taus": args.taus,
        "band": args.band,
        "tau": args.tau,
        "tau_on": args.tau_on,
        "tau_off": args.tau_off,
        "refractory_ms": args.refractory_ms,
    });
    let mut manifest = ManifestBuilder::new("simulate", config_json);
    manifest.input(&args.data).output(&args.out);
    if let Some(m) = &args.map {
        manifest.input(m);
    }

    let ds = load_data(&args.data, &args.format)?;

    let rows: Vec<(Real, SimResult)> = match single_gate {
        Some((tau, gate)) => {
            let cfg = SimConfig {
                alpha: args.alpha,
                k_filter: args.topk,
                gate,
                map,
            };
            if ds.is_empty() {
                return Err(Error::EmptyDataset);
            }
            let record_trace = args.trace_out.is_some();
            let streams = ds.streams();
            let (mut ticks, mut act, mut correct, mut transitions) = (0, 0, 0, 0);
            let mut trace = Vec::new();
            for stream in &streams {
                let r = simulate_stream(stream, &cfg, record_trace)?;
                ticks += r.ticks;
                act += r.act_ticks;
                correct += r.act_correct;
                transitions += r.transitions;
                if let Some(t) = r.per_tick_trace {
                    trace.extend(t);
                }
            }
            if let Some(path) = &args.trace_out {
                write_trace_csv(&trace, path)?;
                manifest.output(path);
            }
            let coverage = act as Real / ticks as Real;
            let precision = (act > 0).then(|| correct as Real / act as Real);
            vec![(
                tau,
                SimResult {
                    tau_on: cfg.gate.tau_on,
                    tau_off: cfg.gate.tau_off,
                    ticks,
                    act_ticks: act,
                    act_correct: correct,
                    coverage,
                    act_only_precision: precision,
                    transitions,
                    skipped_streams: 0,
                    per_tick_trace: None,
                },
            )]
        }
        None => {
            if args.trace_out.is_some() {
                return Err(Error::Invalid(
                    "--trace-out needs a single-run mode (--tau or --tau-on/--tau-off)".into(),
                ));
            }
            let cfg = SimConfig {
                alpha: args.alpha,
                k_filter: args.topk,
                gate: GateConfig::new(0.5, 0.5, args.refractory_ms.unwrap_or(0))?,
                map,
            };
            simulate_sweep(&ds, &cfg, &parse_taus(&args.taus), args.band)?
        }
    };

    write_sweep_csv(&rows, &args.out)?;
    manifest.write(&args.out)?;
    for (tau, r) in &rows {
        let precision = r
            .act_only_precision
            .map(|p| format!("{p:.6}"))
            .unwrap_or_else(|| "n/a".to_string());
        println!(
            "tau={tau:.3} coverage={:.6} precision={precision} transitions={}",
            r.coverage, r.transitions
        );
    }
    Ok(())
}

fn cmd_bench(args: BenchArgs) -> Result<()> {
    let map = load_map(&args.map)?;
    let mut manifest = ManifestBuilder::new(
        "bench",
        serde_json::json!({
            "k": args.k,
            "n_ticks": args.n_ticks,
            "map": args.map.as_ref().map(|p| p.display().to_string()),
            "alpha": args.alpha,
            "topk": args.topk,
        }),
    );
    manifest.seed(args.seed).output(&args.out);

    let cfg = SimConfig {
        alpha: args.alpha,
        k_filter: args.topk.min(args.k),
        gate: GateConfig::around(0.5)?,
        map,
    };
    let (mean_us, p99_us) = benchmark_tick_latency(&cfg, args.k, args.n_ticks, args.seed)?;
    let report = serde_json::json!({
        "k": args.k,
        "n_ticks": args.n_ticks,
        "map": cfg.map.kind_name(),
        "mean_us": mean_us,
        "p99_us": p99_us,
        "budget_ms": 40.0,
    });
    write_json(&report, &args.out)?;
    manifest.write(&args.out)?;
    println!(
        "k={} n_ticks={} mean_us={mean_us:.3} p99_us={p99_us:.3}",
        args.k, args.n_ticks
    );
    Ok(())
}
