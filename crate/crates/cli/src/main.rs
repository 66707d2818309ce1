//! `shapedyn` command-line tool.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or validation error,
//! 3 numerical failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use shapedyn::chaos::chaos_feature_vector;
use shapedyn::classify::Metric;
use shapedyn::embedding::{
    default_max_lag, estimate_delay, estimate_dimension, fnn_fractions, EmbeddingParams, DEFAULT_FNN_ATOL,
    DEFAULT_FNN_RTOL, DEFAULT_FNN_THRESHOLD, DEFAULT_M,
};
use shapedyn::experiments::{
    resolve_tau, run_classify, run_stability, series_distributions, sniff_header, write_artifact, ClassifyConfig,
    DataSource, ExperimentReport, FeatureSet, ShapeOptions, StabilityConfig, StabilityRun, SyntheticSpec, TauPolicy,
};
use shapedyn::models::{LorenzParams, RosslerParams, System};
use shapedyn::series::{load_csv, write_csv, MultiSeries};
use shapedyn::shape::{Normalization, ShapeKind, DEFAULT_BINS, DEFAULT_SAMPLES};
use shapedyn::{Error, Result};

/// Environment variable consulted when `--seed` is absent.
const SEED_ENV: &str = "SHAPEDYN_SEED";
/// Rosenstein fits below this R² are flagged.
const LOW_R_SQUARED: f64 = 0.95;

#[derive(Parser)]
#[command(name = "shapedyn", version, about = "Attractor shape distributions and chaotic invariants")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate a model system and write its trajectory as CSV plus a JSON sidecar.
    GenModel(GenModelArgs),
    /// Shape distributions of every channel of a CSV series.
    Features(FeaturesArgs),
    /// 10-number chaos vector (λ₁, correlation dimension, C(r) at 8 radii) per channel.
    Chaos(ChaosArgs),
    /// Embedding delay and false-nearest-neighbour dimension per channel.
    Estimate(EstimateArgs),
    /// D2 distances across series lengths within and between systems.
    Stability(StabilityArgs),
    /// Leave-one-out nearest-neighbour classification.
    Classify(ClassifyArgs),
    /// Rerun an experiment from the configuration echoed in its report.
    Replay(ReplayArgs),
}

#[derive(Args)]
struct GenModelArgs {
    /// lorenz or rossler
    system: System,
    #[arg(long, default_value_t = 5000)]
    n: usize,
    /// Draw the initial condition at random from the system's box.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    transient: Option<usize>,
    /// Defaults to `<system>.csv`; the sidecar goes next to it as `.json`.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct InputArgs {
    /// CSV file, one column per channel.
    input: PathBuf,
    /// First row holds channel names (detected when neither flag is given).
    #[arg(long, conflicts_with = "no_header")]
    header: bool,
    #[arg(long)]
    no_header: bool,
    /// Sampling step; defaults to the gen-model sidecar's value, else 1.
    #[arg(long)]
    dt: Option<f64>,
    /// Use only this channel (0-based).
    #[arg(long)]
    channel: Option<usize>,
}

#[derive(Args)]
struct FeaturesArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, default_value = "D2")]
    kind: ShapeKind,
    #[arg(long, default_value_t = DEFAULT_M)]
    m: usize,
    /// `auto` or a delay in samples.
    #[arg(long, default_value = "auto")]
    tau: TauPolicy,
    #[arg(long, default_value_t = DEFAULT_BINS)]
    bins: usize,
    /// DT1 window in samples (default twice the embedding window).
    #[arg(long)]
    delta: Option<usize>,
    /// DT2 decay per sample (default one over the embedding window).
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_SAMPLES)]
    samples: usize,
    #[arg(long, default_value = "mean-normalized")]
    normalization: Normalization,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ChaosArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, default_value_t = DEFAULT_M)]
    m: usize,
    #[arg(long, default_value = "auto")]
    tau: TauPolicy,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Largest dimension tested for false neighbours.
    #[arg(long, default_value_t = 8)]
    m_max: usize,
    #[arg(long)]
    max_lag: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_FNN_RTOL)]
    r_tol: f64,
    #[arg(long, default_value_t = DEFAULT_FNN_ATOL)]
    a_tol: f64,
    #[arg(long, default_value_t = DEFAULT_FNN_THRESHOLD)]
    threshold: f64,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct StabilityArgs {
    /// Systems to sweep (repeatable; default lorenz and rossler).
    #[arg(long = "system")]
    systems: Vec<System>,
    /// Comma-separated lengths (default 1000..5000 for Lorenz, 400..2000 for Rossler).
    #[arg(long, value_delimiter = ',')]
    lengths: Vec<usize>,
    /// Delay for every system (default 11 for Lorenz, 8 for Rossler).
    #[arg(long)]
    tau: Option<TauPolicy>,
    #[arg(long, default_value = "D2")]
    kind: ShapeKind,
    #[arg(long, default_value_t = DEFAULT_M)]
    m: usize,
    #[arg(long, default_value_t = DEFAULT_BINS)]
    bins: usize,
    #[arg(long, default_value_t = DEFAULT_SAMPLES)]
    samples: usize,
    #[arg(long, default_value = "mean-normalized")]
    normalization: Normalization,
    /// Sampling seed; also randomizes the initial conditions when given.
    #[arg(long)]
    seed: Option<u64>,
    /// Writes report.json, distances.csv and histograms.csv here.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct ClassifyArgs {
    /// Directory laid out as `<label>/<instance>.csv`.
    #[arg(long, conflicts_with = "synthetic", required_unless_present = "synthetic")]
    dataset: Option<PathBuf>,
    /// Generated dataset; only `lorenz-rossler` exists.
    #[arg(long, value_parser = ["lorenz-rossler"])]
    synthetic: Option<String>,
    #[arg(long, default_value_t = 20)]
    per_class: usize,
    /// `shape` (uses --kind) or `chaos`.
    #[arg(long, default_value = "shape")]
    features: String,
    #[arg(long, default_value = "D2")]
    kind: ShapeKind,
    #[arg(long, default_value = "chi2")]
    metric: Metric,
    #[arg(long, default_value_t = DEFAULT_M)]
    m: usize,
    #[arg(long, default_value = "auto")]
    tau: TauPolicy,
    #[arg(long, default_value_t = DEFAULT_BINS)]
    bins: usize,
    #[arg(long, default_value_t = DEFAULT_SAMPLES)]
    samples: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReplayArgs {
    report: PathBuf,
    /// Fail unless the rerun matches the stored report exactly.
    #[arg(long)]
    check: bool,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::GenModel(a) => gen_model(a),
        Command::Features(a) => features(a),
        Command::Chaos(a) => chaos(a),
        Command::Estimate(a) => estimate(a),
        Command::Stability(a) => stability(a),
        Command::Classify(a) => classify(a),
        Command::Replay(a) => replay(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        _ if e.is_numerical() => 3,
        Error::InvalidParameter(_) => 1,
        Error::Channel { source, .. } => exit_code(source),
        _ => 2,
    }
}

fn resolve_seed(flag: Option<u64>) -> Result<u64> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => {
            let seed = v
                .trim()
                .parse()
                .map_err(|_| Error::InvalidParameter(format!("{SEED_ENV}={v:?} is not an unsigned integer")))?;
            eprintln!("using seed {seed} from {SEED_ENV}");
            Ok(seed)
        }
        Err(_) => Ok(0),
    }
}

fn emit(out: Option<&Path>, value: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Numerical(e.to_string()))? + "\n";
    match out {
        Some(path) => write_artifact(path, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

/// Loaded series plus where its sampling step came from.
fn load_input(args: &InputArgs) -> Result<(MultiSeries, &'static str)> {
    let header = if args.header {
        true
    } else if args.no_header {
        false
    } else {
        sniff_header(&args.input)?
    };
    let mut series = load_csv(&args.input, header)?;
    if let Some(j) = args.channel {
        let ch = series.channel(j).cloned().ok_or_else(|| {
            Error::InvalidParameter(format!("channel {j} out of range ({} channels)", series.n_channels()))
        })?;
        series = MultiSeries::new(vec![ch])?;
    }
    let sidecar_dt = fs::read_to_string(sidecar_path(&args.input))
        .ok()
        .and_then(|t| serde_json::from_str::<Value>(&t).ok())
        .and_then(|v| v["generator"]["dt"].as_f64());
    let (dt, source) = match (args.dt, sidecar_dt) {
        (Some(dt), _) => (dt, "flag"),
        (None, Some(dt)) => (dt, "sidecar"),
        (None, None) => (1.0, "default"),
    };
    Ok((series.with_dt(dt)?, source))
}

fn channel_names(series: &MultiSeries) -> Vec<String> {
    series
        .channels()
        .iter()
        .enumerate()
        .map(|(j, c)| c.name().map_or_else(|| format!("ch{j}"), str::to_string))
        .collect()
}

fn gen_model(a: GenModelArgs) -> Result<()> {
    let mut g = a.system.default_config(a.n);
    g.seed = a.seed;
    if let Some(dt) = a.dt {
        g.dt = dt;
    }
    if let Some(t) = a.transient {
        g.transient = t;
    }
    let series = a.system.generate(&g)?;
    let out = a.out.unwrap_or_else(|| PathBuf::from(format!("{}.csv", a.system.name())));
    write_csv(&series, &out)?;
    let params = match a.system {
        System::Lorenz => json!(LorenzParams::default()),
        System::Rossler => json!(RosslerParams::default()),
    };
    let sidecar = json!({
        "system": a.system,
        "params": params,
        "generator": g,
        "initial_condition": a.system.initial_condition(&g),
        "rows": series.len(),
        "channels": channel_names(&series),
        "csv": out,
    });
    emit(Some(&sidecar_path(&out)), &sidecar)?;
    eprintln!("wrote {} rows to {}", series.len(), out.display());
    Ok(())
}

fn features(a: FeaturesArgs) -> Result<()> {
    let (series, dt_source) = load_input(&a.input)?;
    let seed = resolve_seed(a.seed)?;
    let options = ShapeOptions {
        bins: a.bins,
        n_samples: a.samples,
        delta: a.delta,
        gamma: a.gamma,
        normalization: a.normalization,
    };
    let dists = series_distributions(&series, a.m, a.tau, a.kind, &options, seed)?;
    let names = channel_names(&series);
    let channels: Vec<Value> = dists
        .iter()
        .enumerate()
        .map(|(j, (tau, d))| {
            json!({
                "channel": j,
                "name": names[j],
                "tau": tau.tau,
                "tau_method": tau.method,
                "distribution": d,
            })
        })
        .collect();
    let vector: Vec<f64> = dists.iter().flat_map(|(_, d)| d.mass.iter().copied()).collect();
    emit(
        a.out.as_deref(),
        &json!({
            "input": a.input.input,
            "dt": series.dt(),
            "dt_source": dt_source,
            "kind": a.kind,
            "m": a.m,
            "tau_policy": a.tau,
            "options": options,
            "seed": seed,
            "channels": channels,
            "vector": vector,
        }),
    )
}

fn chaos(a: ChaosArgs) -> Result<()> {
    let (series, dt_source) = load_input(&a.input)?;
    let names = channel_names(&series);
    let mut channels = Vec::new();
    for (j, ch) in series.channels().iter().enumerate() {
        let run = || -> Result<Value> {
            let tau = resolve_tau(ch, a.tau)?;
            let cf = chaos_feature_vector(ch, EmbeddingParams::new(a.m, tau.tau)?)?;
            let mut warnings = Vec::new();
            if cf.lle_r_squared < LOW_R_SQUARED {
                let w = format!(
                    "channel {j}: divergence fit R² = {:.3} < {LOW_R_SQUARED}; λ₁ is unreliable (series too short?)",
                    cf.lle_r_squared
                );
                eprintln!("warning: {w}");
                warnings.push(w);
            }
            Ok(json!({
                "channel": j,
                "name": names[j],
                "tau": tau.tau,
                "tau_method": tau.method,
                "vector": cf.to_vec(),
                "details": cf,
                "warnings": warnings,
            }))
        };
        channels.push(run().map_err(|e| Error::Channel {
            channel: j,
            source: Box::new(e),
        })?);
    }
    emit(
        a.out.as_deref(),
        &json!({
            "input": a.input.input,
            "dt": series.dt(),
            "dt_source": dt_source,
            "m": a.m,
            "tau_policy": a.tau,
            "channels": channels,
        }),
    )
}

fn estimate(a: EstimateArgs) -> Result<()> {
    let (series, _) = load_input(&a.input)?;
    let names = channel_names(&series);
    let mut channels = Vec::new();
    for (j, ch) in series.channels().iter().enumerate() {
        let run = || -> Result<Value> {
            let delay = estimate_delay(ch, a.max_lag.unwrap_or_else(|| default_max_lag(ch.len())))?;
            let m_max = a.m_max.min((ch.len() - 2) / delay.tau).max(1);
            let fractions = fnn_fractions(ch, delay.tau, m_max, a.r_tol, a.a_tol)?;
            let dim = estimate_dimension(&fractions, a.threshold)?;
            Ok(json!({
                "channel": j,
                "name": names[j],
                "tau": delay.tau,
                "tau_method": delay.method,
                "fnn_fractions": fractions,
                "m": dim.m,
                "converged": dim.converged,
            }))
        };
        channels.push(run().map_err(|e| Error::Channel {
            channel: j,
            source: Box::new(e),
        })?);
    }
    emit(
        a.out.as_deref(),
        &json!({
            "input": a.input.input,
            "r_tol": a.r_tol,
            "a_tol": a.a_tol,
            "threshold": a.threshold,
            "channels": channels,
        }),
    )
}

fn stability(a: StabilityArgs) -> Result<()> {
    let seed = resolve_seed(a.seed)?;
    let systems = if a.systems.is_empty() {
        vec![System::Lorenz, System::Rossler]
    } else {
        a.systems
    };
    let runs = systems
        .into_iter()
        .map(|s| {
            let mut run = StabilityRun::table_defaults(s);
            if !a.lengths.is_empty() {
                run.lengths = a.lengths.clone();
            }
            if let Some(t) = a.tau {
                run.tau = t;
            }
            if a.seed.is_some() {
                run.generator = run.generator.with_seed(seed);
            }
            run
        })
        .collect();
    let cfg = StabilityConfig {
        runs,
        m: a.m,
        kind: a.kind,
        shape: ShapeOptions {
            bins: a.bins,
            n_samples: a.samples,
            normalization: a.normalization,
            ..ShapeOptions::default()
        },
        seed,
    };
    let report = run_stability(&cfg)?;
    if let (Some(w), Some(c)) = (report.max_within, report.min_cross) {
        eprintln!("max within-system χ² {w:.5}, min cross-system χ² {c:.5}");
    }
    match a.out_dir {
        Some(dir) => {
            write_artifact(&dir.join("distances.csv"), &report.distances_csv())?;
            write_artifact(&dir.join("histograms.csv"), &report.histograms_csv())?;
            emit(Some(&dir.join("report.json")), &report)
        }
        None => emit(None, &report),
    }
}

fn classify(a: ClassifyArgs) -> Result<()> {
    let seed = resolve_seed(a.seed)?;
    let features = match a.features.to_ascii_lowercase().as_str() {
        "shape" => FeatureSet::Shape(a.kind),
        "chaos" => FeatureSet::Chaos,
        other => {
            return Err(Error::InvalidParameter(format!(
                "--features must be shape or chaos, got {other:?}"
            )))
        }
    };
    let data = match a.dataset {
        Some(path) => DataSource::Directory { path, has_header: None },
        None => DataSource::Synthetic(SyntheticSpec {
            per_class: a.per_class,
            seed,
            ..SyntheticSpec::default()
        }),
    };
    let cfg = ClassifyConfig {
        data,
        features,
        metric: a.metric,
        m: a.m,
        tau: a.tau,
        shape: ShapeOptions {
            bins: a.bins,
            n_samples: a.samples,
            ..ShapeOptions::default()
        },
        seed,
    };
    if cfg.effective_metric() != cfg.metric {
        eprintln!("note: chaos vectors are compared with L2");
    }
    let report = run_classify(&cfg)?;
    eprint!("{}", report.confusion.to_table());
    emit(a.out.as_deref(), &report)
}

fn replay(a: ReplayArgs) -> Result<()> {
    let text = fs::read_to_string(&a.report).map_err(|source| Error::Io {
        path: a.report.clone(),
        source,
    })?;
    let original = ExperimentReport::from_json(&text)?;
    let rerun = original.replay()?;
    if a.check && rerun != original {
        return Err(Error::Numerical("replayed report differs from the stored one".into()));
    }
    emit(a.out.as_deref(), &rerun)
}
