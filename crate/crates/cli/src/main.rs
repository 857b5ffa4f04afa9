//! `bkad`: generate benchmark series, profile segmentation uncertainty,
//! run the online detector over CSV streams, and reproduce the experiment
//! tables.

use std::fs::File;
use std::io::{BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use bkad::bench::{fdp_fnp, run_benchmark, SUITES};
use bkad::changepoint::KcpState;
use bkad::core::{RunRng, TimeSeries};
use bkad::datagen::{generate, GeneratorSpec, Truth};
use bkad::detector::{run_series, DetectorConfig, DetectorState, OracleFlags};
use bkad::kernels::{median_heuristic, KernelSpec};
use bkad::scoring::Ncm;
use bkad::uncertainty::{
    f_tau_exact, f_tau_from_r, r_t_efficient, train_f_d, SegmentationHistory, StatusFilter,
    UncertaintyModel, FD_GRID,
};
use bkad::Error;

const PROFILE_SCHEMA: &str = "bkad-profile/1";

#[derive(Parser)]
#[command(name = "bkad", version, about = "Online anomaly detection for piecewise-stationary streams")]
struct Cli {
    /// Master seed for all randomness.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Overwrite existing output files.
    #[arg(long, global = true)]
    force: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic labeled series as CSV plus a ground-truth sidecar.
    Generate(GenerateArgs),
    /// Estimate the segmentation-uncertainty curves from a historical series.
    Profile(ProfileArgs),
    /// Run the online detector over a series.
    Detect(DetectArgs),
    /// Run one of the named experiment suites.
    Bench(BenchArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// One of: mean-shift, var-shift, mean-and-var, mog.
    #[arg(long, default_value = "mean-shift")]
    preset: String,
    /// Series length.
    #[arg(long, default_value_t = 3000)]
    t: usize,
    /// Average segment length.
    #[arg(long, default_value_t = 500.0)]
    theta: f64,
    /// Shift magnitude between segments.
    #[arg(long, default_value_t = 2.0)]
    delta: f64,
    /// Full generator spec as JSON; overrides the preset flags.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct ProfileArgs {
    /// Historical series CSV.
    input: PathBuf,
    /// Confidence threshold eta.
    #[arg(long, default_value_t = 0.01)]
    eta: f64,
    /// Test-set size per resample of the status-stability curve.
    #[arg(long, default_value_t = 100)]
    m: usize,
    /// Resamples per grid length.
    #[arg(long, default_value_t = 100)]
    b_reps: usize,
    #[arg(long, default_value_t = 0.1)]
    alpha_prime: f64,
}

#[derive(Args)]
struct DetectArgs {
    /// Series CSV, or `-` for line-by-line stdin streaming.
    input: PathBuf,
    /// Ground-truth sidecar written by `generate`.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Print FDP/FNP against the truth sidecar.
    #[arg(long, requires = "truth")]
    evaluate: bool,
    /// Profile JSON written by `profile`; sets lambda* and ell*.
    #[arg(long)]
    profile: Option<PathBuf>,
    /// Detector config as JSON; overrides the flag defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated oracle substitutions from
    /// {breakpoints, params, removal}; requires --truth.
    #[arg(long, requires = "truth")]
    oracle: Option<String>,
    #[arg(long, default_value_t = 0.2)]
    alpha: f64,
    #[arg(long, default_value_t = 0.01)]
    pi: f64,
    #[arg(long, default_value_t = 1)]
    k: usize,
}

#[derive(Args)]
struct BenchArgs {
    /// Suite name; `all` runs every table.
    suite: String,
    #[arg(long, default_value_t = 50)]
    seeds: usize,
    /// Worker threads; 0 uses all cores. BKAD_WORKERS overrides.
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

/// Validation failures (bad flags, malformed configs, schema mismatches)
/// exit with 2; runtime failures with 3.
enum CliError {
    Validation(anyhow::Error),
    Runtime(anyhow::Error),
}

fn classify(e: anyhow::Error) -> CliError {
    match e.downcast_ref::<Error>() {
        Some(Error::InvalidInput(_)) => CliError::Validation(e),
        _ => CliError::Runtime(e),
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Generate(a) => cmd_generate(&cli, a).map_err(classify),
        Command::Profile(a) => cmd_profile(&cli, a).map_err(classify),
        Command::Detect(a) => cmd_detect(&cli, a).map_err(classify),
        Command::Bench(a) => cmd_bench(&cli, a).map_err(classify),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Validation(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(3)
        }
    }
}

fn create_output(path: &Path, force: bool) -> Result<BufWriter<File>> {
    if path.exists() && !force {
        bail!(Error::InvalidInput(format!(
            "{} exists; pass --force to overwrite",
            path.display()
        )));
    }
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn cmd_generate(cli: &Cli, args: &GenerateArgs) -> Result<()> {
    let spec: GeneratorSpec = match &args.config {
        Some(path) => read_json(path)?,
        None => match args.preset.as_str() {
            "mean-shift" => GeneratorSpec::gaussian_mean_shift(args.t, args.theta, args.delta),
            "var-shift" => GeneratorSpec::gaussian_var_shift(args.t, args.theta, args.delta),
            "mean-and-var" => GeneratorSpec::gaussian_mean_and_var(args.t, args.theta),
            "mog" => GeneratorSpec::mog_mean_shift(args.t, args.theta, args.delta),
            other => bail!(Error::InvalidInput(format!(
                "unknown preset '{other}' (expected mean-shift, var-shift, mean-and-var or mog)"
            ))),
        },
    };
    spec.validate()?;
    let mut rng = RunRng::new(cli.seed);
    let g = generate(&spec, &mut rng)?;

    let series_path = cli.out.join("series.csv");
    let mut w = csv::Writer::from_writer(create_output(&series_path, cli.force)?);
    write_series_csv(&mut w, &g.series)?;
    w.flush()?;

    let truth_path = cli.out.join("truth.json");
    let mut f = create_output(&truth_path, cli.force)?;
    serde_json::to_writer_pretty(&mut f, &g.truth)?;
    f.write_all(b"\n")?;
    f.flush()?;
    println!("wrote {} ({} rows) and {}", series_path.display(), g.series.len(), truth_path.display());
    Ok(())
}

fn write_series_csv<W: std::io::Write>(w: &mut csv::Writer<W>, series: &TimeSeries) -> Result<()> {
    let mut header = vec!["t".to_string()];
    header.extend((1..=series.dim()).map(|i| format!("x{i}")));
    w.write_record(&header)?;
    for (i, p) in series.points().enumerate() {
        let mut rec = vec![i.to_string()];
        rec.extend(p.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    Ok(())
}

fn read_series_csv(path: &Path) -> Result<TimeSeries> {
    let mut rdr = csv::Reader::from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let dim = rdr.headers()?.len().saturating_sub(1);
    if dim == 0 {
        bail!(Error::InvalidInput("series CSV needs a t column and at least one value column".into()));
    }
    let mut values = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != dim + 1 {
            bail!(Error::InvalidInput(format!(
                "line {}: expected {} fields, found {}",
                i + 2,
                dim + 1,
                rec.len()
            )));
        }
        for field in rec.iter().skip(1) {
            let v: f64 = field.parse().map_err(|_| {
                Error::InvalidInput(format!("line {}: '{}' is not a number", i + 2, field))
            })?;
            values.push(v);
        }
    }
    if dim == 1 {
        Ok(TimeSeries::univariate(values))
    } else {
        Ok(TimeSeries::multivariate(values, dim)?)
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let v = serde_json::from_reader(std::io::BufReader::new(f))
        .map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
    Ok(v)
}

/// Persisted uncertainty model; the schema tag makes stale files fail loudly.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProfileFile {
    schema: String,
    eta: f64,
    /// Exact segment-reassignment curve.
    f_tau: Vec<f64>,
    /// Single-pass approximation of the same curve, exported for comparison.
    f_tau_efficient: Vec<f64>,
    f_d: Vec<(usize, f64)>,
    lambda_star: usize,
    ell_star: usize,
}

fn cmd_profile(cli: &Cli, args: &ProfileArgs) -> Result<()> {
    let series = read_series_csv(&args.input)?;
    let mut rng = RunRng::new(cli.seed);

    // replay the stream through the change point detector
    let kernel = KernelSpec::gaussian(median_heuristic(&series, &mut rng)?);
    let mut kcp = KcpState::new(kernel, KcpState::default_d_max(series.len()), 2, series.dim());
    let mut history = SegmentationHistory::new();
    let mut penalty = None;
    for p in series.points() {
        kcp.push(p)?;
        if kcp.len() >= 4 {
            penalty = kcp.fit_penalty().ok();
        }
        let seg = match &penalty {
            Some(pen) => kcp.select_segmentation(pen),
            None => bkad::core::Segmentation::single(kcp.len()),
        };
        history.push(&seg);
    }

    let f_tau = f_tau_exact(&history)?;
    let f_tau_efficient = f_tau_from_r(&r_t_efficient(&history));

    // status-stability curve over the stable (final) segments
    let final_seg = match &penalty {
        Some(pen) => kcp.select_segmentation(pen),
        None => bkad::core::Segmentation::single(series.len()),
    };
    let segments: Vec<TimeSeries> = final_seg
        .segments()
        .iter()
        .map(|&(a, b)| {
            let vals: Vec<f64> = (a..=b).flat_map(|u| series.point(u).to_vec()).collect();
            if series.dim() == 1 {
                Ok(TimeSeries::univariate(vals))
            } else {
                Ok(TimeSeries::multivariate(vals, series.dim())?)
            }
        })
        .collect::<Result<_>>()?;
    let usable: Vec<TimeSeries> = {
        let min_len = args.m.max(FD_GRID[0]);
        segments.into_iter().filter(|s| s.len() >= min_len).collect()
    };
    if usable.len() < 2 {
        bail!(Error::InvalidInput(
            "history too short: need at least two segments long enough for the grid".into()
        ));
    }
    let max_usable = usable.iter().map(|s| s.len()).min().unwrap_or(0);
    let grid: Vec<usize> = FD_GRID.iter().copied().filter(|&l| l <= max_usable).collect();
    if series.len() < 10 * grid.last().copied().unwrap_or(0) {
        bail!(Error::InvalidInput(format!(
            "history too short: {} points for a grid up to {}",
            series.len(),
            grid.last().unwrap()
        )));
    }
    let f_d = train_f_d(
        &usable,
        &Ncm::robust_zscore(),
        &grid,
        args.m.min(max_usable),
        args.alpha_prime,
        args.b_reps,
        StatusFilter::All,
        &mut rng,
    )?;

    let model = UncertaintyModel::from_curves(f_tau, f_d, args.eta);
    let out = ProfileFile {
        schema: PROFILE_SCHEMA.to_string(),
        eta: model.eta,
        f_tau: model.f_tau,
        f_tau_efficient,
        f_d: model.f_d,
        lambda_star: model.lambda_star,
        ell_star: model.ell_star,
    };
    let path = cli.out.join("profile.json");
    let mut f = create_output(&path, cli.force)?;
    serde_json::to_writer_pretty(&mut f, &out)?;
    f.write_all(b"\n")?;
    f.flush()?;
    println!(
        "wrote {} (lambda* = {}, ell* = {})",
        path.display(),
        out.lambda_star,
        out.ell_star
    );
    Ok(())
}

fn parse_oracle(list: &str) -> Result<OracleFlags> {
    let mut flags = OracleFlags::default();
    for item in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        match item {
            "breakpoints" => flags.breakpoints = true,
            "params" => flags.params = true,
            "removal" => flags.anomaly_removal = true,
            other => bail!(Error::InvalidInput(format!(
                "unknown oracle substitution '{other}' (expected breakpoints, params or removal)"
            ))),
        }
    }
    Ok(flags)
}

fn detector_config(args: &DetectArgs) -> Result<DetectorConfig> {
    let mut config: DetectorConfig = match &args.config {
        Some(path) => read_json(path)?,
        None => {
            let mut c = DetectorConfig::preset(args.alpha);
            c.pi = args.pi;
            c.k = args.k;
            c
        }
    };
    if let Some(path) = &args.profile {
        let profile: ProfileFile = read_json(path)?;
        if profile.schema != PROFILE_SCHEMA {
            bail!(Error::InvalidInput(format!(
                "profile schema '{}' does not match '{PROFILE_SCHEMA}'",
                profile.schema
            )));
        }
        config.lambda_star = profile.lambda_star.max(1);
        config.ell_star = profile.ell_star.max(1);
    }
    if let Some(list) = &args.oracle {
        config.oracle = parse_oracle(list)?;
    }
    config.validate()?;
    Ok(config)
}

fn cmd_detect(cli: &Cli, args: &DetectArgs) -> Result<()> {
    let config = detector_config(args)?;
    let truth: Option<Truth> = args.truth.as_deref().map(read_json).transpose()?;
    if args.input == Path::new("-") {
        return detect_stream(cli, &config, truth.as_ref());
    }
    let series = read_series_csv(&args.input)?;
    if let Some(t) = &truth {
        if t.labels.len() != series.len() {
            bail!(Error::InvalidInput(format!(
                "truth has {} labels but the series has {} points",
                t.labels.len(),
                series.len()
            )));
        }
    }
    let mut rng = RunRng::new(cli.seed);
    let out = run_series(&config, &series, truth.as_ref(), &mut rng)?;

    let trace_path = cli.out.join("trace.jsonl");
    let mut tf = create_output(&trace_path, cli.force)?;
    for step in &out.trace {
        serde_json::to_writer(&mut tf, step)?;
        tf.write_all(b"\n")?;
    }
    tf.flush()?;

    let det_path = cli.out.join("detections.csv");
    let mut w = csv::Writer::from_writer(create_output(&det_path, cli.force)?);
    w.write_record(["t", "status", "p_value", "score", "segment_start"])?;
    let final_seg = bkad::core::Segmentation::new(
        out.trace.last().map(|s| s.breakpoints.clone()).unwrap_or_default(),
        series.len(),
    )?;
    for r in &out.records {
        let (seg_start, _) = final_seg.segment_of(r.position)?;
        w.write_record(&[
            (r.position - 1).to_string(),
            (r.status as u8).to_string(),
            r.p_value.to_string(),
            r.score.to_string(),
            (seg_start - 1).to_string(),
        ])?;
    }
    w.flush()?;
    println!("wrote {} and {}", det_path.display(), trace_path.display());

    if args.evaluate {
        let truth = truth.expect("required by clap");
        let w = out.warmup_len.min(truth.labels.len());
        let statuses = out.statuses();
        let (fdp, fnp) = fdp_fnp(&statuses[w..], &truth.labels[w..]);
        println!("FDP {fdp:.4} FNP {fnp:.4} (evaluated after {w} warm-up points)");
    }
    Ok(())
}

/// Streams stdin lines (one value per line, comma-separated for multivariate)
/// through the detector, printing one status line per step. The first
/// `min(200, all)` points are buffered to fix the kernel bandwidth.
fn detect_stream(cli: &Cli, config: &DetectorConfig, truth: Option<&Truth>) -> Result<()> {
    let stdin = std::io::stdin();
    let mut points: Vec<Vec<f64>> = Vec::new();
    let mut state: Option<DetectorState> = None;
    let mut rng = RunRng::new(cli.seed);
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for (i, line) in stdin.lock().lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let p: Vec<f64> = line
            .split(',')
            .map(|f| {
                f.trim().parse().map_err(|_| {
                    anyhow!(Error::InvalidInput(format!("line {}: '{f}' is not a number", i + 1)))
                })
            })
            .collect::<Result<_>>()?;
        points.push(p);
        if state.is_none() && points.len() >= 200 {
            state = Some(new_streaming_state(config, &points, &mut rng)?);
            let st = state.as_mut().unwrap();
            for p in &points {
                let tr = st.step(p, truth, &mut rng)?;
                writeln!(out, "{}", serde_json::to_string(&tr)?)?;
            }
        } else if let Some(st) = state.as_mut() {
            let tr = st.step(points.last().unwrap(), truth, &mut rng)?;
            writeln!(out, "{}", serde_json::to_string(&tr)?)?;
        }
    }
    // short stream: never reached the buffering threshold
    if state.is_none() && !points.is_empty() {
        let mut st = new_streaming_state(config, &points, &mut rng)?;
        for p in &points {
            let tr = st.step(p, truth, &mut rng)?;
            writeln!(out, "{}", serde_json::to_string(&tr)?)?;
        }
    }
    Ok(())
}

fn new_streaming_state(
    config: &DetectorConfig,
    buffered: &[Vec<f64>],
    rng: &mut RunRng,
) -> Result<DetectorState> {
    let dim = buffered[0].len();
    let flat: Vec<f64> = buffered.iter().flatten().copied().collect();
    let hint = if dim == 1 {
        TimeSeries::univariate(flat)
    } else {
        TimeSeries::multivariate(flat, dim)?
    };
    Ok(DetectorState::new(config.clone(), &hint, rng)?)
}

fn cmd_bench(cli: &Cli, args: &BenchArgs) -> Result<()> {
    let workers = std::env::var("BKAD_WORKERS")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(args.workers);
    if workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
            .map_err(|e| anyhow!("setting worker count: {e}"))?;
    }
    let suites: Vec<&str> = if args.suite == "all" {
        SUITES.to_vec()
    } else if SUITES.contains(&args.suite.as_str()) {
        vec![args.suite.as_str()]
    } else {
        bail!(Error::InvalidInput(format!(
            "unknown suite '{}' (expected one of {} or all)",
            args.suite,
            SUITES.join(", ")
        )));
    };
    for suite in suites {
        let reports = run_benchmark(suite, args.seeds, cli.seed)?;
        let json_path = cli.out.join(format!("{suite}.json"));
        let mut f = create_output(&json_path, cli.force)?;
        serde_json::to_writer_pretty(&mut f, &reports)?;
        f.write_all(b"\n")?;
        f.flush()?;

        let csv_path = cli.out.join(format!("{suite}.csv"));
        let mut w = csv::Writer::from_writer(create_output(&csv_path, cli.force)?);
        w.write_record(["suite", "label", "seed", "fdp", "fnp", "auc"])?;
        for r in &reports {
            for row in &r.rows {
                w.write_record(&[
                    suite.to_string(),
                    r.label.clone(),
                    row.seed.to_string(),
                    row.fdp.to_string(),
                    row.fnp.to_string(),
                    row.auc.map(|a| a.to_string()).unwrap_or_default(),
                ])?;
            }
            println!(
                "{suite:<16} {:<28} FDR {:.3} FNR {:.3}{} ({:.1}s)",
                r.label,
                r.fdr,
                r.fnr,
                r.auc.map(|a| format!(" AUC {a:.3}")).unwrap_or_default(),
                r.runtime_s
            );
        }
        w.flush()?;
    }
    Ok(())
}
