//! `prforge`: simulate, reconstruct, evaluate and benchmark.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use prforge::benchmark::{benchmark_dir, format_summary, write_histograms_csv, write_rows_csv, BenchmarkConfig};
use prforge::exec::with_workers;
use prforge::formats::{load_measurement, save_measurement};
use prforge::fourier::{residual, snr_db};
use prforge::metrics::{report, resolve_conjugate_flip};
use prforge::recon::{reconstruct, DenoiserKind, Method, RunSettings};
use prforge::{simulate_seeded, Error, FourierOp, Image, ReconstructionResult, TtaMode};

#[derive(Debug)]
enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

type CliResult<T> = Result<T, CliError>;

/// Errors reading user-supplied inputs are usage errors; everything else is a runtime failure.
fn input(e: Error) -> CliError {
    match e {
        Error::Io { .. }
        | Error::Image { .. }
        | Error::BadMagic { .. }
        | Error::Truncated { .. }
        | Error::Header(_)
        | Error::UnsupportedVersion(_)
        | Error::ShapeMismatch { .. }
        | Error::InvalidParameter(_)
        | Error::DimensionMismatch { .. }
        | Error::NotSquare(_) => CliError::Usage(e.to_string()),
        other => CliError::Runtime(other.to_string()),
    }
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

#[derive(Parser)]
#[command(
    name = "prforge",
    version,
    about = "Fourier phase retrieval with HIO and Langevin refinement"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate noisy oversampled Fourier intensities of a PNG image.
    Simulate(SimulateArgs),
    /// Reconstruct an image from a measurement file.
    Reconstruct(ReconstructArgs),
    /// Score a reconstruction against ground truth.
    Evaluate(EvaluateArgs),
    /// Run the Monte Carlo benchmark over a directory of PNG images.
    Benchmark(BenchmarkArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 3.0)]
    alpha: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

/// Flags shared by `reconstruct` and `benchmark`; each overrides the config file.
#[derive(Args)]
struct RunFlags {
    /// TOML file with run settings.
    #[arg(long)]
    config: Option<PathBuf>,
    /// PRWT weights; selects the CNN denoiser unless --denoiser says otherwise.
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long, value_parser = parse_denoiser)]
    denoiser: Option<DenoiserKind>,
    #[arg(long, value_parser = parse_tta)]
    tta: Option<TtaMode>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, env = "PRFORGE_WORKERS")]
    workers: Option<usize>,
}

#[derive(Args)]
struct ReconstructArgs {
    #[arg(long)]
    measurement: PathBuf,
    #[arg(long, value_parser = parse_method)]
    method: Option<Method>,
    #[command(flatten)]
    run: RunFlags,
    #[arg(long)]
    out: PathBuf,
    /// Per-iteration CSV: iteration,branch,chain,residual,psnr.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Ground truth, enabling the PSNR trace column.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// JSON dump of the initialization outputs.
    #[arg(long)]
    dump_init: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    recon: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    #[arg(long)]
    no_flip_resolve: bool,
}

#[derive(Args)]
struct BenchmarkArgs {
    #[arg(long)]
    dir: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "2,3,4")]
    alphas: Vec<f64>,
    #[arg(long, default_value_t = 5)]
    runs: usize,
    #[arg(long, value_delimiter = ',', value_parser = parse_method, default_value = "prnet-small")]
    methods: Vec<Method>,
    #[command(flatten)]
    run: RunFlags,
    #[arg(long)]
    out: PathBuf,
    /// Histogram sidecar; defaults to the output path with a `.hist.csv` suffix.
    #[arg(long)]
    histogram: Option<PathBuf>,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_tta(s: &str) -> Result<TtaMode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_denoiser(s: &str) -> Result<DenoiserKind, String> {
    match s {
        "identity" => Ok(DenoiserKind::Identity),
        "gaussian" => Ok(DenoiserKind::Gaussian),
        "cnn" => Ok(DenoiserKind::Cnn),
        _ => Err(format!("unknown denoiser `{s}` (expected identity, gaussian or cnn)")),
    }
}

fn load_settings(flags: &RunFlags) -> CliResult<RunSettings> {
    let mut settings = match &flags.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
            toml::from_str::<RunSettings>(&text)
                .map_err(|e| CliError::Usage(format!("{}: {}", path.display(), e.message())))?
        }
        None => RunSettings::default(),
    };
    if let Some(w) = &flags.weights {
        settings.weights = Some(w.clone());
        if flags.denoiser.is_none() {
            settings.denoiser = DenoiserKind::Cnn;
        }
    }
    if let Some(d) = flags.denoiser {
        settings.denoiser = d;
    }
    if let Some(t) = flags.tta {
        settings.tta = t;
    }
    if let Some(s) = flags.seed {
        settings.seed = s;
    }
    if let Some(w) = flags.workers {
        settings.workers = Some(w);
    }
    if settings.denoiser == DenoiserKind::Cnn && settings.weights.is_none() {
        return Err(CliError::Usage("the cnn denoiser requires --weights".into()));
    }
    Ok(settings)
}

fn read_image(path: &Path) -> CliResult<Image> {
    Image::read_png(path).map_err(input)
}

fn cmd_simulate(args: SimulateArgs) -> CliResult<()> {
    let img = read_image(&args.input)?;
    let op = FourierOp::new(img.height(), img.width()).map_err(input)?;
    let meas = simulate_seeded(&op, &img, args.alpha, args.seed).map_err(input)?;
    save_measurement(&meas, &args.out).map_err(runtime)?;
    let snr = snr_db(&op, &img, &meas).map_err(runtime)?;
    println!("{}", prforge::benchmark::fmt_f64(snr));
    Ok(())
}

#[derive(Serialize)]
struct InitDump<'a> {
    branch: usize,
    residual: f64,
    height: usize,
    width: usize,
    data: &'a [f64],
}

fn write_trace(path: &Path, result: &ReconstructionResult) -> CliResult<()> {
    let mut out = String::from("iteration,branch,chain,residual,psnr\n");
    for t in &result.traces {
        for (i, r) in t.residuals.iter().enumerate() {
            let psnr = t
                .psnr
                .as_ref()
                .and_then(|p| p.get(i))
                .map(|&v| prforge::benchmark::fmt_f64(v))
                .unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                i + 1,
                t.branch,
                t.chain,
                prforge::benchmark::fmt_f64(*r),
                psnr
            ));
        }
    }
    fs::write(path, out).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

fn cmd_reconstruct(args: ReconstructArgs) -> CliResult<()> {
    let mut settings = load_settings(&args.run)?;
    if let Some(m) = args.method {
        settings.method = m;
    }
    let meas = load_measurement(&args.measurement).map_err(input)?;
    let truth = args.truth.as_deref().map(read_image).transpose()?;
    let (h, w) = meas.dims();
    let op = FourierOp::new(h, w).map_err(input)?;
    let (denoiser, lambda) = settings.load_denoiser().map_err(input)?;
    let cfg = settings
        .pipeline_config(meas.alpha(), lambda.as_deref())
        .map_err(input)?;
    let workers = settings.workers.unwrap_or(0);
    let result = with_workers(workers, || {
        reconstruct(
            &op,
            &meas,
            settings.method,
            &cfg,
            &denoiser,
            settings.tta,
            truth.as_ref(),
        )
    })
    .map_err(input)?;
    result.aggregate.write_png(&args.out).map_err(runtime)?;
    if let Some(path) = &args.trace {
        write_trace(path, &result)?;
    }
    if let Some(path) = &args.dump_init {
        let dump: Vec<InitDump> = result
            .initial
            .iter()
            .map(|c| InitDump {
                branch: c.branch,
                residual: c.residual,
                height: c.image.height(),
                width: c.image.width(),
                data: c.image.data(),
            })
            .collect();
        let json = serde_json::to_string(&dump).map_err(runtime)?;
        fs::write(path, json).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
    }
    let res = residual(&op, &result.aggregate, &meas).map_err(runtime)?;
    println!(
        "method={} tta={} chains={} residual={}",
        settings.method,
        settings.tta,
        result.images.len(),
        prforge::benchmark::fmt_f64(res)
    );
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs) -> CliResult<()> {
    let recon = read_image(&args.recon)?;
    let truth = read_image(&args.truth)?;
    let m = if args.no_flip_resolve {
        report(&recon, &truth).map_err(input)?
    } else {
        resolve_conjugate_flip(&recon, &truth).map_err(input)?.1
    };
    println!(
        "{},{},{}",
        prforge::benchmark::fmt_f64(m.psnr_db),
        format_ssim(m.ssim),
        m.resolved_flip
    );
    Ok(())
}

/// SSIM with at least one decimal so that a perfect score prints as `1.0`.
fn format_ssim(v: f64) -> String {
    if v.is_finite() && v.fract() == 0.0 {
        format!("{v:.1}")
    } else {
        prforge::benchmark::fmt_f64(v)
    }
}

fn cmd_benchmark(args: BenchmarkArgs) -> CliResult<()> {
    let settings = load_settings(&args.run)?;
    let (denoiser, lambda) = settings.load_denoiser().map_err(input)?;
    if !args.dir.is_dir() {
        return Err(CliError::Usage(format!("{}: not a directory", args.dir.display())));
    }
    let mut cfg = BenchmarkConfig::new(args.alphas.clone(), args.runs, args.methods.clone(), settings.seed);
    cfg.lambda = lambda;
    let workers = settings.workers.unwrap_or(0);
    cfg.settings = settings;
    let rep = with_workers(workers, || benchmark_dir(&args.dir, &cfg, &denoiser)).map_err(input)?;

    let file = fs::File::create(&args.out).map_err(|e| runtime(format!("{}: {e}", args.out.display())))?;
    write_rows_csv(&rep.rows, file).map_err(runtime)?;
    let hist_path = args
        .histogram
        .clone()
        .unwrap_or_else(|| args.out.with_extension("hist.csv"));
    let file = fs::File::create(&hist_path).map_err(|e| runtime(format!("{}: {e}", hist_path.display())))?;
    write_histograms_csv(&rep.histograms, file).map_err(runtime)?;

    print!("{}", format_summary(&rep.summary));
    for (path, why) in &rep.skipped {
        eprintln!("skipped {}: {why}", path.display());
    }
    println!("skipped={}", rep.skipped.len());
    if rep.had_errors() {
        return Err(CliError::Runtime(format!(
            "{} unreadable image(s) skipped",
            rep.skipped.len()
        )));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Reconstruct(a) => cmd_reconstruct(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Benchmark(a) => cmd_benchmark(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (CliError::Usage(msg) | CliError::Runtime(msg)) = &e;
            eprintln!("error: {msg}");
            ExitCode::from(e.code())
        }
    }
}
