//! Monte Carlo benchmark over an image directory.
//!
//! Each (image, α, run) draws its measurement from a seed derived from the
//! master seed, the image name, the bits of α and the run index. All methods of
//! one cell share the measurement and the reconstruction seed.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::denoiser::Denoiser;
use crate::error::{Error, Result};
use crate::fourier::{residual, simulate_seeded, FourierOp};
use crate::image::Image;
use crate::metrics::resolve_conjugate_flip;
use crate::recon::{reconstruct, Method, RunSettings};
use crate::rng::SeedTree;
use crate::tta::TtaMode;

pub const DEFAULT_HISTOGRAM_BINS: usize = 40;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkConfig {
    pub alphas: Vec<f64>,
    pub runs: usize,
    pub methods: Vec<Method>,
    pub master_seed: u64,
    /// Iteration counts and flags shared by every method; `method` and `seed` are ignored.
    pub settings: RunSettings,
    /// Schedule override, typically from a weights archive.
    pub lambda: Option<Vec<f64>>,
    pub bins: usize,
}

impl BenchmarkConfig {
    pub fn new(alphas: Vec<f64>, runs: usize, methods: Vec<Method>, master_seed: u64) -> Self {
        Self {
            alphas,
            runs,
            methods,
            master_seed,
            settings: RunSettings::default(),
            lambda: None,
            bins: DEFAULT_HISTOGRAM_BINS,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkRow {
    pub image: String,
    pub alpha: f64,
    pub run: usize,
    pub method: Method,
    pub tta: TtaMode,
    pub psnr_db: f64,
    pub ssim: f64,
    pub flip_resolved: bool,
    pub residual: f64,
    pub runtime_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub method: Method,
    pub alpha: f64,
    pub count: usize,
    pub mean_psnr_db: f64,
    pub mean_ssim: f64,
    pub mean_runtime_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistogramBin {
    pub metric: String,
    pub bin_lo: f64,
    pub bin_hi: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BenchmarkReport {
    pub rows: Vec<BenchmarkRow>,
    pub summary: Vec<SummaryRow>,
    pub histograms: Vec<HistogramBin>,
    /// Files that could not be read, with the reason.
    pub skipped: Vec<(PathBuf, String)>,
}

impl BenchmarkReport {
    pub fn had_errors(&self) -> bool {
        !self.skipped.is_empty()
    }
}

/// Seed node for one benchmark cell.
pub fn cell_seed(master: u64, image: &str, alpha: f64, run: usize) -> SeedTree {
    SeedTree::new(master)
        .child_bytes(image.as_bytes())
        .child(alpha.to_bits())
        .child(run as u64)
}

/// Sorted `*.png` paths in `dir`.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")) {
            paths.push(path);
        }
    }
    paths.sort();
    Ok(paths)
}

/// Benchmarks every PNG in `dir`; unreadable files are skipped and reported.
pub fn benchmark_dir(dir: &Path, cfg: &BenchmarkConfig, denoiser: &dyn Denoiser) -> Result<BenchmarkReport> {
    let mut images = Vec::new();
    let mut skipped = Vec::new();
    for path in list_images(dir)? {
        match Image::read_png(&path) {
            Ok(img) => {
                let name = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
                images.push((name, img));
            }
            Err(e) => skipped.push((path, e.to_string())),
        }
    }
    if images.is_empty() && skipped.is_empty() {
        return Err(Error::InvalidParameter(format!("no PNG images in {}", dir.display())));
    }
    let mut report = benchmark_images(&images, cfg, denoiser)?;
    report.skipped = skipped;
    Ok(report)
}

/// Benchmarks named in-memory images.
pub fn benchmark_images(
    images: &[(String, Image)],
    cfg: &BenchmarkConfig,
    denoiser: &dyn Denoiser,
) -> Result<BenchmarkReport> {
    if cfg.runs == 0 || cfg.alphas.is_empty() || cfg.methods.is_empty() {
        return Err(Error::InvalidParameter(
            "benchmark needs at least one alpha, run and method".into(),
        ));
    }
    let mut rows = Vec::new();
    for (name, truth) in images {
        let op = FourierOp::new(truth.height(), truth.width())?;
        for &alpha in &cfg.alphas {
            for run in 0..cfg.runs {
                let cell = cell_seed(cfg.master_seed, name, alpha, run);
                let meas = simulate_seeded(&op, truth, alpha, cell.child(0).seed())?;
                for &method in &cfg.methods {
                    let settings = RunSettings {
                        method,
                        seed: cell.child(1).seed(),
                        ..cfg.settings.clone()
                    };
                    let tta = if method.uses_denoiser() {
                        settings.tta
                    } else {
                        TtaMode::None
                    };
                    let pcfg = settings.pipeline_config(alpha, cfg.lambda.as_deref())?;
                    let start = Instant::now();
                    let result = reconstruct(&op, &meas, method, &pcfg, denoiser, tta, None)?;
                    let runtime_s = start.elapsed().as_secs_f64();
                    let (_, m) = resolve_conjugate_flip(&result.aggregate, truth)?;
                    rows.push(BenchmarkRow {
                        image: name.clone(),
                        alpha,
                        run,
                        method,
                        tta,
                        psnr_db: m.psnr_db,
                        ssim: m.ssim,
                        flip_resolved: m.resolved_flip,
                        residual: residual(&op, &result.aggregate, &meas)?,
                        runtime_s,
                    });
                }
            }
        }
    }
    rows.sort_by(|a, b| {
        a.image
            .cmp(&b.image)
            .then(a.alpha.total_cmp(&b.alpha))
            .then(a.run.cmp(&b.run))
            .then(a.method.cmp(&b.method))
    });
    let summary = summarize(&rows);
    let histograms = histograms(&rows, cfg.bins);
    Ok(BenchmarkReport {
        rows,
        summary,
        histograms,
        skipped: Vec::new(),
    })
}

fn groups(rows: &[BenchmarkRow]) -> Vec<(Method, f64, Vec<&BenchmarkRow>)> {
    let mut keys: Vec<(Method, f64)> = rows.iter().map(|r| (r.method, r.alpha)).collect();
    keys.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    keys.dedup();
    keys.into_iter()
        .map(|(m, a)| (m, a, rows.iter().filter(|r| r.method == m && r.alpha == a).collect()))
        .collect()
}

/// Per (method, α) means over all rows.
pub fn summarize(rows: &[BenchmarkRow]) -> Vec<SummaryRow> {
    groups(rows)
        .into_iter()
        .map(|(method, alpha, g)| {
            let n = g.len() as f64;
            SummaryRow {
                method,
                alpha,
                count: g.len(),
                mean_psnr_db: g.iter().map(|r| r.psnr_db).sum::<f64>() / n,
                mean_ssim: g.iter().map(|r| r.ssim).sum::<f64>() / n,
                mean_runtime_s: g.iter().map(|r| r.runtime_s).sum::<f64>() / n,
            }
        })
        .collect()
}

/// Uniform bins over the observed finite range of `values`.
pub fn histogram(values: &[f64], bins: usize) -> Vec<(f64, f64, usize)> {
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.is_empty() || bins == 0 {
        return Vec::new();
    }
    let mut lo = finite.iter().copied().fold(f64::INFINITY, f64::min);
    let mut hi = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        lo -= 0.5;
        hi += 0.5;
    }
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for v in finite {
        let k = (((v - lo) / width) as usize).min(bins - 1);
        counts[k] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(k, c)| {
            let bin_hi = if k + 1 == bins { hi } else { lo + (k + 1) as f64 * width };
            (lo + k as f64 * width, bin_hi, c)
        })
        .collect()
}

/// PSNR and SSIM histograms per (method, α), labelled `metric@method@alpha`.
pub fn histograms(rows: &[BenchmarkRow], bins: usize) -> Vec<HistogramBin> {
    let mut out = Vec::new();
    for (method, alpha, g) in groups(rows) {
        for (label, values) in [
            ("psnr_db", g.iter().map(|r| r.psnr_db).collect::<Vec<_>>()),
            ("ssim", g.iter().map(|r| r.ssim).collect()),
        ] {
            let metric = format!("{label}@{method}@{alpha}");
            out.extend(
                histogram(&values, bins)
                    .into_iter()
                    .map(|(bin_lo, bin_hi, count)| HistogramBin {
                        metric: metric.clone(),
                        bin_lo,
                        bin_hi,
                        count,
                    }),
            );
        }
    }
    out
}

/// Formats a float for CSV: shortest round-trip form, `inf`/`-inf`/`nan` spelled out.
pub fn fmt_f64(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else if v.is_nan() {
        "nan".into()
    } else {
        v.to_string()
    }
}

pub fn write_rows_csv<W: std::io::Write>(rows: &[BenchmarkRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "image",
        "alpha",
        "run",
        "method",
        "tta",
        "psnr_db",
        "ssim",
        "flip_resolved",
        "residual",
        "runtime_s",
    ])?;
    for r in rows {
        w.write_record([
            r.image.clone(),
            fmt_f64(r.alpha),
            r.run.to_string(),
            r.method.to_string(),
            r.tta.to_string(),
            fmt_f64(r.psnr_db),
            fmt_f64(r.ssim),
            r.flip_resolved.to_string(),
            fmt_f64(r.residual),
            fmt_f64(r.runtime_s),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

pub fn write_histograms_csv<W: std::io::Write>(bins: &[HistogramBin], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["metric", "bin_lo", "bin_hi", "count"])?;
    for b in bins {
        w.write_record([
            b.metric.clone(),
            fmt_f64(b.bin_lo),
            fmt_f64(b.bin_hi),
            b.count.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// Plain-text table of the summary.
pub fn format_summary(summary: &[SummaryRow]) -> String {
    let mut s = format!(
        "{:<12} {:>6} {:>6} {:>10} {:>8} {:>10}\n",
        "method", "alpha", "n", "psnr_db", "ssim", "runtime_s"
    );
    for r in summary {
        let _ = writeln!(
            s,
            "{:<12} {:>6} {:>6} {:>10.3} {:>8.4} {:>10.3}",
            r.method.as_str(),
            r.alpha,
            r.count,
            r.mean_psnr_db,
            r.mean_ssim,
            r.mean_runtime_s
        );
    }
    s
}
