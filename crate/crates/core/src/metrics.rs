//! PSNR, SSIM and conjugate-flip ambiguity resolution.

use crate::error::{Error, Result};
use crate::image::{apply_d4, Image, D4};

pub const DEFAULT_PEAK: f64 = 255.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricReport {
    pub psnr_db: f64,
    pub ssim: f64,
    /// Whether the 180°-rotated reconstruction was the better match.
    pub resolved_flip: bool,
}

pub fn mse(a: &Image, b: &Image) -> Result<f64> {
    a.ensure_same_dims(b)?;
    Ok(a.data().iter().zip(b.data()).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64)
}

/// `10 log10(peak² / MSE)`; `+∞` when the images are identical.
pub fn psnr(a: &Image, b: &Image, peak: f64) -> Result<f64> {
    let m = mse(a, b)?;
    Ok(if m == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (peak * peak / m).log10()
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsimParams {
    pub window: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
    pub dynamic_range: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        Self {
            window: 11,
            sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
            dynamic_range: 255.0,
        }
    }
}

fn gaussian_window(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let g: Vec<f64> = (0..size)
        .map(|k| (-((k as f64 - c).powi(2)) / (2.0 * sigma * sigma)).exp())
        .collect();
    let mut w = Vec::with_capacity(size * size);
    for gi in &g {
        for gj in &g {
            w.push(gi * gj);
        }
    }
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    w
}

/// Mean single-scale SSIM over all valid window positions.
pub fn ssim_with(a: &Image, b: &Image, p: &SsimParams) -> Result<f64> {
    a.ensure_same_dims(b)?;
    let (h, w) = a.dims();
    let n = p.window;
    if h < n || w < n {
        return Err(Error::dims(format!("at least {n}x{n}"), format!("{h}x{w}")));
    }
    let win = gaussian_window(n, p.sigma);
    let c1 = (p.k1 * p.dynamic_range).powi(2);
    let c2 = (p.k2 * p.dynamic_range).powi(2);
    let (x, y) = (a.data(), b.data());
    let mut total = 0.0;
    let mut count = 0usize;
    for i in 0..=h - n {
        for j in 0..=w - n {
            let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for di in 0..n {
                for dj in 0..n {
                    let wt = win[di * n + dj];
                    let idx = (i + di) * w + j + dj;
                    let (u, v) = (x[idx], y[idx]);
                    mx += wt * u;
                    my += wt * v;
                    sxx += wt * u * u;
                    syy += wt * v * v;
                    sxy += wt * u * v;
                }
            }
            let vx = sxx - mx * mx;
            let vy = syy - my * my;
            let cxy = sxy - mx * my;
            total += ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
            count += 1;
        }
    }
    Ok(total / count as f64)
}

pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    ssim_with(a, b, &SsimParams::default())
}

/// PSNR and SSIM of `recon` against `truth` without ambiguity resolution.
pub fn report(recon: &Image, truth: &Image) -> Result<MetricReport> {
    Ok(MetricReport {
        psnr_db: psnr(recon, truth, DEFAULT_PEAK)?,
        ssim: ssim(recon, truth)?,
        resolved_flip: false,
    })
}

fn psnr_report(recon: &Image, truth: &Image, flipped: bool) -> Result<MetricReport> {
    let ssim = if recon.height() >= 11 && recon.width() >= 11 {
        ssim(recon, truth)?
    } else {
        f64::NAN
    };
    Ok(MetricReport {
        psnr_db: psnr(recon, truth, DEFAULT_PEAK)?,
        ssim,
        resolved_flip: flipped,
    })
}

/// Scores `recon` and its 180° rotation against `truth` and keeps the better by
/// PSNR (ties keep the unrotated image). SSIM is NaN for images smaller than the window.
pub fn resolve_conjugate_flip(recon: &Image, truth: &Image) -> Result<(Image, MetricReport)> {
    recon.ensure_same_dims(truth)?;
    let flipped = apply_d4(recon, D4::R180)?;
    let straight = psnr(recon, truth, DEFAULT_PEAK)?;
    let rotated = psnr(&flipped, truth, DEFAULT_PEAK)?;
    if rotated > straight {
        let r = psnr_report(&flipped, truth, true)?;
        Ok((flipped, r))
    } else {
        let r = psnr_report(recon, truth, false)?;
        Ok((recon.clone(), r))
    }
}
