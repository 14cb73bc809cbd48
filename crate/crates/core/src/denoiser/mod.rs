//! Denoisers `D(x, σ)` and the score they induce, `(D(x, σ) − x) / σ²`.

mod cnn;
mod weights;

pub use cnn::{cnn_forward, ResidualCnn, CNN_LAYERS};
pub use weights::{load_weights, TensorSpec, WeightsArchive, WeightsHeader, PRWT_MAGIC, PRWT_VERSION};

use crate::error::{Error, Result};
use crate::image::Image;

/// Standard deviation of the noise a denoiser is asked to remove, in pixel units.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct NoiseLevel(f64);

impl NoiseLevel {
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "noise level must be finite and >= 0, got {sigma}"
            )));
        }
        Ok(Self(sigma))
    }

    pub fn sigma(self) -> f64 {
        self.0
    }
}

pub trait Denoiser: Send + Sync {
    fn denoise(&self, x: &Image, level: NoiseLevel) -> Result<Image>;
}

pub const DEFAULT_BLUR_KAPPA: f64 = 5.0;
const MAX_BLUR_STD: f64 = 3.0;

#[derive(Debug, Clone, PartialEq)]
pub enum DenoiserModel {
    Identity,
    /// Separable Gaussian blur with `std_px = clamp(kappa·σ, 0, 3)`, reflect boundary.
    GaussianBlur {
        kappa: f64,
    },
    ResidualCnn(Box<ResidualCnn>),
}

impl DenoiserModel {
    pub fn gaussian() -> Self {
        DenoiserModel::GaussianBlur {
            kappa: DEFAULT_BLUR_KAPPA,
        }
    }

    pub fn from_archive(archive: &WeightsArchive) -> Result<Self> {
        Ok(DenoiserModel::ResidualCnn(Box::new(ResidualCnn::from_archive(
            archive,
        )?)))
    }
}

impl Denoiser for DenoiserModel {
    fn denoise(&self, x: &Image, level: NoiseLevel) -> Result<Image> {
        match self {
            DenoiserModel::Identity => Ok(x.clone()),
            DenoiserModel::GaussianBlur { kappa } => {
                Ok(gaussian_blur(x, (kappa * level.sigma()).clamp(0.0, MAX_BLUR_STD)))
            }
            DenoiserModel::ResidualCnn(net) => net.denoise(x, level),
        }
    }
}

/// `(D(x, σ) − x) / σ²`.
pub fn score_from_denoiser(denoiser: &dyn Denoiser, x: &Image, level: NoiseLevel) -> Result<Image> {
    let sigma = level.sigma();
    if sigma == 0.0 {
        return Err(Error::InvalidParameter("score requires a positive noise level".into()));
    }
    let d = denoiser.denoise(x, level)?;
    x.ensure_same_dims(&d)?;
    let s2 = sigma * sigma;
    Ok(Image::from_vec_unchecked(
        x.height(),
        x.width(),
        d.data().iter().zip(x.data()).map(|(a, b)| (a - b) / s2).collect(),
    ))
}

/// Whole-sample symmetric reflection (`d c b | a b c d | c b a`), periodic for any offset.
pub(crate) fn reflect(idx: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = idx.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - m) as usize
    }
}

fn gaussian_kernel(std: f64) -> Vec<f64> {
    let radius = (3.0 * std).ceil() as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|d| (-(d * d) as f64 / (2.0 * std * std)).exp())
        .collect();
    let total: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= total);
    k
}

pub(crate) fn gaussian_blur(x: &Image, std: f64) -> Image {
    if std <= 0.0 {
        return x.clone();
    }
    let kernel = gaussian_kernel(std);
    let radius = (kernel.len() / 2) as isize;
    let (h, w) = x.dims();
    let src = x.data();
    let mut tmp = vec![0.0; h * w];
    for i in 0..h {
        for j in 0..w {
            tmp[i * w + j] = kernel
                .iter()
                .enumerate()
                .map(|(k, &c)| c * src[i * w + reflect(j as isize + k as isize - radius, w)])
                .sum();
        }
    }
    let mut out = vec![0.0; h * w];
    for i in 0..h {
        for j in 0..w {
            out[i * w + j] = kernel
                .iter()
                .enumerate()
                .map(|(k, &c)| c * tmp[reflect(i as isize + k as isize - radius, h) * w + j])
                .sum();
        }
    }
    Image::from_vec_unchecked(h, w, out)
}
