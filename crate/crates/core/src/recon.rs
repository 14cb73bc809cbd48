//! Method dispatch and file-capturable run settings.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::denoiser::{load_weights, Denoiser, DenoiserModel, DEFAULT_BLUR_KAPPA};
use crate::error::{Error, Result};
use crate::fourier::{FourierOp, Measurement};
use crate::hio::run_hio;
use crate::image::Image;
use crate::init::{random_phase_start, Candidate};
use crate::langevin::{
    default_schedule, initial_estimates, ChainTrace, LambdaSchedule, PipelineConfig, ReconstructionResult,
};
use crate::rng::SeedTree;
use crate::tta::{run_with_tta, TtaMode};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    /// One random start and `s + n` plain HIO iterations.
    #[serde(rename = "hio")]
    Hio,
    /// The multi-start initialization stage alone.
    #[serde(rename = "init")]
    Init,
    #[default]
    #[serde(rename = "prnet-small")]
    PrnetSmall,
    #[serde(rename = "prnet-large")]
    PrnetLarge,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Hio, Method::Init, Method::PrnetSmall, Method::PrnetLarge];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Hio => "hio",
            Method::Init => "init",
            Method::PrnetSmall => "prnet-small",
            Method::PrnetLarge => "prnet-large",
        }
    }

    pub fn uses_denoiser(self) -> bool {
        matches!(self, Method::PrnetSmall | Method::PrnetLarge)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL.into_iter().find(|m| m.as_str() == s).ok_or_else(|| {
            Error::InvalidParameter(format!(
                "unknown method `{s}` (expected one of: hio, init, prnet-small, prnet-large)"
            ))
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DenoiserKind {
    Identity,
    #[default]
    Gaussian,
    Cnn,
}

/// Every knob of a reconstruction run. All fields are optional in a config file;
/// unset counts fall back to the defaults of the chosen method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSettings {
    pub method: Method,
    pub tta: TtaMode,
    pub seed: u64,
    pub denoiser: DenoiserKind,
    pub kappa: f64,
    pub weights: Option<PathBuf>,
    pub workers: Option<usize>,
    pub outer_iters: Option<usize>,
    pub inner_iters: Option<usize>,
    pub beta: Option<f64>,
    pub enforce_support: Option<bool>,
    pub enforce_nonneg: Option<bool>,
    pub chains: Option<usize>,
    pub num_starts: Option<usize>,
    pub short_iters: Option<usize>,
    pub long_iters: Option<usize>,
    pub lambda_max: f64,
    pub lambda_min: f64,
    pub initial_sigma: Option<f64>,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self {
            method: Method::default(),
            tta: TtaMode::None,
            seed: 0,
            denoiser: DenoiserKind::default(),
            kappa: DEFAULT_BLUR_KAPPA,
            weights: None,
            workers: None,
            outer_iters: None,
            inner_iters: None,
            beta: None,
            enforce_support: None,
            enforce_nonneg: None,
            chains: None,
            num_starts: None,
            short_iters: None,
            long_iters: None,
            lambda_max: 1.0,
            lambda_min: 0.01,
            initial_sigma: None,
        }
    }
}

impl RunSettings {
    /// Builds the pipeline configuration for `alpha`. A `lambda` vector (e.g. from
    /// a weights archive) replaces the default schedule and fixes `T`.
    pub fn pipeline_config(&self, alpha: f64, lambda: Option<&[f64]>) -> Result<PipelineConfig> {
        let mut cfg = match self.method {
            Method::PrnetLarge => PipelineConfig::large(alpha, self.seed),
            _ => PipelineConfig::small(alpha, self.seed),
        };
        if let Some(b) = self.beta {
            cfg.hio.beta = b;
        }
        if let Some(v) = self.enforce_support {
            cfg.hio.enforce_support = v;
        }
        if let Some(v) = self.enforce_nonneg {
            cfg.hio.enforce_nonneg = v;
        }
        cfg.init.hio = cfg.hio;
        if let Some(k) = self.inner_iters {
            cfg.inner_iters = k;
        }
        if let Some(c) = self.chains {
            if !self.method.uses_denoiser() && c != 1 {
                return Err(Error::InvalidParameter(format!(
                    "method {} produces a single chain",
                    self.method
                )));
            }
            cfg.chains = c;
        }
        if let Some(m) = self.num_starts {
            cfg.init.num_starts = m;
        }
        if let Some(s) = self.short_iters {
            cfg.init.short_iters = s;
        }
        if let Some(n) = self.long_iters {
            cfg.init.long_iters = n;
        }
        cfg.initial_sigma = self.initial_sigma;
        match lambda {
            Some(l) => {
                if let Some(t) = self.outer_iters.filter(|&t| t != l.len()) {
                    return Err(Error::InvalidParameter(format!(
                        "outer_iters = {t} disagrees with the {}-entry lambda schedule",
                        l.len()
                    )));
                }
                cfg.outer_iters = l.len();
                cfg.schedule = LambdaSchedule::new(l.to_vec())?;
            }
            None => {
                cfg.outer_iters = self.outer_iters.unwrap_or(cfg.outer_iters);
                cfg.schedule = default_schedule(cfg.outer_iters, self.lambda_max, self.lambda_min)?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// The configured denoiser plus the archive's schedule, if it carries one.
    pub fn load_denoiser(&self) -> Result<(DenoiserModel, Option<Vec<f64>>)> {
        match self.denoiser {
            DenoiserKind::Identity => Ok((DenoiserModel::Identity, None)),
            DenoiserKind::Gaussian => {
                if !(self.kappa.is_finite() && self.kappa >= 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "kappa must be >= 0, got {}",
                        self.kappa
                    )));
                }
                Ok((DenoiserModel::GaussianBlur { kappa: self.kappa }, None))
            }
            DenoiserKind::Cnn => {
                let path = self
                    .weights
                    .as_ref()
                    .ok_or_else(|| Error::InvalidParameter("denoiser `cnn` requires a weights file".into()))?;
                let archive = load_weights(path)?;
                let lambda = archive.lambda().map(<[f64]>::to_vec);
                Ok((DenoiserModel::from_archive(&archive)?, lambda))
            }
        }
    }
}

/// Runs `method` on `meas`. Every method returns a [`ReconstructionResult`] whose
/// `aggregate` is the reconstruction.
#[allow(clippy::too_many_arguments)]
pub fn reconstruct(
    op: &FourierOp,
    meas: &Measurement,
    method: Method,
    cfg: &PipelineConfig,
    denoiser: &dyn Denoiser,
    tta: TtaMode,
    truth: Option<&Image>,
) -> Result<ReconstructionResult> {
    if !method.uses_denoiser() && tta != TtaMode::None {
        return Err(Error::InvalidParameter(format!(
            "TTA applies only to prnet methods, not {method}"
        )));
    }
    match method {
        Method::Hio => {
            cfg.validate()?;
            let init = cfg.init_config();
            let mut rng = SeedTree::new(init.master_seed).child(0).rng();
            let x0 = random_phase_start(op, meas, &mut rng)?;
            let iters = init.short_iters + init.long_iters;
            let (x, trace) = run_hio(op, &x0, meas.magnitudes(), iters, &cfg.hio)?;
            Ok(single(x, trace.residuals, Vec::new(), cfg.master_seed))
        }
        Method::Init => {
            let mut one = cfg.clone();
            one.chains = 1;
            let initial = initial_estimates(op, meas, &one)?;
            let best = &initial[0];
            let residuals = best
                .short_trace
                .residuals
                .iter()
                .chain(&best.long_trace.residuals)
                .copied()
                .collect();
            let x = best.image.clone();
            Ok(single(x, residuals, initial, cfg.master_seed))
        }
        Method::PrnetSmall | Method::PrnetLarge => run_with_tta(op, meas, cfg, denoiser, tta, truth),
    }
}

fn single(x: Image, residuals: Vec<f64>, initial: Vec<Candidate>, master_seed: u64) -> ReconstructionResult {
    ReconstructionResult {
        images: vec![x.clone()],
        aggregate: x,
        traces: vec![ChainTrace {
            branch: 0,
            chain: 0,
            residuals,
            psnr: None,
        }],
        initial,
        master_seed,
        branches: 1,
    }
}
