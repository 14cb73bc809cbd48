//! Flip and D4 test-time augmentation.
//!
//! Initializations are computed once. Each branch transforms them together with
//! the measurement grid, runs the refinement chains in the transformed frame,
//! maps the chain outputs back and the aggregate averages every branch chain.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::denoiser::Denoiser;
use crate::error::{Error, Result};
use crate::exec::map_indexed;
use crate::fourier::{check_measurement, FourierOp, Measurement};
use crate::image::{apply_d4, permute_frequency_grid, Image, D4};
use crate::langevin::{aggregate_mean, initial_estimates, run_chains, run_prnet, PipelineConfig, ReconstructionResult};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TtaMode {
    #[default]
    None,
    Flip,
    D4,
}

impl TtaMode {
    pub const ALL: [TtaMode; 3] = [TtaMode::None, TtaMode::Flip, TtaMode::D4];

    pub fn transforms(self) -> &'static [D4] {
        match self {
            TtaMode::None => &[D4::R0],
            TtaMode::Flip => &[D4::R0, D4::R180],
            TtaMode::D4 => &D4::ALL,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TtaMode::None => "none",
            TtaMode::Flip => "flip",
            TtaMode::D4 => "d4",
        }
    }
}

impl fmt::Display for TtaMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TtaMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TtaMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown TTA mode `{s}` (expected none, flip or d4)")))
    }
}

/// How branch noise streams are assigned.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum BranchStreams {
    /// Branch `b` draws from its own stream.
    #[default]
    Split,
    /// Every branch reuses the stream of the untransformed branch.
    Shared,
}

/// The measurement of `t·x` given the measurement of `x`.
pub fn transform_measurement(meas: &Measurement, t: D4) -> Result<Measurement> {
    let (n1, n2) = meas.grid_dims();
    let intensities = permute_frequency_grid(meas.intensities(), n1, n2, t)?;
    let magnitudes = permute_frequency_grid(meas.magnitudes(), n1, n2, t)?;
    Ok(meas.with_arrays(intensities, magnitudes))
}

pub fn run_with_tta(
    op: &FourierOp,
    meas: &Measurement,
    cfg: &PipelineConfig,
    denoiser: &dyn Denoiser,
    mode: TtaMode,
    truth: Option<&Image>,
) -> Result<ReconstructionResult> {
    run_with_tta_streams(op, meas, cfg, denoiser, mode, truth, BranchStreams::Split)
}

/// [`run_with_tta`] with an explicit branch stream assignment.
#[allow(clippy::too_many_arguments)]
pub fn run_with_tta_streams(
    op: &FourierOp,
    meas: &Measurement,
    cfg: &PipelineConfig,
    denoiser: &dyn Denoiser,
    mode: TtaMode,
    truth: Option<&Image>,
    streams: BranchStreams,
) -> Result<ReconstructionResult> {
    if mode == TtaMode::None {
        return run_prnet(op, meas, cfg, denoiser, truth);
    }
    check_measurement(op, meas)?;
    let (h, w) = op.inner_dims();
    if mode == TtaMode::D4 && h != w {
        return Err(Error::NotSquare(D4::R90));
    }
    let initial = initial_estimates(op, meas, cfg)?;
    let transforms = mode.transforms();
    let branches = map_indexed(cfg.execution, transforms.len(), |b| -> Result<_> {
        let t = transforms[b];
        let starts = initial
            .iter()
            .map(|c| apply_d4(&c.image, t))
            .collect::<Result<Vec<_>>>()?;
        let tmeas = transform_measurement(meas, t)?;
        let ttruth = truth.map(|x| apply_d4(x, t)).transpose()?;
        let key = match streams {
            BranchStreams::Split => b,
            BranchStreams::Shared => 0,
        };
        let chains = run_chains(
            op,
            &tmeas,
            &starts,
            cfg,
            denoiser,
            cfg.chain_streams(key),
            b,
            ttruth.as_ref(),
        )?;
        chains
            .into_iter()
            .map(|(img, trace)| Ok((apply_d4(&img, t.inverse())?, trace)))
            .collect::<Result<Vec<_>>>()
    });
    let mut images = Vec::with_capacity(transforms.len() * cfg.chains);
    let mut traces = Vec::with_capacity(images.capacity());
    for branch in branches {
        for (img, trace) in branch? {
            images.push(img);
            traces.push(trace);
        }
    }
    Ok(ReconstructionResult {
        aggregate: aggregate_mean(&images)?,
        images,
        traces,
        initial,
        master_seed: cfg.master_seed,
        branches: transforms.len(),
    })
}
