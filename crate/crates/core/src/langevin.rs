//! Stochastic refinement: denoise, re-impose a blended measurement with a few
//! HIO iterations, and inject Gaussian noise of std `α√λ_i/√2`, for `T` steps.
//! Several chains may run from different initializations and are averaged.

use serde::{Deserialize, Serialize};

use crate::denoiser::{Denoiser, NoiseLevel};
use crate::error::{Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::fourier::{check_measurement, modulus, residual, FourierOp, Measurement};
use crate::hio::{measurement_projection, run_hio, HioConfig};
use crate::image::{apply_d4, Image, D4};
use crate::init::{initialization_stage, Candidate, InitConfig};
use crate::metrics::resolve_conjugate_flip;
use crate::rng::{GaussianSource, SeedTree};

const INIT_STREAM: u64 = 0;
const CHAIN_STREAM: u64 = 1;

/// Per-step measurement weights `λ_1..λ_T`, each in `(0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaSchedule(Vec<f64>);

impl LambdaSchedule {
    pub fn new(lambdas: Vec<f64>) -> Result<Self> {
        if lambdas.is_empty() {
            return Err(Error::InvalidParameter("lambda schedule must not be empty".into()));
        }
        if let Some(bad) = lambdas.iter().find(|&&l| !(l > 0.0 && l <= 1.0)) {
            return Err(Error::InvalidParameter(format!("lambda {bad} outside (0, 1]")));
        }
        Ok(Self(lambdas))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `λ_i` for a 1-based step index.
    pub fn at(&self, i: usize) -> f64 {
        self.0[i - 1]
    }
}

/// Log-linear interpolation from `lambda_max` down to `lambda_min` over `t` steps.
pub fn default_schedule(t: usize, lambda_max: f64, lambda_min: f64) -> Result<LambdaSchedule> {
    if t == 0 {
        return Err(Error::InvalidParameter("schedule length must be >= 1".into()));
    }
    if !(lambda_min > 0.0 && lambda_min <= lambda_max && lambda_max <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "need 0 < lambda_min <= lambda_max <= 1, got ({lambda_min}, {lambda_max})"
        )));
    }
    if t == 1 {
        return LambdaSchedule::new(vec![lambda_max]);
    }
    let (hi, lo) = (lambda_max.ln(), lambda_min.ln());
    let last = (t - 1) as f64;
    let mut v: Vec<f64> = (0..t).map(|k| (hi + (lo - hi) * k as f64 / last).exp()).collect();
    v[0] = lambda_max;
    v[t - 1] = lambda_min;
    LambdaSchedule::new(v)
}

/// `λ y + (1 − λ)|A x|`.
pub fn blend_measurement(op: &FourierOp, y: &[f64], x: &Image, lambda: f64) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidParameter(format!("lambda {lambda} outside [0, 1]")));
    }
    if y.len() != op.num_bins() {
        return Err(Error::dims(op.num_bins(), y.len()));
    }
    let field = op.apply(x)?;
    Ok(y.iter()
        .zip(&field.data)
        .map(|(&yv, c)| lambda * yv + (1.0 - lambda) * modulus(*c))
        .collect())
}

/// Std of the noise injected after a step with weight `λ`: `α√λ/√2`.
pub fn injected_noise_std(alpha: f64, lambda: f64) -> f64 {
    alpha * lambda.sqrt() / std::f64::consts::SQRT_2
}

/// Adds `std · ε`, `ε ~ N(0, I)`, to every pixel of the image block.
pub fn inject_noise(img: &Image, std: f64, noise: &mut impl GaussianSource) -> Image {
    if std == 0.0 {
        return img.clone();
    }
    let mut out = img.clone();
    for v in out.data_mut() {
        *v += std * noise.next_gaussian();
    }
    out
}

/// The single-projection Langevin update with step size `γ = σ²`:
/// `A†( phase(Ax̃) ⊙ (λy + (1−λ)|Ax̃|) ) + (α√λ/√2) v`, `x̃ = D(x, σ)`.
#[allow(clippy::too_many_arguments)]
pub fn langevin_update(
    op: &FourierOp,
    x: &Image,
    meas: &Measurement,
    lambda: f64,
    alpha: f64,
    denoiser: &dyn Denoiser,
    level: NoiseLevel,
    noise: &mut impl GaussianSource,
) -> Result<Image> {
    check_measurement(op, meas)?;
    let denoised = denoiser.denoise(x, level)?;
    let target = blend_measurement(op, meas.magnitudes(), &denoised, lambda)?;
    let projected = measurement_projection(op, &denoised, &target)?;
    Ok(inject_noise(&projected, injected_noise_std(alpha, lambda), noise))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Number of denoising steps `T`.
    pub outer_iters: usize,
    /// HIO iterations per step `K`.
    pub inner_iters: usize,
    pub hio: HioConfig,
    pub alpha: f64,
    pub chains: usize,
    pub master_seed: u64,
    pub schedule: LambdaSchedule,
    /// Denoiser noise level at the first step; defaults to `α/√2`.
    pub initial_sigma: Option<f64>,
    pub init: InitConfig,
    /// Rotate kept initializations by 180° where that brings them closer to the best one.
    #[serde(default = "default_true")]
    pub align_starts: bool,
    pub execution: Execution,
}

fn default_true() -> bool {
    true
}

impl PipelineConfig {
    /// Single-chain configuration: `T = 18`, `K = 5`, `β = 0.9`.
    pub fn small(alpha: f64, master_seed: u64) -> Self {
        Self {
            outer_iters: 18,
            inner_iters: 5,
            hio: HioConfig::default(),
            alpha,
            chains: 1,
            master_seed,
            schedule: default_schedule(18, 1.0, 0.01).expect("valid default schedule"),
            initial_sigma: None,
            init: InitConfig::small(master_seed),
            align_starts: true,
            execution: Execution::default(),
        }
    }

    /// Ten chains from the ten best of 100 initializations.
    pub fn large(alpha: f64, master_seed: u64) -> Self {
        Self {
            chains: 10,
            init: InitConfig::large(master_seed),
            ..Self::small(alpha, master_seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.outer_iters == 0 || self.inner_iters == 0 || self.chains == 0 {
            return Err(Error::InvalidParameter("T, K and chains must all be >= 1".into()));
        }
        if self.schedule.len() != self.outer_iters {
            return Err(Error::InvalidParameter(format!(
                "lambda schedule has {} entries, expected T = {}",
                self.schedule.len(),
                self.outer_iters
            )));
        }
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha must be >= 0, got {}",
                self.alpha
            )));
        }
        if let Some(s) = self.initial_sigma {
            NoiseLevel::new(s)?;
        }
        self.hio.validate()?;
        self.init_config().validate()
    }

    /// The initialization settings actually used: seeded from the master seed and
    /// keeping one candidate per chain.
    pub fn init_config(&self) -> InitConfig {
        InitConfig {
            keep: self.chains,
            master_seed: SeedTree::new(self.master_seed).child(INIT_STREAM).seed(),
            hio: self.hio,
            execution: self.execution,
            ..self.init
        }
    }

    /// Denoiser noise level for 1-based step `i`: `α√λ_{i−1}/√2` with `λ_0 := 1`.
    pub fn sigma_for_step(&self, i: usize) -> NoiseLevel {
        let sigma = if i <= 1 {
            self.initial_sigma
                .unwrap_or_else(|| injected_noise_std(self.alpha, 1.0))
        } else {
            injected_noise_std(self.alpha, self.schedule.at(i - 1))
        };
        NoiseLevel::new(sigma).expect("validated noise level")
    }

    pub(crate) fn chain_streams(&self, branch: usize) -> SeedTree {
        SeedTree::new(self.master_seed).child(CHAIN_STREAM).child(branch as u64)
    }
}

/// Output of one refinement step: the denoised estimate `x_i` and the next input `x'_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub denoised: Image,
    pub next: Image,
}

/// One refinement step (1-based `i`). The last step returns the bare denoiser output.
pub fn prnet_step(
    op: &FourierOp,
    prev: &Image,
    meas: &Measurement,
    i: usize,
    cfg: &PipelineConfig,
    denoiser: &dyn Denoiser,
    noise: &mut impl GaussianSource,
) -> Result<StepOutput> {
    if i == 0 || i > cfg.outer_iters {
        return Err(Error::InvalidParameter(format!(
            "step {i} outside 1..={}",
            cfg.outer_iters
        )));
    }
    let denoised = denoiser.denoise(prev, cfg.sigma_for_step(i))?;
    if i == cfg.outer_iters {
        return Ok(StepOutput {
            next: denoised.clone(),
            denoised,
        });
    }
    let lambda = cfg.schedule.at(i);
    let target = blend_measurement(op, meas.magnitudes(), &denoised, lambda)?;
    let (z, _) = run_hio(op, &denoised, &target, cfg.inner_iters, &cfg.hio)?;
    let next = inject_noise(&z, injected_noise_std(cfg.alpha, lambda), noise);
    Ok(StepOutput { denoised, next })
}

/// Per-step record of one chain: residual and (optionally) PSNR of each denoised estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainTrace {
    pub branch: usize,
    pub chain: usize,
    pub residuals: Vec<f64>,
    pub psnr: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionResult {
    /// Final image of every chain (of every augmentation branch, already mapped back).
    pub images: Vec<Image>,
    pub aggregate: Image,
    pub traces: Vec<ChainTrace>,
    /// Initialization outputs, best first.
    pub initial: Vec<Candidate>,
    pub master_seed: u64,
    pub branches: usize,
}

/// Runs one chain per starting image. Chain `c` draws noise from `streams.child(c)`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn run_chains(
    op: &FourierOp,
    meas: &Measurement,
    starts: &[Image],
    cfg: &PipelineConfig,
    denoiser: &dyn Denoiser,
    streams: SeedTree,
    branch: usize,
    truth: Option<&Image>,
) -> Result<Vec<(Image, ChainTrace)>> {
    let out = map_indexed(cfg.execution, starts.len(), |c| -> Result<(Image, ChainTrace)> {
        let mut rng = streams.child(c as u64).rng();
        let mut x = starts[c].clone();
        let mut residuals = Vec::with_capacity(cfg.outer_iters);
        let mut psnr = truth.map(|_| Vec::with_capacity(cfg.outer_iters));
        let mut last = None;
        for i in 1..=cfg.outer_iters {
            let step = prnet_step(op, &x, meas, i, cfg, denoiser, &mut rng)?;
            residuals.push(residual(op, &step.denoised, meas)?);
            if let (Some(t), Some(p)) = (truth, psnr.as_mut()) {
                p.push(resolve_conjugate_flip(&step.denoised, t)?.1.psnr_db);
            }
            x = step.next;
            last = Some(step.denoised);
        }
        Ok((
            last.expect("at least one step"),
            ChainTrace {
                branch,
                chain: c,
                residuals,
                psnr,
            },
        ))
    });
    out.into_iter().collect()
}

/// Initialization outputs for a pipeline run (one per chain), best first.
pub fn initial_estimates(op: &FourierOp, meas: &Measurement, cfg: &PipelineConfig) -> Result<Vec<Candidate>> {
    cfg.validate()?;
    let mut initial = initialization_stage(op, meas, &cfg.init_config())?;
    if cfg.align_starts {
        align_orientations(&mut initial)?;
    }
    Ok(initial)
}

/// Puts every candidate in the conjugate-flip orientation closest to the first.
/// Both orientations fit the magnitudes equally; mixing them would make the
/// chain average meaningless. Ties keep the candidate as is.
pub fn align_orientations(candidates: &mut [Candidate]) -> Result<()> {
    let Some((best, rest)) = candidates.split_first_mut() else {
        return Ok(());
    };
    for c in rest {
        let flipped = apply_d4(&c.image, D4::R180)?;
        let dist = |x: &Image| -> f64 {
            x.data()
                .iter()
                .zip(best.image.data())
                .map(|(a, b)| (a - b).powi(2))
                .sum()
        };
        if dist(&flipped) < dist(&c.image) {
            c.image = flipped;
        }
    }
    Ok(())
}

/// Full pipeline: initialization, `chains` refinement chains, mean aggregation.
pub fn run_prnet(
    op: &FourierOp,
    meas: &Measurement,
    cfg: &PipelineConfig,
    denoiser: &dyn Denoiser,
    truth: Option<&Image>,
) -> Result<ReconstructionResult> {
    let initial = initial_estimates(op, meas, cfg)?;
    let starts: Vec<Image> = initial.iter().map(|c| c.image.clone()).collect();
    let chains = run_chains(op, meas, &starts, cfg, denoiser, cfg.chain_streams(0), 0, truth)?;
    let (images, traces): (Vec<Image>, Vec<ChainTrace>) = chains.into_iter().unzip();
    Ok(ReconstructionResult {
        aggregate: aggregate_mean(&images)?,
        images,
        traces,
        initial,
        master_seed: cfg.master_seed,
        branches: 1,
    })
}

/// Elementwise arithmetic mean, accumulated in list order.
pub fn aggregate_mean(images: &[Image]) -> Result<Image> {
    let first = images
        .first()
        .ok_or_else(|| Error::InvalidParameter("cannot aggregate an empty list".into()))?;
    let mut acc = vec![0.0; first.len()];
    for img in images {
        first.ensure_same_dims(img)?;
        for (a, &v) in acc.iter_mut().zip(img.data()) {
            *a += v;
        }
    }
    let n = images.len() as f64;
    Image::new(first.height(), first.width(), acc.into_iter().map(|v| v / n).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoiser::DenoiserModel;
    use crate::fourier::simulate_seeded;
    use crate::rng::ZeroNoise;
    use rand::Rng;

    fn random_image(n: usize, seed: u64) -> Image {
        let mut rng = SeedTree::new(seed).rng();
        Image::from_fn(n, n, |_, _| rng.random::<f64>() * 255.0)
    }

    fn tiny_cfg(alpha: f64, seed: u64, chains: usize) -> PipelineConfig {
        let mut cfg = PipelineConfig::small(alpha, seed);
        cfg.outer_iters = 4;
        cfg.inner_iters = 3;
        cfg.schedule = default_schedule(4, 1.0, 0.05).unwrap();
        cfg.chains = chains;
        cfg.init.num_starts = 4.max(chains);
        cfg.init.short_iters = 5;
        cfg.init.long_iters = 10;
        cfg
    }

    #[test]
    fn schedule_examples() {
        assert_eq!(default_schedule(1, 1.0, 0.01).unwrap().as_slice(), &[1.0]);
        let s = default_schedule(3, 1.0, 0.01).unwrap();
        let want = [1.0, 0.1, 0.01];
        for (a, b) in s.as_slice().iter().zip(want) {
            assert!((a - b).abs() < 1e-15, "{a} vs {b}");
        }
        let s = default_schedule(18, 1.0, 0.01).unwrap();
        assert!(s.as_slice().windows(2).all(|w| w[1] < w[0]));
        assert_eq!(s.as_slice()[17], 0.01);
        assert!(default_schedule(0, 1.0, 0.1).is_err());
        assert!(default_schedule(3, 0.1, 0.5).is_err());
        assert!(default_schedule(3, 1.5, 0.5).is_err());
    }

    #[test]
    fn blend_endpoints() {
        let op = FourierOp::new(4, 4).unwrap();
        let x = random_image(4, 1);
        let y: Vec<f64> = (0..64).map(|k| k as f64).collect();
        let ax = op.apply(&x).unwrap().magnitudes();
        assert_eq!(blend_measurement(&op, &y, &x, 1.0).unwrap(), y);
        assert_eq!(blend_measurement(&op, &y, &x, 0.0).unwrap(), ax);
        let same = blend_measurement(&op, &ax, &x, 0.5).unwrap();
        for (a, b) in same.iter().zip(&ax) {
            assert!((a - b).abs() <= 1e-12 * b.max(1.0));
        }
        assert!(blend_measurement(&op, &y, &x, 1.5).is_err());
    }

    #[test]
    fn last_step_is_bare_denoiser() {
        let op = FourierOp::new(6, 6).unwrap();
        let x = random_image(6, 2);
        let meas = simulate_seeded(&op, &x, 3.0, 1).unwrap();
        let cfg = tiny_cfg(3.0, 1, 1);
        let model = DenoiserModel::gaussian();
        let mut rng = SeedTree::new(5).rng();
        let before = rng.clone();
        let out = prnet_step(&op, &x, &meas, 4, &cfg, &model, &mut rng).unwrap();
        assert_eq!(out.denoised, model.denoise(&x, cfg.sigma_for_step(4)).unwrap());
        assert_eq!(out.next, out.denoised);
        assert_eq!(rng, before, "no randomness consumed");
        assert!(prnet_step(&op, &x, &meas, 5, &cfg, &model, &mut rng).is_err());
        assert!(prnet_step(&op, &x, &meas, 0, &cfg, &model, &mut rng).is_err());
    }

    #[test]
    fn sigma_schedule_follows_previous_lambda() {
        let cfg = PipelineConfig::small(3.0, 0);
        assert!((cfg.sigma_for_step(1).sigma() - 3.0 / 2f64.sqrt()).abs() < 1e-15);
        let s5 = cfg.sigma_for_step(5).sigma();
        assert!((s5 - 3.0 * cfg.schedule.at(4).sqrt() / 2f64.sqrt()).abs() < 1e-15);
        let mut custom = cfg.clone();
        custom.initial_sigma = Some(0.25);
        assert_eq!(custom.sigma_for_step(1).sigma(), 0.25);
    }

    #[test]
    fn noiseless_truth_is_a_fixed_point() {
        let op = FourierOp::new(8, 8).unwrap();
        let x = random_image(8, 3);
        let meas = simulate_seeded(&op, &x, 0.0, 1).unwrap();
        let cfg = tiny_cfg(0.0, 2, 1);
        for i in 1..cfg.outer_iters {
            let out = prnet_step(&op, &x, &meas, i, &cfg, &DenoiserModel::Identity, &mut ZeroNoise).unwrap();
            let err = out
                .next
                .data()
                .iter()
                .zip(x.data())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(err < 1e-9, "step {i}: {err}");
        }
    }

    #[test]
    fn aggregate_examples() {
        let x = random_image(5, 4);
        assert_eq!(aggregate_mean(std::slice::from_ref(&x)).unwrap(), x);
        let complement = x.map(|v| 510.0 - v);
        let mean = aggregate_mean(&[x.clone(), complement]).unwrap();
        assert!(mean.data().iter().all(|&v| (v - 255.0).abs() < 1e-12));
        assert!(aggregate_mean(&[]).is_err());
        assert!(aggregate_mean(&[x, Image::zeros(2, 2)]).is_err());
    }

    #[test]
    fn single_chain_aggregate_is_the_chain() {
        let op = FourierOp::new(6, 6).unwrap();
        let meas = simulate_seeded(&op, &random_image(6, 7), 2.0, 3).unwrap();
        let cfg = tiny_cfg(2.0, 11, 1);
        let r = run_prnet(&op, &meas, &cfg, &DenoiserModel::gaussian(), None).unwrap();
        assert_eq!(r.images.len(), 1);
        assert_eq!(r.aggregate, r.images[0]);
        assert_eq!(r.traces[0].residuals.len(), cfg.outer_iters);
        assert!(r.traces[0].psnr.is_none());
    }

    #[test]
    fn chains_are_independent_and_worker_invariant() {
        let op = FourierOp::new(6, 6).unwrap();
        let truth = random_image(6, 8);
        let meas = simulate_seeded(&op, &truth, 3.0, 4).unwrap();
        let mut cfg = tiny_cfg(3.0, 5, 3);
        let par = run_prnet(&op, &meas, &cfg, &DenoiserModel::gaussian(), Some(&truth)).unwrap();
        cfg.execution = Execution::Sequential;
        let seq = run_prnet(&op, &meas, &cfg, &DenoiserModel::gaussian(), Some(&truth)).unwrap();
        assert_eq!(par, seq);
        assert_eq!(par.images.len(), 3);
    }

    #[test]
    fn permuting_starts_permutes_noiseless_chains() {
        let op = FourierOp::new(6, 6).unwrap();
        let meas = simulate_seeded(&op, &random_image(6, 9), 0.0, 4).unwrap();
        let cfg = tiny_cfg(0.0, 5, 3);
        let model = DenoiserModel::gaussian();
        let starts: Vec<Image> = (0..3).map(|k| random_image(6, 20 + k)).collect();
        let mut reversed = starts.clone();
        reversed.reverse();
        let streams = cfg.chain_streams(0);
        let a = run_chains(&op, &meas, &starts, &cfg, &model, streams, 0, None).unwrap();
        let b = run_chains(&op, &meas, &reversed, &cfg, &model, streams, 0, None).unwrap();
        for k in 0..3 {
            assert_eq!(a[k].0, b[2 - k].0);
        }
    }
}
