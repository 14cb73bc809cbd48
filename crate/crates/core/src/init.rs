//! Multi-start initialization: many short HIO runs from random phases, keep the
//! lowest-residual candidates and refine them with a long HIO run each.

use std::f64::consts::TAU;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::fourier::{check_measurement, FourierOp, Measurement};
use crate::hio::{iterate_grid, HioConfig, SolverTrace, Update};
use crate::image::{crop_support, pad_to_grid, Image};
use crate::rng::SeedTree;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitConfig {
    pub num_starts: usize,
    pub short_iters: usize,
    pub long_iters: usize,
    pub keep: usize,
    pub master_seed: u64,
    pub hio: HioConfig,
    pub execution: Execution,
}

impl InitConfig {
    /// Single-output configuration: 50 starts, 50 short and 1000 long iterations.
    pub fn small(master_seed: u64) -> Self {
        Self {
            num_starts: 50,
            short_iters: 50,
            long_iters: 1000,
            keep: 1,
            master_seed,
            hio: HioConfig::default(),
            execution: Execution::default(),
        }
    }

    /// Ensemble configuration: 100 starts, ten kept.
    pub fn large(master_seed: u64) -> Self {
        Self {
            num_starts: 100,
            keep: 10,
            ..Self::small(master_seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_starts == 0 || self.short_iters == 0 || self.long_iters == 0 || self.keep == 0 {
            return Err(Error::InvalidParameter("initialization counts must all be >= 1".into()));
        }
        if self.keep > self.num_starts {
            return Err(Error::InvalidParameter(format!(
                "cannot keep {} of {} starts",
                self.keep, self.num_starts
            )));
        }
        self.hio.validate()
    }
}

/// A refined initialization output.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub branch: usize,
    pub image: Image,
    pub residual: f64,
    pub short_trace: SolverTrace,
    pub long_trace: SolverTrace,
}

/// `A†( y ⊙ e^{jθ} )` with `θ ~ U[0, 2π)` drawn per measurement bin.
pub fn random_phase_start<R: Rng + ?Sized>(op: &FourierOp, meas: &Measurement, rng: &mut R) -> Result<Image> {
    check_measurement(op, meas)?;
    let phases: Vec<f64> = (0..op.num_bins()).map(|_| rng.random::<f64>() * TAU).collect();
    op.synthesize(meas.magnitudes(), &phases)
}

/// Indices of the `k` smallest residuals, ordered by `(residual, index)`.
pub fn select_best(residuals: &[f64], k: usize) -> Result<Vec<usize>> {
    if k == 0 || k > residuals.len() {
        return Err(Error::InvalidParameter(format!(
            "k = {k} out of range for {} candidates",
            residuals.len()
        )));
    }
    let mut order: Vec<usize> = (0..residuals.len()).collect();
    order.sort_by(|&a, &b| residuals[a].total_cmp(&residuals[b]).then(a.cmp(&b)));
    order.truncate(k);
    Ok(order)
}

/// Runs the full initialization stage; output is sorted by ascending final residual.
pub fn initialization_stage(op: &FourierOp, meas: &Measurement, cfg: &InitConfig) -> Result<Vec<Candidate>> {
    cfg.validate()?;
    check_measurement(op, meas)?;
    let root = SeedTree::new(cfg.master_seed);
    let y = meas.magnitudes();

    let short: Vec<Result<(Image, SolverTrace)>> = map_indexed(cfg.execution, cfg.num_starts, |b| {
        let mut rng = root.child(b as u64).rng();
        let x0 = random_phase_start(op, meas, &mut rng)?;
        let mut trace = SolverTrace::default();
        let grid = iterate_grid(
            op,
            pad_to_grid(&x0),
            y,
            cfg.short_iters,
            &cfg.hio,
            Update::Hio,
            &mut trace,
        )?;
        Ok((grid, trace))
    });
    let short = short.into_iter().collect::<Result<Vec<_>>>()?;
    let scores: Vec<f64> = short.iter().map(|(_, t)| t.last().unwrap_or(f64::INFINITY)).collect();
    let chosen = select_best(&scores, cfg.keep)?;

    let refined: Vec<Result<Candidate>> = map_indexed(cfg.execution, chosen.len(), |slot| {
        let branch = chosen[slot];
        let (grid, short_trace) = &short[branch];
        let mut long_trace = SolverTrace::default();
        let grid = iterate_grid(
            op,
            grid.clone(),
            y,
            cfg.long_iters,
            &cfg.hio,
            Update::Hio,
            &mut long_trace,
        )?;
        Ok(Candidate {
            branch,
            image: crop_support(&grid)?,
            residual: long_trace.last().unwrap_or(f64::INFINITY),
            short_trace: short_trace.clone(),
            long_trace,
        })
    });
    let mut refined = refined.into_iter().collect::<Result<Vec<_>>>()?;
    refined.sort_by(|a, b| a.residual.total_cmp(&b.residual).then(a.branch.cmp(&b.branch)));
    Ok(refined)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fourier::simulate_seeded;
    use crate::hio::run_hio;

    fn fixture() -> (FourierOp, Measurement) {
        let op = FourierOp::new(6, 6).unwrap();
        let img = Image::from_fn(6, 6, |i, j| ((i * 31 + j * 17) % 97) as f64 * 2.0);
        let meas = simulate_seeded(&op, &img, 0.0, 1).unwrap();
        (op, meas)
    }

    fn quick(seed: u64, m: usize, k: usize) -> InitConfig {
        InitConfig {
            num_starts: m,
            short_iters: 10,
            long_iters: 20,
            keep: k,
            ..InitConfig::small(seed)
        }
    }

    #[test]
    fn random_start_of_zero_measurement_is_zero() {
        let op = FourierOp::new(4, 4).unwrap();
        let meas = Measurement::from_intensities(4, 4, 0.0, None, vec![0.0; 64]).unwrap();
        let mut rng = SeedTree::new(3).rng();
        assert_eq!(random_phase_start(&op, &meas, &mut rng).unwrap(), Image::zeros(4, 4));
    }

    #[test]
    fn random_start_is_reproducible_and_bounded() {
        let (op, meas) = fixture();
        let a = random_phase_start(&op, &meas, &mut SeedTree::new(5).rng()).unwrap();
        let b = random_phase_start(&op, &meas, &mut SeedTree::new(5).rng()).unwrap();
        assert_eq!(a, b);
        let ynorm: f64 = meas.magnitudes().iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(a.norm() <= ynorm * (1.0 + 1e-12));
    }

    #[test]
    fn select_best_edge_cases() {
        assert_eq!(select_best(&[3.0, 1.0, 2.0], 3).unwrap(), vec![1, 2, 0]);
        assert_eq!(select_best(&[1.0; 5], 2).unwrap(), vec![0, 1]);
        assert!(select_best(&[1.0], 2).is_err());
        assert!(select_best(&[1.0], 0).is_err());
    }

    #[test]
    fn single_start_degenerates_to_one_long_run() {
        let (op, meas) = fixture();
        let cfg = quick(9, 1, 1);
        let out = initialization_stage(&op, &meas, &cfg).unwrap();
        assert_eq!(out.len(), 1);
        let x0 = random_phase_start(&op, &meas, &mut SeedTree::new(9).child(0).rng()).unwrap();
        let (direct, trace) = run_hio(&op, &x0, meas.magnitudes(), 30, &cfg.hio).unwrap();
        assert_eq!(out[0].image, direct);
        assert_eq!(out[0].residual, trace.last().unwrap());
    }

    #[test]
    fn output_sorted_and_sequential_matches_parallel() {
        let (op, meas) = fixture();
        let mut cfg = quick(4, 8, 3);
        let par = initialization_stage(&op, &meas, &cfg).unwrap();
        cfg.execution = Execution::Sequential;
        let seq = initialization_stage(&op, &meas, &cfg).unwrap();
        assert_eq!(par, seq);
        assert_eq!(par.len(), 3);
        assert!(par.windows(2).all(|w| w[0].residual <= w[1].residual));
    }

    #[test]
    fn invalid_config_rejected() {
        let (op, meas) = fixture();
        assert!(initialization_stage(&op, &meas, &quick(1, 2, 3)).is_err());
        assert!(initialization_stage(&op, &meas, &quick(1, 0, 0)).is_err());
    }
}
