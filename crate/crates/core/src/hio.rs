//! Error Reduction and Hybrid Input-Output iterations.
//!
//! Iterates live on the full padded grid so that off-support feedback survives
//! between HIO steps; images are cropped only when reported.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier::{modulus, residual_from_field, Field, FourierOp};
use crate::image::{crop_support, pad_to_grid, Image, SupportMask};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HioConfig {
    pub beta: f64,
    pub enforce_support: bool,
    pub enforce_nonneg: bool,
}

impl Default for HioConfig {
    fn default() -> Self {
        Self {
            beta: 0.9,
            enforce_support: true,
            enforce_nonneg: true,
        }
    }
}

impl HioConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::InvalidParameter(format!(
                "beta must lie in [0, 1], got {}",
                self.beta
            )));
        }
        Ok(())
    }
}

/// Residual `‖y − |Ax|‖²` of the reported image after each iteration.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolverTrace {
    pub residuals: Vec<f64>,
}

impl SolverTrace {
    pub fn iterations(&self) -> usize {
        self.residuals.len()
    }

    pub fn last(&self) -> Option<f64> {
        self.residuals.last().copied()
    }
}

/// Replaces Fourier magnitudes by `y`, keeping the phase (phase 1 where `|Ax| = 0`).
fn impose_magnitudes(field: &mut Field, magnitudes: &[f64]) {
    for (c, &y) in field.data.iter_mut().zip(magnitudes) {
        let mag = modulus(*c);
        *c = if mag > 0.0 {
            *c * (y / mag)
        } else {
            Complex64::new(y, 0.0)
        };
    }
}

fn check_magnitudes(op: &FourierOp, magnitudes: &[f64]) -> Result<()> {
    if magnitudes.len() != op.num_bins() {
        return Err(Error::dims(op.num_bins(), magnitudes.len()));
    }
    Ok(())
}

/// `A†( y ⊙ Ax/|Ax| )` evaluated on the full padded grid.
pub fn project_grid(op: &FourierOp, grid: &Image, magnitudes: &[f64]) -> Result<Image> {
    check_magnitudes(op, magnitudes)?;
    let mut field = op.apply_grid(grid)?;
    impose_magnitudes(&mut field, magnitudes);
    op.adjoint_grid(&field)
}

/// Measurement-domain projection of an image, cropped back to the image block.
pub fn measurement_projection(op: &FourierOp, img: &Image, magnitudes: &[f64]) -> Result<Image> {
    check_magnitudes(op, magnitudes)?;
    let mut field = op.apply(img)?;
    impose_magnitudes(&mut field, magnitudes);
    op.pseudoinverse(&field)
}

fn check_step(prev: &Image, projected: &Image, support: &SupportMask) -> Result<()> {
    prev.ensure_same_dims(projected)?;
    if support.dims() != prev.dims() {
        return Err(Error::dims(
            format!("{}x{} support", prev.height(), prev.width()),
            format!("{:?}", support.dims()),
        ));
    }
    Ok(())
}

#[inline]
fn violates(support: &SupportMask, value: f64, idx: usize, cfg: &HioConfig) -> bool {
    (cfg.enforce_support && !support.contains(idx)) || (cfg.enforce_nonneg && value < 0.0)
}

/// One HIO update: keep the projection where it satisfies the spatial
/// constraints, otherwise `prev − β·projected`.
pub fn hio_step(prev: &Image, projected: &Image, support: &SupportMask, cfg: &HioConfig) -> Result<Image> {
    check_step(prev, projected, support)?;
    let data = prev
        .data()
        .iter()
        .zip(projected.data())
        .enumerate()
        .map(|(idx, (&p, &q))| {
            if violates(support, q, idx, cfg) {
                p - cfg.beta * q
            } else {
                q
            }
        })
        .collect();
    Ok(Image::from_vec_unchecked(prev.height(), prev.width(), data))
}

/// One ER update: violating entries are zeroed (support) or clamped at zero (sign).
pub fn er_step(prev: &Image, projected: &Image, support: &SupportMask, cfg: &HioConfig) -> Result<Image> {
    check_step(prev, projected, support)?;
    let data = projected
        .data()
        .iter()
        .enumerate()
        .map(|(idx, &q)| if violates(support, q, idx, cfg) { 0.0 } else { q })
        .collect();
    Ok(Image::from_vec_unchecked(prev.height(), prev.width(), data))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Update {
    Hio,
    Er,
}

/// Iterates on a padded-grid state, appending the residual of the cropped
/// iterate to `trace` after every step.
pub fn iterate_grid(
    op: &FourierOp,
    mut grid: Image,
    magnitudes: &[f64],
    iters: usize,
    cfg: &HioConfig,
    update: Update,
    trace: &mut SolverTrace,
) -> Result<Image> {
    cfg.validate()?;
    check_magnitudes(op, magnitudes)?;
    let (h, w) = op.inner_dims();
    let support = SupportMask::top_left(h, w);
    for _ in 0..iters {
        let projected = project_grid(op, &grid, magnitudes)?;
        grid = match update {
            Update::Hio => hio_step(&grid, &projected, &support, cfg)?,
            Update::Er => er_step(&grid, &projected, &support, cfg)?,
        };
        let field = op.apply(&crop_support(&grid)?)?;
        trace.residuals.push(residual_from_field(&field, magnitudes));
    }
    Ok(grid)
}

/// Runs `iters` HIO iterations from `x0` against magnitudes `y`.
pub fn run_hio(
    op: &FourierOp,
    x0: &Image,
    magnitudes: &[f64],
    iters: usize,
    cfg: &HioConfig,
) -> Result<(Image, SolverTrace)> {
    run(op, x0, magnitudes, iters, cfg, Update::Hio)
}

/// Runs `iters` ER iterations from `x0` against magnitudes `y`.
pub fn run_er(
    op: &FourierOp,
    x0: &Image,
    magnitudes: &[f64],
    iters: usize,
    cfg: &HioConfig,
) -> Result<(Image, SolverTrace)> {
    run(op, x0, magnitudes, iters, cfg, Update::Er)
}

fn run(
    op: &FourierOp,
    x0: &Image,
    magnitudes: &[f64],
    iters: usize,
    cfg: &HioConfig,
    update: Update,
) -> Result<(Image, SolverTrace)> {
    if iters == 0 {
        return Err(Error::InvalidParameter("iteration count must be >= 1".into()));
    }
    if x0.dims() != op.inner_dims() {
        return Err(Error::dims(
            format!("{:?}", op.inner_dims()),
            format!("{:?}", x0.dims()),
        ));
    }
    let mut trace = SolverTrace::default();
    let grid = iterate_grid(op, pad_to_grid(x0), magnitudes, iters, cfg, update, &mut trace)?;
    Ok((crop_support(&grid)?, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fourier::{simulate, simulate_seeded};
    use crate::rng::{SeedTree, ZeroNoise};
    use rand::Rng;

    fn random_image(n: usize, seed: u64) -> Image {
        let mut rng = SeedTree::new(seed).rng();
        Image::from_fn(n, n, |_, _| rng.random::<f64>() * 255.0)
    }

    #[test]
    fn hand_computed_hio_step() {
        let prev = Image::new(2, 2, vec![1.0; 4]).unwrap();
        let projected = Image::new(2, 2, vec![2.0, -1.0, 3.0, -2.0]).unwrap();
        let cfg = HioConfig {
            beta: 0.9,
            enforce_support: false,
            enforce_nonneg: true,
        };
        let out = hio_step(&prev, &projected, &SupportMask::full(2, 2), &cfg).unwrap();
        let expect = [2.0, 1.9, 3.0, 2.8];
        for (a, b) in out.data().iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn satisfied_constraints_pass_projection_through() {
        let prev = Image::new(2, 2, vec![7.0, 8.0, 9.0, 10.0]).unwrap();
        let projected = Image::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let s = SupportMask::full(2, 2);
        let cfg = HioConfig::default();
        assert_eq!(hio_step(&prev, &projected, &s, &cfg).unwrap(), projected);
        assert_eq!(er_step(&prev, &projected, &s, &cfg).unwrap(), projected);
    }

    #[test]
    fn zero_beta_with_all_violations_keeps_prev() {
        let prev = Image::new(1, 3, vec![4.0, 5.0, 6.0]).unwrap();
        let projected = Image::new(1, 3, vec![-1.0, -2.0, -3.0]).unwrap();
        let cfg = HioConfig {
            beta: 0.0,
            ..HioConfig::default()
        };
        let s = SupportMask::full(1, 3);
        assert_eq!(hio_step(&prev, &projected, &s, &cfg).unwrap(), prev);
        assert_eq!(er_step(&prev, &projected, &s, &cfg).unwrap(), Image::zeros(1, 3));
    }

    #[test]
    fn off_support_entries_are_violations() {
        let s = SupportMask::top_left(1, 1);
        let prev = Image::new(2, 2, vec![1.0, 1.0, 1.0, 1.0]).unwrap();
        let projected = Image::new(2, 2, vec![3.0, 2.0, 2.0, 2.0]).unwrap();
        let cfg = HioConfig::default();
        let out = hio_step(&prev, &projected, &s, &cfg).unwrap();
        assert_eq!(out.data()[0], 3.0);
        assert!((out.data()[1] - (1.0 - 1.8)).abs() < 1e-15);
        assert_eq!(
            er_step(&prev, &projected, &s, &cfg).unwrap().data(),
            &[3.0, 0.0, 0.0, 0.0]
        );
    }

    #[test]
    fn projection_fixed_point_and_zero_magnitudes() {
        let op = FourierOp::new(6, 6).unwrap();
        let x = random_image(6, 2);
        let meas = simulate(&op, &x, 0.0, &mut ZeroNoise).unwrap();
        let p = measurement_projection(&op, &x, meas.magnitudes()).unwrap();
        let err = p
            .data()
            .iter()
            .zip(x.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-10);
        let z = measurement_projection(&op, &x, &vec![0.0; op.num_bins()]).unwrap();
        assert!(z.data().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn zero_image_start_stays_finite() {
        let op = FourierOp::new(4, 4).unwrap();
        let meas = simulate_seeded(&op, &random_image(4, 9), 1.0, 3).unwrap();
        let (out, trace) = run_hio(&op, &Image::zeros(4, 4), meas.magnitudes(), 20, &HioConfig::default()).unwrap();
        assert!(out.data().iter().all(|v| v.is_finite()));
        assert!(trace.residuals.iter().all(|v| v.is_finite()));
        assert_eq!(trace.iterations(), 20);
    }

    #[test]
    fn single_iteration_unrolls() {
        let op = FourierOp::new(5, 5).unwrap();
        let meas = simulate_seeded(&op, &random_image(5, 1), 2.0, 8).unwrap();
        let x0 = random_image(5, 77);
        let cfg = HioConfig::default();
        let (out, _) = run_hio(&op, &x0, meas.magnitudes(), 1, &cfg).unwrap();
        let grid = pad_to_grid(&x0);
        let proj = project_grid(&op, &grid, meas.magnitudes()).unwrap();
        let manual = hio_step(&grid, &proj, &SupportMask::top_left(5, 5), &cfg).unwrap();
        assert_eq!(out, crop_support(&manual).unwrap());
        assert!(run_hio(&op, &x0, meas.magnitudes(), 0, &cfg).is_err());
    }

    #[test]
    fn run_is_deterministic() {
        let op = FourierOp::new(6, 6).unwrap();
        let meas = simulate_seeded(&op, &random_image(6, 4), 3.0, 5).unwrap();
        let x0 = random_image(6, 6);
        let a = run_hio(&op, &x0, meas.magnitudes(), 30, &HioConfig::default()).unwrap();
        let b = run_hio(&op, &x0, meas.magnitudes(), 30, &HioConfig::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_beta_rejected() {
        let cfg = HioConfig {
            beta: 1.5,
            ..HioConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
