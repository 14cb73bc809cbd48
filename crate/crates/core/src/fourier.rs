//! The oversampled unitary Fourier measurement operator and its noise model.
//!
//! An `H x W` image is zero-padded into the top-left corner of a `2H x 2W` grid
//! and transformed with a 2D DFT scaled by `1/sqrt(4HW)`, so the operator has
//! orthonormal columns and its pseudoinverse is the adjoint followed by taking
//! the real part and cropping back to the image block.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::image::{crop_support, pad_to_grid, Image};
use crate::rng::{GaussianSource, SeedTree};

/// A complex field on the padded measurement grid, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub height: usize,
    pub width: usize,
    pub data: Vec<Complex64>,
}

impl Field {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![Complex64::new(0.0, 0.0); height * width],
        }
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        self.data.iter().map(|&c| modulus(c)).collect()
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }
}

/// `|c|` as `sqrt(re² + im²)`, matching how magnitudes are derived from intensities.
#[inline]
pub(crate) fn modulus(c: Complex64) -> f64 {
    c.norm_sqr().sqrt()
}

#[derive(Clone)]
pub struct FourierOp {
    inner_h: usize,
    inner_w: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
    scale: f64,
}

impl fmt::Debug for FourierOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FourierOp")
            .field("inner", &(self.inner_h, self.inner_w))
            .field("outer", &self.outer_dims())
            .finish()
    }
}

impl FourierOp {
    pub fn new(height: usize, width: usize) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidParameter(format!(
                "image dimensions must be positive, got {height}x{width}"
            )));
        }
        let (n1, n2) = (2 * height, 2 * width);
        let mut planner = FftPlanner::new();
        Ok(Self {
            inner_h: height,
            inner_w: width,
            row_fwd: planner.plan_fft_forward(n2),
            col_fwd: planner.plan_fft_forward(n1),
            row_inv: planner.plan_fft_inverse(n2),
            col_inv: planner.plan_fft_inverse(n1),
            scale: 1.0 / ((n1 * n2) as f64).sqrt(),
        })
    }

    pub fn inner_dims(&self) -> (usize, usize) {
        (self.inner_h, self.inner_w)
    }

    pub fn outer_dims(&self) -> (usize, usize) {
        (2 * self.inner_h, 2 * self.inner_w)
    }

    /// Number of measurement bins, `4HW`.
    pub fn num_bins(&self) -> usize {
        4 * self.inner_h * self.inner_w
    }

    fn check_inner(&self, img: &Image) -> Result<()> {
        if img.dims() != self.inner_dims() {
            return Err(Error::dims(
                format!("{}x{} image", self.inner_h, self.inner_w),
                format!("{}x{}", img.height(), img.width()),
            ));
        }
        Ok(())
    }

    fn check_outer(&self, h: usize, w: usize) -> Result<()> {
        if (h, w) != self.outer_dims() {
            let (n1, n2) = self.outer_dims();
            return Err(Error::dims(format!("{n1}x{n2} grid"), format!("{h}x{w}")));
        }
        Ok(())
    }

    /// Scaled 2D transform in place. Only the first `live_rows` rows may be
    /// nonzero; the row pass skips the rest.
    fn transform(&self, buf: &mut [Complex64], live_rows: usize, inverse: bool) {
        let (n1, n2) = self.outer_dims();
        let (row, col) = if inverse {
            (&self.row_inv, &self.col_inv)
        } else {
            (&self.row_fwd, &self.col_fwd)
        };
        let zero = Complex64::new(0.0, 0.0);
        let mut scratch = vec![zero; row.get_inplace_scratch_len().max(col.get_inplace_scratch_len())];
        row.process_with_scratch(&mut buf[..live_rows * n2], &mut scratch);
        let mut t = vec![zero; buf.len()];
        transpose_into(buf, &mut t, n1, n2);
        col.process_with_scratch(&mut t, &mut scratch);
        transpose_into(&t, buf, n2, n1);
        for v in buf.iter_mut() {
            *v *= self.scale;
        }
    }

    /// `A x`: unitary DFT of the zero-padded image.
    pub fn apply(&self, img: &Image) -> Result<Field> {
        self.check_inner(img)?;
        let grid = pad_to_grid(img);
        Ok(self.forward(&grid, self.inner_h))
    }

    /// Unitary DFT of a real array already living on the padded grid.
    pub fn apply_grid(&self, grid: &Image) -> Result<Field> {
        self.check_outer(grid.height(), grid.width())?;
        Ok(self.forward(grid, grid.height()))
    }

    fn forward(&self, grid: &Image, live_rows: usize) -> Field {
        let mut buf: Vec<Complex64> = grid.data().iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.transform(&mut buf, live_rows, false);
        Field {
            height: grid.height(),
            width: grid.width(),
            data: buf,
        }
    }

    /// Real part of the unitary inverse DFT over the whole padded grid.
    pub fn adjoint_grid(&self, field: &Field) -> Result<Image> {
        self.check_outer(field.height, field.width)?;
        let mut buf = field.data.clone();
        self.transform(&mut buf, field.height, true);
        Ok(Image::from_vec_unchecked(
            field.height,
            field.width,
            buf.into_iter().map(|c| c.re).collect(),
        ))
    }

    /// `A† f`: real part of the inverse transform, cropped to the image block.
    pub fn pseudoinverse(&self, field: &Field) -> Result<Image> {
        crop_support(&self.adjoint_grid(field)?)
    }

    /// `A†( y ⊙ e^{jθ} )` for per-bin phases; used for random-phase starts.
    pub fn synthesize(&self, magnitudes: &[f64], phases: &[f64]) -> Result<Image> {
        let (n1, n2) = self.outer_dims();
        if magnitudes.len() != n1 * n2 || phases.len() != n1 * n2 {
            return Err(Error::dims(n1 * n2, magnitudes.len().min(phases.len())));
        }
        let field = Field {
            height: n1,
            width: n2,
            data: magnitudes
                .iter()
                .zip(phases)
                .map(|(&m, &p)| Complex64::from_polar(m, p))
                .collect(),
        };
        self.pseudoinverse(&field)
    }
}

/// Row-major `rows x cols` → `cols x rows`, in cache-sized tiles.
fn transpose_into(src: &[Complex64], dst: &mut [Complex64], rows: usize, cols: usize) {
    const TILE: usize = 16;
    for r0 in (0..rows).step_by(TILE) {
        for c0 in (0..cols).step_by(TILE) {
            for r in r0..(r0 + TILE).min(rows) {
                for c in c0..(c0 + TILE).min(cols) {
                    dst[c * rows + r] = src[r * cols + c];
                }
            }
        }
    }
}

/// Noisy oversampled Fourier intensities and the magnitudes derived from them.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    height: usize,
    width: usize,
    alpha: f64,
    seed: Option<u64>,
    intensities: Vec<f64>,
    magnitudes: Vec<f64>,
}

impl Measurement {
    /// Builds a measurement from raw intensities; magnitudes are `sqrt(max(I, 0))`.
    pub fn from_intensities(
        height: usize,
        width: usize,
        alpha: f64,
        seed: Option<u64>,
        intensities: Vec<f64>,
    ) -> Result<Self> {
        if intensities.len() != 4 * height * width {
            return Err(Error::dims(4 * height * width, intensities.len()));
        }
        if intensities.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("intensities"));
        }
        if !(alpha.is_finite() && alpha >= 0.0) {
            return Err(Error::InvalidParameter(format!("alpha must be >= 0, got {alpha}")));
        }
        let magnitudes = intensities.iter().map(|&v| v.max(0.0).sqrt()).collect();
        Ok(Self {
            height,
            width,
            alpha,
            seed,
            intensities,
            magnitudes,
        })
    }

    /// Builds a measurement from stored arrays, checking they are consistent.
    pub fn from_parts(
        height: usize,
        width: usize,
        alpha: f64,
        seed: Option<u64>,
        intensities: Vec<f64>,
        magnitudes: Vec<f64>,
    ) -> Result<Self> {
        let mut m = Self::from_intensities(height, width, alpha, seed, intensities)?;
        if magnitudes.len() != m.magnitudes.len() {
            return Err(Error::dims(m.magnitudes.len(), magnitudes.len()));
        }
        if magnitudes.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidParameter(
                "magnitudes must be finite and non-negative".into(),
            ));
        }
        m.magnitudes = magnitudes;
        Ok(m)
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn grid_dims(&self) -> (usize, usize) {
        (2 * self.height, 2 * self.width)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn intensities(&self) -> &[f64] {
        &self.intensities
    }

    pub fn magnitudes(&self) -> &[f64] {
        &self.magnitudes
    }

    pub(crate) fn with_arrays(&self, intensities: Vec<f64>, magnitudes: Vec<f64>) -> Self {
        Self {
            intensities,
            magnitudes,
            ..self.clone()
        }
    }
}

/// Draws `y² = |Ax|² + w` with `w_i ~ N(0, α² |Ax|_i²)`.
pub fn simulate(op: &FourierOp, img: &Image, alpha: f64, noise: &mut impl GaussianSource) -> Result<Measurement> {
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(Error::InvalidParameter(format!("alpha must be >= 0, got {alpha}")));
    }
    let field = op.apply(img)?;
    let intensities: Vec<f64> = field
        .data
        .iter()
        .map(|c| {
            let mag = modulus(*c);
            let draw = noise.next_gaussian();
            if alpha == 0.0 {
                c.norm_sqr()
            } else {
                c.norm_sqr() + alpha * mag * draw
            }
        })
        .collect();
    let (h, w) = op.inner_dims();
    Measurement::from_intensities(h, w, alpha, None, intensities)
}

/// [`simulate`] with a stream derived from `seed`, recorded in the measurement.
pub fn simulate_seeded(op: &FourierOp, img: &Image, alpha: f64, seed: u64) -> Result<Measurement> {
    let mut rng = SeedTree::new(seed).rng();
    let mut meas = simulate(op, img, alpha, &mut rng)?;
    meas.seed = Some(seed);
    Ok(meas)
}

/// `10 log10( ‖Fx‖₂ / ‖y² − |Fx|²‖₂ )`; `+∞` for a noiseless measurement.
pub fn snr_db(op: &FourierOp, img: &Image, meas: &Measurement) -> Result<f64> {
    check_measurement(op, meas)?;
    let field = op.apply(img)?;
    Ok(snr_db_from_field(&field.data, meas.intensities()))
}

pub fn snr_db_from_field(field: &[Complex64], intensities: &[f64]) -> f64 {
    let signal = field.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    let noise = field
        .iter()
        .zip(intensities)
        .map(|(c, &i)| (i - c.norm_sqr()).powi(2))
        .sum::<f64>()
        .sqrt();
    if noise == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (signal / noise).log10()
    }
}

/// `‖y − |Ax|‖₂²`.
pub fn residual(op: &FourierOp, img: &Image, meas: &Measurement) -> Result<f64> {
    check_measurement(op, meas)?;
    Ok(residual_from_field(&op.apply(img)?, meas.magnitudes()))
}

pub fn residual_from_field(field: &Field, magnitudes: &[f64]) -> f64 {
    field
        .data
        .iter()
        .zip(magnitudes)
        .map(|(&c, &y)| (y - modulus(c)).powi(2))
        .sum()
}

pub(crate) fn check_measurement(op: &FourierOp, meas: &Measurement) -> Result<()> {
    if meas.dims() != op.inner_dims() {
        let (h, w) = op.inner_dims();
        return Err(Error::dims(
            format!("{h}x{w} measurement"),
            format!("{}x{}", meas.height, meas.width),
        ));
    }
    Ok(())
}
