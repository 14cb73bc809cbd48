//! Real-valued grayscale images, support masks, zero-padding geometry and the
//! dihedral group D4 acting on square images.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A row-major real image. Pixels are nominally in `[0, 255]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Image {
    /// Builds an image, rejecting length mismatches and non-finite pixels.
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::dims(
                format!("{} pixels ({height}x{width})", height * width),
                format!("{} pixels", data.len()),
            ));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("image data"));
        }
        Ok(Self { height, width, data })
    }

    pub(crate) fn from_vec_unchecked(height: usize, width: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), height * width);
        Self { height, width, data }
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self::from_vec_unchecked(height, width, vec![0.0; height * width])
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        Self::from_vec_unchecked(height, width, vec![value; height * width])
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for i in 0..height {
            for j in 0..width {
                data.push(f(i, j));
            }
        }
        Self::from_vec_unchecked(height, width, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_square(&self) -> bool {
        self.height == self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.width + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.width + j] = v;
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn dot(&self, other: &Image) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.dot(self)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Image {
        Image::from_vec_unchecked(self.height, self.width, self.data.iter().map(|&v| f(v)).collect())
    }

    pub(crate) fn ensure_same_dims(&self, other: &Image) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::dims(
                format!("{}x{}", self.height, self.width),
                format!("{}x{}", other.height, other.width),
            ));
        }
        Ok(())
    }

    /// Reads an 8- or 16-bit grayscale PNG (colour inputs are converted to luma).
    ///
    /// 8-bit samples map to `[0, 255]` unchanged; 16-bit samples are rescaled by `255/65535`.
    pub fn read_png(path: impl AsRef<Path>) -> Result<Image> {
        let path = path.as_ref();
        let img = image::open(path).map_err(|e| match e {
            image::ImageError::IoError(io) => Error::io(path, io),
            other => Error::Image {
                path: path.to_path_buf(),
                message: other.to_string(),
            },
        })?;
        let (w, h) = (img.width() as usize, img.height() as usize);
        let data: Vec<f64> = match img {
            image::DynamicImage::ImageLuma16(buf) => buf
                .into_raw()
                .into_iter()
                .map(|v| f64::from(v) * 255.0 / 65535.0)
                .collect(),
            image::DynamicImage::ImageLuma8(buf) => buf.into_raw().into_iter().map(f64::from).collect(),
            other => other.to_luma8().into_raw().into_iter().map(f64::from).collect(),
        };
        Image::new(h, w, data)
    }

    /// 8-bit grayscale quantization: clamp to `[0, 255]`, round half to even.
    pub fn to_gray8(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|v| v.clamp(0.0, 255.0).round_ties_even() as u8)
            .collect()
    }

    pub fn write_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let buf = image::GrayImage::from_raw(self.width as u32, self.height as u32, self.to_gray8())
            .expect("buffer length matches dimensions");
        buf.save_with_format(path, image::ImageFormat::Png)
            .map_err(|e| match e {
                image::ImageError::IoError(io) => Error::io(path, io),
                other => Error::Image {
                    path: path.to_path_buf(),
                    message: other.to_string(),
                },
            })
    }
}

/// Boolean support mask over the padded measurement grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SupportMask {
    height: usize,
    width: usize,
    inside: Vec<bool>,
}

impl SupportMask {
    /// Support of an `inner_h x inner_w` image embedded in the top-left corner of
    /// its `2*inner_h x 2*inner_w` zero-padded grid.
    pub fn top_left(inner_h: usize, inner_w: usize) -> Self {
        let (h, w) = (2 * inner_h, 2 * inner_w);
        let inside = (0..h * w).map(|idx| idx / w < inner_h && idx % w < inner_w).collect();
        Self {
            height: h,
            width: w,
            inside,
        }
    }

    /// Every index is inside.
    pub fn full(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            inside: vec![true; height * width],
        }
    }

    pub fn new(height: usize, width: usize, inside: Vec<bool>) -> Result<Self> {
        if inside.len() != height * width {
            return Err(Error::dims(height * width, inside.len()));
        }
        Ok(Self { height, width, inside })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn inside(&self) -> &[bool] {
        &self.inside
    }

    pub fn contains(&self, idx: usize) -> bool {
        self.inside[idx]
    }

    pub fn count(&self) -> usize {
        self.inside.iter().filter(|&&b| b).count()
    }

    /// Transforms a top-left support on its padded grid by the circular action of `t`
    /// anchored at the inner block (see [`D4::grid_source`]).
    pub fn transformed(&self, t: D4, inner_h: usize, inner_w: usize) -> Result<SupportMask> {
        if t.swaps_axes() && self.height != self.width {
            return Err(Error::NotSquare(t));
        }
        let mut inside = vec![false; self.inside.len()];
        for i in 0..self.height {
            for j in 0..self.width {
                let (si, sj) = t.grid_source(i, j, self.height, self.width, inner_h, inner_w);
                inside[i * self.width + j] = self.inside[si * self.width + sj];
            }
        }
        Ok(SupportMask {
            height: self.height,
            width: self.width,
            inside,
        })
    }
}

/// Embeds `img` in the top-left corner of a zero grid of twice its size per axis.
pub fn pad_to_grid(img: &Image) -> Image {
    let (h, w) = img.dims();
    let mut grid = Image::zeros(2 * h, 2 * w);
    for i in 0..h {
        grid.data[i * 2 * w..i * 2 * w + w].copy_from_slice(&img.data[i * w..(i + 1) * w]);
    }
    grid
}

/// Returns the top-left half-size block of a padded grid.
pub fn crop_support(grid: &Image) -> Result<Image> {
    let (gh, gw) = grid.dims();
    if gh % 2 != 0 || gw % 2 != 0 || gh == 0 || gw == 0 {
        return Err(Error::dims("even, non-empty grid dimensions", format!("{gh}x{gw}")));
    }
    let (h, w) = (gh / 2, gw / 2);
    let mut data = Vec::with_capacity(h * w);
    for i in 0..h {
        data.extend_from_slice(&grid.data[i * gw..i * gw + w]);
    }
    Ok(Image::from_vec_unchecked(h, w, data))
}

/// Crops a padded grid, checking it matches the configured image size.
pub fn crop_support_to(grid: &Image, height: usize, width: usize) -> Result<Image> {
    if grid.dims() != (2 * height, 2 * width) {
        return Err(Error::dims(
            format!("{}x{}", 2 * height, 2 * width),
            format!("{}x{}", grid.height, grid.width),
        ));
    }
    crop_support(grid)
}

/// The eight symmetries of the square.
///
/// Each element is stored as the signed permutation `M` that maps an output
/// index `p = (i, j)` to the source index `M p` (negative coordinates are
/// reflected about the image extent). `R90` is a counter-clockwise quarter turn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum D4 {
    R0,
    R90,
    R180,
    R270,
    HF,
    VF,
    DF,
    ADF,
}

impl D4 {
    pub const ALL: [D4; 8] = [D4::R0, D4::R90, D4::R180, D4::R270, D4::HF, D4::VF, D4::DF, D4::ADF];

    fn matrix(self) -> [[i8; 2]; 2] {
        match self {
            D4::R0 => [[1, 0], [0, 1]],
            D4::R90 => [[0, 1], [-1, 0]],
            D4::R180 => [[-1, 0], [0, -1]],
            D4::R270 => [[0, -1], [1, 0]],
            D4::HF => [[1, 0], [0, -1]],
            D4::VF => [[-1, 0], [0, 1]],
            D4::DF => [[0, 1], [1, 0]],
            D4::ADF => [[0, -1], [-1, 0]],
        }
    }

    fn from_matrix(m: [[i8; 2]; 2]) -> D4 {
        *D4::ALL
            .iter()
            .find(|t| t.matrix() == m)
            .expect("signed permutation matrices are closed under products")
    }

    /// True for the elements that exchange rows and columns.
    pub fn swaps_axes(self) -> bool {
        self.matrix()[0][0] == 0
    }

    pub fn inverse(self) -> D4 {
        let m = self.matrix();
        D4::from_matrix([[m[0][0], m[1][0]], [m[0][1], m[1][1]]])
    }

    /// The element equivalent to applying `self` and then `then`.
    pub fn then(self, then: D4) -> D4 {
        let (a, b) = (self.matrix(), then.matrix());
        let mut m = [[0i8; 2]; 2];
        for (r, row) in m.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = a[r][0] * b[0][c] + a[r][1] * b[1][c];
            }
        }
        D4::from_matrix(m)
    }

    /// Signed source coordinates `M p`.
    fn linear(self, i: usize, j: usize) -> [(usize, bool); 2] {
        let m = self.matrix();
        let pick = |row: [i8; 2]| -> (usize, bool) {
            if row[0] != 0 {
                (i, row[0] < 0)
            } else {
                (j, row[1] < 0)
            }
        };
        [pick(m[0]), pick(m[1])]
    }

    /// Source pixel of output pixel `(i, j)` for a source image of `h x w`.
    pub fn image_source(self, i: usize, j: usize, h: usize, w: usize) -> (usize, usize) {
        let [(a, na), (b, nb)] = self.linear(i, j);
        (if na { h - 1 - a } else { a }, if nb { w - 1 - b } else { b })
    }

    /// Source bin on an `n1 x n2` Fourier grid: `M k mod N`.
    pub fn frequency_source(self, k1: usize, k2: usize, n1: usize, n2: usize) -> (usize, usize) {
        let [(a, na), (b, nb)] = self.linear(k1, k2);
        (
            if na { (n1 - a % n1) % n1 } else { a },
            if nb { (n2 - b % n2) % n2 } else { b },
        )
    }

    /// Source index on an `n1 x n2` padded grid for the circular extension of the
    /// image action anchored at the `inner_h x inner_w` top-left block.
    pub fn grid_source(
        self,
        i: usize,
        j: usize,
        n1: usize,
        n2: usize,
        inner_h: usize,
        inner_w: usize,
    ) -> (usize, usize) {
        let [(a, na), (b, nb)] = self.linear(i, j);
        let wrap = |v: usize, neg: bool, extent: usize, n: usize| {
            if neg {
                (extent + n - 1 - v % n) % n
            } else {
                v
            }
        };
        (wrap(a, na, inner_h, n1), wrap(b, nb, inner_w, n2))
    }

    fn check(self, h: usize, w: usize) -> Result<()> {
        if self.swaps_axes() && h != w {
            return Err(Error::NotSquare(self));
        }
        Ok(())
    }
}

/// Applies a D4 element as a pure index permutation.
pub fn apply_d4(img: &Image, t: D4) -> Result<Image> {
    let (h, w) = img.dims();
    t.check(h, w)?;
    Ok(Image::from_fn(h, w, |i, j| {
        let (si, sj) = t.image_source(i, j, h, w);
        img.data[si * w + sj]
    }))
}

pub fn inverse_d4(t: D4) -> D4 {
    t.inverse()
}

/// Permutes a row-major `n1 x n2` Fourier-domain array so that `|A(t x)| = P_t(|A x|)`.
pub fn permute_frequency_grid<T: Copy>(values: &[T], n1: usize, n2: usize, t: D4) -> Result<Vec<T>> {
    t.check(n1, n2)?;
    if values.len() != n1 * n2 {
        return Err(Error::dims(n1 * n2, values.len()));
    }
    let mut out = Vec::with_capacity(values.len());
    for k1 in 0..n1 {
        for k2 in 0..n2 {
            let (s1, s2) = t.frequency_source(k1, k2, n1, n2);
            out.push(values[s1 * n2 + s2]);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn probe(n: usize) -> Image {
        Image::from_fn(n, n, |i, j| (i * n + j) as f64)
    }

    #[test]
    fn identity_leaves_image() {
        let img = Image::from_fn(3, 5, |i, j| (i * 7 + j * 3) as f64);
        assert_eq!(apply_d4(&img, D4::R0).unwrap(), img);
    }

    #[test]
    fn horizontal_flip_two_by_two() {
        let img = Image::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let out = apply_d4(&img, D4::HF).unwrap();
        assert_eq!(out.data(), &[2.0, 1.0, 4.0, 3.0]);
    }

    #[test]
    fn quarter_turn_matches_counter_clockwise_rotation() {
        let img = Image::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        // [[1,2],[3,4]] rotated counter-clockwise is [[2,4],[1,3]].
        assert_eq!(apply_d4(&img, D4::R90).unwrap().data(), &[2.0, 4.0, 1.0, 3.0]);
    }

    #[test]
    fn composition_table_matches_brute_force() {
        let img = probe(3);
        let images: Vec<Image> = D4::ALL.iter().map(|&t| apply_d4(&img, t).unwrap()).collect();
        for &a in &D4::ALL {
            for &b in &D4::ALL {
                let composed = apply_d4(&apply_d4(&img, a).unwrap(), b).unwrap();
                let matches: Vec<D4> = D4::ALL
                    .iter()
                    .zip(&images)
                    .filter(|(_, im)| **im == composed)
                    .map(|(&t, _)| t)
                    .collect();
                assert_eq!(matches, vec![a.then(b)], "{a:?} then {b:?}");
            }
        }
    }

    #[test]
    fn inverses() {
        assert_eq!(inverse_d4(D4::R0), D4::R0);
        assert_eq!(inverse_d4(D4::R90), D4::R270);
        let img = probe(4);
        for t in [D4::HF, D4::VF, D4::DF, D4::ADF] {
            assert_eq!(t.inverse(), t);
            let twice = apply_d4(&apply_d4(&img, t).unwrap(), t).unwrap();
            assert_eq!(twice, img);
        }
        for t in D4::ALL {
            let back = apply_d4(&apply_d4(&img, t).unwrap(), t.inverse()).unwrap();
            assert_eq!(back, img);
        }
    }

    #[test]
    fn rotations_reject_non_square() {
        let img = Image::zeros(2, 3);
        assert!(matches!(apply_d4(&img, D4::R90), Err(Error::NotSquare(D4::R90))));
        assert!(apply_d4(&img, D4::HF).is_ok());
        assert!(apply_d4(&img, D4::R180).is_ok());
    }

    #[test]
    fn pad_smallest_case() {
        let img = Image::new(1, 1, vec![5.0]).unwrap();
        assert_eq!(pad_to_grid(&img).data(), &[5.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn crop_of_zero_grid_and_bad_dims() {
        let z = crop_support(&Image::zeros(6, 4)).unwrap();
        assert_eq!(z, Image::zeros(3, 2));
        assert!(crop_support(&Image::zeros(3, 4)).is_err());
        assert!(crop_support_to(&Image::zeros(6, 4), 2, 2).is_err());
    }

    #[test]
    fn default_support_is_top_left_block() {
        let s = SupportMask::top_left(2, 3);
        assert_eq!(s.dims(), (4, 6));
        assert_eq!(s.count(), 6);
        assert!(s.contains(0) && s.contains(2) && !s.contains(3) && s.contains(6 + 2));
        assert!(!s.contains(2 * 6));
    }

    #[test]
    fn square_support_is_d4_invariant() {
        let s = SupportMask::top_left(4, 4);
        for t in D4::ALL {
            assert_eq!(s.transformed(t, 4, 4).unwrap(), s, "{t:?}");
        }
    }

    #[test]
    fn new_rejects_non_finite_and_bad_length() {
        assert!(Image::new(1, 2, vec![1.0]).is_err());
        assert!(matches!(Image::new(1, 1, vec![f64::NAN]), Err(Error::NonFinite(_))));
    }

    #[test]
    fn png_round_trip_quantizes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.png");
        let img = Image::new(1, 4, vec![-3.0, 2.5, 3.5, 300.0]).unwrap();
        img.write_png(&path).unwrap();
        let back = Image::read_png(&path).unwrap();
        assert_eq!(back.data(), &[0.0, 2.0, 4.0, 255.0]);
    }

    #[test]
    fn sixteen_bit_png_is_rescaled() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x16.png");
        let buf: image::ImageBuffer<image::Luma<u16>, Vec<u16>> =
            image::ImageBuffer::from_raw(2, 1, vec![0u16, 65535]).unwrap();
        buf.save(&path).unwrap();
        let back = Image::read_png(&path).unwrap();
        assert_eq!(back.data(), &[0.0, 255.0]);
    }
}
