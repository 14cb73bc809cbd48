#![allow(dead_code)]

use std::f64::consts::TAU;
use std::path::PathBuf;

use num_complex::Complex64;
use prforge::{Image, SeedTree};
use rand::Rng;

pub const NATURAL: [&str; 10] = [
    "camera",
    "astronaut",
    "coffee",
    "chelsea",
    "coins",
    "moon",
    "grass",
    "gravel",
    "brick",
    "rocket",
];

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests").join("data")
}

pub fn natural(name: &str) -> Image {
    Image::read_png(data_dir().join("natural").join(format!("{name}.png"))).unwrap()
}

pub fn random_image(h: usize, w: usize, seed: u64) -> Image {
    let mut rng = SeedTree::new(seed).rng();
    Image::from_fn(h, w, |_, _| rng.random::<f64>() * 255.0)
}

/// Dense `4HW x HW` matrix of the unitary oversampled DFT, built entry by entry.
pub fn dense_dft(h: usize, w: usize) -> Vec<Vec<Complex64>> {
    let (n1, n2) = (2 * h, 2 * w);
    let scale = 1.0 / ((n1 * n2) as f64).sqrt();
    let mut rows = Vec::with_capacity(n1 * n2);
    for k1 in 0..n1 {
        for k2 in 0..n2 {
            let mut row = Vec::with_capacity(h * w);
            for i in 0..h {
                for j in 0..w {
                    let phase = -TAU * ((k1 * i) as f64 / n1 as f64 + (k2 * j) as f64 / n2 as f64);
                    row.push(Complex64::from_polar(scale, phase));
                }
            }
            rows.push(row);
        }
    }
    rows
}

pub fn dense_apply(m: &[Vec<Complex64>], x: &Image) -> Vec<Complex64> {
    m.iter()
        .map(|row| row.iter().zip(x.data()).map(|(a, &v)| a * v).sum())
        .collect()
}

/// `Re(M^H f)` with the dense matrix.
pub fn dense_adjoint(m: &[Vec<Complex64>], f: &[Complex64], h: usize, w: usize) -> Image {
    let mut out = vec![0.0; h * w];
    for (row, fk) in m.iter().zip(f) {
        for (o, a) in out.iter_mut().zip(row) {
            *o += (a.conj() * fk).re;
        }
    }
    Image::new(h, w, out).unwrap()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn mse(a: &Image, b: &Image) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64
}
