//! The fixed six-layer residual CNN.
//!
//! conv3x3(2→32)+ReLU, 4 × conv3x3(32→32)+ReLU, conv3x3(32→1); stride 1,
//! reflect padding of one pixel, float32 arithmetic. Input channel 0 is the
//! image divided by 255, channel 1 is the constant `σ/255`; the single output
//! channel is the predicted noise residual in the same scaled units.

use super::weights::{TensorSpec, WeightsArchive};
use super::{reflect, Denoiser, NoiseLevel};
use crate::error::{Error, Result};
use crate::image::Image;

/// `(name, in_channels, out_channels, relu)` for each layer.
pub const CNN_LAYERS: [(&str, usize, usize, bool); 6] = [
    ("conv0", 2, 32, true),
    ("conv1", 32, 32, true),
    ("conv2", 32, 32, true),
    ("conv3", 32, 32, true),
    ("conv4", 32, 32, true),
    ("conv5", 32, 1, false),
];

const PIXEL_SCALE: f32 = 255.0;

pub(crate) fn expected_arch() -> Vec<TensorSpec> {
    CNN_LAYERS
        .iter()
        .flat_map(|&(name, cin, cout, relu)| {
            let activation = if relu { "relu" } else { "none" }.to_string();
            [
                TensorSpec {
                    name: format!("{name}.weight"),
                    shape: vec![cout, cin, 3, 3],
                    activation: activation.clone(),
                },
                TensorSpec {
                    name: format!("{name}.bias"),
                    shape: vec![cout],
                    activation,
                },
            ]
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
struct ConvLayer {
    cin: usize,
    cout: usize,
    relu: bool,
    weight: Vec<f32>,
    bias: Vec<f32>,
}

impl ConvLayer {
    fn forward(&self, input: &[f32], h: usize, w: usize) -> Vec<f32> {
        let (ph, pw) = (h + 2, w + 2);
        let mut padded = vec![0.0f32; self.cin * ph * pw];
        for c in 0..self.cin {
            for i in 0..ph {
                let si = reflect(i as isize - 1, h);
                for j in 0..pw {
                    let sj = reflect(j as isize - 1, w);
                    padded[(c * ph + i) * pw + j] = input[(c * h + si) * w + sj];
                }
            }
        }
        let mut out = vec![0.0f32; self.cout * h * w];
        for o in 0..self.cout {
            let plane = &mut out[o * h * w..(o + 1) * h * w];
            plane.fill(self.bias[o]);
            for c in 0..self.cin {
                let src = &padded[c * ph * pw..(c + 1) * ph * pw];
                for di in 0..3 {
                    for dj in 0..3 {
                        let k = self.weight[((o * self.cin + c) * 3 + di) * 3 + dj];
                        if k == 0.0 {
                            continue;
                        }
                        for i in 0..h {
                            let row = &src[(i + di) * pw + dj..(i + di) * pw + dj + w];
                            for (acc, &v) in plane[i * w..(i + 1) * w].iter_mut().zip(row) {
                                *acc += k * v;
                            }
                        }
                    }
                }
            }
            if self.relu {
                plane.iter_mut().for_each(|v| *v = v.max(0.0));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualCnn {
    layers: Vec<ConvLayer>,
}

impl ResidualCnn {
    pub fn from_archive(archive: &WeightsArchive) -> Result<Self> {
        archive.validate()?;
        let layers = CNN_LAYERS
            .iter()
            .enumerate()
            .map(|(k, &(_, cin, cout, relu))| ConvLayer {
                cin,
                cout,
                relu,
                weight: archive.tensors[2 * k].clone(),
                bias: archive.tensors[2 * k + 1].clone(),
            })
            .collect();
        Ok(Self { layers })
    }

    /// Runs the network on a `2 x h x w` channel-major input, returning the `h x w` residual.
    pub fn forward(&self, input: &[f32], h: usize, w: usize) -> Result<Vec<f32>> {
        if h < 2 || w < 2 {
            return Err(Error::InvalidParameter(format!(
                "CNN input must be at least 2x2, got {h}x{w}"
            )));
        }
        if input.len() != 2 * h * w {
            return Err(Error::dims(2 * h * w, input.len()));
        }
        let mut x = input.to_vec();
        for layer in &self.layers {
            x = layer.forward(&x, h, w);
        }
        Ok(x)
    }
}

/// Free-function form of [`ResidualCnn::forward`].
pub fn cnn_forward(net: &ResidualCnn, input: &[f32], h: usize, w: usize) -> Result<Vec<f32>> {
    net.forward(input, h, w)
}

impl Denoiser for ResidualCnn {
    fn denoise(&self, x: &Image, level: NoiseLevel) -> Result<Image> {
        let (h, w) = x.dims();
        let mut input = Vec::with_capacity(2 * h * w);
        input.extend(x.data().iter().map(|&v| v as f32 / PIXEL_SCALE));
        input.extend(std::iter::repeat_n(level.sigma() as f32 / PIXEL_SCALE, h * w));
        let residual = self.forward(&input, h, w)?;
        let data = x
            .data()
            .iter()
            .zip(&residual)
            .map(|(&v, &r)| v - f64::from(r * PIXEL_SCALE))
            .collect();
        Image::new(h, w, data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_network_is_identity() {
        let net = ResidualCnn::from_archive(&WeightsArchive::zeros(None)).unwrap();
        let x = Image::from_fn(5, 7, |i, j| (i * 13 + j * 29) as f64);
        let out = net.denoise(&x, NoiseLevel::new(3.0).unwrap()).unwrap();
        assert_eq!(out, x);
        let r = net.forward(&vec![1.0; 2 * 35], 5, 7).unwrap();
        assert!(r.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn output_keeps_input_size() {
        let archive = WeightsArchive::from_fn(None, |_, k| ((k % 7) as f32 - 3.0) * 0.01);
        let net = ResidualCnn::from_archive(&archive).unwrap();
        for (h, w) in [(3, 3), (4, 9), (8, 5)] {
            assert_eq!(net.forward(&vec![0.5; 2 * h * w], h, w).unwrap().len(), h * w);
        }
        assert!(net.forward(&[0.0; 2], 1, 1).is_err());
        assert!(net.forward(&[0.0; 5], 2, 2).is_err());
    }

    #[test]
    fn arch_has_twelve_tensors() {
        let arch = expected_arch();
        assert_eq!(arch.len(), 12);
        assert_eq!(arch[10].shape, vec![1, 32, 3, 3]);
        assert_eq!(arch[11].activation, "none");
    }
}
