//! Fourier phase retrieval from oversampled magnitudes.
//!
//! The pipeline runs a multi-start HIO initialization, then refines each kept
//! estimate with a denoiser-driven Langevin loop in which every step denoises,
//! blends the measurement with the current spectrum, runs a few HIO iterations
//! and re-injects noise. Chains and test-time augmentation branches are averaged.
//!
//! ```
//! use prforge::{run_prnet, simulate_seeded, DenoiserModel, FourierOp, Image, PipelineConfig};
//!
//! let truth = Image::from_fn(8, 8, |i, j| ((i * 8 + j) % 13) as f64 * 10.0);
//! let op = FourierOp::new(8, 8).unwrap();
//! let meas = simulate_seeded(&op, &truth, 0.0, 7).unwrap();
//! let mut cfg = PipelineConfig::small(0.0, 1);
//! cfg.init.num_starts = 4;
//! cfg.init.long_iters = 50;
//! let result = run_prnet(&op, &meas, &cfg, &DenoiserModel::Identity, None).unwrap();
//! assert_eq!(result.aggregate.dims(), (8, 8));
//! ```

pub mod benchmark;
pub mod denoiser;
pub mod error;
pub mod exec;
pub mod formats;
pub mod fourier;
pub mod hio;
pub mod image;
pub mod init;
pub mod langevin;
pub mod metrics;
pub mod recon;
pub mod rng;
pub mod tta;

pub use denoiser::{score_from_denoiser, Denoiser, DenoiserModel, NoiseLevel, WeightsArchive};
pub use error::{Error, Result};
pub use exec::Execution;
pub use fourier::{simulate, simulate_seeded, snr_db, FourierOp, Measurement};
pub use hio::{run_er, run_hio, HioConfig};
pub use image::{apply_d4, Image, SupportMask, D4};
pub use init::{initialization_stage, InitConfig};
pub use langevin::{run_prnet, PipelineConfig, ReconstructionResult};
pub use metrics::{psnr, resolve_conjugate_flip, ssim, MetricReport};
pub use recon::{reconstruct, Method, RunSettings};
pub use rng::SeedTree;
pub use tta::{run_with_tta, TtaMode};
