//! Experiment runner behind the command-line tool.
//!
//! Every random draw comes from a stream derived from the master seed:
//! `("truth", 0)` for the ground truth, `("masks", 0)` from the mask seed,
//! `("noise", i)` for the `i`-th noise level and `("sampler", seed)` for each
//! reconstruction. The sampler stream does not depend on the method, so every
//! method starts from the same `x^T` for a given seed.

mod config;
mod reconstruct;
mod simulate;
mod train;

use std::fs;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

pub use config::{
    AmplitudeFlowConfig, DenoiserSource, ExperimentConfig, Generator, ImageSource, Method,
    NoiseConfig, OperatorConfig, ScheduleConfig, TrainSection, TvSection,
};
pub use reconstruct::{
    cmd_reconstruct, cmd_sample_many, DiversityReport, ReconstructSummary, RunRecord,
    METRICS_HEADER,
};
pub use simulate::{cmd_simulate, load_simulation, simulate, Simulation, SimulationManifest};
pub use train::{cmd_train, TrainSummary};

use crate::cdp::{make_cdp_operator, CdpOperator};
use crate::denoiser::{
    load_checkpoint, EpsilonModel, GaussianPrior, PriorMean, TinyDenoiser, ZeroDenoiser,
};
use crate::error::{Error, Result};
use crate::field::{io, ImageField, SeededRng, Shape};
use crate::schedule::{make_linear_schedule, NoiseSchedule};

/// Denoiser chosen by the `denoiser` config section.
#[derive(Debug, Clone)]
pub enum Denoiser {
    Analytic(GaussianPrior<f64>),
    Network(TinyDenoiser<f64>),
    Zero,
}

impl EpsilonModel<f64> for Denoiser {
    fn predict(
        &self,
        x_t: &ImageField<f64>,
        t: usize,
        sched: &NoiseSchedule<f64>,
    ) -> Result<ImageField<f64>> {
        match self {
            Denoiser::Analytic(p) => p.predict(x_t, t, sched),
            Denoiser::Network(n) => n.predict(x_t, t, sched),
            Denoiser::Zero => ZeroDenoiser.predict(x_t, t, sched),
        }
    }
}

impl ExperimentConfig {
    pub fn build_schedule(&self) -> Result<NoiseSchedule<f64>> {
        let s = &self.schedule;
        Ok(make_linear_schedule(s.steps, s.beta_start, s.beta_end)?.with_sigma_mode(s.sigma_mode))
    }

    pub fn build_denoiser(&self) -> Result<Denoiser> {
        Ok(match &self.denoiser {
            DenoiserSource::Analytic { mean, variance } => {
                Denoiser::Analytic(GaussianPrior::new(PriorMean::Uniform(*mean), *variance)?)
            }
            DenoiserSource::Checkpoint { path } => {
                Denoiser::Network(load_checkpoint(path, Some(&self.train.arch))?)
            }
            DenoiserSource::Zero => Denoiser::Zero,
        })
    }

    pub fn mask_seed(&self) -> u64 {
        self.operator.seed.unwrap_or(self.master_seed)
    }

    /// Operator with masks rounded to the stored `f32` precision, so a
    /// freshly built operator equals one read back from disk.
    pub fn build_operator(&self, shape: Shape) -> Result<CdpOperator<f64>> {
        let mut rng = SeededRng::derive(self.mask_seed(), "masks", 0);
        let op: CdpOperator<f64> = make_cdp_operator(shape, self.operator.num_masks, &mut rng)?;
        let stored = io::encode_raw_complex(&op.masks_as_field());
        let (field, _) = io::decode_raw_complex(&stored)?;
        CdpOperator::from_mask_field(&field, shape.channels)
    }

    /// Ground-truth image, rounded to `f32` precision.
    pub fn ground_truth(&self) -> Result<ImageField<f64>> {
        let x = match &self.image {
            ImageSource::File { path } => io::read_image(path)?,
            ImageSource::Synthetic { .. } => {
                let mut rng = SeededRng::derive(self.master_seed, "truth", 0);
                self.synthetic_image(&mut rng)?
            }
        };
        Ok(round_f32(&x))
    }

    /// One draw from the configured synthetic generator.
    pub fn synthetic_image(&self, rng: &mut SeededRng) -> Result<ImageField<f64>> {
        let ImageSource::Synthetic {
            generator,
            height,
            width,
            channels,
            mean,
            variance,
            rects,
        } = &self.image
        else {
            return Err(Error::Config(
                "image: a synthetic generator is required here".into(),
            ));
        };
        let shape = Shape::new(*height, *width, *channels);
        match generator {
            Generator::Gaussian => {
                GaussianPrior::new(PriorMean::Uniform(*mean), *variance)?.sample(shape, rng)
            }
            Generator::Phantom => Ok(phantom(shape, *rects, rng)),
        }
    }

    /// Prior matching the Gaussian generator, if that is the image source.
    pub fn generator_prior(&self) -> Option<GaussianPrior<f64>> {
        match &self.image {
            ImageSource::Synthetic {
                generator: Generator::Gaussian,
                mean,
                variance,
                ..
            } => GaussianPrior::new(PriorMean::Uniform(*mean), *variance).ok(),
            _ => None,
        }
    }
}

/// Flat background in `[0.1, 0.3)` with `rects` axis-aligned rectangles of
/// random size, position and level in `[0.3, 1)`, all channels alike.
pub fn phantom(shape: Shape, rects: usize, rng: &mut SeededRng) -> ImageField<f64> {
    let (h, w) = (shape.height, shape.width);
    let mut plane = vec![0.1 + 0.2 * rng.uniform(); shape.plane()];
    for _ in 0..rects {
        let rh = 1 + rng.below(h.div_ceil(2));
        let rw = 1 + rng.below(w.div_ceil(2));
        let r0 = rng.below(h - rh + 1);
        let c0 = rng.below(w - rw + 1);
        let level = 0.3 + 0.7 * rng.uniform();
        for r in r0..r0 + rh {
            plane[r * w + c0..r * w + c0 + rw].fill(level);
        }
    }
    ImageField::from_fn(shape, |i| plane[i % shape.plane()])
}

pub(crate) fn round_f32(x: &ImageField<f64>) -> ImageField<f64> {
    x.map(|v| v as f32 as f64)
}

/// Lays images side by side with a one-pixel zero gap.
pub fn tile_horizontal(images: &[ImageField<f64>]) -> Result<ImageField<f64>> {
    let first = images
        .first()
        .ok_or_else(|| Error::Parameter("nothing to tile".into()))?;
    let s = first.shape();
    let n = images.len();
    let width = n * s.width + n - 1;
    let out_shape = Shape::new(s.height, width, s.channels);
    let mut out = ImageField::zeros(out_shape);
    for (k, img) in images.iter().enumerate() {
        s.ensure_eq(&img.shape())?;
        for c in 0..s.channels {
            let src = img.channel(c);
            let dst = out.channel_mut(c);
            for r in 0..s.height {
                let off = r * width + k * (s.width + 1);
                dst[off..off + s.width].copy_from_slice(&src[r * s.width..(r + 1) * s.width]);
            }
        }
    }
    Ok(out)
}

pub(crate) fn snr_file_label(label: &str) -> String {
    format!("snr{label}")
}

pub(crate) fn ensure_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Removes files left by an earlier run whose names start with one of
/// `prefixes`, so the new manifest references everything in `dir`.
pub(crate) fn clear_outputs(dir: &Path, prefixes: &[&str]) -> Result<()> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if path.is_file() && prefixes.iter().any(|p| name.starts_with(p)) {
            fs::remove_file(&path).map_err(|e| Error::io(&path, e))?;
        }
    }
    Ok(())
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Writes pretty JSON and returns the SHA-256 of the written bytes.
pub(crate) fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<String> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("manifest serializes");
    bytes.push(b'\n');
    write_file(path, &bytes)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub(crate) fn build_pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("--jobs: {e}")))
}
