//! JSON experiment configuration with a strict schema and explicit defaults.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cdp::InputSnr;
use crate::denoiser::{DenoiserArch, TrainConfig};
use crate::error::{Error, Result};
use crate::field::Shape;
use crate::samplers::{DolphConfig, TvConfig};
use crate::schedule::SigmaMode;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub image: ImageSource,
    pub operator: OperatorConfig,
    pub noise: NoiseConfig,
    pub method: Method,
    pub dolph: DolphConfig,
    pub amplitude_flow: AmplitudeFlowConfig,
    pub tv: TvSection,
    pub schedule: ScheduleConfig,
    pub denoiser: DenoiserSource,
    pub train: TrainSection,
    /// Sampler seeds; one reconstruction per seed and noise level.
    pub seeds: Vec<u64>,
    /// Root of every derived random stream.
    pub master_seed: u64,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            image: ImageSource::default(),
            operator: OperatorConfig::default(),
            noise: NoiseConfig::default(),
            method: Method::Dolph,
            dolph: DolphConfig::default(),
            amplitude_flow: AmplitudeFlowConfig::default(),
            tv: TvSection::default(),
            schedule: ScheduleConfig::default(),
            denoiser: DenoiserSource::default(),
            train: TrainSection::default(),
            seeds: vec![0],
            master_seed: 0,
            output_dir: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum ImageSource {
    Synthetic {
        #[serde(default)]
        generator: Generator,
        #[serde(default = "default_side")]
        height: usize,
        #[serde(default = "default_side")]
        width: usize,
        #[serde(default = "one")]
        channels: usize,
        /// Gaussian generator: per-pixel mean and variance.
        #[serde(default = "default_mean")]
        mean: f64,
        #[serde(default = "default_variance")]
        variance: f64,
        /// Phantom generator: number of rectangles.
        #[serde(default = "default_rects")]
        rects: usize,
    },
    /// PNG, PGM or PPM scaled to `[0, 1]`.
    File { path: PathBuf },
}

fn default_side() -> usize {
    16
}
fn one() -> usize {
    1
}
fn default_mean() -> f64 {
    0.5
}
fn default_variance() -> f64 {
    1e-4
}
fn default_rects() -> usize {
    4
}

impl Default for ImageSource {
    fn default() -> Self {
        ImageSource::Synthetic {
            generator: Generator::Gaussian,
            height: default_side(),
            width: default_side(),
            channels: 1,
            mean: default_mean(),
            variance: default_variance(),
            rects: default_rects(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    /// Draws from the Gaussian prior.
    #[default]
    Gaussian,
    /// Random piecewise-constant rectangles on a flat background.
    Phantom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OperatorConfig {
    pub num_masks: usize,
    /// Mask seed; derived from the master seed when absent.
    pub seed: Option<u64>,
}

impl Default for OperatorConfig {
    fn default() -> Self {
        Self {
            num_masks: 1,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    /// Levels in dB, or `"noiseless"`.
    pub input_snr_db: Vec<InputSnr>,
    pub clip_negative: bool,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            input_snr_db: vec![InputSnr::Db(15.0), InputSnr::Db(20.0), InputSnr::Db(25.0)],
            clip_negative: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Dolph,
    Ddpm,
    AmplitudeFlow,
    Tv,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Dolph => "dolph",
            Method::Ddpm => "ddpm",
            Method::AmplitudeFlow => "amplitude_flow",
            Method::Tv => "tv",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AmplitudeFlowConfig {
    pub step: f64,
    pub iters: usize,
}

impl Default for AmplitudeFlowConfig {
    fn default() -> Self {
        Self {
            step: 0.25,
            iters: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TvSection {
    pub tau: f64,
    pub step: f64,
    pub outer_iters: usize,
    pub inner_iters: usize,
    /// When nonempty, `tau` is chosen per cell from this grid by the
    /// reconstruction SNR against the ground truth.
    pub tau_grid: Vec<f64>,
}

impl Default for TvSection {
    fn default() -> Self {
        let tv = TvConfig::default();
        Self {
            tau: tv.tau,
            step: tv.step,
            outer_iters: tv.outer_iters,
            inner_iters: tv.inner_iters,
            tau_grid: Vec::new(),
        }
    }
}

impl TvSection {
    pub fn tv_config(&self) -> TvConfig {
        TvConfig {
            tau: self.tau,
            step: self.step,
            outer_iters: self.outer_iters,
            inner_iters: self.inner_iters,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleConfig {
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub sigma_mode: SigmaMode,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            steps: 1000,
            beta_start: 1e-4,
            beta_end: 0.02,
            sigma_mode: SigmaMode::Beta,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DenoiserSource {
    /// Exact predictor for a `N(mean, variance I)` prior.
    Analytic { mean: f64, variance: f64 },
    /// Trained network; its architecture must match `train.arch`.
    Checkpoint { path: PathBuf },
    /// Predicts `ε = 0`.
    Zero,
}

impl Default for DenoiserSource {
    fn default() -> Self {
        DenoiserSource::Analytic {
            mean: default_mean(),
            variance: default_variance(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub arch: DenoiserArch,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    /// Training images drawn from the image generator.
    pub dataset_size: usize,
    /// Fresh `(x^0, t, ε)` draws for the held-out evaluation.
    pub held_out: usize,
    /// Resume from this checkpoint instead of a fresh initialization.
    pub init_checkpoint: Option<PathBuf>,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            arch: t.arch,
            epochs: t.epochs,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            momentum: t.momentum,
            dataset_size: 512,
            held_out: 1000,
            init_checkpoint: None,
        }
    }
}

impl TrainSection {
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            arch: self.arch.clone(),
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            momentum: self.momentum,
        }
    }
}

/// Fields that determine the simulated measurements.
#[derive(Serialize)]
struct MeasurementKey<'a> {
    image: &'a ImageSource,
    operator: &'a OperatorConfig,
    noise: &'a NoiseConfig,
    master_seed: u64,
}

fn sha256_json<S: Serialize>(value: &S) -> String {
    let bytes = serde_json::to_vec(value).expect("config serializes");
    hex::encode(Sha256::digest(bytes))
}

impl ExperimentConfig {
    /// Parses a config document; errors name the offending line and field.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("line {}, column {}: {e}", e.line(), e.column())))?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
            .map_err(|e| Error::Config(format!("{}: {}", path.display(), strip_prefix(&e))))
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Hash of the whole configuration except `output_dir`, so the same
    /// experiment written to two locations hashes alike.
    pub fn config_hash(&self) -> String {
        sha256_json(&Self {
            output_dir: PathBuf::new(),
            ..self.clone()
        })
    }

    /// Hash of the parts that determine the measurements, so methods can
    /// share one simulation.
    pub fn measurement_hash(&self) -> String {
        sha256_json(&MeasurementKey {
            image: &self.image,
            operator: &self.operator,
            noise: &self.noise,
            master_seed: self.master_seed,
        })
    }

    /// Checks values and referenced paths. Run before any work starts.
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: String| Err(Error::Config(format!("{field}: {msg}")));
        if self.seeds.is_empty() {
            return bad("seeds", "must list at least one seed".into());
        }
        match &self.image {
            ImageSource::Synthetic {
                height,
                width,
                channels,
                variance,
                ..
            } => {
                let shape = Shape::new(*height, *width, *channels);
                if let Err(e) = shape.ensure_pow2() {
                    return bad("image", e.to_string());
                }
                if *channels == 0 {
                    return bad("image.channels", "must be positive".into());
                }
                if !(*variance > 0.0 && variance.is_finite()) {
                    return bad(
                        "image.variance",
                        format!("must be positive, got {variance}"),
                    );
                }
            }
            ImageSource::File { path } => {
                if !path.is_file() {
                    return bad("image.path", format!("{} does not exist", path.display()));
                }
            }
        }
        if self.operator.num_masks == 0 {
            return bad("operator.num_masks", "must be at least 1".into());
        }
        if self.noise.input_snr_db.is_empty() {
            return bad("noise.input_snr_db", "must list at least one level".into());
        }
        if let Some(v) = self
            .noise
            .input_snr_db
            .iter()
            .filter_map(|s| s.db())
            .find(|v| !v.is_finite())
        {
            return bad("noise.input_snr_db", format!("{v} is not finite"));
        }
        if let Err(e) = self.dolph.validate() {
            return bad("dolph", e.to_string());
        }
        if !(self.amplitude_flow.step > 0.0 && self.amplitude_flow.step.is_finite()) {
            return bad("amplitude_flow.step", "must be positive".into());
        }
        if let Err(e) = self.tv.tv_config().validate() {
            return bad("tv", e.to_string());
        }
        if self
            .tv
            .tau_grid
            .iter()
            .any(|t| !(*t > 0.0 && t.is_finite()))
        {
            return bad("tv.tau_grid", "entries must be positive".into());
        }
        if self.schedule.steps == 0 {
            return bad("schedule.steps", "must be positive".into());
        }
        match &self.denoiser {
            DenoiserSource::Analytic { variance, .. }
                if !(*variance > 0.0 && variance.is_finite()) =>
            {
                return bad(
                    "denoiser.variance",
                    format!("must be positive, got {variance}"),
                );
            }
            DenoiserSource::Checkpoint { path } if !path.is_file() => {
                return bad(
                    "denoiser.path",
                    format!("{} does not exist", path.display()),
                );
            }
            _ => {}
        }
        if let Err(e) = self.train.train_config().validate() {
            return bad("train", e.to_string());
        }
        if let Some(p) = &self.train.init_checkpoint {
            if !p.is_file() {
                return bad(
                    "train.init_checkpoint",
                    format!("{} does not exist", p.display()),
                );
            }
        }
        Ok(())
    }
}

fn strip_prefix(e: &Error) -> String {
    match e {
        Error::Config(m) => m.clone(),
        other => other.to_string(),
    }
}
