use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use super::{
    clear_outputs, ensure_dir, round_f32, snr_file_label, write_file, write_json, ExperimentConfig,
};
use crate::cdp::{add_noise_at_snr, CdpOperator, InputSnr, MeasurementSet};
use crate::error::{Error, Result};
use crate::field::{io, ImageField, SeededRng, Shape};

/// Ground truth, operator and one measurement set per noise level.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub truth: ImageField<f64>,
    pub op: CdpOperator<f64>,
    pub clean: Vec<ImageField<f64>>,
    pub measurements: Vec<MeasurementSet<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementEntry {
    pub input_snr_db: InputSnr,
    /// Number in dB, or `"inf"` for noiseless data.
    pub realized_snr: Value,
    pub file: String,
    /// Index of the `("noise", i)` stream.
    pub noise_stream: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationManifest {
    pub config_hash: String,
    pub measurement_hash: String,
    pub master_seed: u64,
    pub mask_seed: u64,
    pub shape: Shape,
    pub num_masks: usize,
    pub clip_negative: bool,
    pub truth: String,
    pub truth_png: String,
    pub masks: String,
    pub clean: String,
    pub measurements: Vec<MeasurementEntry>,
}

/// In-memory simulation; no files are touched.
pub fn simulate(cfg: &ExperimentConfig) -> Result<Simulation> {
    let truth = cfg.ground_truth()?;
    let op = cfg.build_operator(truth.shape())?;
    let clean: Vec<_> = op.amplitudes(&truth)?.iter().map(round_f32).collect();
    let measurements = cfg
        .noise
        .input_snr_db
        .iter()
        .enumerate()
        .map(|(i, &snr)| {
            let mut rng = SeededRng::derive(cfg.master_seed, "noise", i as u64);
            let mut set = add_noise_at_snr(&clean, snr, &mut rng)?;
            if cfg.noise.clip_negative {
                set = set.clip_negative();
            }
            // Keep exactly what the raw file stores.
            set.y = set.y.iter().map(round_f32).collect();
            Ok(set)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Simulation {
        truth,
        op,
        clean,
        measurements,
    })
}

pub(crate) fn simulate_dir(out: &Path) -> PathBuf {
    out.join("simulate")
}

/// Runs [`simulate`] and writes masks, truth, clean amplitudes, one raw array
/// per noise level and `manifest.json` under `<out>/simulate/`.
pub fn cmd_simulate(cfg: &ExperimentConfig) -> Result<SimulationManifest> {
    cfg.validate()?;
    let sim = simulate(cfg)?;
    let dir = simulate_dir(&cfg.output_dir);
    ensure_dir(&dir)?;
    clear_outputs(&dir, &["y_"])?;

    let shape = sim.truth.shape();
    io::write_raw(&sim.truth, dir.join("truth.dfld"))?;
    io::write_image(&sim.truth, dir.join("truth.png"))?;
    io::write_raw_complex(&sim.op.masks_as_field(), dir.join("masks.cfld"))?;
    write_file(
        &dir.join("clean.dfld"),
        &io::encode_raw(&ImageField::concat_channels(&sim.clean)?),
    )?;

    let mut entries = Vec::new();
    for (i, set) in sim.measurements.iter().enumerate() {
        let file = format!("y_{}.dfld", snr_file_label(&set.input_snr.label()));
        io::write_raw(&ImageField::concat_channels(&set.y)?, dir.join(&file))?;
        let realized = set.realized_snr_db(&sim.clean);
        entries.push(MeasurementEntry {
            input_snr_db: set.input_snr,
            realized_snr: if realized.is_finite() {
                Value::from(realized)
            } else {
                Value::from("inf")
            },
            file,
            noise_stream: i as u64,
        });
    }

    let manifest = SimulationManifest {
        config_hash: cfg.config_hash(),
        measurement_hash: cfg.measurement_hash(),
        master_seed: cfg.master_seed,
        mask_seed: cfg.mask_seed(),
        shape,
        num_masks: sim.op.num_masks(),
        clip_negative: cfg.noise.clip_negative,
        truth: "truth.dfld".into(),
        truth_png: "truth.png".into(),
        masks: "masks.cfld".into(),
        clean: "clean.dfld".into(),
        measurements: entries,
    };
    write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

/// Reads the files written by [`cmd_simulate`] for this config. Returns the
/// simulation and the SHA-256 of its manifest.
pub fn load_simulation(cfg: &ExperimentConfig) -> Result<(Simulation, String)> {
    let dir = simulate_dir(&cfg.output_dir);
    let path = dir.join("manifest.json");
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: SimulationManifest = serde_json::from_slice(&bytes)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    if manifest.measurement_hash != cfg.measurement_hash() {
        return Err(Error::Config(format!(
            "measurements in {} come from a different image/operator/noise configuration; rerun simulate",
            dir.display()
        )));
    }
    let truth = io::read_raw(dir.join(&manifest.truth))?;
    let masks = io::read_raw_complex(dir.join(&manifest.masks))?;
    let op = CdpOperator::from_mask_field(&masks, manifest.shape.channels)?;
    let clean = io::read_raw(dir.join(&manifest.clean))?.split_channels(manifest.shape.channels)?;
    let measurements = manifest
        .measurements
        .iter()
        .map(|m| {
            let y = io::read_raw(dir.join(&m.file))?.split_channels(manifest.shape.channels)?;
            Ok(MeasurementSet {
                y,
                input_snr: m.input_snr_db,
                noise_seed: m.input_snr_db.db().map(|_| manifest.master_seed),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let sim = Simulation {
        truth,
        op,
        clean,
        measurements,
    };
    Ok((sim, hex::encode(Sha256::digest(&bytes))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::ImageSource;

    fn cfg(dir: &Path) -> ExperimentConfig {
        ExperimentConfig {
            output_dir: dir.to_path_buf(),
            noise: crate::experiments::NoiseConfig {
                input_snr_db: vec![InputSnr::Db(20.0), InputSnr::NOISELESS],
                clip_negative: false,
            },
            ..Default::default()
        }
    }

    #[test]
    fn rerun_is_byte_identical_and_loads_back() {
        let dir = tempfile::tempdir().unwrap();
        let c = cfg(dir.path());
        let m = cmd_simulate(&c).unwrap();
        assert_eq!(m.measurements[1].realized_snr, Value::from("inf"));
        let sim_dir = simulate_dir(dir.path());
        let snapshot = |d: &Path| {
            let mut files: Vec<_> = fs::read_dir(d)
                .unwrap()
                .map(|e| {
                    let p = e.unwrap().path();
                    (p.clone(), fs::read(p).unwrap())
                })
                .collect();
            files.sort();
            files
        };
        let first = snapshot(&sim_dir);
        cmd_simulate(&c).unwrap();
        assert_eq!(snapshot(&sim_dir), first);

        let (loaded, _) = load_simulation(&c).unwrap();
        let fresh = simulate(&c).unwrap();
        assert_eq!(loaded.truth, fresh.truth);
        assert_eq!(loaded.op, fresh.op);
        assert_eq!(loaded.measurements[0].y, fresh.measurements[0].y);
    }

    #[test]
    fn realized_snr_near_request_for_large_m() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = cfg(dir.path());
        c.image = ImageSource::Synthetic {
            generator: crate::experiments::Generator::Gaussian,
            height: 32,
            width: 32,
            channels: 1,
            mean: 0.5,
            variance: 0.01,
            rects: 0,
        };
        c.operator.num_masks = 4;
        let m = cmd_simulate(&c).unwrap();
        let r = m.measurements[0].realized_snr.as_f64().unwrap();
        assert!((19.0..=21.0).contains(&r), "{r}");
    }

    #[test]
    fn stale_measurements_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let c = cfg(dir.path());
        cmd_simulate(&c).unwrap();
        let other = ExperimentConfig {
            master_seed: 7,
            ..c
        };
        assert!(matches!(load_simulation(&other), Err(Error::Config(_))));
    }
}
