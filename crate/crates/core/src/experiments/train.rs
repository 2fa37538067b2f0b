use std::fmt::Write as _;

use serde::Serialize;

use super::{ensure_dir, write_file, write_json, ExperimentConfig};
use crate::denoiser::{
    continue_training, held_out_gap, held_out_loss, load_checkpoint, save_checkpoint,
    train_tiny_denoiser, TinyDenoiser,
};
use crate::error::Result;
use crate::field::SeededRng;

#[derive(Debug, Clone, Serialize)]
pub struct TrainSummary {
    pub config_hash: String,
    pub epochs: usize,
    pub dataset_size: usize,
    pub resumed_from: Option<String>,
    pub final_epoch_loss: Option<f64>,
    /// Mean `‖ε̂ − ε‖²` per image over fresh draws from the training set.
    pub held_out_loss: f64,
    /// Per-pixel squared gap to the exact predictor; Gaussian generator only.
    pub held_out_gap_per_pixel: Option<f64>,
    pub checkpoint: String,
    pub loss_csv: String,
}

/// Trains on images from the synthetic generator and writes `model.ckpt`,
/// `loss.csv` (one row per epoch) and `summary.json` under `<out>/train/`.
pub fn cmd_train(cfg: &ExperimentConfig) -> Result<TrainSummary> {
    cfg.validate()?;
    let tcfg = cfg.train.train_config();
    let sched = cfg.build_schedule()?;
    let mut data_rng = SeededRng::derive(cfg.master_seed, "train-data", 0);
    let dataset = (0..cfg.train.dataset_size)
        .map(|_| cfg.synthetic_image(&mut data_rng))
        .collect::<Result<Vec<_>>>()?;

    let mut rng = SeededRng::derive(cfg.master_seed, "train", 0);
    let out = match &cfg.train.init_checkpoint {
        Some(path) => {
            let model: TinyDenoiser<f64> = load_checkpoint(path, Some(&tcfg.arch))?;
            continue_training(model, &dataset, &sched, &tcfg, &mut rng)?
        }
        None => train_tiny_denoiser(&dataset, &sched, &tcfg, &mut rng)?,
    };

    let dir = cfg.output_dir.join("train");
    ensure_dir(&dir)?;
    save_checkpoint(&out.model, dir.join("model.ckpt"))?;
    let mut csv = String::from("epoch,loss\n");
    for (e, l) in out.loss_trace.iter().enumerate() {
        writeln!(csv, "{},{l}", e + 1).unwrap();
    }
    write_file(&dir.join("loss.csv"), csv.as_bytes())?;

    let mut eval_rng = SeededRng::derive(cfg.master_seed, "held-out", 0);
    let loss = held_out_loss(
        &out.model,
        &dataset,
        &sched,
        cfg.train.held_out,
        &mut eval_rng,
    )?;
    let gap = match cfg.generator_prior() {
        Some(prior) => Some(held_out_gap(
            &out.model,
            &prior,
            &sched,
            dataset[0].shape(),
            cfg.train.held_out,
            &mut eval_rng,
        )?),
        None => None,
    };
    let summary = TrainSummary {
        config_hash: cfg.config_hash(),
        epochs: tcfg.epochs,
        dataset_size: dataset.len(),
        resumed_from: cfg
            .train
            .init_checkpoint
            .as_ref()
            .map(|p| p.display().to_string()),
        final_epoch_loss: out.loss_trace.last().copied(),
        held_out_loss: loss,
        held_out_gap_per_pixel: gap,
        checkpoint: "model.ckpt".into(),
        loss_csv: "loss.csv".into(),
    };
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(summary)
}
