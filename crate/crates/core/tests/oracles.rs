//! Statistical checks against closed-form or Monte-Carlo references.

use dolph::cdp::{add_noise_at_snr, make_cdp_operator, CdpOperator, InputSnr};
use dolph::denoiser::{
    held_out_loss, train_tiny_denoiser, Activation, DenoiserArch, GaussianPrior, PriorMean,
    TrainConfig,
};
use dolph::field::{SeededRng, Shape};
use dolph::samplers::{ddpm_sample, dolph_run, recon_snr, DolphConfig, FinalStepNoise};
use dolph::schedule::{make_linear_schedule, SigmaMode};
use dolph::{CdpOperator64, GaussianPrior64, ImageField32, NoiseSchedule64};

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

#[test]
fn noiseless_runs_reduce_the_fidelity() {
    let shape = Shape::new(16, 16, 1);
    let sched: NoiseSchedule64 = make_linear_schedule(1000, 1e-4, 0.02).unwrap();
    let prior = GaussianPrior64::standard();
    let cfg = DolphConfig::default();
    let mut improved = 0;
    for run in 0..100 {
        let mut rng = SeededRng::derive(11, "noiseless", run);
        let op: CdpOperator64 = make_cdp_operator(shape, 4, &mut rng).unwrap();
        let truth = prior.sample(shape, &mut rng).unwrap();
        let y = op.amplitudes(&truth).unwrap();
        let out = dolph_run(&y, &op, &prior, &sched, &cfg, rng).unwrap();
        assert!(out.final_g.is_finite());
        improved += usize::from(out.final_g < out.initial_g);
    }
    assert!(improved >= 95, "only {improved}/100 runs reduced g");
}

#[test]
fn posterior_sigma_chain_is_also_stationary() {
    let sched = make_linear_schedule::<f64>(100, 1e-4, 0.02)
        .unwrap()
        .with_sigma_mode(SigmaMode::Posterior);
    let prior = GaussianPrior::standard();
    let (mut s, mut s2, mut n) = (0.0, 0.0, 0.0);
    for chain in 0..10_000 {
        let rng = SeededRng::derive(12, "posterior", chain);
        let x = ddpm_sample(
            &prior,
            &sched,
            Shape::new(2, 2, 1),
            rng,
            FinalStepNoise::Zero,
        )
        .unwrap();
        for v in x.data() {
            s += v;
            s2 += v * v;
            n += 1.0;
        }
    }
    let mean = s / n;
    let var = s2 / n - mean * mean;
    assert!(mean.abs() <= 0.02, "{mean}");
    assert!((0.8..=1.25).contains(&var), "{var}");
}

#[test]
fn nonzero_prior_mean_is_reproduced() {
    let sched = make_linear_schedule::<f64>(100, 1e-4, 0.2).unwrap();
    let prior = GaussianPrior::new(PriorMean::Uniform(2.0), 0.25).unwrap();
    let mut acc = Vec::new();
    for chain in 0..4000 {
        let rng = SeededRng::derive(13, "shifted", chain);
        let x = ddpm_sample(
            &prior,
            &sched,
            Shape::new(2, 2, 1),
            rng,
            FinalStepNoise::Zero,
        )
        .unwrap();
        acc.extend_from_slice(x.data());
    }
    let n = acc.len() as f64;
    let mean = acc.iter().sum::<f64>() / n;
    let var = acc.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    assert!((mean - 2.0).abs() < 0.02, "{mean}");
    assert!((var / 0.25 - 1.0).abs() < 0.1, "{var}");
}

fn small_arch() -> DenoiserArch {
    DenoiserArch {
        channels: 1,
        hidden: vec![8],
        kernel: 3,
        activation: Activation::Silu,
    }
}

#[test]
fn training_loss_decreases() {
    let shape = Shape::new(4, 4, 1);
    let sched = make_linear_schedule::<f64>(50, 1e-4, 0.3).unwrap();
    let prior = GaussianPrior::standard();
    let ratios: Vec<f64> = (0..5)
        .map(|seed| {
            let mut rng = SeededRng::derive(seed, "train-trend", 0);
            let data: Vec<_> = (0..128)
                .map(|_| prior.sample(shape, &mut rng).unwrap())
                .collect();
            let cfg = TrainConfig {
                arch: small_arch(),
                epochs: 50,
                ..Default::default()
            };
            let out = train_tiny_denoiser(&data, &sched, &cfg, &mut rng).unwrap();
            let tail = &out.loss_trace[45..];
            tail.iter().sum::<f64>() / tail.len() as f64 / out.loss_trace[0]
        })
        .collect();
    let m = median(ratios.clone());
    assert!(m < 0.9, "median final/first loss ratio {m}: {ratios:?}");
}

#[test]
fn trained_model_does_not_beat_the_exact_predictor() {
    let shape = Shape::new(4, 4, 1);
    let sched = make_linear_schedule::<f64>(50, 1e-4, 0.3).unwrap();
    let prior = GaussianPrior::standard();
    let mut rng = SeededRng::new(21);
    let data: Vec<_> = (0..256)
        .map(|_| prior.sample(shape, &mut rng).unwrap())
        .collect();
    let cfg = TrainConfig {
        arch: small_arch(),
        epochs: 40,
        ..Default::default()
    };
    let model = train_tiny_denoiser(&data, &sched, &cfg, &mut rng)
        .unwrap()
        .model;
    let fresh: Vec<_> = (0..2000)
        .map(|_| prior.sample(shape, &mut rng).unwrap())
        .collect();
    let count = 4000;
    let trained = held_out_loss(&model, &fresh, &sched, count, &mut SeededRng::new(5)).unwrap();
    let exact = held_out_loss(&prior, &fresh, &sched, count, &mut SeededRng::new(5)).unwrap();
    // Identical draws for both; E‖ε‖² = 16 bounds the per-draw spread.
    let tol = 3.0 * 2.0 * 16.0 / (count as f64).sqrt();
    assert!(trained >= exact - tol, "trained {trained} vs exact {exact}");
    assert!(exact < 16.0);
}

#[test]
fn single_precision_pipeline_works() {
    let shape = Shape::new(16, 16, 1);
    let sched = make_linear_schedule::<f32>(200, 1e-4, 0.1).unwrap();
    let prior = GaussianPrior::<f32>::new(PriorMean::Uniform(0.5), 1e-4).unwrap();
    let mut rng = SeededRng::new(31);
    let op: CdpOperator<f32> = make_cdp_operator(shape, 4, &mut rng).unwrap();
    let truth: ImageField32 = prior.sample(shape, &mut rng).unwrap();
    let y = add_noise_at_snr(
        &op.amplitudes(&truth).unwrap(),
        InputSnr::Db(25.0),
        &mut rng,
    )
    .unwrap()
    .y;
    let out = dolph_run(
        &y,
        &op,
        &prior,
        &sched,
        &DolphConfig::default(),
        SeededRng::new(1),
    )
    .unwrap();
    let snr = recon_snr(&truth, &out.x0).unwrap();
    assert!(snr > 25.0, "{snr}");

    let zero = DolphConfig {
        gamma: 0.0,
        ..Default::default()
    };
    let a = dolph_run(&y, &op, &prior, &sched, &zero, SeededRng::new(2))
        .unwrap()
        .x0;
    let b = ddpm_sample(
        &prior,
        &sched,
        shape,
        SeededRng::new(2),
        FinalStepNoise::Zero,
    )
    .unwrap();
    assert_eq!(a, b);
}

#[test]
fn more_masks_help_amplitude_recovery() {
    let shape = Shape::new(16, 16, 1);
    let sched = make_linear_schedule::<f64>(200, 1e-4, 0.1).unwrap();
    let prior = GaussianPrior::new(PriorMean::Uniform(0.5), 1e-3).unwrap();
    let mut by_masks = Vec::new();
    for masks in [1, 4] {
        let snrs: Vec<f64> = (0..7)
            .map(|seed| {
                let mut rng = SeededRng::derive(seed, "masks", masks as u64);
                let op: CdpOperator<f64> = make_cdp_operator(shape, masks, &mut rng).unwrap();
                let truth = prior.sample(shape, &mut rng).unwrap();
                let y = add_noise_at_snr(
                    &op.amplitudes(&truth).unwrap(),
                    InputSnr::Db(25.0),
                    &mut rng,
                )
                .unwrap()
                .y;
                let out = dolph_run(&y, &op, &prior, &sched, &DolphConfig::default(), rng).unwrap();
                recon_snr(&truth, &out.x0).unwrap()
            })
            .collect();
        by_masks.push(median(snrs));
    }
    assert!(by_masks[1] > by_masks[0], "{by_masks:?}");
}
