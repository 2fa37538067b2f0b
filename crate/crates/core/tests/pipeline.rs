use std::fs;

use dolph::cdp::InputSnr;
use dolph::experiments::{
    cmd_reconstruct, cmd_simulate, simulate, ExperimentConfig, Generator, ImageSource, Method,
};
use dolph::field::io::read_raw;
use dolph::samplers::recon_snr;

fn toy(dir: &std::path::Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::from_json(
        r#"{
            "operator": {"num_masks": 4},
            "schedule": {"steps": 200, "beta_start": 1e-4, "beta_end": 0.1},
            "seeds": [0, 1, 2, 3, 4]
        }"#,
    )
    .unwrap();
    cfg.noise.input_snr_db = vec![InputSnr::Db(15.0), InputSnr::Db(25.0)];
    cfg.output_dir = dir.to_path_buf();
    cfg
}

fn metric_rows(dir: &std::path::Path, method: &str) -> Vec<Vec<String>> {
    let csv = fs::read_to_string(dir.join("reconstruct").join(method).join("metrics.csv")).unwrap();
    csv.lines()
        .skip(1)
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

#[test]
fn methods_share_the_measurement_manifest_hash() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = toy(dir.path());
    cfg.seeds = vec![0];
    cfg.tv.tau_grid = vec![0.01, 0.03];
    cmd_simulate(&cfg).unwrap();
    let mut hashes = Vec::new();
    for m in [
        Method::Dolph,
        Method::Ddpm,
        Method::AmplitudeFlow,
        Method::Tv,
    ] {
        cfg.method = m;
        let s = cmd_reconstruct(&cfg, 0).unwrap();
        assert_eq!(s.failures(), 0);
        for row in metric_rows(dir.path(), m.name()) {
            assert_eq!(row[0], m.name());
            hashes.push(row[7].clone());
        }
        if m == Method::Tv {
            assert!(s.records.iter().all(|r| r.tv_tau.is_some()));
        }
    }
    assert_eq!(hashes.len(), 8);
    assert!(hashes.iter().all(|h| h == &hashes[0] && h.len() == 64));
}

#[test]
fn dolph_quality_improves_with_input_snr() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = toy(dir.path());
    cmd_simulate(&cfg).unwrap();
    cmd_reconstruct(&cfg, 0).unwrap();
    let rows = metric_rows(dir.path(), "dolph");
    let at = |snr: &str| -> Vec<f64> {
        rows.iter()
            .filter(|r| r[2] == snr)
            .map(|r| r[3].parse().unwrap())
            .collect()
    };
    let (low, high) = (median(at("15")), median(at("25")));
    assert!(high >= low, "median at 25 dB {high:.2} < at 15 dB {low:.2}");
}

#[test]
fn recorded_metrics_match_the_written_reconstructions() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = toy(dir.path());
    cfg.seeds = vec![3];
    cfg.method = Method::AmplitudeFlow;
    cmd_simulate(&cfg).unwrap();
    let summary = cmd_reconstruct(&cfg, 1).unwrap();
    let truth = simulate(&cfg).unwrap().truth;
    let rec_dir = dir.path().join("reconstruct/amplitude_flow");
    for r in &summary.records {
        let x = read_raw::<f64>(rec_dir.join(r.recon.as_ref().unwrap())).unwrap();
        // the raw file stores f32, so allow for that rounding
        let snr = recon_snr(&truth, &x).unwrap();
        assert!((snr - r.recon_snr_db.unwrap()).abs() < 1e-3);
        assert!(r.final_g.unwrap() <= r.initial_g.unwrap());
    }
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(rec_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["records"].as_array().unwrap().len(), 2);
    assert_eq!(manifest["metrics"], "metrics.csv");
}

#[test]
fn phantom_and_color_images_run_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = toy(dir.path());
    cfg.image = ImageSource::Synthetic {
        generator: Generator::Phantom,
        height: 8,
        width: 16,
        channels: 3,
        mean: 0.5,
        variance: 1e-4,
        rects: 3,
    };
    cfg.seeds = vec![0];
    cfg.method = Method::Tv;
    let m = cmd_simulate(&cfg).unwrap();
    assert_eq!(m.shape.channels, 3);
    let s = cmd_reconstruct(&cfg, 0).unwrap();
    assert_eq!(s.failures(), 0);
    assert!(dir
        .path()
        .join("reconstruct/tv/recon_snr25_seed0.png")
        .is_file());
}

#[test]
fn image_files_are_accepted_as_ground_truth() {
    let dir = tempfile::tempdir().unwrap();
    let img = dolph::field::ImageField::<f64>::from_fn(dolph::field::Shape::new(8, 8, 1), |i| {
        (i % 8) as f64 / 8.0
    });
    dolph::field::io::write_image(&img, dir.path().join("in.pgm")).unwrap();
    let mut cfg = toy(dir.path());
    cfg.image = ImageSource::File {
        path: dir.path().join("in.pgm"),
    };
    cfg.seeds = vec![0];
    cfg.method = Method::AmplitudeFlow;
    cmd_simulate(&cfg).unwrap();
    let s = cmd_reconstruct(&cfg, 0).unwrap();
    assert_eq!(s.failures(), 0);
    let truth = simulate(&cfg).unwrap().truth;
    // 3/8 quantized to 8 bits, then stored as f32
    assert!((truth.data()[3] - 96.0 / 255.0).abs() < 1e-7);
}
