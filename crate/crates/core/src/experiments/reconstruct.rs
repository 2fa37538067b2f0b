use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    build_pool, clear_outputs, ensure_dir, load_simulation, snr_file_label, tile_horizontal,
    write_file, write_json, Denoiser, ExperimentConfig, Method, Simulation,
};
use crate::error::{Error, Result};
use crate::field::{io, sample_standard_gaussian, ImageField, SeededRng};
use crate::samplers::{
    amplitude_flow_baseline, dolph_run, pairwise_distances, recon_snr, tune_tv_tau,
    tv_reconstruct_from, write_trace_csv, DolphConfig, TraceRow,
};
use crate::schedule::NoiseSchedule;

pub const METRICS_HEADER: &str =
    "method,seed,input_snr_db,recon_snr_db,final_g,iters,wall_ms,manifest_hash";

/// Outcome of one `(seed, noise level)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub method: String,
    pub seed: u64,
    pub input_snr_db: String,
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub recon_snr_db: Option<f64>,
    pub final_g: Option<f64>,
    pub initial_g: Option<f64>,
    pub iters: usize,
    pub wall_ms: f64,
    /// Selected `τ` when the TV grid search ran.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tv_tau: Option<f64>,
    pub recon: Option<String>,
    pub recon_png: Option<String>,
    pub trace: Option<String>,
}

impl RunRecord {
    pub fn failed(&self) -> bool {
        self.status != "ok"
    }

    fn csv_row(&self, manifest_hash: &str) -> String {
        let num = |v: Option<f64>| v.map_or_else(|| "failed".to_string(), |v| format!("{v}"));
        format!(
            "{},{},{},{},{},{},{:.3},{}",
            self.method,
            self.seed,
            self.input_snr_db,
            num(self.recon_snr_db),
            num(self.final_g),
            if self.failed() {
                "failed".to_string()
            } else {
                self.iters.to_string()
            },
            self.wall_ms,
            manifest_hash
        )
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ReconstructSummary {
    pub config_hash: String,
    pub measurement_manifest_hash: String,
    pub method: String,
    pub metrics: String,
    pub records: Vec<RunRecord>,
}

impl ReconstructSummary {
    pub fn failures(&self) -> usize {
        self.records.iter().filter(|r| r.failed()).count()
    }
}

struct CellResult {
    x: ImageField<f64>,
    initial_g: f64,
    final_g: f64,
    iters: usize,
    tau: Option<f64>,
    trace: Vec<TraceRow>,
}

struct Context<'a> {
    cfg: &'a ExperimentConfig,
    sim: &'a Simulation,
    model: &'a Denoiser,
    sched: &'a NoiseSchedule<f64>,
}

fn sampler_rng(cfg: &ExperimentConfig, seed: u64) -> SeededRng {
    SeededRng::derive(cfg.master_seed, "sampler", seed)
}

fn run_cell(ctx: &Context<'_>, method: Method, level: usize, seed: u64) -> Result<CellResult> {
    let Context {
        cfg,
        sim,
        model,
        sched,
    } = ctx;
    let y = &sim.measurements[level].y;
    let op = &sim.op;
    match method {
        Method::Dolph | Method::Ddpm => {
            let dcfg = DolphConfig {
                gamma: if method == Method::Ddpm {
                    0.0
                } else {
                    cfg.dolph.gamma
                },
                record_trace: true,
                ..cfg.dolph.clone()
            };
            let out = dolph_run(y, op, *model, sched, &dcfg, sampler_rng(cfg, seed))?;
            Ok(CellResult {
                x: out.x0,
                initial_g: out.initial_g,
                final_g: out.final_g,
                iters: sched.steps(),
                tau: None,
                trace: out.trace,
            })
        }
        Method::AmplitudeFlow | Method::Tv => {
            let x_init = sample_standard_gaussian(&mut sampler_rng(cfg, seed), op.shape());
            let initial_g = op.fidelity(y, &x_init)?;
            let (x, final_g, iters, tau) = if method == Method::AmplitudeFlow {
                let af = &cfg.amplitude_flow;
                let out = amplitude_flow_baseline(y, op, &x_init, af.step, af.iters)?;
                (out.x, out.final_g, out.iters, None)
            } else if cfg.tv.tau_grid.is_empty() {
                let out = tv_reconstruct_from(y, op, &cfg.tv.tv_config(), &x_init)?;
                (out.x, out.final_g, out.iters, None)
            } else {
                let (tau, out) = tune_tv_tau(
                    y,
                    op,
                    &cfg.tv.tv_config(),
                    &cfg.tv.tau_grid,
                    &sim.truth,
                    &x_init,
                )?;
                (out.x, out.final_g, out.iters, Some(tau))
            };
            Ok(CellResult {
                x,
                initial_g,
                final_g,
                iters,
                tau,
                trace: Vec::new(),
            })
        }
    }
}

/// Runs every cell in parallel; results come back in `cells` order.
fn run_grid(
    ctx: &Context<'_>,
    method: Method,
    cells: &[(usize, u64)],
    jobs: usize,
) -> Result<Vec<(Result<CellResult>, f64)>> {
    let pool = build_pool(jobs)?;
    Ok(pool.install(|| {
        cells
            .par_iter()
            .map(|&(level, seed)| {
                let start = Instant::now();
                let r = run_cell(ctx, method, level, seed);
                (r, start.elapsed().as_secs_f64() * 1e3)
            })
            .collect()
    }))
}

fn load_inputs(
    cfg: &ExperimentConfig,
) -> Result<(Simulation, String, Denoiser, NoiseSchedule<f64>)> {
    cfg.validate()?;
    let (sim, hash) = load_simulation(cfg)?;
    let model = cfg.build_denoiser()?;
    let sched = cfg.build_schedule()?;
    Ok((sim, hash, model, sched))
}

/// Reconstructs every `(noise level, seed)` cell with the configured method
/// and writes images, traces, `metrics.csv` and `manifest.json` under
/// `<out>/reconstruct/<method>/`. A failing cell is recorded and skipped.
pub fn cmd_reconstruct(cfg: &ExperimentConfig, jobs: usize) -> Result<ReconstructSummary> {
    let (sim, manifest_hash, model, sched) = load_inputs(cfg)?;
    let method = cfg.method;
    let dir = cfg.output_dir.join("reconstruct").join(method.name());
    ensure_dir(&dir)?;
    clear_outputs(&dir, &["recon_", "trace_"])?;

    let cells: Vec<(usize, u64)> = (0..sim.measurements.len())
        .flat_map(|l| cfg.seeds.iter().map(move |&s| (l, s)))
        .collect();
    let ctx = Context {
        cfg,
        sim: &sim,
        model: &model,
        sched: &sched,
    };
    let results = run_grid(&ctx, method, &cells, jobs)?;

    let mut records = Vec::with_capacity(cells.len());
    for (&(level, seed), (result, wall_ms)) in cells.iter().zip(results) {
        let label = sim.measurements[level].input_snr.label();
        let stem = format!("{}_seed{seed}", snr_file_label(&label));
        let mut rec = RunRecord {
            method: method.name().into(),
            seed,
            input_snr_db: label,
            status: "ok".into(),
            error: None,
            recon_snr_db: None,
            final_g: None,
            initial_g: None,
            iters: 0,
            wall_ms,
            tv_tau: None,
            recon: None,
            recon_png: None,
            trace: None,
        };
        match result.and_then(|cell| write_cell(&dir, &stem, &sim, cell, &mut rec)) {
            Ok(()) => {}
            Err(e) => {
                rec.status = "failed".into();
                rec.error = Some(e.to_string());
                rec.recon_snr_db = None;
                rec.final_g = None;
            }
        }
        records.push(rec);
    }

    let mut csv = String::from(METRICS_HEADER);
    csv.push('\n');
    for r in &records {
        writeln!(csv, "{}", r.csv_row(&manifest_hash)).unwrap();
    }
    write_file(&dir.join("metrics.csv"), csv.as_bytes())?;

    let summary = ReconstructSummary {
        config_hash: cfg.config_hash(),
        measurement_manifest_hash: manifest_hash,
        method: method.name().into(),
        metrics: "metrics.csv".into(),
        records,
    };
    write_json(&dir.join("manifest.json"), &summary)?;
    Ok(summary)
}

fn write_cell(
    dir: &Path,
    stem: &str,
    sim: &Simulation,
    cell: CellResult,
    rec: &mut RunRecord,
) -> Result<()> {
    let snr = recon_snr(&sim.truth, &cell.x)?;
    if !cell.final_g.is_finite() {
        return Err(Error::Divergence {
            step: cell.iters,
            detail: format!("final fidelity {}", cell.final_g),
        });
    }
    let recon = format!("recon_{stem}.dfld");
    let png = format!("recon_{stem}.png");
    io::write_raw(&cell.x, dir.join(&recon))?;
    io::write_image(&cell.x, dir.join(&png))?;
    if !cell.trace.is_empty() {
        let trace = format!("trace_{stem}.csv");
        write_trace_csv(&cell.trace, dir.join(&trace))?;
        rec.trace = Some(trace);
    }
    rec.recon = Some(recon);
    rec.recon_png = Some(png);
    rec.recon_snr_db = Some(snr);
    rec.final_g = Some(cell.final_g);
    rec.initial_g = Some(cell.initial_g);
    rec.iters = cell.iters;
    rec.tv_tau = cell.tau;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct DiversityReport {
    pub config_hash: String,
    pub measurement_manifest_hash: String,
    pub method: String,
    pub input_snr_db: String,
    pub seeds: Vec<u64>,
    /// Pairwise L2 distances between the successful samples.
    pub distances: Vec<Vec<f64>>,
    pub min_pairwise_distance: f64,
    pub initial_g: Vec<Option<f64>>,
    pub final_g: Vec<Option<f64>>,
    pub samples: Vec<Option<String>>,
    pub errors: Vec<Option<String>>,
    pub grid: Option<String>,
}

impl DiversityReport {
    pub fn failures(&self) -> usize {
        self.errors.iter().filter(|e| e.is_some()).count()
    }
}

/// `n` reconstructions of the first noise level from seeds
/// `seeds[0], seeds[0] + 1, …`, or all from `force_seed`. Writes samples, a
/// PNG strip and `diversity.json` under `<out>/sample_many/`.
pub fn cmd_sample_many(
    cfg: &ExperimentConfig,
    n: usize,
    force_seed: Option<u64>,
    jobs: usize,
) -> Result<DiversityReport> {
    if n < 2 {
        return Err(Error::Config(format!("--n must be at least 2, got {n}")));
    }
    if !matches!(cfg.method, Method::Dolph | Method::Ddpm) {
        return Err(Error::Config(format!(
            "method: sample-many needs a sampling method (dolph or ddpm), got {}",
            cfg.method.name()
        )));
    }
    let (sim, manifest_hash, model, sched) = load_inputs(cfg)?;
    let dir = cfg.output_dir.join("sample_many");
    ensure_dir(&dir)?;
    clear_outputs(&dir, &["sample_", "grid"])?;
    let seeds: Vec<u64> = match force_seed {
        Some(s) => vec![s; n],
        None => (0..n as u64).map(|k| cfg.seeds[0] + k).collect(),
    };
    let cells: Vec<(usize, u64)> = seeds.iter().map(|&s| (0, s)).collect();
    let ctx = Context {
        cfg,
        sim: &sim,
        model: &model,
        sched: &sched,
    };
    let results = run_grid(&ctx, cfg.method, &cells, jobs)?;

    let mut report = DiversityReport {
        config_hash: cfg.config_hash(),
        measurement_manifest_hash: manifest_hash,
        method: cfg.method.name().into(),
        input_snr_db: sim.measurements[0].input_snr.label(),
        seeds,
        distances: Vec::new(),
        min_pairwise_distance: f64::NAN,
        initial_g: Vec::new(),
        final_g: Vec::new(),
        samples: Vec::new(),
        errors: Vec::new(),
        grid: None,
    };
    let mut good = Vec::new();
    for (k, (result, _)) in results.into_iter().enumerate() {
        let outcome = result.and_then(|cell| {
            if !cell.final_g.is_finite() {
                return Err(Error::Divergence {
                    step: cell.iters,
                    detail: format!("final fidelity {}", cell.final_g),
                });
            }
            let file = format!("sample_{k}.dfld");
            io::write_raw(&cell.x, dir.join(&file))?;
            Ok((cell, file))
        });
        match outcome {
            Ok((cell, file)) => {
                report.initial_g.push(Some(cell.initial_g));
                report.final_g.push(Some(cell.final_g));
                report.samples.push(Some(file));
                report.errors.push(None);
                good.push(cell.x);
            }
            Err(e) => {
                report.initial_g.push(None);
                report.final_g.push(None);
                report.samples.push(None);
                report.errors.push(Some(e.to_string()));
            }
        }
    }
    if !good.is_empty() {
        report.distances = pairwise_distances(&good)?;
        report.min_pairwise_distance = report
            .distances
            .iter()
            .enumerate()
            .flat_map(|(i, row)| row.iter().skip(i + 1).copied())
            .fold(f64::INFINITY, f64::min);
        io::write_image(&tile_horizontal(&good)?, dir.join("grid.png"))?;
        report.grid = Some("grid.png".into());
    }
    write_json(&dir.join("diversity.json"), &report)?;
    Ok(report)
}
