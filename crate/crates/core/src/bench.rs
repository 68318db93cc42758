//! Experiment driver: Monte Carlo BER sweeps over SNR for any
//! (stage-1 receiver, optional stage-2 search) pipeline, a synthetic
//! imperfect-CSI model, per-vector timing tables, and CSV reports.
//!
//! Determinism contract: every trial derives its RNG from
//! (master seed, SNR index, trial index), so reports are bit-identical for a
//! fixed config regardless of worker count. Because of that, the
//! `mean_detect_time_s` column of BER reports is a fixed 0.0 placeholder —
//! wall-clock numbers would break byte-identical reruns; timing lives in
//! [`run_timing`], whose job is trends rather than reproducibility.

use std::path::Path;
use std::time::Instant;

use nalgebra::{Complex, DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;

use crate::channel::{lift_vector, random_symbols, transmit, ChannelMatrix};
use crate::config::{CsiModel, ExperimentConfig, Receiver};
use crate::constellation::Constellation;
use crate::linear::{build_combiner, detect_linear, CombinerKind};
use crate::ml::{conventional_ml_objective, exact_search, robust_ml_objective, MlProblem};
use crate::nn_search::nn_search;
use crate::obmnet::{detect_batch, detection_matrix, forward, normalize_output, ObmnetParams};
use crate::rng::{self, trial_rng};
use crate::{Error, Result};

type Complex64 = Complex<f64>;

/// Stream tag separating per-block channel draws from per-trial data draws.
const CHANNEL_STREAM: u64 = 1 << 63;

/// Batch sizes measured by [`run_timing`].
pub const TIMING_BATCH_SIZES: [usize; 4] = [1, 10, 100, 250];
/// Repetitions behind each timing median.
const TIMING_REPS: usize = 11;

/// Imperfect channel knowledge: Ĥ = √(1−τ²)·H̄ + τ·E with E i.i.d. CN(0,1),
/// preserving unit entry variance. τ = 0 returns H̄ exactly (no RNG draws).
pub fn perturb_csi(h: &ChannelMatrix, tau: f64, rng: &mut impl Rng) -> ChannelMatrix {
    assert!((0.0..1.0).contains(&tau), "perturbation τ must be in [0, 1)");
    if tau == 0.0 {
        return h.clone();
    }
    let hc = h.complex();
    let e = DMatrix::from_fn(hc.nrows(), hc.ncols(), |_, _| rng::complex_gaussian(rng, 1.0));
    ChannelMatrix::new(hc * Complex64::new((1.0 - tau * tau).sqrt(), 0.0) + e * Complex64::new(tau, 0.0))
}

fn apply_csi(h: &ChannelMatrix, csi: CsiModel, rng: &mut rng::SimRng) -> ChannelMatrix {
    match csi {
        CsiModel::Perfect => h.clone(),
        CsiModel::Perturbed(tau) => perturb_csi(h, tau, rng),
    }
}

/// One BER measurement: a (SNR, receiver, stage) cell of the report.
#[derive(Clone, Debug, PartialEq)]
pub struct BerRow {
    pub snr_db: f64,
    pub receiver: String,
    /// 1 = first-stage decisions, 2 = after the nearest-neighbor search.
    pub stage: u8,
    /// Search list size (1 for stage 1).
    pub m: usize,
    pub trials: usize,
    pub bit_errors: u64,
    pub ber: f64,
    /// Fixed 0.0 — see the module docs; timings come from [`run_timing`].
    pub mean_detect_time_s: f64,
}

/// A full sweep: one or two rows per SNR grid point plus the master seed.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BerReport {
    pub seed: u64,
    pub rows: Vec<BerRow>,
}

/// Gray-mapped bit errors between sent and decided symbol vectors.
fn bit_errors_complex(
    cons: &Constellation,
    sent: &DVector<Complex64>,
    decided: &DVector<Complex64>,
) -> u64 {
    sent.iter()
        .zip(decided.iter())
        .map(|(s, d)| {
            (cons.bit_errors_per_dimension(s.re, d.re) + cons.bit_errors_per_dimension(s.im, d.im))
                as u64
        })
        .sum()
}

/// Gray-mapped bit errors between lifted level vectors.
fn bit_errors_lifted(cons: &Constellation, sent: &DVector<f64>, decided: &[f64]) -> u64 {
    sent.iter()
        .zip(decided)
        .map(|(&s, &d)| cons.bit_errors_per_dimension(s, d) as u64)
        .sum()
}

/// Stage-1 + optional stage-2 bit errors for one trial.
fn run_trial(
    cfg: &ExperimentConfig,
    cons: &Constellation,
    params: Option<&ObmnetParams>,
    snr_idx: usize,
    trial: usize,
    n0: f64,
) -> Result<(u64, u64)> {
    // Draw order per trial: channel, symbols, noise, then CSI error. With
    // block fading the channel and its CSI error come from a per-block
    // stream so that every trial stays reproducible in isolation.
    let (h_hat, tx) = if cfg.block_len == 1 {
        let mut r = trial_rng(cfg.seed, snr_idx as u64, trial as u64);
        let h = ChannelMatrix::sample(cfg.n, cfg.k, &mut r);
        let x = random_symbols(cons, cfg.k, &mut r);
        let tx = transmit(&h, &x, n0, &mut r);
        let h_hat = apply_csi(&h, cfg.csi, &mut r);
        (h_hat, tx)
    } else {
        let block = (trial / cfg.block_len) as u64;
        let mut cr = trial_rng(cfg.seed, CHANNEL_STREAM | snr_idx as u64, block);
        let h = ChannelMatrix::sample(cfg.n, cfg.k, &mut cr);
        let h_hat = apply_csi(&h, cfg.csi, &mut cr);
        let mut r = trial_rng(cfg.seed, snr_idx as u64, trial as u64);
        let x = random_symbols(cons, cfg.k, &mut r);
        let tx = transmit(&h, &x, n0, &mut r);
        (h_hat, tx)
    };
    let target = lift_vector(&tx.x);

    // Stage 1. Linear and unfolded receivers keep their soft estimate for
    // the optional second stage; the exhaustive searches are final.
    let (soft_real, errs1): (Option<DVector<f64>>, u64) = match cfg.receiver {
        Receiver::Linear(kind) => {
            let combiner = build_combiner(kind, &h_hat, n0)?;
            let (soft, hard) = detect_linear(&combiner, &tx.y, cons);
            let e = bit_errors_complex(cons, &tx.x, &hard);
            (Some(lift_vector(&soft)), e)
        }
        Receiver::Obmnet => {
            let p = params.expect("validated before the sweep");
            let g = detection_matrix(h_hat.lifted(), &tx.y_lifted());
            let soft = normalize_output(&forward(&g, &p.alphas), cfg.k);
            let hard: Vec<f64> = soft.iter().map(|&v| cons.slice_level(v)).collect();
            let e = bit_errors_lifted(cons, &target, &hard);
            (Some(soft), e)
        }
        Receiver::MlConventional => {
            let p = MlProblem::from_complex(&h_hat, &tx.y, tx.rho())?;
            let dec = exact_search(
                |cand| -conventional_ml_objective(&p, &DVector::from_column_slice(cand)),
                cons,
                cfg.k,
            )?;
            (None, bit_errors_complex(cons, &tx.x, &dec))
        }
        Receiver::MlRobust => {
            let p = MlProblem::from_complex(&h_hat, &tx.y, tx.rho())?;
            let dec = exact_search(
                |cand| robust_ml_objective(&p, &DVector::from_column_slice(cand)),
                cons,
                cfg.k,
            )?;
            (None, bit_errors_complex(cons, &tx.x, &dec))
        }
    };

    let errs2 = match (cfg.stage2, soft_real) {
        (Some(s2), Some(soft)) => {
            let p = MlProblem::from_complex(&h_hat, &tx.y, tx.rho())?;
            let refined = nn_search(
                soft.as_slice(),
                s2.gamma,
                s2.m,
                |cand| robust_ml_objective(&p, &DVector::from_column_slice(cand)),
                cons,
            )?;
            bit_errors_lifted(cons, &target, &refined)
        }
        _ => 0,
    };
    Ok((errs1, errs2))
}

/// Monte Carlo BER sweep over the config's SNR grid. Per SNR point the
/// report gets a stage-1 row and, when a second stage is configured, a
/// stage-2 row from the same trials. Deterministic per seed.
pub fn run_ber(cfg: &ExperimentConfig) -> Result<BerReport> {
    let cons = Constellation::new(cfg.modulation);
    let params = match cfg.receiver {
        Receiver::Obmnet => {
            let path = cfg
                .obmnet_params_path
                .as_ref()
                .ok_or_else(|| Error::Config("receiver `obmnet` needs an `obmnet_params` file path".into()))?;
            let p = ObmnetParams::load(path)?;
            if (p.modulation, p.k, p.n) != (cfg.modulation, cfg.k, cfg.n) {
                return Err(Error::Config(format!(
                    "parameter file is for {} K={} N={}, but the experiment wants {} K={} N={}",
                    p.modulation, p.k, p.n, cfg.modulation, cfg.k, cfg.n
                )));
            }
            Some(p)
        }
        _ => None,
    };
    if matches!(cfg.receiver, Receiver::MlConventional | Receiver::MlRobust) && cfg.stage2.is_some() {
        return Err(Error::Config(
            "stage 2 cannot follow the brute-force ML receivers (they already search the full lattice)".into(),
        ));
    }

    let bits_per_trial = (2 * cfg.k * cons.bits_per_dimension()) as u64;
    let mut rows = Vec::new();
    for (snr_idx, &snr_db) in cfg.snr_grid_db.iter().enumerate() {
        let n0 = 10f64.powf(-snr_db / 10.0);
        let per_trial: Vec<(u64, u64)> = (0..cfg.trials)
            .into_par_iter()
            .map(|t| run_trial(cfg, &cons, params.as_ref(), snr_idx, t, n0))
            .collect::<Result<_>>()?;
        let (mut errs1, mut errs2) = (0u64, 0u64);
        for (a, b) in &per_trial {
            errs1 += a;
            errs2 += b;
        }
        let total_bits = bits_per_trial * cfg.trials as u64;
        let row = |stage: u8, m: usize, bit_errors: u64| BerRow {
            snr_db,
            receiver: cfg.receiver.token().to_string(),
            stage,
            m,
            trials: cfg.trials,
            bit_errors,
            ber: bit_errors as f64 / total_bits as f64,
            mean_detect_time_s: 0.0,
        };
        rows.push(row(1, 1, errs1));
        if let Some(s2) = cfg.stage2 {
            rows.push(row(2, s2.m, errs2));
        }
    }
    Ok(BerReport { seed: cfg.seed, rows })
}

/// Median per-vector wall time for one receiver and batch size.
#[derive(Clone, Debug)]
pub struct TimingRow {
    pub receiver: String,
    pub batch_size: usize,
    pub reps: usize,
    pub per_vector_s: f64,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v[v.len() / 2]
}

/// Per-vector detection timings (median over `reps`) for every one-shot
/// combiner — and the unfolded network when the config names a parameter
/// file — at each batch size. The timed region covers receiver preprocessing
/// (combiner construction / sign folding) plus detection of the whole batch,
/// amortized per vector; batching therefore pays off exactly where it does in
/// deployment.
pub fn timing_with(cfg: &ExperimentConfig, batch_sizes: &[usize], reps: usize) -> Result<Vec<TimingRow>> {
    let cons = Constellation::new(cfg.modulation);
    let n0 = 10f64.powf(-cfg.snr_grid_db[0] / 10.0);
    let obmnet_params = match &cfg.obmnet_params_path {
        Some(path) => Some(ObmnetParams::load(path)?),
        None => None,
    };

    let mut rows = Vec::new();
    let mut measure = |name: &str, stream: u64, detect: &mut dyn FnMut(&ChannelMatrix, &[DVector<Complex64>]) -> usize| -> Result<()> {
        for (bi, &batch) in batch_sizes.iter().enumerate() {
            let times: Vec<f64> = (0..reps)
                .map(|rep| {
                    // Data generation stays outside the timed region.
                    let mut r = trial_rng(cfg.seed, stream * batch_sizes.len() as u64 + bi as u64, rep as u64);
                    let h = ChannelMatrix::sample(cfg.n, cfg.k, &mut r);
                    let ys: Vec<DVector<Complex64>> = (0..batch)
                        .map(|_| {
                            let x = random_symbols(&cons, cfg.k, &mut r);
                            transmit(&h, &x, n0, &mut r).y
                        })
                        .collect();
                    let start = Instant::now();
                    let sink = detect(&h, &ys);
                    let elapsed = start.elapsed().as_secs_f64();
                    std::hint::black_box(sink);
                    elapsed / batch as f64
                })
                .collect();
            rows.push(TimingRow {
                receiver: name.to_string(),
                batch_size: batch,
                reps,
                per_vector_s: median(times),
            });
        }
        Ok(())
    };

    for (ri, kind) in CombinerKind::ALL.iter().enumerate() {
        measure(kind.token(), ri as u64, &mut |h, ys| {
            let combiner = build_combiner(*kind, h, n0).expect("random channel is full rank");
            let mut sink = 0usize;
            for y in ys {
                let (_, hard) = detect_linear(&combiner, y, &cons);
                sink ^= hard.len();
            }
            sink
        })?;
    }
    if let Some(params) = &obmnet_params {
        measure("obmnet", CombinerKind::ALL.len() as u64, &mut |h, ys| {
            let lifted: Vec<DVector<f64>> = ys.iter().map(lift_vector).collect();
            let decisions = detect_batch(&lifted, h.lifted(), params, &cons);
            decisions.len()
        })?;
    }
    Ok(rows)
}

/// Timing sweep at the standard batch sizes with ≥ 10 repetitions per cell.
pub fn run_timing(cfg: &ExperimentConfig) -> Result<Vec<TimingRow>> {
    timing_with(cfg, &TIMING_BATCH_SIZES, TIMING_REPS)
}

/// Render a BER report as CSV: a `# seed=` comment, the pinned header, one
/// row per grid cell, '.'-decimal and LF endings throughout.
pub fn render_csv(report: &BerReport) -> String {
    let mut s = format!("# seed={}\n", report.seed);
    s.push_str("snr_db,receiver,stage,M,trials,bit_errors,ber,mean_detect_time_s\n");
    for r in &report.rows {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.snr_db, r.receiver, r.stage, r.m, r.trials, r.bit_errors, r.ber, r.mean_detect_time_s
        ));
    }
    s
}

/// Write a BER report to disk in the CSV format of [`render_csv`].
pub fn write_report(report: &BerReport, path: &Path) -> Result<()> {
    std::fs::write(path, render_csv(report))?;
    Ok(())
}

/// Render timing rows as CSV with the master seed as a comment.
pub fn render_timing_csv(rows: &[TimingRow], seed: u64) -> String {
    let mut s = format!("# seed={seed}\n");
    s.push_str("receiver,batch_size,reps,per_vector_s\n");
    for r in rows {
        s.push_str(&format!("{},{},{},{}\n", r.receiver, r.batch_size, r.reps, r.per_vector_s));
    }
    s
}

/// Write a timing table to disk.
pub fn write_timing(rows: &[TimingRow], seed: u64, path: &Path) -> Result<()> {
    std::fs::write(path, render_timing_csv(rows, seed))?;
    Ok(())
}
