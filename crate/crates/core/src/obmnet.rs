//! Deep-unfolded detector with trainable per-layer step sizes.
//!
//! The network unrolls L gradient-descent steps on the sigmoid-reformulated
//! detection cost into L layers,
//!
//! ```text
//! x⁽⁰⁾ = 0,    x⁽ℓ⁾ = x⁽ℓ⁻¹⁾ + α_ℓ·Gᵀσ(−G·x⁽ℓ⁻¹⁾),
//! ```
//!
//! where `G = diag(y)·Ĥ` folds the observed signs into the channel estimate
//! and the constant cost scale is deliberately omitted from the layers (the
//! step sizes absorb it). Only the L scalars α_ℓ are trainable; the network
//! needs no retraining per channel realization. The output is normalized to
//! transmit power K and sliced per real dimension.
//!
//! Training minimizes ‖x̃ − x_target‖² with Adam over freshly drawn
//! (channel, symbols, noise) samples; gradients with respect to the step
//! sizes come from an explicit reverse-mode pass through the layers and the
//! norm quotient rule.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;

use crate::channel::{lift_vector, random_symbols, transmit, unlift_vector, ChannelMatrix};
use crate::constellation::{Constellation, Modulation};
use crate::math::sigmoid;
use crate::rng::{self, derive_seed};
use crate::{Error, Result};

/// Output norms below this are left unnormalized (degenerate guard).
const NORM_EPS: f64 = 1e-12;

/// Adam moment decay rates and offset.
const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Batches per loss window for plateau detection.
const LOSS_WINDOW: usize = 100;
/// Minimum batches before early stopping may trigger.
const EARLY_STOP_FLOOR: usize = 300;
/// Relative window-to-window improvement below which training stops.
const EARLY_STOP_REL_IMPROVEMENT: f64 = 1e-3;
/// Abort when the running mean loss exceeds this multiple of its initial value.
const DIVERGENCE_FACTOR: f64 = 10.0;

/// Trained step sizes plus the system geometry they were trained for.
#[derive(Clone, Debug, PartialEq)]
pub struct ObmnetParams {
    /// Modulation the network was trained on.
    pub modulation: Modulation,
    /// Number of users K.
    pub k: usize,
    /// Number of receive antennas N.
    pub n: usize,
    /// Per-layer step sizes α_1…α_L.
    pub alphas: Vec<f64>,
    /// Training seed (0 when loaded from a file).
    pub seed: u64,
    /// Training batches actually run (0 when loaded from a file).
    pub epochs: u64,
}

impl ObmnetParams {
    /// Bundle step sizes with their system geometry. Needs at least one layer.
    pub fn new(modulation: Modulation, k: usize, n: usize, alphas: Vec<f64>) -> Result<Self> {
        if alphas.is_empty() {
            return Err(Error::Config("need at least one layer".into()));
        }
        Ok(ObmnetParams { modulation, k, n, alphas, seed: 0, epochs: 0 })
    }

    /// Layer count L.
    pub fn layers(&self) -> usize {
        self.alphas.len()
    }

    /// Write the parameter file: header line
    /// `obmnet v1 <modulation> K=<K> N=<N> L=<L>`, then one full-precision
    /// step size per line.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = format!(
            "obmnet v1 {} K={} N={} L={}\n",
            self.modulation.token(),
            self.k,
            self.n,
            self.layers()
        );
        for a in &self.alphas {
            out.push_str(&format!("{a}\n"));
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    /// Read a parameter file written by [`ObmnetParams::save`].
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::ParamFile(format!("{}: {e}", path.display())))?;
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::ParamFile("empty file".into()))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 6 || fields[0] != "obmnet" || fields[1] != "v1" {
            return Err(Error::ParamFile(format!(
                "bad header {header:?}, expected `obmnet v1 <modulation> K=<K> N=<N> L=<L>`"
            )));
        }
        let modulation = Modulation::parse(fields[2])
            .ok_or_else(|| Error::ParamFile(format!("unknown modulation {:?}", fields[2])))?;
        let field = |s: &str, key: &str| -> Result<usize> {
            s.strip_prefix(key)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::ParamFile(format!("bad header field {s:?}, expected {key}<int>")))
        };
        let k = field(fields[3], "K=")?;
        let n = field(fields[4], "N=")?;
        let l = field(fields[5], "L=")?;
        if l == 0 {
            return Err(Error::ParamFile("layer count must be at least 1".into()));
        }
        let mut alphas = Vec::with_capacity(l);
        for (idx, line) in lines.enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let a: f64 = line.parse().map_err(|_| {
                Error::ParamFile(format!("line {}: not a number: {line:?}", idx + 2))
            })?;
            if !a.is_finite() {
                return Err(Error::ParamFile(format!("line {}: non-finite step size", idx + 2)));
            }
            alphas.push(a);
        }
        if alphas.len() != l {
            return Err(Error::ParamFile(format!(
                "header says L={l} but found {} step sizes",
                alphas.len()
            )));
        }
        Ok(ObmnetParams { modulation, k, n, alphas, seed: 0, epochs: 0 })
    }
}

/// Sign-folded channel `G = diag(y)·Ĥ` from the lifted estimate and the ±1
/// observation vector.
pub fn detection_matrix(h_lifted: &DMatrix<f64>, y: &DVector<f64>) -> DMatrix<f64> {
    assert_eq!(y.len(), h_lifted.nrows(), "observation length must equal 2N");
    let mut g = h_lifted.clone();
    for (i, mut row) in g.row_iter_mut().enumerate() {
        row *= y[i];
    }
    g
}

/// Run the L-layer forward pass from x⁽⁰⁾ = 0 and return the raw output x⁽ᴸ⁾.
pub fn forward(g: &DMatrix<f64>, alphas: &[f64]) -> DVector<f64> {
    let mut x = DVector::zeros(g.ncols());
    for &a in alphas {
        let s = (g * &x).map(|t| sigmoid(-t));
        x += g.tr_mul(&s) * a;
    }
    x
}

/// Scale the raw network output to transmit power K: x̃ = √K·x/‖x‖.
/// Norms below 1e−12 leave the vector unchanged.
pub fn normalize_output(x_l: &DVector<f64>, k: usize) -> DVector<f64> {
    let n = x_l.norm();
    if n < NORM_EPS {
        x_l.clone()
    } else {
        x_l * ((k as f64).sqrt() / n)
    }
}

/// Squared Euclidean distance ‖x̃ − x_target‖², the training objective.
pub fn loss(x_tilde: &DVector<f64>, x_target: &DVector<f64>) -> f64 {
    assert_eq!(x_tilde.len(), x_target.len(), "loss operands must have equal length");
    (x_tilde - x_target).norm_squared()
}

/// Loss and its exact gradient with respect to every step size, by reverse
/// accumulation through the L layers and the output normalization. On the
/// degenerate-norm guard path the normalization back-propagates as identity.
pub fn grad_alphas(
    g: &DMatrix<f64>,
    alphas: &[f64],
    x_target: &DVector<f64>,
) -> (f64, Vec<f64>) {
    let l = alphas.len();
    let k = g.ncols() / 2;
    // Forward, keeping each state x⁽ℓ⁾ and layer activation s_ℓ = σ(−G·x⁽ℓ⁻¹⁾).
    let mut xs: Vec<DVector<f64>> = Vec::with_capacity(l + 1);
    xs.push(DVector::zeros(g.ncols()));
    let mut ss: Vec<DVector<f64>> = Vec::with_capacity(l);
    for &a in alphas {
        let prev = xs.last().unwrap();
        let s = (g * prev).map(|t| sigmoid(-t));
        let x = prev + g.tr_mul(&s) * a;
        ss.push(s);
        xs.push(x);
    }
    let x_l = &xs[l];
    let nrm = x_l.norm();

    // Seed the backward pass with ∂loss/∂x⁽ᴸ⁾. Through x̃ = √K·x/‖x‖ the
    // quotient rule gives (√K/‖x‖)·(I − x̂x̂ᵀ)·∂loss/∂x̃ with x̂ = x/‖x‖.
    let (cost, mut adj) = if nrm < NORM_EPS {
        let v = (x_l - x_target) * 2.0;
        ((x_l - x_target).norm_squared(), v)
    } else {
        let scale = (k as f64).sqrt() / nrm;
        let x_tilde = x_l * scale;
        let v = (&x_tilde - x_target) * 2.0;
        let x_hat = x_l / nrm;
        let adj = (&v - &x_hat * x_hat.dot(&v)) * scale;
        ((x_tilde - x_target).norm_squared(), adj)
    };

    let mut grads = vec![0.0; l];
    for layer in (0..l).rev() {
        let w = g * &adj;
        grads[layer] = w.dot(&ss[layer]);
        // ∂x⁽ℓ⁾/∂x⁽ℓ⁻¹⁾ = I − α_ℓ·Gᵀ·diag(s(1−s))·G.
        let damp = w.zip_map(&ss[layer], |wi, si| wi * si * (1.0 - si));
        adj -= g.tr_mul(&damp) * alphas[layer];
    }
    (cost, grads)
}

/// Batches at least this large fan their samples out over the thread pool.
/// The cutoff keeps single-vector calls (the Monte-Carlo hot path) free of
/// scheduling overhead.
const PARALLEL_BATCH_MIN: usize = 32;

/// Detect a batch of observations sharing one channel estimate: per sample,
/// fold the signs into Ĥ, run forward + normalize, slice each user's
/// real/imaginary pair. Results are independent of how the batch is split.
///
/// Every sample runs the identical single-column arithmetic — parallelism
/// only changes scheduling — so decisions are bit-for-bit the same for any
/// batch partition and match the single-sample path exactly. Large batches
/// gain throughput by spreading independent samples across cores, which is
/// where batch detection pays off in deployment.
pub fn detect_batch(
    ys: &[DVector<f64>],
    h_hat_lifted: &DMatrix<f64>,
    params: &ObmnetParams,
    constellation: &Constellation,
) -> Vec<DVector<nalgebra::Complex<f64>>> {
    let (two_n, two_k) = (h_hat_lifted.nrows(), h_hat_lifted.ncols());
    let k = two_k / 2;
    for y in ys {
        assert_eq!(y.len(), two_n, "observation length must equal 2N");
    }
    let detect_one = |y: &DVector<f64>| {
        // G·x = y ⊙ (Ĥ·x) and Gᵀ·s = Ĥᵀ·(y ⊙ s): signs are exact ±1
        // factors, so folding them element-wise is bit-identical to running
        // the layers on the row-scaled Ĥ.
        let mut x = DVector::zeros(two_k);
        for &a in &params.alphas {
            let u = h_hat_lifted * &x;
            let t = u.zip_map(y, |ui, yi| yi * sigmoid(-(yi * ui)));
            x += h_hat_lifted.tr_mul(&t) * a;
        }
        let soft = normalize_output(&x, k);
        unlift_vector(&soft).map(|v| constellation.slice_symbol(v))
    };
    if ys.len() >= PARALLEL_BATCH_MIN {
        ys.par_iter().map(detect_one).collect()
    } else {
        ys.iter().map(detect_one).collect()
    }
}

/// Training hyperparameters. Geometry (K, N, modulation, L) plus the Adam
/// schedule; each training sample draws its SNR uniformly in dB from
/// `snr_range_db`.
#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub modulation: Modulation,
    pub k: usize,
    pub n: usize,
    /// Layer count L.
    pub layers: usize,
    /// Samples per mini-batch.
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Upper bound on mini-batches; plateau detection may stop earlier.
    pub num_batches: usize,
    /// Per-sample SNR draw range in dB (low, high).
    pub snr_range_db: (f64, f64),
    pub seed: u64,
}

impl TrainConfig {
    /// Defaults per modulation: 10 layers and 0–15 dB training SNR for QPSK,
    /// 15 layers and 10–30 dB for 16-QAM; batch 1000, learning rate 10⁻²,
    /// at most 10⁴ batches.
    pub fn new(modulation: Modulation, k: usize, n: usize, seed: u64) -> Self {
        let (layers, snr_range_db) = match modulation {
            Modulation::Qpsk => (10, (0.0, 15.0)),
            Modulation::Qam16 => (15, (10.0, 30.0)),
        };
        TrainConfig {
            modulation,
            k,
            n,
            layers,
            batch_size: 1000,
            learning_rate: 1e-2,
            num_batches: 10_000,
            snr_range_db,
            seed,
        }
    }

    /// Check ranges and geometry.
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.n < self.k {
            return Err(Error::Config(format!(
                "need N ≥ K ≥ 1, got K={}, N={}",
                self.k, self.n
            )));
        }
        if self.layers == 0 {
            return Err(Error::Config("need at least one layer".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.num_batches == 0 {
            return Err(Error::Config("num_batches must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(self.snr_range_db.0 <= self.snr_range_db.1) {
            return Err(Error::Config(format!(
                "snr range low {} exceeds high {}",
                self.snr_range_db.0, self.snr_range_db.1
            )));
        }
        Ok(())
    }
}

/// What the loss bookkeeping decided after one batch.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
enum TrainSignal {
    Continue,
    /// Window-averaged loss stopped improving.
    Stop,
}

/// Batch-loss history: divergence guard plus window-based plateau detection.
struct LossTracker {
    losses: Vec<f64>,
    initial: f64,
}

impl LossTracker {
    fn new() -> Self {
        LossTracker { losses: Vec::new(), initial: f64::NAN }
    }

    fn push(&mut self, loss: f64) -> Result<TrainSignal> {
        if !loss.is_finite() {
            return Err(Error::TrainingDiverged(format!(
                "non-finite batch loss after {} batches",
                self.losses.len()
            )));
        }
        if self.losses.is_empty() {
            self.initial = loss;
        }
        self.losses.push(loss);
        let tail = &self.losses[self.losses.len().saturating_sub(LOSS_WINDOW)..];
        let running = tail.iter().sum::<f64>() / tail.len() as f64;
        if running > DIVERGENCE_FACTOR * self.initial {
            return Err(Error::TrainingDiverged(format!(
                "running mean loss {running:.6} exceeds {DIVERGENCE_FACTOR}× the initial {:.6}",
                self.initial
            )));
        }
        let n = self.losses.len();
        if n >= EARLY_STOP_FLOOR && n % LOSS_WINDOW == 0 {
            let cur: f64 =
                self.losses[n - LOSS_WINDOW..].iter().sum::<f64>() / LOSS_WINDOW as f64;
            let prev: f64 = self.losses[n - 2 * LOSS_WINDOW..n - LOSS_WINDOW].iter().sum::<f64>()
                / LOSS_WINDOW as f64;
            if prev - cur < EARLY_STOP_REL_IMPROVEMENT * prev {
                return Ok(TrainSignal::Stop);
            }
        }
        Ok(TrainSignal::Continue)
    }
}

/// Train step sizes with Adam over freshly generated samples. Deterministic
/// for a fixed seed regardless of worker count: every sample derives its RNG
/// from (seed, batch index, sample index) and the batch reduction is ordered.
pub fn train(cfg: &TrainConfig) -> Result<ObmnetParams> {
    cfg.validate()?;
    let constellation = Constellation::new(cfg.modulation);
    let l = cfg.layers;
    let mut alphas = vec![0.1; l];
    let (mut m1, mut m2) = (vec![0.0; l], vec![0.0; l]);
    let mut tracker = LossTracker::new();
    let mut epochs = cfg.num_batches as u64;

    for batch in 0..cfg.num_batches {
        let per_sample: Vec<(f64, Vec<f64>)> = (0..cfg.batch_size)
            .into_par_iter()
            .map(|sample| {
                let mut rng = rng::seeded(derive_seed(cfg.seed, batch as u64, sample as u64));
                let (lo, hi) = cfg.snr_range_db;
                let snr_db = lo + (hi - lo) * rng.random::<f64>();
                let n0 = 10f64.powf(-snr_db / 10.0);
                let h = ChannelMatrix::sample(cfg.n, cfg.k, &mut rng);
                let x = random_symbols(&constellation, cfg.k, &mut rng);
                let tx = transmit(&h, &x, n0, &mut rng);
                let g = detection_matrix(h.lifted(), &tx.y_lifted());
                grad_alphas(&g, &alphas, &lift_vector(&x))
            })
            .collect();

        // Ordered reduction so results do not depend on thread scheduling.
        let mut loss_sum = 0.0;
        let mut grad = vec![0.0; l];
        for (sample_loss, sample_grad) in &per_sample {
            loss_sum += sample_loss;
            for (gj, sj) in grad.iter_mut().zip(sample_grad) {
                *gj += sj;
            }
        }
        let inv_b = 1.0 / cfg.batch_size as f64;
        let batch_loss = loss_sum * inv_b;
        for gj in &mut grad {
            *gj *= inv_b;
        }

        match tracker.push(batch_loss)? {
            TrainSignal::Stop => {
                epochs = batch as u64 + 1;
                break;
            }
            TrainSignal::Continue => {}
        }

        let t = (batch + 1) as i32;
        let (c1, c2) = (1.0 - ADAM_BETA1.powi(t), 1.0 - ADAM_BETA2.powi(t));
        for j in 0..l {
            m1[j] = ADAM_BETA1 * m1[j] + (1.0 - ADAM_BETA1) * grad[j];
            m2[j] = ADAM_BETA2 * m2[j] + (1.0 - ADAM_BETA2) * grad[j] * grad[j];
            alphas[j] -= cfg.learning_rate * (m1[j] / c1) / ((m2[j] / c2).sqrt() + ADAM_EPS);
        }
    }

    Ok(ObmnetParams {
        modulation: cfg.modulation,
        k: cfg.k,
        n: cfg.n,
        alphas,
        seed: cfg.seed,
        epochs,
    })
}
