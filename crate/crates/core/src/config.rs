//! Experiment configuration: the receiver/CSI vocabulary, the key–value
//! config-file format, and `--set key=value` overrides.
//!
//! Files are UTF-8 lines of `key = value`; `#` starts a comment and blank
//! lines are ignored. Overrides are applied after the file and replace file
//! values. Every parse error names its source (`line N` or `--set #N`).

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use crate::constellation::{Constellation, Modulation};
use crate::linear::CombinerKind;
use crate::obmnet::TrainConfig;
use crate::{Error, Result};

/// First-stage detector selection.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Receiver {
    /// One of the eight one-shot combiners.
    Linear(CombinerKind),
    /// Deep-unfolded detector (needs a step-size parameter file).
    Obmnet,
    /// Brute-force search under the exact log-likelihood.
    MlConventional,
    /// Brute-force search under the sigmoid-reformulated cost.
    MlRobust,
}

impl Receiver {
    /// Canonical token used in configs and reports.
    pub fn token(&self) -> &'static str {
        match self {
            Receiver::Linear(k) => k.token(),
            Receiver::Obmnet => "obmnet",
            Receiver::MlConventional => "ml-conventional",
            Receiver::MlRobust => "ml-robust",
        }
    }

    /// Parse a config token (`-`/`_` interchangeable, case-insensitive).
    pub fn parse(s: &str) -> Option<Self> {
        let norm = s.to_ascii_lowercase().replace('_', "-");
        match norm.as_str() {
            "obmnet" => Some(Receiver::Obmnet),
            "ml-conventional" => Some(Receiver::MlConventional),
            "ml-robust" => Some(Receiver::MlRobust),
            _ => CombinerKind::parse(&norm).map(Receiver::Linear),
        }
    }

    /// Every accepted receiver token, for error messages.
    pub fn all_tokens() -> Vec<&'static str> {
        let mut v: Vec<&'static str> = CombinerKind::ALL.iter().map(|k| k.token()).collect();
        v.extend(["obmnet", "ml-conventional", "ml-robust"]);
        v
    }
}

impl std::fmt::Display for Receiver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.token())
    }
}

/// Channel knowledge at the receiver.
#[derive(Copy, Clone, Debug, PartialEq)]
pub enum CsiModel {
    Perfect,
    /// Ĥ = √(1−τ²)·H̄ + τ·E with E i.i.d. CN(0,1).
    Perturbed(f64),
}

impl CsiModel {
    /// Perturbation strength τ (0 for perfect CSI).
    pub fn tau(&self) -> f64 {
        match self {
            CsiModel::Perfect => 0.0,
            CsiModel::Perturbed(tau) => *tau,
        }
    }
}

/// Second-stage search settings: list size M and ambiguity margin γ.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct Stage2 {
    pub m: usize,
    pub gamma: f64,
}

/// A fully validated BER/timing experiment description.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub modulation: Modulation,
    pub k: usize,
    pub n: usize,
    pub snr_grid_db: Vec<f64>,
    pub receiver: Receiver,
    pub stage2: Option<Stage2>,
    pub csi: CsiModel,
    /// Symbol vectors per SNR point.
    pub trials: usize,
    pub seed: u64,
    pub obmnet_params_path: Option<PathBuf>,
    /// Symbol vectors sharing one channel draw (1 = fresh channel per trial).
    pub block_len: usize,
}

/// One parsed `key = value` with where it came from, for error messages.
#[derive(Clone, Debug)]
struct Entry {
    value: String,
    origin: String,
}

/// Key–value store assembled from a config file plus overrides.
#[derive(Clone, Debug, Default)]
pub struct RawConfig {
    entries: HashMap<String, Entry>,
}

impl RawConfig {
    /// Parse config text. Rejects malformed and duplicate lines.
    pub fn from_str(text: &str) -> Result<Self> {
        let mut entries = HashMap::new();
        for (idx, line) in text.lines().enumerate() {
            let origin = format!("line {}", idx + 1);
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config(format!("{origin}: expected `key = value`, got {line:?}")));
            };
            let key = key.trim().to_ascii_lowercase();
            let value = value.trim().to_string();
            if key.is_empty() || value.is_empty() {
                return Err(Error::Config(format!("{origin}: empty key or value")));
            }
            if let Some(prev) = entries.insert(key.clone(), Entry { value, origin: origin.clone() }) {
                return Err(Error::Config(format!(
                    "{origin}: duplicate key `{key}` (already set at {})",
                    prev.origin
                )));
            }
        }
        Ok(RawConfig { entries })
    }

    /// Read and parse a config file.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_str(&text)
    }

    /// Apply `--set key=value` overrides (later overrides win).
    pub fn apply_overrides(&mut self, overrides: &[String]) -> Result<()> {
        for (idx, item) in overrides.iter().enumerate() {
            let origin = format!("--set #{}", idx + 1);
            let Some((key, value)) = item.split_once('=') else {
                return Err(Error::Config(format!("{origin}: expected key=value, got {item:?}")));
            };
            let key = key.trim().to_ascii_lowercase();
            let value = value.trim().to_string();
            if key.is_empty() || value.is_empty() {
                return Err(Error::Config(format!("{origin}: empty key or value")));
            }
            self.entries.insert(key, Entry { value, origin });
        }
        Ok(())
    }

    fn take(&mut self, key: &str) -> Option<Entry> {
        self.entries.remove(key)
    }

    /// Error out if any keys were never consumed.
    fn finish(self) -> Result<()> {
        if let Some((key, entry)) = self.entries.into_iter().min_by(|a, b| a.1.origin.cmp(&b.1.origin)) {
            return Err(Error::Config(format!("{}: unknown key `{key}`", entry.origin)));
        }
        Ok(())
    }

    fn required(&mut self, key: &str) -> Result<Entry> {
        self.take(key).ok_or_else(|| Error::Config(format!("missing required key `{key}`")))
    }
}

fn parse_value<T: std::str::FromStr>(entry: &Entry, key: &str, what: &str) -> Result<T> {
    entry.value.parse().map_err(|_| {
        Error::Config(format!("{}: `{key}` must be {what}, got {:?}", entry.origin, entry.value))
    })
}

fn parse_snr_grid(entry: &Entry) -> Result<Vec<f64>> {
    let grid: Vec<f64> = entry
        .value
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Config(format!("{}: bad SNR value {s:?}", entry.origin)))
        })
        .collect::<Result<_>>()?;
    if grid.is_empty() {
        return Err(Error::Config(format!("{}: `snr_db` must list at least one value", entry.origin)));
    }
    Ok(grid)
}

/// Build a validated experiment description from raw key–values.
///
/// Required keys: `modulation`, `k`, `n`, `snr_db`, `receiver`, `trials`.
/// Optional: `seed` (default 0), `stage2_m` + `gamma` (γ defaults to the
/// modulation's margin), `tau` (default 0 = perfect CSI), `obmnet_params`
/// (required when receiver = obmnet), `block_len` (default 1).
pub fn experiment_from_raw(mut raw: RawConfig) -> Result<ExperimentConfig> {
    let ent = raw.required("modulation")?;
    let modulation = Modulation::parse(&ent.value).ok_or_else(|| {
        Error::Config(format!("{}: unknown modulation {:?}, expected qpsk or 16qam", ent.origin, ent.value))
    })?;
    let ent = raw.required("k")?;
    let k: usize = parse_value(&ent, "k", "a positive integer")?;
    let ent = raw.required("n")?;
    let n: usize = parse_value(&ent, "n", "a positive integer")?;
    if k == 0 || n < k {
        return Err(Error::Config(format!("need N ≥ K ≥ 1, got K={k}, N={n}")));
    }

    let snr_grid_db = parse_snr_grid(&raw.required("snr_db")?)?;

    let ent = raw.required("receiver")?;
    let receiver = Receiver::parse(&ent.value).ok_or_else(|| {
        Error::Config(format!(
            "{}: unknown receiver {:?}, expected one of {}",
            ent.origin,
            ent.value,
            Receiver::all_tokens().join(", ")
        ))
    })?;

    let ent = raw.required("trials")?;
    let trials: usize = parse_value(&ent, "trials", "a positive integer")?;
    if trials == 0 {
        return Err(Error::Config(format!("{}: `trials` must be at least 1", ent.origin)));
    }

    let seed = match raw.take("seed") {
        Some(ent) => parse_value(&ent, "seed", "an unsigned integer")?,
        None => 0u64,
    };

    let stage2_m = raw.take("stage2_m");
    let gamma_ent = raw.take("gamma");
    let stage2 = match (stage2_m, gamma_ent) {
        (None, None) => None,
        (None, Some(ent)) => {
            return Err(Error::Config(format!(
                "{}: `gamma` is only meaningful together with `stage2_m`",
                ent.origin
            )));
        }
        (Some(ment), gent) => {
            let m: usize = parse_value(&ment, "stage2_m", "a positive integer")?;
            if m == 0 {
                return Err(Error::Config(format!("{}: `stage2_m` must be at least 1", ment.origin)));
            }
            let gamma = match gent {
                Some(ent) => {
                    let g: f64 = parse_value(&ent, "gamma", "a positive number")?;
                    if !(g > 0.0 && g.is_finite()) {
                        return Err(Error::Config(format!(
                            "{}: `gamma` must be positive, got {g}",
                            ent.origin
                        )));
                    }
                    g
                }
                None => Constellation::new(modulation).default_search_margin(),
            };
            Some(Stage2 { m, gamma })
        }
    };

    let csi = match raw.take("tau") {
        Some(ent) => {
            let tau: f64 = parse_value(&ent, "tau", "a number in [0, 1)")?;
            if !(0.0..1.0).contains(&tau) {
                return Err(Error::Config(format!(
                    "{}: `tau` must be in [0, 1), got {tau}",
                    ent.origin
                )));
            }
            if tau == 0.0 {
                CsiModel::Perfect
            } else {
                CsiModel::Perturbed(tau)
            }
        }
        None => CsiModel::Perfect,
    };

    let obmnet_params_path = raw.take("obmnet_params").map(|ent| PathBuf::from(ent.value));
    if receiver == Receiver::Obmnet && obmnet_params_path.is_none() {
        return Err(Error::Config(
            "receiver `obmnet` needs an `obmnet_params` file path".into(),
        ));
    }

    let block_len = match raw.take("block_len") {
        Some(ent) => {
            let b: usize = parse_value(&ent, "block_len", "a positive integer")?;
            if b == 0 {
                return Err(Error::Config(format!("{}: `block_len` must be at least 1", ent.origin)));
            }
            b
        }
        None => 1,
    };

    if matches!(receiver, Receiver::MlConventional | Receiver::MlRobust) && stage2.is_some() {
        return Err(Error::Config(
            "stage 2 cannot follow the brute-force ML receivers (they already search the full lattice)".into(),
        ));
    }

    raw.finish()?;
    Ok(ExperimentConfig {
        modulation,
        k,
        n,
        snr_grid_db,
        receiver,
        stage2,
        csi,
        trials,
        seed,
        obmnet_params_path,
        block_len,
    })
}

/// Parse an experiment config from a file plus `--set` overrides.
pub fn parse_config(path: &Path, overrides: &[String]) -> Result<ExperimentConfig> {
    let mut raw = RawConfig::from_file(path)?;
    raw.apply_overrides(overrides)?;
    experiment_from_raw(raw)
}

/// Build a training description from raw key–values.
///
/// Required: `modulation`, `k`, `n`. Optional with defaults from
/// [`TrainConfig::new`]: `seed`, `layers`, `batch_size`, `learning_rate`,
/// `num_batches`, `train_snr_lo`, `train_snr_hi`.
pub fn train_from_raw(mut raw: RawConfig) -> Result<TrainConfig> {
    let ent = raw.required("modulation")?;
    let modulation = Modulation::parse(&ent.value).ok_or_else(|| {
        Error::Config(format!("{}: unknown modulation {:?}, expected qpsk or 16qam", ent.origin, ent.value))
    })?;
    let ent = raw.required("k")?;
    let k: usize = parse_value(&ent, "k", "a positive integer")?;
    let ent = raw.required("n")?;
    let n: usize = parse_value(&ent, "n", "a positive integer")?;
    let seed = match raw.take("seed") {
        Some(ent) => parse_value(&ent, "seed", "an unsigned integer")?,
        None => 0u64,
    };
    let mut cfg = TrainConfig::new(modulation, k, n, seed);
    if let Some(ent) = raw.take("layers") {
        cfg.layers = parse_value(&ent, "layers", "a positive integer")?;
    }
    if let Some(ent) = raw.take("batch_size") {
        cfg.batch_size = parse_value(&ent, "batch_size", "a positive integer")?;
    }
    if let Some(ent) = raw.take("learning_rate") {
        cfg.learning_rate = parse_value(&ent, "learning_rate", "a positive number")?;
    }
    if let Some(ent) = raw.take("num_batches") {
        cfg.num_batches = parse_value(&ent, "num_batches", "a positive integer")?;
    }
    if let Some(ent) = raw.take("train_snr_lo") {
        cfg.snr_range_db.0 = parse_value(&ent, "train_snr_lo", "a number")?;
    }
    if let Some(ent) = raw.take("train_snr_hi") {
        cfg.snr_range_db.1 = parse_value(&ent, "train_snr_hi", "a number")?;
    }
    raw.finish()?;
    cfg.validate()?;
    Ok(cfg)
}

/// Parse a training config from a file plus `--set` overrides.
pub fn parse_train_config(path: &Path, overrides: &[String]) -> Result<TrainConfig> {
    let mut raw = RawConfig::from_file(path)?;
    raw.apply_overrides(overrides)?;
    train_from_raw(raw)
}
