//! Unit-energy square constellations and their per-dimension structure.
//!
//! QPSK and 16-QAM factor into two independent real PAM dimensions, which is
//! what both the real-valued lifted detectors and the nearest-neighbor search
//! operate on. A [`Constellation`] therefore exposes the per-dimension
//! amplitude `levels` (ascending), the decision `boundaries` between them
//! (ascending, one between each adjacent level pair), and the full complex
//! point set. Average symbol energy is 1 in both cases:
//! QPSK levels ±1/√2, 16-QAM levels ±1/√10 and ±3/√10.

use num_complex::Complex64;

/// Supported modulation orders.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub enum Modulation {
    Qpsk,
    Qam16,
}

impl Modulation {
    /// Parse a config token: `qpsk` or `16qam` (case-insensitive).
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "qpsk" => Some(Modulation::Qpsk),
            "16qam" | "16-qam" | "qam16" => Some(Modulation::Qam16),
            _ => None,
        }
    }

    /// Canonical token used in files and reports.
    pub fn token(&self) -> &'static str {
        match self {
            Modulation::Qpsk => "qpsk",
            Modulation::Qam16 => "16qam",
        }
    }
}

impl std::fmt::Display for Modulation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.token())
    }
}

/// A square constellation, viewed per real dimension.
#[derive(Clone, Debug)]
pub struct Constellation {
    modulation: Modulation,
    levels: Vec<f64>,
    boundaries: Vec<f64>,
    points: Vec<Complex64>,
}

impl Constellation {
    pub fn new(modulation: Modulation) -> Self {
        let levels: Vec<f64> = match modulation {
            Modulation::Qpsk => {
                let a = std::f64::consts::FRAC_1_SQRT_2;
                vec![-a, a]
            }
            Modulation::Qam16 => {
                let s = 1.0 / 10.0f64.sqrt();
                vec![-3.0 * s, -s, s, 3.0 * s]
            }
        };
        let boundaries = levels.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        // Complex points in row-major (Re outer, Im inner) order; enumeration
        // order is part of the deterministic tie-breaking contract.
        let mut points = Vec::with_capacity(levels.len() * levels.len());
        for &re in &levels {
            for &im in &levels {
                points.push(Complex64::new(re, im));
            }
        }
        Constellation { modulation, levels, boundaries, points }
    }

    pub fn modulation(&self) -> Modulation {
        self.modulation
    }

    /// Per-dimension amplitudes, ascending.
    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    /// Decision thresholds between adjacent levels, ascending.
    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    /// All complex constellation points (|levels|² of them).
    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    /// Bits carried by one real dimension (1 for QPSK, 2 for 16-QAM).
    pub fn bits_per_dimension(&self) -> usize {
        self.levels.len().trailing_zeros() as usize
    }

    /// Bits carried by one complex symbol.
    pub fn bits_per_symbol(&self) -> usize {
        2 * self.bits_per_dimension()
    }

    /// Half the gap between a level and its neighboring decision boundary;
    /// default ambiguity margin γ of the nearest-neighbor search stage
    /// (1/(2√2) for QPSK, 1/(2√10) for 16-QAM).
    pub fn default_search_margin(&self) -> f64 {
        match self.modulation {
            Modulation::Qpsk => 0.5 * std::f64::consts::FRAC_1_SQRT_2,
            Modulation::Qam16 => 0.5 / 10.0f64.sqrt(),
        }
    }

    /// Index of the level nearest to `v`; an exact tie on a boundary resolves
    /// to the larger level.
    pub fn nearest_level_index(&self, v: f64) -> usize {
        self.boundaries.partition_point(|&b| b <= v)
    }

    /// Level nearest to `v` (ties to the larger level).
    pub fn slice_level(&self, v: f64) -> f64 {
        self.levels[self.nearest_level_index(v)]
    }

    /// Complex constellation point nearest to `v` (per-dimension slicing).
    pub fn slice_symbol(&self, v: Complex64) -> Complex64 {
        Complex64::new(self.slice_level(v.re), self.slice_level(v.im))
    }

    /// Index of an exact level value produced by this constellation.
    ///
    /// Panics if `level` is not one of `levels()`; detectors only ever hand
    /// back values copied from that table, so a miss is a logic error.
    pub fn level_index(&self, level: f64) -> usize {
        self.levels
            .iter()
            .position(|&l| l == level)
            .unwrap_or_else(|| panic!("{level} is not a level of {}", self.modulation))
    }

    /// Gray label of a level index (`i ^ (i >> 1)`), so adjacent levels differ
    /// in exactly one bit.
    pub fn gray_label(&self, level_index: usize) -> u32 {
        debug_assert!(level_index < self.levels.len());
        (level_index ^ (level_index >> 1)) as u32
    }

    /// Bit errors between two exact level values under Gray labeling.
    pub fn bit_errors_per_dimension(&self, sent: f64, decided: f64) -> u32 {
        (self.gray_label(self.level_index(sent)) ^ self.gray_label(self.level_index(decided)))
            .count_ones()
    }
}
