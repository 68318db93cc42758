//! Uplink system model: Rayleigh channel, one-bit quantization, real lifting.
//!
//! The complex model is `r̄ = H̄ x̄ + z̄`, `ȳ = sign(Re r̄) + j·sign(Im r̄)` with
//! `sign(a) = +1` for `a ≥ 0`. The equivalent real-valued form stacks real over
//! imaginary parts,
//!
//! ```text
//! x = [Re x̄; Im x̄],   H = [ Re H̄  −Im H̄ ]
//!                         [ Im H̄   Re H̄ ]
//! ```
//!
//! so that `lift(A·B) = lift(A)·lift(B)` and all likelihood-based detectors can
//! work with a plain ±1 sign vector of length 2N.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;

use crate::constellation::Constellation;
use crate::rng::{self, SimRng};

/// Sign with `sign(0) = +1`, applied per real dimension by the quantizer.
#[inline]
pub fn sign(a: f64) -> f64 {
    if a >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// Real lifting of a complex matrix (2N×2K block form shown in the module doc).
pub fn lift_matrix(a: &DMatrix<Complex64>) -> DMatrix<f64> {
    let (n, k) = a.shape();
    DMatrix::from_fn(2 * n, 2 * k, |i, j| {
        let e = a[(i % n, j % k)];
        match (i >= n, j >= k) {
            (false, false) => e.re,
            (false, true) => -e.im,
            (true, false) => e.im,
            (true, true) => e.re,
        }
    })
}

/// Real lifting of a complex vector: `[Re v; Im v]`.
pub fn lift_vector(v: &DVector<Complex64>) -> DVector<f64> {
    let n = v.len();
    DVector::from_fn(2 * n, |i, _| if i < n { v[i].re } else { v[i - n].im })
}

/// Inverse of [`lift_vector`].
pub fn unlift_vector(v: &DVector<f64>) -> DVector<Complex64> {
    assert!(v.len() % 2 == 0, "lifted vector must have even length");
    let n = v.len() / 2;
    DVector::from_fn(n, |i, _| Complex64::new(v[i], v[i + n]))
}

/// One-bit quantizer: each real dimension of each entry collapses to ±1.
pub fn one_bit_quantize(r: &DVector<Complex64>) -> DVector<Complex64> {
    r.map(|e| Complex64::new(sign(e.re), sign(e.im)))
}

/// Channel matrix with its real lifted form cached.
#[derive(Clone, Debug)]
pub struct ChannelMatrix {
    h: DMatrix<Complex64>,
    lifted: DMatrix<f64>,
}

impl ChannelMatrix {
    pub fn new(h: DMatrix<Complex64>) -> Self {
        let lifted = lift_matrix(&h);
        ChannelMatrix { h, lifted }
    }

    /// i.i.d. Rayleigh channel: N×K entries drawn CN(0,1).
    pub fn sample(n_antennas: usize, k_users: usize, rng: &mut impl Rng) -> Self {
        assert!(n_antennas >= k_users, "need at least as many antennas as users");
        let h = DMatrix::from_fn(n_antennas, k_users, |_, _| rng::complex_gaussian(rng, 1.0));
        ChannelMatrix::new(h)
    }

    /// Seeded convenience wrapper around [`ChannelMatrix::sample`].
    pub fn from_seed(n_antennas: usize, k_users: usize, seed: u64) -> Self {
        ChannelMatrix::sample(n_antennas, k_users, &mut rng::seeded(seed))
    }

    /// Complex N×K matrix H̄.
    pub fn complex(&self) -> &DMatrix<Complex64> {
        &self.h
    }

    /// Real lifted 2N×2K matrix H.
    pub fn lifted(&self) -> &DMatrix<f64> {
        &self.lifted
    }

    pub fn n_antennas(&self) -> usize {
        self.h.nrows()
    }

    pub fn k_users(&self) -> usize {
        self.h.ncols()
    }
}

/// One transmission through the quantized channel.
#[derive(Clone, Debug)]
pub struct TxRxSample {
    /// Transmitted symbol vector x̄ (length K).
    pub x: DVector<Complex64>,
    /// Noise realization z̄ ~ CN(0, N0·I).
    pub z: DVector<Complex64>,
    /// Unquantized receive vector r̄ = H̄x̄ + z̄.
    pub r: DVector<Complex64>,
    /// One-bit observations ȳ ∈ {±1±j}^N.
    pub y: DVector<Complex64>,
    /// Noise power N0.
    pub n0: f64,
}

impl TxRxSample {
    /// SNR ρ = 1/N0 (unit average transmit energy per user).
    pub fn rho(&self) -> f64 {
        1.0 / self.n0
    }

    /// Real ±1 sign vector of length 2N.
    pub fn y_lifted(&self) -> DVector<f64> {
        lift_vector(&self.y)
    }
}

/// Uniformly random symbol vector of length `k`.
pub fn random_symbols(c: &Constellation, k: usize, rng: &mut impl Rng) -> DVector<Complex64> {
    let points = c.points();
    DVector::from_fn(k, |_, _| points[rng.random_range(0..points.len())])
}

/// Send `x` through `h` with noise power `n0` and quantize.
pub fn transmit(h: &ChannelMatrix, x: &DVector<Complex64>, n0: f64, rng: &mut SimRng) -> TxRxSample {
    assert_eq!(x.len(), h.k_users(), "symbol vector length must equal K");
    assert!(n0 > 0.0, "noise power must be positive");
    let z = rng::complex_gaussian_vector(rng, h.n_antennas(), n0);
    let r = h.complex() * x + &z;
    let y = one_bit_quantize(&r);
    TxRxSample { x: x.clone(), z, r, y, n0 }
}
