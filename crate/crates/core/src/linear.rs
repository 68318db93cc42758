//! Linear receivers for one-bit observations.
//!
//! Two families share one detection pipeline (`x́ = Wȳ` → per-user equalization
//! → norm rescaling → slicing):
//!
//! * **Quantization-blind / AQNM**: MRC, ZF, MMSE built directly from H̄, plus
//!   AQNM-MMSE and WFQ which model the quantizer by the additive distortion
//!   factor α ≈ 0.3634.
//! * **Bussgang**: the quantizer is decomposed exactly (for Gaussian inputs) as
//!   `ȳ = V̄r̄ + n̄` with `V̄ = √(2/π)·diag(Σ_r̄)^{−1/2}`, giving an effective
//!   channel `Ā = V̄H̄` and distortion covariance
//!   `Σ_n̄ = (2/π)[arcsin(C) − C + N0·diag(Σ_r̄)^{−1}]`,
//!   `C = diag(Σ_r̄)^{−1/2} Σ_r̄ diag(Σ_r̄)^{−1/2}`,
//!   where arcsin acts element-wise on real and imaginary parts. BMRC/BZF/BMMSE
//!   are MRC/ZF/MMSE rebuilt on (Ā, Σ_n̄); notably
//!   `ĀĀ^H + Σ_n̄ = (2/π)·arcsin(C)` exactly.
//!
//! Equalization divides user k's combiner output by the k-th diagonal entry of
//! `W·H_eff` (`H_eff` = H̄ or Ā); ZF and BZF skip it since `W·H_eff = I` by
//! construction. Rescaling maps the equalized vector x̌ to `x̃ = √K·x̌/‖x̌‖`
//! before slicing, so any positive scalar ambiguity left by a combiner is
//! irrelevant to the decisions.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::channel::ChannelMatrix;
use crate::constellation::Constellation;
use crate::{Error, Result};

/// Additive quantization-noise-model distortion factor for one-bit ADCs.
pub const AQNM_ALPHA: f64 = 0.3634;

/// Norm threshold below which the rescaling step leaves x̌ untouched.
const RESCALE_EPS: f64 = 1e-12;

/// The eight supported linear combiners.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub enum CombinerKind {
    Mrc,
    Zf,
    Mmse,
    AqnmMmse,
    Wfq,
    Bmrc,
    Bzf,
    Bmmse,
}

impl CombinerKind {
    pub const ALL: [CombinerKind; 8] = [
        CombinerKind::Mrc,
        CombinerKind::Zf,
        CombinerKind::Mmse,
        CombinerKind::AqnmMmse,
        CombinerKind::Wfq,
        CombinerKind::Bmrc,
        CombinerKind::Bzf,
        CombinerKind::Bmmse,
    ];

    /// Canonical token used in configs and reports.
    pub fn token(&self) -> &'static str {
        match self {
            CombinerKind::Mrc => "mrc",
            CombinerKind::Zf => "zf",
            CombinerKind::Mmse => "mmse",
            CombinerKind::AqnmMmse => "aqnm-mmse",
            CombinerKind::Wfq => "wfq",
            CombinerKind::Bmrc => "bmrc",
            CombinerKind::Bzf => "bzf",
            CombinerKind::Bmmse => "bmmse",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        let s = s.to_ascii_lowercase().replace('_', "-");
        Self::ALL.iter().copied().find(|k| k.token() == s)
    }

    /// True for the Bussgang-based family (works on Ā instead of H̄).
    pub fn is_bussgang(&self) -> bool {
        matches!(self, CombinerKind::Bmrc | CombinerKind::Bzf | CombinerKind::Bmmse)
    }
}

impl std::fmt::Display for CombinerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.token())
    }
}

/// Covariance of the unquantized receive vector, `Σ_r̄ = H̄H̄^H + N0·I`.
pub fn received_covariance(h: &ChannelMatrix, n0: f64) -> DMatrix<Complex64> {
    let hm = h.complex();
    let mut s = hm * hm.adjoint();
    for i in 0..s.nrows() {
        s[(i, i)] += Complex64::new(n0, 0.0);
    }
    s
}

/// Element-wise complex arcsin, `arcsin(Re) + j·arcsin(Im)`, with inputs
/// clamped to [−1, 1] to absorb rounding on unit-magnitude entries.
pub fn arcsin_elementwise(m: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    m.map(|e| Complex64::new(e.re.clamp(-1.0, 1.0).asin(), e.im.clamp(-1.0, 1.0).asin()))
}

/// Exact linear decomposition of the one-bit quantizer for Gaussian inputs.
#[derive(Clone, Debug)]
pub struct BussgangModel {
    /// Covariance Σ_r̄ of the unquantized receive vector.
    pub sigma_r: DMatrix<Complex64>,
    /// Diagonal of the Bussgang gain V̄ (real, positive).
    pub v: DVector<f64>,
    /// Effective channel Ā = V̄H̄.
    pub a: DMatrix<Complex64>,
    /// Covariance Σ_n̄ of the (non-Gaussian) quantization distortion.
    pub sigma_n: DMatrix<Complex64>,
}

impl BussgangModel {
    /// `ĀĀ^H + Σ_n̄`, equal to `(2/π)·arcsin(C)` up to rounding.
    pub fn output_covariance(&self) -> DMatrix<Complex64> {
        &self.a * self.a.adjoint() + &self.sigma_n
    }
}

/// Per-antenna receive powers `diag(Σ_r̄) = ‖h̄_row‖² + N0` (real, positive).
fn row_powers(h: &ChannelMatrix, n0: f64) -> DVector<f64> {
    DVector::from_fn(h.n_antennas(), |i, _| h.complex().row(i).norm_squared() + n0)
}

/// Effective channel Ā = √(2/π)·diag(Σ_r̄)^{−1/2}·H̄ without forming Σ_r̄.
fn bussgang_effective(h: &ChannelMatrix, n0: f64) -> DMatrix<Complex64> {
    let d = row_powers(h, n0);
    let c = (2.0 / std::f64::consts::PI).sqrt();
    let mut a = h.complex().clone();
    for i in 0..a.nrows() {
        let s = c / d[i].sqrt();
        for j in 0..a.ncols() {
            a[(i, j)] *= s;
        }
    }
    a
}

/// Normalized covariance `C = diag(Σ_r̄)^{−1/2} Σ_r̄ diag(Σ_r̄)^{−1/2}`
/// (unit diagonal, entries inside the unit square).
fn normalized_covariance(sigma_r: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let n = sigma_r.nrows();
    let inv_sqrt: Vec<f64> = (0..n).map(|i| 1.0 / sigma_r[(i, i)].re.sqrt()).collect();
    // The diagonal is exactly 1 analytically; recomputing it as Σ_ii·(1/√Σ_ii)²
    // rounds to 1−ε, and asin's unbounded slope at 1 turns that ε into ~√ε error.
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            Complex64::new(1.0, 0.0)
        } else {
            sigma_r[(i, j)] * (inv_sqrt[i] * inv_sqrt[j])
        }
    })
}

/// Build the full Bussgang decomposition for channel `h` at noise power `n0`.
pub fn bussgang_model(h: &ChannelMatrix, n0: f64) -> BussgangModel {
    let sigma_r = received_covariance(h, n0);
    let n = sigma_r.nrows();
    let d = row_powers(h, n0);
    let two_over_pi = 2.0 / std::f64::consts::PI;
    let v = d.map(|p| (two_over_pi / p).sqrt());
    let a = bussgang_effective(h, n0);
    let c = normalized_covariance(&sigma_r);
    let mut sigma_n = arcsin_elementwise(&c) - &c;
    for i in 0..n {
        sigma_n[(i, i)] += Complex64::new(n0 / d[i], 0.0);
    }
    sigma_n *= Complex64::new(two_over_pi, 0.0);
    BussgangModel { sigma_r, v, a, sigma_n }
}

/// A combiner W, the effective channel it equalizes against, and the
/// precomputed per-user equalizer divisors.
#[derive(Clone, Debug)]
pub struct Combiner {
    pub kind: CombinerKind,
    /// K×N combining matrix: `x́ = W·ȳ`.
    pub w: DMatrix<Complex64>,
    /// N×K effective channel (H̄ for the conventional family, Ā for Bussgang).
    pub effective_channel: DMatrix<Complex64>,
    /// `diag(W·H_eff)`; `None` for ZF/BZF where it is the identity by design.
    eq: Option<Vec<Complex64>>,
}

fn invert(m: DMatrix<Complex64>, what: &'static str) -> Result<DMatrix<Complex64>> {
    m.try_inverse().ok_or(Error::Singular(what))
}

/// `diag(W·H_eff)` without forming the full product.
fn product_diagonal(w: &DMatrix<Complex64>, eff: &DMatrix<Complex64>) -> Vec<Complex64> {
    (0..w.nrows())
        .map(|k| (0..w.ncols()).map(|n| w[(k, n)] * eff[(n, k)]).sum())
        .collect()
}

/// Construct the combiner of the given kind for channel estimate `h` at noise
/// power `n0`.
pub fn build_combiner(kind: CombinerKind, h: &ChannelMatrix, n0: f64) -> Result<Combiner> {
    if h.n_antennas() < h.k_users() {
        return Err(Error::Dimension(format!(
            "combiner needs N ≥ K, got N={} K={}",
            h.n_antennas(),
            h.k_users()
        )));
    }
    if !(n0 > 0.0) {
        return Err(Error::Config(format!("noise power must be positive, got {n0}")));
    }
    let hm = h.complex();
    let k = h.k_users();
    let (w, effective) = match kind {
        CombinerKind::Mrc => (hm.adjoint(), hm.clone()),
        CombinerKind::Zf => {
            let gram = hm.adjoint() * hm;
            (invert(gram, "ZF Gram matrix")? * hm.adjoint(), hm.clone())
        }
        CombinerKind::Mmse => {
            let mut gram = hm.adjoint() * hm;
            for i in 0..k {
                gram[(i, i)] += Complex64::new(n0, 0.0);
            }
            (invert(gram, "MMSE regularized Gram")? * hm.adjoint(), hm.clone())
        }
        CombinerKind::AqnmMmse => {
            // Distortion covariance α(1−α)·diag(Σ_r̄) scaled by 1/(1−α)² folds
            // into Σ_r̄ + (α/(1−α))·diag(Σ_r̄).
            let kappa = 1.0 - AQNM_ALPHA;
            let mut m = received_covariance(h, n0);
            let ratio = AQNM_ALPHA / kappa;
            for i in 0..m.nrows() {
                let d = m[(i, i)].re;
                m[(i, i)] += Complex64::new(ratio * d, 0.0);
            }
            (hm.adjoint() * invert(m, "AQNM-MMSE covariance")?, hm.clone())
        }
        CombinerKind::Wfq => {
            let kappa = Complex64::new(1.0 - AQNM_ALPHA, 0.0);
            let sigma_r = received_covariance(h, n0);
            let mut m = &sigma_r * kappa;
            for i in 0..m.nrows() {
                m[(i, i)] += Complex64::new(AQNM_ALPHA * sigma_r[(i, i)].re, 0.0);
            }
            (hm.adjoint() * invert(m, "WFQ covariance")?, hm.clone())
        }
        CombinerKind::Bmrc => {
            let a = bussgang_effective(h, n0);
            (a.adjoint(), a)
        }
        CombinerKind::Bzf => {
            let a = bussgang_effective(h, n0);
            let gram = a.adjoint() * &a;
            (invert(gram, "BZF Gram matrix")? * a.adjoint(), a)
        }
        CombinerKind::Bmmse => {
            let a = bussgang_effective(h, n0);
            let c = normalized_covariance(&received_covariance(h, n0));
            let cov = arcsin_elementwise(&c) * Complex64::new(2.0 / std::f64::consts::PI, 0.0);
            (a.adjoint() * invert(cov, "BMMSE output covariance")?, a)
        }
    };
    let eq = match kind {
        CombinerKind::Zf | CombinerKind::Bzf => None,
        _ => Some(product_diagonal(&w, &effective)),
    };
    Ok(Combiner { kind, w, effective_channel: effective, eq })
}

/// Rescale to the constellation's total energy: `x̃ = √K·x̌/‖x̌‖` (identity if
/// x̌ is numerically zero).
fn rescale(mut x: DVector<Complex64>) -> DVector<Complex64> {
    let norm = x.norm();
    if norm >= RESCALE_EPS {
        x *= Complex64::new((x.len() as f64).sqrt() / norm, 0.0);
    }
    x
}

/// Run the linear pipeline on one observation: returns the rescaled soft
/// estimate x̃ and the sliced decisions x̂.
pub fn detect_linear(
    combiner: &Combiner,
    y: &DVector<Complex64>,
    constellation: &Constellation,
) -> (DVector<Complex64>, DVector<Complex64>) {
    assert_eq!(y.len(), combiner.w.ncols(), "observation length must equal N");
    let mut x = &combiner.w * y;
    if let Some(eq) = &combiner.eq {
        for (k, d) in eq.iter().enumerate() {
            x[k] /= d;
        }
    }
    let soft = rescale(x);
    let hard = soft.map(|v| constellation.slice_symbol(v));
    (soft, hard)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{lift_vector, one_bit_quantize, random_symbols, transmit};
    use crate::constellation::Modulation;
    use crate::rng;
    use nalgebra::dmatrix;

    fn random_channel(n: usize, k: usize, seed: u64) -> ChannelMatrix {
        ChannelMatrix::from_seed(n, k, seed)
    }

    /// Scalar channel h=1 at N0=1: every Bussgang quantity has a closed form.
    #[test]
    fn bussgang_scalar_closed_forms() {
        let h = ChannelMatrix::new(DMatrix::from_element(1, 1, Complex64::new(1.0, 0.0)));
        let m = bussgang_model(&h, 1.0);
        let inv_sqrt_pi = 1.0 / std::f64::consts::PI.sqrt();
        assert!((m.sigma_r[(0, 0)].re - 2.0).abs() < 1e-15);
        assert!((m.v[0] - inv_sqrt_pi).abs() < 1e-15, "V̄ = √(2/π)/√2 = 1/√π");
        assert!((m.a[(0, 0)].re - inv_sqrt_pi).abs() < 1e-15);
        let expect_n = 1.0 - 1.0 / std::f64::consts::PI;
        assert!((m.sigma_n[(0, 0)].re - expect_n).abs() < 1e-14);
        // Output covariance collapses to (2/π)·arcsin(1) = 1.
        assert!((m.output_covariance()[(0, 0)].re - 1.0).abs() < 1e-14);
    }

    #[test]
    fn bussgang_identity_holds_on_random_channels() {
        for seed in 0..10u64 {
            let h = random_channel(4, 2, seed);
            let n0 = 10f64.powf(-(seed as f64) / 5.0);
            let m = bussgang_model(&h, n0);
            let lhs = m.output_covariance();
            let rhs = arcsin_elementwise(&normalized_covariance(&m.sigma_r))
                * Complex64::new(2.0 / std::f64::consts::PI, 0.0);
            let err = (lhs - rhs).iter().map(|e| e.norm()).fold(0.0f64, f64::max);
            assert!(err < 1e-9, "seed {seed}: identity error {err}");
        }
    }

    #[test]
    fn normalized_covariance_has_unit_diagonal() {
        let h = random_channel(6, 3, 4);
        let c = normalized_covariance(&received_covariance(&h, 0.37));
        for i in 0..6 {
            assert!((c[(i, i)].re - 1.0).abs() < 1e-12);
            assert!(c[(i, i)].im.abs() < 1e-12);
        }
    }

    #[test]
    fn received_covariance_reduces_to_noise_for_zero_channel() {
        let h = ChannelMatrix::new(DMatrix::zeros(3, 2));
        let s = received_covariance(&h, 0.25);
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 0.25 } else { 0.0 };
                assert!((s[(i, j)].re - want).abs() < 1e-15 && s[(i, j)].im == 0.0);
            }
        }
    }

    #[test]
    fn received_covariance_matches_sample_covariance() {
        let h = random_channel(4, 2, 9);
        let n0 = 0.5;
        let c = Constellation::new(Modulation::Qpsk);
        let s = received_covariance(&h, n0);
        let trials = 100_000;
        let mut emp = DMatrix::<Complex64>::zeros(4, 4);
        let mut rng = rng::seeded(10);
        for _ in 0..trials {
            let x = random_symbols(&c, 2, &mut rng);
            let smp = transmit(&h, &x, n0, &mut rng);
            emp += &smp.r * smp.r.adjoint();
        }
        emp /= Complex64::new(trials as f64, 0.0);
        // Entry-wise 3 standard errors; the entry scale is ~‖row‖², so estimate
        // the error bar from the diagonal magnitudes.
        for i in 0..4 {
            for j in 0..4 {
                let scale = (s[(i, i)].re * s[(j, j)].re).sqrt();
                let se = 3.0 * scale / (trials as f64).sqrt();
                let d = (emp[(i, j)] - s[(i, j)]).norm();
                assert!(d < se, "entry ({i},{j}): |Δ| = {d:.4}, 3SE = {se:.4}");
            }
        }
    }

    #[test]
    fn mrc_of_identity_channel_is_identity() {
        let h = ChannelMatrix::new(DMatrix::identity(3, 3));
        let c = build_combiner(CombinerKind::Mrc, &h, 0.1).unwrap();
        assert!((&c.w - DMatrix::<Complex64>::identity(3, 3)).iter().all(|e| e.norm() < 1e-15));
    }

    #[test]
    fn zf_is_a_left_inverse() {
        for seed in [1u64, 2, 3] {
            let h = random_channel(4, 4, seed);
            let c = build_combiner(CombinerKind::Zf, &h, 0.1).unwrap();
            let p = &c.w * h.complex();
            let err = (p - DMatrix::<Complex64>::identity(4, 4))
                .iter()
                .map(|e| e.norm())
                .fold(0.0f64, f64::max);
            assert!(err < 1e-10, "seed {seed}: ZF residual {err}");
        }
    }

    #[test]
    fn bzf_left_inverts_the_effective_channel() {
        let h = random_channel(8, 3, 5);
        let c = build_combiner(CombinerKind::Bzf, &h, 0.3).unwrap();
        let p = &c.w * &c.effective_channel;
        let err = (p - DMatrix::<Complex64>::identity(3, 3))
            .iter()
            .map(|e| e.norm())
            .fold(0.0f64, f64::max);
        assert!(err < 1e-10);
    }

    #[test]
    fn bmmse_scalar_value() {
        let h = ChannelMatrix::new(DMatrix::from_element(1, 1, Complex64::new(1.0, 0.0)));
        let c = build_combiner(CombinerKind::Bmmse, &h, 1.0).unwrap();
        // Ā^H · [(2/π)arcsin(1)]^{-1} = (1/√π)/1
        assert!((c.w[(0, 0)].re - 0.5641896).abs() < 1e-6);
        assert!(c.w[(0, 0)].im.abs() < 1e-12);
    }

    #[test]
    fn mrc_equalization_matches_matched_filter_form() {
        let h = random_channel(6, 2, 31);
        let n0 = 0.2;
        let comb = build_combiner(CombinerKind::Mrc, &h, n0).unwrap();
        let cons = Constellation::new(Modulation::Qpsk);
        let mut rng = rng::seeded(32);
        let y = one_bit_quantize(&rng::complex_gaussian_vector(&mut rng, 6, 1.0));
        let (_, _) = detect_linear(&comb, &y, &cons);
        // x̌_k before rescaling is h̄_k^H ȳ / ‖h̄_k‖²; rebuild it and compare
        // against the pipeline's pre-slice value via a unit-norm trick: the
        // rescaled outputs of both constructions must agree.
        let mut manual = DVector::<Complex64>::zeros(2);
        for k in 0..2 {
            let hk = h.complex().column(k);
            manual[k] = (hk.adjoint() * &y)[(0, 0)] / hk.norm_squared();
        }
        let manual = super::rescale(manual);
        let (soft, _) = detect_linear(&comb, &y, &cons);
        assert!((soft - manual).norm() < 1e-12);
    }

    #[test]
    fn rescaled_soft_estimate_has_norm_sqrt_k() {
        let h = random_channel(8, 3, 17);
        let cons = Constellation::new(Modulation::Qpsk);
        let mut rng = rng::seeded(18);
        for kind in CombinerKind::ALL {
            let comb = build_combiner(kind, &h, 0.1).unwrap();
            let y = one_bit_quantize(&rng::complex_gaussian_vector(&mut rng, 8, 1.0));
            let (soft, _) = detect_linear(&comb, &y, &cons);
            assert!((soft.norm() - 3f64.sqrt()).abs() < 1e-10, "{kind}");
        }
    }

    #[test]
    fn rescale_example() {
        let x = DVector::from_vec(vec![Complex64::new(1.0, 1.0), Complex64::new(1.0, -1.0)]);
        let r = super::rescale(x);
        // ‖x̌‖ = 2, √K = √2 → entries shrink by 1/√2.
        let a = std::f64::consts::FRAC_1_SQRT_2;
        assert!((r[0] - Complex64::new(a, a)).norm() < 1e-15);
        assert!((r[1] - Complex64::new(a, -a)).norm() < 1e-15);
    }

    #[test]
    fn zero_combiner_output_survives_rescaling() {
        let r = super::rescale(DVector::<Complex64>::zeros(3));
        assert!(r.iter().all(|e| e.norm() == 0.0));
    }

    #[test]
    fn noiseless_zf_recovers_qpsk_through_unquantized_channel() {
        // Identity channel, negligible noise: ȳ equals the symbol signs and ZF
        // slicing returns the transmitted points exactly.
        let h = ChannelMatrix::new(DMatrix::identity(4, 4));
        let cons = Constellation::new(Modulation::Qpsk);
        let comb = build_combiner(CombinerKind::Zf, &h, 1e-9).unwrap();
        let mut rng = rng::seeded(40);
        for _ in 0..100 {
            let x = random_symbols(&cons, 4, &mut rng);
            let s = transmit(&h, &x, 1e-9, &mut rng);
            let (_, hard) = detect_linear(&comb, &s.y, &cons);
            assert_eq!(hard, x);
        }
    }

    /// AQNM-MMSE and WFQ differ by an exact positive scalar, so their decisions
    /// coincide essentially always.
    #[test]
    fn aqnm_mmse_and_wfq_agree_on_decisions() {
        let cons = Constellation::new(Modulation::Qpsk);
        let n0 = 0.01; // 20 dB
        let mut rng = rng::seeded(50);
        let trials = 500;
        let mut agree = 0;
        for t in 0..trials {
            let h = random_channel(16, 2, 1000 + t);
            let x = random_symbols(&cons, 2, &mut rng);
            let s = transmit(&h, &x, n0, &mut rng);
            let a = build_combiner(CombinerKind::AqnmMmse, &h, n0).unwrap();
            let w = build_combiner(CombinerKind::Wfq, &h, n0).unwrap();
            let (_, da) = detect_linear(&a, &s.y, &cons);
            let (_, dw) = detect_linear(&w, &s.y, &cons);
            if da == dw {
                agree += 1;
            }
        }
        assert!(
            agree as f64 >= 0.99 * trials as f64,
            "AQNM-MMSE and WFQ agreed on only {agree}/{trials} trials"
        );
    }

    /// With equal receive power per antenna, diag(Σ_r̄) is a multiple of I and
    /// the Bussgang variants collapse to positive multiples of their
    /// conventional counterparts — identical decisions.
    #[test]
    fn equal_row_power_collapses_bussgang_to_conventional() {
        let cons = Constellation::new(Modulation::Qpsk);
        let mut rng = rng::seeded(60);
        for trial in 0..20u64 {
            let mut hm = random_channel(6, 2, 70 + trial).complex().clone();
            for i in 0..6 {
                let norm = hm.row(i).norm();
                for j in 0..2 {
                    hm[(i, j)] *= Complex64::new(1.3 / norm, 0.0);
                }
            }
            let h = ChannelMatrix::new(hm);
            let n0 = 0.2;
            let y = one_bit_quantize(&rng::complex_gaussian_vector(&mut rng, 6, 1.0));
            for (plain, buss) in [
                (CombinerKind::Mrc, CombinerKind::Bmrc),
                (CombinerKind::Zf, CombinerKind::Bzf),
            ] {
                let cp = build_combiner(plain, &h, n0).unwrap();
                let cb = build_combiner(buss, &h, n0).unwrap();
                let (_, dp) = detect_linear(&cp, &y, &cons);
                let (_, db) = detect_linear(&cb, &y, &cons);
                assert_eq!(dp, db, "trial {trial}: {plain} vs {buss}");
            }
        }
    }

    #[test]
    fn combiner_rejects_underdetermined_systems() {
        // Two antennas, three users; built directly since random sampling
        // refuses such shapes outright.
        let h = ChannelMatrix::new(DMatrix::from_element(2, 3, Complex64::new(1.0, 0.0)));
        assert!(matches!(
            build_combiner(CombinerKind::Zf, &h, 0.1),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn handcrafted_mmse_matches_formula() {
        let h = ChannelMatrix::new(dmatrix![
            Complex64::new(1.0, 0.5), Complex64::new(-0.2, 0.1);
            Complex64::new(0.3, -0.7), Complex64::new(0.9, 0.0);
            Complex64::new(-0.4, 0.2), Complex64::new(0.1, 1.1);
        ]);
        let n0 = 0.3;
        let c = build_combiner(CombinerKind::Mmse, &h, n0).unwrap();
        let hm = h.complex();
        let want = (hm.adjoint() * hm + DMatrix::identity(2, 2) * Complex64::new(n0, 0.0))
            .try_inverse()
            .unwrap()
            * hm.adjoint();
        assert!((c.w.clone() - want).iter().all(|e| e.norm() < 1e-12));
    }

    #[test]
    fn lifted_y_matches_complex_signs() {
        let mut rng = rng::seeded(61);
        let r = rng::complex_gaussian_vector(&mut rng, 5, 1.0);
        let y = one_bit_quantize(&r);
        let yl = lift_vector(&y);
        assert!(yl.iter().all(|&v| v == 1.0 || v == -1.0));
    }
}
