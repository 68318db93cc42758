//! Maximum-likelihood detection from one-bit observations, in the real lifted
//! domain, plus the sigmoid-based robust reformulation.
//!
//! With `y = sign(Hx + z) ∈ {±1}^{2N}` and per-row channel estimate ĥ_n, the
//! log-likelihood of a candidate x is `Σ_n ln Φ(√(2ρ)·y_n·ĥ_nᵀx)`. Folding the
//! signs into `G = diag(y)·Ĥ` and replacing Φ(t) by σ(1.702·t) (worst-case
//! error 0.0095) turns maximization into minimizing the smooth convex cost
//!
//! ```text
//! P(x) = Σ_n ln(1 + exp(−c√(2ρ)·g_nᵀx)),   c = 1.702,
//! ∇P(x) = −c√(2ρ)·Gᵀ σ(−c√(2ρ)·Gx),
//! ```
//!
//! whose linear (rather than quadratic) growth on mispredicted rows is what
//! makes the detector robust to channel-estimate errors. [`exact_search`] is
//! the brute-force reference over all |constellation|^K candidates, and
//! [`gd_solve`] iterates plain gradient descent with supplied step sizes —
//! the continuous prototype of the unfolded network in [`crate::obmnet`].

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::channel::{lift_vector, ChannelMatrix};
use crate::constellation::Constellation;
use crate::math::{log_phi, sigmoid, softplus, SIGMOID_SLOPE};
use crate::{Error, Result};

/// Largest candidate count [`exact_search`] will enumerate.
pub const EXACT_SEARCH_LIMIT: u64 = 1 << 20;

/// One detection instance: sign-folded channel `G = diag(y)·Ĥ`, the lifted
/// channel estimate, and the SNR.
#[derive(Clone, Debug)]
pub struct MlProblem {
    /// Sign-folded effective channel, 2N×2K.
    pub g: DMatrix<f64>,
    /// Lifted channel estimate Ĥ, 2N×2K.
    pub h_hat: DMatrix<f64>,
    /// SNR ρ = 1/N0.
    pub rho: f64,
    /// Sigmoid slope of the CDF approximation.
    pub c: f64,
}

impl MlProblem {
    /// Build from a lifted channel estimate and a ±1 observation vector.
    pub fn new(h_hat: DMatrix<f64>, y: &DVector<f64>, rho: f64) -> Result<Self> {
        if y.len() != h_hat.nrows() {
            return Err(Error::Dimension(format!(
                "observation length {} does not match 2N = {}",
                y.len(),
                h_hat.nrows()
            )));
        }
        if !y.iter().all(|&v| v == 1.0 || v == -1.0) {
            return Err(Error::Dimension("observations must be ±1 signs".into()));
        }
        if !(rho > 0.0) {
            return Err(Error::Config(format!("SNR must be positive, got {rho}")));
        }
        let mut g = h_hat.clone();
        for (n, mut row) in g.row_iter_mut().enumerate() {
            row *= y[n];
        }
        Ok(MlProblem { g, h_hat, rho, c: SIGMOID_SLOPE })
    }

    /// Build from complex-domain quantities (observation ȳ ∈ {±1±j}^N).
    pub fn from_complex(h_hat: &ChannelMatrix, y: &DVector<Complex64>, rho: f64) -> Result<Self> {
        MlProblem::new(h_hat.lifted().clone(), &lift_vector(y), rho)
    }

    /// Combined argument scale `c·√(2ρ)` of the robust cost.
    pub fn scale(&self) -> f64 {
        self.c * (2.0 * self.rho).sqrt()
    }

    /// Number of users K (half the lifted column count).
    pub fn k_users(&self) -> usize {
        self.g.ncols() / 2
    }
}

/// Exact log-likelihood `Σ_n ln Φ(√(2ρ)·g_nᵀx)` — larger is better.
pub fn conventional_ml_objective(p: &MlProblem, x: &DVector<f64>) -> f64 {
    let s = (2.0 * p.rho).sqrt();
    (&p.g * x).iter().map(|&m| log_phi(s * m)).sum()
}

/// Robust surrogate cost `P(x) = Σ_n softplus(−c√(2ρ)·g_nᵀx)` — smaller is better.
pub fn robust_ml_objective(p: &MlProblem, x: &DVector<f64>) -> f64 {
    let s = p.scale();
    (&p.g * x).iter().map(|&m| softplus(-s * m)).sum()
}

/// Gradient of the robust cost, `∇P(x) = −c√(2ρ)·Gᵀσ(−c√(2ρ)·Gx)`.
pub fn robust_gradient(p: &MlProblem, x: &DVector<f64>) -> DVector<f64> {
    let s = p.scale();
    let mut w = &p.g * x;
    w.apply(|m| *m = sigmoid(-s * *m));
    p.g.tr_mul(&w) * (-s)
}

/// Minimize `objective` over every length-`k` symbol vector by exhaustive
/// enumeration. The objective receives candidates in lifted real form
/// `[Re x; Im x]`. Ties keep the earlier candidate in enumeration order
/// (points in constellation order, user 0 the most significant digit).
pub fn exact_search<F>(
    mut objective: F,
    constellation: &Constellation,
    k: usize,
) -> Result<DVector<Complex64>>
where
    F: FnMut(&[f64]) -> f64,
{
    assert!(k > 0, "need at least one user");
    let points = constellation.points();
    let p = points.len() as u64;
    let total = p
        .checked_pow(k as u32)
        .filter(|&t| t <= EXACT_SEARCH_LIMIT)
        .ok_or(Error::SearchSpaceTooLarge {
            size: p.checked_pow(k as u32).unwrap_or(u64::MAX),
            limit: EXACT_SEARCH_LIMIT,
        })?;

    let mut lifted = vec![0.0; 2 * k];
    let mut digits = vec![0usize; k];
    let mut best_score = f64::INFINITY;
    let mut best = vec![points[0]; k];
    for idx in 0..total {
        let mut rem = idx;
        for u in (0..k).rev() {
            digits[u] = (rem % p) as usize;
            rem /= p;
        }
        for u in 0..k {
            let pt = points[digits[u]];
            lifted[u] = pt.re;
            lifted[u + k] = pt.im;
        }
        let score = objective(&lifted);
        if score < best_score {
            best_score = score;
            for u in 0..k {
                best[u] = points[digits[u]];
            }
        }
    }
    Ok(DVector::from_vec(best))
}

/// Plain gradient descent on the robust cost from `x = 0`, one supplied step
/// size per iteration. Returns the final continuous iterate.
pub fn gd_solve(p: &MlProblem, step_sizes: &[f64]) -> DVector<f64> {
    let mut x = DVector::zeros(p.g.ncols());
    for &alpha in step_sizes {
        let g = robust_gradient(p, &x);
        x -= g * alpha;
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{random_symbols, transmit, ChannelMatrix};
    use crate::constellation::Modulation;
    use crate::linear::{build_combiner, detect_linear, CombinerKind};
    use crate::math::normal_cdf;
    use crate::rng;

    fn random_problem(n: usize, k: usize, rho: f64, seed: u64) -> (MlProblem, DVector<Complex64>) {
        let mut rng = rng::seeded(seed);
        let h = ChannelMatrix::sample(n, k, &mut rng);
        let cons = Constellation::new(Modulation::Qpsk);
        let x = random_symbols(&cons, k, &mut rng);
        let s = transmit(&h, &x, 1.0 / rho, &mut rng);
        (MlProblem::from_complex(&h, &s.y, rho).unwrap(), x)
    }

    #[test]
    fn g_rows_are_signed_channel_rows() {
        let (p, _) = random_problem(4, 2, 10.0, 1);
        for n in 0..p.g.nrows() {
            let plus: f64 = (p.g.row(n) - p.h_hat.row(n)).amax();
            let minus: f64 = (p.g.row(n) + p.h_hat.row(n)).amax();
            assert!(plus == 0.0 || minus == 0.0, "row {n} must be ±(Ĥ row)");
        }
    }

    #[test]
    fn conventional_objective_at_zero_is_all_coin_flips() {
        let (p, _) = random_problem(4, 2, 10.0, 2);
        let v = conventional_ml_objective(&p, &DVector::zeros(4));
        assert!((v - 8.0 * 0.5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn conventional_objective_flattens_as_snr_vanishes() {
        let (mut p, _) = random_problem(4, 2, 10.0, 3);
        p.rho = 1e-300;
        let a = conventional_ml_objective(&p, &DVector::from_element(4, 1.0));
        let b = conventional_ml_objective(&p, &DVector::from_element(4, -1.0));
        assert!((a - b).abs() < 1e-9);
        assert!((a - 8.0 * 0.5f64.ln()).abs() < 1e-6);
    }

    #[test]
    fn log_domain_argmax_equals_product_domain_argmax() {
        let cons = Constellation::new(Modulation::Qpsk);
        for seed in 0..50u64 {
            let (p, _) = random_problem(2, 1, 5.0, 100 + seed);
            let s = (2.0 * p.rho).sqrt();
            let by_log = exact_search(|x| -conventional_ml_objective(&p, &DVector::from_column_slice(x)), &cons, 1)
                .unwrap();
            let by_product = exact_search(
                |x| {
                    let xv = DVector::from_column_slice(x);
                    -(&p.g * xv).iter().map(|&m| normal_cdf(s * m)).product::<f64>()
                },
                &cons,
                1,
            )
            .unwrap();
            assert_eq!(by_log, by_product, "seed {seed}");
        }
    }

    #[test]
    fn robust_objective_at_zero_is_2n_ln2() {
        let (p, _) = random_problem(8, 2, 10.0, 4);
        let v = robust_ml_objective(&p, &DVector::zeros(4));
        assert!((v - 16.0 * 2f64.ln()).abs() < 1e-12);
    }

    /// At perfect CSI the robust surrogate and the exact likelihood pick the
    /// same candidate nearly always.
    #[test]
    fn robust_and_conventional_argmins_agree() {
        let cons = Constellation::new(Modulation::Qpsk);
        let rho = 10.0; // 10 dB
        let instances = 200;
        let mut agree = 0;
        for seed in 0..instances {
            let (p, _) = random_problem(16, 2, rho, 500 + seed);
            let a = exact_search(|x| -conventional_ml_objective(&p, &DVector::from_column_slice(x)), &cons, 2)
                .unwrap();
            let b = exact_search(|x| robust_ml_objective(&p, &DVector::from_column_slice(x)), &cons, 2)
                .unwrap();
            if a == b {
                agree += 1;
            }
        }
        assert!(
            agree as f64 >= 0.98 * instances as f64,
            "objectives agreed on only {agree}/{instances} instances"
        );
    }

    #[test]
    fn gradient_at_zero_has_closed_form() {
        let (p, _) = random_problem(6, 2, 8.0, 5);
        let g0 = robust_gradient(&p, &DVector::zeros(4));
        let want = p.g.tr_mul(&DVector::from_element(12, 1.0)) * (-0.5 * p.scale());
        assert!((g0 - want).norm() < 1e-12);
    }

    #[test]
    fn gradient_matches_central_differences() {
        for seed in 0..10u64 {
            let (p, _) = random_problem(8, 2, 10.0, 20 + seed);
            let mut rng = rng::seeded(900 + seed);
            let x = DVector::from_fn(4, |_, _| rng::complex_gaussian(&mut rng, 1.0).re * 2.0);
            let g = robust_gradient(&p, &x);
            let h = 1e-5;
            let mut fd = DVector::zeros(4);
            for i in 0..4 {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[i] += h;
                xm[i] -= h;
                fd[i] = (robust_ml_objective(&p, &xp) - robust_ml_objective(&p, &xm)) / (2.0 * h);
            }
            let rel = (g.clone() - &fd).norm() / g.norm();
            assert!(rel < 1e-6, "seed {seed}: rel error {rel:.2e}");
        }
    }

    #[test]
    fn gradient_vanishes_when_every_row_is_saturated() {
        // All rows of G positive: at a large positive multiple of 1 every
        // sigmoid argument is a deep negative, so the gradient is ~0.
        let h_hat = DMatrix::from_element(8, 2, 1.0)
            + DMatrix::from_fn(8, 2, |i, j| 0.1 * ((i + 2 * j) as f64).sin());
        let y = DVector::from_element(8, 1.0);
        let p = MlProblem::new(h_hat, &y, 50.0).unwrap();
        let x = DVector::from_element(2, 40.0);
        assert!(robust_gradient(&p, &x).norm() < 1e-12);
    }

    #[test]
    fn exact_search_visits_every_candidate_once() {
        let cons = Constellation::new(Modulation::Qpsk);
        let mut evals = 0usize;
        let _ = exact_search(
            |_| {
                evals += 1;
                0.0
            },
            &cons,
            1,
        )
        .unwrap();
        assert_eq!(evals, 4);
    }

    #[test]
    fn exact_search_rejects_untractable_spaces() {
        let cons = Constellation::new(Modulation::Qam16);
        // 16^6 = 2^24 candidates is past the 2^20 guard.
        let r = exact_search(|_| 0.0, &cons, 6);
        assert!(matches!(r, Err(Error::SearchSpaceTooLarge { .. })));
        // 16^5 = 2^20 sits exactly on the limit and is allowed.
        assert!(exact_search(|x| x[0], &cons, 5).is_ok());
    }

    #[test]
    fn exact_ml_is_consistent_in_the_noiseless_limit() {
        let cons = Constellation::new(Modulation::Qpsk);
        let rho = 1e6;
        let trials = 200;
        let mut hits = 0;
        for t in 0..trials {
            let mut rng = rng::seeded(3000 + t);
            let h = ChannelMatrix::sample(64, 2, &mut rng);
            let x = random_symbols(&cons, 2, &mut rng);
            let s = transmit(&h, &x, 1.0 / rho, &mut rng);
            let p = MlProblem::from_complex(&h, &s.y, rho).unwrap();
            let xh = exact_search(|v| -conventional_ml_objective(&p, &DVector::from_column_slice(v)), &cons, 2)
                .unwrap();
            if xh == x {
                hits += 1;
            }
        }
        assert!(hits as f64 >= 0.99 * trials as f64, "recovered {hits}/{trials}");
    }

    /// On a heavily loaded system (K=4, N=8) where every receiver makes
    /// frequent errors, the exact ML detector beats each linear receiver on
    /// vector error rate.
    #[test]
    fn exact_ml_beats_linear_receivers_when_stressed() {
        let cons = Constellation::new(Modulation::Qpsk);
        let n0 = 10f64.powf(-1.5); // 15 dB
        let rho = 1.0 / n0;
        let trials = 4000u64;
        let mut ml_err = 0u64;
        let mut lin_err = [0u64; 8];
        for t in 0..trials {
            let mut rng = rng::trial_rng(77, 0, t);
            let h = ChannelMatrix::sample(8, 4, &mut rng);
            let x = random_symbols(&cons, 4, &mut rng);
            let s = transmit(&h, &x, n0, &mut rng);
            let p = MlProblem::from_complex(&h, &s.y, rho).unwrap();
            let xh = exact_search(|v| -conventional_ml_objective(&p, &DVector::from_column_slice(v)), &cons, 4)
                .unwrap();
            if xh != x {
                ml_err += 1;
            }
            for (i, kind) in CombinerKind::ALL.iter().enumerate() {
                let comb = build_combiner(*kind, &h, n0).unwrap();
                let (_, hard) = detect_linear(&comb, &s.y, &cons);
                if hard != x {
                    lin_err[i] += 1;
                }
            }
        }
        for (i, kind) in CombinerKind::ALL.iter().enumerate() {
            assert!(
                ml_err < lin_err[i],
                "ML ({ml_err} vector errors) should beat {kind} ({} errors)",
                lin_err[i]
            );
        }
    }

    #[test]
    fn gd_with_no_steps_stays_at_zero() {
        let (p, _) = random_problem(8, 2, 10.0, 6);
        assert_eq!(gd_solve(&p, &[]), DVector::zeros(4));
        assert_eq!(gd_solve(&p, &[0.0; 5]), DVector::zeros(4));
    }

    #[test]
    fn gd_with_small_steps_descends_monotonically() {
        for seed in 0..20u64 {
            let (p, _) = random_problem(16, 2, 10.0, 40 + seed);
            let mut x = DVector::zeros(4);
            let mut prev = robust_ml_objective(&p, &x);
            for _ in 0..100 {
                x -= robust_gradient(&p, &x) * 1e-3;
                let cur = robust_ml_objective(&p, &x);
                assert!(cur < prev, "seed {seed}: cost rose from {prev} to {cur}");
                prev = cur;
            }
        }
    }

    #[test]
    fn problem_construction_validates_inputs() {
        let h = DMatrix::from_element(4, 2, 1.0);
        let bad_y = DVector::from_vec(vec![1.0, -1.0, 0.5, 1.0]);
        assert!(MlProblem::new(h.clone(), &bad_y, 1.0).is_err());
        let y3 = DVector::from_element(3, 1.0);
        assert!(MlProblem::new(h.clone(), &y3, 1.0).is_err());
        let y = DVector::from_element(4, 1.0);
        assert!(MlProblem::new(h, &y, -1.0).is_err());
    }
}
