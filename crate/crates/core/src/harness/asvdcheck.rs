//! Randomized self-check of the analytic SVD rates against central
//! differences, used by the `asvd-check` subcommand.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::asvd::{
    asvd_rates, corollary_residuals, full_rates, rates_accel, structured_svd,
    structured_svd_aligned, StructuredSvd,
};
use crate::error::Result;
use crate::lincore::{Mat, DEFAULT_RANK_TOL};

/// Finite-difference steps; each halves the previous one.
pub const FD_STEPS: [f64; 3] = [2e-2, 1e-2, 5e-3];

/// Matrix polynomial `H(t) = A(t)B(t)ᵀ` with quadratic factor entries,
/// of rank `k` for generic `t`.
#[derive(Debug, Clone)]
pub struct PolyMatrix {
    a: [Mat; 3],
    b: [Mat; 3],
}

impl PolyMatrix {
    pub fn random<R: Rng>(rng: &mut R, l: usize, p: usize, k: usize) -> Self {
        let mut m = |r: usize, c: usize| Mat::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0));
        PolyMatrix {
            a: [m(l, k), m(l, k), m(l, k)],
            b: [m(p, k), m(p, k), m(p, k)],
        }
    }

    fn factor(c: &[Mat; 3], t: f64) -> (Mat, Mat) {
        (
            &c[0] + &c[1] * t + &c[2] * (t * t),
            &c[1] + &c[2] * (2.0 * t),
        )
    }

    pub fn at(&self, t: f64) -> Mat {
        let (a, _) = Self::factor(&self.a, t);
        let (b, _) = Self::factor(&self.b, t);
        a * b.transpose()
    }

    pub fn dot(&self, t: f64) -> Mat {
        let (a, ad) = Self::factor(&self.a, t);
        let (b, bd) = Self::factor(&self.b, t);
        ad * b.transpose() + a * bd.transpose()
    }
}

/// Outcome of [`asvd_check`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AsvdCheckReport {
    pub samples: usize,
    pub seed: u64,
    /// Convergence order of the summed finite-difference discrepancy.
    pub observed_order: f64,
    /// Smallest per-sample order over the two step halvings.
    pub min_sample_order: f64,
    pub median_sample_order: f64,
    pub max_skew_residual: f64,
    /// Largest `‖T₂H₁‖`, `‖T₂Ḣ₁‖`, `‖T₂Ḧ₁‖` over the samples.
    pub max_corollary_residuals: [f64; 3],
    pub rejected_draws: usize,
}

/// Smallest singular value and singular value gap accepted for a draw. The
/// factor entries are of unit size, so these keep every singular value
/// simple and away from zero over the finite-difference stencil.
pub const MIN_SIGMA: f64 = 0.2;
pub const MIN_GAP: f64 = 0.1;

fn well_separated(f: &StructuredSvd) -> bool {
    let gap = f
        .sigma
        .windows(2)
        .map(|w| w[0] - w[1])
        .fold(f64::INFINITY, f64::min);
    f.p_h > 0 && f.sigma[f.p_h - 1] > MIN_SIGMA && gap > MIN_GAP
}

/// True when the singular values stay separated over the widest stencil
/// and each singular vector pair moves continuously, so the aligned
/// factorizations at `t ± δ` belong to the same analytic branch.
fn stencil_is_smooth(h: &PolyMatrix, f0: &StructuredSvd, t: f64) -> Result<bool> {
    for s in [-FD_STEPS[0], FD_STEPS[0]] {
        let f = structured_svd_aligned(&h.at(t + s), DEFAULT_RANK_TOL, f0)?;
        if f.p_h != f0.p_h || !well_separated(&f) {
            return Ok(false);
        }
        let turned = (0..f.p_h).any(|j| {
            f.u1.column(j).dot(&f0.u1.column(j)) < 0.9 || f.v1.column(j).dot(&f0.v1.column(j)) < 0.9
        });
        if turned {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Discrepancy between analytic and central-difference rates of `U₁`, `V₁`
/// and `σ` at `t` with step `delta`.
fn fd_discrepancy(
    h: &PolyMatrix,
    f0: &StructuredSvd,
    rates: &crate::asvd::AsvdRates,
    t: f64,
    delta: f64,
) -> Result<f64> {
    let fp = structured_svd_aligned(&h.at(t + delta), DEFAULT_RANK_TOL, f0)?;
    let fm = structured_svd_aligned(&h.at(t - delta), DEFAULT_RANK_TOL, f0)?;
    let du = (&fp.u1 - &fm.u1) / (2.0 * delta) - &rates.u1_dot;
    let dv = (&fp.v1 - &fm.v1) / (2.0 * delta) - &rates.v1_dot;
    let ds: f64 = fp
        .sigma
        .iter()
        .zip(&fm.sigma)
        .zip(&rates.sigma_dot)
        .map(|((a, b), r)| ((a - b) / (2.0 * delta) - r).powi(2))
        .sum();
    Ok((du.norm_squared() + dv.norm_squared() + ds).sqrt())
}

/// Check `samples` random polynomial `H(t)` with simple singular values.
pub fn asvd_check(samples: usize, seed: u64) -> Result<AsvdCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut totals = [0.0; FD_STEPS.len()];
    let mut orders = Vec::with_capacity(samples);
    let mut skew: f64 = 0.0;
    let mut cor = [0.0f64; 3];
    let mut rejected = 0;
    let mut done = 0;
    while done < samples {
        let l = rng.random_range(2..=4);
        let p = rng.random_range(1..=l);
        let k = rng.random_range(1..=p);
        let h = PolyMatrix::random(&mut rng, l, p, k);
        let t: f64 = rng.random_range(0.0..1.0);
        let f0 = structured_svd(&h.at(t), DEFAULT_RANK_TOL)?;
        if f0.p_h != k || !well_separated(&f0) || !stencil_is_smooth(&h, &f0, t)? {
            rejected += 1;
            continue;
        }
        let gap = f0.default_gap_tol();
        let full = full_rates(&f0, &h.dot(t), gap)?;
        let inner = asvd_rates(&f0, &h.dot(t), gap)?;
        skew = skew
            .max((&inner.e + inner.e.transpose()).norm())
            .max((&inner.f + inner.f.transpose()).norm());
        let acc = rates_accel(|s| h.at(s), |s| h.dot(s), t, 1e-4, DEFAULT_RANK_TOL)?;
        let res = corollary_residuals(&f0, &inner, &acc, &f0.u2.transpose());
        for i in 0..3 {
            cor[i] = cor[i].max(res[i]);
        }
        let errs: Vec<f64> = FD_STEPS
            .iter()
            .map(|&d| fd_discrepancy(&h, &f0, &full, t, d))
            .collect::<Result<_>>()?;
        for (tot, e) in totals.iter_mut().zip(&errs) {
            *tot += e;
        }
        let sample_order = errs
            .windows(2)
            .map(|w| (w[0] / w[1]).log2())
            .fold(f64::INFINITY, f64::min);
        orders.push(sample_order);
        done += 1;
    }
    let observed_order = totals
        .windows(2)
        .map(|w| (w[0] / w[1]).log2())
        .fold(f64::INFINITY, f64::min);
    orders.sort_by(|a, b| a.total_cmp(b));
    Ok(AsvdCheckReport {
        samples,
        seed,
        observed_order,
        min_sample_order: orders.first().copied().unwrap_or(f64::NAN),
        median_sample_order: orders.get(orders.len() / 2).copied().unwrap_or(f64::NAN),
        max_skew_residual: skew,
        max_corollary_residuals: cor,
        rejected_draws: rejected,
    })
}
