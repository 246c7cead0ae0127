//! Stability, observability, convergence-rate and consistency diagnostics
//! for the estimators.
//!
//! Everything here is a pure function of matrices or recorded
//! trajectories. The results serialize to JSON for the analysis report.

use nalgebra::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::asvd::structured_svd;
use crate::elise::{EliseGains, NoiseProjections};
use crate::error::{LiseError, Result};
use crate::lincore::{
    complex_rank, eig, hstack, max_eigenvalue, min_eigenvalue, norm2, pinv, psd_sqrt, rk4_step,
    solve_lyapunov, spd_inv, symmetrize, vstack, Mat, Vector, DEFAULT_RANK_TOL,
};
use crate::sysmodel::{decouple_at, DecoupledSystem, SystemAt, SystemDerivs};

/// Integrand norm below which the infinite-horizon integral for `S` is
/// truncated.
pub const S_TRUNCATION: f64 = 1e-12;

/// Noise-free system seen by the state-error dynamics once the unknown
/// input has been eliminated and `w̄` has been decorrelated from `v₂`.
///
/// `ẋ_e = A_e x_e + u_e + w_e`, `y_e = C₂x_e + v₂` with
/// `u_e = K_e y_e`, `w_e = w̄ − K_e v₂` and `K_e = −G₂M₂R̀₂ᵀR₂⁻¹`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquivalentSystem {
    #[serde(serialize_with = "ser_mat")]
    pub ae: Mat,
    #[serde(serialize_with = "ser_mat")]
    pub qe: Mat,
    #[serde(serialize_with = "ser_mat")]
    pub abar: Mat,
    #[serde(serialize_with = "ser_mat")]
    pub qbar: Mat,
    /// `K_e`, the gain mapping `y_e` to the known input `u_e`.
    #[serde(serialize_with = "ser_mat")]
    pub ue_gain: Mat,
}

/// Equivalent input-free system of the estimator.
///
/// `A_e = Ā − K_eC₂` and `Q_e = Q̄ − G₂M₂R̀₂ᵀR₂⁻¹R̀₂M₂ᵀG₂ᵀ`, so that the
/// Riccati equation of the estimator is the standard Kalman–Bucy
/// equation of `(A_e, C₂, Q_e, R₂)`.
pub fn equivalent_system(
    g: &EliseGains,
    dec: &DecoupledSystem,
    proj: &NoiseProjections,
) -> Result<EquivalentSystem> {
    let n = g.abar.nrows();
    if dec.c2.nrows() == 0 {
        return Ok(EquivalentSystem {
            ae: g.abar.clone(),
            qe: g.qbar.clone(),
            abar: g.abar.clone(),
            qbar: g.qbar.clone(),
            ue_gain: Mat::zeros(n, 0),
        });
    }
    let r2inv = spd_inv(&proj.r2)
        .ok_or_else(|| LiseError::InvalidNoise("R2 is not positive definite".into()))?;
    let cross = &dec.g2 * &g.m2 * proj.rgrave2.transpose();
    let ue_gain = -(&cross * &r2inv);
    let ae = &g.abar - &ue_gain * &dec.c2;
    let qe = symmetrize(&(&g.qbar - &cross * &r2inv * cross.transpose()));
    Ok(EquivalentSystem {
        ae,
        qe,
        abar: g.abar.clone(),
        qbar: g.qbar.clone(),
        ue_gain,
    })
}

/// Extreme eigenvalues of a windowed Gramian over a time grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GramianReport {
    pub epsilon: f64,
    /// Infimum over the grid of the smallest Gramian eigenvalue.
    pub mu1: f64,
    /// Supremum over the grid of the largest Gramian eigenvalue.
    pub mu2: f64,
    pub controllable: bool,
    pub observable: bool,
}

/// Windowed Gramian `∫_{t−ε}^{t} Φ(t,s)Y(s)Y(s)ᵀΦ(t,s)ᵀ ds`, obtained by
/// integrating `Ẇ = XW + WXᵀ + YYᵀ` from zero over the window.
pub fn windowed_gramian(
    x: &dyn Fn(f64) -> Mat,
    y: &dyn Fn(f64) -> Mat,
    t: f64,
    epsilon: f64,
    steps: usize,
) -> Result<Mat> {
    let n = x(t).nrows();
    let h = epsilon / steps as f64;
    let mut w = Mat::zeros(n, n);
    let mut rhs = |s: f64, w: &Mat| -> Result<Mat> {
        let a = x(s);
        let b = y(s);
        Ok(&a * w + w * a.transpose() + &b * b.transpose())
    };
    let t0 = t - epsilon;
    for k in 0..steps {
        w = rk4_step(&mut rhs, t0 + k as f64 * h, &w, h)?;
    }
    Ok(symmetrize(&w))
}

fn gramian_extremes(
    x: &dyn Fn(f64) -> Mat,
    y: &dyn Fn(f64) -> Mat,
    epsilon: f64,
    grid: &[f64],
) -> Result<(f64, f64)> {
    if !(epsilon > 0.0) {
        return Err(LiseError::InvalidInput(
            "Gramian window must be positive".into(),
        ));
    }
    let (mut mu1, mut mu2) = (f64::INFINITY, 0.0f64);
    for &t in grid {
        let w = windowed_gramian(x, y, t, epsilon, 200)?;
        mu1 = mu1.min(min_eigenvalue(&w));
        mu2 = mu2.max(max_eigenvalue(&w));
    }
    if grid.is_empty() {
        mu1 = 0.0;
    }
    Ok((mu1.max(0.0), mu2))
}

fn positive_margin(mu1: f64, mu2: f64) -> bool {
    mu1 > 1e-10 * mu2.max(1.0)
}

/// Uniform complete controllability check of `(X(t), Y(t))` on a grid.
pub fn gramian_bounds(
    x: &dyn Fn(f64) -> Mat,
    y: &dyn Fn(f64) -> Mat,
    epsilon: f64,
    grid: &[f64],
) -> Result<GramianReport> {
    let (mu1, mu2) = gramian_extremes(x, y, epsilon, grid)?;
    Ok(GramianReport {
        epsilon,
        mu1,
        mu2,
        controllable: positive_margin(mu1, mu2),
        observable: false,
    })
}

/// Uniform complete observability check of `(X(t), Z(t))` through the
/// controllability Gramian of the dual pair `(Xᵀ, Zᵀ)`.
pub fn observability_bounds(
    x: &dyn Fn(f64) -> Mat,
    z: &dyn Fn(f64) -> Mat,
    epsilon: f64,
    grid: &[f64],
) -> Result<GramianReport> {
    let xt = |t: f64| x(t).transpose();
    let zt = |t: f64| z(t).transpose();
    let (mu1, mu2) = gramian_extremes(&xt, &zt, epsilon, grid)?;
    Ok(GramianReport {
        epsilon,
        mu1,
        mu2,
        controllable: false,
        observable: positive_margin(mu1, mu2),
    })
}

/// Outcome of the strong-observability rank test.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrongObservability {
    /// `rk[sI−A, −G; C, H] = n + p` at every probe point.
    pub strongly_observable: bool,
    /// Same test through `rk[sI−Ā, −G₂; C₂, 0] + p_H`.
    pub reduced_form: bool,
    /// Smallest rank found with the full pencil.
    pub min_rank: usize,
    pub probes: usize,
}

fn shifted(a: &Mat, s: Complex<f64>) -> (Mat, Mat) {
    let n = a.nrows();
    let eye = Mat::identity(n, n);
    (&eye * s.re - a, &eye * s.im)
}

/// `rank [sI − A, −G; C, H]` over the complex field.
pub fn pencil_rank(a: &Mat, g: &Mat, c: &Mat, h: &Mat, s: Complex<f64>) -> usize {
    let (re_a, im_a) = shifted(a, s);
    let neg_g = -g;
    let re = vstack(&[&hstack(&[&re_a, &neg_g]), &hstack(&[c, h])]);
    let zg = Mat::zeros(g.nrows(), g.ncols());
    let zc = Mat::zeros(c.nrows(), c.ncols());
    let zh = Mat::zeros(h.nrows(), h.ncols());
    let im = vstack(&[&hstack(&[&im_a, &zg]), &hstack(&[&zc, &zh])]);
    complex_rank(&re, &im, DEFAULT_RANK_TOL)
}

/// Probe points: every eigenvalue of `A` and `extra` seeded random points.
pub fn probe_points(a: &Mat, extra: usize, seed: u64) -> Vec<Complex<f64>> {
    let mut pts = eig(a).eigenvalues;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 1.0 + norm2(a);
    for _ in 0..extra {
        pts.push(Complex::new(
            rng.random_range(-scale..scale),
            rng.random_range(-scale..scale),
        ));
    }
    pts
}

/// Reduced pencil `[sI − Ā, −G₂; C₂, 0]` with `Â = A − G₁Σ⁻¹C₁`,
/// `Ā = (I − G₂M₂C₂)Â` for the left inverse `M₂ = (C₂G₂)†`.
fn reduced_pencil(dec: &DecoupledSystem) -> (Mat, Mat, Mat, Mat) {
    let n = dec.sys.a.nrows();
    let ahat = &dec.sys.a - &dec.g1 * dec.m1() * &dec.c1;
    let m2 = pinv(&(&dec.c2 * &dec.g2), DEFAULT_RANK_TOL);
    let abar = (Mat::identity(n, n) - &dec.g2 * m2 * &dec.c2) * ahat;
    let h0 = Mat::zeros(dec.c2.nrows(), dec.g2.ncols());
    (abar, dec.g2.clone(), dec.c2.clone(), h0)
}

/// Strong observability of the time-invariant system `(A, G, C, H)`.
///
/// The rank of the system pencil can only drop at invariant zeros, which
/// are eigenvalues of the reduced matrix `Ā`; the probes are the
/// eigenvalues of `A` and `Ā` plus `extra` random points.
pub fn strong_observability(
    a: &Mat,
    g: &Mat,
    c: &Mat,
    h: &Mat,
    extra: usize,
    seed: u64,
) -> Result<StrongObservability> {
    let n = a.nrows();
    let p = g.ncols();
    let l = c.nrows();
    let svd = structured_svd(h, DEFAULT_RANK_TOL)?;
    let sys = SystemAt {
        t: 0.0,
        a: a.clone(),
        b: Mat::zeros(n, 0),
        g: g.clone(),
        c: c.clone(),
        d: Mat::zeros(l, 0),
        h: h.clone(),
        w: Mat::zeros(n, 0),
    };
    let dec = decouple_at(sys, &Mat::identity(l, l), svd)?;
    let (abar, g2, c2, h0) = reduced_pencil(&dec);
    let mut probes = probe_points(a, extra, seed);
    probes.extend(eig(&abar).eigenvalues);
    let mut min_rank = usize::MAX;
    let mut reduced_ok = true;
    for &s in &probes {
        min_rank = min_rank.min(pencil_rank(a, g, c, h, s));
        reduced_ok &= pencil_rank(&abar, &g2, &c2, &h0, s) + dec.p_h() == n + p;
    }
    Ok(StrongObservability {
        strongly_observable: min_rank == n + p,
        reduced_form: reduced_ok,
        min_rank,
        probes: probes.len(),
    })
}

/// PBH results for the equivalent system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PbhReport {
    pub detectable: bool,
    pub stabilizable: bool,
}

/// Hautus tests of `(A_e, C₂)` detectability and `(A_e, Q_e^{1/2})`
/// stabilizability at the eigenvalues with nonnegative real part.
pub fn pbh_tests(ae: &Mat, c2: &Mat, qe: &Mat) -> PbhReport {
    let n = ae.nrows();
    let qh = psd_sqrt(qe);
    let scale = 1.0 + norm2(ae);
    let mut detectable = true;
    let mut stabilizable = true;
    for s in eig(ae).eigenvalues {
        if s.re < -1e-9 * scale {
            continue;
        }
        let (re, im) = shifted(ae, s);
        let zc = Mat::zeros(c2.nrows(), n);
        if complex_rank(&vstack(&[&re, c2]), &vstack(&[&im, &zc]), DEFAULT_RANK_TOL) < n {
            detectable = false;
        }
        let zq = Mat::zeros(n, qh.ncols());
        if complex_rank(&hstack(&[&re, &qh]), &hstack(&[&im, &zq]), DEFAULT_RANK_TOL) < n {
            stabilizable = false;
        }
    }
    PbhReport {
        detectable,
        stabilizable,
    }
}

/// Exponential bias-decay constants of the estimator.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BiasBounds {
    /// `S` at the first grid time.
    #[serde(serialize_with = "ser_mat")]
    pub s: Mat,
    /// Infimum of `λ_min(S(t))` over the grid.
    pub s_min: f64,
    /// Supremum of `λ_max(S(t))` over the grid.
    pub s_max: f64,
    pub beta: f64,
    pub gamma: f64,
    pub alpha1: f64,
    /// `½ sup‖V₂M₂E[z̈₂]‖` over the simulated horizon (not a global sup).
    pub alpha2: Option<f64>,
    /// `sup|ζ|` over the simulated horizon (not a global sup).
    pub alpha3: Option<f64>,
}

/// `S` for a constant Hurwitz `Ă`: the solution of `ĂᵀS + SĂ = −I`.
pub fn lyapunov_s(abreve: &Mat) -> Result<Mat> {
    let spec = eig(abreve);
    if !spec.is_hurwitz() {
        return Err(LiseError::NoFiniteBound(format!(
            "error dynamics not stable (max Re λ = {:.3e})",
            spec.max_real_part
        )));
    }
    let n = abreve.nrows();
    solve_lyapunov(&abreve.transpose(), &Mat::identity(n, n))
}

/// `S(t) = ∫_t^∞ Φ(s,t)ᵀΦ(s,t) ds` for time-varying `Ă(t)`, by quadrature
/// of the transition matrix until the integrand drops below
/// [`S_TRUNCATION`] or `max_span` is exceeded.
pub fn quadrature_s(abreve: &dyn Fn(f64) -> Mat, t: f64, h: f64, max_span: f64) -> Result<Mat> {
    let n = abreve(t).nrows();
    let mut phi = Mat::identity(n, n);
    let mut s = Mat::zeros(n, n);
    let mut rhs = |tau: f64, p: &Mat| -> Result<Mat> { Ok(abreve(tau) * p) };
    let mut tau = t;
    let mut prev = &phi.transpose() * &phi;
    while tau - t < max_span {
        phi = rk4_step(&mut rhs, tau, &phi, h)?;
        tau += h;
        let cur = phi.transpose() * &phi;
        s += (&prev + &cur) * (0.5 * h);
        if cur.norm() < S_TRUNCATION {
            return Ok(symmetrize(&s));
        }
        prev = cur;
    }
    Err(LiseError::NoFiniteBound(format!(
        "transition matrix has not decayed after {max_span} time units"
    )))
}

/// `β = √(b₀ᵀS(t₀)b₀ / λ_min)` and `γ = 1 / (2λ_max)`.
pub fn beta_gamma(s0: &Mat, s_min: f64, s_max: f64, bias0: &Vector) -> (f64, f64) {
    let beta = ((bias0.transpose() * s0 * bias0)[(0, 0)] / s_min).sqrt();
    (beta, 1.0 / (2.0 * s_max))
}

/// `‖V₁M₁C₁‖ + ‖V₂M₂(C̄₂Â + T̄₂C̿)‖`, the factor mapping the state bias
/// into the input bias.
pub fn input_bias_gain(g: &EliseGains, dec: &DecoupledSystem) -> f64 {
    let a = if g.m1.nrows() == 0 {
        0.0
    } else {
        norm2(&(&dec.svd.v1 * &g.m1 * &dec.c1))
    };
    let b = if g.m2.nrows() == 0 {
        0.0
    } else {
        norm2(&(&dec.svd.v2 * &g.m2 * &g.cz))
    };
    a + b
}

/// Bias bounds for a constant error matrix `Ă = Ā − LC₂`.
pub fn bias_bounds_lti(abreve: &Mat, bias0: &Vector, input_gain: f64) -> Result<BiasBounds> {
    let s = lyapunov_s(abreve)?;
    let (s_min, s_max) = (min_eigenvalue(&s), max_eigenvalue(&s));
    let (beta, gamma) = beta_gamma(&s, s_min, s_max, bias0);
    Ok(BiasBounds {
        s,
        s_min,
        s_max,
        beta,
        gamma,
        alpha1: beta * input_gain,
        alpha2: None,
        alpha3: None,
    })
}

/// Bias bounds for a time-varying `Ă(t)`; `input_gain(t)` is
/// [`input_bias_gain`] along the same gain history.
pub fn bias_bounds(
    abreve: &dyn Fn(f64) -> Mat,
    input_gain: &dyn Fn(f64) -> f64,
    grid: &[f64],
    h: f64,
    max_span: f64,
    bias0: &Vector,
) -> Result<BiasBounds> {
    let first = *grid
        .first()
        .ok_or_else(|| LiseError::InvalidInput("empty time grid".into()))?;
    let mut s0 = None;
    let (mut s_min, mut s_max, mut gain) = (f64::INFINITY, 0.0f64, 0.0f64);
    for &t in grid {
        let s = quadrature_s(abreve, t, h, max_span)?;
        s_min = s_min.min(min_eigenvalue(&s));
        s_max = s_max.max(max_eigenvalue(&s));
        gain = gain.max(input_gain(t));
        if t == first {
            s0 = Some(s);
        }
    }
    let s = s0.expect("grid is nonempty");
    let (beta, gamma) = beta_gamma(&s, s_min, s_max, bias0);
    Ok(BiasBounds {
        s,
        s_min,
        s_max,
        beta,
        gamma,
        alpha1: beta * gain,
        alpha2: None,
        alpha3: None,
    })
}

/// Second derivative of the mean decoupled output `E[z̈₂] = T₂ E[ÿ]` for
/// a system with `H = 0` along a known trajectory.
#[allow(clippy::too_many_arguments)]
pub fn expected_z2_ddot(
    t2: &Mat,
    s: &SystemAt,
    dv: &SystemDerivs,
    x: &Vector,
    u: &Vector,
    udot: &Vector,
    uddot: &Vector,
    d: &Vector,
    ddot: &Vector,
) -> Vector {
    let (a, c) = (&s.a, &s.c);
    let ca = c * a;
    let kx = &dv.c_ddot + &dv.c_dot * a * 2.0 + c * &dv.a_dot + &ca * a;
    let ku = &dv.c_dot * &s.b * 2.0 + &ca * &s.b + c * &dv.b_dot + &dv.d_ddot;
    let kud = c * &s.b + &dv.d_dot * 2.0;
    let kd = &dv.c_dot * &s.g * 2.0 + &ca * &s.g + c * &dv.g_dot;
    let kdd = c * &s.g;
    t2 * (kx * x + ku * u + kud * udot + &s.d * uddot + kd * d + kdd * ddot)
}

/// `½‖V₂M₂E[z̈₂]‖` at one instant; α₂ is its supremum over the horizon.
pub fn alpha2_sample(v2: &Mat, m2: &Mat, z2_ddot: &Vector) -> f64 {
    0.5 * (v2 * m2 * z2_ddot).norm()
}

/// Aligned truth/estimate/covariance series of one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateSeries {
    pub truth: Vec<Vector>,
    pub estimate: Vec<Vector>,
    pub cov: Vec<Mat>,
}

/// NEES and RMSE statistics over an ensemble of trials.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsistencyReport {
    pub dim: usize,
    pub trials: usize,
    /// Ensemble-mean NEES at each time sample.
    pub mean_nees: Vec<f64>,
    /// Time- and ensemble-averaged `x̃ᵢ²/Pᵢᵢ` per component, after `start`.
    pub per_state_nees: Vec<f64>,
    /// Measured RMSE per time sample and component.
    pub rmse_meas: Vec<Vec<f64>>,
    /// RMSE predicted by the covariance, `√mean(Pᵢᵢ)`.
    pub rmse_est: Vec<Vec<f64>>,
    /// Two-sided 95% band for the ensemble-mean NEES.
    pub band: (f64, f64),
    /// Fraction of samples at or after `start` whose mean NEES is in band.
    pub fraction_in_band: f64,
    pub start: usize,
}

/// Two-sided 95% chi-square band for the mean of `trials` NEES samples
/// of dimension `dim`.
pub fn nees_band(dim: usize, trials: usize) -> (f64, f64) {
    let dof = (dim * trials) as f64;
    let chi = ChiSquared::new(dof).expect("positive degrees of freedom");
    (
        chi.inverse_cdf(0.025) / trials as f64,
        chi.inverse_cdf(0.975) / trials as f64,
    )
}

/// `x̃ᵀP⁻¹x̃`, with a pseudo-inverse when `P` is singular.
pub fn nees(err: &Vector, cov: &Mat) -> f64 {
    if err.iter().all(|e| *e == 0.0) {
        return 0.0;
    }
    let pi = spd_inv(cov).unwrap_or_else(|| pinv(cov, DEFAULT_RANK_TOL));
    (err.transpose() * pi * err)[(0, 0)]
}

/// Ensemble consistency statistics; samples before `start` are reported
/// but excluded from the averages and the band fraction.
pub fn consistency_metrics(series: &[EstimateSeries], start: usize) -> Result<ConsistencyReport> {
    let trials = series.len();
    let first = series
        .first()
        .ok_or_else(|| LiseError::InvalidInput("no trials".into()))?;
    let len = first.truth.len();
    let dim = first.truth.first().map(|v| v.len()).unwrap_or(0);
    for s in series {
        if s.truth.len() != len || s.estimate.len() != len || s.cov.len() != len {
            return Err(LiseError::InvalidInput(
                "trial series are not aligned".into(),
            ));
        }
    }
    let mut mean_nees = vec![0.0; len];
    let mut sq = vec![vec![0.0; dim]; len];
    let mut var = vec![vec![0.0; dim]; len];
    let mut per_state = vec![0.0; dim];
    for s in series {
        for k in 0..len {
            let e = &s.truth[k] - &s.estimate[k];
            mean_nees[k] += nees(&e, &s.cov[k]) / trials as f64;
            for i in 0..dim {
                sq[k][i] += e[i] * e[i] / trials as f64;
                var[k][i] += s.cov[k][(i, i)] / trials as f64;
                if k >= start && s.cov[k][(i, i)] > 0.0 {
                    per_state[i] += e[i] * e[i] / s.cov[k][(i, i)];
                }
            }
        }
    }
    let used = len.saturating_sub(start).max(1) * trials;
    per_state.iter_mut().for_each(|v| *v /= used as f64);
    let band = nees_band(dim.max(1), trials);
    let tail = &mean_nees[start.min(len)..];
    let inside = tail
        .iter()
        .filter(|v| **v >= band.0 && **v <= band.1)
        .count();
    let fraction_in_band = if tail.is_empty() {
        0.0
    } else {
        inside as f64 / tail.len() as f64
    };
    let sqrt_all = |m: Vec<Vec<f64>>| {
        m.into_iter()
            .map(|r| r.into_iter().map(f64::sqrt).collect())
            .collect()
    };
    Ok(ConsistencyReport {
        dim,
        trials,
        mean_nees,
        per_state_nees: per_state,
        rmse_meas: sqrt_all(sq),
        rmse_est: sqrt_all(var),
        band,
        fraction_in_band,
        start,
    })
}

/// Serialize a matrix as a list of rows.
pub fn ser_mat<S: serde::Serializer>(m: &Mat, s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(m.nrows()))?;
    for r in 0..m.nrows() {
        let row: Vec<f64> = m.row(r).iter().copied().collect();
        seq.serialize_element(&row)?;
    }
    seq.end()
}
