//! State feedback with disturbance rejection on top of the estimators.
//!
//! The control law is `u = −Kx̂ − J₁d̂₁ − J₂d̂₂`. Because the input
//! estimates themselves depend on `u`, the loop is implicit; it is
//! resolved here by solving the linear system `J̃ [d̂₁; d̂₂] = r` for the
//! current estimate.

use crate::elise::EliseGains;
use crate::error::{LiseError, Result};
use crate::lincore::{
    eig, hstack, min_eigenvalue, norm2, pinv, rank, solve_care, spectrum_mismatch, vstack, Mat,
    SpectrumReport, Vector, DEFAULT_RANK_TOL,
};
use crate::sysmodel::{AuxAt, DecoupledSystem};

/// Largest accepted condition number of `J̃`.
pub const JTILDE_MAX_COND: f64 = 1e8;

/// State-feedback and disturbance-rejection gains.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerSpec {
    pub k: Mat,
    pub j1: Mat,
    pub j2: Mat,
    pub gamma1: f64,
    pub gamma2: f64,
}

impl ControllerSpec {
    /// Pure state feedback `u = −Kx̂`.
    pub fn state_feedback(k: Mat, p_h: usize, p2: usize) -> Self {
        let m = k.nrows();
        ControllerSpec {
            k,
            j1: Mat::zeros(m, p_h),
            j2: Mat::zeros(m, p2),
            gamma1: f64::NAN,
            gamma2: f64::NAN,
        }
    }

    /// `u = −Kx̂ − J₁d̂₁ − J₂d̂₂`.
    pub fn control(&self, xhat: &Vector, d1hat: &Vector, d2hat: &Vector) -> Vector {
        -(&self.k * xhat) - &self.j1 * d1hat - &self.j2 * d2hat
    }
}

/// `K = R_c⁻¹BᵀP` from the stabilizing solution of
/// `AᵀP + PA + Q_c − PBR_c⁻¹BᵀP = 0`.
pub fn lqr_gain(a: &Mat, b: &Mat, qc: &Mat, rc: &Mat) -> Result<Mat> {
    let n = a.nrows();
    let m = b.ncols();
    if b.nrows() != n || qc.shape() != (n, n) || rc.shape() != (m, m) {
        return Err(LiseError::InvalidInput("lqr dimension mismatch".into()));
    }
    let p = solve_care(&a.transpose(), &b.transpose(), qc, rc, &Mat::zeros(n, m))?;
    let rinv = crate::lincore::spd_inv(rc)
        .ok_or_else(|| LiseError::InvalidInput("R_c must be positive definite".into()))?;
    Ok(rinv * b.transpose() * p)
}

/// Rejection gain and its certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct RejectionGain {
    pub j: Mat,
    pub gamma: f64,
    /// Smallest eigenvalue of `[γI, G − BJ; (G − BJ)ᵀ, γI]` at
    /// `γ + 1e-10`; non-negative when the constraint holds.
    pub lmi_min_eig: f64,
}

/// Minimiser of `‖G − BJ‖₂`: `J = B†G`, `γ = ‖(I − BB†)G‖₂`.
///
/// The residual `(I − BB†)G` is the component of every `G − BJ` that is
/// orthogonal to the range of `B`, so no `J` can do better.
pub fn rejection_gain(b: &Mat, g: &Mat) -> RejectionGain {
    let bp = pinv(b, DEFAULT_RANK_TOL);
    let j = &bp * g;
    let resid = g - b * &j;
    let gamma = norm2(&resid);
    let lmi_min_eig = min_eigenvalue(&lmi_block(&resid, gamma + 1e-10));
    RejectionGain {
        j,
        gamma,
        lmi_min_eig,
    }
}

/// `[γI, X; Xᵀ, γI]`.
pub fn lmi_block(x: &Mat, gamma: f64) -> Mat {
    let (r, c) = x.shape();
    let top = hstack(&[&(Mat::identity(r, r) * gamma), x]);
    let bot = hstack(&[&x.transpose(), &(Mat::identity(c, c) * gamma)]);
    vstack(&[&top, &bot])
}

/// Rejection gains for both input channels: `(J₁, J₂, γ₁, γ₂)`.
pub fn rejection_gains(b: &Mat, g1: &Mat, g2: &Mat) -> (Mat, Mat, f64, f64) {
    let r1 = rejection_gain(b, g1);
    let r2 = rejection_gain(b, g2);
    (r1.j, r2.j, r1.gamma, r2.gamma)
}

/// `J̃` and its inverse blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct JTilde {
    pub j: Mat,
    pub inv: Mat,
    pub cond: f64,
    pub p_h: usize,
}

impl JTilde {
    pub fn block(&self, i: usize, k: usize) -> Mat {
        let p = self.inv.nrows();
        let (r0, rn) = if i == 1 {
            (0, self.p_h)
        } else {
            (self.p_h, p - self.p_h)
        };
        let (c0, cn) = if k == 1 {
            (0, self.p_h)
        } else {
            (self.p_h, p - self.p_h)
        };
        self.inv.view((r0, c0), (rn, cn)).into_owned()
    }
}

/// `C̄₂B + T̄₂D̿`.
fn b_aux(dec: &DecoupledSystem, aux: &AuxAt) -> Mat {
    &aux.cbar2 * &dec.sys.b + &aux.t2bar * &aux.dbarbar
}

/// Assemble `J̃` and check that it is safely invertible.
pub fn jtilde(
    spec: &ControllerSpec,
    g: &EliseGains,
    dec: &DecoupledSystem,
    aux: &AuxAt,
) -> Result<JTilde> {
    let p_h = dec.p_h();
    let p2 = dec.p2();
    let bb = b_aux(dec, aux);
    let m1d1 = &g.m1 * &dec.d1;
    let top = hstack(&[
        &(Mat::identity(p_h, p_h) - &m1d1 * &spec.j1),
        &(-(&m1d1 * &spec.j2)),
    ]);
    let bot = hstack(&[
        &(&g.m2 * (&aux.cbar2 * &dec.g1 - &bb * &spec.j1)),
        &(Mat::identity(p2, p2) - &g.m2 * &bb * &spec.j2),
    ]);
    let j = vstack(&[&top, &bot]);
    let p = j.nrows();
    if p == 0 {
        return Ok(JTilde {
            j,
            inv: Mat::zeros(0, 0),
            cond: 1.0,
            p_h,
        });
    }
    let (_, sv, _) = crate::lincore::thin_svd(&j);
    let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
    let smax = sv.iter().copied().fold(0.0, f64::max);
    let cond = if smin > 0.0 {
        smax / smin
    } else {
        f64::INFINITY
    };
    if !(cond < JTILDE_MAX_COND) {
        return Err(LiseError::FeedbackLoopIllPosed { cond });
    }
    let inv = crate::lincore::inv(&j).map_err(|_| LiseError::FeedbackLoopIllPosed { cond })?;
    Ok(JTilde { j, inv, cond, p_h })
}

/// How the implicit loop was resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeedbackMode {
    /// `D̄₂ = 0`: `u` and `d̂` in closed form.
    Closed,
    /// `u` follows an ODE; the returned `u̇` is its right-hand side.
    InputOde,
    /// `d̂` recovered from the applied `u` through `[J₁ J₂]†`.
    RankRecovery,
}

/// Result of resolving the feedback loop at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackResolution {
    pub u: Vector,
    pub udot: Option<Vector>,
    pub d1hat: Vector,
    pub d2hat: Vector,
    pub mode: FeedbackMode,
    pub cond: f64,
}

/// Resolve `u = −Kx̂ − J₁d̂₁ − J₂d̂₂` jointly with the input estimates.
///
/// `z2bar` is the projected auxiliary measurement (or the projected
/// backward difference for the finite-difference estimator). When
/// `D̄₂ ≠ 0` the current control `u_now` is required: it is the state of
/// the input ODE, or the applied input for rank recovery.
#[allow(clippy::too_many_arguments)]
pub fn resolve_feedback(
    spec: &ControllerSpec,
    g: &EliseGains,
    dec: &DecoupledSystem,
    aux: &AuxAt,
    xhat: &Vector,
    z1: &Vector,
    z2bar: &Vector,
    u_now: Option<&Vector>,
) -> Result<FeedbackResolution> {
    let jt = jtilde(spec, g, dec, aux)?;
    let p_h = dec.p_h();
    let bb = b_aux(dec, aux);
    let s = &dec.sys;
    let rhs1 = &g.m1 * z1 - &g.m1 * (&dec.c1 - &dec.d1 * &spec.k) * xhat;
    let rhs2 = &g.m2 * z2bar
        - &g.m2 * (&aux.cbar2 * &s.a + &aux.t2bar * &aux.cbarbar - &bb * &spec.k) * xhat;
    // Coefficient of u̇ in each right-hand side.
    let w2 = -(&g.m2 * &aux.dbar2);
    let split = |d: Vector| -> (Vector, Vector) {
        (
            d.rows(0, p_h).into_owned(),
            d.rows(p_h, d.len() - p_h).into_owned(),
        )
    };
    let stack = |a: &Vector, b: &Vector| {
        Vector::from_iterator(a.len() + b.len(), a.iter().chain(b.iter()).copied())
    };

    let dbar_scale = 1.0 + aux.dbar2.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let dbar_zero = w2.iter().all(|v| v.abs() <= 1e-14 * dbar_scale);
    if dbar_zero {
        let (d1, d2) = split(&jt.inv * stack(&rhs1, &rhs2));
        let u = spec.control(xhat, &d1, &d2);
        return Ok(FeedbackResolution {
            u,
            udot: None,
            d1hat: d1,
            d2hat: d2,
            mode: FeedbackMode::Closed,
            cond: jt.cond,
        });
    }

    let jj = hstack(&[&spec.j1, &spec.j2]);
    // d̂ = J̃⁻¹(r₀ + [0; w₂]u̇) ⇒ u = −Kx̂ − [J₁ J₂]J̃⁻¹r₀ − Γu̇.
    let d0 = &jt.inv * stack(&rhs1, &rhs2);
    let wfull = vstack(&[&Mat::zeros(p_h, w2.ncols()), &w2]);
    let gamma = &jj * &jt.inv * &wfull;
    let u_free = -(&spec.k * xhat) - &jj * &d0;
    let m = spec.k.nrows();
    let u_now = u_now
        .ok_or_else(|| LiseError::InvalidInput("current control is required when D̄₂ ≠ 0".into()))?;
    if gamma.shape() == (m, m) && rank(&gamma, DEFAULT_RANK_TOL) == m {
        let ginv = crate::lincore::inv(&gamma)?;
        let udot = ginv * (&u_free - u_now);
        let (d1, d2) = split(&d0 + &jt.inv * &wfull * &udot);
        return Ok(FeedbackResolution {
            u: u_now.clone(),
            udot: Some(udot),
            d1hat: d1,
            d2hat: d2,
            mode: FeedbackMode::InputOde,
            cond: jt.cond,
        });
    }
    if rank(&jj, DEFAULT_RANK_TOL) == jj.ncols() {
        let (d1, d2) = split(pinv(&jj, DEFAULT_RANK_TOL) * (-u_now - &spec.k * xhat));
        return Ok(FeedbackResolution {
            u: u_now.clone(),
            udot: None,
            d1hat: d1,
            d2hat: d2,
            mode: FeedbackMode::RankRecovery,
            cond: jt.cond,
        });
    }
    Err(LiseError::Unresolvable(
        "input ODE coefficient is singular and [J1 J2] is rank deficient".into(),
    ))
}

/// Spectra of the closed loop and of its two diagonal blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparationReport {
    pub closed_loop: SpectrumReport,
    pub controller: SpectrumReport,
    pub estimator: SpectrumReport,
    /// Largest distance between matched eigenvalues of the closed loop
    /// and of the union of the two blocks.
    pub mismatch: f64,
}

/// Closed-loop matrix of `[x; x̃]`:
/// `[A − BK, coupling; 0, Ā − LC₂]`.
pub fn closed_loop_matrix(
    a: &Mat,
    b: &Mat,
    k: &Mat,
    coupling: &Mat,
    abar: &Mat,
    l: &Mat,
    c2: &Mat,
) -> Mat {
    let n = a.nrows();
    let top = hstack(&[&(a - b * k), coupling]);
    let bot = hstack(&[&Mat::zeros(n, n), &(abar - l * c2)]);
    vstack(&[&top, &bot])
}

/// `B(K − J₁M₁C₁ − J₂M₂(C̄₂Â + T̄₂C̿))`, the coupling from the estimation
/// error into the plant.
pub fn coupling_block(spec: &ControllerSpec, g: &EliseGains, dec: &DecoupledSystem) -> Mat {
    &dec.sys.b * (&spec.k - &spec.j1 * &g.m1 * &dec.c1 - &spec.j2 * &g.m2 * &g.cz)
}

/// Compare the closed-loop spectrum with `spec(A − BK) ∪ spec(Ā − LC₂)`.
pub fn separation_spectrum(
    a: &Mat,
    b: &Mat,
    k: &Mat,
    abar: &Mat,
    l: &Mat,
    c2: &Mat,
    coupling: &Mat,
) -> SeparationReport {
    let cl = eig(&closed_loop_matrix(a, b, k, coupling, abar, l, c2));
    let controller = eig(&(a - b * k));
    let estimator = eig(&(abar - l * c2));
    let mut union = controller.eigenvalues.clone();
    union.extend(estimator.eigenvalues.iter().copied());
    let mismatch = spectrum_mismatch(&cl.eigenvalues, &union);
    SeparationReport {
        closed_loop: cl,
        controller,
        estimator,
        mismatch,
    }
}

/// PD gains placing the roots of `s² + k_D s + k_P`.
pub fn pd_poles(k_d: f64, k_p: f64) -> SpectrumReport {
    eig(&Mat::from_row_slice(2, 2, &[0.0, 1.0, -k_p, -k_d]))
}
