//! Approximate linear input and state estimator for Gauss–Markov noise.
//!
//! The auxiliary derivative measurement of [`crate::elise`] is replaced by
//! a backward difference of the output over a window `𝔡t`, and the state
//! estimator is rewritten in terms of `θ = x̂ − Φ₁y − Φ₂u` so that it needs
//! no output derivative at all. Noise covariances `Pʷ`, `Pᵛ` follow their
//! own Lyapunov equations.

use std::collections::VecDeque;

use crate::asvd::{full_rates, structured_svd, structured_svd_aligned, AsvdRates, StructuredSvd};
use crate::elise::{
    assemble_pd, compute_gains, estimate_d1, estimate_d2, input_covariances, EliseGains,
    InputEstimate, NoiseProjections, QbarForm, StepOutput,
};
use crate::error::{LiseError, Result};
use crate::lincore::{
    psd_floor, rk4_step, spd_inv, symmetrize, Mat, OdeState, Vector, DEFAULT_RANK_TOL,
};
use crate::sysmodel::{
    decouple_at, gm_cov_rhs, t1dot_full, AuxAt, DecoupledSystem, GaussMarkovSpec, SystemDerivs,
    SystemSchedule,
};

/// Default finite-difference window.
pub const DEFAULT_FD_DT: f64 = 0.05;

/// The five noise projections derived from `Pᵛ`:
/// `(R₁, R₂, R̄₂, R̀₂, R̀₁₂)`.
pub fn derived_covariances(pv: &Mat, dec: &DecoupledSystem) -> (Mat, Mat, Mat, Mat, Mat) {
    let (p11, p22, p12) = GaussMarkovSpec::split_pv(pv);
    let (t1, t2) = (&dec.t1, &dec.t2);
    (
        symmetrize(&(t1 * &p11 * t1.transpose())),
        symmetrize(&(t2 * &p11 * t2.transpose())),
        symmetrize(&(t2 * &p22 * t2.transpose())),
        t2 * &p12 * t2.transpose(),
        t1 * &p12 * t2.transpose(),
    )
}

/// Auxiliary-measurement matrices for the output derivative itself:
/// `C̄ = C`, `C̿ = Ċ`, `D̄ = D`, `D̿ = Ḋ`, `T̄₂ = T₂`.
pub fn output_derivative_aux(dec: &DecoupledSystem, derivs: &SystemDerivs) -> AuxAt {
    let s = &dec.sys;
    AuxAt {
        cbar: s.c.clone(),
        cbarbar: derivs.c_dot.clone(),
        dbar: s.d.clone(),
        dbarbar: derivs.d_dot.clone(),
        hbar: s.h.clone(),
        hbarbar: derivs.h_dot.clone(),
        svd: dec.svd.clone(),
        t2bar: dec.t2.clone(),
        cbar2: dec.c2.clone(),
        dbar2: dec.d2.clone(),
    }
}

/// Everything about the model at one time that does not depend on `Pˣ`.
#[derive(Debug, Clone)]
pub struct AliseFrame {
    pub t: f64,
    pub dec: DecoupledSystem,
    pub aux: AuxAt,
    pub proj: NoiseProjections,
    pub rates: AsvdRates,
    pub derivs: SystemDerivs,
    pub pw: Mat,
    pub pv: Mat,
    pub pw_dot: Mat,
    pub pv_dot: Mat,
}

/// Build the frame at `t` for noise covariances `pw`, `pv` and SVD `svd`.
pub fn alise_frame(
    sched: &SystemSchedule,
    gm: &GaussMarkovSpec,
    svd: StructuredSvd,
    t: f64,
    pw: &Mat,
    pv: &Mat,
) -> Result<AliseFrame> {
    let sys = sched.at(t);
    let derivs = sched.derivs_at(t);
    let rates = full_rates(&svd, &derivs.h_dot, svd.default_gap_tol())?;
    let l = sys.c.nrows();
    let r = pv.view((0, 0), (l, l)).into_owned();
    let dec = decouple_at(sys, &r, svd)?;
    let (r1, r2, rbar2, rgrave2, rgrave12) = derived_covariances(pv, &dec);
    let wqw = symmetrize(&(&dec.sys.w * pw * dec.sys.w.transpose()));
    let proj = NoiseProjections {
        wqw,
        r1,
        r2,
        rbar2,
        rgrave2,
        rgrave12,
    };
    let aux = output_derivative_aux(&dec, &derivs);
    let (pw_dot, pv_dot) = gm_cov_rhs(gm, pw, pv);
    Ok(AliseFrame {
        t,
        dec,
        aux,
        proj,
        rates,
        derivs,
        pw: pw.clone(),
        pv: pv.clone(),
        pw_dot,
        pv_dot,
    })
}

/// ALISE gains at a frame for covariance `px`.
pub fn alise_gains(fr: &AliseFrame, px: &Mat) -> Result<EliseGains> {
    compute_gains(&fr.dec, &fr.aux, &fr.proj, px, QbarForm::WithoutAuxNoise)
}

/// Time derivatives of the gain-related matrices and the `θ`-form
/// coefficient matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct AliseDerivs {
    pub t1_dot: Mat,
    pub t2_dot: Mat,
    pub m1_dot: Mat,
    pub m2_dot: Mat,
    pub phi1: Mat,
    pub phi2: Mat,
    pub phi1_dot: Mat,
    pub phi2_dot: Mat,
    pub r1_dot: Mat,
    pub rgrave12_dot: Mat,
    pub ahat_dot: Mat,
    pub qhat_dot: Mat,
    pub rtilde2_dot: Mat,
    pub px_dot: Mat,
    pub bbar: Mat,
    pub gbar: Mat,
}

/// `Ṗˣ = ĀPˣ + PˣĀᵀ + Q̄ − LR₂Lᵀ`.
pub fn riccati_rhs(g: &EliseGains, r2: &Mat, px: &Mat) -> Mat {
    symmetrize(&(&g.abar * px + px * g.abar.transpose() + &g.qbar - &g.l * r2 * g.l.transpose()))
}

/// Derivative matrices at a frame, for covariance `px` and its gains `g`.
///
/// These are total time derivatives of the corresponding base
/// quantities, including the motion of `U₂`, `V₁`, `V₂`.
pub fn derivative_matrices(fr: &AliseFrame, g: &EliseGains, px: &Mat) -> Result<AliseDerivs> {
    let dec = &fr.dec;
    let s = &dec.sys;
    let dv = &fr.derivs;
    let svd = &dec.svd;
    let rt = &fr.rates;
    let n = s.a.nrows();
    let l = s.c.nrows();

    let (p11, p22, p12) = GaussMarkovSpec::split_pv(&fr.pv);
    let (p11d, p22d, p12d) = GaussMarkovSpec::split_pv(&fr.pv_dot);
    let t1_dot = t1dot_full(svd, rt, &p11, &p11d)?;
    let t2_dot = rt.u2_dot.transpose();
    let (t1, t2) = (&dec.t1, &dec.t2);

    let g1_dot = &dv.g_dot * &svd.v1 + &s.g * &rt.v1_dot;
    let g2_dot = &dv.g_dot * &svd.v2 + &s.g * &rt.v2_dot;
    let c1_dot = &t1_dot * &s.c + t1 * &dv.c_dot;
    let c2_dot = &t2_dot * &s.c + t2 * &dv.c_dot;
    let d2_dot = &t2_dot * &s.d + t2 * &dv.d_dot;
    let m1_dot = -(&g.m1 * rt.sigma_dot_mat() * &g.m1);

    let r1_dot = symmetrize(&(&t1_dot * &p11 * t1.transpose() * 2.0)) + t1 * &p11d * t1.transpose();
    let rgrave12_dot = &t1_dot * &p12 * t2.transpose()
        + t1 * &p12d * t2.transpose()
        + t1 * &p12 * t2_dot.transpose();
    let rbar2_dot =
        symmetrize(&(&t2_dot * &p22 * t2.transpose() * 2.0)) + t2 * &p22d * t2.transpose();

    let k1 = &dec.g1 * &g.m1;
    let k1_dot = &g1_dot * &g.m1 + &dec.g1 * &m1_dot;
    let ahat_dot = &dv.a_dot - &k1_dot * &dec.c1 - &k1 * &c1_dot;
    let wpw_dot = &dv.w_dot * &fr.pw * s.w.transpose();
    let k1r1 = &k1_dot * &fr.proj.r1 * k1.transpose();
    let qhat_dot = &wpw_dot
        + wpw_dot.transpose()
        + &s.w * &fr.pw_dot * s.w.transpose()
        + &k1r1
        + k1r1.transpose()
        + &k1 * &r1_dot * k1.transpose();

    let px_dot = riccati_rhs(g, &fr.proj.r2, px);
    let cz = &g.cz;
    let cz_dot = &c2_dot * &g.ahat + &dec.c2 * &ahat_dot + &t2_dot * &dv.c_dot + t2 * &dv.c_ddot;
    let czp = &cz_dot * px * cz.transpose();
    let cq = &c2_dot * &g.qhat * dec.c2.transpose();
    let x_dot = &c2_dot * &k1 * &fr.proj.rgrave12
        + &dec.c2 * &k1_dot * &fr.proj.rgrave12
        + &dec.c2 * &k1 * &rgrave12_dot;
    let rtilde2_dot = &czp
        + czp.transpose()
        + cz * &px_dot * cz.transpose()
        + &cq
        + cq.transpose()
        + &dec.c2 * &qhat_dot * dec.c2.transpose()
        + rbar2_dot
        - &x_dot
        - x_dot.transpose();

    let m2_dot = if dec.p2() == 0 {
        Mat::zeros(g.m2.nrows(), g.m2.ncols())
    } else {
        let rinv = spd_inv(&g.rtilde2).ok_or(LiseError::IllConditionedInnovation)?;
        let k = &dec.c2 * &dec.g2;
        let k_dot = &c2_dot * &dec.g2 + &dec.c2 * &g2_dot;
        let nmat = k.transpose() * &rinv;
        let n_dot = k_dot.transpose() * &rinv - k.transpose() * &rinv * &rtilde2_dot * &rinv;
        &g.pd2 * &n_dot - &g.pd2 * (&n_dot * &k + nmat * &k_dot) * &g.m2
    };

    let phi1 = &dec.g2 * &g.m2 * t2;
    let phi2 = -(&dec.g2 * &g.m2 * &dec.d2);
    let phi1_dot = &g2_dot * &g.m2 * t2 + &dec.g2 * &m2_dot * t2 + &dec.g2 * &g.m2 * &t2_dot;
    let phi2_dot =
        -(&g2_dot * &g.m2 * &dec.d2 + &dec.g2 * &m2_dot * &dec.d2 + &dec.g2 * &g.m2 * d2_dot);

    let proj_i = Mat::identity(n, n) - &dec.g2 * &g.m2 * &dec.c2;
    let bbar = &proj_i * (&s.b - &k1 * &dec.d1) - &dec.g2 * &g.m2 * t2 * &dv.d_dot;
    let gbar = &proj_i * &dec.g1;
    debug_assert_eq!(phi1.shape(), (n, l));
    Ok(AliseDerivs {
        t1_dot,
        t2_dot,
        m1_dot,
        m2_dot,
        phi1,
        phi2,
        phi1_dot,
        phi2_dot,
        r1_dot,
        rgrave12_dot,
        ahat_dot,
        qhat_dot,
        rtilde2_dot,
        px_dot,
        bbar,
        gbar,
    })
}

/// `θ̇ = (Ā − LC₂)x̂ + (B̄ − LD₂)u + ḠM₁z₁ + Lz₂ − Φ̇₁y − Φ̇₂u` with
/// `x̂ = Φ₁y + Φ₂u + θ`.
pub fn theta_rhs(
    theta: &Vector,
    dec: &DecoupledSystem,
    g: &EliseGains,
    dv: &AliseDerivs,
    y: &Vector,
    u: &Vector,
) -> Vector {
    let (z1, z2) = dec.split(y);
    let xhat = &dv.phi1 * y + &dv.phi2 * u + theta;
    let acl = &g.abar - &g.l * &dec.c2;
    acl * xhat + (&dv.bbar - &g.l * &dec.d2) * u + &dv.gbar * &g.m1 * z1 + &g.l * z2
        - &dv.phi1_dot * y
        - &dv.phi2_dot * u
}

/// Trace-gap coefficient `ζ` bounding `|tr(Pᵈ − P^d̄)|` by `ζ 𝔡t²`.
pub fn trace_gap_zeta(fr: &AliseFrame, g: &EliseGains, gm: &GaussMarkovSpec) -> f64 {
    let s = &fr.dec.sys;
    let dv = &fr.derivs;
    let cw = &s.c * &s.w;
    let l = s.c.nrows();
    let mut a_row = Mat::zeros(l, 2 * l);
    a_row.view_mut((0, 0), (l, l)).copy_from(&(-&gm.a_v));
    a_row.view_mut((0, l), (l, l)).copy_from(&(-&gm.a_vdot));
    let k = &dv.c_dot * &s.w + &s.c * &dv.w_dot - &cw * &gm.a_w;
    let inner = &cw * &gm.b_w * &gm.q_g * gm.b_w.transpose() * cw.transpose()
        + &a_row * &fr.pv * a_row.transpose()
        + &gm.b_v * &gm.r_g * gm.b_v.transpose()
        + &k * &fr.pw * k.transpose();
    let m = &g.m2 * &fr.dec.t2;
    (0.25 * (&m * inner * m.transpose()).trace()).abs()
}

/// Signals available to the filter at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct AliseSignals {
    pub y: Vector,
    pub u: Vector,
    pub udot: Vector,
    /// Exact output derivative; only used by the derivative-fed form.
    pub ydot: Option<Vector>,
}

/// How the state estimate is propagated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateForm {
    /// Derivative-free `θ` recursion.
    Theta,
    /// Direct `x̂` recursion driven by an exact `ẏ` (reference form).
    DerivativeFed,
}

/// Filter state. `theta` holds `θ` in the `θ` form and `x̂` in the
/// derivative-fed form; it is `None` until the first measurement arrives.
#[derive(Debug, Clone)]
pub struct AliseState {
    pub theta: Option<Vector>,
    pub xhat0: Vector,
    pub px: Mat,
    pub pw: Mat,
    pub pv: Mat,
    pub t: f64,
    pub y_buffer: VecDeque<(f64, Vector)>,
}

#[derive(Debug, Clone)]
struct AliseOde {
    x: Vector,
    px: Mat,
    pw: Mat,
    pv: Mat,
}

impl OdeState for AliseOde {
    fn add_scaled(&self, k: &Self, h: f64) -> Self {
        AliseOde {
            x: &self.x + &k.x * h,
            px: &self.px + &k.px * h,
            pw: &self.pw + &k.pw * h,
            pv: &self.pv + &k.pv * h,
        }
    }
    fn is_finite(&self) -> bool {
        [&self.px, &self.pw, &self.pv]
            .iter()
            .all(|m| m.iter().all(|v| v.is_finite()))
            && self.x.iter().all(|v| v.is_finite())
    }
}

/// Backward difference `(y(t) − y(t − 𝔡t)) / 𝔡t` from a buffer of past
/// outputs, interpolating linearly between bracketing samples.
pub fn backward_difference(
    buffer: &VecDeque<(f64, Vector)>,
    t: f64,
    y: &Vector,
    fd_dt: f64,
) -> Result<Vector> {
    let target = t - fd_dt;
    let slack = 1e-9 * (1.0 + t.abs());
    let first = buffer.front().ok_or(LiseError::NeedWarmup {
        ready_at: target + fd_dt,
    })?;
    if first.0 > target + slack {
        return Err(LiseError::NeedWarmup {
            ready_at: first.0 + fd_dt,
        });
    }
    let mut past = first.1.clone();
    for w in buffer.iter().collect::<Vec<_>>().windows(2) {
        let ((ta, ya), (tb, yb)) = (w[0], w[1]);
        if *ta <= target + slack && target <= *tb + slack {
            let span = tb - ta;
            let lam = if span > 0.0 {
                ((target - ta) / span).clamp(0.0, 1.0)
            } else {
                1.0
            };
            past = ya * (1.0 - lam) + yb * lam;
            break;
        }
    }
    Ok((y - past) / fd_dt)
}

/// Approximate linear input and state estimator.
pub struct AliseFilter {
    sched: SystemSchedule,
    gm: GaussMarkovSpec,
    fd_dt: f64,
    form: StateForm,
    tol: f64,
    state: AliseState,
    svd_cache: Vec<(f64, StructuredSvd)>,
}

impl AliseFilter {
    /// New filter with initial estimate `xhat0`, covariance `p0` at `t0`.
    /// `Pʷ` and `Pᵛ` start from the initial covariances in `gm`.
    pub fn new(
        sched: SystemSchedule,
        gm: GaussMarkovSpec,
        xhat0: Vector,
        p0: Mat,
        t0: f64,
        fd_dt: f64,
        form: StateForm,
    ) -> Result<Self> {
        gm.validate()?;
        let n = sched.dims.n;
        if xhat0.len() != n || p0.shape() != (n, n) {
            return Err(LiseError::InvalidInput(
                "initial estimate has wrong dimension".into(),
            ));
        }
        if gm.q() != sched.dims.q || gm.l() != sched.dims.l {
            return Err(LiseError::InvalidInput(
                "noise model dimensions do not match the system".into(),
            ));
        }
        if !(fd_dt > 0.0 && fd_dt.is_finite()) {
            return Err(LiseError::InvalidInput(format!(
                "finite-difference window must be positive, got {fd_dt}"
            )));
        }
        let state = AliseState {
            theta: None,
            xhat0,
            px: symmetrize(&p0),
            pw: gm.p0_w.clone(),
            pv: gm.p0_v.clone(),
            t: t0,
            y_buffer: VecDeque::new(),
        };
        let mut f = AliseFilter {
            sched,
            gm,
            fd_dt,
            form,
            tol: DEFAULT_RANK_TOL,
            state,
            svd_cache: Vec::new(),
        };
        let fr = f.frame_at(t0, &f.state.pw.clone(), &f.state.pv.clone())?;
        alise_gains(&fr, &f.state.px)?;
        Ok(f)
    }

    pub fn state(&self) -> &AliseState {
        &self.state
    }

    pub fn fd_dt(&self) -> f64 {
        self.fd_dt
    }

    fn svd_at(&mut self, t: f64) -> Result<StructuredSvd> {
        if self.sched.h.is_constant() {
            if let Some((_, s)) = self.svd_cache.first() {
                return Ok(s.clone());
            }
        } else if let Some((_, s)) = self.svd_cache.iter().find(|(ts, _)| *ts == t) {
            return Ok(s.clone());
        }
        let h = self.sched.h.at(t);
        let svd = match self.svd_cache.last() {
            Some((_, prev)) => structured_svd_aligned(&h, self.tol, prev)?,
            None => structured_svd(&h, self.tol)?,
        };
        if self.svd_cache.len() >= 4 {
            self.svd_cache.remove(0);
        }
        self.svd_cache.push((t, svd.clone()));
        Ok(svd)
    }

    /// Frame at `t` for the given noise covariances.
    pub fn frame_at(&mut self, t: f64, pw: &Mat, pv: &Mat) -> Result<AliseFrame> {
        let svd = self.svd_at(t)?;
        alise_frame(&self.sched, &self.gm, svd, t, pw, pv)
    }

    /// State estimate at the current time for output `y` and input `u`.
    pub fn xhat(&mut self, y: &Vector, u: &Vector) -> Result<Vector> {
        let Some(theta) = self.state.theta.clone() else {
            return Ok(self.state.xhat0.clone());
        };
        if self.form == StateForm::DerivativeFed {
            return Ok(theta);
        }
        let (pw, pv) = (self.state.pw.clone(), self.state.pv.clone());
        let fr = self.frame_at(self.state.t, &pw, &pv)?;
        let g = alise_gains(&fr, &self.state.px)?;
        let phi1 = &fr.dec.g2 * &g.m2 * &fr.dec.t2;
        let phi2 = -(&fr.dec.g2 * &g.m2 * &fr.dec.d2);
        Ok(phi1 * y + phi2 * u + theta)
    }

    /// Advance over `[t, t + h]` with the signals held constant.
    pub fn step(&mut self, sig: &AliseSignals, h: f64) -> Result<StepOutput> {
        self.step_with(&|_| sig.clone(), h)
    }

    /// Advance over `[t, t + h]`, evaluating the signals at each RK4 stage.
    /// Returns the estimates at `t`.
    pub fn step_with(&mut self, sig: &dyn Fn(f64) -> AliseSignals, h: f64) -> Result<StepOutput> {
        let t0 = self.state.t;
        let s0 = sig(t0);
        let (pw, pv) = (self.state.pw.clone(), self.state.pv.clone());
        let fr = self.frame_at(t0, &pw, &pv)?;
        let g = alise_gains(&fr, &self.state.px)?;
        let phi1 = &fr.dec.g2 * &g.m2 * &fr.dec.t2;
        let phi2 = -(&fr.dec.g2 * &g.m2 * &fr.dec.d2);
        if self.state.theta.is_none() {
            let x0 = self.state.xhat0.clone();
            self.state.theta = Some(match self.form {
                StateForm::Theta => x0 - &phi1 * &s0.y - &phi2 * &s0.u,
                StateForm::DerivativeFed => x0,
            });
        }
        let theta = self.state.theta.clone().unwrap_or_default();
        let xhat = match self.form {
            StateForm::Theta => &phi1 * &s0.y + &phi2 * &s0.u + &theta,
            StateForm::DerivativeFed => theta.clone(),
        };

        self.state.y_buffer.push_back((t0, s0.y.clone()));
        let keep_from = t0 - self.fd_dt;
        while self.state.y_buffer.len() > 2 && self.state.y_buffer[1].0 <= keep_from {
            self.state.y_buffer.pop_front();
        }
        let ydiff = match (self.form, &s0.ydot) {
            (StateForm::DerivativeFed, Some(yd)) => Some(yd.clone()),
            _ => match backward_difference(&self.state.y_buffer, t0, &s0.y, self.fd_dt) {
                Ok(v) => Some(v),
                Err(LiseError::NeedWarmup { .. }) => None,
                Err(e) => return Err(e),
            },
        };
        let input = self.input_from(&fr, &g, &xhat, &s0, ydiff.as_ref());

        let y0 = AliseOde {
            x: theta,
            px: self.state.px.clone(),
            pw,
            pv,
        };
        let form = self.form;
        let mut rhs = |t: f64, st: &AliseOde| -> Result<AliseOde> {
            let sg = sig(t);
            let fr = self.frame_at(t, &st.pw, &st.pv)?;
            let g = alise_gains(&fr, &st.px)?;
            let dv = derivative_matrices(&fr, &g, &st.px)?;
            let x_dot = match form {
                StateForm::Theta => theta_rhs(&st.x, &fr.dec, &g, &dv, &sg.y, &sg.u),
                StateForm::DerivativeFed => {
                    let ydot = sg.ydot.clone().ok_or_else(|| {
                        LiseError::InvalidInput("derivative-fed form needs ydot".into())
                    })?;
                    derivative_fed_rhs(&fr, &g, &st.x, &sg, &ydot)
                }
            };
            Ok(AliseOde {
                x: x_dot,
                px: dv.px_dot,
                pw: fr.pw_dot,
                pv: fr.pv_dot,
            })
        };
        let next = rk4_step(&mut rhs, t0, &y0, h)?;
        self.state.theta = Some(next.x);
        self.state.px = psd_floor(&next.px);
        self.state.pw = psd_floor(&next.pw);
        self.state.pv = psd_floor(&next.pv);
        self.state.t = t0 + h;
        Ok(StepOutput {
            t: t0,
            xhat: xhat.clone(),
            px: y0.px,
            input,
        })
    }

    fn input_from(
        &self,
        fr: &AliseFrame,
        g: &EliseGains,
        xhat: &Vector,
        s: &AliseSignals,
        ydiff: Option<&Vector>,
    ) -> InputEstimate {
        let (z1, _) = fr.dec.split(&s.y);
        let d1hat = estimate_d1(g, &fr.dec, xhat, &s.u, &z1);
        let (d2hat, avail) = match ydiff {
            Some(yd) => (
                estimate_d2(
                    g,
                    &fr.dec,
                    &fr.aux,
                    xhat,
                    &s.u,
                    &s.udot,
                    &d1hat,
                    &(&fr.dec.t2 * yd),
                ),
                true,
            ),
            None => (Vector::zeros(fr.dec.p2()), false),
        };
        let dhat = &fr.dec.svd.v1 * &d1hat + &fr.dec.svd.v2 * &d2hat;
        let (pd1, pd12) = input_covariances(g, &fr.dec, &fr.aux, &fr.proj, &self.state.px);
        let pd = assemble_pd(&fr.dec.svd, &pd1, &pd12, &g.pd2);
        InputEstimate {
            t: fr.t,
            d1hat,
            d2hat,
            dhat,
            pd1,
            pd2: g.pd2.clone(),
            pd12,
            pd,
            d2_available: avail,
        }
    }
}

/// `ẋ̂` of the estimator driven by an exact output derivative, with the
/// ALISE gains.
fn derivative_fed_rhs(
    fr: &AliseFrame,
    g: &EliseGains,
    xhat: &Vector,
    s: &AliseSignals,
    ydot: &Vector,
) -> Vector {
    let dec = &fr.dec;
    let (z1, z2) = dec.split(&s.y);
    let d1 = estimate_d1(g, dec, xhat, &s.u, &z1);
    let d2 = estimate_d2(g, dec, &fr.aux, xhat, &s.u, &s.udot, &d1, &(&dec.t2 * ydot));
    let sys = &dec.sys;
    &sys.a * xhat
        + &sys.b * &s.u
        + &dec.g1 * d1
        + &dec.g2 * d2
        + &g.l * (z2 - &dec.c2 * xhat - &dec.d2 * &s.u)
}
