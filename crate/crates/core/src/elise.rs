//! Exact linear input and state estimator driven by an auxiliary
//! output-derivative measurement.
//!
//! The unknown input is split into `d₁` (visible through the feedthrough
//! and recovered from `z₁`) and `d₂` (visible only through the dynamics
//! and recovered from the projected auxiliary measurement `z̄₂`). The state
//! estimate follows a Kalman–Bucy-type equation driven by `z₂` with gains
//! that account for the input-estimation errors.

use crate::asvd::StructuredSvd;
use crate::error::{LiseError, Result};
use crate::lincore::{
    inv, psd_floor, rank, rk4_step, spd_inv, symmetrize, Mat, OdeState, Vector, DEFAULT_RANK_TOL,
};
use crate::sysmodel::{
    decouple_at, AuxAt, AuxMeasurementModel, DecoupledSystem, SystemSchedule, WhiteNoiseAt,
    WhiteNoiseSpec,
};

/// Noise intensities seen by the decoupled channels.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseProjections {
    /// `W Q Wᵀ`.
    pub wqw: Mat,
    /// `T₁ R T₁ᵀ`.
    pub r1: Mat,
    /// `T₂ R T₂ᵀ`.
    pub r2: Mat,
    /// `T̄₂ R̄ T̄₂ᵀ`.
    pub rbar2: Mat,
    /// `T₂ R̀ T̄₂ᵀ`.
    pub rgrave2: Mat,
    /// `T₁ R̀ T̄₂ᵀ`.
    pub rgrave12: Mat,
}

/// Project white-noise intensities through the decoupling transforms.
pub fn project_white_noise(
    dec: &DecoupledSystem,
    aux: &AuxAt,
    noise: &WhiteNoiseAt,
) -> NoiseProjections {
    let t2bt = aux.t2bar.transpose();
    NoiseProjections {
        wqw: symmetrize(&(&dec.sys.w * &noise.q * dec.sys.w.transpose())),
        r1: dec.r1.clone(),
        r2: dec.r2.clone(),
        rbar2: symmetrize(&(&aux.t2bar * &noise.rbar * &t2bt)),
        rgrave2: &dec.t2 * &noise.rgrave * &t2bt,
        rgrave12: &dec.t1 * &noise.rgrave * &t2bt,
    }
}

/// Which process-noise expression to use for `Q̄`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QbarForm {
    /// `(I − G₂M₂C̄₂) Q̂ (·)ᵀ + G₂M₂R̄₂M₂ᵀG₂ᵀ` (auxiliary measurement).
    WithAuxNoise,
    /// `(I − G₂M₂C₂) Q̂ (·)ᵀ` (finite-difference variant).
    WithoutAuxNoise,
}

/// Estimator gains and the intermediate matrices they are built from.
#[derive(Debug, Clone, PartialEq)]
pub struct EliseGains {
    pub m1: Mat,
    pub m2: Mat,
    pub l: Mat,
    pub ahat: Mat,
    pub qhat: Mat,
    pub rtilde2: Mat,
    pub abar: Mat,
    pub qbar: Mat,
    /// `C̄₂Â + T̄₂C̿`.
    pub cz: Mat,
    /// `(G₂ᵀC̄₂ᵀR̃₂⁻¹C̄₂G₂)⁻¹`, the covariance of the `d₂` estimate.
    pub pd2: Mat,
}

/// Filter state: estimate, error covariance and time.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    pub xhat: Vector,
    pub px: Mat,
    pub t: f64,
}

/// Unknown-input estimate and its error covariance blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct InputEstimate {
    pub t: f64,
    pub d1hat: Vector,
    pub d2hat: Vector,
    pub dhat: Vector,
    pub pd1: Mat,
    pub pd2: Mat,
    pub pd12: Mat,
    pub pd: Mat,
    /// False while a finite-difference estimator is still warming up; the
    /// `d₂` part is then zero and its covariance is meaningless.
    pub d2_available: bool,
}

/// Compute the estimator gains for the current covariance `px`.
pub fn compute_gains(
    dec: &DecoupledSystem,
    aux: &AuxAt,
    proj: &NoiseProjections,
    px: &Mat,
    form: QbarForm,
) -> Result<EliseGains> {
    let n = dec.sys.a.nrows();
    let m1 = dec.m1();
    let g1m1 = &dec.g1 * &m1;
    let ahat = &dec.sys.a - &g1m1 * &dec.c1;
    let qhat = symmetrize(&(&proj.wqw + &g1m1 * &proj.r1 * g1m1.transpose()));
    let p2 = dec.p2();
    let cbar2 = &aux.cbar2;
    let cz = cbar2 * &ahat + &aux.t2bar * &aux.cbarbar;
    let cross = cbar2 * &g1m1 * &proj.rgrave12;
    let rtilde2 = symmetrize(
        &(&cz * px * cz.transpose() + cbar2 * &qhat * cbar2.transpose() + &proj.rbar2
            - cross.transpose()
            - &cross),
    );
    let (m2, pd2) = if p2 == 0 {
        (Mat::zeros(0, cbar2.nrows()), Mat::zeros(0, 0))
    } else {
        let cg = cbar2 * &dec.g2;
        let rk = rank(&cg, DEFAULT_RANK_TOL);
        if rk < p2 {
            return Err(LiseError::UnidentifiableInput {
                rank: rk,
                required: p2,
            });
        }
        let rt_inv = spd_inv(&rtilde2).ok_or(LiseError::IllConditionedInnovation)?;
        let nmat = cg.transpose() * &rt_inv;
        let pd2 = symmetrize(
            &inv(&(&nmat * &cg)).map_err(|_| LiseError::UnidentifiableInput {
                rank: rk,
                required: p2,
            })?,
        );
        (&pd2 * nmat, pd2)
    };
    let g2m2 = &dec.g2 * &m2;
    let proj_i = Mat::identity(n, n) - &g2m2 * cbar2;
    let abar = &proj_i * &ahat - &g2m2 * &aux.t2bar * &aux.cbarbar;
    let mut qbar = &proj_i * &qhat * proj_i.transpose();
    if form == QbarForm::WithAuxNoise {
        qbar += &g2m2 * &proj.rbar2 * g2m2.transpose();
    }
    let qbar = symmetrize(&qbar);
    let l = if dec.c2.nrows() == 0 {
        Mat::zeros(n, 0)
    } else {
        let r2inv = spd_inv(&proj.r2)
            .ok_or_else(|| LiseError::InvalidNoise("R2 is not positive definite".into()))?;
        (px * dec.c2.transpose() - &g2m2 * proj.rgrave2.transpose()) * r2inv
    };
    Ok(EliseGains {
        m1,
        m2,
        l,
        ahat,
        qhat,
        rtilde2,
        abar,
        qbar,
        cz,
        pd2,
    })
}

/// `d̂₁ = M₁(z₁ − C₁x̂ − D₁u)`.
pub fn estimate_d1(
    g: &EliseGains,
    dec: &DecoupledSystem,
    xhat: &Vector,
    u: &Vector,
    z1: &Vector,
) -> Vector {
    &g.m1 * (z1 - &dec.c1 * xhat - &dec.d1 * u)
}

/// `d̂₂ = M₂(z̄₂ − (C̄₂A + T̄₂C̿)x̂ − C̄₂Bu − C̄₂G₁d̂₁ − D̄₂u̇ − T̄₂D̿u)`.
pub fn estimate_d2(
    g: &EliseGains,
    dec: &DecoupledSystem,
    aux: &AuxAt,
    xhat: &Vector,
    u: &Vector,
    udot: &Vector,
    d1hat: &Vector,
    z2bar: &Vector,
) -> Vector {
    let s = &dec.sys;
    let ca = &aux.cbar2 * &s.a + &aux.t2bar * &aux.cbarbar;
    &g.m2
        * (z2bar
            - ca * xhat
            - &aux.cbar2 * &s.b * u
            - &aux.cbar2 * &dec.g1 * d1hat
            - &aux.dbar2 * udot
            - &aux.t2bar * &aux.dbarbar * u)
}

/// Covariance blocks `(P^d₁, P^d₁₂)` of the input estimate.
pub fn input_covariances(
    g: &EliseGains,
    dec: &DecoupledSystem,
    aux: &AuxAt,
    proj: &NoiseProjections,
    px: &Mat,
) -> (Mat, Mat) {
    let pd1 =
        symmetrize(&(&g.m1 * (&dec.c1 * px * dec.c1.transpose() + &proj.r1) * g.m1.transpose()));
    let m2t = g.m2.transpose();
    let pd12 = &g.m1 * &dec.c1 * px * g.cz.transpose() * &m2t
        - &g.m1 * &proj.r1 * g.m1.transpose() * dec.g1.transpose() * aux.cbar2.transpose() * &m2t
        + &g.m1 * &proj.rgrave12 * &m2t;
    (pd1, pd12)
}

/// Assemble `P^d = V₁P^d₁V₁ᵀ + V₁P^d₁₂V₂ᵀ + V₂P^d₁₂ᵀV₁ᵀ + V₂P^d₂V₂ᵀ`.
pub fn assemble_pd(svd: &StructuredSvd, pd1: &Mat, pd12: &Mat, pd2: &Mat) -> Mat {
    let (v1, v2) = (&svd.v1, &svd.v2);
    let off = v1 * pd12 * v2.transpose();
    symmetrize(&(v1 * pd1 * v1.transpose() + &off + off.transpose() + v2 * pd2 * v2.transpose()))
}

/// Full input estimate with covariances.
#[allow(clippy::too_many_arguments)]
pub fn estimate_input(
    g: &EliseGains,
    dec: &DecoupledSystem,
    aux: &AuxAt,
    proj: &NoiseProjections,
    state: &FilterState,
    u: &Vector,
    udot: &Vector,
    z1: &Vector,
    z2bar: &Vector,
) -> InputEstimate {
    let d1hat = estimate_d1(g, dec, &state.xhat, u, z1);
    let d2hat = estimate_d2(g, dec, aux, &state.xhat, u, udot, &d1hat, z2bar);
    let dhat = &dec.svd.v1 * &d1hat + &dec.svd.v2 * &d2hat;
    let (pd1, pd12) = input_covariances(g, dec, aux, proj, &state.px);
    let pd = assemble_pd(&dec.svd, &pd1, &pd12, &g.pd2);
    InputEstimate {
        t: state.t,
        d1hat,
        d2hat,
        dhat,
        pd1,
        pd2: g.pd2.clone(),
        pd12,
        pd,
        d2_available: true,
    }
}

/// Right-hand sides `(ẋ̂, Ṗˣ)` of the state estimator and its Riccati
/// equation.
pub fn filter_rhs(
    g: &EliseGains,
    dec: &DecoupledSystem,
    state: &FilterState,
    u: &Vector,
    z2: &Vector,
    d1hat: &Vector,
    d2hat: &Vector,
    r2: &Mat,
) -> (Vector, Mat) {
    let s = &dec.sys;
    let innov = z2 - &dec.c2 * &state.xhat - &dec.d2 * u;
    let xdot = &s.a * &state.xhat + &s.b * u + &dec.g1 * d1hat + &dec.g2 * d2hat + &g.l * innov;
    let p = &state.px;
    let pdot =
        symmetrize(&(&g.abar * p + p * g.abar.transpose() + &g.qbar - &g.l * r2 * g.l.transpose()));
    (xdot, pdot)
}

/// Estimate/covariance pair integrated by RK4.
#[derive(Debug, Clone)]
pub(crate) struct XpPair {
    pub x: Vector,
    pub p: Mat,
}

impl OdeState for XpPair {
    fn add_scaled(&self, k: &Self, h: f64) -> Self {
        XpPair {
            x: &self.x + &k.x * h,
            p: &self.p + &k.p * h,
        }
    }
    fn is_finite(&self) -> bool {
        self.x.iter().chain(self.p.iter()).all(|v| v.is_finite())
    }
}

/// Measurement and input data held constant over one step.
#[derive(Debug, Clone, PartialEq)]
pub struct EliseSignals {
    pub y: Vector,
    pub ybar: Vector,
    pub u: Vector,
    pub udot: Vector,
}

/// Decoupled system, auxiliary matrices and projected noise at one time.
#[derive(Debug, Clone)]
pub struct Frame {
    pub t: f64,
    pub dec: DecoupledSystem,
    pub aux: AuxAt,
    pub proj: NoiseProjections,
}

/// Small time-keyed cache of frames shared by the RK4 stages.
#[derive(Debug, Default)]
pub(crate) struct FrameCache {
    entries: Vec<Frame>,
    constant: Option<Frame>,
}

impl FrameCache {
    pub(crate) fn get_or<F>(&mut self, t: f64, constant: bool, build: F) -> Result<Frame>
    where
        F: FnOnce(Option<&Frame>) -> Result<Frame>,
    {
        if constant {
            if let Some(f) = &self.constant {
                return Ok(f.clone());
            }
            let f = build(None)?;
            self.constant = Some(f.clone());
            return Ok(f);
        }
        if let Some(f) = self.entries.iter().find(|f| f.t == t) {
            return Ok(f.clone());
        }
        let f = build(self.entries.last())?;
        if self.entries.len() >= 4 {
            self.entries.remove(0);
        }
        self.entries.push(f.clone());
        Ok(f)
    }
}

/// Build the frame at `t`, continuing SVD factors from `prev`.
pub fn build_frame(
    sched: &SystemSchedule,
    aux: &AuxMeasurementModel,
    noise: &WhiteNoiseSpec,
    t: f64,
    tol: f64,
    prev: Option<&Frame>,
) -> Result<Frame> {
    let sys = sched.at(t);
    let svd = match prev {
        Some(p) => crate::asvd::structured_svd_aligned(&sys.h, tol, &p.dec.svd)?,
        None => crate::asvd::structured_svd(&sys.h, tol)?,
    };
    let n_at = noise.at(t)?;
    let dec = decouple_at(sys, &n_at.r, svd)?;
    let aux_at = aux.at(t, tol, prev.map(|p| &p.aux.svd))?;
    let proj = project_white_noise(&dec, &aux_at, &n_at);
    Ok(Frame {
        t,
        dec,
        aux: aux_at,
        proj,
    })
}

/// Exact linear input and state estimator.
pub struct EliseFilter {
    sched: SystemSchedule,
    aux: AuxMeasurementModel,
    noise: WhiteNoiseSpec,
    tol: f64,
    state: FilterState,
    cache: FrameCache,
    constant: bool,
}

impl EliseFilter {
    /// Initialise with estimate `xhat0` and covariance `p0` at `t0`.
    pub fn new(
        sched: SystemSchedule,
        aux: AuxMeasurementModel,
        noise: WhiteNoiseSpec,
        xhat0: Vector,
        p0: Mat,
        t0: f64,
    ) -> Result<Self> {
        let n = sched.dims.n;
        if xhat0.len() != n || p0.shape() != (n, n) {
            return Err(LiseError::InvalidInput(
                "initial estimate has wrong dimension".into(),
            ));
        }
        let constant = sched.is_lti() && aux.is_constant() && noise.is_constant();
        let mut f = EliseFilter {
            sched,
            aux,
            noise,
            tol: DEFAULT_RANK_TOL,
            state: FilterState {
                xhat: xhat0,
                px: symmetrize(&p0),
                t: t0,
            },
            cache: FrameCache::default(),
            constant,
        };
        // Validate the model once up front.
        f.frame(t0)?;
        Ok(f)
    }

    pub fn state(&self) -> &FilterState {
        &self.state
    }

    pub fn schedule(&self) -> &SystemSchedule {
        &self.sched
    }

    /// Replace the current estimate (covariance and time unchanged).
    pub fn set_estimate(&mut self, xhat: Vector) {
        self.state.xhat = xhat;
    }

    /// Frame at time `t` (cached).
    pub fn frame(&mut self, t: f64) -> Result<Frame> {
        let (sched, aux, noise, tol) = (&self.sched, &self.aux, &self.noise, self.tol);
        self.cache.get_or(t, self.constant, |prev| {
            build_frame(sched, aux, noise, t, tol, prev)
        })
    }

    /// Frame and gains at the current state.
    pub fn gains_now(&mut self) -> Result<(Frame, EliseGains)> {
        let fr = self.frame(self.state.t)?;
        let g = compute_gains(
            &fr.dec,
            &fr.aux,
            &fr.proj,
            &self.state.px,
            QbarForm::WithAuxNoise,
        )?;
        Ok((fr, g))
    }

    /// Input estimate at the current state for the given signals.
    pub fn input_estimate(&mut self, sig: &EliseSignals) -> Result<InputEstimate> {
        let (fr, g) = self.gains_now()?;
        let (z1, _) = fr.dec.split(&sig.y);
        let z2bar = &fr.aux.t2bar * &sig.ybar;
        Ok(estimate_input(
            &g,
            &fr.dec,
            &fr.aux,
            &fr.proj,
            &self.state,
            &sig.u,
            &sig.udot,
            &z1,
            &z2bar,
        ))
    }

    /// Advance `(x̂, Pˣ)` over `[t, t + h]` with the signals held constant.
    pub fn step(&mut self, sig: &EliseSignals, h: f64) -> Result<StepOutput> {
        self.step_with(&|_| sig.clone(), h)
    }

    /// Advance `(x̂, Pˣ)` over `[t, t + h]`, evaluating the signals at each
    /// RK4 stage time. Returns the estimates at `t`.
    pub fn step_with(&mut self, sig: &dyn Fn(f64) -> EliseSignals, h: f64) -> Result<StepOutput> {
        let t0 = self.state.t;
        let input = self.input_estimate(&sig(t0))?;
        let out = StepOutput {
            t: t0,
            xhat: self.state.xhat.clone(),
            px: self.state.px.clone(),
            input,
        };
        let y0 = XpPair {
            x: self.state.xhat.clone(),
            p: self.state.px.clone(),
        };
        let mut rhs = |t: f64, s: &XpPair| -> Result<XpPair> {
            let sig = sig(t);
            let fr = self.frame(t)?;
            let g = compute_gains(&fr.dec, &fr.aux, &fr.proj, &s.p, QbarForm::WithAuxNoise)?;
            let (z1, z2) = fr.dec.split(&sig.y);
            let z2bar = &fr.aux.t2bar * &sig.ybar;
            let d1 = estimate_d1(&g, &fr.dec, &s.x, &sig.u, &z1);
            let d2 = estimate_d2(&g, &fr.dec, &fr.aux, &s.x, &sig.u, &sig.udot, &d1, &z2bar);
            let st = FilterState {
                xhat: s.x.clone(),
                px: s.p.clone(),
                t,
            };
            let (xd, pd) = filter_rhs(&g, &fr.dec, &st, &sig.u, &z2, &d1, &d2, &fr.proj.r2);
            Ok(XpPair { x: xd, p: pd })
        };
        let next = rk4_step(&mut rhs, t0, &y0, h)?;
        self.state = FilterState {
            xhat: next.x,
            px: psd_floor(&next.p),
            t: t0 + h,
        };
        Ok(out)
    }
}

/// Estimates emitted by one filter step, all referring to its start time.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub t: f64,
    pub xhat: Vector,
    pub px: Mat,
    pub input: InputEstimate,
}
