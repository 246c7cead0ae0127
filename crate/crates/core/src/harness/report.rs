//! Structural and stability analysis of a scenario, serialized as JSON by
//! the `analyze` subcommand.

use serde::Serialize;

use super::scenarios::Scenario;
use crate::analysis::{
    bias_bounds_lti, equivalent_system, input_bias_gain, pbh_tests, ser_mat, strong_observability,
    BiasBounds, EquivalentSystem, PbhReport, StrongObservability,
};
use crate::control::{coupling_block, rejection_gain, separation_spectrum};
use crate::elise::{EliseFilter, EliseSignals};
use crate::error::Result;
use crate::lincore::{eig, Mat, SpectrumReport, Vector};
use crate::sysmodel::{AuxMeasurementModel, Dims, SystemSchedule, WhiteNoiseSpec};

/// Seed of the random probe points of the strong-observability test.
pub const PROBE_SEED: u64 = 0x5eed;
/// Number of random probe points.
pub const PROBE_POINTS: usize = 16;

/// Eigenvalues as `[re, im]` pairs.
pub fn eig_pairs(s: &SpectrumReport) -> Vec<[f64; 2]> {
    s.eigenvalues.iter().map(|z| [z.re, z.im]).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RejectionSummary {
    #[serde(serialize_with = "ser_mat")]
    pub j1: Mat,
    #[serde(serialize_with = "ser_mat")]
    pub j2: Mat,
    pub gamma1: f64,
    pub gamma2: f64,
    /// Smallest eigenvalue of the certificate matrix for each channel.
    pub lmi_min_eig: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeparationSummary {
    pub mismatch: f64,
    pub closed_loop: Vec<[f64; 2]>,
    pub controller: Vec<[f64; 2]>,
    pub estimator: Vec<[f64; 2]>,
}

/// Frozen-time analysis of the ELISE design of a scenario.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisReport {
    pub scenario: String,
    /// Time at which the time-varying matrices are frozen.
    pub t: f64,
    pub dims: Dims,
    pub p_h: usize,
    pub p2: usize,
    pub strong_observability: StrongObservability,
    pub pbh: PbhReport,
    pub equivalent: EquivalentSystem,
    /// Steady-state `Pˣ` of the frozen system and its trace.
    #[serde(serialize_with = "ser_mat")]
    pub steady_state_px: Mat,
    pub steady_state_trace: f64,
    /// Eigenvalues of the estimation-error dynamics `Ā − LC₂`.
    pub error_dynamics: Vec<[f64; 2]>,
    pub rejection: RejectionSummary,
    /// State and input bias constants, or the reason none exist.
    pub bias: std::result::Result<BiasBounds, String>,
    /// Only for linear state-feedback controllers.
    pub separation: Option<SeparationSummary>,
}

/// LTI system with the scenario's matrices frozen at `t`.
pub fn frozen(
    sc: &Scenario,
    t: f64,
) -> Result<(SystemSchedule, AuxMeasurementModel, WhiteNoiseSpec)> {
    let s = sc.sched.at(t);
    let sched = SystemSchedule::lti(s.a, s.b, s.g, s.c, s.d, s.h, s.w)?;
    let ax = &sc.aux;
    let aux = AuxMeasurementModel::constant(
        ax.cbar.at(t),
        ax.cbarbar.at(t),
        ax.dbar.at(t),
        ax.dbarbar.at(t),
        ax.hbar.at(t),
        ax.hbarbar.at(t),
    )?;
    let nz = sc.white.at(t)?;
    Ok((
        sched,
        aux,
        WhiteNoiseSpec::constant(nz.q, nz.r, nz.rbar, nz.rgrave),
    ))
}

/// Integrate the frozen ELISE Riccati equation from `P₀` until it stops
/// changing (relative change below `tol` per unit time) or `horizon` is
/// reached. Returns the filter at that point.
pub fn frozen_steady_state(
    sc: &Scenario,
    t: f64,
    h: f64,
    horizon: f64,
    tol: f64,
) -> Result<EliseFilter> {
    let (sched, aux, noise) = frozen(sc, t)?;
    let dims = sched.dims;
    let mut f = EliseFilter::new(
        sched,
        aux.clone(),
        noise,
        Vector::zeros(dims.n),
        sc.p0.clone(),
        0.0,
    )?;
    let sig = EliseSignals {
        y: Vector::zeros(dims.l),
        ybar: Vector::zeros(aux.lbar()),
        u: Vector::zeros(dims.m),
        udot: Vector::zeros(dims.m),
    };
    let steps = (horizon / h).ceil() as usize;
    for _ in 0..steps {
        let before = f.state().px.clone();
        f.step(&sig, h)?;
        let change = (&f.state().px - &before).norm() / (h * (1.0 + before.norm()));
        if change < tol {
            break;
        }
    }
    Ok(f)
}

/// Build the analysis report of `sc` at time `t`.
pub fn analyze(sc: &Scenario, t: f64) -> Result<AnalysisReport> {
    let s = sc.sched.at(t);
    let so = strong_observability(&s.a, &s.g, &s.c, &s.h, PROBE_POINTS, PROBE_SEED)?;
    let mut f = frozen_steady_state(sc, t, 1e-2, 200.0, 1e-10)?;
    let (fr, g) = f.gains_now()?;
    let eqs = equivalent_system(&g, &fr.dec, &fr.proj)?;
    let pbh = pbh_tests(&eqs.ae, &fr.dec.c2, &eqs.qe);
    let abreve = &g.abar - &g.l * &fr.dec.c2;
    let err_spec = eig(&abreve);
    let bias0 = sc.p0.diagonal().map(|v| v.max(0.0).sqrt());
    let bias =
        bias_bounds_lti(&abreve, &bias0, input_bias_gain(&g, &fr.dec)).map_err(|e| e.to_string());

    let g1 = &s.g * &fr.dec.svd.v1;
    let g2 = &s.g * &fr.dec.svd.v2;
    let (r1, r2) = (rejection_gain(&s.b, &g1), rejection_gain(&s.b, &g2));
    let rejection = RejectionSummary {
        j1: r1.j,
        j2: r2.j,
        gamma1: r1.gamma,
        gamma2: r2.gamma,
        lmi_min_eig: [r1.lmi_min_eig, r2.lmi_min_eig],
    };

    let separation = sc.controller.as_ref().and_then(|c| c.linear()).map(|spec| {
        let coupling = coupling_block(&spec, &g, &fr.dec);
        let rep = separation_spectrum(&s.a, &s.b, &spec.k, &g.abar, &g.l, &fr.dec.c2, &coupling);
        SeparationSummary {
            mismatch: rep.mismatch,
            closed_loop: eig_pairs(&rep.closed_loop),
            controller: eig_pairs(&rep.controller),
            estimator: eig_pairs(&rep.estimator),
        }
    });
    let px = f.state().px.clone();
    Ok(AnalysisReport {
        scenario: sc.name.clone(),
        t,
        dims: sc.sched.dims,
        p_h: fr.dec.p_h(),
        p2: fr.dec.p2(),
        strong_observability: so,
        pbh,
        equivalent: eqs,
        steady_state_trace: px.trace(),
        steady_state_px: px,
        error_dynamics: eig_pairs(&err_spec),
        rejection,
        bias,
        separation,
    })
}
