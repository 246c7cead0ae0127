//! Scenario definitions: filter model, truth plant, noise, unknown inputs
//! and controller.

pub mod custom;
pub mod helicopter;
pub mod lti;
pub mod reentry;

use std::sync::Arc;

use crate::elise::InputEstimate;
use crate::error::{LiseError, Result};
use crate::harness::config::{FilterKind, ScenarioConfig};
use crate::lincore::{Mat, Vector};
use crate::sysmodel::{
    AuxMeasurementModel, AuxSynthesis, GaussMarkovSpec, PlantModel, Signal, SystemSchedule,
    WhiteNoiseSpec,
};

/// Feedback law mapping the current estimates to the physical input.
pub trait ControlLaw: Send + Sync {
    /// `est` is `None` when no unknown-input estimate is available.
    fn control(&self, t: f64, xhat: &Vector, est: Option<&InputEstimate>) -> Vector;

    /// The gains when the law is linear state feedback with rejection.
    fn linear(&self) -> Option<crate::control::ControllerSpec> {
        None
    }
}

/// Linear law `u = −Kx̂ − J₁d̂₁ − J₂d̂₂`.
impl ControlLaw for crate::control::ControllerSpec {
    fn control(&self, _t: f64, xhat: &Vector, est: Option<&InputEstimate>) -> Vector {
        match est {
            Some(e) => crate::control::ControllerSpec::control(self, xhat, &e.d1hat, &e.d2hat),
            None => -(&self.k * xhat),
        }
    }

    fn linear(&self) -> Option<crate::control::ControllerSpec> {
        Some(self.clone())
    }
}

/// Nominal trajectory about which the filter model is linearized. The
/// filter runs on deviations from it.
#[derive(Clone)]
pub struct Reference {
    pub x: Signal,
    pub u: Signal,
    pub y: Signal,
    pub ybar: Signal,
}

/// Everything needed to run trials of one experiment.
#[derive(Clone)]
pub struct Scenario {
    pub name: String,
    /// Model used by the filters (deviation coordinates when `reference`
    /// is set).
    pub sched: SystemSchedule,
    /// Truth dynamics in physical coordinates.
    pub plant: Arc<dyn PlantModel>,
    /// Truth unknown input.
    pub d: Signal,
    pub white: WhiteNoiseSpec,
    pub aux: AuxMeasurementModel,
    pub aux_synthesis: AuxSynthesis,
    pub gm: GaussMarkovSpec,
    /// Nominal truth initial state.
    pub x0: Vector,
    /// Filter initial estimate (physical coordinates).
    pub xhat0: Vector,
    pub p0: Mat,
    pub t0: f64,
    pub t1: f64,
    pub dt: f64,
    pub fd_dt: f64,
    pub reference: Option<Reference>,
    pub controller: Option<Arc<dyn ControlLaw>>,
    /// Controller used with ALISE when it differs from `controller`.
    pub alise_controller: Option<Arc<dyn ControlLaw>>,
}

impl std::fmt::Debug for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Scenario")
            .field("name", &self.name)
            .field("dims", &self.sched.dims)
            .field("t0", &self.t0)
            .field("t1", &self.t1)
            .field("dt", &self.dt)
            .field("fd_dt", &self.fd_dt)
            .finish_non_exhaustive()
    }
}

impl Scenario {
    pub fn controller_for(&self, kind: FilterKind) -> Option<Arc<dyn ControlLaw>> {
        match kind {
            FilterKind::Alise => self
                .alise_controller
                .clone()
                .or_else(|| self.controller.clone()),
            _ => self.controller.clone(),
        }
    }

    /// Reference state at `t` (zero without a reference).
    pub fn x_ref(&self, t: f64) -> Vector {
        match &self.reference {
            Some(r) => r.x.at(t),
            None => Vector::zeros(self.sched.dims.n),
        }
    }

    pub fn u_ref(&self, t: f64) -> Vector {
        match &self.reference {
            Some(r) => r.u.at(t),
            None => Vector::zeros(self.sched.dims.m),
        }
    }

    /// Interval average of the reference output over `[t, t + h]`.
    pub fn y_ref_avg(&self, t: f64, h: f64) -> Vector {
        match &self.reference {
            Some(r) => (r.y.at(t) + r.y.at(t + h)) * 0.5,
            None => Vector::zeros(self.sched.dims.l),
        }
    }

    pub fn ydot_ref(&self, t: f64) -> Vector {
        match &self.reference {
            Some(r) => r.y.dot(t),
            None => Vector::zeros(self.sched.dims.l),
        }
    }

    pub fn ybar_ref(&self, t: f64) -> Vector {
        match &self.reference {
            Some(r) => r.ybar.at(t),
            None => Vector::zeros(self.aux.lbar()),
        }
    }

    /// Scale every noise intensity and the initial covariance by `s`.
    pub fn scale_noise(&mut self, s: f64) -> Result<()> {
        if !(s > 0.0 && s.is_finite()) {
            return Err(LiseError::Config(format!(
                "noise scale must be positive, got {s}"
            )));
        }
        if s == 1.0 {
            return Ok(());
        }
        let at = self.white.at(self.t0)?;
        self.white = WhiteNoiseSpec::constant(at.q * s, at.r * s, at.rbar * s, at.rgrave * s);
        let gm = &self.gm;
        self.gm = GaussMarkovSpec::stationary(
            gm.a_w.clone(),
            gm.b_w.clone(),
            &gm.q_g * s,
            gm.a_v.clone(),
            gm.a_vdot.clone(),
            gm.b_v.clone(),
            &gm.r_g * s,
        )?;
        self.p0 *= s;
        Ok(())
    }
}

/// Names accepted by [`build_named`].
pub const SCENARIO_NAMES: &[&str] = &["helicopter", "helicopter-lti", "reentry", "lti", "custom"];

/// Build the scenario named in `cfg`, applying its overrides.
pub fn build_scenario(cfg: &ScenarioConfig) -> Result<Scenario> {
    let mut sc = match cfg.scenario.as_str() {
        "custom" => {
            let spec = cfg.custom.as_ref().ok_or_else(|| {
                LiseError::Config("scenario \"custom\" needs a \"custom\" section".into())
            })?;
            custom::build(spec)?
        }
        name => build_named(name)?,
    };
    cfg.apply(&mut sc)?;
    Ok(sc)
}

/// Build one of the built-in scenarios by name.
pub fn build_named(name: &str) -> Result<Scenario> {
    match name {
        "helicopter" => helicopter::scenario(true),
        "helicopter-lti" => helicopter::scenario(false),
        "reentry" => reentry::scenario(),
        "lti" => lti::scenario(),
        other => Err(LiseError::UnknownScenario(other.to_string())),
    }
}
