//! Small stable time-invariant test system with one feedthrough-visible
//! and one dynamics-only unknown input, used for the statistical checks.

use std::sync::Arc;

use super::Scenario;
use crate::error::Result;
use crate::harness::signals::Waveform;
use crate::lincore::{Mat, Vector};
use crate::sysmodel::noise::diag;
use crate::sysmodel::{
    AuxMeasurementModel, AuxSynthesis, GaussMarkovSpec, SystemSchedule, WhiteNoiseSpec,
};

pub fn schedule() -> Result<SystemSchedule> {
    let a = Mat::from_row_slice(3, 3, &[-1.0, 0.5, 0.0, 0.0, -1.5, 1.0, 0.2, 0.0, -2.0]);
    let b = Mat::from_row_slice(3, 1, &[0.0, 1.0, 0.0]);
    let g = Mat::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    let h = Mat::from_row_slice(3, 2, &[0.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
    SystemSchedule::lti(
        a,
        b,
        g,
        Mat::identity(3, 3),
        Mat::zeros(3, 1),
        h,
        Mat::identity(3, 3),
    )
}

/// Auxiliary measurement `ȳ = ẋ₁`.
pub fn aux() -> Result<AuxMeasurementModel> {
    AuxMeasurementModel::constant(
        Mat::from_row_slice(1, 3, &[1.0, 0.0, 0.0]),
        Mat::zeros(1, 3),
        Mat::zeros(1, 1),
        Mat::zeros(1, 1),
        Mat::zeros(1, 2),
        Mat::zeros(1, 2),
    )
}

pub fn white_noise() -> WhiteNoiseSpec {
    WhiteNoiseSpec::constant(
        diag(&[0.01; 3]),
        diag(&[0.01; 3]),
        diag(&[0.01]),
        Mat::zeros(3, 1),
    )
}

pub fn gauss_markov() -> Result<GaussMarkovSpec> {
    GaussMarkovSpec::stationary(
        diag(&[1.0; 3]),
        diag(&[1.0; 3]),
        diag(&[0.01; 3]),
        diag(&[1.0; 3]),
        diag(&[2.0; 3]),
        diag(&[1.0; 3]),
        diag(&[0.01; 3]),
    )
}

pub fn truth_inputs() -> Vec<Waveform> {
    vec![
        Waveform::Sine {
            amplitude: 1.0,
            frequency: 1.0,
            phase: 0.0,
            offset: 0.0,
        },
        Waveform::Sine {
            amplitude: 0.5,
            frequency: 2.0,
            phase: std::f64::consts::FRAC_PI_2,
            offset: 0.0,
        },
    ]
}

pub fn scenario() -> Result<Scenario> {
    let sched = schedule()?;
    let aux = aux()?;
    Ok(Scenario {
        name: "lti".into(),
        plant: Arc::new(sched.clone()),
        d: crate::harness::signals::waveform_signal(truth_inputs()),
        white: white_noise(),
        aux_synthesis: AuxSynthesis::Model(aux.clone()),
        aux,
        gm: gauss_markov()?,
        x0: Vector::zeros(3),
        xhat0: Vector::zeros(3),
        p0: diag(&[0.1; 3]),
        t0: 0.0,
        t1: 5.0,
        dt: 2e-3,
        fd_dt: 0.05,
        reference: None,
        controller: None,
        alise_controller: None,
        sched,
    })
}
