//! Longitudinal helicopter dynamics near hover with a gusting horizontal
//! wind and a biased velocity sensor.
//!
//! State `[θ, q, u, y]`: pitch angle, pitch rate, horizontal velocity and
//! horizontal distance from the hover point. Unknown inputs
//! `d = [w_d, e_m]`: deterministic wind and velocity-sensor bias.

use std::sync::Arc;

use super::{ControlLaw, Scenario};
use crate::control::{lqr_gain, rejection_gains, ControllerSpec};
use crate::error::Result;
use crate::harness::signals::Waveform;
use crate::lincore::{pinv, Mat, Vector, DEFAULT_RANK_TOL};
use crate::sysmodel::noise::diag;
use crate::sysmodel::{
    AuxMeasurementModel, AuxSynthesis, GaussMarkovSpec, MatrixSchedule, SystemSchedule,
    WhiteNoiseSpec,
};

pub fn a() -> Mat {
    Mat::from_row_slice(
        4,
        4,
        &[
            0.0, 1.0, 0.0, 0.0, 0.0, -0.415, -0.011, 0.0, 9.8, -1.43, -0.0198, 0.0, 0.0, 0.0, 1.0,
            0.0,
        ],
    )
}

pub fn b() -> Mat {
    Mat::from_row_slice(4, 1, &[0.0, 6.27, 9.8, 0.0])
}

/// Wind input column, also the process-noise gain.
pub fn g_wind() -> Mat {
    Mat::from_row_slice(4, 1, &[0.0, -0.011, -0.0198, 0.0])
}

pub fn g() -> Mat {
    let mut g = Mat::zeros(4, 2);
    g.set_column(0, &g_wind().column(0));
    g
}

pub fn h() -> Mat {
    Mat::from_row_slice(3, 2, &[0.0, 0.0, 0.0, 1.0, 0.0, 0.0])
}

/// Output matrix; the velocity channel gain oscillates when `time_varying`.
pub fn c_schedule(time_varying: bool) -> MatrixSchedule {
    let c_at = |gain: f64| {
        Mat::from_row_slice(
            3,
            4,
            &[0.0, 0.0, 0.0, 1.0, 0.0, 0.0, gain, 0.0, 0.0, 1.0, 0.0, 0.0],
        )
    };
    if !time_varying {
        return MatrixSchedule::constant(c_at(0.8));
    }
    let entry = |v: f64| {
        let mut m = Mat::zeros(3, 4);
        m[(1, 2)] = v;
        m
    };
    MatrixSchedule::from_fn(3, 4, move |t| c_at(0.8 + 0.2 * t.sin()))
        .with_derivative(move |t| entry(0.2 * t.cos()))
        .with_second_derivative(move |t| entry(-0.2 * t.sin()))
}

pub fn schedule(time_varying: bool) -> Result<SystemSchedule> {
    SystemSchedule::new(
        MatrixSchedule::constant(a()),
        MatrixSchedule::constant(b()),
        MatrixSchedule::constant(g()),
        c_schedule(time_varying),
        MatrixSchedule::zeros(3, 1),
        MatrixSchedule::constant(h()),
        MatrixSchedule::constant(g_wind()),
    )
}

/// White-noise intensities and the accelerometer measurement `ȳ = u̇`.
pub fn white_noise() -> WhiteNoiseSpec {
    WhiteNoiseSpec::constant(
        diag(&[5e-4]),
        diag(&[1e-3, 1.6e-3, 0.9e-3]),
        diag(&[2e-3]),
        Mat::zeros(3, 1),
    )
}

pub fn accelerometer() -> Result<AuxMeasurementModel> {
    AuxMeasurementModel::constant(
        Mat::from_row_slice(1, 4, &[0.0, 0.0, 1.0, 0.0]),
        Mat::zeros(1, 4),
        Mat::zeros(1, 1),
        Mat::zeros(1, 1),
        Mat::zeros(1, 2),
        Mat::zeros(1, 2),
    )
}

pub fn gauss_markov() -> Result<GaussMarkovSpec> {
    GaussMarkovSpec::stationary(
        diag(&[0.2]),
        diag(&[6.0]),
        diag(&[5e-4]),
        diag(&[0.25; 3]),
        diag(&[1.0; 3]),
        diag(&[1.0; 3]),
        diag(&[1e-3, 1.6e-3, 0.9e-3]),
    )
}

/// LQR state feedback penalising the hover-point distance.
pub fn lqr() -> Result<Mat> {
    let c_lqr = Mat::from_row_slice(1, 4, &[0.0, 0.0, 0.0, 1.0]);
    lqr_gain(&a(), &b(), &(c_lqr.transpose() * &c_lqr), &diag(&[5.0]))
}

/// Rejection gains `(J_wind, J_bias)` for the two physical inputs.
pub fn physical_rejection_gains() -> (Mat, Mat) {
    let g = g();
    let (j_wind, j_bias, _, _) = rejection_gains(
        &b(),
        &g.columns(0, 1).into_owned(),
        &g.columns(1, 1).into_owned(),
    );
    (j_wind, j_bias)
}

/// Truth unknown inputs: sawtooth wind and sinusoidal sensor bias.
pub fn truth_inputs() -> Vec<Waveform> {
    vec![
        Waveform::Sawtooth {
            amplitude: 5.0,
            period: 4.0,
            offset: 0.0,
        },
        Waveform::Sine {
            amplitude: 0.5,
            frequency: 1.0,
            phase: 0.0,
            offset: 0.0,
        },
    ]
}

/// LQR plus rejection expressed in the projected input coordinates of the
/// (constant) feedthrough factorization.
fn controller(sched: &SystemSchedule, reject: bool) -> Result<Arc<dyn ControlLaw>> {
    let svd = crate::asvd::structured_svd(&sched.h.at(0.0), DEFAULT_RANK_TOL)?;
    let k = lqr()?;
    let bp = pinv(&b(), DEFAULT_RANK_TOL);
    let j = &bp * g();
    let (j1, j2) = if reject {
        (&j * &svd.v1, &j * &svd.v2)
    } else {
        (Mat::zeros(1, svd.v1.ncols()), Mat::zeros(1, svd.v2.ncols()))
    };
    Ok(Arc::new(ControllerSpec {
        k,
        j1,
        j2,
        gamma1: f64::NAN,
        gamma2: f64::NAN,
    }))
}

/// Helicopter scenario; `time_varying = false` freezes the velocity
/// sensor gain at its mean.
pub fn scenario(time_varying: bool) -> Result<Scenario> {
    let sched = schedule(time_varying)?;
    let aux = accelerometer()?;
    let elise_ctrl = controller(&sched, true)?;
    let alise_ctrl = controller(&sched, false)?;
    Ok(Scenario {
        name: if time_varying {
            "helicopter"
        } else {
            "helicopter-lti"
        }
        .into(),
        plant: Arc::new(sched.clone()),
        d: crate::harness::signals::waveform_signal(truth_inputs()),
        white: white_noise(),
        aux_synthesis: AuxSynthesis::Model(aux.clone()),
        aux,
        gm: gauss_markov()?,
        x0: Vector::zeros(4),
        xhat0: Vector::zeros(4),
        p0: diag(&[1e-2; 4]),
        t0: 0.0,
        t1: 10.0,
        dt: 1e-3,
        fd_dt: 0.05,
        reference: None,
        controller: Some(elise_ctrl),
        alise_controller: Some(alise_ctrl),
        sched,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn dimensions() {
        let s = schedule(true).unwrap();
        let d = s.dims;
        assert_eq!((d.n, d.l, d.p, d.m), (4, 3, 2, 1));
    }

    #[test]
    fn wind_rejection_gain() {
        let (jw, jb) = physical_rejection_gains();
        // B†g = Bᵀg / BᵀB
        let bb = 6.27f64 * 6.27 + 9.8 * 9.8;
        let expect = (6.27 * -0.011 + 9.8 * -0.0198) / bb;
        assert_abs_diff_eq!(jw[(0, 0)], expect, epsilon = 1e-15);
        assert_abs_diff_eq!(jw[(0, 0)], -1.943e-3, epsilon = 1e-6);
        assert_abs_diff_eq!(jb[(0, 0)], 0.0);
    }
}
