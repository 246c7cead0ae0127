//! Vehicle reentry tracked by a ground radar, with a horizontal crosswind
//! and a range fault as unknown inputs.
//!
//! State `[x₁, x₂, x₃, x₄, x₅]`: vertical and horizontal position,
//! vertical and horizontal velocity, and an aerodynamic parameter. The
//! truth plant is nonlinear; the filters run on the model linearized about
//! a cubic reference trajectory, in deviation coordinates.

use std::sync::Arc;

use super::{ControlLaw, Reference, Scenario};
use crate::elise::InputEstimate;
use crate::error::Result;
use crate::harness::signals::Waveform;
use crate::lincore::{pinv, Mat, Vector, DEFAULT_RANK_TOL};
use crate::sysmodel::noise::diag;
use crate::sysmodel::{
    AuxMeasurementModel, AuxSynthesis, GaussMarkovSpec, MatrixSchedule, PlantModel, Signal,
    SystemSchedule, WhiteNoiseSpec,
};

pub const BETA0: f64 = -0.59783;
pub const H0: f64 = 13.406;
pub const GM0: f64 = 3.986e5;
pub const R0: f64 = 6374.0;
/// Radar position; the surface point below the landing site.
pub const RADAR: (f64, f64) = (R0, 0.0);
pub const T_FINAL: f64 = 200.0;
pub const K_D: f64 = 1.8;
pub const K_P: f64 = 1.0;
/// Time constant of the filtered range-rate derivative.
pub const LOWPASS_TAU: f64 = 0.05;

/// Reference endpoints `(position, velocity)` of the vertical and
/// horizontal channels, and the nominal aerodynamic parameter.
pub const REF_START: [(f64, f64); 2] = [(6500.4, -1.8093), (349.14, -6.7967)];
pub const REF_END: [(f64, f64); 2] = [(6400.0, -0.5), (150.0, -0.5)];
pub const REF_X5: f64 = 0.7;

/// Initial state of the vehicle and of the filters.
pub const X0: [f64; 5] = [6500.4, 349.14, -1.8093, -6.7967, 0.6932];

/// Drag and gravity terms `(𝒟, 𝒢)`.
pub fn drag_gravity(x: &Vector) -> (f64, f64) {
    let rho = x[0].hypot(x[1]);
    let speed = x[2].hypot(x[3]);
    let drag = -BETA0 * x[4].exp() * ((R0 - rho) / H0).exp() * speed;
    let grav = -GM0 / rho.powi(3);
    (drag, grav)
}

/// `f(x, u)` without unknown input or noise.
pub fn dynamics(x: &Vector, u: &Vector) -> Vector {
    let (dr, gr) = drag_gravity(x);
    Vector::from_row_slice(&[
        x[2],
        x[3],
        dr * x[2] + gr * x[0] + u[0],
        dr * x[3] + gr * x[1] + u[1],
        0.0,
    ])
}

/// Jacobian `∂f/∂x`.
pub fn dynamics_jacobian(x: &Vector) -> Mat {
    let rho = x[0].hypot(x[1]);
    let v2 = x[2] * x[2] + x[3] * x[3];
    let (dr, gr) = drag_gravity(x);
    let grad_d = [
        -dr * x[0] / (rho * H0),
        -dr * x[1] / (rho * H0),
        dr * x[2] / v2,
        dr * x[3] / v2,
        dr,
    ];
    let grad_g = [
        -3.0 * gr * x[0] / (rho * rho),
        -3.0 * gr * x[1] / (rho * rho),
        0.0,
        0.0,
        0.0,
    ];
    let mut a = Mat::zeros(5, 5);
    a[(0, 2)] = 1.0;
    a[(1, 3)] = 1.0;
    for j in 0..5 {
        a[(2, j)] = x[2] * grad_d[j] + x[0] * grad_g[j];
        a[(3, j)] = x[3] * grad_d[j] + x[1] * grad_g[j];
    }
    a[(2, 0)] += gr;
    a[(2, 2)] += dr;
    a[(3, 1)] += gr;
    a[(3, 3)] += dr;
    a
}

/// Radar range, bearing and range rate without fault or noise.
pub fn radar(x: &Vector) -> Vector {
    let (dx, dy) = (x[0] - RADAR.0, x[1] - RADAR.1);
    let r = dx.hypot(dy);
    Vector::from_row_slice(&[r, dy.atan2(dx), (dx * x[2] + dy * x[3]) / r])
}

/// Jacobian of [`radar`].
pub fn radar_jacobian(x: &Vector) -> Mat {
    let (dx, dy) = (x[0] - RADAR.0, x[1] - RADAR.1);
    let r2 = dx * dx + dy * dy;
    let r = r2.sqrt();
    let s = dx * x[2] + dy * x[3];
    Mat::from_row_slice(
        3,
        5,
        &[
            dx / r,
            dy / r,
            0.0,
            0.0,
            0.0,
            -dy / r2,
            dx / r2,
            0.0,
            0.0,
            0.0,
            x[2] / r - dx * s / (r2 * r),
            x[3] / r - dy * s / (r2 * r),
            dx / r,
            dy / r,
            0.0,
        ],
    )
}

/// Process noise enters both velocities. The third component exists only
/// to match the three-dimensional Gauss–Markov model; the aerodynamic
/// parameter is constant, so it has no effect.
pub fn noise_gain() -> Mat {
    let mut w = Mat::zeros(5, 3);
    w[(2, 0)] = 1.0;
    w[(3, 1)] = 1.0;
    w
}

/// Crosswind acts on the horizontal velocity.
pub fn input_gain() -> Mat {
    let mut g = Mat::zeros(5, 2);
    g[(3, 0)] = 1.0;
    g
}

/// Range fault enters the range channel.
pub fn feedthrough() -> Mat {
    let mut h = Mat::zeros(3, 2);
    h[(0, 1)] = 1.0;
    h
}

pub fn control_gain() -> Mat {
    let mut b = Mat::zeros(5, 2);
    b[(2, 0)] = 1.0;
    b[(3, 1)] = 1.0;
    b
}

/// Cubic through `(p₀, v₀)` at 0 and `(p₁, v₁)` at `tf`: coefficients `a₀..a₃`.
pub fn hermite_cubic(p0: f64, v0: f64, p1: f64, v1: f64, tf: f64) -> [f64; 4] {
    [
        p0,
        v0,
        (3.0 * (p1 - p0) - (2.0 * v0 + v1) * tf) / (tf * tf),
        (2.0 * (p0 - p1) + (v0 + v1) * tf) / (tf * tf * tf),
    ]
}

/// Value, first and second derivative of a cubic at `t`.
fn cubic(c: &[f64; 4], t: f64) -> (f64, f64, f64) {
    (
        c[0] + t * (c[1] + t * (c[2] + t * c[3])),
        c[1] + t * (2.0 * c[2] + 3.0 * c[3] * t),
        2.0 * c[2] + 6.0 * c[3] * t,
    )
}

/// Polynomial reference trajectory.
#[derive(Debug, Clone, Copy)]
pub struct ReferenceTrajectory {
    pub vertical: [f64; 4],
    pub horizontal: [f64; 4],
    pub x5: f64,
}

impl ReferenceTrajectory {
    pub fn fit() -> Self {
        let [(p0, v0), (q0, w0)] = REF_START;
        let [(p1, v1), (q1, w1)] = REF_END;
        ReferenceTrajectory {
            vertical: hermite_cubic(p0, v0, p1, v1, T_FINAL),
            horizontal: hermite_cubic(q0, w0, q1, w1, T_FINAL),
            x5: REF_X5,
        }
    }

    /// Reference state, its rate and the position accelerations.
    pub fn eval(&self, t: f64) -> (Vector, Vector) {
        let (p, v, a) = cubic(&self.vertical, t);
        let (q, w, b) = cubic(&self.horizontal, t);
        (
            Vector::from_row_slice(&[p, q, v, w, self.x5]),
            Vector::from_row_slice(&[v, w, a, b, 0.0]),
        )
    }

    pub fn state(&self, t: f64) -> Vector {
        self.eval(t).0
    }

    /// Input that keeps the noise-free plant on the reference.
    pub fn nominal_input(&self, t: f64) -> Vector {
        let (x, xd) = self.eval(t);
        let f0 = dynamics(&x, &Vector::zeros(2));
        Vector::from_row_slice(&[xd[2] - f0[2], xd[3] - f0[3]])
    }
}

/// Nonlinear truth plant.
#[derive(Debug, Clone)]
pub struct ReentryPlant;

impl PlantModel for ReentryPlant {
    fn n(&self) -> usize {
        5
    }
    fn m(&self) -> usize {
        2
    }
    fn l(&self) -> usize {
        3
    }
    fn q(&self) -> usize {
        3
    }
    fn drift(&self, _t: f64, x: &Vector, u: &Vector, d: &Vector) -> Vector {
        dynamics(x, u) + input_gain() * d
    }
    fn noise_gain(&self, _t: f64) -> Mat {
        noise_gain()
    }
    fn output(&self, _t: f64, x: &Vector, _u: &Vector, d: &Vector) -> Vector {
        radar(x) + feedthrough() * d
    }
}

/// Feedback linearizing PD tracking law with crosswind cancellation.
pub struct TrackingLaw {
    pub reference: ReferenceTrajectory,
    pub k_d: f64,
    pub k_p: f64,
    /// Rejection gain acting on the physical input estimate.
    pub j: Mat,
}

impl ControlLaw for TrackingLaw {
    fn control(&self, t: f64, xhat: &Vector, est: Option<&InputEstimate>) -> Vector {
        let (xr, xrd) = self.reference.eval(t);
        let (dr, gr) = drag_gravity(xhat);
        let mut u = Vector::from_row_slice(&[
            xrd[2]
                - dr * xhat[2]
                - gr * xhat[0]
                - self.k_d * (xhat[2] - xr[2])
                - self.k_p * (xhat[0] - xr[0]),
            xrd[3]
                - dr * xhat[3]
                - gr * xhat[1]
                - self.k_d * (xhat[3] - xr[3])
                - self.k_p * (xhat[1] - xr[1]),
        ]);
        if let Some(e) = est {
            u -= &self.j * &e.dhat;
        }
        u
    }
}

/// Direction of the cross-covariance between the radar noise and the
/// auxiliary-channel noise.
pub const RGRAVE_DIRECTION: [f64; 3] = [0.0866, 0.0, 0.0274];

/// White-noise intensities. The cross-covariance keeps the direction of
/// [`RGRAVE_DIRECTION`] but is scaled so that the Schur complement
/// `R̄ − R̀ᵀR⁻¹R̀` equals `R̄/2`, which makes the joint intensity positive
/// definite.
pub fn white_noise() -> WhiteNoiseSpec {
    let r = [1e-5, 1e-4, 1e-5];
    let rbar = 0.75;
    let quad: f64 = RGRAVE_DIRECTION
        .iter()
        .zip(&r)
        .map(|(c, ri)| c * c / ri)
        .sum();
    let kappa = (0.5 * rbar / quad).sqrt();
    WhiteNoiseSpec::constant(
        diag(&[5e-4, 1e-4, 0.0]),
        diag(&r),
        diag(&[rbar]),
        Mat::from_row_slice(3, 1, &RGRAVE_DIRECTION.map(|c| kappa * c)),
    )
}

pub fn gauss_markov() -> Result<GaussMarkovSpec> {
    GaussMarkovSpec::stationary(
        diag(&[0.2; 3]),
        diag(&[1.0; 3]),
        diag(&[5e-4, 1e-4, 2e-4]),
        diag(&[0.25; 3]),
        diag(&[1.0; 3]),
        diag(&[1.0; 3]),
        diag(&[5e-3, 1e-4, 1e-5]),
    )
}

/// Crosswind: slow sawtooth plus chirp. Range fault: a triangular drift
/// active on part of the horizon.
pub fn truth_inputs() -> Vec<Waveform> {
    vec![
        Waveform::Sum {
            terms: vec![
                Waveform::Sawtooth {
                    amplitude: 2e-3,
                    period: 50.0,
                    offset: 0.0,
                },
                Waveform::Chirp {
                    amplitude: 1e-3,
                    f0: 0.01,
                    rate: 2e-4,
                },
            ],
        },
        Waveform::Window {
            start: 50.0,
            end: 150.0,
            inner: Box::new(Waveform::Triangle {
                amplitude: 0.2,
                period: 50.0,
            }),
        },
    ]
}

/// Linearized filter model along the reference.
pub fn linearized_schedule(reference: ReferenceTrajectory) -> Result<SystemSchedule> {
    let a = MatrixSchedule::from_fn(5, 5, move |t| dynamics_jacobian(&reference.state(t)));
    let c = MatrixSchedule::from_fn(3, 5, move |t| radar_jacobian(&reference.state(t)));
    SystemSchedule::new(
        a,
        MatrixSchedule::constant(control_gain()),
        MatrixSchedule::constant(input_gain()),
        c,
        MatrixSchedule::zeros(3, 2),
        MatrixSchedule::constant(feedthrough()),
        MatrixSchedule::constant(noise_gain()),
    )
}

/// Auxiliary measurement: time derivative of the range-rate channel.
pub fn range_rate_derivative(sched: &SystemSchedule) -> Result<AuxMeasurementModel> {
    let c = sched.c.clone();
    let c2 = sched.c.clone();
    let row = |m: Mat| m.rows(2, 1).into_owned();
    AuxMeasurementModel::new(
        MatrixSchedule::from_fn(1, 5, move |t| row(c.at(t))),
        MatrixSchedule::from_fn(1, 5, move |t| row(c2.dot(t))),
        MatrixSchedule::zeros(1, 2),
        MatrixSchedule::zeros(1, 2),
        MatrixSchedule::zeros(1, 2),
        MatrixSchedule::zeros(1, 2),
    )
}

pub fn scenario() -> Result<Scenario> {
    let reference = ReferenceTrajectory::fit();
    let sched = linearized_schedule(reference)?;
    let aux = range_rate_derivative(&sched)?;
    let j = pinv(&control_gain(), DEFAULT_RANK_TOL) * input_gain();
    // The finite-difference input estimate of ALISE lags the applied input,
    // and feeding it back through the matched channel destabilizes the
    // loop, so ALISE tracks without rejection.
    let alise_law = Arc::new(TrackingLaw {
        reference,
        k_d: K_D,
        k_p: K_P,
        j: Mat::zeros(j.nrows(), j.ncols()),
    });
    let law = Arc::new(TrackingLaw {
        reference,
        k_d: K_D,
        k_p: K_P,
        j,
    });
    let refsig = Reference {
        x: Signal::from_fn(5, move |t| reference.state(t))
            .with_derivative(move |t| reference.eval(t).1),
        u: Signal::from_fn(2, move |t| reference.nominal_input(t)),
        y: Signal::from_fn(3, move |t| radar(&reference.state(t))).with_derivative(move |t| {
            let (x, xd) = reference.eval(t);
            radar_jacobian(&x) * xd
        }),
        ybar: Signal::from_fn(1, move |t| {
            let (x, xd) = reference.eval(t);
            (radar_jacobian(&x) * xd).rows(2, 1).into_owned()
        })
        .with_derivative(move |t| {
            let h = 1e-4;
            let f = |s: f64| {
                let (x, xd) = reference.eval(s);
                (radar_jacobian(&x) * xd)[2]
            };
            Vector::from_element(1, (f(t + h) - f(t - h)) / (2.0 * h))
        }),
    };
    let x0 = Vector::from_row_slice(&X0);
    Ok(Scenario {
        name: "reentry".into(),
        plant: Arc::new(ReentryPlant),
        d: crate::harness::signals::waveform_signal(truth_inputs()),
        white: white_noise(),
        aux_synthesis: AuxSynthesis::LowPassDerivative {
            channel: 2,
            tau: LOWPASS_TAU,
        },
        aux,
        gm: gauss_markov()?,
        xhat0: x0.clone(),
        x0,
        p0: diag(&[1e-3, 1e-3, 1e-5, 1e-5, 1e-4]),
        t0: 0.0,
        t1: T_FINAL,
        dt: 5e-3,
        fd_dt: 0.05,
        reference: Some(refsig),
        controller: Some(law),
        alise_controller: Some(alise_law),
        sched,
    })
}
