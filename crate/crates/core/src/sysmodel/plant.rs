//! Ground-truth plant simulator producing synthetic measurements.
//!
//! The state drift is integrated with RK4 while the process noise is held
//! constant over each step (variance `Q/h` per sample in the white case,
//! the current Gauss–Markov value otherwise). Each measurement is the
//! interval average of the noise-free output plus one noise sample, so a
//! filter holding it over the same step sees an unbiased signal.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::aux::AuxMeasurementModel;
use super::decouple::decouple;
use super::noise::{
    gaussian, joint_measurement_factor, process_factor, GaussMarkovSpec, GmNoiseState, GmSampler,
    WhiteNoiseSpec,
};
use super::schedule::{Signal, SystemSchedule};
use crate::error::{LiseError, Result};
use crate::lincore::{rk4_step, Mat, Vector};

/// Continuous-time truth model `ẋ = f(t, x, u, d) + W(t) w`, `y = g(t, x, u, d) + v`.
pub trait PlantModel: Send + Sync {
    fn n(&self) -> usize;
    fn m(&self) -> usize;
    fn l(&self) -> usize;
    fn q(&self) -> usize;
    fn drift(&self, t: f64, x: &Vector, u: &Vector, d: &Vector) -> Vector;
    fn noise_gain(&self, t: f64) -> Mat;
    fn output(&self, t: f64, x: &Vector, u: &Vector, d: &Vector) -> Vector;
}

impl PlantModel for SystemSchedule {
    fn n(&self) -> usize {
        self.dims.n
    }
    fn m(&self) -> usize {
        self.dims.m
    }
    fn l(&self) -> usize {
        self.dims.l
    }
    fn q(&self) -> usize {
        self.dims.q
    }
    fn drift(&self, t: f64, x: &Vector, u: &Vector, d: &Vector) -> Vector {
        self.a.at(t) * x + self.b.at(t) * u + self.g.at(t) * d
    }
    fn noise_gain(&self, t: f64) -> Mat {
        self.w.at(t)
    }
    fn output(&self, t: f64, x: &Vector, u: &Vector, d: &Vector) -> Vector {
        self.c.at(t) * x + self.d.at(t) * u + self.h.at(t) * d
    }
}

/// Noise assumption used to generate data.
#[derive(Debug, Clone)]
pub enum NoiseModel {
    /// White noise with the given intensities.
    White(WhiteNoiseSpec),
    /// First-order process noise and second-order measurement noise.
    GaussMarkov(GaussMarkovSpec),
    /// Noise-free data.
    None,
}

/// How the auxiliary measurement `ȳ` is synthesised.
#[derive(Debug, Clone)]
pub enum AuxSynthesis {
    None,
    /// Evaluate the auxiliary measurement model with the noisy state rate.
    Model(AuxMeasurementModel),
    /// Filtered derivative `s/(τs + 1)` of one output channel.
    LowPassDerivative {
        channel: usize,
        tau: f64,
    },
}

/// One measurement sample, stamped with the start of its interval.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub t: f64,
    pub y: Vector,
    pub ybar: Vector,
}

enum NoiseSampler {
    White {
        spec: WhiteNoiseSpec,
        q_fac: Mat,
        v_fac: Mat,
        lbar: usize,
    },
    Gm {
        sampler: GmSampler,
        state: GmNoiseState,
    },
    Off,
}

/// Step-by-step truth simulator owning its random stream.
pub struct PlantSimulator {
    plant: Arc<dyn PlantModel>,
    noise: NoiseSampler,
    aux: AuxSynthesis,
    d: Signal,
    x: Vector,
    t: f64,
    h: f64,
    lowpass: f64,
    rng: ChaCha8Rng,
}

impl PlantSimulator {
    /// Create a simulator at `(t0, x0)` with step `h` and RNG seed `seed`.
    pub fn new(
        plant: Arc<dyn PlantModel>,
        noise: NoiseModel,
        aux: AuxSynthesis,
        d: Signal,
        x0: Vector,
        t0: f64,
        h: f64,
        seed: u64,
    ) -> Result<Self> {
        if !(h > 0.0) {
            return Err(LiseError::InvalidInput(
                "simulation step must be positive".into(),
            ));
        }
        if x0.len() != plant.n() {
            return Err(LiseError::InvalidInput(
                "initial state has wrong dimension".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lbar = match &aux {
            AuxSynthesis::Model(m) => m.lbar(),
            _ => 0,
        };
        let noise = match noise {
            NoiseModel::White(spec) => {
                let at = spec.at(t0)?;
                let (q_fac, v_fac) = Self::white_factors(&at, lbar, h)?;
                NoiseSampler::White {
                    spec,
                    q_fac,
                    v_fac,
                    lbar,
                }
            }
            NoiseModel::GaussMarkov(spec) => {
                spec.validate()?;
                let state = GmNoiseState::sample_initial(&spec, &mut rng);
                NoiseSampler::Gm {
                    sampler: GmSampler::new(&spec),
                    state,
                }
            }
            NoiseModel::None => NoiseSampler::Off,
        };
        let lowpass = match &aux {
            AuxSynthesis::LowPassDerivative { channel, .. } => plant
                .output(t0, &x0, &Vector::zeros(plant.m()), &d.at(t0))
                .get(*channel)
                .copied()
                .unwrap_or(0.0),
            _ => 0.0,
        };
        Ok(PlantSimulator {
            plant,
            noise,
            aux,
            d,
            x: x0,
            t: t0,
            h,
            lowpass,
            rng,
        })
    }

    fn white_factors(at: &super::noise::WhiteNoiseAt, lbar: usize, h: f64) -> Result<(Mat, Mat)> {
        let q_fac = process_factor(&at.q, h);
        let v_fac = if lbar > 0 {
            joint_measurement_factor(&at.r, &at.rbar, &at.rgrave, h)?
        } else {
            crate::lincore::psd_sqrt(&(&at.r / h))
        };
        Ok((q_fac, v_fac))
    }

    pub fn state(&self) -> &Vector {
        &self.x
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn step_size(&self) -> f64 {
        self.h
    }

    /// Truth unknown input at the current time.
    pub fn d_now(&self) -> Vector {
        self.d.at(self.t)
    }

    /// Current measurement-noise sample of the Gauss–Markov model, if any.
    pub fn gm_state(&self) -> Option<&GmNoiseState> {
        match &self.noise {
            NoiseSampler::Gm { state, .. } => Some(state),
            _ => None,
        }
    }

    /// Instantaneous output rate `ẏ(t)` at the current state, including the
    /// measurement-noise rate `v̇` and the held process noise when the
    /// noise is Gauss–Markov. With white noise only the noise-free part is
    /// returned.
    pub fn exact_output_rate(&self, u: &Vector, udot: &Vector) -> Vector {
        let t = self.t;
        let (w, vdot) = match &self.noise {
            NoiseSampler::Gm { state, .. } => {
                let l = self.plant.l();
                (state.w.clone(), state.v.rows(l, l).into_owned())
            }
            _ => (Vector::zeros(self.plant.q()), Vector::zeros(self.plant.l())),
        };
        let xdot = self.plant.drift(t, &self.x, u, &self.d.at(t)) + self.plant.noise_gain(t) * &w;
        let delta = 1e-5 * (1.0 + t.abs()).min(1e3);
        let eval = |s: f64| {
            let ts = t + s;
            self.plant
                .output(ts, &(&self.x + &xdot * s), &(u + udot * s), &self.d.at(ts))
        };
        (eval(delta) - eval(-delta)) / (2.0 * delta) + vdot
    }

    /// Advance one step with the known input `u` (and its rate `u̇`) held
    /// over the interval; returns the measurement of that interval.
    pub fn step(&mut self, u: &Vector, udot: &Vector) -> Result<Measurement> {
        let (t, h) = (self.t, self.h);
        let l = self.plant.l();
        // Noise samples for this interval.
        let (w, v, vbar) = match &mut self.noise {
            NoiseSampler::White {
                spec,
                q_fac,
                v_fac,
                lbar,
            } => {
                if !spec.is_constant() {
                    let (qf, vf) = Self::white_factors(&spec.at(t)?, *lbar, h)?;
                    *q_fac = qf;
                    *v_fac = vf;
                }
                let w = gaussian(q_fac, &mut self.rng);
                let joint = gaussian(v_fac, &mut self.rng);
                let v = joint.rows(0, l).into_owned();
                let vbar = joint.rows(l, joint.len() - l).into_owned();
                (w, v, vbar)
            }
            NoiseSampler::Gm { state, .. } => (state.w.clone(), state.v_value(), Vector::zeros(0)),
            NoiseSampler::Off => (
                Vector::zeros(self.plant.q()),
                Vector::zeros(l),
                Vector::zeros(0),
            ),
        };
        let plant = Arc::clone(&self.plant);
        let dsig = self.d.clone();
        let mut rhs = |s: f64, x: &Vector| -> Result<Vector> {
            Ok(plant.drift(s, x, u, &dsig.at(s)) + plant.noise_gain(s) * &w)
        };
        let x0 = self.x.clone();
        let x1 = rk4_step(&mut rhs, t, &x0, h).map_err(|_| LiseError::DivergedSimulation { t })?;
        let d0 = self.d.at(t);
        let d1 = self.d.at(t + h);
        let y_avg =
            (self.plant.output(t, &x0, u, &d0) + self.plant.output(t + h, &x1, u, &d1)) * 0.5;
        let y = y_avg + v;
        let ybar = match &self.aux {
            AuxSynthesis::None => Vector::zeros(0),
            AuxSynthesis::Model(m) => {
                let tm = t + 0.5 * h;
                let xm = (&x0 + &x1) * 0.5;
                let rate = (&x1 - &x0) / h;
                let clean = m.cbar.at(tm) * rate
                    + m.cbarbar.at(tm) * xm
                    + m.dbar.at(tm) * udot
                    + m.dbarbar.at(tm) * u
                    + m.hbar.at(tm) * self.d.dot(tm)
                    + m.hbarbar.at(tm) * self.d.at(tm);
                // Gauss–Markov and disabled noise have no auxiliary channel.
                if vbar.is_empty() {
                    clean
                } else {
                    clean + vbar
                }
            }
            AuxSynthesis::LowPassDerivative { channel, tau } => {
                let yc = y[*channel];
                let next = yc + (self.lowpass - yc) * (-h / tau).exp();
                let out = (next - self.lowpass) / h;
                self.lowpass = next;
                Vector::from_element(1, out)
            }
        };
        if let NoiseSampler::Gm { sampler, state } = &mut self.noise {
            *state = sampler.step(state, h, &mut self.rng);
        }
        if !x1.iter().all(|v| v.is_finite()) || !y.iter().all(|v| v.is_finite()) {
            return Err(LiseError::DivergedSimulation { t });
        }
        self.x = x1;
        self.t = t + h;
        Ok(Measurement { t, y, ybar })
    }
}

/// Open-loop truth trajectory.
#[derive(Debug, Clone, Default)]
pub struct PlantTrajectory {
    pub t: Vec<f64>,
    pub x: Vec<Vector>,
    pub d: Vec<Vector>,
    pub y: Vec<Vector>,
    pub ybar: Vec<Vector>,
}

impl PlantTrajectory {
    /// Decoupled outputs `(z₁, z₂)` of every sample for intensity `r`.
    pub fn decoupled(
        &self,
        sched: &SystemSchedule,
        r: &Mat,
        tol: f64,
    ) -> Result<(Vec<Vector>, Vec<Vector>)> {
        let mut z1 = Vec::with_capacity(self.y.len());
        let mut z2 = Vec::with_capacity(self.y.len());
        for (t, y) in self.t.iter().zip(&self.y) {
            let (a, b) = decouple(sched, r, *t, tol)?.split(y);
            z1.push(a);
            z2.push(b);
        }
        Ok((z1, z2))
    }
}

/// Simulate the plant open loop with known input `u` over `[t0, t1]`.
///
/// Sample `k` holds the state at `t_k` and the measurement of
/// `[t_k, t_k + h]`.
#[allow(clippy::too_many_arguments)]
pub fn simulate_plant(
    plant: Arc<dyn PlantModel>,
    noise: NoiseModel,
    aux: AuxSynthesis,
    d: Signal,
    u: &Signal,
    x0: Vector,
    t0: f64,
    t1: f64,
    h: f64,
    seed: u64,
) -> Result<PlantTrajectory> {
    let mut sim = PlantSimulator::new(plant, noise, aux, d.clone(), x0, t0, h, seed)?;
    let steps = ((t1 - t0) / h).round() as usize;
    let mut out = PlantTrajectory::default();
    for _ in 0..steps {
        let t = sim.time();
        out.t.push(t);
        out.x.push(sim.state().clone());
        out.d.push(d.at(t));
        let m = sim.step(&u.at(t), &u.dot(t))?;
        out.y.push(m.y);
        out.ybar.push(m.ybar);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sysmodel::noise::diag;

    fn small() -> SystemSchedule {
        SystemSchedule::lti(
            Mat::from_row_slice(2, 2, &[-1.0, 1.0, 0.0, -2.0]),
            Mat::from_row_slice(2, 1, &[0.0, 1.0]),
            Mat::from_row_slice(2, 1, &[1.0, 0.0]),
            Mat::identity(2, 2),
            Mat::zeros(2, 1),
            Mat::zeros(2, 1),
            Mat::identity(2, 2),
        )
        .unwrap()
    }

    #[test]
    fn zero_everything_gives_zero_trajectory() {
        let s = small();
        let noise = NoiseModel::White(WhiteNoiseSpec::constant(
            Mat::zeros(2, 2),
            Mat::identity(2, 2) * 1e-300,
            Mat::identity(0, 0),
            Mat::zeros(2, 0),
        ));
        let tr = simulate_plant(
            Arc::new(s),
            noise,
            AuxSynthesis::None,
            Signal::zero(1),
            &Signal::zero(1),
            Vector::zeros(2),
            0.0,
            1.0,
            0.01,
            3,
        )
        .unwrap();
        assert_eq!(tr.x.len(), 100);
        assert!(tr.x.iter().all(|x| x.norm() == 0.0));
        assert!(tr.y.iter().all(|y| y.norm() < 1e-140));
    }

    #[test]
    fn gm_ensemble_variance_matches_lyapunov() {
        let spec = GaussMarkovSpec::stationary(
            Mat::from_element(1, 1, 0.2),
            Mat::from_element(1, 1, 6.0),
            Mat::from_element(1, 1, 5e-4),
            Mat::identity(1, 1) * 0.25,
            Mat::identity(1, 1),
            Mat::identity(1, 1),
            diag(&[1e-3]),
        )
        .unwrap();
        let sampler = GmSampler::new(&spec);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let trials = 10_000;
        let (mut sw, mut sv) = (0.0, 0.0);
        for _ in 0..trials {
            let mut s = GmNoiseState::zeros(&spec);
            for _ in 0..1000 {
                s = sampler.step(&s, 0.02, &mut rng);
            }
            sw += s.w[0] * s.w[0];
            sv += s.v[0] * s.v[0];
        }
        let (pw, pv) = (spec.p0_w[(0, 0)], spec.p0_v[(0, 0)]);
        assert!(
            ((sw / trials as f64) / pw - 1.0).abs() < 0.05,
            "{} vs {pw}",
            sw / trials as f64
        );
        assert!(
            ((sv / trials as f64) / pv - 1.0).abs() < 0.05,
            "{} vs {pv}",
            sv / trials as f64
        );
    }

    #[test]
    fn seeded_runs_are_reproducible() {
        let s = Arc::new(small());
        let noise = NoiseModel::White(WhiteNoiseSpec::constant(
            Mat::identity(2, 2),
            Mat::identity(2, 2),
            Mat::identity(0, 0),
            Mat::zeros(2, 0),
        ));
        let run = || {
            simulate_plant(
                s.clone(),
                noise.clone(),
                AuxSynthesis::None,
                Signal::zero(1),
                &Signal::zero(1),
                Vector::zeros(2),
                0.0,
                0.5,
                0.01,
                42,
            )
            .unwrap()
        };
        assert_eq!(run().y, run().y);
    }
}
