//! Kalman–Bucy filter that ignores the unknown inputs, used as a
//! baseline and as the reference for the input-free limit.

use crate::elise::{FilterState, XpPair};
use crate::error::{LiseError, Result};
use crate::lincore::{psd_floor, rk4_step, spd_inv, symmetrize, Mat, Vector};
use crate::sysmodel::{SystemSchedule, WhiteNoiseSpec};

/// Gain `K = PCᵀR⁻¹` of the Kalman–Bucy filter.
pub fn kalman_gain(p: &Mat, c: &Mat, r: &Mat) -> Result<Mat> {
    let rinv =
        spd_inv(r).ok_or_else(|| LiseError::InvalidNoise("R is not positive definite".into()))?;
    Ok(p * c.transpose() * rinv)
}

/// Continuous-time Kalman–Bucy filter for `ẋ = Ax + Bu + Ww`,
/// `y = Cx + Du + v`.
pub struct KalmanBucy {
    sched: SystemSchedule,
    noise: WhiteNoiseSpec,
    state: FilterState,
}

impl KalmanBucy {
    pub fn new(
        sched: SystemSchedule,
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
        Ok(KalmanBucy {
            sched,
            noise,
            state: FilterState {
                xhat: xhat0,
                px: symmetrize(&p0),
                t: t0,
            },
        })
    }

    pub fn state(&self) -> &FilterState {
        &self.state
    }

    /// Gain at the current covariance.
    pub fn gain_now(&self) -> Result<Mat> {
        let t = self.state.t;
        kalman_gain(&self.state.px, &self.sched.c.at(t), &self.noise.at(t)?.r)
    }

    /// Advance over `[t, t + h]` with `y` and `u` held; returns the state
    /// before the step.
    pub fn step(&mut self, y: &Vector, u: &Vector, h: f64) -> Result<FilterState> {
        let before = self.state.clone();
        let (sched, noise) = (&self.sched, &self.noise);
        let mut rhs = |t: f64, s: &XpPair| -> Result<XpPair> {
            let (a, b, c, d, w) = (
                sched.a.at(t),
                sched.b.at(t),
                sched.c.at(t),
                sched.d.at(t),
                sched.w.at(t),
            );
            let nz = noise.at(t)?;
            let k = kalman_gain(&s.p, &c, &nz.r)?;
            let x = &a * &s.x + &b * u + &k * (y - &c * &s.x - &d * u);
            let p = &a * &s.p + &s.p * a.transpose() + &w * &nz.q * w.transpose()
                - &k * &nz.r * k.transpose();
            Ok(XpPair {
                x,
                p: symmetrize(&p),
            })
        };
        let y0 = XpPair {
            x: before.xhat.clone(),
            p: before.px.clone(),
        };
        let next = rk4_step(&mut rhs, before.t, &y0, h)?;
        self.state = FilterState {
            xhat: next.x,
            px: psd_floor(&next.p),
            t: before.t + h,
        };
        Ok(before)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn scalar_riccati_reaches_closed_form() {
        // ṗ = −2p + 1 − p², fixed point √2 − 1.
        let sched = SystemSchedule::lti(
            Mat::from_element(1, 1, -1.0),
            Mat::zeros(1, 1),
            Mat::zeros(1, 0),
            Mat::identity(1, 1),
            Mat::zeros(1, 1),
            Mat::zeros(1, 0),
            Mat::identity(1, 1),
        )
        .unwrap();
        let noise = WhiteNoiseSpec::constant(
            Mat::identity(1, 1),
            Mat::identity(1, 1),
            Mat::zeros(0, 0),
            Mat::zeros(1, 0),
        );
        let mut kb =
            KalmanBucy::new(sched, noise, Vector::zeros(1), Mat::identity(1, 1), 0.0).unwrap();
        for _ in 0..2000 {
            kb.step(&Vector::zeros(1), &Vector::zeros(1), 0.01).unwrap();
        }
        assert_abs_diff_eq!(kb.state().px[(0, 0)], 2f64.sqrt() - 1.0, epsilon = 1e-12);
    }
}
