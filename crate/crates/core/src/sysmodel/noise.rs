//! White-noise intensities and first/second-order Gauss–Markov noise
//! models with their covariance dynamics and sample paths.

use rand::Rng;
use rand_distr::StandardNormal;

use super::schedule::MatrixSchedule;
use crate::error::{LiseError, Result};
use crate::lincore::{
    block_diag, eig, hstack, is_positive_definite, min_eigenvalue, psd_sqrt, solve_lyapunov,
    vstack, Mat, Vector,
};

/// Intensities of the white process noise `w`, measurement noise `v`,
/// auxiliary measurement noise `v̄` and the cross-intensity `R̀` of `v`, `v̄`.
#[derive(Debug, Clone)]
pub struct WhiteNoiseSpec {
    pub q: MatrixSchedule,
    pub r: MatrixSchedule,
    pub rbar: MatrixSchedule,
    pub rgrave: MatrixSchedule,
}

/// White-noise intensities at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct WhiteNoiseAt {
    pub q: Mat,
    pub r: Mat,
    pub rbar: Mat,
    pub rgrave: Mat,
}

impl WhiteNoiseSpec {
    /// Constant intensities.
    pub fn constant(q: Mat, r: Mat, rbar: Mat, rgrave: Mat) -> Self {
        WhiteNoiseSpec {
            q: MatrixSchedule::constant(q),
            r: MatrixSchedule::constant(r),
            rbar: MatrixSchedule::constant(rbar),
            rgrave: MatrixSchedule::constant(rgrave),
        }
    }

    pub fn is_constant(&self) -> bool {
        self.q.is_constant()
            && self.r.is_constant()
            && self.rbar.is_constant()
            && self.rgrave.is_constant()
    }

    /// Intensities at `t`, validated: `Q ⪰ 0`, `R ≻ 0`, `R̄ ≻ 0`.
    pub fn at(&self, t: f64) -> Result<WhiteNoiseAt> {
        let at = WhiteNoiseAt {
            q: self.q.at(t),
            r: self.r.at(t),
            rbar: self.rbar.at(t),
            rgrave: self.rgrave.at(t),
        };
        if min_eigenvalue(&at.q) < -1e-12 * (1.0 + at.q.norm()) {
            return Err(LiseError::InvalidNoise(
                "Q is not positive semidefinite".into(),
            ));
        }
        if !is_positive_definite(&at.r) {
            return Err(LiseError::InvalidNoise("R is not positive definite".into()));
        }
        if !is_positive_definite(&at.rbar) {
            return Err(LiseError::InvalidNoise(
                "Rbar is not positive definite".into(),
            ));
        }
        if at.rgrave.shape() != (at.r.nrows(), at.rbar.nrows()) {
            return Err(LiseError::InvalidNoise("Rgrave must be l x lbar".into()));
        }
        Ok(at)
    }
}

/// Gauss–Markov noise models
/// `ẇ + A_w w = B_w w_G` and `v̈ + A_v̇ v̇ + A_v v = B_v v_G`
/// with white drivers of intensity `Q_G`, `R_G`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussMarkovSpec {
    pub a_w: Mat,
    pub b_w: Mat,
    pub q_g: Mat,
    pub a_v: Mat,
    pub a_vdot: Mat,
    pub b_v: Mat,
    pub r_g: Mat,
    pub p0_w: Mat,
    pub p0_v: Mat,
}

impl GaussMarkovSpec {
    /// Spec with stationary initial covariances.
    pub fn stationary(
        a_w: Mat,
        b_w: Mat,
        q_g: Mat,
        a_v: Mat,
        a_vdot: Mat,
        b_v: Mat,
        r_g: Mat,
    ) -> Result<Self> {
        let q = a_w.nrows();
        let l = a_v.nrows();
        let mut s = GaussMarkovSpec {
            a_w,
            b_w,
            q_g,
            a_v,
            a_vdot,
            b_v,
            r_g,
            p0_w: Mat::zeros(q, q),
            p0_v: Mat::zeros(2 * l, 2 * l),
        };
        s.validate()?;
        s.p0_w = s.stationary_pw()?;
        s.p0_v = s.stationary_pv()?;
        Ok(s)
    }

    pub fn q(&self) -> usize {
        self.a_w.nrows()
    }

    pub fn l(&self) -> usize {
        self.a_v.nrows()
    }

    /// Stacked second-order matrix `A̲_v = [[0, I], [−A_v, −A_v̇]]`.
    pub fn a_v_stacked(&self) -> Mat {
        let l = self.l();
        let top = hstack(&[&Mat::zeros(l, l), &Mat::identity(l, l)]);
        let bot = hstack(&[&(-&self.a_v), &(-&self.a_vdot)]);
        vstack(&[&top, &bot])
    }

    /// Stacked input matrix `B̲_v = [0; B_v]`.
    pub fn b_v_stacked(&self) -> Mat {
        let l = self.l();
        vstack(&[&Mat::zeros(l, self.b_v.ncols()), &self.b_v])
    }

    /// Check stability of both models and definiteness of the intensities.
    pub fn validate(&self) -> Result<()> {
        if !eig(&(-&self.a_w)).is_hurwitz() {
            return Err(LiseError::InvalidNoise("-A_w must be Hurwitz".into()));
        }
        if !eig(&self.a_v_stacked()).is_hurwitz() {
            return Err(LiseError::InvalidNoise(
                "stacked A_v must be Hurwitz".into(),
            ));
        }
        if min_eigenvalue(&self.q_g) < -1e-12 {
            return Err(LiseError::InvalidNoise(
                "Q_G is not positive semidefinite".into(),
            ));
        }
        if !is_positive_definite(&self.r_g) {
            return Err(LiseError::InvalidNoise(
                "R_G is not positive definite".into(),
            ));
        }
        Ok(())
    }

    /// Stationary `Pʷ` solving `−A_w P − P A_wᵀ + B_w Q_G B_wᵀ = 0`.
    pub fn stationary_pw(&self) -> Result<Mat> {
        solve_lyapunov(
            &(-&self.a_w),
            &(&self.b_w * &self.q_g * self.b_w.transpose()),
        )
    }

    /// Stationary `Pᵛ` solving `A̲_v P + P A̲_vᵀ + B̲_v R_G B̲_vᵀ = 0`.
    pub fn stationary_pv(&self) -> Result<Mat> {
        let b = self.b_v_stacked();
        solve_lyapunov(&self.a_v_stacked(), &(&b * &self.r_g * b.transpose()))
    }

    /// Joint covariance of `[v; v̇]` split into `R`, `R̄`, `R̀` blocks.
    pub fn split_pv(pv: &Mat) -> (Mat, Mat, Mat) {
        let l = pv.nrows() / 2;
        (
            pv.view((0, 0), (l, l)).into_owned(),
            pv.view((l, l), (l, l)).into_owned(),
            pv.view((0, l), (l, l)).into_owned(),
        )
    }
}

/// Right-hand sides of the Gauss–Markov covariance equations.
pub fn gm_cov_rhs(spec: &GaussMarkovSpec, pw: &Mat, pv: &Mat) -> (Mat, Mat) {
    let pw_dot =
        -&spec.a_w * pw - pw * spec.a_w.transpose() + &spec.b_w * &spec.q_g * spec.b_w.transpose();
    let av = spec.a_v_stacked();
    let bv = spec.b_v_stacked();
    let pv_dot = &av * pv + pv * av.transpose() + &bv * &spec.r_g * bv.transpose();
    (pw_dot, pv_dot)
}

/// Sample state of the Gauss–Markov noise processes: `w` and `[v; v̇]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GmNoiseState {
    pub w: Vector,
    pub v: Vector,
}

impl GmNoiseState {
    pub fn zeros(spec: &GaussMarkovSpec) -> Self {
        GmNoiseState {
            w: Vector::zeros(spec.q()),
            v: Vector::zeros(2 * spec.l()),
        }
    }

    /// Draw an initial state from the initial covariances `P0_w`, `P0_v`.
    pub fn sample_initial<R: Rng + ?Sized>(spec: &GaussMarkovSpec, rng: &mut R) -> Self {
        GmNoiseState {
            w: gaussian(&psd_sqrt(&spec.p0_w), rng),
            v: gaussian(&psd_sqrt(&spec.p0_v), rng),
        }
    }

    /// Measurement noise value `v`.
    pub fn v_value(&self) -> Vector {
        self.v.rows(0, self.v.len() / 2).into_owned()
    }
}

/// `F ξ` with `ξ ~ N(0, I)`.
pub fn gaussian<R: Rng + ?Sized>(factor: &Mat, rng: &mut R) -> Vector {
    let xi = Vector::from_iterator(
        factor.ncols(),
        (0..factor.ncols()).map(|_| rng.sample::<f64, _>(StandardNormal)),
    );
    factor * xi
}

/// Precomputed square roots for repeated Euler–Maruyama steps.
#[derive(Debug, Clone)]
pub struct GmSampler {
    spec: GaussMarkovSpec,
    a_v_st: Mat,
    drive_w: Mat,
    drive_v: Mat,
}

impl GmSampler {
    pub fn new(spec: &GaussMarkovSpec) -> Self {
        let bw = &spec.b_w * psd_sqrt(&spec.q_g);
        let bv = spec.b_v_stacked() * psd_sqrt(&spec.r_g);
        GmSampler {
            spec: spec.clone(),
            a_v_st: spec.a_v_stacked(),
            drive_w: bw,
            drive_v: bv,
        }
    }

    pub fn spec(&self) -> &GaussMarkovSpec {
        &self.spec
    }

    /// One Euler–Maruyama step of size `h`.
    pub fn step<R: Rng + ?Sized>(&self, s: &GmNoiseState, h: f64, rng: &mut R) -> GmNoiseState {
        let sh = h.sqrt();
        let w = &s.w - &self.spec.a_w * &s.w * h + gaussian(&self.drive_w, rng) * sh;
        let v = &s.v + &self.a_v_st * &s.v * h + gaussian(&self.drive_v, rng) * sh;
        GmNoiseState { w, v }
    }
}

/// One Euler–Maruyama step of both Gauss–Markov processes:
/// `w ← w − h A_w w + B_w √h ξ`, `ξ ~ N(0, Q_G)`, and likewise for `[v; v̇]`.
pub fn gm_noise_step<R: Rng + ?Sized>(
    spec: &GaussMarkovSpec,
    state: &GmNoiseState,
    h: f64,
    rng: &mut R,
) -> GmNoiseState {
    GmSampler::new(spec).step(state, h, rng)
}

/// Square-root factor of the joint white measurement noise covariance
/// `[[R, R̀], [R̀ᵀ, R̄]] / h` used for per-sample draws; errors when the
/// joint matrix is indefinite.
pub fn joint_measurement_factor(r: &Mat, rbar: &Mat, rgrave: &Mat, h: f64) -> Result<Mat> {
    let top = hstack(&[r, rgrave]);
    let bot = hstack(&[&rgrave.transpose(), rbar]);
    let joint = vstack(&[&top, &bot]) / h;
    if min_eigenvalue(&joint) < -1e-12 * (1.0 + joint.norm()) {
        return Err(LiseError::InvalidNoise(
            "joint covariance of v and vbar is indefinite".into(),
        ));
    }
    Ok(psd_sqrt(&joint))
}

/// Square-root factor of `Q / h` for per-step process noise draws.
pub fn process_factor(q: &Mat, h: f64) -> Mat {
    psd_sqrt(&(q / h))
}

/// Block-diagonal helper used by tests and scenario builders.
pub fn diag(values: &[f64]) -> Mat {
    let blocks: Vec<Mat> = values.iter().map(|&v| Mat::from_element(1, 1, v)).collect();
    let refs: Vec<&Mat> = blocks.iter().collect();
    block_diag(&refs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn helicopter_gm() -> GaussMarkovSpec {
        GaussMarkovSpec::stationary(
            Mat::from_element(1, 1, 0.2),
            Mat::from_element(1, 1, 6.0),
            Mat::from_element(1, 1, 5e-4),
            Mat::identity(3, 3) * 0.25,
            Mat::identity(3, 3),
            Mat::identity(3, 3),
            diag(&[1e-3, 1.6e-3, 0.9e-3]),
        )
        .unwrap()
    }

    #[test]
    fn stationary_pw_scalar() {
        let s = helicopter_gm();
        // 0 = −2·0.2·P + 36·5e-4.
        assert_abs_diff_eq!(s.p0_w[(0, 0)], 36.0 * 5e-4 / 0.4, epsilon = 1e-14);
        let (pw_dot, pv_dot) = gm_cov_rhs(&s, &s.p0_w, &s.p0_v);
        assert!(pw_dot.norm() < 1e-12);
        assert!(pv_dot.norm() < 1e-9);
    }

    #[test]
    fn zero_drive_decays() {
        let mut s = helicopter_gm();
        s.q_g = Mat::zeros(1, 1);
        let (pw_dot, _) = gm_cov_rhs(&s, &Mat::from_element(1, 1, 1.0), &s.p0_v);
        assert_abs_diff_eq!(pw_dot[(0, 0)], -0.4, epsilon = 1e-15);
    }

    #[test]
    fn deterministic_decay_without_drivers() {
        let mut s = helicopter_gm();
        s.q_g = Mat::zeros(1, 1);
        s.r_g = Mat::zeros(3, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let st = GmNoiseState {
            w: Vector::from_element(1, 1.0),
            v: Vector::from_element(6, 1.0),
        };
        let next = gm_noise_step(&s, &st, 0.1, &mut rng);
        assert_abs_diff_eq!(next.w[0], 1.0 - 0.02, epsilon = 1e-15);
        assert_abs_diff_eq!(next.v[0], 1.0 + 0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(next.v[3], 1.0 + 0.1 * (-0.25 - 1.0), epsilon = 1e-15);
    }

    #[test]
    fn joint_factor_rejects_indefinite() {
        let r = Mat::identity(1, 1) * 1e-5;
        let rbar = Mat::identity(1, 1) * 0.75;
        let rgrave = Mat::from_element(1, 1, 0.0866);
        assert!(joint_measurement_factor(&r, &rbar, &rgrave, 0.01).is_err());
        assert!(joint_measurement_factor(&r, &rbar, &Mat::zeros(1, 1), 0.01).is_ok());
    }
}
