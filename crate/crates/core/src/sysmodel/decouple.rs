//! Output decoupling `z = T y` separating the feedthrough-visible part of
//! the unknown input from the dynamics-only part.

use super::schedule::{SystemAt, SystemSchedule};
use crate::asvd::{structured_svd, AsvdRates, StructuredSvd};
use crate::error::{LiseError, Result};
use crate::lincore::{spd_inv, vstack, Mat, Vector};

/// Decoupled system at one instant.
///
/// `T₁ = U₁ᵀ − U₁ᵀRU₂(U₂ᵀRU₂)⁻¹U₂ᵀ`, `T₂ = U₂ᵀ`, `C_i = T_iC`,
/// `D_i = T_iD`, `G_i = GV_i`, `R_i = T_iRT_iᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoupledSystem {
    pub sys: SystemAt,
    pub svd: StructuredSvd,
    pub t1: Mat,
    pub t2: Mat,
    pub c1: Mat,
    pub c2: Mat,
    pub d1: Mat,
    pub d2: Mat,
    pub g1: Mat,
    pub g2: Mat,
    pub h1: Mat,
    pub r1: Mat,
    pub r2: Mat,
    /// `(U₂ᵀRU₂)⁻¹`, kept for derivative formulas.
    pub s_inv: Mat,
}

impl DecoupledSystem {
    /// `T = [T₁; T₂]`.
    pub fn t(&self) -> Mat {
        vstack(&[&self.t1, &self.t2])
    }

    /// `(z₁, z₂) = (T₁y, T₂y)`.
    pub fn split(&self, y: &Vector) -> (Vector, Vector) {
        (&self.t1 * y, &self.t2 * y)
    }

    /// `Σ⁻¹` (`M₁`).
    pub fn m1(&self) -> Mat {
        self.svd.sigma_inv()
    }

    pub fn p_h(&self) -> usize {
        self.svd.p_h
    }

    /// Number of dynamics-only unknown inputs `p − p_H`.
    pub fn p2(&self) -> usize {
        self.g2.ncols()
    }
}

/// Decouple the system matrices `sys` with measurement intensity `r`
/// using the precomputed structured SVD of `H`.
pub fn decouple_at(sys: SystemAt, r: &Mat, svd: StructuredSvd) -> Result<DecoupledSystem> {
    let rs = crate::lincore::symmetrize(r);
    if spd_inv(&rs).is_none() {
        return Err(LiseError::InvalidNoise(
            "R must be positive definite".into(),
        ));
    }
    let u1t = svd.u1.transpose();
    let u2t = svd.u2.transpose();
    let s = &u2t * &rs * &svd.u2;
    let s_inv = spd_inv(&s)
        .ok_or_else(|| LiseError::InvalidNoise("U2' R U2 is not positive definite".into()))?;
    let t1 = &u1t - &u1t * &rs * &svd.u2 * &s_inv * &u2t;
    let t2 = u2t;
    let c1 = &t1 * &sys.c;
    let c2 = &t2 * &sys.c;
    let d1 = &t1 * &sys.d;
    let d2 = &t2 * &sys.d;
    let g1 = &sys.g * &svd.v1;
    let g2 = &sys.g * &svd.v2;
    let h1 = svd.h1();
    let r1 = crate::lincore::symmetrize(&(&t1 * &rs * t1.transpose()));
    let r2 = crate::lincore::symmetrize(&(&t2 * &rs * t2.transpose()));
    Ok(DecoupledSystem {
        sys,
        svd,
        t1,
        t2,
        c1,
        c2,
        d1,
        d2,
        g1,
        g2,
        h1,
        r1,
        r2,
        s_inv,
    })
}

/// Decouple the schedule at time `t`.
pub fn decouple(sched: &SystemSchedule, r: &Mat, t: f64, tol: f64) -> Result<DecoupledSystem> {
    let sys = sched.at(t);
    let svd = structured_svd(&sys.h, tol)?;
    decouple_at(sys, r, svd)
}

/// `Ṫ₁` for the factor rates `rates` and `Ṙ`:
/// `EᵀU₁ᵀ − EᵀU₁ᵀRU₂S⁻¹U₂ᵀ − U₁ᵀṘU₂S⁻¹U₂ᵀ + U₁ᵀRU₂S⁻¹(U₂ᵀṘU₂)S⁻¹U₂ᵀ`
/// with `S = U₂ᵀRU₂`.
pub fn t1dot(f: &StructuredSvd, rates: &AsvdRates, r: &Mat, rdot: &Mat) -> Result<Mat> {
    let u1t = f.u1.transpose();
    let u2t = f.u2.transpose();
    let s_inv = spd_inv(&(&u2t * r * &f.u2))
        .ok_or_else(|| LiseError::InvalidNoise("U2' R U2 is not positive definite".into()))?;
    let et = rates.e.transpose();
    let ru2s = r * &f.u2 * &s_inv;
    Ok(
        &et * &u1t - &et * &u1t * &ru2s * &u2t - &u1t * rdot * &f.u2 * &s_inv * &u2t
            + &u1t * &ru2s * (&u2t * rdot * &f.u2) * &s_inv * &u2t,
    )
}

/// `Ṫ₁` for general factor rates, including motion of `U₁` and `U₂` out
/// of their current spans. Reduces to [`t1dot`] when `U̇₁ = U₁E` and
/// `U̇₂ = 0`.
pub fn t1dot_full(f: &StructuredSvd, rates: &AsvdRates, r: &Mat, rdot: &Mat) -> Result<Mat> {
    let u1t = f.u1.transpose();
    let u2t = f.u2.transpose();
    let s_inv = spd_inv(&(&u2t * r * &f.u2))
        .ok_or_else(|| LiseError::InvalidNoise("U2' R U2 is not positive definite".into()))?;
    let (u1d, u2d) = (&rates.u1_dot, &rates.u2_dot);
    let k = &u1t * r * &f.u2 * &s_inv;
    let sdot = u2d.transpose() * r * &f.u2 + &u2t * rdot * &f.u2 + &u2t * r * u2d;
    let kdot = (u1d.transpose() * r * &f.u2 + &u1t * rdot * &f.u2 + &u1t * r * u2d) * &s_inv
        - &k * sdot * &s_inv;
    Ok(u1d.transpose() - kdot * &u2t - k * u2d.transpose())
}
