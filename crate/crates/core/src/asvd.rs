//! Structured SVD of the feedthrough matrix `H(t)` and the analytic
//! derivatives of its factors.
//!
//! `H = U₁ Σ V₁ᵀ` with `Σ` the `p_H×p_H` block of nonzero singular values;
//! `U₂`, `V₂` complete `U₁`, `V₁` to orthogonal matrices. The factor rates
//! use the skew-symmetric generators `E`, `F` with `U̇₁ = U₁E`, `V̇₁ = V₁F`
//! and the minimum-norm choice `U̇₂ = V̇₂ = 0`.

use crate::error::{LiseError, Result};
use crate::lincore::{hstack, orth_complement, svd, Mat, Vector, DEFAULT_RANK_TOL};

/// Relative gap below which two singular values are treated as repeated
/// (applied to `σ_max²`).
pub const DEFAULT_GAP_REL: f64 = 1e-8;

/// Rank-revealing factorisation `H = U₁ Σ V₁ᵀ` with orthogonal complements.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuredSvd {
    pub u1: Mat,
    pub u2: Mat,
    pub v1: Mat,
    pub v2: Mat,
    pub sigma: Vec<f64>,
    pub p_h: usize,
}

impl StructuredSvd {
    /// `Σ` as a diagonal matrix.
    pub fn sigma_mat(&self) -> Mat {
        Mat::from_diagonal(&Vector::from_column_slice(&self.sigma))
    }

    /// `Σ⁻¹` as a diagonal matrix.
    pub fn sigma_inv(&self) -> Mat {
        Mat::from_diagonal(&Vector::from_iterator(
            self.p_h,
            self.sigma.iter().map(|s| 1.0 / s),
        ))
    }

    /// `H₁ = U₁ Σ`.
    pub fn h1(&self) -> Mat {
        &self.u1 * self.sigma_mat()
    }

    /// `U₁ Σ V₁ᵀ`.
    pub fn reconstruct(&self) -> Mat {
        self.h1() * self.v1.transpose()
    }

    /// `[U₁ U₂]`.
    pub fn u(&self) -> Mat {
        hstack(&[&self.u1, &self.u2])
    }

    /// `[V₁ V₂]`.
    pub fn v(&self) -> Mat {
        hstack(&[&self.v1, &self.v2])
    }

    /// Default repeated-value threshold `1e-8 · σ_max²`.
    pub fn default_gap_tol(&self) -> f64 {
        let smax = self.sigma.first().copied().unwrap_or(0.0);
        DEFAULT_GAP_REL * smax * smax
    }
}

/// Time derivatives of the structured factors.
#[derive(Debug, Clone, PartialEq)]
pub struct AsvdRates {
    pub sigma_dot: Vec<f64>,
    pub e: Mat,
    pub f: Mat,
    pub u1_dot: Mat,
    pub u2_dot: Mat,
    pub v1_dot: Mat,
    pub v2_dot: Mat,
    /// Set when a repeated pair had different singular value rates, so the
    /// repeated-value formula was applied outside its hypothesis.
    pub repeated_warning: bool,
}

impl AsvdRates {
    /// `Σ̇` as a diagonal matrix.
    pub fn sigma_dot_mat(&self) -> Mat {
        Mat::from_diagonal(&Vector::from_column_slice(&self.sigma_dot))
    }

    /// Rates of a constant `H` with the given factor shapes.
    pub fn zero(f: &StructuredSvd) -> Self {
        let k = f.p_h;
        AsvdRates {
            sigma_dot: vec![0.0; k],
            e: Mat::zeros(k, k),
            f: Mat::zeros(k, k),
            u1_dot: Mat::zeros(f.u1.nrows(), k),
            u2_dot: Mat::zeros(f.u2.nrows(), f.u2.ncols()),
            v1_dot: Mat::zeros(f.v1.nrows(), k),
            v2_dot: Mat::zeros(f.v2.nrows(), f.v2.ncols()),
            repeated_warning: false,
        }
    }
}

/// Second-order rate data needed for `Ḧ₁`: `Ė` and `Σ̈`.
#[derive(Debug, Clone, PartialEq)]
pub struct AsvdAccel {
    pub e_dot: Mat,
    pub sigma_ddot: Vec<f64>,
}

/// Structured SVD with rank `p_H = rank(H, tol)`.
///
/// Signs follow the convention of [`crate::lincore::svd`]; complements are
/// built deterministically, so `H = 0` yields `U₂ = I`, `V₂ = I`.
pub fn structured_svd(h: &Mat, tol: f64) -> Result<StructuredSvd> {
    let (l, p) = h.shape();
    let full = svd(h)?;
    let smax = full.s.first().copied().unwrap_or(0.0);
    let p_h = if smax == 0.0 {
        0
    } else {
        full.s.iter().filter(|&&s| s > tol * smax).count()
    };
    let u1 = full.u.columns(0, p_h).into_owned();
    let v1 = full.v.columns(0, p_h).into_owned();
    let u2 = orth_complement(&u1);
    let v2 = orth_complement(&v1);
    debug_assert_eq!(u2.shape(), (l, l - p_h));
    debug_assert_eq!(v2.shape(), (p, p - p_h));
    Ok(StructuredSvd {
        u1,
        u2,
        v1,
        v2,
        sigma: full.s[..p_h].to_vec(),
        p_h,
    })
}

/// Orthogonal polar factor of a square matrix (nearest orthogonal matrix).
fn polar_orthogonal(m: &Mat) -> Mat {
    if m.nrows() == 0 {
        return m.clone();
    }
    let (u, _, v) = crate::lincore::thin_svd(m);
    u * v.transpose()
}

/// Nearest orthonormal-column matrix to `m` (polar projection).
pub fn polar_project(m: &Mat) -> Mat {
    if m.ncols() == 0 {
        return m.clone();
    }
    let (u, _, v) = crate::lincore::thin_svd(m);
    u * v.transpose()
}

/// Re-express `basis` (orthonormal columns) by the rotation within its
/// span that is closest to `prev`.
fn align_basis(basis: &Mat, prev: &Mat) -> Mat {
    if basis.ncols() == 0 || basis.shape() != prev.shape() {
        return basis.clone();
    }
    basis * polar_orthogonal(&(basis.transpose() * prev))
}

/// Structured SVD whose factors are continued from `prev`: columns of
/// `U₁`/`V₁` keep `diag(U₁ᵀU₁_prev) ≥ 0` and the complements are the
/// rotations closest to the previous ones.
pub fn structured_svd_aligned(h: &Mat, tol: f64, prev: &StructuredSvd) -> Result<StructuredSvd> {
    let mut f = structured_svd(h, tol)?;
    if f.p_h == prev.p_h {
        for j in 0..f.p_h {
            if f.u1.column(j).dot(&prev.u1.column(j)) < 0.0 {
                f.u1.column_mut(j).neg_mut();
                f.v1.column_mut(j).neg_mut();
            }
        }
    }
    f.u2 = align_basis(&f.u2, &prev.u2);
    f.v2 = align_basis(&f.v2, &prev.v2);
    Ok(f)
}

/// Analytic rates of the structured factors given `Ḣ`.
///
/// Off-diagonal generator entries use the simple-value formula when
/// `|σᵢ² − σⱼ²| > gap_tol`; otherwise the repeated-value branch
/// `E_ij = −F_ij`, taken in its minimum-norm skew-symmetric form.
pub fn asvd_rates(f: &StructuredSvd, hdot: &Mat, gap_tol: f64) -> Result<AsvdRates> {
    let k = f.p_h;
    if let Some(bad) = f.sigma.iter().find(|&&s| !(s > 0.0)) {
        return Err(LiseError::RankDeficiency {
            t: f64::NAN,
            detail: format!("singular value {bad} is not positive"),
        });
    }
    let x = f.u1.transpose() * hdot * &f.v1;
    let sigma_dot: Vec<f64> = (0..k).map(|i| x[(i, i)]).collect();
    let mut e = Mat::zeros(k, k);
    let mut fm = Mat::zeros(k, k);
    let mut repeated_warning = false;
    for i in 0..k {
        for j in 0..k {
            if i == j {
                continue;
            }
            let (si, sj) = (f.sigma[i], f.sigma[j]);
            let gap = sj * sj - si * si;
            if gap.abs() > gap_tol {
                e[(i, j)] = (sj * x[(i, j)] + si * x[(j, i)]) / gap;
                fm[(i, j)] = (sj * x[(j, i)] + si * x[(i, j)]) / gap;
            } else {
                let s = 0.5 * (si + sj);
                let v = (x[(i, j)] - x[(j, i)]) / (4.0 * s);
                e[(i, j)] = v;
                fm[(i, j)] = -v;
                if (sigma_dot[i] - sigma_dot[j]).abs() > 1e-10 * (1.0 + sigma_dot[i].abs()) {
                    repeated_warning = true;
                }
            }
        }
    }
    let u1_dot = &f.u1 * &e;
    let v1_dot = &f.v1 * &fm;
    Ok(AsvdRates {
        sigma_dot,
        e,
        f: fm,
        u1_dot,
        u2_dot: Mat::zeros(f.u2.nrows(), f.u2.ncols()),
        v1_dot,
        v2_dot: Mat::zeros(f.v2.nrows(), f.v2.ncols()),
        repeated_warning,
    })
}

/// Components of `U̇₁`, `V̇₁` leaving the current column spaces:
/// `(I − U₁U₁ᵀ) Ḣ V₁ Σ⁻¹` and `(I − V₁V₁ᵀ) Ḣᵀ U₁ Σ⁻¹`. Both vanish when
/// `U₁` and `V₁` are square.
pub fn complement_rates(f: &StructuredSvd, hdot: &Mat) -> (Mat, Mat) {
    let sinv = f.sigma_inv();
    let pu = &f.u2 * f.u2.transpose();
    let pv = &f.v2 * f.v2.transpose();
    (
        pu * hdot * &f.v1 * &sinv,
        pv * hdot.transpose() * &f.u1 * &sinv,
    )
}

/// Rates of all four factors. The in-span parts come from
/// [`asvd_rates`]; the parts leaving the column spaces are added, and the
/// complements move only as needed to stay orthogonal to `U₁`, `V₁`:
/// `U̇₂ = −U₁Σ⁻¹V₁ᵀḢᵀU₂` and `V̇₂ = −V₁Σ⁻¹U₁ᵀḢV₂`.
pub fn full_rates(f: &StructuredSvd, hdot: &Mat, gap_tol: f64) -> Result<AsvdRates> {
    let mut r = asvd_rates(f, hdot, gap_tol)?;
    let (cu, cv) = complement_rates(f, hdot);
    r.u1_dot += cu;
    r.v1_dot += cv;
    let sinv = f.sigma_inv();
    r.u2_dot = -(&f.u1 * &sinv * f.v1.transpose() * hdot.transpose() * &f.u2);
    r.v2_dot = -(&f.v1 * &sinv * f.u1.transpose() * hdot * &f.v2);
    Ok(r)
}

/// `Ḣ₁ = U̇₁Σ + U₁Σ̇`.
pub fn h1_dot(f: &StructuredSvd, r: &AsvdRates) -> Mat {
    &r.u1_dot * f.sigma_mat() + &f.u1 * r.sigma_dot_mat()
}

/// `Ḧ₁ = U₁E²Σ + U₁ĖΣ + 2U₁EΣ̇ + U₁Σ̈`.
pub fn h1_ddot(f: &StructuredSvd, r: &AsvdRates, acc: &AsvdAccel) -> Mat {
    let s = f.sigma_mat();
    let sd = r.sigma_dot_mat();
    let sdd = Mat::from_diagonal(&Vector::from_column_slice(&acc.sigma_ddot));
    &f.u1 * (&r.e * &r.e * &s + &acc.e_dot * &s + &r.e * &sd * 2.0 + sdd)
}

/// Norms `‖T₂H₁‖`, `‖T₂Ḣ₁‖`, `‖T₂Ḧ₁‖` (Frobenius).
pub fn corollary_residuals(
    f: &StructuredSvd,
    r: &AsvdRates,
    acc: &AsvdAccel,
    t2: &Mat,
) -> [f64; 3] {
    [
        (t2 * f.h1()).norm(),
        (t2 * h1_dot(f, r)).norm(),
        (t2 * h1_ddot(f, r, acc)).norm(),
    ]
}

/// `Ė` and `Σ̈` by central differences of the analytic rates along `H(t)`.
pub fn rates_accel<H, D>(h: H, hdot: D, t: f64, delta: f64, tol: f64) -> Result<AsvdAccel>
where
    H: Fn(f64) -> Mat,
    D: Fn(f64) -> Mat,
{
    let f0 = structured_svd(&h(t), tol)?;
    let fp = structured_svd_aligned(&h(t + delta), tol, &f0)?;
    let fm = structured_svd_aligned(&h(t - delta), tol, &f0)?;
    let gap = f0.default_gap_tol();
    let rp = asvd_rates(&fp, &hdot(t + delta), gap)?;
    let rm = asvd_rates(&fm, &hdot(t - delta), gap)?;
    let e_dot = (&rp.e - &rm.e) / (2.0 * delta);
    let sigma_ddot = rp
        .sigma_dot
        .iter()
        .zip(&rm.sigma_dot)
        .map(|(a, b)| (a - b) / (2.0 * delta))
        .collect();
    Ok(AsvdAccel { e_dot, sigma_ddot })
}

/// Integrate the factor ODEs from `f0` at `t0` to `t1` with RK4 step `h`.
///
/// The right-hand side is `U̇₁ = U₁E + (I − U₁U₁ᵀ)ḢV₁Σ⁻¹`,
/// `V̇₁ = V₁F + (I − V₁V₁ᵀ)ḢᵀU₁Σ⁻¹`, `σ̇ = diag(U₁ᵀḢV₁)`; the second terms
/// vanish for square full-rank `H`. After each step `U₁`, `V₁` are
/// projected back to orthonormal columns and the complements are
/// continued by the closest rotation.
pub fn propagate_factors<D>(
    f0: &StructuredSvd,
    hdot: D,
    t0: f64,
    t1: f64,
    h: f64,
    tol: f64,
) -> Result<Vec<(f64, StructuredSvd)>>
where
    D: Fn(f64) -> Mat,
{
    let (l, p, k) = (f0.u1.nrows(), f0.v1.nrows(), f0.p_h);
    let pack = |f: &StructuredSvd| {
        let mut v = Vec::with_capacity(l * k + p * k + k);
        v.extend_from_slice(f.u1.as_slice());
        v.extend_from_slice(f.v1.as_slice());
        v.extend_from_slice(&f.sigma);
        Vector::from_vec(v)
    };
    let unpack = |y: &Vector| {
        let u1 = Mat::from_column_slice(l, k, &y.as_slice()[..l * k]);
        let v1 = Mat::from_column_slice(p, k, &y.as_slice()[l * k..l * k + p * k]);
        let sigma = y.as_slice()[l * k + p * k..].to_vec();
        (u1, v1, sigma)
    };
    let rhs = |t: f64, y: &Vector| -> Result<Vector> {
        let (u1, v1, sigma) = unpack(y);
        let fac = StructuredSvd {
            u2: orth_complement(&u1),
            v2: orth_complement(&v1),
            u1,
            v1,
            sigma,
            p_h: k,
        };
        let hd = hdot(t);
        let r = asvd_rates(&fac, &hd, fac.default_gap_tol()).map_err(|_| {
            LiseError::RankDeficiency {
                t,
                detail: "nonpositive singular value".into(),
            }
        })?;
        let (cu, cv) = complement_rates(&fac, &hd);
        let du = &r.u1_dot + cu;
        let dv = &r.v1_dot + cv;
        let mut out = Vec::with_capacity(y.len());
        out.extend_from_slice(du.as_slice());
        out.extend_from_slice(dv.as_slice());
        out.extend_from_slice(&r.sigma_dot);
        Ok(Vector::from_vec(out))
    };
    let mut rhs = rhs;
    let mut cur = f0.clone();
    let mut out = vec![(t0, cur.clone())];
    let grid = crate::lincore::time_grid(t0, t1, h);
    for w in grid.windows(2) {
        let y = crate::lincore::rk4_step(&mut rhs, w[0], &pack(&cur), w[1] - w[0])?;
        let (u1, v1, mut sigma) = unpack(&y);
        let mut u1 = polar_project(&u1);
        let mut v1 = polar_project(&v1);
        for j in 0..k {
            if sigma[j] < 0.0 {
                sigma[j] = -sigma[j];
                v1.column_mut(j).neg_mut();
            }
        }
        let smax = sigma.iter().cloned().fold(0.0, f64::max);
        if sigma.iter().any(|&s| s <= tol.max(DEFAULT_RANK_TOL) * smax) {
            return Err(LiseError::RankDeficiency {
                t: w[1],
                detail: "singular value crossed the rank tolerance".into(),
            });
        }
        if u1.ncols() != k {
            u1 = cur.u1.clone();
        }
        let u2 = align_basis(&orth_complement(&u1), &cur.u2);
        let v2 = align_basis(&orth_complement(&v1), &cur.v2);
        cur = StructuredSvd {
            u1,
            u2,
            v1,
            v2,
            sigma,
            p_h: k,
        };
        out.push((w[1], cur.clone()));
    }
    Ok(out)
}
