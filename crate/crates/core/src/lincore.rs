//! Dense linear algebra, matrix equation solvers and the fixed-step
//! integrator that carries every differential equation in the crate.
//!
//! All routines are pure functions over `nalgebra` dynamic matrices.
//! Zero-sized matrices are accepted wherever the dimension count is
//! legitimately zero (no unknown inputs, full-rank feedthrough, ...).

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{LiseError, Result};

/// Dynamic real matrix used throughout the crate.
pub type Mat = DMatrix<f64>;
/// Dynamic real column vector used throughout the crate.
pub type Vector = DVector<f64>;

/// Relative rank tolerance used when the caller does not supply one.
pub const DEFAULT_RANK_TOL: f64 = 1e-9;
/// Default integrator step in time units.
pub const DEFAULT_STEP: f64 = 1e-3;

/// Full singular value decomposition `M = U diag(S) Vᵀ`.
///
/// `u` is `r×r`, `v` is `c×c` and `s` holds `min(r, c)` values sorted
/// in nonincreasing order.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: Mat,
    pub s: Vec<f64>,
    pub v: Mat,
}

/// Eigenvalues of a square matrix together with the spectral abscissa.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumReport {
    pub eigenvalues: Vec<Complex<f64>>,
    pub max_real_part: f64,
}

impl SpectrumReport {
    /// True when every eigenvalue lies strictly in the open left half plane.
    pub fn is_hurwitz(&self) -> bool {
        self.max_real_part < 0.0
    }
}

fn check_finite(m: &Mat, what: &str) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(LiseError::InvalidInput(format!(
            "{what} has non-finite entries"
        )))
    }
}

/// Flip the sign of column `j` of `a` (and of `b` if given) so that the
/// entry of largest magnitude in `a`'s column is positive.
fn canonical_signs(a: &mut Mat, mut b: Option<&mut Mat>, cols: usize) {
    for j in 0..cols {
        let col = a.column(j);
        let (imax, _) = col.iter().enumerate().fold((0, -1.0), |acc, (i, x)| {
            if x.abs() > acc.1 + 1e-14 {
                (i, x.abs())
            } else {
                acc
            }
        });
        if a.nrows() > 0 && a[(imax, j)] < 0.0 {
            a.column_mut(j).neg_mut();
            if let Some(bm) = b.as_deref_mut() {
                bm.column_mut(j).neg_mut();
            }
        }
    }
}

/// Orthonormal basis of the orthogonal complement of the columns of `q`.
///
/// `q` must have orthonormal columns. Candidates are the standard basis
/// vectors, picked greedily by largest residual after projection, which
/// makes the result deterministic (identity when `q` is empty).
pub fn orth_complement(q: &Mat) -> Mat {
    let r = q.nrows();
    let k = q.ncols();
    let need = r.saturating_sub(k);
    let mut basis: Vec<Vector> = (0..k).map(|j| q.column(j).into_owned()).collect();
    let mut out = Mat::zeros(r, need);
    for col in 0..need {
        let mut best: Option<(f64, Vector)> = None;
        for i in 0..r {
            let mut v = Vector::zeros(r);
            v[i] = 1.0;
            for _ in 0..2 {
                for b in &basis {
                    let c = b.dot(&v);
                    v.axpy(-c, b, 1.0);
                }
            }
            let nv = v.norm();
            if best.as_ref().is_none_or(|(bn, _)| nv > *bn + 1e-12) {
                best = Some((nv, v));
            }
        }
        let (nv, v) = best.expect("complement candidate");
        let v = v / nv;
        out.set_column(col, &v);
        basis.push(v);
    }
    out
}

/// Full SVD with singular values sorted in nonincreasing order and a
/// deterministic sign convention (largest entry of each left singular
/// vector positive).
pub fn svd(m: &Mat) -> Result<Svd> {
    check_finite(m, "svd input")?;
    let (r, c) = m.shape();
    let k = r.min(c);
    if k == 0 {
        return Ok(Svd {
            u: Mat::identity(r, r),
            s: Vec::new(),
            v: Mat::identity(c, c),
        });
    }
    let (u_thin, sv, v_thin) = thin_svd(m);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]));
    let mut u1 = Mat::zeros(r, k);
    let mut v1 = Mat::zeros(c, k);
    let mut s = Vec::with_capacity(k);
    for (dst, &src) in order.iter().enumerate() {
        u1.set_column(dst, &u_thin.column(src));
        v1.set_column(dst, &v_thin.column(src));
        s.push(sv[src].max(0.0));
    }
    canonical_signs(&mut u1, Some(&mut v1), k);
    let u = hstack(&[&u1, &orth_complement(&u1)]);
    let v = hstack(&[&v1, &orth_complement(&v1)]);
    Ok(Svd { u, s, v })
}

/// Relative reconstruction error above which [`svd`] switches to the
/// Jacobi fallback.
const SVD_RESIDUAL_TOL: f64 = 1e-12;

/// Thin SVD `(U, s, V)` with `min(r, c)` columns, in no particular order.
///
/// Uses the `nalgebra` bidiagonal QR iteration and checks the
/// reconstruction; that iteration occasionally returns inaccurate factors
/// for rank-deficient inputs, in which case one-sided Jacobi is used.
pub fn thin_svd(m: &Mat) -> (Mat, Vec<f64>, Mat) {
    let dec = m.clone().svd(true, true);
    let u = dec.u.expect("u requested");
    let v = dec.v_t.expect("v requested").transpose();
    let sv: Vec<f64> = dec.singular_values.iter().copied().collect();
    let recomposed = &u * Mat::from_diagonal(&Vector::from_vec(sv.clone())) * v.transpose();
    if (m - recomposed).norm() > SVD_RESIDUAL_TOL * (1.0 + m.norm()) {
        return jacobi_svd(m);
    }
    (u, sv, v)
}

/// Thin SVD by one-sided Jacobi rotations: `(U, s, V)` with `min(r, c)`
/// columns, unsorted. Left vectors of zero singular values are completed
/// to an orthonormal set.
fn jacobi_svd(m: &Mat) -> (Mat, Vec<f64>, Mat) {
    if m.nrows() < m.ncols() {
        let (u, s, v) = jacobi_svd(&m.transpose());
        return (v, s, u);
    }
    let (r, c) = m.shape();
    let mut a = m.clone();
    let mut v = Mat::identity(c, c);
    for _sweep in 0..100 {
        let mut rotated = false;
        for i in 0..c {
            for j in (i + 1)..c {
                let alpha = a.column(i).norm_squared();
                let beta = a.column(j).norm_squared();
                let gamma = a.column(i).dot(&a.column(j));
                if gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() || gamma == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = cs * t;
                for mat in [&mut a, &mut v] {
                    for row in 0..mat.nrows() {
                        let (x, y) = (mat[(row, i)], mat[(row, j)]);
                        mat[(row, i)] = cs * x - sn * y;
                        mat[(row, j)] = sn * x + cs * y;
                    }
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let s: Vec<f64> = (0..c).map(|j| a.column(j).norm()).collect();
    let smax = s.iter().copied().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..c)
        .filter(|&j| s[j] > f64::EPSILON * smax * c as f64 && s[j] > 0.0)
        .collect();
    let mut u = Mat::zeros(r, c);
    for &j in &keep {
        u.set_column(j, &(a.column(j) / s[j]));
    }
    let kept = Mat::from_fn(r, keep.len(), |i, k| u[(i, keep[k])]);
    let fill = orth_complement(&kept);
    for (n, j) in (0..c).filter(|j| !keep.contains(j)).enumerate() {
        u.set_column(j, &fill.column(n));
    }
    (u, s, v)
}

/// Number of singular values larger than `tol · σ_max`.
pub fn rank(m: &Mat, tol: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let (_, s, _) = thin_svd(m);
    let smax = s.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    s.iter().filter(|&&x| x > tol * smax).count()
}

/// Moore–Penrose pseudo-inverse; singular values below `tol · σ_max` are
/// treated as zero.
pub fn pinv(m: &Mat, tol: f64) -> Mat {
    let (r, c) = m.shape();
    if r == 0 || c == 0 {
        return Mat::zeros(c, r);
    }
    let (u, sv, v) = thin_svd(m);
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return Mat::zeros(c, r);
    }
    let mut out = Mat::zeros(c, r);
    for (i, &s) in sv.iter().enumerate() {
        if s > tol * smax {
            out += (v.column(i) * u.column(i).transpose()) / s;
        }
    }
    out
}

/// Spectral norm (largest singular value); zero for empty matrices.
pub fn norm2(m: &Mat) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    thin_svd(m).1.iter().cloned().fold(0.0, f64::max)
}

/// Inverse of a square matrix, accepting the empty matrix.
pub fn inv(m: &Mat) -> Result<Mat> {
    if m.nrows() != m.ncols() {
        return Err(LiseError::InvalidInput(format!(
            "inverse of non-square {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.nrows() == 0 {
        return Ok(Mat::zeros(0, 0));
    }
    m.clone()
        .try_inverse()
        .filter(|x| x.iter().all(|v| v.is_finite()))
        .ok_or_else(|| LiseError::InvalidInput("singular matrix".into()))
}

/// Inverse of a symmetric positive definite matrix via Cholesky; `None`
/// when the matrix is not numerically positive definite.
pub fn spd_inv(m: &Mat) -> Option<Mat> {
    if m.nrows() == 0 {
        return Some(Mat::zeros(0, 0));
    }
    m.clone().cholesky().map(|c| c.inverse())
}

/// True when the symmetric part of `m` admits a Cholesky factor.
pub fn is_positive_definite(m: &Mat) -> bool {
    m.nrows() == 0 || symmetrize(m).cholesky().is_some()
}

/// `(M + Mᵀ) / 2`.
pub fn symmetrize(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

/// Smallest eigenvalue of the symmetric part of `m` (`+∞` when empty).
pub fn min_eigenvalue(m: &Mat) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    symmetrize(m)
        .symmetric_eigenvalues()
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// Largest eigenvalue of the symmetric part of `m` (`−∞` when empty).
pub fn max_eigenvalue(m: &Mat) -> f64 {
    if m.nrows() == 0 {
        return f64::NEG_INFINITY;
    }
    symmetrize(m)
        .symmetric_eigenvalues()
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Symmetrize and clamp negative eigenvalues to zero.
pub fn psd_floor(m: &Mat) -> Mat {
    let s = symmetrize(m);
    if s.nrows() == 0 || s.clone().cholesky().is_some() {
        return s;
    }
    let eig = s.symmetric_eigen();
    let lam = eig.eigenvalues.map(|x| x.max(0.0));
    &eig.eigenvectors * Mat::from_diagonal(&lam) * eig.eigenvectors.transpose()
}

/// Symmetric factor `F` with `F Fᵀ = M` for a symmetric PSD `M`
/// (negative eigenvalues from round-off are clamped).
pub fn psd_sqrt(m: &Mat) -> Mat {
    if m.nrows() == 0 {
        return Mat::zeros(0, 0);
    }
    let eig = symmetrize(m).symmetric_eigen();
    let lam = eig.eigenvalues.map(|x| x.max(0.0).sqrt());
    &eig.eigenvectors * Mat::from_diagonal(&lam) * eig.eigenvectors.transpose()
}

/// Horizontal concatenation of matrices with equal row counts.
pub fn hstack(blocks: &[&Mat]) -> Mat {
    let rows = blocks.first().map_or(0, |b| b.nrows());
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Mat::zeros(rows, cols);
    let mut c0 = 0;
    for b in blocks {
        assert_eq!(b.nrows(), rows, "hstack row mismatch");
        out.view_mut((0, c0), (rows, b.ncols())).copy_from(*b);
        c0 += b.ncols();
    }
    out
}

/// Vertical concatenation of matrices with equal column counts.
pub fn vstack(blocks: &[&Mat]) -> Mat {
    let cols = blocks.first().map_or(0, |b| b.ncols());
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = Mat::zeros(rows, cols);
    let mut r0 = 0;
    for b in blocks {
        assert_eq!(b.ncols(), cols, "vstack column mismatch");
        out.view_mut((r0, 0), (b.nrows(), cols)).copy_from(*b);
        r0 += b.nrows();
    }
    out
}

/// Block-diagonal assembly.
pub fn block_diag(blocks: &[&Mat]) -> Mat {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Mat::zeros(rows, cols);
    let (mut r0, mut c0) = (0, 0);
    for b in blocks {
        out.view_mut((r0, c0), b.shape()).copy_from(*b);
        r0 += b.nrows();
        c0 += b.ncols();
    }
    out
}

/// Rank of the complex matrix `re + i·im`, computed on its real embedding
/// `[[re, −im], [im, re]]` whose rank is twice the complex rank.
pub fn complex_rank(re: &Mat, im: &Mat, tol: f64) -> usize {
    let neg_im = -im;
    let top = hstack(&[re, &neg_im]);
    let bot = hstack(&[im, re]);
    rank(&vstack(&[&top, &bot]), tol) / 2
}

/// Eigenvalues of a square matrix.
pub fn eig(m: &Mat) -> SpectrumReport {
    if m.nrows() == 0 {
        return SpectrumReport {
            eigenvalues: Vec::new(),
            max_real_part: f64::NEG_INFINITY,
        };
    }
    let ev: Vec<Complex<f64>> = m.complex_eigenvalues().iter().cloned().collect();
    let max_real_part = ev.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    SpectrumReport {
        eigenvalues: ev,
        max_real_part,
    }
}

/// Largest distance between matched elements of two eigenvalue multisets
/// (greedy nearest-neighbour matching); `∞` when the sizes differ.
pub fn spectrum_mismatch(a: &[Complex<f64>], b: &[Complex<f64>]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    let mut used = vec![false; b.len()];
    let mut worst: f64 = 0.0;
    let mut order: Vec<usize> = (0..a.len()).collect();
    order.sort_by(|&i, &j| {
        a[i].re
            .total_cmp(&a[j].re)
            .then(a[i].im.total_cmp(&a[j].im))
    });
    for i in order {
        let (jbest, dbest) = b
            .iter()
            .enumerate()
            .filter(|(j, _)| !used[*j])
            .map(|(j, z)| (j, (z - a[i]).norm()))
            .fold((usize::MAX, f64::INFINITY), |acc, x| {
                if x.1 < acc.1 {
                    x
                } else {
                    acc
                }
            });
        used[jbest] = true;
        worst = worst.max(dbest);
    }
    worst
}

/// Solve the continuous Lyapunov equation `A X + X Aᵀ + Q = 0` by a
/// Kronecker-product linear solve.
pub fn solve_lyapunov(a: &Mat, q: &Mat) -> Result<Mat> {
    let n = a.nrows();
    if a.ncols() != n || q.shape() != (n, n) {
        return Err(LiseError::InvalidInput(
            "lyapunov dimension mismatch".into(),
        ));
    }
    if n == 0 {
        return Ok(Mat::zeros(0, 0));
    }
    let eye = Mat::identity(n, n);
    let k = eye.kronecker(a) + a.kronecker(&eye);
    let rhs = -Vector::from_column_slice(q.as_slice());
    let sol = k
        .lu()
        .solve(&rhs)
        .filter(|s| s.iter().all(|x| x.is_finite()))
        .ok_or_else(|| LiseError::InvalidInput("lyapunov operator is singular".into()))?;
    Ok(symmetrize(&Mat::from_column_slice(n, n, sol.as_slice())))
}

/// Residual of the filter-form algebraic Riccati equation
/// `A P + P Aᵀ + Q − (P Cᵀ − S) R⁻¹ (P Cᵀ − S)ᵀ`.
pub fn care_residual(a: &Mat, c: &Mat, q: &Mat, r: &Mat, s_cross: &Mat, p: &Mat) -> Result<Mat> {
    let rinv = inv(r)?;
    let k = p * c.transpose() - s_cross;
    Ok(a * p + p * a.transpose() + q - &k * rinv * k.transpose())
}

/// Matrix sign function by the scaled Newton iteration.
fn matrix_sign(h: &Mat) -> Result<Mat> {
    let n = h.nrows();
    let mut z = h.clone();
    for _ in 0..200 {
        let zi = inv(&z).map_err(|_| {
            LiseError::NoStabilizingSolution(
                "Hamiltonian has eigenvalues on the imaginary axis".into(),
            )
        })?;
        let det = z.clone().lu().determinant().abs();
        let c = if det.is_finite() && det > 0.0 {
            det.powf(-1.0 / n as f64)
        } else {
            1.0
        };
        let c = if c.is_finite() && c > 0.0 { c } else { 1.0 };
        let next = (&z * c + zi / c) * 0.5;
        let delta = (&next - &z).norm();
        z = next;
        if !z.iter().all(|x| x.is_finite()) {
            break;
        }
        if delta <= 1e-13 * z.norm() {
            return Ok(z);
        }
    }
    Err(LiseError::NoStabilizingSolution(
        "sign iteration did not converge".into(),
    ))
}

/// Stabilizing solution of the filter-form algebraic Riccati equation
/// `A P + P Aᵀ + Q − (P Cᵀ − S) R⁻¹ (P Cᵀ − S)ᵀ = 0`.
///
/// The cross term is absorbed by `Ã = A + S R⁻¹ C`, `Q̃ = Q − S R⁻¹ Sᵀ`.
/// The stable invariant subspace of the Hamiltonian is extracted with
/// the matrix sign function and refined by Newton–Kleinman steps. The
/// returned `P` makes `A − (P Cᵀ − S) R⁻¹ C` Hurwitz.
pub fn solve_care(a: &Mat, c: &Mat, q: &Mat, r: &Mat, s_cross: &Mat) -> Result<Mat> {
    let n = a.nrows();
    let l = c.nrows();
    if a.ncols() != n
        || c.ncols() != n
        || q.shape() != (n, n)
        || r.shape() != (l, l)
        || s_cross.shape() != (n, l)
    {
        return Err(LiseError::InvalidInput("care dimension mismatch".into()));
    }
    for (m, w) in [(a, "A"), (c, "C"), (q, "Q"), (r, "R"), (s_cross, "S")] {
        check_finite(m, w)?;
    }
    if n == 0 {
        return Ok(Mat::zeros(0, 0));
    }
    let rinv =
        spd_inv(r).ok_or_else(|| LiseError::InvalidNoise("R must be positive definite".into()))?;
    let at = a + s_cross * &rinv * c;
    let qt = symmetrize(&(q - s_cross * &rinv * s_cross.transpose()));
    let g = symmetrize(&(c.transpose() * &rinv * c));

    let ac = at.transpose();
    let top = hstack(&[&ac, &(-&g)]);
    let bot = hstack(&[&(-&qt), &(-&at)]);
    let ham = vstack(&[&top, &bot]);
    let w = matrix_sign(&ham)?;
    let eye = Mat::identity(n, n);
    let w11 = w.view((0, 0), (n, n)).into_owned();
    let w12 = w.view((0, n), (n, n)).into_owned();
    let w21 = w.view((n, 0), (n, n)).into_owned();
    let w22 = w.view((n, n), (n, n)).into_owned();
    let lhs = vstack(&[&w12, &(w22 + &eye)]);
    let rhs = -vstack(&[&(w11 + &eye), &w21]);
    if rank(&lhs, 1e-10) < n {
        return Err(LiseError::NoStabilizingSolution(
            "stable subspace is not a graph".into(),
        ));
    }
    let mut p = symmetrize(&(pinv(&lhs, 1e-14) * &rhs));

    let residual = |p: &Mat| symmetrize(&(&at * p + p * at.transpose() + &qt - p * &g * p)).norm();
    let mut res = residual(&p);
    for _ in 0..8 {
        let scale = p.norm().max(1e-300);
        if res <= 1e-13 * scale {
            break;
        }
        let acl = &at - &p * &g;
        let next = match solve_lyapunov(&acl, &(&qt + &p * &g * &p)) {
            Ok(x) => x,
            Err(_) => break,
        };
        let rn = residual(&next);
        if !(rn < res) {
            break;
        }
        p = next;
        res = rn;
    }

    let acl = &at - &p * &g;
    if !eig(&acl).is_hurwitz() {
        return Err(LiseError::NoStabilizingSolution(
            "closed loop is not Hurwitz".into(),
        ));
    }
    if res > 1e-9 * p.norm().max(1e-12) {
        return Err(LiseError::NoStabilizingSolution(format!(
            "riccati residual {res:e} too large"
        )));
    }
    Ok(p)
}

/// Matrix exponential by scaling and squaring of a Padé(6) approximant.
pub fn expm(m: &Mat) -> Mat {
    let n = m.nrows();
    if n == 0 {
        return Mat::zeros(0, 0);
    }
    let norm = m.abs().row_sum().max();
    let s = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as i32
    } else {
        0
    };
    let a = m / 2f64.powi(s);
    let coeffs = [
        1.0,
        0.5,
        5.0 / 44.0,
        1.0 / 66.0,
        1.0 / 792.0,
        1.0 / 15840.0,
        1.0 / 665280.0,
    ];
    let eye = Mat::identity(n, n);
    let mut pow = eye.clone();
    let mut num = eye.clone();
    let mut den = eye.clone();
    for (k, c) in coeffs.iter().enumerate().skip(1) {
        pow = &pow * &a;
        num += &pow * *c;
        den += &pow * (*c * if k % 2 == 1 { -1.0 } else { 1.0 });
    }
    let mut e = den
        .lu()
        .solve(&num)
        .expect("Padé denominator is nonsingular");
    for _ in 0..s {
        e = &e * &e;
    }
    e
}

/// States that the RK4 integrator can combine linearly.
pub trait OdeState: Clone {
    /// `self + h·k`.
    fn add_scaled(&self, k: &Self, h: f64) -> Self;
    /// True when every component is finite.
    fn is_finite(&self) -> bool;
}

impl OdeState for Vector {
    fn add_scaled(&self, k: &Self, h: f64) -> Self {
        self + k * h
    }
    fn is_finite(&self) -> bool {
        self.iter().all(|x| x.is_finite())
    }
}

impl OdeState for Mat {
    fn add_scaled(&self, k: &Self, h: f64) -> Self {
        self + k * h
    }
    fn is_finite(&self) -> bool {
        self.iter().all(|x| x.is_finite())
    }
}

/// One classical fourth-order Runge–Kutta step of size `h` from `(t, y)`.
pub fn rk4_step<S, F>(rhs: &mut F, t: f64, y: &S, h: f64) -> Result<S>
where
    S: OdeState,
    F: FnMut(f64, &S) -> Result<S>,
{
    let guard = |k: S, at: f64| {
        if k.is_finite() {
            Ok(k)
        } else {
            Err(LiseError::DivergedIntegration { t: at })
        }
    };
    let k1 = guard(rhs(t, y)?, t)?;
    let k2 = guard(rhs(t + 0.5 * h, &y.add_scaled(&k1, 0.5 * h))?, t + 0.5 * h)?;
    let k3 = guard(rhs(t + 0.5 * h, &y.add_scaled(&k2, 0.5 * h))?, t + 0.5 * h)?;
    let k4 = guard(rhs(t + h, &y.add_scaled(&k3, h))?, t + h)?;
    let next = y
        .add_scaled(&k1, h / 6.0)
        .add_scaled(&k2, h / 3.0)
        .add_scaled(&k3, h / 3.0)
        .add_scaled(&k4, h / 6.0);
    guard(next, t + h)
}

/// Time grid from `t0` to `t1` with step `h`; the last step is shortened
/// so that the grid ends exactly at `t1`.
pub fn time_grid(t0: f64, t1: f64, h: f64) -> Vec<f64> {
    let span = t1 - t0;
    let steps = ((span / h) - 1e-9).ceil().max(0.0) as usize;
    let mut grid: Vec<f64> = (0..steps).map(|k| t0 + k as f64 * h).collect();
    grid.push(t1);
    grid
}

/// Integrate `ẏ = rhs(t, y)` with fixed-step RK4 from `t0` to `t1`.
///
/// Returns the trajectory sampled at every grid point including both end
/// points.
pub fn integrate_ode<F>(
    mut rhs: F,
    y0: &Vector,
    t0: f64,
    t1: f64,
    h: f64,
) -> Result<Vec<(f64, Vector)>>
where
    F: FnMut(f64, &Vector) -> Vector,
{
    if !(h > 0.0) || !(t1 >= t0) {
        return Err(LiseError::InvalidInput(
            "integrate_ode needs h > 0 and t1 >= t0".into(),
        ));
    }
    let grid = time_grid(t0, t1, h);
    let mut out = Vec::with_capacity(grid.len());
    let mut y = y0.clone();
    out.push((t0, y.clone()));
    let mut f = |t: f64, y: &Vector| Ok(rhs(t, y));
    for w in grid.windows(2) {
        y = rk4_step(&mut f, w[0], &y, w[1] - w[0])?;
        out.push((w[1], y.clone()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// Truncated Taylor series with scaling and squaring, independent of
    /// the Padé-based `expm`.
    fn expm_taylor(m: &Mat) -> Mat {
        let n = m.nrows();
        let s = 12;
        let a = m / 2f64.powi(s);
        let mut term = Mat::identity(n, n);
        let mut sum = term.clone();
        for k in 1..30 {
            term = &term * &a / k as f64;
            sum += &term;
        }
        for _ in 0..s {
            sum = &sum * &sum;
        }
        sum
    }

    #[test]
    fn svd_of_diagonal() {
        let m = Mat::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.0]);
        let d = svd(&m).unwrap();
        assert_eq!(d.s, vec![2.0, 0.0]);
        assert_abs_diff_eq!(d.u, Mat::identity(2, 2), epsilon = 1e-14);
        assert_abs_diff_eq!(
            &d.u * Mat::from_diagonal(&DVector::from_vec(d.s.clone())) * d.v.transpose(),
            m,
            epsilon = 1e-14
        );
        assert_abs_diff_eq!(d.v.abs(), Mat::identity(2, 2), epsilon = 1e-14);
    }

    #[test]
    fn svd_of_zero_and_swap() {
        let d = svd(&Mat::zeros(2, 2)).unwrap();
        assert_eq!(d.s, vec![0.0, 0.0]);
        let swap = Mat::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let d = svd(&swap).unwrap();
        assert_abs_diff_eq!(d.s[0], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(d.s[1], 1.0, epsilon = 1e-14);
        let rec = &d.u.columns(0, 2)
            * Mat::from_diagonal(&Vector::from_vec(d.s.clone()))
            * d.v.columns(0, 2).transpose();
        assert_abs_diff_eq!(rec, swap, epsilon = 1e-13);
    }

    #[test]
    fn svd_rejects_nan() {
        let m = Mat::from_row_slice(1, 1, &[f64::NAN]);
        assert!(matches!(svd(&m), Err(LiseError::InvalidInput(_))));
    }

    #[test]
    fn svd_of_rank_deficient_tall_matrix_reconstructs() {
        // A rank-2 input on which the plain bidiagonal iteration is inaccurate.
        let m = Mat::from_column_slice(
            4,
            3,
            &[
                -1.4422400191358178,
                -0.4596697232462639,
                2.068691073129501,
                -0.4990959172380643,
                0.8174329816248547,
                0.5881302184621707,
                -0.5255498028331811,
                0.18140474227219047,
                1.1252190705712823,
                1.8511008546293084,
                1.3333715003036162,
                -0.07290085211031244,
            ],
        );
        let d = svd(&m).unwrap();
        let mut sfull = Mat::zeros(4, 3);
        for (i, &s) in d.s.iter().enumerate() {
            sfull[(i, i)] = s;
        }
        assert!((&d.u * sfull * d.v.transpose() - &m).norm() < 1e-12);
        assert!((d.u.transpose() * &d.u - Mat::identity(4, 4)).norm() < 1e-12);
        assert!((d.v.transpose() * &d.v - Mat::identity(3, 3)).norm() < 1e-12);
        let (u, s, v) = jacobi_svd(&m.transpose());
        let rec = &u * Mat::from_diagonal(&Vector::from_vec(s)) * v.transpose();
        assert!((rec - m.transpose()).norm() < 1e-12);
    }

    #[test]
    fn pinv_examples() {
        let m = Mat::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.0]);
        assert_abs_diff_eq!(
            pinv(&m, 1e-12),
            Mat::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.0]),
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            pinv(&Mat::identity(3, 3), 1e-12),
            Mat::identity(3, 3),
            epsilon = 1e-15
        );
        let col = Mat::from_row_slice(2, 1, &[1.0, 1.0]);
        // Normal equations: (aᵀa)⁻¹aᵀ = [1, 1] / 2.
        assert_abs_diff_eq!(
            pinv(&col, 1e-12),
            Mat::from_row_slice(1, 2, &[0.5, 0.5]),
            epsilon = 1e-15
        );
        assert_eq!(pinv(&Mat::zeros(2, 3), 1e-12), Mat::zeros(3, 2));
    }

    #[test]
    fn rank_examples() {
        assert_eq!(
            rank(&Mat::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 1e-15]), 1e-9),
            1
        );
        assert_eq!(rank(&Mat::zeros(3, 3), 1e-9), 0);
        assert_eq!(
            rank(&Mat::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]), 1e-9),
            1
        );
    }

    #[test]
    fn care_scalar_quadratic_formula() {
        let one = Mat::from_element(1, 1, 1.0);
        let p = solve_care(&(-&one), &one, &one, &one, &Mat::zeros(1, 1)).unwrap();
        // −2P + 1 − P² = 0 ⇒ P = −1 + √2.
        assert_abs_diff_eq!(p[(0, 0)], 2f64.sqrt() - 1.0, epsilon = 1e-12);
    }

    #[test]
    fn care_zero_noise_hurwitz() {
        let a = Mat::from_row_slice(2, 2, &[-1.0, 2.0, 0.0, -3.0]);
        let c = Mat::from_row_slice(1, 2, &[1.0, 0.0]);
        let p = solve_care(
            &a,
            &c,
            &Mat::zeros(2, 2),
            &Mat::identity(1, 1),
            &Mat::zeros(2, 1),
        )
        .unwrap();
        assert!(p.norm() < 1e-12);
    }

    #[test]
    fn care_matches_long_horizon_riccati() {
        let a = Mat::from_row_slice(2, 2, &[-0.5, 1.0, -0.3, -1.2]);
        let c = Mat::from_row_slice(1, 2, &[1.0, 0.5]);
        let q = Mat::from_row_slice(2, 2, &[0.4, 0.1, 0.1, 0.3]);
        let r = Mat::from_element(1, 1, 0.2);
        let s = Mat::from_row_slice(2, 1, &[0.05, -0.02]);
        let p = solve_care(&a, &c, &q, &r, &s).unwrap();
        let res = care_residual(&a, &c, &q, &r, &s, &p).unwrap();
        assert!(res.norm() <= 1e-9 * p.norm());
        // Oracle: integrate the differential Riccati equation to stationarity.
        let rinv = 1.0 / r[(0, 0)];
        let mut f = |_t: f64, x: &Mat| -> Result<Mat> {
            let k = x * c.transpose() - &s;
            Ok(&a * x + x * a.transpose() + &q - &k * rinv * k.transpose())
        };
        let mut x = Mat::identity(2, 2);
        let mut t = 0.0;
        while t < 60.0 {
            x = rk4_step(&mut f, t, &x, 0.01).unwrap();
            t += 0.01;
        }
        assert_abs_diff_eq!(x, p, epsilon = 1e-9);
    }

    #[test]
    fn care_rejects_undetectable_unstable_mode() {
        let a = Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let c = Mat::from_row_slice(1, 2, &[0.0, 1.0]);
        let err = solve_care(
            &a,
            &c,
            &Mat::identity(2, 2),
            &Mat::identity(1, 1),
            &Mat::zeros(2, 1),
        );
        assert!(matches!(err, Err(LiseError::NoStabilizingSolution(_))));
    }

    #[test]
    fn lyapunov_residual() {
        let a = Mat::from_row_slice(3, 3, &[-1.0, 0.3, 0.0, 0.1, -2.0, 0.5, 0.0, -0.4, -0.7]);
        let q = Mat::from_row_slice(3, 3, &[2.0, 0.1, 0.0, 0.1, 1.0, 0.2, 0.0, 0.2, 0.5]);
        let x = solve_lyapunov(&a, &q).unwrap();
        assert!((&a * &x + &x * a.transpose() + &q).norm() < 1e-12);
    }

    #[test]
    fn integrate_exponential_decay() {
        let traj = integrate_ode(|_, y| -y, &Vector::from_element(1, 1.0), 0.0, 1.0, 1e-3).unwrap();
        let (t, y) = traj.last().unwrap();
        assert_eq!(*t, 1.0);
        assert_abs_diff_eq!(y[0], (-1.0f64).exp(), epsilon = 1e-9);
        let flat = integrate_ode(
            |_, y| y * 0.0,
            &Vector::from_vec(vec![3.0, -2.0]),
            0.0,
            0.77,
            0.1,
        )
        .unwrap();
        assert_eq!(flat.last().unwrap().1, Vector::from_vec(vec![3.0, -2.0]));
        assert_abs_diff_eq!(flat.last().unwrap().0, 0.77, epsilon = 0.0);
    }

    #[test]
    fn integrate_reports_divergence_time() {
        let err = integrate_ode(
            |t, y| if t > 0.5 { y * f64::NAN } else { y.clone() },
            &Vector::from_element(1, 1.0),
            0.0,
            1.0,
            0.1,
        );
        match err {
            Err(LiseError::DivergedIntegration { t }) => assert!(t > 0.5 && t <= 0.61),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn integrate_linear_matches_exponential() {
        let a = Mat::from_row_slice(2, 2, &[0.0, 1.0, -2.0, -0.3]);
        let y0 = Vector::from_vec(vec![1.0, 0.0]);
        let exact = expm_taylor(&(&a * 2.0)) * &y0;
        let err = |h: f64| {
            let tr = integrate_ode(|_, y| &a * y, &y0, 0.0, 2.0, h).unwrap();
            (&tr.last().unwrap().1 - &exact).norm()
        };
        let (e1, e2) = (err(0.02), err(0.01));
        assert!((e1 / e2).log2() >= 3.5, "order {}", (e1 / e2).log2());
        assert!(e2 < 1e-7);
    }

    #[test]
    fn pade_expm_matches_taylor_oracle() {
        let a = Mat::from_row_slice(3, 3, &[0.1, 2.0, -1.0, -0.5, -1.0, 0.3, 1.5, 0.0, -2.0]);
        assert_abs_diff_eq!(expm(&a), expm_taylor(&a), epsilon = 1e-11);
    }

    #[test]
    fn eig_examples() {
        let rep = eig(&Mat::identity(3, 3));
        assert!(rep
            .eigenvalues
            .iter()
            .all(|z| (z - Complex::new(1.0, 0.0)).norm() < 1e-14));
        let rep = eig(&Mat::from_diagonal(&Vector::from_vec(vec![-1.0, -2.0])));
        let want = [Complex::new(-1.0, 0.0), Complex::new(-2.0, 0.0)];
        assert!(spectrum_mismatch(&rep.eigenvalues, &want) < 1e-14);
        assert_eq!(rep.max_real_part, -1.0);
        // λ² + λ + 0.25 = (λ + 0.5)².
        let comp = Mat::from_row_slice(2, 2, &[0.0, 1.0, -0.25, -1.0]);
        let rep = eig(&comp);
        let want = [Complex::new(-0.5, 0.0), Complex::new(-0.5, 0.0)];
        assert!(spectrum_mismatch(&rep.eigenvalues, &want) < 1e-7);
    }

    #[test]
    fn complement_of_axis() {
        let q = Mat::from_row_slice(3, 1, &[0.0, 1.0, 0.0]);
        let c = orth_complement(&q);
        assert_eq!(
            c,
            Mat::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0])
        );
    }
}
