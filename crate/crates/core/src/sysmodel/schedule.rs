//! Time-indexed matrices and vector signals with their derivatives.

use std::fmt;
use std::sync::Arc;

use crate::lincore::{Mat, Vector};

/// Matrix-valued function of time.
pub type MatFn = Arc<dyn Fn(f64) -> Mat + Send + Sync>;
/// Vector-valued function of time.
pub type VecFn = Arc<dyn Fn(f64) -> Vector + Send + Sync>;

/// Step of the central difference used when a derivative is not supplied.
pub const FD_STEP: f64 = 1e-4;
/// Step of the second central difference used when `M̈` is not supplied.
pub const FD_STEP2: f64 = 1e-3;

/// A matrix function of time with optional analytic first and second
/// derivatives. Missing derivatives fall back to central differences.
#[derive(Clone)]
pub struct MatrixSchedule {
    rows: usize,
    cols: usize,
    value: MatFn,
    first: Option<MatFn>,
    second: Option<MatFn>,
    constant: Option<Mat>,
}

impl fmt::Debug for MatrixSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.constant {
            Some(m) => write!(f, "MatrixSchedule::constant({m:?})"),
            None => write!(
                f,
                "MatrixSchedule({}x{}, time-varying)",
                self.rows, self.cols
            ),
        }
    }
}

impl MatrixSchedule {
    /// Time-invariant matrix; derivatives are exactly zero.
    pub fn constant(m: Mat) -> Self {
        let (rows, cols) = m.shape();
        let v = m.clone();
        MatrixSchedule {
            rows,
            cols,
            value: Arc::new(move |_| v.clone()),
            first: None,
            second: None,
            constant: Some(m),
        }
    }

    /// Zero matrix of the given shape.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::constant(Mat::zeros(rows, cols))
    }

    /// Time-varying matrix given by `f`.
    pub fn from_fn<F>(rows: usize, cols: usize, f: F) -> Self
    where
        F: Fn(f64) -> Mat + Send + Sync + 'static,
    {
        MatrixSchedule {
            rows,
            cols,
            value: Arc::new(f),
            first: None,
            second: None,
            constant: None,
        }
    }

    /// Attach an analytic first derivative.
    pub fn with_derivative<F>(mut self, f: F) -> Self
    where
        F: Fn(f64) -> Mat + Send + Sync + 'static,
    {
        self.first = Some(Arc::new(f));
        self
    }

    /// Attach an analytic second derivative.
    pub fn with_second_derivative<F>(mut self, f: F) -> Self
    where
        F: Fn(f64) -> Mat + Send + Sync + 'static,
    {
        self.second = Some(Arc::new(f));
        self
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_constant(&self) -> bool {
        self.constant.is_some()
    }

    /// True when the first derivative is supplied analytically (or is zero).
    pub fn has_analytic_derivative(&self) -> bool {
        self.constant.is_some() || self.first.is_some()
    }

    /// Value at `t`.
    pub fn at(&self, t: f64) -> Mat {
        match &self.constant {
            Some(m) => m.clone(),
            None => (self.value)(t),
        }
    }

    /// First derivative at `t`.
    pub fn dot(&self, t: f64) -> Mat {
        if self.constant.is_some() {
            return Mat::zeros(self.rows, self.cols);
        }
        match &self.first {
            Some(f) => f(t),
            None => ((self.value)(t + FD_STEP) - (self.value)(t - FD_STEP)) / (2.0 * FD_STEP),
        }
    }

    /// Second derivative at `t`.
    pub fn ddot(&self, t: f64) -> Mat {
        if self.constant.is_some() {
            return Mat::zeros(self.rows, self.cols);
        }
        match (&self.second, &self.first) {
            (Some(f), _) => f(t),
            (None, Some(d)) => (d(t + FD_STEP) - d(t - FD_STEP)) / (2.0 * FD_STEP),
            (None, None) => {
                let h = FD_STEP2;
                ((self.value)(t + h) - (self.value)(t) * 2.0 + (self.value)(t - h)) / (h * h)
            }
        }
    }
}

/// A vector signal of time with optional analytic derivatives.
#[derive(Clone)]
pub struct Signal {
    dim: usize,
    value: VecFn,
    first: Option<VecFn>,
    second: Option<VecFn>,
}

impl fmt::Debug for Signal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Signal(dim {})", self.dim)
    }
}

impl Signal {
    /// Signal given by `f` with numerical derivatives.
    pub fn from_fn<F>(dim: usize, f: F) -> Self
    where
        F: Fn(f64) -> Vector + Send + Sync + 'static,
    {
        Signal {
            dim,
            value: Arc::new(f),
            first: None,
            second: None,
        }
    }

    /// Identically zero signal.
    pub fn zero(dim: usize) -> Self {
        Signal {
            dim,
            value: Arc::new(move |_| Vector::zeros(dim)),
            first: Some(Arc::new(move |_| Vector::zeros(dim))),
            second: Some(Arc::new(move |_| Vector::zeros(dim))),
        }
    }

    /// Constant signal.
    pub fn constant(v: Vector) -> Self {
        let dim = v.len();
        Signal {
            dim,
            value: Arc::new(move |_| v.clone()),
            first: Some(Arc::new(move |_| Vector::zeros(dim))),
            second: Some(Arc::new(move |_| Vector::zeros(dim))),
        }
    }

    pub fn with_derivative<F>(mut self, f: F) -> Self
    where
        F: Fn(f64) -> Vector + Send + Sync + 'static,
    {
        self.first = Some(Arc::new(f));
        self
    }

    pub fn with_second_derivative<F>(mut self, f: F) -> Self
    where
        F: Fn(f64) -> Vector + Send + Sync + 'static,
    {
        self.second = Some(Arc::new(f));
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// True when the first derivative is analytic.
    pub fn has_analytic_derivative(&self) -> bool {
        self.first.is_some()
    }

    pub fn at(&self, t: f64) -> Vector {
        (self.value)(t)
    }

    pub fn dot(&self, t: f64) -> Vector {
        match &self.first {
            Some(f) => f(t),
            None => ((self.value)(t + FD_STEP) - (self.value)(t - FD_STEP)) / (2.0 * FD_STEP),
        }
    }

    pub fn ddot(&self, t: f64) -> Vector {
        match (&self.second, &self.first) {
            (Some(f), _) => f(t),
            (None, Some(d)) => (d(t + FD_STEP) - d(t - FD_STEP)) / (2.0 * FD_STEP),
            (None, None) => {
                let h = FD_STEP2;
                ((self.value)(t + h) - (self.value)(t) * 2.0 + (self.value)(t - h)) / (h * h)
            }
        }
    }
}

/// Dimensions of the system: states `n`, known inputs `m`, unknown inputs
/// `p`, outputs `l`, process noise `q`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Dims {
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub l: usize,
    pub q: usize,
}

/// System matrices evaluated at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemAt {
    pub t: f64,
    pub a: Mat,
    pub b: Mat,
    pub g: Mat,
    pub c: Mat,
    pub d: Mat,
    pub h: Mat,
    pub w: Mat,
}

/// Time derivatives of the system matrices at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemDerivs {
    pub a_dot: Mat,
    pub b_dot: Mat,
    pub g_dot: Mat,
    pub c_dot: Mat,
    pub d_dot: Mat,
    pub h_dot: Mat,
    pub w_dot: Mat,
    pub c_ddot: Mat,
    pub d_ddot: Mat,
}

/// `ẋ = A x + B u + G d + W w`, `y = C x + D u + H d + v`.
#[derive(Debug, Clone)]
pub struct SystemSchedule {
    pub dims: Dims,
    pub a: MatrixSchedule,
    pub b: MatrixSchedule,
    pub g: MatrixSchedule,
    pub c: MatrixSchedule,
    pub d: MatrixSchedule,
    pub h: MatrixSchedule,
    pub w: MatrixSchedule,
}

impl SystemSchedule {
    /// Assemble a schedule and check every shape against `dims`.
    pub fn new(
        a: MatrixSchedule,
        b: MatrixSchedule,
        g: MatrixSchedule,
        c: MatrixSchedule,
        d: MatrixSchedule,
        h: MatrixSchedule,
        w: MatrixSchedule,
    ) -> crate::Result<Self> {
        let dims = Dims {
            n: a.rows(),
            m: b.cols(),
            p: g.cols(),
            l: c.rows(),
            q: w.cols(),
        };
        let Dims { n, m, p, l, q } = dims;
        let checks = [
            ("A", &a, n, n),
            ("B", &b, n, m),
            ("G", &g, n, p),
            ("C", &c, l, n),
            ("D", &d, l, m),
            ("H", &h, l, p),
            ("W", &w, n, q),
        ];
        for (name, s, r, c) in checks {
            if s.rows() != r || s.cols() != c {
                return Err(crate::LiseError::InvalidInput(format!(
                    "{name} is {}x{}, expected {r}x{c}",
                    s.rows(),
                    s.cols()
                )));
            }
        }
        if l < 1 || n < l || l < p {
            return Err(crate::LiseError::InvalidInput(format!(
                "dimensions must satisfy n >= l >= 1 and l >= p (n={n}, l={l}, p={p})"
            )));
        }
        Ok(SystemSchedule {
            dims,
            a,
            b,
            g,
            c,
            d,
            h,
            w,
        })
    }

    /// Time-invariant system from constant matrices.
    pub fn lti(a: Mat, b: Mat, g: Mat, c: Mat, d: Mat, h: Mat, w: Mat) -> crate::Result<Self> {
        Self::new(
            MatrixSchedule::constant(a),
            MatrixSchedule::constant(b),
            MatrixSchedule::constant(g),
            MatrixSchedule::constant(c),
            MatrixSchedule::constant(d),
            MatrixSchedule::constant(h),
            MatrixSchedule::constant(w),
        )
    }

    /// True when every matrix is constant.
    pub fn is_lti(&self) -> bool {
        [
            &self.a, &self.b, &self.g, &self.c, &self.d, &self.h, &self.w,
        ]
        .iter()
        .all(|s| s.is_constant())
    }

    pub fn at(&self, t: f64) -> SystemAt {
        SystemAt {
            t,
            a: self.a.at(t),
            b: self.b.at(t),
            g: self.g.at(t),
            c: self.c.at(t),
            d: self.d.at(t),
            h: self.h.at(t),
            w: self.w.at(t),
        }
    }

    pub fn derivs_at(&self, t: f64) -> SystemDerivs {
        SystemDerivs {
            a_dot: self.a.dot(t),
            b_dot: self.b.dot(t),
            g_dot: self.g.dot(t),
            c_dot: self.c.dot(t),
            d_dot: self.d.dot(t),
            h_dot: self.h.dot(t),
            w_dot: self.w.dot(t),
            c_ddot: self.c.ddot(t),
            d_ddot: self.d.ddot(t),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn numerical_derivatives_of_sine() {
        let s = MatrixSchedule::from_fn(1, 1, |t| Mat::from_element(1, 1, t.sin()));
        assert_abs_diff_eq!(s.dot(0.3)[(0, 0)], 0.3f64.cos(), epsilon = 1e-8);
        assert_abs_diff_eq!(s.ddot(0.3)[(0, 0)], -0.3f64.sin(), epsilon = 1e-6);
        let v = Signal::from_fn(1, |t| Vector::from_element(1, t * t));
        assert_abs_diff_eq!(v.dot(2.0)[0], 4.0, epsilon = 1e-8);
        assert_abs_diff_eq!(v.ddot(2.0)[0], 2.0, epsilon = 1e-5);
    }

    #[test]
    fn schedule_shape_validation() {
        let ok = SystemSchedule::lti(
            Mat::zeros(2, 2),
            Mat::zeros(2, 1),
            Mat::zeros(2, 1),
            Mat::zeros(1, 2),
            Mat::zeros(1, 1),
            Mat::zeros(1, 1),
            Mat::zeros(2, 1),
        );
        assert!(ok.is_ok());
        let bad = SystemSchedule::lti(
            Mat::zeros(2, 2),
            Mat::zeros(2, 1),
            Mat::zeros(2, 1),
            Mat::zeros(1, 2),
            Mat::zeros(2, 1),
            Mat::zeros(1, 1),
            Mat::zeros(2, 1),
        );
        assert!(bad.is_err());
    }
}
