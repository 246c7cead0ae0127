//! Auxiliary measurement `ȳ = C̄ẋ + C̿x + D̄u̇ + D̿u + H̄ḋ + H̿d + v̄`.

use super::schedule::{MatrixSchedule, SystemSchedule};
use crate::asvd::{structured_svd, structured_svd_aligned, StructuredSvd};
use crate::error::{LiseError, Result};
use crate::lincore::Mat;

/// Matrices of the auxiliary measurement as functions of time.
#[derive(Debug, Clone)]
pub struct AuxMeasurementModel {
    pub cbar: MatrixSchedule,
    pub cbarbar: MatrixSchedule,
    pub dbar: MatrixSchedule,
    pub dbarbar: MatrixSchedule,
    pub hbar: MatrixSchedule,
    pub hbarbar: MatrixSchedule,
}

/// Auxiliary measurement matrices at one instant together with the
/// structured SVD of `H̄` and the projected quantities `T̄₂`, `C̄₂`, `D̄₂`.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxAt {
    pub cbar: Mat,
    pub cbarbar: Mat,
    pub dbar: Mat,
    pub dbarbar: Mat,
    pub hbar: Mat,
    pub hbarbar: Mat,
    pub svd: StructuredSvd,
    pub t2bar: Mat,
    pub cbar2: Mat,
    pub dbar2: Mat,
}

impl AuxMeasurementModel {
    /// Generic model from its six matrix schedules.
    pub fn new(
        cbar: MatrixSchedule,
        cbarbar: MatrixSchedule,
        dbar: MatrixSchedule,
        dbarbar: MatrixSchedule,
        hbar: MatrixSchedule,
        hbarbar: MatrixSchedule,
    ) -> Result<Self> {
        let lbar = cbar.rows();
        let n = cbar.cols();
        let ok = cbarbar.rows() == lbar
            && cbarbar.cols() == n
            && dbar.rows() == lbar
            && dbarbar.rows() == lbar
            && dbarbar.cols() == dbar.cols()
            && hbar.rows() == lbar
            && hbarbar.rows() == lbar
            && hbarbar.cols() == hbar.cols();
        if !ok {
            return Err(LiseError::InvalidInput(
                "auxiliary measurement matrices have inconsistent shapes".into(),
            ));
        }
        Ok(AuxMeasurementModel {
            cbar,
            cbarbar,
            dbar,
            dbarbar,
            hbar,
            hbarbar,
        })
    }

    /// Model with constant matrices.
    pub fn constant(
        cbar: Mat,
        cbarbar: Mat,
        dbar: Mat,
        dbarbar: Mat,
        hbar: Mat,
        hbarbar: Mat,
    ) -> Result<Self> {
        Self::new(
            MatrixSchedule::constant(cbar),
            MatrixSchedule::constant(cbarbar),
            MatrixSchedule::constant(dbar),
            MatrixSchedule::constant(dbarbar),
            MatrixSchedule::constant(hbar),
            MatrixSchedule::constant(hbarbar),
        )
    }

    /// The output derivative `ȳ = ẏ`: `C̄ = C`, `C̿ = Ċ`, `D̄ = D`,
    /// `D̿ = Ḋ`, `H̄ = H`, `H̿ = Ḣ`.
    pub fn output_derivative(sched: &SystemSchedule) -> Self {
        let deriv = |s: &MatrixSchedule| {
            if s.is_constant() {
                MatrixSchedule::zeros(s.rows(), s.cols())
            } else {
                let s1 = s.clone();
                let s2 = s.clone();
                MatrixSchedule::from_fn(s.rows(), s.cols(), move |t| s1.dot(t))
                    .with_derivative(move |t| s2.ddot(t))
            }
        };
        AuxMeasurementModel {
            cbar: sched.c.clone(),
            cbarbar: deriv(&sched.c),
            dbar: sched.d.clone(),
            dbarbar: deriv(&sched.d),
            hbar: sched.h.clone(),
            hbarbar: deriv(&sched.h),
        }
    }

    /// Empty auxiliary measurement (`l̄ = 0`), for systems without
    /// dynamics-only unknown inputs.
    pub fn none(n: usize, m: usize, p: usize) -> Self {
        AuxMeasurementModel {
            cbar: MatrixSchedule::zeros(0, n),
            cbarbar: MatrixSchedule::zeros(0, n),
            dbar: MatrixSchedule::zeros(0, m),
            dbarbar: MatrixSchedule::zeros(0, m),
            hbar: MatrixSchedule::zeros(0, p),
            hbarbar: MatrixSchedule::zeros(0, p),
        }
    }

    pub fn lbar(&self) -> usize {
        self.cbar.rows()
    }

    pub fn is_constant(&self) -> bool {
        [
            &self.cbar,
            &self.cbarbar,
            &self.dbar,
            &self.dbarbar,
            &self.hbar,
            &self.hbarbar,
        ]
        .iter()
        .all(|s| s.is_constant())
    }

    /// Evaluate at `t`, continuing the SVD factors of `prev` when given,
    /// and validate `T̄₂ H̿ = 0`.
    pub fn at(&self, t: f64, tol: f64, prev: Option<&StructuredSvd>) -> Result<AuxAt> {
        let hbar = self.hbar.at(t);
        let svd = match prev {
            Some(p) => structured_svd_aligned(&hbar, tol, p)?,
            None => structured_svd(&hbar, tol)?,
        };
        let t2bar = svd.u2.transpose();
        let hbarbar = self.hbarbar.at(t);
        let leak = (&t2bar * &hbarbar).norm();
        if leak > 1e-10 * hbarbar.norm().max(1.0) {
            return Err(LiseError::InvalidInput(format!(
                "auxiliary model violates T2bar Hbarbar = 0 (residual {leak:e})"
            )));
        }
        let cbar = self.cbar.at(t);
        let dbar = self.dbar.at(t);
        let cbar2 = &t2bar * &cbar;
        let dbar2 = &t2bar * &dbar;
        Ok(AuxAt {
            cbar,
            cbarbar: self.cbarbar.at(t),
            dbar,
            dbarbar: self.dbarbar.at(t),
            hbar,
            hbarbar,
            svd,
            t2bar,
            cbar2,
            dbar2,
        })
    }
}
