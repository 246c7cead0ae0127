//! Time-invariant scenario described entirely in JSON.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::Scenario;
use crate::control::ControllerSpec;
use crate::error::{LiseError, Result};
use crate::harness::signals::{waveform_signal, Waveform};
use crate::lincore::{Mat, Vector};
use crate::sysmodel::{
    AuxMeasurementModel, AuxSynthesis, GaussMarkovSpec, SystemSchedule, WhiteNoiseSpec,
};

/// Row-major matrix as nested arrays.
pub type Rows = Vec<Vec<f64>>;

/// Convert nested rows to a matrix; `cols` fixes the width of an empty
/// matrix.
pub fn to_mat(rows: &Rows, cols: usize, name: &str) -> Result<Mat> {
    if rows.is_empty() {
        return Ok(Mat::zeros(0, cols));
    }
    let c = rows[0].len();
    if rows.iter().any(|r| r.len() != c) {
        return Err(LiseError::Config(format!(
            "matrix {name} has rows of different lengths"
        )));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(LiseError::Config(format!(
            "matrix {name} has non-finite entries"
        )));
    }
    Ok(Mat::from_row_iterator(
        rows.len(),
        c,
        rows.iter().flatten().copied(),
    ))
}

pub fn from_mat(m: &Mat) -> Rows {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn check_shape(m: &Mat, r: usize, c: usize, name: &str) -> Result<()> {
    if m.shape() != (r, c) {
        return Err(LiseError::Config(format!(
            "{name} is {}x{}, expected {r}x{c}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

/// Auxiliary measurement `ȳ = C̄ẋ + C̿x + v̄` with intensity `R̄` and
/// cross-covariance `R̀` against `v`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomAux {
    pub cbar: Rows,
    #[serde(default)]
    pub cbarbar: Option<Rows>,
    pub rbar: Rows,
    #[serde(default)]
    pub rgrave: Option<Rows>,
}

/// Gauss–Markov noise model used by ALISE and its truth runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomGaussMarkov {
    pub a_w: Rows,
    pub b_w: Rows,
    pub q_g: Rows,
    pub a_v: Rows,
    pub a_vdot: Rows,
    pub b_v: Rows,
    pub r_g: Rows,
}

/// Full description of a time-invariant scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomScenario {
    pub a: Rows,
    pub b: Rows,
    pub g: Rows,
    pub c: Rows,
    #[serde(default)]
    pub d: Option<Rows>,
    #[serde(default)]
    pub h: Option<Rows>,
    /// Process-noise gain; identity when omitted.
    #[serde(default)]
    pub w: Option<Rows>,
    pub q: Rows,
    pub r: Rows,
    #[serde(default)]
    pub aux: Option<CustomAux>,
    #[serde(default)]
    pub gauss_markov: Option<CustomGaussMarkov>,
    /// Truth unknown inputs, one waveform per component.
    pub inputs: Vec<Waveform>,
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    #[serde(default)]
    pub xhat0: Option<Vec<f64>>,
    #[serde(default)]
    pub p0: Option<Rows>,
    pub t_final: f64,
    pub dt: f64,
    #[serde(default = "default_fd_dt")]
    pub fd_dt: f64,
    /// State-feedback gain `K` for `u = −Kx̂`.
    #[serde(default)]
    pub feedback: Option<Rows>,
}

fn default_fd_dt() -> f64 {
    0.05
}

/// Build a scenario from its JSON description.
pub fn build(spec: &CustomScenario) -> Result<Scenario> {
    let a = to_mat(&spec.a, 0, "a")?;
    let n = a.nrows();
    check_shape(&a, n, n, "a")?;
    let b = to_mat(&spec.b, 0, "b")?;
    let m = b.ncols();
    check_shape(&b, n, m, "b")?;
    let g = to_mat(&spec.g, 0, "g")?;
    let p = g.ncols();
    check_shape(&g, n, p, "g")?;
    let c = to_mat(&spec.c, n, "c")?;
    let l = c.nrows();
    check_shape(&c, l, n, "c")?;
    let d = match &spec.d {
        Some(r) => to_mat(r, m, "d")?,
        None => Mat::zeros(l, m),
    };
    let h = match &spec.h {
        Some(r) => to_mat(r, p, "h")?,
        None => Mat::zeros(l, p),
    };
    let w = match &spec.w {
        Some(r) => to_mat(r, 0, "w")?,
        None => Mat::identity(n, n),
    };
    let qdim = w.ncols();
    let q = to_mat(&spec.q, qdim, "q")?;
    check_shape(&q, qdim, qdim, "q")?;
    let r = to_mat(&spec.r, l, "r")?;
    check_shape(&r, l, l, "r")?;
    if spec.inputs.len() != p {
        return Err(LiseError::Config(format!(
            "{} input waveforms given for {p} unknown inputs",
            spec.inputs.len()
        )));
    }
    let sched =
        SystemSchedule::lti(a, b, g, c, d, h, w).map_err(|e| LiseError::Config(e.to_string()))?;

    let (aux, white) = match &spec.aux {
        Some(ax) => {
            let cbar = to_mat(&ax.cbar, n, "aux.cbar")?;
            let lbar = cbar.nrows();
            let cbarbar = match &ax.cbarbar {
                Some(rr) => to_mat(rr, n, "aux.cbarbar")?,
                None => Mat::zeros(lbar, n),
            };
            let rbar = to_mat(&ax.rbar, lbar, "aux.rbar")?;
            check_shape(&rbar, lbar, lbar, "aux.rbar")?;
            let rgrave = match &ax.rgrave {
                Some(rr) => to_mat(rr, lbar, "aux.rgrave")?,
                None => Mat::zeros(l, lbar),
            };
            check_shape(&rgrave, l, lbar, "aux.rgrave")?;
            let aux = AuxMeasurementModel::constant(
                cbar,
                cbarbar,
                Mat::zeros(lbar, m),
                Mat::zeros(lbar, m),
                Mat::zeros(lbar, p),
                Mat::zeros(lbar, p),
            )
            .map_err(|e| LiseError::Config(e.to_string()))?;
            (aux, WhiteNoiseSpec::constant(q, r, rbar, rgrave))
        }
        None => (
            AuxMeasurementModel::none(n, m, p),
            WhiteNoiseSpec::constant(q, r, Mat::zeros(0, 0), Mat::zeros(l, 0)),
        ),
    };
    let gm = match &spec.gauss_markov {
        Some(g) => GaussMarkovSpec::stationary(
            to_mat(&g.a_w, 0, "a_w")?,
            to_mat(&g.b_w, 0, "b_w")?,
            to_mat(&g.q_g, 0, "q_g")?,
            to_mat(&g.a_v, 0, "a_v")?,
            to_mat(&g.a_vdot, 0, "a_vdot")?,
            to_mat(&g.b_v, 0, "b_v")?,
            to_mat(&g.r_g, 0, "r_g")?,
        )?,
        // First-order lags whose stationary covariances equal Q and R.
        None => {
            let wq = Mat::identity(qdim, qdim);
            let wl = Mat::identity(l, l);
            let q_spec = spec.q.clone();
            let qm = to_mat(&q_spec, qdim, "q")?;
            let rm = to_mat(&spec.r, l, "r")?;
            GaussMarkovSpec::stationary(
                wq.clone(),
                wq,
                &qm * 2.0,
                wl.clone(),
                &wl * 2.0,
                wl,
                &rm * 4.0,
            )?
        }
    };
    let vec_or = |v: &Option<Vec<f64>>, dflt: Vector, name: &str| -> Result<Vector> {
        match v {
            Some(x) if x.len() == n => Ok(Vector::from_row_slice(x)),
            Some(_) => Err(LiseError::Config(format!("{name} must have {n} entries"))),
            None => Ok(dflt),
        }
    };
    let x0 = vec_or(&spec.x0, Vector::zeros(n), "x0")?;
    let xhat0 = vec_or(&spec.xhat0, x0.clone(), "xhat0")?;
    let p0 = match &spec.p0 {
        Some(rr) => to_mat(rr, n, "p0")?,
        None => Mat::identity(n, n),
    };
    check_shape(&p0, n, n, "p0")?;
    if !(spec.t_final > 0.0 && spec.dt > 0.0) {
        return Err(LiseError::Config("t_final and dt must be positive".into()));
    }
    let controller: Option<Arc<dyn super::ControlLaw>> = match &spec.feedback {
        Some(k) => {
            let k = to_mat(k, n, "feedback")?;
            check_shape(&k, m, n, "feedback")?;
            let svd =
                crate::asvd::structured_svd(&sched.h.at(0.0), crate::lincore::DEFAULT_RANK_TOL)?;
            Some(Arc::new(ControllerSpec::state_feedback(
                k,
                svd.v1.ncols(),
                svd.v2.ncols(),
            )))
        }
        None => None,
    };
    let aux_synthesis = if aux.lbar() > 0 {
        AuxSynthesis::Model(aux.clone())
    } else {
        AuxSynthesis::None
    };
    Ok(Scenario {
        name: "custom".into(),
        plant: Arc::new(sched.clone()),
        d: waveform_signal(spec.inputs.clone()),
        white,
        aux,
        aux_synthesis,
        gm,
        x0,
        xhat0,
        p0,
        t0: 0.0,
        t1: spec.t_final,
        dt: spec.dt,
        fd_dt: spec.fd_dt,
        reference: None,
        controller,
        alise_controller: None,
        sched,
    })
}
