//! Run configuration, loadable from JSON and overridable from the CLI.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::scenarios::custom::{to_mat, CustomScenario, Rows};
use super::scenarios::Scenario;
use crate::error::{LiseError, Result};
use crate::lincore::Vector;
use crate::sysmodel::{GaussMarkovSpec, WhiteNoiseSpec};

/// Estimator used in a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum FilterKind {
    Elise,
    Alise,
    /// Kalman–Bucy filter that ignores the unknown inputs.
    KalmanBaseline,
}

impl FilterKind {
    pub fn name(self) -> &'static str {
        match self {
            FilterKind::Elise => "elise",
            FilterKind::Alise => "alise",
            FilterKind::KalmanBaseline => "kalman-baseline",
        }
    }
}

/// How ALISE propagates its state estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AliseForm {
    /// Derivative-free recursion on `θ`, with the backward difference.
    #[default]
    Theta,
    /// Reference form fed with the exact output derivative.
    DerivativeFed,
}

/// Replacement noise intensities. Omitted entries keep the scenario value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseOverrides {
    pub q: Option<Rows>,
    pub r: Option<Rows>,
    pub rbar: Option<Rows>,
    pub rgrave: Option<Rows>,
    pub q_g: Option<Rows>,
    pub r_g: Option<Rows>,
}

/// Complete configuration of a Monte Carlo run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub scenario: String,
    pub filter: FilterKind,
    pub trials: usize,
    /// Integrator step; the scenario default when omitted.
    pub dt: Option<f64>,
    /// Finite-difference window of ALISE; the scenario default when omitted.
    pub fd_dt: Option<f64>,
    pub seed: u64,
    /// End time; the scenario default when omitted.
    pub t_final: Option<f64>,
    /// Close the loop with the scenario controller when it has one.
    pub controller: bool,
    pub out: Option<PathBuf>,
    /// Write one CSV per trial in addition to the aggregate.
    pub write_trials: bool,
    /// Draw the truth initial state from `N(x̂₀, P₀)`.
    pub sample_initial_state: bool,
    /// Offset added to the filter's initial estimate.
    pub initial_bias: Option<Vec<f64>>,
    /// Multiplies every noise intensity and `P₀`.
    pub noise_scale: f64,
    /// Generate noisy truth data; when false the plant is noise-free while
    /// the filters keep their noise model.
    pub truth_noise: bool,
    /// Metrics ignore samples before this time; defaults to a tenth of the horizon.
    pub transient: Option<f64>,
    /// Keep every k-th sample in the results; chosen automatically when omitted.
    pub record_every: Option<usize>,
    pub alise_form: AliseForm,
    pub noise: NoiseOverrides,
    pub custom: Option<CustomScenario>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            scenario: "helicopter".into(),
            filter: FilterKind::Elise,
            trials: 1,
            dt: None,
            fd_dt: None,
            seed: 0,
            t_final: None,
            controller: true,
            out: None,
            write_trials: true,
            sample_initial_state: true,
            initial_bias: None,
            noise_scale: 1.0,
            truth_noise: true,
            transient: None,
            record_every: None,
            alise_form: AliseForm::Theta,
            noise: NoiseOverrides::default(),
            custom: None,
        }
    }
}

impl ScenarioConfig {
    /// Parse a configuration file.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LiseError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text)
            .map_err(|e| LiseError::Config(format!("invalid configuration: {e}")))
    }

    /// Check the settings that do not depend on the scenario.
    pub fn validate(&self) -> Result<()> {
        if self.trials < 1 {
            return Err(LiseError::Config("trials must be at least 1".into()));
        }
        for (name, v) in [
            ("dt", self.dt),
            ("fd_dt", self.fd_dt),
            ("t_final", self.t_final),
        ] {
            if let Some(x) = v {
                if !(x > 0.0 && x.is_finite()) {
                    return Err(LiseError::Config(format!(
                        "{name} must be positive, got {x}"
                    )));
                }
            }
        }
        if let (Some(dt), Some(fd)) = (self.dt, self.fd_dt) {
            if fd < dt {
                return Err(LiseError::Config(format!(
                    "fd_dt ({fd}) must not be smaller than dt ({dt})"
                )));
            }
        }
        if !(self.noise_scale > 0.0 && self.noise_scale.is_finite()) {
            return Err(LiseError::Config("noise_scale must be positive".into()));
        }
        if self.record_every == Some(0) {
            return Err(LiseError::Config("record_every must be at least 1".into()));
        }
        Ok(())
    }

    /// Apply the run-time overrides to a freshly built scenario.
    pub fn apply(&self, sc: &mut Scenario) -> Result<()> {
        self.validate()?;
        if let Some(dt) = self.dt {
            sc.dt = dt;
        }
        if let Some(fd) = self.fd_dt {
            sc.fd_dt = fd;
        }
        if let Some(tf) = self.t_final {
            sc.t1 = sc.t0 + tf;
        }
        if sc.fd_dt < sc.dt {
            return Err(LiseError::Config(format!(
                "fd_dt ({}) must not be smaller than dt ({})",
                sc.fd_dt, sc.dt
            )));
        }
        if !self.controller {
            sc.controller = None;
            sc.alise_controller = None;
        }
        if let Some(b) = &self.initial_bias {
            if b.len() != sc.xhat0.len() {
                return Err(LiseError::Config(format!(
                    "initial_bias must have {} entries",
                    sc.xhat0.len()
                )));
            }
            sc.xhat0 += Vector::from_row_slice(b);
        }
        self.apply_noise(sc)?;
        sc.scale_noise(self.noise_scale)?;
        Ok(())
    }

    fn apply_noise(&self, sc: &mut Scenario) -> Result<()> {
        let ov = &self.noise;
        let at = sc.white.at(sc.t0)?;
        let pick = |o: &Option<Rows>,
                    cur: crate::lincore::Mat,
                    name: &str|
         -> Result<crate::lincore::Mat> {
            match o {
                Some(r) => {
                    let m = to_mat(r, cur.ncols(), name)?;
                    if m.shape() != cur.shape() {
                        return Err(LiseError::Config(format!(
                            "noise.{name} must be {}x{}",
                            cur.nrows(),
                            cur.ncols()
                        )));
                    }
                    Ok(m)
                }
                None => Ok(cur),
            }
        };
        if ov.q.is_some() || ov.r.is_some() || ov.rbar.is_some() || ov.rgrave.is_some() {
            sc.white = WhiteNoiseSpec::constant(
                pick(&ov.q, at.q, "q")?,
                pick(&ov.r, at.r, "r")?,
                pick(&ov.rbar, at.rbar, "rbar")?,
                pick(&ov.rgrave, at.rgrave, "rgrave")?,
            );
        }
        if ov.q_g.is_some() || ov.r_g.is_some() {
            let g = &sc.gm;
            sc.gm = GaussMarkovSpec::stationary(
                g.a_w.clone(),
                g.b_w.clone(),
                pick(&ov.q_g, g.q_g.clone(), "q_g")?,
                g.a_v.clone(),
                g.a_vdot.clone(),
                g.b_v.clone(),
                pick(&ov.r_g, g.r_g.clone(), "r_g")?,
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_round_trip() {
        let cfg =
            ScenarioConfig::from_json(r#"{"scenario": "lti", "filter": "alise", "trials": 3}"#)
                .unwrap();
        assert_eq!(cfg.filter, FilterKind::Alise);
        assert_eq!(cfg.trials, 3);
        assert!(cfg.controller);
        let back = ScenarioConfig::from_json(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(ScenarioConfig::from_json(r#"{"trials": 0}"#)
            .unwrap()
            .validate()
            .is_err());
        assert!(ScenarioConfig::from_json(r#"{"dt": 0.1, "fd_dt": 0.01}"#)
            .unwrap()
            .validate()
            .is_err());
        assert!(ScenarioConfig::from_json(r#"{"unknown_key": 1}"#).is_err());
        assert!(
            ScenarioConfig::from_file(Path::new("/nonexistent/cfg.json"))
                .unwrap_err()
                .is_config_error()
        );
    }
}
