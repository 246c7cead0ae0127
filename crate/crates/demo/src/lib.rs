//! Browser bindings: a closed-loop helicopter run, analytic SVD tracking on
//! a random matrix path and the decay of an initial estimation bias.
//!
//! Each operation returns a JSON string so the page can plot it directly.

use lise::asvd::{propagate_factors, structured_svd};
use lise::harness::asvdcheck::PolyMatrix;
use lise::harness::{build_scenario, run_trial, FilterKind, ScenarioConfig};
use lise::lincore::DEFAULT_RANK_TOL;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Number of points sent to the page per series.
const PLOT_POINTS: usize = 400;

#[derive(Serialize)]
struct TrialSeries {
    t: Vec<f64>,
    x: Vec<Vec<f64>>,
    xhat: Vec<Vec<f64>>,
    d: Vec<Vec<f64>>,
    dhat: Vec<Vec<f64>>,
    tr_px: Vec<f64>,
}

fn parse_filter(name: &str) -> Result<FilterKind, String> {
    match name {
        "elise" => Ok(FilterKind::Elise),
        "alise" => Ok(FilterKind::Alise),
        "kalman-baseline" => Ok(FilterKind::KalmanBaseline),
        other => Err(format!("unknown filter {other:?}")),
    }
}

fn columns(rows: &[lise::lincore::Vector]) -> Vec<Vec<f64>> {
    let dim = rows.first().map_or(0, |v| v.len());
    (0..dim)
        .map(|i| rows.iter().map(|v| v[i]).collect())
        .collect()
}

fn trial_json(cfg: &ScenarioConfig) -> Result<String, String> {
    let sc = build_scenario(cfg).map_err(|e| e.to_string())?;
    let steps = ((sc.t1 - sc.t0) / sc.dt).round() as usize;
    let every = steps.div_ceil(PLOT_POINTS).max(1);
    let r = run_trial(&sc, cfg, 0, every).map_err(|e| e.to_string())?;
    let out = TrialSeries {
        tr_px: r.tr_px(),
        t: r.t,
        x: columns(&r.x),
        xhat: columns(&r.xhat),
        d: columns(&r.d),
        dhat: columns(&r.dhat),
    };
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

/// One closed-loop helicopter trial with the given filter.
pub fn helicopter_run(filter: &str, seed: u64, t_final: f64) -> Result<String, String> {
    let cfg = ScenarioConfig {
        scenario: "helicopter".into(),
        filter: parse_filter(filter)?,
        seed,
        t_final: Some(t_final),
        write_trials: false,
        ..ScenarioConfig::default()
    };
    cfg.validate().map_err(|e| e.to_string())?;
    trial_json(&cfg)
}

#[derive(Serialize)]
struct Tracking {
    t: Vec<f64>,
    /// Singular values from integrating the analytic rates.
    propagated: Vec<Vec<f64>>,
    /// Singular values from a fresh decomposition at each time.
    direct: Vec<Vec<f64>>,
    max_abs_difference: f64,
}

/// Track the nonzero singular values of a random `rows × cols` matrix path
/// of rank `rank` over `[0, t_final]`.
pub fn asvd_tracking(
    rows: usize,
    cols: usize,
    rank: usize,
    seed: u64,
    t_final: f64,
) -> Result<String, String> {
    if !(1..=8).contains(&rows) || !(1..=rows).contains(&cols) || !(1..=cols).contains(&rank) {
        return Err("need 1 ≤ rank ≤ cols ≤ rows ≤ 8".into());
    }
    if !(t_final > 0.0 && t_final <= 10.0) {
        return Err("horizon must be in (0, 10]".into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = PolyMatrix::random(&mut rng, rows, cols, rank);
    let f0 = structured_svd(&h.at(0.0), DEFAULT_RANK_TOL).map_err(|e| e.to_string())?;
    let path = propagate_factors(&f0, |s| h.dot(s), 0.0, t_final, 1e-3, DEFAULT_RANK_TOL)
        .map_err(|e| e.to_string())?;
    let every = path.len().div_ceil(PLOT_POINTS).max(1);
    let mut out = Tracking {
        t: vec![],
        propagated: vec![vec![]; f0.p_h],
        direct: vec![vec![]; f0.p_h],
        max_abs_difference: 0.0,
    };
    for (t, f) in path.iter().step_by(every) {
        let d = structured_svd(&h.at(*t), DEFAULT_RANK_TOL).map_err(|e| e.to_string())?;
        // The propagated values follow analytic branches, which may cross;
        // compare them as sorted sets.
        let mut prop = f.sigma.clone();
        prop.sort_by(|a, b| b.total_cmp(a));
        out.t.push(*t);
        for j in 0..f0.p_h {
            let direct = d.sigma.get(j).copied().unwrap_or(0.0);
            out.propagated[j].push(f.sigma[j]);
            out.direct[j].push(direct);
            out.max_abs_difference = out.max_abs_difference.max((prop[j] - direct).abs());
        }
    }
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

/// Noise-free LTI run whose only error source is an initial estimate
/// offset `bias` (one entry per state).
pub fn bias_decay(bias: &[f64], filter: &str) -> Result<String, String> {
    let cfg = ScenarioConfig {
        scenario: "lti".into(),
        filter: parse_filter(filter)?,
        truth_noise: false,
        sample_initial_state: false,
        initial_bias: Some(bias.to_vec()),
        write_trials: false,
        ..ScenarioConfig::default()
    };
    trial_json(&cfg)
}

fn js<T>(r: Result<T, String>) -> Result<T, JsValue> {
    r.map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = helicopterRun)]
pub fn helicopter_run_js(filter: &str, seed: u32, t_final: f64) -> Result<String, JsValue> {
    js(helicopter_run(filter, seed as u64, t_final))
}

#[wasm_bindgen(js_name = asvdTracking)]
pub fn asvd_tracking_js(
    rows: usize,
    cols: usize,
    rank: usize,
    seed: u32,
    t_final: f64,
) -> Result<String, JsValue> {
    js(asvd_tracking(rows, cols, rank, seed as u64, t_final))
}

#[wasm_bindgen(js_name = biasDecay)]
pub fn bias_decay_js(bias: Vec<f64>, filter: &str) -> Result<String, JsValue> {
    js(bias_decay(&bias, filter))
}
