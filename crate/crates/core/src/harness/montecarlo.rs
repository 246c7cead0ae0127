//! Monte Carlo driver: closed-loop trials, aggregation and CSV output.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::baseline::KalmanBucy;
use super::config::{AliseForm, FilterKind, ScenarioConfig};
use super::scenarios::{build_scenario, ControlLaw, Scenario};
use crate::alise::{AliseFilter, AliseSignals, StateForm};
use crate::analysis::{consistency_metrics, ConsistencyReport, EstimateSeries};
use crate::elise::{EliseFilter, EliseSignals, InputEstimate};
use crate::error::{LiseError, Result};
use crate::lincore::{psd_sqrt, Mat, Vector};
use crate::sysmodel::noise::gaussian;
use crate::sysmodel::{NoiseModel, PlantSimulator};

/// Target number of recorded samples per trial when `record_every` is
/// not set.
pub const DEFAULT_RECORDED_SAMPLES: usize = 2000;

/// Recorded time series of one trial, in physical coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub trial: usize,
    pub seed: u64,
    pub t: Vec<f64>,
    pub x: Vec<Vector>,
    pub xhat: Vec<Vector>,
    pub d: Vec<Vector>,
    pub dhat: Vec<Vector>,
    pub px: Vec<Mat>,
    pub pd: Vec<Mat>,
    /// False where the input estimate was not yet available.
    pub d_available: Vec<bool>,
}

impl TrialResult {
    pub fn tr_px(&self) -> Vec<f64> {
        self.px.iter().map(|p| p.trace()).collect()
    }

    pub fn tr_pd(&self) -> Vec<f64> {
        self.pd.iter().map(|p| p.trace()).collect()
    }
}

/// Seed of trial `trial`.
pub fn trial_seed(base: u64, trial: usize) -> u64 {
    base ^ trial as u64
}

enum Runner {
    Elise(EliseFilter),
    Alise(AliseFilter),
    Baseline(KalmanBucy),
}

struct StepRecord {
    xhat: Vector,
    px: Mat,
    est: Option<InputEstimate>,
}

/// Run trial `trial` of `cfg` on `sc`, keeping every `record_every`-th
/// sample.
pub fn run_trial(
    sc: &Scenario,
    cfg: &ScenarioConfig,
    trial: usize,
    record_every: usize,
) -> Result<TrialResult> {
    let (filter, form) = (cfg.filter, cfg.alise_form);
    let seed = trial_seed(cfg.seed, trial);
    let n = sc.sched.dims.n;
    let p = sc.sched.dims.p;
    let h = sc.dt;
    let steps = ((sc.t1 - sc.t0) / h).round() as usize;
    let every = record_every.max(1);

    let x0 = if cfg.sample_initial_state {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        &sc.xhat0 + gaussian(&psd_sqrt(&sc.p0), &mut rng)
    } else {
        sc.x0.clone()
    };
    let noise = match filter {
        _ if !cfg.truth_noise => NoiseModel::None,
        FilterKind::Alise => NoiseModel::GaussMarkov(sc.gm.clone()),
        _ => NoiseModel::White(sc.white.clone()),
    };
    let mut sim = PlantSimulator::new(
        Arc::clone(&sc.plant),
        noise,
        sc.aux_synthesis.clone(),
        sc.d.clone(),
        x0,
        sc.t0,
        h,
        seed,
    )?;

    let dx0 = &sc.xhat0 - sc.x_ref(sc.t0);
    let mut runner = match filter {
        FilterKind::Elise => Runner::Elise(EliseFilter::new(
            sc.sched.clone(),
            sc.aux.clone(),
            sc.white.clone(),
            dx0,
            sc.p0.clone(),
            sc.t0,
        )?),
        FilterKind::Alise => {
            let sf = match form {
                AliseForm::Theta => StateForm::Theta,
                AliseForm::DerivativeFed => StateForm::DerivativeFed,
            };
            Runner::Alise(AliseFilter::new(
                sc.sched.clone(),
                sc.gm.clone(),
                dx0,
                sc.p0.clone(),
                sc.t0,
                sc.fd_dt,
                sf,
            )?)
        }
        FilterKind::KalmanBaseline => Runner::Baseline(KalmanBucy::new(
            sc.sched.clone(),
            sc.white.clone(),
            dx0,
            sc.p0.clone(),
            sc.t0,
        )?),
    };
    let law: Option<Arc<dyn ControlLaw>> = sc.controller_for(filter);

    let cap = steps / every + 1;
    let mut out = TrialResult {
        trial,
        seed,
        t: Vec::with_capacity(cap),
        x: Vec::with_capacity(cap),
        xhat: Vec::with_capacity(cap),
        d: Vec::with_capacity(cap),
        dhat: Vec::with_capacity(cap),
        px: Vec::with_capacity(cap),
        pd: Vec::with_capacity(cap),
        d_available: Vec::with_capacity(cap),
    };
    let m = sc.sched.dims.m;
    let udot = Vector::zeros(m);
    let mut prev_est: Option<InputEstimate> = None;
    let mut prev_y = Vector::zeros(sc.sched.dims.l);
    let mut prev_u = Vector::zeros(m);

    for k in 0..steps {
        let t = sc.t0 + k as f64 * h;
        let xref = sc.x_ref(t);
        let u_ref = sc.u_ref(t);
        let u = match &law {
            Some(law) => {
                // The estimate available at t: ALISE's depends on the
                // output, of which only the previous interval is known.
                let xhat_dev = match &mut runner {
                    Runner::Elise(f) => f.state().xhat.clone(),
                    Runner::Alise(f) => f.xhat(&prev_y, &prev_u)?,
                    Runner::Baseline(f) => f.state().xhat.clone(),
                };
                law.control(t, &(xhat_dev + &xref), prev_est.as_ref())
            }
            None => u_ref.clone(),
        };
        let u_dev = &u - &u_ref;
        let x_true = sim.state().clone();
        let d_true = sim.d_now();
        let ydot = match (&runner, form) {
            (Runner::Alise(_), AliseForm::DerivativeFed) => {
                Some(sim.exact_output_rate(&u, &udot) - sc.ydot_ref(t))
            }
            _ => None,
        };
        let meas = sim.step(&u, &udot)?;
        let y_dev = &meas.y - sc.y_ref_avg(t, h);

        let rec = match &mut runner {
            Runner::Elise(f) => {
                let ybar = &meas.ybar - sc.ybar_ref(t + 0.5 * h);
                let o = f.step(
                    &EliseSignals {
                        y: y_dev.clone(),
                        ybar,
                        u: u_dev.clone(),
                        udot: udot.clone(),
                    },
                    h,
                )?;
                StepRecord {
                    xhat: o.xhat,
                    px: o.px,
                    est: Some(o.input),
                }
            }
            Runner::Alise(f) => {
                let o = f.step(
                    &AliseSignals {
                        y: y_dev.clone(),
                        u: u_dev.clone(),
                        udot: udot.clone(),
                        ydot,
                    },
                    h,
                )?;
                StepRecord {
                    xhat: o.xhat,
                    px: o.px,
                    est: Some(o.input),
                }
            }
            Runner::Baseline(f) => {
                let before = f.step(&y_dev, &u_dev, h)?;
                StepRecord {
                    xhat: before.xhat,
                    px: before.px,
                    est: None,
                }
            }
        };
        if k % every == 0 {
            out.t.push(t);
            out.x.push(x_true);
            out.xhat.push(&rec.xhat + &xref);
            out.d.push(d_true);
            match &rec.est {
                Some(e) => {
                    out.dhat.push(e.dhat.clone());
                    out.pd.push(e.pd.clone());
                    out.d_available.push(e.d2_available);
                }
                None => {
                    out.dhat.push(Vector::zeros(p));
                    out.pd.push(Mat::zeros(p, p));
                    out.d_available.push(false);
                }
            }
            out.px.push(rec.px);
        }
        if !rec.xhat.iter().all(|v| v.is_finite()) {
            return Err(LiseError::DivergedIntegration { t });
        }
        debug_assert_eq!(rec.xhat.len(), n);
        prev_est = rec.est;
        prev_y = y_dev;
        prev_u = u_dev;
    }
    Ok(out)
}

/// Ensemble statistics at every recorded time.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub t: Vec<f64>,
    pub mean_x: Vec<Vector>,
    pub mean_xhat: Vec<Vector>,
    pub mean_d: Vec<Vector>,
    pub mean_dhat: Vec<Vector>,
    pub mean_tr_px: Vec<f64>,
    pub mean_tr_pd: Vec<f64>,
    pub rmse_x: Vec<Vector>,
    pub rmse_x_est: Vec<Vector>,
    pub rmse_d: Vec<Vector>,
    pub rmse_d_est: Vec<Vector>,
}

/// Aggregate a non-empty set of aligned trials.
pub fn aggregate(trials: &[TrialResult]) -> Result<Aggregate> {
    let first = trials
        .first()
        .ok_or_else(|| LiseError::InvalidInput("no trials to aggregate".into()))?;
    let len = first.t.len();
    if trials.iter().any(|r| r.t.len() != len) {
        return Err(LiseError::InvalidInput(
            "trial grids are not aligned".into(),
        ));
    }
    let nt = trials.len() as f64;
    let mean_of = |f: &dyn Fn(&TrialResult, usize) -> Vector, k: usize| -> Vector {
        let mut acc = f(first, k) * 0.0;
        for r in trials {
            acc += f(r, k);
        }
        acc / nt
    };
    let mut agg = Aggregate {
        t: first.t.clone(),
        mean_x: vec![],
        mean_xhat: vec![],
        mean_d: vec![],
        mean_dhat: vec![],
        mean_tr_px: vec![],
        mean_tr_pd: vec![],
        rmse_x: vec![],
        rmse_x_est: vec![],
        rmse_d: vec![],
        rmse_d_est: vec![],
    };
    for k in 0..len {
        agg.mean_x.push(mean_of(&|r, k| r.x[k].clone(), k));
        agg.mean_xhat.push(mean_of(&|r, k| r.xhat[k].clone(), k));
        agg.mean_d.push(mean_of(&|r, k| r.d[k].clone(), k));
        agg.mean_dhat.push(mean_of(&|r, k| r.dhat[k].clone(), k));
        agg.mean_tr_px
            .push(trials.iter().map(|r| r.px[k].trace()).sum::<f64>() / nt);
        agg.mean_tr_pd
            .push(trials.iter().map(|r| r.pd[k].trace()).sum::<f64>() / nt);
        agg.rmse_x
            .push(mean_of(&|r, k| (&r.x[k] - &r.xhat[k]).map(|e| e * e), k).map(f64::sqrt));
        agg.rmse_x_est
            .push(mean_of(&|r, k| r.px[k].diagonal(), k).map(|v| v.max(0.0).sqrt()));
        agg.rmse_d
            .push(mean_of(&|r, k| (&r.d[k] - &r.dhat[k]).map(|e| e * e), k).map(f64::sqrt));
        agg.rmse_d_est
            .push(mean_of(&|r, k| r.pd[k].diagonal(), k).map(|v| v.max(0.0).sqrt()));
    }
    Ok(agg)
}

/// Time after which `v` stays within its final-half envelope widened by
/// `rel_tol` of the envelope's magnitude. Measured from `t[0]`.
pub fn settling_time(t: &[f64], v: &[f64], rel_tol: f64) -> Option<f64> {
    if t.len() != v.len() || t.len() < 2 || v.iter().any(|x| !x.is_finite()) {
        return None;
    }
    let tail = &v[v.len() / 2..];
    let lo = tail.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = tail.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tol = rel_tol * lo.abs().max(hi.abs()).max(f64::MIN_POSITIVE);
    let last_out = v.iter().rposition(|x| *x < lo - tol || *x > hi + tol);
    Some(match last_out {
        Some(k) => t[(k + 1).min(t.len() - 1)] - t[0],
        None => 0.0,
    })
}

/// Relative widening used for the covariance-trace settling times.
pub const SETTLING_TOL: f64 = 0.1;

/// Summary of a Monte Carlo run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RmseReport {
    pub scenario: String,
    pub filter: FilterKind,
    pub trials: usize,
    pub seed: u64,
    pub dt: f64,
    pub fd_dt: f64,
    pub t0: f64,
    pub t1: f64,
    pub transient: f64,
    /// Time-averaged RMSE per state after the transient, measured and
    /// predicted by `Pˣ`.
    pub state_rmse_meas: Vec<f64>,
    pub state_rmse_est: Vec<f64>,
    /// Same for the unknown inputs, over samples where every trial had an
    /// input estimate.
    pub input_rmse_meas: Vec<f64>,
    pub input_rmse_est: Vec<f64>,
    /// Time-averaged ensemble-mean error after the transient.
    pub state_mean_error: Vec<f64>,
    pub input_mean_error: Vec<f64>,
    pub mean_nees: f64,
    pub nees_band: (f64, f64),
    pub nees_fraction_in_band: f64,
    pub px_trace_settling_time: Option<f64>,
    pub pd_trace_settling_time: Option<f64>,
}

/// Trials, aggregate and report of one run.
#[derive(Debug, Clone)]
pub struct MonteCarloRun {
    pub trials: Vec<TrialResult>,
    pub aggregate: Aggregate,
    pub consistency: ConsistencyReport,
    pub report: RmseReport,
}

/// Build the configured scenario and run it.
pub fn run_monte_carlo(cfg: &ScenarioConfig) -> Result<MonteCarloRun> {
    let sc = build_scenario(cfg)?;
    run_scenario(&sc, cfg)
}

fn record_every(sc: &Scenario, cfg: &ScenarioConfig) -> usize {
    cfg.record_every.unwrap_or_else(|| {
        let steps = ((sc.t1 - sc.t0) / sc.dt).round() as usize;
        steps.div_ceil(DEFAULT_RECORDED_SAMPLES).max(1)
    })
}

/// Run every trial of `cfg` on an already built scenario.
pub fn run_scenario(sc: &Scenario, cfg: &ScenarioConfig) -> Result<MonteCarloRun> {
    cfg.validate()?;
    let every = record_every(sc, cfg);
    let one = |i: usize| run_trial(sc, cfg, i, every);
    #[cfg(feature = "parallel")]
    let trials: Result<Vec<TrialResult>> = {
        use rayon::prelude::*;
        (0..cfg.trials).into_par_iter().map(one).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let trials: Result<Vec<TrialResult>> = (0..cfg.trials).map(one).collect();
    let trials = trials?;
    summarize(sc, cfg, trials)
}

fn summarize(
    sc: &Scenario,
    cfg: &ScenarioConfig,
    trials: Vec<TrialResult>,
) -> Result<MonteCarloRun> {
    let agg = aggregate(&trials)?;
    let transient = cfg.transient.unwrap_or(0.1 * (sc.t1 - sc.t0));
    let start = agg
        .t
        .iter()
        .position(|t| *t >= sc.t0 + transient)
        .unwrap_or(agg.t.len());
    let series: Vec<EstimateSeries> = trials
        .iter()
        .map(|r| EstimateSeries {
            truth: r.x.clone(),
            estimate: r.xhat.clone(),
            cov: r.px.clone(),
        })
        .collect();
    let consistency = consistency_metrics(&series, start)?;

    let n = sc.sched.dims.n;
    let p = sc.sched.dims.p;
    let nt = trials.len() as f64;
    let d_ok: Vec<usize> = (start..agg.t.len())
        .filter(|&k| trials.iter().all(|r| r.d_available[k]))
        .collect();
    let x_idx: Vec<usize> = (start..agg.t.len()).collect();
    let time_rms = |rows: &[Vector], idx: &[usize], dim: usize| -> Vec<f64> {
        (0..dim)
            .map(|i| {
                if idx.is_empty() {
                    return f64::NAN;
                }
                (idx.iter().map(|&k| rows[k][i] * rows[k][i]).sum::<f64>() / idx.len() as f64)
                    .sqrt()
            })
            .collect()
    };
    let mean_err =
        |f: &dyn Fn(&TrialResult, usize) -> Vector, idx: &[usize], dim: usize| -> Vec<f64> {
            let mut acc = vec![0.0; dim];
            for &k in idx {
                for r in &trials {
                    let e = f(r, k);
                    for i in 0..dim {
                        acc[i] += e[i] / nt;
                    }
                }
            }
            acc.iter()
                .map(|a| {
                    if idx.is_empty() {
                        f64::NAN
                    } else {
                        a / idx.len() as f64
                    }
                })
                .collect()
        };
    let tr_pd_ok: Vec<f64> = (0..agg.t.len()).map(|k| agg.mean_tr_pd[k]).collect();
    let pd_settle = if p > 0 && cfg.filter != FilterKind::KalmanBaseline {
        let first_ok = (0..agg.t.len())
            .find(|&k| trials.iter().all(|r| r.d_available[k]) || sc.sched.dims.p == 0);
        let k0 = first_ok.unwrap_or(0);
        settling_time(&agg.t[k0..], &tr_pd_ok[k0..], SETTLING_TOL).map(|s| s + agg.t[k0] - sc.t0)
    } else {
        None
    };
    let tail_nees = &consistency.mean_nees[start.min(consistency.mean_nees.len())..];
    let report = RmseReport {
        scenario: sc.name.clone(),
        filter: cfg.filter,
        trials: trials.len(),
        seed: cfg.seed,
        dt: sc.dt,
        fd_dt: sc.fd_dt,
        t0: sc.t0,
        t1: sc.t1,
        transient,
        state_rmse_meas: time_rms(&agg.rmse_x, &x_idx, n),
        state_rmse_est: time_rms(&agg.rmse_x_est, &x_idx, n),
        input_rmse_meas: time_rms(&agg.rmse_d, &d_ok, p),
        input_rmse_est: time_rms(&agg.rmse_d_est, &d_ok, p),
        state_mean_error: mean_err(&|r, k| &r.x[k] - &r.xhat[k], &x_idx, n),
        input_mean_error: mean_err(&|r, k| &r.d[k] - &r.dhat[k], &d_ok, p),
        mean_nees: if tail_nees.is_empty() {
            f64::NAN
        } else {
            tail_nees.iter().sum::<f64>() / tail_nees.len() as f64
        },
        nees_band: consistency.band,
        nees_fraction_in_band: consistency.fraction_in_band,
        px_trace_settling_time: settling_time(&agg.t, &agg.mean_tr_px, SETTLING_TOL),
        pd_trace_settling_time: pd_settle,
    };
    Ok(MonteCarloRun {
        trials,
        aggregate: agg,
        consistency,
        report,
    })
}

fn csv_err(e: csv::Error) -> LiseError {
    LiseError::Io(e.to_string())
}

fn header(prefix: &str, dim: usize) -> impl Iterator<Item = String> + '_ {
    (1..=dim).map(move |i| format!("{prefix}_{i}"))
}

fn push_vec(rec: &mut Vec<String>, v: &Vector) {
    rec.extend(v.iter().map(|x| x.to_string()));
}

/// Write one trial as CSV.
pub fn write_trial_csv(path: &Path, r: &TrialResult) -> Result<()> {
    let n = r.x.first().map_or(0, |v| v.len());
    let p = r.d.first().map_or(0, |v| v.len());
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let mut head = vec!["t".to_string()];
    head.extend(header("x_true", n));
    head.extend(header("x_hat", n));
    head.extend(header("d_true", p));
    head.extend(header("d_hat", p));
    head.extend(["tr_Px".to_string(), "tr_Pd".to_string()]);
    w.write_record(&head).map_err(csv_err)?;
    for k in 0..r.t.len() {
        let mut rec = vec![r.t[k].to_string()];
        push_vec(&mut rec, &r.x[k]);
        push_vec(&mut rec, &r.xhat[k]);
        push_vec(&mut rec, &r.d[k]);
        push_vec(&mut rec, &r.dhat[k]);
        rec.push(r.px[k].trace().to_string());
        rec.push(r.pd[k].trace().to_string());
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Write the ensemble means (same columns as a trial) followed by the
/// measured and covariance-predicted RMSE columns.
pub fn write_aggregate_csv(path: &Path, a: &Aggregate) -> Result<()> {
    let n = a.mean_x.first().map_or(0, |v| v.len());
    let p = a.mean_d.first().map_or(0, |v| v.len());
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let mut head = vec!["t".to_string()];
    head.extend(header("x_true", n));
    head.extend(header("x_hat", n));
    head.extend(header("d_true", p));
    head.extend(header("d_hat", p));
    head.extend(["tr_Px".to_string(), "tr_Pd".to_string()]);
    head.extend(header("rmse_x", n));
    head.extend(header("rmse_x_est", n));
    head.extend(header("rmse_d", p));
    head.extend(header("rmse_d_est", p));
    w.write_record(&head).map_err(csv_err)?;
    for k in 0..a.t.len() {
        let mut rec = vec![a.t[k].to_string()];
        push_vec(&mut rec, &a.mean_x[k]);
        push_vec(&mut rec, &a.mean_xhat[k]);
        push_vec(&mut rec, &a.mean_d[k]);
        push_vec(&mut rec, &a.mean_dhat[k]);
        rec.push(a.mean_tr_px[k].to_string());
        rec.push(a.mean_tr_pd[k].to_string());
        push_vec(&mut rec, &a.rmse_x[k]);
        push_vec(&mut rec, &a.rmse_x_est[k]);
        push_vec(&mut rec, &a.rmse_d[k]);
        push_vec(&mut rec, &a.rmse_d_est[k]);
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Write the per-trial CSVs (when requested), the aggregate CSV and the
/// JSON report into `dir`. Returns the written paths.
pub fn write_artifacts(
    run: &MonteCarloRun,
    dir: &Path,
    write_trials: bool,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let stem = format!("{}_{}", run.report.scenario, run.report.filter.name());
    let mut paths = Vec::new();
    if write_trials {
        for r in &run.trials {
            let path = dir.join(format!("{stem}_trial{:04}.csv", r.trial));
            write_trial_csv(&path, r)?;
            paths.push(path);
        }
    }
    let agg = dir.join(format!("{stem}_aggregate.csv"));
    write_aggregate_csv(&agg, &run.aggregate)?;
    paths.push(agg);
    let rep = dir.join(format!("{stem}_report.json"));
    let text =
        serde_json::to_string_pretty(&run.report).map_err(|e| LiseError::Io(e.to_string()))?;
    std::fs::write(&rep, text + "\n")?;
    paths.push(rep);
    Ok(paths)
}
