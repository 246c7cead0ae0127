//! Randomized invariants of the linear algebra, factorization, decoupling,
//! estimator and controller building blocks.

use lise::analysis::{gramian_bounds, strong_observability};
use lise::asvd::{asvd_rates, full_rates, h1_dot, structured_svd};
use lise::control::rejection_gain;
use lise::elise::{assemble_pd, build_frame, compute_gains, QbarForm};
use lise::harness::asvdcheck::PolyMatrix;
use lise::harness::{build_named, ScenarioConfig};
use lise::lincore::{
    care_residual, eig, expm, integrate_ode, min_eigenvalue, norm2, pinv, rank, rk4_step,
    solve_care, svd, symmetrize, Mat, Vector, DEFAULT_RANK_TOL,
};
use lise::sysmodel::{decouple_at, gm_cov_rhs, GaussMarkovSpec, SystemAt};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random(r: &mut ChaCha8Rng, rows: usize, cols: usize) -> Mat {
    Mat::from_fn(rows, cols, |_, _| r.random_range(-1.0..1.0))
}

/// Random matrix of the given rank (as a product of two factors).
fn random_rank(r: &mut ChaCha8Rng, rows: usize, cols: usize, k: usize) -> Mat {
    random(r, rows, k) * random(r, cols, k).transpose()
}

fn spd(r: &mut ChaCha8Rng, n: usize, floor: f64) -> Mat {
    let m = random(r, n, n);
    &m * m.transpose() + Mat::identity(n, n) * floor
}

fn cfg() -> ProptestConfig {
    ProptestConfig {
        cases: 64,
        ..ProptestConfig::default()
    }
}

proptest! {
    #![proptest_config(cfg())]

    #[test]
    fn svd_reconstructs(rows in 1usize..=20, cols in 1usize..=20, k in 0usize..=20, seed in any::<u64>()) {
        let mut r = rng(seed);
        let k = k.min(rows.min(cols));
        let m = if k == rows.min(cols) { random(&mut r, rows, cols) } else { random_rank(&mut r, rows, cols, k) };
        let f = svd(&m).unwrap();
        let s = Mat::from_fn(f.u.ncols(), f.v.ncols(), |i, j| if i == j { f.s[i] } else { 0.0 });
        let back = &f.u * s * f.v.transpose();
        prop_assert!((back - &m).norm() <= 1e-12 * m.norm().max(1e-300));
        prop_assert!((f.u.transpose() * &f.u - Mat::identity(f.u.ncols(), f.u.ncols())).norm() < 1e-12);
        prop_assert!((f.v.transpose() * &f.v - Mat::identity(f.v.ncols(), f.v.ncols())).norm() < 1e-12);
        prop_assert!(f.s.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn pinv_satisfies_penrose_identities(rows in 1usize..=8, cols in 1usize..=8, k in 1usize..=8, seed in any::<u64>()) {
        let mut r = rng(seed);
        let k = k.min(rows.min(cols));
        let a = random_rank(&mut r, rows, cols, k);
        let x = pinv(&a, DEFAULT_RANK_TOL);
        let scale = norm2(&a) * norm2(&x);
        let tol = 1e-10 * scale * scale;
        prop_assert!((&a * &x * &a - &a).norm() <= tol * norm2(&a));
        prop_assert!((&x * &a * &x - &x).norm() <= tol * norm2(&x));
        let ax = &a * &x;
        let xa = &x * &a;
        prop_assert!((&ax - ax.transpose()).norm() <= tol);
        prop_assert!((&xa - xa.transpose()).norm() <= tol);
        prop_assert_eq!(rank(&a, DEFAULT_RANK_TOL), k);
    }

    #[test]
    fn care_solution_is_stabilizing(n in 1usize..=6, l in 1usize..=3, seed in any::<u64>()) {
        let mut r = rng(seed);
        let a = random(&mut r, n, n);
        let c = random(&mut r, l, n);
        let q = spd(&mut r, n, 0.1);
        let rr = spd(&mut r, l, 0.5);
        let p = solve_care(&a, &c, &q, &rr, &Mat::zeros(n, l)).unwrap();
        let res = care_residual(&a, &c, &q, &rr, &Mat::zeros(n, l), &p).unwrap();
        prop_assert!(res.norm() <= 1e-9 * p.norm(), "residual {} vs |P| {}", res.norm(), p.norm());
        prop_assert!((&p - p.transpose()).norm() <= 1e-12 * p.norm());
        prop_assert!(min_eigenvalue(&p) > 0.0);
        let gain = &p * c.transpose() * rr.clone().try_inverse().unwrap();
        prop_assert!(eig(&(&a - gain * &c)).is_hurwitz());
    }

    #[test]
    fn rk4_is_fourth_order(n in 1usize..=4, seed in any::<u64>()) {
        let mut r = rng(seed);
        let a = random(&mut r, n, n);
        let a = &a / norm2(&a);
        let y0 = Vector::from_fn(n, |_, _| r.random_range(-1.0..1.0)) + Vector::repeat(n, 2.0);
        let exact = expm(&a) * &y0;
        let err = |h: f64| {
            let path = integrate_ode(|_, y: &Vector| &a * y, &y0, 0.0, 1.0, h).unwrap();
            (&path.last().unwrap().1 - &exact).norm()
        };
        let order = (err(0.1) / err(0.05)).log2();
        prop_assert!(order >= 3.5, "order {order}");
    }

    #[test]
    fn asvd_rates_are_skew_and_reconstruct(seed in any::<u64>(), l in 2usize..=5, p in 1usize..=5, k in 1usize..=5, t in 0.0f64..1.0) {
        let mut r = rng(seed);
        let p = p.min(l);
        let k = k.min(p);
        let h = PolyMatrix::random(&mut r, l, p, k);
        let f = structured_svd(&h.at(t), DEFAULT_RANK_TOL).unwrap();
        prop_assume!(f.p_h == k && f.sigma[k - 1] > 1e-3);
        let gaps_ok = f.sigma.windows(2).all(|w| w[0] - w[1] > 1e-3);
        prop_assume!(gaps_ok);
        let hd = h.dot(t);
        let inner = asvd_rates(&f, &hd, f.default_gap_tol()).unwrap();
        prop_assert!((&inner.e + inner.e.transpose()).norm() < 1e-12 * (1.0 + inner.e.norm()));
        prop_assert!((&inner.f + inner.f.transpose()).norm() < 1e-12 * (1.0 + inner.f.norm()));
        let full = full_rates(&f, &hd, f.default_gap_tol()).unwrap();
        let lhs = h1_dot(&f, &full);
        let rhs = &hd * &f.v1 + h.at(t) * &full.v1_dot;
        prop_assert!((&lhs - &rhs).norm() <= 1e-8 * (1.0 + hd.norm()), "{}", (&lhs - &rhs).norm());
        for (j, sd) in full.sigma_dot.iter().enumerate() {
            let direct = f.u1.column(j).dot(&(&hd * f.v1.column(j)));
            prop_assert!((sd - direct).abs() <= 1e-10 * (1.0 + hd.norm()));
        }
    }

    #[test]
    fn decoupling_separates_channels(seed in any::<u64>(), n in 1usize..=4, l in 1usize..=5, p in 1usize..=4, k in 0usize..=4) {
        let mut r = rng(seed);
        let p = p.min(l);
        let k = k.min(p);
        let hmat = if k == 0 { Mat::zeros(l, p) } else { random_rank(&mut r, l, p, k) };
        let sys = SystemAt {
            t: 0.0,
            a: random(&mut r, n, n),
            b: random(&mut r, n, 1),
            g: random(&mut r, n, p),
            c: random(&mut r, l, n),
            d: random(&mut r, l, 1),
            h: hmat.clone(),
            w: Mat::identity(n, n),
        };
        let rr = spd(&mut r, l, 0.2);
        let f = structured_svd(&hmat, DEFAULT_RANK_TOL).unwrap();
        prop_assume!(f.p_h == k);
        let dec = decouple_at(sys, &rr, f).unwrap();
        let scale = 1.0 + rr.norm();
        prop_assert!((&dec.t1 * &rr * dec.t2.transpose()).norm() <= 1e-12 * scale * scale);
        prop_assert!((&dec.t2 * &hmat).norm() <= 1e-12 * (1.0 + hmat.norm()));
        if k > 0 {
            let sv1t = dec.svd.sigma_mat() * dec.svd.v1.transpose();
            prop_assert!((&dec.t1 * &hmat - sv1t).norm() <= 1e-10 * (1.0 + hmat.norm()));
            let m1s = dec.m1() * dec.svd.sigma_mat();
            prop_assert!((m1s - Mat::identity(k, k)).norm() <= 1e-12);
        }
        let t = dec.t();
        prop_assert_eq!(t.shape(), (l, l));
        let y = Vector::from_fn(l, |_, _| r.random_range(-1.0..1.0));
        let (z1, z2) = dec.split(&y);
        let z = Vector::from_iterator(l, z1.iter().chain(z2.iter()).copied());
        let back = t.clone().try_inverse().unwrap() * z;
        prop_assert!((back - &y).norm() <= 1e-9 * (1.0 + y.norm()));
        let v = lise::lincore::hstack(&[&dec.svd.v1, &dec.svd.v2]);
        prop_assert!((v.transpose() * &v - Mat::identity(p, p)).norm() < 1e-12);
    }

    #[test]
    fn input_covariance_trace_splits(seed in any::<u64>(), l in 2usize..=5, p in 1usize..=5, k in 1usize..=5) {
        let mut r = rng(seed);
        let p = p.min(l);
        let k = k.min(p);
        let f = structured_svd(&random_rank(&mut r, l, p, k), DEFAULT_RANK_TOL).unwrap();
        prop_assume!(f.p_h == k);
        let pd1 = spd(&mut r, k, 0.0);
        let pd2 = spd(&mut r, p - k, 0.0);
        let pd12 = random(&mut r, k, p - k);
        let pd = assemble_pd(&f, &pd1, &pd12, &pd2);
        prop_assert!((pd.trace() - pd1.trace() - pd2.trace()).abs() <= 1e-12 * (1.0 + pd.trace()));
    }

    #[test]
    fn rejection_gain_is_optimal(seed in any::<u64>(), n in 1usize..=5, m in 1usize..=4, p in 1usize..=4) {
        let mut r = rng(seed);
        let b = random(&mut r, n, m);
        let g = random(&mut r, n, p);
        let opt = rejection_gain(&b, &g);
        prop_assert!((norm2(&(&g - &b * &opt.j)) - opt.gamma).abs() <= 1e-12 * (1.0 + opt.gamma));
        prop_assert!(opt.lmi_min_eig >= -1e-12);
        for _ in 0..5 {
            let j = random(&mut r, m, p) * 3.0;
            prop_assert!(opt.gamma <= norm2(&(&g - &b * j)) + 1e-12);
        }
    }

    #[test]
    fn gauss_markov_covariances_stay_psd(seed in any::<u64>(), q in 1usize..=3, l in 1usize..=3) {
        let mut r = rng(seed);
        let a_w = spd(&mut r, q, 0.3);
        let a_v = Mat::from_diagonal(&Vector::from_fn(l, |_, _| r.random_range(0.1..2.0)));
        let a_vdot = Mat::from_diagonal(&Vector::from_fn(l, |_, _| r.random_range(0.5..3.0)));
        let spec = GaussMarkovSpec::stationary(a_w, random(&mut r, q, q), spd(&mut r, q, 0.0), a_v, a_vdot, random(&mut r, l, l), spd(&mut r, l, 0.1)).unwrap();
        let tol = |m: &Mat| -1e-10 * (1.0 + m.norm());
        prop_assert!(min_eigenvalue(&spec.p0_w) >= tol(&spec.p0_w));
        prop_assert!(min_eigenvalue(&spec.p0_v) >= tol(&spec.p0_v));
        let (mut pw, mut pv) = (Mat::zeros(q, q), Mat::zeros(2 * l, 2 * l));
        let pv0 = Mat::zeros(2 * l, 2 * l);
        let pw0 = Mat::zeros(q, q);
        let h = 1e-2;
        for k in 0..200 {
            let t = k as f64 * h;
            pw = symmetrize(&rk4_step(&mut |_, p: &Mat| Ok(gm_cov_rhs(&spec, p, &pv0).0), t, &pw, h).unwrap());
            pv = symmetrize(&rk4_step(&mut |_, p: &Mat| Ok(gm_cov_rhs(&spec, &pw0, p).1), t, &pv, h).unwrap());
            prop_assert!(min_eigenvalue(&pw) >= tol(&pw));
            prop_assert!(min_eigenvalue(&pv) >= tol(&pv));
        }
    }

    #[test]
    fn gramian_bounds_are_ordered(seed in any::<u64>(), n in 1usize..=4, m in 1usize..=3) {
        let mut r = rng(seed);
        let a0 = random(&mut r, n, n);
        let a1 = random(&mut r, n, n);
        let b = random(&mut r, n, m);
        let x = move |t: f64| &a0 + &a1 * t.sin();
        let y = move |_t: f64| b.clone();
        let rep = gramian_bounds(&x, &y, 0.5, &[1.0, 1.5, 2.0]).unwrap();
        prop_assert!(rep.mu1 >= 0.0);
        prop_assert!(rep.mu1 <= rep.mu2);
    }

    #[test]
    fn strong_observability_implies_full_rank_c2g2(seed in any::<u64>(), n in 1usize..=4, l in 1usize..=4, p in 1usize..=4, k in 0usize..=4) {
        let mut r = rng(seed);
        let p = p.min(l);
        let k = k.min(p);
        let a = random(&mut r, n, n);
        let g = random(&mut r, n, p);
        let c = random(&mut r, l, n);
        let h = if k == 0 { Mat::zeros(l, p) } else { random_rank(&mut r, l, p, k) };
        let so = strong_observability(&a, &g, &c, &h, 4, seed).unwrap();
        prop_assert_eq!(so.strongly_observable, so.reduced_form);
        if so.strongly_observable {
            let f = structured_svd(&h, DEFAULT_RANK_TOL).unwrap();
            let c2g2 = f.u2.transpose() * &c * &g * &f.v2;
            prop_assert_eq!(rank(&c2g2, 1e-8), p - f.p_h);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 16, ..ProptestConfig::default() })]

    #[test]
    fn estimator_gains_invert_input_maps(t in 0.0f64..20.0, seed in any::<u64>()) {
        let sc = build_named("helicopter").unwrap();
        let frame = build_frame(&sc.sched, &sc.aux, &sc.white, t, DEFAULT_RANK_TOL, None).unwrap();
        let n = sc.sched.dims.n;
        let px = spd(&mut rng(seed), n, 1e-3) * 0.01;
        let g = compute_gains(&frame.dec, &frame.aux, &frame.proj, &px, QbarForm::WithAuxNoise).unwrap();
        let k = frame.dec.p_h();
        prop_assert!((&g.m1 * frame.dec.svd.sigma_mat() - Mat::identity(k, k)).norm() < 1e-12);
        let p2 = frame.dec.p2();
        let m2cg = &g.m2 * &frame.aux.cbar2 * &frame.dec.g2;
        prop_assert!((m2cg - Mat::identity(p2, p2)).norm() < 1e-9);
        prop_assert!((&g.rtilde2 - g.rtilde2.transpose()).norm() <= 1e-14 * g.rtilde2.norm());
        prop_assert!(min_eigenvalue(&g.rtilde2) > 0.0);
        prop_assert!(min_eigenvalue(&g.pd2) > 0.0);
    }

    #[test]
    fn config_round_trips_through_json(trials in 1usize..1000, seed in any::<u64>(), dt in 1e-4f64..1e-1, ratio in 1.0f64..50.0, truth_noise in any::<bool>(), alise in any::<bool>()) {
        let mut c = ScenarioConfig { trials, seed, dt: Some(dt), fd_dt: Some(dt * ratio), truth_noise, ..ScenarioConfig::default() };
        if alise {
            c.filter = lise::harness::FilterKind::Alise;
        }
        prop_assert!(c.validate().is_ok());
        let text = serde_json::to_string(&c).unwrap();
        prop_assert_eq!(ScenarioConfig::from_json(&text).unwrap(), c);
    }
}
