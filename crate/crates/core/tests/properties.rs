//! Randomized invariants of the numerics, the theory engine and the
//! simulation harness.

use mixglm::estimators::{generate_dataset, spectral_matrix, top_eigenpairs};
use mixglm::experiments::{sweep, to_csv, EstimatorKind, SweepConfig, CSV_HEADER};
use mixglm::gamp::{state_evolution, Choice};
use mixglm::numerics::{find_root_monotone, gauss_hermite_expect, integrate_y};
use mixglm::preprocess::{by_name, optimal_linear, optimal_spectral};
use mixglm::theory::{beta_star, rho_spec, spectral_threshold, SpectralLaw, TheoryReport};
use mixglm::{LinkModel, QuadratureSpec};
use proptest::prelude::*;

fn q() -> QuadratureSpec {
    QuadratureSpec::default()
}

fn model(pr: bool, sigma: f64) -> LinkModel {
    if pr {
        LinkModel::mixed_phase_retrieval(sigma).unwrap()
    } else {
        LinkModel::mixed_linear_regression(sigma).unwrap()
    }
}

fn preproc_key() -> impl Strategy<Value = &'static str> {
    prop_oneof![Just("opt1"), Just("opt2"), Just("ycs"), Just("lal")]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn hermite_reproduces_even_moments(order in 40usize..160) {
        let spec = QuadratureSpec { hermite_order: order, ..q() };
        let mut double_fact = 1.0;
        for k in 1..=4 {
            double_fact *= (2 * k - 1) as f64;
            let m = gauss_hermite_expect(|g| g.powi(2 * k), &spec).unwrap();
            prop_assert!((m - double_fact).abs() <= 1e-8 * double_fact, "k={} got {}", k, m);
        }
    }

    #[test]
    fn root_finder_residual_is_small(c in -5.0f64..5.0, a in 0.1f64..3.0) {
        let tol = 1e-10;
        let f = |x: f64| Ok::<f64, mixglm::Error>(a * x + x.powi(3) - c);
        let x = find_root_monotone(f, -10.0, 10.0, tol).unwrap();
        prop_assert!((a * x + x.powi(3) - c).abs() <= 10.0 * tol * (a + 300.0));
    }

    #[test]
    fn moment_integrals_are_one(pr in any::<bool>(), sigma in 0.2f64..2.0) {
        let m = model(pr, sigma);
        let s = m.support(&q());
        let i0 = integrate_y(|y| m.moments(y)[0], &s, &q()).unwrap();
        let i2 = integrate_y(|y| m.moments(y)[2], &s, &q()).unwrap();
        prop_assert!((i0 - 1.0).abs() < 1e-8);
        prop_assert!((i2 - 1.0).abs() < 1e-8);
    }

    #[test]
    fn noiseless_ratio_is_y_squared(pr in any::<bool>(), y in 0.0f64..8.0) {
        let m = model(pr, 0.0);
        let d = m.ratio_delta(y).unwrap();
        prop_assert!((d - y * y).abs() <= 1e-10 * (1.0 + y * y));
    }

    #[test]
    fn noiseless_optimal_maps_coincide(alpha in 0.55f64..0.95, signal in 1usize..=2, y in 0.0f64..10.0) {
        let a = optimal_spectral(&model(false, 0.0), alpha, signal, &q()).unwrap();
        let b = optimal_spectral(&model(true, 0.0), alpha, signal, &q()).unwrap();
        prop_assert!((a.eval(y) - b.eval(y)).abs() < 1e-12);
    }

    #[test]
    fn threshold_decreases_in_alpha(pr in any::<bool>(), sigma in 0.0f64..1.5, a in 0.55f64..0.9) {
        let m = model(pr, sigma);
        let lo = spectral_threshold(a, 1, &m, &q()).unwrap();
        let hi = spectral_threshold(a + 0.05, 1, &m, &q()).unwrap();
        prop_assert!(hi < lo);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn report_invariants(
        pr in any::<bool>(),
        sigma in 0.0f64..1.5,
        alpha in 0.55f64..0.9,
        delta in 0.5f64..25.0,
        key in preproc_key(),
    ) {
        let m = model(pr, sigma);
        let t = by_name(key, &m, alpha, &q()).unwrap();
        let l = if pr { by_name("identity", &m, alpha, &q()).unwrap() } else { optimal_linear(&m, &q()).unwrap() };
        let r = TheoryReport::compute(&m, alpha, delta, &l, &t, &q()).unwrap();
        let tol = 1e-9 * r.eig1.abs().max(1.0);
        prop_assert!(r.eig1 >= r.eig2 - tol && r.eig2 >= r.eig3 - tol);
        prop_assert_eq!(r.eig1 > r.eig3 + tol, r.supercritical_1);
        for v in [r.rho_spec_1, r.rho_spec_2, r.combo_overlap_1, r.combo_overlap_2] {
            prop_assert!((0.0..=1.0 + 1e-12).contains(&v));
        }
        prop_assert!(r.combo_overlap_1 >= r.rho_lin_1.abs().max(r.rho_spec_1) - 1e-12);
        prop_assert!(r.combo_overlap_2 >= r.rho_lin_2.abs().max(r.rho_spec_2) - 1e-12);
        if pr {
            prop_assert!(r.linear_ineffective && r.rho_lin_1 == 0.0 && r.rho_lin_2 == 0.0);
        } else {
            prop_assert!((r.rho_lin_1 / r.rho_lin_2 - alpha / (1.0 - alpha)).abs() < 1e-12);
        }
    }

    #[test]
    fn predictions_are_scale_invariant(
        sigma in 0.0f64..1.0,
        alpha in 0.55f64..0.9,
        delta in 1.0f64..20.0,
        c in 0.1f64..10.0,
        key in preproc_key(),
    ) {
        let m = model(false, sigma);
        let t = by_name(key, &m, alpha, &q()).unwrap();
        let tc = t.scaled(c).unwrap();
        let a = SpectralLaw::new(&t, &m, &q()).unwrap().predict(alpha, delta).unwrap();
        let b = SpectralLaw::new(&tc, &m, &q()).unwrap().predict(alpha, delta).unwrap();
        for i in 0..2 {
            prop_assert!((a.rho_spec[i] - b.rho_spec[i]).abs() < 1e-8);
            prop_assert!((c * a.lambda_star[i] - b.lambda_star[i]).abs() < 1e-8 * b.lambda_star[i].abs().max(1.0));
        }
        for i in 0..3 {
            prop_assert!((c * a.eig[i] - b.eig[i]).abs() < 1e-8 * b.eig[i].abs().max(1.0));
        }
    }

    #[test]
    fn optimal_overlap_matches_fixed_point(
        pr in any::<bool>(),
        sigma in 0.0f64..1.0,
        alpha in 0.55f64..0.9,
        signal in 1usize..=2,
        excess in 1.2f64..6.0,
    ) {
        let m = model(pr, sigma);
        let a_i = if signal == 1 { alpha } else { 1.0 - alpha };
        let delta = excess * spectral_threshold(alpha, signal, &m, &q()).unwrap();
        let t = optimal_spectral(&m, alpha, signal, &q()).unwrap();
        let rs = rho_spec(alpha, delta, &t, &m, signal, &q()).unwrap();
        let b = beta_star(alpha, delta, signal, &m, &q()).unwrap();
        prop_assert!((rs - 1.0 / (b + a_i).sqrt()).abs() < 1e-6, "{} vs {}", rs, 1.0 / (b + a_i).sqrt());
    }

    #[test]
    fn state_evolution_keeps_other_signal_at_zero(alpha in 0.55f64..0.8, excess in 1.5f64..4.0, two in any::<bool>()) {
        let m = model(false, 0.0);
        let (choice, signal) = if two { (Choice::Two, 2) } else { (Choice::One, 1) };
        let delta = excess * spectral_threshold(alpha, signal, &m, &q()).unwrap();
        let l = optimal_linear(&m, &q()).unwrap();
        let t = optimal_spectral(&m, alpha, signal, &q()).unwrap();
        let tr = match state_evolution(choice, alpha, delta, &l, &t, &m, 30, &q()) {
            Ok(tr) => tr,
            Err(mixglm::Error::Subcritical(_)) => return Ok(()),
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        };
        let (other_chi, other_mu) = if two { (&tr.chi1, &tr.mu1) } else { (&tr.chi2, &tr.mu2) };
        prop_assert!(other_chi[1..].iter().all(|v| *v == 0.0));
        prop_assert!(other_mu[1..].iter().all(|v| *v == 0.0));
        for k in 0..tr.len() {
            let rhs = tr.chi1[k].powi(2) + tr.chi2[k].powi(2) + tr.sigma_v2[k];
            prop_assert!((tr.beta[k].powi(2) - rhs).abs() <= 1e-12 * rhs);
        }
    }

    #[test]
    fn spectral_matrix_eigenpairs(seed in 0u64..1000, delta in 1.0f64..5.0, key in preproc_key()) {
        let m = model(false, 0.3);
        let ds = generate_dataset(60, delta, 0.6, &m, seed).unwrap();
        let t = by_name(key, &m, 0.6, &q()).unwrap();
        let dm = spectral_matrix(&ds, &t);
        prop_assert_eq!(&dm, &dm.transpose());
        let norm = dm.norm();
        let e = top_eigenpairs(dm.clone()).unwrap();
        prop_assert!((&dm * &e.v1 - &e.v1 * e.lam1).norm() <= 1e-8 * norm);
        prop_assert!((&dm * &e.v2 - &e.v2 * e.lam2).norm() <= 1e-8 * norm);
        prop_assert!(e.v1.dot(&e.v2).abs() < 1e-10);
        prop_assert!(e.lam1 >= e.lam2 && e.lam2 >= e.lam3);
    }
}

#[test]
fn sweep_csv_is_bit_identical_across_runs() {
    let cfg = SweepConfig {
        model: "pr".into(),
        sigma: 0.5,
        alpha: 0.7,
        d: 80,
        delta_grid: vec![2.0, 6.0],
        trials: 3,
        estimators: EstimatorKind::ALL.to_vec(),
        seed_base: 42,
        output_path: None,
    };
    let a = to_csv(&sweep(&cfg, &q()).unwrap());
    let b = to_csv(&sweep(&cfg, &q()).unwrap());
    assert_eq!(a, b);
    assert!(a.starts_with(CSV_HEADER));
    assert_eq!(a.lines().count(), 1 + 2 * 5 * 2);
    let other = to_csv(&sweep(&SweepConfig { seed_base: 43, ..cfg }, &q()).unwrap());
    assert_ne!(a, other);
}

#[test]
fn sweep_writes_csv_and_reports_io_path() {
    let dir = std::env::temp_dir().join(format!("mixglm-props-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("out.csv");
    let cfg = SweepConfig {
        d: 50,
        trials: 1,
        delta_grid: vec![3.0],
        estimators: vec![EstimatorKind::Lin],
        output_path: Some(path.clone()),
        ..Default::default()
    };
    let rows = sweep(&cfg, &q()).unwrap();
    assert_eq!(std::fs::read_to_string(&path).unwrap(), to_csv(&rows));
    let bad = SweepConfig { output_path: Some(dir.join("missing").join("out.csv")), ..cfg };
    let err = sweep(&bad, &q()).unwrap_err().to_string();
    assert!(err.contains("missing"), "{err}");
    std::fs::remove_dir_all(&dir).unwrap();
}
