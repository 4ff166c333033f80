use krein_trace::krein_solver::{
    bounded_solution, bounded_solution_profile, cbf_check, cbf_check_table, integrate_fundamental,
    integrate_fundamental_observed, log_grid, spectral_mu, BoundedOptions, MuOptions, SolverOptions,
    SpectralFunctionTable,
};
use krein_trace::string_model::{builtin, builtin_from_call, DensityForm, DensityPiece, KreinString, RightBoundary};

fn golden() -> Vec<(&'static str, fn(f64) -> f64)> {
    vec![
        ("half_laplacian", |l: f64| l.sqrt()),
        ("water_wave", |l: f64| l.sqrt() * l.sqrt().tanh()),
        ("strip_dirichlet", |l: f64| l.sqrt() / l.sqrt().tanh()),
        ("zero", |_| 0.0),
        ("unit_zero", |_| 1.0),
        ("atom(1,1)", |l: f64| l / (l + 1.0)),
        ("atom(0,1)", |l: f64| l),
        ("quasi_relativistic", |l: f64| (l + 1.0).sqrt() - 1.0),
        ("quasi_relativistic_plus", |l: f64| (l + 1.0).sqrt() + 1.0),
        ("sqrt_shift", |l: f64| (l + 1.0).sqrt()),
    ]
}

fn rel_err(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        a.abs()
    } else {
        ((a - b) / b).abs()
    }
}

#[test]
fn golden_closed_forms() {
    let opts = MuOptions::default();
    for (name, exact) in golden() {
        let s = builtin_from_call::<f64>(name).unwrap();
        let mut worst = 0f64;
        for lambda in log_grid(0.01, 100.0, 25) {
            let est = spectral_mu(&s, lambda, &opts).unwrap();
            assert!(est.lo <= est.mu && est.mu <= est.hi, "{name}");
            worst = worst.max(rel_err(est.mu, exact(lambda)));
        }
        assert!(worst <= 1e-6, "{name}: worst relative error {worst:e}");
    }
}

#[test]
fn spot_values() {
    let opts = MuOptions::default();
    let mu = |name: &str, l: f64| spectral_mu(&builtin_from_call::<f64>(name).unwrap(), l, &opts).unwrap().mu;
    assert!((mu("water_wave", 1.0) - 0.7615941559557649).abs() < 1e-9);
    assert!((mu("strip_dirichlet", 1.0) - 1.3130352854993312).abs() < 1e-9);
    assert!((mu("atom(1,1)", 1.0) - 0.5).abs() < 1e-9);
    assert!((mu("atom(0,1)", 2.0) - 2.0).abs() < 1e-12);
    assert!((mu("quasi_relativistic", 3.0) - 1.0).abs() < 1e-8);
    assert!((mu("quasi_relativistic_plus", 3.0) - 3.0).abs() < 1e-8);
    assert!((mu("sqrt_shift", 3.0) - 2.0).abs() < 1e-8);
    assert!((mu("half_laplacian", 4.0) - 2.0).abs() < 1e-8);
    assert_eq!(mu("zero", 7.0), 0.0);
    assert_eq!(mu("unit_zero", 7.0), 1.0);
    assert_eq!(mu("half_laplacian", 0.0), 0.0);
    assert_eq!(mu("quasi_relativistic_plus", 0.0), 2.0);
}

#[test]
fn negative_lambda_is_domain_error() {
    let s = builtin::<f64>("water_wave", &[]).unwrap();
    assert!(spectral_mu(&s, -1.0, &MuOptions::default()).is_err());
    assert!(bounded_solution(&s, -1.0, 0.5, &BoundedOptions::default()).is_err());
}

#[test]
fn fundamental_solutions() {
    let opts = SolverOptions::default();
    let zero = builtin::<f64>("zero", &[]).unwrap();
    let st = integrate_fundamental(&zero, 3.0, 5.0, &opts).unwrap();
    let e = st.log_scale.exp();
    assert!((st.phi_d * e - 5.0).abs() < 1e-12);
    assert!((st.dphi_d * e - 1.0).abs() < 1e-12);
    assert!((st.phi_n * e - 1.0).abs() < 1e-12);
    assert!((st.dphi_n * e).abs() < 1e-12);

    let half = builtin::<f64>("half_laplacian", &[]).unwrap();
    let st = integrate_fundamental(&half, 1.0, 1.0, &opts).unwrap();
    let e = st.log_scale.exp();
    assert!((st.phi_n * e - 1f64.cosh()).abs() < 1e-9);
    assert!((st.phi_d * e - 1f64.sinh()).abs() < 1e-9);

    let atom = builtin::<f64>("atom", &[1.0, 1.0]).unwrap();
    let before = integrate_fundamental(&atom, 2.0, 1.0, &opts).unwrap();
    assert_eq!(before.dphi_n, 0.0);
    let after = integrate_fundamental(&atom, 2.0, 1.0 + 1e-9, &opts).unwrap();
    assert!((after.dphi_n * after.log_scale.exp() - 2.0).abs() < 1e-12);
}

#[test]
fn integrate_rejects_points_outside() {
    let s = builtin::<f64>("strip_dirichlet", &[]).unwrap();
    assert!(integrate_fundamental(&s, 1.0, 1.5, &SolverOptions::default()).is_err());
    assert!(integrate_fundamental(&s, 1.0, -0.1, &SolverOptions::default()).is_err());
}

#[test]
fn wronskian_every_step() {
    let opts = SolverOptions::default();
    for (name, _) in golden() {
        let s = builtin_from_call::<f64>(name).unwrap();
        let target = if s.length().is_finite() { s.length() * 0.999 } else { 50.0 };
        for lambda in [0.0, 0.01, 1.0, 100.0, 1e4] {
            let mut worst = 0f64;
            integrate_fundamental_observed(&s, lambda, target, &opts, &mut |st| {
                worst = worst.max(st.wronskian_deviation());
                let m = st.phi_d.abs().max(st.dphi_d.abs()).max(st.phi_n.abs()).max(st.dphi_n.abs());
                assert!(m <= 1e6, "{name}: renormalisation range");
                assert!(st.phi_d >= 0.0 && st.phi_n >= 0.0 && st.dphi_d >= 0.0);
            })
            .unwrap();
            assert!(worst <= 1e-8, "{name} lambda {lambda}: {worst:e}");
        }
    }
}

#[test]
fn bracket_schedule_is_monotone() {
    let opts = MuOptions::default();
    for name in ["half_laplacian", "quasi_relativistic", "quasi_relativistic_plus", "sqrt_shift"] {
        let s = builtin::<f64>(name, &[]).unwrap();
        for lambda in [0.01, 1.0, 100.0] {
            let est = spectral_mu(&s, lambda, &opts).unwrap();
            assert!(!est.schedule.is_empty());
            for w in est.schedule.windows(2) {
                assert!(w[1].hi <= w[0].hi * (1.0 + 1e-12), "{name}");
                assert!(w[1].lo >= w[0].lo * (1.0 - 1e-12), "{name}");
                assert!(w[1].lo <= w[1].hi);
            }
        }
    }
}

#[test]
fn constant_density_scaling() {
    for c in [0.25, 3.0, 40.0] {
        let s = KreinString::new(
            f64::INFINITY,
            RightBoundary::Natural,
            vec![DensityPiece { left: 0.0, right: f64::INFINITY, form: DensityForm::Constant { c } }],
            vec![],
            None,
        )
        .unwrap();
        for lambda in [0.01, 1.0, 100.0] {
            let mu = spectral_mu(&s, lambda, &MuOptions::default()).unwrap().mu;
            assert!(rel_err(mu, (c * lambda).sqrt()) < 1e-8);
        }
    }
}

#[test]
fn caffarelli_silvestre_power_law() {
    let opts = MuOptions::default();
    for alpha in [0.5, 1.0, 1.5] {
        let s = builtin::<f64>("caffarelli_silvestre", &[alpha]).unwrap();
        let grid: Vec<f64> = log_grid(0.1, 10.0, 21);
        let xs: Vec<f64> = grid.iter().map(|l| l.ln()).collect();
        let ys: Vec<f64> = grid.iter().map(|&l| spectral_mu(&s, l, &opts).unwrap().mu.ln()).collect();
        let n = xs.len() as f64;
        let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
        let slope = sxy / sxx;
        assert!((slope - alpha / 2.0).abs() < 1e-3, "alpha {alpha}: slope {slope}");
    }
}

#[test]
fn bounded_solution_values() {
    let opts = BoundedOptions::default();
    let half = builtin::<f64>("half_laplacian", &[]).unwrap();
    assert!((bounded_solution(&half, 1.0, 2.0, &opts).unwrap() - (-2f64).exp()).abs() < 1e-9);
    let ww = builtin::<f64>("water_wave", &[]).unwrap();
    let expect = 0.5f64.cosh() / 1f64.cosh();
    assert!((bounded_solution(&ww, 1.0, 0.5, &opts).unwrap() - expect).abs() < 1e-9);
    assert_eq!(bounded_solution(&ww, 0.0, 3.0, &opts).unwrap(), 1.0);
    let strip = builtin::<f64>("strip_dirichlet", &[]).unwrap();
    assert_eq!(bounded_solution(&strip, 2.0, 1.0, &opts).unwrap(), 0.0);
    let expect = (2f64.sqrt() * 0.5).sinh() / 2f64.sqrt().sinh();
    assert!((bounded_solution(&strip, 2.0, 0.5, &opts).unwrap() - expect).abs() < 1e-9);
    // phi(y) = (1 - 2y) ((1 + lambda...)): compare with phi_N - mu phi_D instead.
    let qr = builtin::<f64>("quasi_relativistic", &[]).unwrap();
    for lambda in [0.1, 3.0] {
        let mu = spectral_mu(&qr, lambda, &MuOptions::default()).unwrap().mu;
        let y = 0.7;
        let st = integrate_fundamental(&qr, lambda, y, &SolverOptions::default()).unwrap();
        let e = st.log_scale.exp();
        let direct = (st.phi_n - mu * st.phi_d) * e;
        let phi = bounded_solution(&qr, lambda, y, &opts).unwrap();
        assert!((phi - direct).abs() < 1e-6, "{phi} vs {direct}");
    }
    // Closed form for (1 + 2y)^{-2}: phi = (1 + 2y)^{(1 - k)/2} ... checked through the
    // derivative at 0 instead: -phi'(0) = mu.
    let h = 1e-5;
    let lambda = 3.0;
    let p1 = bounded_solution(&qr, lambda, h, &opts).unwrap();
    let p2 = bounded_solution(&qr, lambda, 2.0 * h, &opts).unwrap();
    let slope = (-3.0 + 4.0 * p1 - p2) / (2.0 * h);
    assert!((slope + 1.0).abs() < 1e-4, "slope {slope}");
}

#[test]
fn bounded_solution_shape() {
    let opts = BoundedOptions::default();
    let ys: Vec<f64> = (0..=40).map(|i| i as f64 * 0.05).collect();
    for name in ["half_laplacian", "water_wave", "atom(1,1)", "quasi_relativistic", "caffarelli_silvestre(1.5)"] {
        let s = builtin_from_call::<f64>(name).unwrap();
        for lambda in [0.3, 5.0] {
            let phi = bounded_solution_profile(&s, lambda, &ys, &opts).unwrap();
            assert_eq!(phi[0], 1.0);
            for w in phi.windows(2) {
                assert!(w[1] <= w[0] + 1e-12, "{name}: not monotone");
            }
            for w in phi.windows(3) {
                assert!(w[0] - 2.0 * w[1] + w[2] >= -1e-10, "{name}: not convex");
            }
            assert!(phi.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
    for name in ["quasi_relativistic_plus", "sqrt_shift", "strip_dirichlet"] {
        let s = builtin::<f64>(name, &[]).unwrap();
        let r = s.length();
        let ys: Vec<f64> = (0..=20).map(|i| r * i as f64 / 20.0).collect();
        let phi = bounded_solution_profile(&s, 2.0, &ys, &opts).unwrap();
        assert_eq!(*phi.last().unwrap(), 0.0);
        for w in phi.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{name}");
        }
    }
}

#[test]
fn table_round_trips_and_is_monotone() {
    let s = builtin::<f64>("water_wave", &[]).unwrap();
    let table = SpectralFunctionTable::compute(&s, &log_grid(0.01, 100.0, 25), &MuOptions::default()).unwrap();
    assert!(table.is_monotone());
    let csv = table.to_csv();
    assert!(csv.starts_with("lambda,mu,bracket_lo,bracket_hi,truncation_Y\n"));
    assert_eq!(SpectralFunctionTable::from_csv(&csv).unwrap(), table);
    assert_eq!(SpectralFunctionTable::from_json(&table.to_json()).unwrap(), table);
}

#[test]
fn cbf_properties() {
    let grid: Vec<f64> = log_grid(0.01, 100.0, 16);
    let opts = MuOptions::default();
    for (name, _) in golden() {
        let s = builtin_from_call::<f64>(name).unwrap();
        let report = cbf_check(&s, &grid, &opts).unwrap();
        assert!(report.passed(), "{name}: {report:?}");
    }
    let mock: Vec<(f64, f64)> = grid.iter().map(|&l| (l, l * l)).collect();
    let report = cbf_check_table(&SpectralFunctionTable::from_values(&mock), 0.0);
    assert!(!report.passed());
    assert!(!report.property("concave").unwrap().passed);
    let s = builtin::<f64>("water_wave", &[]).unwrap();
    assert!(cbf_check(&s, &grid[..10], &opts).is_err());
}

#[test]
fn single_precision_instantiation() {
    let s = builtin::<f32>("water_wave", &[]).unwrap();
    let mu = spectral_mu(&s, 1.0f32, &MuOptions::default()).unwrap().mu;
    assert!((mu - 1f32.tanh()).abs() < 1e-4);
    let s = builtin::<f32>("half_laplacian", &[]).unwrap();
    let mu = spectral_mu(&s, 4.0f32, &MuOptions::default()).unwrap().mu;
    assert!((mu - 2.0).abs() < 1e-3, "{mu}");
}
