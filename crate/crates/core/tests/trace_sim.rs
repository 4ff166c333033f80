use std::f64::consts::PI;

use krein_trace::krein_solver::{bounded_solution, spectral_mu, BoundedOptions, MuOptions};
use krein_trace::string_model::builtin;
use krein_trace::trace_sim::*;
use krein_trace::KreinString;

fn string(name: &str, params: &[f64]) -> KreinString {
    builtin(name, params).unwrap()
}

fn mu(s: &KreinString, lambda: f64) -> f64 {
    spectral_mu(s, lambda, &MuOptions::default()).unwrap().mu
}

fn within_budget(est: &CFEstimate, target: f64, budget: f64) {
    let err = (est.value - target).abs();
    assert!(
        err <= 3.0 * est.stderr + budget,
        "estimate {} vs {target}: error {err}, stderr {}",
        est.value,
        est.stderr
    );
}

#[test]
fn nonnegative_increments_never_regulate() {
    let incs = [0.1, 0.0, 0.3, 0.2, 0.0, 0.05];
    let (ys, ls) = regulate(&incs);
    assert!(ls.iter().all(|&l| l == 0.0));
    let mut w = 0.0;
    for (i, dw) in incs.iter().enumerate() {
        w += dw;
        assert_eq!(ys[i + 1], w);
    }
}

#[test]
fn regulate_small_walk_by_hand() {
    let (ys, ls) = regulate(&[-1.0, 0.5, -2.0, 3.0]);
    assert_eq!(ys, vec![0.0, 0.0, 0.5, 0.0, 3.0]);
    assert_eq!(ls, vec![0.0, 1.0, 1.0, 2.5, 2.5]);
}

#[test]
fn regulated_paths_are_skorokhod() {
    let cfg = SimConfig::new(1e-3, 10, 3, vec![1.0]);
    for p in 0..cfg.n_paths as u64 {
        let (ys, ls) = regulated_path(&cfg, p, 2000);
        assert_eq!(ys.len(), 2001);
        for i in 1..ys.len() {
            assert!(ys[i] >= 0.0);
            assert!(ls[i] >= ls[i - 1]);
            // the regulator only moves when the path sits at the boundary
            if ls[i] > ls[i - 1] {
                assert_eq!(ys[i], 0.0);
            }
        }
    }
}

#[test]
fn regulator_mean_matches_spitzer() {
    // E[-min(0, min_k S_k)] = sum_k E[S_k^-] / k for a Gaussian walk.
    let (dt, n, paths) = (1e-3, 1000usize, 100_000usize);
    let cfg = SimConfig::new(dt, paths, 17, vec![1.0]);
    let ends: Vec<f64> = (0..paths as u64).map(|p| regulated_path(&cfg, p, n).1[n]).collect();
    let mean = ends.iter().sum::<f64>() / paths as f64;
    let var = ends.iter().map(|l| (l - mean) * (l - mean)).sum::<f64>() / (paths as f64 - 1.0);
    let se = (var / paths as f64).sqrt();
    let discrete = (dt / (2.0 * PI)).sqrt() * (1..=n).map(|k| (k as f64).powf(-0.5)).sum::<f64>();
    assert!((mean - discrete).abs() <= 3.0 * se, "{mean} vs {discrete} (se {se})");

    // Continuum limit: the grid misses 0.5826 sqrt(dt) of the minimum on average.
    let shift = 0.5826 * dt.sqrt();
    let continuum = (2.0 / PI).sqrt();
    assert!((mean + shift - continuum).abs() <= 3.0 * se + 1e-3, "{mean} + {shift} vs {continuum}");
}

#[test]
fn additive_functional_trivial_strings() {
    let cfg = SimConfig::new(1e-3, 1, 5, vec![1.0]);
    let (ys, ls) = regulated_path(&cfg, 0, 500);
    let a = additive_functional(&ys, &ls, &string("half_laplacian", &[]), &cfg);
    for (i, v) in a.iter().enumerate() {
        assert!((v - i as f64 * cfg.dt).abs() < 1e-12);
    }
    let z = additive_functional(&ys, &ls, &string("zero", &[]), &cfg);
    assert!(z.iter().all(|&v| v == 0.0));
    let origin = additive_functional(&ys, &ls, &string("atom", &[0.0, 1.5]), &cfg);
    for (v, l) in origin.iter().zip(&ls) {
        assert_eq!(*v, 3.0 * l);
    }
}

#[test]
fn xi_process_is_nonincreasing() {
    let cfg = SimConfig::new(1e-3, 4, 8, vec![1.0]);
    for name in ["quasi_relativistic", "water_wave", "atom"] {
        let s = string(name, &[]);
        for p in 0..4 {
            let (ys, ls) = regulated_path(&cfg, p, 3000);
            let a = additive_functional(&ys, &ls, &s, &cfg);
            let xi: Vec<f64> = a.iter().map(|v| (-0.5 * 4.0 * v).exp()).collect();
            assert!(xi.windows(2).all(|w| w[1] <= w[0]), "{name}");
        }
    }
}

#[test]
fn interior_atom_window_counts_occupation() {
    let mut cfg = SimConfig::new(1e-3, 1, 5, vec![1.0]);
    cfg.atom_window = Some(0.25);
    let ys = vec![0.9, 1.1, 1.3, 0.8, 1.0];
    let ls = vec![0.0; 5];
    let a = additive_functional(&ys, &ls, &string("atom", &[1.0, 2.0]), &cfg);
    let unit = 2.0 * cfg.dt / 0.5;
    let expected = [0.0, unit, 2.0 * unit, 2.0 * unit, 3.0 * unit];
    for (v, e) in a.iter().zip(expected) {
        assert!((v - e).abs() < 1e-15);
    }
}

#[test]
fn zero_string_cf_is_one() {
    let cfg = SimConfig::new(1e-4, 500, 1, vec![0.5, 1.0]);
    let samples = simulate_trace(&string("zero", &[]), &cfg, 0.5).unwrap();
    for xi in [0.5, 1.0, 3.0] {
        for level in [0.5, 1.0] {
            let est = samples.estimate(&[xi], level).unwrap();
            assert_eq!(est.value, 1.0);
            assert_eq!(est.stderr, 0.0);
        }
    }
}

#[test]
fn atom_at_origin_is_deterministic() {
    let cfg = SimConfig::new(1e-4, 200, 1, vec![0.5, 1.0]);
    let samples = simulate_trace(&string("atom", &[0.0, 1.0]), &cfg, 0.5).unwrap();
    for xi in [0.5, 2.0] {
        for level in [0.5, 1.0] {
            let est = samples.estimate(&[xi], level).unwrap();
            let target = (-level * xi * xi).exp();
            assert!((est.value - target).abs() < 1e-12);
        }
    }
}

#[test]
fn cauchy_trace() {
    let cfg = SimConfig::new(1e-4, 20_000, 2, vec![1.0]);
    let est = cf_trace_estimate(&string("half_laplacian", &[]), &[1.0], 1.0, &cfg).unwrap();
    within_budget(&est, (-1.0f64).exp(), 0.02);
    assert_eq!(est.excluded, 0);
    assert!(est.warning.is_none());
}

#[test]
fn water_wave_trace() {
    let cfg = SimConfig::new(1e-4, 20_000, 4, vec![1.0]);
    let est = cf_trace_estimate(&string("water_wave", &[]), &[1.0], 1.0, &cfg).unwrap();
    within_budget(&est, (-(1.0f64).tanh()).exp(), 0.02);
}

#[test]
fn atom_trace_uses_one_sample_for_all_frequencies() {
    let s = string("atom", &[]);
    let cfg = SimConfig::new(1e-4, 10_000, 6, vec![0.5, 1.0]);
    let samples = simulate_trace(&s, &cfg, 0.5).unwrap();
    for xi in [0.5, 2.0] {
        for level in [0.5, 1.0] {
            let est = samples.estimate(&[xi], level).unwrap();
            within_budget(&est, (-level * xi * xi / (xi * xi + 1.0)).exp(), 0.02);
        }
    }
}

#[test]
fn multidimensional_frequency_uses_its_norm() {
    let s = string("half_laplacian", &[]);
    let cfg = SimConfig::new(1e-4, 300, 9, vec![1.0]);
    let samples = simulate_trace(&s, &cfg, 0.5).unwrap();
    let a = samples.estimate(&[0.6, 0.8], 1.0).unwrap();
    let b = samples.estimate(&[1.0], 1.0).unwrap();
    assert_eq!(a.value, b.value);
    assert_eq!(a.xi, vec![0.6, 0.8]);
}

#[test]
fn dirichlet_strip_with_killing() {
    let s = string("strip_dirichlet", &[]);
    let cfg = SimConfig::new(1e-4, 20_000, 12, vec![1.0]);
    let est = cf_trace_estimate(&s, &[1.0], 1.0, &cfg).unwrap();
    assert!(est.killed > 0);
    within_budget(&est, (-mu(&s, 1.0)).exp(), 0.02);
}

#[test]
fn estimator_errors_and_warnings() {
    let s = string("half_laplacian", &[]);
    let cfg = SimConfig::new(1e-4, 100, 1, vec![1.0]);
    let samples = simulate_trace(&s, &cfg, 1.0).unwrap();
    assert!(samples.estimate(&[0.5], 1.0).is_err());
    assert!(samples.estimate(&[1.0], 0.5).is_err());

    let mut short = SimConfig::new(1e-4, 400, 1, vec![1.0]);
    short.horizon = 0.2;
    let est = cf_trace_estimate(&s, &[1.0], 1.0, &short).unwrap();
    assert!(est.excluded_frac() > 0.01);
    assert!(est.warning.is_some());

    let mut bad = cfg.clone();
    bad.dt = 0.01;
    assert!(simulate_trace(&s, &bad, 1.0).is_err());
    bad = cfg.clone();
    bad.s_values = vec![];
    assert!(simulate_trace(&s, &bad, 1.0).is_err());
}

#[test]
fn hitting_half_laplacian() {
    let cfg = SimConfig::new(1e-4, 20_000, 21, vec![1.0]);
    let est = cf_hitting_estimate(&string("half_laplacian", &[]), &[1.0], 1.0, &cfg).unwrap();
    within_budget(&est, (-1.0f64).exp(), 0.02);
}

#[test]
fn hitting_water_wave_matches_bounded_solution() {
    let s = string("water_wave", &[]);
    let target = bounded_solution(&s, 1.0, 0.5, &BoundedOptions::default()).unwrap();
    assert!((target - 0.7308).abs() < 1e-4);
    let cfg = SimConfig::new(1e-4, 20_000, 22, vec![1.0]);
    let est = cf_hitting_estimate(&s, &[1.0], 0.5, &cfg).unwrap();
    within_budget(&est, target, 0.02);
}

#[test]
fn hitting_at_zero_frequency_is_one() {
    let cfg = SimConfig::new(1e-4, 300, 23, vec![1.0]);
    for name in ["water_wave", "quasi_relativistic", "atom"] {
        let est = cf_hitting_estimate(&string(name, &[]), &[0.0], 0.5, &cfg).unwrap();
        assert_eq!(est.value, 1.0, "{name}");
    }
}

#[test]
fn hitting_from_the_dirichlet_end_is_zero() {
    let cfg = SimConfig::new(1e-4, 50, 1, vec![1.0]);
    let est = cf_hitting_estimate(&string("strip_dirichlet", &[]), &[1.0], 1.0, &cfg).unwrap();
    assert_eq!(est.value, 0.0);
    assert!(cf_hitting_estimate(&string("strip_dirichlet", &[]), &[1.0], 1.5, &cfg).is_err());
    assert!(cf_hitting_estimate(&string("water_wave", &[]), &[1.0], 0.0, &cfg).is_err());
}

#[test]
fn identical_across_worker_counts() {
    let s = string("water_wave", &[]);
    let cfg = SimConfig::new(1e-4, 3000, 99, vec![0.5, 1.0]);
    let run = |workers: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build().unwrap();
        pool.install(|| {
            let samples = simulate_trace(&s, &cfg, 0.5).unwrap();
            let mut rows = vec![TRACE_HEADER.to_string()];
            for xi in [0.5, 1.0, 2.0] {
                for level in [0.5, 1.0] {
                    let est = samples.estimate(&[xi], level).unwrap();
                    rows.push(trace_row("water_wave", &est, (-level * mu(&s, xi * xi)).exp(), cfg.dt));
                }
            }
            rows.join("\n")
        })
    };
    assert_eq!(run(1), run(4));
}

#[test]
fn occupation_local_time_is_twice_the_regulator() {
    // grid steps sitting exactly at 0 inflate the occupation by O(sqrt(dt) / delta)
    let cfg = SimConfig::new(1e-5, 2000, 31, vec![1.0]);
    let diag = local_time_diagnostic(&cfg, 1.0, 0.1).unwrap();
    assert!((diag.ratio - 2.0).abs() < 0.1, "{diag:?}");
}

#[test]
fn bessel_exponent_half_stable() {
    let cfg = SimConfig::new(1e-5, 10_000, 41, vec![1.0]);
    let fit = bessel_subordinator_exponent(1.0, &cfg).unwrap();
    assert!((fit.exponent - 0.5).abs() <= 0.03, "{fit:?}");
    assert!(fit.half_width > 0.0 && fit.half_width < 0.05);
    assert!(fit.laplace.windows(2).all(|w| w[1] < w[0]));
    assert!(fit.u.first() == Some(&BESSEL_U_MIN) && (fit.u.last().unwrap() - BESSEL_U_MAX).abs() < 1e-12);
    assert!(bessel_subordinator_exponent(2.0, &cfg).is_err());
}

#[test]
fn csv_rows() {
    let est = CFEstimate {
        xi: vec![1.0, 0.5],
        s: 1.0,
        value: 0.25,
        stderr: 0.01,
        n_effective: 10,
        n_paths: 10,
        excluded: 0,
        killed: 0,
        warning: None,
    };
    let row = trace_row("atom(1,1)", &est, 0.5, 1e-4);
    let fields: Vec<&str> = row.splitn(2, "\",").collect();
    assert_eq!(fields[0], "\"atom(1,1)");
    assert_eq!(TRACE_HEADER.split(',').count(), 10);
    let rest: Vec<&str> = fields[1].split(',').collect();
    assert_eq!(rest.len(), 9);
    assert_eq!(rest[0], "1.0000000000000000e0;5.0000000000000000e-1");
    assert_eq!(rest[5], "2.5000000000000000e-1");
    assert_eq!(rest[6], "10");
    assert_eq!(csv_field("plain"), "plain");
    assert_eq!(csv_field("a\"b"), "\"a\"\"b\"");
}
