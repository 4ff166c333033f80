use std::path::Path;
use std::process::{Command, Output};

fn kt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kt")).args(args).env_remove("KT_SEED").output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn column(csv: &str, name: &str) -> Vec<f64> {
    let mut lines = csv.lines().filter(|l| !l.starts_with('#'));
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let k = header.iter().position(|h| *h == name).unwrap();
    lines.map(|l| l.split(',').nth(k).unwrap().parse().unwrap()).collect()
}

fn manifest(out: &Path) -> serde_json::Value {
    let text = std::fs::read_to_string(format!("{}.manifest.json", out.display())).unwrap();
    serde_json::from_str(&text).unwrap()
}

#[test]
fn mu_water_wave_table() {
    let o = kt(&["mu", "--builtin", "water_wave", "--lambda-min", "0.01", "--lambda-max", "100", "--points", "25"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.starts_with("lambda,mu,bracket_lo,bracket_hi,truncation_Y\n"));
    let lambdas = column(&text, "lambda");
    let mus = column(&text, "mu");
    assert_eq!(lambdas.len(), 25);
    for (l, m) in lambdas.iter().zip(&mus) {
        let exact = l.sqrt() * l.sqrt().tanh();
        assert!((m - exact).abs() <= 1e-6 * exact, "{l}: {m} vs {exact}");
    }
    // 17 significant digits
    let first = text.lines().nth(1).unwrap().split(',').next().unwrap();
    assert_eq!(first, "1.0000000000000000e-2");
}

#[test]
fn mu_zero_string_is_zero() {
    let o = kt(&["mu", "--builtin", "zero"]);
    assert!(o.status.success());
    assert!(column(&stdout(&o), "mu").iter().all(|&m| m == 0.0));
}

#[test]
fn exit_codes() {
    assert_eq!(kt(&["mu", "--builtin", "zero", "--no-such-flag"]).status.code(), Some(64));
    let o = kt(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(64));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
    assert_eq!(kt(&["mu", "--builtin", "nope"]).status.code(), Some(2));
    assert_eq!(kt(&["mu"]).status.code(), Some(2));
    assert_eq!(kt(&["trace-cf", "--builtin", "half_laplacian", "--dt", "0.1", "--paths", "10"]).status.code(), Some(2));
    assert_eq!(kt(&["string", "--string", "/nonexistent/spec.json"]).status.code(), Some(2));
    // every path is stopped by the horizon before reaching the level
    let o = kt(&["trace-cf", "--builtin", "half_laplacian", "--paths", "50", "--horizon", "0.001", "--dt", "1e-6"]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(kt(&["--help"]).status.code(), Some(0));
}

#[test]
fn json_mirrors_csv() {
    let csv = stdout(&kt(&["mu", "--builtin", "half_laplacian", "--points", "7"]));
    let json = stdout(&kt(&["mu", "--builtin", "half_laplacian", "--points", "7", "--format", "json"]));
    let rows: Vec<serde_json::Value> = serde_json::from_str(&json).unwrap();
    assert_eq!(rows.len(), 7);
    for (row, mu) in rows.iter().zip(column(&csv, "mu")) {
        assert_eq!(row["mu"].as_f64().unwrap(), mu);
        assert_eq!(row.as_object().unwrap().len(), 5);
    }
}

#[test]
fn string_file_round_trip_and_manifest_digest() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("strip.json");
    std::fs::write(
        &spec,
        r#"{"R": 1, "right_boundary": "dirichlet", "pieces": [{"l": 0, "r": 1, "form": {"kind": "const", "c": 1}}], "atoms": []}"#,
    )
    .unwrap();
    let out = dir.path().join("mu.csv");
    let o = kt(&["mu", "--string", spec.to_str().unwrap(), "--points", "4", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    for (l, m) in column(&text, "lambda").iter().zip(column(&text, "mu")) {
        let r = l.sqrt();
        assert!((m - r / r.tanh()).abs() < 1e-6 * m);
    }
    let m = manifest(&out);
    assert_eq!(m["subcommand"], "mu");
    assert_eq!(m["config"]["points"], 4);
    assert_eq!(m["inputs"][0]["sha256"].as_str().unwrap().len(), 64);
    assert_eq!(m["output_sha256"].as_str().unwrap().len(), 64);

    // Replaying reproduces the file; a modified input is refused.
    let again = dir.path().join("again.csv");
    let manifest_file = format!("{}.manifest.json", out.display());
    let o = kt(&["replay", &manifest_file, "--out", again.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(std::fs::read(&again).unwrap(), std::fs::read(&out).unwrap());
    std::fs::write(&spec, std::fs::read_to_string(&spec).unwrap().replace("\"c\": 1", "\"c\": 2")).unwrap();
    assert_eq!(kt(&["replay", &manifest_file]).status.code(), Some(2));
}

#[test]
fn trace_cf_cauchy() {
    let o = kt(&[
        "trace-cf", "--builtin", "half_laplacian", "--xi", "1", "--s", "1", "--paths", "100000", "--dt", "1e-4", "--seed", "7",
    ]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.starts_with("string,xi,s,estimate,stderr,theory,abs_err,n_paths,dt,excluded_frac\n"));
    let est = column(&text, "estimate")[0];
    let se = column(&text, "stderr")[0];
    assert!((est - (-1.0f64).exp()).abs() <= 3.0 * se + 0.02);
    assert!((column(&text, "theory")[0] - (-1.0f64).exp()).abs() < 1e-12);
}

#[test]
fn seeds_workers_and_environment() {
    let dir = tempfile::tempdir().unwrap();
    let run = |extra: &[&str], env: Option<&str>, name: &str| {
        let out = dir.path().join(name);
        let mut args = vec!["trace-cf", "--builtin", "atom(1,1)", "--xi", "0.5", "--xi", "2", "--s", "0.5,1", "--paths", "2000"];
        args.extend_from_slice(extra);
        args.extend(["--out", out.to_str().unwrap()]);
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_kt"));
        cmd.args(&args).env_remove("KT_SEED");
        if let Some(seed) = env {
            cmd.env("KT_SEED", seed);
        }
        assert!(cmd.output().unwrap().status.success());
        std::fs::read(out).unwrap()
    };
    let one = run(&["--seed", "11", "--workers", "1"], None, "a.csv");
    let three = run(&["--seed", "11", "--workers", "3"], None, "b.csv");
    assert_eq!(one, three);
    let env = run(&[], Some("11"), "c.csv");
    assert_eq!(one, env);
    let flag_wins = run(&["--seed", "12"], Some("11"), "d.csv");
    assert_ne!(one, flag_wins);
    assert_eq!(manifest(&dir.path().join("c.csv"))["seed"], 11);
    assert_eq!(String::from_utf8(one).unwrap().lines().count(), 5);
}

#[test]
fn hit_cf_rows() {
    let o = kt(&["hit-cf", "--builtin", "water_wave", "--y", "0.5,1", "--xi", "1", "--paths", "3000"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.starts_with("string,xi,y0,"));
    let theory = column(&text, "theory");
    assert!((theory[0] - 0.7308).abs() < 1e-4);
    for ((e, s), t) in column(&text, "estimate").iter().zip(column(&text, "stderr")).zip(&theory) {
        assert!((e - t).abs() <= 3.0 * s + 0.02);
    }
}

#[test]
fn grid_commands() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("f.csv");
    let o = kt(&["extend", "--builtin", "half_laplacian", "--function", "cos:2", "--grid-n", "32", "--box-l", "2", "--y", "0.5", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("# d=1 N=32 L=2.0000000000000000e0\ni,value\n"));
    let decay = (-std::f64::consts::PI * 0.5).exp();
    assert!((column(&text, "value")[0] - decay * (-std::f64::consts::PI * 2.0).cos()).abs() < 1e-12);

    // The extension can be read back as an input grid.
    let o = kt(&["dtn", "--builtin", "half_laplacian", "--input", out.to_str().unwrap()]);
    assert!(o.status.success());
    let k = std::f64::consts::PI;
    let dtn = column(&stdout(&o), "value");
    let base = column(&text, "value");
    for (a, b) in dtn.iter().zip(&base) {
        assert!((a - k * b).abs() < 1e-12);
    }

    let o = kt(&["fraclap", "compare", "--alpha", "1.5", "--grid-n", "512", "--box-l", "20", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(manifest(&out)["summary"]["relative_l2"].as_f64().unwrap() < 1e-3);
    let o = kt(&["fraclap", "spectral", "--grid-n", "16", "--dim", "2", "--box-l", "4"]);
    assert!(stdout(&o).lines().nth(1) == Some("i,j,value"));
    assert_eq!(kt(&["extend", "--builtin", "zero", "--y", "1,2"]).status.code(), Some(2));
}

#[test]
fn poisson_and_energy() {
    let o = kt(&["poisson", "integral", "--dim", "1", "--alpha", "0.5", "--y", "1"]);
    assert!((column(&stdout(&o), "total")[0] - 1.0).abs() < 1e-4);
    let o = kt(&["poisson", "eval", "--alpha", "1", "--y", "1", "--x", "0", "--x", "1"]);
    let v = column(&stdout(&o), "value");
    let pi = std::f64::consts::PI;
    assert!((v[0] - 1.0 / pi).abs() < 1e-13 && (v[1] - 0.5 / pi).abs() < 1e-13);
    let o = kt(&["poisson", "fourier", "--alpha", "1", "--y", "0.5", "--grid-n", "256", "--box-l", "16"]);
    let text = stdout(&o);
    for (xi, val) in column(&text, "xi").iter().zip(column(&text, "value")).take(10) {
        assert!((val - (-0.5 * xi).exp()).abs() < 1e-6);
    }
    let o = kt(&["energy", "--builtin", "half_laplacian", "--function", "cos:3", "--grid-n", "32", "--box-l", "2"]);
    assert!(column(&stdout(&o), "relative_gap")[0] < 1e-2);
}

#[test]
fn cbf_and_string_commands() {
    let o = kt(&["cbf-check", "--builtin", "quasi_relativistic", "--points", "20"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.starts_with("property,passed,worst_violation\n"));
    assert!(text.lines().skip(1).all(|l| l.contains(",true,")));
    let o = kt(&["string", "--builtin", "caffarelli_silvestre", "--alpha", "0.5"]);
    assert!(stdout(&o).contains("label,caffarelli_silvestre(0.5)"));
}

#[test]
fn walk_and_bessel() {
    let o = kt(&["walk", "--dim", "2", "--xi", "1,0.5", "--j", "1,2", "--paths", "5000"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.starts_with("d,j,xi_1,xi_2,closed_form_re,estimate,stderr\n"));
    let exact = column(&text, "closed_form_re");
    for ((e, s), c) in column(&text, "estimate").iter().zip(column(&text, "stderr")).zip(&exact) {
        assert!((e - c).abs() <= 3.0 * s + 0.01);
    }
    assert_eq!(kt(&["walk", "--dim", "2", "--xi", "1"]).status.code(), Some(2));

    let o = kt(&["bessel-exponent", "--alpha", "1", "--paths", "2000", "--dt", "1e-5"]);
    assert!(o.status.success());
    let exponent = column(&stdout(&o), "exponent")[0];
    assert!((exponent - 0.5).abs() < 0.05);
}
