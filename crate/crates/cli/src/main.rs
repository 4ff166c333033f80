//! `kt`: command line access to the krein-trace library.
//!
//! Every run writes its rows to `--out` (or stdout) and a manifest next to it
//! (`<out>.manifest.json`, or stderr when writing to stdout). `kt replay MANIFEST` re-runs
//! a manifest after checking the digests of its input files.

mod table;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use krein_trace::krein_solver::{
    bounded_solution, cbf_check, log_grid, spectral_mu, BoundedOptions, SpectralFunctionTable, TABLE_HEADER,
};
use krein_trace::lattice_walk::{simulate_hits, trace_cf_closed_form, walk_header, WalkConfig};
use krein_trace::spectral_dtn::{
    dtn_apply, energy_check, fraclap_multiplier, fraclap_pv, harmonic_extend, poisson_fourier, poisson_kernel,
    poisson_mass,
};
use krein_trace::string_model::{builtin_from_call, parse_builtin_call};
use krein_trace::trace_sim::{
    bessel_subordinator_exponent, simulate_hitting, simulate_trace, SimConfig, HITTING_HEADER, TRACE_HEADER,
};
use krein_trace::{Error, GridFunction, KreinString, MuOptions};

use table::{Cell, Table};

const EXIT_VALIDATION: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_USAGE: u8 = 64;

#[derive(Parser, Debug)]
#[command(name = "kt", version, about = "Krein strings, Dirichlet-to-Neumann operators and boundary traces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    opts: Opts,
}

#[derive(Subcommand, Debug, Clone)]
enum Command {
    /// Validate a string and show it.
    String,
    /// Tabulate mu(lambda) with brackets on a log grid.
    Mu,
    /// Check the complete Bernstein sign pattern of mu on a log grid.
    CbfCheck,
    /// Harmonic extension of a grid function to height --y.
    Extend,
    /// Apply the Dirichlet-to-Neumann operator of the string.
    Dtn,
    /// Fractional Laplacian of a grid function.
    Fraclap {
        #[arg(value_enum, default_value_t = FraclapMode::Compare)]
        mode: FraclapMode,
    },
    /// Poisson kernel of the fractional Laplacian.
    Poisson {
        #[arg(value_enum, default_value_t = PoissonMode::Eval)]
        mode: PoissonMode,
    },
    /// Compare the quadratic form of the operator with the energy of the extension.
    Energy,
    /// Monte Carlo characteristic function of the boundary trace.
    TraceCf,
    /// Monte Carlo characteristic function of the hitting position.
    HitCf,
    /// Stability exponent of the inverse local time of a Bessel process.
    BesselExponent,
    /// Boundary trace of the reflected lattice walk.
    Walk,
    /// Re-run a manifest written by an earlier run.
    Replay { manifest: PathBuf },
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum FraclapMode {
    Pv,
    Spectral,
    Compare,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum PoissonMode {
    Eval,
    Integral,
    Fourier,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Format {
    Csv,
    Json,
}

#[derive(Args, Debug, Clone)]
struct Opts {
    /// Catalog string, e.g. `water_wave` or `atom(1,1)`.
    #[arg(long, global = true, conflicts_with = "string")]
    builtin: Option<String>,
    /// String-spec JSON file.
    #[arg(long, global = true)]
    string: Option<PathBuf>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[arg(long, global = true, env = "KT_SEED", default_value_t = 0)]
    seed: u64,
    /// Worker threads; defaults to the machine's parallelism.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true, default_value_t = 0.01)]
    lambda_min: f64,
    #[arg(long, global = true, default_value_t = 100.0)]
    lambda_max: f64,
    #[arg(long, global = true, alias = "lambda-points", default_value_t = 25)]
    points: usize,
    /// Frequency vector with comma-separated components; repeat for several frequencies.
    #[arg(long, global = true, default_value = "1")]
    xi: Vec<String>,
    /// Local time levels.
    #[arg(long, global = true, value_delimiter = ',', default_value = "1")]
    s: Vec<f64>,
    #[arg(long, global = true, default_value_t = 100_000)]
    paths: usize,
    #[arg(long, global = true, default_value_t = 1e-4)]
    dt: f64,
    /// Maximal simulated time per path.
    #[arg(long, global = true, default_value_t = 1e6)]
    horizon: f64,
    #[arg(long, global = true, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, global = true, default_value_t = 256)]
    grid_n: usize,
    /// Half-width L of the periodic box [-L, L)^d.
    #[arg(long, global = true, default_value_t = 10.0)]
    box_l: f64,
    #[arg(long, global = true, default_value_t = 1)]
    dim: usize,
    /// Heights: extension height, Poisson heights or hitting start points.
    #[arg(long, global = true, value_delimiter = ',', default_value = "1")]
    y: Vec<f64>,
    /// Evaluation point with comma-separated components; repeat for several points.
    #[arg(long, global = true, default_value = "0")]
    x: Vec<String>,
    /// Grid function file (CSV, or the binary format for any other extension).
    #[arg(long, global = true)]
    input: Option<PathBuf>,
    /// Generated input when --input is absent: `gaussian` or `cos:K`.
    #[arg(long, global = true, default_value = "gaussian")]
    function: String,
    /// Top of the y grid for `energy`; by default 12 L / pi capped at the string length.
    #[arg(long, global = true)]
    y_max: Option<f64>,
    #[arg(long, global = true, default_value_t = 400)]
    y_points: usize,
    /// Start heights of the lattice walk.
    #[arg(long, global = true, value_delimiter = ',', default_value = "1")]
    j: Vec<u32>,
    /// Step budget of the lattice walk.
    #[arg(long, global = true, default_value_t = 1_000_000)]
    steps: u64,
}

enum Failure {
    Validation(String),
    Numerical(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_validation() || matches!(e, Error::Io(_)) {
            Failure::Validation(e.to_string())
        } else {
            Failure::Numerical(e.to_string())
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Validation(e.to_string())
    }
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, Failure> {
    Err(Failure::Validation(msg.into()))
}

type Outcome<T> = Result<T, Failure>;

/// Rows produced by a subcommand plus values recorded only in the manifest.
struct Report {
    table: Table,
    summary: Value,
    warnings: Vec<String>,
}

impl Report {
    fn new(table: Table) -> Self {
        Report { table, summary: Value::Null, warnings: Vec::new() }
    }
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_USAGE),
            };
        }
    };
    let result = match &cli.command {
        Command::Replay { manifest } => replay(manifest, &cli.opts),
        _ => execute(cli, &argv[1..]),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(m)) => {
            eprintln!("kt: {m}");
            ExitCode::from(EXIT_VALIDATION)
        }
        Err(Failure::Numerical(m)) => {
            eprintln!("kt: {m}");
            ExitCode::from(EXIT_NUMERICAL)
        }
    }
}

fn execute(cli: Cli, args: &[String]) -> Outcome<()> {
    let opts = &cli.opts;
    let pool = {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(n) = opts.workers {
            if n == 0 {
                return invalid("--workers must be positive");
            }
            b = b.num_threads(n);
        }
        b.build().map_err(|e| Failure::Validation(e.to_string()))?
    };
    let report = pool.install(|| run(&cli.command, opts))?;
    for w in &report.warnings {
        eprintln!("kt: warning: {w}");
    }
    let body = match opts.format {
        Format::Csv => report.table.to_csv(),
        Format::Json => report.table.to_json(),
    };
    let manifest = manifest(&cli.command, opts, args, &body, &report.summary)?;
    match &opts.out {
        Some(path) => {
            std::fs::write(path, &body)?;
            std::fs::write(manifest_path(path), manifest)?;
        }
        None => {
            print!("{body}");
            eprintln!("{manifest}");
        }
    }
    Ok(())
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::String => "string",
        Command::Mu => "mu",
        Command::CbfCheck => "cbf-check",
        Command::Extend => "extend",
        Command::Dtn => "dtn",
        Command::Fraclap { .. } => "fraclap",
        Command::Poisson { .. } => "poisson",
        Command::Energy => "energy",
        Command::TraceCf => "trace-cf",
        Command::HitCf => "hit-cf",
        Command::BesselExponent => "bessel-exponent",
        Command::Walk => "walk",
        Command::Replay { .. } => "replay",
    }
}

fn resolved_config(c: &Command, o: &Opts) -> Value {
    let mode = match c {
        Command::Fraclap { mode } => json!(format!("{mode:?}").to_lowercase()),
        Command::Poisson { mode } => json!(format!("{mode:?}").to_lowercase()),
        _ => Value::Null,
    };
    json!({
        "mode": mode,
        "builtin": o.builtin,
        "string": o.string,
        "out": o.out,
        "format": format!("{:?}", o.format).to_lowercase(),
        "seed": o.seed,
        "workers": o.workers,
        "lambda_min": o.lambda_min,
        "lambda_max": o.lambda_max,
        "points": o.points,
        "xi": o.xi,
        "s": o.s,
        "paths": o.paths,
        "dt": o.dt,
        "horizon": o.horizon,
        "alpha": o.alpha,
        "grid_n": o.grid_n,
        "box_l": o.box_l,
        "dim": o.dim,
        "y": o.y,
        "x": o.x,
        "input": o.input,
        "function": o.function,
        "y_max": o.y_max,
        "y_points": o.y_points,
        "j": o.j,
        "steps": o.steps,
    })
}

fn manifest(c: &Command, o: &Opts, args: &[String], body: &str, summary: &Value) -> Outcome<String> {
    let mut inputs = Vec::new();
    for path in [&o.string, &o.input].into_iter().flatten() {
        inputs.push(json!({ "path": path, "sha256": sha256_hex(&std::fs::read(path)?) }));
    }
    // The seed is pinned so that a replay does not depend on the environment.
    let mut argv: Vec<String> = args.to_vec();
    argv.push("--seed".into());
    argv.push(o.seed.to_string());
    let doc = json!({
        "tool": "kt",
        "version": env!("CARGO_PKG_VERSION"),
        "subcommand": command_name(c),
        "argv": argv,
        "seed": o.seed,
        "config": resolved_config(c, o),
        "inputs": inputs,
        "output_sha256": sha256_hex(body.as_bytes()),
        "summary": summary,
    });
    Ok(serde_json::to_string_pretty(&doc).expect("manifest serializes"))
}

fn replay(path: &Path, overrides: &Opts) -> Outcome<()> {
    let text = std::fs::read_to_string(path)?;
    let doc: Value = serde_json::from_str(&text).map_err(|e| Failure::Validation(format!("manifest: {e}")))?;
    let argv: Vec<String> = doc["argv"]
        .as_array()
        .and_then(|a| a.iter().map(|v| v.as_str().map(String::from)).collect())
        .ok_or_else(|| Failure::Validation("manifest has no argv".into()))?;
    for input in doc["inputs"].as_array().into_iter().flatten() {
        let file = input["path"].as_str().unwrap_or_default();
        let digest = sha256_hex(&std::fs::read(file)?);
        if Some(digest.as_str()) != input["sha256"].as_str() {
            return invalid(format!("input {file} changed since the manifest was written"));
        }
    }
    let mut full = vec!["kt".to_string()];
    full.extend(argv);
    let mut cli = Cli::try_parse_from(&full).map_err(|e| Failure::Validation(format!("manifest argv: {e}")))?;
    if matches!(cli.command, Command::Replay { .. }) {
        return invalid("a manifest cannot replay another manifest");
    }
    if overrides.out.is_some() {
        cli.opts.out = overrides.out.clone();
    }
    let args = full[1..].to_vec();
    execute(cli, &args)
}

// ---------------------------------------------------------------------------
// Inputs

fn load_string(o: &Opts) -> Outcome<KreinString> {
    match (&o.builtin, &o.string) {
        (Some(call), None) => {
            let (name, params) = parse_builtin_call(call)?;
            if name == "caffarelli_silvestre" && params.is_empty() {
                return Ok(krein_trace::string_model::builtin(&name, &[o.alpha])?);
            }
            Ok(builtin_from_call(call)?)
        }
        (None, Some(path)) => {
            let s = KreinString::load(path)?;
            if s.label().is_some() {
                Ok(s)
            } else {
                let stem = path.file_stem().map(|v| v.to_string_lossy().into_owned()).unwrap_or_default();
                Ok(s.with_label(stem))
            }
        }
        (None, None) => invalid("a string is required: pass --builtin NAME or --string FILE"),
        (Some(_), Some(_)) => invalid("--builtin and --string are mutually exclusive"),
    }
}

fn label(s: &KreinString) -> String {
    s.label().unwrap_or("string").to_string()
}

fn parse_vector(text: &str, flag: &str) -> Outcome<Vec<f64>> {
    text.split(',')
        .map(|v| v.trim().parse::<f64>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|_| Failure::Validation(format!("--{flag}: cannot parse {text:?}")))
}

fn frequencies(o: &Opts) -> Outcome<Vec<Vec<f64>>> {
    o.xi.iter().map(|t| parse_vector(t, "xi")).collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn input_grid(o: &Opts) -> Outcome<GridFunction> {
    if let Some(path) = &o.input {
        let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
        return Ok(if is_csv {
            GridFunction::from_csv(&std::fs::read_to_string(path)?)?
        } else {
            GridFunction::from_bytes(&std::fs::read(path)?)?
        });
    }
    let l = o.box_l;
    let f = match o.function.split_once(':') {
        None if o.function == "gaussian" => {
            GridFunction::from_fn(o.dim, l, o.grid_n, |x| (-x.iter().map(|v| v * v).sum::<f64>()).exp())?
        }
        Some(("cos", k)) => {
            let k: f64 = k.parse().map_err(|_| Failure::Validation(format!("--function: bad wave number {k:?}")))?;
            let xi = std::f64::consts::PI * k / l;
            GridFunction::from_fn(o.dim, l, o.grid_n, |x| (xi * x[0]).cos())?
        }
        _ => return invalid(format!("--function must be `gaussian` or `cos:K`, got {:?}", o.function)),
    };
    Ok(f)
}

fn grid_table(f: &GridFunction) -> Table {
    let header = if f.dim() == 1 { "i,value" } else { "i,j,value" };
    let mut t = Table::new(header);
    t.comments.push(format!(
        "d={} N={} L={}",
        f.dim(),
        f.n(),
        krein_trace::krein_solver::format_real(f.half_width())
    ));
    for (i, v) in f.samples().iter().enumerate() {
        let mut row: Vec<Cell> = f.indices(i).into_iter().map(Cell::from).collect();
        row.push(Cell::Real(*v));
        t.push(row);
    }
    t
}

fn sim_config(o: &Opts) -> SimConfig {
    let mut cfg = SimConfig::new(o.dt, o.paths, o.seed, o.s.clone());
    cfg.horizon = o.horizon;
    cfg
}

// ---------------------------------------------------------------------------
// Subcommands

fn run(c: &Command, o: &Opts) -> Outcome<Report> {
    match c {
        Command::String => cmd_string(o),
        Command::Mu => cmd_mu(o),
        Command::CbfCheck => cmd_cbf(o),
        Command::Extend => {
            let s = load_string(o)?;
            let [y] = o.y[..] else {
                return invalid("extend takes exactly one height --y");
            };
            Ok(Report::new(grid_table(&harmonic_extend(&input_grid(o)?, &s, y)?)))
        }
        Command::Dtn => {
            let s = load_string(o)?;
            Ok(Report::new(grid_table(&dtn_apply(&input_grid(o)?, &s)?)))
        }
        Command::Fraclap { mode } => cmd_fraclap(*mode, o),
        Command::Poisson { mode } => cmd_poisson(*mode, o),
        Command::Energy => cmd_energy(o),
        Command::TraceCf => cmd_trace(o),
        Command::HitCf => cmd_hit(o),
        Command::BesselExponent => cmd_bessel(o),
        Command::Walk => cmd_walk(o),
        Command::Replay { .. } => unreachable!("handled before dispatch"),
    }
}

fn cmd_string(o: &Opts) -> Outcome<Report> {
    let s = load_string(o)?;
    let mut t = Table::new("property,value");
    let real = |v: f64| Cell::Text(krein_trace::krein_solver::format_real(v));
    t.push(vec!["label".into(), label(&s).into()]);
    t.push(vec!["length".into(), real(s.length())]);
    t.push(vec!["right_boundary".into(), format!("{:?}", s.right_boundary()).to_lowercase().into()]);
    t.push(vec!["support_end".into(), real(s.support_end().unwrap_or(f64::INFINITY))]);
    t.push(vec!["pieces".into(), Cell::Text(s.pieces().len().to_string())]);
    t.push(vec!["atoms".into(), Cell::Text(s.atoms().len().to_string())]);
    let mut report = Report::new(t);
    report.summary = serde_json::from_str(&s.to_spec_json()).expect("spec JSON parses");
    Ok(report)
}

fn lambda_grid(o: &Opts) -> Outcome<Vec<f64>> {
    if !(o.lambda_min > 0.0 && o.lambda_max >= o.lambda_min) || o.points == 0 {
        return invalid("need 0 < --lambda-min <= --lambda-max and --points >= 1");
    }
    if o.points == 1 {
        return Ok(vec![o.lambda_min]);
    }
    Ok(log_grid(o.lambda_min, o.lambda_max, o.points))
}

fn cmd_mu(o: &Opts) -> Outcome<Report> {
    let s = load_string(o)?;
    let table = SpectralFunctionTable::compute(&s, &lambda_grid(o)?, &MuOptions::default())?;
    let mut t = Table::new(TABLE_HEADER);
    for e in &table.entries {
        t.push(vec![e.lambda.into(), e.mu.into(), e.bracket_lo.into(), e.bracket_hi.into(), e.truncation_y.into()]);
    }
    Ok(Report::new(t))
}

fn cmd_cbf(o: &Opts) -> Outcome<Report> {
    let s = load_string(o)?;
    let report = cbf_check(&s, &lambda_grid(o)?, &MuOptions::default())?;
    let mut t = Table::new("property,passed,worst_violation");
    for p in &report.properties {
        t.push(vec![p.name.into(), p.passed.into(), p.worst_violation.into()]);
    }
    let mut out = Report::new(t);
    out.summary = json!({ "passed": report.passed() });
    if !report.passed() {
        out.warnings.push(format!("{} is not complete Bernstein on this grid", label(&s)));
    }
    Ok(out)
}

fn cmd_fraclap(mode: FraclapMode, o: &Opts) -> Outcome<Report> {
    let f = input_grid(o)?;
    match mode {
        FraclapMode::Pv => Ok(Report::new(grid_table(&fraclap_pv(&f, o.alpha)?))),
        FraclapMode::Spectral => Ok(Report::new(grid_table(&fraclap_multiplier(&f, o.alpha)?))),
        FraclapMode::Compare => {
            let pv = fraclap_pv(&f, o.alpha)?;
            let sp = fraclap_multiplier(&f, o.alpha)?;
            let header = if f.dim() == 1 { "i,pv,spectral,difference" } else { "i,j,pv,spectral,difference" };
            let mut t = Table::new(header);
            let (mut num, mut den) = (0.0, 0.0);
            for (i, (a, b)) in pv.samples().iter().zip(sp.samples()).enumerate() {
                let mut row: Vec<Cell> = f.indices(i).into_iter().map(Cell::from).collect();
                row.extend([Cell::Real(*a), Cell::Real(*b), Cell::Real(a - b)]);
                t.push(row);
                num += (a - b) * (a - b);
                den += b * b;
            }
            let mut r = Report::new(t);
            r.summary = json!({ "relative_l2": (num / den).sqrt() });
            Ok(r)
        }
    }
}

fn cmd_poisson(mode: PoissonMode, o: &Opts) -> Outcome<Report> {
    match mode {
        PoissonMode::Eval => {
            let mut t = Table::new("y,x,value");
            for &y in &o.y {
                for text in &o.x {
                    let x = parse_vector(text, "x")?;
                    let v = poisson_kernel(x.len(), o.alpha, y, &x)?;
                    let joined: Vec<String> = x.iter().map(|v| krein_trace::krein_solver::format_real(*v)).collect();
                    t.push(vec![y.into(), joined.join(";").into(), v.into()]);
                }
            }
            Ok(Report::new(t))
        }
        PoissonMode::Integral => {
            let mut t = Table::new("dim,alpha,y,box_integral,tail,total");
            for &y in &o.y {
                let m = poisson_mass(o.dim, o.alpha, y, o.box_l)?;
                t.push(vec![o.dim.into(), o.alpha.into(), y.into(), m.box_integral.into(), m.tail.into(), m.total().into()]);
            }
            Ok(Report::new(t))
        }
        PoissonMode::Fourier => {
            let mut t = Table::new("y,xi,value");
            for &y in &o.y {
                for (xi, v) in poisson_fourier(o.alpha, y, o.grid_n, o.box_l)? {
                    t.push(vec![y.into(), xi.into(), v.into()]);
                }
            }
            Ok(Report::new(t))
        }
    }
}

fn cmd_energy(o: &Opts) -> Outcome<Report> {
    let s = load_string(o)?;
    let f = input_grid(o)?;
    let y_max = o.y_max.unwrap_or((12.0 * f.half_width() / std::f64::consts::PI).min(s.length()));
    if !(y_max > 0.0) || o.y_points < 2 {
        return invalid("need --y-max > 0 and --y-points >= 2");
    }
    let ys: Vec<f64> = (0..=o.y_points).map(|i| y_max * i as f64 / o.y_points as f64).collect();
    let e = energy_check(&f, &s, &ys)?;
    let mut t = Table::new("form_value,extension_energy,relative_gap");
    t.push(vec![e.form_value.into(), e.extension_energy.into(), e.relative_gap().into()]);
    Ok(Report::new(t))
}

fn cmd_trace(o: &Opts) -> Outcome<Report> {
    let s = load_string(o)?;
    let xis = frequencies(o)?;
    let xi_min = xis.iter().map(|v| norm(v)).fold(f64::INFINITY, f64::min);
    let cfg = sim_config(o);
    let samples = simulate_trace(&s, &cfg, xi_min)?;
    let mut t = Table::new(TRACE_HEADER);
    let mut warnings = Vec::new();
    for xi in &xis {
        let mu = spectral_mu(&s, norm(xi).powi(2), &MuOptions::default())?.mu;
        for &level in &o.s {
            let est = samples.estimate(xi, level)?;
            let theory = (-level * mu).exp();
            warnings.extend(est.warning.clone());
            t.push(estimate_row(&label(&s), xi, level, &est, theory, o.dt));
        }
    }
    warnings.dedup();
    Ok(Report { table: t, summary: Value::Null, warnings })
}

fn estimate_row(
    name: &str,
    xi: &[f64],
    level: f64,
    est: &krein_trace::trace_sim::CFEstimate,
    theory: f64,
    dt: f64,
) -> Vec<Cell> {
    let joined: Vec<String> = xi.iter().map(|v| krein_trace::krein_solver::format_real(*v)).collect();
    vec![
        name.into(),
        joined.join(";").into(),
        level.into(),
        est.value.into(),
        est.stderr.into(),
        theory.into(),
        (est.value - theory).abs().into(),
        est.n_paths.into(),
        dt.into(),
        est.excluded_frac().into(),
    ]
}

fn cmd_hit(o: &Opts) -> Outcome<Report> {
    let s = load_string(o)?;
    let xis = frequencies(o)?;
    let xi_min = xis.iter().map(|v| norm(v)).fold(f64::INFINITY, f64::min);
    let cfg = sim_config(o);
    let mut t = Table::new(HITTING_HEADER);
    let mut warnings = Vec::new();
    for &y0 in &o.y {
        let samples = simulate_hitting(&s, &cfg, y0, xi_min)?;
        for xi in &xis {
            let est = samples.estimate(xi)?;
            let theory = bounded_solution(&s, norm(xi).powi(2), y0, &BoundedOptions::default())?;
            warnings.extend(est.warning.clone());
            t.push(estimate_row(&label(&s), xi, y0, &est, theory, o.dt));
        }
    }
    warnings.dedup();
    Ok(Report { table: t, summary: Value::Null, warnings })
}

fn cmd_bessel(o: &Opts) -> Outcome<Report> {
    let fit = bessel_subordinator_exponent(o.alpha, &sim_config(o))?;
    let mut t = Table::new("alpha,s,exponent,half_width,target,n_paths,dt,discarded,capped");
    t.push(vec![
        fit.alpha.into(),
        o.s[0].into(),
        fit.exponent.into(),
        fit.half_width.into(),
        (fit.alpha / 2.0).into(),
        o.paths.into(),
        o.dt.into(),
        fit.discarded.into(),
        fit.capped.into(),
    ]);
    let mut r = Report::new(t);
    r.summary = json!({ "u": fit.u, "laplace": fit.laplace });
    Ok(r)
}

fn cmd_walk(o: &Opts) -> Outcome<Report> {
    let cfg = WalkConfig { d: o.dim, n_steps: o.steps, n_paths: o.paths, seed: o.seed };
    let xis = frequencies(o)?;
    let mut t = Table::new(&walk_header(o.dim));
    let mut warnings = Vec::new();
    for &j in &o.j {
        let samples = simulate_hits(&cfg, j)?;
        for xi in &xis {
            let est = samples.estimate(xi)?;
            let exact = trace_cf_closed_form(o.dim, xi, j)?;
            warnings.extend(est.warning.clone());
            let mut row: Vec<Cell> = vec![o.dim.into(), j.into()];
            row.extend(xi.iter().map(|v| Cell::Real(*v)));
            row.extend([Cell::Real(exact.re), Cell::Real(est.value), Cell::Real(est.stderr)]);
            t.push(row);
        }
    }
    warnings.dedup();
    Ok(Report { table: t, summary: Value::Null, warnings })
}
