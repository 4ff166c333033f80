//! Monte Carlo for the boundary trace of a Krein string.
//!
//! The vertical coordinate is Brownian motion reflected at `0`, with the Skorokhod
//! regulator `L` as local time at the boundary. For the additive functional
//! `A_t = int a(Y_u) du` and the inverse local time `T_s`, the trace satisfies
//! `E exp(-|xi|^2 A_{T_s} / 2) = exp(-s mu(|xi|^2))`; the horizontal Brownian motion is
//! integrated out analytically, so only `Y` is simulated.
//!
//! Random numbers come from a ChaCha8 stream selected by `(seed, path)` and consumed in step
//! order, so every path is reproducible on its own and results do not depend on how paths
//! are scheduled. Everything here is `f64`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::krein_solver::format_real;
use crate::string_model::{DensityForm, KreinString};
use crate::{Error, Result};

/// `exp(-CUTOFF)` is treated as zero when deciding to stop a path early.
const CUTOFF: f64 = 27.64;

/// Stream reserved for bootstrap resampling.
const BOOTSTRAP_STREAM: u64 = u64::MAX;

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    /// Base time step, used near the boundary and near features of the string.
    pub dt: f64,
    /// Maximal simulated time per path.
    pub horizon: f64,
    pub n_paths: usize,
    pub seed: u64,
    /// Local time levels `s` at which `A_{T_s}` is recorded.
    pub s_values: Vec<f64>,
    /// Half-width of the occupation window for interior atoms; `sqrt(dt)` when `None`.
    pub atom_window: Option<f64>,
    /// Away from features the step is `(distance / step_factor)^2`, at least `dt`.
    pub step_factor: f64,
}

impl SimConfig {
    pub fn new(dt: f64, n_paths: usize, seed: u64, s_values: Vec<f64>) -> Self {
        SimConfig {
            dt,
            horizon: 1e6,
            n_paths,
            seed,
            s_values,
            atom_window: None,
            step_factor: 10.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Validation(m));
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.horizon > 0.0) {
            return bad(format!("horizon must be positive, got {}", self.horizon));
        }
        if self.dt > 1e-3 * self.horizon.min(1.0) {
            return bad(format!("dt = {} must not exceed 1e-3 * min(1, horizon)", self.dt));
        }
        if self.n_paths == 0 {
            return bad("n_paths must be positive".into());
        }
        if self.s_values.is_empty() || self.s_values.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return bad(format!("local time levels must be positive, got {:?}", self.s_values));
        }
        if self.atom_window.is_some_and(|w| !(w > 0.0)) {
            return bad("atom window must be positive".into());
        }
        if !(self.step_factor >= 1.0) {
            return bad(format!("step factor must be at least 1, got {}", self.step_factor));
        }
        Ok(())
    }

    pub fn window(&self) -> f64 {
        self.atom_window.unwrap_or(self.dt.sqrt())
    }
}

/// Random stream of one path.
pub fn path_rng(seed: u64, path: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path);
    rng
}

/// Skorokhod map of a walk started at 0: `Y_i = W_i - m_i` and `L_i = -m_i` with
/// `m_i = min(0, min_{j <= i} W_j)`, where `W` has the given increments.
pub fn regulate(increments: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let (mut w, mut m) = (0.0f64, 0.0f64);
    let mut ys = Vec::with_capacity(increments.len() + 1);
    let mut ls = Vec::with_capacity(increments.len() + 1);
    ys.push(0.0);
    ls.push(0.0);
    for &dw in increments {
        w += dw;
        m = m.min(w);
        ys.push(w - m);
        ls.push(-m);
    }
    (ys, ls)
}

/// One path of reflected Brownian motion on the fixed `dt` grid. Index 0 is time 0.
pub fn regulated_path(cfg: &SimConfig, path: u64, n_steps: usize) -> (Vec<f64>, Vec<f64>) {
    let mut rng = path_rng(cfg.seed, path);
    let sd = cfg.dt.sqrt();
    let increments: Vec<f64> = (0..n_steps).map(|_| sd * rng.sample::<f64, _>(StandardNormal)).collect();
    regulate(&increments)
}

/// `A_i` along a fixed-grid path: left-point sums of the density plus atom contributions.
///
/// An interior atom at `y0` contributes `m` times the occupation density
/// `(2 delta)^{-1} sum 1{|Y_j - y0| < delta} dt`. An atom at `0` contributes `2 m L_i`: the
/// occupation density of `Y` at `0+` is twice the regulator.
pub fn additive_functional(ys: &[f64], ls: &[f64], s: &KreinString<f64>, cfg: &SimConfig) -> Vec<f64> {
    let delta = cfg.window();
    let mut out = Vec::with_capacity(ys.len());
    let mut acc = 0.0;
    let mut interior = 0.0;
    for i in 0..ys.len() {
        let mut total = acc + interior;
        for atom in s.atoms() {
            if atom.position == 0.0 {
                total += 2.0 * atom.mass * ls[i];
            }
        }
        out.push(total);
        let y = ys[i];
        acc += s.density(y) * cfg.dt;
        for atom in s.atoms() {
            if atom.position > 0.0 && (y - atom.position).abs() < delta {
                interior += atom.mass * cfg.dt / (2.0 * delta);
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Adaptive path engine

/// Fast evaluation of the string along a path.
struct Medium {
    pieces: Vec<(f64, f64, DensityForm<f64>, f64)>,
    interior_atoms: Vec<(f64, f64)>,
    origin_atom: f64,
    /// Sorted points near which steps shrink to `dt`.
    features: Vec<f64>,
    windows: Vec<(f64, f64)>,
    delta: f64,
    /// Reflection level past the support of a natural string.
    ceiling: Option<f64>,
    /// Killing level of a finite string.
    length: Option<f64>,
}

impl Medium {
    fn new(s: &KreinString<f64>, cfg: &SimConfig) -> Self {
        let delta = cfg.window();
        let mut offset = 0.0;
        let mut pieces = Vec::new();
        for p in s.pieces() {
            pieces.push((p.left, p.right, p.form, offset));
            offset += p.form.mass(p.left, p.right);
        }
        let origin_atom = s.atoms().iter().filter(|a| a.position == 0.0).map(|a| a.mass).sum();
        let interior_atoms: Vec<(f64, f64)> = s
            .atoms()
            .iter()
            .filter(|a| a.position > 0.0)
            .map(|a| (a.position, a.mass))
            .collect();
        let windows = interior_atoms.iter().map(|&(y, _)| (y - delta, y + delta)).collect();
        let ceiling = if s.is_natural() {
            s.support_end().map(|top| {
                let atom_on_top = interior_atoms.last().is_some_and(|a| a.0 == top);
                if atom_on_top { top + delta } else { top }
            })
        } else {
            None
        };
        let length = s.length().is_finite().then_some(s.length());
        let mut features: Vec<f64> = vec![0.0];
        for p in s.pieces() {
            features.push(p.left);
            if p.right.is_finite() {
                features.push(p.right);
            }
        }
        for &(y, _) in &interior_atoms {
            features.push(y - delta);
            features.push(y + delta);
        }
        // Mirroring is the exact transition of Brownian motion reflected at the ceiling, so
        // steps need not shrink there.
        features.retain(|&f| ceiling.is_none_or(|c| f < c));
        features.extend(length);
        features.sort_by(|a, b| a.partial_cmp(b).expect("finite features"));
        features.dedup();
        Medium { pieces, interior_atoms, origin_atom, features, windows, delta, ceiling, length }
    }

    /// Absolutely continuous part of the mass of `[0, y)`.
    fn mass(&self, y: f64) -> f64 {
        let idx = self.pieces.partition_point(|p| p.0 < y);
        if idx == 0 {
            return 0.0;
        }
        let (l, r, form, offset) = self.pieces[idx - 1];
        if y >= r {
            offset + form.mass(l, r)
        } else {
            offset + form.mass(l, y)
        }
    }

    fn distance(&self, y: f64) -> f64 {
        if self.windows.iter().any(|&(lo, hi)| y > lo && y < hi) {
            return 0.0;
        }
        let idx = self.features.partition_point(|&f| f < y);
        let mut d = f64::INFINITY;
        if idx > 0 {
            d = d.min(y - self.features[idx - 1]);
        }
        if idx < self.features.len() {
            d = d.min(self.features[idx] - y);
        }
        d
    }

    fn step(&self, y: f64, cfg: &SimConfig) -> f64 {
        let d = self.distance(y) / cfg.step_factor;
        (d * d).max(cfg.dt).min(cfg.horizon)
    }

    /// Integral of the density along the straight segment from `y0` to `y1` over a time
    /// `h`; `mass0` is `self.mass(y0)`. Returns the increment and `self.mass(y1)`.
    fn segment(&self, y0: f64, mass0: f64, y1: f64, h: f64) -> (f64, f64) {
        let mass1 = self.mass(y1);
        let width = (y1 - y0).abs();
        let floor = 1e-9 * h.sqrt();
        if width > floor {
            return (h * (mass1 - mass0) / (y1 - y0), mass1);
        }
        let lo = y0.min(y1);
        (h * (self.mass(lo + floor) - self.mass(lo)) / floor, mass1)
    }

    /// Occupation-window contribution of interior atoms for a step of length `h` from `y`.
    fn atoms(&self, y: f64, h: f64) -> f64 {
        let mut total = 0.0;
        for &(pos, m) in &self.interior_atoms {
            if (y - pos).abs() < self.delta {
                total += m * h / (2.0 * self.delta);
            }
        }
        total
    }

    fn reflect_ceiling(&self, y: f64) -> f64 {
        match self.ceiling {
            Some(c) if y > c => (2.0 * c - y).max(0.0),
            _ => y,
        }
    }
}

/// Fate of one path at one local time level.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Outcome {
    /// `A` at the first step where `L` exceeds the level (or where `Y` hits 0).
    Reached(f64),
    /// `A` passed the early-stopping cap; the weight `exp(-|xi|^2 A / 2)` is negligible.
    Capped,
    /// Killed at the right end of a finite string: the weight is zero.
    Killed,
    /// The horizon ran out first; the path is excluded.
    Excluded,
}

impl Outcome {
    pub fn weight(&self, xi_sq: f64) -> Option<f64> {
        match *self {
            Outcome::Reached(a) => Some((-0.5 * xi_sq * a).exp()),
            Outcome::Capped | Outcome::Killed => Some(0.0),
            Outcome::Excluded => None,
        }
    }
}

/// Per-path outcomes, `outcomes[path][level]`.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceSamples {
    pub levels: Vec<f64>,
    pub outcomes: Vec<Vec<Outcome>>,
    /// Smallest `|xi|` for which early stopping is negligible.
    pub xi_min: f64,
}

/// Stopping value of `A`: beyond it every weight for `|xi| >= xi_min` is below `e^{-27.64}`.
fn cap_for(xi_min: f64) -> f64 {
    if xi_min > 0.0 { 2.0 * CUTOFF / (xi_min * xi_min) } else { f64::INFINITY }
}

fn trace_path(medium: &Medium, cfg: &SimConfig, levels: &[f64], cap: f64, path: u64) -> Vec<Outcome> {
    let mut out = Vec::with_capacity(levels.len());
    // Support {0}: nothing accrues away from the boundary and A = 2 m0 L exactly.
    if medium.ceiling == Some(0.0) {
        return levels.iter().map(|&s| Outcome::Reached(2.0 * medium.origin_atom * s)).collect();
    }
    let mut rng = path_rng(cfg.seed, path);
    let (mut y, mut l, mut a, mut t) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut mass = 0.0;
    while out.len() < levels.len() {
        if a >= cap {
            out.resize(levels.len(), Outcome::Capped);
            break;
        }
        if t >= cfg.horizon {
            out.resize(levels.len(), Outcome::Excluded);
            break;
        }
        let h = medium.step(y, cfg);
        let z: f64 = rng.sample(StandardNormal);
        let mut next = y + h.sqrt() * z;
        let mut dl = 0.0;
        if next < 0.0 {
            dl = -next;
            next = 0.0;
        }
        next = medium.reflect_ceiling(next);
        if medium.length.is_some_and(|r| next >= r) {
            out.resize(levels.len(), Outcome::Killed);
            break;
        }
        let (da, m1) = medium.segment(y, mass, next, h);
        a += da + medium.atoms(y, h) + 2.0 * medium.origin_atom * dl;
        mass = m1;
        l += dl;
        t += h;
        y = next;
        while out.len() < levels.len() && l > levels[out.len()] {
            out.push(Outcome::Reached(a));
        }
    }
    out
}

fn hitting_path(medium: &Medium, cfg: &SimConfig, y0: f64, cap: f64, path: u64) -> Outcome {
    let mut rng = path_rng(cfg.seed, path);
    let mut y = medium.ceiling.map_or(y0, |c| y0.min(c));
    let (mut a, mut t) = (0.0f64, 0.0f64);
    let mut mass = medium.mass(y);
    if y <= 0.0 {
        return Outcome::Reached(0.0);
    }
    loop {
        if a >= cap {
            return Outcome::Capped;
        }
        if t >= cfg.horizon {
            return Outcome::Excluded;
        }
        let h = medium.step(y, cfg);
        let z: f64 = rng.sample(StandardNormal);
        let next = y + h.sqrt() * z;
        if next <= 0.0 {
            // Straight-line crossing: only the part of the step above 0 counts.
            let frac = y / (y - next);
            let (da, _) = medium.segment(y, mass, 0.0, h * frac);
            return Outcome::Reached(a + da + medium.atoms(y, h * frac));
        }
        let next = medium.reflect_ceiling(next);
        if medium.length.is_some_and(|r| next >= r) {
            return Outcome::Killed;
        }
        let (da, m1) = medium.segment(y, mass, next, h);
        a += da + medium.atoms(y, h);
        mass = m1;
        t += h;
        y = next;
    }
}

/// Simulates `cfg.n_paths` paths up to the largest level in `cfg.s_values` and records
/// `A_{T_s}` at every level. Paths stop early once all weights with `|xi| >= xi_min` are
/// negligible.
pub fn simulate_trace(s: &KreinString<f64>, cfg: &SimConfig, xi_min: f64) -> Result<TraceSamples> {
    cfg.validate()?;
    let mut levels = cfg.s_values.clone();
    levels.sort_by(|a, b| a.partial_cmp(b).expect("finite levels"));
    levels.dedup();
    let medium = Medium::new(s, cfg);
    let cap = cap_for(xi_min);
    let outcomes = (0..cfg.n_paths as u64)
        .into_par_iter()
        .map(|p| trace_path(&medium, cfg, &levels, cap, p))
        .collect();
    Ok(TraceSamples { levels, outcomes, xi_min })
}

#[derive(Clone, Debug, PartialEq)]
pub struct CFEstimate {
    pub xi: Vec<f64>,
    /// Local time level, or start height for hitting estimates.
    pub s: f64,
    pub value: f64,
    pub stderr: f64,
    pub n_effective: usize,
    pub n_paths: usize,
    pub excluded: usize,
    pub killed: usize,
    pub warning: Option<String>,
}

impl CFEstimate {
    pub fn excluded_frac(&self) -> f64 {
        self.excluded as f64 / self.n_paths as f64
    }

    fn from_outcomes<'a>(xi: &[f64], s: f64, outcomes: impl Iterator<Item = &'a Outcome>) -> Result<Self> {
        let xi_sq: f64 = xi.iter().map(|v| v * v).sum();
        let (mut n, mut n_paths, mut excluded, mut killed) = (0usize, 0usize, 0usize, 0usize);
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        for o in outcomes {
            n_paths += 1;
            if *o == Outcome::Killed {
                killed += 1;
            }
            match o.weight(xi_sq) {
                Some(w) => {
                    n += 1;
                    sum += w;
                    sum_sq += w * w;
                }
                None => excluded += 1,
            }
        }
        if n == 0 {
            return Err(Error::Simulation("no path contributed to the estimate".into()));
        }
        let mean = sum / n as f64;
        let var = if n > 1 { ((sum_sq - n as f64 * mean * mean) / (n as f64 - 1.0)).max(0.0) } else { 0.0 };
        let frac = excluded as f64 / n_paths as f64;
        let warning = (frac > 0.01).then(|| format!("{:.2}% of paths excluded at the horizon", 100.0 * frac));
        Ok(CFEstimate {
            xi: xi.to_vec(),
            s,
            value: mean,
            stderr: (var / n as f64).sqrt(),
            n_effective: n,
            n_paths,
            excluded,
            killed,
            warning,
        })
    }
}

impl TraceSamples {
    /// Estimate of `exp(-level mu(|xi|^2))`.
    pub fn estimate(&self, xi: &[f64], level: f64) -> Result<CFEstimate> {
        let k = self
            .levels
            .iter()
            .position(|&s| s == level)
            .ok_or_else(|| Error::Validation(format!("level {level} was not simulated")))?;
        let norm = xi.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < self.xi_min {
            return Err(Error::Validation(format!(
                "|xi| = {norm} is below the early-stopping frequency {}",
                self.xi_min
            )));
        }
        CFEstimate::from_outcomes(xi, level, self.outcomes.iter().map(|o| &o[k]))
    }
}

fn xi_norm(xi: &[f64]) -> Result<f64> {
    if xi.is_empty() || xi.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation(format!("invalid frequency {xi:?}")));
    }
    Ok(xi.iter().map(|v| v * v).sum::<f64>().sqrt())
}

/// Monte Carlo estimate of `E exp(-|xi|^2 A_{T_s} / 2)`, which equals `exp(-s mu(|xi|^2))`.
pub fn cf_trace_estimate(s: &KreinString<f64>, xi: &[f64], level: f64, cfg: &SimConfig) -> Result<CFEstimate> {
    if !cfg.s_values.contains(&level) {
        return Err(Error::Validation(format!("level {level} is not among the configured levels")));
    }
    let samples = simulate_trace(s, cfg, xi_norm(xi)?)?;
    samples.estimate(xi, level)
}

/// Outcomes of paths started at `y0` and stopped when `Y` first hits 0.
#[derive(Clone, Debug, PartialEq)]
pub struct HittingSamples {
    pub y0: f64,
    pub outcomes: Vec<Outcome>,
    pub xi_min: f64,
}

impl HittingSamples {
    /// Estimate of the bounded solution `phi(|xi|^2, y0)`.
    pub fn estimate(&self, xi: &[f64]) -> Result<CFEstimate> {
        let norm = xi_norm(xi)?;
        if norm < self.xi_min {
            return Err(Error::Validation(format!(
                "|xi| = {norm} is below the early-stopping frequency {}",
                self.xi_min
            )));
        }
        CFEstimate::from_outcomes(xi, self.y0, self.outcomes.iter())
    }
}

/// Simulates paths from `y0` without reflection at 0 until they hit 0 and records
/// `A_{tau_0}`. Paths killed at a finite right end contribute zero.
pub fn simulate_hitting(s: &KreinString<f64>, cfg: &SimConfig, y0: f64, xi_min: f64) -> Result<HittingSamples> {
    cfg.validate()?;
    if !(y0 > 0.0) || y0 > s.length() || y0.is_infinite() {
        return Err(Error::Validation(format!("start height must lie in (0, R], got {y0}")));
    }
    let medium = Medium::new(s, cfg);
    let cap = cap_for(xi_min);
    let outcomes: Vec<Outcome> = if y0 == s.length() {
        vec![Outcome::Killed; cfg.n_paths]
    } else {
        (0..cfg.n_paths as u64)
            .into_par_iter()
            .map(|p| hitting_path(&medium, cfg, y0, cap, p))
            .collect()
    };
    Ok(HittingSamples { y0, outcomes, xi_min })
}

/// Monte Carlo estimate of `E_{y0} exp(-|xi|^2 A_{tau_0} / 2)`, which equals the bounded
/// solution `phi(|xi|^2, y0)`.
pub fn cf_hitting_estimate(s: &KreinString<f64>, xi: &[f64], y0: f64, cfg: &SimConfig) -> Result<CFEstimate> {
    simulate_hitting(s, cfg, y0, xi_norm(xi)?)?.estimate(xi)
}

/// Compares the regulator with the occupation estimate `delta^{-1} |{u <= t : Y_u < delta}|`
/// of local time. For reflected Brownian motion the ratio tends to 2.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocalTimeDiagnostic {
    pub regulator: f64,
    pub occupation: f64,
    pub ratio: f64,
}

pub fn local_time_diagnostic(cfg: &SimConfig, t: f64, delta: f64) -> Result<LocalTimeDiagnostic> {
    cfg.validate()?;
    let n_steps = (t / cfg.dt).round() as usize;
    let sums: Vec<(f64, f64)> = (0..cfg.n_paths as u64)
        .into_par_iter()
        .map(|p| {
            let (ys, ls) = regulated_path(cfg, p, n_steps);
            let occ = ys[..n_steps].iter().filter(|&&y| y < delta).count() as f64 * cfg.dt / delta;
            (ls[n_steps], occ)
        })
        .collect();
    let n = sums.len() as f64;
    let regulator = sums.iter().map(|v| v.0).sum::<f64>() / n;
    let occupation = sums.iter().map(|v| v.1).sum::<f64>() / n;
    Ok(LocalTimeDiagnostic { regulator, occupation, ratio: occupation / regulator })
}

// ---------------------------------------------------------------------------
// Bessel process and the stable subordinator

#[derive(Clone, Debug, PartialEq)]
pub struct BesselFit {
    pub alpha: f64,
    /// Fitted slope of `log(-log E e^{-u T_s})` against `log u`; the target is `alpha / 2`.
    pub exponent: f64,
    /// Bootstrap half-width (two standard deviations).
    pub half_width: f64,
    pub u: Vec<f64>,
    pub laplace: Vec<f64>,
    pub discarded: usize,
    pub capped: usize,
}

/// Grid of Laplace variables used by [`bessel_subordinator_exponent`].
pub const BESSEL_U_MIN: f64 = 0.5;
pub const BESSEL_U_MAX: f64 = 8.0;
const BESSEL_U_POINTS: usize = 9;
const BOOTSTRAP_ROUNDS: usize = 200;

/// Euler scheme for `dY = dW + (1 - alpha) / (2 Y) dt`, reflected at 0, with local time
/// `delta^{-(2 - alpha)}` times the occupation of `[0, delta)`, `delta = sqrt(dt)`. Returns
/// `T_s` (infinite past the time cap), or `None` if the path left the finite numbers.
fn bessel_path(alpha: f64, cfg: &SimConfig, level: f64, t_cap: f64, path: u64) -> Option<f64> {
    let mut rng = path_rng(cfg.seed, path);
    let delta = cfg.dt.sqrt();
    let floor = delta / 10.0;
    let weight = delta.powf(-(2.0 - alpha));
    let drift = 0.5 * (1.0 - alpha);
    let (mut y, mut t, mut local) = (0.0f64, 0.0f64, 0.0f64);
    loop {
        let d = y / cfg.step_factor;
        let h = (d * d).max(cfg.dt);
        let z: f64 = rng.sample(StandardNormal);
        if y < delta {
            local += weight * h;
        }
        y = (y + drift / y.max(floor) * h + h.sqrt() * z).abs();
        t += h;
        if !y.is_finite() {
            return None;
        }
        if local > level {
            return Some(t);
        }
        if t > t_cap {
            return Some(f64::INFINITY);
        }
    }
}

fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

fn laplace_fit(times: &[f64], us: &[f64]) -> (Vec<f64>, f64) {
    let n = times.len() as f64;
    let laplace: Vec<f64> = us
        .iter()
        .map(|&u| times.iter().map(|&t| (-u * t).exp()).sum::<f64>() / n)
        .collect();
    let xs: Vec<f64> = us.iter().map(|u| u.ln()).collect();
    let ys: Vec<f64> = laplace.iter().map(|v| (-v.ln()).ln()).collect();
    let slope = least_squares_slope(&xs, &ys);
    (laplace, slope)
}

/// Exponent of the inverse local time of the Bessel process of dimension `2 - alpha`,
/// fitted from `E e^{-u T_s}` for `u` in `[0.5, 8]` at `s = cfg.s_values[0]`.
pub fn bessel_subordinator_exponent(alpha: f64, cfg: &SimConfig) -> Result<BesselFit> {
    cfg.validate()?;
    if !(alpha > 0.0 && alpha < 2.0) {
        return Err(Error::Domain(format!("alpha must lie in (0, 2), got {alpha}")));
    }
    let level = cfg.s_values[0];
    let t_cap = 25.0 / BESSEL_U_MIN;
    let raw: Vec<Option<f64>> = (0..cfg.n_paths as u64)
        .into_par_iter()
        .map(|p| bessel_path(alpha, cfg, level, t_cap, p))
        .collect();
    let discarded = raw.iter().filter(|t| t.is_none()).count();
    if discarded as f64 > 0.05 * cfg.n_paths as f64 {
        return Err(Error::Simulation(format!("{discarded} of {} Bessel paths diverged", cfg.n_paths)));
    }
    let times: Vec<f64> = raw.into_iter().flatten().collect();
    let capped = times.iter().filter(|t| t.is_infinite()).count();
    let ratio = (BESSEL_U_MAX / BESSEL_U_MIN).powf(1.0 / (BESSEL_U_POINTS - 1) as f64);
    let us: Vec<f64> = (0..BESSEL_U_POINTS).map(|k| BESSEL_U_MIN * ratio.powi(k as i32)).collect();
    let (laplace, exponent) = laplace_fit(&times, &us);
    if laplace.iter().any(|&v| !(v > 0.0 && v < 1.0)) {
        return Err(Error::Simulation(format!(
            "Laplace transform estimates {laplace:?} leave (0, 1); adjust the local time level"
        )));
    }
    let mut rng = path_rng(cfg.seed, BOOTSTRAP_STREAM);
    let mut slopes = Vec::with_capacity(BOOTSTRAP_ROUNDS);
    let mut resample = vec![0.0; times.len()];
    for _ in 0..BOOTSTRAP_ROUNDS {
        for r in resample.iter_mut() {
            *r = times[rng.random_range(0..times.len())];
        }
        let (lp, slope) = laplace_fit(&resample, &us);
        if lp.iter().all(|&v| v > 0.0 && v < 1.0) {
            slopes.push(slope);
        }
    }
    let m = slopes.len() as f64;
    let mean = slopes.iter().sum::<f64>() / m;
    let sd = (slopes.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (m - 1.0)).sqrt();
    Ok(BesselFit { alpha, exponent, half_width: 2.0 * sd, u: us, laplace, discarded, capped })
}

// ---------------------------------------------------------------------------
// Output

pub const TRACE_HEADER: &str = "string,xi,s,estimate,stderr,theory,abs_err,n_paths,dt,excluded_frac";

/// Hitting estimates use the same row layout with the start height in place of `s`.
pub const HITTING_HEADER: &str = "string,xi,y0,estimate,stderr,theory,abs_err,n_paths,dt,excluded_frac";

/// One CSV row in the [`TRACE_HEADER`] layout. Frequency vectors are joined with `;`.
pub fn trace_row(label: &str, est: &CFEstimate, theory: f64, dt: f64) -> String {
    let xi: Vec<String> = est.xi.iter().map(|v| format_real(*v)).collect();
    format!(
        "{},{},{},{},{},{},{},{},{},{}",
        csv_field(label),
        xi.join(";"),
        format_real(est.s),
        format_real(est.value),
        format_real(est.stderr),
        format_real(theory),
        format_real((est.value - theory).abs()),
        est.n_paths,
        format_real(dt),
        format_real(est.excluded_frac())
    )
}

/// Quotes a CSV field when it contains a separator or a quote.
pub fn csv_field(text: &str) -> String {
    if text.contains([',', '"', '\n']) {
        format!("\"{}\"", text.replace('"', "\"\""))
    } else {
        text.to_string()
    }
}
