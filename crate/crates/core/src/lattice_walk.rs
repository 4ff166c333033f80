//! Boundary trace of the simple random walk on `Z^d x {0, 1, ...}`.
//!
//! The walk is reflected by forcing an up-jump whenever `Y = 0`, so watching `X` only at the
//! vertical jumps gives a walk with independent coordinates. Its horizontal increment between
//! vertical jumps has characteristic function `phi(xi) = 1 / (d + 1 - d psi(xi))` with
//! `psi(xi) = (1/d) sum_j cos(xi_j)`. Started at height `j`, the characteristic function
//! of `X` at the first visit to `0` is `f_j = r^j`, where `r` is the root of
//! `phi r^2 - 2 r + phi = 0` with `|r| <= 1`.

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;

use crate::krein_solver::format_real;
use crate::trace_sim::path_rng;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WalkConfig {
    /// Horizontal dimension.
    pub d: usize,
    /// Steps after which a path that has not reached `Y = 0` is excluded.
    pub n_steps: u64,
    pub n_paths: usize,
    pub seed: u64,
}

impl WalkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::Validation("walk dimension must be at least 1".into()));
        }
        if self.n_steps == 0 || self.n_paths == 0 {
            return Err(Error::Validation("step and path counts must be positive".into()));
        }
        Ok(())
    }
}

fn check_xi(d: usize, xi: &[f64]) -> Result<()> {
    if d == 0 || xi.len() != d {
        return Err(Error::Validation(format!("expected a frequency of dimension {d}, got {xi:?}")));
    }
    if xi.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation(format!("frequency must be finite, got {xi:?}")));
    }
    Ok(())
}

/// Characteristic function of one horizontal step, `(1/d) sum_j cos(xi_j)`.
pub fn horizontal_cf(xi: &[f64]) -> f64 {
    xi.iter().map(|v| v.cos()).sum::<f64>() / xi.len() as f64
}

/// `E exp(-i xi X(S_1))` for the first vertical jump time `S_1`, summed in closed form.
pub fn step_cf_oracle(d: usize, xi: &[f64]) -> Result<Complex64> {
    check_xi(d, xi)?;
    let d = d as f64;
    Ok(Complex64::new(1.0 / (d + 1.0 - d * horizontal_cf(xi)), 0.0))
}

/// The same quantity by exact enumeration of the law of `(X(S_1), S_1)` up to `depth`
/// horizontal steps. The neglected mass is `(d / (d + 1))^(depth + 1)`.
pub fn step_cf_enumerate(d: usize, xi: &[f64], depth: usize) -> Result<Complex64> {
    check_xi(d, xi)?;
    // Law of X after n horizontal steps on the box [-depth, depth]^d, flattened.
    let side = 2 * depth + 1;
    let size = side.pow(d as u32);
    let mut law = vec![0.0f64; size];
    law[(0..d).fold(0, |acc, _| acc * side + depth)] = 1.0;
    let strides: Vec<usize> = (0..d).map(|k| side.pow((d - 1 - k) as u32)).collect();
    let phase = |mut idx: usize| {
        let mut x = 0.0;
        for (k, &stride) in strides.iter().enumerate() {
            let coord = (idx / stride) as f64 - depth as f64;
            idx %= stride;
            x += xi[k] * coord;
        }
        Complex64::new(x.cos(), -x.sin())
    };
    let p_vertical = 1.0 / (d as f64 + 1.0);
    let p_move = 1.0 / (2.0 * (d as f64 + 1.0));
    let mut total = Complex64::new(0.0, 0.0);
    for n in 0..=depth {
        for (idx, &p) in law.iter().enumerate() {
            if p != 0.0 {
                total += phase(idx) * (p * p_vertical);
            }
        }
        if n == depth {
            break;
        }
        let mut next = vec![0.0f64; size];
        for (idx, &p) in law.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            for &stride in &strides {
                next[idx + stride] += p * p_move;
                next[idx - stride] += p * p_move;
            }
        }
        law = next;
    }
    Ok(total)
}

/// Root of `phi r^2 - 2 r + phi = 0` with `|r| <= 1`; `0` when `phi = 0`.
pub fn bounded_root(phi: Complex64) -> Complex64 {
    if phi == Complex64::new(0.0, 0.0) {
        return phi;
    }
    let disc = (Complex64::new(1.0, 0.0) - phi * phi).sqrt();
    let minus = (1.0 - disc) / phi;
    let plus = (1.0 + disc) / phi;
    if minus.norm() <= plus.norm() { minus } else { plus }
}

/// `E exp(-i xi X(T_0))` for the walk started at `(0, j)`.
pub fn trace_cf_closed_form(d: usize, xi: &[f64], j: u32) -> Result<Complex64> {
    let phi = step_cf_oracle(d, xi)?;
    if j == 0 {
        return Ok(Complex64::new(1.0, 0.0));
    }
    Ok(bounded_root(phi).powu(j))
}

/// Horizontal positions at the first visit to `Y = 0`; `None` for paths still away from the
/// boundary after `n_steps`.
#[derive(Clone, Debug, PartialEq)]
pub struct WalkSamples {
    pub d: usize,
    pub j: u32,
    pub hits: Vec<Option<Vec<i64>>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WalkEstimate {
    pub xi: Vec<f64>,
    pub j: u32,
    /// Mean of `cos(xi . X)` over returning paths.
    pub value: f64,
    pub stderr: f64,
    /// Mean of `-sin(xi . X)`, zero up to noise by symmetry.
    pub imag: f64,
    pub imag_stderr: f64,
    pub n_effective: usize,
    pub n_paths: usize,
    pub excluded: usize,
    pub warning: Option<String>,
}

fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

impl WalkSamples {
    pub fn estimate(&self, xi: &[f64]) -> Result<WalkEstimate> {
        check_xi(self.d, xi)?;
        let phases: Vec<f64> = self
            .hits
            .iter()
            .flatten()
            .map(|x| x.iter().zip(xi).map(|(&k, v)| k as f64 * v).sum())
            .collect();
        if phases.is_empty() {
            return Err(Error::Simulation("no walk reached the boundary".into()));
        }
        let re: Vec<f64> = phases.iter().map(|p| p.cos()).collect();
        let im: Vec<f64> = phases.iter().map(|p| -p.sin()).collect();
        let (value, stderr) = mean_and_stderr(&re);
        let (imag, imag_stderr) = mean_and_stderr(&im);
        let excluded = self.hits.len() - phases.len();
        let warning = (excluded as f64 > 0.01 * self.hits.len() as f64).then(|| {
            format!("{excluded} of {} walks did not reach the boundary", self.hits.len())
        });
        Ok(WalkEstimate {
            xi: xi.to_vec(),
            j: self.j,
            value,
            stderr,
            imag,
            imag_stderr,
            n_effective: phases.len(),
            n_paths: self.hits.len(),
            excluded,
            warning,
        })
    }
}

fn walk_path(cfg: &WalkConfig, j: u32, path: u64) -> Option<Vec<i64>> {
    let mut x = vec![0i64; cfg.d];
    let mut y = j as u64;
    if y == 0 {
        return Some(x);
    }
    let mut rng = path_rng(cfg.seed, path);
    let moves = 2 * (cfg.d + 1);
    for _ in 0..cfg.n_steps {
        let m = rng.random_range(0..moves);
        let (axis, up) = (m / 2, m % 2 == 0);
        if axis == cfg.d {
            if up {
                y += 1;
            } else {
                y -= 1;
                if y == 0 {
                    return Some(x);
                }
            }
        } else if up {
            x[axis] += 1;
        } else {
            x[axis] -= 1;
        }
    }
    None
}

/// Runs the walk from `(0, j)` until `Y` first hits `0`.
pub fn simulate_hits(cfg: &WalkConfig, j: u32) -> Result<WalkSamples> {
    cfg.validate()?;
    let hits = (0..cfg.n_paths as u64)
        .into_par_iter()
        .map(|p| walk_path(cfg, j, p))
        .collect();
    Ok(WalkSamples { d: cfg.d, j, hits })
}

/// Monte Carlo estimate of `E exp(-i xi X(T_0))` from height `j`.
pub fn simulate_trace(cfg: &WalkConfig, xi: &[f64], j: u32) -> Result<WalkEstimate> {
    check_xi(cfg.d, xi)?;
    simulate_hits(cfg, j)?.estimate(xi)
}

/// CSV header for dimension `d`: `d,j,xi_1,...,xi_d,closed_form_re,estimate,stderr`.
pub fn walk_header(d: usize) -> String {
    let mut cols = vec!["d".to_string(), "j".to_string()];
    cols.extend((1..=d).map(|k| format!("xi_{k}")));
    cols.extend(["closed_form_re", "estimate", "stderr"].map(String::from));
    cols.join(",")
}

pub fn walk_row(d: usize, est: &WalkEstimate, closed_form: Complex64) -> String {
    let mut cols = vec![d.to_string(), est.j.to_string()];
    cols.extend(est.xi.iter().map(|v| format_real(*v)));
    cols.push(format_real(closed_form.re));
    cols.push(format_real(est.value));
    cols.push(format_real(est.stderr));
    cols.join(",")
}
