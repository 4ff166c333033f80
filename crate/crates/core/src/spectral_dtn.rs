//! Operators on periodic grids over the box `[-L, L)^d`, `d` in {1, 2}.
//!
//! Every operator here is a radial Fourier multiplier `m(|xi|^2)` on the grid, except
//! [`fraclap_pv`], which evaluates the singular integral directly in physical space.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex;
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::krein_solver::{bounded_solution_profile, format_real, parse_real, spectral_mu, BoundedOptions, MuOptions};
use crate::quadrature::integrate;
use crate::special::{
    fraclap_constant, hurwitz_zeta, poisson_constant, riemann_zeta, square_lattice_zeta,
};
use crate::string_model::KreinString;
use crate::{Error, Real, Result};

const MAGIC: &[u8; 8] = b"KTGRID01";

/// Real samples on the periodic grid `x_j = -L + j h`, `h = 2L / N`, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction<T> {
    dim: usize,
    half_width: T,
    n: usize,
    samples: Vec<T>,
}

impl<T: Real> GridFunction<T> {
    pub fn new(dim: usize, half_width: T, n: usize, samples: Vec<T>) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::Validation(format!("grid dimension must be 1 or 2, got {dim}")));
        }
        if n < 8 || !n.is_power_of_two() {
            return Err(Error::Validation(format!("samples per axis must be a power of two >= 8, got {n}")));
        }
        if !(half_width > T::zero()) || half_width.is_infinite() {
            return Err(Error::Validation(format!("box half-width must be positive and finite, got {half_width}")));
        }
        if samples.len() != n.pow(dim as u32) {
            return Err(Error::Validation(format!(
                "expected {} samples, got {}",
                n.pow(dim as u32),
                samples.len()
            )));
        }
        Ok(GridFunction { dim, half_width, n, samples })
    }

    /// Samples `f` at the grid points.
    pub fn from_fn(dim: usize, half_width: T, n: usize, f: impl Fn(&[T]) -> T) -> Result<Self> {
        let probe = GridFunction::new(dim, half_width, n, vec![T::zero(); n.pow(dim as u32)])?;
        let samples = (0..probe.len()).map(|i| f(&probe.point(i))).collect();
        Ok(GridFunction { samples, ..probe })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn half_width(&self) -> T {
        self.half_width
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn samples(&self) -> &[T] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn spacing(&self) -> T {
        T::lit(2.0) * self.half_width / T::lit(self.n as f64)
    }

    /// Volume of one grid cell.
    pub fn cell_volume(&self) -> T {
        self.spacing().powi(self.dim as i32)
    }

    /// Per-axis indices of the flat index `i`.
    pub fn indices(&self, i: usize) -> Vec<usize> {
        if self.dim == 1 {
            vec![i]
        } else {
            vec![i / self.n, i % self.n]
        }
    }

    /// Coordinates of the flat index `i`.
    pub fn point(&self, i: usize) -> Vec<T> {
        let h = self.spacing();
        self.indices(i)
            .into_iter()
            .map(|j| -self.half_width + h * T::lit(j as f64))
            .collect()
    }

    /// Integer wave vector `k` of the flat Fourier index `i`; the frequency is `pi k / L`.
    pub fn wave_vector(&self, i: usize) -> Vec<i64> {
        let n = self.n as i64;
        self.indices(i)
            .into_iter()
            .map(|j| {
                let j = j as i64;
                if j < n / 2 { j } else { j - n }
            })
            .collect()
    }

    /// `|xi|^2` of the flat Fourier index `i`.
    pub fn frequency_sq(&self, i: usize) -> T {
        let k2: i64 = self.wave_vector(i).iter().map(|k| k * k).sum();
        let unit = T::PI() / self.half_width;
        unit * unit * T::lit(k2 as f64)
    }

    /// Discrete `L^2` norm `(h^d sum |f|^2)^{1/2}`.
    pub fn l2_norm(&self) -> T {
        (self.samples.iter().map(|&v| v * v).sum::<T>() * self.cell_volume()).sqrt()
    }

    pub fn max_abs(&self) -> T {
        self.samples.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn with_samples(&self, samples: Vec<T>) -> Self {
        assert_eq!(samples.len(), self.samples.len());
        GridFunction { samples, ..self.clone() }
    }

    /// CSV with a `# d=.. N=.. L=..` comment line, a header and one row per sample.
    pub fn to_csv(&self) -> String {
        let mut out = format!(
            "# d={} N={} L={}\n",
            self.dim,
            self.n,
            format_real(self.half_width.as_f64())
        );
        out.push_str(if self.dim == 1 { "i,value\n" } else { "i,j,value\n" });
        for (i, v) in self.samples.iter().enumerate() {
            for j in self.indices(i) {
                out.push_str(&j.to_string());
                out.push(',');
            }
            out.push_str(&format_real(v.as_f64()));
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let meta = lines
            .next()
            .and_then(|l| l.strip_prefix('#'))
            .ok_or_else(|| Error::parse("grid", "missing '# d=.. N=.. L=..' line"))?;
        let (mut dim, mut n, mut half_width) = (None, None, None);
        for token in meta.split_whitespace() {
            match token.split_once('=') {
                Some(("d", v)) => dim = v.parse::<usize>().ok(),
                Some(("N", v)) => n = v.parse::<usize>().ok(),
                Some(("L", v)) => half_width = parse_real(v),
                _ => return Err(Error::parse("grid", format!("unexpected metadata token {token:?}"))),
            }
        }
        let dim = dim.ok_or_else(|| Error::parse("d", "missing or invalid"))?;
        let n = n.ok_or_else(|| Error::parse("N", "missing or invalid"))?;
        let half_width = half_width.ok_or_else(|| Error::parse("L", "missing or invalid"))?;
        let header = lines.next().ok_or_else(|| Error::parse("grid", "missing header"))?;
        let expected = if dim == 1 { "i,value" } else { "i,j,value" };
        if header.trim() != expected {
            return Err(Error::parse("header", format!("expected {expected:?}, got {header:?}")));
        }
        let total = n.checked_pow(dim as u32).ok_or_else(|| Error::parse("N", "too large"))?;
        let mut samples = vec![None; total];
        for (row, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != dim + 1 {
                return Err(Error::parse(format!("row {row}"), format!("expected {} fields", dim + 1)));
            }
            let mut flat = 0usize;
            for f in &fields[..dim] {
                let j: usize = f
                    .parse()
                    .ok()
                    .filter(|&j| j < n)
                    .ok_or_else(|| Error::parse(format!("row {row}"), format!("bad index {f:?}")))?;
                flat = flat * n + j;
            }
            let v = parse_real(fields[dim])
                .ok_or_else(|| Error::parse(format!("row {row}.value"), format!("not a number: {:?}", fields[dim])))?;
            if samples[flat].replace(T::lit(v)).is_some() {
                return Err(Error::parse(format!("row {row}"), "duplicate index"));
            }
        }
        let samples = samples
            .into_iter()
            .collect::<Option<Vec<T>>>()
            .ok_or_else(|| Error::parse("grid", "missing samples"))?;
        GridFunction::new(dim, T::lit(half_width), n, samples)
    }

    /// Raw little-endian layout: magic, `d` and `N` as `u64`, `L` as `f64`, then the samples
    /// as `f64`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(32 + 8 * self.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.dim as u64).to_le_bytes());
        out.extend_from_slice(&(self.n as u64).to_le_bytes());
        out.extend_from_slice(&self.half_width.as_f64().to_le_bytes());
        for v in &self.samples {
            out.extend_from_slice(&v.as_f64().to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 32 || &bytes[..8] != MAGIC {
            return Err(Error::parse("grid", "not a grid file"));
        }
        let word = |k: usize| <[u8; 8]>::try_from(&bytes[8 * k..8 * k + 8]).expect("eight bytes");
        let dim = u64::from_le_bytes(word(1)) as usize;
        let n = u64::from_le_bytes(word(2)) as usize;
        let half_width = f64::from_le_bytes(word(3));
        let total = if dim <= 2 { n.checked_pow(dim as u32) } else { None };
        if total.is_none_or(|t| bytes.len() != 32 + 8 * t) {
            return Err(Error::parse("grid", "payload length does not match the header"));
        }
        let samples = bytes[32..]
            .chunks_exact(8)
            .map(|c| T::lit(f64::from_le_bytes(c.try_into().expect("eight bytes"))))
            .collect();
        GridFunction::new(dim, T::lit(half_width), n, samples)
    }
}

// ---------------------------------------------------------------------------
// Transforms

fn fft<T: Real>(data: &mut [Complex<T>], dim: usize, n: usize, inverse: bool) {
    let mut planner = FftPlanner::<T>::new();
    let plan = if inverse { planner.plan_fft_inverse(n) } else { planner.plan_fft_forward(n) };
    plan.process(data);
    if dim == 2 {
        let mut t = vec![Complex::new(T::zero(), T::zero()); data.len()];
        for i in 0..n {
            for j in 0..n {
                t[j * n + i] = data[i * n + j];
            }
        }
        plan.process(&mut t);
        for i in 0..n {
            for j in 0..n {
                data[i * n + j] = t[j * n + i];
            }
        }
    }
}

/// Unnormalised DFT of the samples.
pub fn spectrum<T: Real>(f: &GridFunction<T>) -> Vec<Complex<T>> {
    let mut data: Vec<Complex<T>> = f.samples.iter().map(|&v| Complex::new(v, T::zero())).collect();
    fft(&mut data, f.dim, f.n, false);
    data
}

/// Inverse of [`spectrum`], keeping the real part.
fn synthesize<T: Real>(f: &GridFunction<T>, mut data: Vec<Complex<T>>) -> GridFunction<T> {
    fft(&mut data, f.dim, f.n, true);
    let scale = T::one() / T::lit(f.len() as f64);
    f.with_samples(data.into_iter().map(|c| c.re * scale).collect())
}

fn check_finite<T: Real>(f: &GridFunction<T>) -> Result<()> {
    if f.samples.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Domain("grid function has non-finite samples".into()))
    }
}

/// Spectral coefficients below this fraction of the largest are treated as round-off.
const ROUNDING_FLOOR: f64 = 1e-14;

/// Applies the radial multiplier `m(|xi|^2)`, evaluated once per distinct `|k|^2`. Modes
/// at round-off level are dropped without evaluating `m`.
fn radial_multiplier<T: Real>(
    f: &GridFunction<T>,
    m: impl Fn(T) -> Result<T> + Sync,
) -> Result<GridFunction<T>> {
    check_finite(f)?;
    let mut data = spectrum(f);
    let peak = data.iter().fold(T::zero(), |a, c| a.max(c.norm()));
    let floor = peak * T::lit(ROUNDING_FLOOR);
    let mut groups: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for (i, c) in data.iter().enumerate() {
        let k2: i64 = f.wave_vector(i).iter().map(|k| k * k).sum();
        let entry = groups.entry(k2).or_default();
        if c.norm() > floor {
            entry.push(i);
        }
    }
    let active: Vec<(i64, Vec<usize>)> = groups.into_iter().filter(|(_, v)| !v.is_empty()).collect();
    let unit = T::PI() / f.half_width;
    let values: Vec<T> = active
        .par_iter()
        .map(|(k2, _)| m(unit * unit * T::lit(*k2 as f64)))
        .collect::<Result<_>>()?;
    let mut out = vec![Complex::new(T::zero(), T::zero()); data.len()];
    for ((_, modes), v) in active.iter().zip(values) {
        for &i in modes {
            out[i] = data[i] * v;
        }
    }
    data.clear();
    Ok(synthesize(f, out))
}

// ---------------------------------------------------------------------------
// Extension and Dirichlet-to-Neumann operator

/// `u(., y)` solving the string's extension problem with boundary values `f`:
/// `F u(xi, y) = phi(|xi|^2, y) F f(xi)`.
pub fn harmonic_extend<T: Real>(f: &GridFunction<T>, s: &KreinString<T>, y: T) -> Result<GridFunction<T>> {
    if !(y >= T::zero() && y <= s.length()) || y.is_infinite() {
        return Err(Error::Domain(format!("extension height {y} outside [0, {}]", s.length())));
    }
    let opts = BoundedOptions::default();
    radial_multiplier(f, |lambda| Ok(bounded_solution_profile(s, lambda, &[y], &opts)?[0]))
}

/// The Dirichlet-to-Neumann operator `K = mu(-Delta)` of the string.
pub fn dtn_apply<T: Real>(f: &GridFunction<T>, s: &KreinString<T>) -> Result<GridFunction<T>> {
    let opts = MuOptions::default();
    radial_multiplier(f, |lambda| Ok(spectral_mu(s, lambda, &opts)?.mu))
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 2.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("alpha must lie in (0, 2), got {alpha}")))
    }
}

/// `(-Delta)^{alpha/2}` as the multiplier `|xi|^alpha`.
pub fn fraclap_multiplier<T: Real>(f: &GridFunction<T>, alpha: T) -> Result<GridFunction<T>> {
    check_alpha(alpha.as_f64())?;
    radial_multiplier(f, |lambda| Ok(lambda.powf(alpha / T::lit(2.0))))
}

// ---------------------------------------------------------------------------
// Singular integral form

/// Images per axis on each side used for the periodised kernel in two dimensions.
const IMAGES_2D: i64 = 8;

/// `sum_m |z + 2 L m|^{-d-alpha}` over all periodic images.
///
/// In one dimension this is a pair of Hurwitz zeta values. In two dimensions the images
/// with `|m|_inf <= M` are summed directly and the rest is replaced by the integral over
/// the complement of the square they tile, with the midpoint-rule correction.
fn periodic_kernel(dim: usize, alpha: f64, half_width: f64, z: &[f64]) -> f64 {
    let period = 2.0 * half_width;
    if dim == 1 {
        let s = 1.0 + alpha;
        let t = z[0].abs() / period;
        return period.powf(-s) * (hurwitz_zeta(s, t) + hurwitz_zeta(s, 1.0 - t));
    }
    let s = 2.0 + alpha;
    let mut sum = 0.0;
    for m1 in -IMAGES_2D..=IMAGES_2D {
        for m2 in -IMAGES_2D..=IMAGES_2D {
            let a = z[0] + period * m1 as f64;
            let b = z[1] + period * m2 as f64;
            sum += (a * a + b * b).powf(-0.5 * s);
        }
    }
    let a = (2 * IMAGES_2D + 1) as f64 * half_width;
    let r2 = z[0] * z[0] + z[1] * z[1];
    let outer = square_complement_integral(alpha) * a.powf(-alpha);
    let curvature = s * s * square_complement_integral(alpha + 2.0) * a.powf(-alpha - 2.0);
    sum + (outer + curvature * (0.25 * r2 - half_width * half_width / 6.0)) / (period * period)
}

/// `int |w|^{-2-beta} dw` over the plane minus the unit square `[-1, 1]^2`.
fn square_complement_integral(beta: f64) -> f64 {
    let (v, _) = integrate(|t: f64| t.cos().powf(beta), 0.0, PI / 4.0, 0.0, 1e-14);
    8.0 * v / beta
}

/// Fourth-order centred second difference along `axis`, and the fourth difference.
fn axis_differences(f: &[f64], n: usize, dim: usize, i: usize, axis: usize, h: f64) -> (f64, f64) {
    let stride = if dim == 1 || axis == 1 { 1 } else { n };
    let pos = if dim == 1 { i } else if axis == 0 { i / n } else { i % n };
    let base = i - pos * stride;
    let at = |shift: i64| f[base + ((pos as i64 + shift).rem_euclid(n as i64) as usize) * stride];
    let (m2, m1, c, p1, p2) = (at(-2), at(-1), at(0), at(1), at(2));
    let second = (-p2 + 16.0 * p1 - 30.0 * c + 16.0 * m1 - m2) / (12.0 * h * h);
    let fourth = (p2 - 4.0 * p1 + 6.0 * c - 4.0 * m1 + m2) / (h * h * h * h);
    (second, fourth)
}

/// `(-Delta)^{alpha/2}` as the singular integral
/// `(c/2) int (2 f(x) - f(x + z) - f(x - z)) |z|^{-d-alpha} dz`.
///
/// The integral runs over the torus with the periodised kernel, so on the grid it targets
/// the same operator as [`fraclap_multiplier`]. The punctured trapezoid sum over grid
/// offsets misses the contribution of the kernel singularity; it is restored from the
/// generalised Euler-Maclaurin expansion, whose coefficients are zeta values times
/// derivatives of `f` estimated by finite differences.
pub fn fraclap_pv<T: Real>(f: &GridFunction<T>, alpha: T) -> Result<GridFunction<T>> {
    let alpha = alpha.as_f64();
    check_alpha(alpha)?;
    check_finite(f)?;
    let (dim, n) = (f.dim, f.n);
    let half_width = f.half_width.as_f64();
    let h = f.spacing().as_f64();
    let values: Vec<f64> = f.samples.iter().map(|v| v.as_f64()).collect();
    let c = fraclap_constant(dim, alpha);
    let vol = h.powi(dim as i32);

    // Kernel on minimum-image offsets, by symmetry only for nonnegative ones.
    let half = n / 2;
    let image = |j: usize| if j <= half { j } else { n - j };
    let kernel: Vec<f64> = if dim == 1 {
        (0..=half)
            .map(|j| if j == 0 { 0.0 } else { periodic_kernel(1, alpha, half_width, &[j as f64 * h]) })
            .collect()
    } else {
        (0..(half + 1) * (half + 1))
            .into_par_iter()
            .map(|idx| {
                let (a, b) = (idx / (half + 1), idx % (half + 1));
                if a == 0 && b == 0 {
                    0.0
                } else {
                    periodic_kernel(2, alpha, half_width, &[a as f64 * h, b as f64 * h])
                }
            })
            .collect()
    };
    let kernel_at = |offset: usize| -> f64 {
        if dim == 1 {
            kernel[image(offset)]
        } else {
            kernel[image(offset / n) * (half + 1) + image(offset % n)]
        }
    };
    let total = f.len();
    let dense: Vec<f64> = (0..total).map(kernel_at).collect();
    let kernel_sum: f64 = dense.iter().sum();
    let (c1, c2) = if dim == 1 {
        (2.0 * riemann_zeta(alpha - 1.0), riemann_zeta(alpha - 3.0) / 6.0)
    } else {
        (0.5 * square_lattice_zeta(alpha), 0.0)
    };

    let out: Vec<f64> = (0..total)
        .into_par_iter()
        .map(|i| {
            // sum_z K(z) (2 f(x) - f(x + z) - f(x - z)) = 2 (f(x) sum K - (K * f)(x)).
            let conv: f64 = if dim == 1 {
                (0..n).map(|j| dense[j] * values[(i + n - j) % n]).sum()
            } else {
                let (i1, i2) = (i / n, i % n);
                let mut acc = 0.0;
                for j1 in 0..n {
                    let row = ((i1 + n - j1) % n) * n;
                    let krow = &dense[j1 * n..(j1 + 1) * n];
                    for (j2, k) in krow.iter().enumerate() {
                        acc += k * values[row + (i2 + n - j2) % n];
                    }
                }
                acc
            };
            let sum = 2.0 * vol * (values[i] * kernel_sum - conv);
            let mut laplacian = 0.0;
            let mut bilaplacian_axis = 0.0;
            for axis in 0..dim {
                let (second, fourth) = axis_differences(&values, n, dim, i, axis, h);
                laplacian += second;
                bilaplacian_axis += fourth;
            }
            let correction = c1 * h.powf(2.0 - alpha) * laplacian + c2 * h.powf(4.0 - alpha) * bilaplacian_axis;
            0.5 * c * (sum + correction)
        })
        .collect();
    Ok(f.with_samples(out.into_iter().map(T::lit).collect()))
}

// ---------------------------------------------------------------------------
// Poisson kernels

fn check_poisson(dim: usize, alpha: f64, y: f64) -> Result<()> {
    if dim != 1 && dim != 2 {
        return Err(Error::Domain(format!("dimension must be 1 or 2, got {dim}")));
    }
    if !(alpha > 0.0 && alpha <= 2.0) {
        return Err(Error::Domain(format!("alpha must lie in (0, 2], got {alpha}")));
    }
    if !(y > 0.0) || y.is_infinite() {
        return Err(Error::Domain(format!("y must be positive and finite, got {y}")));
    }
    Ok(())
}

/// `c_{d,alpha} y^alpha (|x|^2 + y^2)^{-(d+alpha)/2}`.
pub fn poisson_kernel(dim: usize, alpha: f64, y: f64, x: &[f64]) -> Result<f64> {
    check_poisson(dim, alpha, y)?;
    if x.len() != dim {
        return Err(Error::Domain(format!("point has {} coordinates, expected {dim}", x.len())));
    }
    let r2: f64 = x.iter().map(|v| v * v).sum();
    Ok(poisson_constant(dim, alpha) * y.powf(alpha) * (r2 + y * y).powf(-0.5 * (dim as f64 + alpha)))
}

/// Mass of the Poisson kernel split into the box `[-B, B)^d` and the rest of space.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoissonMass {
    pub box_integral: f64,
    pub tail: f64,
}

impl PoissonMass {
    pub fn total(&self) -> f64 {
        self.box_integral + self.tail
    }
}

/// Integrates the Poisson kernel numerically over the box; the slowly decaying mass outside
/// is added from its asymptotic expansion (`d = 1`) or from the exact radial integral
/// (`d = 2`).
pub fn poisson_mass(dim: usize, alpha: f64, y: f64, half_width: f64) -> Result<PoissonMass> {
    check_poisson(dim, alpha, y)?;
    if !(half_width > 0.0) {
        return Err(Error::Domain(format!("box half-width must be positive, got {half_width}")));
    }
    let c = poisson_constant(dim, alpha);
    let b = half_width;
    let p = 0.5 * (dim as f64 + alpha);
    if dim == 1 {
        let f = |x: f64| c * y.powf(alpha) * (x * x + y * y).powf(-p);
        let cut = y.min(b);
        let near = integrate(f, 0.0, cut, 1e-15, 1e-13).0;
        let far = integrate(f, cut, b, 1e-15, 1e-13).0;
        // int_B^inf x^{-2p} (1 + (y/x)^2)^{-p} dx, expanded binomially in (y/x)^2.
        let q = (y / b) * (y / b);
        let tail = if q < 0.25 {
            let mut coef = 1.0;
            let mut sum = 0.0;
            for k in 0..60 {
                let term = coef * q.powi(k) / (2.0 * p + 2.0 * k as f64 - 1.0);
                sum += term;
                if term.abs() < 1e-18 * sum.abs() {
                    break;
                }
                coef *= -(p + k as f64) / (k as f64 + 1.0);
            }
            c * y.powf(alpha) * b.powf(1.0 - 2.0 * p) * sum
        } else {
            integrate(|t: f64| {
                let s = 1.0 - t;
                f(b + t / s) / (s * s)
            }, 0.0, 1.0, 1e-15, 1e-13)
            .0
        };
        return Ok(PoissonMass { box_integral: 2.0 * (near + far), tail: 2.0 * tail });
    }
    let f = |x: f64, z: f64| c * y.powf(alpha) * (x * x + z * z + y * y).powf(-p);
    let inner = |x: f64| {
        let cut = y.min(b);
        integrate(|z| f(x, z), 0.0, cut, 1e-16, 1e-13).0 + integrate(|z| f(x, z), cut, b, 1e-16, 1e-13).0
    };
    let cut = y.min(b);
    let quadrant = integrate(inner, 0.0, cut, 1e-15, 1e-12).0 + integrate(inner, cut, b, 1e-15, 1e-12).0;
    // Outside the square: int_{rho(theta)}^inf c y^a r (r^2 + y^2)^{-p} dr
    //   = c y^a (rho^2 + y^2)^{-a/2} / a, with rho = B / cos(theta) on [0, pi/4].
    let tail = integrate(
        |theta: f64| {
            let rho = b / theta.cos();
            c * y.powf(alpha) * (rho * rho + y * y).powf(-0.5 * alpha) / alpha
        },
        0.0,
        PI / 4.0,
        1e-16,
        1e-13,
    )
    .0;
    Ok(PoissonMass { box_integral: 4.0 * quadrant, tail: 8.0 * tail })
}

/// Images on each side summed directly in [`poisson_periodic`].
const POISSON_IMAGES: i64 = 64;

/// Samples of the one-dimensional Poisson kernel wrapped onto the box,
/// `sum_m P_y(x + 2 L m)`. Far images are summed through Hurwitz zeta values.
pub fn poisson_periodic(alpha: f64, y: f64, n: usize, half_width: f64) -> Result<GridFunction<f64>> {
    check_poisson(1, alpha, y)?;
    let c = poisson_constant(1, alpha);
    let p = 0.5 * (1.0 + alpha);
    let period = 2.0 * half_width;
    let eta = (y / period) * (y / period);
    let m0 = (POISSON_IMAGES + 1) as f64;
    GridFunction::from_fn(1, half_width, n, |x| {
        let x = x[0];
        let mut sum = 0.0;
        for m in -POISSON_IMAGES..=POISSON_IMAGES {
            let u = x + period * m as f64;
            sum += (u * u + y * y).powf(-p);
        }
        // (m + t)^{-2p} (1 + eta (m + t)^{-2})^{-p}, expanded to second order in eta.
        let t = x / period;
        for a in [m0 + t, m0 - t] {
            sum += period.powf(-2.0 * p)
                * (hurwitz_zeta(2.0 * p, a) - p * eta * hurwitz_zeta(2.0 * p + 2.0, a)
                    + 0.5 * p * (p + 1.0) * eta * eta * hurwitz_zeta(2.0 * p + 4.0, a));
        }
        c * y.powf(alpha) * sum
    })
}

/// Fourier transform `int e^{-i xi x} P_y(x) dx` at the nonnegative grid frequencies
/// `xi_k = pi k / L`, `k < N/2`, computed from the DFT of [`poisson_periodic`].
pub fn poisson_fourier(alpha: f64, y: f64, n: usize, half_width: f64) -> Result<Vec<(f64, f64)>> {
    let samples = poisson_periodic(alpha, y, n, half_width)?;
    let h = samples.spacing();
    let spec = spectrum(&samples);
    Ok((0..n / 2)
        .map(|k| {
            // The grid starts at -L, which contributes the phase e^{i xi L} = (-1)^k.
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            (PI * k as f64 / half_width, sign * h * spec[k].re)
        })
        .collect())
}

// ---------------------------------------------------------------------------
// Dirichlet's principle

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyCheck {
    /// `1/2 int f K f dx`.
    pub form_value: f64,
    /// `1/2 int int (a(y) |grad_x u|^2 + |d_y u|^2) dy dx` for the extension `u`.
    pub extension_energy: f64,
}

impl EnergyCheck {
    pub fn relative_gap(&self) -> f64 {
        (self.form_value - self.extension_energy).abs() / self.form_value.abs().max(f64::MIN_POSITIVE)
    }
}

/// Compares the quadratic form of `K` with the Dirichlet energy of the extension of `f`,
/// both with the factor `1/2`.
///
/// In `x` both are evaluated spectrally. In `y`, `d_y u` uses centred differences on
/// `y_grid` (one-sided at the ends) and each node is weighted with the string's mass on
/// its dual cell, which also covers atoms and integrable singularities of the density.
pub fn energy_check<T: Real>(f: &GridFunction<T>, s: &KreinString<T>, y_grid: &[T]) -> Result<EnergyCheck> {
    check_finite(f)?;
    let ys: Vec<T> = y_grid.to_vec();
    if ys.len() < 3 || ys[0] != T::zero() || ys.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Domain("y grid must start at 0 and increase strictly, with at least 3 nodes".into()));
    }
    let y_max = *ys.last().expect("nonempty");
    if y_max > s.length() {
        return Err(Error::Domain(format!("y grid exceeds the string length {}", s.length())));
    }
    let data = spectrum(f);
    let weight = f.cell_volume().as_f64() / f.len() as f64;
    let peak = data.iter().fold(T::zero(), |a, c| a.max(c.norm()));
    let floor = peak * T::lit(ROUNDING_FLOOR);
    let mut groups: BTreeMap<i64, (f64, f64)> = BTreeMap::new();
    for (i, c) in data.iter().enumerate() {
        if c.norm() > floor {
            let k2: i64 = f.wave_vector(i).iter().map(|k| k * k).sum();
            let entry = groups.entry(k2).or_default();
            entry.0 += c.norm_sqr().as_f64();
            entry.1 = entry.1.max(c.norm().as_f64());
        }
    }
    let groups: Vec<(i64, f64, f64)> = groups.into_iter().map(|(k, (p, m))| (k, p, m)).collect();
    let unit = T::PI() / f.half_width;

    // Past the support of a natural string the extension is constant in y.
    let past_support = s.is_natural()
        && s.support_end().is_some_and(|top| {
            let atom_on_top = s.atoms().last().is_some_and(|a| a.position == top);
            y_max > top || (y_max == top && !atom_on_top)
        });
    let reaches_end = y_max == s.length() || past_support;
    if !reaches_end {
        let significant = peak.as_f64() * 1e-8;
        if let Some(&(k2, _, _)) = groups.iter().find(|(k2, _, m)| *k2 > 0 && *m > significant) {
            let lambda = unit * unit * T::lit(k2 as f64);
            let tail = bounded_solution_profile(s, lambda, &[y_max], &BoundedOptions::default())?[0];
            if tail.abs() > T::lit(1e-4) {
                return Err(Error::Domain(format!(
                    "y grid too short: phi(|xi|^2, {y_max}) = {tail} for the lowest active mode"
                )));
            }
        }
    }

    // Mass of the density on the dual cells [y_{i-1/2}, y_{i+1/2}].
    let mut edges = vec![T::zero()];
    edges.extend(ys.windows(2).map(|w| T::lit(0.5) * (w[0] + w[1])));
    edges.push(y_max);
    let masses = edges.iter().map(|&e| s.cumulative_mass(e)).collect::<Result<Vec<T>>>()?;
    let cell_mass: Vec<f64> = masses.windows(2).map(|w| (w[1] - w[0]).as_f64()).collect();
    let y64: Vec<f64> = ys.iter().map(|v| v.as_f64()).collect();
    let mut dual = vec![0.0; ys.len()];
    for (i, d) in dual.iter_mut().enumerate() {
        let lo = if i == 0 { y64[0] } else { 0.5 * (y64[i - 1] + y64[i]) };
        let hi = if i + 1 == ys.len() { y64[i] } else { 0.5 * (y64[i] + y64[i + 1]) };
        *d = hi - lo;
    }

    let mu_opts = MuOptions::default();
    let b_opts = BoundedOptions::default();
    let per_mode: Vec<(f64, f64)> = groups
        .par_iter()
        .map(|&(k2, power, _)| {
            let lambda = unit * unit * T::lit(k2 as f64);
            let mu = spectral_mu(s, lambda, &mu_opts)?.mu.as_f64();
            let phi: Vec<f64> = bounded_solution_profile(s, lambda, &ys, &b_opts)?
                .into_iter()
                .map(|v| v.as_f64())
                .collect();
            let last = phi.len() - 1;
            let mut energy = 0.0;
            for i in 0..phi.len() {
                let slope = if i == 0 {
                    (phi[1] - phi[0]) / (y64[1] - y64[0])
                } else if i == last {
                    (phi[last] - phi[last - 1]) / (y64[last] - y64[last - 1])
                } else {
                    (phi[i + 1] - phi[i - 1]) / (y64[i + 1] - y64[i - 1])
                };
                energy += lambda.as_f64() * phi[i] * phi[i] * cell_mass[i] + slope * slope * dual[i];
            }
            Ok((0.5 * mu * power * weight, 0.5 * energy * power * weight))
        })
        .collect::<Result<_>>()?;
    let (form_value, extension_energy) = per_mode.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    Ok(EnergyCheck { form_value, extension_energy })
}
