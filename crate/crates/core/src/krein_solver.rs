//! Fundamental solutions of `phi'' = lambda a phi`, the spectral function `mu`, the
//! bounded solution and numerical complete-Bernstein checks.
//!
//! Steps use a fourth order Magnus propagator built from the exact step mass and the
//! centred first moment of the density. Every step propagator has determinant one, so
//! the Wronskian is conserved up to rounding no matter how many steps are taken.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::string_model::{DensityForm, KreinString};

#[derive(Clone, Copy, Debug)]
pub struct SolverOptions<T> {
    /// Relative local error per accepted step.
    pub step_tol: T,
    /// Budget of attempted steps for one call.
    pub max_steps: usize,
    /// Largest truncation point tried for strings with unbounded support.
    pub max_truncation: T,
}

impl<T: Real> Default for SolverOptions<T> {
    fn default() -> Self {
        SolverOptions {
            step_tol: T::lit(1e-10).max(T::epsilon() * T::lit(100.0)),
            max_steps: 2_000_000,
            max_truncation: T::lit(1e15),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct MuOptions<T> {
    pub abs_tol: T,
    pub rel_tol: T,
    pub solver: SolverOptions<T>,
}

impl<T: Real> Default for MuOptions<T> {
    fn default() -> Self {
        MuOptions {
            abs_tol: T::lit(1e-13).max(T::epsilon() * T::lit(10.0)),
            rel_tol: T::lit(1e-10).max(T::epsilon() * T::lit(1000.0)),
            solver: SolverOptions::default(),
        }
    }
}

/// Two solutions of the same equation at height `y`.
///
/// From the origin the columns are the Dirichlet solution (`phi(0) = 0, phi'(0) = 1`) and
/// the Neumann solution (`phi(0) = 1, phi'(0) = 0`). The first four values are jointly
/// scaled by `exp(-log_scale)`. Since the two columns become nearly parallel as `y` grows,
/// the second column is also kept in the split
/// `phi_N = ratio * phi_D + exp(rest_log_scale - log_scale) * rest`, with `rest`
/// orthogonal to `(phi_D, phi_D')`; the Wronskian and the bracket are computed from it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FundamentalState<T> {
    pub y: T,
    pub phi_d: T,
    pub dphi_d: T,
    pub phi_n: T,
    pub dphi_n: T,
    pub log_scale: T,
    pub ratio: T,
    pub rest: T,
    pub drest: T,
    pub rest_log_scale: T,
}

impl<T: Real> FundamentalState<T> {
    /// True Wronskian `phi_D phi_N' - phi_N phi_D'` as `(sign, ln |W|)`.
    pub fn log_wronskian(&self) -> (T, T) {
        let w = self.phi_d * self.drest - self.rest * self.dphi_d;
        (w.signum(), w.abs().ln() + self.log_scale + self.rest_log_scale)
    }

    /// `|W / w0 - 1|` for an expected Wronskian `w0`.
    pub fn wronskian_drift(&self, w0: T) -> T {
        let (sign, log_w) = self.log_wronskian();
        if sign != w0.signum() || log_w.is_nan() {
            return T::infinity();
        }
        (log_w - w0.abs().ln()).exp_m1().abs()
    }

    /// Relative drift from the value `-1` of the fundamental pair.
    pub fn wronskian_deviation(&self) -> T {
        self.wronskian_drift(-T::one())
    }

    /// `(phi_N' / phi_D', phi_N / phi_D)`.
    pub fn bracket(&self) -> (T, T) {
        let g = (self.rest_log_scale - self.log_scale).exp();
        (
            self.ratio + g * self.drest / self.dphi_d,
            self.ratio + g * self.rest / self.phi_d,
        )
    }
}

/// Working form of [`FundamentalState`]: `first = u exp(ls_u)`,
/// `second = c first + w exp(ls_w)`.
#[derive(Clone, Copy, Debug)]
struct Basis<T> {
    y: T,
    u: [T; 2],
    ls_u: T,
    w: [T; 2],
    ls_w: T,
    c: T,
}

fn max2<T: Real>(v: &[T; 2]) -> T {
    v[0].abs().max(v[1].abs())
}

fn rescale2<T: Real>(v: &mut [T; 2], ls: &mut T) {
    let m = max2(v);
    if m > T::lit(1e3) || (m < T::lit(1e-3) && m > T::zero()) {
        let k = m.log2().floor();
        let f = T::lit(2.0).powi(-k.to_i32().expect("exponent fits in i32"));
        v[0] *= f;
        v[1] *= f;
        *ls += k * T::LN_2();
    }
}

impl<T: Real> Basis<T> {
    fn columns(y: T, first: (T, T), second: (T, T)) -> Self {
        let mut b = Basis {
            y,
            u: [first.0, first.1],
            ls_u: T::zero(),
            w: [second.0, second.1],
            ls_w: T::zero(),
            c: T::zero(),
        };
        b.normalize();
        b
    }

    fn apply(&mut self, p: &[T; 4]) {
        for v in [&mut self.u, &mut self.w] {
            let (x, dx) = (v[0], v[1]);
            v[0] = p[0] * x + p[1] * dx;
            v[1] = p[2] * x + p[3] * dx;
        }
    }

    fn shear(&mut self, k: T) {
        self.u[1] += k * self.u[0];
        self.w[1] += k * self.w[0];
    }

    /// Removes the component of `w` along `u`, then rescales both.
    fn normalize(&mut self) {
        let uu = self.u[0] * self.u[0] + self.u[1] * self.u[1];
        if uu > T::zero() {
            let k = (self.w[0] * self.u[0] + self.w[1] * self.u[1]) / uu;
            if k != T::zero() {
                self.w[0] -= k * self.u[0];
                self.w[1] -= k * self.u[1];
                self.c += k * (self.ls_w - self.ls_u).exp();
            }
        }
        rescale2(&mut self.u, &mut self.ls_u);
        rescale2(&mut self.w, &mut self.ls_w);
    }

    fn state(&self) -> FundamentalState<T> {
        let g = (self.ls_w - self.ls_u).exp();
        FundamentalState {
            y: self.y,
            phi_d: self.u[0],
            dphi_d: self.u[1],
            phi_n: self.c * self.u[0] + g * self.w[0],
            dphi_n: self.c * self.u[1] + g * self.w[1],
            log_scale: self.ls_u,
            ratio: self.c,
            rest: self.w[0],
            drest: self.w[1],
            rest_log_scale: self.ls_w,
        }
    }
}

fn mat_mul<T: Real>(p: &[T; 4], q: &[T; 4]) -> [T; 4] {
    [
        p[0] * q[0] + p[1] * q[2],
        p[0] * q[1] + p[1] * q[3],
        p[2] * q[0] + p[3] * q[2],
        p[2] * q[1] + p[3] * q[3],
    ]
}

/// Adaptive propagation of a pair of solutions through a string.
struct Integrator<'a, T> {
    string: &'a KreinString<T>,
    lambda: T,
    opts: SolverOptions<T>,
    steps: usize,
    h_hint: T,
    w0: T,
    max_drift: T,
}

impl<'a, T: Real> Integrator<'a, T> {
    fn new(string: &'a KreinString<T>, lambda: T, opts: SolverOptions<T>, w0: T) -> Self {
        Integrator {
            string,
            lambda,
            opts,
            steps: 0,
            h_hint: T::zero(),
            w0,
            max_drift: T::zero(),
        }
    }

    fn jump(&self, st: &mut Basis<T>, at: T, forward: bool) {
        for atom in self.string.atoms() {
            if atom.position == at {
                let k = self.lambda * atom.mass;
                st.shear(if forward { k } else { -k });
                st.normalize();
            }
        }
    }

    /// Moves `st` from `st.y` to `to`. Atoms strictly between are crossed; an atom at the
    /// start is applied only when `include_start_atom` is set, an atom at `to` never.
    fn propagate(
        &mut self,
        st: &mut Basis<T>,
        to: T,
        include_start_atom: bool,
        observer: &mut dyn FnMut(&FundamentalState<T>),
    ) -> Result<()> {
        let from = st.y;
        if from == to {
            return Ok(());
        }
        let forward = to > from;
        if include_start_atom {
            self.jump(st, from, forward);
        }
        let (lo, hi) = if forward { (from, to) } else { (to, from) };
        let mut marks: Vec<T> = self
            .string
            .breakpoints()
            .into_iter()
            .filter(|&y| y > lo && y < hi)
            .collect();
        if !forward {
            marks.reverse();
        }
        marks.push(to);
        for mark in marks {
            self.segment(st, mark, forward, observer)?;
            if mark != to {
                self.jump(st, mark, forward);
            }
        }
        Ok(())
    }

    /// Magnus propagator of one step and the squared exponent `delta^2` that bounds its growth.
    fn step_propagator(&self, form: &Option<DensityForm<T>>, u: T, v: T, forward: bool) -> ([T; 4], T) {
        let (lo, hi) = if u < v { (u, v) } else { (v, u) };
        let h = hi - lo;
        let (m, q) = match form {
            Some(f) if self.lambda > T::zero() => f.step_moments(lo, hi),
            _ => (T::zero(), T::zero()),
        };
        let lq = self.lambda * q;
        let lm = self.lambda * m;
        let d2 = lq * lq + h * lm;
        let (c, s) = if d2 < T::lit(1e-3) {
            let d4 = d2 * d2;
            (
                T::one() + d2 / T::lit(2.0) + d4 / T::lit(24.0) + d4 * d2 / T::lit(720.0),
                T::one() + d2 / T::lit(6.0) + d4 / T::lit(120.0) + d4 * d2 / T::lit(5040.0),
            )
        } else {
            let d = d2.sqrt();
            (d.cosh(), d.sinh() / d)
        };
        let sign = if forward { T::one() } else { -T::one() };
        ([c + sign * s * lq, sign * s * h, sign * s * lm, c - sign * s * lq], d2)
    }

    fn segment(
        &mut self,
        st: &mut Basis<T>,
        b: T,
        forward: bool,
        observer: &mut dyn FnMut(&FundamentalState<T>),
    ) -> Result<()> {
        let a = st.y;
        let form = self
            .string
            .piece_at(T::lit(0.5) * (a + b))
            .map(|p| p.form);
        // Zero density: the propagator is exact, one step suffices.
        if form.is_none() || self.lambda == T::zero() {
            let (p, _) = self.step_propagator(&None, a, b, forward);
            st.apply(&p);
            st.y = b;
            self.accept(st, observer);
            return Ok(());
        }
        let dir = if forward { T::one() } else { -T::one() };
        let len = (b - a).abs();
        let mut h = if self.h_hint > T::zero() { self.h_hint.min(len) } else { len };
        let tol = self.opts.step_tol;
        loop {
            let u = st.y;
            let remaining = (b - u).abs();
            if remaining == T::zero() {
                break;
            }
            self.steps += 1;
            if self.steps > self.opts.max_steps {
                return Err(Error::Convergence {
                    lambda: self.lambda.as_f64(),
                    lo: f64::NAN,
                    hi: f64::NAN,
                    truncation: u.as_f64(),
                    reason: format!("step budget of {} exhausted", self.opts.max_steps),
                });
            }
            let last = h >= remaining;
            let step = if last { remaining } else { h };
            let v = if last { b } else { u + dir * step };
            let h_min = T::epsilon() * T::lit(8.0) * u.abs().max(v.abs());
            let (full, d2) = self.step_propagator(&form, u, v, forward);
            // Growth over a step is at most exp(delta); keep it below about 1e3.
            if (d2 > T::lit(49.0) || !d2.is_finite()) && step > h_min {
                h = step / T::lit(4.0);
                continue;
            }
            let mid = u + dir * step / T::lit(2.0);
            let (p1, _) = self.step_propagator(&form, u, mid, forward);
            let (p2, _) = self.step_propagator(&form, mid, v, forward);
            let half = mat_mul(&p2, &p1);
            let mut coarse = *st;
            coarse.apply(&full);
            let mut fine = *st;
            fine.apply(&half);
            let rel = |x: &[T; 2], y: &[T; 2]| (x[0] - y[0]).abs().max((x[1] - y[1]).abs()) / max2(y);
            let err = rel(&coarse.u, &fine.u).max(rel(&coarse.w, &fine.w));
            let factor = if err == T::zero() {
                T::lit(4.0)
            } else {
                (T::lit(0.9) * (tol / err).powf(T::lit(0.2))).max(T::lit(0.2)).min(T::lit(4.0))
            };
            if err <= tol || step <= h_min {
                *st = fine;
                st.y = v;
                self.accept(st, observer);
                if !last {
                    h = step * factor;
                }
            } else {
                h = step * factor;
            }
        }
        self.h_hint = h;
        Ok(())
    }

    fn accept(&mut self, st: &mut Basis<T>, observer: &mut dyn FnMut(&FundamentalState<T>)) {
        st.normalize();
        let snapshot = st.state();
        let drift = snapshot.wronskian_drift(self.w0);
        if drift > self.max_drift || drift.is_nan() {
            self.max_drift = drift;
        }
        observer(&snapshot);
    }
}

/// Integrates both fundamental solutions from `0` to `y_target`. An atom at the origin is
/// not applied (it enters `mu` additively, see [`spectral_mu`]).
pub fn integrate_fundamental<T: Real>(
    s: &KreinString<T>,
    lambda: T,
    y_target: T,
    opts: &SolverOptions<T>,
) -> Result<FundamentalState<T>> {
    integrate_fundamental_observed(s, lambda, y_target, opts, &mut |_| {})
}

/// As [`integrate_fundamental`], calling `observer` after every accepted step.
pub fn integrate_fundamental_observed<T: Real>(
    s: &KreinString<T>,
    lambda: T,
    y_target: T,
    opts: &SolverOptions<T>,
    observer: &mut dyn FnMut(&FundamentalState<T>),
) -> Result<FundamentalState<T>> {
    check_lambda(lambda)?;
    if !(y_target >= T::zero() && y_target <= s.length()) || y_target.is_infinite() {
        return Err(Error::Domain(format!(
            "integrate_fundamental: y = {y_target} outside [0, {}]",
            s.length()
        )));
    }
    if y_target == s.length() && s.right_singularity().is_some_and(|p| p <= -T::one()) {
        return Err(Error::Domain(
            "integrate_fundamental: density is not integrable up to R".into(),
        ));
    }
    let mut st = Basis::columns(T::zero(), (T::zero(), T::one()), (T::one(), T::zero()));
    let mut integ = Integrator::new(s, lambda, *opts, -T::one());
    integ.propagate(&mut st, y_target, false, observer)?;
    Ok(st.state())
}

fn check_lambda<T: Real>(lambda: T) -> Result<()> {
    if lambda.is_nan() || lambda < T::zero() || lambda.is_infinite() {
        return Err(Error::Domain(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    Ok(())
}

/// One truncation of the bracket loop.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BracketStep<T> {
    pub truncation: T,
    pub lo: T,
    pub hi: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MuEstimate<T> {
    pub lambda: T,
    /// Midpoint of the final bracket.
    pub mu: T,
    pub lo: T,
    pub hi: T,
    pub truncation: T,
    /// Brackets along the truncation schedule (empty when the bracket is exact).
    pub schedule: Vec<BracketStep<T>>,
    /// Largest relative Wronskian drift over all accepted steps.
    pub max_wronskian_drift: T,
}

impl<T: Real> MuEstimate<T> {
    fn exact(lambda: T, mu: T, truncation: T, drift: T) -> Self {
        MuEstimate {
            lambda,
            mu,
            lo: mu,
            hi: mu,
            truncation,
            schedule: Vec::new(),
            max_wronskian_drift: drift,
        }
    }

    pub fn half_width(&self) -> T {
        T::lit(0.5) * (self.hi - self.lo)
    }
}

/// `mu(lambda) = lim phi_N / phi_D`, with a two-sided bracket.
///
/// An atom at the origin contributes `lambda * m` on top of the value for the string
/// without it: the reported derivative at 0 is taken before that atom's jump.
pub fn spectral_mu<T: Real>(s: &KreinString<T>, lambda: T, opts: &MuOptions<T>) -> Result<MuEstimate<T>> {
    check_lambda(lambda)?;
    let (stripped, m0) = s.split_origin_atom();
    let mut est = if lambda == T::zero() {
        let mu = if s.is_natural() { T::zero() } else { s.length().recip() };
        MuEstimate::exact(lambda, mu, s.length(), T::zero())
    } else {
        mu_without_origin_atom(&stripped, lambda, opts)?
    };
    let shift = lambda * m0;
    est.mu += shift;
    est.lo += shift;
    est.hi += shift;
    for b in &mut est.schedule {
        b.lo += shift;
        b.hi += shift;
    }
    Ok(est)
}

fn converged<T: Real>(lo: T, hi: T, opts: &MuOptions<T>) -> bool {
    hi - lo <= opts.abs_tol.max(opts.rel_tol * lo.abs())
}

fn singular_end<T: Real>(s: &KreinString<T>) -> bool {
    s.right_singularity().is_some_and(|p| p <= -T::one())
}

fn last_breakpoint_below<T: Real>(s: &KreinString<T>, r: T) -> T {
    s.breakpoints()
        .into_iter()
        .filter(|y| *y < r)
        .fold(T::zero(), T::max)
}

fn mu_without_origin_atom<T: Real>(s: &KreinString<T>, lambda: T, opts: &MuOptions<T>) -> Result<MuEstimate<T>> {
    let mut st = Basis::columns(T::zero(), (T::zero(), T::one()), (T::one(), T::zero()));
    let mut integ = Integrator::new(s, lambda, opts.solver, -T::one());
    let noop = &mut |_: &FundamentalState<T>| {};
    let r = s.length();

    if r.is_finite() && !singular_end(s) {
        integ.propagate(&mut st, r, false, noop)?;
        let mu = st.state().bracket().1;
        return Ok(MuEstimate::exact(lambda, mu, r, integ.max_drift));
    }
    if r.is_infinite() {
        if let Some(top) = s.support_end() {
            integ.propagate(&mut st, top, false, noop)?;
            integ.jump(&mut st, top, true);
            let mu = st.state().bracket().0;
            return Ok(MuEstimate::exact(lambda, mu, top, integ.max_drift));
        }
    }

    // Bracket loop: doubling truncations for R = inf, or halving the distance to a
    // singular finite R.
    let last_break = last_breakpoint_below(s, r);
    let mut y = if r.is_finite() {
        last_break + T::lit(0.5) * (r - last_break)
    } else {
        last_break.max(T::one())
    };
    let mut schedule = Vec::new();
    let mut first = true;
    loop {
        integ.propagate(&mut st, y, !first, noop)?;
        first = false;
        let (lo, hi) = st.state().bracket();
        schedule.push(BracketStep { truncation: y, lo, hi });
        if converged(lo, hi, opts) {
            return Ok(MuEstimate {
                lambda,
                mu: T::lit(0.5) * (lo + hi),
                lo,
                hi,
                truncation: y,
                schedule,
                max_wronskian_drift: integ.max_drift,
            });
        }
        let next = if r.is_finite() {
            y + T::lit(0.5) * (r - y)
        } else {
            y * T::lit(2.0)
        };
        let exhausted = if r.is_finite() {
            r - next <= T::epsilon() * T::lit(16.0) * r
        } else {
            next > opts.solver.max_truncation
        };
        if exhausted {
            return Err(Error::Convergence {
                lambda: lambda.as_f64(),
                lo: lo.as_f64(),
                hi: hi.as_f64(),
                truncation: y.as_f64(),
                reason: "truncation budget exhausted".into(),
            });
        }
        y = next;
    }
}

/// Options for [`bounded_solution`].
#[derive(Clone, Copy, Debug)]
pub struct BoundedOptions<T> {
    /// Absolute agreement required between the Dirichlet and Neumann truncations.
    pub tol: T,
    pub solver: SolverOptions<T>,
}

impl<T: Real> Default for BoundedOptions<T> {
    fn default() -> Self {
        BoundedOptions {
            tol: T::lit(1e-12).max(T::epsilon() * T::lit(100.0)),
            solver: SolverOptions::default(),
        }
    }
}

/// The bounded solution `phi_lambda(y)` with `phi_lambda(0) = 1`.
pub fn bounded_solution<T: Real>(s: &KreinString<T>, lambda: T, y: T, opts: &BoundedOptions<T>) -> Result<T> {
    Ok(bounded_solution_profile(s, lambda, &[y], opts)?[0])
}

/// `phi_lambda` at several heights at once.
///
/// Computed by integrating backwards from a truncation point `Y` to `0` and normalising
/// at `0`. Starting from `phi(Y) = 0` and from `phi'(Y) = 0` gives the same solution up to
/// an error that vanishes as `Y` grows; the truncation is doubled until both agree. This
/// avoids the cancellation in `phi_N - mu phi_D`.
pub fn bounded_solution_profile<T: Real>(
    s: &KreinString<T>,
    lambda: T,
    ys: &[T],
    opts: &BoundedOptions<T>,
) -> Result<Vec<T>> {
    check_lambda(lambda)?;
    let r = s.length();
    for &y in ys {
        if y.is_nan() || y < T::zero() || y > r || y.is_infinite() {
            return Err(Error::Domain(format!("bounded_solution: y = {y} outside [0, {r}]")));
        }
    }
    if lambda == T::zero() {
        return Ok(ys
            .iter()
            .map(|&y| if r.is_finite() { T::one() - y / r } else { T::one() })
            .collect());
    }
    let y_max = ys.iter().copied().fold(T::zero(), T::max);
    let dirichlet = (T::zero(), -T::one());
    let neumann = (T::one(), T::zero());

    let raw = if r.is_finite() && !singular_end(s) {
        backward_columns(s, lambda, r, false, ys, dirichlet, neumann, opts)?.0
    } else if let (true, Some(top)) = (r.is_infinite(), s.support_end()) {
        backward_columns(s, lambda, top, true, ys, neumann, neumann, opts)?.0
    } else {
        let last_break = last_breakpoint_below(s, r);
        let mut big_y = if r.is_finite() {
            let start = last_break.max(y_max.min(r));
            if start >= r {
                last_break + T::lit(0.5) * (r - last_break)
            } else {
                start + T::lit(0.5) * (r - start)
            }
        } else {
            (T::lit(2.0) * y_max).max(last_break).max(T::one())
        };
        loop {
            let (d, n) = backward_columns(s, lambda, big_y, false, ys, dirichlet, neumann, opts)?;
            let gap = d
                .iter()
                .zip(&n)
                .filter(|(a, _)| !a.is_nan())
                .map(|(a, b)| (*a - *b).abs())
                .fold(T::zero(), T::max);
            if gap <= opts.tol {
                break d
                    .iter()
                    .zip(&n)
                    .map(|(a, b)| if a.is_nan() { *a } else { T::lit(0.5) * (*a + *b) })
                    .collect::<Vec<_>>();
            }
            let next = if r.is_finite() {
                big_y + T::lit(0.5) * (r - big_y)
            } else {
                big_y * T::lit(2.0)
            };
            let exhausted = if r.is_finite() {
                r - next <= T::epsilon() * T::lit(16.0) * r
            } else {
                next > opts.solver.max_truncation
            };
            if exhausted {
                return Err(Error::Convergence {
                    lambda: lambda.as_f64(),
                    lo: f64::NAN,
                    hi: f64::NAN,
                    truncation: big_y.as_f64(),
                    reason: format!("bounded solution truncations still differ by {gap:e}"),
                });
            }
            big_y = next;
        }
    };
    // NaN marks heights at a singular right end, where the solution vanishes.
    Ok(raw
        .into_iter()
        .map(|v| if v.is_nan() { T::zero() } else { clamp_unit(v) })
        .collect())
}

fn clamp_unit<T: Real>(v: T) -> T {
    let slack = T::lit(1e-6);
    if v < T::zero() && v > -slack {
        T::zero()
    } else if v > T::one() && v < T::one() + slack {
        T::one()
    } else {
        v
    }
}

/// Integrates two columns backwards from `start` to `0` and returns each normalised by its
/// value at `0`, sampled at `ys`. Heights above `start` get the value at `start` when
/// `R = inf` (the solution is constant past the support) and NaN otherwise.
#[allow(clippy::too_many_arguments)]
fn backward_columns<T: Real>(
    s: &KreinString<T>,
    lambda: T,
    start: T,
    include_start_atom: bool,
    ys: &[T],
    first: (T, T),
    second: (T, T),
    opts: &BoundedOptions<T>,
) -> Result<(Vec<T>, Vec<T>)> {
    let mut order: Vec<usize> = (0..ys.len()).collect();
    order.sort_by(|&a, &b| ys[b].partial_cmp(&ys[a]).unwrap_or(std::cmp::Ordering::Equal));
    let mut st = Basis::columns(start, first, second);
    let mut integ = Integrator::new(s, lambda, opts.solver, T::one());
    let mut samples: Vec<Option<(T, T, T)>> = vec![None; ys.len()];
    let mut pending = order.into_iter().peekable();
    let snap = |b: &Basis<T>| {
        let f = b.state();
        (f.phi_d, f.phi_n, f.log_scale)
    };
    while let Some(&i) = pending.peek() {
        if ys[i] <= start {
            break;
        }
        samples[i] = if s.length().is_infinite() {
            Some(snap(&st))
        } else {
            Some((T::nan(), T::nan(), T::zero()))
        };
        pending.next();
    }
    let mut include = include_start_atom;
    while let Some(&i) = pending.peek() {
        let target = ys[i];
        integ.propagate(&mut st, target, include, &mut |_| {})?;
        if st.y != start {
            include = true;
        }
        while let Some(&j) = pending.peek() {
            if ys[j] != target {
                break;
            }
            samples[j] = Some(snap(&st));
            pending.next();
        }
    }
    integ.propagate(&mut st, T::zero(), include, &mut |_| {})?;
    let (d0, n0, ls0) = snap(&st);
    let mut d = Vec::with_capacity(ys.len());
    let mut n = Vec::with_capacity(ys.len());
    for sample in samples {
        let (a, b, ls) = sample.expect("every height sampled");
        let scale = (ls - ls0).exp();
        d.push(a / d0 * scale);
        n.push(b / n0 * scale);
    }
    Ok((d, n))
}

// ---------------------------------------------------------------------------
// Tables

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralEntry<T> {
    pub lambda: T,
    pub mu: T,
    pub bracket_lo: T,
    pub bracket_hi: T,
    #[serde(rename = "truncation_Y")]
    pub truncation_y: T,
}

/// `mu` on a grid of `lambda` values with brackets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralFunctionTable<T> {
    pub entries: Vec<SpectralEntry<T>>,
}

pub const TABLE_HEADER: &str = "lambda,mu,bracket_lo,bracket_hi,truncation_Y";

/// `n` log-spaced points from `lo` to `hi` inclusive.
pub fn log_grid<T: Real>(lo: T, hi: T, n: usize) -> Vec<T> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| {
            if i == 0 {
                lo
            } else if i == n - 1 {
                hi
            } else {
                (a + (b - a) * T::lit(i as f64) / T::lit((n - 1) as f64)).exp()
            }
        })
        .collect()
}

impl<T: Real> SpectralFunctionTable<T> {
    /// Evaluates every grid point, in parallel, assembling entries in grid order.
    pub fn compute(s: &KreinString<T>, lambdas: &[T], opts: &MuOptions<T>) -> Result<Self> {
        let entries = lambdas
            .par_iter()
            .map(|&lambda| {
                spectral_mu(s, lambda, opts).map(|e| SpectralEntry {
                    lambda,
                    mu: e.mu,
                    bracket_lo: e.lo,
                    bracket_hi: e.hi,
                    truncation_y: e.truncation,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SpectralFunctionTable { entries })
    }

    /// Builds a table from plain `(lambda, mu)` pairs with degenerate brackets.
    pub fn from_values(values: &[(T, T)]) -> Self {
        SpectralFunctionTable {
            entries: values
                .iter()
                .map(|&(lambda, mu)| SpectralEntry {
                    lambda,
                    mu,
                    bracket_lo: mu,
                    bracket_hi: mu,
                    truncation_y: T::zero(),
                })
                .collect(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(TABLE_HEADER);
        out.push('\n');
        for e in &self.entries {
            let row = [e.lambda, e.mu, e.bracket_lo, e.bracket_hi, e.truncation_y]
                .iter()
                .map(|v| format_real(v.as_f64()))
                .collect::<Vec<_>>()
                .join(",");
            out.push_str(&row);
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim() == TABLE_HEADER => {}
            other => {
                return Err(Error::parse(
                    "header",
                    format!("expected {TABLE_HEADER:?}, got {other:?}"),
                ))
            }
        }
        let mut entries = Vec::new();
        for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let vals = line
                .split(',')
                .map(|v| parse_real(v.trim()).map(T::lit))
                .collect::<Option<Vec<T>>>()
                .filter(|v| v.len() == 5)
                .ok_or_else(|| Error::parse(format!("row {}", i + 1), format!("bad row {line:?}")))?;
            entries.push(SpectralEntry {
                lambda: vals[0],
                mu: vals[1],
                bracket_lo: vals[2],
                bracket_hi: vals[3],
                truncation_y: vals[4],
            });
        }
        Ok(SpectralFunctionTable { entries })
    }

    pub fn to_json(&self) -> String {
        let rows = self
            .entries
            .iter()
            .map(|e| {
                format!(
                    "{{\"lambda\":{},\"mu\":{},\"bracket_lo\":{},\"bracket_hi\":{},\"truncation_Y\":{}}}",
                    json_real(e.lambda.as_f64()),
                    json_real(e.mu.as_f64()),
                    json_real(e.bracket_lo.as_f64()),
                    json_real(e.bracket_hi.as_f64()),
                    json_real(e.truncation_y.as_f64())
                )
            })
            .collect::<Vec<_>>();
        format!("[{}]\n", rows.join(",\n "))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let rows: Vec<serde_json::Map<String, serde_json::Value>> =
            serde_json::from_str(text).map_err(|e| Error::parse("table", e.to_string()))?;
        let get = |row: &serde_json::Map<String, serde_json::Value>, key: &str| -> Result<T> {
            match row.get(key) {
                Some(serde_json::Value::Number(n)) => n.as_f64().map(T::lit),
                Some(serde_json::Value::String(s)) => parse_real(s).map(T::lit),
                _ => None,
            }
            .ok_or_else(|| Error::parse(key, "missing or not a number"))
        };
        let entries = rows
            .iter()
            .map(|row| {
                Ok(SpectralEntry {
                    lambda: get(row, "lambda")?,
                    mu: get(row, "mu")?,
                    bracket_lo: get(row, "bracket_lo")?,
                    bracket_hi: get(row, "bracket_hi")?,
                    truncation_y: get(row, "truncation_Y")?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SpectralFunctionTable { entries })
    }

    /// `mu` nondecreasing across entries up to twice the bracket widths.
    pub fn is_monotone(&self) -> bool {
        self.entries.windows(2).all(|w| {
            let slack = T::lit(2.0) * ((w[0].bracket_hi - w[0].bracket_lo) + (w[1].bracket_hi - w[1].bracket_lo));
            w[1].mu >= w[0].mu - slack
        })
    }
}

/// Seventeen significant digits, the shortest width that round-trips every `f64`.
pub fn format_real(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.16e}")
    }
}

/// JSON rendering of [`format_real`]; non-finite values become strings.
pub fn json_real(v: f64) -> String {
    if v.is_finite() {
        format_real(v)
    } else {
        format!("\"{}\"", format_real(v))
    }
}

pub fn parse_real(s: &str) -> Option<f64> {
    match s {
        "inf" => Some(f64::INFINITY),
        "-inf" => Some(f64::NEG_INFINITY),
        "nan" => Some(f64::NAN),
        _ => s.parse().ok(),
    }
}

// ---------------------------------------------------------------------------
// Complete Bernstein checks

#[derive(Clone, Debug, PartialEq)]
pub struct PropertyCheck {
    pub name: &'static str,
    pub passed: bool,
    /// Largest amount by which a value violates its sign requirement beyond the error
    /// budget; zero when the property holds.
    pub worst_violation: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CbfReport {
    pub properties: Vec<PropertyCheck>,
}

impl CbfReport {
    pub fn passed(&self) -> bool {
        self.properties.iter().all(|p| p.passed)
    }

    pub fn property(&self, name: &str) -> Option<&PropertyCheck> {
        self.properties.iter().find(|p| p.name == name)
    }
}

/// Computes `mu` on `grid` and runs [`cbf_check_table`].
pub fn cbf_check<T: Real>(s: &KreinString<T>, grid: &[T], opts: &MuOptions<T>) -> Result<CbfReport> {
    if grid.len() < 16 {
        return Err(Error::Validation(format!(
            "cbf_check needs at least 16 grid points, got {}",
            grid.len()
        )));
    }
    if grid.iter().any(|l| !(*l > T::zero())) || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Validation("cbf_check grid must be positive and increasing".into()));
    }
    let table = SpectralFunctionTable::compute(s, grid, opts)?;
    Ok(cbf_check_table(&table, opts.solver.step_tol.as_f64() * 1e3))
}

/// Sign pattern of a Bernstein function on a tabulated grid: `mu >= 0`, first divided
/// differences `>= 0`, second `<= 0`, third `>= 0`, and `mu / lambda` nonincreasing.
///
/// Each divided difference gets an error budget `sum |coef_j| e_j` where `e_j` is the
/// half-width of the bracket at node `j`, plus `solver_rel_err * |mu_j|` and rounding.
pub fn cbf_check_table<T: Real>(table: &SpectralFunctionTable<T>, solver_rel_err: f64) -> CbfReport {
    let lam: Vec<f64> = table.entries.iter().map(|e| e.lambda.as_f64()).collect();
    let mu: Vec<f64> = table.entries.iter().map(|e| e.mu.as_f64()).collect();
    let err: Vec<f64> = table
        .entries
        .iter()
        .map(|e| {
            let m = e.mu.as_f64().abs();
            0.5 * (e.bracket_hi - e.bracket_lo).as_f64().abs() + solver_rel_err * m + 4.0 * f64::EPSILON * m
        })
        .collect();
    let n = lam.len();
    let mut properties = Vec::new();

    let mut worst = 0f64;
    for i in 0..n {
        worst = worst.max(-mu[i] - err[i]);
    }
    properties.push(PropertyCheck {
        name: "nonnegative",
        passed: worst <= 0.0,
        worst_violation: worst.max(0.0),
    });

    for (order, name, sign) in [(1, "increasing", 1.0), (2, "concave", -1.0), (3, "third_difference", 1.0)] {
        let mut worst = 0f64;
        for i in 0..n.saturating_sub(order) {
            // Newton divided difference as a linear combination of the node values.
            let nodes = &lam[i..=i + order];
            let mut value = 0.0;
            let mut budget = 0.0;
            for j in 0..=order {
                let mut denom = 1.0;
                for k in 0..=order {
                    if k != j {
                        denom *= nodes[j] - nodes[k];
                    }
                }
                value += mu[i + j] / denom;
                budget += err[i + j] / denom.abs();
            }
            worst = worst.max(-sign * value - budget);
        }
        properties.push(PropertyCheck {
            name,
            passed: worst <= 0.0,
            worst_violation: worst.max(0.0),
        });
    }

    let mut worst = 0f64;
    for i in 0..n.saturating_sub(1) {
        let a = mu[i] / lam[i];
        let b = mu[i + 1] / lam[i + 1];
        let budget = err[i] / lam[i] + err[i + 1] / lam[i + 1];
        worst = worst.max(b - a - budget);
    }
    properties.push(PropertyCheck {
        name: "ratio_nonincreasing",
        passed: worst <= 0.0,
        worst_violation: worst.max(0.0),
    });
    CbfReport { properties }
}
