//! Special functions needed by the kernels. Everything here is evaluated in `f64`.

use std::f64::consts::PI;

pub use statrs::function::gamma::gamma;

// B_{2j} / (2j)! for j = 1..=8.
const BERNOULLI_OVER_FACTORIAL: [f64; 8] = [
    1.0 / 12.0,
    -1.0 / 720.0,
    1.0 / 30240.0,
    -1.0 / 1209600.0,
    1.0 / 47900160.0,
    -691.0 / 1307674368000.0,
    1.0 / 74724249600.0,
    -3617.0 / 10670622842880000.0,
];

/// Hurwitz zeta `sum_{k>=0} (k + a)^{-s}`, analytically continued in `s`.
///
/// Euler-Maclaurin after shifting the argument by twelve terms; accurate to a few
/// ulps for `a > 0` and `-4 < s < 12`, `s != 1`.
pub fn hurwitz_zeta(s: f64, a: f64) -> f64 {
    assert!(a > 0.0, "hurwitz_zeta needs a > 0");
    assert!(s != 1.0, "hurwitz_zeta has a pole at s = 1");
    const SHIFT: usize = 12;
    let mut head = 0.0;
    for k in 0..SHIFT {
        head += (a + k as f64).powf(-s);
    }
    let x = a + SHIFT as f64;
    let mut tail = x.powf(1.0 - s) / (s - 1.0) + 0.5 * x.powf(-s);
    let mut rising = s;
    let mut power = x.powf(-s - 1.0);
    for (j, coef) in BERNOULLI_OVER_FACTORIAL.iter().enumerate() {
        tail += coef * rising * power;
        let m = 2.0 * j as f64;
        rising *= (s + m + 1.0) * (s + m + 2.0);
        power /= x * x;
    }
    head + tail
}

pub fn riemann_zeta(s: f64) -> f64 {
    hurwitz_zeta(s, 1.0)
}

/// Dirichlet beta `sum_k (-1)^k (2k + 1)^{-w}`.
pub fn dirichlet_beta(w: f64) -> f64 {
    4f64.powf(-w) * (hurwitz_zeta(w, 0.25) - hurwitz_zeta(w, 0.75))
}

/// Epstein zeta of the square lattice, `sum_{k != 0} |k|^{-s}` over `Z^2`, continued in `s`.
pub fn square_lattice_zeta(s: f64) -> f64 {
    4.0 * riemann_zeta(0.5 * s) * dirichlet_beta(0.5 * s)
}

/// Constant of the singular integral form of `(-Delta)^{alpha/2}` in dimension `d`.
pub fn fraclap_constant(d: usize, alpha: f64) -> f64 {
    let d = d as f64;
    -(2f64.powf(alpha)) * PI.powf(-0.5 * d) * gamma(0.5 * (d + alpha)) / gamma(-0.5 * alpha)
}

/// Normalisation of the Poisson kernel `c y^alpha (|x|^2 + y^2)^{-(d+alpha)/2}`.
pub fn poisson_constant(d: usize, alpha: f64) -> f64 {
    let d = d as f64;
    PI.powf(-0.5 * d) * gamma(0.5 * (d + alpha)) / gamma(0.5 * alpha)
}

/// Constant in the Dirichlet-to-Neumann map of the extension `div(y^{1-alpha} grad u) = 0`.
pub fn pseudo_dtn_constant(alpha: f64) -> f64 {
    -gamma(-0.5 * alpha) / (2f64.powf(alpha) * gamma(0.5 * alpha))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    #[test]
    fn zeta_known_values() {
        assert!(close(riemann_zeta(2.0), PI * PI / 6.0, 1e-14));
        assert!(close(riemann_zeta(4.0), PI.powi(4) / 90.0, 1e-14));
        assert!(close(riemann_zeta(0.0), -0.5, 1e-14));
        assert!(close(riemann_zeta(-1.0), -1.0 / 12.0, 1e-14));
        assert!(close(riemann_zeta(0.5), -1.4603545088095868, 1e-13));
        assert!(close(riemann_zeta(-0.5), -0.20788622497735457, 1e-13));
    }

    #[test]
    fn hurwitz_half_shift() {
        for &s in &[-0.7, 0.3, 1.5, 2.5] {
            let lhs = hurwitz_zeta(s, 0.5);
            let rhs = (2f64.powf(s) - 1.0) * riemann_zeta(s);
            assert!(close(lhs, rhs, 1e-13), "s = {s}");
        }
    }

    #[test]
    fn beta_and_lattice() {
        assert!(close(dirichlet_beta(2.0), 0.915965594177219, 1e-13));
        assert!(close(dirichlet_beta(3.0), PI.powi(3) / 32.0, 1e-13));
        // Lorenzen constant: sum over Z^2 minus origin of |k|^{-4} = 4 zeta(2) beta(2).
        let direct: f64 = (-400i64..=400)
            .flat_map(|m| (-400i64..=400).map(move |n| (m, n)))
            .filter(|&(m, n)| m != 0 || n != 0)
            .map(|(m, n)| ((m * m + n * n) as f64).powi(-2))
            .sum();
        assert!((square_lattice_zeta(4.0) - direct).abs() < 1e-4);
    }

    #[test]
    fn constants() {
        assert!(close(fraclap_constant(1, 1.0), 1.0 / PI, 1e-13));
        assert!(close(pseudo_dtn_constant(1.0), 1.0, 1e-13));
        assert!(close(poisson_constant(1, 1.0), 1.0 / PI, 1e-13));
        // d = 2: c = alpha / (2 pi).
        assert!(close(poisson_constant(2, 0.5), 0.25 / PI, 1e-13));
        assert!(close(gamma(-0.5), -2.0 * PI.sqrt(), 1e-13));
    }
}
