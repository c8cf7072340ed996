//! Densities of the bivariate normal truncated to the unit square.

use crate::error::{Error, Result};
use crate::numeric::{integrate, log_norm_interval, truncated_normal_moments, QuadOptions};

use super::tomography::TomographyLine;

const LN_2PI: f64 = 1.837_877_066_409_345_5;
const LN_SQRT_2PI: f64 = 0.5 * LN_2PI;

/// Location `μ` and covariance `Σ` of the untruncated bivariate normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncNormParams {
    pub mu: [f64; 2],
    pub sigma: [[f64; 2]; 2],
}

impl TruncNormParams {
    pub fn new(mu: [f64; 2], sigma: [[f64; 2]; 2]) -> Result<Self> {
        let p = Self { mu, sigma };
        if !(sigma[0][0] > 0.0 && p.det() > 0.0 && (sigma[0][1] - sigma[1][0]).abs() <= 1e-12 * sigma[0][0].max(sigma[1][1])) {
            return Err(Error::InvalidData("covariance must be symmetric positive definite".into()));
        }
        Ok(p)
    }

    /// From the unconstrained vector `(μ₁, μ₂, ln L₁₁, L₂₁, ln L₂₂)` with `Σ = LLᵀ`.
    pub fn from_unconstrained(theta: &[f64]) -> Self {
        let l11 = theta[2].exp();
        let l21 = theta[3];
        let l22 = theta[4].exp();
        let s11 = l11 * l11;
        let s21 = l21 * l11;
        let s22 = l21 * l21 + l22 * l22;
        Self { mu: [theta[0], theta[1]], sigma: [[s11, s21], [s21, s22]] }
    }

    pub fn to_unconstrained(&self) -> [f64; 5] {
        let l11 = self.sigma[0][0].sqrt();
        let l21 = self.sigma[1][0] / l11;
        let l22 = (self.sigma[1][1] - l21 * l21).max(1e-300).sqrt();
        [self.mu[0], self.mu[1], l11.ln(), l21, l22.ln()]
    }

    pub fn det(&self) -> f64 {
        self.sigma[0][0] * self.sigma[1][1] - self.sigma[0][1] * self.sigma[1][0]
    }

    pub fn precision(&self) -> [[f64; 2]; 2] {
        let d = self.det();
        [[self.sigma[1][1] / d, -self.sigma[0][1] / d], [-self.sigma[1][0] / d, self.sigma[0][0] / d]]
    }

    /// Correlation of the untruncated normal.
    pub fn correlation(&self) -> f64 {
        self.sigma[0][1] / (self.sigma[0][0] * self.sigma[1][1]).sqrt()
    }

    /// Swaps the two categories.
    pub fn swapped(&self) -> Self {
        Self { mu: [self.mu[1], self.mu[0]], sigma: [[self.sigma[1][1], self.sigma[0][1]], [self.sigma[1][0], self.sigma[0][0]]] }
    }

    /// Untruncated log density.
    pub fn log_density(&self, b: [f64; 2]) -> f64 {
        let p = self.precision();
        let d = [b[0] - self.mu[0], b[1] - self.mu[1]];
        let q = d[0] * (p[0][0] * d[0] + p[0][1] * d[1]) + d[1] * (p[1][0] * d[0] + p[1][1] * d[1]);
        -0.5 * q - LN_2PI - 0.5 * self.det().ln()
    }

    /// Conditional mean and sd of `b₂` given `b₁`.
    fn conditional(&self, b1: f64) -> (f64, f64) {
        let s1 = self.sigma[0][0].sqrt();
        let s2 = self.sigma[1][1].sqrt();
        let rho = self.correlation();
        (self.mu[1] + rho * s2 / s1 * (b1 - self.mu[0]), s2 * (1.0 - rho * rho).max(0.0).sqrt())
    }
}

/// Tolerances for the square integrals.
pub const SQUARE_TOLERANCE: f64 = 1e-10;
/// Log-scale drop below the peak beyond which the outer integrand is zero in double precision.
const LOG_UNDERFLOW: f64 = 745.0;

/// `ln` of the outer integrand `φ(b₁)·P(b₂ ∈ [0,1] | b₁)`; concave in `b₁`.
fn log_outer(params: &TruncNormParams, b1: f64) -> f64 {
    let s1 = params.sigma[0][0].sqrt();
    let (m, s) = params.conditional(b1);
    let z1 = (b1 - params.mu[0]) / s1;
    -0.5 * z1 * z1 - LN_SQRT_2PI - s1.ln() + log_norm_interval(-m / s, (1.0 - m) / s)
}

/// Peak of the outer integrand on `[0, 1]` and the interval where it is non-negligible.
fn outer_window(params: &TruncNormParams) -> Option<(f64, f64, f64)> {
    let f = |b1: f64| log_outer(params, b1);
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (0.0, 1.0);
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > 1e-13 {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = f(d);
        }
    }
    let (mut at, mut peak) = (0.5 * (a + b), f(0.5 * (a + b)));
    for e in [0.0, 1.0] {
        if f(e) > peak {
            (at, peak) = (e, f(e));
        }
    }
    if !peak.is_finite() {
        return None;
    }
    let cut = peak - LOG_UNDERFLOW;
    let edge = |inside: f64, outside: f64| {
        if f(outside) >= cut {
            return outside;
        }
        let (mut i, mut o) = (inside, outside);
        for _ in 0..60 {
            let mid = 0.5 * (i + o);
            if f(mid) >= cut {
                i = mid;
            } else {
                o = mid;
            }
        }
        o
    };
    Some((edge(at, 0.0), edge(at, 1.0), peak))
}

/// `∫ g(b₁)·exp(log_outer(b₁) − peak) db₁` over the window, with the peak.
fn scaled_integral<G: Fn(f64) -> f64>(params: &TruncNormParams, window: (f64, f64, f64), g: G) -> f64 {
    let (lo, hi, peak) = window;
    if hi <= lo {
        return g(lo);
    }
    let opts = QuadOptions { abs_tol: 1e-300, rel_tol: SQUARE_TOLERANCE, initial_panels: 16, max_panels: 4000 };
    integrate(|b1| g(b1) * (log_outer(params, b1) - peak).exp(), lo, hi, opts).value
}

/// `ln P(B ∈ [0,1]²)` under the untruncated normal; `-∞` when the square carries no mass.
pub fn log_normalizing_constant(params: &TruncNormParams) -> f64 {
    match outer_window(params) {
        Some(w) if w.1 > w.0 => w.2 + scaled_integral(params, w, |_| 1.0).ln(),
        _ => f64::NEG_INFINITY,
    }
}

/// `P(B ∈ [0,1]²)` under the untruncated normal.
pub fn normalizing_constant(params: &TruncNormParams) -> f64 {
    log_normalizing_constant(params).exp()
}

/// Mean of the normal truncated to the unit square. Stays defined when the
/// square lies far in the tails, where the mass piles up on the nearest edge.
pub fn truncated_mean(params: &TruncNormParams) -> [f64; 2] {
    let Some(w) = outer_window(params) else {
        return [params.mu[0].clamp(0.0, 1.0), params.mu[1].clamp(0.0, 1.0)];
    };
    let cond_mean = |b1: f64| {
        let (m, s) = params.conditional(b1);
        truncated_normal_moments(m, s, 0.0, 1.0).0
    };
    if w.1 <= w.0 {
        return [w.0, cond_mean(w.0)];
    }
    let z = scaled_integral(params, w, |_| 1.0);
    let m1 = scaled_integral(params, w, |b1| b1) / z;
    let m2 = scaled_integral(params, w, cond_mean) / z;
    [m1.clamp(0.0, 1.0), m2.clamp(0.0, 1.0)]
}

/// Restriction of the normal to a tomography line as a univariate normal in
/// arc length `s` from `start`: returns `(mean, sd, ln c)` such that the
/// density at arc length `s` equals `c · φ((s − mean)/sd)/sd`.
pub fn line_restriction(params: &TruncNormParams, line: &TomographyLine) -> (f64, f64, f64) {
    let len = line.length();
    let u = [(line.end[0] - line.start[0]) / len, (line.end[1] - line.start[1]) / len];
    let p = params.precision();
    let d = [line.start[0] - params.mu[0], line.start[1] - params.mu[1]];
    let pu = [p[0][0] * u[0] + p[0][1] * u[1], p[1][0] * u[0] + p[1][1] * u[1]];
    let a = u[0] * pu[0] + u[1] * pu[1];
    let b = d[0] * pu[0] + d[1] * pu[1];
    let c = d[0] * (p[0][0] * d[0] + p[0][1] * d[1]) + d[1] * (p[1][0] * d[0] + p[1][1] * d[1]);
    let mean = -b / a;
    let sd = 1.0 / a.sqrt();
    // ln of the untruncated density's constant times the Gaussian integral factor.
    let log_c = -0.5 * (c - b * b / a) - LN_2PI - 0.5 * params.det().ln() + 0.5 * (std::f64::consts::TAU / a).ln();
    (mean, sd, log_c)
}

/// `ln ∫ φ₂(b(s)) ds` along the segment, in closed form.
pub fn log_line_integral(params: &TruncNormParams, line: &TomographyLine) -> f64 {
    let (mean, sd, log_c) = line_restriction(params, line);
    log_c + log_norm_interval((0.0 - mean) / sd, (line.length() - mean) / sd)
}

/// Log density of the observed outcome for one geography:
/// the line integral over the gradient norm `‖(x, 1 − x)‖`, over the square mass.
/// `None` for point-valued lines, which carry no density.
pub fn log_likelihood_term(params: &TruncNormParams, line: &TomographyLine, log_z: f64) -> Option<f64> {
    if line.is_point() {
        return None;
    }
    let grad = (line.x * line.x + (1.0 - line.x) * (1.0 - line.x)).sqrt();
    Some(log_line_integral(params, line) - grad.ln() - log_z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params() -> TruncNormParams {
        TruncNormParams::new([0.4, 0.7], [[0.04, 0.01], [0.01, 0.09]]).unwrap()
    }

    #[test]
    fn line_integral_matches_quadrature() {
        let p = params();
        for &(x, y) in &[(0.3, 0.5), (0.8, 0.9), (0.5, 0.5), (1.0, 0.3), (0.0, 0.6)] {
            let line = TomographyLine::new(x, y).unwrap();
            let len = line.length();
            let q = integrate(|t| p.log_density(line.at(t)).exp() * len, 0.0, 1.0, QuadOptions::default()).value;
            assert_relative_eq!(log_line_integral(&p, &line), q.ln(), epsilon = 1e-9);
        }
    }

    #[test]
    fn normalizer_matches_nested_quadrature() {
        let p = params();
        let opts = QuadOptions::default();
        let inner = |b1: f64| integrate(|b2| p.log_density([b1, b2]).exp(), 0.0, 1.0, opts).value;
        let z = integrate(inner, 0.0, 1.0, opts).value;
        assert_relative_eq!(normalizing_constant(&p), z, epsilon = 1e-9);
        let m1 = integrate(|b1| b1 * inner(b1), 0.0, 1.0, opts).value / z;
        let m2 = integrate(|b1| integrate(|b2| b2 * p.log_density([b1, b2]).exp(), 0.0, 1.0, opts).value, 0.0, 1.0, opts).value / z;
        let m = truncated_mean(&p);
        assert_relative_eq!(m[0], m1, epsilon = 1e-9);
        assert_relative_eq!(m[1], m2, epsilon = 1e-9);
    }

    #[test]
    fn negligible_truncation() {
        let p = TruncNormParams::new([0.5, 0.3], [[1e-4, 0.0], [0.0, 1e-4]]).unwrap();
        let m = truncated_mean(&p);
        assert_relative_eq!(m[0], 0.5, epsilon = 1e-6);
        assert_relative_eq!(m[1], 0.3, epsilon = 1e-6);
        assert_relative_eq!(normalizing_constant(&p), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn likelihood_is_a_density_in_y() {
        // ∫ p(y) dy over [0, 1] = 1 for a fixed share.
        let p = params();
        let z = normalizing_constant(&p).ln();
        for &x in &[0.2, 0.65] {
            let total = integrate(
                |y| log_likelihood_term(&p, &TomographyLine::new(x, y).unwrap(), z).map_or(0.0, f64::exp),
                0.0,
                1.0,
                QuadOptions { rel_tol: 1e-9, ..Default::default() },
            )
            .value;
            assert_relative_eq!(total, 1.0, epsilon = 1e-7);
        }
    }

    #[test]
    fn unconstrained_round_trip() {
        let p = params();
        let q = TruncNormParams::from_unconstrained(&p.to_unconstrained());
        assert_relative_eq!(q.sigma[1][1], p.sigma[1][1], epsilon = 1e-15);
        assert_relative_eq!(q.sigma[0][1], p.sigma[0][1], epsilon = 1e-15);
    }
}
