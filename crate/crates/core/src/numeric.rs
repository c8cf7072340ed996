//! Scalar numerics: normal distribution helpers, adaptive Gauss–Kronrod
//! quadrature and a Nelder–Mead minimizer.

use statrs::function::erf::erfc;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x - LN_SQRT_2PI).exp()
}

pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// `ln Φ(x)`, accurate far into the lower tail.
pub fn log_norm_cdf(x: f64) -> f64 {
    if x > -30.0 {
        norm_cdf(x).ln()
    } else {
        let x2 = x * x;
        let series = 1.0 - 1.0 / x2 + 3.0 / (x2 * x2) - 15.0 / (x2 * x2 * x2);
        -0.5 * x2 - (-x).ln() - LN_SQRT_2PI + series.ln()
    }
}

/// `ln(Φ(b) − Φ(a))` for `a ≤ b`.
pub fn log_norm_interval(a: f64, b: f64) -> f64 {
    if b <= a {
        return f64::NEG_INFINITY;
    }
    if a > 0.0 {
        return log_norm_interval(-b, -a);
    }
    if b <= 0.0 {
        let lb = log_norm_cdf(b);
        let la = log_norm_cdf(a);
        lb + (-(la - lb).exp()).ln_1p()
    } else {
        (1.0 - norm_cdf(a) - norm_cdf(-b)).ln()
    }
}

/// Mean and variance of `N(mean, sd²)` truncated to `[lo, hi]`.
pub fn truncated_normal_moments(mean: f64, sd: f64, lo: f64, hi: f64) -> (f64, f64) {
    let a = (lo - mean) / sd;
    let b = (hi - mean) / sd;
    let log_z = log_norm_interval(a, b);
    if !log_z.is_finite() {
        // Interval carries no mass at double precision: collapse to the nearest end.
        let m = if mean < lo { lo } else { hi };
        return (m, 0.0);
    }
    let ratio = |x: f64| if x.is_finite() { (-0.5 * x * x - LN_SQRT_2PI - log_z).exp() } else { 0.0 };
    let (pa, pb) = (ratio(a), ratio(b));
    let ta = if a.is_finite() { a * pa } else { 0.0 };
    let tb = if b.is_finite() { b * pb } else { 0.0 };
    let m = mean + sd * (pa - pb);
    let v = sd * sd * (1.0 + ta - tb - (pa - pb) * (pa - pb));
    (m.clamp(lo, hi), v.max(0.0))
}

#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Number of equal panels the interval is split into before adapting.
    pub initial_panels: usize,
    pub max_panels: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self { abs_tol: 1e-10, rel_tol: 1e-10, initial_panels: 8, max_panels: 4000 }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Quadrature {
    pub value: f64,
    pub error: f64,
    pub panels: usize,
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for i in 0..7 {
        let x = h * XGK[i];
        let s = f(c - x) + f(c + x);
        kronrod += WGK[i] * s;
        if i % 2 == 1 {
            gauss += WG[i / 2] * s;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Globally adaptive Gauss–Kronrod (7/15) quadrature of `f` over `[a, b]`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, opts: QuadOptions) -> Quadrature {
    if a == b {
        return Quadrature { value: 0.0, error: 0.0, panels: 0 };
    }
    let n0 = opts.initial_panels.max(1);
    let width = (b - a) / n0 as f64;
    // (lo, hi, value, error)
    let mut panels: Vec<(f64, f64, f64, f64)> = (0..n0)
        .map(|i| {
            let lo = a + width * i as f64;
            let hi = if i + 1 == n0 { b } else { lo + width };
            let (v, e) = gk15(&f, lo, hi);
            (lo, hi, v, e)
        })
        .collect();
    loop {
        let value: f64 = panels.iter().map(|p| p.2).sum();
        let error: f64 = panels.iter().map(|p| p.3).sum();
        if error <= opts.abs_tol.max(opts.rel_tol * value.abs()) || panels.len() >= opts.max_panels {
            return Quadrature { value, error, panels: panels.len() };
        }
        let (worst, _) = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("at least one panel");
        let (lo, hi, _, _) = panels.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            let value: f64 = panels.iter().map(|p| p.2).sum();
            return Quadrature { value, error, panels: panels.len() };
        }
        let (v1, e1) = gk15(&f, lo, mid);
        let (v2, e2) = gk15(&f, mid, hi);
        panels.push((lo, mid, v1, e1));
        panels.push((mid, hi, v2, e2));
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct NelderMeadOptions {
    pub max_iter: usize,
    /// Convergence when the spread of simplex values falls below this.
    pub f_tol: f64,
    /// ... and the simplex diameter falls below this.
    pub x_tol: f64,
    pub initial_step: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self { max_iter: 20_000, f_tol: 1e-10, x_tol: 1e-8, initial_step: 0.1 }
    }
}

/// Minimizes `f` by the Nelder–Mead simplex method. Non-finite values are
/// treated as `+∞`.
pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(mut f: F, start: &[f64], opts: NelderMeadOptions) -> Minimum {
    let n = start.len();
    let mut eval = |x: &[f64]| {
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };
    let mut simplex: Vec<Vec<f64>> = vec![start.to_vec()];
    for i in 0..n {
        let mut p = start.to_vec();
        p[i] += if p[i].abs() > 1e-3 { opts.initial_step * p[i].abs().max(0.5) } else { opts.initial_step };
        simplex.push(p);
    }
    let mut values: Vec<f64> = simplex.iter().map(|p| eval(p)).collect();
    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        iterations += 1;
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let spread = (values[n] - values[0]).abs();
        let diameter = simplex[1..]
            .iter()
            .map(|p| p.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if values[0].is_finite() && spread <= opts.f_tol * (1.0 + values[0].abs()) && diameter <= opts.x_tol {
            converged = true;
            break;
        }

        let centroid: Vec<f64> =
            (0..n).map(|d| simplex[..n].iter().map(|p| p[d]).sum::<f64>() / n as f64).collect();
        let towards = |coef: f64, p: &[f64]| -> Vec<f64> {
            centroid.iter().zip(p).map(|(c, x)| c + coef * (x - c)).collect()
        };
        let reflected = towards(-alpha, &simplex[n]);
        let fr = eval(&reflected);
        if fr < values[0] {
            let expanded = towards(-gamma, &simplex[n]);
            let fe = eval(&expanded);
            if fe < fr {
                simplex[n] = expanded;
                values[n] = fe;
            } else {
                simplex[n] = reflected;
                values[n] = fr;
            }
        } else if fr < values[n - 1] {
            simplex[n] = reflected;
            values[n] = fr;
        } else {
            let (contracted, fc) = if fr < values[n] {
                let c = towards(-rho, &simplex[n]);
                let fc = eval(&c);
                (c, fc)
            } else {
                let c = towards(rho, &simplex[n]);
                let fc = eval(&c);
                (c, fc)
            };
            if fc < values[n].min(fr) {
                simplex[n] = contracted;
                values[n] = fc;
            } else {
                let best = simplex[0].clone();
                for i in 1..=n {
                    simplex[i] = best.iter().zip(&simplex[i]).map(|(b, x)| b + sigma * (x - b)).collect();
                    values[i] = eval(&simplex[i]);
                }
            }
        }
    }
    let best = (0..=n).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap_or(0);
    Minimum { x: simplex[best].clone(), value: values[best], iterations, converged }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn normal_interval_matches_direct_difference() {
        for &(a, b) in &[(-1.0, 0.5), (0.2, 3.0), (-3.0, -0.1), (-0.5, 0.5)] {
            let direct = (norm_cdf(b) - norm_cdf(a)).ln();
            assert_relative_eq!(log_norm_interval(a, b), direct, epsilon = 1e-12);
        }
        // Deep tails stay finite.
        assert!(log_norm_interval(40.0, 41.0).is_finite());
        assert!(log_norm_interval(-41.0, -40.0).is_finite());
        assert_relative_eq!(log_norm_interval(-41.0, -40.0), log_norm_interval(40.0, 41.0), epsilon = 1e-9);
    }

    #[test]
    fn log_cdf_tail_is_continuous() {
        assert_relative_eq!(log_norm_cdf(-29.999_999), log_norm_cdf(-30.000_001), epsilon = 1e-4);
    }

    #[test]
    fn quadrature_of_gaussian_and_polynomial() {
        let q = integrate(norm_pdf, -8.0, 8.0, QuadOptions::default());
        assert_relative_eq!(q.value, 1.0, epsilon = 1e-12);
        let q = integrate(|x| x * x * x - x, 0.0, 2.0, QuadOptions::default());
        assert_relative_eq!(q.value, 2.0, epsilon = 1e-12);
        // A narrow spike.
        let q = integrate(|x| norm_pdf((x - 0.3) / 0.001) / 0.001, 0.0, 1.0, QuadOptions::default());
        assert_relative_eq!(q.value, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn truncated_moments_match_quadrature() {
        let (mean, sd, lo, hi) = (0.3, 0.4, 0.0, 1.0);
        let z = integrate(|x| norm_pdf((x - mean) / sd), lo, hi, QuadOptions::default()).value;
        let m1 = integrate(|x| x * norm_pdf((x - mean) / sd), lo, hi, QuadOptions::default()).value / z;
        let m2 = integrate(|x| x * x * norm_pdf((x - mean) / sd), lo, hi, QuadOptions::default()).value / z;
        let (m, v) = truncated_normal_moments(mean, sd, lo, hi);
        assert_relative_eq!(m, m1, epsilon = 1e-10);
        assert_relative_eq!(v, m2 - m1 * m1, epsilon = 1e-10);
    }

    #[test]
    fn nelder_mead_rosenbrock() {
        let m = nelder_mead(
            |x| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2),
            &[-1.2, 1.0],
            NelderMeadOptions::default(),
        );
        assert!(m.converged);
        assert_relative_eq!(m.x[0], 1.0, epsilon = 1e-5);
        assert_relative_eq!(m.x[1], 1.0, epsilon = 1e-5);
    }
}
