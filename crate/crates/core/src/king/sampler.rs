//! Posterior draws of local `B_g` on the tomography line by elliptical slice sampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::likelihood::{line_restriction, TruncNormParams};
use super::tomography::TomographyLine;

pub const DEFAULT_BURNIN: usize = 500;
pub const DEFAULT_DRAWS: usize = 2000;
const MAX_SHRINKS: usize = 200;

/// RNG for geography `g`, independent of thread scheduling.
pub fn geography_rng(seed: u64, g: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(g as u64);
    rng
}

/// Markov chain on the segment targeting the normal density restricted to it.
///
/// In arc length the restricted density is a univariate normal truncated to
/// `[0, length]`; each step slices an ellipse through the current point and a
/// draw from that normal, shrinking the angle bracket until the proposal
/// falls on the segment.
pub fn king_local_sample<R: Rng>(params: &TruncNormParams, line: &TomographyLine, draws: usize, burnin: usize, rng: &mut R) -> Vec<[f64; 2]> {
    if line.is_point() {
        return vec![line.at(0.0); draws];
    }
    let len = line.length();
    let (mean, sd, _) = line_restriction(params, line);
    let inside = |s: f64| (0.0..=len).contains(&s);
    let mut s = if inside(mean) { mean } else { 0.5 * len };
    let mut out = Vec::with_capacity(draws);
    for it in 0..burnin + draws {
        let nu: f64 = rng.sample::<f64, _>(StandardNormal) * sd;
        let mut theta = rng.random_range(0.0..std::f64::consts::TAU);
        let (mut lo, mut hi) = (theta - std::f64::consts::TAU, theta);
        let x0 = s - mean;
        for _ in 0..MAX_SHRINKS {
            let cand = mean + x0 * theta.cos() + nu * theta.sin();
            if inside(cand) {
                s = cand;
                break;
            }
            if theta < 0.0 {
                lo = theta;
            } else {
                hi = theta;
            }
            theta = rng.random_range(lo..hi);
        }
        if it >= burnin {
            out.push(line.at((s / len).clamp(0.0, 1.0)));
        }
    }
    out
}

/// Posterior mean of every local `B_g`, one independent chain per geography.
pub fn posterior_means(params: &TruncNormParams, lines: &[TomographyLine], draws: usize, burnin: usize, seed: u64) -> Vec<[f64; 2]> {
    lines
        .par_iter()
        .enumerate()
        .map(|(g, line)| {
            let mut rng = geography_rng(seed, g);
            let d = king_local_sample(params, line, draws, burnin, &mut rng);
            let n = d.len() as f64;
            [d.iter().map(|b| b[0]).sum::<f64>() / n, d.iter().map(|b| b[1]).sum::<f64>() / n]
        })
        .collect()
}

/// Mean and batch-means standard error of a chain.
pub fn batch_mean_se(values: &[f64], batches: usize) -> (f64, f64) {
    let n = values.len();
    let size = n / batches;
    let means: Vec<f64> = (0..batches).map(|b| values[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64).collect();
    let m = values.iter().sum::<f64>() / n as f64;
    let var = means.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (batches - 1) as f64;
    (m, (var / batches as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{integrate, QuadOptions};

    #[test]
    fn symmetric_line_centres_at_half() {
        let p = TruncNormParams::new([0.5, 0.5], [[0.25, 0.0], [0.0, 0.25]]).unwrap();
        let line = TomographyLine::new(0.5, 0.5).unwrap();
        let d = king_local_sample(&p, &line, 20_000, 500, &mut geography_rng(1, 0));
        let b1: Vec<f64> = d.iter().map(|b| b[0]).collect();
        let (m, se) = batch_mean_se(&b1, 50);
        assert!((m - 0.5).abs() < 3.0 * se, "{m} ± {se}");
    }

    #[test]
    fn point_line_returns_the_point() {
        let p = TruncNormParams::new([0.5, 0.5], [[0.25, 0.0], [0.0, 0.25]]).unwrap();
        let line = TomographyLine::new(0.3, 1.0).unwrap();
        let d = king_local_sample(&p, &line, 100, 10, &mut geography_rng(1, 0));
        assert!(d.iter().all(|b| *b == [1.0, 1.0]));
    }

    #[test]
    fn draws_stay_on_segment_and_match_quadrature() {
        let p = TruncNormParams::new([0.2, 0.9], [[0.09, -0.03], [-0.03, 0.04]]).unwrap();
        let line = TomographyLine::new(0.35, 0.55).unwrap();
        let d = king_local_sample(&p, &line, 20_000, 500, &mut geography_rng(7, 3));
        for b in &d {
            assert!(line.identity_residual(*b) <= 1e-12);
            assert!((0.0..=1.0).contains(&b[0]) && (0.0..=1.0).contains(&b[1]));
        }
        let dens = |t: f64| p.log_density(line.at(t)).exp();
        let z = integrate(dens, 0.0, 1.0, QuadOptions::default()).value;
        let m = integrate(|t| line.at(t)[0] * dens(t), 0.0, 1.0, QuadOptions::default()).value / z;
        let b1: Vec<f64> = d.iter().map(|b| b[0]).collect();
        let (mean, se) = batch_mean_se(&b1, 50);
        assert!((mean - m).abs() < 3.0 * se, "{mean} vs {m} ± {se}");
    }

    #[test]
    fn deterministic_per_seed() {
        let p = TruncNormParams::new([0.4, 0.4], [[0.01, 0.0], [0.0, 0.01]]).unwrap();
        let lines = vec![TomographyLine::new(0.3, 0.4).unwrap(), TomographyLine::new(0.6, 0.5).unwrap()];
        assert_eq!(posterior_means(&p, &lines, 200, 50, 9), posterior_means(&p, &lines, 200, 50, 9));
    }
}
