//! Scalar noise laws: the bounded quintic-polynomial CDF used by the
//! portfolio instance and a Gaussian for the toy instance.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

const QUANTILE_TOL: f64 = 1e-12;
/// Half-width, in standard deviations, of the window used to integrate
/// against a Gaussian density.
const GAUSSIAN_SUPPORT_SDS: f64 = 12.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum NoiseModel {
    /// CDF `(3t^5 - 10t^3 + 15t + 8)/16` with `t = (x - mean)/half_width` on
    /// `[mean - half_width, mean + half_width]`.
    Quintic {
        mean: f64,
        half_width: f64,
    },
    Gaussian {
        mean: f64,
        std_dev: f64,
    },
}

impl NoiseModel {
    pub fn quintic(mean: f64, half_width: f64) -> Result<Self> {
        if !(half_width > 0.0) {
            return Err(Error::param("sigma", format!("must be positive, got {half_width}")));
        }
        Ok(NoiseModel::Quintic { mean, half_width })
    }

    pub fn gaussian(mean: f64, std_dev: f64) -> Result<Self> {
        if !(std_dev > 0.0) {
            return Err(Error::param("std_dev", format!("must be positive, got {std_dev}")));
        }
        Ok(NoiseModel::Gaussian { mean, std_dev })
    }

    pub fn mean(&self) -> f64 {
        match *self {
            NoiseModel::Quintic { mean, .. } | NoiseModel::Gaussian { mean, .. } => mean,
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            NoiseModel::Quintic { mean, half_width } => quintic_cdf_unchecked(x, mean, half_width),
            NoiseModel::Gaussian { mean, std_dev } => normal_cdf((x - mean) / std_dev),
        }
    }

    /// Upper tail `P(xi > x)`, accurate far into the tail.
    pub fn survival(&self, x: f64) -> f64 {
        match *self {
            NoiseModel::Quintic { mean, half_width } => quintic_tail((x - mean) / half_width),
            NoiseModel::Gaussian { mean, std_dev } => normal_cdf(-(x - mean) / std_dev),
        }
    }

    pub fn density(&self, x: f64) -> f64 {
        match *self {
            NoiseModel::Quintic { mean, half_width } => quintic_density(x, mean, half_width),
            NoiseModel::Gaussian { mean, std_dev } => normal_pdf((x - mean) / std_dev) / std_dev,
        }
    }

    /// Derivative of the density.
    pub fn density_slope(&self, x: f64) -> f64 {
        match *self {
            NoiseModel::Quintic { mean, half_width } => {
                let t = (x - mean) / half_width;
                if t.abs() > 1.0 {
                    0.0
                } else {
                    -60.0 * t * (1.0 - t * t) / (16.0 * half_width * half_width)
                }
            }
            NoiseModel::Gaussian { mean, std_dev } => {
                let z = (x - mean) / std_dev;
                -z * normal_pdf(z) / (std_dev * std_dev)
            }
        }
    }

    /// Interval carrying (numerically) all of the mass.
    pub fn support(&self) -> (f64, f64) {
        match *self {
            NoiseModel::Quintic { mean, half_width } => (mean - half_width, mean + half_width),
            NoiseModel::Gaussian { mean, std_dev } => (
                mean - GAUSSIAN_SUPPORT_SDS * std_dev,
                mean + GAUSSIAN_SUPPORT_SDS * std_dev,
            ),
        }
    }

    /// Points where the density is not smooth.
    pub fn density_breakpoints(&self) -> Vec<f64> {
        match *self {
            NoiseModel::Quintic { mean, half_width } => vec![mean - half_width, mean + half_width],
            NoiseModel::Gaussian { .. } => Vec::new(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        sample_noise(self, rng)
    }
}

/// Draws one noise value. Quintic noise goes through the inverse CDF of a
/// single uniform draw; Gaussian noise uses one standard normal deviate.
pub fn sample_noise<R: Rng + ?Sized>(model: &NoiseModel, rng: &mut R) -> f64 {
    match *model {
        NoiseModel::Quintic { mean, half_width } => {
            let p: f64 = rng.random();
            quintic_quantile_unchecked(p, mean, half_width)
        }
        NoiseModel::Gaussian { mean, std_dev } => {
            let z: f64 = StandardNormal.sample(rng);
            mean + std_dev * z
        }
    }
}

pub fn quintic_cdf(x: f64, mean: f64, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::param("sigma", format!("must be positive, got {sigma}")));
    }
    Ok(quintic_cdf_unchecked(x, mean, sigma))
}

fn quintic_cdf_unchecked(x: f64, mean: f64, sigma: f64) -> f64 {
    let t = (x - mean) / sigma;
    if t <= -1.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else if t <= 0.0 {
        // (3t^5 - 10t^3 + 15t + 8) = (1 + t)^3 (3t^2 - 9t + 8), exact near t = -1
        let a = 1.0 + t;
        a * a * a * ((3.0 * t - 9.0) * t + 8.0) / 16.0
    } else {
        1.0 - quintic_tail(t)
    }
}

/// `1 - F` in the standardized variable, by symmetry `F(-t) = 1 - F(t)`.
fn quintic_tail(t: f64) -> f64 {
    if t >= 1.0 {
        0.0
    } else if t <= -1.0 {
        1.0
    } else if t >= 0.0 {
        let a = 1.0 - t;
        a * a * a * ((3.0 * t + 9.0) * t + 8.0) / 16.0
    } else {
        1.0 - quintic_cdf_unchecked(t, 0.0, 1.0)
    }
}

pub fn quintic_density(x: f64, mean: f64, sigma: f64) -> f64 {
    let t = (x - mean) / sigma;
    if t.abs() > 1.0 {
        0.0
    } else {
        let s = 1.0 - t * t;
        15.0 * s * s / (16.0 * sigma)
    }
}

/// Inverse of [`quintic_cdf`] by bisection on the support.
pub fn quintic_quantile(p: f64, mean: f64, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::param("sigma", format!("must be positive, got {sigma}")));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::param("p", format!("must lie in [0, 1], got {p}")));
    }
    Ok(quintic_quantile_unchecked(p, mean, sigma))
}

fn quintic_quantile_unchecked(p: f64, mean: f64, sigma: f64) -> f64 {
    let mut lo = mean - sigma;
    let mut hi = mean + sigma;
    if p <= 0.0 {
        return lo;
    }
    if p >= 1.0 {
        return hi;
    }
    while hi - lo > QUANTILE_TOL {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if quintic_cdf_unchecked(mid, mean, sigma) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn cdf_reference_values() {
        assert_eq!(quintic_cdf(0.4, 0.4, 3.0).unwrap(), 0.5);
        assert_eq!(quintic_cdf(-2.6, 0.4, 3.0).unwrap(), 0.0);
        assert_eq!(quintic_cdf(3.4, 0.4, 3.0).unwrap(), 1.0);
        assert_eq!(quintic_cdf(-10.0, 0.4, 3.0).unwrap(), 0.0);
        // t = 0.5: (3/32 - 10/8 + 7.5 + 8)/16
        assert_abs_diff_eq!(quintic_cdf(1.9, 0.4, 3.0).unwrap(), 0.896484375, epsilon = 1e-15);
    }

    #[test]
    fn rejects_nonpositive_sigma() {
        assert!(quintic_cdf(0.0, 0.0, 0.0).is_err());
        assert!(quintic_quantile(0.5, 0.0, -1.0).is_err());
        assert!(NoiseModel::quintic(0.0, 0.0).is_err());
        assert!(NoiseModel::gaussian(0.0, -0.1).is_err());
    }

    #[test]
    fn quantile_reference_values() {
        assert_abs_diff_eq!(quintic_quantile(0.5, 0.4, 3.0).unwrap(), 0.4, epsilon = 1e-12);
        assert_eq!(quintic_quantile(0.0, 0.4, 3.0).unwrap(), -2.6);
        assert_eq!(quintic_quantile(1.0, 0.4, 3.0).unwrap(), 3.4);
        assert_abs_diff_eq!(quintic_quantile(0.896484375, 0.4, 3.0).unwrap(), 1.9, epsilon = 1e-10);
        assert!(quintic_quantile(1.5, 0.4, 3.0).is_err());
        assert!(quintic_quantile(-0.1, 0.4, 3.0).is_err());
    }

    #[test]
    fn density_is_cdf_derivative() {
        let m = NoiseModel::quintic(0.4, 3.0).unwrap();
        for &x in &[-2.0, -0.3, 0.4, 1.1, 3.0] {
            let h = 1e-6;
            let fd = (m.cdf(x + h) - m.cdf(x - h)) / (2.0 * h);
            assert_abs_diff_eq!(m.density(x), fd, epsilon = 1e-9);
            let fd2 = (m.density(x + h) - m.density(x - h)) / (2.0 * h);
            assert_abs_diff_eq!(m.density_slope(x), fd2, epsilon = 1e-8);
        }
        let g = NoiseModel::gaussian(-2.0, 0.1).unwrap();
        let fd = (g.cdf(-1.95 + 1e-7) - g.cdf(-1.95 - 1e-7)) / 2e-7;
        assert_abs_diff_eq!(g.density(-1.95), fd, epsilon = 1e-6);
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let m = NoiseModel::quintic(0.4, 3.0).unwrap();
        let mut a = ChaCha8Rng::seed_from_u64(17);
        let mut b = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..100 {
            assert_eq!(m.sample(&mut a).to_bits(), m.sample(&mut b).to_bits());
        }
    }

    #[test]
    fn quintic_samples_bounded_with_mean_at_center() {
        let m = NoiseModel::quintic(0.4, 3.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let n = 1_000_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let x = m.sample(&mut rng);
            assert!((-2.6..=3.4).contains(&x));
            sum += x;
        }
        assert_abs_diff_eq!(sum / n as f64, 0.4, epsilon = 0.01);
    }

    #[test]
    fn gaussian_samples_have_requested_moments() {
        let m = NoiseModel::gaussian(-2.0, 0.1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 200_000;
        let xs: Vec<f64> = (0..n).map(|_| m.sample(&mut rng)).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert_abs_diff_eq!(mean, -2.0, epsilon = 2e-3);
        assert_abs_diff_eq!(var.sqrt(), 0.1, epsilon = 2e-3);
    }

    proptest! {
        #[test]
        fn cdf_is_nondecreasing(mut xs in proptest::collection::vec(-4.0f64..5.0, 2..60)) {
            xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let vals: Vec<f64> = xs.iter().map(|&x| quintic_cdf(x, 0.4, 3.0).unwrap()).collect();
            for w in vals.windows(2) {
                prop_assert!(w[0] <= w[1]);
            }
        }

        #[test]
        fn quantile_inverts_cdf(x in -2.6f64..=3.4) {
            let p = quintic_cdf(x, 0.4, 3.0).unwrap();
            let back = quintic_quantile(p, 0.4, 3.0).unwrap();
            // flat tails make x unidentifiable where the density vanishes
            if quintic_density(x, 0.4, 3.0) > 1e-4 {
                prop_assert!((back - x).abs() <= 1e-10, "x={x} back={back}");
            }
            prop_assert!((quintic_cdf(back, 0.4, 3.0).unwrap() - p).abs() <= 1e-12);
        }
    }
}
