//! Sample moments and goodness-of-fit statistics.

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::erf::erfc;

use crate::scalar::Scalar;

/// Φ(x)
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

pub fn mean(xs: &[f64]) -> f64 {
    <f64 as Scalar>::sum(xs.iter().copied()) / xs.len() as f64
}

/// Unbiased sample variance (two-pass).
pub fn variance(xs: &[f64]) -> f64 {
    covariance(xs, xs)
}

/// Unbiased sample covariance (two-pass).
pub fn covariance(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let (mx, my) = (mean(xs), mean(ys));
    <f64 as Scalar>::sum(xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my))) / (n - 1) as f64
}

/// Standardized third and fourth central moments (skewness, excess kurtosis),
/// both 0 for a constant sample.
pub fn shape(xs: &[f64]) -> (f64, f64) {
    let m = mean(xs);
    let n = xs.len() as f64;
    let m2 = <f64 as Scalar>::sum(xs.iter().map(|x| (x - m).powi(2))) / n;
    if m2 == 0.0 {
        return (0.0, 0.0);
    }
    let m3 = <f64 as Scalar>::sum(xs.iter().map(|x| (x - m).powi(3))) / n;
    let m4 = <f64 as Scalar>::sum(xs.iter().map(|x| (x - m).powi(4))) / n;
    (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
}

/// Symmetric sample covariance matrix of the columns `data[j]`.
pub fn covariance_matrix(columns: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let k = columns.len();
    let mut out = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in i..k {
            let c = covariance(&columns[i], &columns[j]);
            out[i][j] = c;
            out[j][i] = c;
        }
    }
    out
}

/// P(K > λ) for the Kolmogorov distribution, 100-term series.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let sign = if k as i64 % 2 == 1 { 1.0 } else { -1.0 };
        sum += sign * (-2.0 * k * k * lambda * lambda).exp();
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// One-sample Kolmogorov–Smirnov test of a sorted sample against Φ, with the
/// asymptotic p-value at the effective argument (√N + 0.12 + 0.11/√N)·D.
pub fn ks_normal(sorted: &[f64]) -> KsResult {
    debug_assert!(sorted.windows(2).all(|w| w[0] <= w[1]));
    let n = sorted.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in sorted.iter().enumerate() {
        let cdf = normal_cdf(x);
        d = d.max((i as f64 + 1.0) / n - cdf).max(cdf - i as f64 / n);
    }
    let sqrt_n = n.sqrt();
    let p_value = kolmogorov_survival((sqrt_n + 0.12 + 0.11 / sqrt_n) * d);
    KsResult { statistic: d, p_value }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub degrees_of_freedom: usize,
    pub p_value: f64,
}

/// Pearson chi-square of `observed` counts against `probabilities`.
/// Cells with expected count below 5 are pooled into one cell.
pub fn chi_square(observed: &[u64], probabilities: &[f64]) -> ChiSquareResult {
    assert_eq!(observed.len(), probabilities.len());
    let total: u64 = observed.iter().sum();
    let total_f = total as f64;
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let (mut pooled_obs, mut pooled_exp) = (0.0, 0.0);
    for (&o, &p) in observed.iter().zip(probabilities) {
        let e = p * total_f;
        if e < 5.0 {
            pooled_obs += o as f64;
            pooled_exp += e;
        } else {
            cells.push((o as f64, e));
        }
    }
    if pooled_exp > 0.0 || pooled_obs > 0.0 {
        cells.push((pooled_obs, pooled_exp));
    }
    let statistic: f64 = cells
        .iter()
        .map(|&(o, e)| if e > 0.0 { (o - e).powi(2) / e } else if o > 0.0 { f64::INFINITY } else { 0.0 })
        .sum();
    let df = cells.len().saturating_sub(1);
    let p_value = if df == 0 {
        if statistic == 0.0 { 1.0 } else { 0.0 }
    } else if statistic.is_infinite() {
        0.0
    } else {
        1.0 - ChiSquared::new(df as f64).expect("positive df").cdf(statistic)
    };
    ChiSquareResult { statistic, degrees_of_freedom: df, p_value }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn normal_sample(seed: u64, n: usize, shift: f64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut xs: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).map(|x: f64| x + shift).collect();
        xs.sort_by(f64::total_cmp);
        xs
    }

    #[test]
    fn normal_cdf_values() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-15);
        assert!((normal_cdf(1.959_963_984_540_054) - 0.975).abs() < 1e-11);
        assert!((normal_cdf(-3.0) - 0.001_349_898_031_630_093_3).abs() < 1e-13);
    }

    #[test]
    fn kolmogorov_survival_values() {
        // classical critical values
        assert!((kolmogorov_survival(1.358_099) - 0.05).abs() < 1e-5);
        assert!((kolmogorov_survival(1.949_6) - 0.001).abs() < 2e-5);
        assert_eq!(kolmogorov_survival(0.0), 1.0);
    }

    #[test]
    fn ks_null_calibration() {
        let failures = (0..1000).filter(|&seed| ks_normal(&normal_sample(seed, 10_000, 0.0)).p_value <= 1e-3).count();
        assert!(failures <= 1, "{failures} of 1000 null samples rejected at 1e-3");
    }

    #[test]
    fn ks_degenerate_and_shifted() {
        let constant = vec![0.0; 100];
        assert!(ks_normal(&constant).statistic >= 0.5);
        let shifted = ks_normal(&normal_sample(1, 10_000, 0.5));
        // sup |Φ(x - 0.5) - Φ(x)| = Φ(0.25) - Φ(-0.25)
        let lower = normal_cdf(0.25) - normal_cdf(-0.25);
        assert!(shifted.statistic > 0.9 * lower);
        assert!(shifted.p_value < 1e-6);
    }

    #[test]
    fn moments() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(mean(&xs), 2.5);
        assert!((variance(&xs) - 5.0 / 3.0).abs() < 1e-15);
        let (skew, _) = shape(&xs);
        assert!(skew.abs() < 1e-15);
        assert_eq!(shape(&[2.0; 5]), (0.0, 0.0));
        let m = covariance_matrix(&[xs.to_vec(), xs.iter().map(|x| -x).collect()]);
        assert_eq!(m[0][1], m[1][0]);
        assert!((m[0][1] + 5.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn chi_square_pools_small_cells() {
        let fair = chi_square(&[500, 500], &[0.5, 0.5]);
        assert_eq!((fair.statistic, fair.degrees_of_freedom), (0.0, 1));
        assert!((fair.p_value - 1.0).abs() < 1e-12);
        let skewed = chi_square(&[700, 300], &[0.5, 0.5]);
        assert!(skewed.p_value < 1e-10);
        let pooled = chi_square(&[98, 1, 1], &[0.98, 0.01, 0.01]);
        assert_eq!(pooled.degrees_of_freedom, 1);
    }
}
