use super::special::chi2_sf;
use super::TestResult;
use crate::{Error, Result};

/// `min(20, n / 5)`, at least 1.
pub fn default_max_lag(n: usize) -> usize {
    (n / 5).clamp(1, 20)
}

/// Sample autocorrelations at lags `1..=max_lag` (biased estimator,
/// normalised by the lag-0 sum of squares).
pub fn sample_autocorrelation(series: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let n = series.len();
    if n < max_lag + 2 {
        return Err(Error::InsufficientData(format!(
            "series of length {n} is too short for {max_lag} lags"
        )));
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = series.iter().map(|v| v - mean).collect();
    let c0: f64 = centered.iter().map(|v| v * v).sum();
    if c0 <= f64::MIN_POSITIVE * n as f64 {
        return Err(Error::DegenerateData("series has zero variance".into()));
    }
    Ok((1..=max_lag)
        .map(|h| centered[..n - h].iter().zip(&centered[h..]).map(|(a, b)| a * b).sum::<f64>() / c0)
        .collect())
}

/// Ljung-Box test at every lag `h = 1..=max_lag`:
/// `Q(h) = n (n + 2) sum_{j<=h} rho_j^2 / (n - j)`, chi-square with `h`
/// degrees of freedom under the no-autocorrelation null.
pub fn ljung_box(series: &[f64], max_lag: usize, alpha: f64) -> Result<Vec<TestResult>> {
    if max_lag == 0 {
        return Err(Error::Config("max_lag must be at least 1".into()));
    }
    let rho = sample_autocorrelation(series, max_lag)?;
    let n = series.len() as f64;
    let mut q = 0.0;
    Ok(rho
        .iter()
        .enumerate()
        .map(|(j, r)| {
            let h = j + 1;
            q += r * r / (n - h as f64);
            let stat = n * (n + 2.0) * q;
            TestResult::new("ljung-box", stat, chi2_sf(stat, h as f64), alpha)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_stream;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn sine_is_autocorrelated_at_every_lag() {
        let s: Vec<f64> = (0..500).map(|t| (t as f64 * 0.3).sin()).collect();
        let res = ljung_box(&s, 10, 0.05).unwrap();
        assert_eq!(res.len(), 10);
        assert!(res.iter().all(|r| r.rejected));
    }

    #[test]
    fn white_noise_rejects_at_nominal_rate() {
        let mut rejected = 0;
        let mut total = 0;
        for seed in 0..200 {
            let mut s = derive_stream(seed, "noise").unwrap();
            let x: Vec<f64> = (0..500).map(|_| StandardNormal.sample(&mut s)).collect();
            for r in ljung_box(&x, 20, 0.05).unwrap() {
                rejected += usize::from(r.rejected);
                total += 1;
            }
        }
        let rate = rejected as f64 / total as f64;
        assert!((rate - 0.05).abs() <= 0.03, "rate {rate}");
    }

    #[test]
    fn vanishing_autocorrelation_gives_small_q() {
        // constant plus a tiny period-4 wiggle whose lag-1 autocorrelation is 0
        let base = [1.0, 1.0, -1.0, -1.0];
        let x: Vec<f64> = (0..400).map(|t| 5.0 + 1e-6 * base[t % 4]).collect();
        let rho = sample_autocorrelation(&x, 1).unwrap();
        assert!(rho[0].abs() < 0.01);
        let r = &ljung_box(&x, 1, 0.05).unwrap()[0];
        assert!(r.statistic < 0.05 && r.p_value > 0.8);
    }

    #[test]
    fn errors_and_default_lag() {
        assert!(matches!(ljung_box(&[3.0; 50], 5, 0.05), Err(Error::DegenerateData(_))));
        assert!(ljung_box(&[1.0, 2.0, 3.0], 2, 0.05).is_err());
        assert_eq!(default_max_lag(500), 20);
        assert_eq!(default_max_lag(50), 10);
        assert_eq!(default_max_lag(3), 1);
    }
}
