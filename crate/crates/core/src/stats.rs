//! Small statistical utilities shared by audits and tests: exact binomial
//! tests and a one-sample Kolmogorov-Smirnov check against the uniform law.

use statrs::distribution::{Binomial, Discrete, DiscreteCDF};

use crate::error::{Error, Result};

/// Two-sided exact binomial test of `successes ~ Binomial(trials, p0)`.
///
/// Uses the minimum-likelihood construction: the p-value sums the
/// probabilities of all outcomes no more likely than the observed one.
/// A relative tolerance of 1e-7 absorbs floating-point fuzz when comparing
/// point probabilities.
pub fn binomial_test_two_sided(successes: u64, trials: u64, p0: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p0) || !p0.is_finite() {
        return Err(Error::InvalidRate(p0));
    }
    if successes > trials {
        return Err(Error::LengthMismatch {
            left: successes as usize,
            right: trials as usize,
        });
    }
    if trials == 0 {
        return Ok(1.0);
    }
    let dist = Binomial::new(p0, trials).map_err(|_| Error::InvalidRate(p0))?;
    let observed = dist.pmf(successes);
    let cutoff = observed * (1.0 + 1e-7);
    let mut p = 0.0;
    for k in 0..=trials {
        let pk = dist.pmf(k);
        if pk <= cutoff {
            p += pk;
        }
    }
    Ok(p.min(1.0))
}

/// Central acceptance band for a Binomial(n, p0) count at confidence `conf`.
///
/// Returns `(lo, hi)` with `lo = min{k : CDF(k) >= (1-conf)/2}` and
/// `hi = min{k : CDF(k) >= 1-(1-conf)/2}`, so that a count inside `[lo, hi]`
/// is consistent with the null proportion `p0`.
pub fn binomial_band(trials: u64, p0: f64, conf: f64) -> Result<(u64, u64)> {
    if !(0.0..=1.0).contains(&p0) || !p0.is_finite() {
        return Err(Error::InvalidRate(p0));
    }
    if !(0.0 < conf && conf < 1.0) {
        return Err(Error::InvalidRate(conf));
    }
    let dist = Binomial::new(p0, trials).map_err(|_| Error::InvalidRate(p0))?;
    let tail = (1.0 - conf) / 2.0;
    let mut lo = 0;
    while lo < trials && dist.cdf(lo) < tail {
        lo += 1;
    }
    let mut hi = lo;
    while hi < trials && dist.cdf(hi) < 1.0 - tail {
        hi += 1;
    }
    Ok((lo, hi))
}

/// One-sample Kolmogorov-Smirnov statistic of `sample` against U(0, 1].
pub fn ks_statistic_uniform(sample: &[f64]) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::EmptyInput("KS sample"));
    }
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &u) in sorted.iter().enumerate() {
        let above = (i as f64 + 1.0) / n - u;
        let below = u - i as f64 / n;
        d = d.max(above).max(below);
    }
    Ok(d)
}

/// Asymptotic KS critical value: reject uniformity at level `alpha` when the
/// statistic exceeds `sqrt(-ln(alpha/2) / 2) / sqrt(n)`.
pub fn ks_critical_value(n: usize, alpha: f64) -> Result<f64> {
    if !(0.0 < alpha && alpha < 1.0) {
        return Err(Error::InvalidRate(alpha));
    }
    if n == 0 {
        return Err(Error::EmptyInput("KS sample"));
    }
    Ok((-(alpha / 2.0).ln() / 2.0).sqrt() / (n as f64).sqrt())
}
