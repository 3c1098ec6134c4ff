//! Sampling and density helpers for the priors and the rejuvenation proposal.

use rand::Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use statrs::function::beta::ln_beta;
use statrs::function::erf::erfc;
use statrs::function::gamma::ln_gamma;

use crate::error::{param, Result};

/// Draws one sample from Beta(alpha, beta).
pub fn beta_sample<R: Rng + ?Sized>(alpha: f64, beta: f64, rng: &mut R) -> Result<f64> {
    if !(alpha > 0.0 && beta > 0.0) || !alpha.is_finite() || !beta.is_finite() {
        return param(format!("beta shape parameters must be positive, got ({alpha}, {beta})"));
    }
    let dist = Beta::new(alpha, beta).map_err(|e| crate::Error::Parameter(e.to_string()))?;
    Ok(dist.sample(rng))
}

/// Log density of Beta(alpha, beta) at `x`. Returns `-inf` outside `[0, 1]`.
pub fn beta_ln_pdf(x: f64, alpha: f64, beta: f64) -> f64 {
    if !(0.0..=1.0).contains(&x) {
        return f64::NEG_INFINITY;
    }
    let a = if alpha == 1.0 { 0.0 } else { (alpha - 1.0) * x.ln() };
    let b = if beta == 1.0 { 0.0 } else { (beta - 1.0) * (1.0 - x).ln() };
    a + b - ln_beta(alpha, beta)
}

/// Mode of Beta(alpha, beta) for alpha, beta > 1.
pub fn beta_mode(alpha: f64, beta: f64) -> f64 {
    (alpha - 1.0) / (alpha + beta - 2.0)
}

pub fn beta_mean(alpha: f64, beta: f64) -> f64 {
    alpha / (alpha + beta)
}

pub fn beta_variance(alpha: f64, beta: f64) -> f64 {
    let s = alpha + beta;
    alpha * beta / (s * s * (s + 1.0))
}

fn poisson_ln_pmf(n: u32, lambda: f64) -> f64 {
    f64::from(n) * lambda.ln() - lambda - ln_gamma(f64::from(n) + 1.0)
}

/// Poisson(lambda) truncated to the inclusive range `[lo, hi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedPoisson {
    lo: u32,
    hi: u32,
    pmf: Vec<f64>,
}

impl TruncatedPoisson {
    pub fn new(lambda: f64, lo: u32, hi: u32) -> Result<Self> {
        if lo > hi {
            return param(format!("truncation bounds out of order: [{lo}, {hi}]"));
        }
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return param(format!("poisson rate must be non-negative, got {lambda}"));
        }
        let pmf = if lambda == 0.0 {
            // Degenerate rate: all mass on the smallest admissible count.
            (lo..=hi).map(|n| if n == lo { 1.0 } else { 0.0 }).collect()
        } else {
            let logs: Vec<f64> = (lo..=hi).map(|n| poisson_ln_pmf(n, lambda)).collect();
            let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let unnorm: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
            let total: f64 = unnorm.iter().sum();
            unnorm.into_iter().map(|u| u / total).collect()
        };
        Ok(Self { lo, hi, pmf })
    }

    pub fn bounds(&self) -> (u32, u32) {
        (self.lo, self.hi)
    }

    pub fn pmf(&self, n: u32) -> f64 {
        if n < self.lo || n > self.hi {
            0.0
        } else {
            self.pmf[(n - self.lo) as usize]
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, p) in self.pmf.iter().enumerate() {
            acc += p;
            if u < acc {
                return self.lo + i as u32;
            }
        }
        // Rounding left a sliver of mass above the last bucket.
        self.lo + self.pmf.iter().rposition(|&p| p > 0.0).unwrap_or(0) as u32
    }
}

/// `d(n)`: the Poisson(lambda) mass at `n` renormalized over `[lo, hi]`.
pub fn truncated_poisson_pmf(n: u32, lambda: f64, lo: u32, hi: u32) -> Result<f64> {
    Ok(TruncatedPoisson::new(lambda, lo, hi)?.pmf(n))
}

pub fn truncated_poisson_sample<R: Rng + ?Sized>(
    lambda: f64,
    lo: u32,
    hi: u32,
    rng: &mut R,
) -> Result<u32> {
    Ok(TruncatedPoisson::new(lambda, lo, hi)?.sample(rng))
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Normal(mu, sigma²) conditioned on the open interval `(lo, hi)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncatedNormal {
    pub mu: f64,
    pub sigma: f64,
    pub lo: f64,
    pub hi: f64,
}

impl TruncatedNormal {
    pub fn new(mu: f64, sigma: f64, lo: f64, hi: f64) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return param(format!("truncated normal sigma must be positive, got {sigma}"));
        }
        if !(lo < hi) {
            return param(format!("truncated normal bounds out of order: ({lo}, {hi})"));
        }
        Ok(Self { mu, sigma, lo, hi })
    }

    /// Unit-interval truncation used by the rejuvenation proposal.
    pub fn unit(mu: f64, sigma: f64) -> Result<Self> {
        Self::new(mu, sigma, 0.0, 1.0)
    }

    /// Probability mass of the untruncated normal inside `(lo, hi)`.
    pub fn normalizer(&self) -> f64 {
        let a = (self.lo - self.mu) / self.sigma;
        let b = (self.hi - self.mu) / self.sigma;
        // Evaluate in the tail that keeps precision.
        if a > 0.0 {
            std_normal_cdf(-a) - std_normal_cdf(-b)
        } else {
            std_normal_cdf(b) - std_normal_cdf(a)
        }
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        if !(x > self.lo && x < self.hi) {
            return f64::NEG_INFINITY;
        }
        let z = (x - self.mu) / self.sigma;
        -0.5 * z * z - LN_SQRT_2PI - self.sigma.ln() - self.normalizer().ln()
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.ln_pdf(x).exp()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let a = (self.lo - self.mu) / self.sigma;
        let b = (self.hi - self.mu) / self.sigma;
        let wide = self.normalizer() > 0.25;
        loop {
            let z = if wide {
                let z: f64 = rng.sample(StandardNormal);
                if z <= a || z >= b {
                    continue;
                }
                z
            } else if a >= 0.0 {
                match standard_tail(a, b, rng) {
                    Some(z) => z,
                    None => continue,
                }
            } else if b <= 0.0 {
                match standard_tail(-b, -a, rng) {
                    Some(z) => -z,
                    None => continue,
                }
            } else {
                // Narrow interval straddling zero: uniform envelope.
                let z = a + (b - a) * rng.random::<f64>();
                if rng.random::<f64>() >= (-0.5 * z * z).exp() {
                    continue;
                }
                z
            };
            let x = self.mu + self.sigma * z;
            if x > self.lo && x < self.hi {
                return x;
            }
        }
    }
}

/// One attempt at sampling a standard normal restricted to `[a, b]`, `0 <= a < b`.
/// Returns `None` on rejection.
fn standard_tail<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> Option<f64> {
    let rate = 0.5 * (a + (a * a + 4.0).sqrt());
    if (b - a) * rate < 1.0 {
        // Interval is short relative to the exponential scale: uniform envelope.
        let z = a + (b - a) * rng.random::<f64>();
        let accept = (0.5 * (a * a - z * z)).exp();
        return (rng.random::<f64>() < accept).then_some(z);
    }
    let u: f64 = rng.random();
    let z = a - (1.0 - u).ln() / rate;
    if z >= b {
        return None;
    }
    let accept = (-0.5 * (z - rate) * (z - rate)).exp();
    (rng.random::<f64>() < accept).then_some(z)
}

pub fn truncated_normal_sample<R: Rng + ?Sized>(
    mu: f64,
    sigma: f64,
    lo: f64,
    hi: f64,
    rng: &mut R,
) -> Result<f64> {
    Ok(TruncatedNormal::new(mu, sigma, lo, hi)?.sample(rng))
}

/// `ln binom(n, k)`.
pub fn ln_binomial(n: u32, k: u32) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    ln_gamma(f64::from(n) + 1.0) - ln_gamma(f64::from(k) + 1.0) - ln_gamma(f64::from(n - k) + 1.0)
}

pub fn binomial(n: u32, k: u32) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * f64::from(n - i) / f64::from(i + 1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn beta_2_10_moments() {
        let mut r = rng(1);
        let n = 1_000_000;
        let mut sum = 0.0;
        let mut above = 0usize;
        for _ in 0..n {
            let x = beta_sample(2.0, 10.0, &mut r).unwrap();
            assert!((0.0..=1.0).contains(&x));
            sum += x;
            if x > 0.5 {
                above += 1;
            }
        }
        let mean = sum / n as f64;
        assert!((mean - 1.0 / 6.0).abs() < 0.001, "mean {mean}");
        let frac = above as f64 / n as f64;
        // Exact tail mass of Beta(2,10) above 0.5 is 12/2^11 ≈ 0.0059.
        assert!((frac - 0.005).abs() < 0.002, "tail fraction {frac}");
    }

    #[test]
    fn beta_uniform_mean() {
        let mut r = rng(2);
        let n = 1_000_000;
        let mean: f64 = (0..n).map(|_| beta_sample(1.0, 1.0, &mut r).unwrap()).sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() < 0.002);
    }

    #[test]
    fn beta_rejects_bad_shapes() {
        let mut r = rng(3);
        assert!(beta_sample(0.0, 1.0, &mut r).is_err());
        assert!(beta_sample(1.0, -2.0, &mut r).is_err());
    }

    #[test]
    fn beta_density_integrates_to_one() {
        let n = 200_000;
        let h = 1.0 / n as f64;
        let total: f64 = (0..n).map(|i| beta_ln_pdf((i as f64 + 0.5) * h, 2.0, 10.0).exp() * h).sum();
        assert_relative_eq!(total, 1.0, epsilon = 1e-8);
    }

    #[test]
    fn truncated_poisson_first_mass() {
        // Oracle: e^-1/n! for n = 1..5, normalized.
        let terms: Vec<f64> = (1..=5u32)
            .map(|n| (-1.0f64).exp() / (1..=n).map(f64::from).product::<f64>())
            .collect();
        let total: f64 = terms.iter().sum();
        let expected = terms[0] / total;
        let d1 = truncated_poisson_pmf(1, 1.0, 1, 5).unwrap();
        assert_relative_eq!(d1, expected, max_relative = 1e-12);
        assert!((d1 - 0.5825).abs() < 1e-4);
        let sum: f64 = (1..=5).map(|n| truncated_poisson_pmf(n, 1.0, 1, 5).unwrap()).sum();
        assert_relative_eq!(sum, 1.0, epsilon = 1e-14);
        assert_eq!(truncated_poisson_pmf(0, 1.0, 1, 5).unwrap(), 0.0);
        assert_eq!(truncated_poisson_pmf(6, 1.0, 1, 5).unwrap(), 0.0);
        assert!(truncated_poisson_pmf(1, 1.0, 5, 1).is_err());
    }

    #[test]
    fn truncated_poisson_sampling_frequency() {
        let tp = TruncatedPoisson::new(1.0, 1, 5).unwrap();
        let mut r = rng(4);
        let n = 1_000_000;
        let mut ones = 0usize;
        for _ in 0..n {
            let k = tp.sample(&mut r);
            assert!((1..=5).contains(&k));
            if k == 1 {
                ones += 1;
            }
        }
        let f = ones as f64 / n as f64;
        assert!((f - tp.pmf(1)).abs() < 0.002, "frequency {f}");
    }

    #[test]
    fn truncated_poisson_small_rate_limit() {
        let mut r = rng(5);
        for lambda in [0.0, 1e-12] {
            let tp = TruncatedPoisson::new(lambda, 1, 5).unwrap();
            assert!((tp.pmf(1) - 1.0).abs() < 1e-10);
            for _ in 0..1000 {
                assert_eq!(tp.sample(&mut r), 1);
            }
        }
    }

    #[test]
    fn truncated_normal_symmetric_mean() {
        let tn = TruncatedNormal::unit(0.5, 0.1).unwrap();
        let mut r = rng(6);
        let n = 1_000_000;
        let mean: f64 = (0..n).map(|_| tn.sample(&mut r)).sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() < 0.001);
    }

    #[test]
    fn truncated_normal_respects_bounds() {
        let mut r = rng(7);
        for mu in [0.0, 1.0, -3.0, 4.0] {
            let tn = TruncatedNormal::unit(mu, 0.1).unwrap();
            for _ in 0..10_000 {
                let x = tn.sample(&mut r);
                assert!(x > 0.0 && x < 1.0, "mu {mu} produced {x}");
            }
        }
    }

    #[test]
    fn truncated_normal_density_near_untruncated() {
        let tn = TruncatedNormal::unit(0.5, 0.1).unwrap();
        let untruncated = (-0.0f64).exp() / (0.1 * (2.0 * std::f64::consts::PI).sqrt());
        // Truncation mass outside (0,1) is 2·Φ(-5) ≈ 5.7e-7.
        let rel = (tn.pdf(0.5) - untruncated).abs() / untruncated;
        assert!(rel < 1e-6, "relative gap {rel}");
        assert!(rel > 1e-7);
        assert_eq!(tn.pdf(0.0), 0.0);
        assert_eq!(tn.pdf(1.0), 0.0);
    }

    #[test]
    fn truncated_normal_density_integrates_to_one() {
        let tn = TruncatedNormal::unit(0.03, 0.1).unwrap();
        let n = 200_000;
        let h = 1.0 / n as f64;
        let total: f64 = (0..n).map(|i| tn.pdf((i as f64 + 0.5) * h) * h).sum();
        assert_relative_eq!(total, 1.0, epsilon = 1e-8);
    }

    #[test]
    fn truncated_normal_rejects_bad_sigma() {
        assert!(TruncatedNormal::unit(0.5, 0.0).is_err());
        assert!(TruncatedNormal::unit(0.5, -1.0).is_err());
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(5, 2), 10.0);
        assert_eq!(binomial(5, 0), 1.0);
        assert_eq!(binomial(5, 6), 0.0);
        assert_relative_eq!(ln_binomial(10, 3), 120f64.ln(), epsilon = 1e-12);
    }
}
