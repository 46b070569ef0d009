//! Model parameters for the two-line surplus process: premium rates,
//! diffusion volatilities, the three Poisson claim streams (one per line
//! plus a common shock hitting both), and the claim-size laws.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::fnv1a_hex;

/// Claim-size distribution on (0, inf) with finite mean.
///
/// Two families are supported: exponential (light-tailed, unbounded) and
/// uniform on (0, max) (bounded). Both have closed-form densities, cdfs
/// and quantiles, which the kernel convolutions and the exact sampler
/// rely on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ClaimDist {
    Exponential { rate: f64 },
    Uniform { max: f64 },
}

impl ClaimDist {
    /// Density p(z); zero for z <= 0.
    pub fn density(&self, z: f64) -> f64 {
        if z <= 0.0 {
            return 0.0;
        }
        match *self {
            ClaimDist::Exponential { rate } => rate * (-rate * z).exp(),
            ClaimDist::Uniform { max } => {
                if z < max {
                    1.0 / max
                } else {
                    0.0
                }
            }
        }
    }

    /// Cumulative distribution F(z).
    pub fn cdf(&self, z: f64) -> f64 {
        if z <= 0.0 {
            return 0.0;
        }
        match *self {
            ClaimDist::Exponential { rate } => -(-rate * z).exp_m1(),
            ClaimDist::Uniform { max } => (z / max).min(1.0),
        }
    }

    /// Quantile F^{-1}(u) for u in [0, 1).
    pub fn quantile(&self, u: f64) -> f64 {
        match *self {
            ClaimDist::Exponential { rate } => -(-u).ln_1p() / rate,
            ClaimDist::Uniform { max } => u * max,
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            ClaimDist::Exponential { rate } => 1.0 / rate,
            ClaimDist::Uniform { max } => 0.5 * max,
        }
    }

    /// Partial mean E[Z; Z > x], in closed form. Used by the compensated
    /// drift convention of the stationary generator.
    pub fn mean_above(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return self.mean();
        }
        match *self {
            ClaimDist::Exponential { rate } => (x + 1.0 / rate) * (-rate * x).exp(),
            ClaimDist::Uniform { max } => {
                if x >= max {
                    0.0
                } else {
                    (max * max - x * x) / (2.0 * max)
                }
            }
        }
    }

    /// Draw one claim by inverse transform from the supplied stream.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.quantile(rng.random::<f64>())
    }

    fn check(&self, label: &str, violations: &mut Vec<String>) {
        match *self {
            ClaimDist::Exponential { rate } => {
                if !(rate > 0.0 && rate.is_finite()) {
                    violations.push(format!("{label}: exponential rate must be > 0"));
                }
            }
            ClaimDist::Uniform { max } => {
                if !(max > 0.0 && max.is_finite()) {
                    violations.push(format!("{label}: uniform max must be > 0"));
                }
            }
        }
    }
}

/// Parameters of the surplus process: premiums `c`, diagonal diffusion
/// volatilities `sigma`, Poisson intensities of the per-line streams
/// (`lambda1`, `lambda2`) and of the common shock (`lambda3`), and the
/// claim-size laws of the two lines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub c1: f64,
    pub c2: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub claim1: ClaimDist,
    pub claim2: ClaimDist,
}

impl ModelParams {
    /// Total jump intensity of the superposed streams.
    pub fn lambda_total(&self) -> f64 {
        self.lambda1 + self.lambda2 + self.lambda3
    }

    /// Premium rate of line `i` (0 or 1).
    pub fn premium(&self, i: usize) -> f64 {
        [self.c1, self.c2][i]
    }

    /// Diffusion volatility of line `i` (0 or 1).
    pub fn sigma(&self, i: usize) -> f64 {
        [self.sigma1, self.sigma2][i]
    }

    /// Claim-size law of line `i` (0 or 1).
    pub fn claim(&self, i: usize) -> ClaimDist {
        [self.claim1, self.claim2][i]
    }

    /// Total claim intensity hitting line `i`: its own stream plus the
    /// common shock.
    pub fn line_intensity(&self, i: usize) -> f64 {
        [self.lambda1, self.lambda2][i] + self.lambda3
    }

    /// Expected claim outflow per unit time on line `i`.
    pub fn claim_drain(&self, i: usize) -> f64 {
        self.line_intensity(i) * self.claim(i).mean()
    }

    /// Check every structural invariant; returns a report rather than an
    /// error so callers can surface all violations at once.
    pub fn validate(&self) -> ValidationReport {
        let mut violations = Vec::new();
        for (v, name) in [(self.c1, "c1"), (self.c2, "c2")] {
            if !(v > 0.0 && v.is_finite()) {
                violations.push(format!("{name} must be > 0"));
            }
        }
        for (v, name) in [(self.sigma1, "sigma1"), (self.sigma2, "sigma2")] {
            if !(v > 0.0 && v.is_finite()) {
                violations.push(format!("{name} must be > 0"));
            }
        }
        for (v, name) in [
            (self.lambda1, "lambda1"),
            (self.lambda2, "lambda2"),
            (self.lambda3, "lambda3"),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                violations.push(format!("{name} must be >= 0"));
            }
        }
        self.claim1.check("claim1", &mut violations);
        self.claim2.check("claim2", &mut violations);
        ValidationReport { violations }
    }

    /// Validate and convert to a `Result` for call sites that need a
    /// hard precondition.
    pub fn require_valid(&self) -> Result<()> {
        let report = self.validate();
        if report.is_ok() {
            Ok(())
        } else {
            Err(Error::InvalidParams(report.violations.join("; ")))
        }
    }

    /// Stable fingerprint of the parameter set for artifact metadata.
    pub fn digest(&self) -> String {
        fnv1a_hex(format!("{self:?}").as_bytes())
    }
}

/// Outcome of parameter validation: empty means all invariants hold.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn violations(&self) -> &[String] {
        &self.violations
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::adaptive_simpson;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn base_params() -> ModelParams {
        ModelParams {
            c1: 1.0,
            c2: 1.0,
            sigma1: 1.0,
            sigma2: 1.0,
            lambda1: 0.0,
            lambda2: 0.0,
            lambda3: 0.0,
            claim1: ClaimDist::Exponential { rate: 1.0 },
            claim2: ClaimDist::Exponential { rate: 1.0 },
        }
    }

    #[test]
    fn validate_ok_for_baseline() {
        assert!(base_params().validate().is_ok());
    }

    #[test]
    fn validate_flags_degenerate_sigma() {
        let mut p = base_params();
        p.sigma2 = 0.0;
        let report = p.validate();
        assert!(!report.is_ok());
        assert!(report.violations().iter().any(|v| v.contains("sigma2")));
    }

    #[test]
    fn validate_flags_negative_intensity() {
        let mut p = base_params();
        p.lambda1 = -0.5;
        let report = p.validate();
        assert!(report.violations().iter().any(|v| v.contains("lambda1")));
    }

    #[test]
    fn validate_is_pure() {
        let p = base_params();
        assert_eq!(p.validate(), p.validate());
    }

    #[test]
    fn density_examples() {
        let exp1 = ClaimDist::Exponential { rate: 1.0 };
        assert_eq!(exp1.density(-1e-12), 0.0);
        assert_eq!(exp1.density(0.0), 0.0);

        let exp2 = ClaimDist::Exponential { rate: 2.0 };
        assert!((exp2.density(0.5) - 2.0 * (-1.0f64).exp()).abs() < 1e-12);
        assert!((exp2.density(0.5) - 0.735_758_882_342_884_6).abs() < 1e-12);

        let uni = ClaimDist::Uniform { max: 2.0 };
        assert!((uni.density(1.0) - 0.5).abs() < 1e-15);
        assert_eq!(uni.density(2.5), 0.0);
    }

    #[test]
    fn density_integrates_to_one() {
        for dist in [
            ClaimDist::Exponential { rate: 1.0 },
            ClaimDist::Exponential { rate: 4.0 },
            ClaimDist::Uniform { max: 2.0 },
            ClaimDist::Uniform { max: 0.3 },
        ] {
            let upper = match dist {
                ClaimDist::Exponential { rate } => 60.0 / rate,
                ClaimDist::Uniform { max } => max,
            };
            let mass = adaptive_simpson(&|z| dist.density(z), 0.0, upper, 1e-13);
            assert!((mass - 1.0).abs() < 1e-10, "{dist:?}: mass {mass}");
        }
    }

    #[test]
    fn quantile_inverts_cdf() {
        for dist in [
            ClaimDist::Exponential { rate: 2.5 },
            ClaimDist::Uniform { max: 3.0 },
        ] {
            for u in [0.01, 0.5, 0.99] {
                let z = dist.quantile(u);
                assert!((dist.cdf(z) - u).abs() < 1e-10, "{dist:?} u={u}");
            }
        }
    }

    #[test]
    fn mean_above_matches_quadrature() {
        for dist in [
            ClaimDist::Exponential { rate: 1.5 },
            ClaimDist::Uniform { max: 2.0 },
        ] {
            for x in [0.0, 0.3, 1.1, 1.9] {
                let upper = match dist {
                    ClaimDist::Exponential { rate } => 60.0 / rate,
                    ClaimDist::Uniform { max } => max,
                };
                let num = adaptive_simpson(&|z| z * dist.density(z), x, upper.max(x), 1e-13);
                assert!(
                    (dist.mean_above(x) - num).abs() < 1e-10,
                    "{dist:?} x={x}: {} vs {num}",
                    dist.mean_above(x)
                );
            }
        }
    }

    #[test]
    fn sampler_mean_within_clt_bound() {
        // SE of the mean of 1e6 exponential(1) draws is 1e-3; 4 SE bound.
        let dist = ClaimDist::Exponential { rate: 1.0 };
        let mut rng = ChaCha8Rng::seed_from_u64(12345);
        let n = 1_000_000;
        let mean: f64 = (0..n).map(|_| dist.sample(&mut rng)).sum::<f64>() / n as f64;
        assert!((0.996..=1.004).contains(&mean), "mean {mean}");

        let dist4 = ClaimDist::Exponential { rate: 4.0 };
        let mean4: f64 = (0..n).map(|_| dist4.sample(&mut rng)).sum::<f64>() / n as f64;
        let se = 0.25 / (n as f64).sqrt();
        assert!((mean4 - 0.25).abs() < 4.0 * se, "mean {mean4}");
    }

    #[test]
    fn uniform_samples_stay_in_support() {
        let dist = ClaimDist::Uniform { max: 2.0 };
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10_000 {
            let z = dist.sample(&mut rng);
            assert!((0.0..2.0).contains(&z));
        }
    }

    #[test]
    fn digest_is_stable_and_sensitive() {
        let p = base_params();
        assert_eq!(p.digest(), p.digest());
        let mut q = p.clone();
        q.c1 = 2.0;
        assert_ne!(p.digest(), q.digest());
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn arb_dist() -> impl Strategy<Value = ClaimDist> {
            prop_oneof![
                (0.05f64..20.0).prop_map(|rate| ClaimDist::Exponential { rate }),
                (0.05f64..20.0).prop_map(|max| ClaimDist::Uniform { max }),
            ]
        }

        proptest! {
            #[test]
            fn cdf_monotone_and_normalized(dist in arb_dist(), a in 0.0f64..50.0, b in 0.0f64..50.0) {
                let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
                prop_assert!(dist.cdf(lo) <= dist.cdf(hi) + 1e-15);
                prop_assert_eq!(dist.cdf(0.0), 0.0);
                prop_assert!(dist.cdf(1e12) >= 1.0 - 1e-12);
            }

            #[test]
            fn quantile_roundtrip(dist in arb_dist(), u in 0.0f64..0.999_999) {
                let z = dist.quantile(u);
                prop_assert!(z >= 0.0);
                prop_assert!((dist.cdf(z) - u).abs() < 1e-9);
            }
        }
    }
}
