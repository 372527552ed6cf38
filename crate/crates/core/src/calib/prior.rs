//! Scalar prior densities.

use std::f64::consts::{PI, SQRT_2};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Prior {
    /// Normal(mean, sd^2) restricted to `[lower, upper]` and renormalized.
    TruncatedNormal { mean: f64, sd: f64, lower: f64, upper: f64 },
    Uniform { lower: f64, upper: f64 },
    Laplace { location: f64, scale: f64 },
}

fn std_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

/// `Phi(b) - Phi(a)` without cancellation in the upper tail.
fn normal_mass(a: f64, b: f64) -> f64 {
    if a > 0.0 {
        0.5 * (libm::erfc(a / SQRT_2) - libm::erfc(b / SQRT_2))
    } else {
        0.5 * (libm::erf(b / SQRT_2) - libm::erf(a / SQRT_2))
    }
}

impl Prior {
    /// Centered on the midpoint with a sixth of the range as standard
    /// deviation, truncated to the range.
    pub fn truncated_normal_for(lower: f64, upper: f64) -> Self {
        Prior::TruncatedNormal {
            mean: 0.5 * (lower + upper),
            sd: (upper - lower) / 6.0,
            lower,
            upper,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Prior::TruncatedNormal { mean, sd, lower, upper } => {
                mean.is_finite() && sd > 0.0 && sd.is_finite() && lower < upper && normal_mass((lower - mean) / sd, (upper - mean) / sd) > 0.0
            }
            Prior::Uniform { lower, upper } => lower.is_finite() && upper.is_finite() && lower < upper,
            Prior::Laplace { location, scale } => location.is_finite() && scale > 0.0 && scale.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid prior {self:?}")))
        }
    }

    /// Closed support interval (infinite for the Laplace prior).
    pub fn support(&self) -> (f64, f64) {
        match *self {
            Prior::TruncatedNormal { lower, upper, .. } | Prior::Uniform { lower, upper } => (lower, upper),
            Prior::Laplace { .. } => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    pub fn log_density(&self, v: f64) -> f64 {
        let (lo, hi) = self.support();
        if !(v >= lo && v <= hi) {
            return f64::NEG_INFINITY;
        }
        match *self {
            Prior::TruncatedNormal { mean, sd, lower, upper } => {
                let z = (v - mean) / sd;
                let mass = normal_mass((lower - mean) / sd, (upper - mean) / sd);
                -0.5 * z * z - sd.ln() - 0.5 * (2.0 * PI).ln() - mass.ln()
            }
            Prior::Uniform { lower, upper } => -(upper - lower).ln(),
            Prior::Laplace { location, scale } => -(2.0 * scale).ln() - (v - location).abs() / scale,
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Prior::TruncatedNormal { mean, sd, lower, upper } => {
                let (a, b) = ((lower - mean) / sd, (upper - mean) / sd);
                mean + sd * (std_pdf(a) - std_pdf(b)) / normal_mass(a, b)
            }
            Prior::Uniform { lower, upper } => 0.5 * (lower + upper),
            Prior::Laplace { location, .. } => location,
        }
    }

    pub fn sd(&self) -> f64 {
        match *self {
            Prior::TruncatedNormal { mean, sd, lower, upper } => {
                let (a, b) = ((lower - mean) / sd, (upper - mean) / sd);
                let z = normal_mass(a, b);
                let (pa, pb) = (std_pdf(a), std_pdf(b));
                // a*phi(a) -> 0 for infinite bounds
                let term = |x: f64, p: f64| if x.is_finite() { x * p } else { 0.0 };
                let shift = (pa - pb) / z;
                sd * (1.0 + (term(a, pa) - term(b, pb)) / z - shift * shift).max(0.0).sqrt()
            }
            Prior::Uniform { lower, upper } => (upper - lower) / 12f64.sqrt(),
            Prior::Laplace { scale, .. } => SQRT_2 * scale,
        }
    }

    /// Point of maximum density (the midpoint for a uniform prior).
    pub fn mode(&self) -> f64 {
        match *self {
            Prior::TruncatedNormal { mean, lower, upper, .. } => mean.clamp(lower, upper),
            Prior::Uniform { lower, upper } => 0.5 * (lower + upper),
            Prior::Laplace { location, .. } => location,
        }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            Prior::TruncatedNormal { mean, sd, lower, upper } => {
                // rejection from the parent normal, uniform fallback for
                // far-tail truncations
                for _ in 0..10_000 {
                    let z: f64 = StandardNormal.sample(rng);
                    let v = mean + sd * z;
                    if v >= lower && v <= upper {
                        return v;
                    }
                }
                lower + (upper - lower) * rng.random::<f64>()
            }
            Prior::Uniform { lower, upper } => lower + (upper - lower) * rng.random::<f64>(),
            Prior::Laplace { location, scale } => {
                let u: f64 = rng.random::<f64>() - 0.5;
                location - scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    #[test]
    fn examples() {
        let tn = Prior::truncated_normal_for(0.5, 1.5);
        assert_eq!(tn.log_density(0.49), f64::NEG_INFINITY);
        let u = Prior::Uniform { lower: 0.0, upper: 100.0 };
        assert!((u.log_density(50.0) - (0.01f64).ln()).abs() < 1e-15);
        let l = Prior::Laplace { location: 0.0, scale: 10.0 };
        assert!((l.log_density(0.0) + 2.995732273553991).abs() < 1e-12);
    }

    #[test]
    fn truncated_normal_integrates_to_one() {
        // composite Simpson on the box
        for p in [
            Prior::truncated_normal_for(0.5, 1.1),
            Prior::TruncatedNormal { mean: 0.2, sd: 0.05, lower: 0.0, upper: 1.0 },
            Prior::TruncatedNormal { mean: 3.0, sd: 1.0, lower: 4.0, upper: 6.0 },
        ] {
            let (lo, hi) = p.support();
            let n = 20_000;
            let h = (hi - lo) / n as f64;
            let mut s = 0.0;
            for k in 0..=n {
                let w = if k == 0 || k == n { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
                s += w * p.log_density(lo + k as f64 * h).exp();
            }
            assert!((s * h / 3.0 - 1.0).abs() < 1e-10, "{p:?}: {}", s * h / 3.0);
        }
    }

    #[test]
    fn moments_match_samples() {
        let mut rng = stream_rng(5, 0);
        for p in [
            Prior::TruncatedNormal { mean: 0.3, sd: 0.4, lower: 0.0, upper: 1.0 },
            Prior::Uniform { lower: -1.0, upper: 3.0 },
            Prior::Laplace { location: 2.0, scale: 0.5 },
        ] {
            let n = 200_000;
            let xs: Vec<f64> = (0..n).map(|_| p.sample(&mut rng)).collect();
            let m = xs.iter().sum::<f64>() / n as f64;
            let sd = (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
            assert!((m - p.mean()).abs() < 5.0 * p.sd() / (n as f64).sqrt(), "{p:?}");
            assert!((sd / p.sd() - 1.0).abs() < 0.01, "{p:?}");
            let (lo, hi) = p.support();
            assert!(xs.iter().all(|&x| x >= lo && x <= hi));
        }
    }

    #[test]
    fn validation() {
        assert!(Prior::Uniform { lower: 1.0, upper: 1.0 }.validate().is_err());
        assert!(Prior::Laplace { location: 0.0, scale: 0.0 }.validate().is_err());
        assert!(Prior::TruncatedNormal { mean: 0.0, sd: -1.0, lower: 0.0, upper: 1.0 }.validate().is_err());
        assert!(Prior::truncated_normal_for(0.5, 1.5).validate().is_ok());
    }

    #[test]
    fn json_shape() {
        let p: Prior = serde_json::from_str(r#"{"kind":"laplace","location":0,"scale":10}"#).unwrap();
        assert_eq!(p, Prior::Laplace { location: 0.0, scale: 10.0 });
        assert!(serde_json::from_str::<Prior>(r#"{"kind":"uniform","lower":0,"upper":1,"x":2}"#).is_err());
    }
}
