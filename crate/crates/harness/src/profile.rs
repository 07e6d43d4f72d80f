use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Uniform};
use serde::{Deserialize, Serialize};

use crate::HarnessError;

/// How long a worker waits between sends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrafficProfile {
    /// Uniform in `delay_ms * (1 ± deviation)`.
    ConstantRate { delay_ms: f64, deviation: f64 },
    /// Exponential gaps; `lambda_tx_per_s` is the rate of one worker.
    Poisson { lambda_tx_per_s: f64 },
}

impl TrafficProfile {
    pub const DEFAULT_DEVIATION: f64 = 0.30;

    pub fn constant(delay_ms: f64) -> Self {
        TrafficProfile::ConstantRate {
            delay_ms,
            deviation: Self::DEFAULT_DEVIATION,
        }
    }

    pub fn poisson(lambda_tx_per_s: f64) -> Self {
        TrafficProfile::Poisson { lambda_tx_per_s }
    }

    /// Nominal mean gap in milliseconds.
    pub fn mean_ms(&self) -> f64 {
        match *self {
            TrafficProfile::ConstantRate { delay_ms, .. } => delay_ms,
            TrafficProfile::Poisson { lambda_tx_per_s } => 1000.0 / lambda_tx_per_s,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::InvalidProfile(m));
        match *self {
            TrafficProfile::ConstantRate { delay_ms, deviation } => {
                if !(delay_ms.is_finite() && delay_ms > 0.0) {
                    return bad(format!("delay must be positive, got {delay_ms}"));
                }
                if !(0.0..1.0).contains(&deviation) {
                    return bad(format!("deviation must be in [0, 1), got {deviation}"));
                }
            }
            TrafficProfile::Poisson { lambda_tx_per_s } => {
                if !(lambda_tx_per_s.is_finite() && lambda_tx_per_s > 0.0) {
                    return bad(format!("lambda must be positive, got {lambda_tx_per_s}"));
                }
            }
        }
        Ok(())
    }
}

impl fmt::Display for TrafficProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrafficProfile::ConstantRate { delay_ms, .. } => write!(f, "constant:{delay_ms}"),
            TrafficProfile::Poisson { lambda_tx_per_s } => write!(f, "poisson:{lambda_tx_per_s}"),
        }
    }
}

/// `constant:<delay_ms>` or `poisson:<tx_per_s>`.
impl FromStr for TrafficProfile {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || HarnessError::InvalidProfile(format!("expected constant:<ms> or poisson:<rate>, got {s:?}"));
        let (kind, value) = s.split_once(':').ok_or_else(bad)?;
        let value: f64 = value.trim().parse().map_err(|_| bad())?;
        let p = match kind.trim() {
            "constant" => TrafficProfile::constant(value),
            "poisson" => TrafficProfile::poisson(value),
            _ => return Err(bad()),
        };
        p.validate()?;
        Ok(p)
    }
}

/// Seeded stream of inter-send gaps for one worker.
#[derive(Debug, Clone)]
pub struct IntervalSampler {
    rng: ChaCha8Rng,
    dist: Dist,
}

#[derive(Debug, Clone)]
enum Dist {
    Uniform(Uniform<f64>),
    Exp(Exp<f64>),
}

impl IntervalSampler {
    pub fn new(profile: TrafficProfile, seed: u64) -> Result<Self, HarnessError> {
        profile.validate()?;
        let dist = match profile {
            TrafficProfile::ConstantRate { delay_ms, deviation } => Dist::Uniform(Uniform::new_inclusive(
                delay_ms * (1.0 - deviation),
                delay_ms * (1.0 + deviation),
            )),
            TrafficProfile::Poisson { lambda_tx_per_s } => {
                Dist::Exp(Exp::new(lambda_tx_per_s / 1000.0).expect("validated rate"))
            }
        };
        Ok(IntervalSampler {
            rng: ChaCha8Rng::seed_from_u64(seed),
            dist,
        })
    }

    /// Next gap in milliseconds.
    pub fn next_ms(&mut self) -> f64 {
        match &self.dist {
            Dist::Uniform(u) => u.sample(&mut self.rng),
            Dist::Exp(e) => e.sample(&mut self.rng),
        }
    }

    pub fn next_us(&mut self) -> u64 {
        (self.next_ms() * 1000.0).round() as u64
    }
}

/// `n` gaps in milliseconds, deterministic for a given seed.
pub fn generate_intervals(profile: TrafficProfile, n: usize, seed: u64) -> Result<Vec<f64>, HarnessError> {
    if n == 0 {
        return Err(HarnessError::InvalidProfile("at least one interval is required".into()));
    }
    let mut s = IntervalSampler::new(profile, seed)?;
    Ok((0..n).map(|_| s.next_ms()).collect())
}
