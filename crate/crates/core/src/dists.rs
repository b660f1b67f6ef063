//! Closed catalog of positive continuous laws.
//!
//! Each law exposes what the backward construction needs: plain draws,
//! analytic mean and MGF, equilibrium (integrated-tail) draws, draws of the
//! remaining life given an elapsed age, and exponential tilting for the
//! first-passage sampler in [`crate::rwmax`].

use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parametric law of an interarrival or service time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DistributionSpec {
    Exponential {
        rate: f64,
    },
    Erlang {
        shape: u32,
        rate: f64,
    },
    #[serde(rename = "hyperexponential")]
    HyperExponential {
        weights: Vec<f64>,
        rates: Vec<f64>,
    },
    Uniform {
        lo: f64,
        hi: f64,
    },
    Deterministic {
        value: f64,
    },
}

fn positive(name: &str, x: f64) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidDistribution(format!(
            "{name} must be a positive finite number, got {x}"
        )))
    }
}

fn exp1<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample::<f64, _>(Exp1)
}

fn open01<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    // (0, 1]
    1.0 - rng.random::<f64>()
}

fn pick<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (j, w) in weights.iter().enumerate() {
        if u < *w {
            return j;
        }
        u -= w;
    }
    weights.len() - 1
}

fn erlang_draw<R: Rng + ?Sized>(shape: u32, rate: f64, rng: &mut R) -> f64 {
    (0..shape).map(|_| exp1(rng)).sum::<f64>() / rate
}

impl DistributionSpec {
    pub fn exponential(rate: f64) -> Self {
        Self::Exponential { rate }
    }

    pub fn erlang(shape: u32, rate: f64) -> Self {
        Self::Erlang { shape, rate }
    }

    pub fn uniform(lo: f64, hi: f64) -> Self {
        Self::Uniform { lo, hi }
    }

    pub fn deterministic(value: f64) -> Self {
        Self::Deterministic { value }
    }

    pub fn hyperexponential(weights: Vec<f64>, rates: Vec<f64>) -> Self {
        Self::HyperExponential { weights, rates }
    }

    /// Checks parameter constraints. Every constructor path used by the
    /// CLI goes through here before any simulation.
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Exponential { rate } => positive("rate", *rate),
            Self::Erlang { shape, rate } => {
                if *shape == 0 {
                    return Err(Error::InvalidDistribution(
                        "erlang shape must be >= 1".into(),
                    ));
                }
                positive("rate", *rate)
            }
            Self::HyperExponential { weights, rates } => {
                if weights.is_empty() || weights.len() != rates.len() {
                    return Err(Error::InvalidDistribution(
                        "hyperexponential needs equally many weights and rates".into(),
                    ));
                }
                for &w in weights {
                    positive("weight", w)?;
                }
                for &r in rates {
                    positive("rate", r)?;
                }
                let total: f64 = weights.iter().sum();
                if (total - 1.0).abs() > 1e-9 {
                    return Err(Error::InvalidDistribution(format!(
                        "hyperexponential weights must sum to 1, got {total}"
                    )));
                }
                Ok(())
            }
            Self::Uniform { lo, hi } => {
                positive("lo", *lo)?;
                positive("hi", *hi)?;
                if hi <= lo {
                    return Err(Error::InvalidDistribution(format!(
                        "uniform needs lo < hi, got [{lo}, {hi}]"
                    )));
                }
                Ok(())
            }
            Self::Deterministic { value } => positive("value", *value),
        }
    }

    /// Whether the law puts positive mass on a single point.
    pub fn has_atoms(&self) -> bool {
        matches!(self, Self::Deterministic { .. })
    }

    pub fn mean(&self) -> f64 {
        match self {
            Self::Exponential { rate } => 1.0 / rate,
            Self::Erlang { shape, rate } => *shape as f64 / rate,
            Self::HyperExponential { weights, rates } => {
                weights.iter().zip(rates).map(|(w, r)| w / r).sum()
            }
            Self::Uniform { lo, hi } => 0.5 * (lo + hi),
            Self::Deterministic { value } => *value,
        }
    }

    pub fn variance(&self) -> f64 {
        match self {
            Self::Exponential { rate } => 1.0 / (rate * rate),
            Self::Erlang { shape, rate } => *shape as f64 / (rate * rate),
            Self::HyperExponential { weights, rates } => {
                let m2: f64 = weights
                    .iter()
                    .zip(rates)
                    .map(|(w, r)| 2.0 * w / (r * r))
                    .sum();
                m2 - self.mean().powi(2)
            }
            Self::Uniform { lo, hi } => (hi - lo).powi(2) / 12.0,
            Self::Deterministic { .. } => 0.0,
        }
    }

    /// `1 / mean`, i.e. the arrival rate `lambda` or service rate `mu`.
    pub fn rate(&self) -> f64 {
        1.0 / self.mean()
    }

    /// Left end of the support.
    pub fn support_inf(&self) -> f64 {
        match self {
            Self::Uniform { lo, .. } => *lo,
            Self::Deterministic { value } => *value,
            _ => 0.0,
        }
    }

    /// Right end of the support (possibly infinite).
    pub fn support_sup(&self) -> f64 {
        match self {
            Self::Uniform { hi, .. } => *hi,
            Self::Deterministic { value } => *value,
            _ => f64::INFINITY,
        }
    }

    /// Supremum of the arguments at which the MGF is finite.
    pub fn theta_max(&self) -> f64 {
        match self {
            Self::Exponential { rate } | Self::Erlang { rate, .. } => *rate,
            Self::HyperExponential { rates, .. } => {
                rates.iter().copied().fold(f64::INFINITY, f64::min)
            }
            Self::Uniform { .. } | Self::Deterministic { .. } => f64::INFINITY,
        }
    }

    /// `E[exp(theta X)]`. Negative arguments are allowed (Laplace transform).
    pub fn mgf(&self, theta: f64) -> Result<f64> {
        let tmax = self.theta_max();
        if theta >= tmax {
            return Err(Error::Domain(format!(
                "mgf argument {theta} is outside the domain (theta_max = {tmax})"
            )));
        }
        Ok(match self {
            Self::Exponential { rate } => rate / (rate - theta),
            Self::Erlang { shape, rate } => (rate / (rate - theta)).powi(*shape as i32),
            Self::HyperExponential { weights, rates } => weights
                .iter()
                .zip(rates)
                .map(|(w, r)| w * r / (r - theta))
                .sum(),
            Self::Uniform { lo, hi } => {
                let width = hi - lo;
                let z = theta * width;
                if z.abs() < 1e-12 {
                    (theta * lo).exp() * (1.0 + 0.5 * z)
                } else {
                    (theta * lo).exp() * z.exp_m1() / z
                }
            }
            Self::Deterministic { value } => (theta * value).exp(),
        })
    }

    /// `log E[exp(theta X)]`, computed without overflow for large bounded laws.
    pub fn log_mgf(&self, theta: f64) -> Result<f64> {
        match self {
            Self::Uniform { lo, hi } => {
                let width = hi - lo;
                let z = theta * width;
                let tail = if z.abs() < 1e-12 {
                    (0.5 * z).ln_1p()
                } else if z > 0.0 {
                    // e^z - 1 = e^z (1 - e^-z)
                    z + (-(-z).exp_m1()).ln() - z.ln()
                } else {
                    (z.exp_m1() / z).ln()
                };
                Ok(theta * lo + tail)
            }
            Self::Deterministic { value } => Ok(theta * value),
            _ => self.mgf(theta).map(f64::ln),
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        1.0 - self.survival(x)
    }

    /// `P(X > x)`.
    pub fn survival(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 1.0;
        }
        match self {
            Self::Exponential { rate } => (-rate * x).exp(),
            Self::Erlang { shape, rate } => erlang_survival(*shape, *rate, x),
            Self::HyperExponential { weights, rates } => weights
                .iter()
                .zip(rates)
                .map(|(w, r)| w * (-r * x).exp())
                .sum(),
            Self::Uniform { lo, hi } => {
                if x < *lo {
                    1.0
                } else if x >= *hi {
                    0.0
                } else {
                    (hi - x) / (hi - lo)
                }
            }
            Self::Deterministic { value } => {
                if x < *value {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// CDF of the equilibrium law, `(1/mean) * int_0^x P(X > u) du`, in closed form.
    pub fn equilibrium_cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        match self {
            Self::Exponential { .. } => self.cdf(x),
            Self::Erlang { shape, rate } => {
                (1..=*shape)
                    .map(|j| 1.0 - erlang_survival(j, *rate, x))
                    .sum::<f64>()
                    / *shape as f64
            }
            Self::HyperExponential { weights, rates } => {
                let m = self.mean();
                weights
                    .iter()
                    .zip(rates)
                    .map(|(w, r)| w / r * (1.0 - (-r * x).exp()))
                    .sum::<f64>()
                    / m
            }
            Self::Uniform { lo, hi } => {
                let m = self.mean();
                let integral = if x <= *lo {
                    x
                } else if x < *hi {
                    lo + ((hi - lo).powi(2) - (hi - x).powi(2)) / (2.0 * (hi - lo))
                } else {
                    m
                };
                integral / m
            }
            Self::Deterministic { value } => (x / value).min(1.0),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Self::Exponential { rate } => exp1(rng) / rate,
            Self::Erlang { shape, rate } => erlang_draw(*shape, *rate, rng),
            Self::HyperExponential { weights, rates } => {
                let j = pick(weights, rng);
                exp1(rng) / rates[j]
            }
            Self::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
            Self::Deterministic { value } => *value,
        }
    }

    /// Draw from the equilibrium law (residual life of a stationary renewal process).
    pub fn sample_equilibrium<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Self::Exponential { rate } => exp1(rng) / rate,
            Self::Erlang { shape, rate } => {
                let j = 1 + rng.random_range(0..*shape);
                erlang_draw(j, *rate, rng)
            }
            Self::HyperExponential { weights, rates } => {
                let w: Vec<f64> = weights.iter().zip(rates).map(|(w, r)| w / r).collect();
                let j = pick(&w, rng);
                exp1(rng) / rates[j]
            }
            Self::Uniform { lo, hi } => {
                // Integrated tail: flat on [0, lo], then a triangle on [lo, hi].
                let flat = *lo;
                let triangle = 0.5 * (hi - lo);
                if rng.random::<f64>() * (flat + triangle) < flat {
                    lo * rng.random::<f64>()
                } else {
                    hi - (hi - lo) * open01(rng).sqrt()
                }
            }
            Self::Deterministic { value } => value * rng.random::<f64>(),
        }
    }

    /// Draw the remaining life given that `age` has already elapsed, i.e.
    /// density `f -> g(age + f) / P(X > age)`.
    pub fn sample_residual_given_age<R: Rng + ?Sized>(&self, age: f64, rng: &mut R) -> Result<f64> {
        if !(age >= 0.0) || self.survival(age) <= 0.0 {
            return Err(Error::Domain(format!(
                "age {age} is beyond the support of {self:?}"
            )));
        }
        Ok(match self {
            Self::Exponential { rate } => exp1(rng) / rate,
            Self::Erlang { shape, rate } => {
                // Phases completed by `age` are Poisson(rate*age) restricted to < shape.
                let x = rate * age;
                let mut w = Vec::with_capacity(*shape as usize);
                let mut term = 1.0f64;
                for j in 0..*shape {
                    if j > 0 {
                        term *= x / j as f64;
                    }
                    w.push(term);
                }
                let done = pick(&w, rng) as u32;
                erlang_draw(shape - done, *rate, rng)
            }
            Self::HyperExponential { weights, rates } => {
                let w: Vec<f64> = weights
                    .iter()
                    .zip(rates)
                    .map(|(w, r)| w * (-r * age).exp())
                    .collect();
                let j = pick(&w, rng);
                exp1(rng) / rates[j]
            }
            Self::Uniform { lo, hi } => {
                let start = (lo - age).max(0.0);
                start + (hi - age - start) * rng.random::<f64>()
            }
            Self::Deterministic { value } => value - age,
        })
    }

    /// Law with density proportional to `exp(t x) f(x)`.
    pub fn exp_tilt(&self, t: f64) -> Result<Law> {
        let tmax = self.theta_max();
        if t >= tmax {
            return Err(Error::Domain(format!(
                "tilt {t} is outside the MGF domain (theta_max = {tmax})"
            )));
        }
        Ok(match self {
            Self::Exponential { rate } => Law::Spec(Self::Exponential { rate: rate - t }),
            Self::Erlang { shape, rate } => Law::Spec(Self::Erlang {
                shape: *shape,
                rate: rate - t,
            }),
            Self::HyperExponential { weights, rates } => {
                let raw: Vec<f64> = weights
                    .iter()
                    .zip(rates)
                    .map(|(w, r)| w * r / (r - t))
                    .collect();
                let total: f64 = raw.iter().sum();
                Law::Spec(Self::HyperExponential {
                    weights: raw.iter().map(|w| w / total).collect(),
                    rates: rates.iter().map(|r| r - t).collect(),
                })
            }
            Self::Uniform { lo, hi } => Law::TruncatedExp {
                lo: *lo,
                hi: *hi,
                slope: t,
            },
            Self::Deterministic { value } => Law::Spec(Self::Deterministic { value: *value }),
        })
    }
}

fn erlang_survival(shape: u32, rate: f64, x: f64) -> f64 {
    let y = rate * x;
    let mut term = 1.0f64;
    let mut sum = 1.0f64;
    for j in 1..shape {
        term *= y / j as f64;
        sum += term;
    }
    (-y).exp() * sum
}

/// A samplable law: either a catalog entry or an exponentially tilted
/// uniform (a truncated exponential with possibly negative slope).
#[derive(Debug, Clone, PartialEq)]
pub enum Law {
    Spec(DistributionSpec),
    TruncatedExp { lo: f64, hi: f64, slope: f64 },
}

impl Law {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Law::Spec(s) => s.sample(rng),
            Law::TruncatedExp { lo, hi, slope } => {
                let w = hi - lo;
                let z = slope * w;
                let u = open01(rng);
                if z.abs() < 1e-9 {
                    lo + w * u
                } else if z > 0.0 {
                    // Invert from the right end to avoid overflow.
                    (hi + (u + (1.0 - u) * (-z).exp()).ln() / slope).clamp(*lo, *hi)
                } else {
                    (lo + (1.0 - u * (-z.exp_m1())).ln() / slope).clamp(*lo, *hi)
                }
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            Law::Spec(s) => s.mean(),
            Law::TruncatedExp { lo, hi, slope } => {
                let w = hi - lo;
                let z = slope * w;
                if z.abs() < 1e-9 {
                    0.5 * (lo + hi)
                } else {
                    // lo + w * (1/(1-e^{-z}) - 1/z)
                    lo + w * (1.0 / (-(-z).exp_m1()) - 1.0 / z)
                }
            }
        }
    }
}
