use serde::{Deserialize, Serialize};

use crate::diffusion::Interval;

/// Smooth increasing bijection from a state space onto the real line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Chart {
    Identity,
    /// `log(x - lower) - log(upper - x)`.
    Logit {
        lower: f64,
        upper: f64,
    },
    /// `log(x - lower)` on `(lower, inf)`.
    LogLower {
        lower: f64,
    },
    /// `-log(upper - x)` on `(-inf, upper)`.
    LogUpper {
        upper: f64,
    },
}

fn logistic(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

impl Chart {
    pub fn for_interval(i: &Interval) -> Chart {
        match (i.lower.is_finite(), i.upper.is_finite()) {
            (true, true) => Chart::Logit {
                lower: i.lower,
                upper: i.upper,
            },
            (true, false) => Chart::LogLower { lower: i.lower },
            (false, true) => Chart::LogUpper { upper: i.upper },
            (false, false) => Chart::Identity,
        }
    }

    #[inline]
    pub fn forward(&self, x: f64) -> f64 {
        match *self {
            Chart::Identity => x,
            Chart::Logit { lower, upper } => (x - lower).ln() - (upper - x).ln(),
            Chart::LogLower { lower } => (x - lower).ln(),
            Chart::LogUpper { upper } => -(upper - x).ln(),
        }
    }

    #[inline]
    pub fn derivative(&self, x: f64) -> f64 {
        match *self {
            Chart::Identity => 1.0,
            Chart::Logit { lower, upper } => 1.0 / (x - lower) + 1.0 / (upper - x),
            Chart::LogLower { lower } => 1.0 / (x - lower),
            Chart::LogUpper { upper } => 1.0 / (upper - x),
        }
    }

    #[inline]
    pub fn inverse(&self, s: f64) -> f64 {
        match *self {
            Chart::Identity => s,
            Chart::Logit { lower, upper } => {
                if s == f64::NEG_INFINITY {
                    lower
                } else if s == f64::INFINITY {
                    upper
                } else if s <= 0.0 {
                    lower + (upper - lower) * logistic(s)
                } else {
                    upper - (upper - lower) * logistic(-s)
                }
            }
            Chart::LogLower { lower } => lower + s.exp(),
            Chart::LogUpper { upper } => upper - (-s).exp(),
        }
    }

    /// `d/ds` of the inverse map.
    #[inline]
    pub fn inverse_derivative(&self, s: f64) -> f64 {
        match *self {
            Chart::Identity => 1.0,
            Chart::Logit { lower, upper } => {
                let p = logistic(s);
                (upper - lower) * p * (1.0 - p)
            }
            Chart::LogLower { .. } => s.exp(),
            Chart::LogUpper { .. } => (-s).exp(),
        }
    }
}
