//! Polynomials and piecewise polynomials in a shifted and scaled local variable.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense polynomial `c0 + c1 t + c2 t^2 + ...`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(transparent)]
pub struct Polynomial(pub Vec<f64>);

impl Polynomial {
    pub fn new(coeffs: Vec<f64>) -> Self {
        Polynomial(coeffs)
    }

    pub fn constant(c: f64) -> Self {
        Polynomial(vec![c])
    }

    pub fn zero() -> Self {
        Polynomial(vec![])
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.0
    }

    pub fn degree(&self) -> usize {
        self.0.len().saturating_sub(1)
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&c| c == 0.0)
    }

    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, &c| acc * t + c)
    }

    pub fn derivative(&self) -> Polynomial {
        Polynomial(
            self.0
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, &c)| k as f64 * c)
                .collect(),
        )
    }

    /// Antiderivative vanishing at 0.
    pub fn antiderivative(&self) -> Polynomial {
        let mut out = Vec::with_capacity(self.0.len() + 1);
        out.push(0.0);
        out.extend(self.0.iter().enumerate().map(|(k, &c)| c / (k + 1) as f64));
        Polynomial(out)
    }

    pub fn integral(&self, a: f64, b: f64) -> f64 {
        let p = self.antiderivative();
        p.eval(b) - p.eval(a)
    }
}

/// One piece `p((x - origin) * scale)` on `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Piece {
    pub interval: [f64; 2],
    #[serde(default)]
    pub origin: f64,
    #[serde(default = "one")]
    pub scale: f64,
    pub poly: Polynomial,
}

fn one() -> f64 {
    1.0
}

impl Piece {
    pub fn new(lo: f64, hi: f64, origin: f64, scale: f64, coeffs: Vec<f64>) -> Self {
        Piece {
            interval: [lo, hi],
            origin,
            scale,
            poly: Polynomial(coeffs),
        }
    }

    #[inline]
    fn local(&self, x: f64) -> f64 {
        (x - self.origin) * self.scale
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.poly.eval(self.local(x))
    }

    pub fn derivative(&self, x: f64) -> f64 {
        self.scale * self.poly.derivative().eval(self.local(x))
    }

    pub fn second_derivative(&self, x: f64) -> f64 {
        self.scale * self.scale * self.poly.derivative().derivative().eval(self.local(x))
    }
}

/// Piecewise polynomial function; pieces are sorted and adjacent pieces share endpoints.
/// At a shared endpoint the left piece is used. Outside the covered range the function
/// takes the value `outside`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewisePolynomial {
    pub pieces: Vec<Piece>,
    #[serde(default)]
    pub outside: f64,
}

impl PiecewisePolynomial {
    pub fn new(mut pieces: Vec<Piece>) -> Result<Self> {
        if pieces.is_empty() {
            return Err(Error::InvalidParameter(
                "piecewise polynomial without pieces".into(),
            ));
        }
        pieces.sort_by(|a, b| a.interval[0].total_cmp(&b.interval[0]));
        for p in &pieces {
            if !(p.interval[0] < p.interval[1]) || !p.scale.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "bad piece interval [{}, {}]",
                    p.interval[0], p.interval[1]
                )));
            }
        }
        for w in pieces.windows(2) {
            if w[1].interval[0] < w[0].interval[1] {
                return Err(Error::InvalidParameter("overlapping pieces".into()));
            }
        }
        Ok(PiecewisePolynomial {
            pieces,
            outside: 0.0,
        })
    }

    pub fn single(poly: Polynomial, lo: f64, hi: f64) -> Self {
        PiecewisePolynomial {
            pieces: vec![Piece {
                interval: [lo, hi],
                origin: 0.0,
                scale: 1.0,
                poly,
            }],
            outside: 0.0,
        }
    }

    pub fn constant(c: f64) -> Self {
        PiecewisePolynomial {
            pieces: vec![Piece::new(
                f64::NEG_INFINITY,
                f64::INFINITY,
                0.0,
                1.0,
                vec![c],
            )],
            outside: c,
        }
    }

    fn locate(&self, x: f64) -> Option<&Piece> {
        let idx = self.pieces.partition_point(|p| p.interval[1] < x);
        self.pieces
            .get(idx)
            .filter(|p| p.interval[0] <= x && x <= p.interval[1])
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match self.locate(x) {
            Some(p) => p.eval(x),
            None => self.outside,
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        self.locate(x).map_or(0.0, |p| p.derivative(x))
    }

    /// Derivative taken from the piece to the right of a shared endpoint.
    pub fn right_derivative(&self, x: f64) -> f64 {
        let idx = self.pieces.partition_point(|p| p.interval[1] <= x);
        match self.pieces.get(idx) {
            Some(p) if p.interval[0] <= x => p.derivative(x),
            _ => self.derivative(x),
        }
    }

    pub fn second_derivative(&self, x: f64) -> f64 {
        self.locate(x).map_or(0.0, |p| p.second_derivative(x))
    }

    /// Breakpoints between pieces.
    pub fn knots(&self) -> Vec<f64> {
        let mut k: Vec<f64> = self
            .pieces
            .iter()
            .flat_map(|p| p.interval)
            .filter(|v| v.is_finite())
            .collect();
        k.sort_by(f64::total_cmp);
        k.dedup();
        k
    }
}
