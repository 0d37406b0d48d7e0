use std::fmt;

use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};

use super::chart::Chart;
use super::closed_set::ClosedSet;
use super::convergence::PiecewiseLinear;
use super::quadrature::integrate_split;
use crate::diffusion::Interval;
use crate::error::{Error, Result};
use crate::poly::Polynomial;

/// A value in `[0, inf]`; `Infinite` sorts above every finite value.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub enum MeasureValue {
    Finite(f64),
    Infinite,
}

impl MeasureValue {
    pub fn is_infinite(&self) -> bool {
        matches!(self, MeasureValue::Infinite)
    }

    pub fn finite(&self) -> Option<f64> {
        match *self {
            MeasureValue::Finite(v) => Some(v),
            MeasureValue::Infinite => None,
        }
    }

    /// `f64::INFINITY` for the infinite value.
    pub fn as_f64(&self) -> f64 {
        self.finite().unwrap_or(f64::INFINITY)
    }
}

impl From<f64> for MeasureValue {
    fn from(v: f64) -> Self {
        if v.is_infinite() {
            MeasureValue::Infinite
        } else {
            MeasureValue::Finite(v)
        }
    }
}

impl fmt::Display for MeasureValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MeasureValue::Finite(v) => write!(f, "{v}"),
            MeasureValue::Infinite => f.write_str("inf"),
        }
    }
}

impl Serialize for MeasureValue {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            MeasureValue::Finite(v) => s.serialize_f64(*v),
            MeasureValue::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for MeasureValue {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = MeasureValue;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a number or \"inf\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<MeasureValue, E> {
                Ok(MeasureValue::Finite(v))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<MeasureValue, E> {
                Ok(MeasureValue::Finite(v as f64))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<MeasureValue, E> {
                Ok(MeasureValue::Finite(v as f64))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<MeasureValue, E> {
                match v {
                    "inf" | "+inf" | "infinity" => Ok(MeasureValue::Infinite),
                    _ => Err(E::custom(format!("unexpected measure value {v:?}"))),
                }
            }
        }
        d.deserialize_any(V)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IntervalKind {
    Open,
    Closed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub x: f64,
    pub mass: f64,
}

/// Density on `interval`. Without a chart the density is `poly(x)`; with a chart it is
/// `poly(psi(x)) psi'(x)`, i.e. a polynomial density in chart coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityPiece {
    pub interval: [f64; 2],
    pub poly: Polynomial,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chart: Option<Chart>,
}

impl DensityPiece {
    pub fn new(a: f64, b: f64, poly: Polynomial) -> Self {
        DensityPiece {
            interval: [a, b],
            poly,
            chart: None,
        }
    }

    pub fn constant(a: f64, b: f64, c: f64) -> Self {
        Self::new(a, b, Polynomial::constant(c))
    }

    pub fn covers(&self, x: f64) -> bool {
        self.interval[0] <= x && x <= self.interval[1]
    }

    /// Density with respect to Lebesgue measure in `x`.
    pub fn eval(&self, x: f64) -> f64 {
        if !self.covers(x) {
            return 0.0;
        }
        match self.chart {
            None => self.poly.eval(x),
            Some(c) => self.poly.eval(c.forward(x)) * c.derivative(x),
        }
    }

    /// Density in chart coordinates (equal to [`eval`](Self::eval) without a chart).
    pub fn chart_value(&self, x: f64) -> f64 {
        if !self.covers(x) {
            return 0.0;
        }
        match self.chart {
            None => self.poly.eval(x),
            Some(c) => self.poly.eval(c.forward(x)),
        }
    }

    /// Mass of `[a, b]`; may be infinite when a chart piece reaches a natural endpoint.
    pub fn mass(&self, a: f64, b: f64) -> f64 {
        let lo = a.max(self.interval[0]);
        let hi = b.min(self.interval[1]);
        if !(hi > lo) {
            return 0.0;
        }
        match self.chart {
            None => self.poly.integral(lo, hi),
            Some(c) => {
                let (sl, sh) = (c.forward(lo), c.forward(hi));
                if self.poly.is_zero() {
                    return 0.0;
                }
                if !sl.is_finite() || !sh.is_finite() {
                    return f64::INFINITY;
                }
                self.poly.integral(sl, sh)
            }
        }
    }

    /// `integral phi d(piece)` for a compactly supported piecewise-linear `phi`.
    pub fn integrate(&self, phi: &PiecewiseLinear) -> f64 {
        let (Some(first), Some(last)) = (phi.knots.first(), phi.knots.last()) else {
            return 0.0;
        };
        let lo = first.0.max(self.interval[0]);
        let hi = last.0.min(self.interval[1]);
        if !(hi > lo) {
            return 0.0;
        }
        match self.chart {
            None => {
                let mut total = 0.0;
                for w in phi.knots.windows(2) {
                    let (u, v) = (w[0].0.max(lo), w[1].0.min(hi));
                    if !(v > u) {
                        continue;
                    }
                    let slope = (w[1].1 - w[0].1) / (w[1].0 - w[0].0);
                    let lin = Polynomial::new(vec![w[0].1 - slope * w[0].0, slope]);
                    total += mul(&self.poly, &lin).integral(u, v);
                }
                total
            }
            Some(c) => {
                let breaks: Vec<f64> = phi.knots.iter().map(|k| c.forward(k.0)).collect();
                let (sl, sh) = (c.forward(lo), c.forward(hi));
                let scale = self
                    .poly
                    .coeffs()
                    .iter()
                    .map(|v| v.abs())
                    .sum::<f64>()
                    .max(1.0);
                integrate_split(
                    |s| phi.eval(c.inverse(s)) * self.poly.eval(s),
                    sl,
                    sh,
                    &breaks,
                    1e-13 * scale,
                )
            }
        }
    }
}

fn mul(p: &Polynomial, q: &Polynomial) -> Polynomial {
    let (a, b) = (p.coeffs(), q.coeffs());
    if a.is_empty() || b.is_empty() {
        return Polynomial::zero();
    }
    let mut c = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            c[i + j] += x * y;
        }
    }
    Polynomial::new(c)
}

/// Atoms plus piecewise-polynomial densities.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LocallyFiniteMeasure {
    #[serde(default)]
    pub atoms: Vec<Atom>,
    #[serde(default)]
    pub densities: Vec<DensityPiece>,
}

impl LocallyFiniteMeasure {
    pub fn new(mut atoms: Vec<Atom>, mut densities: Vec<DensityPiece>) -> Result<Self> {
        atoms.sort_by(|a, b| a.x.total_cmp(&b.x));
        for a in &atoms {
            if !a.x.is_finite() || !(a.mass > 0.0) || !a.mass.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "atom at {} with mass {} is not admissible",
                    a.x, a.mass
                )));
            }
        }
        for w in atoms.windows(2) {
            if w[0].x == w[1].x {
                return Err(Error::InvalidParameter(format!(
                    "duplicate atom at {}",
                    w[0].x
                )));
            }
        }
        densities.sort_by(|a, b| a.interval[0].total_cmp(&b.interval[0]));
        for d in &densities {
            let [a, b] = d.interval;
            if a.is_nan() || b.is_nan() || !(a < b) {
                return Err(Error::InvalidParameter(format!(
                    "bad density interval [{a}, {b}]"
                )));
            }
            if d.chart.is_none() && !(a.is_finite() && b.is_finite()) {
                return Err(Error::InvalidParameter(
                    "polynomial densities need a bounded interval".into(),
                ));
            }
            if d.poly.coeffs().iter().any(|c| !c.is_finite()) {
                return Err(Error::InvalidParameter(
                    "non-finite density coefficient".into(),
                ));
            }
            if !nonnegative(d) {
                return Err(Error::InvalidParameter(format!(
                    "density on [{a}, {b}] takes negative values"
                )));
            }
        }
        for w in densities.windows(2) {
            if w[1].interval[0] < w[0].interval[1] {
                return Err(Error::InvalidParameter("overlapping density pieces".into()));
            }
        }
        Ok(LocallyFiniteMeasure { atoms, densities })
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn dirac(x: f64, mass: f64) -> Result<Self> {
        Self::new(vec![Atom { x, mass }], Vec::new())
    }

    /// Constant density `c` on `[a, b]`.
    pub fn uniform(a: f64, b: f64, c: f64) -> Result<Self> {
        Self::new(Vec::new(), vec![DensityPiece::constant(a, b, c)])
    }

    pub fn is_zero(&self) -> bool {
        self.atoms.is_empty() && self.densities.iter().all(|d| d.poly.is_zero())
    }

    /// Re-runs the constructor checks (useful after deserialization).
    pub fn validated(self) -> Result<Self> {
        Self::new(self.atoms, self.densities)
    }

    pub fn validate_in(&self, space: &Interval) -> Result<()> {
        for a in &self.atoms {
            space.check(a.x)?;
        }
        for d in &self.densities {
            if d.interval[0] < space.lower || d.interval[1] > space.upper {
                return Err(Error::InvalidParameter(format!(
                    "density interval [{}, {}] leaves the state space",
                    d.interval[0], d.interval[1]
                )));
            }
        }
        Ok(())
    }

    /// Density at `x`; at a shared piece boundary the left piece is used.
    pub fn density_at(&self, x: f64) -> f64 {
        self.densities
            .iter()
            .find(|d| d.covers(x))
            .map_or(0.0, |d| d.eval(x))
    }

    /// Chart-coordinate density at `x` (see [`DensityPiece::chart_value`]).
    pub fn chart_density_at(&self, x: f64) -> f64 {
        self.densities
            .iter()
            .find(|d| d.covers(x))
            .map_or(0.0, |d| d.chart_value(x))
    }

    pub fn atom_at(&self, x: f64) -> Option<&Atom> {
        self.atoms.iter().find(|a| a.x == x)
    }

    /// Mass of the interval with end points `a <= b`.
    pub fn mass(&self, a: f64, b: f64, kind: IntervalKind) -> f64 {
        let atoms: f64 = self
            .atoms
            .iter()
            .filter(|at| match kind {
                IntervalKind::Open => a < at.x && at.x < b,
                IntervalKind::Closed => a <= at.x && at.x <= b,
            })
            .map(|at| at.mass)
            .sum();
        let dens: f64 = self.densities.iter().map(|d| d.mass(a, b)).sum();
        atoms + dens
    }

    pub fn total_mass(&self) -> f64 {
        self.mass(f64::NEG_INFINITY, f64::INFINITY, IntervalKind::Closed)
    }

    pub fn integrate(&self, phi: &PiecewiseLinear) -> f64 {
        let atoms: f64 = self.atoms.iter().map(|a| a.mass * phi.eval(a.x)).sum();
        let dens: f64 = self.densities.iter().map(|d| d.integrate(phi)).sum();
        atoms + dens
    }

    /// A point of the carrier lying in `set`, if any.
    pub fn carrier_meets(&self, set: &ClosedSet) -> Option<f64> {
        if let Some(a) = self.atoms.iter().find(|a| set.contains(a.x)) {
            return Some(a.x);
        }
        self.densities
            .iter()
            .filter(|d| !d.poly.is_zero())
            .find(|d| set.meets_open(d.interval[0], d.interval[1]))
            .map(|d| {
                let c = set
                    .components()
                    .iter()
                    .find(|c| c[0] < d.interval[1] && c[1] > d.interval[0])
                    .expect("meets_open found a component");
                c[0].max(d.interval[0])
            })
    }

    /// Points at which a grid must have nodes: atom locations and density breakpoints.
    pub fn special_points(&self) -> Vec<f64> {
        let mut pts: Vec<f64> = self.atoms.iter().map(|a| a.x).collect();
        for d in &self.densities {
            pts.extend(d.interval.iter().copied().filter(|v| v.is_finite()));
        }
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        pts
    }
}

fn nonnegative(d: &DensityPiece) -> bool {
    let [a, b] = d.interval;
    let (lo, hi) = match d.chart {
        None => (a, b),
        Some(c) => (c.forward(a), c.forward(b)),
    };
    let (lo, hi) = (lo.max(-1e6), hi.min(1e6));
    let scale = d
        .poly
        .coeffs()
        .iter()
        .map(|v| v.abs())
        .sum::<f64>()
        .max(1.0);
    (0..=64).all(|k| {
        let t = lo + (hi - lo) * k as f64 / 64.0;
        d.poly.eval(t) >= -1e-12 * scale
    })
}

/// A `[0, inf]`-valued measure: a locally finite part plus the closed set on which it
/// is locally infinite.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ExtendedMeasure {
    #[serde(flatten)]
    pub finite_part: LocallyFiniteMeasure,
    #[serde(default)]
    pub explosion: ClosedSet,
}

impl ExtendedMeasure {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn measure_of(&self, a: f64, b: f64, kind: IntervalKind) -> MeasureValue {
        measure_of(self, a, b, kind)
    }

    pub fn integrate(&self, phi: &PiecewiseLinear) -> f64 {
        self.finite_part.integrate(phi)
    }
}

pub fn to_extended(mu: &LocallyFiniteMeasure, s: &ClosedSet) -> Result<ExtendedMeasure> {
    if let Some(x) = mu.carrier_meets(s) {
        return Err(Error::CarrierOverlap { x });
    }
    Ok(ExtendedMeasure {
        finite_part: mu.clone(),
        explosion: s.clone(),
    })
}

pub fn explosion_set(m: &ExtendedMeasure) -> ClosedSet {
    m.explosion.clone()
}

pub fn restrict_off_explosion(m: &ExtendedMeasure) -> LocallyFiniteMeasure {
    m.finite_part.clone()
}

pub fn measure_of(m: &ExtendedMeasure, a: f64, b: f64, kind: IntervalKind) -> MeasureValue {
    let meets = match kind {
        IntervalKind::Open => m.explosion.meets_open(a, b),
        IntervalKind::Closed => m.explosion.meets_closed(a, b),
    };
    if meets {
        MeasureValue::Infinite
    } else {
        MeasureValue::from(m.finite_part.mass(a, b, kind))
    }
}
