use serde::{Deserialize, Serialize};

use super::measure::{ExtendedMeasure, IntervalKind, MeasureValue};
use crate::error::{Error, Result};

/// Continuous piecewise-linear function, zero outside its first and last knots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseLinear {
    pub knots: Vec<(f64, f64)>,
}

impl PiecewiseLinear {
    pub fn new(knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.len() < 2 {
            return Err(Error::InvalidParameter(
                "a probe needs at least two knots".into(),
            ));
        }
        if knots.windows(2).any(|w| !(w[0].0 < w[1].0)) {
            return Err(Error::InvalidParameter("probe knots must increase".into()));
        }
        let (first, last) = (knots[0], knots[knots.len() - 1]);
        if first.1 != 0.0 || last.1 != 0.0 || knots.iter().any(|k| !k.0.is_finite()) {
            return Err(Error::InvalidParameter(
                "probe must vanish at its finite end knots".into(),
            ));
        }
        Ok(PiecewiseLinear { knots })
    }

    /// Tent of height one centred at `c`.
    pub fn hat(c: f64, half_width: f64) -> Self {
        PiecewiseLinear {
            knots: vec![(c - half_width, 0.0), (c, 1.0), (c + half_width, 0.0)],
        }
    }

    /// Zero outside `[a, d]`, one on `[b, c]`.
    pub fn trapezoid(a: f64, b: f64, c: f64, d: f64) -> Result<Self> {
        Self::new(vec![(a, 0.0), (b, 1.0), (c, 1.0), (d, 0.0)])
    }

    pub fn support(&self) -> (f64, f64) {
        (self.knots[0].0, self.knots[self.knots.len() - 1].0)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let (lo, hi) = self.support();
        if !(x > lo && x < hi) {
            return 0.0;
        }
        let i = self.knots.partition_point(|k| k.0 <= x);
        let (a, b) = (self.knots[i - 1], self.knots[i]);
        a.1 + (b.1 - a.1) * (x - a.0) / (b.0 - a.0)
    }
}

/// Traces produced by [`check_convergence`], indexed `[probe][sequence element]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub residuals: Vec<Vec<f64>>,
    pub explosion_masses: Vec<Vec<MeasureValue>>,
    pub threshold: f64,
    /// Explosion-probe masses never decrease along the sequence.
    pub monotone_escape: Vec<bool>,
    /// Final explosion-probe mass exceeds the threshold.
    pub escaped: Vec<bool>,
}

impl ConvergenceReport {
    pub fn final_max_residual(&self) -> f64 {
        self.residuals
            .iter()
            .filter_map(|r| r.last().copied())
            .fold(0.0, f64::max)
    }

    /// Residual traces never increase by more than `slack` from one element to the next.
    pub fn residuals_monotone(&self, slack: f64) -> bool {
        self.residuals
            .iter()
            .all(|r| r.windows(2).all(|w| w[1] <= w[0] + slack))
    }

    pub fn all_escaped(&self) -> bool {
        self.escaped.iter().all(|&e| e)
    }
}

/// Checks the two conditions for convergence of extended measures: test-function
/// integrals off the explosion set of the limit converge, and open sets meeting the
/// explosion set eventually carry more than `threshold`.
pub fn check_convergence(
    sequence: &[ExtendedMeasure],
    limit: &ExtendedMeasure,
    probes: &[PiecewiseLinear],
    explosion_probes: &[(f64, f64)],
    threshold: f64,
) -> Result<ConvergenceReport> {
    for p in probes {
        let (lo, hi) = p.support();
        if limit.explosion.meets_closed(lo, hi) {
            return Err(Error::ProbeMeetsExplosion);
        }
    }
    for &(a, b) in explosion_probes {
        if !limit.explosion.meets_open(a, b) {
            return Err(Error::InvalidParameter(format!(
                "explosion probe ({a}, {b}) misses the explosion set"
            )));
        }
    }
    let residuals = probes
        .iter()
        .map(|p| {
            let target = limit.integrate(p);
            sequence
                .iter()
                .map(|m| {
                    if m.explosion.meets_closed(p.support().0, p.support().1) {
                        f64::INFINITY
                    } else {
                        (m.integrate(p) - target).abs()
                    }
                })
                .collect()
        })
        .collect();
    let explosion_masses: Vec<Vec<MeasureValue>> = explosion_probes
        .iter()
        .map(|&(a, b)| {
            sequence
                .iter()
                .map(|m| m.measure_of(a, b, IntervalKind::Open))
                .collect()
        })
        .collect();
    let monotone_escape = explosion_masses
        .iter()
        .map(|t| t.windows(2).all(|w| w[1] >= w[0]))
        .collect();
    let escaped = explosion_masses
        .iter()
        .map(|t| {
            t.last()
                .is_some_and(|v| *v > MeasureValue::Finite(threshold))
        })
        .collect();
    Ok(ConvergenceReport {
        residuals,
        explosion_masses,
        threshold,
        monotone_escape,
        escaped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{ClosedSet, LocallyFiniteMeasure};

    fn dirac(x: f64) -> ExtendedMeasure {
        ExtendedMeasure {
            finite_part: LocallyFiniteMeasure::dirac(x, 1.0).unwrap(),
            explosion: ClosedSet::empty(),
        }
    }

    #[test]
    fn constant_sequence_has_zero_residuals() {
        let m = dirac(0.5);
        let r = check_convergence(
            &vec![m.clone(); 4],
            &m,
            &[PiecewiseLinear::hat(0.5, 0.1)],
            &[],
            1.0,
        )
        .unwrap();
        assert_eq!(r.final_max_residual(), 0.0);
    }

    #[test]
    fn moving_atoms() {
        let seq: Vec<_> = (1..=8).map(|n| dirac(0.5 + 0.1 / n as f64)).collect();
        let phi = PiecewiseLinear::hat(0.5, 0.2);
        let r = check_convergence(&seq, &dirac(0.5), std::slice::from_ref(&phi), &[], 1.0).unwrap();
        for (n, res) in r.residuals[0].iter().enumerate() {
            let want = (phi.eval(0.5 + 0.1 / (n + 1) as f64) - 1.0).abs();
            assert!((res - want).abs() < 1e-15);
        }
        assert!(r.residuals_monotone(0.0));
    }

    #[test]
    fn probe_on_explosion_is_rejected() {
        let lim = ExtendedMeasure {
            finite_part: LocallyFiniteMeasure::zero(),
            explosion: ClosedSet::point(0.5),
        };
        let err = check_convergence(&[], &lim, &[PiecewiseLinear::hat(0.5, 0.1)], &[], 1.0);
        assert_eq!(err, Err(Error::ProbeMeetsExplosion));
    }
}
