use serde::{Deserialize, Serialize};

use crate::diffusion::{
    estimate_local_time_with, first_hit, local_time_increments, DiffusionModel, Hit,
    LocalTimeField, LocalTimeMethod, PathSample,
};
use crate::error::{Error, Result};
use crate::measures::{ClosedSet, IntervalKind, LocallyFiniteMeasure};

/// Tolerance for matching atom locations against local-time levels.
pub const LEVEL_MATCH_TOL: f64 = 1e-12;

/// Markovian randomized stopping time: stop at once on `stop_set`, otherwise stop with
/// intensity `intensity` against local time.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MarkovStrategy {
    #[serde(default)]
    pub intensity: LocallyFiniteMeasure,
    #[serde(default)]
    pub stop_set: ClosedSet,
}

impl MarkovStrategy {
    pub fn new(intensity: LocallyFiniteMeasure, stop_set: ClosedSet) -> Result<Self> {
        if let Some(x) = intensity.carrier_meets(&stop_set) {
            return Err(Error::CarrierOverlap { x });
        }
        Ok(MarkovStrategy {
            intensity,
            stop_set,
        })
    }

    /// `(0, empty)`: never stop.
    pub fn never() -> Self {
        Self::default()
    }

    pub fn pure(stop_set: ClosedSet) -> Self {
        MarkovStrategy {
            intensity: LocallyFiniteMeasure::zero(),
            stop_set,
        }
    }

    pub fn is_pure(&self) -> bool {
        self.intensity.is_zero()
    }

    /// Re-checks the invariants, e.g. after deserialization.
    pub fn validated(self) -> Result<Self> {
        Self::new(self.intensity.validated()?, self.stop_set)
    }
}

/// Survival function `Lambda_t` of a strategy along one path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsfCurve {
    pub dt: f64,
    pub lambda: Vec<f64>,
    /// Hitting time of the stop set, infinite if not reached.
    pub tau_s: f64,
    pub hit: Option<Hit>,
    /// Grid nodes at which `exp(-hazard)` fell outside `[0, 1]` and was clamped.
    pub clamp_violations: usize,
}

impl CsfCurve {
    pub fn gamma(&self, k: usize) -> f64 {
        1.0 - self.lambda[k]
    }

    /// `Lambda_{t-}` at node `k`, with the convention `Lambda_{0-} = 1`.
    pub fn lambda_before(&self, k: usize) -> f64 {
        if k == 0 {
            1.0
        } else {
            self.lambda[k - 1]
        }
    }
}

/// Per-level weights of `integral L^y mu(dy)`: atoms exactly, densities by the
/// trapezoid rule on the level grid.
fn level_weights(mu: &LocallyFiniteMeasure, lt: &LocalTimeField) -> Result<Vec<f64>> {
    let mut w = vec![0.0; lt.levels.len()];
    for a in &mu.atoms {
        let i = lt
            .level_index(a.x, LEVEL_MATCH_TOL)
            .ok_or(Error::AtomNotOnLevels { x: a.x })?;
        w[i] += a.mass;
    }
    if !mu.densities.is_empty() {
        for (i, pair) in lt.levels.windows(2).enumerate() {
            let h = pair[1] - pair[0];
            let mid = 0.5 * (pair[0] + pair[1]);
            // Evaluate the piece seen from inside the cell, so that a piece ending on a
            // level does not leak into the neighbouring cell.
            let Some(piece) = mu.densities.iter().find(|d| d.covers(mid)) else {
                continue;
            };
            w[i] += 0.5 * h * piece.eval(pair[0]);
            w[i + 1] += 0.5 * h * piece.eval(pair[1]);
        }
    }
    Ok(w)
}

pub fn csf_along_path(
    strategy: &MarkovStrategy,
    path: &PathSample,
    lt: &LocalTimeField,
) -> Result<CsfCurve> {
    let n = path.states.len();
    if lt.n_times() != n {
        return Err(Error::InvalidParameter(
            "local-time field does not match the path".into(),
        ));
    }
    let weights = level_weights(&strategy.intensity, lt)?;
    let active: Vec<(usize, f64)> = weights
        .iter()
        .copied()
        .enumerate()
        .filter(|&(_, w)| w != 0.0)
        .collect();
    let hit = first_hit(path, &strategy.stop_set);
    let stop_step = hit.map_or(n, |h| h.step);
    let mut violations = 0;
    let lambda = (0..n)
        .map(|k| {
            if k >= stop_step {
                return 0.0;
            }
            let hazard: f64 = active.iter().map(|&(i, w)| w * lt.values[i][k]).sum();
            let v = (-hazard).exp();
            if !(0.0..=1.0).contains(&v) {
                violations += 1;
            }
            v.clamp(0.0, 1.0)
        })
        .collect();
    Ok(CsfCurve {
        dt: path.dt,
        lambda,
        tau_s: hit.map_or(f64::INFINITY, |h| h.time),
        hit,
        clamp_violations: violations,
    })
}

/// Grid index of `inf{t : Gamma_t > u}`, if reached.
pub fn sample_stopping_index(csf: &CsfCurve, u: f64) -> Option<usize> {
    csf.lambda.iter().position(|&l| 1.0 - l > u)
}

/// `inf{t : Gamma_t > u}` on the grid, infinite when the path survives.
pub fn sample_stopping(csf: &CsfCurve, u: f64) -> f64 {
    sample_stopping_index(csf, u).map_or(f64::INFINITY, |k| k as f64 * csf.dt)
}

/// `|Lambda_{k+s} - Lambda_k * Lambda'_s|` where `Lambda'` is recomputed on the path
/// restarted at step `k` with freshly accumulated local time.
pub fn multiplicativity_check(
    strategy: &MarkovStrategy,
    model: &DiffusionModel,
    path: &PathSample,
    lt: &LocalTimeField,
    k: usize,
    s: usize,
) -> Result<f64> {
    if k + s >= path.states.len() {
        return Err(Error::InvalidParameter("tau + s beyond the horizon".into()));
    }
    let full = csf_along_path(strategy, path, lt)?;
    let shifted = path.shifted(k);
    let lt2 = estimate_local_time_with(&shifted, model, &lt.levels, lt.bandwidth, lt.method)?;
    let tail = csf_along_path(strategy, &shifted, &lt2)?;
    Ok((full.lambda[k + s] - full.lambda[k] * tail.lambda[s]).abs())
}

/// Streaming hazard of a strategy along a path, for Monte Carlo loops that do not
/// store the path. Density parts use the kernel occupation form
/// `sigma^2 dt mu((x - eps, x + eps)) / 2 eps`; atoms use the chosen estimator.
#[derive(Debug, Clone)]
pub struct HazardMeter {
    atom_levels: Vec<f64>,
    atom_masses: Vec<f64>,
    intensity: LocallyFiniteMeasure,
    has_density: bool,
    method: LocalTimeMethod,
    eps: f64,
}

impl HazardMeter {
    pub fn new(strategy: &MarkovStrategy, method: LocalTimeMethod, eps: f64) -> Self {
        let mu = &strategy.intensity;
        HazardMeter {
            atom_levels: mu.atoms.iter().map(|a| a.x).collect(),
            atom_masses: mu.atoms.iter().map(|a| a.mass).collect(),
            has_density: mu.densities.iter().any(|d| !d.poly.is_zero()),
            intensity: mu.clone(),
            method,
            eps,
        }
    }

    pub fn is_null(&self) -> bool {
        self.atom_levels.is_empty() && !self.has_density
    }

    /// Hazard accumulated over the step `x -> x_next`, split by source: each atom
    /// reports its own location, the density part reports `x`. Returns the total.
    #[inline]
    pub fn increment(
        &self,
        x: f64,
        x_next: f64,
        sigma2: f64,
        dt: f64,
        parts: &mut Vec<(f64, f64)>,
    ) -> f64 {
        parts.clear();
        let mut total = 0.0;
        if !self.atom_levels.is_empty() {
            local_time_increments(
                self.method,
                &self.atom_levels,
                x,
                x_next,
                sigma2,
                dt,
                self.eps,
                |i, inc| {
                    let h = self.atom_masses[i] * inc;
                    total += h;
                    parts.push((self.atom_levels[i], h));
                },
            );
        }
        if self.has_density {
            let m = self
                .intensity
                .mass(x - self.eps, x + self.eps, IntervalKind::Open);
            let h = sigma2 * dt * m / (2.0 * self.eps);
            if h > 0.0 {
                total += h;
                parts.push((x, h));
            }
        }
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::{estimate_local_time, simulate_path, SeedRecord};

    #[test]
    fn pure_strategy_csf_is_indicator() {
        let m = DiffusionModel::logistic_martingale();
        let p = simulate_path(&m, 0.5, 1e-3, 5.0, SeedRecord::new(3, 0)).unwrap();
        let lt = estimate_local_time(&p, &m, &[0.5], 0.01).unwrap();
        let s = MarkovStrategy::pure(
            ClosedSet::from_components(vec![[0.0, 0.45], [0.55, 1.0]]).unwrap(),
        );
        let c = csf_along_path(&s, &p, &lt).unwrap();
        let k = c.hit.expect("path leaves (0.45, 0.55)").step;
        assert!(c.lambda[..k].iter().all(|&l| l == 1.0));
        assert!(c.lambda[k..].iter().all(|&l| l == 0.0));
        for u in [0.0, 0.3, 0.999] {
            assert_eq!(sample_stopping(&c, u), c.tau_s);
        }
    }

    #[test]
    fn stop_at_zero() {
        let m = DiffusionModel::logistic_martingale();
        let p = simulate_path(&m, 0.5, 1e-3, 1.0, SeedRecord::new(3, 0)).unwrap();
        let lt = estimate_local_time(&p, &m, &[0.5], 0.01).unwrap();
        let c = csf_along_path(&MarkovStrategy::pure(ClosedSet::point(0.5)), &p, &lt).unwrap();
        assert_eq!(sample_stopping(&c, 0.0), 0.0);
        assert_eq!(c.lambda_before(0), 1.0);
    }

    #[test]
    fn never_stop() {
        let m = DiffusionModel::brownian();
        let p = simulate_path(&m, 0.0, 1e-2, 1.0, SeedRecord::new(1, 1)).unwrap();
        let lt = estimate_local_time(&p, &m, &[0.0], 0.1).unwrap();
        let c = csf_along_path(&MarkovStrategy::never(), &p, &lt).unwrap();
        assert!(c.lambda.iter().all(|&l| l == 1.0));
        assert_eq!(sample_stopping(&c, 0.5), f64::INFINITY);
    }

    #[test]
    fn atom_must_sit_on_a_level() {
        let m = DiffusionModel::brownian();
        let p = simulate_path(&m, 0.0, 1e-2, 1.0, SeedRecord::new(1, 1)).unwrap();
        let lt = estimate_local_time(&p, &m, &[0.0], 0.1).unwrap();
        let s = MarkovStrategy::new(
            LocallyFiniteMeasure::dirac(0.3, 1.0).unwrap(),
            ClosedSet::empty(),
        )
        .unwrap();
        assert_eq!(
            csf_along_path(&s, &p, &lt),
            Err(Error::AtomNotOnLevels { x: 0.3 })
        );
    }

    #[test]
    fn carrier_must_avoid_stop_set() {
        let mu = LocallyFiniteMeasure::dirac(0.5, 1.0).unwrap();
        assert!(MarkovStrategy::new(mu, ClosedSet::point(0.5)).is_err());
    }
}
