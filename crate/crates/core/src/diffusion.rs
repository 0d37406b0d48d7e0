use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::ClosedSet;
use crate::poly::Polynomial;

/// Distance from an endpoint used when a step overshoots the state space.
pub const CLAMP_MARGIN: f64 = 1e-12;

/// Open interval `(lower, upper)`; either end may be infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 2]", into = "[f64; 2]")]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl TryFrom<[f64; 2]> for Interval {
    type Error = Error;
    fn try_from(v: [f64; 2]) -> Result<Self> {
        Interval::new(v[0], v[1])
    }
}

impl From<Interval> for [f64; 2] {
    fn from(i: Interval) -> Self {
        [i.lower, i.upper]
    }
}

impl Interval {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if lower.is_nan() || upper.is_nan() || lower >= upper {
            return Err(Error::InvalidParameter(format!(
                "interval ({lower}, {upper}) is empty"
            )));
        }
        Ok(Interval { lower, upper })
    }

    pub fn real_line() -> Self {
        Interval {
            lower: f64::NEG_INFINITY,
            upper: f64::INFINITY,
        }
    }

    pub fn unit() -> Self {
        Interval {
            lower: 0.0,
            upper: 1.0,
        }
    }

    #[inline]
    pub fn contains(&self, x: f64) -> bool {
        self.lower < x && x < self.upper
    }

    pub fn check(&self, x: f64) -> Result<()> {
        if self.contains(x) {
            Ok(())
        } else {
            Err(Error::OutsideStateSpace {
                x,
                lower: self.lower,
                upper: self.upper,
            })
        }
    }

    /// Pulls `x` back inside, `CLAMP_MARGIN` away from the crossed endpoint.
    /// The flag reports whether anything was changed.
    #[inline]
    pub fn clamp_inside(&self, x: f64) -> (f64, bool) {
        if x <= self.lower {
            (
                self.lower + CLAMP_MARGIN.max(self.lower.abs() * f64::EPSILON),
                true,
            )
        } else if x >= self.upper {
            (
                self.upper - CLAMP_MARGIN.max(self.upper.abs() * f64::EPSILON),
                true,
            )
        } else {
            (x, false)
        }
    }
}

/// `dX = b(X) dt + sigma(X) dW` on an open interval, discounted at rate `r`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionModel {
    pub state_space: Interval,
    pub drift: Polynomial,
    pub volatility: Polynomial,
    pub discount: f64,
    /// Admits `sigma = 0`; only meant for tests.
    #[serde(default)]
    pub allow_degenerate: bool,
}

impl DiffusionModel {
    pub fn new(
        state_space: Interval,
        drift: Polynomial,
        volatility: Polynomial,
        discount: f64,
    ) -> Result<Self> {
        let m = DiffusionModel {
            state_space,
            drift,
            volatility,
            discount,
            allow_degenerate: false,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.discount >= 0.0) || !self.discount.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "discount rate {} must be finite and >= 0",
                self.discount
            )));
        }
        Ok(())
    }

    /// Standard Brownian motion on the real line.
    pub fn brownian() -> Self {
        DiffusionModel {
            state_space: Interval::real_line(),
            drift: Polynomial::zero(),
            volatility: Polynomial::constant(1.0),
            discount: 0.0,
            allow_degenerate: false,
        }
    }

    /// `dX = X(1 - X) dW` on `(0, 1)`, undiscounted.
    pub fn logistic_martingale() -> Self {
        DiffusionModel {
            state_space: Interval::unit(),
            drift: Polynomial::zero(),
            volatility: Polynomial::new(vec![0.0, 1.0, -1.0]),
            discount: 0.0,
            allow_degenerate: false,
        }
    }

    /// Zero drift and zero volatility; paths stay put.
    pub fn frozen(state_space: Interval) -> Self {
        DiffusionModel {
            state_space,
            drift: Polynomial::zero(),
            volatility: Polynomial::zero(),
            discount: 0.0,
            allow_degenerate: true,
        }
    }

    pub fn is_driftless(&self) -> bool {
        self.drift.is_zero()
    }

    #[inline]
    pub fn drift_at(&self, x: f64) -> Result<f64> {
        let b = self.drift.eval(x);
        if b.is_finite() {
            Ok(b)
        } else {
            Err(Error::BadCoefficient { x })
        }
    }

    #[inline]
    pub fn sigma_at(&self, x: f64) -> Result<f64> {
        let s = self.volatility.eval(x);
        if s.is_finite() && (s > 0.0 || (self.allow_degenerate && s >= 0.0)) {
            Ok(s)
        } else {
            Err(Error::BadCoefficient { x })
        }
    }

    #[inline]
    pub fn sigma2_at(&self, x: f64) -> Result<f64> {
        self.sigma_at(x).map(|s| s * s)
    }
}

/// Master seed plus stream index; each simulated path owns one stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub master: u64,
    pub stream: u64,
}

impl SeedRecord {
    pub fn new(master: u64, stream: u64) -> Self {
        SeedRecord { master, stream }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master);
        rng.set_stream(self.stream);
        rng
    }

    /// Independent generator for auxiliary draws (randomization devices) on the same path.
    pub fn aux_rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master ^ 0x9e37_79b9_7f4a_7c15);
        rng.set_stream(self.stream);
        rng
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    EulerMaruyama,
}

/// Euler-Maruyama stepper for a single path.
pub struct EulerStepper<'a> {
    model: &'a DiffusionModel,
    dt: f64,
    sqrt_dt: f64,
    rng: ChaCha8Rng,
    pub clamped: bool,
}

impl<'a> EulerStepper<'a> {
    pub fn new(model: &'a DiffusionModel, dt: f64, seed: SeedRecord) -> Self {
        EulerStepper {
            model,
            dt,
            sqrt_dt: dt.sqrt(),
            rng: seed.rng(),
            clamped: false,
        }
    }

    #[inline]
    pub fn step(&mut self, x: f64) -> Result<f64> {
        let b = self.model.drift_at(x)?;
        let s = self.model.sigma_at(x)?;
        let z: f64 = self.rng.sample(StandardNormal);
        let (next, hit) = self
            .model
            .state_space
            .clamp_inside(x + b * self.dt + s * self.sqrt_dt * z);
        self.clamped |= hit;
        Ok(next)
    }
}

/// Number of grid steps in `horizon`, which must be a multiple of `dt`.
pub fn step_count(dt: f64, horizon: f64) -> Result<usize> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "dt = {dt} must be positive"
        )));
    }
    if !(horizon >= 0.0) || !horizon.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "horizon = {horizon} must be finite and >= 0"
        )));
    }
    let n = (horizon / dt).round();
    if (n * dt - horizon).abs() > 1e-9 * horizon.max(dt) {
        return Err(Error::InvalidParameter(format!(
            "horizon {horizon} is not a multiple of dt {dt}"
        )));
    }
    Ok(n as usize)
}

/// A simulated trajectory on the uniform grid `0, dt, ..., n dt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSample {
    pub dt: f64,
    pub states: Vec<f64>,
    pub seed: SeedRecord,
    pub scheme: Scheme,
    /// Set when some step had to be pulled back inside the state space.
    pub clamped: bool,
}

impl PathSample {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.states.len()).map(|k| self.time(k)).collect()
    }

    pub fn horizon(&self) -> f64 {
        self.time(self.states.len().saturating_sub(1))
    }

    /// The path restarted at step `k`, with times shifted back to zero.
    pub fn shifted(&self, k: usize) -> PathSample {
        PathSample {
            dt: self.dt,
            states: self.states[k..].to_vec(),
            seed: self.seed,
            scheme: self.scheme,
            clamped: self.clamped,
        }
    }
}

pub fn simulate_path(
    model: &DiffusionModel,
    x0: f64,
    dt: f64,
    horizon: f64,
    seed: SeedRecord,
) -> Result<PathSample> {
    model.validate()?;
    model.state_space.check(x0)?;
    let n = step_count(dt, horizon)?;
    let mut stepper = EulerStepper::new(model, dt, seed);
    let mut states = Vec::with_capacity(n + 1);
    states.push(x0);
    let mut x = x0;
    for _ in 0..n {
        x = stepper.step(x)?;
        states.push(x);
    }
    Ok(PathSample {
        dt,
        states,
        seed,
        scheme: Scheme::EulerMaruyama,
        clamped: stepper.clamped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LocalTimeMethod {
    /// `(1/2 eps) * sum 1{|X - y| < eps} sigma^2(X) dt`.
    #[default]
    Kernel,
    /// Discrete Tanaka formula `|X_{k+1}-y| - |X_k-y| - sgn(X_k-y)(X_{k+1}-X_k)`.
    Tanaka,
}

/// Visits the levels receiving a nonzero increment over one step and reports
/// `(level index, increment)`.
#[inline]
#[allow(clippy::too_many_arguments)]
pub fn local_time_increments(
    method: LocalTimeMethod,
    levels: &[f64],
    x: f64,
    x_next: f64,
    sigma2: f64,
    dt: f64,
    eps: f64,
    mut f: impl FnMut(usize, f64),
) {
    match method {
        LocalTimeMethod::Kernel => {
            let w = sigma2 * dt / (2.0 * eps);
            let start = levels.partition_point(|&y| y <= x - eps);
            for (i, &y) in levels.iter().enumerate().skip(start) {
                if y >= x + eps {
                    break;
                }
                if (x - y).abs() < eps {
                    f(i, w);
                }
            }
        }
        LocalTimeMethod::Tanaka => {
            let (lo, hi) = if x <= x_next {
                (x, x_next)
            } else {
                (x_next, x)
            };
            let start = levels.partition_point(|&y| y < lo);
            for (i, &y) in levels.iter().enumerate().skip(start) {
                if y > hi {
                    break;
                }
                let sgn = if x > y {
                    1.0
                } else if x < y {
                    -1.0
                } else {
                    0.0
                };
                let inc = (x_next - y).abs() - (x - y).abs() - sgn * (x_next - x);
                if inc > 0.0 {
                    f(i, inc);
                }
            }
        }
    }
}

/// Local-time surface `L[y][k]` of one path on a level grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalTimeField {
    pub levels: Vec<f64>,
    pub dt: f64,
    pub values: Vec<Vec<f64>>,
    pub bandwidth: f64,
    pub method: LocalTimeMethod,
}

impl LocalTimeField {
    pub fn n_times(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    /// Index of a level equal to `y` up to `tol`.
    pub fn level_index(&self, y: f64, tol: f64) -> Option<usize> {
        let i = self.levels.partition_point(|&l| l < y - tol);
        self.levels
            .get(i)
            .filter(|&&l| (l - y).abs() <= tol)
            .map(|_| i)
    }

    pub fn at(&self, level: usize, k: usize) -> f64 {
        self.values[level][k]
    }
}

pub fn estimate_local_time(
    path: &PathSample,
    model: &DiffusionModel,
    levels: &[f64],
    bandwidth: f64,
) -> Result<LocalTimeField> {
    estimate_local_time_with(path, model, levels, bandwidth, LocalTimeMethod::Kernel)
}

pub fn estimate_local_time_with(
    path: &PathSample,
    model: &DiffusionModel,
    levels: &[f64],
    bandwidth: f64,
    method: LocalTimeMethod,
) -> Result<LocalTimeField> {
    if !(bandwidth > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "bandwidth {bandwidth} must be positive"
        )));
    }
    if levels.is_empty() {
        return Err(Error::InvalidParameter("empty level grid".into()));
    }
    for w in levels.windows(2) {
        if !(w[0] < w[1]) {
            return Err(Error::InvalidParameter("levels must be increasing".into()));
        }
    }
    for &y in levels {
        model.state_space.check(y)?;
    }
    let n = path.states.len();
    let mut values = vec![vec![0.0; n]; levels.len()];
    let mut current = vec![0.0; levels.len()];
    for k in 0..n.saturating_sub(1) {
        let x = path.states[k];
        let s2 = model.sigma2_at(x)?;
        local_time_increments(
            method,
            levels,
            x,
            path.states[k + 1],
            s2,
            path.dt,
            bandwidth,
            |i, inc| current[i] += inc,
        );
        for (row, &c) in values.iter_mut().zip(&current) {
            row[k + 1] = c;
        }
    }
    Ok(LocalTimeField {
        levels: levels.to_vec(),
        dt: path.dt,
        values,
        bandwidth,
        method,
    })
}

/// First grid step whose segment `[X_{k-1}, X_k]` meets the set, with the entry point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub step: usize,
    pub time: f64,
    pub state: f64,
}

/// Scans the path for the first entry into `set`. Step 0 counts when `x0` is in the
/// set; afterwards a step counts as soon as the linear interpolation between
/// consecutive states meets the set, so point sets and thin intervals are not jumped.
pub fn first_hit(path: &PathSample, set: &ClosedSet) -> Option<Hit> {
    if set.is_empty() || path.states.is_empty() {
        return None;
    }
    let x0 = path.states[0];
    if set.contains(x0) {
        return Some(Hit {
            step: 0,
            time: 0.0,
            state: x0,
        });
    }
    for k in 1..path.states.len() {
        if let Some(e) = set.entry_point(path.states[k - 1], path.states[k]) {
            return Some(Hit {
                step: k,
                time: path.time(k),
                state: e,
            });
        }
    }
    None
}

/// Hitting time of `set`, `f64::INFINITY` if it is not reached within the horizon.
pub fn hitting_time(path: &PathSample, set: &ClosedSet) -> f64 {
    first_hit(path, set).map_or(f64::INFINITY, |h| h.time)
}
