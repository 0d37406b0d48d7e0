//! Best replies against a fixed Markov strategy: a grid obstacle-problem solver, the
//! concave-envelope construction for driftless undiscounted models, stopping-set
//! extraction and the best-reply characterization check.

pub mod envelope;
pub mod grid;
pub mod pbr;

use serde::{Deserialize, Serialize};

use crate::diffusion::{DiffusionModel, Interval};
use crate::error::{Error, Result};
use crate::measures::ClosedSet;
use crate::payoffs::PayoffSpec;
use crate::strategies::MarkovStrategy;

pub use envelope::{concave_envelope_best_reply, upper_hull};
pub use grid::Grid;
pub use pbr::{pbr_check, PbrCondition, PbrReport, PbrTolerances};

/// Value imposed at an end node of the grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "kebab-case")]
pub enum Boundary {
    Value(f64),
    StopReward,
    FollowReward,
}

fn default_tol_v() -> f64 {
    1e-8
}
fn default_max_iter() -> usize {
    200
}
fn default_refine() -> usize {
    16
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    #[serde(default = "default_tol_v")]
    pub tol_v: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    /// Closure at the first node; by default 0 on an endpoint of the state space and
    /// the stop reward otherwise.
    #[serde(default)]
    pub lower: Option<Boundary>,
    #[serde(default)]
    pub upper: Option<Boundary>,
    /// Sub-samples of `R` per cell used by the envelope construction.
    #[serde(default = "default_refine")]
    pub envelope_refine: usize,
    /// Compute the lower stopping set by delete-and-re-solve probes.
    #[serde(default = "default_true")]
    pub probe_s_under: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol_v: default_tol_v(),
            max_iter: default_max_iter(),
            lower: None,
            upper: None,
            envelope_refine: default_refine(),
            probe_s_under: true,
        }
    }
}

impl SolverOptions {
    /// `10 tol_v (1 + |G - R|)`.
    pub fn tol_set(&self, r: f64, g: f64) -> f64 {
        10.0 * self.tol_v * (1.0 + (g - r).abs())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueFunction {
    pub grid: Grid,
    pub values: Vec<f64>,
    /// `|v - max(R, T v)|` at free nodes, zero at fixed nodes.
    pub residuals: Vec<f64>,
    pub stop_reward: Vec<f64>,
    pub follow_reward: Vec<f64>,
    /// Nodes whose value is imposed (opponent stop set or grid ends).
    pub fixed: Vec<bool>,
    /// `a (G - v) + (v'_+ - v'_-)/2` at each opponent atom on the grid.
    pub atom_residuals: Vec<(f64, f64)>,
}

impl ValueFunction {
    pub fn eval(&self, x: f64) -> f64 {
        self.grid.interpolate(&self.values, x)
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_atom_residual(&self) -> f64 {
        self.atom_residuals
            .iter()
            .map(|r| r.1.abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    PolicyIteration,
    ConcaveEnvelope,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToleranceRecord {
    pub tol_v: f64,
    pub tol_set_factor: f64,
    pub iterations: usize,
    pub max_residual: f64,
    pub h_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestReplyResult {
    pub method: Method,
    pub value: ValueFunction,
    pub s_bar: ClosedSet,
    pub s_under: ClosedSet,
    pub tolerances: ToleranceRecord,
    /// Envelope only: the value stays below the concave majorant of `G`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub below_cav_g: Option<bool>,
    /// Envelope only: vertices of the value as a piecewise-linear function, finer than
    /// the grid.
    #[serde(skip)]
    pub envelope: Option<Vec<(f64, f64)>>,
}

impl BestReplyResult {
    /// The value between nodes: the envelope itself when available, otherwise linear
    /// interpolation of the node values.
    pub fn eval(&self, x: f64) -> f64 {
        match &self.envelope {
            Some(k) if !k.is_empty() => envelope::hull_eval(k, x),
            _ => self.value.eval(x),
        }
    }

    fn breakpoints(&self) -> impl Iterator<Item = f64> + '_ {
        self.value
            .grid
            .nodes
            .iter()
            .copied()
            .chain(self.envelope.iter().flatten().map(|p| p.0))
    }
}

/// `sup |v_a - v_b|` over the common range of two best replies, both read as
/// piecewise-linear functions. The supremum is attained at a breakpoint of either.
pub fn sup_gap(a: &BestReplyResult, b: &BestReplyResult) -> f64 {
    let lo = a.value.grid.first().max(b.value.grid.first());
    let hi = a.value.grid.last().min(b.value.grid.last());
    a.breakpoints()
        .chain(b.breakpoints())
        .filter(|&x| lo <= x && x <= hi)
        .map(|x| (a.eval(x) - b.eval(x)).abs())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy)]
enum Row {
    Fixed(f64),
    /// `v_i = pl v_{i-1} + pu v_{i+1} + q` when continuing.
    Free {
        pl: f64,
        pu: f64,
        q: f64,
    },
}

pub(crate) struct Setup {
    rows: Vec<Row>,
    pub(crate) r: Vec<f64>,
    pub(crate) g: Vec<f64>,
    pub(crate) fixed: Vec<bool>,
    atoms: Vec<(usize, f64)>,
}

fn boundary_value(b: Boundary, r: f64, g: f64) -> f64 {
    match b {
        Boundary::Value(c) => c,
        Boundary::StopReward => r,
        Boundary::FollowReward => g,
    }
}

fn default_boundary(space: &Interval, x: f64) -> Boundary {
    if x == space.lower || x == space.upper {
        Boundary::Value(0.0)
    } else {
        Boundary::StopReward
    }
}

/// Per node: the forced value if any, then the lower and upper obstacle.
type FixedNodes = (Vec<Option<f64>>, Vec<f64>, Vec<f64>);

/// Checks that the grid resolves the opponent and returns the fixed-node values and
/// per-node rewards.
pub(crate) fn fixed_nodes(
    space: &Interval,
    spec: &PayoffSpec,
    opp_stop: &ClosedSet,
    grid: &Grid,
    opts: &SolverOptions,
) -> Result<FixedNodes> {
    let n = grid.len();
    let (lo, hi) = (grid.first(), grid.last());
    if lo < space.lower || hi > space.upper {
        return Err(Error::InvalidParameter(
            "grid leaves the state space".into(),
        ));
    }
    for c in opp_stop.components() {
        for &e in c {
            if e > lo && e < hi && space.contains(e) && grid.index_of(e).is_none() {
                return Err(Error::GridMissingPoint { x: e });
            }
        }
    }
    let r: Vec<f64> = grid.nodes.iter().map(|&x| spec.r(x)).collect();
    let g: Vec<f64> = grid.nodes.iter().map(|&x| spec.g(x)).collect();
    for (i, &x) in grid.nodes.iter().enumerate() {
        if !r[i].is_finite() || !g[i].is_finite() {
            return Err(Error::NonFiniteReward { x });
        }
        if r[i] > g[i] + 1e-12 * g[i].abs().max(1.0) {
            return Err(Error::RewardOrdering { x });
        }
    }
    let mut fixed = vec![None; n];
    for (i, &x) in grid.nodes.iter().enumerate() {
        if space.contains(x) && opp_stop.contains(x) {
            fixed[i] = Some(g[i]);
        }
    }
    if fixed[0].is_none() {
        let b = opts.lower.unwrap_or_else(|| default_boundary(space, lo));
        fixed[0] = Some(boundary_value(b, r[0], g[0]));
    }
    if fixed[n - 1].is_none() {
        let b = opts.upper.unwrap_or_else(|| default_boundary(space, hi));
        fixed[n - 1] = Some(boundary_value(b, r[n - 1], g[n - 1]));
    }
    Ok((fixed, r, g))
}

pub(crate) fn setup(
    model: &DiffusionModel,
    spec: &PayoffSpec,
    opp: &MarkovStrategy,
    grid: &Grid,
    opts: &SolverOptions,
) -> Result<Setup> {
    let space = model.state_space;
    let (fixed, r, g) = fixed_nodes(&space, spec, &opp.stop_set, grid, opts)?;
    let (lo, hi) = (grid.first(), grid.last());
    let mut atoms = Vec::new();
    for a in &opp.intensity.atoms {
        if a.x > lo && a.x < hi {
            let i = grid
                .index_of(a.x)
                .ok_or(Error::GridMissingPoint { x: a.x })?;
            atoms.push((i, a.mass));
        }
    }
    let x = &grid.nodes;
    let mut rows = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        if let Some(v) = fixed[i] {
            rows.push(Row::Fixed(v));
            continue;
        }
        let hm = x[i] - x[i - 1];
        let hp = x[i + 1] - x[i];
        if let Some(&(_, a)) = atoms.iter().find(|(j, _)| *j == i) {
            let (wl, wu) = (0.5 / hm, 0.5 / hp);
            let d = wl + wu + a;
            rows.push(Row::Free {
                pl: wl / d,
                pu: wu / d,
                q: a * g[i] / d,
            });
            continue;
        }
        let s2 = model.sigma2_at(x[i])?;
        let b = model.drift_at(x[i])?;
        let half = 0.5 * s2;
        let l = half * 2.0 / (hm * (hm + hp)) + (-b).max(0.0) / hm;
        let u = half * 2.0 / (hp * (hm + hp)) + b.max(0.0) / hp;
        let kappa = opp.intensity.density_at(x[i]) * s2;
        let d = l + u + model.discount + kappa;
        if !(d > 0.0) {
            return Err(Error::BadCoefficient { x: x[i] });
        }
        rows.push(Row::Free {
            pl: l / d,
            pu: u / d,
            q: kappa * g[i] / d,
        });
    }
    Ok(Setup {
        rows,
        r,
        g,
        fixed: fixed.iter().map(Option::is_some).collect(),
        atoms,
    })
}

/// Solves the tridiagonal system `a_i v_{i-1} + b_i v_i + c_i v_{i+1} = d_i`.
pub(crate) fn thomas(a: &[f64], b: &[f64], c: &[f64], d: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut cp = vec![0.0; n];
    let mut dp = vec![0.0; n];
    cp[0] = c[0] / b[0];
    dp[0] = d[0] / b[0];
    for i in 1..n {
        let m = b[i] - a[i] * cp[i - 1];
        cp[i] = c[i] / m;
        dp[i] = (d[i] - a[i] * dp[i - 1]) / m;
    }
    let mut v = vec![0.0; n];
    v[n - 1] = dp[n - 1];
    for i in (0..n - 1).rev() {
        v[i] = dp[i] - cp[i] * v[i + 1];
    }
    v
}

fn continuation(rows: &[Row], v: &[f64], i: usize) -> f64 {
    match rows[i] {
        Row::Fixed(c) => c,
        Row::Free { pl, pu, q } => pl * v[i - 1] + pu * v[i + 1] + q,
    }
}

/// Howard iteration for `v = max(R, T v)`; stopping is disallowed where `forbid` is set.
fn policy_iteration(
    s: &Setup,
    forbid: &[bool],
    opts: &SolverOptions,
    mut stop: Vec<bool>,
) -> Result<(Vec<f64>, usize)> {
    let n = s.rows.len();
    let (mut a, mut b, mut c, mut d) = (vec![0.0; n], vec![1.0; n], vec![0.0; n], vec![0.0; n]);
    for it in 1..=opts.max_iter {
        for i in 0..n {
            a[i] = 0.0;
            c[i] = 0.0;
            b[i] = 1.0;
            match s.rows[i] {
                Row::Fixed(v) => d[i] = v,
                Row::Free { .. } if stop[i] => d[i] = s.r[i],
                Row::Free { pl, pu, q } => {
                    a[i] = -pl;
                    c[i] = -pu;
                    d[i] = q;
                }
            }
        }
        let v = thomas(&a, &b, &c, &d);
        let mut changed = false;
        for i in 0..n {
            if s.fixed[i] || forbid[i] {
                continue;
            }
            let t = continuation(&s.rows, &v, i);
            let slack = 1e-14 * (1.0 + s.r[i].abs());
            let want = if stop[i] {
                s.r[i] >= t - slack
            } else {
                s.r[i] > t + slack
            };
            if want != stop[i] {
                stop[i] = want;
                changed = true;
            }
        }
        if !changed {
            return Ok((v, it));
        }
    }
    Err(Error::NoConvergence {
        iterations: opts.max_iter,
    })
}

pub(crate) fn residuals(s: &Setup, v: &[f64], forbid: &[bool]) -> Vec<f64> {
    (0..v.len())
        .map(|i| {
            if s.fixed[i] {
                return 0.0;
            }
            let t = continuation(&s.rows, v, i);
            let obstacle = if forbid[i] { f64::NEG_INFINITY } else { s.r[i] };
            (v[i] - t.max(obstacle)).abs()
        })
        .collect()
}

fn atom_residuals(grid: &Grid, s: &Setup, v: &[f64]) -> Vec<(f64, f64)> {
    let x = &grid.nodes;
    s.atoms
        .iter()
        .map(|&(i, a)| {
            let dp = (v[i + 1] - v[i]) / (x[i + 1] - x[i]);
            let dm = (v[i] - v[i - 1]) / (x[i] - x[i - 1]);
            (x[i], a * (s.g[i] - v[i]) + 0.5 * (dp - dm))
        })
        .collect()
}

/// Nodes where stopping is forbidden: within one cell of `set`.
pub(crate) fn forbidden_near(grid: &Grid, set: &ClosedSet) -> Vec<bool> {
    let h = grid.h_max() * (1.0 + 1e-9);
    grid.nodes.iter().map(|&x| set.distance(x) <= h).collect()
}

/// Smallest grid that is still coarsened for the initial policy.
const COARSE_MIN: usize = 64;

/// Every other node, keeping the ends, atoms and the edges of fixed runs.
fn coarsen(grid: &Grid, s: &Setup) -> Option<Grid> {
    let n = grid.len();
    if n < 2 * COARSE_MIN {
        return None;
    }
    let edge = |i: usize| {
        (i > 0 && s.fixed[i] != s.fixed[i - 1]) || (i + 1 < n && s.fixed[i] != s.fixed[i + 1])
    };
    let keep: Vec<f64> = (0..n)
        .filter(|&i| i % 2 == 0 || i == n - 1 || edge(i) || s.atoms.iter().any(|a| a.0 == i))
        .map(|i| grid.nodes[i])
        .collect();
    Grid::new(keep).ok()
}

/// Policy iteration started from the policy of the next coarser grid, so that the
/// free boundary only has to move by a few cells per level.
fn solve_nodes(
    model: &DiffusionModel,
    spec: &PayoffSpec,
    opp: &MarkovStrategy,
    grid: &Grid,
    opts: &SolverOptions,
    forbid_set: Option<&ClosedSet>,
) -> Result<(Setup, Vec<bool>, Vec<f64>, usize)> {
    let s = setup(model, spec, opp, grid, opts)?;
    let n = grid.len();
    let forbid = match forbid_set {
        Some(f) => forbidden_near(grid, f),
        None => vec![false; n],
    };
    let init = match coarsen(grid, &s) {
        Some(cg) => {
            let (_, _, vc, _) = solve_nodes(model, spec, opp, &cg, opts, forbid_set)?;
            (0..n)
                .map(|i| {
                    let vi = cg.interpolate(&vc, grid.nodes[i]);
                    !s.fixed[i] && !forbid[i] && s.r[i] >= vi - 1e-12 * (1.0 + s.r[i].abs())
                })
                .collect()
        }
        None => vec![false; n],
    };
    let (v, iters) = policy_iteration(&s, &forbid, opts, init)?;
    Ok((s, forbid, v, iters))
}

/// Value function on the grid with stopping forbidden on `forbid_set`.
pub fn solve_value(
    model: &DiffusionModel,
    spec: &PayoffSpec,
    opp: &MarkovStrategy,
    grid: &Grid,
    opts: &SolverOptions,
    forbid_set: Option<&ClosedSet>,
) -> Result<(ValueFunction, usize)> {
    let (s, forbid, v, iters) = solve_nodes(model, spec, opp, grid, opts, forbid_set)?;
    let res = residuals(&s, &v, &forbid);
    let atoms = atom_residuals(grid, &s, &v);
    Ok((
        ValueFunction {
            grid: grid.clone(),
            values: v,
            residuals: res,
            stop_reward: s.r,
            follow_reward: s.g,
            fixed: s.fixed,
            atom_residuals: atoms,
        },
        iters,
    ))
}

/// `S_bar`: closure of the nodes where `|v - R| <= tol_set`, as a closed set.
pub fn extract_stopping_sets(
    value: &ValueFunction,
    space: &Interval,
    opts: &SolverOptions,
) -> ClosedSet {
    let x = &value.grid.nodes;
    let n = x.len();
    let on: Vec<bool> = (0..n)
        .map(|i| {
            let (r, g) = (value.stop_reward[i], value.follow_reward[i]);
            (value.values[i] - r).abs() <= opts.tol_set(r, g)
        })
        .collect();
    let mut comps = Vec::new();
    let mut i = 0;
    while i < n {
        if !on[i] {
            i += 1;
            continue;
        }
        let start = i;
        while i + 1 < n && on[i + 1] {
            i += 1;
        }
        let (a, b) = (x[start], x[i]);
        let point_on_edge = start == i && !space.contains(a);
        if !point_on_edge {
            comps.push([a, b]);
        }
        i += 1;
    }
    ClosedSet::from_components(comps).expect("grid runs are ordered")
}

/// Keeps the components of `s_bar` whose removal (with a one-cell margin) lowers the
/// value at their centre by more than the set tolerance. `resolve` returns the value
/// with stopping forbidden near the given set.
pub fn probe_components(
    value: &ValueFunction,
    s_bar: &ClosedSet,
    opts: &SolverOptions,
    resolve: impl Fn(&ClosedSet) -> Result<ValueFunction>,
) -> Result<ClosedSet> {
    let grid = &value.grid;
    let mut keep = Vec::new();
    for c in s_bar.components() {
        let comp = ClosedSet::from_components(vec![*c])?;
        let probe = resolve(&comp)?;
        let centre = grid.nearest(0.5 * (c[0] + c[1]));
        let tol = opts.tol_set(value.stop_reward[centre], value.follow_reward[centre]);
        if value.values[centre] - probe.values[centre] > tol {
            keep.push(*c);
        }
    }
    ClosedSet::from_components(keep)
}

pub fn lower_stopping_set(
    model: &DiffusionModel,
    spec: &PayoffSpec,
    opp: &MarkovStrategy,
    opts: &SolverOptions,
    value: &ValueFunction,
    s_bar: &ClosedSet,
) -> Result<ClosedSet> {
    probe_components(value, s_bar, opts, |f| {
        solve_value(model, spec, opp, &value.grid, opts, Some(f)).map(|r| r.0)
    })
}

/// Best reply by policy iteration on the three-point obstacle problem.
pub fn solve_best_reply(
    model: &DiffusionModel,
    spec: &PayoffSpec,
    opp: &MarkovStrategy,
    grid: &Grid,
    opts: &SolverOptions,
) -> Result<BestReplyResult> {
    let (value, iterations) = solve_value(model, spec, opp, grid, opts, None)?;
    let s_bar = extract_stopping_sets(&value, &model.state_space, opts);
    let s_under = if opts.probe_s_under {
        lower_stopping_set(model, spec, opp, opts, &value, &s_bar)?
    } else {
        s_bar.clone()
    };
    Ok(BestReplyResult {
        method: Method::PolicyIteration,
        tolerances: ToleranceRecord {
            tol_v: opts.tol_v,
            tol_set_factor: 10.0,
            iterations,
            max_residual: value.max_residual(),
            h_max: grid.h_max(),
        },
        value,
        s_bar,
        s_under,
        below_cav_g: None,
        envelope: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::LocallyFiniteMeasure;
    use crate::poly::{PiecewisePolynomial, Polynomial};

    fn tent_spec() -> PayoffSpec {
        // R(x) = x(1 - x), G = R + 0.5
        let r = PiecewisePolynomial::single(Polynomial::new(vec![0.0, 1.0, -1.0]), 0.0, 1.0);
        let g = PiecewisePolynomial::single(Polynomial::new(vec![0.5, 1.0, -1.0]), 0.0, 1.0);
        PayoffSpec::new(r, g)
    }

    #[test]
    fn thomas_solves_small_system() {
        let v = thomas(
            &[0.0, -1.0, -1.0],
            &[2.0, 2.0, 2.0],
            &[-1.0, -1.0, 0.0],
            &[1.0, 0.0, 1.0],
        );
        for x in v {
            assert!((x - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn opponent_stopping_everywhere_gives_g() {
        let m = DiffusionModel::logistic_martingale();
        let opp = MarkovStrategy::pure(ClosedSet::interval(0.0, 1.0).unwrap());
        let grid = Grid::uniform(0.0, 1.0, 101).unwrap();
        let res =
            solve_best_reply(&m, &tent_spec(), &opp, &grid, &SolverOptions::default()).unwrap();
        for (i, &x) in grid.nodes.iter().enumerate().skip(1).take(99) {
            assert_eq!(res.value.values[i], tent_spec().g(x));
        }
    }

    #[test]
    fn concave_reward_is_stopped_everywhere_when_alone() {
        let m = DiffusionModel::logistic_martingale();
        let grid = Grid::uniform(0.0, 1.0, 101).unwrap();
        let res = solve_best_reply(
            &m,
            &tent_spec(),
            &MarkovStrategy::never(),
            &grid,
            &SolverOptions::default(),
        )
        .unwrap();
        assert_eq!(res.s_bar.components(), &[[0.0, 1.0]]);
        assert!(res.value.max_residual() < 1e-12);
    }

    #[test]
    fn atom_interface_holds() {
        let m = DiffusionModel::logistic_martingale();
        let zero = PiecewisePolynomial::constant(0.0);
        let one = PiecewisePolynomial::single(Polynomial::constant(1.0), 0.0, 1.0);
        let spec = PayoffSpec::new(zero, one);
        let opp = MarkovStrategy::new(
            LocallyFiniteMeasure::dirac(0.5, 2.0).unwrap(),
            ClosedSet::empty(),
        )
        .unwrap();
        let grid = Grid::uniform(0.0, 1.0, 201).unwrap();
        let res = solve_best_reply(&m, &spec, &opp, &grid, &SolverOptions::default()).unwrap();
        assert!(res.value.max_atom_residual() < 1e-12);
        // Exact: v linear on each side, v(0.5) = a / (a + 2) with slopes +-2 v(0.5).
        let want = 2.0 * 0.5 / (2.0 * 0.5 + 1.0);
        assert!(
            (res.value.eval(0.5) - want).abs() < 1e-12,
            "{}",
            res.value.eval(0.5)
        );
    }

    #[test]
    fn missing_atom_node_is_an_error() {
        let m = DiffusionModel::logistic_martingale();
        let opp = MarkovStrategy::new(
            LocallyFiniteMeasure::dirac(0.333, 1.0).unwrap(),
            ClosedSet::empty(),
        )
        .unwrap();
        let grid = Grid::uniform(0.0, 1.0, 11).unwrap();
        let e = solve_best_reply(&m, &tent_spec(), &opp, &grid, &SolverOptions::default());
        assert_eq!(e.unwrap_err(), Error::GridMissingPoint { x: 0.333 });
    }
}
