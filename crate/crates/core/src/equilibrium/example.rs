//! The logistic-martingale game on `(0, 1)` with no pure equilibrium, built from the
//! piecewise cubics of the plotted payoffs (given in `u = 12 x`).

use serde::{Deserialize, Serialize};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::iteration::{pure_best_reply_iteration, IterationOutcome, IterationTrace};
use super::{verify_mpe, GridSpec, MpeReport, Profile, Verdict, VerifyConfig};
use crate::best_reply::{solve_best_reply, Grid, SolverOptions, ValueFunction};
use crate::diffusion::{DiffusionModel, LocalTimeMethod};
use crate::error::{Error, Result};
use crate::measures::{ClosedSet, LocallyFiniteMeasure};
use crate::payoffs::McConfig;
use crate::payoffs::PayoffSpec;
use crate::poly::{Piece, PiecewisePolynomial};
use crate::strategies::MarkovStrategy;

/// Cubic `p(u - c)` on `u in [lo, hi]`, written in `x`.
fn piece(lo: f64, hi: f64, c: f64, coeffs: &[f64]) -> Piece {
    Piece::new(lo / 12.0, hi / 12.0, c / 12.0, 12.0, coeffs.to_vec())
}

/// Cubic `p(12 - u)` on `u in [lo, hi]`.
fn mirrored(lo: f64, hi: f64, coeffs: &[f64]) -> Piece {
    Piece::new(lo / 12.0, hi / 12.0, 1.0, -12.0, coeffs.to_vec())
}

fn scaled(c: f64, coeffs: &[f64]) -> Vec<f64> {
    coeffs.iter().map(|v| c * v).collect()
}

fn pw(pieces: Vec<Piece>) -> PiecewisePolynomial {
    PiecewisePolynomial::new(pieces).expect("example pieces are ordered")
}

fn r1() -> PiecewisePolynomial {
    pw(vec![
        piece(0.0, 2.0, 0.0, &[0.0, -1.5, 0.0, 0.125]),
        piece(2.0, 6.0, 4.0, &[0.0, 1.5, 0.0, -0.125]),
        piece(6.0, 10.0, 8.0, &[0.0, -1.5, 0.0, 0.125]),
        piece(10.0, 12.0, 12.0, &[0.0, 1.5, 0.0, -0.125]),
    ])
}

fn g1() -> PiecewisePolynomial {
    pw(vec![
        piece(0.0, 2.0, 0.0, &[0.0, 3.0, 0.0, -0.25]),
        piece(2.0, 4.0, 3.0, &[2.5, -2.25, 0.0, 0.75]),
        piece(4.0, 6.0, 5.0, &[2.0, 1.5, 0.0, -0.5]),
        piece(6.0, 8.0, 7.0, &[2.0, -1.5, 0.0, 0.5]),
        piece(8.0, 10.0, 9.0, &[2.5, 2.25, 0.0, -0.75]),
        piece(10.0, 12.0, 12.0, &[0.0, -3.0, 0.0, 0.25]),
    ])
}

fn r2() -> PiecewisePolynomial {
    let edge = scaled(0.00625, &[0.0, 256.0, -62.0, 5.0]);
    pw(vec![
        piece(0.0, 4.0, 0.0, &edge),
        piece(4.0, 6.0, 5.0, &[1.2, -1.5, 0.0, 0.5]),
        piece(6.0, 8.0, 7.0, &[1.2, 1.5, 0.0, -0.5]),
        mirrored(8.0, 12.0, &edge),
    ])
}

/// Plateau height of `G^2`.
pub const G2_PLATEAU: f64 = 2.75;

fn g2() -> PiecewisePolynomial {
    let edge = scaled(0.25 * G2_PLATEAU, &[0.0, 3.0, 0.0, -0.25]);
    pw(vec![
        piece(0.0, 2.0, 0.0, &edge),
        piece(2.0, 10.0, 0.0, &[G2_PLATEAU]),
        mirrored(10.0, 12.0, &edge),
    ])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyCheck {
    pub name: String,
    /// Worst violation (0 when the property holds with margin).
    pub residual: f64,
    pub pass: bool,
}

impl PropertyCheck {
    fn new(name: &str, residual: f64, tol: f64) -> Self {
        PropertyCheck {
            name: name.into(),
            residual,
            pass: residual <= tol,
        }
    }

    fn holds(name: &str, ok: bool) -> Self {
        PropertyCheck {
            name: name.into(),
            residual: if ok { 0.0 } else { 1.0 },
            pass: ok,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExamplePayoffs {
    pub specs: [PayoffSpec; 2],
    pub checks: Vec<PropertyCheck>,
}

const SAMPLE_STEP: f64 = 1e-4;

fn samples(lo: f64, hi: f64, open: bool) -> impl Iterator<Item = f64> {
    let n = ((hi - lo) / SAMPLE_STEP).round() as usize;
    (0..=n)
        .map(move |k| lo + (hi - lo) * k as f64 / n as f64)
        .filter(move |&x| !open || (x > lo && x < hi))
}

fn structural_checks(p1: &PayoffSpec, p2: &PayoffSpec) -> Vec<PropertyCheck> {
    let (r1, g1, r2, g2) = (
        &p1.stop_reward,
        &p1.follow_reward,
        &p2.stop_reward,
        &p2.follow_reward,
    );
    let mut out = Vec::new();

    let sym = [r1, g1, r2, g2]
        .iter()
        .flat_map(|f| samples(0.0, 1.0, false).map(move |x| (f.eval(x) - f.eval(1.0 - x)).abs()))
        .fold(0.0, f64::max);
    out.push(PropertyCheck::new("symmetry", sym, 1e-12));

    out.push(PropertyCheck::holds(
        "g1_above_r1",
        samples(0.0, 1.0, true).all(|x| g1.eval(x) > r1.eval(x)),
    ));
    let sign = samples(0.0, 1.0 / 3.0, true).all(|x| r1.eval(x) < 0.0)
        && samples(2.0 / 3.0, 1.0, true).all(|x| r1.eval(x) < 0.0)
        && samples(1.0 / 3.0, 2.0 / 3.0, true).all(|x| r1.eval(x) > 0.0);
    out.push(PropertyCheck::holds("r1_sign_pattern", sign));

    let xs: Vec<f64> = samples(1.0 / 6.0, 1.0 / 3.0, false).collect();
    out.push(PropertyCheck::holds(
        "g1_decreasing",
        xs.windows(2).all(|w| g1.eval(w[1]) < g1.eval(w[0])),
    ));
    let mid = r1.eval(0.5);
    out.push(PropertyCheck::holds(
        "g1_quarter_above_r1_half_above_g1_third",
        g1.eval(0.25) > mid && mid > g1.eval(1.0 / 3.0),
    ));

    out.push(PropertyCheck::holds(
        "g2_above_r2",
        samples(0.0, 1.0, true).all(|x| g2.eval(x) > r2.eval(x)),
    ));
    let xs: Vec<f64> = samples(0.0, 1.0, false).collect();
    let concave = xs
        .windows(3)
        .map(|w| g2.eval(w[0]) - 2.0 * g2.eval(w[1]) + g2.eval(w[2]))
        .fold(f64::NEG_INFINITY, f64::max);
    out.push(PropertyCheck::new("g2_concave", concave.max(0.0), 1e-12));
    let flat = samples(1.0 / 6.0, 5.0 / 6.0, false)
        .map(|x| (g2.eval(x) - G2_PLATEAU).abs())
        .fold(0.0, f64::max);
    out.push(PropertyCheck::new("g2_constant_middle", flat, 0.0));

    let strict = samples(0.0, 1.0 / 3.0, true)
        .map(|x| r2.second_derivative(x))
        .fold(f64::NEG_INFINITY, f64::max);
    out.push(PropertyCheck::holds(
        "r2_strictly_concave_left",
        strict < 0.0,
    ));
    let interior_knots = r2
        .knots()
        .into_iter()
        .filter(|&k| k > 0.0 && k < 1.0 / 3.0 - 1e-15)
        .count();
    out.push(PropertyCheck::holds("r2_c2_left", interior_knots == 0));
    out.push(PropertyCheck::new(
        "r2_flat_at_third",
        r2.derivative(1.0 / 3.0).abs(),
        1e-10,
    ));
    let top = r2.eval(1.0 / 3.0);
    out.push(PropertyCheck::holds(
        "r2_below_third_value_in_middle",
        samples(1.0 / 3.0, 2.0 / 3.0, true).all(|x| r2.eval(x) < top),
    ));
    let t1 = r2.eval(1.0 / 6.0) + r2.derivative(1.0 / 6.0) * (1.0 / 3.0 - 1.0 / 6.0)
        - g2.eval(1.0 / 3.0);
    let t2 = r2.eval(0.25) + r2.derivative(0.25) * (2.0 / 3.0 - 0.25) - g2.eval(2.0 / 3.0);
    out.push(PropertyCheck::new("tangent_sixth", t1.abs(), 1e-10));
    out.push(PropertyCheck::new("tangent_quarter", t2.abs(), 1e-10));
    out
}

/// Payoffs of both players with every structural property re-checked.
pub fn build_example_payoffs() -> Result<ExamplePayoffs> {
    let p1 = PayoffSpec::new(r1(), g1());
    let p2 = PayoffSpec::new(r2(), g2());
    let checks = structural_checks(&p1, &p2);
    if let Some(bad) = checks.iter().find(|c| !c.pass) {
        return Err(Error::Construction(format!(
            "{} (residual {})",
            bad.name, bad.residual
        )));
    }
    Ok(ExamplePayoffs {
        specs: [p1, p2],
        checks,
    })
}

/// Root of `f` on `[lo, hi]` by bisection down to adjacent floats.
pub fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> Result<f64> {
    let (a, b) = (lo, hi);
    let mut flo = f(lo);
    if flo == 0.0 {
        return Ok(lo);
    }
    if flo * f(hi) > 0.0 {
        return Err(Error::NoBracket { lo: a, hi: b });
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if (fm < 0.0) == (flo < 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationalResiduals {
    /// `|v - max(R, T v)|` of the grid solution.
    pub complementarity: f64,
    /// `|(1/2) sigma^2 v''|` in the continuation region, central differences.
    pub pde: f64,
    /// `alpha (G(1/2) - v(1/2)) + (1/2) (v'_+ - v'_-)` of the grid solution.
    pub atom_interface: f64,
    /// Same three residuals, largest, for the closed form of `w^2` sampled on the grid.
    pub closed_form: f64,
    /// `max |v - w^2|` over the nodes.
    pub closed_form_gap: f64,
}

impl VariationalResiduals {
    pub fn max(&self) -> f64 {
        self.complementarity
            .max(self.pde)
            .max(self.atom_interface)
            .max(self.closed_form)
            .max(self.closed_form_gap)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleSolution {
    pub x_star: f64,
    pub alpha: f64,
    /// `|G^1(x*) - R^1(1/2)|`.
    pub root_residual: f64,
    pub payoffs: ExamplePayoffs,
    pub profile: Profile,
    pub w1: ValueFunction,
    pub w2: ValueFunction,
    pub w2_residuals: VariationalResiduals,
    /// `max |w^1 - R^1(1/2)|` on `[x* + h, 1 - x* - h]`.
    pub w1_flatness: f64,
}

impl ExampleSolution {
    /// Closed form of the second player's value: `R^2` on the stop set, tangent lines
    /// from `x*` and `1 - x*` up to `1/2`.
    pub fn w2_closed_form(&self, x: f64) -> f64 {
        let r2 = &self.payoffs.specs[1].stop_reward;
        let xs = self.x_star;
        if x <= xs || x >= 1.0 - xs {
            r2.eval(x)
        } else if x <= 0.5 {
            r2.eval(xs) + r2.derivative(xs) * (x - xs)
        } else {
            let y = 1.0 - xs;
            r2.eval(y) + r2.derivative(y) * (x - y)
        }
    }
}

/// Stop set `(0, x*] ∪ [1 - x*, 1)` of the second player.
pub fn edge_set(x: f64) -> ClosedSet {
    ClosedSet::from_components(vec![[0.0, x], [1.0 - x, 1.0]]).expect("x < 1/2")
}

/// Knots of the example payoffs, used as extra grid nodes.
pub fn example_knots() -> Vec<f64> {
    (1..12).map(|k| k as f64 / 12.0).collect()
}

/// Solves for `x*` and `alpha`, the two value functions on an `n`-node grid, and the
/// residuals of the second player's verification system.
pub fn solve_example(n: usize, opts: &SolverOptions) -> Result<ExampleSolution> {
    let payoffs = build_example_payoffs()?;
    let [p1, p2] = &payoffs.specs;
    let target = p1.r(0.5);
    let x_star = bisect(|x| p1.g(x) - target, 0.25, 1.0 / 3.0)?;
    let (r, dr) = (p2.r(x_star), p2.stop_reward.derivative(x_star));
    let alpha = dr / (p2.g(0.5) - r - dr * (0.5 - x_star));
    if !(alpha > 0.0) {
        return Err(Error::Construction(format!(
            "alpha = {alpha} is not positive"
        )));
    }
    let model = DiffusionModel::logistic_martingale();
    let s2 = edge_set(x_star);
    let profile = Profile::new(
        MarkovStrategy::new(LocallyFiniteMeasure::dirac(0.5, alpha)?, ClosedSet::empty())?,
        MarkovStrategy::pure(s2.clone()),
    );
    let mut pts = example_knots();
    pts.extend([x_star, 1.0 - x_star]);
    let grid = Grid::with_points(0.0, 1.0, n, &pts)?;
    let w1 = solve_best_reply(&model, p1, &profile.strat_2, &grid, opts)?.value;
    let w2 = solve_best_reply(&model, p2, &profile.strat_1, &grid, opts)?.value;

    let h = grid.h_max();
    let w1_flatness = grid
        .nodes
        .iter()
        .zip(&w1.values)
        .filter(|(&x, _)| x >= x_star + h && x <= 1.0 - x_star - h)
        .map(|(_, &v)| (v - target).abs())
        .fold(0.0, f64::max);

    let mut sol = ExampleSolution {
        x_star,
        alpha,
        root_residual: (p1.g(x_star) - target).abs(),
        payoffs: payoffs.clone(),
        profile,
        w1,
        w2,
        w2_residuals: VariationalResiduals {
            complementarity: 0.0,
            pde: 0.0,
            atom_interface: 0.0,
            closed_form: 0.0,
            closed_form_gap: 0.0,
        },
        w1_flatness,
    };
    let closed: Vec<f64> = grid.nodes.iter().map(|&x| sol.w2_closed_form(x)).collect();
    let (c1, p1r, a1) = system_residuals(&model, p2, &grid, &sol.w2.values, alpha, &s2)?;
    let (c2, p2r, a2) = system_residuals(&model, p2, &grid, &closed, alpha, &s2)?;
    sol.w2_residuals = VariationalResiduals {
        complementarity: c1,
        pde: p1r,
        atom_interface: a1,
        closed_form: c2.max(p2r).max(a2),
        closed_form_gap: sol
            .w2
            .values
            .iter()
            .zip(&closed)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max),
    };
    Ok(sol)
}

/// Random pure deviations: intervals `[c, c + w]` for the first player and
/// `(0, a] ∪ [b, 1)` for the second.
pub fn example_deviations(n: usize, seed: u64) -> [Vec<MarkovStrategy>; 2] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x2545_f491_4f6c_dd1d);
    let mut out = [Vec::with_capacity(n), Vec::with_capacity(n)];
    for _ in 0..n {
        let c = rng.random_range(0.05..0.85);
        let w = rng.random_range(0.0..0.1);
        out[0].push(MarkovStrategy::pure(
            ClosedSet::interval(c, c + w).expect("ordered"),
        ));
        let a = rng.random_range(0.15..0.45);
        let b = rng.random_range(0.55..0.85);
        out[1].push(MarkovStrategy::pure(
            ClosedSet::from_components(vec![[0.0, a], [b, 1.0]]).expect("ordered"),
        ));
    }
    out
}

fn default_grid_n() -> usize {
    4000
}
fn default_probes() -> Vec<f64> {
    vec![0.2, 0.35, 0.5, 0.65, 0.8]
}
fn default_deviations() -> usize {
    20
}
fn default_n_se() -> f64 {
    3.0
}
fn default_budget_cells() -> f64 {
    5.0
}
fn default_residual_tol() -> f64 {
    1e-6
}
fn default_root_tol() -> f64 {
    1e-9
}
fn default_iterations() -> usize {
    6
}

/// Settings of the end-to-end example run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleConfig {
    #[serde(default = "default_grid_n")]
    pub grid_n: usize,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default = "default_mc")]
    pub mc: McConfig,
    #[serde(default = "default_probes")]
    pub probes: Vec<f64>,
    #[serde(default = "default_deviations")]
    pub n_deviations: usize,
    #[serde(default = "default_n_se")]
    pub n_se: f64,
    /// Discretization allowance in grid cells `h = 1 / (grid_n - 1)`.
    #[serde(default = "default_budget_cells")]
    pub budget_cells: f64,
    #[serde(default = "default_residual_tol")]
    pub residual_tol: f64,
    #[serde(default = "default_root_tol")]
    pub root_tol: f64,
    #[serde(default = "default_iterations")]
    pub max_iterations: usize,
}

/// `2e5` paths at `dt = 1e-4`, horizon 20, bandwidth `1e-2`; the atom at `1/2` is
/// metered with the Tanaka increments and stop-set hits are bridge corrected.
pub fn default_mc() -> McConfig {
    let mut mc = McConfig::new(200_000, 1e-4, 20.0, 20_240_601);
    mc.bandwidth = 1e-2;
    mc.method = LocalTimeMethod::Tanaka;
    mc.bridge = true;
    mc
}

impl Default for ExampleConfig {
    fn default() -> Self {
        ExampleConfig {
            grid_n: default_grid_n(),
            solver: SolverOptions::default(),
            mc: default_mc(),
            probes: default_probes(),
            n_deviations: default_deviations(),
            n_se: default_n_se(),
            budget_cells: default_budget_cells(),
            residual_tol: default_residual_tol(),
            root_tol: default_root_tol(),
            max_iterations: default_iterations(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleRun {
    pub config: ExampleConfig,
    pub solution: ExampleSolution,
    pub report: MpeReport,
    /// Pure best-reply iteration from `S^1 = ∅`.
    pub iteration: IterationTrace,
    /// Named checks on the solution, besides the equilibrium report.
    pub checks: Vec<PropertyCheck>,
    /// Set checks showing there is no pure equilibrium.
    pub certificate: Vec<PropertyCheck>,
    pub pass: bool,
}

/// Solves the example, verifies the mixed profile and runs the pure best-reply
/// iteration.
pub fn run_example(cfg: &ExampleConfig) -> Result<ExampleRun> {
    let solution = solve_example(cfg.grid_n, &cfg.solver)?;
    let model = DiffusionModel::logistic_martingale();
    let specs = solution.payoffs.specs.clone();
    let mut extra = example_knots();
    extra.extend([solution.x_star, 1.0 - solution.x_star]);
    let grid = GridSpec {
        lower: 0.0,
        upper: 1.0,
        n: cfg.grid_n,
        extra: extra.clone(),
    };
    let mut vcfg = VerifyConfig::new(grid.clone());
    vcfg.solver = cfg.solver.clone();
    vcfg.mc = Some(cfg.mc.clone());
    vcfg.probes = cfg.probes.clone();
    vcfg.n_se = cfg.n_se;
    vcfg.budget = cfg.budget_cells / (cfg.grid_n.max(2) - 1) as f64;
    vcfg.deviations = example_deviations(cfg.n_deviations, cfg.mc.seed);
    let report = verify_mpe(&solution.profile, &model, &specs, &vcfg);

    let start = Profile::new(
        MarkovStrategy::pure(ClosedSet::empty()),
        MarkovStrategy::pure(ClosedSet::empty()),
    );
    let iteration = pure_best_reply_iteration(
        &start,
        &model,
        &specs,
        &grid,
        &cfg.solver,
        cfg.max_iterations,
    )?;

    let xs = solution.x_star;
    let check = |name: &str, residual: f64, pass: bool| PropertyCheck {
        name: name.into(),
        residual,
        pass,
    };
    let res = solution.w2_residuals.clone();
    let checks = vec![
        check("x_star_in_range", xs, xs > 0.25 && xs < 1.0 / 3.0),
        check(
            "root_residual",
            solution.root_residual,
            solution.root_residual <= cfg.root_tol,
        ),
        check("alpha_positive", solution.alpha, solution.alpha > 0.0),
        {
            let p1 = &specs[0];
            let (a, b, c) = (p1.g(1.0 / 3.0), p1.r(0.5), p1.g(0.25));
            check(
                "g1_third_r1_half_g1_quarter",
                (b - a).min(c - b),
                a < b && b < c,
            )
        },
        check(
            "complementarity",
            res.complementarity,
            res.complementarity <= cfg.residual_tol,
        ),
        check("pde", res.pde, res.pde <= cfg.residual_tol),
        check(
            "atom_interface",
            res.atom_interface,
            res.atom_interface <= cfg.residual_tol,
        ),
    ];
    let certificate = no_pure_certificate(&iteration, cfg.max_iterations);
    let pass = checks.iter().chain(&certificate).all(|c| c.pass) && report.verdict == Verdict::Pass;
    Ok(ExampleRun {
        config: cfg.clone(),
        solution,
        report,
        iteration,
        checks,
        certificate,
        pass,
    })
}

/// Set checks along a pure best-reply trace started from `S^1 = ∅`, each with a
/// tolerance of one and a half grid cells:
/// player 1 always replies inside `[1/3, 2/3]`, player 2 inside `(0, 1/3] ∪ [2/3, 1)`;
/// against `∅` player 2 replies exactly `(0, 1/3] ∪ [2/3, 1)` and player 1 replies with
/// a nonempty set to it; against a nonempty set player 2 replies `(0, x0] ∪ [x1, 1)`
/// with `x0 in [1/6, 1/4]`, `x1 in [3/4, 5/6]`, and player 1 replies `∅` to that.
/// The trace must end in a cycle, not a fixed point.
pub fn no_pure_certificate(trace: &IterationTrace, max_updates: usize) -> Vec<PropertyCheck> {
    let third = 1.0 / 3.0;
    let middle = ClosedSet::interval(third, 2.0 * third).expect("ordered");
    let edges = edge_set(third);
    let mut out = Vec::new();
    let mut push = |name: String, residual: f64, pass: bool| {
        out.push(PropertyCheck {
            name,
            residual,
            pass,
        })
    };
    let mut faced = [trace.start[0].clone(), trace.start[1].clone()];
    for st in &trace.steps {
        let tol = 1.5 * st.h;
        let set = &st.stop_set;
        let opp = &faced[2 - st.player];
        let tag = format!("update{}_player{}", st.update, st.player);
        if st.player == 1 {
            push(
                format!("{tag}_inside_middle"),
                set.excess_over(&middle),
                set.approx_subset(&middle, tol),
            );
            if opp.approx_eq(&edges, tol) {
                push(format!("{tag}_nonempty"), 0.0, !set.is_empty());
            } else if !opp.is_empty() {
                push(format!("{tag}_empty"), 0.0, set.is_empty());
            }
        } else {
            push(
                format!("{tag}_inside_edges"),
                set.excess_over(&edges),
                set.approx_subset(&edges, tol),
            );
            if opp.is_empty() {
                push(
                    format!("{tag}_equals_edges"),
                    set.hausdorff(&edges),
                    set.approx_eq(&edges, tol),
                );
            } else {
                let c = set.components();
                let ok = c.len() == 2
                    && c[0][0] == 0.0
                    && c[1][1] == 1.0
                    && c[0][1] >= 1.0 / 6.0 - tol
                    && c[0][1] <= 0.25 + tol
                    && c[1][0] >= 0.75 - tol
                    && c[1][0] <= 5.0 / 6.0 + tol;
                push(format!("{tag}_two_edge_intervals"), 0.0, ok);
            }
        }
        faced[st.player - 1] = set.clone();
    }
    let (cycle, upd) = match trace.outcome {
        IterationOutcome::Cycle { update, .. } => (true, update),
        IterationOutcome::FixedPoint { update } => (false, update),
    };
    push(
        "cycle_detected".into(),
        upd as f64,
        cycle && upd <= max_updates,
    );
    out
}

/// Residuals of `v` in the verification system of the second player against the atom
/// `alpha δ_{1/2}`: obstacle complementarity, the generator in the continuation region
/// and the interface condition at `1/2`.
fn system_residuals(
    model: &DiffusionModel,
    spec: &PayoffSpec,
    grid: &Grid,
    v: &[f64],
    alpha: f64,
    stop: &ClosedSet,
) -> Result<(f64, f64, f64)> {
    let x = &grid.nodes;
    let half = grid
        .index_of(0.5)
        .ok_or(Error::GridMissingPoint { x: 0.5 })?;
    let (mut comp, mut pde) = (0.0f64, 0.0f64);
    for i in 1..x.len() - 1 {
        if i == half {
            continue;
        }
        let (hm, hp) = (x[i] - x[i - 1], x[i + 1] - x[i]);
        let lv =
            0.5 * model.sigma2_at(x[i])? * 2.0 * ((v[i + 1] - v[i]) / hp - (v[i] - v[i - 1]) / hm)
                / (hm + hp);
        let r = spec.r(x[i]);
        // min(-Lv, v - R) = 0 off the interface.
        comp = comp.max((-lv).min(v[i] - r).abs());
        if !stop.contains(x[i]) {
            pde = pde.max(lv.abs());
        }
    }
    let (hm, hp) = (x[half] - x[half - 1], x[half + 1] - x[half]);
    let jump = (v[half + 1] - v[half]) / hp - (v[half] - v[half - 1]) / hm;
    let atom = (alpha * (spec.g(0.5) - v[half]) + 0.5 * jump).abs();
    Ok((comp, pde, atom))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn payoffs_pass_all_checks() {
        let p = build_example_payoffs().unwrap();
        assert!(p.checks.iter().all(|c| c.pass));
        let [p1, p2] = &p.specs;
        assert_eq!(p1.g(0.25), 2.5);
        assert_eq!(p1.r(0.5), 2.0);
        assert!((p1.g(1.0 / 3.0) - 1.0).abs() < 1e-12);
        assert!((p2.g(0.5) - 2.75).abs() < 1e-15);
        assert_eq!(p1.r(0.0), 0.0);
        assert!(p2.r(1.0).abs() < 1e-15);
    }

    #[test]
    fn bisection_finds_sqrt_two() {
        let r = bisect(|x| x * x - 2.0, 1.0, 2.0).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(
            bisect(|x| x, 1.0, 2.0),
            Err(Error::NoBracket { lo: 1.0, hi: 2.0 })
        );
    }
}
