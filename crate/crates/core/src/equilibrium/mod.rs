//! Markov-perfect equilibrium checks, pure best-reply dynamics and the worked example
//! with no pure equilibrium.

pub mod example;
pub mod iteration;
pub mod nonmarkov;

use serde::{Deserialize, Serialize};

use crate::best_reply::{
    pbr_check, solve_best_reply, BestReplyResult, Grid, PbrReport, PbrTolerances, SolverOptions,
};
use crate::diffusion::{DiffusionModel, Interval};
use crate::error::Result;
use crate::measures::ClosedSet;
use crate::payoffs::{paired_difference, run_matchups, summarize, Matchup, McConfig, PayoffSpec};
use crate::strategies::MarkovStrategy;

pub use example::{
    build_example_payoffs, example_deviations, no_pure_certificate, run_example, solve_example,
    ExampleConfig, ExamplePayoffs, ExampleRun, ExampleSolution, PropertyCheck,
};
pub use iteration::{pure_best_reply_iteration, IterationOutcome, IterationTrace};
pub use nonmarkov::{check_nonmarkov_nash, NonMarkovConfig, NonMarkovReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub strat_1: MarkovStrategy,
    pub strat_2: MarkovStrategy,
}

impl Profile {
    pub fn new(strat_1: MarkovStrategy, strat_2: MarkovStrategy) -> Self {
        Profile { strat_1, strat_2 }
    }

    /// Strategy of player `i` (0 or 1) and of the opponent.
    pub fn pair(&self, i: usize) -> (&MarkovStrategy, &MarkovStrategy) {
        if i == 0 {
            (&self.strat_1, &self.strat_2)
        } else {
            (&self.strat_2, &self.strat_1)
        }
    }

    pub fn validated(self) -> Result<Self> {
        Ok(Profile {
            strat_1: self.strat_1.validated()?,
            strat_2: self.strat_2.validated()?,
        })
    }
}

/// Uniform grid on `[lower, upper]` refined by the special points of the opponent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lower: f64,
    pub upper: f64,
    pub n: usize,
    #[serde(default)]
    pub extra: Vec<f64>,
}

impl GridSpec {
    pub fn new(lower: f64, upper: f64, n: usize) -> Self {
        GridSpec {
            lower,
            upper,
            n,
            extra: Vec::new(),
        }
    }

    pub fn build(
        &self,
        space: &Interval,
        opp: &MarkovStrategy,
        own: &MarkovStrategy,
    ) -> Result<Grid> {
        let mut extra = self.extra.clone();
        extra.extend(own.intensity.special_points());
        for c in own.stop_set.components() {
            extra.extend(c.iter().copied().filter(|&v| space.contains(v)));
        }
        Grid::for_opponent(space, self.lower, self.upper, self.n, opp, &extra)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyConfig {
    pub grid: GridSpec,
    #[serde(default)]
    pub solver: SolverOptions,
    /// Monte Carlo comparison; skipped when absent.
    #[serde(default)]
    pub mc: Option<McConfig>,
    #[serde(default)]
    pub probes: Vec<f64>,
    #[serde(default = "default_n_se")]
    pub n_se: f64,
    /// Discretization allowance added to `n_se` standard errors.
    #[serde(default)]
    pub budget: f64,
    /// Pure or mixed deviations tested against the profile, per player.
    #[serde(default)]
    pub deviations: [Vec<MarkovStrategy>; 2],
    /// Largest `G - R` tolerated on `S^1 ∩ S^2`.
    #[serde(default = "default_gap_tol")]
    pub gap_tol: f64,
}

fn default_n_se() -> f64 {
    3.0
}
fn default_gap_tol() -> f64 {
    1e-9
}

impl VerifyConfig {
    pub fn new(grid: GridSpec) -> Self {
        VerifyConfig {
            grid,
            solver: SolverOptions::default(),
            mc: None,
            probes: Vec::new(),
            n_se: default_n_se(),
            budget: 0.0,
            deviations: [Vec::new(), Vec::new()],
            gap_tol: default_gap_tol(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayerReport {
    pub player: usize,
    pub best_reply: BestReplyResult,
    pub pbr: PbrReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeGap {
    pub player: usize,
    pub x0: f64,
    pub value: f64,
    pub mc_mean: f64,
    pub mc_se: f64,
    pub sampled_mean: f64,
    pub gap: f64,
    pub allowed: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationGain {
    pub player: usize,
    pub index: usize,
    pub x0: f64,
    pub gain: f64,
    pub se: f64,
    pub allowed: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpeReport {
    pub players: Vec<PlayerReport>,
    /// `max (G^i - R^i)` over `S^1 ∩ S^2`, for each player.
    pub common_stop_gap: [f64; 2],
    pub common_stop_ok: bool,
    pub probe_gaps: Vec<ProbeGap>,
    pub sup_gap: f64,
    pub deviations: Vec<DeviationGain>,
    pub verdict: Verdict,
    /// Names of failed sub-checks, or the solver error when inconclusive.
    pub failures: Vec<String>,
}

fn common_stop_gap(s1: &ClosedSet, s2: &ClosedSet, spec: &PayoffSpec, space: &Interval) -> f64 {
    let mut worst: f64 = 0.0;
    for c in s1.intersection(s2).components() {
        let (a, b) = (c[0].max(space.lower), c[1].min(space.upper));
        for k in 0..=64 {
            let x = a + (b - a) * k as f64 / 64.0;
            if space.contains(x) {
                worst = worst.max(spec.g(x) - spec.r(x));
            }
        }
    }
    worst
}

#[allow(clippy::needless_range_loop)]
fn solve_both(
    profile: &Profile,
    model: &DiffusionModel,
    specs: &[PayoffSpec; 2],
    cfg: &VerifyConfig,
) -> Result<Vec<PlayerReport>> {
    let space = model.state_space;
    let mut out = Vec::with_capacity(2);
    for i in 0..2 {
        let (own, opp) = profile.pair(i);
        let grid = cfg.grid.build(&space, opp, own)?;
        let br = solve_best_reply(model, &specs[i], opp, &grid, &cfg.solver)?;
        let tol = PbrTolerances::for_result(&br);
        let pbr = pbr_check(own, &br, opp, &specs[i], &space, &tol);
        out.push(PlayerReport {
            player: i + 1,
            best_reply: br,
            pbr,
        });
    }
    Ok(out)
}

/// Checks that both strategies are best replies (grid solver plus characterization),
/// that no common stopping point leaves either player a second-mover gain, and, when
/// configured, that simulated payoffs match the best-reply values and no listed
/// deviation pays.
pub fn verify_mpe(
    profile: &Profile,
    model: &DiffusionModel,
    specs: &[PayoffSpec; 2],
    cfg: &VerifyConfig,
) -> MpeReport {
    let space = model.state_space;
    let gaps = [
        common_stop_gap(
            &profile.strat_1.stop_set,
            &profile.strat_2.stop_set,
            &specs[0],
            &space,
        ),
        common_stop_gap(
            &profile.strat_1.stop_set,
            &profile.strat_2.stop_set,
            &specs[1],
            &space,
        ),
    ];
    let common_ok = gaps.iter().all(|&g| g <= cfg.gap_tol);
    let mut report = MpeReport {
        players: Vec::new(),
        common_stop_gap: gaps,
        common_stop_ok: common_ok,
        probe_gaps: Vec::new(),
        sup_gap: 0.0,
        deviations: Vec::new(),
        verdict: Verdict::Pass,
        failures: Vec::new(),
    };
    match solve_both(profile, model, specs, cfg) {
        Ok(p) => report.players = p,
        Err(e) => {
            report.verdict = Verdict::Inconclusive;
            report.failures.push(e.to_string());
            return report;
        }
    }
    if let Some(mc) = &cfg.mc {
        if let Err(e) = mc_checks(profile, model, specs, cfg, mc, &mut report) {
            report.verdict = Verdict::Inconclusive;
            report.failures.push(e.to_string());
            return report;
        }
    }

    if !common_ok {
        report.failures.push("common_stop_with_gap".into());
    }
    for p in &report.players {
        for name in p.pbr.failed() {
            report.failures.push(format!("player{}:{name}", p.player));
        }
    }
    for g in report.probe_gaps.iter().filter(|g| !g.pass) {
        report
            .failures
            .push(format!("player{}:value_gap@{}", g.player, g.x0));
    }
    for d in report.deviations.iter().filter(|d| !d.pass) {
        report
            .failures
            .push(format!("player{}:deviation{}@{}", d.player, d.index, d.x0));
    }
    if !report.failures.is_empty() {
        report.verdict = Verdict::Fail;
    }
    report
}

#[allow(clippy::needless_range_loop)]
fn mc_checks(
    profile: &Profile,
    model: &DiffusionModel,
    specs: &[PayoffSpec; 2],
    cfg: &VerifyConfig,
    mc: &McConfig,
    report: &mut MpeReport,
) -> Result<()> {
    let mut strategies = vec![profile.strat_1.clone(), profile.strat_2.clone()];
    let mut matchups = vec![
        Matchup {
            own: 0,
            other: 1,
            spec: &specs[0],
        },
        Matchup {
            own: 1,
            other: 0,
            spec: &specs[1],
        },
    ];
    // (player, index within the player's list)
    let mut dev_of = Vec::new();
    for (i, devs) in cfg.deviations.iter().enumerate() {
        for (k, d) in devs.iter().enumerate() {
            strategies.push(d.clone());
            matchups.push(Matchup {
                own: strategies.len() - 1,
                other: 1 - i,
                spec: &specs[i],
            });
            dev_of.push((i, k));
        }
    }
    for &x0 in &cfg.probes {
        model.state_space.check(x0)?;
        let run = run_matchups(model, x0, &strategies, &matchups, mc)?;
        let est = summarize(&run, mc);
        for i in 0..2 {
            let v = report.players[i].best_reply.value.eval(x0);
            let e = &est[i];
            let gap = (e.stieltjes.mean - v).abs();
            let allowed = cfg.n_se * e.stieltjes.se + cfg.budget;
            report.sup_gap = report.sup_gap.max(gap);
            report.probe_gaps.push(ProbeGap {
                player: i + 1,
                x0,
                value: v,
                mc_mean: e.stieltjes.mean,
                mc_se: e.stieltjes.se,
                sampled_mean: e.sampled.mean,
                gap,
                allowed,
                pass: gap <= allowed,
            });
        }
        for (m, &(i, k)) in dev_of.iter().enumerate() {
            let (gain, se) = paired_difference(&run.stieltjes[2 + m], &run.stieltjes[i]);
            let allowed = cfg.n_se * se + cfg.budget;
            report.deviations.push(DeviationGain {
                player: i + 1,
                index: k,
                x0,
                gain,
                se,
                allowed,
                pass: gain <= allowed,
            });
        }
    }
    Ok(())
}
