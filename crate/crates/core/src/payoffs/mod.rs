//! Monte Carlo payoff evaluation.

pub mod engine;

use serde::{Deserialize, Serialize};

use crate::diffusion::{step_count, DiffusionModel, EulerStepper, LocalTimeMethod, SeedRecord};
use crate::error::{Error, Result};
use crate::poly::PiecewisePolynomial;
use crate::strategies::MarkovStrategy;
use crate::sum::{mean_se, pairwise_sum};

pub use engine::{run_matchups, with_pool, EngineRun, Matchup};

/// Rewards of one player: `R` when stopping first (or simultaneously), `G` when the
/// opponent stops first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayoffSpec {
    #[serde(rename = "R")]
    pub stop_reward: PiecewisePolynomial,
    #[serde(rename = "G")]
    pub follow_reward: PiecewisePolynomial,
}

impl PayoffSpec {
    pub fn new(stop_reward: PiecewisePolynomial, follow_reward: PiecewisePolynomial) -> Self {
        PayoffSpec {
            stop_reward,
            follow_reward,
        }
    }

    pub fn r(&self, x: f64) -> f64 {
        self.stop_reward.eval(x)
    }

    pub fn g(&self, x: f64) -> f64 {
        self.follow_reward.eval(x)
    }

    /// Checks finiteness and `R <= G` at the given points.
    pub fn check_ordering(&self, points: impl IntoIterator<Item = f64>) -> Result<()> {
        for x in points {
            let (r, g) = (self.r(x), self.g(x));
            if !r.is_finite() || !g.is_finite() {
                return Err(Error::NonFiniteReward { x });
            }
            if r > g + 1e-12 * g.abs().max(1.0) {
                return Err(Error::RewardOrdering { x });
            }
        }
        Ok(())
    }

    /// `R <= G` on a uniform sample of the bounded part of `[lo, hi]` plus all knots.
    pub fn check_ordering_on(&self, lo: f64, hi: f64, n: usize) -> Result<()> {
        let mut pts: Vec<f64> = (1..n)
            .map(|k| lo + (hi - lo) * k as f64 / n as f64)
            .collect();
        pts.extend(self.stop_reward.knots());
        pts.extend(self.follow_reward.knots());
        self.check_ordering(pts.into_iter().filter(|&x| x > lo && x < hi))
    }
}

fn default_bandwidth() -> f64 {
    1e-2
}

fn default_tail_budget() -> f64 {
    1e-2
}

/// Monte Carlo settings. Path `i` uses stream `i` of the master seed, so results do
/// not depend on the number of workers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub n_paths: usize,
    pub dt: f64,
    pub horizon: f64,
    #[serde(default = "default_bandwidth")]
    pub bandwidth: f64,
    #[serde(default)]
    pub method: LocalTimeMethod,
    /// Brownian-bridge correction of stop-set hits between grid nodes.
    #[serde(default)]
    pub bridge: bool,
    pub seed: u64,
    #[serde(default)]
    pub workers: Option<usize>,
    /// Largest admissible tail diagnostic, relative to `max(1, |mean|)`.
    #[serde(default = "default_tail_budget")]
    pub tail_budget: f64,
}

impl McConfig {
    pub fn new(n_paths: usize, dt: f64, horizon: f64, seed: u64) -> Self {
        McConfig {
            n_paths,
            dt,
            horizon,
            bandwidth: default_bandwidth(),
            method: LocalTimeMethod::Kernel,
            bridge: false,
            seed,
            workers: None,
            tail_budget: default_tail_budget(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_paths == 0 {
            return Err(Error::InvalidParameter("n_paths must be at least 1".into()));
        }
        if !(self.bandwidth > 0.0) {
            return Err(Error::InvalidParameter("bandwidth must be positive".into()));
        }
        if !(self.tail_budget >= 0.0) {
            return Err(Error::InvalidParameter("tail budget must be >= 0".into()));
        }
        step_count(self.dt, self.horizon).map(|_| ())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailDiagnostic {
    /// Mean joint survival probability at the horizon.
    pub surviving: f64,
    /// Mean of `Lambda^i_T Lambda^j_T e^{-rT} max(|R|, |G|)(X_T)`.
    pub discounted_reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayoffEstimate {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
    pub tail: TailDiagnostic,
    /// Set when the tail diagnostic exceeds the configured budget.
    pub tail_exceeded: bool,
}

impl PayoffEstimate {
    pub fn from_samples(values: &[f64], survival: &[f64], tail: &[f64], budget: f64) -> Self {
        let (mean, se) = mean_se(values);
        let n = values.len();
        let tail = TailDiagnostic {
            surviving: pairwise_sum(survival) / n as f64,
            discounted_reward: pairwise_sum(tail) / n as f64,
        };
        PayoffEstimate {
            mean,
            se,
            n,
            tail_exceeded: tail.discounted_reward > budget * mean.abs().max(1.0),
            tail,
        }
    }
}

/// Both estimators for every matchup of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchupEstimates {
    pub stieltjes: PayoffEstimate,
    pub sampled: PayoffEstimate,
}

pub fn summarize(run: &EngineRun, cfg: &McConfig) -> Vec<MatchupEstimates> {
    (0..run.stieltjes.len())
        .map(|j| MatchupEstimates {
            stieltjes: PayoffEstimate::from_samples(
                &run.stieltjes[j],
                &run.survival[j],
                &run.tail[j],
                cfg.tail_budget,
            ),
            sampled: PayoffEstimate::from_samples(
                &run.sampled[j],
                &run.survival[j],
                &run.tail[j],
                cfg.tail_budget,
            ),
        })
        .collect()
}

/// Mean and standard error of the per-path difference `a - b` (common random numbers).
pub fn paired_difference(a: &[f64], b: &[f64]) -> (f64, f64) {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    mean_se(&d)
}

fn single(
    model: &DiffusionModel,
    spec_i: &PayoffSpec,
    x0: f64,
    strat_i: &MarkovStrategy,
    strat_j: &MarkovStrategy,
    cfg: &McConfig,
) -> Result<MatchupEstimates> {
    spec_i.check_ordering([x0])?;
    let strategies = [strat_i.clone(), strat_j.clone()];
    let m = [Matchup {
        own: 0,
        other: 1,
        spec: spec_i,
    }];
    let run = run_matchups(model, x0, &strategies, &m, cfg)?;
    Ok(summarize(&run, cfg).remove(0))
}

/// Averages the per-path Stieltjes sums
/// `sum R(X) Lambda^j_{t-} dGamma^i + G(X) Lambda^i_t dGamma^j`.
pub fn payoff_stieltjes(
    model: &DiffusionModel,
    spec_i: &PayoffSpec,
    x0: f64,
    strat_i: &MarkovStrategy,
    strat_j: &MarkovStrategy,
    cfg: &McConfig,
) -> Result<PayoffEstimate> {
    single(model, spec_i, x0, strat_i, strat_j, cfg).map(|e| e.stieltjes)
}

/// Draws independent randomization devices for both players and scores the realized
/// stopping times, ties going to player `i`.
pub fn payoff_sampled(
    model: &DiffusionModel,
    spec_i: &PayoffSpec,
    x0: f64,
    strat_i: &MarkovStrategy,
    strat_j: &MarkovStrategy,
    cfg: &McConfig,
) -> Result<PayoffEstimate> {
    single(model, spec_i, x0, strat_i, strat_j, cfg).map(|e| e.sampled)
}

/// Both estimators on the same paths.
pub fn payoff_both(
    model: &DiffusionModel,
    spec_i: &PayoffSpec,
    x0: f64,
    strat_i: &MarkovStrategy,
    strat_j: &MarkovStrategy,
    cfg: &McConfig,
) -> Result<MatchupEstimates> {
    single(model, spec_i, x0, strat_i, strat_j, cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardProxies {
    /// Mean of `sup_t e^{-rt} |f(X_t)|`.
    pub sup_mean: f64,
    /// Mean of `e^{-rT} |f(X_T)|`.
    pub tail_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub stop_reward: RewardProxies,
    pub follow_reward: RewardProxies,
    pub horizon: f64,
    pub n_paths: usize,
}

/// Empirical proxies for uniform integrability and vanishing discounted rewards.
pub fn check_assumptions(
    model: &DiffusionModel,
    spec: &PayoffSpec,
    x0: f64,
    cfg: &McConfig,
) -> Result<AssumptionReport> {
    cfg.validate()?;
    model.state_space.check(x0)?;
    let n_steps = step_count(cfg.dt, cfg.horizon)?;
    let r = model.discount;
    let per_path = |i: usize| -> Result<[f64; 4]> {
        let mut st = EulerStepper::new(model, cfg.dt, SeedRecord::new(cfg.seed, i as u64));
        let mut x = x0;
        let mut sup_r = spec.r(x).abs();
        let mut sup_g = spec.g(x).abs();
        for k in 1..=n_steps {
            x = st.step(x)?;
            let d = (-r * k as f64 * cfg.dt).exp();
            sup_r = sup_r.max(d * spec.r(x).abs());
            sup_g = sup_g.max(d * spec.g(x).abs());
        }
        let d = (-r * cfg.horizon).exp();
        Ok([sup_r, d * spec.r(x).abs(), sup_g, d * spec.g(x).abs()])
    };
    let rows: Vec<Result<[f64; 4]>> = with_pool(cfg.workers, || {
        use rayon::prelude::*;
        (0..cfg.n_paths).into_par_iter().map(per_path).collect()
    })?;
    let mut cols: Vec<Vec<_>> = (0..4).map(|_| Vec::with_capacity(cfg.n_paths)).collect();
    for row in rows {
        let row = row?;
        for (c, v) in cols.iter_mut().zip(row) {
            c.push(v);
        }
    }
    let n = cfg.n_paths as f64;
    let m = |c: &Vec<f64>| pairwise_sum(c) / n;
    Ok(AssumptionReport {
        stop_reward: RewardProxies {
            sup_mean: m(&cols[0]),
            tail_mean: m(&cols[1]),
        },
        follow_reward: RewardProxies {
            sup_mean: m(&cols[2]),
            tail_mean: m(&cols[3]),
        },
        horizon: cfg.horizon,
        n_paths: cfg.n_paths,
    })
}
