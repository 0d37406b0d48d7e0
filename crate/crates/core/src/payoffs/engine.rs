//! Streaming Monte Carlo over many matchups on common paths.

use rand::Rng;
use rayon::prelude::*;

use super::{McConfig, PayoffSpec};
use crate::diffusion::{step_count, DiffusionModel, EulerStepper, SeedRecord};
use crate::error::{Error, Result};
use crate::strategies::{HazardMeter, MarkovStrategy};

/// Joint survival below which a Stieltjes sum is treated as complete.
const SURVIVAL_FLOOR: f64 = 1e-14;

/// Payoff of the player using `strategies[own]` against `strategies[other]`.
#[derive(Debug, Clone, Copy)]
pub struct Matchup<'a> {
    pub own: usize,
    pub other: usize,
    pub spec: &'a PayoffSpec,
}

/// Per-path outputs, indexed `[matchup][path]`.
#[derive(Debug, Clone, Default)]
pub struct EngineRun {
    pub stieltjes: Vec<Vec<f64>>,
    pub sampled: Vec<Vec<f64>>,
    /// Joint survival `Lambda^i_T Lambda^j_T` at the horizon.
    pub survival: Vec<Vec<f64>>,
    /// `e^{-rT} max(|R(X_T)|, |G(X_T)|)` weighted by the joint survival.
    pub tail: Vec<Vec<f64>>,
    /// Number of paths that needed a boundary clamp.
    pub clamped_paths: usize,
}

struct StratState {
    hazard: f64,
    lam_prev: f64,
    lam: f64,
    alive: bool,
    /// Location of a stop-set entry at the current step.
    hit_at: Option<f64>,
    parts: Vec<(f64, f64)>,
    step_hazard: f64,
    /// Open gap of the stop set containing the current state.
    gap: (f64, f64),
}

impl StratState {
    fn new() -> Self {
        StratState {
            hazard: 0.0,
            lam_prev: 1.0,
            lam: 1.0,
            alive: true,
            hit_at: None,
            parts: Vec::with_capacity(4),
            step_hazard: 0.0,
            gap: (f64::NAN, f64::NAN),
        }
    }

    fn d_gamma(&self) -> f64 {
        self.lam_prev - self.lam
    }

    /// Average of `f` over the locations at which this step's mass was released.
    fn mark(&self, f: impl Fn(f64) -> f64) -> f64 {
        if let Some(x) = self.hit_at {
            return f(x);
        }
        if self.step_hazard <= 0.0 {
            return 0.0;
        }
        self.parts.iter().map(|&(x, h)| h * f(x)).sum::<f64>() / self.step_hazard
    }

    /// Location of a sampled stop whose uniform sits at relative position `v` inside
    /// this step's jump of `Gamma`.
    fn locate(&self, v: f64) -> f64 {
        if let Some(x) = self.hit_at {
            return x;
        }
        let mut acc = 0.0;
        let target = v * self.step_hazard;
        for &(x, h) in &self.parts {
            acc += h;
            if target < acc {
                return x;
            }
        }
        self.parts.last().map_or(f64::NAN, |p| p.0)
    }
}

struct EvalState {
    stieltjes: f64,
    st_done: bool,
    u_own: f64,
    u_other: f64,
    stop_own: Option<(usize, f64)>,
    stop_other: Option<(usize, f64)>,
    sampled: Option<f64>,
}

fn check_reward(v: f64, x: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFiniteReward { x })
    }
}

struct PathOut {
    stieltjes: Vec<f64>,
    sampled: Vec<f64>,
    survival: Vec<f64>,
    tail: Vec<f64>,
    clamped: bool,
}

#[allow(clippy::too_many_arguments)]
fn run_path(
    model: &DiffusionModel,
    x0: f64,
    strategies: &[MarkovStrategy],
    meters: &[HazardMeter],
    matchups: &[Matchup],
    cfg: &McConfig,
    n_steps: usize,
    path: u64,
) -> Result<PathOut> {
    let seed = SeedRecord::new(cfg.seed, path);
    let mut stepper = EulerStepper::new(model, cfg.dt, seed);
    let mut aux = seed.aux_rng();
    let mut states: Vec<StratState> = strategies.iter().map(|_| StratState::new()).collect();
    let mut evals: Vec<EvalState> = matchups
        .iter()
        .map(|_| EvalState {
            stieltjes: 0.0,
            st_done: false,
            u_own: aux.random::<f64>(),
            u_other: aux.random::<f64>(),
            stop_own: None,
            stop_other: None,
            sampled: None,
        })
        .collect();
    let r = model.discount;
    let mut x = x0;
    let mut remaining = matchups.len();
    // Number of unfinished matchups that read each strategy.
    let mut users = vec![0usize; strategies.len()];
    for m in matchups {
        users[m.own] += 1;
        users[m.other] += 1;
    }
    // Matchups reading each strategy; only those touching a strategy whose survival
    // moved in a step need to be revisited.
    let mut touching = vec![Vec::new(); strategies.len()];
    for (j, m) in matchups.iter().enumerate() {
        touching[m.own].push(j);
        if m.other != m.own {
            touching[m.other].push(j);
        }
    }
    let mut changed: Vec<usize> = Vec::new();
    let mut todo: Vec<usize> = (0..matchups.len()).collect();
    let mut stamp = vec![0usize; matchups.len()];
    let mut live: Vec<usize> = (0..strategies.len()).collect();

    // Node 0.
    for (i, (st, s)) in states.iter_mut().zip(strategies).enumerate() {
        if s.stop_set.contains(x0) {
            st.alive = false;
            st.lam = 0.0;
            st.hit_at = Some(x0);
            changed.push(i);
        }
    }
    let mut k = 0usize;
    loop {
        let disc = if r == 0.0 {
            1.0
        } else {
            (-r * k as f64 * cfg.dt).exp()
        };
        if k > 0 {
            todo.clear();
            for &i in &changed {
                for &j in &touching[i] {
                    if stamp[j] != k {
                        stamp[j] = k;
                        todo.push(j);
                    }
                }
            }
        }
        for &j in &todo {
            let (e, m) = (&mut evals[j], &matchups[j]);
            if e.st_done && e.sampled.is_some() {
                continue;
            }
            let a = &states[m.own];
            let b = &states[m.other];
            if !e.st_done {
                let dga = a.d_gamma();
                let dgb = b.d_gamma();
                if dga > 0.0 {
                    let mr = a.mark(|y| m.spec.stop_reward.eval(y));
                    e.stieltjes += disc * check_reward(mr, x)? * b.lam_prev * dga;
                }
                if dgb > 0.0 {
                    let mg = b.mark(|y| m.spec.follow_reward.eval(y));
                    e.stieltjes += disc * check_reward(mg, x)? * a.lam * dgb;
                }
                if a.lam * b.lam <= SURVIVAL_FLOOR {
                    e.st_done = true;
                }
            }
            if e.sampled.is_none() {
                if e.stop_own.is_none() && 1.0 - a.lam > e.u_own {
                    let v = (e.u_own - (1.0 - a.lam_prev)) / a.d_gamma();
                    e.stop_own = Some((k, a.locate(v.clamp(0.0, 1.0))));
                }
                if e.stop_other.is_none() && 1.0 - b.lam > e.u_other {
                    let v = (e.u_other - (1.0 - b.lam_prev)) / b.d_gamma();
                    e.stop_other = Some((k, b.locate(v.clamp(0.0, 1.0))));
                }
                // Ties go to the stopper.
                if let Some((_, y)) = e.stop_own {
                    e.sampled = Some(disc * check_reward(m.spec.stop_reward.eval(y), y)?);
                } else if let Some((_, y)) = e.stop_other {
                    e.sampled = Some(disc * check_reward(m.spec.follow_reward.eval(y), y)?);
                }
            }
            if e.st_done && e.sampled.is_some() {
                remaining -= 1;
                users[m.own] -= 1;
                users[m.other] -= 1;
            }
        }
        if remaining == 0 || k == n_steps {
            break;
        }

        // Advance to node k + 1.
        let x_prev = x;
        x = stepper.step(x_prev)?;
        k += 1;
        let s2 = model.sigma2_at(x_prev)?;
        // Inside a gap by more than this margin, neither an entry nor a bridge
        // crossing above the e^-36 cutoff is possible.
        let margin = if cfg.bridge {
            (18.0 * s2 * cfg.dt).sqrt()
        } else {
            0.0
        };
        let (lo_x, hi_x) = (x_prev.min(x), x_prev.max(x));
        let mut bridge_u: Option<f64> = None;
        for &i in &changed {
            let st = &mut states[i];
            st.lam_prev = st.lam;
            st.hit_at = None;
            st.step_hazard = 0.0;
            st.parts.clear();
        }
        changed.clear();
        live.retain(|&i| states[i].alive && users[i] > 0);
        for &i in &live {
            let (st, s, meter) = (&mut states[i], &strategies[i], &meters[i]);
            let safe = lo_x > st.gap.0 + margin && hi_x < st.gap.1 - margin;
            let entry = if safe {
                None
            } else {
                entry(s, st, x_prev, x, cfg.bridge, s2 * cfg.dt, &mut || {
                    *bridge_u.get_or_insert_with(|| aux.random::<f64>())
                })
            };
            if let Some(y) = entry {
                st.alive = false;
                st.lam = 0.0;
                st.hit_at = Some(y);
                changed.push(i);
                continue;
            }
            if !meter.is_null() {
                let h = meter.increment(x_prev, x, s2, cfg.dt, &mut st.parts);
                if h > 0.0 {
                    changed.push(i);
                    st.step_hazard = h;
                    st.hazard += h;
                    st.lam = (-st.hazard).exp();
                }
            }
        }
    }

    let disc_t = if r == 0.0 {
        1.0
    } else {
        (-r * k as f64 * cfg.dt).exp()
    };
    let mut out = PathOut {
        stieltjes: Vec::with_capacity(matchups.len()),
        sampled: Vec::with_capacity(matchups.len()),
        survival: Vec::with_capacity(matchups.len()),
        tail: Vec::with_capacity(matchups.len()),
        clamped: stepper.clamped,
    };
    for (e, m) in evals.iter().zip(matchups) {
        let surv = if e.st_done {
            0.0
        } else {
            states[m.own].lam * states[m.other].lam
        };
        let scale = m
            .spec
            .stop_reward
            .eval(x)
            .abs()
            .max(m.spec.follow_reward.eval(x).abs());
        out.stieltjes.push(e.stieltjes);
        out.sampled.push(e.sampled.unwrap_or(0.0));
        out.survival.push(surv);
        out.tail.push(surv * disc_t * scale);
    }
    Ok(out)
}

/// Full entry test for one step; refreshes the cached gap when the strategy survives.
fn entry(
    s: &MarkovStrategy,
    st: &mut StratState,
    x_prev: f64,
    x: f64,
    bridge: bool,
    var: f64,
    uniform: &mut impl FnMut() -> f64,
) -> Option<f64> {
    let mut hit = s.stop_set.entry_point(x_prev, x);
    if hit.is_none() && bridge && !s.stop_set.is_empty() {
        hit = bridge_hit(&s.stop_set, x_prev, x, var, uniform);
    }
    if hit.is_none() {
        let (below, above) = s.stop_set.neighbours(x);
        st.gap = (
            below.unwrap_or(f64::NEG_INFINITY),
            above.unwrap_or(f64::INFINITY),
        );
    }
    hit
}

/// Brownian-bridge correction: probability that the continuous path between two grid
/// states outside the set touched one of the neighbouring boundary points.
fn bridge_hit(
    set: &crate::measures::ClosedSet,
    x_prev: f64,
    x: f64,
    var: f64,
    mut uniform: impl FnMut() -> f64,
) -> Option<f64> {
    if var <= 0.0 {
        return None;
    }
    let (below, above) = set.neighbours(x_prev);
    // Crossing probabilities below e^-36 are treated as zero.
    let p_of = |b: f64| {
        let q = 2.0 * (x_prev - b) * (x - b) / var;
        if q > 36.0 {
            0.0
        } else {
            (-q).exp()
        }
    };
    let pb = below.map_or(0.0, p_of);
    let pa = above.map_or(0.0, p_of);
    if pb < 1e-300 && pa < 1e-300 {
        return None;
    }
    let u = uniform();
    if u < pb {
        below
    } else if u < pb + pa * (1.0 - pb) {
        above
    } else {
        None
    }
}

/// Runs every matchup on the same `cfg.n_paths` paths started at `x0`.
pub fn run_matchups(
    model: &DiffusionModel,
    x0: f64,
    strategies: &[MarkovStrategy],
    matchups: &[Matchup],
    cfg: &McConfig,
) -> Result<EngineRun> {
    cfg.validate()?;
    model.validate()?;
    model.state_space.check(x0)?;
    let n_steps = step_count(cfg.dt, cfg.horizon)?;
    for m in matchups {
        if m.own >= strategies.len() || m.other >= strategies.len() {
            return Err(Error::InvalidParameter(
                "matchup refers to a missing strategy".into(),
            ));
        }
    }
    let meters: Vec<HazardMeter> = strategies
        .iter()
        .map(|s| HazardMeter::new(s, cfg.method, cfg.bandwidth))
        .collect();
    let work = |i: usize| {
        run_path(
            model, x0, strategies, &meters, matchups, cfg, n_steps, i as u64,
        )
    };
    let outs: Vec<Result<PathOut>> = with_pool(cfg.workers, || {
        (0..cfg.n_paths).into_par_iter().map(work).collect()
    })?;
    let mut run = EngineRun {
        stieltjes: vec![Vec::with_capacity(cfg.n_paths); matchups.len()],
        sampled: vec![Vec::with_capacity(cfg.n_paths); matchups.len()],
        survival: vec![Vec::with_capacity(cfg.n_paths); matchups.len()],
        tail: vec![Vec::with_capacity(cfg.n_paths); matchups.len()],
        clamped_paths: 0,
    };
    for o in outs {
        let o = o?;
        run.clamped_paths += usize::from(o.clamped);
        for j in 0..matchups.len() {
            run.stieltjes[j].push(o.stieltjes[j]);
            run.sampled[j].push(o.sampled[j]);
            run.survival[j].push(o.survival[j]);
            run.tail[j].push(o.tail[j]);
        }
    }
    Ok(run)
}

/// Runs `f` on a dedicated pool with `workers` threads (the global pool when `None`).
pub fn with_pool<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}
