//! History-dependent pure equilibrium: player 1 stops on entering `S^1` only if `S^2`
//! has not been entered before; player 2 stops on entering `S^2`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::DeviationGain;
use crate::diffusion::{step_count, DiffusionModel, EulerStepper, SeedRecord};
use crate::error::Result;
use crate::measures::ClosedSet;
use crate::payoffs::{paired_difference, with_pool, McConfig, PayoffSpec};
use crate::sum::mean_se;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonMarkovConfig {
    pub mc: McConfig,
    pub x0s: Vec<f64>,
    #[serde(default = "default_deviations")]
    pub n_deviations: usize,
    #[serde(default = "default_n_se")]
    pub n_se: f64,
    #[serde(default)]
    pub budget: f64,
}

fn default_deviations() -> usize {
    20
}
fn default_n_se() -> f64 {
    3.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonMarkovRow {
    pub x0: f64,
    pub payoff: [f64; 2],
    pub se: [f64; 2],
    /// Player 1's payoff when stopping on `S^1` unconditionally.
    pub markov_payoff_1: f64,
    pub equivalence_gap: f64,
    pub equivalence_se: f64,
    pub equivalent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonMarkovReport {
    pub s1: ClosedSet,
    pub s2: ClosedSet,
    /// Deviation sets per player; player 2's first entry is "never stop".
    pub deviation_sets: [Vec<ClosedSet>; 2],
    pub rows: Vec<NonMarkovRow>,
    pub deviations: Vec<DeviationGain>,
    pub pass: bool,
}

/// Random deviation sets: intervals for player 1, `(0, a] ∪ [b, 1)` for player 2.
fn deviation_sets(n: usize, seed: u64) -> [Vec<ClosedSet>; 2] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5851_f42d_4c95_7f2d);
    let mut p1 = Vec::with_capacity(n);
    for _ in 0..n {
        let c = rng.random_range(0.05..0.9);
        let w = rng.random_range(0.0..0.1);
        p1.push(ClosedSet::interval(c, c + w).expect("ordered"));
    }
    let mut p2 = vec![ClosedSet::empty()];
    for _ in 1..n {
        let a = rng.random_range(0.15..0.45);
        let b = rng.random_range(0.55..0.85);
        p2.push(ClosedSet::from_components(vec![[0.0, a], [b, 1.0]]).expect("ordered"));
    }
    [p1, p2]
}

/// First entry (step, location) of a set, if any.
type Entry = Option<(usize, f64)>;

struct PathOutcome {
    on_path: [f64; 2],
    markov_1: f64,
    dev: [Vec<f64>; 2],
}

fn before(a: Entry, b: Entry) -> bool {
    match (a, b) {
        (Some((ka, _)), Some((kb, _))) => ka < kb,
        (Some(_), None) => true,
        _ => false,
    }
}

#[allow(clippy::too_many_arguments)]
fn run_path(
    model: &DiffusionModel,
    specs: &[PayoffSpec; 2],
    s1: &ClosedSet,
    s2: &ClosedSet,
    devs: &[Vec<ClosedSet>; 2],
    x0: f64,
    cfg: &McConfig,
    n_steps: usize,
    path: u64,
) -> Result<PathOutcome> {
    let mut stepper = EulerStepper::new(model, cfg.dt, SeedRecord::new(cfg.seed, path));
    let first = |s: &ClosedSet| s.contains(x0).then_some((0usize, x0));
    let mut t1 = first(s1);
    let mut t2 = first(s2);
    let mut td: [Vec<Entry>; 2] = [
        devs[0].iter().map(first).collect(),
        devs[1].iter().map(first).collect(),
    ];
    let mut x = x0;
    let mut k = 0;
    let determined = |t1: Entry, t2: Entry, td: &[Vec<Entry>; 2]| {
        if t1.is_none() && t2.is_none() {
            return false;
        }
        let tau1_finite = before(t1, t2);
        td[0].iter().all(|d| d.is_some() || t2.is_some())
            && td[1]
                .iter()
                .zip(&devs[1])
                .all(|(d, s)| d.is_some() || tau1_finite || s.is_empty())
    };
    while k < n_steps && !determined(t1, t2, &td) {
        let prev = x;
        x = stepper.step(prev)?;
        k += 1;
        let hit = |e: &mut Entry, s: &ClosedSet| {
            if e.is_none() {
                if let Some(y) = s.entry_point(prev, x) {
                    *e = Some((k, y));
                }
            }
        };
        hit(&mut t1, s1);
        hit(&mut t2, s2);
        for (es, ss) in td.iter_mut().zip(devs) {
            for (e, s) in es.iter_mut().zip(ss) {
                hit(e, s);
            }
        }
    }
    let [p1, p2] = specs;
    // tau^1 is finite only when S^1 is entered strictly before S^2.
    let tau1: Entry = if before(t1, t2) { t1 } else { None };
    let play = |own: Entry, other: Entry, spec: &PayoffSpec| -> f64 {
        match (own, other) {
            (Some((ko, yo)), Some((kt, _))) if ko <= kt => spec.r(yo),
            (Some((_, yo)), None) => spec.r(yo),
            (_, Some((_, yt))) => spec.g(yt),
            (None, None) => 0.0,
        }
    };
    Ok(PathOutcome {
        on_path: [play(tau1, t2, p1), play(t2, tau1, p2)],
        markov_1: play(t1, t2, p1),
        dev: [
            td[0].iter().map(|&d| play(d, t2, p1)).collect(),
            td[1].iter().map(|&d| play(d, tau1, p2)).collect(),
        ],
    })
}

/// Monte Carlo check of the history-dependent profile and of random pure deviations.
pub fn check_nonmarkov_nash(
    model: &DiffusionModel,
    specs: &[PayoffSpec; 2],
    s1: &ClosedSet,
    s2: &ClosedSet,
    cfg: &NonMarkovConfig,
) -> Result<NonMarkovReport> {
    cfg.mc.validate()?;
    let n_steps = step_count(cfg.mc.dt, cfg.mc.horizon)?;
    let devs = deviation_sets(cfg.n_deviations, cfg.mc.seed);
    let mut rows = Vec::new();
    let mut gains = Vec::new();
    for &x0 in &cfg.x0s {
        model.state_space.check(x0)?;
        let outs: Vec<Result<PathOutcome>> = with_pool(cfg.mc.workers, || {
            (0..cfg.mc.n_paths)
                .into_par_iter()
                .map(|i| run_path(model, specs, s1, s2, &devs, x0, &cfg.mc, n_steps, i as u64))
                .collect()
        })?;
        let outs: Vec<PathOutcome> = outs.into_iter().collect::<Result<_>>()?;
        let col = |f: &dyn Fn(&PathOutcome) -> f64| outs.iter().map(f).collect::<Vec<f64>>();
        let on = [col(&|o| o.on_path[0]), col(&|o| o.on_path[1])];
        let m1 = col(&|o| o.markov_1);
        let (a, sa) = mean_se(&on[0]);
        let (b, sb) = mean_se(&on[1]);
        let (mm, _) = mean_se(&m1);
        let (eq_gap, eq_se) = paired_difference(&on[0], &m1);
        rows.push(NonMarkovRow {
            x0,
            payoff: [a, b],
            se: [sa, sb],
            markov_payoff_1: mm,
            equivalence_gap: eq_gap,
            equivalence_se: eq_se,
            equivalent: eq_gap.abs() <= cfg.n_se * eq_se + cfg.budget,
        });
        for p in 0..2 {
            for k in 0..devs[p].len() {
                let d = col(&|o| o.dev[p][k]);
                let (gain, se) = paired_difference(&d, &on[p]);
                let allowed = cfg.n_se * se + cfg.budget;
                gains.push(DeviationGain {
                    player: p + 1,
                    index: k,
                    x0,
                    gain,
                    se,
                    allowed,
                    pass: gain <= allowed,
                });
            }
        }
    }
    let pass = rows.iter().all(|r| r.equivalent) && gains.iter().all(|g| g.pass);
    Ok(NonMarkovReport {
        s1: s1.clone(),
        s2: s2.clone(),
        deviation_sets: devs,
        rows,
        deviations: gains,
        pass,
    })
}
