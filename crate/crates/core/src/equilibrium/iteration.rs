use serde::{Deserialize, Serialize};

use super::{GridSpec, Profile};
use crate::best_reply::{solve_best_reply, SolverOptions};
use crate::diffusion::DiffusionModel;
use crate::error::{Error, Result};
use crate::measures::ClosedSet;
use crate::payoffs::PayoffSpec;
use crate::strategies::MarkovStrategy;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationStep {
    /// 1-based update counter; update 0 is the starting profile.
    pub update: usize,
    /// Player (1 or 2) whose set was replaced.
    pub player: usize,
    pub stop_set: ClosedSet,
    pub h: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum IterationOutcome {
    /// Two consecutive updates left the profile unchanged.
    FixedPoint { update: usize },
    /// The next mover faces a set it already faced `period` updates earlier.
    Cycle { update: usize, period: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    pub start: [ClosedSet; 2],
    pub steps: Vec<IterationStep>,
    pub outcome: IterationOutcome,
}

impl IterationTrace {
    /// Stop sets of player `p` (1 or 2) after each update, with the update index.
    pub fn sets_of(&self, p: usize) -> Vec<(usize, &ClosedSet)> {
        let mut out = vec![(0, &self.start[p - 1])];
        out.extend(
            self.steps
                .iter()
                .filter(|s| s.player == p)
                .map(|s| (s.update, &s.stop_set)),
        );
        out
    }
}

/// Alternating pure best replies `S^i <- S_bar^i`, starting with player 2's reply to
/// `start.strat_1`. Sets are compared in the Hausdorff distance with a one-cell (and a
/// half) tolerance.
pub fn pure_best_reply_iteration(
    start: &Profile,
    model: &DiffusionModel,
    specs: &[PayoffSpec; 2],
    grid: &GridSpec,
    opts: &SolverOptions,
    max_iter: usize,
) -> Result<IterationTrace> {
    if !start.strat_1.is_pure() || !start.strat_2.is_pure() {
        return Err(Error::InvalidParameter(
            "best-reply iteration needs pure strategies".into(),
        ));
    }
    let space = model.state_space;
    let mut sets = [
        start.strat_1.stop_set.clone(),
        start.strat_2.stop_set.clone(),
    ];
    // Set faced by the next mover, keyed by update index.
    let mut faced: Vec<(usize, ClosedSet, f64)> = Vec::new();
    let mut steps = Vec::new();
    let mut mover = 1; // zero-based: player 2 moves first
    for update in 1..=max_iter {
        let opp = MarkovStrategy::pure(sets[1 - mover].clone());
        let own = MarkovStrategy::pure(sets[mover].clone());
        let g = grid.build(&space, &opp, &own)?;
        let h = g.h_max();
        faced.push((mover, sets[1 - mover].clone(), h));
        let br = solve_best_reply(model, &specs[mover], &opp, &g, opts)?;
        sets[mover] = br.s_bar;
        steps.push(IterationStep {
            update,
            player: mover + 1,
            stop_set: sets[mover].clone(),
            h,
        });
        mover = 1 - mover;
        let now = &sets[1 - mover];
        for (k, (m, s, hk)) in faced.iter().enumerate().rev() {
            if *m == mover && now.approx_eq(s, 1.5 * hk.max(h)) {
                let period = update - k;
                let outcome = if period == 2 {
                    IterationOutcome::FixedPoint { update }
                } else {
                    IterationOutcome::Cycle { update, period }
                };
                return Ok(IterationTrace {
                    start: [
                        start.strat_1.stop_set.clone(),
                        start.strat_2.stop_set.clone(),
                    ],
                    steps,
                    outcome,
                });
            }
        }
    }
    Err(Error::IterationLimit(max_iter))
}
