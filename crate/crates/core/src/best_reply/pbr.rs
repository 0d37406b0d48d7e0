use serde::{Deserialize, Serialize};

use super::BestReplyResult;
use crate::diffusion::Interval;
use crate::measures::quadrature::integrate;
use crate::measures::{ClosedSet, IntervalKind};
use crate::payoffs::PayoffSpec;
use crate::strategies::MarkovStrategy;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PbrTolerances {
    /// Slack for set inclusions, in state units.
    pub set: f64,
    /// Neighbourhood of `S_bar ∪ S^j` on which the intensity may live.
    pub delta: f64,
    /// Admissible stray intensity mass.
    pub mass: f64,
    /// Gap `G - R` above which intensity on `S^j` counts as misplaced.
    pub gap: f64,
}

impl PbrTolerances {
    /// One and a half cells for the set checks, a gap tolerance tied to the solver.
    pub fn for_result(result: &BestReplyResult) -> Self {
        let h = result.tolerances.h_max;
        PbrTolerances {
            set: 1.5 * h,
            delta: 1.5 * h,
            mass: 1e-9,
            gap: 10.0 * result.tolerances.tol_v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PbrCondition {
    pub name: String,
    pub residual: f64,
    pub tol: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PbrReport {
    pub conditions: Vec<PbrCondition>,
    pub pass: bool,
}

impl PbrReport {
    pub fn failed(&self) -> Vec<&str> {
        self.conditions
            .iter()
            .filter(|c| !c.pass)
            .map(|c| c.name.as_str())
            .collect()
    }
}

fn condition(name: &str, residual: f64, tol: f64) -> PbrCondition {
    PbrCondition {
        name: name.into(),
        residual,
        tol,
        pass: residual <= tol,
    }
}

fn enlarge(set: &ClosedSet, d: f64) -> ClosedSet {
    ClosedSet::from_components(
        set.components()
            .iter()
            .map(|c| [c[0] - d, c[1] + d])
            .collect(),
    )
    .expect("enlarging keeps the order")
}

/// Checks whether `candidate` is a best reply to `opp` given the solved `result`:
/// `S_under ⊆ S ⊆ S_bar`, the intensity lives on `S_bar ∪ S^j`, and none of it sits on
/// the part of `S^j` where `G > R`.
pub fn pbr_check(
    candidate: &MarkovStrategy,
    result: &BestReplyResult,
    opp: &MarkovStrategy,
    spec: &PayoffSpec,
    space: &Interval,
    tol: &PbrTolerances,
) -> PbrReport {
    let s = &candidate.stop_set;
    let mu = &candidate.intensity;
    let mut conds = vec![
        condition("s_under_in_s", result.s_under.excess_over(s), tol.set),
        condition("s_in_s_bar", s.excess_over(&result.s_bar), tol.set),
    ];

    let allowed = enlarge(&result.s_bar.union(&opp.stop_set), tol.delta);
    let stray: f64 = allowed
        .complement_in(space)
        .iter()
        .map(|&(a, b)| mu.mass(a, b, IntervalKind::Open))
        .sum();
    conds.push(condition("intensity_off_s_bar", stray, tol.mass));

    let gap = |x: f64| spec.g(x) - spec.r(x) > tol.gap;
    let mut misplaced: f64 = mu
        .atoms
        .iter()
        .filter(|a| opp.stop_set.contains(a.x) && gap(a.x))
        .map(|a| a.mass)
        .sum();
    for c in opp.stop_set.components() {
        let (a, b) = (c[0].max(space.lower), c[1].min(space.upper));
        if b > a && !mu.densities.is_empty() {
            misplaced += integrate(|x| if gap(x) { mu.density_at(x) } else { 0.0 }, a, b, 1e-12);
        }
    }
    conds.push(condition(
        "intensity_on_s_opp_with_gap",
        misplaced,
        tol.mass,
    ));

    let pass = conds.iter().all(|c| c.pass);
    PbrReport {
        conditions: conds,
        pass,
    }
}
