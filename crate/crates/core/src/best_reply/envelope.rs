//! Best reply for driftless, undiscounted models: on each gap of the opponent's stop
//! set the value is the smallest concave majorant of `R` pinned to `G` at the ends.

use super::{
    fixed_nodes, forbidden_near, probe_components, residuals, setup, BestReplyResult, Grid, Method,
    SolverOptions, ToleranceRecord, ValueFunction,
};
use crate::diffusion::DiffusionModel;
use crate::error::{Error, Result};
use crate::measures::ClosedSet;
use crate::payoffs::PayoffSpec;
use crate::strategies::MarkovStrategy;

/// Upper convex hull of points sorted by `x` (monotone chain).
pub fn upper_hull(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(points.len());
    for &p in points {
        while hull.len() >= 2 {
            let o = hull[hull.len() - 2];
            let a = hull[hull.len() - 1];
            let cross = (a.0 - o.0) * (p.1 - o.1) - (a.1 - o.1) * (p.0 - o.0);
            if cross >= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    hull
}

/// Linear interpolation along a hull; `x` must lie within its range.
pub(crate) fn hull_eval(hull: &[(f64, f64)], x: f64) -> f64 {
    let i = hull.partition_point(|p| p.0 < x);
    if i == 0 {
        return hull[0].1;
    }
    if i == hull.len() {
        return hull[hull.len() - 1].1;
    }
    let (a, b) = (hull[i - 1], hull[i]);
    if b.0 == x {
        return b.1;
    }
    a.1 + (b.1 - a.1) * (x - a.0) / (b.0 - a.0)
}

/// Envelope values on the grid and the vertices of the envelope as a piecewise-linear
/// function. Samples flagged in `forbid` (and sub-samples in cells touching them) are
/// left out of the majorized set.
fn envelope_values(
    grid: &Grid,
    fixed: &[Option<f64>],
    r_at: impl Fn(f64) -> f64,
    r_nodes: &[f64],
    forbid: &[bool],
    refine: usize,
) -> (Vec<f64>, Vec<(f64, f64)>) {
    let x = &grid.nodes;
    let n = x.len();
    let mut v: Vec<f64> = fixed.iter().map(|f| f.unwrap_or(f64::NAN)).collect();
    let anchors: Vec<usize> = (0..n).filter(|&i| fixed[i].is_some()).collect();
    let refine = refine.max(1);
    let mut pts = Vec::new();
    let mut knots: Vec<(f64, f64)> = Vec::new();
    let push = |knots: &mut Vec<(f64, f64)>, p: (f64, f64)| {
        if knots.last().is_none_or(|q| q.0 < p.0) {
            knots.push(p);
        }
    };
    for w in anchors.windows(2) {
        let (i0, i1) = (w[0], w[1]);
        if i1 == i0 + 1 {
            push(&mut knots, (x[i0], v[i0]));
            push(&mut knots, (x[i1], v[i1]));
            continue;
        }
        pts.clear();
        pts.push((x[i0], v[i0]));
        for k in i0..i1 {
            if k > i0 && !forbid[k] {
                pts.push((x[k], r_nodes[k]));
            }
            if forbid[k] || forbid[k + 1] {
                continue;
            }
            let h = x[k + 1] - x[k];
            for j in 1..refine {
                let t = x[k] + h * j as f64 / refine as f64;
                pts.push((t, r_at(t)));
            }
        }
        pts.push((x[i1], v[i1]));
        let hull = upper_hull(&pts);
        for k in i0 + 1..i1 {
            v[k] = hull_eval(&hull, x[k]);
        }
        for &p in &hull {
            push(&mut knots, p);
        }
    }
    (v, knots)
}

/// Envelope best reply against a pure opponent. Requires `b = 0` and `r = 0`.
pub fn concave_envelope_best_reply(
    model: &DiffusionModel,
    spec: &PayoffSpec,
    opp_stop: &ClosedSet,
    grid: &Grid,
    opts: &SolverOptions,
) -> Result<BestReplyResult> {
    if !model.is_driftless() || model.discount != 0.0 {
        return Err(Error::NotDriftless);
    }
    let space = model.state_space;
    let (fixed, r, g) = fixed_nodes(&space, spec, opp_stop, grid, opts)?;
    let r_at = |t: f64| spec.r(t);
    let solve =
        |forbid: &[bool]| envelope_values(grid, &fixed, r_at, &r, forbid, opts.envelope_refine);

    let opp = MarkovStrategy::pure(opp_stop.clone());
    let rows = setup(model, spec, &opp, grid, opts)?;
    let none = vec![false; grid.len()];
    let (values, knots) = solve(&none);
    let res = residuals(&rows, &values, &none);
    let value = ValueFunction {
        grid: grid.clone(),
        values,
        residuals: res,
        stop_reward: r.clone(),
        follow_reward: g.clone(),
        fixed: fixed.iter().map(Option::is_some).collect(),
        atom_residuals: Vec::new(),
    };

    let cav_g = upper_hull(
        &grid
            .nodes
            .iter()
            .copied()
            .zip(g.iter().copied())
            .collect::<Vec<_>>(),
    );
    let below = grid.nodes.iter().zip(&value.values).all(|(&x, &v)| {
        let c = hull_eval(&cav_g, x);
        v <= c + 1e-9 * (1.0 + c.abs())
    });

    let s_bar = super::extract_stopping_sets(&value, &space, opts);
    let s_under = if opts.probe_s_under {
        probe_components(&value, &s_bar, opts, |set| {
            let forbid = forbidden_near(grid, set);
            let mut probe = value.clone();
            probe.values = solve(&forbid).0;
            Ok(probe)
        })?
    } else {
        s_bar.clone()
    };
    Ok(BestReplyResult {
        method: Method::ConcaveEnvelope,
        tolerances: ToleranceRecord {
            tol_v: opts.tol_v,
            tol_set_factor: 10.0,
            iterations: 1,
            max_residual: value.max_residual(),
            h_max: grid.h_max(),
        },
        value,
        s_bar,
        s_under,
        below_cav_g: Some(below),
        envelope: Some(knots),
    })
}
