//! Acceptance checks. Prints one `PASS`/`FAIL` line per criterion and exits nonzero if
//! any criterion fails. Criterion numbers given as arguments select a subset:
//!
//! ```text
//! cargo test --release -p attrition-cli --test acceptance -- 3 7
//! ```

// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod common;

use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use attrition::best_reply::{
    concave_envelope_best_reply, solve_best_reply, sup_gap, Grid, SolverOptions,
};
use attrition::diffusion::{
    estimate_local_time_with, first_hit, simulate_path, LocalTimeMethod, SeedRecord,
};
use attrition::equilibrium::example::{edge_set, example_knots};
use attrition::equilibrium::{
    build_example_payoffs, no_pure_certificate, pure_best_reply_iteration, ExampleConfig, GridSpec,
    IterationOutcome, Profile,
};
use attrition::measures::{
    check_convergence, explosion_set, mollify, restrict_off_explosion, to_extended, Atom,
    DensityPiece, ExtendedMeasure, PiecewiseLinear,
};
use attrition::payoffs::PayoffSpec;
use attrition::strategies::{csf_along_path, multiplicativity_check};
use attrition::sum::mean_se;
use attrition::{
    ClosedSet, DiffusionModel, Interval, LocallyFiniteMeasure, MarkovStrategy, MeasureValue,
};
use attrition::{PiecewisePolynomial, Polynomial};
use common::{code, csv_rows, json, run, run_fixture, snapshot, stderr};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};
use tempfile::tempdir;

// Criterion 1
const ROOT_TOL: f64 = 1e-9;
const SYSTEM_TOL: f64 = 1e-6;
const EXAMPLE_GRID_N: usize = 4000;
const EXAMPLE_PROBES: [f64; 5] = [0.2, 0.35, 0.5, 0.65, 0.8];
const EXAMPLE_DEVIATIONS: usize = 20;
const N_SE: f64 = 3.0;
const BUDGET_CELLS: f64 = 5.0;
const EXAMPLE_SECONDS: f64 = 15.0 * 60.0;
/// Independent root of `G^1(x) = R^1(1/2)`, computed once and frozen.
const X_STAR: f64 = 0.268_839_476_149_100_64;
const X_STAR_TOL: f64 = 1e-12;

// Criterion 2
const ITERATION_LIMIT: usize = 6;
const CERTIFICATE_SECONDS: f64 = 5.0 * 60.0;

// Criterion 3
const LT_PATHS: usize = 100_000;
const LT_DT: f64 = 1e-4;
const LT_EPS: f64 = 2e-2;
const LT_REL_TOL: f64 = 0.02;

// Criterion 4
/// Floor for estimators that agree path by path and differ only in summation order.
const ROUNDOFF: f64 = 1e-12;
const PAYOFF_FIXTURES: [&str; 5] = [
    "payoff_mixed_equilibrium",
    "payoff_pure_pair",
    "payoff_density",
    "payoff_atoms_both",
    "payoff_never_vs_mixed",
];

// Criterion 5
const ROUND_TRIP_FIXTURES: usize = 50;
const CONVERGENCE_FIXTURES: usize = 10;
const CONVERGENCE_TOL: f64 = 1e-4;
const ESCAPE_THRESHOLD: f64 = 1e6;
const MOLLIFY_N: [usize; 6] = [2, 4, 8, 16, 32, 64];
/// Relative roundoff allowed on either side of `[0, cap]`.
const CAP_SLACK: f64 = 1e-12;

// Criterion 6
const CSF_PAIRS: usize = 1000;
/// Local-time tolerance of the oracle check, reused as the multiplicativity unit.
const LT_TOL: f64 = LT_REL_TOL;
const MULT_FACTOR: f64 = 5.0;

// Criterion 7
const BR_H: f64 = 2.5e-4;
const BR_GAP_TOL: f64 = 1e-3;
const HALVING_FACTOR: f64 = 1.5;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn main() -> ExitCode {
    let wanted: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    #[allow(clippy::type_complexity)]
    let criteria: [(usize, &str, fn() -> Outcome); 8] = [
        (1, "example equilibrium", criterion_1),
        (2, "no pure equilibrium", criterion_2),
        (3, "local-time oracle", criterion_3),
        (4, "estimator equivalence", criterion_4),
        (5, "representation and topology", criterion_5),
        (6, "csf properties", criterion_6),
        (7, "two-method best reply", criterion_7),
        (8, "determinism", criterion_8),
    ];
    let mut failed = 0;
    for (n, name, f) in criteria {
        if !wanted.is_empty() && !wanted.contains(&n) {
            continue;
        }
        let t = Instant::now();
        let o = f();
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!(
            "criterion {n} {tag} {name} ({:.1}s): {}",
            t.elapsed().as_secs_f64(),
            o.detail
        );
        failed += usize::from(!o.pass);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criterion(s) failed");
        ExitCode::FAILURE
    }
}

fn f(v: &serde_json::Value) -> f64 {
    v.as_f64().unwrap_or(f64::NAN)
}

fn criterion_1() -> Outcome {
    let d = tempdir().unwrap();
    let t = Instant::now();
    let o = run(&["example"], d.path());
    let secs = t.elapsed().as_secs_f64();
    if code(&o) != 0 {
        return outcome(false, format!("exit {}: {}", code(&o), stderr(&o).trim()));
    }
    let sol = json(d.path(), "solution.json");
    let rep = json(d.path(), "report.json");
    let mut bad = Vec::new();

    let xs = f(&sol["x_star"]);
    if !(xs > 0.25 && xs < 1.0 / 3.0) || (xs - X_STAR).abs() > X_STAR_TOL {
        bad.push(format!("x* = {xs}"));
    }
    let root = f(&sol["root_residual"]);
    if !(root <= ROOT_TOL) {
        bad.push(format!("root residual {root}"));
    }
    let alpha = f(&sol["alpha"]);
    if !(alpha > 0.0) {
        bad.push(format!("alpha = {alpha}"));
    }
    let res = &sol["w2_residuals"];
    let mut worst_sys: f64 = 0.0;
    for k in ["complementarity", "pde", "atom_interface"] {
        let v = f(&res[k]);
        worst_sys = worst_sys.max(v);
        if !(v <= SYSTEM_TOL) {
            bad.push(format!("{k} {v}"));
        }
    }
    let nodes = sol["w2"]["grid"].as_array().map_or(0, |v| v.len());
    if nodes < EXAMPLE_GRID_N {
        bad.push(format!("{nodes} grid nodes"));
    }

    let budget = BUDGET_CELLS / (EXAMPLE_GRID_N - 1) as f64;
    let gaps = rep["probe_gaps"].as_array().cloned().unwrap_or_default();
    let mut worst_ratio: f64 = 0.0;
    for x0 in EXAMPLE_PROBES {
        for p in [1, 2] {
            let g = gaps.iter().find(|g| g["player"] == p && f(&g["x0"]) == x0);
            let Some(g) = g else {
                bad.push(format!("no probe for player {p} at {x0}"));
                continue;
            };
            let gap = (f(&g["mc_mean"]) - f(&g["value"])).abs();
            let allowed = N_SE * f(&g["mc_se"]) + budget;
            worst_ratio = worst_ratio.max(gap / allowed);
            if !(gap <= allowed) {
                bad.push(format!("player {p} at {x0}: gap {gap} > {allowed}"));
            }
        }
    }
    let devs = rep["deviations"].as_array().cloned().unwrap_or_default();
    let mut worst_gain = f64::NEG_INFINITY;
    for p in [1, 2] {
        let n = devs.iter().filter(|d| d["player"] == p).count();
        if n != EXAMPLE_DEVIATIONS * EXAMPLE_PROBES.len() {
            bad.push(format!("player {p}: {n} deviation rows"));
        }
    }
    for d in &devs {
        let gain = f(&d["gain"]);
        let allowed = N_SE * f(&d["se"]) + budget;
        worst_gain = worst_gain.max(gain - allowed);
        if !(gain <= allowed) {
            bad.push(format!("deviation {d}"));
        }
    }
    if rep["verdict"] != "pass" {
        bad.push(format!("verdict {}", rep["verdict"]));
    }
    if secs > EXAMPLE_SECONDS {
        bad.push(format!("runtime {secs:.0}s"));
    }
    outcome(
        bad.is_empty(),
        format!(
            "x* = {xs}, alpha = {alpha}, system residual {worst_sys:.2e}, worst probe gap {worst_ratio:.2} of allowance, \
             worst deviation margin {worst_gain:.2e}, {} deviation rows, {nodes} grid nodes, {secs:.0}s on {} thread(s){}",
            devs.len(),
            rayon::current_num_threads(),
            if bad.is_empty() { String::new() } else { format!("; {}", bad.join("; ")) }
        ),
    )
}

fn criterion_2() -> Outcome {
    let t = Instant::now();
    let specs = build_example_payoffs().unwrap().specs;
    let model = DiffusionModel::logistic_martingale();
    let cfg = ExampleConfig::default();
    let mut grid = GridSpec::new(0.0, 1.0, cfg.grid_n);
    grid.extra = example_knots();
    let start = Profile::new(MarkovStrategy::never(), MarkovStrategy::never());
    let trace = match pure_best_reply_iteration(
        &start,
        &model,
        &specs,
        &grid,
        &cfg.solver,
        ITERATION_LIMIT,
    ) {
        Ok(t) => t,
        Err(e) => return outcome(false, format!("iteration: {e}")),
    };
    let cert = no_pure_certificate(&trace, ITERATION_LIMIT);
    let p1 = &specs[0];
    let (a, b, c) = (p1.g(1.0 / 3.0), p1.r(0.5), p1.g(0.25));
    let ordered = a < b && b < c;
    let cycle = matches!(trace.outcome, IterationOutcome::Cycle { update, .. } if update <= ITERATION_LIMIT);
    let secs = t.elapsed().as_secs_f64();
    let failed: Vec<&str> = cert
        .iter()
        .filter(|c| !c.pass)
        .map(|c| c.name.as_str())
        .collect();
    outcome(
        failed.is_empty() && ordered && cycle && secs <= CERTIFICATE_SECONDS,
        format!(
            "{:?}, {} set checks ({} failed{}), G1(1/3) = {a} < R1(1/2) = {b} < G1(1/4) = {c}: {ordered}, {secs:.1}s",
            trace.outcome,
            cert.len(),
            failed.len(),
            if failed.is_empty() { String::new() } else { format!(": {}", failed.join(", ")) },
        ),
    )
}

fn criterion_3() -> Outcome {
    let m = DiffusionModel::brownian();
    let rows: Vec<(f64, f64)> = (0..LT_PATHS)
        .into_par_iter()
        .map(|i| {
            let p = simulate_path(&m, 0.0, LT_DT, 1.0, SeedRecord::new(3, i as u64)).unwrap();
            let lt =
                estimate_local_time_with(&p, &m, &[0.0], LT_EPS, LocalTimeMethod::Kernel).unwrap();
            let l = lt.at(0, p.len() - 1);
            (l, (-l).exp())
        })
        .collect();
    let (l, l_se) = mean_se(&rows.iter().map(|r| r.0).collect::<Vec<_>>());
    let (e, e_se) = mean_se(&rows.iter().map(|r| r.1).collect::<Vec<_>>());
    let want_l = (2.0 / std::f64::consts::PI).sqrt();
    let want_e = 2.0 * 0.5f64.exp() * Normal::new(0.0, 1.0).unwrap().cdf(-1.0);
    let (rl, re) = ((l - want_l).abs() / want_l, (e - want_e).abs() / want_e);
    outcome(
        rl <= LT_REL_TOL && re <= LT_REL_TOL,
        format!(
            "E L = {l:.5} (se {l_se:.1e}) vs {want_l:.5}, rel {rl:.2e}; E exp(-L) = {e:.5} (se {e_se:.1e}) vs {want_e:.5}, rel {re:.2e}; tol {LT_REL_TOL}"
        ),
    )
}

fn criterion_4() -> Outcome {
    let mut rows = 0;
    let mut worst: f64 = 0.0;
    let mut bad = Vec::new();
    for name in PAYOFF_FIXTURES {
        let d = tempdir().unwrap();
        let o = run_fixture("payoff", name, &[], d.path());
        if code(&o) != 0 {
            bad.push(format!("{name}: exit {}", code(&o)));
            continue;
        }
        for r in json(d.path(), "payoff.json").as_array().unwrap() {
            rows += 1;
            let diff = f(&r["sampled"]["mean"]) - f(&r["stieltjes"]["mean"]);
            let allowed = N_SE * f(&r["difference_se"])
                + ROUNDOFF * f(&r["stieltjes"]["mean"]).abs().max(1.0);
            worst = worst.max(diff.abs() / allowed);
            if !(diff.abs() <= allowed) {
                bad.push(format!(
                    "{name} player {} x0 {}: {diff} > {allowed}",
                    r["player"], r["x0"]
                ));
            }
        }
    }
    outcome(
        bad.is_empty() && rows > 0,
        format!(
            "{} fixtures, {rows} rows, worst |diff| at {worst:.2} of 3 combined SE{}",
            PAYOFF_FIXTURES.len(),
            if bad.is_empty() {
                String::new()
            } else {
                format!("; {}", bad.join("; "))
            }
        ),
    )
}

/// Atoms and linear density pieces left of 4 and an optional explosion interval in
/// `[5, 7]`, so the carrier and the explosion set never meet.
fn random_measure(rng: &mut ChaCha8Rng) -> (LocallyFiniteMeasure, ClosedSet) {
    let mut atoms: Vec<Atom> = Vec::new();
    for _ in 0..rng.random_range(0..4) {
        let x: f64 = rng.random_range(-3.0..3.5);
        if atoms.iter().all(|a| (a.x - x).abs() > 1e-6) {
            atoms.push(Atom {
                x,
                mass: rng.random_range(0.01..2.0),
            });
        }
    }
    let densities = (0..rng.random_range(0..4))
        .map(|k| {
            let lo = -3.0 + k as f64 + 0.5 * rng.random::<f64>();
            let hi = lo + 0.05 + 0.45 * rng.random::<f64>();
            let (p, q): (f64, f64) = (rng.random_range(0.0..3.0), rng.random_range(0.0..3.0));
            let slope = (q - p) / (hi - lo);
            DensityPiece::new(lo, hi, Polynomial::new(vec![p - slope * lo, slope]))
        })
        .collect();
    let mu = LocallyFiniteMeasure::new(atoms, densities).unwrap();
    let s = match rng.random_range(0..3) {
        0 => ClosedSet::empty(),
        1 => ClosedSet::point(rng.random_range(5.0..7.0)),
        _ => {
            let a = rng.random_range(5.0..6.0);
            ClosedSet::interval(a, a + rng.random_range(0.0..1.0)).unwrap()
        }
    };
    (mu, s)
}

fn criterion_5() -> Outcome {
    let line = Interval::real_line();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut notes = Vec::new();

    let mut round_trip = 0;
    let mut ends = 0;
    let mut cap_violations = 0;
    let mut negative = 0;
    for _ in 0..ROUND_TRIP_FIXTURES {
        let (mu, s) = random_measure(&mut rng);
        let m = to_extended(&mu, &s).unwrap();
        let back = to_extended(&restrict_off_explosion(&m), &explosion_set(&m)).unwrap();
        if restrict_off_explosion(&m) == mu && explosion_set(&m) == s && back == m {
            round_trip += 1;
        }
        if mollify(&m, 0.0, &line).unwrap() == m
            && mollify(&m, 1.0, &line).unwrap() == ExtendedMeasure::zero()
        {
            ends += 1;
        }
        for eps in [0.01, 0.1, 0.3, 0.5, 0.9] {
            let h = mollify(&m, eps, &line).unwrap();
            let cap = (1.0 - eps) / (eps * eps);
            for d in &h.finite_part.densities {
                let [lo, hi] = d.interval;
                for k in 0..=32 {
                    let v = d.chart_value(lo + (hi - lo) * k as f64 / 32.0);
                    cap_violations += usize::from(v > cap + CAP_SLACK * cap);
                    negative += usize::from(v < -CAP_SLACK * cap);
                }
            }
        }
    }
    let part_a = round_trip == ROUND_TRIP_FIXTURES
        && ends == ROUND_TRIP_FIXTURES
        && cap_violations == 0
        && negative == 0;
    notes.push(format!(
        "round trip {round_trip}/{ROUND_TRIP_FIXTURES}, H(m,0) = m and H(m,1) = 0 {ends}/{ROUND_TRIP_FIXTURES}, cap violations {cap_violations}, negative densities {negative}"
    ));

    let mut converged = 0;
    let mut escaped = 0;
    let mut with_explosion = 0;
    let mut worst_residual: f64 = 0.0;
    let mut least_escape = f64::INFINITY;
    for _ in 0..CONVERGENCE_FIXTURES {
        let (mu, s) = random_measure(&mut rng);
        let mu = if mu.atoms.is_empty() && mu.densities.is_empty() {
            LocallyFiniteMeasure::dirac(0.0, 1.0).unwrap()
        } else {
            mu
        };
        let m = to_extended(&mu, &s).unwrap();
        let mut probes: Vec<PiecewiseLinear> = mu
            .atoms
            .iter()
            .map(|a| PiecewiseLinear::hat(a.x, 0.25))
            .collect();
        probes.extend(
            mu.densities
                .iter()
                .map(|d| PiecewiseLinear::hat(0.5 * (d.interval[0] + d.interval[1]), 0.5)),
        );
        let explosion: Vec<(f64, f64)> = s
            .components()
            .iter()
            .map(|c| (c[0] - 0.1, c[1] + 0.1))
            .collect();
        let seq: Vec<ExtendedMeasure> = MOLLIFY_N
            .iter()
            .map(|&n| mollify(&m, 1.0 / n as f64, &line).unwrap())
            .collect();
        let rep = check_convergence(&seq, &m, &probes, &explosion, ESCAPE_THRESHOLD).unwrap();
        let last = rep.final_max_residual();
        worst_residual = worst_residual.max(last);
        if rep.residuals_monotone(0.0) && last <= CONVERGENCE_TOL {
            converged += 1;
        }
        if !explosion.is_empty() {
            with_explosion += 1;
            for t in &rep.explosion_masses {
                if let Some(MeasureValue::Finite(v)) = t.last() {
                    least_escape = least_escape.min(*v);
                }
            }
            if rep.all_escaped() && rep.monotone_escape.iter().all(|&b| b) {
                escaped += 1;
            }
        }
    }
    notes.push(format!(
        "converged below {CONVERGENCE_TOL:.0e} by n = 64: {converged}/{CONVERGENCE_FIXTURES} (worst final residual {worst_residual:.2e}); \
         explosion probes above {ESCAPE_THRESHOLD:.0e}: {escaped}/{with_explosion} (smallest final mass {least_escape:.3e})"
    ));
    let part_b = converged == CONVERGENCE_FIXTURES && escaped == with_explosion;
    outcome(part_a && part_b, notes.join("; "))
}

fn criterion_6() -> Outcome {
    let m = DiffusionModel::logistic_martingale();
    let levels: Vec<f64> = (1..40).map(|k| k as f64 / 40.0).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut property_fail = 0;
    let mut pure_fail = 0;
    let mut worst_mult: f64 = 0.0;
    for i in 0..CSF_PAIRS {
        let set = if rng.random_bool(0.7) {
            let a = rng.random_range(0.02..0.95);
            ClosedSet::interval(a, (a + rng.random_range(0.0..0.1)).min(0.99)).unwrap()
        } else {
            ClosedSet::empty()
        };
        let mut atoms = Vec::new();
        for _ in 0..rng.random_range(0..3) {
            let y = levels[rng.random_range(0..levels.len())];
            if !set.contains(y) && atoms.iter().all(|a: &Atom| a.x != y) {
                atoms.push(Atom {
                    x: y,
                    mass: rng.random_range(0.0..5.0),
                });
            }
        }
        let mut densities = Vec::new();
        if rng.random_bool(0.5) {
            let lo = rng.random_range(0.05..0.8);
            let piece = DensityPiece::constant(lo, lo + 0.1, rng.random_range(0.0..5.0));
            if !set.meets_closed(lo, lo + 0.1) {
                densities.push(piece);
            }
        }
        let pure = atoms.is_empty() && densities.is_empty();
        let s = MarkovStrategy::new(
            LocallyFiniteMeasure::new(atoms, densities).unwrap(),
            set.clone(),
        )
        .unwrap();
        let x0 = rng.random_range(0.05..0.95);
        let method = if rng.random_bool(0.5) {
            LocalTimeMethod::Tanaka
        } else {
            LocalTimeMethod::Kernel
        };
        let p = simulate_path(&m, x0, 1e-3, 1.0, SeedRecord::new(6, i as u64)).unwrap();
        let lt = estimate_local_time_with(&p, &m, &levels, 0.01, method).unwrap();
        let c = csf_along_path(&s, &p, &lt).unwrap();
        let ok = c.lambda.iter().all(|&l| (0.0..=1.0).contains(&l))
            && c.lambda.windows(2).all(|w| w[1] <= w[0])
            && c.clamp_violations == 0
            && c.hit
                .is_none_or(|h| c.lambda[h.step..].iter().all(|&l| l == 0.0));
        property_fail += usize::from(!ok);
        if pure {
            let stop = first_hit(&p, &set).map_or(p.len(), |h| h.step);
            let exact = c
                .lambda
                .iter()
                .enumerate()
                .all(|(k, &l)| l == if k < stop { 1.0 } else { 0.0 });
            pure_fail += usize::from(!exact);
        }
        let k = rng.random_range(0..p.len() - 1);
        let sl = rng.random_range(0..p.len() - k);
        worst_mult = worst_mult.max(multiplicativity_check(&s, &m, &p, &lt, k, sl).unwrap());
    }
    let mult_tol = MULT_FACTOR * LT_TOL;
    outcome(
        property_fail == 0 && pure_fail == 0 && worst_mult <= mult_tol,
        format!(
            "{CSF_PAIRS} pairs: {property_fail} property failures, {pure_fail} inexact pure csf, worst multiplicativity residual {worst_mult:.2e} (tol {mult_tol})"
        ),
    )
}

fn poly_spec(r: Vec<f64>, lift: f64, lo: f64, hi: f64) -> PayoffSpec {
    let mut g = r.clone();
    g[0] += lift;
    PayoffSpec::new(
        PiecewisePolynomial::single(Polynomial::new(r), lo, hi),
        PiecewisePolynomial::single(Polynomial::new(g), lo, hi),
    )
}

fn criterion_7() -> Outcome {
    let ex = build_example_payoffs().unwrap().specs;
    let logistic = DiffusionModel::logistic_martingale();
    let brownian = DiffusionModel::brownian();
    // name, model, grid range, payoffs, opponent stop set
    #[allow(clippy::type_complexity)]
    let fixtures: Vec<(&str, &DiffusionModel, (f64, f64), PayoffSpec, ClosedSet)> = vec![
        (
            "leader_vs_edges",
            &logistic,
            (0.0, 1.0),
            ex[0].clone(),
            edge_set(1.0 / 3.0),
        ),
        (
            "follower_vs_never",
            &logistic,
            (0.0, 1.0),
            ex[1].clone(),
            ClosedSet::empty(),
        ),
        (
            "wavy_vs_point",
            &logistic,
            (0.0, 1.0),
            poly_spec(vec![0.0, 1.0, -6.0, 10.0, -5.0], 0.3, 0.0, 1.0),
            ClosedSet::point(0.5),
        ),
        (
            // x (1 - x) (1 + 3x - 4x^2)
            "skewed_vs_interval",
            &logistic,
            (0.0, 1.0),
            poly_spec(vec![0.0, 1.0, 2.0, -7.0, 4.0], 0.2, 0.0, 1.0),
            ClosedSet::interval(0.6, 0.65).unwrap(),
        ),
        (
            // (1 - x^2)(1/2 + x^2) on [-1, 1], stop reward closure at both grid ends
            "brownian_bump_vs_interval",
            &brownian,
            (-1.0, 1.0),
            poly_spec(vec![0.5, 0.0, 0.5, 0.0, -1.0], 0.5, -1.0, 1.0),
            ClosedSet::interval(0.2, 0.3).unwrap(),
        ),
    ];
    let opts = SolverOptions {
        probe_s_under: false,
        ..Default::default()
    };
    let mut bad = Vec::new();
    let mut lines = Vec::new();
    for (name, model, (lo, hi), spec, stop) in &fixtures {
        let opp = MarkovStrategy::pure(stop.clone());
        let cells = ((hi - lo) / BR_H).round() as usize;
        let mut gaps = Vec::new();
        let mut h0 = 0.0;
        for n in [cells + 1, 2 * cells + 1] {
            let g = Grid::for_opponent(&model.state_space, *lo, *hi, n, &opp, &example_knots())
                .unwrap();
            if gaps.is_empty() {
                h0 = g.h_max();
            }
            let a = solve_best_reply(model, spec, &opp, &g, &opts);
            let b = concave_envelope_best_reply(model, spec, stop, &g, &opts);
            match (a, b) {
                (Ok(a), Ok(b)) => gaps.push(sup_gap(&a, &b)),
                (a, b) => {
                    bad.push(format!("{name}: {:?} {:?}", a.err(), b.err()));
                    break;
                }
            }
        }
        if gaps.len() < 2 {
            continue;
        }
        let ratio = gaps[1] / gaps[0];
        lines.push(format!(
            "{name} {:.2e} -> {:.2e} (x{ratio:.3})",
            gaps[0], gaps[1]
        ));
        if h0 > BR_H * (1.0 + 1e-12) {
            bad.push(format!("{name}: h = {h0}"));
        }
        if !(gaps[0] <= BR_GAP_TOL) || !(gaps[1] <= HALVING_FACTOR * gaps[0] / 2.0) {
            bad.push(format!("{name}: gaps {gaps:?}"));
        }
    }
    outcome(
        bad.is_empty(),
        format!(
            "sup gap at h = {BR_H} (tol {BR_GAP_TOL}) and h/2 (at most {HALVING_FACTOR} x half): {}{}",
            lines.join(", "),
            if bad.is_empty() { String::new() } else { format!("; {}", bad.join("; ")) }
        ),
    )
}

type Invocation<'a> = (&'a str, Option<&'a str>, Vec<&'a str>);

fn invoke(inv: &Invocation, workers: &str, out: &Path) -> i32 {
    let (cmd, fixture, extra) = inv;
    let mut args: Vec<&str> = extra.clone();
    args.extend(["--workers", workers]);
    let o = match fixture {
        Some(f) => run_fixture(cmd, f, &args, out),
        None => {
            let mut a = vec![*cmd];
            a.extend(args);
            run(&a, out)
        }
    };
    code(&o)
}

fn criterion_8() -> Outcome {
    let invocations: Vec<Invocation> = vec![
        ("simulate", Some("simulate_example"), vec![]),
        ("payoff", Some("payoff_mixed_equilibrium"), vec![]),
        ("payoff", Some("payoff_density"), vec!["--paths", "5000"]),
        ("best-reply", Some("best_reply_example"), vec![]),
        ("verify", Some("best_reply_example"), vec![]),
        ("verify", Some("verify_halved_atom"), vec![]),
        ("mollify", Some("mollify_dirac"), vec![]),
        ("mollify", None, vec!["--atom", "0.25", "--eps", "0.1"]),
        (
            "example",
            None,
            vec!["--paths", "4000", "--dt", "0.001", "--grid-n", "1001"],
        ),
    ];
    let mut bad = Vec::new();
    let mut files = 0;
    for inv in &invocations {
        let dirs = [tempdir().unwrap(), tempdir().unwrap(), tempdir().unwrap()];
        let codes: Vec<i32> = ["1", "1", "8"]
            .iter()
            .zip(&dirs)
            .map(|(w, d)| invoke(inv, w, d.path()))
            .collect();
        let snaps: Vec<_> = dirs.iter().map(|d| snapshot(d.path())).collect();
        files += snaps[0].len();
        let label = format!("{} {}", inv.0, inv.1.unwrap_or(""));
        if codes.iter().any(|&c| c != codes[0]) {
            bad.push(format!("{label}: exit codes {codes:?}"));
        }
        if snaps[0].is_empty() {
            bad.push(format!("{label}: no output"));
        }
        if snaps[0] != snaps[1] {
            bad.push(format!("{label}: repeat differs"));
        }
        if snaps[0] != snaps[2] {
            bad.push(format!("{label}: 8 workers differ"));
        }
    }
    // Sanity: the simulate output is not trivially constant.
    let d = tempdir().unwrap();
    run_fixture("simulate", "simulate_example", &[], d.path());
    let (_, rows) = csv_rows(d.path(), "summary.csv");
    if rows.windows(2).all(|w| w[0][1] == w[1][1]) {
        bad.push("simulate summary is constant".into());
    }
    outcome(
        bad.is_empty(),
        format!(
            "{} invocations, {files} files compared over runs (1, 1, 8 workers){}",
            invocations.len(),
            if bad.is_empty() {
                String::new()
            } else {
                format!("; {}", bad.join("; "))
            }
        ),
    )
}
