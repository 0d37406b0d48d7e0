use std::fmt;
use std::fs;
use std::path::Path;

use attrition::best_reply::{
    concave_envelope_best_reply, extract_stopping_sets, pbr_check, solve_best_reply,
    BestReplyResult, Method, PbrReport, PbrTolerances, SolverOptions, ToleranceRecord,
    ValueFunction,
};
use attrition::diffusion::{estimate_local_time_with, simulate_path, SeedRecord};
use attrition::equilibrium::{run_example, verify_mpe, ExampleConfig, Verdict, VerifyConfig};
use attrition::io::{default_mc, BestReplyMethod, MollifySpec, Scenario};
use attrition::measures::{mollify as mollify_measure, ClosedSet};
use attrition::payoffs::{
    paired_difference, run_matchups, summarize, with_pool, Matchup, McConfig,
};
use attrition::{DiffusionModel, Error, Interval};
use rayon::prelude::*;
use serde::Serialize;

use crate::output::{ensure_dir, num, write_json, Table};
use crate::Common;

#[derive(Debug)]
pub enum CliError {
    Lib(Error),
    Input(String),
    Numerical(String),
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Input(format!("{}: {e}", path.display()))
    }

    pub fn csv(path: &Path, e: csv::Error) -> Self {
        CliError::Input(format!("{}: {e}", path.display()))
    }

    /// 2 for bad input, 3 for numerical failures.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Lib(e) => match e {
                Error::BadCoefficient { .. }
                | Error::NoConvergence { .. }
                | Error::NoBracket { .. }
                | Error::NonFiniteReward { .. }
                | Error::Construction(_)
                | Error::IterationLimit(_) => 3,
                _ => 2,
            },
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Lib(e) => write!(f, "{e}"),
            CliError::Input(s) | CliError::Numerical(s) => f.write_str(s),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Lib(e)
    }
}

pub enum Status {
    Ok,
    Failed(String),
}

type Res = Result<Status, CliError>;

fn load(c: &Common) -> Result<Option<Scenario>, CliError> {
    let Some(path) = &c.scenario else {
        return Ok(None);
    };
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    Ok(Some(Scenario::from_json(&text)?))
}

fn require(c: &Common) -> Result<Scenario, CliError> {
    load(c)?.ok_or_else(|| CliError::Input("this command needs --scenario".into()))
}

fn apply_mc(mc: &mut McConfig, c: &Common) -> Result<(), CliError> {
    if let Some(s) = c.seed {
        mc.seed = s;
    }
    if c.workers.is_some() {
        mc.workers = c.workers;
    }
    if let Some(dt) = c.dt {
        mc.dt = dt;
    }
    if let Some(h) = c.horizon {
        mc.horizon = h;
    }
    if let Some(n) = c.paths {
        mc.n_paths = n;
    }
    mc.validate()?;
    Ok(())
}

fn scenario_mc(s: &Scenario, c: &Common) -> Result<McConfig, CliError> {
    let mut mc = s.mc.clone().unwrap_or_else(|| default_mc(0));
    apply_mc(&mut mc, c)?;
    Ok(mc)
}

fn apply_solver(opts: &mut SolverOptions, c: &Common) {
    if let Some(t) = c.tol {
        opts.tol_v = t;
    }
}

pub fn simulate(c: &Common) -> Res {
    let s = require(c)?;
    let spec = s
        .simulate
        .clone()
        .ok_or_else(|| CliError::Input("scenario has no simulate section".into()))?;
    let model = s.model()?;
    let mc = scenario_mc(&s, c)?;

    struct PathOut {
        summary: Vec<String>,
        rows: Vec<Vec<String>>,
    }
    let one = |i: usize| -> Result<PathOut, Error> {
        let path = simulate_path(
            &model,
            spec.x0,
            mc.dt,
            mc.horizon,
            SeedRecord::new(mc.seed, i as u64),
        )?;
        let lt = if spec.levels.is_empty() {
            None
        } else {
            Some(estimate_local_time_with(
                &path,
                &model,
                &spec.levels,
                mc.bandwidth,
                mc.method,
            )?)
        };
        let last = path.len() - 1;
        let mut summary = vec![
            i.to_string(),
            num(path.states[last]),
            path.clamped.to_string(),
        ];
        if let Some(f) = &lt {
            summary.extend((0..spec.levels.len()).map(|l| num(f.at(l, last))));
        }
        let mut rows = Vec::new();
        if i < spec.record_paths {
            for k in (0..=last).step_by(spec.stride) {
                let mut r = vec![
                    i.to_string(),
                    k.to_string(),
                    num(path.time(k)),
                    num(path.states[k]),
                ];
                if let Some(f) = &lt {
                    r.extend((0..spec.levels.len()).map(|l| num(f.at(l, k))));
                }
                rows.push(r);
            }
        }
        Ok(PathOut { summary, rows })
    };
    let outs: Vec<Result<PathOut, Error>> = with_pool(mc.workers, || {
        (0..mc.n_paths).into_par_iter().map(one).collect()
    })?;

    let level_cols: Vec<String> = spec.levels.iter().map(|y| format!("L[{y}]")).collect();
    let mut paths = Table::new(
        ["path", "k", "t", "x"]
            .into_iter()
            .map(String::from)
            .chain(level_cols.clone()),
    );
    let mut summary = Table::new(
        ["path", "x_T", "clamped"]
            .into_iter()
            .map(String::from)
            .chain(level_cols),
    );
    for o in outs {
        let o = o?;
        summary.push(o.summary);
        for r in o.rows {
            paths.push(r);
        }
    }
    ensure_dir(&c.out)?;
    paths.write(&c.out, "paths.csv")?;
    summary.write(&c.out, "summary.csv")?;
    Ok(Status::Ok)
}

#[derive(Serialize)]
struct PayoffRecord {
    scenario: String,
    player: usize,
    x0: f64,
    stieltjes: attrition::payoffs::PayoffEstimate,
    sampled: attrition::payoffs::PayoffEstimate,
    difference: f64,
    difference_se: f64,
    estimators_agree: bool,
}

/// Summation-order noise between two estimators that agree path by path.
pub const ROUNDOFF: f64 = 1e-12;

pub fn payoff(c: &Common) -> Res {
    let s = require(c)?;
    let model = s.model()?;
    let specs = s.payoff_specs()?;
    let profile = s.profile()?;
    let mc = scenario_mc(&s, c)?;
    if s.x0.is_empty() {
        return Err(CliError::Input("payoff needs at least one x0".into()));
    }
    let strategies = [profile.strat_1.clone(), profile.strat_2.clone()];
    let matchups: Vec<Matchup> = s
        .players
        .iter()
        .map(|&p| Matchup {
            own: p - 1,
            other: 2 - p,
            spec: &specs[p - 1],
        })
        .collect();
    let mut table = Table::new([
        "scenario",
        "player",
        "x0",
        "stieltjes_mean",
        "stieltjes_se",
        "sampled_mean",
        "sampled_se",
        "difference",
        "difference_se",
        "tail_surviving",
        "tail_reward",
        "tail_exceeded",
    ]);
    let mut records = Vec::new();
    for &x0 in &s.x0 {
        for &p in &s.players {
            specs[p - 1].check_ordering([x0])?;
        }
        let run = run_matchups(&model, x0, &strategies, &matchups, &mc)?;
        let est = summarize(&run, &mc);
        for (j, &p) in s.players.iter().enumerate() {
            let e = &est[j];
            let (d, dse) = paired_difference(&run.stieltjes[j], &run.sampled[j]);
            table.push(vec![
                s.id.clone(),
                p.to_string(),
                num(x0),
                num(e.stieltjes.mean),
                num(e.stieltjes.se),
                num(e.sampled.mean),
                num(e.sampled.se),
                num(d),
                num(dse),
                num(e.stieltjes.tail.surviving),
                num(e.stieltjes.tail.discounted_reward),
                e.stieltjes.tail_exceeded.to_string(),
            ]);
            records.push(PayoffRecord {
                scenario: s.id.clone(),
                player: p,
                x0,
                stieltjes: e.stieltjes.clone(),
                sampled: e.sampled.clone(),
                difference: d,
                difference_se: dse,
                estimators_agree: d.abs() <= 3.0 * dse + ROUNDOFF * e.stieltjes.mean.abs().max(1.0),
            });
        }
    }
    ensure_dir(&c.out)?;
    table.write(&c.out, "payoff.csv")?;
    write_json(&c.out, "payoff.json", &records)?;
    Ok(Status::Ok)
}

fn value_table(v: &ValueFunction, s_bar: &ClosedSet) -> Table {
    let mut t = Table::new(["x", "v", "R", "G", "residual", "in_S_bar"]);
    for (i, &x) in v.grid.nodes.iter().enumerate() {
        t.push(vec![
            num(x),
            num(v.values[i]),
            num(v.stop_reward[i]),
            num(v.follow_reward[i]),
            num(v.residuals[i]),
            u8::from(s_bar.contains(x)).to_string(),
        ]);
    }
    t
}

#[derive(Serialize)]
struct BestReplySummary {
    player: usize,
    method: Method,
    s_bar: ClosedSet,
    s_under: ClosedSet,
    tolerances: ToleranceRecord,
    #[serde(skip_serializing_if = "Option::is_none")]
    below_cav_g: Option<bool>,
    max_atom_residual: f64,
    /// Characterization check of the player's own scenario strategy.
    own_strategy: PbrReport,
}

pub fn best_reply(c: &Common) -> Res {
    let s = require(c)?;
    let model = s.model()?;
    let space = model.state_space;
    let specs = s.payoff_specs()?;
    let profile = s.profile()?;
    let mut grid = s.grid()?;
    if let Some(n) = c.grid_n {
        grid.n = n;
    }
    let mut opts = s.solver.clone();
    apply_solver(&mut opts, c);
    ensure_dir(&c.out)?;
    for &p in &s.players {
        let (own, opp) = profile.pair(p - 1);
        let spec = &specs[p - 1];
        let g = grid.build(&space, opp, own)?;
        let res: BestReplyResult = match s.method {
            BestReplyMethod::PolicyIteration => solve_best_reply(&model, spec, opp, &g, &opts)?,
            BestReplyMethod::ConcaveEnvelope => {
                if !opp.is_pure() {
                    return Err(CliError::Input(
                        "the envelope method needs a pure opponent".into(),
                    ));
                }
                concave_envelope_best_reply(&model, spec, &opp.stop_set, &g, &opts)?
            }
        };
        let pbr = pbr_check(
            own,
            &res,
            opp,
            spec,
            &space,
            &PbrTolerances::for_result(&res),
        );
        value_table(&res.value, &res.s_bar).write(&c.out, &format!("value_{p}.csv"))?;
        write_json(
            &c.out,
            &format!("best_reply_{p}.json"),
            &BestReplySummary {
                player: p,
                method: res.method,
                s_bar: res.s_bar.clone(),
                s_under: res.s_under.clone(),
                tolerances: res.tolerances.clone(),
                below_cav_g: res.below_cav_g,
                max_atom_residual: res.value.max_atom_residual(),
                own_strategy: pbr,
            },
        )?;
    }
    Ok(Status::Ok)
}

pub fn verify(c: &Common) -> Res {
    let s = require(c)?;
    let model = s.model()?;
    let specs = s.payoff_specs()?;
    let profile = s.profile()?;
    let mut grid = s.grid()?;
    if let Some(n) = c.grid_n {
        grid.n = n;
    }
    let mut cfg = VerifyConfig::new(grid);
    cfg.solver = s.solver.clone();
    apply_solver(&mut cfg.solver, c);
    if let Some(mut mc) = s.mc.clone() {
        apply_mc(&mut mc, c)?;
        cfg.mc = Some(mc);
    }
    if let Some(v) = &s.verify {
        cfg.probes = v.probes.clone();
        cfg.n_se = v.n_se;
        cfg.budget = v.budget;
        cfg.deviations = v.deviations.clone();
    }
    let report = verify_mpe(&profile, &model, &specs, &cfg);
    ensure_dir(&c.out)?;
    write_json(&c.out, "report.json", &report)?;
    match report.verdict {
        Verdict::Pass => Ok(Status::Ok),
        v => Ok(Status::Failed(format!(
            "{v:?}: {}",
            report.failures.join("; ")
        ))),
    }
}

#[derive(Serialize)]
struct ExampleChecks<'a> {
    pass: bool,
    checks: &'a [attrition::equilibrium::PropertyCheck],
    certificate: &'a [attrition::equilibrium::PropertyCheck],
    verdict: Verdict,
    failures: &'a [String],
}

pub fn example(c: &Common) -> Res {
    let mut cfg = match load(c)? {
        Some(s) => s.example.unwrap_or_default(),
        None => ExampleConfig::default(),
    };
    if let Some(n) = c.grid_n {
        cfg.grid_n = n;
    }
    apply_solver(&mut cfg.solver, c);
    apply_mc(&mut cfg.mc, c)?;
    let run = run_example(&cfg)?;
    let space = DiffusionModel::logistic_martingale().state_space;
    ensure_dir(&c.out)?;
    for (p, v) in [(1, &run.solution.w1), (2, &run.solution.w2)] {
        let s_bar = extract_stopping_sets(v, &space, &cfg.solver);
        value_table(v, &s_bar).write(&c.out, &format!("value_{p}.csv"))?;
    }
    write_json(&c.out, "solution.json", &run.solution)?;
    write_json(&c.out, "report.json", &run.report)?;
    write_json(&c.out, "iteration.json", &run.iteration)?;
    write_json(
        &c.out,
        "checks.json",
        &ExampleChecks {
            pass: run.pass,
            checks: &run.checks,
            certificate: &run.certificate,
            verdict: run.report.verdict,
            failures: &run.report.failures,
        },
    )?;
    if run.pass {
        Ok(Status::Ok)
    } else {
        let mut why: Vec<String> = run
            .checks
            .iter()
            .chain(&run.certificate)
            .filter(|k| !k.pass)
            .map(|k| k.name.clone())
            .collect();
        why.extend(run.report.failures.iter().cloned());
        Ok(Status::Failed(why.join("; ")))
    }
}

#[derive(Serialize)]
struct MollifySummary {
    eps: f64,
    /// Mass of the finite part of `H(m, eps)` over the whole state space.
    total_mass: f64,
    /// Trapezoid integral of the emitted samples.
    sampled_mass: f64,
    max_density: f64,
}

pub fn mollify(c: &Common, atom: Option<f64>, eps: &[f64]) -> Res {
    let s = load(c)?;
    let space = match &s {
        Some(s) => s.model()?.state_space,
        None => Interval::real_line(),
    };
    let eps_or = |v: Vec<f64>| if eps.is_empty() { v } else { eps.to_vec() };
    let spec = match (atom, s.as_ref().and_then(|s| s.mollify.clone())) {
        (Some(x), _) => MollifySpec::dirac(x, eps_or(vec![0.5])),
        (None, Some(mut m)) => {
            m.eps = eps_or(m.eps);
            m
        }
        (None, None) => MollifySpec::dirac(0.0, eps_or(vec![0.5])),
    };
    if spec.eps.iter().any(|e| !(0.0..=1.0).contains(e)) {
        return Err(CliError::Input("eps must lie in [0, 1]".into()));
    }
    if !(spec.lower < spec.upper) || spec.samples < 2 {
        return Err(CliError::Input(
            "mollify needs lower < upper and 2+ samples".into(),
        ));
    }
    let xs: Vec<f64> = (0..spec.samples)
        .map(|k| spec.lower + (spec.upper - spec.lower) * k as f64 / (spec.samples - 1) as f64)
        .filter(|&x| space.contains(x))
        .collect();
    let mut table = Table::new(["eps", "x", "density"]);
    let mut summary = Vec::new();
    for &e in &spec.eps {
        let h = mollify_measure(&spec.measure, e, &space)?;
        let d: Vec<f64> = xs.iter().map(|&x| h.finite_part.density_at(x)).collect();
        for (&x, &v) in xs.iter().zip(&d) {
            table.push(vec![num(e), num(x), num(v)]);
        }
        let sampled_mass = xs
            .windows(2)
            .zip(d.windows(2))
            .map(|(x, v)| 0.5 * (x[1] - x[0]) * (v[0] + v[1]))
            .sum();
        summary.push(MollifySummary {
            eps: e,
            total_mass: h.finite_part.total_mass(),
            sampled_mass,
            max_density: d.iter().copied().fold(0.0, f64::max),
        });
    }
    ensure_dir(&c.out)?;
    table.write(&c.out, "mollify.csv")?;
    write_json(&c.out, "mollify.json", &summary)?;
    Ok(Status::Ok)
}
