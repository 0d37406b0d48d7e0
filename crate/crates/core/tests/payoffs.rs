use attrition::best_reply::SolverOptions;
use attrition::diffusion::LocalTimeMethod;
use attrition::equilibrium::example::edge_set;
use attrition::equilibrium::solve_example;
use attrition::payoffs::{check_assumptions, payoff_both, McConfig, PayoffSpec};
use attrition::poly::{PiecewisePolynomial, Polynomial};
use attrition::{ClosedSet, DiffusionModel, LocallyFiniteMeasure, MarkovStrategy};

fn tent() -> PayoffSpec {
    PayoffSpec::new(
        PiecewisePolynomial::single(Polynomial::new(vec![0.0, 1.0, -1.0]), 0.0, 1.0),
        PiecewisePolynomial::single(Polynomial::new(vec![0.2, 1.0, -1.0]), 0.0, 1.0),
    )
}

fn shifted(spec: &PayoffSpec, c: f64) -> PayoffSpec {
    let mut g = spec.follow_reward.clone();
    for p in &mut g.pieces {
        p.poly.0[0] += c;
    }
    PayoffSpec::new(spec.stop_reward.clone(), g)
}

fn mc(paths: usize, seed: u64) -> McConfig {
    let mut c = McConfig::new(paths, 1e-3, 20.0, seed);
    c.method = LocalTimeMethod::Tanaka;
    c.bridge = true;
    c
}

fn atom(x: f64, mass: f64) -> MarkovStrategy {
    MarkovStrategy::new(
        LocallyFiniteMeasure::dirac(x, mass).unwrap(),
        ClosedSet::empty(),
    )
    .unwrap()
}

#[test]
fn stopping_at_once_pays_r() {
    let m = DiffusionModel::logistic_martingale();
    let e = payoff_both(
        &m,
        &tent(),
        0.4,
        &MarkovStrategy::pure(ClosedSet::point(0.4)),
        &atom(0.6, 1.0),
        &mc(200, 1),
    )
    .unwrap();
    for est in [e.stieltjes, e.sampled] {
        assert_eq!(est.mean, tent().r(0.4));
        assert_eq!(est.se, 0.0);
    }
}

#[test]
fn opponent_stopping_at_once_pays_g() {
    let m = DiffusionModel::logistic_martingale();
    let e = payoff_both(
        &m,
        &tent(),
        0.4,
        &MarkovStrategy::never(),
        &MarkovStrategy::pure(ClosedSet::interval(0.3, 0.5).unwrap()),
        &mc(200, 1),
    )
    .unwrap();
    assert_eq!(e.stieltjes.mean, tent().g(0.4));
    assert_eq!(e.sampled.mean, tent().g(0.4));
}

#[test]
fn simultaneous_stop_goes_to_the_stopper() {
    let m = DiffusionModel::logistic_martingale();
    let s = MarkovStrategy::pure(ClosedSet::interval(0.3, 0.5).unwrap());
    let e = payoff_both(&m, &tent(), 0.4, &s, &s, &mc(200, 1)).unwrap();
    assert_eq!(e.stieltjes.mean, tent().r(0.4));
    assert_eq!(e.sampled.mean, tent().r(0.4));
}

#[test]
fn reward_ordering_is_enforced() {
    let m = DiffusionModel::logistic_martingale();
    let bad = PayoffSpec::new(tent().follow_reward, tent().stop_reward);
    let e = payoff_both(
        &m,
        &bad,
        0.4,
        &MarkovStrategy::never(),
        &MarkovStrategy::never(),
        &mc(10, 1),
    );
    assert!(e.is_err());
}

#[test]
fn estimators_agree_on_mixed_profiles() {
    let m = DiffusionModel::logistic_martingale();
    let dens = MarkovStrategy::new(
        LocallyFiniteMeasure::uniform(0.3, 0.7, 3.0).unwrap(),
        ClosedSet::point(0.9),
    )
    .unwrap();
    let cases = [
        (atom(0.5, 2.0), MarkovStrategy::pure(edge_set(0.25)), 0.45),
        (dens.clone(), atom(0.4, 1.0), 0.5),
        (atom(0.6, 1.5), dens, 0.55),
    ];
    for (k, (si, sj, x0)) in cases.iter().enumerate() {
        let mut cfg = mc(4000, 100 + k as u64);
        cfg.method = LocalTimeMethod::Kernel;
        let e = payoff_both(&m, &tent(), *x0, si, sj, &cfg).unwrap();
        let se = e.stieltjes.se.hypot(e.sampled.se);
        let d = (e.stieltjes.mean - e.sampled.mean).abs();
        assert!(d <= 3.0 * se, "case {k}: {d} > 3 x {se}");
    }
}

#[test]
fn equilibrium_payoff_of_the_follower_matches_its_value() {
    let sol = solve_example(2001, &SolverOptions::default()).unwrap();
    let m = DiffusionModel::logistic_martingale();
    let p = &sol.profile;
    let e = payoff_both(
        &m,
        &sol.payoffs.specs[1],
        0.5,
        &p.strat_2,
        &p.strat_1,
        &mc(20_000, 7),
    )
    .unwrap();
    let want = sol.w2_closed_form(0.5);
    let budget = 5e-3;
    for est in [e.stieltjes, e.sampled] {
        assert!(
            (est.mean - want).abs() <= 3.0 * est.se + budget,
            "{} vs {want} (se {})",
            est.mean,
            est.se
        );
        assert!(!est.tail_exceeded);
    }
}

#[test]
fn raising_g_raises_the_payoff() {
    let m = DiffusionModel::logistic_martingale();
    let si = MarkovStrategy::never();
    let sj = atom(0.5, 1.0);
    let cfg = mc(2000, 3);
    let base = payoff_both(&m, &tent(), 0.5, &si, &sj, &cfg).unwrap();
    let up = payoff_both(&m, &shifted(&tent(), 0.1), 0.5, &si, &sj, &cfg).unwrap();
    assert!(up.stieltjes.mean > base.stieltjes.mean);
    // Same paths, no discounting: the gain is c times the chance the opponent stops.
    let gain = up.stieltjes.mean - base.stieltjes.mean;
    let want = 0.1 * (1.0 - base.stieltjes.tail.surviving);
    assert!((gain - want).abs() < 1e-9, "{gain} vs {want}");
}

#[test]
fn deviations_do_not_beat_the_best_reply_value() {
    let sol = solve_example(2001, &SolverOptions::default()).unwrap();
    let m = DiffusionModel::logistic_martingale();
    let opp = &sol.profile.strat_2;
    let spec = &sol.payoffs.specs[0];
    for (k, dev) in [
        MarkovStrategy::pure(ClosedSet::interval(0.4, 0.6).unwrap()),
        MarkovStrategy::never(),
        atom(0.45, 5.0),
    ]
    .iter()
    .enumerate()
    {
        for x0 in [0.35, 0.5] {
            let e = payoff_both(&m, spec, x0, dev, opp, &mc(4000, 50 + k as u64)).unwrap();
            let bound = sol.w1.eval(x0);
            assert!(
                e.stieltjes.mean <= bound + 3.0 * e.stieltjes.se + 5e-3,
                "deviation {k} at {x0}: {} > {bound}",
                e.stieltjes.mean
            );
        }
    }
}

#[test]
fn assumption_proxies() {
    // Bounded reward with discounting: the tail proxy is at most sup|f| e^{-rT}.
    let mut m = DiffusionModel::logistic_martingale();
    m.discount = 0.5;
    let cfg = McConfig::new(200, 1e-2, 10.0, 5);
    let rep = check_assumptions(&m, &tent(), 0.5, &cfg).unwrap();
    assert!(rep.follow_reward.tail_mean <= 0.45 * (-5.0f64).exp() + 1e-15);

    // Example payoffs vanish at both ends and the state is absorbed there.
    let sol = solve_example(501, &SolverOptions::default()).unwrap();
    let m = DiffusionModel::logistic_martingale();
    let tail = |t: f64| {
        check_assumptions(
            &m,
            &sol.payoffs.specs[1],
            0.5,
            &McConfig::new(400, 1e-2, t, 6),
        )
        .unwrap()
        .follow_reward
        .tail_mean
    };
    let (a, b) = (tail(5.0), tail(50.0));
    assert!(b < a, "{b} >= {a}");

    // f = 1 without discounting never fades.
    let one = PayoffSpec::new(
        PiecewisePolynomial::constant(1.0),
        PiecewisePolynomial::constant(1.0),
    );
    let rep = check_assumptions(&m, &one, 0.5, &McConfig::new(50, 1e-2, 5.0, 7)).unwrap();
    assert_eq!(rep.stop_reward.tail_mean, 1.0);
}
