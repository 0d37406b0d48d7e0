//! Adaptive Gauss-Legendre quadrature.

const NODES: [f64; 5] = [
    0.0,
    0.538_469_310_105_683_1,
    -0.538_469_310_105_683_1,
    0.906_179_845_938_664,
    -0.906_179_845_938_664,
];
const WEIGHTS: [f64; 5] = [
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
    0.236_926_885_056_189_1,
];

fn gl5(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    NODES
        .iter()
        .zip(WEIGHTS.iter())
        .map(|(t, w)| w * f(c + h * t))
        .sum::<f64>()
        * h
}

fn recurse(f: &impl Fn(f64) -> f64, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let left = gl5(f, a, m);
    let right = gl5(f, m, b);
    let both = left + right;
    if depth == 0 || (both - whole).abs() <= tol {
        return both;
    }
    recurse(f, a, m, left, 0.5 * tol, depth - 1) + recurse(f, m, b, right, 0.5 * tol, depth - 1)
}

/// Integral of `f` over the finite interval `[a, b]` to absolute tolerance `tol`.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    if !(b > a) {
        return 0.0;
    }
    let whole = gl5(&f, a, b);
    recurse(&f, a, b, whole, tol, 40)
}

/// Same as [`integrate`] after splitting at the given interior break points.
pub fn integrate_split(f: impl Fn(f64) -> f64, a: f64, b: f64, breaks: &[f64], tol: f64) -> f64 {
    let mut pts: Vec<f64> = breaks.iter().copied().filter(|&t| t > a && t < b).collect();
    pts.sort_by(f64::total_cmp);
    let mut total = 0.0;
    let mut lo = a;
    let share = tol / (pts.len() + 1) as f64;
    for t in pts.into_iter().chain(std::iter::once(b)) {
        total += integrate(&f, lo, t, share);
        lo = t;
    }
    total
}
