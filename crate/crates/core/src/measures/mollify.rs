use super::chart::Chart;
use super::measure::{DensityPiece, ExtendedMeasure, LocallyFiniteMeasure};
use super::quadrature::integrate_split;
use crate::diffusion::Interval;
use crate::error::{Error, Result};
use crate::poly::Polynomial;

/// Sup-norm tolerance of the piecewise-linear density produced by [`mollify`].
pub const KNOT_TOL: f64 = 1e-6;

/// Triangular kernel `(1/eps) max(1 - |x|/eps, 0)`; integrates to one.
#[inline]
pub fn hat(x: f64, eps: f64) -> f64 {
    ((1.0 - x.abs() / eps) / eps).max(0.0)
}

enum ChartDensity<'a> {
    Plain(&'a DensityPiece),
    Native(&'a DensityPiece),
}

struct Pushforward<'a> {
    chart: Chart,
    eps: f64,
    atoms: Vec<(f64, f64)>,
    pieces: Vec<([f64; 2], ChartDensity<'a>)>,
    caps: Vec<[f64; 2]>,
}

impl Pushforward<'_> {
    fn density(&self, d: &ChartDensity, t: f64) -> f64 {
        match d {
            ChartDensity::Plain(p) => {
                let x = self.chart.inverse(t);
                p.poly.eval(x) * self.chart.inverse_derivative(t)
            }
            ChartDensity::Native(p) => p.poly.eval(t),
        }
    }

    fn in_cap(&self, s: f64) -> bool {
        self.caps.iter().any(|c| c[0] < s && s < c[1])
    }

    /// `integral rho_eps(s - t) dm(t)` in chart coordinates, off the capped region.
    fn convolve(&self, s: f64) -> f64 {
        let eps = self.eps;
        let mut total: f64 = self.atoms.iter().map(|&(t, a)| a * hat(s - t, eps)).sum();
        for (iv, d) in &self.pieces {
            let lo = iv[0].max(s - eps);
            let hi = iv[1].min(s + eps);
            if hi > lo {
                total += integrate_split(
                    |t| hat(s - t, eps) * self.density(d, t),
                    lo,
                    hi,
                    &[s],
                    1e-13 / eps,
                );
            }
        }
        total
    }
}

/// `H(m, eps) = (1 - eps) min(rho_eps * m, 1/eps^2)`, computed in chart coordinates of
/// the state space. The result has no explosion set and a piecewise-linear density in
/// chart coordinates, accurate to [`KNOT_TOL`] in sup norm.
pub fn mollify(m: &ExtendedMeasure, eps: f64, space: &Interval) -> Result<ExtendedMeasure> {
    if !(0.0..=1.0).contains(&eps) {
        return Err(Error::InvalidParameter(format!(
            "eps = {eps} outside [0, 1]"
        )));
    }
    if eps == 0.0 {
        return Ok(m.clone());
    }
    if eps == 1.0 {
        return Ok(ExtendedMeasure::zero());
    }
    let chart = Chart::for_interval(space);
    let fp = &m.finite_part;
    let atoms: Vec<(f64, f64)> = fp
        .atoms
        .iter()
        .map(|a| (chart.forward(a.x), a.mass))
        .collect();
    let pieces: Vec<([f64; 2], ChartDensity)> = fp
        .densities
        .iter()
        .filter(|d| !d.poly.is_zero())
        .map(|d| {
            let iv = [chart.forward(d.interval[0]), chart.forward(d.interval[1])];
            match d.chart {
                Some(c) if c == chart => (iv, ChartDensity::Native(d)),
                Some(_) => (iv, ChartDensity::Plain(d)),
                None => (iv, ChartDensity::Plain(d)),
            }
        })
        .collect();
    let mut caps: Vec<[f64; 2]> = m
        .explosion
        .components()
        .iter()
        .map(|c| [chart.forward(c[0]) - eps, chart.forward(c[1]) + eps])
        .collect();
    caps.sort_by(|a, b| a[0].total_cmp(&b[0]));
    let mut merged: Vec<[f64; 2]> = Vec::new();
    for c in caps {
        match merged.last_mut() {
            Some(l) if c[0] <= l[1] => l[1] = l[1].max(c[1]),
            _ => merged.push(c),
        }
    }
    for iv in pieces.iter().map(|p| p.0) {
        if !(iv[0].is_finite() && iv[1].is_finite()) {
            return Err(Error::InvalidParameter(
                "density reaching a natural endpoint cannot be mollified".into(),
            ));
        }
    }
    let pf = Pushforward {
        chart,
        eps,
        atoms,
        pieces,
        caps: merged,
    };

    let cap_value = (1.0 - eps) / (eps * eps);
    let q = |s: f64| -> f64 {
        if pf.in_cap(s) {
            cap_value
        } else {
            (1.0 - eps) * pf.convolve(s).min(1.0 / (eps * eps))
        }
    };

    // Support of the convolution and the points where it may fail to be smooth.
    let mut supports: Vec<[f64; 2]> = Vec::new();
    let mut breaks: Vec<f64> = Vec::new();
    for &(t, _) in &pf.atoms {
        supports.push([t - eps, t + eps]);
        breaks.extend([t - eps, t, t + eps]);
    }
    for (iv, _) in &pf.pieces {
        supports.push([iv[0] - eps, iv[1] + eps]);
        breaks.extend([
            iv[0] - eps,
            iv[0],
            iv[0] + eps,
            iv[1] - eps,
            iv[1],
            iv[1] + eps,
        ]);
    }
    for c in &pf.caps {
        supports.push(*c);
        breaks.extend(c.iter().copied().filter(|v| v.is_finite()));
    }
    breaks.retain(|v| v.is_finite());
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();

    let mut segments: Vec<(f64, f64, f64, f64)> = Vec::new();
    let cap_piece = |lo: f64, hi: f64| (lo, hi, cap_value, cap_value);
    if let Some(c) = pf.caps.first().filter(|c| c[0] == f64::NEG_INFINITY) {
        segments.push(cap_piece(f64::NEG_INFINITY, c[1]));
    }
    for w in breaks.windows(2) {
        let (u, v) = (w[0], w[1]);
        let mid = 0.5 * (u + v);
        if pf.in_cap(mid) {
            segments.push(cap_piece(u, v));
            continue;
        }
        if !supports.iter().any(|s| s[0] < v && s[1] > u) {
            continue;
        }
        linearize(&q, u, v, q(u), q(v), 0, &mut segments);
    }
    if let Some(c) = pf.caps.last().filter(|c| c[1] == f64::INFINITY) {
        segments.push(cap_piece(c[0], f64::INFINITY));
    }

    let mut densities = Vec::with_capacity(segments.len());
    for (u, v, qu, qv) in segments {
        if qu <= 0.0 && qv <= 0.0 {
            continue;
        }
        let (xa, xb) = (chart.inverse(u), chart.inverse(v));
        if !(xb > xa) {
            continue;
        }
        let poly = if u.is_finite() && v.is_finite() {
            let slope = (qv - qu) / (v - u);
            Polynomial::new(vec![qu - slope * u, slope])
        } else {
            Polynomial::constant(cap_value)
        };
        densities.push(DensityPiece {
            interval: [xa, xb],
            poly,
            chart: Some(chart),
        });
    }
    // Adjacent pieces may overlap by rounding in the inverse chart.
    for k in 1..densities.len() {
        let prev_hi = densities[k - 1].interval[1];
        if densities[k].interval[0] < prev_hi {
            densities[k].interval[0] = prev_hi;
        }
    }
    densities.retain(|d| d.interval[1] > d.interval[0]);
    Ok(ExtendedMeasure {
        finite_part: LocallyFiniteMeasure::new(Vec::new(), densities)?,
        explosion: Default::default(),
    })
}

fn linearize(
    q: &impl Fn(f64) -> f64,
    u: f64,
    v: f64,
    qu: f64,
    qv: f64,
    depth: u32,
    out: &mut Vec<(f64, f64, f64, f64)>,
) {
    let probes = [0.25, 0.5, 0.75];
    let vals = probes.map(|p| q(u + p * (v - u)));
    let err = probes
        .iter()
        .zip(vals.iter())
        .map(|(p, val)| (val - (qu + p * (qv - qu))).abs())
        .fold(0.0, f64::max);
    if err <= KNOT_TOL || depth >= 48 || v - u < 1e-13 {
        out.push((u, v, qu, qv));
        return;
    }
    let m = 0.5 * (u + v);
    linearize(q, u, m, qu, vals[1], depth + 1, out);
    linearize(q, m, v, vals[1], qv, depth + 1, out);
}
