use serde::{Deserialize, Serialize};

use crate::diffusion::Interval;
use crate::error::{Error, Result};
use crate::strategies::MarkovStrategy;

/// Match tolerance for special points on the grid.
pub const NODE_TOL: f64 = 1e-12;

/// Strictly increasing nodes; the end nodes may sit on finite endpoints of the state
/// space, where a boundary closure supplies the value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Grid {
    pub nodes: Vec<f64>,
}

impl Grid {
    pub fn new(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 3 {
            return Err(Error::InvalidParameter(
                "a grid needs at least three nodes".into(),
            ));
        }
        if nodes.iter().any(|x| !x.is_finite()) || nodes.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidParameter("grid nodes must increase".into()));
        }
        Ok(Grid { nodes })
    }

    /// `n` equally spaced nodes on `[a, b]`.
    pub fn uniform(a: f64, b: f64, n: usize) -> Result<Self> {
        if n < 3 || !(a < b) {
            return Err(Error::InvalidParameter(format!(
                "bad uniform grid [{a}, {b}] x {n}"
            )));
        }
        let h = (b - a) / (n - 1) as f64;
        let mut nodes: Vec<f64> = (0..n).map(|i| a + h * i as f64).collect();
        nodes[n - 1] = b;
        Self::new(nodes)
    }

    /// Uniform grid with the special points inserted as nodes; uniform nodes closer than
    /// a quarter cell to a special point are dropped.
    pub fn with_points(a: f64, b: f64, n: usize, special: &[f64]) -> Result<Self> {
        let base = Self::uniform(a, b, n)?;
        let h = (b - a) / (n - 1) as f64;
        let mut sp: Vec<f64> = special
            .iter()
            .copied()
            .filter(|&p| p > a && p < b)
            .collect();
        sp.sort_by(f64::total_cmp);
        sp.dedup();
        let mut nodes: Vec<f64> = base
            .nodes
            .iter()
            .enumerate()
            .filter(|&(i, &x)| {
                i == 0 || i == n - 1 || sp.iter().all(|&p| (p - x).abs() >= 0.25 * h)
            })
            .map(|(_, &x)| x)
            .collect();
        nodes.extend(sp);
        nodes.sort_by(f64::total_cmp);
        nodes.dedup();
        Self::new(nodes)
    }

    /// Grid for a best reply against `opp`: atoms, density breaks and the end points of
    /// the stop set become nodes.
    pub fn for_opponent(
        space: &Interval,
        a: f64,
        b: f64,
        n: usize,
        opp: &MarkovStrategy,
        extra: &[f64],
    ) -> Result<Self> {
        let mut sp = opp.intensity.special_points();
        for c in opp.stop_set.components() {
            sp.extend(c.iter().copied().filter(|&v| space.contains(v)));
        }
        sp.extend_from_slice(extra);
        Self::with_points(a, b, n, &sp)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn first(&self) -> f64 {
        self.nodes[0]
    }

    pub fn last(&self) -> f64 {
        self.nodes[self.nodes.len() - 1]
    }

    pub fn h_max(&self) -> f64 {
        self.nodes
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max)
    }

    pub fn index_of(&self, x: f64) -> Option<usize> {
        let i = self.nodes.partition_point(|&v| v < x - NODE_TOL);
        self.nodes
            .get(i)
            .filter(|&&v| (v - x).abs() <= NODE_TOL)
            .map(|_| i)
    }

    /// Index of the node nearest to `x`.
    pub fn nearest(&self, x: f64) -> usize {
        let i = self.nodes.partition_point(|&v| v < x);
        if i == 0 {
            0
        } else if i == self.nodes.len() || x - self.nodes[i - 1] <= self.nodes[i] - x {
            i - 1
        } else {
            i
        }
    }

    /// Piecewise-linear interpolation of nodal values.
    pub fn interpolate(&self, values: &[f64], x: f64) -> f64 {
        let n = self.nodes.len();
        if x <= self.nodes[0] {
            return values[0];
        }
        if x >= self.nodes[n - 1] {
            return values[n - 1];
        }
        let i = self.nodes.partition_point(|&v| v <= x);
        let (x0, x1) = (self.nodes[i - 1], self.nodes[i]);
        values[i - 1] + (values[i] - values[i - 1]) * (x - x0) / (x1 - x0)
    }
}
