use serde::{Deserialize, Serialize};

use crate::diffusion::Interval;
use crate::error::{Error, Result};

/// Finite union of disjoint closed intervals, relative to a state space.
///
/// A component `[a, b]` whose lower end equals the lower endpoint of the state space
/// stands for `(a, b]` (the endpoint itself is never a state), and likewise at the
/// upper end. `a == b` encodes a single point.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "Vec<[f64; 2]>", into = "Vec<[f64; 2]>")]
pub struct ClosedSet {
    components: Vec<[f64; 2]>,
}

impl TryFrom<Vec<[f64; 2]>> for ClosedSet {
    type Error = Error;
    fn try_from(v: Vec<[f64; 2]>) -> Result<Self> {
        ClosedSet::from_components(v)
    }
}

impl From<ClosedSet> for Vec<[f64; 2]> {
    fn from(s: ClosedSet) -> Self {
        s.components
    }
}

impl ClosedSet {
    pub fn empty() -> Self {
        ClosedSet::default()
    }

    pub fn point(x: f64) -> Self {
        ClosedSet {
            components: vec![[x, x]],
        }
    }

    pub fn interval(a: f64, b: f64) -> Result<Self> {
        Self::from_components(vec![[a, b]])
    }

    /// Builds a set from possibly unsorted, overlapping components; overlapping or
    /// touching components are merged.
    pub fn from_components(mut comps: Vec<[f64; 2]>) -> Result<Self> {
        for c in &comps {
            if c[0].is_nan() || c[1].is_nan() || c[0] > c[1] {
                return Err(Error::InvalidParameter(format!(
                    "bad closed interval [{}, {}]",
                    c[0], c[1]
                )));
            }
        }
        comps.sort_by(|a, b| a[0].total_cmp(&b[0]));
        let mut out: Vec<[f64; 2]> = Vec::with_capacity(comps.len());
        for c in comps {
            match out.last_mut() {
                Some(last) if c[0] <= last[1] => last[1] = last[1].max(c[1]),
                _ => out.push(c),
            }
        }
        Ok(ClosedSet { components: out })
    }

    /// Checks that every component meets the open state space and stays within its closure.
    pub fn validate(&self, space: &Interval) -> Result<()> {
        for c in &self.components {
            let inside = c[0] >= space.lower
                && c[1] <= space.upper
                && c[0] < space.upper
                && c[1] > space.lower;
            let point_ok = c[0] < c[1] || space.contains(c[0]);
            if !inside || !point_ok {
                return Err(Error::InvalidParameter(format!(
                    "component [{}, {}] not inside ({}, {})",
                    c[0], c[1], space.lower, space.upper
                )));
            }
        }
        Ok(())
    }

    pub fn components(&self) -> &[[f64; 2]] {
        &self.components
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn contains(&self, x: f64) -> bool {
        let idx = self.components.partition_point(|c| c[1] < x);
        self.components.get(idx).is_some_and(|c| c[0] <= x)
    }

    /// First point of the set met when moving continuously from `from` to `to`.
    pub fn entry_point(&self, from: f64, to: f64) -> Option<f64> {
        if from <= to {
            let idx = self.components.partition_point(|c| c[1] < from);
            let c = self.components.get(idx)?;
            (c[0] <= to).then(|| c[0].max(from))
        } else {
            let idx = self.components.partition_point(|c| c[0] <= from);
            if idx == 0 {
                return None;
            }
            let c = self.components[idx - 1];
            (c[1] >= to).then(|| c[1].min(from))
        }
    }

    /// Nearest points of the set strictly below and strictly above `x`.
    pub fn neighbours(&self, x: f64) -> (Option<f64>, Option<f64>) {
        let idx = self.components.partition_point(|c| c[1] < x);
        let below = idx.checked_sub(1).map(|i| self.components[i][1]);
        let above = self.components.get(idx).map(|c| c[0]).filter(|&a| a > x);
        (below, above)
    }

    pub fn meets_open(&self, a: f64, b: f64) -> bool {
        a < b && self.components.iter().any(|c| c[0] < b && c[1] > a)
    }

    pub fn meets_closed(&self, a: f64, b: f64) -> bool {
        a <= b && self.components.iter().any(|c| c[0] <= b && c[1] >= a)
    }

    pub fn distance(&self, x: f64) -> f64 {
        self.components
            .iter()
            .map(|c| {
                if x < c[0] {
                    c[0] - x
                } else if x > c[1] {
                    x - c[1]
                } else {
                    0.0
                }
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Open intervals making up `space \ self`.
    pub fn complement_in(&self, space: &Interval) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        let mut left = space.lower;
        for c in &self.components {
            if c[0] > left {
                out.push((left, c[0]));
            }
            left = left.max(c[1]);
        }
        if left < space.upper {
            out.push((left, space.upper));
        }
        out
    }

    pub fn union(&self, other: &ClosedSet) -> ClosedSet {
        let mut all = self.components.clone();
        all.extend_from_slice(&other.components);
        ClosedSet::from_components(all).expect("components already valid")
    }

    pub fn intersection(&self, other: &ClosedSet) -> ClosedSet {
        let mut out = Vec::new();
        let (mut i, mut j) = (0, 0);
        while i < self.components.len() && j < other.components.len() {
            let a = self.components[i];
            let b = other.components[j];
            let lo = a[0].max(b[0]);
            let hi = a[1].min(b[1]);
            if lo <= hi {
                out.push([lo, hi]);
            }
            if a[1] < b[1] {
                i += 1;
            } else {
                j += 1;
            }
        }
        ClosedSet { components: out }
    }

    /// `sup_{a in self} dist(a, other)`; zero for an empty `self`, infinite when only
    /// `other` is empty.
    pub fn excess_over(&self, other: &ClosedSet) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        if other.is_empty() {
            return f64::INFINITY;
        }
        let mut worst: f64 = 0.0;
        for c in &self.components {
            worst = worst.max(other.distance(c[0])).max(other.distance(c[1]));
            // Inside [c0, c1] the distance to `other` peaks in the middle of its gaps.
            for g in other.components.windows(2) {
                let (gl, gr) = (g[0][1], g[1][0]);
                let mid = 0.5 * (gl + gr);
                if mid > c[0] && mid < c[1] {
                    worst = worst.max(0.5 * (gr - gl));
                }
            }
        }
        worst
    }

    pub fn hausdorff(&self, other: &ClosedSet) -> f64 {
        self.excess_over(other).max(other.excess_over(self))
    }

    /// Approximate equality in the Hausdorff sense; the empty set only matches itself.
    pub fn approx_eq(&self, other: &ClosedSet, tol: f64) -> bool {
        match (self.is_empty(), other.is_empty()) {
            (true, true) => true,
            (false, false) => self.hausdorff(other) <= tol,
            _ => false,
        }
    }

    /// Whether `self` is contained in `other` up to `tol`.
    pub fn approx_subset(&self, other: &ClosedSet, tol: f64) -> bool {
        self.excess_over(other) <= tol
    }

    /// Lebesgue length of the part of the set inside `[a, b]`.
    pub fn length_within(&self, a: f64, b: f64) -> f64 {
        self.components
            .iter()
            .map(|c| (c[1].min(b) - c[0].max(a)).max(0.0))
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> Interval {
        Interval::new(0.0, 1.0).unwrap()
    }

    #[test]
    fn merges_and_sorts() {
        let s = ClosedSet::from_components(vec![[0.5, 0.6], [0.1, 0.2], [0.15, 0.3]]).unwrap();
        assert_eq!(s.components(), &[[0.1, 0.3], [0.5, 0.6]]);
        assert!(s.contains(0.3));
        assert!(!s.contains(0.4));
        assert!(s.contains(0.5));
    }

    #[test]
    fn validates_against_space() {
        let s = ClosedSet::from_components(vec![[0.0, 1.0 / 3.0], [2.0 / 3.0, 1.0]]).unwrap();
        assert!(s.validate(&unit()).is_ok());
        assert!(ClosedSet::point(0.0).validate(&unit()).is_err());
        assert!(ClosedSet::interval(0.5, 1.5)
            .unwrap()
            .validate(&unit())
            .is_err());
    }

    #[test]
    fn complement_is_open_intervals() {
        let s = ClosedSet::from_components(vec![[0.0, 0.25], [0.5, 0.5]]).unwrap();
        assert_eq!(s.complement_in(&unit()), vec![(0.25, 0.5), (0.5, 1.0)]);
        assert_eq!(ClosedSet::empty().complement_in(&unit()), vec![(0.0, 1.0)]);
    }

    #[test]
    fn entry_points_in_both_directions() {
        let s = ClosedSet::from_components(vec![[0.2, 0.3], [0.5, 0.5]]).unwrap();
        assert_eq!(s.entry_point(0.1, 0.25), Some(0.2));
        assert_eq!(s.entry_point(0.4, 0.6), Some(0.5));
        assert_eq!(s.entry_point(0.45, 0.1), Some(0.3));
        assert_eq!(s.entry_point(0.25, 0.9), Some(0.25));
        assert_eq!(s.entry_point(0.31, 0.49), None);
        assert_eq!(s.entry_point(0.6, 0.9), None);
        assert_eq!(s.entry_point(0.19, 0.0), None);
    }

    #[test]
    fn intersection_and_union() {
        let a = ClosedSet::from_components(vec![[0.0, 0.4], [0.6, 1.0]]).unwrap();
        let b = ClosedSet::from_components(vec![[0.3, 0.7]]).unwrap();
        assert_eq!(a.intersection(&b).components(), &[[0.3, 0.4], [0.6, 0.7]]);
        assert_eq!(a.union(&b).components(), &[[0.0, 1.0]]);
    }

    #[test]
    fn excess_and_hausdorff() {
        let a = ClosedSet::from_components(vec![[0.0, 1.0]]).unwrap();
        let b = ClosedSet::from_components(vec![[0.0, 0.4], [0.6, 1.0]]).unwrap();
        assert!((a.excess_over(&b) - 0.1).abs() < 1e-15);
        assert_eq!(b.excess_over(&a), 0.0);
        assert!(ClosedSet::point(0.5).approx_eq(&ClosedSet::point(0.5001), 1e-3));
        assert!(!ClosedSet::point(0.5).approx_eq(&ClosedSet::empty(), 1.0));
        assert!(ClosedSet::empty().approx_subset(&b, 0.0));
    }
}
