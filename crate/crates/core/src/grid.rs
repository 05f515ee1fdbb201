//! Observation grids on [0, 1] and piecewise partitions of the domain.

use crate::error::{invalid, Result};
use serde::{Deserialize, Serialize};

/// Ordered observation times on the unit interval shared by all subjects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    points: Vec<f64>,
}

impl TimeGrid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(invalid(format!("grid needs at least 2 points, got {}", points.len())));
        }
        if points.iter().any(|t| !t.is_finite() || *t < 0.0 || *t > 1.0) {
            return Err(invalid("grid points must lie in [0, 1]"));
        }
        if points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("grid points must be strictly increasing"));
        }
        Ok(Self { points })
    }

    /// `len` equally spaced points including both endpoints.
    pub fn equispaced(len: usize) -> Result<Self> {
        if len < 2 {
            return Err(invalid(format!("grid needs at least 2 points, got {len}")));
        }
        let last = (len - 1) as f64;
        let mut points: Vec<f64> = (0..len).map(|l| l as f64 / last).collect();
        points[len - 1] = 1.0;
        Ok(Self { points })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Widths of the `len - 1` intervals between consecutive points.
    pub fn spacing(&self) -> Vec<f64> {
        self.points.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Trapezoid-rule weights over the full grid.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let mask = vec![true; self.len()];
        self.masked_trapezoid_weights(&mask)
    }

    /// Trapezoid weights that only keep panels whose two endpoints are both
    /// observed. Points without a complete neighbouring panel get weight 0.
    pub fn masked_trapezoid_weights(&self, observed: &[bool]) -> Vec<f64> {
        debug_assert_eq!(observed.len(), self.len());
        let mut w = vec![0.0; self.len()];
        for l in 0..self.len() - 1 {
            if observed[l] && observed[l + 1] {
                let half = 0.5 * (self.points[l + 1] - self.points[l]);
                w[l] += half;
                w[l + 1] += half;
            }
        }
        w
    }

    /// Trapezoid integral of `values` sampled on the grid.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.len());
        self.points
            .windows(2)
            .zip(values.windows(2))
            .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1]))
            .sum()
    }
}

/// Which end of each segment is closed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Closure {
    /// Segments are `(t_{m-1}, t_m]`; `t = 0` belongs to the first segment.
    #[default]
    RightClosed,
    /// Segments are `[t_{m-1}, t_m)`; `t = 1` belongs to the last segment.
    LeftClosed,
}

/// A partition `0 = t_0 < t_1 < ... < t_M = 1` of the unit interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segmentation {
    boundaries: Vec<f64>,
    closure: Closure,
}

impl Segmentation {
    pub fn new(boundaries: Vec<f64>) -> Result<Self> {
        Self::with_closure(boundaries, Closure::RightClosed)
    }

    pub fn with_closure(boundaries: Vec<f64>, closure: Closure) -> Result<Self> {
        if boundaries.len() < 2 {
            return Err(invalid("segmentation needs at least one segment"));
        }
        if boundaries[0] != 0.0 || *boundaries.last().unwrap() != 1.0 {
            return Err(invalid("segmentation must start at 0 and end at 1"));
        }
        if boundaries.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("segment boundaries must be strictly increasing"));
        }
        Ok(Self { boundaries, closure })
    }

    /// `segments` equal-length segments.
    pub fn equal(segments: usize) -> Result<Self> {
        if segments == 0 {
            return Err(invalid("need at least one segment"));
        }
        let mut b: Vec<f64> = (0..=segments).map(|m| m as f64 / segments as f64).collect();
        b[segments] = 1.0;
        Self::new(b)
    }

    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    pub fn closure(&self) -> Closure {
        self.closure
    }

    pub fn num_segments(&self) -> usize {
        self.boundaries.len() - 1
    }

    pub fn lengths(&self) -> Vec<f64> {
        self.boundaries.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Zero-based index of the segment containing `t`.
    pub fn segment_of(&self, t: f64) -> usize {
        let m = self.num_segments();
        match self.closure {
            Closure::RightClosed => {
                // first boundary index b >= 1 with t <= boundaries[b]
                let pos = self.boundaries[1..].partition_point(|&b| b < t);
                pos.min(m - 1)
            }
            Closure::LeftClosed => {
                let pos = self.boundaries[1..].partition_point(|&b| b <= t);
                pos.min(m - 1)
            }
        }
    }

    /// Segment index of every grid point.
    pub fn assign(&self, grid: &TimeGrid) -> Vec<usize> {
        grid.points().iter().map(|&t| self.segment_of(t)).collect()
    }

    /// Checks that each segment contains at least one grid point.
    pub fn check_covers(&self, grid: &TimeGrid) -> Result<Vec<usize>> {
        let idx = self.assign(grid);
        let mut counts = vec![0usize; self.num_segments()];
        for &m in &idx {
            counts[m] += 1;
        }
        if let Some(m) = counts.iter().position(|&c| c == 0) {
            return Err(invalid(format!("segment {m} contains no grid point")));
        }
        Ok(idx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equispaced_small_grids() {
        assert_eq!(TimeGrid::equispaced(2).unwrap().points(), &[0.0, 1.0]);
        assert_eq!(TimeGrid::equispaced(3).unwrap().points(), &[0.0, 0.5, 1.0]);
        let g = TimeGrid::equispaced(100).unwrap();
        assert_eq!(g.len(), 100);
        for h in g.spacing() {
            assert!((h - 1.0 / 99.0).abs() < 1e-15);
        }
        assert!(TimeGrid::equispaced(1).is_err());
    }

    #[test]
    fn grid_rejects_bad_points() {
        assert!(TimeGrid::new(vec![0.0, 0.0, 1.0]).is_err());
        assert!(TimeGrid::new(vec![0.0, 1.5]).is_err());
        assert!(TimeGrid::new(vec![0.5]).is_err());
    }

    #[test]
    fn masked_weights_drop_incomplete_panels() {
        let g = TimeGrid::equispaced(5).unwrap();
        let w = g.masked_trapezoid_weights(&[true, true, false, true, true]);
        assert_eq!(w, vec![0.125, 0.125, 0.0, 0.125, 0.125]);
        assert!((g.trapezoid_weights().iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn segment_lookup_is_a_partition() {
        let s = Segmentation::new(vec![0.0, 0.1, 0.6, 1.0]).unwrap();
        assert_eq!(s.segment_of(0.0), 0);
        assert_eq!(s.segment_of(0.1), 0);
        assert_eq!(s.segment_of(0.10001), 1);
        assert_eq!(s.segment_of(0.6), 1);
        assert_eq!(s.segment_of(1.0), 2);

        let left = Segmentation::with_closure(vec![0.0, 0.5, 1.0], Closure::LeftClosed).unwrap();
        assert_eq!(left.segment_of(0.5), 1);
        assert_eq!(left.segment_of(0.4999), 0);
        assert_eq!(left.segment_of(1.0), 1);
    }

    #[test]
    fn empty_segment_is_rejected() {
        let g = TimeGrid::equispaced(3).unwrap();
        let s = Segmentation::new(vec![0.0, 0.6, 0.7, 1.0]).unwrap();
        assert!(s.check_covers(&g).is_err());
        assert!(Segmentation::equal(2).unwrap().check_covers(&g).is_ok());
    }
}
