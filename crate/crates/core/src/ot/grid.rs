use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::sync::Arc;

use crate::error::{Error, Result};

/// Default number of probability levels.
pub const DEFAULT_LEVELS: usize = 201;

/// Midpoint probability-level grid `u_j = (j - 0.5) / M`, `j = 1..=M`.
///
/// Every grid integral uses the flat quadrature weight `1/M`.
#[derive(Clone, Debug)]
pub struct LevelGrid {
    levels: Arc<[f64]>,
}

impl LevelGrid {
    pub fn new(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidArgument("grid needs at least one level".into()));
        }
        let mf = m as f64;
        let levels: Vec<f64> = (1..=m).map(|j| (j as f64 - 0.5) / mf).collect();
        Ok(Self { levels: levels.into() })
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn level(&self, j: usize) -> f64 {
        self.levels[j]
    }

    pub fn first(&self) -> f64 {
        self.levels[0]
    }

    pub fn last(&self) -> f64 {
        self.levels[self.levels.len() - 1]
    }

    /// Quadrature weight attached to every node.
    pub fn weight(&self) -> f64 {
        1.0 / self.len() as f64
    }

    pub fn check_same(&self, other: &LevelGrid) -> Result<()> {
        if self.len() == other.len() {
            Ok(())
        } else {
            Err(Error::GridMismatch(self.len(), other.len()))
        }
    }

    /// Flat-weight L2 norm of a curve sampled on the grid.
    pub fn l2_norm(&self, values: &[f64]) -> f64 {
        (values.iter().map(|v| v * v).sum::<f64>() * self.weight()).sqrt()
    }

    /// Piecewise-linear interpolation of grid values at level `u`, clamped to
    /// the end values outside `[u_1, u_M]`.
    pub fn interpolate(&self, values: &[f64], u: f64) -> f64 {
        debug_assert_eq!(values.len(), self.len());
        let m = self.len();
        if m == 1 || u <= self.first() {
            return values[0];
        }
        if u >= self.last() {
            return values[m - 1];
        }
        // Node j (0-based) sits at position j in the scaled coordinate.
        let pos = u * m as f64 - 0.5;
        let mut i = pos.floor() as usize;
        let mut frac = pos - i as f64;
        if frac > 1.0 - 1e-12 {
            i += 1;
            frac = 0.0;
        }
        if i >= m - 1 {
            return values[m - 1];
        }
        if frac < 1e-12 {
            return values[i];
        }
        values[i] + frac * (values[i + 1] - values[i])
    }
}

impl PartialEq for LevelGrid {
    fn eq(&self, other: &Self) -> bool {
        self.len() == other.len()
    }
}

impl Eq for LevelGrid {}

impl Serialize for LevelGrid {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_u64(self.len() as u64)
    }
}

impl<'de> Deserialize<'de> for LevelGrid {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let m = u64::deserialize(d)? as usize;
        LevelGrid::new(m).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn midpoints_strictly_inside() {
        let g = LevelGrid::new(201).unwrap();
        assert_eq!(g.len(), 201);
        assert!(g.first() > 0.0 && g.last() < 1.0);
        assert!(g.levels().windows(2).all(|w| w[0] < w[1]));
        assert_eq!(g.level(100), 0.5);
    }

    #[test]
    fn zero_levels_rejected() {
        assert!(LevelGrid::new(0).is_err());
    }

    #[test]
    fn interpolation_hits_nodes_and_clamps() {
        let g = LevelGrid::new(4).unwrap();
        let v = [0.0, 1.0, 4.0, 9.0];
        for (j, &u) in g.levels().iter().enumerate() {
            assert_eq!(g.interpolate(&v, u), v[j]);
        }
        assert_eq!(g.interpolate(&v, 0.0), 0.0);
        assert_eq!(g.interpolate(&v, 1.0), 9.0);
        // halfway between u_2 = 0.375 and u_3 = 0.625
        assert!((g.interpolate(&v, 0.5) - 2.5).abs() < 1e-15);
    }
}
