//! Transition distributions for dynamic cell content.
//!
//! `T[dx, dy]` is the probability that the content of a cell moves by
//! `(dx, dy)` cells in one time step when no static cell is involved.
//! `K` is `T` with the center zeroed and `K'` is `K` reflected through the
//! origin.

use crate::error::{Error, Result};
use crate::grid::{BinaryGrid, CellIndex};

/// Allowed deviation of `sum T` from one.
pub const KERNEL_SUM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionKernel {
    radius: usize,
    weights: Vec<f64>,
    off_center: Vec<f64>,
    off_center_flipped: Vec<f64>,
}

impl TransitionKernel {
    /// Builds a kernel from a `(2r+1)^2` row-major weight array indexed by
    /// `(dy + r) * (2r + 1) + (dx + r)`.
    pub fn from_weights(radius: usize, weights: Vec<f64>) -> Result<Self> {
        let side = 2 * radius + 1;
        if weights.len() != side * side {
            return Err(Error::InvalidKernel(format!(
                "expected {} weights for radius {radius}, got {}",
                side * side,
                weights.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(Error::InvalidKernel(format!("weight {w} is not a probability")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > KERNEL_SUM_TOLERANCE {
            return Err(Error::InvalidKernel(format!("weights sum to {total}, not 1")));
        }
        let center = radius * side + radius;
        let mut off_center = weights.clone();
        off_center[center] = 0.0;
        let mut off_center_flipped = off_center.clone();
        off_center_flipped.reverse();
        Ok(Self {
            radius,
            weights,
            off_center,
            off_center_flipped,
        })
    }

    /// Uniform distribution over every offset within `v_max * dt` meters.
    pub fn uniform_disk(v_max: f64, dt: f64, resolution: f64) -> Result<Self> {
        if !(v_max >= 0.0 && v_max.is_finite()) {
            return Err(Error::InvalidKernel(format!("v_max must be >= 0, got {v_max}")));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidKernel(format!("dt must be > 0, got {dt}")));
        }
        if !(resolution > 0.0 && resolution.is_finite()) {
            return Err(Error::InvalidKernel(format!(
                "resolution must be > 0, got {resolution}"
            )));
        }
        Self::uniform_disk_cells(v_max * dt / resolution)
    }

    /// Uniform disk with a radius given directly in cells.
    pub fn uniform_disk_cells(d_max_cells: f64) -> Result<Self> {
        if !(d_max_cells >= 0.0 && d_max_cells.is_finite()) {
            return Err(Error::InvalidKernel(format!(
                "disk radius must be >= 0, got {d_max_cells}"
            )));
        }
        // Offsets exactly on the circle count as inside.
        let limit = d_max_cells * d_max_cells * (1.0 + 1e-12) + 1e-12;
        let radius = limit.sqrt().floor() as usize;
        let r = radius as i64;
        let inside: Vec<bool> = (-r..=r)
            .flat_map(|dy| (-r..=r).map(move |dx| ((dx * dx + dy * dy) as f64) <= limit))
            .collect();
        let n = inside.iter().filter(|&&b| b).count();
        let w = 1.0 / n as f64;
        let mut weights: Vec<f64> = inside.iter().map(|&b| if b { w } else { 0.0 }).collect();
        // Absorb the rounding of n * (1/n) into the center weight.
        let total: f64 = weights.iter().sum();
        let center = radius * (2 * radius + 1) + radius;
        weights[center] += 1.0 - total;
        Self::from_weights(radius, weights)
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn side(&self) -> usize {
        2 * self.radius + 1
    }

    /// `T[0, 0]`.
    pub fn tau0(&self) -> f64 {
        self.weights[self.radius * self.side() + self.radius]
    }

    fn slot(&self, dx: i64, dy: i64) -> Option<usize> {
        let r = self.radius as i64;
        if dx.abs() > r || dy.abs() > r {
            return None;
        }
        Some(((dy + r) as usize) * self.side() + (dx + r) as usize)
    }

    /// `T[dx, dy]`, zero outside the support.
    pub fn weight(&self, dx: i64, dy: i64) -> f64 {
        self.slot(dx, dy).map_or(0.0, |i| self.weights[i])
    }

    /// `K[dx, dy]`.
    pub fn off_center(&self, dx: i64, dy: i64) -> f64 {
        self.slot(dx, dy).map_or(0.0, |i| self.off_center[i])
    }

    /// `K'[dx, dy] = K[-dx, -dy]`.
    pub fn off_center_flipped(&self, dx: i64, dy: i64) -> f64 {
        self.slot(dx, dy).map_or(0.0, |i| self.off_center_flipped[i])
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn off_center_weights(&self) -> &[f64] {
        &self.off_center
    }

    pub fn off_center_flipped_weights(&self) -> &[f64] {
        &self.off_center_flipped
    }

    /// Number of offsets with nonzero probability.
    pub fn support_size(&self) -> usize {
        self.weights.iter().filter(|&&w| w > 0.0).count()
    }

    /// Initial probability that content of `from` moves to `to`.
    pub fn tau(&self, from: CellIndex, to: CellIndex) -> f64 {
        self.weight(
            to.x as i64 - from.x as i64,
            to.y as i64 - from.y as i64,
        )
    }
}

/// Probability of the transition `from -> to` given a binary static map.
///
/// Transitions touching a static cell are blocked, static cells keep their
/// content, and blocked mass folds into staying put. Only cells inside the
/// grid take part in the fold.
pub fn transition_probability(
    kernel: &TransitionKernel,
    static_map: &BinaryGrid,
    from: CellIndex,
    to: CellIndex,
) -> f64 {
    let is_static = |c: CellIndex| static_map.get(c.x, c.y);
    if from != to {
        if is_static(from) || is_static(to) {
            return 0.0;
        }
        return kernel.tau(from, to);
    }
    if is_static(to) {
        return 1.0;
    }
    let r = kernel.radius() as i64;
    let mut blocked = 0.0;
    for dy in -r..=r {
        for dx in -r..=r {
            if dx == 0 && dy == 0 {
                continue;
            }
            let (kx, ky) = (to.x as i64 + dx, to.y as i64 + dy);
            if static_map.get_or_false(kx, ky) {
                blocked += kernel.weight(dx, dy);
            }
        }
    }
    kernel.tau0() + blocked
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Counts integer offsets with `dx^2 + dy^2 <= d^2` by brute force.
    fn count_disk(d: i64) -> usize {
        let mut n = 0;
        for dy in -d..=d {
            for dx in -d..=d {
                if dx * dx + dy * dy <= d * d {
                    n += 1;
                }
            }
        }
        n
    }

    #[test]
    fn sub_cell_speed_is_identity() {
        let k = TransitionKernel::uniform_disk(0.0, 0.1, 0.2).unwrap();
        assert_eq!(k.radius(), 0);
        assert_eq!(k.tau0(), 1.0);
        assert_eq!(k.support_size(), 1);
        let k = TransitionKernel::uniform_disk_cells(0.99).unwrap();
        assert_eq!((k.radius(), k.support_size()), (0, 1));
    }

    #[test]
    fn radius_one_is_von_neumann() {
        assert_eq!(count_disk(1), 5);
        let k = TransitionKernel::uniform_disk_cells(1.0).unwrap();
        assert_eq!(k.support_size(), 5);
        for (dx, dy) in [(0, 0), (1, 0), (-1, 0), (0, 1), (0, -1)] {
            assert!((k.weight(dx, dy) - 0.2).abs() < 1e-15);
        }
        assert_eq!(k.weight(1, 1), 0.0);
    }

    #[test]
    fn radius_two_has_thirteen_offsets() {
        assert_eq!(count_disk(2), 13);
        // 2 m/s * 0.1 s / 0.1 m = 2 cells, computed in floating point.
        let k = TransitionKernel::uniform_disk(2.0, 0.1, 0.1).unwrap();
        assert_eq!(k.radius(), 2);
        assert_eq!(k.support_size(), 13);
        for (dx, dy) in [(0, 0), (2, 0), (0, -2), (1, 1), (-1, 1), (1, 0)] {
            assert!((k.weight(dx, dy) - 1.0 / 13.0).abs() < 1e-15);
        }
        assert_eq!(k.weight(2, 1), 0.0);
        assert_eq!(k.off_center(0, 0), 0.0);
    }

    #[test]
    fn larger_disks_match_enumeration() {
        for d in 0..12 {
            let k = TransitionKernel::uniform_disk_cells(d as f64).unwrap();
            assert_eq!(k.support_size(), count_disk(d), "d = {d}");
            assert!((k.weights().iter().sum::<f64>() - 1.0).abs() < KERNEL_SUM_TOLERANCE);
        }
    }

    #[test]
    fn rejects_invalid_weights() {
        assert!(TransitionKernel::from_weights(1, vec![0.1; 9]).is_err());
        assert!(TransitionKernel::from_weights(1, vec![1.0; 4]).is_err());
        let mut w = vec![0.0; 9];
        w[4] = 1.5;
        w[0] = -0.5;
        assert!(TransitionKernel::from_weights(1, w).is_err());
        assert!(TransitionKernel::uniform_disk(1.0, 0.0, 0.2).is_err());
        assert!(TransitionKernel::uniform_disk(-1.0, 0.1, 0.2).is_err());
    }

    #[test]
    fn flipped_kernel_is_point_reflection() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut w: Vec<f64> = (0..25).map(|_| rng.random::<f64>()).collect();
        let s: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= s);
        let k = TransitionKernel::from_weights(2, w).unwrap();
        for dy in -2..=2 {
            for dx in -2..=2 {
                assert_eq!(k.off_center_flipped(dx, dy), k.off_center(-dx, -dy));
                if (dx, dy) != (0, 0) {
                    assert_eq!(k.off_center(dx, dy), k.weight(dx, dy));
                }
            }
        }
    }

    #[test]
    fn disk_is_axis_symmetric() {
        let k = TransitionKernel::uniform_disk_cells(3.7).unwrap();
        let r = k.radius() as i64;
        for dy in -r..=r {
            for dx in -r..=r {
                assert_eq!(k.weight(dx, dy), k.weight(-dx, dy));
                assert_eq!(k.weight(dx, dy), k.weight(dx, -dy));
                assert_eq!(k.off_center(dx, dy), k.off_center_flipped(dx, dy));
            }
        }
    }

    #[test]
    fn static_endpoints_block_transitions() {
        let k = TransitionKernel::uniform_disk_cells(2.0).unwrap();
        let mut s = BinaryGrid::new(7, 7);
        let (a, b) = (CellIndex::new(3, 3), CellIndex::new(4, 3));
        s.set(4, 3, true);
        assert_eq!(transition_probability(&k, &s, a, b), 0.0);
        assert_eq!(transition_probability(&k, &s, b, a), 0.0);
        assert_eq!(transition_probability(&k, &s, b, b), 1.0);
        s.set(4, 3, false);
        assert!((transition_probability(&k, &s, a, b) - 1.0 / 13.0).abs() < 1e-15);
    }

    #[test]
    fn enclosed_dynamic_content_stays() {
        let k = TransitionKernel::uniform_disk_cells(2.0).unwrap();
        let mut s = BinaryGrid::new(7, 7);
        for y in 0..7 {
            for x in 0..7 {
                s.set(x, y, (x, y) != (3, 3));
            }
        }
        let c = CellIndex::new(3, 3);
        let p = transition_probability(&k, &s, c, c);
        assert!((p - (1.0 / 13.0 + 12.0 / 13.0)).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn outgoing_mass_sums_to_one(seed in any::<u64>(), density in 0.0f64..1.0, d in 0.0f64..3.0) {
            let k = TransitionKernel::uniform_disk_cells(d).unwrap();
            let r = k.radius();
            let n = 2 * r + 5;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut s = BinaryGrid::new(n, n);
            for v in s.as_mut_slice() {
                *v = rng.random::<f64>() < density;
            }
            // interior source so the whole footprint is inside the grid
            let from = CellIndex::new(r + 2, r + 2);
            s.set(from.x, from.y, false);
            let mut total = 0.0;
            for y in 0..n {
                for x in 0..n {
                    total += transition_probability(&k, &s, from, CellIndex::new(x, y));
                }
            }
            prop_assert!((total - 1.0).abs() < 1e-12);
        }
    }
}
