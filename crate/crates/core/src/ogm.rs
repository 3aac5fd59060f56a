//! Log-odds occupancy grids, plain and clamped, used as baselines.

use crate::error::{Error, Result};
use crate::filter::InverseSensorModel;
use crate::grid::{Field, GridGeometry, Pose2D, Scan};
use crate::raycast::{observe, ScanObservation};
use crate::render::{render_probability, Raster};

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

pub fn logistic(l: f64) -> f64 {
    1.0 / (1.0 + (-l).exp())
}

/// Binary occupancy grid with prior 0.5, stored as log odds.
#[derive(Debug, Clone, PartialEq)]
pub struct OgmMap {
    geometry: GridGeometry,
    log_odds: Field,
    clamp: Option<(f64, f64)>,
}

impl OgmMap {
    /// Plain occupancy grid without saturation.
    pub fn new(geometry: GridGeometry) -> Self {
        let log_odds = Field::filled(geometry.width(), geometry.height(), 0.0);
        Self {
            geometry,
            log_odds,
            clamp: None,
        }
    }

    /// Occupancy grid whose probabilities are held inside `[lo, hi]`.
    /// The full range `[0, 1]` means no clamping.
    pub fn clamped(geometry: GridGeometry, lo: f64, hi: f64) -> Result<Self> {
        if !(0.0 <= lo && lo < 0.5 && 0.5 < hi && hi <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "clamp [{lo}, {hi}] must straddle 0.5 inside [0, 1]"
            )));
        }
        let mut map = Self::new(geometry);
        if lo > 0.0 || hi < 1.0 {
            map.clamp = Some((lo, hi));
        }
        Ok(map)
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn clamp(&self) -> Option<(f64, f64)> {
        self.clamp
    }

    pub fn log_odds(&self) -> &Field {
        &self.log_odds
    }

    pub fn probability_at(&self, idx: usize) -> f64 {
        let p = logistic(self.log_odds.as_slice()[idx]);
        match self.clamp {
            Some((lo, hi)) => p.clamp(lo, hi),
            None => p,
        }
    }

    pub fn probability_field(&self) -> Field {
        let data = (0..self.geometry.len()).map(|i| self.probability_at(i)).collect();
        Field::from_vec(self.geometry.width(), self.geometry.height(), data)
            .expect("field matches its own geometry")
    }

    /// Adds the log-odds evidence of one scan's observed cells.
    pub fn apply_observation(&mut self, obs: &ScanObservation, ism: &InverseSensorModel) {
        let hit = logit(ism.p_hit_occupied);
        let free = logit(1.0 - ism.p_miss_free);
        let bounds = self.clamp.map(|(lo, hi)| (logit(lo), logit(hi)));
        let cells = self.log_odds.as_mut_slice();
        let groups = [(&obs.hits, hit), (&obs.frees, free)];
        for (list, delta) in groups {
            for &i in list.iter() {
                let mut l = cells[i] + delta;
                if let Some((lo, hi)) = bounds {
                    l = l.clamp(lo, hi);
                }
                cells[i] = l;
            }
        }
    }

    /// Integrates `scan` taken from `pose`. Returns the number of observed cells.
    pub fn update(&mut self, scan: &Scan, pose: &Pose2D, ism: &InverseSensorModel) -> usize {
        let obs = observe(&self.geometry, scan, pose);
        self.apply_observation(&obs, ism);
        obs.len()
    }

    /// Gray scale image, white for free and black for occupied.
    pub fn render(&self) -> Raster {
        render_probability(&self.probability_field())
    }
}

/// Value-returning form of [`OgmMap::update`].
pub fn ogm_step(map: &OgmMap, scan: &Scan, pose: &Pose2D, ism: &InverseSensorModel) -> OgmMap {
    let mut next = map.clone();
    next.update(scan, pose, ism);
    next
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Point2;
    use proptest::prelude::*;

    fn geom() -> GridGeometry {
        GridGeometry::new(Point2::new(0.0, 0.0), 1.0, 4, 1).unwrap()
    }

    fn hit() -> ScanObservation {
        ScanObservation { hits: vec![0], frees: vec![] }
    }

    fn free() -> ScanObservation {
        ScanObservation { hits: vec![], frees: vec![0] }
    }

    #[test]
    fn one_hit_from_uniform_prior() {
        let mut m = OgmMap::new(geom());
        m.apply_observation(&hit(), &InverseSensorModel::default());
        assert!((m.probability_at(0) - 0.8).abs() < 1e-12);
        assert_eq!(m.probability_at(1), 0.5);
    }

    #[test]
    fn unlearning_takes_as_long_as_learning() {
        let ism = InverseSensorModel::new(0.8, 0.8).unwrap();
        let mut m = OgmMap::new(geom());
        for _ in 0..20 {
            m.apply_observation(&hit(), &ism);
        }
        assert!(m.probability_at(0) > 0.9999);
        for _ in 0..20 {
            m.apply_observation(&free(), &ism);
        }
        assert!((m.probability_at(0) - 0.5).abs() < 1e-9);
    }

    #[test]
    fn clamped_grid_flips_quickly() {
        let ism = InverseSensorModel::new(0.8, 0.8).unwrap();
        let mut m = OgmMap::clamped(geom(), 0.05, 0.95).unwrap();
        for _ in 0..20 {
            m.apply_observation(&hit(), &ism);
        }
        assert!((m.probability_at(0) - 0.95).abs() < 1e-12);
        for _ in 0..3 {
            m.apply_observation(&free(), &ism);
        }
        assert!(m.probability_at(0) < 0.5);
    }

    #[test]
    fn full_range_clamp_is_plain() {
        let m = OgmMap::clamped(geom(), 0.0, 1.0).unwrap();
        assert_eq!(m.clamp(), None);
        assert!(OgmMap::clamped(geom(), 0.6, 0.9).is_err());
    }

    #[test]
    fn render_is_gray() {
        let mut m = OgmMap::new(geom());
        m.apply_observation(&hit(), &InverseSensorModel::default());
        let r = m.render();
        assert_eq!(r.cell_pixel(0, 0), [51, 51, 51]);
        assert_eq!(r.cell_pixel(1, 0), [128, 128, 128]);
    }

    proptest! {
        #[test]
        fn plain_update_commutes(seq in proptest::collection::vec(any::<bool>(), 0..30)) {
            let ism = InverseSensorModel::default();
            let mut a = OgmMap::new(geom());
            let mut b = OgmMap::new(geom());
            for &h in &seq {
                a.apply_observation(&if h { hit() } else { free() }, &ism);
            }
            let mut sorted = seq.clone();
            sorted.sort();
            for &h in &sorted {
                b.apply_observation(&if h { hit() } else { free() }, &ism);
            }
            prop_assert!((a.log_odds().as_slice()[0] - b.log_odds().as_slice()[0]).abs() < 1e-9);
        }

        #[test]
        fn clamped_stays_in_range(seq in proptest::collection::vec(any::<bool>(), 1..40)) {
            let ism = InverseSensorModel::default();
            let mut m = OgmMap::clamped(geom(), 0.05, 0.95).unwrap();
            for &h in &seq {
                m.apply_observation(&if h { hit() } else { free() }, &ism);
                let p = m.probability_at(0);
                prop_assert!((0.05..=0.95).contains(&p));
            }
        }
    }
}
