//! Measurement update of the transitional grid map.
//!
//! Each observed cell fuses its predicted belief with the inverse sensor
//! model by `posterior ~ measurement * prediction / prior` per state,
//! followed by normalization and saturation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{validate_priors, CellBelief, Pose2D, Region, Scan, TgmMap};
use crate::kernel::TransitionKernel;
use crate::predict::predict;
use crate::raycast::{observe, ScanObservation};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InverseSensorModel {
    /// Occupied mass at a beam endpoint.
    pub p_hit_occupied: f64,
    /// Free mass in cells a beam passes through.
    pub p_miss_free: f64,
}

impl Default for InverseSensorModel {
    fn default() -> Self {
        Self {
            p_hit_occupied: 0.8,
            p_miss_free: 0.7,
        }
    }
}

impl InverseSensorModel {
    pub fn new(p_hit_occupied: f64, p_miss_free: f64) -> Result<Self> {
        for (name, p) in [("p_hit_occupied", p_hit_occupied), ("p_miss_free", p_miss_free)] {
            if !(p > 0.5 && p <= 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must lie in (0.5, 1], got {p}"
                )));
            }
        }
        Ok(Self {
            p_hit_occupied,
            p_miss_free,
        })
    }

    /// Measurement belief for one cell. Occupied mass is split between static
    /// and dynamic in the ratio of the priors.
    pub fn measurement(&self, prior: CellBelief, hit: bool) -> CellBelief {
        let occupied = if hit {
            self.p_hit_occupied
        } else {
            1.0 - self.p_miss_free
        };
        let total = prior.p_static + prior.p_dynamic;
        let static_share = if total > 0.0 {
            prior.p_static / total
        } else {
            0.5
        };
        let p_static = occupied * static_share;
        CellBelief {
            p_static,
            p_dynamic: occupied - p_static,
        }
    }
}

/// Per-state clamping intervals applied after each update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaturationLimits {
    pub static_range: (f64, f64),
    pub dynamic_range: (f64, f64),
}

impl SaturationLimits {
    pub fn new(static_range: (f64, f64), dynamic_range: (f64, f64)) -> Result<Self> {
        for (lo, hi) in [static_range, dynamic_range] {
            if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "saturation range [{lo}, {hi}] is not a sub-interval of [0, 1]"
                )));
            }
        }
        if static_range.0 + dynamic_range.0 > 1.0 {
            return Err(Error::InvalidParameter(
                "lower saturation limits leave no room on the simplex".into(),
            ));
        }
        Ok(Self {
            static_range,
            dynamic_range,
        })
    }

    /// No clamping.
    pub fn none() -> Self {
        Self {
            static_range: (0.0, 1.0),
            dynamic_range: (0.0, 1.0),
        }
    }
}

impl Default for SaturationLimits {
    /// `p_static` in 0 to 0.95, `p_dynamic` in 0.05 to 1.
    fn default() -> Self {
        Self {
            static_range: (0.0, 0.95),
            dynamic_range: (0.05, 1.0),
        }
    }
}

/// Clamps each occupied state into its range. If that pushes the pair off
/// the simplex, the excess comes out of the component that was not clamped.
pub fn apply_saturation(belief: CellBelief, limits: &SaturationLimits) -> CellBelief {
    let (slo, shi) = limits.static_range;
    let (dlo, dhi) = limits.dynamic_range;
    let mut s = belief.p_static.clamp(slo, shi);
    let mut d = belief.p_dynamic.clamp(dlo, dhi);
    let s_bound = s != belief.p_static;
    let d_bound = d != belief.p_dynamic;
    let excess = s + d - 1.0;
    if excess > 0.0 {
        match (s_bound, d_bound) {
            (true, false) => d = (d - excess).max(dlo),
            (false, true) => s = (s - excess).max(slo),
            (false, false) => {
                let total = s + d;
                s -= excess * s / total;
                d -= excess * d / total;
            }
            (true, true) => {}
        }
        if s + d > 1.0 {
            s = 1.0 - d;
        }
    }
    CellBelief {
        p_static: s,
        p_dynamic: d,
    }
}

/// Fuses a predicted belief with a measurement belief, then saturates.
///
/// Fails with [`Error::DegenerateUpdate`] when measurement and prediction
/// leave no common state with nonzero mass.
pub fn update_cell(
    prediction: CellBelief,
    measurement: CellBelief,
    prior: CellBelief,
    limits: &SaturationLimits,
) -> Result<CellBelief> {
    if !(prior.p_static > 0.0 && prior.p_dynamic > 0.0 && prior.p_free() > 0.0) {
        return Err(Error::InvalidPriors {
            prior_static: prior.p_static,
            prior_dynamic: prior.p_dynamic,
            reason: "every state needs a positive prior to fuse measurements",
        });
    }
    let s = measurement.p_static * prediction.p_static / prior.p_static;
    let d = measurement.p_dynamic * prediction.p_dynamic / prior.p_dynamic;
    let f = measurement.p_free().max(0.0) * prediction.p_free().max(0.0) / prior.p_free();
    let total = s + d + f;
    if !(total > 0.0) {
        return Err(Error::DegenerateUpdate);
    }
    let fused = CellBelief {
        p_static: s / total,
        p_dynamic: d / total,
    };
    Ok(apply_saturation(fused, limits))
}

/// Measurement beliefs for the cells one scan observes, sorted by index.
pub fn inverse_sensor_model(
    scan: &Scan,
    pose: &Pose2D,
    map: &TgmMap,
    ism: &InverseSensorModel,
) -> Vec<(usize, CellBelief)> {
    measurements(&observe(map.geometry(), scan, pose), map.prior(), ism)
}

/// Measurement beliefs for already traced cells, sorted by index.
pub fn measurements(
    obs: &ScanObservation,
    prior: CellBelief,
    ism: &InverseSensorModel,
) -> Vec<(usize, CellBelief)> {
    let hit = ism.measurement(prior, true);
    let free = ism.measurement(prior, false);
    let mut out: Vec<(usize, CellBelief)> = obs
        .hits
        .iter()
        .map(|&i| (i, hit))
        .chain(obs.frees.iter().map(|&i| (i, free)))
        .collect();
    out.sort_unstable_by_key(|(i, _)| *i);
    out
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepStats {
    /// Cells with a measurement this step.
    pub observed: usize,
    /// Cells clipped back onto the simplex by the prediction.
    pub clipped: usize,
    /// Contradictory updates that fell back to the prior.
    pub degenerate: usize,
}

/// Prediction and measurement update with fixed model parameters.
#[derive(Debug, Clone)]
pub struct TgmFilter {
    pub kernel: TransitionKernel,
    pub ism: InverseSensorModel,
    pub limits: SaturationLimits,
}

impl TgmFilter {
    pub fn new(kernel: TransitionKernel, ism: InverseSensorModel, limits: SaturationLimits) -> Self {
        Self {
            kernel,
            ism,
            limits,
        }
    }

    /// Predicts `map` one step and fuses `scan` taken from `pose`. Unobserved
    /// cells keep their predicted belief.
    pub fn step(
        &self,
        map: &TgmMap,
        scan: &Scan,
        pose: &Pose2D,
        region: Option<Region>,
    ) -> Result<(TgmMap, StepStats)> {
        self.step_observed(map, &observe(map.geometry(), scan, pose), region)
    }

    /// [`TgmFilter::step`] for a scan whose cells were already traced.
    pub fn step_observed(
        &self,
        map: &TgmMap,
        obs: &ScanObservation,
        region: Option<Region>,
    ) -> Result<(TgmMap, StepStats)> {
        let prior = map.prior();
        validate_priors(prior.p_static, prior.p_dynamic)?;
        let prediction = predict(map, &self.kernel, region)?;
        let mut stats = StepStats {
            clipped: prediction.clipped,
            ..StepStats::default()
        };
        let mut next = prediction.into_map(map);
        for (i, measurement) in measurements(obs, prior, &self.ism) {
            let predicted = next.belief_at(i);
            let posterior = match update_cell(predicted, measurement, prior, &self.limits) {
                Ok(b) => b,
                Err(Error::DegenerateUpdate) => {
                    stats.degenerate += 1;
                    prior
                }
                Err(e) => return Err(e),
            };
            next.set_belief_at(i, posterior);
            stats.observed += 1;
        }
        Ok((next, stats))
    }
}

/// Free-function form of [`TgmFilter::step`].
#[allow(clippy::too_many_arguments)]
pub fn step(
    map: &TgmMap,
    scan: &Scan,
    pose: &Pose2D,
    kernel: &TransitionKernel,
    ism: &InverseSensorModel,
    limits: &SaturationLimits,
    region: Option<Region>,
) -> Result<(TgmMap, StepStats)> {
    TgmFilter::new(kernel.clone(), *ism, *limits).step(map, scan, pose, region)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Beam, CellIndex, GridGeometry, Point2};
    use proptest::prelude::*;

    fn b(s: f64, d: f64) -> CellBelief {
        CellBelief::new(s, d).unwrap()
    }

    fn close(a: CellBelief, b: CellBelief, tol: f64) -> bool {
        (a.p_static - b.p_static).abs() < tol && (a.p_dynamic - b.p_dynamic).abs() < tol
    }

    #[test]
    fn ism_splits_by_prior_ratio() {
        let ism = InverseSensorModel::default();
        let m = ism.measurement(b(0.3, 0.3), true);
        assert!(close(m, b(0.4, 0.4), 1e-15));
        let m = ism.measurement(b(0.6, 0.2), true);
        assert!(close(m, b(0.6, 0.2), 1e-15));
        let m = ism.measurement(b(0.3, 0.3), false);
        assert!(close(m, b(0.15, 0.15), 1e-15));
        assert!((m.p_free() - 0.7).abs() < 1e-15);
    }

    #[test]
    fn ism_rejects_uninformative_constants() {
        assert!(InverseSensorModel::new(0.5, 0.7).is_err());
        assert!(InverseSensorModel::new(0.8, 1.1).is_err());
        assert!(InverseSensorModel::new(1.0, 0.51).is_ok());
    }

    #[test]
    fn agreeing_occupied_observations_sharpen() {
        let out = update_cell(b(0.4, 0.4), b(0.4, 0.4), b(0.3, 0.3), &SaturationLimits::none())
            .unwrap();
        // unnormalized (0.16/0.3, 0.16/0.3, 0.04/0.4) = (8/15, 8/15, 1/10)
        let total = 8.0 / 15.0 * 2.0 + 0.1;
        assert!((out.p_static - (8.0 / 15.0) / total).abs() < 1e-12);
        assert!((out.p_static - 0.457_142_857_142_857).abs() < 1e-12);
        assert!((out.p_free() - 0.085_714_285_714_285_7).abs() < 1e-12);
    }

    #[test]
    fn uninformative_sides_pass_through() {
        let prior = b(0.3, 0.3);
        let x = b(0.12, 0.7);
        let none = SaturationLimits::none();
        assert!(close(update_cell(x, prior, prior, &none).unwrap(), x, 1e-12));
        assert!(close(update_cell(prior, x, prior, &none).unwrap(), x, 1e-12));
    }

    #[test]
    fn contradictory_certainties_are_degenerate() {
        let r = update_cell(b(1.0, 0.0), b(0.0, 0.0), b(0.3, 0.3), &SaturationLimits::none());
        assert!(matches!(r, Err(Error::DegenerateUpdate)));
        let r = update_cell(b(0.2, 0.2), b(0.2, 0.2), b(0.5, 0.0), &SaturationLimits::none());
        assert!(matches!(r, Err(Error::InvalidPriors { .. })));
    }

    #[test]
    fn saturation_reference_cases() {
        let lim = SaturationLimits::default();
        let out = apply_saturation(b(0.99, 0.005), &lim);
        assert_eq!((out.p_static, out.p_dynamic), (0.95, 0.05));
        let inside = b(0.4, 0.3);
        assert_eq!(apply_saturation(inside, &lim), inside);
        let out = apply_saturation(b(0.0, 0.99), &lim);
        assert_eq!((out.p_static, out.p_dynamic), (0.0, 0.99));
    }

    #[test]
    fn saturation_removes_excess_from_the_free_component() {
        let lim = SaturationLimits::new((0.0, 1.0), (0.05, 1.0)).unwrap();
        let out = apply_saturation(b(1.0, 0.0), &lim);
        assert_eq!(out.p_dynamic, 0.05);
        assert!((out.p_static - 0.95).abs() < 1e-15);
        assert!(SaturationLimits::new((0.6, 1.0), (0.5, 1.0)).is_err());
        assert!(SaturationLimits::new((0.5, 0.4), (0.0, 1.0)).is_err());
    }

    #[test]
    fn repeated_hits_without_motion_keep_static_and_dynamic_tied() {
        let prior = b(0.3, 0.3);
        let ism = InverseSensorModel::default();
        let hit = ism.measurement(prior, true);
        let mut x = prior;
        for _ in 0..30 {
            x = update_cell(x, hit, prior, &SaturationLimits::none()).unwrap();
            assert!((x.p_static - x.p_dynamic).abs() < 1e-12);
        }
        assert!(x.p_free() < 1e-6);
    }

    fn corridor() -> (TgmMap, Scan, Pose2D) {
        let g = GridGeometry::new(Point2::new(0.0, 0.0), 1.0, 20, 7).unwrap();
        let map = TgmMap::new(g, 0.3, 0.3).unwrap();
        let scan = Scan::new(
            vec![Beam { bearing: 0.0, range: 10.0, is_max_range: false }],
            15.0,
        )
        .unwrap();
        (map, scan, Pose2D::new(2.0, 3.0, 0.0))
    }

    #[test]
    fn max_range_scan_clears_traversed_cells_only() {
        let (map, _, pose) = corridor();
        let scan = Scan::new(
            vec![Beam { bearing: 0.0, range: 6.0, is_max_range: true }],
            6.0,
        )
        .unwrap();
        let filter = TgmFilter::new(
            TransitionKernel::uniform_disk_cells(1.0).unwrap(),
            InverseSensorModel::default(),
            SaturationLimits::default(),
        );
        let (next, stats) = filter.step(&map, &scan, &pose, None).unwrap();
        let predicted = predict(&map, &filter.kernel, None).unwrap().into_map(&map);
        assert_eq!(stats.observed, 7);
        for x in 2..=8 {
            let c = CellIndex::new(x, 3);
            assert!(next.belief(c).p_free() > predicted.belief(c).p_free());
        }
        assert_eq!(next.belief(CellIndex::new(2, 5)), predicted.belief(CellIndex::new(2, 5)));
    }

    #[test]
    fn wall_saturates_below_certainty() {
        let (mut map, scan, pose) = corridor();
        let filter = TgmFilter::new(
            TransitionKernel::uniform_disk_cells(1.0).unwrap(),
            InverseSensorModel::default(),
            SaturationLimits::default(),
        );
        let wall = CellIndex::new(12, 3);
        let mut last = 0.0;
        for _ in 0..20 {
            map = filter.step(&map, &scan, &pose, None).unwrap().0;
            let p = map.belief(wall).p_static;
            assert!(p >= last - 1e-12 && p <= 0.95);
            last = p;
        }
        assert!((last - 0.95).abs() < 1e-9, "{last}");
    }

    #[test]
    fn scan_outside_the_grid_equals_prediction() {
        let (mut map, _, _) = corridor();
        map.set_belief(CellIndex::new(5, 3), b(0.2, 0.7)).unwrap();
        let scan = Scan::new(
            vec![Beam { bearing: 0.0, range: 3.0, is_max_range: false }],
            5.0,
        )
        .unwrap();
        let pose = Pose2D::new(-10.0, 3.0, std::f64::consts::PI);
        let filter = TgmFilter::new(
            TransitionKernel::uniform_disk_cells(1.5).unwrap(),
            InverseSensorModel::default(),
            SaturationLimits::default(),
        );
        let (next, stats) = filter.step(&map, &scan, &pose, None).unwrap();
        let predicted = predict(&map, &filter.kernel, None).unwrap().into_map(&map);
        assert_eq!(stats.observed, 0);
        assert_eq!(next.static_layer(), predicted.static_layer());
        assert_eq!(next.dynamic_layer(), predicted.dynamic_layer());
    }

    #[test]
    fn departed_obstacle_drains_from_its_old_cell() {
        let (mut map, _, pose) = corridor();
        let filter = TgmFilter::new(
            TransitionKernel::uniform_disk_cells(1.0).unwrap(),
            InverseSensorModel::default(),
            SaturationLimits::default(),
        );
        let at = |r: f64| {
            Scan::new(vec![Beam { bearing: 0.0, range: r, is_max_range: false }], 15.0).unwrap()
        };
        let a = CellIndex::new(10, 3);
        for _ in 0..10 {
            map = filter.step(&map, &at(8.0), &pose, None).unwrap().0;
        }
        let before = map.belief(a);
        assert!(before.p_free() < 0.1);
        for _ in 0..10 {
            map = filter.step(&map, &at(9.0), &pose, None).unwrap().0;
        }
        let after = map.belief(a);
        assert!(after.p_static < before.p_static);
        assert!(after.p_static < 0.5);
        assert!(after.p_free() > 0.5);
        // regression snapshot of this exact run
        assert_eq!((before.p_static, before.p_dynamic), (0.95, 0.05));
        assert!((after.p_static - 3.937_294_945_189_824e-4).abs() < 1e-12);
        assert_eq!(after.p_dynamic, 0.05);
    }

    proptest! {
        #[test]
        fn update_is_symmetric_and_normalized(ps in 0.0f64..1.0, pt in 0.0f64..1.0,
                                              ms in 0.0f64..1.0, mt in 0.0f64..1.0) {
            let p = b(ps, pt * (1.0 - ps));
            let m = b(ms, mt * (1.0 - ms));
            let prior = b(0.3, 0.3);
            let lim = SaturationLimits::default();
            if let (Ok(a), Ok(c)) = (update_cell(p, m, prior, &lim), update_cell(m, p, prior, &lim)) {
                prop_assert!(close(a, c, 1e-12));
                prop_assert!(a.is_valid());
                prop_assert!(a.p_static <= 0.95 + 1e-12 && a.p_dynamic >= 0.05 - 1e-12);
            }
        }
    }
}
