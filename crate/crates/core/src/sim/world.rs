//! Declarative scenario description and its rasterized ground truth.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::{InverseSensorModel, SaturationLimits};
use crate::grid::{BinaryGrid, CellBelief, GridGeometry, Point2, Pose2D};
use crate::raycast::GridRay;

/// Tolerance on speed and timing checks.
const EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldSpec {
    pub name: String,
    /// Simulated seconds.
    pub duration: f64,
    pub grid: GridSpec,
    pub sensor: SensorSpec,
    pub filter: FilterSpec,
    #[serde(default)]
    pub rects: Vec<RectSpec>,
    #[serde(default)]
    pub walls: Vec<WallSpec>,
    #[serde(default)]
    pub obstacles: Vec<ObstacleSpec>,
    pub ego: EgoSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub min: [f64; 2],
    pub max: [f64; 2],
    pub resolution: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorSpec {
    pub beam_count: usize,
    /// Field of view in radians, centered on the heading.
    pub fov: f64,
    pub max_range: f64,
    /// Standard deviation of the Gaussian range noise, meters.
    pub noise_sigma: f64,
    /// Scans per second.
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSpec {
    pub prior_static: f64,
    pub prior_dynamic: f64,
    pub static_limits: [f64; 2],
    pub dynamic_limits: [f64; 2],
    /// Fastest speed any obstacle may reach, m/s. Sets the kernel radius.
    pub v_max: f64,
    pub p_hit_occupied: f64,
    pub p_miss_free: f64,
    /// Probability bounds of the clamped occupancy baseline.
    pub ogm_clamp: [f64; 2],
}

impl Default for FilterSpec {
    fn default() -> Self {
        Self {
            prior_static: 0.3,
            prior_dynamic: 0.3,
            static_limits: [0.0, 0.95],
            dynamic_limits: [0.05, 1.0],
            v_max: 10.0,
            p_hit_occupied: 0.8,
            p_miss_free: 0.7,
            ogm_clamp: [0.05, 0.95],
        }
    }
}

impl FilterSpec {
    pub fn ism(&self) -> Result<InverseSensorModel> {
        InverseSensorModel::new(self.p_hit_occupied, self.p_miss_free)
    }

    pub fn limits(&self) -> Result<SaturationLimits> {
        SaturationLimits::new(
            (self.static_limits[0], self.static_limits[1]),
            (self.dynamic_limits[0], self.dynamic_limits[1]),
        )
    }

    pub fn prior(&self) -> CellBelief {
        CellBelief {
            p_static: self.prior_static,
            p_dynamic: self.prior_dynamic,
        }
    }
}

/// Filled axis-aligned box. Cells whose centers lie inside are occupied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RectSpec {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

/// Line segment; every cell it passes through is occupied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WallSpec {
    pub from: [f64; 2],
    pub to: [f64; 2],
}

/// Axis-aligned rectangular mover following timed waypoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObstacleSpec {
    pub name: String,
    /// Extent along x and y, meters.
    pub size: [f64; 2],
    pub waypoints: Vec<Waypoint>,
}

/// Position of a footprint center at time `t`. Motion between waypoints is
/// linear, so each segment has constant speed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Waypoint {
    pub t: f64,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EgoSpec {
    pub waypoints: Vec<PoseWaypoint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseWaypoint {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl WorldSpec {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        Ok(toml::from_str(s)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_toml_string()?)?;
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.sensor.rate
    }

    /// Ticks at `t = k * dt` for `k` in `0..frame_count()`, covering the
    /// duration inclusively.
    pub fn frame_count(&self) -> usize {
        (self.duration / self.dt() + EPS).floor() as usize + 1
    }

    pub fn geometry(&self) -> Result<GridGeometry> {
        GridGeometry::covering(
            Point2::new(self.grid.min[0], self.grid.min[1]),
            Point2::new(self.grid.max[0], self.grid.max[1]),
            self.grid.resolution,
        )
    }

    /// Bearings of the scan beams, sensor frame.
    pub fn bearings(&self) -> Vec<f64> {
        let n = self.sensor.beam_count;
        let fov = self.sensor.fov;
        (0..n)
            .map(|k| -0.5 * fov + fov * (k as f64 + 0.5) / n as f64)
            .collect()
    }
}

fn interpolate<T: Copy>(points: &[T], t: f64, time: impl Fn(&T) -> f64, lerp: impl Fn(&T, &T, f64) -> T) -> T {
    let first = &points[0];
    if t <= time(first) {
        return *first;
    }
    for w in points.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if t <= time(b) {
            let f = (t - time(a)) / (time(b) - time(a));
            return lerp(a, b, f);
        }
    }
    *points.last().expect("non-empty schedule")
}

impl ObstacleSpec {
    pub fn position_at(&self, t: f64) -> Point2 {
        let wp = interpolate(&self.waypoints, t, |w| w.t, |a, b, f| Waypoint {
            t,
            x: a.x + f * (b.x - a.x),
            y: a.y + f * (b.y - a.y),
        });
        Point2::new(wp.x, wp.y)
    }

    pub fn max_speed(&self) -> f64 {
        self.waypoints
            .windows(2)
            .map(|w| (w[1].x - w[0].x).hypot(w[1].y - w[0].y) / (w[1].t - w[0].t))
            .fold(0.0, f64::max)
    }
}

impl EgoSpec {
    pub fn stationary(pose: Pose2D) -> Self {
        Self {
            waypoints: vec![PoseWaypoint {
                t: 0.0,
                x: pose.x,
                y: pose.y,
                theta: pose.theta,
            }],
        }
    }

    pub fn pose_at(&self, t: f64) -> Pose2D {
        let wp = interpolate(&self.waypoints, t, |w| w.t, |a, b, f| PoseWaypoint {
            t,
            x: a.x + f * (b.x - a.x),
            y: a.y + f * (b.y - a.y),
            theta: a.theta + f * crate::grid::normalize_angle(b.theta - a.theta),
        });
        Pose2D::new(wp.x, wp.y, wp.theta)
    }
}

/// Marks the cells whose centers lie in the closed box `[min, max]`.
pub fn rasterize_box(geom: &GridGeometry, grid: &mut BinaryGrid, min: Point2, max: Point2) {
    let (gx0, gy0) = geom.world_to_grid(min);
    let (gx1, gy1) = geom.world_to_grid(max);
    let lo = |g: f64| (g - EPS).ceil().max(0.0);
    let x_lo = lo(gx0) as usize;
    let y_lo = lo(gy0) as usize;
    let x_hi = (gx1 + EPS).floor().min(geom.width() as f64 - 1.0);
    let y_hi = (gy1 + EPS).floor().min(geom.height() as f64 - 1.0);
    if x_hi < 0.0 || y_hi < 0.0 {
        return;
    }
    for y in y_lo..=y_hi as usize {
        for x in x_lo..=x_hi as usize {
            grid.set(x, y, true);
        }
    }
}

/// Validated scenario with its static raster.
#[derive(Debug, Clone)]
pub struct World {
    spec: WorldSpec,
    geometry: GridGeometry,
    truth_static: Arc<BinaryGrid>,
}

impl World {
    pub fn new(spec: WorldSpec) -> Result<Self> {
        let geometry = spec.geometry()?;
        check_spec(&spec)?;
        let mut grid = BinaryGrid::new(geometry.width(), geometry.height());
        for r in &spec.rects {
            rasterize_box(
                &geometry,
                &mut grid,
                Point2::new(r.min[0], r.min[1]),
                Point2::new(r.max[0], r.max[1]),
            );
        }
        for w in &spec.walls {
            let from = Point2::new(w.from[0], w.from[1]);
            let (dx, dy) = (w.to[0] - w.from[0], w.to[1] - w.from[1]);
            let len = dx.hypot(dy);
            if len > 0.0 {
                for c in GridRay::new(&geometry, from, (dx / len, dy / len), len) {
                    grid.set(c.cell.x, c.cell.y, true);
                }
            } else if let Some(c) = geometry.world_to_cell(from) {
                grid.set(c.x, c.y, true);
            }
        }
        let world = Self {
            spec,
            geometry,
            truth_static: Arc::new(grid),
        };
        world.check_clearance()?;
        Ok(world)
    }

    pub fn spec(&self) -> &WorldSpec {
        &self.spec
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn truth_static(&self) -> &Arc<BinaryGrid> {
        &self.truth_static
    }

    pub fn time_of(&self, tick: usize) -> f64 {
        tick as f64 * self.spec.dt()
    }

    /// Union of all obstacle footprints at time `t`.
    pub fn truth_dynamic(&self, t: f64) -> BinaryGrid {
        let mut grid = BinaryGrid::new(self.geometry.width(), self.geometry.height());
        for o in &self.spec.obstacles {
            let c = o.position_at(t);
            let (hx, hy) = (0.5 * o.size[0], 0.5 * o.size[1]);
            rasterize_box(
                &self.geometry,
                &mut grid,
                Point2::new(c.x - hx, c.y - hy),
                Point2::new(c.x + hx, c.y + hy),
            );
        }
        grid
    }

    fn check_clearance(&self) -> Result<()> {
        let stat = self.truth_static.as_slice();
        for tick in 0..self.spec.frame_count() {
            let t = self.time_of(tick);
            let dynamic = self.truth_dynamic(t);
            if dynamic.as_slice().iter().zip(stat).any(|(&d, &s)| d && s) {
                return Err(Error::Scenario(format!(
                    "an obstacle overlaps static geometry at t = {t:.3}"
                )));
            }
            let ego = self.spec.ego.pose_at(t);
            let Some(cell) = self.geometry.world_to_cell(ego.position()) else {
                return Err(Error::Scenario(format!("ego leaves the grid at t = {t:.3}")));
            };
            if dynamic.get(cell.x, cell.y) || self.truth_static.get(cell.x, cell.y) {
                return Err(Error::Scenario(format!("the ego cell is occupied at t = {t:.3}")));
            }
        }
        Ok(())
    }
}

fn check_spec(spec: &WorldSpec) -> Result<()> {
    let bad = |msg: String| Err(Error::Scenario(msg));
    if !(spec.duration >= 0.0 && spec.duration.is_finite()) {
        return bad(format!("duration must be non-negative, got {}", spec.duration));
    }
    let s = &spec.sensor;
    if s.beam_count == 0 {
        return bad("sensor needs at least one beam".into());
    }
    if !(s.fov > 0.0 && s.fov <= std::f64::consts::TAU) {
        return bad(format!("fov must lie in (0, 2 pi], got {}", s.fov));
    }
    if !(s.max_range > 0.0 && s.noise_sigma >= 0.0 && s.rate > 0.0) {
        return bad("sensor range, noise and rate must be positive".into());
    }
    let f = &spec.filter;
    crate::grid::validate_priors(f.prior_static, f.prior_dynamic)?;
    f.ism()?;
    f.limits()?;
    if !(f.v_max > 0.0) {
        return bad(format!("v_max must be positive, got {}", f.v_max));
    }
    for o in &spec.obstacles {
        if o.waypoints.is_empty() {
            return bad(format!("obstacle {} has no waypoints", o.name));
        }
        if !(o.size[0] > 0.0 && o.size[1] > 0.0) {
            return bad(format!("obstacle {} has an empty footprint", o.name));
        }
        if o.waypoints.windows(2).any(|w| !(w[1].t > w[0].t)) {
            return bad(format!("obstacle {} waypoint times must increase", o.name));
        }
        let v = o.max_speed();
        if v > f.v_max + EPS {
            return bad(format!(
                "obstacle {} reaches {v:.3} m/s, above v_max = {}",
                o.name, f.v_max
            ));
        }
    }
    let e = &spec.ego.waypoints;
    if e.is_empty() {
        return bad("ego has no waypoints".into());
    }
    if e.windows(2).any(|w| !(w[1].t > w[0].t)) {
        return bad("ego waypoint times must increase".into());
    }
    Ok(())
}
