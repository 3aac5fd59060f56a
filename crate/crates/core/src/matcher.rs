//! Scan-to-map matching against a smoothed occupancy layer.
//!
//! The objective is `sum_k (1 - M(T_x z_k))^2` over the scan's return points
//! `z_k`, where `M` is bilinear interpolation of a probability field between
//! cell centers. A coarse grid search picks the starting pose and
//! Gauss-Newton with step halving refines it.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::grid::{Field, GridGeometry, Point2, Pose2D, Scan};

/// Bilinear view of a probability layer. Zero outside the grid.
#[derive(Debug, Clone, Copy)]
pub struct SmoothStaticField<'a> {
    geometry: &'a GridGeometry,
    values: &'a Field,
}

impl<'a> SmoothStaticField<'a> {
    pub fn new(geometry: &'a GridGeometry, values: &'a Field) -> Result<Self> {
        if values.width() != geometry.width() || values.height() != geometry.height() {
            return Err(Error::GeometryMismatch(format!(
                "field is {}x{}, geometry is {}x{}",
                values.width(),
                values.height(),
                geometry.width(),
                geometry.height()
            )));
        }
        Ok(Self { geometry, values })
    }

    pub fn geometry(&self) -> &GridGeometry {
        self.geometry
    }

    pub fn value(&self, p: Point2) -> f64 {
        self.value_and_gradient(p).0
    }

    /// Interpolated value and its gradient in world units.
    pub fn value_and_gradient(&self, p: Point2) -> (f64, f64, f64) {
        let (gx, gy) = self.geometry.world_to_grid(p);
        let (x0, y0) = (gx.floor(), gy.floor());
        let (fx, fy) = (gx - x0, gy - y0);
        let (i, j) = (x0 as i64, y0 as i64);
        let v00 = self.values.get_or_zero(i, j);
        let v10 = self.values.get_or_zero(i + 1, j);
        let v01 = self.values.get_or_zero(i, j + 1);
        let v11 = self.values.get_or_zero(i + 1, j + 1);
        let bottom = (1.0 - fx) * v00 + fx * v10;
        let top = (1.0 - fx) * v01 + fx * v11;
        let value = (1.0 - fy) * bottom + fy * top;
        let res = self.geometry.resolution();
        let dx = ((1.0 - fy) * (v10 - v00) + fy * (v11 - v01)) / res;
        let dy = (top - bottom) / res;
        (value, dx, dy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchConfig {
    /// Half width of the coarse translation window, in cells.
    pub window_cells: f64,
    pub step_cells: f64,
    /// Half width of the coarse rotation window, in radians.
    pub window_rad: f64,
    pub step_rad: f64,
    /// Convergence threshold on the step, with translation in cells and
    /// rotation scaled by the mean point radius.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub max_halvings: usize,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            window_cells: 1.5,
            step_cells: 0.5,
            window_rad: 0.05,
            step_rad: 0.025,
            tolerance: 1e-4,
            max_iterations: 30,
            max_halvings: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    pub pose: Pose2D,
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Cost after the coarse search and after each accepted refinement step.
    pub cost_history: Vec<f64>,
}

/// Sensor-frame return points of `scan`; no-return beams are dropped.
pub fn scan_points(scan: &Scan) -> Vec<Point2> {
    scan.beams()
        .iter()
        .filter(|b| !b.is_max_range)
        .map(|b| b.endpoint())
        .collect()
}

fn cost_at(field: &SmoothStaticField, points: &[Point2], pose: &Pose2D) -> f64 {
    points
        .iter()
        .map(|&z| {
            let r = 1.0 - field.value(pose.transform(z));
            r * r
        })
        .sum()
}

fn make_pose(x: f64, y: f64, theta: f64) -> Pose2D {
    Pose2D { x, y, theta }
}

fn coarse_search(
    field: &SmoothStaticField,
    points: &[Point2],
    prior: &Pose2D,
    cfg: &MatchConfig,
) -> (Pose2D, f64) {
    let res = field.geometry().resolution();
    let offsets = |half: f64, step: f64| -> Vec<f64> {
        if step <= 0.0 || half <= 0.0 {
            return vec![0.0];
        }
        let n = (half / step + 1e-9).floor() as i64;
        (-n..=n).map(|k| k as f64 * step).collect()
    };
    let lin = offsets(cfg.window_cells, cfg.step_cells);
    let ang = offsets(cfg.window_rad, cfg.step_rad);
    let mut best = (*prior, f64::INFINITY);
    for &ox in &lin {
        for &oy in &lin {
            for &ot in &ang {
                let pose = make_pose(prior.x + ox * res, prior.y + oy * res, prior.theta + ot);
                let c = cost_at(field, points, &pose);
                if c < best.1 {
                    best = (pose, c);
                }
            }
        }
    }
    best
}

/// Finds the pose near `prior` that best explains `scan` in `field`.
///
/// Returns the best pose found with `converged = false` when the refinement
/// cannot make progress (flat or singular objective) or runs out of
/// iterations.
pub fn match_scan(
    scan: &Scan,
    prior: &Pose2D,
    field: &SmoothStaticField,
    cfg: &MatchConfig,
) -> Result<MatchResult> {
    let points = scan_points(scan);
    if points.is_empty() {
        return Err(Error::EmptyScan);
    }
    let res = field.geometry().resolution();
    let mean_radius =
        points.iter().map(|p| p.x.hypot(p.y)).sum::<f64>() / points.len() as f64;
    let angle_scale = mean_radius.max(res) / res;

    let (mut pose, mut cost) = coarse_search(field, &points, prior, cfg);
    let mut history = vec![cost];
    let mut iterations = 0;
    let mut converged = false;

    while iterations < cfg.max_iterations {
        iterations += 1;
        let (s, c) = pose.theta.sin_cos();
        let mut jtj = Matrix3::<f64>::zeros();
        let mut jtr = Vector3::<f64>::zeros();
        for z in &points {
            let w = pose.transform(*z);
            let (m, gx, gy) = field.value_and_gradient(w);
            let r = 1.0 - m;
            let dtheta = gx * (-s * z.x - c * z.y) + gy * (c * z.x - s * z.y);
            let j = Vector3::new(-gx, -gy, -dtheta);
            jtj += j * j.transpose();
            jtr += j * r;
        }
        let Some(delta) = jtj.lu().solve(&(-jtr)) else {
            break;
        };
        if !delta.iter().all(|v| v.is_finite()) {
            break;
        }
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..=cfg.max_halvings {
            let cand = make_pose(
                pose.x + scale * delta[0],
                pose.y + scale * delta[1],
                pose.theta + scale * delta[2],
            );
            let cc = cost_at(field, &points, &cand);
            if cc < cost {
                accepted = Some((cand, cc, scale));
                break;
            }
            scale *= 0.5;
        }
        let step_norm = |k: f64| {
            let (dx, dy, dt) = (k * delta[0] / res, k * delta[1] / res, k * delta[2] * angle_scale);
            (dx * dx + dy * dy + dt * dt).sqrt()
        };
        match accepted {
            Some((p, cc, k)) => {
                pose = p;
                cost = cc;
                history.push(cc);
                if step_norm(k) < cfg.tolerance {
                    converged = true;
                    break;
                }
            }
            None => {
                // No descent along the Gauss-Newton direction: a local minimum
                // unless the direction itself was degenerate.
                converged = step_norm(1.0) > 0.0;
                break;
            }
        }
    }
    pose.theta = crate::grid::normalize_angle(pose.theta);
    Ok(MatchResult {
        pose,
        cost,
        iterations,
        converged,
        cost_history: history,
    })
}

/// Constant-velocity extrapolation from the two most recent poses.
pub fn constant_velocity_seed(previous: &Pose2D, latest: &Pose2D) -> Pose2D {
    let dtheta = crate::grid::normalize_angle(latest.theta - previous.theta);
    Pose2D::new(
        2.0 * latest.x - previous.x,
        2.0 * latest.y - previous.y,
        latest.theta + dtheta,
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct Localization {
    pub pose: Pose2D,
    /// Set when matching failed and the motion-model seed was kept.
    pub fallback: bool,
    pub result: Option<MatchResult>,
}

/// Pose estimate for a new scan, seeded from the motion model. Falls back to
/// the seed when the match does not converge.
pub fn localize(
    scan: &Scan,
    history: &[Pose2D],
    field: &SmoothStaticField,
    cfg: &MatchConfig,
) -> Result<Localization> {
    let seed = match history {
        [] => {
            return Err(Error::InvalidParameter(
                "localization needs at least one previous pose".into(),
            ))
        }
        [only] => *only,
        [.., a, b] => constant_velocity_seed(a, b),
    };
    match match_scan(scan, &seed, field, cfg) {
        Ok(r) if r.converged => Ok(Localization {
            pose: r.pose,
            fallback: false,
            result: Some(r),
        }),
        Ok(r) => Ok(Localization {
            pose: seed,
            fallback: true,
            result: Some(r),
        }),
        Err(Error::EmptyScan) => Ok(Localization {
            pose: seed,
            fallback: true,
            result: None,
        }),
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Beam;
    use proptest::prelude::*;

    /// A blurred box room; the blur gives the objective a usable slope.
    fn room() -> (GridGeometry, Field) {
        let g = GridGeometry::new(Point2::new(0.0, 0.0), 0.1, 120, 100).unwrap();
        let mut f = Field::filled(120, 100, 0.0);
        for y in 0..100i64 {
            for x in 0..120i64 {
                let d = [x - 10, 110 - x, y - 10, 90 - y]
                    .into_iter()
                    .map(|v| v.abs())
                    .min()
                    .unwrap();
                let inner = x >= 10 && x <= 110 && y >= 10 && y <= 90;
                // an extra pillar breaks the room's symmetry
                let pillar = ((x - 80).pow(2) + (y - 30).pow(2)) as f64;
                let v = if inner { 0.95 * (-(d * d) as f64 / 4.0).exp() } else { 0.0 };
                let p = 0.95 * (-pillar / 6.0).exp();
                f.set(x as usize, y as usize, v.max(p));
            }
        }
        (g, f)
    }

    /// Exact ray cast against the room walls and the pillar center.
    fn synth_scan(pose: &Pose2D) -> Scan {
        let n = 180;
        let beams = (0..n)
            .map(|k| {
                let bearing = -std::f64::consts::PI + 2.0 * std::f64::consts::PI * (k as f64 + 0.5) / n as f64;
                let a = pose.theta + bearing;
                let (s, c) = a.sin_cos();
                let mut t = f64::INFINITY;
                for (p, v, lo, hi) in [(pose.x, c, 1.0, 11.0), (pose.y, s, 1.0, 9.0)] {
                    if v > 0.0 {
                        t = t.min((hi - p) / v);
                    } else if v < 0.0 {
                        t = t.min((lo - p) / v);
                    }
                }
                Beam { bearing, range: t, is_max_range: false }
            })
            .collect();
        Scan::new(beams, 20.0).unwrap()
    }

    #[test]
    fn field_matches_cells_exactly() {
        let (g, f) = room();
        let sf = SmoothStaticField::new(&g, &f).unwrap();
        for (x, y) in [(10, 10), (55, 40), (80, 30)] {
            assert_eq!(sf.value(g.cell_center(crate::grid::CellIndex::new(x, y))), f.get(x, y));
        }
        assert_eq!(sf.value(Point2::new(-5.0, 3.0)), 0.0);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (g, f) = room();
        let sf = SmoothStaticField::new(&g, &f).unwrap();
        let p = Point2::new(1.137, 4.021);
        let (_, gx, gy) = sf.value_and_gradient(p);
        let h = 1e-6;
        let nx = (sf.value(Point2::new(p.x + h, p.y)) - sf.value(Point2::new(p.x - h, p.y))) / (2.0 * h);
        let ny = (sf.value(Point2::new(p.x, p.y + h)) - sf.value(Point2::new(p.x, p.y - h))) / (2.0 * h);
        assert!((gx - nx).abs() < 1e-5 && (gy - ny).abs() < 1e-5);
    }

    #[test]
    fn recovers_the_true_pose() {
        let (g, f) = room();
        let sf = SmoothStaticField::new(&g, &f).unwrap();
        let truth = Pose2D::new(5.0, 4.0, 0.2);
        let scan = synth_scan(&truth);
        let cfg = MatchConfig::default();
        for prior in [truth, Pose2D::new(5.12, 3.9, 0.23)] {
            let r = match_scan(&scan, &prior, &sf, &cfg).unwrap();
            assert!(r.converged);
            assert!((r.pose.x - truth.x).abs() < 0.01, "{r:?}");
            assert!((r.pose.y - truth.y).abs() < 0.01, "{r:?}");
            assert!((r.pose.theta - truth.theta).abs() < 0.001, "{r:?}");
            assert!(r.cost >= 0.0 && r.cost <= 180.0);
        }
    }

    #[test]
    fn empty_field_is_flagged() {
        let g = GridGeometry::new(Point2::new(0.0, 0.0), 0.1, 50, 50).unwrap();
        let f = Field::filled(50, 50, 0.0);
        let sf = SmoothStaticField::new(&g, &f).unwrap();
        let scan = synth_scan(&Pose2D::new(2.0, 2.0, 0.0));
        let r = match_scan(&scan, &Pose2D::new(2.0, 2.0, 0.0), &sf, &MatchConfig::default()).unwrap();
        assert!(!r.converged || r.cost == 180.0);
        assert_eq!(r.cost, 180.0);
    }

    #[test]
    fn no_returns_is_an_error() {
        let (g, f) = room();
        let sf = SmoothStaticField::new(&g, &f).unwrap();
        let scan = Scan::new(vec![Beam { bearing: 0.0, range: 5.0, is_max_range: true }], 5.0).unwrap();
        assert!(matches!(
            match_scan(&scan, &Pose2D::new(5.0, 5.0, 0.0), &sf, &MatchConfig::default()),
            Err(Error::EmptyScan)
        ));
    }

    #[test]
    fn cost_never_increases() {
        let (g, f) = room();
        let sf = SmoothStaticField::new(&g, &f).unwrap();
        let scan = synth_scan(&Pose2D::new(6.0, 5.0, -0.1));
        let r = match_scan(&scan, &Pose2D::new(6.2, 4.8, -0.06), &sf, &MatchConfig::default()).unwrap();
        for w in r.cost_history.windows(2) {
            assert!(w[1] < w[0]);
        }
    }

    #[test]
    fn constant_velocity_extrapolates() {
        let s = constant_velocity_seed(&Pose2D::new(0.0, 0.0, 3.1), &Pose2D::new(1.0, 0.5, -3.1));
        assert!((s.x - 2.0).abs() < 1e-12 && (s.y - 1.0).abs() < 1e-12);
        assert!((s.theta - (-3.1 + 2.0 * std::f64::consts::PI - 6.2)).abs() < 1e-9);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn whole_cell_translation_is_equivariant(sx in -5i64..5, sy in -5i64..5) {
            let (g, f) = room();
            let truth = Pose2D::new(5.0, 4.0, 0.2);
            let scan = synth_scan(&truth);
            let prior = Pose2D::new(5.07, 3.95, 0.21);
            let cfg = MatchConfig::default();
            let a = match_scan(&scan, &prior, &SmoothStaticField::new(&g, &f).unwrap(), &cfg).unwrap();
            let shifted = GridGeometry::new(
                Point2::new(sx as f64 * 0.1, sy as f64 * 0.1), 0.1, 120, 100).unwrap();
            let moved = Pose2D::new(prior.x + sx as f64 * 0.1, prior.y + sy as f64 * 0.1, prior.theta);
            let b = match_scan(&scan, &moved, &SmoothStaticField::new(&shifted, &f).unwrap(), &cfg).unwrap();
            prop_assert!((b.pose.x - a.pose.x - sx as f64 * 0.1).abs() < 1e-6);
            prop_assert!((b.pose.y - a.pose.y - sy as f64 * 0.1).abs() < 1e-6);
            prop_assert!((b.pose.theta - a.pose.theta).abs() < 1e-9);
            prop_assert!((b.cost - a.cost).abs() < 1e-6);
        }
    }
}
