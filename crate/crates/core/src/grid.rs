//! Grid geometry, cell beliefs, poses, scans and the two-layer map container.
//!
//! Cell `(0, 0)` is centered on `GridGeometry::origin`; cell `(ix, iy)` covers
//! the square of edge `resolution` around `origin + (ix, iy) * resolution`.
//! Dense layers are stored row-major with `index = iy * width + ix`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack allowed on the per-cell simplex constraint.
pub const SIMPLEX_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellIndex {
    pub x: usize,
    pub y: usize,
}

impl CellIndex {
    pub const fn new(x: usize, y: usize) -> Self {
        Self { x, y }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridGeometry {
    origin: Point2,
    resolution: f64,
    width: usize,
    height: usize,
}

impl GridGeometry {
    pub fn new(origin: Point2, resolution: f64, width: usize, height: usize) -> Result<Self> {
        if !(resolution > 0.0 && resolution.is_finite()) {
            return Err(Error::InvalidGeometry(format!(
                "resolution must be positive, got {resolution}"
            )));
        }
        if width == 0 || height == 0 {
            return Err(Error::InvalidGeometry(format!(
                "grid must have at least one cell, got {width}x{height}"
            )));
        }
        if !(origin.x.is_finite() && origin.y.is_finite()) {
            return Err(Error::InvalidGeometry("origin must be finite".into()));
        }
        Ok(Self {
            origin,
            resolution,
            width,
            height,
        })
    }

    /// Smallest grid with the given resolution covering `[min, max]`.
    pub fn covering(min: Point2, max: Point2, resolution: f64) -> Result<Self> {
        if !(max.x > min.x && max.y > min.y) {
            return Err(Error::InvalidGeometry(format!(
                "empty extent {min:?}..{max:?}"
            )));
        }
        if !(resolution > 0.0) {
            return Err(Error::InvalidGeometry(format!(
                "resolution must be positive, got {resolution}"
            )));
        }
        let width = ((max.x - min.x) / resolution - 1e-9).ceil().max(1.0) as usize;
        let height = ((max.y - min.y) / resolution - 1e-9).ceil().max(1.0) as usize;
        let origin = Point2::new(min.x + 0.5 * resolution, min.y + 0.5 * resolution);
        Self::new(origin, resolution, width, height)
    }

    pub fn origin(&self) -> Point2 {
        self.origin
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Continuous grid coordinates: integer values fall on cell centers.
    pub fn world_to_grid(&self, p: Point2) -> (f64, f64) {
        (
            (p.x - self.origin.x) / self.resolution,
            (p.y - self.origin.y) / self.resolution,
        )
    }

    /// Returns the cell whose square contains `p`, or `None` outside the grid.
    pub fn world_to_cell(&self, p: Point2) -> Option<CellIndex> {
        let (gx, gy) = self.world_to_grid(p);
        let ix = (gx + 0.5).floor();
        let iy = (gy + 0.5).floor();
        if ix < 0.0 || iy < 0.0 || ix >= self.width as f64 || iy >= self.height as f64 {
            return None;
        }
        Some(CellIndex::new(ix as usize, iy as usize))
    }

    pub fn cell_center(&self, cell: CellIndex) -> Point2 {
        Point2::new(
            self.origin.x + cell.x as f64 * self.resolution,
            self.origin.y + cell.y as f64 * self.resolution,
        )
    }

    pub fn contains_cell(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height
    }

    pub fn index(&self, cell: CellIndex) -> usize {
        debug_assert!(cell.x < self.width && cell.y < self.height);
        cell.y * self.width + cell.x
    }

    pub fn cell_of(&self, index: usize) -> CellIndex {
        CellIndex::new(index % self.width, index / self.width)
    }

    /// World-space bounds of the grid: the outer edges of the border cells.
    pub fn bounds(&self) -> (Point2, Point2) {
        let half = 0.5 * self.resolution;
        (
            Point2::new(self.origin.x - half, self.origin.y - half),
            Point2::new(
                self.origin.x + (self.width as f64 - 0.5) * self.resolution,
                self.origin.y + (self.height as f64 - 0.5) * self.resolution,
            ),
        )
    }

    pub fn full_region(&self) -> Region {
        Region {
            x_min: 0,
            y_min: 0,
            x_max: self.width,
            y_max: self.height,
        }
    }

    /// Cells within `radius` meters (box) of `center`, clipped to the grid.
    pub fn region_around(&self, center: Point2, radius: f64) -> Region {
        let (gx, gy) = self.world_to_grid(center);
        let r = radius / self.resolution;
        let clip = |v: f64, hi: usize| -> usize { v.max(0.0).min(hi as f64) as usize };
        Region {
            x_min: clip((gx - r + 0.5).floor(), self.width),
            y_min: clip((gy - r + 0.5).floor(), self.height),
            x_max: clip((gx + r + 0.5).floor() + 1.0, self.width),
            y_max: clip((gy + r + 0.5).floor() + 1.0, self.height),
        }
    }
}

/// Half-open cell rectangle `[x_min, x_max) x [y_min, y_max)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Region {
    pub x_min: usize,
    pub y_min: usize,
    pub x_max: usize,
    pub y_max: usize,
}

impl Region {
    pub fn new(x_min: usize, y_min: usize, x_max: usize, y_max: usize) -> Self {
        Self {
            x_min,
            y_min,
            x_max,
            y_max,
        }
    }

    pub fn fits(&self, geom: &GridGeometry) -> bool {
        self.x_min <= self.x_max
            && self.y_min <= self.y_max
            && self.x_max <= geom.width()
            && self.y_max <= geom.height()
    }

    pub fn contains(&self, cell: CellIndex) -> bool {
        cell.x >= self.x_min && cell.x < self.x_max && cell.y >= self.y_min && cell.y < self.y_max
    }

    pub fn is_empty(&self) -> bool {
        self.x_min >= self.x_max || self.y_min >= self.y_max
    }
}

/// Planar pose; `theta` is kept in `(-pi, pi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose2D {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose2D {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: normalize_angle(theta),
        }
    }

    pub fn position(&self) -> Point2 {
        Point2::new(self.x, self.y)
    }

    /// Maps a point from the sensor frame into the world frame.
    pub fn transform(&self, p: Point2) -> Point2 {
        let (s, c) = self.theta.sin_cos();
        Point2::new(self.x + c * p.x - s * p.y, self.y + s * p.x + c * p.y)
    }
}

/// Wraps an angle into `(-pi, pi]`.
pub fn normalize_angle(theta: f64) -> f64 {
    if !theta.is_finite() {
        return theta;
    }
    let mut a = theta % (2.0 * PI);
    if a <= -PI {
        a += 2.0 * PI;
    } else if a > PI {
        a -= 2.0 * PI;
    }
    a
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Beam {
    pub bearing: f64,
    pub range: f64,
    pub is_max_range: bool,
}

impl Beam {
    /// Endpoint in the sensor frame.
    pub fn endpoint(&self) -> Point2 {
        let (s, c) = self.bearing.sin_cos();
        Point2::new(self.range * c, self.range * s)
    }
}

/// A single range scan in the sensor frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scan {
    beams: Vec<Beam>,
    max_range: f64,
}

impl Scan {
    pub fn new(beams: Vec<Beam>, max_range: f64) -> Result<Self> {
        if !(max_range > 0.0 && max_range.is_finite()) {
            return Err(Error::InvalidScan(format!(
                "max_range must be positive, got {max_range}"
            )));
        }
        for (k, b) in beams.iter().enumerate() {
            if !b.bearing.is_finite() {
                return Err(Error::InvalidScan(format!("beam {k} has a non-finite bearing")));
            }
            if !b.is_max_range && !(b.range > 0.0 && b.range <= max_range) {
                return Err(Error::InvalidScan(format!(
                    "beam {k} range {} outside (0, {max_range}]",
                    b.range
                )));
            }
            if k > 0 && b.bearing <= beams[k - 1].bearing {
                return Err(Error::InvalidScan(format!(
                    "bearings must be strictly increasing (beam {k})"
                )));
            }
        }
        Ok(Self { beams, max_range })
    }

    pub fn beams(&self) -> &[Beam] {
        &self.beams
    }

    pub fn max_range(&self) -> f64 {
        self.max_range
    }

    /// Effective length of a beam: its range, or `max_range` for no-return beams.
    pub fn beam_length(&self, beam: &Beam) -> f64 {
        if beam.is_max_range {
            self.max_range
        } else {
            beam.range
        }
    }

    pub fn hit_count(&self) -> usize {
        self.beams.iter().filter(|b| !b.is_max_range).count()
    }
}

/// Belief over the three cell states; `p_free` is implied.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellBelief {
    pub p_static: f64,
    pub p_dynamic: f64,
}

impl CellBelief {
    pub fn new(p_static: f64, p_dynamic: f64) -> Result<Self> {
        let b = Self { p_static, p_dynamic };
        if b.is_valid() {
            Ok(b)
        } else {
            Err(Error::InvalidBelief { p_static, p_dynamic })
        }
    }

    pub fn p_free(&self) -> f64 {
        1.0 - self.p_static - self.p_dynamic
    }

    pub fn is_valid(&self) -> bool {
        self.p_static.is_finite()
            && self.p_dynamic.is_finite()
            && self.p_static >= -1e-12
            && self.p_dynamic >= -1e-12
            && self.p_static + self.p_dynamic <= 1.0 + SIMPLEX_TOLERANCE
    }

    /// Free, static, dynamic in that order.
    pub fn triple(&self) -> [f64; 3] {
        [self.p_free(), self.p_static, self.p_dynamic]
    }
}

/// Dense scalar field over a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Field {
    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::GeometryMismatch(format!(
                "{} values for a {width}x{height} field",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Zero outside the field.
    pub fn get_or_zero(&self, x: i64, y: i64) -> f64 {
        if x < 0 || y < 0 || x as usize >= self.width || y as usize >= self.height {
            0.0
        } else {
            self.data[y as usize * self.width + x as usize]
        }
    }

    pub fn set(&mut self, x: usize, y: usize, value: f64) {
        self.data[y * self.width + x] = value;
    }

    pub fn row(&self, y: usize) -> &[f64] {
        &self.data[y * self.width..(y + 1) * self.width]
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }
}

/// Binary per-cell assignment, e.g. a ground-truth occupancy raster.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryGrid {
    width: usize,
    height: usize,
    cells: Vec<bool>,
}

impl BinaryGrid {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            cells: vec![false; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, cells: Vec<bool>) -> Result<Self> {
        if cells.len() != width * height {
            return Err(Error::GeometryMismatch(format!(
                "{} cells for a {width}x{height} grid",
                cells.len()
            )));
        }
        Ok(Self {
            width,
            height,
            cells,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.cells[y * self.width + x]
    }

    /// False outside the grid.
    pub fn get_or_false(&self, x: i64, y: i64) -> bool {
        x >= 0
            && y >= 0
            && (x as usize) < self.width
            && (y as usize) < self.height
            && self.cells[y as usize * self.width + x as usize]
    }

    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.cells[y * self.width + x] = value;
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.cells
    }

    pub fn as_mut_slice(&mut self) -> &mut [bool] {
        &mut self.cells
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }

    pub fn to_field(&self) -> Field {
        Field {
            width: self.width,
            height: self.height,
            data: self.cells.iter().map(|&c| if c { 1.0 } else { 0.0 }).collect(),
        }
    }
}

/// Static and dynamic occupancy layers over one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TgmMap {
    geometry: GridGeometry,
    static_layer: Field,
    dynamic_layer: Field,
    prior: CellBelief,
}

impl TgmMap {
    /// Every cell starts at the priors.
    pub fn new(geometry: GridGeometry, prior_static: f64, prior_dynamic: f64) -> Result<Self> {
        let prior = validate_priors(prior_static, prior_dynamic)?;
        let (w, h) = (geometry.width(), geometry.height());
        Ok(Self {
            geometry,
            static_layer: Field::filled(w, h, prior_static),
            dynamic_layer: Field::filled(w, h, prior_dynamic),
            prior,
        })
    }

    pub fn from_layers(
        geometry: GridGeometry,
        static_layer: Field,
        dynamic_layer: Field,
        prior: CellBelief,
    ) -> Result<Self> {
        for layer in [&static_layer, &dynamic_layer] {
            if layer.width() != geometry.width() || layer.height() != geometry.height() {
                return Err(Error::GeometryMismatch(format!(
                    "layer {}x{} on a {}x{} grid",
                    layer.width(),
                    layer.height(),
                    geometry.width(),
                    geometry.height()
                )));
            }
        }
        validate_priors(prior.p_static, prior.p_dynamic)?;
        for (s, d) in static_layer
            .as_slice()
            .iter()
            .zip(dynamic_layer.as_slice())
        {
            CellBelief::new(*s, *d)?;
        }
        Ok(Self {
            geometry,
            static_layer,
            dynamic_layer,
            prior,
        })
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn static_layer(&self) -> &Field {
        &self.static_layer
    }

    pub fn dynamic_layer(&self) -> &Field {
        &self.dynamic_layer
    }

    pub fn prior(&self) -> CellBelief {
        self.prior
    }

    pub fn belief(&self, cell: CellIndex) -> CellBelief {
        CellBelief {
            p_static: self.static_layer.get(cell.x, cell.y),
            p_dynamic: self.dynamic_layer.get(cell.x, cell.y),
        }
    }

    pub fn belief_at(&self, index: usize) -> CellBelief {
        CellBelief {
            p_static: self.static_layer.as_slice()[index],
            p_dynamic: self.dynamic_layer.as_slice()[index],
        }
    }

    pub fn set_belief(&mut self, cell: CellIndex, belief: CellBelief) -> Result<()> {
        if !belief.is_valid() {
            return Err(Error::InvalidBelief {
                p_static: belief.p_static,
                p_dynamic: belief.p_dynamic,
            });
        }
        self.static_layer.set(cell.x, cell.y, belief.p_static);
        self.dynamic_layer.set(cell.x, cell.y, belief.p_dynamic);
        Ok(())
    }

    pub(crate) fn set_belief_at(&mut self, index: usize, belief: CellBelief) {
        self.static_layer.as_mut_slice()[index] = belief.p_static;
        self.dynamic_layer.as_mut_slice()[index] = belief.p_dynamic;
    }

    /// Same grid and priors with the dynamic layer replaced.
    pub(crate) fn with_layers(&self, static_layer: Field, dynamic_layer: Field) -> Self {
        Self {
            geometry: self.geometry,
            static_layer,
            dynamic_layer,
            prior: self.prior,
        }
    }
}

pub(crate) fn validate_priors(prior_static: f64, prior_dynamic: f64) -> Result<CellBelief> {
    let err = |reason| Error::InvalidPriors {
        prior_static,
        prior_dynamic,
        reason,
    };
    if !(0.0..=1.0).contains(&prior_static) || !(0.0..=1.0).contains(&prior_dynamic) {
        return Err(err("priors must lie in [0, 1]"));
    }
    if prior_static + prior_dynamic > 1.0 + SIMPLEX_TOLERANCE {
        return Err(err("prior_static + prior_dynamic must not exceed 1"));
    }
    Ok(CellBelief {
        p_static: prior_static,
        p_dynamic: prior_dynamic,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn geom(res: f64, w: usize, h: usize) -> GridGeometry {
        GridGeometry::new(Point2::new(0.0, 0.0), res, w, h).unwrap()
    }

    #[test]
    fn point_inside_origin_cell() {
        let g = geom(1.0, 10, 10);
        assert_eq!(
            g.world_to_cell(Point2::new(0.4, 0.4)),
            Some(CellIndex::new(0, 0))
        );
    }

    #[test]
    fn center_anchored_lookup() {
        // Cell 2 spans [0.75, 1.25), cell 3 spans [1.25, 1.75).
        let g = geom(0.5, 10, 10);
        assert_eq!(
            g.world_to_cell(Point2::new(1.26, 0.0)),
            Some(CellIndex::new(3, 0))
        );
        assert_eq!(
            g.world_to_cell(Point2::new(1.24, 0.0)),
            Some(CellIndex::new(2, 0))
        );
    }

    #[test]
    fn far_point_is_out_of_bounds() {
        let g = geom(1.0, 10, 10);
        assert_eq!(g.world_to_cell(Point2::new(-50.0, 0.0)), None);
        assert_eq!(g.world_to_cell(Point2::new(-0.6, 0.0)), None);
        assert_eq!(g.world_to_cell(Point2::new(9.6, 0.0)), None);
    }

    #[test]
    fn rejects_bad_geometry() {
        assert!(GridGeometry::new(Point2::new(0.0, 0.0), 0.0, 1, 1).is_err());
        assert!(GridGeometry::new(Point2::new(0.0, 0.0), 1.0, 0, 1).is_err());
        assert!(GridGeometry::new(Point2::new(0.0, 0.0), -1.0, 1, 1).is_err());
    }

    #[test]
    fn covering_extent() {
        let g = GridGeometry::covering(Point2::new(-10.0, -5.0), Point2::new(10.0, 5.0), 0.2)
            .unwrap();
        assert_eq!((g.width(), g.height()), (100, 50));
        let (lo, hi) = g.bounds();
        assert!((lo.x + 10.0).abs() < 1e-12 && (hi.y - 5.0).abs() < 1e-9);
    }

    #[test]
    fn new_map_priors() {
        let g = geom(1.0, 4, 3);
        let m = TgmMap::new(g, 0.3, 0.3).unwrap();
        for i in 0..g.len() {
            let b = m.belief_at(i);
            assert_eq!((b.p_static, b.p_dynamic), (0.3, 0.3));
            assert!((b.p_free() - 0.4).abs() < 1e-15);
        }
        let free = TgmMap::new(g, 0.0, 0.0).unwrap();
        assert!(free.static_layer().as_slice().iter().all(|&v| v == 0.0));
        assert!(free.dynamic_layer().as_slice().iter().all(|&v| v == 0.0));
        assert!(matches!(
            TgmMap::new(g, 0.6, 0.6),
            Err(Error::InvalidPriors { .. })
        ));
        assert!(TgmMap::new(g, -0.1, 0.2).is_err());
    }

    #[test]
    fn angle_normalization() {
        assert_eq!(normalize_angle(PI), PI);
        assert!((normalize_angle(-PI) - PI).abs() < 1e-15);
        assert!((normalize_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((normalize_angle(0.5 + 4.0 * PI) - 0.5).abs() < 1e-12);
        let p = Pose2D::new(0.0, 0.0, -7.0);
        assert!(p.theta > -PI && p.theta <= PI);
    }

    #[test]
    fn scan_validation() {
        let ok = Scan::new(
            vec![
                Beam { bearing: -0.1, range: 1.0, is_max_range: false },
                Beam { bearing: 0.1, range: 5.0, is_max_range: true },
            ],
            5.0,
        );
        assert!(ok.is_ok());
        let unsorted = Scan::new(
            vec![
                Beam { bearing: 0.1, range: 1.0, is_max_range: false },
                Beam { bearing: 0.1, range: 1.0, is_max_range: false },
            ],
            5.0,
        );
        assert!(unsorted.is_err());
        let too_far = Scan::new(
            vec![Beam { bearing: 0.0, range: 6.0, is_max_range: false }],
            5.0,
        );
        assert!(too_far.is_err());
    }

    proptest! {
        #[test]
        fn cell_center_round_trip(x in 0usize..50, y in 0usize..40, res in 0.05f64..3.0,
                                  ox in -100.0f64..100.0, oy in -100.0f64..100.0) {
            let g = GridGeometry::new(Point2::new(ox, oy), res, 50, 40).unwrap();
            let c = CellIndex::new(x, y);
            prop_assert_eq!(g.world_to_cell(g.cell_center(c)), Some(c));
        }

        #[test]
        fn world_round_trip_same_cell(fx in 0.001f64..0.999, fy in 0.001f64..0.999) {
            let g = GridGeometry::new(Point2::new(-3.0, 2.0), 0.2, 30, 20).unwrap();
            let (lo, hi) = g.bounds();
            let p = Point2::new(lo.x + fx * (hi.x - lo.x), lo.y + fy * (hi.y - lo.y));
            let c = g.world_to_cell(p).unwrap();
            let back = g.world_to_cell(g.cell_center(c)).unwrap();
            prop_assert_eq!(c, back);
            let center = g.cell_center(c);
            prop_assert!((center.x - p.x).abs() <= 0.5 * g.resolution() + 1e-9);
            prop_assert!((center.y - p.y).abs() <= 0.5 * g.resolution() + 1e-9);
        }
    }
}
