//! Grid traversal along sensor beams and the per-scan cell observations
//! shared by every mapper.

use crate::grid::{CellIndex, GridGeometry, Point2, Pose2D, Scan};

/// One cell crossed by a ray, with the ray parameter (meters) where the ray
/// enters and leaves it. `t_exit` is capped at the ray length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crossing {
    pub cell: CellIndex,
    pub t_enter: f64,
    pub t_exit: f64,
}

/// Visits every grid cell a segment passes through, in order
/// (Amanatides and Woo traversal).
#[derive(Debug, Clone)]
pub struct GridRay {
    cell: (i64, i64),
    step: (i64, i64),
    t_max: (f64, f64),
    t_delta: (f64, f64),
    t: f64,
    t_end: f64,
    width: i64,
    height: i64,
}

impl GridRay {
    /// Ray from `start` along the unit vector `dir` for `length` meters.
    /// The part of the segment outside the grid is skipped.
    pub fn new(geom: &GridGeometry, start: Point2, dir: (f64, f64), length: f64) -> Self {
        let res = geom.resolution();
        let (w, h) = (geom.width() as f64, geom.height() as f64);
        // Grid units in which cell i spans [i, i + 1).
        let (gx, gy) = geom.world_to_grid(start);
        let (ux, uy) = (gx + 0.5, gy + 0.5);
        let (vx, vy) = (dir.0 / res, dir.1 / res);

        let mut t0: f64 = 0.0;
        let mut t1: f64 = length.max(0.0);
        for (u, v, hi) in [(ux, vx, w), (uy, vy, h)] {
            if v == 0.0 {
                if u < 0.0 || u >= hi {
                    t1 = -1.0;
                }
            } else {
                let a = (0.0 - u) / v;
                let b = (hi - u) / v;
                t0 = t0.max(a.min(b));
                t1 = t1.min(a.max(b));
            }
        }
        let empty = Self {
            cell: (0, 0),
            step: (0, 0),
            t_max: (f64::INFINITY, f64::INFINITY),
            t_delta: (f64::INFINITY, f64::INFINITY),
            t: 0.0,
            t_end: -1.0,
            width: geom.width() as i64,
            height: geom.height() as i64,
        };
        if t0 >= t1 {
            return empty;
        }

        let (px, py) = (ux + vx * t0, uy + vy * t0);
        let clamp_cell = |p: f64, v: f64, n: f64| -> i64 {
            let mut c = p.floor();
            // On a boundary heading backwards the ray is in the lower cell.
            if v < 0.0 && p == c {
                c -= 1.0;
            }
            c.clamp(0.0, n - 1.0) as i64
        };
        let cx = clamp_cell(px, vx, w);
        let cy = clamp_cell(py, vy, h);
        let axis = |p: f64, c: i64, v: f64| -> (i64, f64, f64) {
            if v > 0.0 {
                (1, t0 + (c as f64 + 1.0 - p) / v, 1.0 / v)
            } else if v < 0.0 {
                (-1, t0 + (p - c as f64) / -v, 1.0 / -v)
            } else {
                (0, f64::INFINITY, f64::INFINITY)
            }
        };
        let (sx, tmx, tdx) = axis(px, cx, vx);
        let (sy, tmy, tdy) = axis(py, cy, vy);
        Self {
            cell: (cx, cy),
            step: (sx, sy),
            t_max: (tmx, tmy),
            t_delta: (tdx, tdy),
            t: t0,
            t_end: t1,
            width: geom.width() as i64,
            height: geom.height() as i64,
        }
    }

    /// Ray from a pose along a sensor-frame bearing.
    pub fn from_pose(geom: &GridGeometry, pose: &Pose2D, bearing: f64, length: f64) -> Self {
        let (s, c) = (pose.theta + bearing).sin_cos();
        Self::new(geom, pose.position(), (c, s), length)
    }
}

impl Iterator for GridRay {
    type Item = Crossing;

    fn next(&mut self) -> Option<Crossing> {
        let (cx, cy) = self.cell;
        if self.t >= self.t_end || cx < 0 || cy < 0 || cx >= self.width || cy >= self.height {
            return None;
        }
        let next_t = self.t_max.0.min(self.t_max.1);
        let crossing = Crossing {
            cell: CellIndex::new(cx as usize, cy as usize),
            t_enter: self.t,
            t_exit: next_t.min(self.t_end),
        };
        if self.t_max.0 <= self.t_max.1 {
            self.cell.0 += self.step.0;
            self.t_max.0 += self.t_delta.0;
        } else {
            self.cell.1 += self.step.1;
            self.t_max.1 += self.t_delta.1;
        }
        self.t = next_t;
        Some(crossing)
    }
}

/// Cells seen by one scan. A cell holding a beam endpoint is a hit even if
/// other beams of the same scan pass through it. Both lists are sorted.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ScanObservation {
    pub hits: Vec<usize>,
    pub frees: Vec<usize>,
}

impl ScanObservation {
    pub fn is_empty(&self) -> bool {
        self.hits.is_empty() && self.frees.is_empty()
    }

    pub fn len(&self) -> usize {
        self.hits.len() + self.frees.len()
    }
}

const UNSEEN: u8 = 0;
const FREE: u8 = 1;
const HIT: u8 = 2;

/// Traces every beam of `scan` taken from `pose`.
///
/// Cells crossed before the endpoint are free; the endpoint cell of a
/// return is a hit. No-return beams are free along their whole length.
pub fn observe(geom: &GridGeometry, scan: &Scan, pose: &Pose2D) -> ScanObservation {
    let mut state = vec![UNSEEN; geom.len()];
    let mut touched = Vec::new();
    for beam in scan.beams() {
        let length = scan.beam_length(beam);
        let mut last: Option<Crossing> = None;
        for c in GridRay::from_pose(geom, pose, beam.bearing, length) {
            if let Some(prev) = last {
                let i = geom.index(prev.cell);
                if state[i] == UNSEEN {
                    state[i] = FREE;
                    touched.push(i);
                }
            }
            last = Some(c);
        }
        let Some(end) = last else { continue };
        let i = geom.index(end.cell);
        let reaches_end = end.t_exit >= length;
        if !beam.is_max_range && reaches_end {
            if state[i] != HIT {
                if state[i] == UNSEEN {
                    touched.push(i);
                }
                state[i] = HIT;
            }
        } else if state[i] == UNSEEN {
            state[i] = FREE;
            touched.push(i);
        }
    }
    touched.sort_unstable();
    let mut obs = ScanObservation::default();
    for i in touched {
        match state[i] {
            HIT => obs.hits.push(i),
            FREE => obs.frees.push(i),
            _ => {}
        }
    }
    obs
}
