//! Prediction step: one time step of random transitions applied to the map.
//!
//! Per cell `i` the predicted dynamic belief is
//!
//! ```text
//! Md[i] * (tau0 + (Ms ** K')[i]) + (1 - Ms[i]) * (Md ** K)[i]
//! ```
//!
//! and the static layer is carried over unchanged. Cells outside the grid
//! read as zero in both layers.

use crate::error::{Error, Result};
use crate::grid::{CellIndex, Field, Region, TgmMap};
use crate::kernel::TransitionKernel;

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub static_layer: Field,
    pub dynamic_layer: Field,
    /// Cells whose dynamic belief had to be clipped to `1 - p_static`.
    pub clipped: usize,
}

impl Prediction {
    pub fn into_map(self, like: &TgmMap) -> TgmMap {
        like.with_layers(self.static_layer, self.dynamic_layer)
    }
}

fn check_inputs(map: &TgmMap, kernel: &TransitionKernel, region: Option<Region>) -> Result<Region> {
    let g = map.geometry();
    if kernel.radius() > g.width().min(g.height()) {
        return Err(Error::GeometryMismatch(format!(
            "kernel radius {} exceeds the {}x{} grid",
            kernel.radius(),
            g.width(),
            g.height()
        )));
    }
    let region = region.unwrap_or_else(|| g.full_region());
    if !region.fits(g) {
        return Err(Error::InvalidRegion(region));
    }
    Ok(region)
}

/// Maximal runs of equal nonzero weight along one kernel row, as
/// `(first offset, last offset, weight)`.
fn row_runs(weights: &[f64], radius: usize, row: usize) -> Vec<(i64, i64, f64)> {
    let side = 2 * radius + 1;
    let r = radius as i64;
    let line = &weights[row * side..(row + 1) * side];
    let mut runs = Vec::new();
    let mut k = 0;
    while k < side {
        let w = line[k];
        if w == 0.0 {
            k += 1;
            continue;
        }
        let start = k;
        while k + 1 < side && line[k + 1] == w {
            k += 1;
        }
        runs.push((start as i64 - r, k as i64 - r, w));
        k += 1;
    }
    runs
}

/// `out[x, y] = sum_o w[o] * src[x + o]` over the region, zero padded.
///
/// Runs of equal weight along a row are evaluated as differences of row
/// prefix sums, so a uniform disk costs one term per kernel row.
fn correlate(src: &Field, weights: &[f64], radius: usize, region: Region) -> Vec<f64> {
    let (w, h) = (src.width(), src.height());
    let rw = region.x_max - region.x_min;
    let mut out = vec![0.0; rw * (region.y_max - region.y_min)];
    if out.is_empty() {
        return out;
    }

    let r = radius as i64;
    let runs: Vec<Vec<(i64, i64, f64)>> = (0..2 * radius + 1)
        .map(|row| row_runs(weights, radius, row))
        .collect();

    // Prefix sums of every source row that the region can reach.
    let y_lo = (region.y_min as i64 - r).max(0) as usize;
    let y_hi = ((region.y_max as i64 + r) as usize).min(h);
    let stride = w + 1;
    let mut prefix = vec![0.0; stride * (y_hi - y_lo)];
    for y in y_lo..y_hi {
        let p = &mut prefix[(y - y_lo) * stride..(y - y_lo + 1) * stride];
        let mut acc = 0.0;
        for (x, v) in src.row(y).iter().enumerate() {
            acc += v;
            p[x + 1] = acc;
        }
    }

    let wi = w as i64;
    for (ry, y) in (region.y_min..region.y_max).enumerate() {
        let dst = &mut out[ry * rw..(ry + 1) * rw];
        for (row, row_runs) in runs.iter().enumerate() {
            let sy = y as i64 + row as i64 - r;
            if sy < 0 || sy >= h as i64 || row_runs.is_empty() {
                continue;
            }
            let p = &prefix[(sy as usize - y_lo) * stride..(sy as usize - y_lo + 1) * stride];
            for &(a, b, weight) in row_runs {
                // Columns whose window [x + a, x + b] lies fully inside the row.
                let x0 = region.x_min as i64;
                let x1 = region.x_max as i64;
                let inner_lo = (-a).clamp(x0, x1);
                let inner_hi = (wi - b).min(x1).max(inner_lo);
                for x in (x0..inner_lo).chain(inner_hi..x1) {
                    let lo = (x + a).clamp(0, wi) as usize;
                    let hi = (x + b + 1).clamp(0, wi) as usize;
                    dst[(x - x0) as usize] += weight * (p[hi] - p[lo]);
                }
                if inner_lo < inner_hi {
                    let n = (inner_hi - inner_lo) as usize;
                    let lo = (inner_lo + a) as usize;
                    let hi = (inner_lo + b + 1) as usize;
                    let d = &mut dst[(inner_lo - x0) as usize..(inner_lo - x0) as usize + n];
                    for ((o, ph), pl) in d.iter_mut().zip(&p[hi..hi + n]).zip(&p[lo..lo + n]) {
                        *o += weight * (ph - pl);
                    }
                }
            }
        }
    }
    out
}

/// Convolutional prediction. With `region`, only cells inside it are
/// recomputed (reading neighbors outside it); all others are copied.
pub fn predict(
    map: &TgmMap,
    kernel: &TransitionKernel,
    region: Option<Region>,
) -> Result<Prediction> {
    let region = check_inputs(map, kernel, region)?;
    let ms = map.static_layer();
    let md = map.dynamic_layer();
    let w = ms.width();

    // (Ms ** K')[i] = sum_o K[o] Ms[i + o]; (Md ** K)[i] = sum_o K'[o] Md[i + o].
    let blocked = correlate(ms, kernel.off_center_weights(), kernel.radius(), region);
    let inflow = correlate(md, kernel.off_center_flipped_weights(), kernel.radius(), region);

    let tau0 = kernel.tau0();
    let mut dynamic = md.clone();
    let mut clipped = 0;
    let rw = region.x_max - region.x_min;
    let (s, d) = (ms.as_slice(), md.as_slice());
    let out = dynamic.as_mut_slice();
    for (ry, y) in (region.y_min..region.y_max).enumerate() {
        for (rx, x) in (region.x_min..region.x_max).enumerate() {
            let i = y * w + x;
            let k = ry * rw + rx;
            let value = d[i] * (tau0 + blocked[k]) + (1.0 - s[i]) * inflow[k];
            out[i] = clip_to_simplex(value, s[i], &mut clipped);
        }
    }
    Ok(Prediction {
        static_layer: ms.clone(),
        dynamic_layer: dynamic,
        clipped,
    })
}

fn clip_to_simplex(p_dynamic: f64, p_static: f64, clipped: &mut usize) -> f64 {
    let cap = (1.0 - p_static).max(0.0);
    if p_dynamic > cap {
        *clipped += 1;
        cap
    } else {
        p_dynamic.max(0.0)
    }
}

/// Reference prediction by explicit per-cell summation over the kernel
/// footprint. Shares no code with [`predict`]; intended for small grids.
pub fn predict_bruteforce(map: &TgmMap, kernel: &TransitionKernel) -> Result<Prediction> {
    let g = *map.geometry();
    let (w, h) = (g.width() as i64, g.height() as i64);
    let r = kernel.radius() as i64;
    let ms = map.static_layer();
    let md = map.dynamic_layer();
    let mut dynamic = Field::filled(g.width(), g.height(), 0.0);
    let mut clipped = 0;

    for y in 0..h {
        for x in 0..w {
            let i = CellIndex::new(x as usize, y as usize);
            let mut stay = kernel.tau0();
            let mut incoming = 0.0;
            for jy in (y - r).max(0)..=(y + r).min(h - 1) {
                for jx in (x - r).max(0)..=(x + r).min(w - 1) {
                    let j = CellIndex::new(jx as usize, jy as usize);
                    if j == i {
                        continue;
                    }
                    // tau_{i,j}: i's content blocked by a static j stays in i.
                    stay += kernel.tau(i, j) * ms.get(j.x, j.y);
                    // tau_{j,i}: j's dynamic content arriving in i.
                    incoming += kernel.tau(j, i) * md.get(j.x, j.y);
                }
            }
            let ps = ms.get(i.x, i.y);
            let value = md.get(i.x, i.y) * stay + (1.0 - ps) * incoming;
            let cap = (1.0 - ps).max(0.0);
            let value = if value > cap {
                clipped += 1;
                cap
            } else {
                value.max(0.0)
            };
            dynamic.set(i.x, i.y, value);
        }
    }
    Ok(Prediction {
        static_layer: ms.clone(),
        dynamic_layer: dynamic,
        clipped,
    })
}
