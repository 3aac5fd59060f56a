//! Belief rasterization and binary PPM output.

use std::io::Write;
use std::path::Path;

use crate::grid::{Field, TgmMap};

/// Color of a certainly static cell.
pub const BLUE: [u8; 3] = [0, 127, 255];
/// Color of a certainly dynamic cell; the per-channel complement of `BLUE`.
pub const ORANGE: [u8; 3] = [255, 128, 0];

/// 8-bit RGB image, row-major from the top row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Raster {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl Raster {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Pixel at image column `col`, image row `row` (row 0 is the top).
    pub fn pixel(&self, col: usize, row: usize) -> [u8; 3] {
        let i = 3 * (row * self.width + col);
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    /// Pixel showing grid cell `(x, y)`.
    pub fn cell_pixel(&self, x: usize, y: usize) -> [u8; 3] {
        self.pixel(x, self.height - 1 - y)
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.pixels
    }

    /// Binary P6 encoding.
    pub fn to_ppm(&self) -> Vec<u8> {
        let header = format!("P6\n{} {}\n255\n", self.width, self.height);
        let mut out = Vec::with_capacity(header.len() + self.pixels.len());
        out.extend_from_slice(header.as_bytes());
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn write_ppm(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        f.write_all(&self.to_ppm())?;
        f.flush()
    }

    fn from_cells(width: usize, height: usize, mut color: impl FnMut(usize) -> [u8; 3]) -> Self {
        let mut pixels = Vec::with_capacity(width * height * 3);
        for row in 0..height {
            let y = height - 1 - row;
            for x in 0..width {
                pixels.extend_from_slice(&color(y * width + x));
            }
        }
        Self {
            width,
            height,
            pixels,
        }
    }
}

fn round_half_up(v: f64) -> u8 {
    (v + 0.5).floor().clamp(0.0, 255.0) as u8
}

/// `white - p_s (white - BLUE) - p_d (white - ORANGE)` per channel.
///
/// Evaluated as `255 (1 - p_d) - (255 - BLUE) (p_s - p_d)`, which is the same
/// expression since the colors are complementary, but is exactly gray when
/// `p_s == p_d`.
pub fn belief_color(p_static: f64, p_dynamic: f64) -> [u8; 3] {
    let base = 255.0 * (1.0 - p_dynamic);
    let diff = p_static - p_dynamic;
    let mut rgb = [0u8; 3];
    for (c, out) in rgb.iter_mut().enumerate() {
        *out = round_half_up(base - (255.0 - BLUE[c] as f64) * diff);
    }
    rgb
}

/// Gray scale: probability 0 is white, 1 is black.
pub fn probability_color(p: f64) -> [u8; 3] {
    let v = round_half_up(255.0 * (1.0 - p));
    [v, v, v]
}

pub fn render_map(map: &TgmMap) -> Raster {
    let g = map.geometry();
    let s = map.static_layer().as_slice();
    let d = map.dynamic_layer().as_slice();
    Raster::from_cells(g.width(), g.height(), |i| belief_color(s[i], d[i]))
}

pub fn render_probability(field: &Field) -> Raster {
    let p = field.as_slice();
    Raster::from_cells(field.width(), field.height(), |i| probability_color(p[i]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{CellBelief, CellIndex, GridGeometry, Point2};
    use proptest::prelude::*;

    fn direct(ps: f64, pd: f64) -> [f64; 3] {
        let mut out = [0.0; 3];
        for c in 0..3 {
            out[c] = 255.0 - ps * (255.0 - BLUE[c] as f64) - pd * (255.0 - ORANGE[c] as f64);
        }
        out
    }

    #[test]
    fn colors_are_complementary() {
        for c in 0..3 {
            assert_eq!(BLUE[c] as u16 + ORANGE[c] as u16, 255);
        }
    }

    #[test]
    fn reference_pixels() {
        assert_eq!(belief_color(0.0, 0.0), [255, 255, 255]);
        assert_eq!(belief_color(0.5, 0.5), [128, 128, 128]);
        // direct(0.95, 0.05) = (12.75, 127.05, 242.25)
        let v = direct(0.95, 0.05);
        assert!((v[0] - 12.75).abs() < 1e-9 && (v[1] - 127.05).abs() < 1e-9);
        assert_eq!(belief_color(0.95, 0.05), [13, 127, 242]);
        assert_eq!(belief_color(1.0, 0.0), BLUE);
        assert_eq!(belief_color(0.0, 1.0), ORANGE);
        assert_eq!(probability_color(0.0), [255, 255, 255]);
        assert_eq!(probability_color(1.0), [0, 0, 0]);
        assert_eq!(probability_color(0.5), [128, 128, 128]);
    }

    #[test]
    fn ppm_layout_top_row_is_max_y() {
        let g = GridGeometry::new(Point2::new(0.0, 0.0), 1.0, 2, 2).unwrap();
        let mut m = TgmMap::new(g, 0.0, 0.0).unwrap();
        m.set_belief(CellIndex::new(1, 1), CellBelief::new(1.0, 0.0).unwrap())
            .unwrap();
        let r = render_map(&m);
        assert_eq!(r.pixel(1, 0), BLUE);
        assert_eq!(r.cell_pixel(1, 1), BLUE);
        assert_eq!(r.pixel(0, 1), [255, 255, 255]);
        let ppm = r.to_ppm();
        assert!(ppm.starts_with(b"P6\n2 2\n255\n"));
        assert_eq!(ppm.len(), 11 + 12);
        assert_eq!(&ppm[11 + 3..11 + 6], &BLUE);
    }

    proptest! {
        #[test]
        fn equal_beliefs_render_gray(p in 0.0f64..=0.5) {
            let [r, g, b] = belief_color(p, p);
            prop_assert!(r == g && g == b);
        }

        #[test]
        fn matches_direct_formula(ps in 0.0f64..1.0, t in 0.0f64..1.0) {
            let pd = t * (1.0 - ps);
            let got = belief_color(ps, pd);
            let want = direct(ps, pd);
            for c in 0..3 {
                prop_assert!((got[c] as f64 - want[c]).abs() <= 0.5 + 1e-9);
            }
        }
    }
}
