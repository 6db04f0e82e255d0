//! Uniform local binary pattern histograms over a grid of cells.
//!
//! Neighbors are read clockwise starting at the top-left, which becomes the
//! most significant bit:
//!
//! ```text
//! b7 b6 b5
//! b0  c b4
//! b1 b2 b3
//! ```
//!
//! A bit is 0 when the center is strictly brighter than the neighbor and 1
//! otherwise. Codes with at most two circular 0/1 transitions are uniform and
//! get their own bin (58 of them, in ascending code order); every other code
//! shares bin 58.

use crate::error::{Error, Result};
use crate::features::{grid_ranges, FeatureVector, Method};
use crate::imaging::ImageBuffer;

pub const LBP_BINS: usize = 59;
pub const NON_UNIFORM_BIN: usize = 58;

/// Offsets in bit order, most significant first: TL, T, TR, R, BR, B, BL, L.
const NEIGHBORS: [(isize, isize); 8] = [
    (-1, -1),
    (0, -1),
    (1, -1),
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
    (-1, 0),
];

const fn transitions(code: u8) -> u32 {
    (code ^ code.rotate_left(1)).count_ones()
}

const fn build_uniform_table() -> [u8; 256] {
    let mut table = [NON_UNIFORM_BIN as u8; 256];
    let mut next = 0u8;
    let mut code = 0usize;
    while code < 256 {
        if transitions(code as u8) <= 2 {
            table[code] = next;
            next += 1;
        }
        code += 1;
    }
    table
}

static UNIFORM_TABLE: [u8; 256] = build_uniform_table();

pub fn uniform_bin(code: u8) -> usize {
    UNIFORM_TABLE[code as usize] as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LbpConfig {
    pub grid_n: usize,
}

impl Default for LbpConfig {
    fn default() -> Self {
        Self { grid_n: 3 }
    }
}

impl LbpConfig {
    pub fn feature_len(&self) -> usize {
        self.grid_n * self.grid_n * LBP_BINS
    }
}

pub fn lbp_code(gray: &ImageBuffer, x: usize, y: usize) -> Result<u8> {
    let (w, h) = (gray.width(), gray.height());
    if gray.channels() != 1 {
        return Err(Error::InvalidInput("lbp_code expects a gray image".into()));
    }
    if x == 0 || y == 0 || x + 1 >= w || y + 1 >= h {
        return Err(Error::OutOfDomain {
            x,
            y,
            width: w,
            height: h,
        });
    }
    Ok(code_unchecked(gray.data(), w, x, y))
}

#[inline]
fn code_unchecked(data: &[u8], w: usize, x: usize, y: usize) -> u8 {
    let center = data[y * w + x];
    let mut code = 0u8;
    for (dx, dy) in NEIGHBORS {
        let nx = (x as isize + dx) as usize;
        let ny = (y as isize + dy) as usize;
        code = (code << 1) | u8::from(center <= data[ny * w + nx]);
    }
    code
}

pub fn lbp_features(gray: &ImageBuffer, cfg: &LbpConfig) -> Result<FeatureVector> {
    if gray.channels() != 1 {
        return Err(Error::InvalidInput(
            "lbp_features expects a gray image".into(),
        ));
    }
    if cfg.grid_n == 0 {
        return Err(Error::InvalidInput(
            "grid must have at least one cell per side".into(),
        ));
    }
    let (w, h) = (gray.width(), gray.height());
    let min_side = cfg.grid_n + 2;
    if w < min_side || h < min_side {
        return Err(Error::InvalidInput(format!(
            "a {w}x{h} image is too small for a {0}x{0} grid (need {min_side} pixels per side)",
            cfg.grid_n
        )));
    }
    let data = gray.data();
    let cols = grid_ranges(w, cfg.grid_n);
    let rows = grid_ranges(h, cfg.grid_n);
    let mut values = vec![0.0; cfg.feature_len()];
    for (ry, yr) in rows.iter().enumerate() {
        for (rx, xr) in cols.iter().enumerate() {
            let hist = &mut values[(ry * cfg.grid_n + rx) * LBP_BINS..][..LBP_BINS];
            for y in yr.start.max(1)..yr.end.min(h - 1) {
                for x in xr.start.max(1)..xr.end.min(w - 1) {
                    hist[uniform_bin(code_unchecked(data, w, x, y))] += 1.0;
                }
            }
        }
    }
    Ok(FeatureVector::new(Method::Lbp, values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn patch(center: u8, ring: [u8; 8]) -> ImageBuffer {
        // ring order TL, T, TR, R, BR, B, BL, L
        let data = vec![
            ring[0], ring[1], ring[2], ring[7], center, ring[3], ring[6], ring[5], ring[4],
        ];
        ImageBuffer::new(3, 3, 1, data).unwrap()
    }

    #[test]
    fn code_examples() {
        assert_eq!(lbp_code(&patch(5, [0; 8]), 1, 1).unwrap(), 0);
        assert_eq!(lbp_code(&patch(100, [100; 8]), 1, 1).unwrap(), 255);
        let img = patch(10, [20, 20, 20, 20, 0, 0, 0, 0]);
        assert_eq!(lbp_code(&img, 1, 1).unwrap(), 0b1111_0000);
    }

    #[test]
    fn border_pixels_are_out_of_domain() {
        let img = patch(1, [0; 8]);
        assert!(matches!(
            lbp_code(&img, 0, 1),
            Err(Error::OutOfDomain { .. })
        ));
        assert!(matches!(
            lbp_code(&img, 1, 2),
            Err(Error::OutOfDomain { .. })
        ));
    }

    #[test]
    fn uniform_bins() {
        let uniform: Vec<u8> = (0..=255u8).filter(|&c| transitions(c) <= 2).collect();
        assert_eq!(uniform.len(), 58);
        assert_eq!(*uniform.last().unwrap(), 255);
        assert_eq!(uniform_bin(0), 0);
        assert_eq!(uniform_bin(255), 57);
        assert_eq!(uniform_bin(0b0101_0101), NON_UNIFORM_BIN);
        for (i, &c) in uniform.iter().enumerate() {
            assert_eq!(uniform_bin(c), i);
        }
        let non_uniform = (0..=255u8)
            .filter(|&c| uniform_bin(c) == NON_UNIFORM_BIN)
            .count();
        assert_eq!(non_uniform, 198);
    }

    #[test]
    fn constant_image_fills_bin_57() {
        let img = ImageBuffer::filled(20, 17, &[90]).unwrap();
        let f = lbp_features(&img, &LbpConfig::default()).unwrap();
        assert_eq!(f.len(), 531);
        for cell in f.values.chunks(LBP_BINS) {
            assert!(cell[57] > 0.0);
            assert_eq!(cell.iter().sum::<f64>(), cell[57]);
        }
        assert_eq!(f.values.iter().sum::<f64>(), (18 * 15) as f64);
    }

    /// Independent per-pixel scan: every interior pixel is coded from its
    /// own 3x3 window and dropped into the cell containing it.
    fn oracle(img: &ImageBuffer, n: usize) -> Vec<f64> {
        let (w, h) = (img.width(), img.height());
        let cell_of = |v: usize, len: usize| (v / (len / n)).min(n - 1);
        let mut out = vec![0.0; n * n * 59];
        for y in 1..h - 1 {
            for x in 1..w - 1 {
                let c = img.luma(x, y);
                let ring = [
                    img.luma(x - 1, y - 1),
                    img.luma(x, y - 1),
                    img.luma(x + 1, y - 1),
                    img.luma(x + 1, y),
                    img.luma(x + 1, y + 1),
                    img.luma(x, y + 1),
                    img.luma(x - 1, y + 1),
                    img.luma(x - 1, y),
                ];
                let bits: Vec<bool> = ring.iter().map(|&v| c <= v).collect();
                let code = bits.iter().fold(0u32, |acc, &b| acc * 2 + b as u32);
                let flips = (0..8).filter(|&i| bits[i] != bits[(i + 1) % 8]).count();
                let bin = if flips <= 2 {
                    (0..code)
                        .filter(|&k| {
                            let kb: Vec<bool> = (0..8).map(|i| (k >> (7 - i)) & 1 == 1).collect();
                            (0..8).filter(|&i| kb[i] != kb[(i + 1) % 8]).count() <= 2
                        })
                        .count()
                } else {
                    58
                };
                let cell = cell_of(y, h) * n + cell_of(x, w);
                out[cell * 59 + bin] += 1.0;
            }
        }
        out
    }

    #[test]
    fn step_edge_matches_oracle() {
        let img = ImageBuffer::from_fn_gray(23, 19, |_, y| if y < 9 { 30 } else { 200 }).unwrap();
        let f = lbp_features(&img, &LbpConfig::default()).unwrap();
        assert_eq!(f.values, oracle(&img, 3));
    }

    #[test]
    fn too_small_image() {
        let img = ImageBuffer::filled(4, 10, &[1]).unwrap();
        assert!(matches!(
            lbp_features(&img, &LbpConfig::default()),
            Err(Error::InvalidInput(_))
        ));
        let img = ImageBuffer::filled(5, 5, &[1]).unwrap();
        assert!(lbp_features(&img, &LbpConfig::default()).is_ok());
    }

    fn arb_gray() -> impl Strategy<Value = ImageBuffer> {
        (5usize..24, 5usize..24).prop_flat_map(|(w, h)| {
            proptest::collection::vec(any::<u8>(), w * h)
                .prop_map(move |d| ImageBuffer::new(w, h, 1, d).unwrap())
        })
    }

    proptest! {
        #[test]
        fn matches_oracle_and_conserves_mass(img in arb_gray(), n in 1usize..4) {
            let cfg = LbpConfig { grid_n: n };
            let f = lbp_features(&img, &cfg).unwrap();
            prop_assert_eq!(&f.values, &oracle(&img, n));
            let interior = ((img.width() - 2) * (img.height() - 2)) as f64;
            prop_assert_eq!(f.values.iter().sum::<f64>(), interior);
        }
    }
}
