//! Joint hue/saturation histograms per grid cell.

use crate::error::{Error, Result};
use crate::features::{grid_ranges, FeatureVector, Method};
use crate::imaging::{hsv_of, ImageBuffer};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HcConfig {
    pub grid_n: usize,
    pub bins_per_channel: usize,
    /// Ignore exact black pixels (the zeroed backdrop).
    pub skip_background: bool,
}

impl Default for HcConfig {
    fn default() -> Self {
        Self {
            grid_n: 3,
            bins_per_channel: 5,
            skip_background: true,
        }
    }
}

impl HcConfig {
    pub fn feature_len(&self) -> usize {
        self.grid_n * self.grid_n * self.bins_per_channel * self.bins_per_channel
    }
}

fn quantize(value: f64, upper: f64, bins: usize) -> usize {
    ((value / upper * bins as f64) as usize).min(bins - 1)
}

/// Bin of a pixel: `h_bin * bins + s_bin`.
pub fn hs_bin(rgb: [u8; 3], bins: usize) -> usize {
    let hsv = hsv_of(rgb[0], rgb[1], rgb[2]);
    quantize(hsv.h, 360.0, bins) * bins + quantize(hsv.s, 1.0, bins)
}

pub fn hc_features(img: &ImageBuffer, cfg: &HcConfig) -> Result<FeatureVector> {
    img.require_channels(3, "hc_features")?;
    if cfg.grid_n == 0 || cfg.bins_per_channel == 0 {
        return Err(Error::InvalidInput(
            "grid size and bins per channel must be positive".into(),
        ));
    }
    let bins = cfg.bins_per_channel;
    let per_cell = bins * bins;
    let cols = grid_ranges(img.width(), cfg.grid_n);
    let rows = grid_ranges(img.height(), cfg.grid_n);
    let mut values = vec![0.0; cfg.feature_len()];
    for (ry, yr) in rows.iter().enumerate() {
        for (rx, xr) in cols.iter().enumerate() {
            let hist = &mut values[(ry * cfg.grid_n + rx) * per_cell..][..per_cell];
            for y in yr.clone() {
                for x in xr.clone() {
                    let p = img.pixel(x, y);
                    let rgb = [p[0], p[1], p[2]];
                    if cfg.skip_background && rgb == [0, 0, 0] {
                        continue;
                    }
                    hist[hs_bin(rgb, bins)] += 1.0;
                }
            }
        }
    }
    Ok(FeatureVector::new(Method::Hc, values))
}
