//! Backdrop removal: cluster pixel colors, take the bluest cluster as
//! background, erode the remaining foreground and zero everything else.

use log::warn;

use crate::clustering::{kmeans_fit, DEFAULT_MAX_ITERS};
use crate::error::{Error, Result};
use crate::imaging::{erode, BinaryMask, ImageBuffer};

/// Foreground fractions outside this range are reported for manual review.
pub const FOREGROUND_RANGE: (f64, f64) = (0.05, 0.95);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SegmentConfig {
    pub k: usize,
    pub erode_radius: usize,
    pub erode_iters: usize,
    pub seed: u64,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        Self {
            k: 2,
            erode_radius: 1,
            erode_iters: 1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segmentation {
    /// Input image with background pixels set to black.
    pub image: ImageBuffer,
    pub mask: BinaryMask,
    pub foreground_fraction: f64,
    pub warnings: Vec<String>,
}

/// `B - max(R, G)` of a cluster center.
fn blueness(center: &[f64]) -> f64 {
    center[2] - center[0].max(center[1])
}

pub fn segment_arm(img: &ImageBuffer, cfg: &SegmentConfig) -> Result<Segmentation> {
    img.require_channels(3, "segment_arm")?;
    if img.pixel_count() < cfg.k {
        return Err(Error::InsufficientData(format!(
            "{} pixels cannot form {} color clusters",
            img.pixel_count(),
            cfg.k
        )));
    }
    let points: Vec<[f64; 3]> = img
        .pixels()
        .map(|p| [p[0] as f64, p[1] as f64, p[2] as f64])
        .collect();
    let model = kmeans_fit(&points, cfg.k, DEFAULT_MAX_ITERS, cfg.seed)?;

    let mut background = 0;
    for (j, c) in model.centers.iter().enumerate() {
        if blueness(c) > blueness(&model.centers[background]) {
            background = j;
        }
    }

    let bits = points
        .iter()
        .map(|p| model.assign(p).map(|j| j != background))
        .collect::<Result<Vec<bool>>>()?;
    let raw = BinaryMask::new(img.width(), img.height(), bits)?;
    let mask = if cfg.erode_iters > 0 {
        erode(&raw, cfg.erode_radius.max(1), cfg.erode_iters)
    } else {
        raw
    };

    let mut data = img.data().to_vec();
    for (px, &fg) in data.chunks_exact_mut(3).zip(mask.bits()) {
        if !fg {
            px.fill(0);
        }
    }
    let image = ImageBuffer::new(img.width(), img.height(), 3, data)?;

    let foreground_fraction = mask.count() as f64 / img.pixel_count() as f64;
    let mut warnings = Vec::new();
    if mask.is_empty() {
        warnings.push("segmentation left no foreground pixels".to_string());
    } else if foreground_fraction < FOREGROUND_RANGE.0 || foreground_fraction > FOREGROUND_RANGE.1 {
        warnings.push(format!(
            "foreground covers {:.1}% of the image; check the segmentation by hand",
            100.0 * foreground_fraction
        ));
    }
    for w in &warnings {
        warn!("{w}");
    }

    Ok(Segmentation {
        image,
        mask,
        foreground_fraction,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const BLUE: [u8; 3] = [20, 40, 210];
    const SKIN: [u8; 3] = [224, 172, 105];

    #[test]
    fn blue_left_skin_right() {
        let (w, h) = (16, 10);
        let img =
            ImageBuffer::from_fn_rgb(w, h, |x, _| if x < w / 2 { BLUE } else { SKIN }).unwrap();
        let seg = segment_arm(&img, &SegmentConfig::default()).unwrap();
        for y in 0..h {
            for x in 0..w {
                let expected = x > w / 2 && x < w - 1 && y > 0 && y < h - 1;
                assert_eq!(seg.mask.get(x, y), expected, "({x},{y})");
                let px = seg.image.pixel(x, y);
                if expected {
                    assert_eq!(px, img.pixel(x, y));
                } else {
                    assert_eq!(px, &[0, 0, 0]);
                }
            }
        }
        assert!(seg.warnings.is_empty());
    }

    #[test]
    fn all_blue_image_yields_warning_and_black_output() {
        let img = ImageBuffer::from_fn_rgb(12, 12, |x, y| {
            if (x + y) % 5 == 0 {
                [10, 30, 190]
            } else {
                BLUE
            }
        })
        .unwrap();
        let seg = segment_arm(&img, &SegmentConfig::default()).unwrap();
        // the scattered minority cluster cannot survive erosion
        assert!(seg.mask.is_empty());
        assert!(seg.image.data().iter().all(|&v| v == 0));
        assert_eq!(seg.warnings.len(), 1);
    }

    #[test]
    fn skin_on_black_keeps_the_skin() {
        let img = ImageBuffer::from_fn_rgb(20, 20, |x, y| {
            if (5..15).contains(&x) && (4..16).contains(&y) {
                SKIN
            } else {
                [0, 0, 0]
            }
        })
        .unwrap();
        let seg = segment_arm(&img, &SegmentConfig::default()).unwrap();
        assert_eq!(seg.mask.count(), 8 * 10);
        assert!(seg.mask.get(10, 10));
        assert!(!seg.mask.get(5, 10));
    }

    #[test]
    fn deterministic_and_erosion_shrinks() {
        let img = ImageBuffer::from_fn_rgb(30, 30, |x, y| {
            let d = (x as i32 - 15).pow(2) + (y as i32 - 14).pow(2);
            if d < 80 {
                [200, (150 + x) as u8, 120]
            } else {
                [(x % 7) as u8, 50, 200]
            }
        })
        .unwrap();
        let cfg = SegmentConfig {
            seed: 9,
            ..SegmentConfig::default()
        };
        let a = segment_arm(&img, &cfg).unwrap();
        let b = segment_arm(&img, &cfg).unwrap();
        assert_eq!(a, b);
        let raw = segment_arm(
            &img,
            &SegmentConfig {
                erode_iters: 0,
                ..cfg
            },
        )
        .unwrap();
        assert!(a.mask.count() <= raw.mask.count());
        assert!(a.mask.count() > 0);
    }

    #[test]
    fn rejects_tiny_and_gray_images() {
        let img = ImageBuffer::filled(1, 1, &SKIN).unwrap();
        assert!(matches!(
            segment_arm(&img, &SegmentConfig::default()),
            Err(Error::InsufficientData(_))
        ));
        let gray = ImageBuffer::filled(4, 4, &[9]).unwrap();
        assert!(segment_arm(&gray, &SegmentConfig::default()).is_err());
    }
}
