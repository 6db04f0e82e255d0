//! Contour tracing and intensity-weighted contour moments.
//!
//! A contour is the ordered outer boundary of one 8-connected foreground
//! component, found by Moore-neighbor tracing with Jacob's stopping
//! criterion. Moments are sums over the contour pixels,
//! `m_pq = sum I(x, y) x^p y^q`, where `I` is either the gray level at the
//! pixel or 1.
//!
//! Spatial moments are kept as exact integers. Central moments are derived
//! from them with the usual expansion evaluated on integer numerators, which
//! makes them exactly invariant to integer translations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureVector, Method};
use crate::imaging::{BinaryMask, ImageBuffer};

pub const MC_LEN: usize = 31;

/// Moore neighborhood, clockwise on screen (y grows downward), starting west.
const DIRS: [(isize, isize); 8] = [
    (-1, 0),
    (-1, -1),
    (0, -1),
    (1, -1),
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
];

fn dir_index(dx: isize, dy: isize) -> usize {
    DIRS.iter()
        .position(|&d| d == (dx, dy))
        .expect("offset between ring neighbors is a unit step")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Contour {
    pub points: Vec<(usize, usize)>,
    /// Weight of each point; a gray level, or 1 in binary mode.
    pub intensities: Vec<u32>,
}

impl Contour {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Where contour weights come from.
#[derive(Debug, Clone, Copy)]
pub enum Intensity<'a> {
    Gray(&'a ImageBuffer),
    Unit,
}

/// Labels 8-connected components in raster order of their first pixel.
/// Returns the label grid (0 = background) and each component's first pixel.
fn label_components(mask: &BinaryMask) -> (Vec<u32>, Vec<(usize, usize)>) {
    let (w, h) = (mask.width(), mask.height());
    let mut labels = vec![0u32; w * h];
    let mut starts = Vec::new();
    let mut stack = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if !mask.get(x, y) || labels[y * w + x] != 0 {
                continue;
            }
            starts.push((x, y));
            let id = starts.len() as u32;
            labels[y * w + x] = id;
            stack.push((x, y));
            while let Some((cx, cy)) = stack.pop() {
                for (dx, dy) in DIRS {
                    let (nx, ny) = (cx as isize + dx, cy as isize + dy);
                    if mask.get_signed(nx, ny) {
                        let i = ny as usize * w + nx as usize;
                        if labels[i] == 0 {
                            labels[i] = id;
                            stack.push((nx as usize, ny as usize));
                        }
                    }
                }
            }
        }
    }
    (labels, starts)
}

fn trace(
    labels: &[u32],
    w: usize,
    h: usize,
    id: u32,
    start: (usize, usize),
) -> Vec<(usize, usize)> {
    let inside = |x: isize, y: isize| {
        x >= 0
            && y >= 0
            && (x as usize) < w
            && (y as usize) < h
            && labels[y as usize * w + x as usize] == id
    };
    let mut points = vec![start];
    let mut seen = std::collections::HashSet::from([start]);
    let (sx, sy) = (start.0 as isize, start.1 as isize);
    // the start is the component's first raster pixel, so its west side is outside
    let (mut cx, mut cy, mut back) = (sx, sy, 0usize);
    let limit = 8 * labels.iter().filter(|&&l| l == id).count() + 16;
    for _ in 0..limit {
        let Some(d) = (1..=8)
            .map(|k| (back + k) % 8)
            .find(|&d| inside(cx + DIRS[d].0, cy + DIRS[d].1))
        else {
            break;
        };
        let (nx, ny) = (cx + DIRS[d].0, cy + DIRS[d].1);
        let prev = DIRS[(d + 7) % 8];
        back = dir_index(cx + prev.0 - nx, cy + prev.1 - ny);
        (cx, cy) = (nx, ny);
        if (cx, cy) == (sx, sy) && back == 0 {
            break;
        }
        let p = (cx as usize, cy as usize);
        if seen.insert(p) {
            points.push(p);
        }
    }
    points
}

/// One outer contour per 8-connected component, in raster order of the
/// components' top-left pixels. Each point appears once, in tracing order.
pub fn trace_contours(mask: &BinaryMask) -> Vec<Vec<(usize, usize)>> {
    let (labels, starts) = label_components(mask);
    starts
        .iter()
        .enumerate()
        .map(|(i, &s)| trace(&labels, mask.width(), mask.height(), i as u32 + 1, s))
        .collect()
}

pub fn extract_contours(mask: &BinaryMask, intensity: Intensity<'_>) -> Result<Vec<Contour>> {
    if let Intensity::Gray(img) = intensity {
        if img.channels() != 1 || !mask.matches(img) {
            return Err(Error::InvalidInput(
                "contour intensities need a gray image the size of the mask".into(),
            ));
        }
    }
    Ok(trace_contours(mask)
        .into_iter()
        .map(|points| {
            let intensities = points
                .iter()
                .map(|&(x, y)| match intensity {
                    Intensity::Gray(img) => img.luma(x, y) as u32,
                    Intensity::Unit => 1,
                })
                .collect();
            Contour {
                points,
                intensities,
            }
        })
        .collect())
}

/// Raw moments `m00, m10, m01, m20, m11, m02, m30, m21, m12, m03`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpatialMoments {
    pub m00: i128,
    pub m10: i128,
    pub m01: i128,
    pub m20: i128,
    pub m11: i128,
    pub m02: i128,
    pub m30: i128,
    pub m21: i128,
    pub m12: i128,
    pub m03: i128,
}

impl SpatialMoments {
    pub fn to_array(&self) -> [f64; 10] {
        [
            self.m00, self.m10, self.m01, self.m20, self.m11, self.m02, self.m30, self.m21,
            self.m12, self.m03,
        ]
        .map(|v| v as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CentralMoments {
    pub mu20: f64,
    pub mu11: f64,
    pub mu02: f64,
    pub mu30: f64,
    pub mu21: f64,
    pub mu12: f64,
    pub mu03: f64,
}

impl CentralMoments {
    pub fn to_array(&self) -> [f64; 7] {
        [
            self.mu20, self.mu11, self.mu02, self.mu30, self.mu21, self.mu12, self.mu03,
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizedMoments {
    pub nu20: f64,
    pub nu11: f64,
    pub nu02: f64,
    pub nu30: f64,
    pub nu21: f64,
    pub nu12: f64,
    pub nu03: f64,
}

impl NormalizedMoments {
    pub fn to_array(&self) -> [f64; 7] {
        [
            self.nu20, self.nu11, self.nu02, self.nu30, self.nu21, self.nu12, self.nu03,
        ]
    }
}

pub fn spatial_moments(c: &Contour) -> Result<SpatialMoments> {
    if c.is_empty() || c.points.len() != c.intensities.len() {
        return Err(Error::InvalidInput(
            "moments need a nonempty contour with one intensity per point".into(),
        ));
    }
    let mut m = SpatialMoments {
        m00: 0,
        m10: 0,
        m01: 0,
        m20: 0,
        m11: 0,
        m02: 0,
        m30: 0,
        m21: 0,
        m12: 0,
        m03: 0,
    };
    for (&(x, y), &i) in c.points.iter().zip(&c.intensities) {
        let (x, y, i) = (x as i128, y as i128, i as i128);
        m.m00 += i;
        m.m10 += i * x;
        m.m01 += i * y;
        m.m20 += i * x * x;
        m.m11 += i * x * y;
        m.m02 += i * y * y;
        m.m30 += i * x * x * x;
        m.m21 += i * x * x * y;
        m.m12 += i * x * y * y;
        m.m03 += i * y * y * y;
    }
    Ok(m)
}

pub fn central_moments(m: &SpatialMoments) -> Result<CentralMoments> {
    if m.m00 <= 0 {
        return Err(Error::DegenerateContour(format!(
            "m00 = {} (contour carries no intensity)",
            m.m00
        )));
    }
    Ok(central_exact(m).unwrap_or_else(|| central_float(m)))
}

/// `mu_pq * m00^k` as an exact integer, divided once at the end.
fn central_exact(m: &SpatialMoments) -> Option<CentralMoments> {
    let m00 = m.m00;
    let sq = m00.checked_mul(m00)?;
    let mul = |a: i128, b: i128| a.checked_mul(b);
    let mul3 = |a: i128, b: i128, c: i128| a.checked_mul(b)?.checked_mul(c);
    let second = |a: i128, b: i128, c: i128| mul(m00, a)?.checked_sub(mul(b, c)?);
    let n20 = second(m.m20, m.m10, m.m10)?;
    let n11 = second(m.m11, m.m10, m.m01)?;
    let n02 = second(m.m02, m.m01, m.m01)?;
    let n30 = mul(sq, m.m30)?
        .checked_sub(mul3(3 * m00, m.m10, m.m20)?)?
        .checked_add(mul3(2 * m.m10, m.m10, m.m10)?)?;
    let n21 = mul(sq, m.m21)?
        .checked_sub(mul3(2 * m00, m.m10, m.m11)?)?
        .checked_sub(mul3(m00, m.m01, m.m20)?)?
        .checked_add(mul3(2 * m.m10, m.m10, m.m01)?)?;
    let n12 = mul(sq, m.m12)?
        .checked_sub(mul3(2 * m00, m.m01, m.m11)?)?
        .checked_sub(mul3(m00, m.m10, m.m02)?)?
        .checked_add(mul3(2 * m.m01, m.m01, m.m10)?)?;
    let n03 = mul(sq, m.m03)?
        .checked_sub(mul3(3 * m00, m.m01, m.m02)?)?
        .checked_add(mul3(2 * m.m01, m.m01, m.m01)?)?;
    let d1 = m00 as f64;
    let d2 = sq as f64;
    Some(CentralMoments {
        mu20: n20 as f64 / d1,
        mu11: n11 as f64 / d1,
        mu02: n02 as f64 / d1,
        mu30: n30 as f64 / d2,
        mu21: n21 as f64 / d2,
        mu12: n12 as f64 / d2,
        mu03: n03 as f64 / d2,
    })
}

fn central_float(m: &SpatialMoments) -> CentralMoments {
    let [m00, m10, m01, m20, m11, m02, m30, m21, m12, m03] = m.to_array();
    let (xb, yb) = (m10 / m00, m01 / m00);
    CentralMoments {
        mu20: m20 - xb * m10,
        mu11: m11 - xb * m01,
        mu02: m02 - yb * m01,
        mu30: m30 - 3.0 * xb * m20 + 2.0 * xb * xb * m10,
        mu21: m21 - 2.0 * xb * m11 - yb * m20 + 2.0 * xb * xb * m01,
        mu12: m12 - 2.0 * yb * m11 - xb * m02 + 2.0 * yb * yb * m10,
        mu03: m03 - 3.0 * yb * m02 + 2.0 * yb * yb * m01,
    }
}

/// Power of `m00` used to normalize central moments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    /// `m00^(1 + (p+q)/2)`: the region-moment convention. Under it, moments
    /// summed over a boundary still grow linearly with the shape's size.
    Area,
    /// `m00^(1 + p + q)`: the exponent under which boundary sums become
    /// scale invariant, since `m00` is proportional to the contour length.
    #[default]
    Perimeter,
}

/// `nu_pq = mu_pq / m00^(1 + (p+q)/2)`.
pub fn normalized_moments(mu: &CentralMoments, m00: f64) -> Result<NormalizedMoments> {
    normalized_moments_with(mu, m00, Normalization::Area)
}

pub fn normalized_moments_with(
    mu: &CentralMoments,
    m00: f64,
    norm: Normalization,
) -> Result<NormalizedMoments> {
    if !(m00 > 0.0) {
        return Err(Error::DegenerateContour(format!(
            "cannot normalize by m00 = {m00}"
        )));
    }
    let (s2, s3) = match norm {
        Normalization::Area => (m00 * m00, m00 * m00 * m00.sqrt()),
        Normalization::Perimeter => (m00 * m00 * m00, m00 * m00 * m00 * m00),
    };
    Ok(NormalizedMoments {
        nu20: mu.mu20 / s2,
        nu11: mu.mu11 / s2,
        nu02: mu.mu02 / s2,
        nu30: mu.mu30 / s3,
        nu21: mu.mu21 / s3,
        nu12: mu.mu12 / s3,
        nu03: mu.mu03 / s3,
    })
}

/// The seven Hu invariants.
pub fn hu_moments(nu: &NormalizedMoments) -> [f64; 7] {
    let NormalizedMoments {
        nu20: n20,
        nu11: n11,
        nu02: n02,
        nu30: n30,
        nu21: n21,
        nu12: n12,
        nu03: n03,
    } = *nu;
    let a = n30 + n12;
    let b = n21 + n03;
    let c = n30 - 3.0 * n12;
    let d = 3.0 * n21 - n03;
    [
        n20 + n02,
        (n20 - n02).powi(2) + 4.0 * n11 * n11,
        c * c + d * d,
        a * a + b * b,
        c * a * (a * a - 3.0 * b * b) + d * b * (3.0 * a * a - b * b),
        (n20 - n02) * (a * a - b * b) + 4.0 * n11 * a * b,
        d * a * (a * a - 3.0 * b * b) - c * b * (3.0 * a * a - b * b),
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentSet {
    pub spatial: [f64; 10],
    pub central: CentralMoments,
    pub normalized: NormalizedMoments,
    pub hu: [f64; 7],
}

impl MomentSet {
    pub fn of_contour(c: &Contour, norm: Normalization) -> Result<Self> {
        let m = spatial_moments(c)?;
        let central = central_moments(&m)?;
        let normalized = normalized_moments_with(&central, m.m00 as f64, norm)?;
        Ok(Self {
            spatial: m.to_array(),
            central,
            hu: hu_moments(&normalized),
            normalized,
        })
    }

    /// spatial(10) ‖ central(7) ‖ normalized(7) ‖ hu(7).
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(MC_LEN);
        v.extend(self.spatial);
        v.extend(self.central.to_array());
        v.extend(self.normalized.to_array());
        v.extend(self.hu);
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct McConfig {
    /// Weight every contour pixel by 1 instead of its gray level.
    pub binary: bool,
    pub normalization: Normalization,
}

/// Index of the contour with the most points; earlier contours win ties.
pub fn largest_contour(contours: &[Contour]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, c) in contours.iter().enumerate() {
        if best.is_none_or(|b| c.len() > contours[b].len()) {
            best = Some(i);
        }
    }
    best
}

pub fn mc_features(mask: &BinaryMask, gray: &ImageBuffer, cfg: &McConfig) -> Result<FeatureVector> {
    let intensity = if cfg.binary {
        Intensity::Unit
    } else {
        Intensity::Gray(gray)
    };
    let contours = extract_contours(mask, intensity)?;
    let best = largest_contour(&contours).ok_or(Error::NoContour)?;
    let set = MomentSet::of_contour(&contours[best], cfg.normalization)?;
    Ok(FeatureVector::new(Method::Mc, set.to_vec()))
}
