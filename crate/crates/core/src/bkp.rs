//! Bag of keypoints: Hessian blob detection, 64-d gradient descriptors, a
//! K-means vocabulary and per-image word histograms.
//!
//! The default detector keeps the structure of SURF at reduced fidelity.
//! Second derivatives are approximated with box filters on an integral image
//! over three octaves of four filter sizes each. Maxima of the
//! determinant-of-Hessian response are kept after 3x3x3 non-maximum
//! suppression. Each keypoint is described by upright Haar-wavelet sums over
//! a 4x4 grid of subregions.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::clustering::{kmeans_fit, KMeansModel, DEFAULT_MAX_ITERS};
use crate::error::{Error, Result};
use crate::features::{FeatureVector, Method};
use crate::imaging::ImageBuffer;

pub const DESCRIPTOR_LEN: usize = 64;
pub const DEFAULT_VOCABULARY: usize = 800;
/// Gives a few hundred keypoints on a 256x256 checkerboard of 16 px squares.
pub const DEFAULT_THRESHOLD: f64 = 0.015;
pub const MIN_SIDE: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub scale: f64,
    pub response: f64,
    pub descriptor: Vec<f64>,
}

pub trait KeypointDetector: Send + Sync {
    /// Keypoints sorted by descending response.
    fn detect(&self, gray: &ImageBuffer) -> Result<Vec<Keypoint>>;
}

/// Summed-area table with exact integer sums.
struct Integral {
    w: usize,
    h: usize,
    sums: Vec<i64>,
}

impl Integral {
    fn new(gray: &ImageBuffer) -> Self {
        let (w, h) = (gray.width(), gray.height());
        let mut sums = vec![0i64; (w + 1) * (h + 1)];
        for y in 0..h {
            let mut row = 0i64;
            for x in 0..w {
                row += gray.luma(x, y) as i64;
                sums[(y + 1) * (w + 1) + x + 1] = sums[y * (w + 1) + x + 1] + row;
            }
        }
        Self { w, h, sums }
    }

    /// Sum over `x0..x1`, `y0..y1` (half-open), clipped to the image.
    fn rect(&self, x0: isize, y0: isize, x1: isize, y1: isize) -> i64 {
        let cx = |v: isize| v.clamp(0, self.w as isize) as usize;
        let cy = |v: isize| v.clamp(0, self.h as isize) as usize;
        let (x0, x1, y0, y1) = (cx(x0), cx(x1), cy(y0), cy(y1));
        if x0 >= x1 || y0 >= y1 {
            return 0;
        }
        let s = self.w + 1;
        self.sums[y1 * s + x1] - self.sums[y0 * s + x1] - self.sums[y1 * s + x0]
            + self.sums[y0 * s + x0]
    }
}

/// Box-filter Hessian at `(x, y)` for a filter of side `size = 3 * lobe`.
/// Returns `(dxx, dyy, dxy)` as raw integer sums.
fn box_hessian(ii: &Integral, x: isize, y: isize, size: usize) -> (i64, i64, i64) {
    let l = (size / 3) as isize;
    let half = (size as isize - 1) / 2;
    let wing = l - 1; // the 2l-1 wide band spans center ± (l-1)
    let mid = (l - 1) / 2;
    let dyy = ii.rect(x - wing, y - half, x + wing + 1, y + half + 1)
        - 3 * ii.rect(x - wing, y - mid, x + wing + 1, y + mid + 1);
    let dxx = ii.rect(x - half, y - wing, x + half + 1, y + wing + 1)
        - 3 * ii.rect(x - mid, y - wing, x + mid + 1, y + wing + 1);
    let dxy = ii.rect(x - l, y - l, x, y) + ii.rect(x + 1, y + 1, x + l + 1, y + l + 1)
        - ii.rect(x + 1, y - l, x + l + 1, y)
        - ii.rect(x - l, y + 1, x, y + l + 1);
    (dxx, dyy, dxy)
}

/// Scale-normalized determinant of the box Hessian, intensities in `[0, 1]`.
fn response(ii: &Integral, x: isize, y: isize, size: usize) -> f64 {
    let (dxx, dyy, dxy) = box_hessian(ii, x, y, size);
    let norm = 255.0 * (size * size) as f64;
    let (dxx, dyy, dxy) = (dxx as f64 / norm, dyy as f64 / norm, dxy as f64 / norm);
    dxx * dyy - 0.81 * dxy * dxy
}

/// Filter sides of the four layers of an octave (0-based).
pub fn octave_sizes(octave: u32) -> [usize; 4] {
    let step = 6usize << octave;
    let first = 9 + 6 * ((1usize << octave) - 1);
    [first, first + step, first + 2 * step, first + 3 * step]
}

/// Simplified SURF-style detector (upright, no orientation).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HessianDetector {
    pub threshold: f64,
    pub octaves: u32,
}

impl Default for HessianDetector {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_THRESHOLD,
            octaves: 3,
        }
    }
}

impl HessianDetector {
    pub fn new(threshold: f64) -> Self {
        Self {
            threshold,
            ..Self::default()
        }
    }
}

struct Layer {
    size: usize,
    values: Vec<f64>,
}

impl KeypointDetector for HessianDetector {
    fn detect(&self, gray: &ImageBuffer) -> Result<Vec<Keypoint>> {
        if gray.channels() != 1 {
            return Err(Error::InvalidInput(
                "keypoint detection expects a gray image".into(),
            ));
        }
        let (w, h) = (gray.width(), gray.height());
        if w < MIN_SIDE || h < MIN_SIDE {
            return Err(Error::InvalidInput(format!(
                "keypoint detection needs at least {MIN_SIDE}x{MIN_SIDE} pixels, got {w}x{h}"
            )));
        }
        let ii = Integral::new(gray);
        let mut found = Vec::new();
        for octave in 0..self.octaves {
            let sizes = octave_sizes(octave);
            let step = 1usize << octave;
            let border = (sizes[3] - 1) / 2;
            if 2 * border >= w || 2 * border >= h {
                break;
            }
            // grid of sample positions where every layer's filter fits
            let gx: Vec<usize> = (0..w)
                .step_by(step)
                .filter(|&x| x >= border && x + border < w)
                .collect();
            let gy: Vec<usize> = (0..h)
                .step_by(step)
                .filter(|&y| y >= border && y + border < h)
                .collect();
            if gx.len() < 3 || gy.len() < 3 {
                continue;
            }
            let (nx, ny) = (gx.len(), gy.len());
            let layers: Vec<Layer> = sizes
                .iter()
                .map(|&size| {
                    let mut values = Vec::with_capacity(nx * ny);
                    for &y in &gy {
                        for &x in &gx {
                            values.push(response(&ii, x as isize, y as isize, size));
                        }
                    }
                    Layer { size, values }
                })
                .collect();
            let mut candidates = Vec::new();
            for li in 1..3 {
                for j in 1..ny - 1 {
                    for i in 1..nx - 1 {
                        let v = layers[li].values[j * nx + i];
                        if v > self.threshold && is_local_max(&layers, li, i, j, nx) {
                            candidates.push((li, j, i));
                        }
                    }
                }
            }
            for (li, j, i) in plateau_representatives(&layers, candidates, nx) {
                let at = |l: usize, i: usize, j: usize| layers[l].values[j * nx + i];
                let v = at(li, i, j);
                let ox = parabola(at(li, i - 1, j), v, at(li, i + 1, j));
                let oy = parabola(at(li, i, j - 1), v, at(li, i, j + 1));
                let os = parabola(at(li - 1, i, j), v, at(li + 1, i, j));
                let size_step = (layers[li + 1].size - layers[li].size) as f64;
                let size = layers[li].size as f64 + os * size_step;
                found.push(Keypoint {
                    x: gx[i] as f64 + ox * step as f64,
                    y: gy[j] as f64 + oy * step as f64,
                    scale: 1.2 * size / 9.0,
                    response: v,
                    descriptor: Vec::new(),
                });
            }
        }
        for kp in &mut found {
            kp.descriptor = describe(&ii, kp.x, kp.y, kp.scale);
        }
        found.sort_by(|a, b| {
            b.response
                .total_cmp(&a.response)
                .then(a.y.total_cmp(&b.y))
                .then(a.x.total_cmp(&b.x))
        });
        Ok(found)
    }
}

/// At least as large as all 26 scale-space neighbors.
fn is_local_max(layers: &[Layer], li: usize, i: usize, j: usize, nx: usize) -> bool {
    let v = layers[li].values[j * nx + i];
    for layer in &layers[li - 1..=li + 1] {
        for jj in j - 1..=j + 1 {
            for ii in i - 1..=i + 1 {
                if layer.values[jj * nx + ii] > v {
                    return false;
                }
            }
        }
    }
    true
}

/// Collapses connected groups of equal-valued maxima to their first member
/// in scan order. Candidates arrive in scan order.
#[allow(clippy::needless_range_loop)] // `nl` is also part of the lookup key
fn plateau_representatives(
    layers: &[Layer],
    candidates: Vec<(usize, usize, usize)>,
    nx: usize,
) -> Vec<(usize, usize, usize)> {
    let index: HashMap<(usize, usize, usize), usize> = candidates
        .iter()
        .enumerate()
        .map(|(n, &c)| (c, n))
        .collect();
    let mut seen = vec![false; candidates.len()];
    let mut kept = Vec::new();
    for start in 0..candidates.len() {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        kept.push(candidates[start]);
        let mut stack = vec![candidates[start]];
        while let Some((l, j, i)) = stack.pop() {
            let v = layers[l].values[j * nx + i];
            for nl in l.saturating_sub(1)..=l + 1 {
                for nj in j.saturating_sub(1)..=j + 1 {
                    for ni in i.saturating_sub(1)..=i + 1 {
                        if let Some(&n) = index.get(&(nl, nj, ni)) {
                            if !seen[n] && layers[nl].values[nj * nx + ni] == v {
                                seen[n] = true;
                                stack.push(candidates[n]);
                            }
                        }
                    }
                }
            }
        }
    }
    kept
}

/// Vertex offset of the parabola through three equally spaced samples,
/// clamped to half a sample.
fn parabola(prev: f64, center: f64, next: f64) -> f64 {
    let denom = prev - 2.0 * center + next;
    if denom >= 0.0 {
        return 0.0;
    }
    (0.5 * (prev - next) / denom).clamp(-0.5, 0.5)
}

/// Upright descriptor: 4x4 subregions of 5x5 samples spaced `scale`, each
/// summarized by `(sum dx, sum dy, sum |dx|, sum |dy|)` of Gaussian-weighted
/// Haar responses. L2-normalized unless all zero.
fn describe(ii: &Integral, x: f64, y: f64, scale: f64) -> Vec<f64> {
    let haar = ((2.0 * scale).round() as isize).max(2) & !1;
    let hh = haar / 2;
    let sigma = 3.3 * scale;
    let mut desc = Vec::with_capacity(DESCRIPTOR_LEN);
    for sj in 0..4 {
        for si in 0..4 {
            let mut acc = [0.0f64; 4];
            for v in 0..5 {
                for u in 0..5 {
                    let ox = (si * 5 + u) as f64 - 9.5;
                    let oy = (sj * 5 + v) as f64 - 9.5;
                    let px = (x + ox * scale).round() as isize;
                    let py = (y + oy * scale).round() as isize;
                    let dx = ii.rect(px, py - hh, px + hh, py + hh)
                        - ii.rect(px - hh, py - hh, px, py + hh);
                    let dy = ii.rect(px - hh, py, px + hh, py + hh)
                        - ii.rect(px - hh, py - hh, px + hh, py);
                    let g = (-(ox * ox + oy * oy) * scale * scale / (2.0 * sigma * sigma)).exp();
                    let (dx, dy) = (g * dx as f64 / 255.0, g * dy as f64 / 255.0);
                    acc[0] += dx;
                    acc[1] += dy;
                    acc[2] += dx.abs();
                    acc[3] += dy.abs();
                }
            }
            desc.extend(acc);
        }
    }
    let norm = desc.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        for v in &mut desc {
            *v /= norm;
        }
    }
    desc
}

/// Runs the default detector at the given threshold.
pub fn detect_and_describe(gray: &ImageBuffer, threshold: f64) -> Result<Vec<Keypoint>> {
    HessianDetector::new(threshold).detect(gray)
}

/// Visual vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Codebook {
    pub model: KMeansModel,
}

impl Codebook {
    pub fn vocabulary(&self) -> usize {
        self.model.k()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)? + "\n";
        fs::write(path, text).map_err(|e| Error::file(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        let book: Codebook = serde_json::from_str(&text)?;
        if book.model.k() == 0 || book.model.dim() != DESCRIPTOR_LEN {
            return Err(Error::InvalidInput(format!(
                "{}: codebook words must be {DESCRIPTOR_LEN}-dimensional",
                path.display()
            )));
        }
        Ok(book)
    }
}

/// Clusters the pooled descriptors of every image into `k` words.
pub fn build_codebook<D>(descriptor_sets: &[Vec<D>], k: usize, seed: u64) -> Result<Codebook>
where
    D: AsRef<[f64]> + Sync,
{
    let pooled: Vec<&[f64]> = descriptor_sets
        .iter()
        .flat_map(|set| set.iter().map(AsRef::as_ref))
        .collect();
    if pooled.len() < k {
        return Err(Error::InsufficientData(format!(
            "a {k}-word codebook needs at least {k} descriptors, got {} ({} short)",
            pooled.len(),
            k - pooled.len()
        )));
    }
    Ok(Codebook {
        model: kmeans_fit(&pooled, k, DEFAULT_MAX_ITERS, seed)?,
    })
}

impl AsRef<[f64]> for Keypoint {
    fn as_ref(&self) -> &[f64] {
        &self.descriptor
    }
}

/// Word-occurrence histogram of an image's keypoints.
pub fn bkp_features(keypoints: &[Keypoint], book: &Codebook) -> Result<FeatureVector> {
    let mut values = vec![0.0; book.vocabulary()];
    for kp in keypoints {
        values[book.model.assign(&kp.descriptor)?] += 1.0;
    }
    Ok(FeatureVector::new(Method::Bkp, values))
}
