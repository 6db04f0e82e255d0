//! Labeled corpora: directory ingestion, feature tables, train/test splits,
//! CSV persistence and synthetic image fixtures.
//!
//! A corpus is a directory with one subdirectory per class; the
//! subdirectory name is the label. Images are PNG or binary PPM/PGM.
//! Files ending in `.mask.png` are mask sidecars written next to segmented
//! images and are not corpus items.

use std::f64::consts::PI;
use std::fmt;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::warn;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::{label_alphabet, FeatureVector, Method};
use crate::imaging::{save_image, sniff_format, ImageBuffer};
use crate::numfmt::format_f64;

pub const DEFAULT_TRAIN_FRACTION: f64 = 0.7;
pub const DEFAULT_FIXTURE_SIZE: usize = 256;
pub const MASK_SUFFIX: &str = ".mask.png";
const IMAGE_EXTENSIONS: [&str; 3] = ["png", "ppm", "pgm"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusItem {
    pub path: PathBuf,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Corpus {
    pub items: Vec<CorpusItem>,
    pub warnings: Vec<String>,
}

impl Corpus {
    pub fn labels(&self) -> Vec<String> {
        self.items.iter().map(|i| i.label.clone()).collect()
    }

    pub fn alphabet(&self) -> Vec<String> {
        label_alphabet(&self.labels())
    }
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = fs::read_dir(dir)
        .map_err(|e| Error::file(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|e| Error::file(dir, e)))
        .collect::<Result<Vec<_>>>()?;
    out.sort();
    Ok(out)
}

fn has_image_extension(path: &Path) -> bool {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
    if name.ends_with(MASK_SUFFIX) {
        return false;
    }
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        .unwrap_or(false)
}

fn readable_image(path: &Path) -> std::result::Result<(), String> {
    let mut head = [0u8; 8];
    let n = fs::File::open(path)
        .and_then(|mut f| f.read(&mut head))
        .map_err(|e| e.to_string())?;
    match sniff_format(&head[..n]) {
        Some(_) => Ok(()),
        None => Err("not a PNG or binary PPM/PGM file".into()),
    }
}

/// Lists `root/<label>/<image>` in sorted (directory, file name) order.
/// Unreadable images and empty class directories produce warnings; other
/// files and deeper directories are ignored.
pub fn ingest(root: &Path) -> Result<Corpus> {
    let mut corpus = Corpus::default();
    for dir in sorted_entries(root)? {
        if !dir.is_dir() {
            continue;
        }
        let label = match dir.file_name().and_then(|n| n.to_str()) {
            Some(l) => l.to_string(),
            None => {
                corpus.warnings.push(format!(
                    "{}: directory name is not valid UTF-8",
                    dir.display()
                ));
                continue;
            }
        };
        let before = corpus.items.len();
        for path in sorted_entries(&dir)? {
            if !path.is_file() || !has_image_extension(&path) {
                continue;
            }
            match readable_image(&path) {
                Ok(()) => corpus.items.push(CorpusItem {
                    path,
                    label: label.clone(),
                }),
                Err(e) => corpus
                    .warnings
                    .push(format!("skipping {}: {e}", path.display())),
            }
        }
        if corpus.items.len() == before {
            corpus.warnings.push(format!(
                "class directory {} has no usable images",
                dir.display()
            ));
        }
    }
    for w in &corpus.warnings {
        warn!("{w}");
    }
    if corpus.items.is_empty() {
        return Err(Error::InsufficientData(format!(
            "no usable images under {}",
            root.display()
        )));
    }
    Ok(corpus)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledRow {
    pub label: String,
    pub values: Vec<f64>,
}

/// Feature vectors with their class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub method: Option<Method>,
    pub alphabet: Vec<String>,
    pub rows: Vec<LabeledRow>,
}

impl LabeledDataset {
    /// Alphabet taken from the rows.
    pub fn new(method: Option<Method>, rows: Vec<LabeledRow>) -> Result<Self> {
        let alphabet = label_alphabet(&rows.iter().map(|r| r.label.as_str()).collect::<Vec<_>>());
        Self::with_alphabet(method, alphabet, rows)
    }

    pub fn with_alphabet(
        method: Option<Method>,
        alphabet: Vec<String>,
        rows: Vec<LabeledRow>,
    ) -> Result<Self> {
        if let Some(first) = rows.first() {
            let d = first.values.len();
            for (i, r) in rows.iter().enumerate() {
                if r.values.len() != d {
                    return Err(Error::InvalidInput(format!(
                        "row {i} has {} features, expected {d}",
                        r.values.len()
                    )));
                }
                if !alphabet.contains(&r.label) {
                    return Err(Error::InvalidInput(format!(
                        "row {i} label {:?} is not in the alphabet",
                        r.label
                    )));
                }
            }
        }
        Ok(Self {
            method,
            alphabet,
            rows,
        })
    }

    pub fn from_features(features: Vec<FeatureVector>, labels: Vec<String>) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(Error::InvalidInput(format!(
                "{} feature vectors but {} labels",
                features.len(),
                labels.len()
            )));
        }
        let method = features.first().map(|f| f.method);
        let rows = features
            .into_iter()
            .zip(labels)
            .map(|(f, label)| LabeledRow {
                label,
                values: f.values,
            })
            .collect();
        Self::new(method, rows)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.rows.first().map_or(0, |r| r.values.len())
    }

    pub fn labels(&self) -> Vec<&str> {
        self.rows.iter().map(|r| r.label.as_str()).collect()
    }

    pub fn features(&self) -> Vec<&[f64]> {
        self.rows.iter().map(|r| r.values.as_slice()).collect()
    }

    /// Rows at `indices`, keeping this dataset's alphabet.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            method: self.method,
            alphabet: self.alphabet.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
        }
    }

    pub fn class_counts(&self) -> Vec<usize> {
        self.alphabet
            .iter()
            .map(|a| self.rows.iter().filter(|r| &r.label == a).count())
            .collect()
    }
}

/// `(train, test)` sizes: `floor(fraction * n)` training rows.
pub fn split_sizes(n: usize, fraction: f64) -> Result<(usize, usize)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidInput(format!(
            "train fraction must lie strictly between 0 and 1, got {fraction}"
        )));
    }
    // the epsilon keeps exact products such as 0.7 * 10 from rounding down
    let train = ((fraction * n as f64) + 1e-9).floor() as usize;
    let test = n - train.min(n);
    if train == 0 || test == 0 {
        return Err(Error::InvalidInput(format!(
            "splitting {n} rows at {fraction} leaves {train} for training and {test} for testing"
        )));
    }
    Ok((train, test))
}

/// Uniformly random partition of `0..n`, both halves in ascending order.
pub fn split_indices(n: usize, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    let (train, _) = split_sizes(n, fraction)?;
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut a = perm[..train].to_vec();
    let mut b = perm[train..].to_vec();
    a.sort_unstable();
    b.sort_unstable();
    Ok((a, b))
}

/// Per-class version of [`split_indices`]: each class contributes
/// `floor(fraction * count)` training rows.
pub fn stratified_split_indices<S: AsRef<str>>(
    labels: &[S],
    fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    split_sizes(labels.len(), fraction)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for class in label_alphabet(labels) {
        let mut members: Vec<usize> = (0..labels.len())
            .filter(|&i| labels[i].as_ref() == class)
            .collect();
        members.shuffle(&mut rng);
        let k = ((fraction * members.len() as f64) + 1e-9).floor() as usize;
        train.extend_from_slice(&members[..k]);
        test.extend_from_slice(&members[k..]);
    }
    if train.is_empty() || test.is_empty() {
        return Err(Error::InvalidInput(format!(
            "stratified split leaves {} training and {} test rows",
            train.len(),
            test.len()
        )));
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

pub fn split(
    ds: &LabeledDataset,
    fraction: f64,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset)> {
    let (a, b) = split_indices(ds.len(), fraction, seed)?;
    Ok((ds.subset(&a), ds.subset(&b)))
}

fn csv_error(path: Option<&Path>, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    Error::Parse {
        path: path.map(Path::to_path_buf),
        line,
        message: e.to_string(),
    }
}

/// Header `label,f0,...,f{d-1}`, values with 17 significant digits.
pub fn write_csv<W: Write>(ds: &LabeledDataset, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["label".to_string()];
    header.extend((0..ds.dim()).map(|i| format!("f{i}")));
    w.write_record(&header).map_err(|e| csv_error(None, e))?;
    for (i, r) in ds.rows.iter().enumerate() {
        if let Some(v) = r.values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "row {i} holds the non-finite value {v}"
            )));
        }
        let mut rec = vec![r.label.clone()];
        rec.extend(r.values.iter().map(|&v| format_f64(v)));
        w.write_record(&rec).map_err(|e| csv_error(None, e))?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_csv(ds: &LabeledDataset, path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::file(path, e))?;
    write_csv(ds, std::io::BufWriter::new(file))
}

pub fn read_csv<R: Read>(input: R, path: Option<&Path>) -> Result<LabeledDataset> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.map(Path::to_path_buf),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(input);
    let mut records = reader.records();
    let header = match records.next() {
        None => return Err(parse_err(1, "empty file".into())),
        Some(r) => r.map_err(|e| csv_error(path, e))?,
    };
    if header.get(0) != Some("label") {
        return Err(parse_err(1, "header must start with `label`".into()));
    }
    let dim = header.len() - 1;
    for (i, name) in header.iter().skip(1).enumerate() {
        if name != format!("f{i}") {
            return Err(parse_err(
                1,
                format!("column {} should be named f{i}, found {name:?}", i + 1),
            ));
        }
    }
    let mut rows = Vec::new();
    for rec in records {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != dim + 1 {
            return Err(parse_err(
                line,
                format!("expected {} fields, found {}", dim + 1, rec.len()),
            ));
        }
        let values = rec
            .iter()
            .skip(1)
            .map(|f| match f.trim().parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(parse_err(line, format!("{f:?} is not a finite number"))),
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(LabeledRow {
            label: rec[0].to_string(),
            values,
        });
    }
    if rows.is_empty() {
        return Err(parse_err(2, "no data rows".into()));
    }
    LabeledDataset::new(None, rows)
}

pub fn load_csv(path: &Path) -> Result<LabeledDataset> {
    let file = fs::File::open(path).map_err(|e| Error::file(path, e))?;
    read_csv(std::io::BufReader::new(file), Some(path))
}

/// One-column CSV of labels, e.g. predictions.
pub fn save_labels<S: AsRef<str>>(labels: &[S], path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::file(path, e))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    w.write_record(["label"])
        .map_err(|e| csv_error(Some(path), e))?;
    for l in labels {
        w.write_record([l.as_ref()])
            .map_err(|e| csv_error(Some(path), e))?;
    }
    w.flush().map_err(|e| Error::file(path, e))?;
    Ok(())
}

/// The `label` column of a CSV whose first column is `label`.
pub fn load_labels(path: &Path) -> Result<Vec<String>> {
    let file = fs::File::open(path).map_err(|e| Error::file(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(std::io::BufReader::new(file));
    let mut records = reader.records();
    let parse_err = |line: usize, message: &str| Error::Parse {
        path: Some(path.to_path_buf()),
        line,
        message: message.to_string(),
    };
    match records.next() {
        None => return Err(parse_err(1, "empty file")),
        Some(h) => {
            if h.map_err(|e| csv_error(Some(path), e))?.get(0) != Some("label") {
                return Err(parse_err(1, "first column must be `label`"));
            }
        }
    }
    records
        .map(|r| {
            let r = r.map_err(|e| csv_error(Some(path), e))?;
            let line = r.position().map_or(0, |p| p.line() as usize);
            r.get(0)
                .map(str::to_string)
                .ok_or_else(|| parse_err(line, "missing label"))
        })
        .collect()
}

/// What distinguishes the classes of a synthetic corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FixtureKind {
    /// Stripe gratings whose period depends on the class.
    Texture,
    /// Silhouettes of different shapes.
    Shape,
    /// Dark spots whose size and number depend on the class.
    Blob,
    /// Patches whose hue depends on the class.
    Color,
}

impl FixtureKind {
    pub const ALL: [FixtureKind; 4] = [Self::Texture, Self::Shape, Self::Blob, Self::Color];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Texture => "texture",
            Self::Shape => "shape",
            Self::Blob => "blob",
            Self::Color => "color",
        }
    }
}

impl fmt::Display for FixtureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FixtureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s.to_ascii_lowercase())
            .ok_or_else(|| {
                Error::InvalidInput(format!(
                    "unknown fixture kind {s:?} (expected texture, shape, blob or color)"
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixtureImage {
    pub label: String,
    /// File name without directory, e.g. `2_007.png`.
    pub name: String,
    pub image: ImageBuffer,
}

/// Stripe period (one light plus one dark band) in pixels of texture
/// class `c`.
pub fn texture_period(c: usize) -> f64 {
    const PERIODS: [f64; 6] = [2.0, 5.0, 9.0, 14.0, 20.0, 27.0];
    PERIODS
        .get(c)
        .copied()
        .unwrap_or_else(|| 27.0 + 8.0 * (c - 5) as f64)
}

const BACKDROP: [f64; 3] = [25.0, 55.0, 195.0];
const SKIN_LIGHT: [f64; 3] = [222.0, 170.0, 138.0];
const SKIN_DARK: [f64; 3] = [150.0, 98.0, 78.0];

fn clamp_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [f64; 3] {
    let c = v * s;
    let hp = (h.rem_euclid(360.0)) / 60.0;
    let x = c * (1.0 - (hp % 2.0 - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [(r + m) * 255.0, (g + m) * 255.0, (b + m) * 255.0]
}

/// Placement of the foreground region: center, rotation and size.
struct Pose {
    cx: f64,
    cy: f64,
    cos: f64,
    sin: f64,
    radius: f64,
}

impl Pose {
    fn random(rng: &mut ChaCha8Rng, size: f64, radius: (f64, f64)) -> Self {
        let angle: f64 = rng.gen_range(-0.15..0.15);
        Self {
            cx: size / 2.0 + rng.gen_range(-0.03..0.03) * size,
            cy: size / 2.0 + rng.gen_range(-0.03..0.03) * size,
            cos: angle.cos(),
            sin: angle.sin(),
            radius: rng.gen_range(radius.0..radius.1) * size,
        }
    }

    /// Pixel center in the pose frame, scaled so the region spans about
    /// `[-1, 1]`.
    fn local(&self, x: usize, y: usize) -> (f64, f64) {
        let dx = x as f64 + 0.5 - self.cx;
        let dy = y as f64 + 0.5 - self.cy;
        (
            (dx * self.cos + dy * self.sin) / self.radius,
            (-dx * self.sin + dy * self.cos) / self.radius,
        )
    }
}

/// Silhouette membership of shape class `c` in the unit frame.
fn inside_shape(c: usize, u: f64, v: f64) -> bool {
    let polygon = |sides: usize, u: f64, v: f64| {
        let step = 2.0 * PI / sides as f64;
        let a = v.atan2(u).rem_euclid(step) - step / 2.0;
        (u * u + v * v).sqrt() * a.cos() <= (step / 2.0).cos()
    };
    match c {
        0 => u * u + v * v <= 1.0,
        1 => polygon(3, u, v),
        2 => u.abs() <= 1.0 && v.abs() <= 0.42,
        3 => (u.abs() <= 1.0 && v.abs() <= 0.3) || (u.abs() <= 0.3 && v.abs() <= 1.0),
        4 => u * u / 1.0 + v * v / 0.25 <= 1.0,
        n => polygon(n, u, v),
    }
}

fn arm_region(u: f64, v: f64) -> bool {
    u * u + (v * v) / 0.45 <= 1.0
}

fn render(
    kind: FixtureKind,
    class: usize,
    size: usize,
    rng: &mut ChaCha8Rng,
) -> Result<ImageBuffer> {
    let s = size as f64;
    let backdrop = |rng: &mut ChaCha8Rng| {
        let n: f64 = rng.gen_range(-12.0..12.0);
        [
            clamp_u8(BACKDROP[0] + n),
            clamp_u8(BACKDROP[1] + n),
            clamp_u8(BACKDROP[2] + n),
        ]
    };
    match kind {
        FixtureKind::Texture => {
            let pose = Pose::random(rng, s, (0.40, 0.44));
            let period = texture_period(class);
            let phase = rng.gen_range(0.0..period);
            ImageBuffer::from_fn_rgb(size, size, |x, y| {
                let (u, v) = pose.local(x, y);
                if !arm_region(u, v) {
                    return backdrop(rng);
                }
                let t = (2.0 * (u * pose.radius + phase) / period).floor() as i64;
                let base = if t.rem_euclid(2) == 0 {
                    SKIN_LIGHT
                } else {
                    SKIN_DARK
                };
                let n: f64 = rng.gen_range(-3.0..3.0);
                [
                    clamp_u8(base[0] + n),
                    clamp_u8(base[1] + n),
                    clamp_u8(base[2] + n),
                ]
            })
        }
        FixtureKind::Shape => {
            let pose = Pose::random(rng, s, (0.30, 0.34));
            ImageBuffer::from_fn_rgb(size, size, |x, y| {
                let (u, v) = pose.local(x, y);
                if !inside_shape(class, u, v) {
                    return backdrop(rng);
                }
                let n: f64 = rng.gen_range(-3.0..3.0);
                [
                    clamp_u8(SKIN_LIGHT[0] + n),
                    clamp_u8(SKIN_LIGHT[1] + n),
                    clamp_u8(SKIN_LIGHT[2] + n),
                ]
            })
        }
        FixtureKind::Blob => {
            let pose = Pose::random(rng, s, (0.40, 0.44));
            let sigma = 2.0 * 1.8f64.powi(class as i32);
            let count = (48.0 / (1.0 + class as f64).powf(1.3)).ceil() as usize;
            let spots: Vec<(f64, f64)> = (0..count)
                .map(|_| loop {
                    let u = rng.gen_range(-0.9..0.9);
                    let v = rng.gen_range(-0.6..0.6);
                    if arm_region(u / 0.9, v / 0.9) {
                        break (u * pose.radius, v * pose.radius);
                    }
                })
                .collect();
            ImageBuffer::from_fn_rgb(size, size, |x, y| {
                let (u, v) = pose.local(x, y);
                if !arm_region(u, v) {
                    return backdrop(rng);
                }
                let (pu, pv) = (u * pose.radius, v * pose.radius);
                let shade: f64 = spots
                    .iter()
                    .map(|&(su, sv)| {
                        (-((pu - su).powi(2) + (pv - sv).powi(2)) / (2.0 * sigma * sigma)).exp()
                    })
                    .sum::<f64>()
                    .min(1.0);
                let n: f64 = rng.gen_range(-4.0..4.0);
                let k = 1.0 - 0.85 * shade;
                [
                    clamp_u8(SKIN_LIGHT[0] * k + n),
                    clamp_u8(SKIN_LIGHT[1] * k + n),
                    clamp_u8(SKIN_LIGHT[2] * k + n),
                ]
            })
        }
        FixtureKind::Color => {
            let pose = Pose::random(rng, s, (0.40, 0.44));
            let hue = 18.0 * class as f64 + rng.gen_range(-2.0..2.0);
            ImageBuffer::from_fn_rgb(size, size, |x, y| {
                let (u, v) = pose.local(x, y);
                if !arm_region(u, v) {
                    return backdrop(rng);
                }
                let sat =
                    0.35 + 0.3 * ((u + 1.0) / 2.0).clamp(0.0, 1.0) + rng.gen_range(-0.03..0.03);
                let val = 0.85 + rng.gen_range(-0.05..0.05);
                let rgb = hsv_to_rgb(hue, sat.clamp(0.0, 1.0), val);
                [clamp_u8(rgb[0]), clamp_u8(rgb[1]), clamp_u8(rgb[2])]
            })
        }
    }
}

/// Deterministic synthetic corpus: `per_class` images for each of
/// `classes` classes labeled `"0"`, `"1"`, ..., on a blue backdrop.
/// Images are generated in parallel; each draws from its own random
/// stream, so the output does not depend on scheduling.
pub fn synth_fixture(
    kind: FixtureKind,
    classes: usize,
    per_class: usize,
    seed: u64,
    size: usize,
) -> Result<Vec<FixtureImage>> {
    if classes < 2 {
        return Err(Error::InvalidInput(format!(
            "a fixture needs at least 2 classes, got {classes}"
        )));
    }
    if per_class == 0 {
        return Err(Error::InvalidInput(
            "a fixture needs at least 1 image per class".into(),
        ));
    }
    if size < 32 {
        return Err(Error::InvalidInput(format!(
            "fixture images must be at least 32 pixels wide, got {size}"
        )));
    }
    (0..classes * per_class)
        .into_par_iter()
        .map(|n| {
            let (class, index) = (n / per_class, n % per_class);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(n as u64);
            Ok(FixtureImage {
                label: class.to_string(),
                name: format!("{class}_{index:03}.png"),
                image: render(kind, class, size, &mut rng)?,
            })
        })
        .collect()
}

/// Writes `dir/<label>/<name>` for every image; returns the paths.
pub fn write_fixture(dir: &Path, images: &[FixtureImage]) -> Result<Vec<PathBuf>> {
    images
        .par_iter()
        .map(|f| {
            let class_dir = dir.join(&f.label);
            fs::create_dir_all(&class_dir).map_err(|e| Error::file(&class_dir, e))?;
            let path = class_dir.join(&f.name);
            save_image(&path, &f.image)?;
            Ok(path)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ds(rows: &[(&str, &[f64])]) -> LabeledDataset {
        LabeledDataset::new(
            None,
            rows.iter()
                .map(|(l, v)| LabeledRow {
                    label: l.to_string(),
                    values: v.to_vec(),
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn split_arithmetic() {
        assert_eq!(split_sizes(92, 0.7).unwrap(), (64, 28));
        assert_eq!(split_sizes(2, 0.5).unwrap(), (1, 1));
        assert_eq!(split_sizes(10, 0.7).unwrap(), (7, 3));
        assert_eq!(split_sizes(90, 0.7).unwrap(), (63, 27));
        assert!(split_sizes(1, 0.5).is_err());
        assert!(split_sizes(10, 1.0).is_err());
        assert!(split_sizes(10, 0.0).is_err());
        assert!(split_sizes(3, 0.2).is_err());
    }

    #[test]
    fn same_seed_same_partition() {
        let a = split_indices(92, 0.7, 11).unwrap();
        assert_eq!(a, split_indices(92, 0.7, 11).unwrap());
        assert_ne!(a, split_indices(92, 0.7, 12).unwrap());
        assert_eq!((a.0.len(), a.1.len()), (64, 28));
    }

    #[test]
    fn stratified_split_keeps_class_proportions() {
        let labels: Vec<String> = (0..92)
            .map(|i| {
                if i < 30 {
                    "0"
                } else if i < 63 {
                    "5"
                } else {
                    "6"
                }
                .to_string()
            })
            .collect();
        let (train, test) = stratified_split_indices(&labels, 0.7, 3).unwrap();
        let count = |idx: &[usize], l: &str| idx.iter().filter(|&&i| labels[i] == l).count();
        assert_eq!(
            (count(&train, "0"), count(&train, "5"), count(&train, "6")),
            (21, 23, 20)
        );
        assert_eq!(train.len() + test.len(), 92);
    }

    proptest! {
        #[test]
        fn split_is_a_partition(n in 2usize..300, f in 0.05f64..0.95, seed in any::<u64>()) {
            if let Ok((a, b)) = split_indices(n, f, seed) {
                let mut all: Vec<usize> = a.iter().chain(&b).copied().collect();
                all.sort_unstable();
                prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
                prop_assert_eq!(a.len(), (f * n as f64 + 1e-9).floor() as usize);
            }
        }

        #[test]
        fn csv_round_trip_is_lossless(
            rows in proptest::collection::vec(
                (0usize..3, proptest::collection::vec(any::<u64>(), 4)), 1..20)
        ) {
            let data = LabeledDataset::new(
                Some(Method::Lbp),
                rows.iter().map(|(l, bits)| LabeledRow {
                    label: ["a", "b,c", "7"][*l].to_string(),
                    values: bits.iter().map(|&b| {
                        let v = f64::from_bits(b);
                        if v.is_finite() { v } else { b as f64 }
                    }).collect(),
                }).collect(),
            ).unwrap();
            let mut buf = Vec::new();
            write_csv(&data, &mut buf).unwrap();
            let back = read_csv(&buf[..], None).unwrap();
            prop_assert_eq!(back.rows.len(), data.rows.len());
            for (x, y) in back.rows.iter().zip(&data.rows) {
                prop_assert_eq!(&x.label, &y.label);
                let xb: Vec<u64> = x.values.iter().map(|v| v.to_bits()).collect();
                let yb: Vec<u64> = y.values.iter().map(|v| v.to_bits()).collect();
                prop_assert_eq!(xb, yb);
            }
            prop_assert_eq!(&back.alphabet, &data.alphabet);
            let (train, test) = match split(&data, 0.5, 1) { Ok(p) => p, Err(_) => return Ok(()) };
            let mut counts = train.class_counts();
            for (c, t) in counts.iter_mut().zip(test.class_counts()) {
                *c += t;
            }
            prop_assert_eq!(counts, data.class_counts());
        }
    }

    #[test]
    fn csv_errors_name_the_line() {
        let bad = "label,f0,f1\na,1,2\nb,3\n";
        match read_csv(bad.as_bytes(), None) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let bad = "label,f0\na,1\nb,x\n";
        assert!(matches!(
            read_csv(bad.as_bytes(), None),
            Err(Error::Parse { line: 3, .. })
        ));
        assert!(matches!(
            read_csv("".as_bytes(), None),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(
            read_csv("label,f0\n".as_bytes(), None),
            Err(Error::Parse { .. })
        ));
        assert!(matches!(
            read_csv("name,f0\na,1\n".as_bytes(), None),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn csv_header_and_digits() {
        let d = ds(&[("0", &[0.1, 2.0])]);
        let mut buf = Vec::new();
        write_csv(&d, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "label,f0,f1\n0,1.0000000000000001e-1,2.0000000000000000e0\n"
        );
        let mut bad = d.clone();
        bad.rows[0].values[0] = f64::NAN;
        assert!(write_csv(&bad, Vec::new()).is_err());
    }

    #[test]
    fn dataset_validation() {
        let rows = vec![
            LabeledRow {
                label: "a".into(),
                values: vec![1.0],
            },
            LabeledRow {
                label: "b".into(),
                values: vec![1.0, 2.0],
            },
        ];
        assert!(LabeledDataset::new(None, rows).is_err());
        let d = ds(&[("10", &[1.0]), ("2", &[2.0]), ("2", &[3.0])]);
        assert_eq!(d.alphabet, vec!["2", "10"]);
        assert_eq!(d.class_counts(), vec![2, 1]);
    }

    #[test]
    fn fixtures_are_deterministic() {
        let a = synth_fixture(FixtureKind::Texture, 3, 2, 5, 64).unwrap();
        let b = synth_fixture(FixtureKind::Texture, 3, 2, 5, 64).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 6);
        assert_eq!(
            a.iter().map(|f| f.label.as_str()).collect::<Vec<_>>(),
            ["0", "0", "1", "1", "2", "2"]
        );
        assert_ne!(a, synth_fixture(FixtureKind::Texture, 3, 2, 6, 64).unwrap());
        assert!(synth_fixture(FixtureKind::Shape, 1, 5, 0, 64).is_err());
        for kind in FixtureKind::ALL {
            assert_eq!(kind.as_str().parse::<FixtureKind>().unwrap(), kind);
            let imgs = synth_fixture(kind, 4, 1, 0, 96).unwrap();
            for f in &imgs {
                let blue = f.image.pixels().filter(|p| p[2] > 150 && p[0] < 60).count();
                let frac = blue as f64 / f.image.pixel_count() as f64;
                assert!(
                    frac > 0.2 && frac < 0.95,
                    "{kind} {}: backdrop fraction {frac}",
                    f.name
                );
            }
        }
    }

    #[test]
    fn ingest_sorts_and_filters() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path();
        let imgs = synth_fixture(FixtureKind::Color, 2, 2, 1, 40).unwrap();
        write_fixture(root, &imgs).unwrap();
        fs::write(root.join("0").join("notes.txt"), "x").unwrap();
        fs::write(root.join("1").join("broken.png"), "not an image").unwrap();
        save_image(
            root.join("1").join("1_000.mask.png"),
            &ImageBuffer::filled(4, 4, &[255]).unwrap(),
        )
        .unwrap();
        fs::create_dir_all(root.join("1").join("nested")).unwrap();
        fs::create_dir_all(root.join("9")).unwrap();
        fs::write(root.join("stray.png"), "x").unwrap();
        let corpus = ingest(root).unwrap();
        let names: Vec<String> = corpus
            .items
            .iter()
            .map(|i| {
                format!(
                    "{}/{}",
                    i.label,
                    i.path.file_name().unwrap().to_str().unwrap()
                )
            })
            .collect();
        assert_eq!(
            names,
            ["0/0_000.png", "0/0_001.png", "1/1_000.png", "1/1_001.png"]
        );
        assert_eq!(corpus.warnings.len(), 2, "{:?}", corpus.warnings);
        assert_eq!(corpus.alphabet(), vec!["0", "1"]);

        let empty = tempfile::tempdir().unwrap();
        fs::create_dir_all(empty.path().join("a")).unwrap();
        assert!(matches!(
            ingest(empty.path()),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn label_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("pred.csv");
        save_labels(&["5", "0", "a,b"], &p).unwrap();
        assert_eq!(load_labels(&p).unwrap(), vec!["5", "0", "a,b"]);
        let d = ds(&[("x", &[1.0]), ("y", &[2.0])]);
        let q = dir.path().join("feat.csv");
        save_csv(&d, &q).unwrap();
        assert_eq!(load_labels(&q).unwrap(), vec!["x", "y"]);
        assert_eq!(load_csv(&q).unwrap().rows, d.rows);
    }
}
