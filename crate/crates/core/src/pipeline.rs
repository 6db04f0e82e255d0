//! End-to-end experiment: segment every image, extract one feature type,
//! split into train and test sets, train the SVM on the training rows and
//! evaluate it on the test rows.
//!
//! All randomness (clustering seeds, the split, the codebook and the SVM row
//! order) derives from one seed, and images are processed in parallel with
//! results kept in corpus order, so equal inputs give byte-identical
//! reports.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::bkp::{
    bkp_features, build_codebook, detect_and_describe, Codebook, Keypoint, DEFAULT_THRESHOLD,
    DEFAULT_VOCABULARY,
};
use crate::colorhist::{hc_features, HcConfig};
use crate::dataset::{
    ingest, split_indices, stratified_split_indices, LabeledDataset, LabeledRow, MASK_SUFFIX,
};
use crate::error::{Error, Result};
use crate::eval::{confusion, EvaluationReport};
use crate::features::{FeatureVector, Method};
use crate::imaging::{load_image, to_gray, BinaryMask, ImageBuffer};
use crate::lbp::{lbp_features, LbpConfig};
use crate::moments::{mc_features, McConfig, Normalization};
use crate::segmentation::{segment_arm, SegmentConfig};
use crate::svm::{train_multiclass, SvmParams};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtractConfig {
    pub grid_n: usize,
    pub hc_bins: usize,
    pub mc: McConfig,
    pub bkp_threshold: f64,
    pub codebook_size: usize,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        Self {
            grid_n: 3,
            hc_bins: 5,
            mc: McConfig::default(),
            bkp_threshold: DEFAULT_THRESHOLD,
            codebook_size: DEFAULT_VOCABULARY,
        }
    }
}

/// What one image contributes before encoding: a finished vector, or
/// keypoints that still need a codebook.
#[derive(Debug, Clone, PartialEq)]
pub enum ImageFeatures {
    Dense(FeatureVector),
    Keypoints(Vec<Keypoint>),
}

/// Features of a segmented image. Without a mask, nonzero pixels are
/// foreground.
pub fn image_features(
    image: &ImageBuffer,
    mask: Option<&BinaryMask>,
    method: Method,
    cfg: &ExtractConfig,
) -> Result<ImageFeatures> {
    let gray = to_gray(image)?;
    Ok(match method {
        Method::Lbp => {
            ImageFeatures::Dense(lbp_features(&gray, &LbpConfig { grid_n: cfg.grid_n })?)
        }
        Method::Hc => ImageFeatures::Dense(hc_features(
            image,
            &HcConfig {
                grid_n: cfg.grid_n,
                bins_per_channel: cfg.hc_bins,
                skip_background: true,
            },
        )?),
        Method::Mc => {
            let derived;
            let mask = match mask {
                Some(m) => m,
                None => {
                    derived = BinaryMask::from_nonzero(image);
                    &derived
                }
            };
            ImageFeatures::Dense(mc_features(mask, &gray, &cfg.mc)?)
        }
        Method::Bkp => ImageFeatures::Keypoints(detect_and_describe(&gray, cfg.bkp_threshold)?),
    })
}

/// Keypoint sets of the given images, for building a codebook.
pub fn keypoint_sets<'a>(
    features: impl IntoIterator<Item = &'a ImageFeatures>,
) -> Vec<&'a [Keypoint]> {
    features
        .into_iter()
        .filter_map(|f| match f {
            ImageFeatures::Keypoints(k) => Some(k.as_slice()),
            ImageFeatures::Dense(_) => None,
        })
        .collect()
}

pub fn codebook_from(features: &[&ImageFeatures], size: usize, seed: u64) -> Result<Codebook> {
    let sets: Vec<Vec<&[f64]>> = keypoint_sets(features.iter().copied())
        .into_iter()
        .map(|kps| kps.iter().map(|k| k.descriptor.as_slice()).collect())
        .collect();
    build_codebook(&sets, size, seed)
}

/// Final vector of one image; keypoints need `codebook`.
pub fn encode(features: &ImageFeatures, codebook: Option<&Codebook>) -> Result<FeatureVector> {
    match (features, codebook) {
        (ImageFeatures::Dense(f), _) => Ok(f.clone()),
        (ImageFeatures::Keypoints(k), Some(book)) => bkp_features(k, book),
        (ImageFeatures::Keypoints(_), None) => Err(Error::InvalidInput(
            "keypoint features need a codebook".into(),
        )),
    }
}

/// Sidecar mask written next to a segmented image: `a/b.png` maps to
/// `a/b.mask.png`.
pub fn mask_path(image: &Path) -> PathBuf {
    let stem = image
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("image");
    image.with_file_name(format!("{stem}{MASK_SUFFIX}"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub method: Method,
    pub train_fraction: f64,
    pub stratified: bool,
    pub seed: u64,
    pub segment: SegmentConfig,
    pub extract: ExtractConfig,
    pub svm: SvmParams,
}

impl PipelineConfig {
    pub fn new(method: Method, seed: u64) -> Self {
        Self {
            method,
            train_fraction: crate::dataset::DEFAULT_TRAIN_FRACTION,
            stratified: false,
            seed,
            segment: SegmentConfig {
                seed,
                ..SegmentConfig::default()
            },
            extract: ExtractConfig::default(),
            svm: SvmParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfigEcho {
    pub method: Method,
    pub train_fraction: f64,
    pub stratified: bool,
    pub clusters: usize,
    pub erode_radius: usize,
    pub erode_iterations: usize,
    pub grid: usize,
    pub hc_bins: usize,
    pub mc_binary: bool,
    pub mc_normalization: &'static str,
    pub bkp_threshold: f64,
    pub codebook_size: usize,
    pub gamma: f64,
    pub cost: f64,
    pub tolerance: f64,
    pub scale: bool,
}

impl From<&PipelineConfig> for ConfigEcho {
    fn from(c: &PipelineConfig) -> Self {
        Self {
            method: c.method,
            train_fraction: c.train_fraction,
            stratified: c.stratified,
            clusters: c.segment.k,
            erode_radius: c.segment.erode_radius,
            erode_iterations: c.segment.erode_iters,
            grid: c.extract.grid_n,
            hc_bins: c.extract.hc_bins,
            mc_binary: c.extract.mc.binary,
            mc_normalization: match c.extract.mc.normalization {
                Normalization::Area => "area",
                Normalization::Perimeter => "perimeter",
            },
            bkp_threshold: c.extract.bkp_threshold,
            codebook_size: c.extract.codebook_size,
            gamma: c.svm.smo.gamma,
            cost: c.svm.smo.cost,
            tolerance: c.svm.smo.tol,
            scale: c.svm.scale,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestItem {
    /// Path relative to the corpus root.
    pub image: String,
    pub truth: String,
    pub predicted: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineReport {
    pub schema_version: u32,
    pub seed: u64,
    pub config: ConfigEcho,
    pub images: usize,
    pub train_size: usize,
    pub test_size: usize,
    pub labels: Vec<String>,
    pub warnings: Vec<String>,
    #[serde(flatten)]
    pub evaluation: EvaluationReport,
    pub test_items: Vec<TestItem>,
}

impl PipelineReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

fn relative(root: &Path, path: &Path) -> String {
    path.strip_prefix(root)
        .unwrap_or(path)
        .components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}

pub fn run_pipeline(images: &Path, cfg: &PipelineConfig) -> Result<PipelineReport> {
    let corpus = ingest(images)?;
    let mut warnings: Vec<String> = corpus
        .warnings
        .iter()
        .map(|w| w.replace(&images.display().to_string(), "."))
        .collect();
    let per_image: Vec<(ImageFeatures, Vec<String>)> = corpus
        .items
        .par_iter()
        .map(|item| {
            let run = || -> Result<_> {
                let img = load_image(&item.path)?;
                let seg = segment_arm(&img, &cfg.segment)?;
                let f = image_features(&seg.image, Some(&seg.mask), cfg.method, &cfg.extract)?;
                Ok((f, seg.warnings))
            };
            run().map_err(|e| e.at_path(&item.path))
        })
        .collect::<Result<_>>()?;
    for (item, (_, w)) in corpus.items.iter().zip(&per_image) {
        let name = relative(images, &item.path);
        warnings.extend(w.iter().map(|w| format!("{name}: {w}")));
    }

    let labels = corpus.labels();
    let (train_idx, test_idx) = if cfg.stratified {
        stratified_split_indices(&labels, cfg.train_fraction, cfg.seed)?
    } else {
        split_indices(labels.len(), cfg.train_fraction, cfg.seed)?
    };

    let codebook = if cfg.method == Method::Bkp {
        let train_feats: Vec<&ImageFeatures> = train_idx.iter().map(|&i| &per_image[i].0).collect();
        Some(codebook_from(
            &train_feats,
            cfg.extract.codebook_size,
            cfg.seed,
        )?)
    } else {
        None
    };
    let rows = per_image
        .iter()
        .zip(&labels)
        .map(|((f, _), label)| {
            Ok(LabeledRow {
                label: label.clone(),
                values: encode(f, codebook.as_ref())?.values,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let alphabet = corpus.alphabet();
    let data = LabeledDataset::with_alphabet(Some(cfg.method), alphabet.clone(), rows)?;
    let train = data.subset(&train_idx);
    let test = data.subset(&test_idx);

    let model = train_multiclass(&train.features(), &train.labels(), &cfg.svm, cfg.seed)?;
    let predicted = model.predict_batch(&test.features())?;
    let truth = test.labels();
    let cm = confusion(&truth, &predicted, &alphabet)?;
    let test_items = test_idx
        .iter()
        .zip(&predicted)
        .map(|(&i, p)| TestItem {
            image: relative(images, &corpus.items[i].path),
            truth: labels[i].clone(),
            predicted: p.clone(),
        })
        .collect();

    Ok(PipelineReport {
        schema_version: REPORT_SCHEMA_VERSION,
        seed: cfg.seed,
        config: ConfigEcho::from(cfg),
        images: data.len(),
        train_size: train.len(),
        test_size: test.len(),
        labels: alphabet,
        warnings,
        evaluation: EvaluationReport::from_confusion(cm)?,
        test_items,
    })
}
