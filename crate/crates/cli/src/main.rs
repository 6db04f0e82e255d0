use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use log::info;
use rayon::prelude::*;

use armload::bkp::{Codebook, DEFAULT_THRESHOLD, DEFAULT_VOCABULARY};
use armload::dataset::{
    ingest, load_csv, load_labels, save_csv, save_labels, synth_fixture, write_fixture,
    FixtureKind, LabeledDataset, DEFAULT_FIXTURE_SIZE, DEFAULT_TRAIN_FRACTION,
};
use armload::eval::{confusion, EvaluationReport};
use armload::features::label_alphabet;
use armload::imaging::{load_image, save_image, to_gray, BinaryMask};
use armload::moments::{McConfig, Normalization};
use armload::pipeline::{
    codebook_from, encode, image_features, mask_path, run_pipeline, ExtractConfig, PipelineConfig,
};
use armload::segmentation::{segment_arm, SegmentConfig};
use armload::svm::{train_multiclass, SmoParams, SvmModel, SvmParams, DEFAULT_COST, DEFAULT_GAMMA};
use armload::{Error, ErrorKind, Method};

const EXIT_USAGE: u8 = 1;
const EXIT_IO: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_NUMERIC: u8 = 4;

/// Muscle-load classification from arm photographs.
#[derive(Parser, Debug)]
#[command(name = "armload", version)]
struct Cli {
    /// Worker threads for per-image stages (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Log progress; repeat for more detail.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug, Clone)]
struct SegmentArgs {
    /// Color clusters.
    #[arg(long = "k", default_value_t = 2)]
    clusters: usize,
    /// Erosion radius in pixels; 0 disables erosion.
    #[arg(long, default_value_t = 1)]
    erode: usize,
    /// Erosion passes.
    #[arg(long, default_value_t = 1)]
    erode_iters: usize,
}

impl SegmentArgs {
    fn config(&self, seed: u64) -> SegmentConfig {
        SegmentConfig {
            k: self.clusters,
            erode_radius: self.erode.max(1),
            erode_iters: if self.erode == 0 { 0 } else { self.erode_iters },
            seed,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Bkp,
    Lbp,
    Hc,
    Mc,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Bkp => Method::Bkp,
            MethodArg::Lbp => Method::Lbp,
            MethodArg::Hc => Method::Hc,
            MethodArg::Mc => Method::Mc,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum NormArg {
    Area,
    Perimeter,
}

#[derive(clap::Args, Debug, Clone)]
struct ExtractArgs {
    /// Grid cells per side for LBP and color histograms.
    #[arg(long, default_value_t = 3)]
    grid: usize,
    /// Hue and saturation bins for color histograms.
    #[arg(long, default_value_t = 5)]
    hc_bins: usize,
    /// Keypoint detection threshold.
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    bkp_threshold: f64,
    /// Codebook words.
    #[arg(long, default_value_t = DEFAULT_VOCABULARY)]
    codebook_size: usize,
    /// Weight contour pixels by 1 instead of their gray level.
    #[arg(long)]
    mc_binary: bool,
    /// Power of m00 used to normalize central moments.
    #[arg(long, value_enum, default_value_t = NormArg::Perimeter)]
    mc_normalization: NormArg,
}

impl ExtractArgs {
    fn config(&self) -> ExtractConfig {
        ExtractConfig {
            grid_n: self.grid,
            hc_bins: self.hc_bins,
            mc: McConfig {
                binary: self.mc_binary,
                normalization: match self.mc_normalization {
                    NormArg::Area => Normalization::Area,
                    NormArg::Perimeter => Normalization::Perimeter,
                },
            },
            bkp_threshold: self.bkp_threshold,
            codebook_size: self.codebook_size,
        }
    }
}

#[derive(clap::Args, Debug, Clone)]
struct SvmArgs {
    /// RBF kernel width.
    #[arg(long, default_value_t = DEFAULT_GAMMA)]
    gamma: f64,
    /// Soft-margin cost C.
    #[arg(long, default_value_t = DEFAULT_COST)]
    cost: f64,
    /// Train on raw features instead of z-scored ones.
    #[arg(long)]
    no_scale: bool,
}

impl SvmArgs {
    fn params(&self) -> SvmParams {
        SvmParams {
            smo: SmoParams {
                gamma: self.gamma,
                cost: self.cost,
                ..SmoParams::default()
            },
            scale: !self.no_scale,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum ReportFormat {
    Json,
    Table,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Remove the blue backdrop; writes segmented images and mask sidecars.
    Segment {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long = "out")]
        output: PathBuf,
        #[command(flatten)]
        segment: SegmentArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Compute one feature vector per image into a CSV file.
    Extract {
        #[arg(long, value_enum)]
        method: MethodArg,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long = "out")]
        output: PathBuf,
        /// Codebook for bkp. Loaded if it exists, otherwise built from
        /// these images and written there; build it from training images.
        #[arg(long)]
        codebook: Option<PathBuf>,
        #[command(flatten)]
        extract: ExtractArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train a one-vs-one RBF SVM on a feature CSV.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        svm: SvmArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Predict a label for every row of a feature CSV.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long = "out")]
        output: PathBuf,
    },
    /// Compare predicted labels with the true ones.
    Evaluate {
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long, value_enum, default_value_t = ReportFormat::Table)]
        report: ReportFormat,
        /// Write the report here instead of standard output.
        #[arg(long = "out")]
        output: Option<PathBuf>,
    },
    /// Segment, extract, split, train, predict and evaluate in one run.
    Pipeline {
        #[arg(long)]
        images: PathBuf,
        #[arg(long, value_enum)]
        method: MethodArg,
        /// Fraction of images used for training.
        #[arg(long, default_value_t = DEFAULT_TRAIN_FRACTION)]
        split: f64,
        /// Split each class separately.
        #[arg(long)]
        stratified: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the JSON report here instead of standard output.
        #[arg(long)]
        report: Option<PathBuf>,
        #[command(flatten)]
        segment: SegmentArgs,
        #[command(flatten)]
        extract: ExtractArgs,
        #[command(flatten)]
        svm: SvmArgs,
    },
    /// Generate a synthetic labeled corpus.
    Fixtures {
        #[arg(long, value_enum)]
        kind: KindArg,
        #[arg(long, default_value_t = 3)]
        classes: usize,
        #[arg(long, default_value_t = 30)]
        per_class: usize,
        #[arg(long = "out")]
        output: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Image side in pixels.
        #[arg(long, default_value_t = DEFAULT_FIXTURE_SIZE)]
        size: usize,
    },
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum KindArg {
    Texture,
    Shape,
    Blob,
    Color,
}

impl From<KindArg> for FixtureKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Texture => FixtureKind::Texture,
            KindArg::Shape => FixtureKind::Shape,
            KindArg::Blob => FixtureKind::Blob,
            KindArg::Color => FixtureKind::Color,
        }
    }
}

fn write_output(path: Option<&Path>, text: &str) -> armload::Result<()> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| Error::File {
            path: p.to_path_buf(),
            source: e,
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn create_dir(path: &Path) -> armload::Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::File {
        path: path.to_path_buf(),
        source: e,
    })
}

fn segment(input: &Path, output: &Path, cfg: &SegmentConfig) -> armload::Result<()> {
    let corpus = ingest(input)?;
    corpus
        .items
        .par_iter()
        .map(|item| {
            let run = || -> armload::Result<()> {
                let seg = segment_arm(&load_image(&item.path)?, cfg)?;
                let dir = output.join(&item.label);
                create_dir(&dir)?;
                let stem = item
                    .path
                    .file_stem()
                    .and_then(|s| s.to_str())
                    .unwrap_or("image");
                let out = dir.join(format!("{stem}.png"));
                save_image(&out, &seg.image)?;
                save_image(mask_path(&out), &seg.mask.to_image())?;
                Ok(())
            };
            run().map_err(|e| e.at_path(&item.path))
        })
        .collect::<armload::Result<Vec<()>>>()?;
    println!(
        "segmented {} images into {}",
        corpus.items.len(),
        output.display()
    );
    Ok(())
}

fn extract(
    method: Method,
    input: &Path,
    output: &Path,
    codebook: Option<&Path>,
    cfg: &ExtractConfig,
    seed: u64,
) -> armload::Result<()> {
    if method == Method::Bkp && codebook.is_none() {
        return Err(Error::InvalidInput(
            "bkp extraction needs --codebook (an existing codebook, or where to write a new one)"
                .into(),
        ));
    }
    let corpus = ingest(input)?;
    let per_image = corpus
        .items
        .par_iter()
        .map(|item| {
            let run = || {
                let img = load_image(&item.path)?;
                let sidecar = mask_path(&item.path);
                let mask = if sidecar.is_file() {
                    let m = BinaryMask::from_nonzero(&to_gray(&load_image(&sidecar)?)?);
                    if m.width() != img.width() || m.height() != img.height() {
                        return Err(Error::InvalidInput(format!(
                            "mask {} does not match the image size",
                            sidecar.display()
                        )));
                    }
                    Some(m)
                } else {
                    None
                };
                image_features(&img, mask.as_ref(), method, cfg)
            };
            run().map_err(|e| e.at_path(&item.path))
        })
        .collect::<armload::Result<Vec<_>>>()?;
    let book = match codebook {
        Some(path) if method == Method::Bkp => Some(if path.is_file() {
            info!("loading codebook {}", path.display());
            Codebook::load(path)?
        } else {
            let all: Vec<_> = per_image.iter().collect();
            let book = codebook_from(&all, cfg.codebook_size, seed)?;
            book.save(path)?;
            info!(
                "wrote a {}-word codebook to {}",
                book.vocabulary(),
                path.display()
            );
            book
        }),
        _ => None,
    };
    let vectors = per_image
        .iter()
        .map(|f| encode(f, book.as_ref()))
        .collect::<armload::Result<Vec<_>>>()?;
    let data = LabeledDataset::from_features(vectors, corpus.labels())?;
    save_csv(&data, output)?;
    println!(
        "wrote {} rows of {} {} features to {}",
        data.len(),
        data.dim(),
        method,
        output.display()
    );
    Ok(())
}

fn train(data: &Path, model: &Path, params: &SvmParams, seed: u64) -> armload::Result<()> {
    let ds = load_csv(data)?;
    let svm = train_multiclass(&ds.features(), &ds.labels(), params, seed)?;
    svm.save(model)?;
    let svs: usize = svm.machines.iter().map(|m| m.support_vectors.len()).sum();
    println!(
        "trained {} machines over {} classes ({} support vectors) into {}",
        svm.machines.len(),
        svm.classes.len(),
        svs,
        model.display()
    );
    Ok(())
}

fn predict(model: &Path, data: &Path, output: &Path) -> armload::Result<()> {
    let svm = SvmModel::load(model)?;
    let ds = load_csv(data)?;
    let labels = svm.predict_batch(&ds.features())?;
    save_labels(&labels, output)?;
    println!("wrote {} predictions to {}", labels.len(), output.display());
    Ok(())
}

fn evaluate(
    truth: &Path,
    pred: &Path,
    format: ReportFormat,
    output: Option<&Path>,
) -> armload::Result<()> {
    let t = load_labels(truth)?;
    let p = load_labels(pred)?;
    let all: Vec<&String> = t.iter().chain(&p).collect();
    let alphabet = label_alphabet(&all);
    let report = EvaluationReport::from_confusion(confusion(&t, &p, &alphabet)?)?;
    let text = match format {
        ReportFormat::Json => report.to_json()? + "\n",
        ReportFormat::Table => report.to_table(),
    };
    write_output(output, &text)
}

fn run(cli: Cli) -> armload::Result<()> {
    match cli.command {
        Command::Segment {
            input,
            output,
            segment: s,
            seed,
        } => segment(&input, &output, &s.config(seed)),
        Command::Extract {
            method,
            input,
            output,
            codebook,
            extract: e,
            seed,
        } => extract(
            method.into(),
            &input,
            &output,
            codebook.as_deref(),
            &e.config(),
            seed,
        ),
        Command::Train {
            data,
            model,
            svm,
            seed,
        } => train(&data, &model, &svm.params(), seed),
        Command::Predict {
            model,
            data,
            output,
        } => predict(&model, &data, &output),
        Command::Evaluate {
            truth,
            pred,
            report,
            output,
        } => evaluate(&truth, &pred, report, output.as_deref()),
        Command::Pipeline {
            images,
            method,
            split,
            stratified,
            seed,
            report,
            segment: s,
            extract: e,
            svm,
        } => {
            let cfg = PipelineConfig {
                train_fraction: split,
                stratified,
                segment: s.config(seed),
                extract: e.config(),
                svm: svm.params(),
                ..PipelineConfig::new(method.into(), seed)
            };
            let result = run_pipeline(&images, &cfg)?;
            for w in &result.warnings {
                log::warn!("{w}");
            }
            write_output(report.as_deref(), &result.to_json()?)?;
            if report.is_some() {
                eprint!("{}", result.evaluation.to_table());
            }
            Ok(())
        }
        Command::Fixtures {
            kind,
            classes,
            per_class,
            output,
            seed,
            size,
        } => {
            let images = synth_fixture(kind.into(), classes, per_class, seed, size)?;
            create_dir(&output)?;
            let paths = write_fixture(&output, &images)?;
            println!(
                "wrote {} {} images to {}",
                paths.len(),
                FixtureKind::from(kind),
                output.display()
            );
            Ok(())
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e.kind() {
        ErrorKind::Io => EXIT_IO,
        ErrorKind::Data => EXIT_DATA,
        ErrorKind::Numeric => EXIT_NUMERIC,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(EXIT_USAGE);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
        {
            eprintln!("error: cannot start {jobs} worker threads: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
