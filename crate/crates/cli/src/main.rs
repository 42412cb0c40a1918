use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use has_seg::eval::{evaluate, reports_to_csv, DiffusionParams, GroundTruth, Method};
use has_seg::io::{load_image, regions_sidecar_path, save_image, save_label_map};
use has_seg::peaks::detect_peaks_traced;
use has_seg::synth::{generate_phantom, PhantomSpec};
use has_seg::{
    compute_histogram, filter_image_with, run_pipeline, BoundaryRule, GrayImage, Histogram,
    KernelSize, PipelineConfig, ThresholdRule,
};

/// Histogram-based auto segmentation of grayscale SEM images.
#[derive(Parser, Debug)]
#[command(name = "has-seg", version)]
struct Cli {
    /// Worker threads for the parallel stages (defaults to one per core).
    #[arg(long, global = true, env = "HAS_SEG_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Segment an image and write a color label map plus a region table.
    Segment(SegmentArgs),
    /// Write the raw and the estimated histogram of an image as CSV.
    Histogram(HistogramArgs),
    /// Generate a phantom image with ground truth from a spec file.
    Synth(SynthArgs),
    /// Score the baseline filters and HAS against a ground-truth mask.
    Eval(EvalArgs),
}

#[derive(Args, Debug)]
struct FilterArgs {
    /// Side of the square merge kernel; pick the largest that fits inside the
    /// smallest feature, such as a via.
    #[arg(long, default_value_t = 2, value_parser = parse_kernel)]
    kernel: usize,

    /// How the per-band merge threshold is read off the difference table.
    #[arg(long, default_value_t = ThresholdRule::MinimumValue)]
    tau_rule: ThresholdRule,
}

#[derive(Args, Debug)]
struct SegmentArgs {
    input: PathBuf,

    /// Label map PNG; the region table goes next to it as `<stem>.regions.txt`.
    #[arg(long)]
    out: PathBuf,

    #[command(flatten)]
    filter: FilterArgs,

    /// Boundary placement between adjacent peaks.
    #[arg(long, default_value_t = BoundaryRule::Histogram)]
    rule: BoundaryRule,

    /// Label the raw pixels instead of the merge-filtered ones.
    #[arg(long)]
    label_raw: bool,

    /// Also write `<stem>.estimated.csv` and `<stem>.accumulator.csv`.
    #[arg(long)]
    debug_dump: bool,
}

#[derive(Args, Debug)]
struct HistogramArgs {
    input: PathBuf,

    /// Directory for `raw_histogram.csv` and `estimated_histogram.csv`.
    #[arg(long)]
    out: PathBuf,

    #[command(flatten)]
    filter: FilterArgs,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Phantom spec file.
    spec: PathBuf,

    /// Phantom image (.pgm or .png). `<stem>.labels.pgm` holds material
    /// indices and `<stem>.truth.pgm` a 0/255 mask with material 0 as background.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvalArgs {
    image: PathBuf,

    /// Ground-truth mask: 255 foreground, 0 background.
    truth: PathBuf,

    /// Output prefix; writes `<out>.csv` and `<out>.json`.
    #[arg(long)]
    out: PathBuf,

    /// Kernel for the HAS entries.
    #[arg(long, default_value_t = 2, value_parser = parse_kernel)]
    kernel: usize,

    #[arg(long, default_value_t = 1.0)]
    gaussian_sigma: f64,

    #[arg(long, default_value_t = 3)]
    median_window: usize,

    #[arg(long, default_value_t = 10)]
    ad_iterations: usize,

    #[arg(long, default_value_t = 30.0)]
    ad_kappa: f64,

    #[arg(long, default_value_t = 0.2)]
    ad_lambda: f64,
}

fn parse_kernel(s: &str) -> std::result::Result<usize, String> {
    let k: usize = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    KernelSize::new(k)
        .map(KernelSize::get)
        .map_err(|e| e.to_string())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

fn histogram_csv(hist: &Histogram) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["intensity", "count"])?;
    for (v, &c) in hist.counts().iter().enumerate() {
        w.serialize((v, c))?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

fn segment(args: &SegmentArgs) -> Result<()> {
    let img = load_image(&args.input)?;
    let config = PipelineConfig {
        kernel: KernelSize::new(args.filter.kernel)?,
        boundary: args.rule,
        threshold: args.filter.tau_rule,
        label_raw: args.label_raw,
    };
    let seg = run_pipeline(&img, &config)
        .with_context(|| format!("segmenting {}", args.input.display()))?;
    save_label_map(&seg.labels, &seg.regions, &args.out)?;
    if args.debug_dump {
        write_text(
            &with_suffix(&args.out, ".estimated.csv"),
            &histogram_csv(&seg.estimated)?,
        )?;
        let trace = detect_peaks_traced(&seg.estimated)?;
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["intensity", "frequency", "votes", "score", "kept"])?;
        for (v, freq, votes, score, kept) in trace.rows(&seg.estimated) {
            w.serialize((v, freq, votes, score, kept as u8))?;
        }
        write_text(
            &with_suffix(&args.out, ".accumulator.csv"),
            &String::from_utf8(w.into_inner()?)?,
        )?;
    }
    println!(
        "{} regions, peaks {:?}, region table {}",
        seg.regions.len(),
        seg.peaks.intensities(),
        regions_sidecar_path(&args.out).display()
    );
    Ok(())
}

fn histogram(args: &HistogramArgs) -> Result<()> {
    let img = load_image(&args.input)?;
    let filtered = filter_image_with(
        &img,
        KernelSize::new(args.filter.kernel)?,
        args.filter.tau_rule,
    )?;
    let raw = compute_histogram(&img);
    let estimated = compute_histogram(&filtered);
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    write_text(&args.out.join("raw_histogram.csv"), &histogram_csv(&raw)?)?;
    write_text(
        &args.out.join("estimated_histogram.csv"),
        &histogram_csv(&estimated)?,
    )?;
    println!(
        "non-empty bins: raw {}, estimated {}",
        raw.support(),
        estimated.support()
    );
    Ok(())
}

fn label_image(labels: &has_seg::LabelMap) -> GrayImage {
    GrayImage::new(
        labels.width(),
        labels.height(),
        labels.labels().iter().map(|&l| l as u8).collect(),
    )
    .expect("label map has valid dimensions")
}

fn synth(args: &SynthArgs) -> Result<()> {
    let text = fs::read_to_string(&args.spec)
        .with_context(|| format!("reading {}", args.spec.display()))?;
    let spec =
        PhantomSpec::parse(&text).with_context(|| format!("parsing {}", args.spec.display()))?;
    let (img, truth) = generate_phantom(&spec)
        .with_context(|| format!("generating from {}", args.spec.display()))?;
    save_image(&img, &args.out)?;
    save_image(&label_image(&truth), with_suffix(&args.out, ".labels.pgm"))?;
    let mask = GrayImage::new(
        truth.width(),
        truth.height(),
        truth
            .labels()
            .iter()
            .map(|&l| if l == 0 { 0 } else { 255 })
            .collect(),
    )?;
    save_image(&mask, with_suffix(&args.out, ".truth.pgm"))?;
    println!(
        "{}x{} phantom, {} materials",
        img.width(),
        img.height(),
        spec.materials.len()
    );
    Ok(())
}

fn eval(args: &EvalArgs) -> Result<()> {
    let img = load_image(&args.image)?;
    let truth = GroundTruth::from_image(&load_image(&args.truth)?)
        .with_context(|| format!("reading ground truth {}", args.truth.display()))?;
    let methods = [
        Method::Raw,
        Method::Gaussian {
            sigma: args.gaussian_sigma,
        },
        Method::Median {
            window: args.median_window,
        },
        Method::AnisotropicDiffusion(DiffusionParams {
            iterations: args.ad_iterations,
            kappa: args.ad_kappa,
            lambda: args.ad_lambda,
        }),
        Method::HasDistance {
            kernel: args.kernel,
        },
        Method::HasHistogram {
            kernel: args.kernel,
        },
    ];
    let reports = evaluate(&img, &truth, &methods)?;
    let csv = reports_to_csv(&reports);
    write_text(&with_suffix(&args.out, ".csv"), &csv)?;
    write_text(
        &with_suffix(&args.out, ".json"),
        &serde_json::to_string_pretty(&reports)?,
    )?;
    print!("{csv}");
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    match &cli.command {
        Command::Segment(args) => segment(args),
        Command::Histogram(args) => histogram(args),
        Command::Synth(args) => synth(args),
        Command::Eval(args) => eval(args),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
