//! `micrographia` command-line tool.

mod grid;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use micrographia::dataset::{
    apply_cohort_truncation, file_sha256, load_manifest, read_demographics, scan_handpd, split, write_manifest,
    Gender, SplitAssignment, SplitFractions,
};
use micrographia::eval::{render_roc_png, render_table, roc_csv, Scheme, TableRow};
use micrographia::experiment::{evaluate_artifact, featurize_records, train_artifact, TrainOptions};
use micrographia::features::{FeatureConfig, StdConvention};
use micrographia::imaging::{blend_traces, generate_assessment_template, RasterImage, TemplateSpec};
use micrographia::models::{deserialize_model, serialize_model};
use micrographia::pipeline::{assess_exam, extract_pair, PipelineConfig};
use micrographia::table::{patients_of, read_feature_table, write_feature_table};
use rayon::prelude::*;
use serde::Serialize;

use grid::Family;

#[derive(Parser)]
#[command(name = "micrographia", version, about = "Drawing-based Parkinson's screening pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Manifest tooling.
    Manifest {
        #[command(subcommand)]
        command: ManifestCommand,
    },
    /// Write exam trace, handwriting trace and blend PNGs for every drawing.
    Extract {
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute the image-level feature table.
    Featurize {
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Neighbour offset for the relative-tremor features.
        #[arg(long, default_value_t = 10)]
        d: usize,
        /// Use the mean-centred standard deviation for F4 and F8.
        #[arg(long)]
        centered_std: bool,
        /// Drop PD patients of the newer cohort before featurizing.
        #[arg(long)]
        truncate_cohort: bool,
    },
    /// Stratified patient-level train/validation/test split.
    Split {
        features: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "0.765,0.085,0.15")]
        fractions: SplitFractions,
        /// Defaults to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Select hyperparameters by patient-level CV and fit the final model.
    Train {
        features: PathBuf,
        split: PathBuf,
        #[arg(long, value_enum)]
        model: Family,
        /// e.g. `c=0.01,0.1,1;l1_ratio=0.5,0.75` or `c=1,100;gamma=scale,0.1`.
        #[arg(long)]
        grid: Option<String>,
        /// CV folds; 0 skips CV (single-cell grid only).
        #[arg(long, default_value_t = 10)]
        folds: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Manifest the features came from; its hash goes into the artifact.
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score the test split and write report.json, roc.csv and roc.png.
    Evaluate {
        artifact: PathBuf,
        features: PathBuf,
        split: PathBuf,
        #[arg(long)]
        patient_level: bool,
        #[arg(long, default_value = "c")]
        scheme: Scheme,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Score one exam.
    Predict {
        artifact: PathBuf,
        #[arg(required = true, num_args = 1..=8)]
        images: Vec<PathBuf>,
        #[arg(long)]
        age: f64,
        #[arg(long)]
        gender: Gender,
    },
    /// Write the printable assessment template.
    Template {
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the HTTP assessment service.
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum ManifestCommand {
    /// Emit a manifest from HandPD-style folders.
    Scan {
        dir: PathBuf,
        /// CSV with `patient_id,age,gender,handedness`.
        #[arg(long)]
        demographics: PathBuf,
        /// Defaults to `<dir>/manifest.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let _ = e.print();
            let message = e.kind().as_str().unwrap_or("invalid usage");
            eprintln!("error: kind=usage message={}", serde_json::to_string(message).unwrap_or_default());
            return ExitCode::from(2);
        }
    };
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: kind={} message={}", error_kind(&e), serde_json::to_string(&format!("{e:#}")).unwrap());
            ExitCode::FAILURE
        }
    }
}

fn error_kind(e: &anyhow::Error) -> &'static str {
    use micrographia::Error as E;
    if let Some(core) = e.downcast_ref::<E>() {
        return match core {
            E::InvalidArgument(_) => "invalid_argument",
            E::EmptyTrace(_) => "empty_trace",
            E::DegenerateTrace { .. } => "degenerate_trace",
            E::ZeroVariance { .. } => "zero_variance",
            E::SingleClass(_) => "single_class",
            E::Load { .. } => "load",
            E::CorruptArtifact(_) => "corrupt_artifact",
            E::VersionMismatch { .. } => "version_mismatch",
            E::Validation(_) => "validation",
            E::Image(_) => "image",
            E::Csv(_) => "csv",
            E::Io(_) => "io",
        };
    }
    if e.downcast_ref::<micrographia_service::ServiceError>().is_some() {
        return "service";
    }
    if e.downcast_ref::<std::io::Error>().is_some() {
        return "io";
    }
    "invalid_argument"
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Manifest { command: ManifestCommand::Scan { dir, demographics, out } } => {
            manifest_scan(&dir, &demographics, out)
        }
        Command::Extract { manifest, out } => extract(&manifest, &out),
        Command::Featurize { manifest, out, d, centered_std, truncate_cohort } => {
            let std = if centered_std { StdConvention::Centered } else { StdConvention::Uncentered };
            let config = PipelineConfig { features: FeatureConfig { d, std }, ..Default::default() };
            featurize(&manifest, &out, &config, truncate_cohort)
        }
        Command::Split { features, seed, fractions, out } => {
            let rows = read_feature_table(&features)?;
            let assignment = split(&patients_of(&rows), fractions, seed)?;
            match out {
                Some(path) => assignment.write_csv(create(&path)?)?,
                None => assignment.write_csv(std::io::stdout().lock())?,
            }
            Ok(())
        }
        Command::Train { features, split, model, grid, folds, seed, manifest, out } => {
            train(&features, &split, model, grid.as_deref(), folds, seed, manifest.as_deref(), &out)
        }
        Command::Evaluate { artifact, features, split, patient_level, scheme, seed, out_dir } => {
            evaluate(&artifact, &features, &split, patient_level.then_some(scheme), seed, &out_dir)
        }
        Command::Predict { artifact, images, age, gender } => predict(&artifact, &images, age, gender),
        Command::Template { out } => {
            if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent)?;
            }
            generate_assessment_template(&TemplateSpec::default())?.save_png(&out)?;
            eprintln!("wrote {}", out.display());
            Ok(())
        }
        Command::Serve { config } => {
            let config = micrographia_service::ServiceConfig::load(config.as_deref())?;
            let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
            rt.block_on(micrographia_service::serve(config))?;
            Ok(())
        }
    }
}

fn create(path: &Path) -> Result<fs::File> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::File::create(path).with_context(|| format!("creating {}", path.display()))
}

fn manifest_scan(dir: &Path, demographics: &Path, out: Option<PathBuf>) -> Result<()> {
    let demo = read_demographics(demographics)?;
    let mut records = scan_handpd(dir, &demo)?;
    let out = out.unwrap_or_else(|| dir.join("manifest.csv"));
    let same_dir = match (out.parent().map(fs::canonicalize), fs::canonicalize(dir)) {
        (Some(Ok(a)), Ok(b)) => a == b,
        _ => false,
    };
    if !same_dir {
        let root = fs::canonicalize(dir)?;
        for r in &mut records {
            for img in &mut r.images {
                img.path = root.join(&img.path);
            }
        }
    }
    write_manifest(&records, create(&out)?)?;
    eprintln!("wrote {} patients to {}", records.len(), out.display());
    Ok(())
}

fn extract(manifest: &Path, out: &Path) -> Result<()> {
    let records = load_manifest(manifest)?;
    fs::create_dir_all(out)?;
    let jobs: Vec<_> = records
        .iter()
        .flat_map(|r| r.images.iter().map(move |img| (r, img)))
        .collect();
    let results: Vec<Result<()>> = jobs
        .par_iter()
        .map(|(r, img)| {
            let stem = format!("{}_{}_{}", r.patient_id, img.kind, img.index);
            let raster = RasterImage::open(&img.path)?;
            let pair = extract_pair(&raster, img.path.display().to_string())?;
            pair.exam_trace.to_image().save_png(out.join(format!("{stem}_et.png")))?;
            pair.handwriting_trace.to_image().save_png(out.join(format!("{stem}_ht.png")))?;
            blend_traces(&pair).save_png(out.join(format!("{stem}_blend.png")))?;
            Ok(())
        })
        .collect();
    let mut failed = 0;
    for ((r, img), res) in jobs.iter().zip(results) {
        if let Err(e) = res {
            failed += 1;
            eprintln!("warning: {} {} {}: {e}", r.patient_id, img.kind, img.index);
        }
    }
    eprintln!("extracted {} of {} drawings into {}", jobs.len() - failed, jobs.len(), out.display());
    if failed == jobs.len() {
        bail!("no drawing yielded usable traces");
    }
    Ok(())
}

fn featurize(manifest: &Path, out: &Path, config: &PipelineConfig, truncate: bool) -> Result<()> {
    let mut records = load_manifest(manifest)?;
    if truncate {
        records = apply_cohort_truncation(records);
    }
    let featurized = featurize_records(&records, config);
    for f in &featurized.failures {
        eprintln!("warning: {} {} {}: {}", f.patient_id, f.kind, f.source, f.error);
    }
    if featurized.rows.is_empty() {
        bail!("no drawing yielded features");
    }
    let mut buf = Vec::new();
    write_feature_table(&featurized.rows, &mut buf)?;
    create(out)?.write_all(&buf)?;
    eprintln!(
        "wrote {} rows ({} drawings failed) to {}",
        featurized.rows.len(),
        featurized.failures.len(),
        out.display()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn train(
    features: &Path,
    split_path: &Path,
    family: Family,
    grid: Option<&str>,
    folds: usize,
    seed: u64,
    manifest: Option<&Path>,
    out: &Path,
) -> Result<()> {
    let rows = read_feature_table(features)?;
    let assignment = SplitAssignment::read_csv(split_path)?;
    let grid = grid::parse_grid(family, grid, seed)?;
    let manifest_hash = manifest.map(file_sha256).transpose()?;
    let options = TrainOptions { folds, seed, manifest_hash, pipeline: PipelineConfig::default() };
    let outcome = train_artifact(&rows, &assignment, &grid, &options)?;
    if !outcome.status.converged() {
        eprintln!("warning: final fit did not converge: {:?}", outcome.status);
    }
    create(out)?.write_all(&serialize_model(&outcome.artifact)?)?;
    if let Some(cv) = &outcome.cv {
        let path = out.with_extension("cv.json");
        create(&path)?.write_all(serde_json::to_string_pretty(cv)?.as_bytes())?;
        eprintln!("wrote CV report to {}", path.display());
    }
    eprintln!("wrote {} model to {}", outcome.artifact.classifier.kind(), out.display());
    Ok(())
}

fn load_artifact(path: &Path) -> Result<micrographia::models::ModelArtifact> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(deserialize_model(&bytes)?)
}

fn evaluate(
    artifact: &Path,
    features: &Path,
    split_path: &Path,
    scheme: Option<Scheme>,
    seed: u64,
    out_dir: &Path,
) -> Result<()> {
    let artifact = load_artifact(artifact)?;
    let rows = read_feature_table(features)?;
    let assignment = SplitAssignment::read_csv(split_path)?;
    let ev = evaluate_artifact(&artifact, &rows, &assignment, scheme.unwrap_or_default(), seed)?;

    let mut report = serde_json::to_value(&ev)?;
    if let (None, Some(obj)) = (scheme, report.as_object_mut()) {
        obj.remove("patient_level");
        obj.remove("patient_rocs");
    }
    fs::create_dir_all(out_dir)?;
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    fs::write(out_dir.join("report.json"), text)?;
    roc_csv(&ev.roc, create(&out_dir.join("roc.csv"))?)?;
    let mut curves = vec![ev.roc.clone()];
    if scheme.is_some() {
        curves.extend(ev.patient_rocs.iter().cloned());
    }
    render_roc_png(&curves, 480)?.save_png(out_dir.join("roc.png"))?;

    let name = ev.model.clone();
    print!("{}", render_table(&[TableRow { model: &name, metrics: &ev.image_level }]));
    if let Some(s) = scheme {
        let m = &ev.patient_level.metrics;
        println!(
            "patient level (scheme {s}): accuracy {} over {} patients",
            m.acc.map_or("n/a".into(), |a| format!("{a:.4}")),
            ev.patient_level.verdicts.len()
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct PredictedImage {
    path: String,
    #[serde(flatten)]
    outcome: micrographia::pipeline::ImageOutcome,
}

#[derive(Serialize)]
struct Prediction {
    images: Vec<PredictedImage>,
    verdict: micrographia::dataset::Label,
    verdict_probability: f64,
    threshold: f64,
    low_confidence: bool,
}

fn predict(artifact: &Path, images: &[PathBuf], age: f64, gender: Gender) -> Result<()> {
    let artifact = load_artifact(artifact)?;
    let rasters = images.iter().map(RasterImage::open).collect::<micrographia::Result<Vec<_>>>()?;
    let exam = assess_exam(&artifact, &rasters, age, gender)?;
    let out = Prediction {
        images: images
            .iter()
            .zip(exam.per_image)
            .map(|(p, outcome)| PredictedImage { path: p.display().to_string(), outcome })
            .collect(),
        verdict: exam.verdict,
        verdict_probability: exam.verdict_probability,
        threshold: artifact.classifier.threshold(),
        low_confidence: exam.low_confidence,
    };
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}
