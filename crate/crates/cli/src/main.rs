//! `tss`: batch front end for the flip-pretext self-supervision pipeline.
//!
//! Commands cover the full artifact chain: corpus ingestion, pretext set
//! construction, fraction cuts, single experiments, the experiment matrix,
//! checkpoint evaluation, and report collection. Exit codes: 0 success,
//! 2 usage or input error, 3 runtime failure. The only environment state
//! read is `TSS_DEVICE` (accelerator selection; unset means CPU).

mod plot;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tss_core::dataset::{
    build_pretext_dataset, ingest_layout, take_fraction, DatasetManifest, Split,
};
use tss_core::metrics::{render_results_table, MetricsReport, TableFormat};
use tss_core::model::checkpoint::load_checkpoint;
use tss_core::model::preprocess::LoadedDataset;
use tss_core::model::{BackboneName, BackboneSpec, HeadSpec, WeightsInit};
use tss_core::pipeline::{
    load_matrix_config, prepare_data_root, run_experiment, run_matrix, select_device,
    ExperimentConfig, MatrixOutcome, PRETEXT_MANIFEST,
};
use tss_core::synth::{generate_toy_corpus, ToyCorpusSpec};
use tss_core::{Error, Result};

const EVAL_BATCH: usize = 32;

#[derive(Parser)]
#[command(
    name = "tss",
    version,
    about = "Flip-pretext self-supervision pipeline"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Scan a train/test x covid/non_covid image tree into a manifest file.
    Ingest {
        /// Corpus root containing train/ and test/ class directories.
        #[arg(long)]
        data_root: PathBuf,
        /// Where to write the downstream manifest.
        #[arg(long)]
        out_manifest: PathBuf,
    },
    /// Build the flip-detection image set and manifests from a downstream manifest.
    BuildPretext {
        /// Downstream manifest produced by `ingest`.
        #[arg(long)]
        manifest: PathBuf,
        /// Directory for the original/ and flipped/ images and all manifests.
        #[arg(long)]
        out_dir: PathBuf,
        /// Nested fraction cuts to write alongside the full manifest.
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.25, 0.5, 0.75, 1.0])]
        fractions: Vec<f64>,
    },
    /// Cut a nested fraction of a pretext manifest into a new manifest.
    Fraction {
        /// Pretext manifest to cut.
        #[arg(long)]
        manifest: PathBuf,
        /// Fraction to keep, from the grid {0.25, 0.5, 0.75, 1.0}.
        #[arg(long)]
        fraction: f64,
        /// Where to write the fraction manifest.
        #[arg(long)]
        out_manifest: PathBuf,
    },
    /// Run one experiment: optional self-supervision, transfer, evaluation.
    Train {
        /// Backbone architecture: inceptionv3, densenet169, or tiny_test.
        #[arg(long)]
        backbone: String,
        /// Weight source: imagenet_pretrained or random. Defaults to
        /// imagenet_pretrained for the full-size backbones and random for
        /// tiny_test.
        #[arg(long)]
        weights_init: Option<String>,
        /// Share of the pretext set used for self-supervision (0 skips it).
        #[arg(long)]
        fraction: f64,
        /// Experiment seed controlling init and shuffling.
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Prepared data root (downstream.manifest plus pretext/).
        #[arg(long)]
        data_root: PathBuf,
        /// Directory receiving the experiment subdirectory.
        #[arg(long)]
        output_dir: PathBuf,
        /// Directory holding exported pretrained backbone weights.
        #[arg(long)]
        weights_dir: Option<PathBuf>,
        /// Hidden width of the two-layer classifier head.
        #[arg(long, default_value_t = 1024)]
        head_width: usize,
        /// Experiment id; defaults to <backbone>_f<fraction>_s<seed>.
        #[arg(long)]
        id: Option<String>,
    },
    /// Run the experiment matrix described by a TOML config file.
    Matrix {
        /// Matrix config file; schema documented in the project README.
        #[arg(long)]
        config: PathBuf,
        /// Override the config's output directory.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Keep experiments whose report already exists instead of rerunning.
        #[arg(long)]
        resume: bool,
    },
    /// Score a saved checkpoint on the test split of a manifest.
    Evaluate {
        /// Checkpoint file written by train/matrix.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Downstream manifest; only its test split is scored.
        #[arg(long)]
        manifest: PathBuf,
        /// Where to write the metrics report (CSV).
        #[arg(long)]
        out_report: PathBuf,
    },
    /// Collect per-experiment reports into a table and optional plot.
    Report {
        /// Directory holding one subdirectory per experiment.
        #[arg(long)]
        reports_dir: PathBuf,
        /// Output format: text or csv.
        #[arg(long, default_value = "text")]
        format: String,
        /// Write an accuracy-vs-fraction SVG plot to this path.
        #[arg(long)]
        plot: Option<PathBuf>,
    },
    /// Generate the synthetic toy corpus and a prepared data root.
    GenToy {
        /// Directory receiving raw/ plus the prepared manifests.
        #[arg(long)]
        out_dir: PathBuf,
        /// Training images per class.
        #[arg(long, default_value_t = 12)]
        per_class_train: usize,
        /// Test images per class.
        #[arg(long, default_value_t = 6)]
        per_class_test: usize,
        /// Square image side in pixels.
        #[arg(long, default_value_t = 64)]
        size: u32,
        /// Corpus seed.
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_input() { 2 } else { 3 })
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest {
            data_root,
            out_manifest,
        } => cmd_ingest(&data_root, &out_manifest),
        Command::BuildPretext {
            manifest,
            out_dir,
            fractions,
        } => cmd_build_pretext(&manifest, &out_dir, &fractions),
        Command::Fraction {
            manifest,
            fraction,
            out_manifest,
        } => cmd_fraction(&manifest, fraction, &out_manifest),
        Command::Train {
            backbone,
            weights_init,
            fraction,
            seed,
            data_root,
            output_dir,
            weights_dir,
            head_width,
            id,
        } => cmd_train(
            &backbone,
            weights_init.as_deref(),
            fraction,
            seed,
            data_root,
            output_dir,
            weights_dir,
            head_width,
            id,
        ),
        Command::Matrix {
            config,
            out_dir,
            resume,
        } => cmd_matrix(&config, out_dir, resume),
        Command::Evaluate {
            checkpoint,
            manifest,
            out_report,
        } => cmd_evaluate(&checkpoint, &manifest, &out_report),
        Command::Report {
            reports_dir,
            format,
            plot,
        } => cmd_report(&reports_dir, &format, plot.as_deref()),
        Command::GenToy {
            out_dir,
            per_class_train,
            per_class_test,
            size,
            seed,
        } => cmd_gen_toy(&out_dir, per_class_train, per_class_test, size, seed),
    }
}

fn cmd_ingest(data_root: &Path, out_manifest: &Path) -> Result<()> {
    let manifest = ingest_layout(data_root)?;
    manifest.write_to(out_manifest)?;
    println!(
        "train={} test={}",
        manifest.split_count(Split::Train),
        manifest.split_count(Split::Test)
    );
    for ((split, class), n) in manifest.counts() {
        println!("{}/{class}={n}", split.as_str());
    }
    println!("manifest={}", out_manifest.display());
    Ok(())
}

fn cmd_build_pretext(manifest: &Path, out_dir: &Path, fractions: &[f64]) -> Result<()> {
    let downstream = DatasetManifest::read_from(manifest)?;
    let pretext = build_pretext_dataset(&downstream, out_dir)?;
    let full_path = out_dir.join(PRETEXT_MANIFEST);
    pretext.write_to(&full_path)?;
    println!("images={} manifest={}", pretext.len(), full_path.display());
    for &f in fractions {
        let sub = take_fraction(&pretext, f)?;
        let path = out_dir.join(format!("pretext_f{f:.2}.manifest"));
        sub.write_to(&path)?;
        println!(
            "fraction={f} records={} manifest={}",
            sub.len(),
            path.display()
        );
    }
    Ok(())
}

fn cmd_fraction(manifest: &Path, fraction: f64, out_manifest: &Path) -> Result<()> {
    let pretext = DatasetManifest::read_from(manifest)?;
    let sub = take_fraction(&pretext, fraction)?;
    sub.write_to(out_manifest)?;
    println!(
        "fraction={fraction} records={} manifest={}",
        sub.len(),
        out_manifest.display()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_train(
    backbone: &str,
    weights_init: Option<&str>,
    fraction: f64,
    seed: u64,
    data_root: PathBuf,
    output_dir: PathBuf,
    weights_dir: Option<PathBuf>,
    head_width: usize,
    id: Option<String>,
) -> Result<()> {
    let name: BackboneName = backbone.parse()?;
    let init = match weights_init {
        Some(s) => s.parse::<WeightsInit>()?,
        None if name == BackboneName::TinyTest => WeightsInit::Random,
        None => WeightsInit::ImagenetPretrained,
    };
    let config = ExperimentConfig {
        experiment_id: id.unwrap_or_else(|| format!("{}_f{fraction:.2}_s{seed}", name.as_str())),
        backbone: BackboneSpec::new(name, init)?,
        head: HeadSpec {
            hidden_width: head_width,
        },
        ss_fraction: fraction,
        seed,
        data_root,
        output_dir,
        weights_dir,
    };
    let report = run_experiment(&config)?;
    print_report_line(&report);
    println!("artifacts={}", config.experiment_dir().display());
    Ok(())
}

fn cmd_matrix(config: &Path, out_dir: Option<PathBuf>, resume: bool) -> Result<()> {
    let mut matrix = load_matrix_config(config)?;
    if let Some(dir) = out_dir {
        for exp in &mut matrix.experiments {
            exp.output_dir = dir.clone();
        }
    }
    if !resume {
        // A fresh run re-trains every cell; stale reports would be skipped.
        for exp in &matrix.experiments {
            let report = exp.experiment_dir().join("report.csv");
            if report.exists() {
                std::fs::remove_file(&report).map_err(|e| Error::io(&report, e))?;
            }
        }
    }
    let outcomes = run_matrix(&matrix.experiments)?;
    let mut failed = Vec::new();
    for (outcome, exp) in outcomes.iter().zip(&matrix.experiments) {
        match outcome {
            MatrixOutcome::Completed(r) => {
                print!("completed ");
                print_report_line(r);
            }
            MatrixOutcome::Resumed(r) => {
                print!("resumed ");
                print_report_line(r);
            }
            MatrixOutcome::Failed {
                experiment_id,
                message,
            } => {
                println!("failed {experiment_id}: {message}");
                failed.push(exp.experiment_id.clone());
            }
        }
    }
    let results_dir = &matrix.experiments[0].output_dir;
    println!("results={}", results_dir.join("results.csv").display());
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Error::Train(format!(
            "{} of {} experiments failed: {}",
            failed.len(),
            outcomes.len(),
            failed.join(", ")
        )))
    }
}

fn cmd_evaluate(checkpoint: &Path, manifest: &Path, out_report: &Path) -> Result<()> {
    let device = select_device()?;
    let model = load_checkpoint(checkpoint, &device)?;
    let test = DatasetManifest::read_from(manifest)?.filter_split(Split::Test)?;
    let data = LoadedDataset::from_manifest(&test, &model.preprocess(), &device)?;

    let indices: Vec<usize> = (0..data.len()).collect();
    let mut scores = Vec::with_capacity(data.len());
    for chunk in indices.chunks(EVAL_BATCH) {
        let (images, _) = data.batch(chunk)?;
        scores.extend(model.predict(&images)?);
    }

    let id = checkpoint
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("checkpoint");
    let report = MetricsReport::from_scores(id, &scores, data.labels())?;
    std::fs::write(out_report, report.to_csv()).map_err(|e| Error::io(out_report, e))?;
    print_report_line(&report);
    Ok(())
}

fn cmd_report(reports_dir: &Path, format: &str, plot: Option<&Path>) -> Result<()> {
    let format: TableFormat = format.parse()?;
    if !reports_dir.is_dir() {
        return Err(Error::MissingFile {
            path: reports_dir.to_path_buf(),
        });
    }

    // One experiment per subdirectory; directory order is not meaningful,
    // so sort by experiment id for a stable table.
    let mut rows: Vec<(MetricsReport, Option<(String, f64)>)> = Vec::new();
    let mut entries: Vec<PathBuf> = std::fs::read_dir(reports_dir)
        .map_err(|e| Error::io(reports_dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    entries.sort();
    for dir in entries {
        let report_path = dir.join("report.csv");
        if !report_path.is_file() {
            continue;
        }
        let text = std::fs::read_to_string(&report_path).map_err(|e| Error::io(&report_path, e))?;
        let report = MetricsReport::from_csv(&text)?;
        rows.push((report, read_plot_point(&dir.join("config.json"))));
    }
    rows.sort_by(|a, b| a.0.experiment_id.cmp(&b.0.experiment_id));

    let reports: Vec<MetricsReport> = rows.iter().map(|(r, _)| r.clone()).collect();
    print!("{}", render_results_table(&reports, format));

    if let Some(plot_path) = plot {
        let points: Vec<(String, f64, f64)> = rows
            .iter()
            .filter_map(|(r, meta)| {
                meta.as_ref()
                    .map(|(backbone, fraction)| (backbone.clone(), *fraction, r.accuracy))
            })
            .collect();
        let svg = plot::accuracy_vs_fraction_svg(&points);
        std::fs::write(plot_path, svg).map_err(|e| Error::io(plot_path, e))?;
        println!("plot={}", plot_path.display());
    }
    Ok(())
}

/// Backbone name and self-supervision fraction for one plot point, if the
/// experiment directory has a readable config.json.
fn read_plot_point(config_path: &Path) -> Option<(String, f64)> {
    let text = std::fs::read_to_string(config_path).ok()?;
    let value: serde_json::Value = serde_json::from_str(&text).ok()?;
    Some((
        value.get("backbone")?.as_str()?.to_string(),
        value.get("ss_fraction")?.as_f64()?,
    ))
}

fn cmd_gen_toy(
    out_dir: &Path,
    per_class_train: usize,
    per_class_test: usize,
    size: u32,
    seed: u64,
) -> Result<()> {
    let spec = ToyCorpusSpec {
        per_class_train,
        per_class_test,
        size,
        seed,
    };
    let raw = out_dir.join("raw");
    let written = generate_toy_corpus(&raw, &spec)?;
    let downstream = ingest_layout(&raw)?;
    let pretext = prepare_data_root(&downstream, out_dir)?;
    println!(
        "images={written} pretext={} data_root={}",
        pretext.len(),
        out_dir.display()
    );
    Ok(())
}

fn print_report_line(report: &MetricsReport) {
    println!(
        "{}: accuracy={:.4} ci_halfwidth={:.4} auc={:.4} f1={:.4} n_test={}",
        report.experiment_id,
        report.accuracy,
        report.ci_halfwidth,
        report.auc,
        report.f1,
        report.n_test
    );
}
