//! Two-phase experiment orchestration: flip-pretext self-supervision, then
//! transfer onto the covid/non_covid task with the unchanged architecture,
//! evaluated once on the held-out test split.
//!
//! Experiments in a matrix run sequentially and share nothing; a completed
//! experiment is represented by its persisted report and is skipped on
//! re-invocation.

mod config;

pub use config::{load_matrix_config, MatrixConfig};

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use candle_core::Device;

use crate::dataset::{take_fraction, DatasetManifest, Split};
use crate::error::{Error, Result};
use crate::metrics::{render_results_table, MetricsReport, TableFormat};
use crate::model::checkpoint::save_checkpoint;
use crate::model::preprocess::LoadedDataset;
use crate::model::{build_model, BackboneSpec, HeadSpec, ModelHandle, TrainableScope};
use crate::rng::derive_seed;
use crate::trainer::{
    run_training, select_checkpoint, CheckpointCriterion, OptimizerKind, RunHistory,
    TrainingRunConfig,
};

/// Fractions of the pretext set an experiment may train on; 0.0 skips the
/// self-supervision phase entirely.
pub const ALLOWED_SS_FRACTIONS: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

/// Files run_experiment expects under its data root.
pub const DOWNSTREAM_MANIFEST: &str = "downstream.manifest";
pub const PRETEXT_DIR: &str = "pretext";
pub const PRETEXT_MANIFEST: &str = "pretext_full.manifest";

/// Env var selecting the compute device; the only environment state read.
pub const DEVICE_ENV_VAR: &str = "TSS_DEVICE";

const EVAL_BATCH: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhaseKind {
    SelfSupervision,
    Transfer,
}

impl PhaseKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PhaseKind::SelfSupervision => "self_supervision",
            PhaseKind::Transfer => "transfer",
        }
    }

    /// Salt for deriving per-run shuffle seeds from the experiment seed.
    fn seed_salt(self, run: usize) -> u64 {
        let tag: u64 = match self {
            PhaseKind::SelfSupervision => 0x7373, // "ss"
            PhaseKind::Transfer => 0x7472,        // "tr"
        };
        (tag << 8) | run as u64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhasePlan {
    pub phase: PhaseKind,
    pub runs: Vec<TrainingRunConfig>,
}

/// The fixed training schedule. Self-supervision: three runs, checkpointing
/// on lowest training loss, each starting from the previous run's best
/// checkpoint. Transfer: two runs checkpointing on highest training
/// accuracy, with the final model taken from whichever run reached the
/// higher accuracy. Seeds here are placeholders; run_experiment derives one
/// per run from the experiment seed.
pub fn build_phase_plans() -> (PhasePlan, PhasePlan) {
    let run = |optimizer, learning_rate, scope, criterion| TrainingRunConfig {
        optimizer,
        learning_rate,
        epochs: 30,
        batch_size: 4,
        trainable_scope: scope,
        checkpoint_criterion: criterion,
        seed: 0,
    };
    let ss = PhasePlan {
        phase: PhaseKind::SelfSupervision,
        runs: vec![
            run(
                OptimizerKind::Rmsprop,
                1e-4,
                TrainableScope::HeadOnly,
                CheckpointCriterion::MinTrainLoss,
            ),
            run(
                OptimizerKind::Sgd,
                1e-5,
                TrainableScope::FullNetwork,
                CheckpointCriterion::MinTrainLoss,
            ),
            run(
                OptimizerKind::Sgd,
                1e-6,
                TrainableScope::FullNetwork,
                CheckpointCriterion::MinTrainLoss,
            ),
        ],
    };
    let transfer = PhasePlan {
        phase: PhaseKind::Transfer,
        runs: vec![
            run(
                OptimizerKind::Rmsprop,
                1e-4,
                TrainableScope::HeadOnly,
                CheckpointCriterion::MaxTrainAccuracy,
            ),
            run(
                OptimizerKind::Sgd,
                1e-5,
                TrainableScope::FullNetwork,
                CheckpointCriterion::MaxTrainAccuracy,
            ),
        ],
    };
    (ss, transfer)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment_id: String,
    pub backbone: BackboneSpec,
    pub head: HeadSpec,
    pub ss_fraction: f64,
    pub seed: u64,
    pub data_root: PathBuf,
    pub output_dir: PathBuf,
    pub weights_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if !ALLOWED_SS_FRACTIONS.contains(&self.ss_fraction) {
            return Err(Error::Config(format!(
                "ss_fraction must be one of {ALLOWED_SS_FRACTIONS:?}, got {}",
                self.ss_fraction
            )));
        }
        if self.experiment_id.is_empty()
            || self
                .experiment_id
                .contains(|c: char| c == '/' || c == '\\' || c.is_whitespace())
        {
            return Err(Error::Config(format!(
                "experiment id {:?} must be a non-empty path-safe token",
                self.experiment_id
            )));
        }
        Ok(())
    }

    pub fn experiment_dir(&self) -> PathBuf {
        self.output_dir.join(&self.experiment_id)
    }
}

/// Lays out a data root the way run_experiment expects it: the downstream
/// manifest at the top, the materialized pretext set (all orientations and
/// splits) under pretext/. Returns the pretext manifest.
pub fn prepare_data_root(
    downstream: &DatasetManifest,
    data_root: &Path,
) -> Result<DatasetManifest> {
    fs::create_dir_all(data_root).map_err(|e| Error::io(data_root, e))?;
    downstream.write_to(&data_root.join(DOWNSTREAM_MANIFEST))?;
    let pretext_dir = data_root.join(PRETEXT_DIR);
    let pretext = crate::dataset::build_pretext_dataset(downstream, &pretext_dir)?;
    pretext.write_to(&pretext_dir.join(PRETEXT_MANIFEST))?;
    Ok(pretext)
}

/// Reads the device env var; only "cpu" (or unset) is supported in this
/// build.
pub fn select_device() -> Result<Device> {
    match std::env::var(DEVICE_ENV_VAR) {
        Err(_) => Ok(Device::Cpu),
        Ok(v) if v == "cpu" => Ok(Device::Cpu),
        Ok(v) => Err(Error::Config(format!(
            "{DEVICE_ENV_VAR}={v:?} is not supported; this build is CPU-only"
        ))),
    }
}

/// Runs each plan entry in order, chaining the best checkpoint: run_training
/// returns the model restored to its best epoch, which seeds the next run.
fn execute_plan(
    mut model: ModelHandle,
    data: &LoadedDataset,
    plan: &PhasePlan,
    experiment_seed: u64,
    checkpoint_dir: &Path,
) -> Result<(ModelHandle, Vec<RunHistory>)> {
    let mut histories = Vec::with_capacity(plan.runs.len());
    for (run_idx, template) in plan.runs.iter().enumerate() {
        let config = TrainingRunConfig {
            seed: derive_seed(experiment_seed, plan.phase.seed_salt(run_idx)),
            ..template.clone()
        };
        let checkpoint = checkpoint_dir.join(format!(
            "{}_run{}.safetensors",
            plan.phase.as_str(),
            run_idx
        ));
        log::info!(
            "{} run {}: {} lr {} ({})",
            plan.phase.as_str(),
            run_idx,
            config.optimizer,
            config.learning_rate,
            config.trainable_scope,
        );
        let (next, history) = run_training(model, data, &config, &checkpoint)?;
        model = next;
        histories.push(history);
    }
    Ok((model, histories))
}

fn require_split(manifest: &DatasetManifest, split: Split, what: &str) -> Result<()> {
    if manifest.is_empty() {
        return Err(Error::EmptyDataset(format!("{what} manifest is empty")));
    }
    let other = match split {
        Split::Train => Split::Test,
        Split::Test => Split::Train,
    };
    if manifest.split_count(other) != 0 {
        return Err(Error::Leakage(format!(
            "{what} manifest must contain only {split} records"
        )));
    }
    Ok(())
}

/// Pretrains on flip detection: the three-run plan over the train-split
/// pretext records, labels = orientation (original 0, flipped 1). The head
/// is carried into transfer unchanged; there is no surgery between phases.
pub fn self_supervision_phase(
    model: ModelHandle,
    pretext_train: &DatasetManifest,
    experiment_seed: u64,
    checkpoint_dir: &Path,
) -> Result<(ModelHandle, Vec<RunHistory>)> {
    if pretext_train.kind() != crate::dataset::ManifestKind::Pretext {
        return Err(Error::InvalidInput(
            "self-supervision needs a pretext manifest".into(),
        ));
    }
    require_split(pretext_train, Split::Train, "pretext training")?;
    let data = LoadedDataset::from_manifest(pretext_train, &model.preprocess(), model.device())?;
    let (ss_plan, _) = build_phase_plans();
    execute_plan(model, &data, &ss_plan, experiment_seed, checkpoint_dir)
}

/// Fine-tunes on the downstream task: the two-run plan over the full
/// training split (covid 1, non_covid 0); the returned model is the best
/// checkpoint by training accuracy across both runs.
pub fn transfer_phase(
    model: ModelHandle,
    downstream_train: &DatasetManifest,
    experiment_seed: u64,
    checkpoint_dir: &Path,
) -> Result<(ModelHandle, Vec<RunHistory>)> {
    if downstream_train.kind() != crate::dataset::ManifestKind::Downstream {
        return Err(Error::InvalidInput(
            "transfer needs a downstream manifest".into(),
        ));
    }
    require_split(downstream_train, Split::Train, "transfer training")?;
    let data = LoadedDataset::from_manifest(downstream_train, &model.preprocess(), model.device())?;
    let (_, transfer_plan) = build_phase_plans();
    let (mut model, histories) = execute_plan(
        model,
        &data,
        &transfer_plan,
        experiment_seed,
        checkpoint_dir,
    )?;
    let (winner, _) = select_checkpoint(&histories, CheckpointCriterion::MaxTrainAccuracy)?;
    // execute_plan left the model at the last run's best; fix up if an
    // earlier run won.
    if winner + 1 != histories.len() {
        model.restore(&histories[winner].best_checkpoint_path)?;
    }
    Ok((model, histories))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Config(format!("serializing {}: {e}", path.display())))?;
    text.push('\n');
    write_text(path, &text)
}

/// Builds the model, optionally runs self-supervision on the configured
/// fraction of the pretext set, transfers on the full downstream training
/// split, and evaluates once on the test split. Artifacts are persisted
/// under `<output_dir>/<experiment_id>/`; on failure an error.json record
/// is left there instead of a report.
pub fn run_experiment(config: &ExperimentConfig) -> Result<MetricsReport> {
    config.validate()?;
    let exp_dir = config.experiment_dir();
    let checkpoint_dir = exp_dir.join("checkpoints");
    let history_dir = exp_dir.join("histories");
    for dir in [&exp_dir, &checkpoint_dir, &history_dir] {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    match run_experiment_inner(config, &checkpoint_dir, &history_dir, &exp_dir) {
        Ok(report) => Ok(report),
        Err(err) => {
            let record = serde_json::json!({
                "experiment_id": config.experiment_id,
                "error": err.to_string(),
            });
            // Best effort: the original error matters more than this write.
            let _ = write_json(&exp_dir.join("error.json"), &record);
            Err(err)
        }
    }
}

fn run_experiment_inner(
    config: &ExperimentConfig,
    checkpoint_dir: &Path,
    history_dir: &Path,
    exp_dir: &Path,
) -> Result<MetricsReport> {
    let device = select_device()?;
    let downstream = DatasetManifest::read_from(&config.data_root.join(DOWNSTREAM_MANIFEST))?;
    let train = downstream.filter_split(Split::Train)?;
    let test = downstream.filter_split(Split::Test)?;
    if train.is_empty() || test.is_empty() {
        return Err(Error::EmptyDataset(
            "downstream manifest needs both train and test records".into(),
        ));
    }

    let mut model = build_model(
        config.backbone,
        config.head,
        config.seed,
        config.weights_dir.as_deref(),
        &device,
    )?;
    let initial_shapes = model.param_shapes();

    let mut ss_histories = Vec::new();
    let mut training_ids: BTreeSet<String> =
        train.image_ids().iter().map(|s| s.to_string()).collect();
    if config.ss_fraction > 0.0 {
        let pretext_path = config.data_root.join(PRETEXT_DIR).join(PRETEXT_MANIFEST);
        let pretext_full = DatasetManifest::read_from(&pretext_path)?;
        let ss_train =
            take_fraction(&pretext_full, config.ss_fraction)?.filter_split(Split::Train)?;
        training_ids.extend(ss_train.image_ids().iter().map(|s| s.to_string()));
        let (next, histories) =
            self_supervision_phase(model, &ss_train, config.seed, checkpoint_dir)?;
        model = next;
        ss_histories = histories;
        if model.param_shapes() != initial_shapes {
            return Err(Error::Model(
                "architecture changed during self-supervision".into(),
            ));
        }
    }

    for id in test.image_ids() {
        if training_ids.contains(id) {
            return Err(Error::Leakage(format!(
                "test image {id:?} appears in a training manifest"
            )));
        }
    }

    let (model, transfer_histories) = transfer_phase(model, &train, config.seed, checkpoint_dir)?;
    if model.param_shapes() != initial_shapes {
        return Err(Error::Model("architecture changed during transfer".into()));
    }
    save_checkpoint(&model, &checkpoint_dir.join("final.safetensors"))?;

    for (phase, histories) in [
        (PhaseKind::SelfSupervision, &ss_histories),
        (PhaseKind::Transfer, &transfer_histories),
    ] {
        for (i, history) in histories.iter().enumerate() {
            let path = history_dir.join(format!("{}_run{}.tsv", phase.as_str(), i));
            write_text(&path, &history.to_log())?;
        }
    }

    let eval = LoadedDataset::from_manifest(&test, &model.preprocess(), &device)?;
    let all: Vec<usize> = (0..eval.len()).collect();
    let mut scores = Vec::with_capacity(eval.len());
    for chunk in all.chunks(EVAL_BATCH) {
        let (images, _) = eval.batch(chunk)?;
        scores.extend(model.predict(&images)?);
    }
    let report = MetricsReport::from_scores(&config.experiment_id, &scores, eval.labels())?;

    let mut predictions = String::from("image_id,label,score\n");
    for ((id, &label), score) in eval.ids().iter().zip(eval.labels()).zip(&scores) {
        predictions.push_str(&format!("{id},{label},{score}\n"));
    }
    write_text(&exp_dir.join("predictions.csv"), &predictions)?;
    write_text(&exp_dir.join("report.csv"), &report.to_csv())?;
    write_json(
        &exp_dir.join("config.json"),
        &serde_json::json!({
            "experiment_id": config.experiment_id,
            "backbone": config.backbone.name.as_str(),
            "weights_init": config.backbone.weights_init.as_str(),
            "head_hidden_width": config.head.hidden_width,
            "ss_fraction": config.ss_fraction,
            "seed": config.seed,
            "data_root": config.data_root.display().to_string(),
        }),
    )?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub enum MatrixOutcome {
    /// Trained and evaluated in this invocation.
    Completed(MetricsReport),
    /// Persisted report found; experiment skipped.
    Resumed(MetricsReport),
    Failed {
        experiment_id: String,
        message: String,
    },
}

impl MatrixOutcome {
    pub fn report(&self) -> Option<&MetricsReport> {
        match self {
            MatrixOutcome::Completed(r) | MatrixOutcome::Resumed(r) => Some(r),
            MatrixOutcome::Failed { .. } => None,
        }
    }
}

/// Runs experiments sequentially in input order. Experiments whose report
/// already exists are skipped; failures are recorded and the matrix
/// continues. Writes results.txt and results.csv (completed rows, input
/// order) under the shared output directory.
pub fn run_matrix(configs: &[ExperimentConfig]) -> Result<Vec<MatrixOutcome>> {
    if configs.is_empty() {
        return Err(Error::Config("experiment matrix is empty".into()));
    }
    let mut ids = BTreeSet::new();
    for c in configs {
        c.validate()?;
        if !ids.insert(c.experiment_id.as_str()) {
            return Err(Error::Config(format!(
                "duplicate experiment id {:?}",
                c.experiment_id
            )));
        }
    }

    let mut outcomes = Vec::with_capacity(configs.len());
    for config in configs {
        let report_path = config.experiment_dir().join("report.csv");
        if report_path.exists() {
            match fs::read_to_string(&report_path)
                .map_err(|e| Error::io(&report_path, e))
                .and_then(|text| MetricsReport::from_csv(&text))
            {
                Ok(report) => {
                    log::info!("{}: already complete, skipping", config.experiment_id);
                    outcomes.push(MatrixOutcome::Resumed(report));
                    continue;
                }
                Err(err) => {
                    log::warn!(
                        "{}: unreadable report ({err}), re-running",
                        config.experiment_id
                    );
                }
            }
        }
        log::info!(
            "{}: backbone {} fraction {} seed {}",
            config.experiment_id,
            config.backbone.name.as_str(),
            config.ss_fraction,
            config.seed
        );
        match run_experiment(config) {
            Ok(report) => outcomes.push(MatrixOutcome::Completed(report)),
            Err(err) => {
                log::error!("{} failed: {err}", config.experiment_id);
                outcomes.push(MatrixOutcome::Failed {
                    experiment_id: config.experiment_id.clone(),
                    message: err.to_string(),
                });
            }
        }
    }

    let output_dir = &configs[0].output_dir;
    let reports: Vec<MetricsReport> = outcomes
        .iter()
        .filter_map(|o| o.report().cloned())
        .collect();
    let mut text = render_results_table(&reports, TableFormat::Text);
    for outcome in &outcomes {
        if let MatrixOutcome::Failed {
            experiment_id,
            message,
        } = outcome
        {
            text.push_str(&format!("# {experiment_id} FAILED: {message}\n"));
        }
    }
    write_text(&output_dir.join("results.txt"), &text)?;
    write_text(
        &output_dir.join("results.csv"),
        &render_results_table(&reports, TableFormat::Csv),
    )?;
    Ok(outcomes)
}
