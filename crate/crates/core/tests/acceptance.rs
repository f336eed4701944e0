//! Acceptance gate: one test per shipped guarantee, each printing a
//! PASS line with its runtime. Budgets are asserted, not just documented.
//!
//! 1. Wald halfwidth reproduction on the published result rows (< 1 s)
//! 2. Metric oracles on 1,000 random instances (< 30 s)
//! 3. Dataset properties over randomized synthetic corpora (< 1 min)
//! 4. Trainer contracts on tiny_test (< 2 min)
//! 5. Toy end-to-end: pretext learnability + 4-cell matrix (< 10 min)
//! 6. Phase-plan fidelity snapshot
//!
//! The full-scale 10-experiment matrix is exercised by
//! scripts/run_full_matrix.sh against the real dataset, not here.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::Rng;

use tss_core::dataset::{
    build_pretext_dataset, horizontal_flip, ingest_layout, take_fraction, Split, STANDARD_FRACTIONS,
};
use tss_core::metrics::{
    accuracy, auc_roc, binarize, confusion_counts, f1_score, wald_ci_halfwidth,
};
use tss_core::model::checkpoint::load_checkpoint;
use tss_core::model::preprocess::LoadedDataset;
use tss_core::model::TrainableScope;
use tss_core::model::{
    build_model, BackboneName, BackboneSpec, DigestScope, HeadSpec, WeightsInit,
};
use tss_core::pipeline::{
    build_phase_plans, prepare_data_root, run_matrix, self_supervision_phase, ExperimentConfig,
    MatrixOutcome, PhaseKind,
};
use tss_core::rng::seeded_rng;
use tss_core::synth::{generate_toy_corpus, ToyCorpusSpec};
use tss_core::trainer::{run_training, CheckpointCriterion, OptimizerKind, TrainingRunConfig};

/// Published result rows: (accuracy, CI halfwidth) at n = 203.
const RESULT_ROWS: [(f64, f64); 10] = [
    (0.7882, 0.0562),
    (0.8276, 0.0520),
    (0.8621, 0.0474),
    (0.8423, 0.0501),
    (0.8473, 0.0494),
    (0.7882, 0.0562),
    (0.8227, 0.0525),
    (0.8424, 0.0501),
    (0.8276, 0.0520),
    (0.8621, 0.0474),
];
const N_TEST: usize = 203;

fn finish(criterion: &str, started: Instant, budget: Duration) {
    let elapsed = started.elapsed();
    assert!(
        elapsed < budget,
        "{criterion} exceeded its {budget:?} budget: {elapsed:?}"
    );
    println!("{criterion}: PASS ({elapsed:.2?})");
}

#[test]
fn criterion_1_wald_reproduction() {
    let started = Instant::now();
    for (i, &(acc, printed)) in RESULT_ROWS.iter().enumerate() {
        let computed = wald_ci_halfwidth(acc, N_TEST);
        assert!(
            (computed - printed).abs() < 2e-4,
            "row {}: computed {computed:.5}, printed {printed}",
            i + 1
        );
    }
    finish(
        "criterion 1 (wald reproduction)",
        started,
        Duration::from_secs(1),
    );
}

/// Brute-force AUC: fraction of (positive, negative) pairs correctly
/// ordered, ties counting one half.
fn auc_pair_oracle(scores: &[f64], labels: &[u8]) -> f64 {
    let (mut pairs, mut credit) = (0u64, 0.0f64);
    for (sp, _) in scores.iter().zip(labels).filter(|(_, &l)| l == 1) {
        for (sn, _) in scores.iter().zip(labels).filter(|(_, &l)| l == 0) {
            pairs += 1;
            if sp > sn {
                credit += 1.0;
            } else if sp == sn {
                credit += 0.5;
            }
        }
    }
    credit / pairs as f64
}

#[test]
fn criterion_2_metric_oracles() {
    let started = Instant::now();
    let mut rng = seeded_rng(0x6f7261636c65); // "oracle"
    for case in 0..1000 {
        let n = rng.random_range(2..=50);
        // Coarse score grid so ties actually occur.
        let scores: Vec<f64> = (0..n)
            .map(|_| f64::from(rng.random_range(0..=20)) / 20.0)
            .collect();
        let mut labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..=1)).collect();
        if labels.iter().all(|&l| l == labels[0]) {
            labels[0] ^= 1; // AUC needs both classes
        }

        let auc = auc_roc(&scores, &labels).unwrap();
        let oracle = auc_pair_oracle(&scores, &labels);
        assert_eq!(auc, oracle, "case {case}: AUC mismatch");

        let predictions = binarize(&scores, 0.5);
        let c = confusion_counts(&predictions, &labels).unwrap();
        let matches = predictions
            .iter()
            .zip(&labels)
            .filter(|(p, l)| p == l)
            .count();
        assert_eq!(
            accuracy(&predictions, &labels).unwrap(),
            matches as f64 / n as f64,
            "case {case}: accuracy mismatch"
        );
        let denom = 2 * c.tp + c.fp + c.fn_;
        let expected_f1 = if denom == 0 {
            0.0
        } else {
            2.0 * c.tp as f64 / denom as f64
        };
        assert_eq!(
            f1_score(&predictions, &labels).unwrap(),
            expected_f1,
            "case {case}: F1 mismatch"
        );
    }
    finish(
        "criterion 2 (metric oracles)",
        started,
        Duration::from_secs(30),
    );
}

/// Random grayscale corpus in the train/test x covid/non_covid layout;
/// returns the root. Sizes are small so the whole property suite stays
/// fast.
fn random_corpus(dir: &Path, rng: &mut impl Rng) -> PathBuf {
    let root = dir.to_path_buf();
    for split in ["train", "test"] {
        for class in ["covid", "non_covid"] {
            let sub = root.join(split).join(class);
            std::fs::create_dir_all(&sub).unwrap();
            let count = rng.random_range(1..=6);
            for i in 0..count {
                let (w, h) = (rng.random_range(4..=16), rng.random_range(4..=16));
                let img = image::GrayImage::from_fn(w, h, |_, _| {
                    image::Luma([rng.random_range(0..=255u8)])
                });
                img.save(sub.join(format!("{split}_{class}_{i}.png")))
                    .unwrap();
            }
        }
    }
    root
}

#[test]
fn criterion_3_dataset_properties() {
    let started = Instant::now();
    let mut rng = seeded_rng(0x64617461); // "data"

    // Involution, exact and in-memory, over random pixel arrays.
    for _ in 0..200 {
        let (w, h) = (rng.random_range(1..=24), rng.random_range(1..=24));
        let img = image::DynamicImage::ImageLuma8(image::GrayImage::from_fn(w, h, |_, _| {
            image::Luma([rng.random_range(0..=255u8)])
        }));
        let flipped = horizontal_flip(&img);
        assert_eq!(horizontal_flip(&flipped).as_bytes(), img.as_bytes());
    }
    // Symmetric fixed point: a single-column image.
    let column = image::DynamicImage::ImageLuma8(image::GrayImage::from_fn(1, 5, |_, y| {
        image::Luma([y as u8 * 40])
    }));
    assert_eq!(horizontal_flip(&column).as_bytes(), column.as_bytes());

    for round in 0..8 {
        let dir = tempfile::tempdir().unwrap();
        let corpus = random_corpus(dir.path(), &mut rng);
        let downstream = ingest_layout(&corpus).unwrap();
        let downstream_again = ingest_layout(&corpus).unwrap();
        assert_eq!(
            downstream.content_digest(),
            downstream_again.content_digest(),
            "round {round}: ingest must be digest-stable"
        );

        let out_a = dir.path().join("pretext_a");
        let out_b = dir.path().join("pretext_b");
        let pretext = build_pretext_dataset(&downstream, &out_a).unwrap();
        let pretext_again = build_pretext_dataset(&downstream, &out_b).unwrap();
        assert_eq!(
            pretext.content_digest(),
            pretext_again.content_digest(),
            "round {round}: pretext build must be digest-stable"
        );
        assert_eq!(pretext.len(), 2 * downstream.len());

        // Orientation parity per split.
        for split in [Split::Train, Split::Test] {
            let counts = pretext.filter_split(split).unwrap().counts();
            let original = counts
                .get(&(split, "original".into()))
                .copied()
                .unwrap_or(0);
            let flipped = counts.get(&(split, "flipped".into())).copied().unwrap_or(0);
            assert_eq!(original, flipped, "round {round}: parity broken in {split}");
        }

        // Fraction nesting over every ordered pair of the standard grid.
        let fractions: Vec<_> = STANDARD_FRACTIONS
            .iter()
            .map(|&f| {
                let m = take_fraction(&pretext, f).unwrap();
                let ids: BTreeSet<String> = m.image_ids().iter().map(|s| s.to_string()).collect();
                (f, m, ids)
            })
            .collect();
        for (f1, m1, ids1) in &fractions {
            for (f2, _, ids2) in &fractions {
                if f1 < f2 {
                    assert!(
                        ids1.is_subset(ids2),
                        "round {round}: fraction {f1} not nested in {f2}"
                    );
                }
            }
            let replay = take_fraction(&pretext, *f1).unwrap();
            assert_eq!(
                m1.content_digest(),
                replay.content_digest(),
                "round {round}: take_fraction({f1}) must be deterministic"
            );
        }

        // Split isolation: no test-split id in any training manifest.
        let test_ids: BTreeSet<String> = downstream
            .filter_split(Split::Test)
            .unwrap()
            .image_ids()
            .iter()
            .map(|s| s.to_string())
            .chain(
                pretext
                    .filter_split(Split::Test)
                    .unwrap()
                    .image_ids()
                    .iter()
                    .map(|s| s.to_string()),
            )
            .collect();
        let mut train_ids: BTreeSet<String> = downstream
            .filter_split(Split::Train)
            .unwrap()
            .image_ids()
            .iter()
            .map(|s| s.to_string())
            .collect();
        for (_, m, _) in &fractions {
            train_ids.extend(
                m.filter_split(Split::Train)
                    .unwrap()
                    .image_ids()
                    .iter()
                    .map(|s| s.to_string()),
            );
        }
        assert!(
            test_ids.is_disjoint(&train_ids),
            "round {round}: test ids leaked into training manifests"
        );
    }
    finish(
        "criterion 3 (dataset properties)",
        started,
        Duration::from_secs(60),
    );
}

fn toy_train_dataset(dir: &Path, device: &candle_core::Device) -> LoadedDataset {
    let spec = ToyCorpusSpec {
        per_class_train: 8,
        per_class_test: 2,
        size: 64,
        seed: 29,
    };
    generate_toy_corpus(dir, &spec).unwrap();
    let manifest = ingest_layout(dir)
        .unwrap()
        .filter_split(Split::Train)
        .unwrap();
    let backbone = BackboneSpec::new(BackboneName::TinyTest, WeightsInit::Random).unwrap();
    LoadedDataset::from_manifest(&manifest, &backbone.preprocess(), device).unwrap()
}

#[test]
fn criterion_4_trainer_contracts() {
    let started = Instant::now();
    let device = candle_core::Device::Cpu;
    let dir = tempfile::tempdir().unwrap();
    let data = toy_train_dataset(dir.path(), &device);

    let tiny = || {
        build_model(
            BackboneSpec::new(BackboneName::TinyTest, WeightsInit::Random).unwrap(),
            HeadSpec { hidden_width: 32 },
            77,
            None,
            &device,
        )
        .unwrap()
    };
    let config = |scope, criterion| TrainingRunConfig {
        optimizer: OptimizerKind::Rmsprop,
        learning_rate: 1e-3,
        epochs: 5,
        batch_size: 4,
        trainable_scope: scope,
        checkpoint_criterion: criterion,
        seed: 3,
    };

    // head_only leaves the backbone bitwise unchanged.
    let model = tiny();
    let backbone_digest = model.parameter_digest(DigestScope::Backbone).unwrap();
    let ck = dir.path().join("head_only.safetensors");
    let (model, _) = run_training(
        model,
        &data,
        &config(TrainableScope::HeadOnly, CheckpointCriterion::MinTrainLoss),
        &ck,
    )
    .unwrap();
    assert_eq!(
        model.parameter_digest(DigestScope::Backbone).unwrap(),
        backbone_digest,
        "head_only run must not touch backbone bytes"
    );

    // Returned model equals the criterion-optimal checkpoint replayed
    // against its RunHistory, for both criteria.
    for criterion in [
        CheckpointCriterion::MinTrainLoss,
        CheckpointCriterion::MaxTrainAccuracy,
    ] {
        let ck = dir.path().join(format!("replay_{criterion}.safetensors"));
        let (model, history) = run_training(
            tiny(),
            &data,
            &config(TrainableScope::FullNetwork, criterion),
            &ck,
        )
        .unwrap();
        let best_by_replay = history
            .entries
            .iter()
            .fold(None::<(usize, f64)>, |best, e| {
                let v = criterion.value_of(e);
                match best {
                    Some((_, incumbent)) if !criterion.improves(v, incumbent) => best,
                    _ => Some((e.epoch, v)),
                }
            })
            .unwrap()
            .0;
        assert_eq!(
            history.best_epoch, best_by_replay,
            "{criterion}: best epoch"
        );
        let saved = load_checkpoint(&ck, &device).unwrap();
        assert_eq!(
            model.parameter_digest(DigestScope::All).unwrap(),
            saved.parameter_digest(DigestScope::All).unwrap(),
            "{criterion}: returned model must be the saved best checkpoint"
        );
    }

    // Seeded CPU runs are bit-reproducible.
    let cfg = config(
        TrainableScope::FullNetwork,
        CheckpointCriterion::MinTrainLoss,
    );
    let (m1, h1) = run_training(tiny(), &data, &cfg, &dir.path().join("r1.safetensors")).unwrap();
    let (m2, h2) = run_training(tiny(), &data, &cfg, &dir.path().join("r2.safetensors")).unwrap();
    assert_eq!(h1.entries, h2.entries, "histories must match bitwise");
    assert_eq!(
        m1.parameter_digest(DigestScope::All).unwrap(),
        m2.parameter_digest(DigestScope::All).unwrap(),
        "weights must match bitwise"
    );

    finish(
        "criterion 4 (trainer contracts)",
        started,
        Duration::from_secs(120),
    );
}

#[test]
fn criterion_5_toy_end_to_end() {
    let started = Instant::now();
    let dir = tempfile::tempdir().unwrap();

    // Prepare one shared toy data root.
    let raw = dir.path().join("raw");
    let spec = ToyCorpusSpec {
        per_class_train: 12,
        per_class_test: 6,
        size: 64,
        seed: 7,
    };
    generate_toy_corpus(&raw, &spec).unwrap();
    let downstream = ingest_layout(&raw).unwrap();
    let data_root = dir.path().join("prepared");
    let pretext = prepare_data_root(&downstream, &data_root).unwrap();

    // Self-supervision on the synthetic left/right-asymmetric corpus must
    // reach 95% flip-detection training accuracy.
    let device = candle_core::Device::Cpu;
    let model = build_model(
        BackboneSpec::new(BackboneName::TinyTest, WeightsInit::Random).unwrap(),
        HeadSpec { hidden_width: 128 },
        1,
        None,
        &device,
    )
    .unwrap();
    let ss_train = pretext.filter_split(Split::Train).unwrap();
    let ckpt_dir = dir.path().join("ss_ckpts");
    std::fs::create_dir_all(&ckpt_dir).unwrap();
    let (_, histories) = self_supervision_phase(model, &ss_train, 1, &ckpt_dir).unwrap();
    assert_eq!(histories.len(), 3);
    let best_accuracy = histories
        .iter()
        .flat_map(|h| h.entries.iter())
        .map(|e| e.accuracy)
        .fold(0.0, f64::max);
    assert!(
        best_accuracy >= 0.95,
        "pretext training accuracy {best_accuracy:.4} below 0.95"
    );

    // 4-cell matrix: {tiny_test} x {0.0, 1.0} x 2 seeds.
    let out = dir.path().join("runs");
    let mut configs = Vec::new();
    for &fraction in &[0.0, 1.0] {
        for &seed in &[1u64, 2] {
            configs.push(ExperimentConfig {
                experiment_id: format!("tiny_f{fraction:.2}_s{seed}"),
                backbone: BackboneSpec::new(BackboneName::TinyTest, WeightsInit::Random).unwrap(),
                head: HeadSpec { hidden_width: 128 },
                ss_fraction: fraction,
                seed,
                data_root: data_root.clone(),
                output_dir: out.clone(),
                weights_dir: None,
            });
        }
    }
    let outcomes = run_matrix(&configs).unwrap();
    assert!(
        outcomes
            .iter()
            .all(|o| matches!(o, MatrixOutcome::Completed(_))),
        "all 4 toy cells must complete: {outcomes:?}"
    );
    for outcome in &outcomes {
        let report = outcome.report().unwrap();
        assert_eq!(report.n_test, 12);
        for v in [report.accuracy, report.auc, report.f1] {
            assert!((0.0..=1.0).contains(&v));
        }
    }

    // Well-formed results table: header + one row per cell, in input order.
    let table = std::fs::read_to_string(out.join("results.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 1 + configs.len());
    assert_eq!(lines[0], "experiment,accuracy,ci_halfwidth,auc,f1");
    for (line, config) in lines[1..].iter().zip(&configs) {
        assert!(
            line.starts_with(&format!("{},", config.experiment_id)),
            "row order must follow input order"
        );
    }

    finish(
        "criterion 5 (toy end-to-end)",
        started,
        Duration::from_secs(600),
    );
}

#[test]
fn criterion_6_phase_plan_fidelity() {
    let started = Instant::now();
    let (ss, transfer) = build_phase_plans();

    assert_eq!(ss.phase, PhaseKind::SelfSupervision);
    assert_eq!(ss.runs.len(), 3, "self-supervision is three runs");
    assert_eq!(transfer.phase, PhaseKind::Transfer);
    assert_eq!(transfer.runs.len(), 2, "transfer is two runs");

    let expect = |run: &TrainingRunConfig,
                  optimizer: OptimizerKind,
                  lr: f64,
                  scope: TrainableScope,
                  criterion: CheckpointCriterion| {
        assert_eq!(run.optimizer, optimizer);
        assert_eq!(run.learning_rate, lr);
        assert_eq!(run.epochs, 30);
        assert_eq!(run.batch_size, 4);
        assert_eq!(run.trainable_scope, scope);
        assert_eq!(run.checkpoint_criterion, criterion);
    };
    use CheckpointCriterion::{MaxTrainAccuracy, MinTrainLoss};
    use OptimizerKind::{Rmsprop, Sgd};
    use TrainableScope::{FullNetwork, HeadOnly};

    expect(&ss.runs[0], Rmsprop, 1e-4, HeadOnly, MinTrainLoss);
    expect(&ss.runs[1], Sgd, 1e-5, FullNetwork, MinTrainLoss);
    expect(&ss.runs[2], Sgd, 1e-6, FullNetwork, MinTrainLoss);
    expect(&transfer.runs[0], Rmsprop, 1e-4, HeadOnly, MaxTrainAccuracy);
    expect(&transfer.runs[1], Sgd, 1e-5, FullNetwork, MaxTrainAccuracy);

    finish(
        "criterion 6 (phase-plan fidelity)",
        started,
        Duration::from_secs(5),
    );
}
