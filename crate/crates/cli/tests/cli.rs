//! End-to-end tests for the `tss` binary: every command is exercised
//! through its public interface (argv in, exit code / stdout / files out).

use std::path::Path;
use std::process::{Command, Output};

use tss_core::dataset::{DatasetManifest, Orientation};

fn tss(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tss"))
        .args(args)
        .env_remove("TSS_DEVICE")
        .output()
        .expect("binary runs")
}

/// Run expecting success; returns stdout.
fn ok(args: &[&str]) -> String {
    let out = tss(args);
    assert!(
        out.status.success(),
        "tss {args:?} failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).expect("utf-8 stdout")
}

/// Run expecting failure with the given exit code; returns stderr.
fn fails(args: &[&str], code: i32) -> String {
    let out = tss(args);
    assert_eq!(
        out.status.code(),
        Some(code),
        "tss {args:?} exit code\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stderr).expect("utf-8 stderr")
}

fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

/// Generate the default toy corpus and prepared data root under `dir`.
fn gen_toy(dir: &Path) -> String {
    ok(&["gen-toy", "--out-dir", path_str(dir)])
}

#[test]
fn help_snapshots_match() {
    let cases: &[(&[&str], &str)] = &[
        (&["--help"], "help.txt"),
        (&["ingest", "--help"], "help_ingest.txt"),
        (&["build-pretext", "--help"], "help_build-pretext.txt"),
        (&["fraction", "--help"], "help_fraction.txt"),
        (&["train", "--help"], "help_train.txt"),
        (&["matrix", "--help"], "help_matrix.txt"),
        (&["evaluate", "--help"], "help_evaluate.txt"),
        (&["report", "--help"], "help_report.txt"),
        (&["gen-toy", "--help"], "help_gen-toy.txt"),
    ];
    for (args, snapshot) in cases {
        let path = Path::new(env!("CARGO_MANIFEST_DIR"))
            .join("tests/snapshots")
            .join(snapshot);
        let expected = std::fs::read_to_string(&path)
            .unwrap_or_else(|e| panic!("read {}: {e}", path.display()));
        assert_eq!(ok(args), expected, "help text drifted for {args:?}");
    }
}

#[test]
fn usage_errors_exit_2_with_one_line_message() {
    for args in [
        &["no-such-command"][..],
        &["ingest"][..],                           // missing required flags
        &["train", "--backbone", "tiny_test"][..], // missing fraction etc.
        &[
            "fraction",
            "--manifest",
            "m",
            "--fraction",
            "abc",
            "--out-manifest",
            "o",
        ][..],
    ] {
        let out = tss(args);
        assert_eq!(out.status.code(), Some(2), "args: {args:?}");
    }

    // Domain-level input errors share the exit code and print exactly one
    // stderr line with a stable prefix.
    let dir = tempfile::tempdir().unwrap();
    gen_toy(dir.path());
    let manifest = dir.path().join("pretext/pretext_full.manifest");
    let stderr = fails(
        &[
            "fraction",
            "--manifest",
            path_str(&manifest),
            "--fraction",
            "1.5",
            "--out-manifest",
            path_str(&dir.path().join("out.manifest")),
        ],
        2,
    );
    assert_eq!(stderr.lines().count(), 1, "stderr: {stderr}");
    assert!(stderr.starts_with("error: "), "stderr: {stderr}");
}

#[test]
fn unsupported_device_env_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    gen_toy(dir.path());
    let out = Command::new(env!("CARGO_BIN_EXE_tss"))
        .args([
            "train",
            "--backbone",
            "tiny_test",
            "--fraction",
            "0.0",
            "--data-root",
            path_str(dir.path()),
            "--output-dir",
            path_str(&dir.path().join("runs")),
        ])
        .env("TSS_DEVICE", "warp-drive")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("TSS_DEVICE"), "stderr: {stderr}");
}

#[test]
fn gen_toy_then_ingest_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = gen_toy(dir.path());
    assert!(stdout.contains("images=36"), "stdout: {stdout}");
    assert!(stdout.contains("pretext=72"), "stdout: {stdout}");

    let raw = dir.path().join("raw");
    let m1 = dir.path().join("a.manifest");
    let m2 = dir.path().join("b.manifest");
    let stdout = ok(&[
        "ingest",
        "--data-root",
        path_str(&raw),
        "--out-manifest",
        path_str(&m1),
    ]);
    assert!(stdout.starts_with("train=24 test=12\n"), "stdout: {stdout}");
    assert!(stdout.contains("train/covid=12"), "stdout: {stdout}");
    assert!(stdout.contains("test/non_covid=6"), "stdout: {stdout}");

    ok(&[
        "ingest",
        "--data-root",
        path_str(&raw),
        "--out-manifest",
        path_str(&m2),
    ]);
    assert_eq!(
        std::fs::read(&m1).unwrap(),
        std::fs::read(&m2).unwrap(),
        "re-ingesting the same tree must be byte-identical"
    );
}

#[test]
fn build_pretext_writes_nested_fraction_manifests() {
    let dir = tempfile::tempdir().unwrap();
    gen_toy(dir.path());
    let manifest = dir.path().join("downstream.manifest");
    let out = dir.path().join("px");
    ok(&[
        "build-pretext",
        "--manifest",
        path_str(&manifest),
        "--out-dir",
        path_str(&out),
    ]);

    let full = DatasetManifest::read_from(&out.join("pretext_full.manifest")).unwrap();
    assert_eq!(full.len(), 72);

    let mut previous: Vec<String> = Vec::new();
    for (name, expected) in [
        ("pretext_f0.25.manifest", 18),
        ("pretext_f0.50.manifest", 36),
        ("pretext_f0.75.manifest", 54),
        ("pretext_f1.00.manifest", 72),
    ] {
        let cut = DatasetManifest::read_from(&out.join(name)).unwrap();
        assert_eq!(cut.len(), expected, "{name}");
        let ids: Vec<String> = cut.image_ids().iter().map(|s| s.to_string()).collect();
        assert!(
            previous.iter().all(|id| ids.contains(id)),
            "{name} must contain every smaller cut"
        );
        previous = ids;
    }

    // The full build already materialized the images; the cuts reference them.
    assert!(out.join("original").is_dir());
    assert!(out.join("flipped").is_dir());

    let bad = tss(&[
        "build-pretext",
        "--manifest",
        path_str(&manifest),
        "--out-dir",
        path_str(&dir.path().join("px2")),
        "--fractions",
        "0.5,1.5",
    ]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn fraction_cuts_keep_orientation_pairs() {
    let dir = tempfile::tempdir().unwrap();
    gen_toy(dir.path());
    let full_path = dir.path().join("pretext/pretext_full.manifest");
    let cut_path = dir.path().join("half.manifest");
    let stdout = ok(&[
        "fraction",
        "--manifest",
        path_str(&full_path),
        "--fraction",
        "0.5",
        "--out-manifest",
        path_str(&cut_path),
    ]);
    assert!(stdout.contains("records=36"), "stdout: {stdout}");

    // An original and its flip share (split, order_index); cuts keep pairs.
    let cut = DatasetManifest::read_from(&cut_path).unwrap();
    let records = cut.pretext_records().unwrap();
    let key = |r: &tss_core::dataset::PretextRecord| (r.split, r.order_index);
    let originals: Vec<_> = records
        .iter()
        .filter(|r| r.orientation_label == Orientation::Original)
        .map(key)
        .collect();
    let flipped: Vec<_> = records
        .iter()
        .filter(|r| r.orientation_label == Orientation::Flipped)
        .map(key)
        .collect();
    assert_eq!(originals.len(), flipped.len());
    for k in &originals {
        assert!(flipped.contains(k), "original {k:?} lost its flipped twin");
    }
}

#[test]
fn train_evaluate_and_reports_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    gen_toy(dir.path());
    let data_root = dir.path().to_path_buf();
    let runs = dir.path().join("runs");

    // Single experiment through `train`.
    let stdout = ok(&[
        "train",
        "--backbone",
        "tiny_test",
        "--fraction",
        "0.25",
        "--seed",
        "1",
        "--data-root",
        path_str(&data_root),
        "--output-dir",
        path_str(&runs),
        "--head-width",
        "128",
        "--id",
        "cell",
    ]);
    assert!(stdout.contains("cell: accuracy="), "stdout: {stdout}");
    let exp_dir = runs.join("cell");
    for artifact in ["report.csv", "predictions.csv", "config.json"] {
        assert!(exp_dir.join(artifact).is_file(), "{artifact} missing");
    }
    assert!(exp_dir.join("checkpoints/final.safetensors").is_file());

    // Evaluation is deterministic: same checkpoint and manifest, same bytes.
    let checkpoint = exp_dir.join("checkpoints/final.safetensors");
    let manifest = data_root.join("downstream.manifest");
    let r1 = dir.path().join("eval1.csv");
    let r2 = dir.path().join("eval2.csv");
    for report in [&r1, &r2] {
        let stdout = ok(&[
            "evaluate",
            "--checkpoint",
            path_str(&checkpoint),
            "--manifest",
            path_str(&manifest),
            "--out-report",
            path_str(report),
        ]);
        assert!(stdout.contains("n_test=12"), "stdout: {stdout}");
    }
    assert_eq!(std::fs::read(&r1).unwrap(), std::fs::read(&r2).unwrap());

    // A non-checkpoint file is an input error, not a crash.
    let fake = dir.path().join("fake.safetensors");
    std::fs::write(&fake, b"not a checkpoint").unwrap();
    fails(
        &[
            "evaluate",
            "--checkpoint",
            path_str(&fake),
            "--manifest",
            path_str(&manifest),
            "--out-report",
            path_str(&dir.path().join("bad.csv")),
        ],
        2,
    );
}

#[test]
fn matrix_resume_and_report_agree() {
    let dir = tempfile::tempdir().unwrap();
    gen_toy(dir.path());
    let config = dir.path().join("matrix.toml");
    std::fs::write(
        &config,
        "data_root = \".\"\noutput_dir = \"mruns\"\n\n\
         [[experiment]]\nid = \"a_f0\"\nbackbone = \"tiny_test\"\nfraction = 0.0\nseed = 1\nhead_width = 128\n\n\
         [[experiment]]\nid = \"b_f025\"\nbackbone = \"tiny_test\"\nfraction = 0.25\nseed = 1\nhead_width = 128\n",
    )
    .unwrap();

    let stdout = ok(&["matrix", "--config", path_str(&config)]);
    assert_eq!(stdout.matches("completed ").count(), 2, "stdout: {stdout}");
    let results = dir.path().join("mruns/results.csv");
    let first = std::fs::read(&results).unwrap();

    let stdout = ok(&["matrix", "--config", path_str(&config), "--resume"]);
    assert_eq!(stdout.matches("resumed ").count(), 2, "stdout: {stdout}");
    assert_eq!(
        std::fs::read(&results).unwrap(),
        first,
        "resume must not change results"
    );

    // Report: rows sorted by experiment id, both formats, plot written.
    let mruns = dir.path().join("mruns");
    let text = ok(&["report", "--reports-dir", path_str(&mruns)]);
    let a = text.find("a_f0").expect("row a");
    let b = text.find("b_f025").expect("row b");
    assert!(a < b, "rows must be sorted by id:\n{text}");

    let csv = ok(&[
        "report",
        "--reports-dir",
        path_str(&mruns),
        "--format",
        "csv",
    ]);
    assert!(
        csv.starts_with("experiment,accuracy,ci_halfwidth,auc,f1\n"),
        "csv: {csv}"
    );

    let plot = dir.path().join("acc.svg");
    ok(&[
        "report",
        "--reports-dir",
        path_str(&mruns),
        "--plot",
        path_str(&plot),
    ]);
    let svg = std::fs::read_to_string(&plot).unwrap();
    assert!(svg.starts_with("<svg"), "plot is not svg");
    assert!(svg.contains("tiny_test"), "series legend missing");

    // Unknown format is an input error; empty and missing dirs behave as
    // header-only success and input error respectively.
    fails(
        &[
            "report",
            "--reports-dir",
            path_str(&mruns),
            "--format",
            "yaml",
        ],
        2,
    );
    let empty = dir.path().join("empty");
    std::fs::create_dir(&empty).unwrap();
    let text = ok(&["report", "--reports-dir", path_str(&empty)]);
    assert_eq!(text.lines().count(), 1, "header only: {text}");
    fails(
        &[
            "report",
            "--reports-dir",
            path_str(&dir.path().join("nope")),
        ],
        2,
    );
}
