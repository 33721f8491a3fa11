//! End-to-end checks of the `detkit` binary: determinism of artifacts,
//! exit-code conventions, prediction injection and report merging.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use detkit::dataset::load_dataset;
use detkit::eval::ScoredBox;
use detkit::pipeline::detection_gts;

fn detkit() -> Command {
    Command::new(env!("CARGO_BIN_EXE_detkit"))
}

fn run(args: &[&str]) -> Output {
    detkit().args(args).output().expect("spawn detkit")
}

fn assert_success(out: &Output, what: &str) {
    assert!(
        out.status.success(),
        "{what} failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("read {}: {e}", path.display()))
}

fn generate(dir: &Path, seed: u64) {
    let out = run(&[
        "generate",
        "--out",
        dir.to_str().unwrap(),
        "--train-scenes",
        "10",
        "--val-scenes",
        "6",
        "--seed",
        &seed.to_string(),
    ]);
    assert_success(&out, "generate");
}

fn train_small(data: &Path, ckpt: &Path, iterations: usize, extra: &[&str]) {
    let mut args = vec![
        "train".to_string(),
        "--data".into(),
        data.join("train").to_str().unwrap().into(),
        "--preset".into(),
        "detection".into(),
        "--out".into(),
        ckpt.to_str().unwrap().into(),
        "--iterations".into(),
        iterations.to_string(),
        "--batch-size".into(),
        "8".into(),
        "--seed".into(),
        "3".into(),
    ];
    args.extend(extra.iter().map(|s| s.to_string()));
    let out = detkit().args(&args).output().expect("spawn detkit");
    assert_success(&out, "train");
}

struct Workspace {
    _tmp: tempfile::TempDir,
    root: PathBuf,
}

fn workspace() -> Workspace {
    let tmp = tempfile::tempdir().expect("tempdir");
    let root = tmp.path().to_path_buf();
    Workspace { _tmp: tmp, root }
}

#[test]
fn generate_train_evaluate_rerun_byte_identical() {
    let ws = workspace();
    let (a, b) = (ws.root.join("a"), ws.root.join("b"));
    generate(&a, 5);
    generate(&b, 5);
    for file in ["manifest.json", "scenes.jsonl", "tensors.bin"] {
        for split in ["train", "val"] {
            assert_eq!(
                read(&a.join(split).join(file)),
                read(&b.join(split).join(file)),
                "{split}/{file} differs between identical generate runs"
            );
        }
    }

    let (ck_a, ck_b) = (ws.root.join("a.dkcp"), ws.root.join("b.dkcp"));
    train_small(&a, &ck_a, 40, &[]);
    train_small(&a, &ck_b, 40, &[]);
    assert_eq!(
        read(&ck_a),
        read(&ck_b),
        "checkpoints differ between identical train runs"
    );

    let (rep_a, rep_b) = (ws.root.join("a.json"), ws.root.join("b.json"));
    for rep in [&rep_a, &rep_b] {
        let out = run(&[
            "evaluate",
            "--model",
            ck_a.to_str().unwrap(),
            "--data",
            a.join("val").to_str().unwrap(),
            "--task",
            "detection",
            "--report",
            rep.to_str().unwrap(),
        ]);
        assert_success(&out, "evaluate");
    }
    assert_eq!(
        read(&rep_a),
        read(&rep_b),
        "reports differ between identical evaluate runs"
    );
}

#[test]
fn seed_changes_generated_artifacts() {
    let ws = workspace();
    let (a, b) = (ws.root.join("a"), ws.root.join("b"));
    generate(&a, 5);
    generate(&b, 6);
    assert_ne!(
        read(&a.join("train").join("tensors.bin")),
        read(&b.join("train").join("tensors.bin")),
        "different seeds should change the rendered tensors"
    );
}

#[test]
fn exit_codes_follow_the_convention() {
    // Help is a successful exit.
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["train", "--help"]).status.code(), Some(0));

    let ws = workspace();
    let data = ws.root.join("d");
    generate(&data, 1);

    // Configuration errors exit with 1.
    let bad_preset = run(&[
        "train",
        "--data",
        data.join("train").to_str().unwrap(),
        "--preset",
        "bogus",
        "--out",
        ws.root.join("x.dkcp").to_str().unwrap(),
    ]);
    assert_eq!(bad_preset.status.code(), Some(1), "unknown preset should exit 1");

    let ckpt = ws.root.join("c.dkcp");
    train_small(&data, &ckpt, 0, &[]);
    let missing_train_data = run(&[
        "evaluate",
        "--model",
        ckpt.to_str().unwrap(),
        "--data",
        data.join("val").to_str().unwrap(),
        "--task",
        "apk",
    ]);
    assert_eq!(
        missing_train_data.status.code(),
        Some(1),
        "APK without --train-data should exit 1"
    );

    // Runtime errors (missing files, corrupt inputs) exit with 2.
    let missing_model = run(&[
        "evaluate",
        "--model",
        ws.root.join("nope.dkcp").to_str().unwrap(),
        "--data",
        data.join("val").to_str().unwrap(),
        "--task",
        "detection",
    ]);
    assert_eq!(missing_model.status.code(), Some(2), "missing model should exit 2");
}

#[test]
fn injected_perfect_predictions_reach_full_ap() {
    let ws = workspace();
    let data = ws.root.join("d");
    generate(&data, 2);
    let ckpt = ws.root.join("c.dkcp");
    train_small(&data, &ckpt, 0, &[]);

    let (scenes, _) = load_dataset(&data.join("val")).unwrap();
    let mut preds = Vec::new();
    for (image_id, boxes) in detection_gts(&scenes) {
        for bbox in boxes {
            preds.push(ScoredBox {
                image_id,
                score: 1.0,
                bbox,
            });
        }
    }
    let pred_path = ws.root.join("preds.json");
    std::fs::write(&pred_path, serde_json::to_string(&preds).unwrap()).unwrap();

    let report_path = ws.root.join("r.json");
    let out = run(&[
        "evaluate",
        "--model",
        ckpt.to_str().unwrap(),
        "--data",
        data.join("val").to_str().unwrap(),
        "--task",
        "detection",
        "--predictions-file",
        pred_path.to_str().unwrap(),
        "--report",
        report_path.to_str().unwrap(),
    ]);
    assert_success(&out, "evaluate with injected predictions");
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
    assert_eq!(report["mean_ap"].as_f64().unwrap(), 1.0);
}

#[test]
fn init_from_with_zero_iterations_copies_parameters() {
    let ws = workspace();
    let data = ws.root.join("d");
    generate(&data, 3);
    let first = ws.root.join("first.dkcp");
    train_small(&data, &first, 40, &[]);
    let copy = ws.root.join("copy.dkcp");
    train_small(&data, &copy, 0, &["--init-from", first.to_str().unwrap()]);
    assert_eq!(
        read(&first),
        read(&copy),
        "zero-iteration resume should reproduce the checkpoint byte for byte"
    );
}

#[test]
fn report_merge_requires_matching_datasets() {
    let ws = workspace();
    let (a, b) = (ws.root.join("a"), ws.root.join("b"));
    generate(&a, 7);
    generate(&b, 8);
    let ckpt = ws.root.join("c.dkcp");
    train_small(&a, &ckpt, 0, &[]);

    let mut reports = Vec::new();
    for (i, data) in [&a, &b].into_iter().enumerate() {
        let rep = ws.root.join(format!("r{i}.json"));
        let out = run(&[
            "evaluate",
            "--model",
            ckpt.to_str().unwrap(),
            "--data",
            data.join("val").to_str().unwrap(),
            "--task",
            "detection",
            "--label",
            &format!("run{i}"),
            "--report",
            rep.to_str().unwrap(),
        ]);
        assert_success(&out, "evaluate for report");
        reports.push(rep);
    }

    // Same dataset twice merges fine.
    let same = run(&[
        "report",
        reports[0].to_str().unwrap(),
        reports[0].to_str().unwrap(),
    ]);
    assert_eq!(same.status.code(), Some(0));

    // Mixing datasets is a runtime refusal.
    let mixed = run(&[
        "report",
        reports[0].to_str().unwrap(),
        reports[1].to_str().unwrap(),
    ]);
    assert_eq!(mixed.status.code(), Some(2), "mixed-dataset merge should exit 2");
    assert!(
        String::from_utf8_lossy(&mixed.stderr).contains("mismatch"),
        "stderr should explain the dataset mismatch"
    );
}
