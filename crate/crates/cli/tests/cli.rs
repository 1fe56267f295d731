use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use micrographia::dataset::DrawingKind;
use micrographia::synthetic::{synthetic_cohort, write_corpus};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_micrographia"))
}

fn run(args: &[&str]) -> Output {
    let out = bin().args(args).output().unwrap();
    assert!(
        out.status.success(),
        "micrographia {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn run_err(args: &[&str]) -> String {
    let out = bin().args(args).output().unwrap();
    assert!(!out.status.success(), "micrographia {args:?} unexpectedly succeeded");
    let stderr = String::from_utf8_lossy(&out.stderr).to_string();
    let last = stderr.lines().last().unwrap_or_default().to_string();
    assert!(last.starts_with("error: kind="), "no machine-parsable error line in:\n{stderr}");
    last
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// 6 + 6 seeded synthetic patients on disk with manifest, features and split.
struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
    manifest: PathBuf,
    features: PathBuf,
    split: PathBuf,
}

fn fixture() -> &'static Fixture {
    static FIXTURE: OnceLock<Fixture> = OnceLock::new();
    FIXTURE.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        let manifest = write_corpus(&synthetic_cohort(6, 6, 21).unwrap(), root.join("corpus")).unwrap();
        let features = root.join("features.csv");
        let split = root.join("split.csv");
        run(&["featurize", s(&manifest), "--out", s(&features)]);
        run(&["split", s(&features), "--seed", "3", "--fractions", "0.5,0,0.5", "--out", s(&split)]);
        Fixture { _dir: dir, root, manifest, features, split }
    })
}

#[test]
fn featurize_two_patients_gives_sixteen_rows_reproducibly() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_corpus(&synthetic_cohort(1, 1, 5).unwrap(), dir.path().join("corpus")).unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    run(&["featurize", s(&manifest), "--out", s(&a)]);
    run(&["featurize", s(&manifest), "--out", s(&b)]);
    let text = std::fs::read_to_string(&a).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 17);
    for line in &lines {
        assert_eq!(line.split(',').count(), 14, "{line}");
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let c = dir.path().join("c.csv");
    run(&["featurize", s(&manifest), "--out", s(&c), "--d", "3", "--centered-std"]);
    assert_ne!(std::fs::read(&a).unwrap(), std::fs::read(&c).unwrap());
}

#[test]
fn train_logreg_embeds_reference_cell_and_provenance() {
    let f = fixture();
    let out = f.root.join("lr-provenance.json");
    run(&[
        "train", s(&f.features), s(&f.split), "--model", "logreg", "--folds", "3", "--seed", "9",
        "--manifest", s(&f.manifest), "--out", s(&out),
    ]);
    let artifact: serde_json::Value = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    assert_eq!(artifact["classifier"]["kind"], "logreg");
    assert_eq!(artifact["classifier"]["c"], 0.1);
    assert_eq!(artifact["classifier"]["l1_ratio"], 0.75);
    assert_eq!(artifact["provenance"]["seed"], 9);
    let hash = micrographia::dataset::file_sha256(&f.manifest).unwrap();
    assert_eq!(artifact["provenance"]["manifest_hash"], hash.as_str());
    assert!(out.with_extension("cv.json").is_file());
}

#[test]
fn train_svm_grid_runs() {
    let f = fixture();
    let out = f.root.join("svm.json");
    run(&[
        "train", s(&f.features), s(&f.split), "--model", "svm", "--grid", "c=1,100;gamma=scale",
        "--folds", "3", "--out", s(&out),
    ]);
    let cv: serde_json::Value = serde_json::from_slice(&std::fs::read(out.with_extension("cv.json")).unwrap()).unwrap();
    assert_eq!(cv["cells"].as_array().unwrap().len(), 2);
}

#[test]
fn evaluate_matches_golden_report() {
    let f = fixture();
    let artifact = f.root.join("lr-golden.json");
    run(&["train", s(&f.features), s(&f.split), "--model", "logreg", "--folds", "0", "--seed", "3", "--out", s(&artifact)]);
    let out_dir = f.root.join("eval");
    let stdout = run(&[
        "evaluate", s(&artifact), s(&f.features), s(&f.split), "--patient-level", "--scheme", "c", "--seed", "3",
        "--out-dir", s(&out_dir),
    ])
    .stdout;
    let stdout = String::from_utf8(stdout).unwrap();
    assert!(stdout.contains("Logistic Regression (reference)"), "{stdout}");
    assert!(out_dir.join("roc.csv").is_file());
    assert!(out_dir.join("roc.png").is_file());

    let report = std::fs::read_to_string(out_dir.join("report.json")).unwrap();
    let golden_path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/report.json");
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&golden_path, &report).unwrap();
    }
    let golden = std::fs::read_to_string(&golden_path).expect("golden report missing; run with UPDATE_GOLDEN=1");
    assert_eq!(report, golden);
}

#[test]
fn evaluate_refuses_leaked_normalisation() {
    let f = fixture();
    let artifact = f.root.join("lr-leak.json");
    run(&["train", s(&f.features), s(&f.split), "--model", "logreg", "--folds", "0", "--out", s(&artifact)]);
    // Swap train and test.
    let text = std::fs::read_to_string(&f.split).unwrap();
    let swapped: String = text
        .lines()
        .map(|l| {
            if let Some(id) = l.strip_suffix(",train") {
                format!("{id},test\n")
            } else if let Some(id) = l.strip_suffix(",test") {
                format!("{id},train\n")
            } else {
                format!("{l}\n")
            }
        })
        .collect();
    let leaky = f.root.join("leaky-split.csv");
    std::fs::write(&leaky, swapped).unwrap();
    let line = run_err(&[
        "evaluate", s(&artifact), s(&f.features), s(&leaky), "--out-dir", s(&f.root.join("leak-eval")),
    ]);
    assert!(line.starts_with("error: kind=validation"), "{line}");
}

#[test]
fn predict_scores_an_exam() {
    let f = fixture();
    let artifact = f.root.join("lr-predict.json");
    run(&["train", s(&f.features), s(&f.split), "--model", "logreg", "--folds", "0", "--out", s(&artifact)]);
    let images = std::fs::read_dir(f.root.join("corpus/images")).unwrap();
    let mut paths: Vec<PathBuf> = images.map(|e| e.unwrap().path()).collect();
    paths.sort();
    let chosen: Vec<&str> = paths.iter().take(3).map(|p| s(p)).collect();
    let mut args = vec!["predict", s(&artifact)];
    args.extend(&chosen);
    args.extend(["--age", "66", "--gender", "female"]);
    let out: serde_json::Value = serde_json::from_slice(&run(&args).stdout).unwrap();
    assert_eq!(out["images"].as_array().unwrap().len(), 3);
    assert_eq!(out["low_confidence"], true);
    assert_eq!(out["threshold"], 0.62);
    assert!(out["verdict"] == "pd" || out["verdict"] == "healthy");
}

#[test]
fn template_and_extract_write_pngs() {
    let dir = tempfile::tempdir().unwrap();
    let template = dir.path().join("t/assessment.png");
    run(&["template", "--out", s(&template)]);
    let a = std::fs::read(&template).unwrap();
    run(&["template", "--out", s(&template)]);
    assert_eq!(a, std::fs::read(&template).unwrap());

    let manifest = write_corpus(&synthetic_cohort(1, 0, 2).unwrap(), dir.path().join("corpus")).unwrap();
    let out = dir.path().join("traces");
    run(&["extract", s(&manifest), "--out", s(&out)]);
    assert_eq!(std::fs::read_dir(&out).unwrap().count(), 24);
    assert!(out.join("hc000_spiral_1_blend.png").is_file());
}

#[test]
fn manifest_scan_reads_handpd_layout() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("HandPD");
    let cohort = synthetic_cohort(1, 1, 4).unwrap();
    for (p, folder, tag) in [(&cohort[0], "OldHandPD/Healthy", "H"), (&cohort[1], "NewHandPD/Patients", "P")] {
        let mut counts = [0; 2];
        for (kind, img) in &p.images {
            let slot = &mut counts[usize::from(*kind == DrawingKind::Meander)];
            *slot += 1;
            let prefix = if *kind == DrawingKind::Spiral { "sp" } else { "mea" };
            let sub = root.join(folder);
            std::fs::create_dir_all(&sub).unwrap();
            img.save_png(sub.join(format!("{prefix}{slot}-{tag}1.png"))).unwrap();
        }
    }
    let demo = dir.path().join("demo.csv");
    std::fs::write(&demo, "patient_id,age,gender,handedness\nold-h1,61,female,right\nnew-p1,70,male,left\n").unwrap();
    run(&["manifest", "scan", s(&root), "--demographics", s(&demo)]);
    let records = micrographia::dataset::load_manifest(root.join("manifest.csv")).unwrap();
    assert_eq!(records.len(), 2);
    assert_eq!(records[0].patient_id, "old-h1");
    assert_eq!(records[1].cohort, micrographia::dataset::Cohort::NewHandpd);
    assert_eq!(records[1].handedness, micrographia::dataset::Handedness::Left);

    let elsewhere = dir.path().join("out/manifest.csv");
    run(&["manifest", "scan", s(&root), "--demographics", s(&demo), "--out", s(&elsewhere)]);
    assert_eq!(micrographia::dataset::load_manifest(&elsewhere).unwrap().len(), 2);

    std::fs::write(&demo, "patient_id,age,gender,handedness\nold-h1,61,female,right\n").unwrap();
    let line = run_err(&["manifest", "scan", s(&root), "--demographics", s(&demo)]);
    assert!(line.contains("new-p1"), "{line}");
}

#[test]
fn errors_are_machine_parsable() {
    let line = run_err(&["featurize", "/nonexistent/manifest.csv", "--out", "/tmp/x.csv"]);
    assert!(line.starts_with("error: kind=csv") || line.starts_with("error: kind=io"), "{line}");
    let line = run_err(&["train", "a", "b", "--model", "forest", "--out", "m.json"]);
    assert!(line.starts_with("error: kind=usage"), "{line}");
    let line = run_err(&["split", "x.csv", "--fractions", "0.5,0.5"]);
    assert!(line.starts_with("error: kind=usage"), "{line}");
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("model.json");
    std::fs::write(&bad, "{\"format\": \"micrographia-model\"").unwrap();
    let line = run_err(&["predict", s(&bad), s(&bad), "--age", "60", "--gender", "male"]);
    assert!(line.starts_with("error: kind=corrupt_artifact"), "{line}");
}
