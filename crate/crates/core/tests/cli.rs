use std::path::Path;
use std::process::{Command, Output};

fn recourse(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_recourse"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn ok(args: &[&str], out: &Path) -> Output {
    let o = recourse(args, out);
    assert_eq!(code(&o), 0, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    o
}

const SMALL: &[&str] = &["--dataset", "loan", "--counts", "300,300,40", "--seed", "3"];

fn with<'a>(extra: &[&'a str]) -> Vec<&'a str> {
    let mut v: Vec<&str> = SMALL.to_vec();
    v.extend_from_slice(extra);
    v
}

/// Generates data and an AE detector in `out`.
fn prepared(out: &Path) {
    ok(&with(&["generate"]), out);
    ok(&with(&["train-detector", "--detector", "ae", "--detector-epochs", "5", "--tau-level", "0.9"]), out);
}

fn read_dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn generate_is_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    ok(&["generate", "--dataset", "loan", "--seed", "7", "--counts", "200,200,20"], a.path());
    ok(&["generate", "--dataset", "loan", "--seed", "7", "--counts", "200,200,20"], b.path());
    let fa = read_dir_bytes(&a.path().join("data"));
    assert_eq!(fa.len(), 7);
    assert_eq!(fa, read_dir_bytes(&b.path().join("data")));
}

#[test]
fn cyclic_custom_scm_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let scm = dir.path().join("cyclic.json");
    let noise = r#"{"dist": "normal", "mean": 0.0, "std": 1.0}"#;
    std::fs::write(
        &scm,
        format!(
            r#"{{"nodes": [
                {{"name": "X", "terms": [{{"type": "linear", "weights": {{"Y": 1.0}}}}], "noise": {noise}}},
                {{"name": "Y", "terms": [{{"type": "linear", "weights": {{"X": 1.0}}}}], "noise": {noise}}}],
              "edges": [["X", "Y"], ["Y", "X"]]}}"#
        ),
    )
    .unwrap();
    let o = recourse(&["generate", "--dataset", "custom", "--scm", scm.to_str().unwrap()], &dir.path().join("out"));
    assert_eq!(code(&o), 3);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("cycle") && err.contains("X") && err.contains("Y"), "{err}");
}

#[test]
fn missing_prerequisites_exit_4() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&recourse(&with(&["train-detector"]), dir.path())), 4);
    ok(&with(&["generate"]), dir.path());
    let o = recourse(&with(&["train-recourse", "--detector", "ae"]), dir.path());
    assert_eq!(code(&o), 4);
    assert!(String::from_utf8_lossy(&o.stderr).contains("detector"));
    assert_eq!(code(&recourse(&with(&["train-engine", "--config", "nope.json"]), dir.path())), 4);
}

#[test]
fn bad_arguments_exit_5() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&recourse(&["generate", "--detector", "forest"], dir.path())), 5);
    assert_eq!(code(&recourse(&["generate", "--dataset", "donors"], dir.path())), 5);
    assert_eq!(code(&recourse(&["frobnicate"], dir.path())), 5);
    assert_eq!(code(&recourse(&["generate", "--tau-level", "1.5"], dir.path())), 5);
}

#[test]
fn unwritable_output_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("plain-file");
    std::fs::write(&file, "x").unwrap();
    assert_eq!(code(&recourse(&with(&["generate"]), &file.join("sub"))), 2);
}

#[test]
fn recourse_pipeline_with_exact_engine() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    prepared(out);
    let train = |baseline: &str| ok(&with(&["train-recourse", "--detector", "ae", "--engine", "exact", "--epochs", "5", "--baseline", baseline]), out);
    train("adcar");
    train("naive");
    let log = std::fs::read_to_string(out.join("policy-ae-adcar-exact-log.csv")).unwrap();
    assert_eq!(log.lines().next(), Some("epoch,mean_loss,mean_hinge,mean_cost"));
    assert_eq!(log.lines().count(), 6);
    assert!(out.join("policy-ae-naive-exact.json").exists());

    ok(&with(&["evaluate", "--detector", "ae", "--engine", "exact"]), out);
    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("detection-ae.json")).unwrap()).unwrap();
    for k in ["f1", "auroc", "auprc"] {
        assert!(m[k].is_number(), "{k} missing");
    }
    let report = std::fs::read_to_string(out.join("report-ae-adcar-exact.csv")).unwrap();
    assert!(report.starts_with("label,n_detected,n_true,flip_ratio_detector,flip_ratio_ground_truth,norm_mean,norm_std"));

    let o = ok(&with(&["explain", "--index", "0", "--detector", "ae", "--engine", "exact"]), out);
    let text = String::from_utf8_lossy(&o.stdout);
    for row in ["x ", "theta", "x(theta) SCM"] {
        assert!(text.contains(row), "{text}");
    }
    assert_eq!(code(&recourse(&with(&["explain", "--index", "100000", "--detector", "ae", "--engine", "exact"]), out)), 5);

    ok(&with(&["sweep", "--param", "lambda", "--detector", "ae", "--engine", "exact", "--epochs", "2"]), out);
    let sweep = std::fs::read_to_string(out.join("sweep-lambda-ae-adcar-exact.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 1 + 8);
    ok(&with(&["sweep", "--param", "alpha", "--values", "0.3,0.9", "--detector", "ae", "--engine", "exact", "--epochs", "2"]), out);
    assert_eq!(std::fs::read_to_string(out.join("sweep-alpha-ae-adcar-exact.csv")).unwrap().lines().count(), 3);
}

#[test]
fn config_echo_reruns_identically() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    prepared(a.path());
    let args = with(&["train-recourse", "--detector", "ae", "--engine", "exact", "--epochs", "3", "--lambda", "0.01"]);
    ok(&args, a.path());
    let first = std::fs::read(a.path().join("policy-ae-adcar-exact.json")).unwrap();

    // Re-run from the echoed configs into a fresh directory.
    for cmd in ["generate", "train-detector", "train-recourse"] {
        let mut cfg: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(a.path().join(format!("config.{cmd}.json"))).unwrap()).unwrap();
        cfg["out"] = serde_json::Value::String(b.path().to_string_lossy().into_owned());
        let path = b.path().join(format!("{cmd}.json"));
        std::fs::create_dir_all(b.path()).unwrap();
        std::fs::write(&path, cfg.to_string()).unwrap();
        let o = Command::new(env!("CARGO_BIN_EXE_recourse")).args([cmd, "--config", path.to_str().unwrap()]).output().unwrap();
        assert_eq!(code(&o), 0, "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(first, std::fs::read(b.path().join("policy-ae-adcar-exact.json")).unwrap());
}
