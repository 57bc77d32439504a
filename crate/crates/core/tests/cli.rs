use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
}

fn run(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_degcarl"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("scenario.json");
    std::fs::write(&p, body).unwrap();
    p
}

const SMALL: &str = r#"{
  "problem": {
    "a": {"type": "power", "K": 0.25, "x0": 0.5},
    "b": {"type": "power", "K": 0.25, "x0": 0.5},
    "lambda": -1.0, "T": 1.0, "bc": "dirichlet",
    "omega": [0.3, 0.7], "N": 40, "M": 40
  }
}"#;

#[test]
fn classify_reports_regime() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario("classify_wsd.json");
    let o = run(&["classify", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let report = std::fs::read_to_string(dir.path().join("report.txt")).unwrap();
    assert!(report.contains("class=WSD"), "{report}");
    assert!(dir.path().join("classify_summary.csv").exists());
}

#[test]
fn missing_field_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &SMALL.replace(r#""T": 1.0, "#, ""));
    let o = run(
        &["wellposed", "--config", cfg.to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing field `T`"));
}

#[test]
fn unknown_pipeline_and_axis_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let c = cfg.to_str().unwrap();
    assert_eq!(
        run(&["bogus", "--config", c], dir.path()).status.code(),
        Some(1)
    );
    assert_eq!(
        run(&["sweep", "--config", c, "--sweep", "T=1,2"], dir.path())
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn inadmissible_lambda_is_a_hypothesis_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &SMALL.replace("-1.0", "50.0"));
    let c = cfg.to_str().unwrap();
    assert_eq!(
        run(&["observability", "--config", c], dir.path())
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn empty_sweep_writes_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let o = run(
        &[
            "sweep",
            "--config",
            cfg.to_str().unwrap(),
            "--sweep",
            "lambda=",
        ],
        dir.path(),
    );
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let csv = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1);
    assert!(csv.starts_with("axis,value,status,message,refinement_gap"));
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let cfg_dir = tempfile::tempdir().unwrap();
    let cfg = write_config(cfg_dir.path(), SMALL);
    let c = cfg.to_str().unwrap();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for out in [a.path(), b.path()] {
        let o = run(&["carleman", "--config", c, "--seed", "7"], out);
        assert_eq!(
            o.status.code(),
            Some(0),
            "{}",
            String::from_utf8_lossy(&o.stderr)
        );
    }
    let mut names: Vec<_> = std::fs::read_dir(a.path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert!(names.len() >= 3);
    for n in names {
        assert_eq!(
            std::fs::read(a.path().join(&n)).unwrap(),
            std::fs::read(b.path().join(&n)).unwrap(),
            "{n:?}"
        );
    }
}
