use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ookdim::codebook::Codebook;
use ookdim::config::TrainConfig;

fn ookdim(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ookdim"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMOKE: &str = r#"
seed = 3
[code]
n = 4
m = 2
dimming_set = [2.0]
[training]
train_samples = 2500000
batch_size = 500
validation_samples = 2000
"#;

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn audit_fixture_reports_table_values() {
    let dir = tempfile::tempdir().unwrap();
    let o = ookdim(&["audit", "--fixture", "IIa"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("average weight 4.0000"), "{text}");
    assert!(text.contains("min distance 5"), "{text}");
}

#[test]
fn audit_malformed_file_names_the_line() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.txt"), "n 4\nm 2\n01x1\n0011\n").unwrap();
    let o = ookdim(&["audit", "bad.txt"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("bad.txt:3:"), "{}", stderr(&o));
}

#[test]
fn audit_flags_a_codebook_off_its_target() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("cb.txt"), "n 4\nm 2\nd 2\n1110\n0111\n").unwrap();
    let o = ookdim(&["audit", "cb.txt"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let o = ookdim(&["--allow-infeasible", "audit", "cb.txt"], dir.path());
    assert!(o.status.success());
}

#[test]
fn missing_dimming_set_is_a_config_error_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.toml"), "[code]\nn = 8\nm = 4\n").unwrap();
    let o = ookdim(&["train", "--config", "c.toml"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("dimming_set"), "{err}");
    assert!(err.contains("c.toml:"), "{err}");
}

#[test]
fn default_train_config_parses() {
    let dir = tempfile::tempdir().unwrap();
    let o = ookdim(&["train", "--print-default-config"], dir.path());
    assert!(o.status.success());
    let config = TrainConfig::from_toml(&stdout(&o), Path::new("default.toml")).unwrap();
    assert_eq!(config, TrainConfig::default());
}

#[test]
fn smoke_training_writes_artifacts_and_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let cwd = dir.path();
    std::fs::write(cwd.join("smoke.toml"), SMOKE).unwrap();
    let start = std::time::Instant::now();
    let o = ookdim(&["--out-dir", "a", "train", "--config", "smoke.toml"], cwd);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(start.elapsed().as_secs() < 60);

    let m = manifest(&cwd.join("a"));
    let artifacts = m["artifacts"].as_array().unwrap();
    for kind in ["checkpoint", "trace", "validation-trace", "report", "codebook"] {
        assert!(artifacts.iter().any(|a| a["kind"] == kind), "missing {kind}");
    }
    for a in artifacts {
        let path = cwd.join("a").join(a["path"].as_str().unwrap());
        assert!(path.exists(), "{}", path.display());
    }
    let cb = Codebook::load(&cwd.join("a/codebooks/d_2.txt")).unwrap();
    assert_eq!(cb.m(), 2);

    let o = ookdim(&["--out-dir", "b", "train", "--manifest", "a/manifest.json"], cwd);
    assert!(o.status.success(), "{}", stderr(&o));
    let hashes = |dir: &str| -> Vec<(String, String)> {
        manifest(&cwd.join(dir))["artifacts"]
            .as_array()
            .unwrap()
            .iter()
            .map(|a| (a["path"].as_str().unwrap().to_string(), a["sha256"].as_str().unwrap().to_string()))
            .collect()
    };
    assert_eq!(hashes("a"), hashes("b"));
    let bytes = |p: &str| std::fs::read(cwd.join(p)).unwrap();
    assert_eq!(bytes("a/checkpoint.json"), bytes("b/checkpoint.json"));

    // evaluate the model and compare it with a searched code
    let o = ookdim(&["--out-dir", "s", "baseline", "--n", "4", "--m", "2", "--d", "2", "--iterations", "2000"], cwd);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = ookdim(
        &[
            "--out-dir",
            "e",
            "eval",
            "--checkpoint",
            "a/checkpoint.json",
            "--ml",
            "--codebook",
            "s/codebook_d_2.txt",
            "--snr=0,4,8",
            "--trials",
            "20000",
        ],
        cwd,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(cwd.join("e/eval.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "system,d,snr_db,trials,errors,ser,ci_low,ci_high");
    assert_eq!(csv.lines().count(), 1 + 3 * 3);
    let o = ookdim(&["--out-dir", "e", "compare", "e/eval.csv", "e/eval.csv", "--system-b", "baseline"], cwd);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(cwd.join("e/comparison.json").exists());
}

#[test]
fn searched_strict_code_has_constant_weight() {
    let dir = tempfile::tempdir().unwrap();
    let cwd = dir.path();
    let o = ookdim(
        &["--seed", "5", "--out-dir", "s", "baseline", "--n", "8", "--m", "4", "--d", "4", "--iterations", "40000"],
        cwd,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("min distance 4"), "{}", stdout(&o));
    let path: PathBuf = cwd.join("s/codebook_d_4.txt");
    let o = ookdim(&["audit", path.to_str().unwrap()], cwd);
    assert!(o.status.success());
    assert!(stdout(&o).contains("weights 4 4 4 4"), "{}", stdout(&o));
    assert_eq!(manifest(&cwd.join("s"))["seed"], 5);
}

#[test]
fn bad_csi_flag_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = ookdim(&["--csi", "partial", "audit", "--fixture", "IIa"], dir.path());
    assert!(!o.status.success());
    assert!(stderr(&o).contains("perturbed:<var>"));
}
