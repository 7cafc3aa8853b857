use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const SMALL: &str = r#"
seed = 5
[grid]
m = 4
n = 4
samples = 40000
[rewards]
alpha = 0.0
alphas = [0.0, 1.0, 100.0]
[trajectory]
slots = 20000
warmup = 100
[sweep]
max_period = 10
"#;

const CODEBOOK: &str = "[codebook]\ntraining = 2000\niterations = 5\neps_samples = 5000\n";

fn evfb(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_evfb")).current_dir(dir).args(args).output().unwrap()
}

fn workspace(config: &str) -> TempDir {
    let dir = TempDir::new().unwrap();
    std::fs::write(dir.path().join("run.toml"), config).unwrap();
    dir
}

fn files(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> =
        std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect();
    names.sort();
    names
}

#[test]
fn free_feedback_solve_is_all_ones() {
    let dir = workspace(SMALL);
    let out = evfb(dir.path(), &["--config", "run.toml", "--out", "a_", "--quiet", "solve"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("a_solve.json")).unwrap()).unwrap();
    assert!(doc["policy"].as_array().unwrap().iter().flat_map(|r| r.as_array().unwrap()).all(|v| v == 1));
    assert!(doc["threshold"].as_array().unwrap().iter().all(|y| y.as_f64().unwrap() == 1.0));
    assert!(dir.path().join("a_solve.config.toml").exists());
}

#[test]
fn repeated_runs_write_identical_files() {
    let dir = workspace(SMALL);
    for prefix in ["x_", "y_"] {
        let out = evfb(dir.path(), &["--config", "run.toml", "--out", prefix, "--quiet", "sweep"]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for name in ["sweep.csv", "sweep_periodic.csv", "sweep.json"] {
        let a = std::fs::read(dir.path().join(format!("x_{name}"))).unwrap();
        let b = std::fs::read(dir.path().join(format!("y_{name}"))).unwrap();
        assert_eq!(a, b, "{name}");
    }
}

#[test]
fn seed_flag_changes_the_draws() {
    let dir = workspace(SMALL);
    evfb(dir.path(), &["--config", "run.toml", "--out", "s1_", "--quiet", "model"]);
    evfb(dir.path(), &["--config", "run.toml", "--out", "s2_", "--seed", "6", "--quiet", "model"]);
    let a = std::fs::read(dir.path().join("s1_model.json")).unwrap();
    let b = std::fs::read(dir.path().join("s2_model.json")).unwrap();
    assert_ne!(a, b);
}

#[test]
fn saved_model_and_codebook_are_reused() {
    let dir = workspace(&format!("{SMALL}{CODEBOOK}"));
    assert!(evfb(dir.path(), &["--config", "run.toml", "--out", "m_", "--quiet", "model"]).status.success());
    assert!(evfb(dir.path(), &["--config", "run.toml", "--out", "m_", "--quiet", "codebook"]).status.success());
    let reuse = format!("{SMALL}{CODEBOOK}path = \"m_codebook.json\"\n")
        .replace("samples = 40000", "samples = 40000\nmodel = \"m_model.json\"");
    std::fs::write(dir.path().join("reuse.toml"), reuse).unwrap();
    let a = evfb(dir.path(), &["--config", "run.toml", "--out", "p_", "--quiet", "solve"]);
    let b = evfb(dir.path(), &["--config", "reuse.toml", "--out", "q_", "--quiet", "solve"]);
    assert!(a.status.success() && b.status.success());
    assert_eq!(
        std::fs::read(dir.path().join("p_solve.json")).unwrap(),
        std::fs::read(dir.path().join("q_solve.json")).unwrap()
    );
    let cb: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("m_codebook.json")).unwrap()).unwrap();
    assert_eq!(cb["size"], 16);
}

#[test]
fn missing_config_fails_without_outputs() {
    let dir = TempDir::new().unwrap();
    let out = evfb(dir.path(), &["--config", "absent.toml", "solve"]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert_eq!(stderr.lines().count(), 1, "{stderr}");
    assert!(files(dir.path()).is_empty());
}

#[test]
fn invalid_config_exits_two() {
    for text in ["[channel]\nantennas = 0", "[grid]\nshape = 3", "seed = -1", "[rewards]\nalphas = []"] {
        let dir = workspace(text);
        let out = evfb(dir.path(), &["--config", "run.toml", "solve"]);
        assert_eq!(out.status.code(), Some(2), "{text}");
        assert_eq!(files(dir.path()), vec!["run.toml".to_string()]);
    }
}

#[test]
fn unreadable_model_exits_two() {
    let dir = workspace("[grid]\nmodel = \"broken.json\"");
    std::fs::write(dir.path().join("broken.json"), "{").unwrap();
    let out = evfb(dir.path(), &["--config", "run.toml", "solve"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn usage_errors_exit_one() {
    let dir = TempDir::new().unwrap();
    for args in [&["frobnicate"][..], &["reproduce-fig", "9"], &["solve", "--seed", "x"], &[]] {
        assert_eq!(evfb(dir.path(), args).status.code(), Some(1), "{args:?}");
    }
    let help = evfb(dir.path(), &["--help"]);
    assert!(help.status.success());
    assert!(String::from_utf8_lossy(&help.stdout).contains("max_period = 40"));
}

#[test]
fn figure_csv_has_every_series() {
    let dir = workspace(SMALL);
    let out = evfb(dir.path(), &["--config", "run.toml", "--out", "f_", "--quiet", "reproduce-fig", "4"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("f_fig4.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "series,alpha,net,throughput,feedback_rate,avg_threshold,stderr");
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    for label in ["controlled_L3", "periodic_L3", "controlled_L4", "periodic_L4"] {
        assert_eq!(rows.iter().filter(|r| r[0] == label).count(), 18, "{label}");
    }
    // Controlled feedback never trails the periodic baseline by more than noise.
    for l in ["L3", "L4"] {
        let pick = |s: &str| -> Vec<(f64, f64)> {
            rows.iter()
                .filter(|r| r[0] == format!("{s}_{l}"))
                .map(|r| (r[2].parse().unwrap(), r[6].parse().unwrap()))
                .collect()
        };
        for ((c, sc), (p, sp)) in pick("controlled").into_iter().zip(pick("periodic")) {
            assert!(c >= p - 3.0 * (sc * sc + sp * sp).sqrt(), "{l}: {c} vs {p}");
        }
    }
    assert!(dir.path().join("f_fig4.json").exists());
}
