use std::path::Path;
use std::process::{Command, Output};

fn nstar(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nstar"))
        .args(args)
        .env("NSTAR_WORKERS", "2")
        .output()
        .unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

const CONFIG: &str = r#"
[population]
train_size = 150
val_size = 40
seed = 4

[sweep]
B_p_values = [4, 8]
n_values = [2, 8, 32]
C_total = 8192
base_seed = 2
"#;

#[test]
fn generate_train_sweep_analyze_report() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let config = d.join("config.toml");
    std::fs::write(&config, CONFIG).unwrap();

    let pop = d.join("pop.json");
    let out = ok(&nstar(&["generate", "--config", path(&config), "--out", path(&pop)]));
    assert!(out.contains("150 train / 40 val"), "{out}");
    assert!(out.contains("[0.3, 0.4)"), "{out}");

    let run = d.join("single");
    let out = ok(&nstar(&[
        "train", "--config", path(&config), "--population", path(&pop), "--B_p", "4", "--n", "8", "--M", "20",
        "--seed", "1", "--out", path(&run),
    ]));
    assert!(out.contains("21 records"), "{out}");
    for file in ["runlog.csv", "config.json", "policy.json"] {
        assert!(run.join(file).exists(), "{file}");
    }
    let echoed: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run.join("config.json")).unwrap()).unwrap();
    assert_eq!(echoed["B_p"], 4);
    assert_eq!(echoed["seed"], 1);

    let runs = d.join("runs");
    let sweep = |extra: &[&str]| {
        let mut args = vec!["sweep", "--config", path(&config), "--population", path(&pop), "--out", path(&runs)];
        args.extend_from_slice(extra);
        nstar(&args)
    };
    let out = ok(&sweep(&[]));
    assert!(out.contains("completed 6, failed 0"), "{out}");
    assert_eq!(sweep(&[]).status.code(), Some(2));
    ok(&sweep(&["--resume"]));

    let analysis = d.join("analysis");
    for metric in ["avg", "best4", "worst4"] {
        ok(&nstar(&[
            "analyze", "--runs", path(&runs), "--out", path(&analysis), "--emit", metric, "--grid", "24", "--window", "3",
        ]));
        for file in [format!("frontier_{metric}.csv"), format!("fits_{metric}.json"), format!("nstar_{metric}.csv")] {
            assert!(analysis.join(&file).exists(), "{file}");
        }
    }
    let frontier = std::fs::read_to_string(analysis.join("frontier_avg.csv")).unwrap();
    assert_eq!(frontier.lines().count(), 25);

    let out = ok(&nstar(&["report", "--analysis", path(&analysis)]));
    assert!(out.contains("n* vs compute (avg)"), "{out}");
    assert!(out.contains("argmax n"), "{out}");
    let written = std::fs::read_dir(&analysis)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().starts_with("report_"))
        .count();
    assert!(written > 0);
}

#[test]
fn flags_override_file_values() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.toml");
    std::fs::write(&config, CONFIG).unwrap();
    let pop = dir.path().join("pop.json");
    let out = ok(&nstar(&["generate", "--config", path(&config), "--preset", "hard", "--seed", "9", "--out", path(&pop)]));
    assert!(out.contains("5000 train / 300 val"), "{out}");
    let saved: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&pop).unwrap()).unwrap();
    assert_eq!(saved["config"]["seed"], 9);

    let runs = dir.path().join("fixb");
    let out = ok(&nstar(&[
        "sweep", "--config", path(&config), "--mode", "fix_B", "--fixed-B", "64", "--workers", "1", "--out", path(&runs),
    ]));
    assert!(out.contains("runs: 1 (0 skipped for budget), workers: 1"), "{out}");
}

#[test]
fn validation_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[trainer]\nlearning_rate = 1.0\n").unwrap();
    let out = nstar(&["train", "--config", path(&bad), "--B_p", "1", "--n", "1", "--M", "1", "--out", "x"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("learning_rate"));

    let invalid = dir.path().join("invalid.toml");
    std::fs::write(&invalid, "[population]\ntrain_size = 0\n").unwrap();
    let out = nstar(&["generate", "--config", path(&invalid), "--out", "x.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("population.train_size"));

    let empty = dir.path().join("empty");
    std::fs::create_dir(&empty).unwrap();
    let out = nstar(&["analyze", "--runs", path(&empty), "--out", path(&dir.path().join("a"))]);
    assert_eq!(out.status.code(), Some(2));
    let out = nstar(&["report", "--analysis", path(&empty)]);
    assert_eq!(out.status.code(), Some(2));

    assert_eq!(nstar(&["sweep", "--mode", "diagonal", "--out", "x"]).status.code(), Some(2));
    assert_eq!(nstar(&["analyze", "--runs", "x", "--out", "y", "--emit", "median"]).status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.json");
    let out = nstar(&["train", "--population", path(&missing), "--B_p", "1", "--n", "1", "--M", "1", "--out", "x"]);
    assert_eq!(out.status.code(), Some(1));

    // n_est = 4 is rejected for the n = 8 and n = 32 runs only.
    let config = dir.path().join("config.toml");
    std::fs::write(&config, format!("{CONFIG}\n[trainer]\nn_est = 4\n")).unwrap();
    let runs = dir.path().join("runs");
    let out = nstar(&["sweep", "--config", path(&config), "--out", path(&runs)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("completed 2, failed 4"));
    assert!(runs.join("bp4_n2_r0").join("runlog.csv").exists());
}
