use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ies-dispatch"))
}

fn example() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/example.json")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn edited_example(dir: &Path, edit: impl FnOnce(&mut serde_json::Value)) -> PathBuf {
    let mut v: serde_json::Value = serde_json::from_str(&fs::read_to_string(example()).unwrap()).unwrap();
    edit(&mut v);
    let path = dir.join("config.json");
    fs::write(&path, v.to_string()).unwrap();
    path
}

#[test]
fn help_exits_zero_and_usage_errors_exit_one() {
    assert_eq!(code(&run(&["--help"])), 0);
    assert_eq!(code(&run(&[])), 1);
    assert_eq!(code(&run(&["run", "--config", "x.json"])), 1, "missing --mode and --out");
    assert_eq!(code(&run(&["run", "--config", "x.json", "--mode", "4", "--out", "o"])), 1);
}

#[test]
fn unreadable_config_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["run", "--config", "/nonexistent/c.json", "--mode", "1", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/c.json"));
}

#[test]
fn run_then_verify_round_trips_the_schedule() {
    let dir = tempfile::tempdir().unwrap();
    let config = example();
    let out = run(&["run", "--config", config.to_str().unwrap(), "--mode", "3", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("mode 3:"));
    for f in ["schedule.csv", "costs.json", "ledger.csv"] {
        assert!(dir.path().join(f).is_file(), "{f} missing");
    }
    let costs: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("costs.json")).unwrap()).unwrap();
    assert!(costs.is_object());

    let schedule = dir.path().join("schedule.csv");
    let out = run(&[
        "verify",
        "--config",
        config.to_str().unwrap(),
        "--schedule",
        schedule.to_str().unwrap(),
        "--samples",
        "20000",
        "--seed",
        "1",
        "--sigmas",
        "4",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 25, "header plus 24 periods");
    assert!(text.trim_end().ends_with("pass"));
}

#[test]
fn verify_rejects_a_schedule_without_reserve() {
    let dir = tempfile::tempdir().unwrap();
    let config = example();
    assert_eq!(
        code(&run(&["run", "--config", config.to_str().unwrap(), "--mode", "1", "--out", dir.path().to_str().unwrap(), "--alpha", "0"])),
        0
    );
    // At alpha 0 nothing is held back, so a 0.9 check must fail.
    let schedule = dir.path().join("schedule.csv");
    let out = run(&[
        "verify",
        "--config",
        config.to_str().unwrap(),
        "--schedule",
        schedule.to_str().unwrap(),
        "--samples",
        "5000",
        "--seed",
        "2",
    ]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stdout).trim_end().to_lowercase().ends_with("fail"));
}

#[test]
fn infeasible_model_exits_two_and_names_rows() {
    let dir = tempfile::tempdir().unwrap();
    let config = edited_example(dir.path(), |v| {
        v["hss"]["c_0"] = 0.0.into();
        v["loads"]["heat"][0] = 270.0.into();
    });
    let out = run(&["run", "--config", config.to_str().unwrap(), "--mode", "1", "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("_t1"), "{err}");
}

#[test]
fn solver_limit_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let config = example();
    let out = run(&[
        "run",
        "--config",
        config.to_str().unwrap(),
        "--mode",
        "3",
        "--gap",
        "0",
        "--time-limit",
        "0.001",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn dst_oracle_walks_the_sequence() {
    let dir = tempfile::tempdir().unwrap();
    let seq = dir.path().join("seq.csv");
    fs::write(&seq, "index,power_mw,prob\n0,0,0.2\n1,1,0.5\n2,2,0.3\n").unwrap();
    let s = seq.to_str().unwrap();
    let reserve = |args: &[&str]| -> f64 {
        let out = run(args);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        String::from_utf8_lossy(&out.stdout).trim().parse().unwrap()
    };
    // Mean 1.1. Covering the top two points gives 0.8, so alpha 0.9 must also cover 0.
    assert!((reserve(&["dst-oracle", "--alpha", "0.9", "--seq", s]) - 1.1).abs() < 1e-9);
    assert!((reserve(&["dst-oracle", "--alpha", "0.8", "--seq", s]) - 0.1).abs() < 1e-9);
    assert!((reserve(&["dst-oracle", "--alpha", "0.3", "--seq", s, "--expectation", "2"])).abs() < 1e-9);
    assert_eq!(code(&run(&["dst-oracle", "--alpha", "1.5", "--seq", s])), 1);
}

#[test]
fn sweep_writes_one_row_per_price() {
    let dir = tempfile::tempdir().unwrap();
    let config = example();
    let out = run(&[
        "sweep",
        "--config",
        config.to_str().unwrap(),
        "--price-from",
        "0",
        "--price-to",
        "80",
        "--price-step",
        "40",
        "--mode",
        "1",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert!(!csv.contains("# incomplete"));
}

#[test]
fn baseline_prints_the_comparison_csv() {
    let config = example();
    let out = run(&[
        "baseline",
        "--config",
        config.to_str().unwrap(),
        "--method",
        "sa",
        "--scenarios",
        "20",
        "--runs",
        "2",
        "--seed",
        "5",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "method,run,objective_cny,emissions_t,wall_ms");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("sa,0,") && lines[2].starts_with("sa,1,"));
    assert_eq!(code(&run(&["baseline", "--config", config.to_str().unwrap(), "--method", "mc"])), 1);
}
