use std::path::Path;
use std::process::{Command, Output};

fn provsketch(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_provsketch"))
        .args(args)
        .output()
        .expect("run provsketch")
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap_or(-1)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn simgen_train_detect_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let f = |n: &str| d.join(n);

    for (seed, name) in [("11", "b1.jsonl"), ("12", "b2.jsonl"), ("13", "held_out.jsonl")] {
        let out = provsketch(&["simgen", "--seed", seed, "--out", s(&f(name))]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    }
    let out = provsketch(&["simgen", "--attack", "--seed", "14", "--out", s(&f("attack.jsonl"))]);
    assert_eq!(code(&out), 0);

    let out = provsketch(&["train", s(&f("b1.jsonl")), s(&f("b2.jsonl")), "--out", s(&f("model.bin"))]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("2 sub-models"));

    let out = provsketch(&["detect", s(&f("attack.jsonl")), "--model", s(&f("model.bin")), "--out", s(&f("v.csv"))]);
    assert_eq!(code(&out), 1, "{}", String::from_utf8_lossy(&out.stdout));
    let csv = std::fs::read_to_string(f("v.csv")).unwrap();
    assert!(csv.starts_with("stage,clock,anomalous,accepted_by,min_distance\n"));

    // training inputs themselves are accepted
    let out = provsketch(&["detect", s(&f("b1.jsonl")), "--model", s(&f("model.bin"))]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));

    // frozen settings cannot change at detection time; the multiplier can
    let out = provsketch(&["detect", s(&f("held_out.jsonl")), "--model", s(&f("model.bin")), "--sketch-size", "1000"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("sketch_size"));
    let out = provsketch(&["detect", s(&f("b1.jsonl")), "--model", s(&f("model.bin")), "--threshold-multiplier", "1.5"]);
    assert_eq!(code(&out), 0);
}

#[test]
fn config_file_feeds_simgen_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.conf");
    std::fs::write(&cfg, "# small run\nseed = 7\n").unwrap();
    let a = provsketch(&["simgen", "--config", s(&cfg)]);
    let b = provsketch(&["simgen", "--seed", "7"]);
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn errors_exit_with_two() {
    let out = provsketch(&["detect", "/nonexistent/input.jsonl", "--model", "/nonexistent/model.bin"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));

    assert_eq!(code(&provsketch(&["train"])), 2);
    assert_eq!(code(&provsketch(&["bogus"])), 2);
    assert_eq!(code(&provsketch(&["simgen", "--decay", "-1"])), 2);
    assert_eq!(code(&provsketch(&["--help"])), 0);
}
