use std::path::Path;
use std::process::{Command, Output};

fn ticketlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ticketlab"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn write_spec(dir: &Path, extra: &str) -> String {
    let text = format!(
        r#"
experiment_id = "cli"
output_dir = "runs"
seeds = [0, 1]

[dataset.synthetic]
classes = 3
dim = 5
per_class = 30
test_per_class = 10

[lottery]
arch = [5, 10, 3]
strategy = "fisher"
mode = "iterative"
per_round_fraction = 0.3
rounds = 3
{extra}
[lottery.fisher]
sample_count = 40
batch_size = 4

[lottery.train]
epochs = 2
batch_size = 8
"#
    );
    let path = dir.join("spec.toml");
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn selftest_passes() {
    let o = ticketlab(&["selftest"]);
    let out = String::from_utf8_lossy(&o.stdout);
    assert_eq!(code(&o), 0, "{out}");
    assert!(!out.contains("FAIL"));
    assert_eq!(out.lines().filter(|l| l.starts_with("PASS")).count(), 7);
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(code(&ticketlab(&["lottery"])), 1);
    assert_eq!(code(&ticketlab(&["frobnicate"])), 1);
    assert_eq!(code(&ticketlab(&["report", "--figure", "pie", "--out", "x", "y"])), 1);
    assert_eq!(code(&ticketlab(&["--help"])), 0);
}

#[test]
fn bad_spec_and_missing_files() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), "colour = 1\n");
    assert_eq!(code(&ticketlab(&["lottery", "--config", &spec])), 2);
    let spec = write_spec(dir.path(), "").replace("spec.toml", "absent.toml");
    assert_eq!(code(&ticketlab(&["lottery", "--config", &spec])), 2);
    let spec = write_spec(dir.path(), "");
    std::fs::write(
        &spec,
        std::fs::read_to_string(&spec)
            .unwrap()
            .replace("per_round_fraction = 0.3", "per_round_fraction = 1.5"),
    )
    .unwrap();
    assert_eq!(code(&ticketlab(&["lottery", "--config", &spec])), 1);
}

#[test]
fn lottery_outputs_resume_and_inspect() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), "");
    let runs = dir.path().join("runs");

    let o = ticketlab(&["lottery", "--config", &spec, "--no-timing"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let full = std::fs::read_to_string(runs.join("cli.csv")).unwrap();
    assert_eq!(full.lines().count(), 1 + 2 * 4);
    for s in [0, 1] {
        assert!(runs.join(format!("cli_seed{s}.json")).exists());
        assert!(runs.join(format!("cli_seed{s}.ckpt.json")).exists());
    }

    // Interrupt after two rows, then resume from the checkpoint.
    let other = dir.path().join("other");
    let o = ticketlab(&[
        "lottery", "--config", &spec, "--no-timing", "--out", other.to_str().unwrap(), "--max-rows", "2",
    ]);
    assert_eq!(code(&o), 0);
    assert!(!other.join("cli_seed0.json").exists());
    let o = ticketlab(&[
        "lottery", "--config", &spec, "--no-timing", "--out", other.to_str().unwrap(), "--resume", "--jobs", "2",
    ]);
    assert_eq!(code(&o), 0);
    assert_eq!(std::fs::read_to_string(other.join("cli.csv")).unwrap(), full);

    let ckpt = runs.join("cli_seed0.ckpt.json");
    let o = ticketlab(&["inspect", ckpt.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("round index   4"), "{text}");
    let o = ticketlab(&["inspect", "--json", ckpt.to_str().unwrap()]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["connectivity"]["layers"].as_array().unwrap().len(), 2);

    let fig = dir.path().join("fig.csv");
    let r0 = runs.join("cli_seed0.json");
    let r1 = runs.join("cli_seed1.json");
    let o = ticketlab(&[
        "report", "--figure", "batch_comparison", "--out", fig.to_str().unwrap(),
        r0.to_str().unwrap(), r1.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let fig_text = std::fs::read_to_string(&fig).unwrap();
    assert_eq!(fig_text.lines().count(), 2);
    assert!(fig_text.lines().nth(1).unwrap().starts_with("fisher,4.0"));
}

#[test]
fn corrupt_checkpoint_is_a_format_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.ckpt.json");
    std::fs::write(&p, "{\"format_version\": 9}").unwrap();
    assert_eq!(code(&ticketlab(&["inspect", p.to_str().unwrap()])), 2);
}

#[test]
fn train_writes_history() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), "");
    let o = ticketlab(&["train", "--config", &spec]);
    assert_eq!(code(&o), 0);
    let h = std::fs::read_to_string(dir.path().join("runs/cli_seed1_train.csv")).unwrap();
    assert_eq!(h.lines().next(), Some("epoch,train_loss,test_accuracy"));
    assert_eq!(h.lines().count(), 3);
}
