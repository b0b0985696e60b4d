use std::path::Path;
use std::process::{Command, Output};

fn spikefuse(args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_spikefuse"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs");
    assert!(
        out.status.success(),
        "spikefuse {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

#[test]
fn synth_train_eval_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let run = dir.path().join("run");
    let (data_s, run_s) = (data.to_str().unwrap(), run.to_str().unwrap());

    spikefuse(&["synth", "--out", data_s, "--classes", "3", "--n", "8", "--seed", "4"]);
    assert_eq!(std::fs::read_dir(&data).unwrap().filter(|e| e.as_ref().unwrap().path().is_dir()).count(), 3);

    spikefuse(&["train", "--data", data_s, "--epochs", "1", "--seed", "2", "--out", run_s]);
    for f in ["model.ckpt", "config.json", "metrics.csv", "loss.svg", "accuracy.svg"] {
        assert!(run.join(f).is_file(), "{f} missing");
    }
    let csv = std::fs::read_to_string(run.join("metrics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);

    let ckpt = run.join("model.ckpt");
    let ckpt_s = ckpt.to_str().unwrap();
    let eval = String::from_utf8(spikefuse(&["eval", "--ckpt", ckpt_s, "--data", data_s]).stdout).unwrap();
    assert!(eval.contains("accuracy") && eval.contains("(24 samples)"), "{eval}");

    let sweep = String::from_utf8(spikefuse(&["sweep", "--ckpt", ckpt_s, "--snrs", "0,20", "--data", data_s, "--out", run_s]).stdout).unwrap();
    let lines: Vec<&str> = sweep.lines().collect();
    assert_eq!(lines[0], "snr,accuracy");
    assert_eq!(lines.len(), 3);
    assert!(Path::new(&run.join("sweep.svg")).is_file());
}

#[test]
fn gradcheck_passes_and_bad_input_fails() {
    let out = String::from_utf8(spikefuse(&["gradcheck"]).stdout).unwrap();
    assert!(out.trim_end().ends_with("ok"), "{out}");

    let bad = Command::new(env!("CARGO_BIN_EXE_spikefuse"))
        .args(["eval", "--ckpt", "/nonexistent/model.ckpt"])
        .output()
        .unwrap();
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).contains("error"));
}
