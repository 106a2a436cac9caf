use std::path::Path;
use std::process::{Command, Output};

fn spikehar(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spikehar"))
        .args(args)
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = spikehar(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn help_lists_subcommands() {
    let text = ok(&["--help"]);
    for cmd in ["synth", "ingest", "encode", "train", "infer", "profile", "pipeline", "recgym"] {
        assert!(text.contains(cmd), "missing {cmd}");
    }
}

#[test]
fn empty_data_dir_exits_nonzero() {
    let data = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    let run = spikehar(&["pipeline", "--data", p(data.path()), "--out", p(out.path())]);
    assert_eq!(run.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&run.stderr).contains("ingest stage failed"));
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("run.conf");
    std::fs::write(&conf, "epochz = 2\n").unwrap();
    let run = spikehar(&["--config", p(&conf), "synth", "--windows", "1", "--out", p(dir.path())]);
    assert!(!run.status.success());
    assert!(String::from_utf8_lossy(&run.stderr).contains("epochz"));
}

#[test]
fn stepwise_commands_chain() {
    let root = tempfile::tempdir().unwrap();
    let data = root.path().join("data");
    let work = root.path().join("work");
    ok(&["synth", "--subjects", "2", "--windows", "3", "--seed", "2", "--out", p(&data)]);
    assert!(data.join("subject00.csv").exists());

    ok(&["ingest", "--data", p(&data), "--out", p(&root.path().join("ingested"))]);
    let listing = std::fs::read_to_string(root.path().join("ingested/windows.csv")).unwrap();
    assert_eq!(listing.lines().count(), 1 + 18);

    ok(&["encode", "--data", p(&data), "--out", p(&work)]);
    let spikes = work.join("spikes");
    assert!(spikes.join("index.csv").exists());

    let trained = ok(&["train", "--data", p(&spikes), "--epochs", "2", "--out", p(&work)]);
    assert!(trained.contains("train accuracy"));
    let model = work.join("model.snm");

    ok(&["infer", "--model", p(&model), "--spikes", p(&spikes), "--out", p(&work)]);
    let event = std::fs::read(work.join("predictions.csv")).unwrap();
    ok(&["infer", "--model", p(&model), "--spikes", p(&spikes), "--backend", "dense", "--out", p(&work)]);
    assert_eq!(event, std::fs::read(work.join("predictions.csv")).unwrap());

    let profile = ok(&["profile", "--model", p(&model), "--spikes", p(&spikes), "--out", p(&work)]);
    assert!(profile.contains("synaptic operations"));
    let report = std::fs::read_to_string(work.join("report.csv")).unwrap();
    assert!(report.starts_with("hardware,model,accuracy,latency_ms,energy_mj,edp_ujs"));
    assert!(report.contains("GAP8") && report.contains("STM32"));
}

#[test]
fn pipeline_runs_end_to_end() {
    let root = tempfile::tempdir().unwrap();
    let data = root.path().join("data");
    let out = root.path().join("out");
    ok(&["synth", "--subjects", "2", "--windows", "3", "--out", p(&data)]);
    let conf = root.path().join("run.conf");
    std::fs::write(&conf, "epochs = 2\n").unwrap();
    let text = ok(&["--config", p(&conf), "--jobs", "1", "pipeline", "--data", p(&data), "--out", p(&out)]);
    assert!(text.contains("mean leave-one-user-out accuracy"));
    for f in ["model.snm", "report.csv", "report.txt", "folds.csv", "loss_curve.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
}
