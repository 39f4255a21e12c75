use spatial_probe::experiment::{ExperimentConfig, Preset};
use spatial_probe::scene::{DatasetKind, DatasetManifest, ScenarioSpec};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn cli(ws: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spatial-probe"))
        .arg("--workspace")
        .arg(ws)
        .args(args)
        .env_remove("SPATIAL_PROBE_WORKSPACE")
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn data_dir(ws: &Path, kind: DatasetKind) -> PathBuf {
    ws.join("data").join(kind.name())
}

fn files(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<(PathBuf, Vec<u8>)>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.push((p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out);
    out.sort();
    out
}

#[test]
fn single_speaker_sets_hold_one_speaker_at_two_positions_and_regenerate_identically() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for ws in [a.path(), b.path()] {
        ok(&cli(ws, &["gen", "--kind", "dst-1spk", "--count", "5", "--seed", "3"]));
    }
    let dir = data_dir(a.path(), DatasetKind::Dst1Spk);
    let (manifest, _) = DatasetManifest::read(&dir).unwrap();
    assert_eq!(manifest.entries.len(), 5);
    for e in &manifest.entries {
        let text = std::fs::read_to_string(dir.join(&e.scenario)).unwrap();
        let spec: ScenarioSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(spec.sources.len(), 2);
        assert_eq!(spec.sources[0].speaker_id, spec.sources[1].speaker_id);
        assert_ne!(spec.sources[0].position, spec.sources[1].position);
    }
    assert_eq!(files(&dir), files(&data_dir(b.path(), DatasetKind::Dst1Spk)));
}

#[test]
fn zero_count_writes_an_empty_manifest_with_a_warning() {
    let ws = tempfile::tempdir().unwrap();
    let out = cli(ws.path(), &["gen", "--kind", "DST-clean", "--count", "0"]);
    ok(&out);
    assert!(String::from_utf8_lossy(&out.stderr).contains("count is 0"));
    let (manifest, _) = DatasetManifest::read(&data_dir(ws.path(), DatasetKind::DstClean)).unwrap();
    assert!(manifest.entries.is_empty());
}

#[test]
fn training_without_a_dataset_fails_with_the_data_code_and_writes_nothing() {
    let ws = tempfile::tempdir().unwrap();
    let out = cli(ws.path(), &["train"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(!ws.path().join("runs").exists());
}

#[test]
fn configuration_errors_exit_with_code_two() {
    let ws = tempfile::tempdir().unwrap();
    assert_eq!(cli(ws.path(), &["--preset", "huge", "gen"]).status.code(), Some(2));
    assert_eq!(cli(ws.path(), &["plot", "--artifact", "spectrogram"]).status.code(), Some(2));
    let bad = ws.path().join("bad.json");
    std::fs::write(&bad, "{\"preset\": \"desk\"}").unwrap();
    assert_eq!(cli(ws.path(), &["--config", bad.to_str().unwrap(), "report"]).status.code(), Some(2));
}

#[test]
fn a_held_lock_blocks_other_commands() {
    let ws = tempfile::tempdir().unwrap();
    std::fs::write(ws.path().join(".lock"), "1\n").unwrap();
    let out = cli(ws.path(), &["gen", "--count", "0"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("locked"));
}

#[test]
fn printed_configuration_loads_back_unchanged() {
    let ws = tempfile::tempdir().unwrap();
    let out = cli(ws.path(), &["--preset", "paper", "--seed", "9", "config"]);
    ok(&out);
    let path = ws.path().join("cfg.json");
    std::fs::write(&path, &out.stdout).unwrap();
    let loaded = ExperimentConfig::load(&path).unwrap();
    let mut expect = ExperimentConfig::preset(Preset::Paper).with_seed(9);
    expect.workspace = ws.path().to_path_buf();
    assert_eq!(loaded, expect);
}

/// Desk preset on 50 short sequences, through every verb.
#[test]
fn desk_smoke_run_covers_every_verb() {
    let ws = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::preset(Preset::Desk).with_seed(1);
    cfg.data.sampler = cfg.data.sampler.clone().with_duration(1.5);
    cfg.data.train_count = 50;
    cfg.data.test_count = 2;
    cfg.data.test_kinds = vec![DatasetKind::DstClean, DatasetKind::DstWgn];
    cfg.data.test_snr_grid = vec![0.0, 20.0];
    cfg.train.epochs = 1;
    cfg.train.val_count = 2;
    cfg.probe.protocol.trials = 2;
    let path = ws.path().join("cfg.json");
    cfg.save(&path).unwrap();
    let config = path.to_str().unwrap();
    let run = |args: &[&str]| {
        let mut all = vec!["--config", config];
        all.extend_from_slice(args);
        let out = cli(ws.path(), &all);
        ok(&out);
        String::from_utf8(out.stdout).unwrap()
    };
    run(&["gen"]);
    run(&["train"]);
    let ckpt = ws.path().join("runs/cospa-wgn/last.ckpt");
    assert!(ckpt.exists());
    let metrics = std::fs::read_to_string(ws.path().join("runs/cospa-wgn/metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 2);

    let table = run(&["probe"]);
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "dataset,SNR,grouping_in,grouping_out,dbar_in,dbar_out,pause_in,pause_out");
    // One clean row plus one per SNR.
    assert_eq!(lines.len(), 1 + 1 + 2);
    let csv = std::fs::read(ws.path().join("reports/cospa-wgn/DST-WGN.csv")).unwrap();
    run(&["probe", "--kind", "DST-WGN"]);
    assert_eq!(csv, std::fs::read(ws.path().join("reports/cospa-wgn/DST-WGN.csv")).unwrap());
    assert_eq!(run(&["report"]), table);

    let written = run(&["plot", "--sequence", "1"]);
    assert_eq!(written.lines().count(), 4);
    for line in written.lines() {
        let svg = std::fs::read_to_string(line).unwrap();
        assert!(svg.starts_with("<svg"));
    }
    let first = std::fs::read(written.lines().next().unwrap()).unwrap();
    run(&["plot", "--sequence", "1", "--artifact", "phase-mask"]);
    assert_eq!(first, std::fs::read(written.lines().next().unwrap()).unwrap());

    // Resuming an already finished run keeps the checkpoint step.
    run(&["train", "--resume"]);
    assert_eq!(
        std::fs::read_to_string(ws.path().join("runs/cospa-wgn/metrics.csv")).unwrap(),
        metrics
    );
}
