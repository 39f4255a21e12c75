//! Experiment runner: dataset generation, training, probing, reports and
//! plots inside one workspace directory.
//!
//! ```text
//! <workspace>/data/<dataset>/manifest.json
//! <workspace>/runs/<run>/{config.json, metrics.csv, last.ckpt}
//! <workspace>/reports/<run>/{<dataset>.json, <dataset>.csv, table.csv}
//! <workspace>/plots/<run>/<dataset>/seq_NNNN_<artifact>.svg
//! ```

mod config;
pub mod plot;

pub use config::{
    derive_seed, CorpusConfig, CorpusSource, DataConfig, ExperimentConfig, Preset, ProbeSettings,
};

use crate::neural::{train, Checkpoint, Model, TrainReport};
use crate::probe::{run_protocol, ClusterReport};
use crate::scene::{
    build_dataset, DatasetKind, DatasetManifest, DatasetOptions, DirectoryCorpus, SpeechCorpus, SyntheticCorpus,
    MANIFEST_FILE,
};
use crate::{Error, Result};
use std::io::Write;
use std::path::{Path, PathBuf};

/// Environment variable that overrides the configured workspace.
pub const WORKSPACE_ENV: &str = "SPATIAL_PROBE_WORKSPACE";

#[derive(Debug, Clone)]
pub struct Workspace {
    root: PathBuf,
}

/// Exclusive hold on a workspace; released on drop.
#[derive(Debug)]
pub struct WorkspaceLock {
    path: PathBuf,
}

impl Drop for WorkspaceLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

impl Workspace {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn data_dir(&self, kind: DatasetKind) -> PathBuf {
        self.root.join("data").join(kind.name())
    }

    pub fn run_dir(&self, run: &str) -> PathBuf {
        self.root.join("runs").join(run)
    }

    pub fn report_dir(&self, run: &str) -> PathBuf {
        self.root.join("reports").join(run)
    }

    pub fn plot_dir(&self, run: &str, kind: DatasetKind) -> PathBuf {
        self.root.join("plots").join(run).join(kind.name())
    }

    pub fn checkpoint(&self, run: &str) -> PathBuf {
        self.run_dir(run).join("last.ckpt")
    }

    /// Takes the workspace lock, failing if another command holds it.
    pub fn lock(&self) -> Result<WorkspaceLock> {
        std::fs::create_dir_all(&self.root).map_err(|e| Error::io(&self.root, e))?;
        let path = self.root.join(".lock");
        match std::fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(WorkspaceLock { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                let holder = std::fs::read_to_string(&path).unwrap_or_default();
                Err(Error::Config(format!(
                    "workspace {} is locked by process {} (delete {} if it is stale)",
                    self.root.display(),
                    holder.trim(),
                    path.display()
                )))
            }
            Err(e) => Err(Error::io(&path, e)),
        }
    }
}

/// Run name for a network trained on `kind`.
pub fn run_name(kind: DatasetKind) -> &'static str {
    match kind {
        DatasetKind::DsClean => "cospa-clean",
        _ => "cospa-wgn",
    }
}

fn corpus_for(cfg: &ExperimentConfig, training: bool) -> Result<(Box<dyn SpeechCorpus>, String)> {
    let c = &cfg.corpus;
    match c.source {
        CorpusSource::Synthetic => {
            let (split, n) = if training {
                ("train", c.train_speakers)
            } else {
                ("test", c.test_speakers)
            };
            Ok((
                Box::new(SyntheticCorpus::new(split, n)),
                format!("synthetic:{split}:{n}"),
            ))
        }
        CorpusSource::Directory => {
            let path = if training { &c.train_path } else { &c.test_path };
            let path = path
                .as_ref()
                .ok_or_else(|| Error::Config("directory corpus needs train_path and test_path".into()))?;
            Ok((Box::new(DirectoryCorpus::open(path)?), format!("directory:{}", path.display())))
        }
    }
}

/// Seed of one dataset, derived from the global seed and the dataset name.
pub fn dataset_seed(cfg: &ExperimentConfig, kind: DatasetKind) -> u64 {
    derive_seed(cfg.seed, kind.name())
}

fn clear_dataset_dir(dir: &Path) -> Result<()> {
    if !dir.exists() {
        return Ok(());
    }
    let is_dataset = dir.join(MANIFEST_FILE).exists()
        || std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?.next().is_none();
    if !is_dataset {
        return Err(Error::Config(format!(
            "{} exists and is not a generated dataset; refusing to overwrite",
            dir.display()
        )));
    }
    std::fs::remove_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Generates the requested datasets, replacing earlier versions.
pub fn cmd_gen(cfg: &ExperimentConfig, kinds: &[DatasetKind], count: Option<usize>) -> Result<Vec<DatasetManifest>> {
    cfg.validate()?;
    let ws = Workspace::new(&cfg.workspace);
    let mut out = Vec::new();
    for &kind in kinds {
        let n = count.unwrap_or(if kind.is_training() {
            cfg.data.train_count
        } else {
            cfg.data.test_count
        });
        if n == 0 {
            log::warn!("{kind}: count is 0, writing an empty manifest");
        }
        let (corpus, corpus_name) = corpus_for(cfg, kind.is_training())?;
        let opts = DatasetOptions {
            sampler: cfg.data.sampler.clone(),
            frame_len: cfg.data.frame_len,
            snr_grid: if kind.is_training() {
                cfg.data.train_snr_grid.clone()
            } else {
                cfg.data.test_snr_grid.clone()
            },
        };
        let dir = ws.data_dir(kind);
        clear_dataset_dir(&dir)?;
        log::info!("{kind}: rendering {n} sequences into {}", dir.display());
        let manifest = build_dataset(kind, n, dataset_seed(cfg, kind), corpus.as_ref(), &corpus_name, &opts, &dir)?;
        out.push(manifest);
    }
    Ok(out)
}

fn read_manifest(ws: &Workspace, kind: DatasetKind) -> Result<(DatasetManifest, PathBuf)> {
    let dir = ws.data_dir(kind);
    if !dir.join(MANIFEST_FILE).exists() {
        return Err(Error::Format {
            path: dir.join(MANIFEST_FILE),
            reason: format!("no {kind} dataset; run `gen --kind {}` first", kind.name()),
        });
    }
    DatasetManifest::read(&dir)
}

/// Trains (or resumes training of) the network for the configured training
/// dataset.
pub fn cmd_train(cfg: &ExperimentConfig, resume: bool) -> Result<TrainReport> {
    cfg.validate()?;
    let ws = Workspace::new(&cfg.workspace);
    let (manifest, dir) = read_manifest(&ws, cfg.data.train_kind)?;
    if manifest.entries.is_empty() {
        return Err(Error::Config(format!("{} has no sequences to train on", manifest.kind)));
    }
    if manifest.sampler.num_mics != cfg.model.num_channels {
        return Err(Error::GeometryMismatch(format!(
            "dataset has {} microphones, model {} channels",
            manifest.sampler.num_mics, cfg.model.num_channels
        )));
    }
    let run = run_name(cfg.data.train_kind);
    let run_dir = ws.run_dir(run);
    let start = if resume {
        let ckpt = Checkpoint::load(&ws.checkpoint(run))?;
        if ckpt.model.config != cfg.model {
            return Err(Error::Config("checkpoint model configuration differs from the config".into()));
        }
        ckpt
    } else {
        Checkpoint::new(Model::new(cfg.model.clone())?, cfg.train.optimizer, cfg.train.seed)
    };
    std::fs::create_dir_all(&run_dir).map_err(|e| Error::io(&run_dir, e))?;
    cfg.save(&run_dir.join("config.json"))?;
    log::info!(
        "{run}: training on {} ({} sequences) from step {}",
        manifest.kind,
        manifest.entries.len(),
        start.step
    );
    train(start, &manifest, &dir, &cfg.train, Some(&run_dir))
}

fn load_run(cfg: &ExperimentConfig) -> Result<(Workspace, &'static str, Checkpoint)> {
    let ws = Workspace::new(&cfg.workspace);
    let run = run_name(cfg.data.train_kind);
    let path = ws.checkpoint(run);
    if !path.exists() {
        return Err(Error::Format {
            path,
            reason: format!("no checkpoint for run {run}; train first"),
        });
    }
    let ckpt = Checkpoint::load(&path)?;
    Ok((ws, run, ckpt))
}

fn check_geometry(manifest: &DatasetManifest, model: &Model) -> Result<()> {
    if manifest.sampler.num_mics != model.config.num_channels || manifest.frame_len != model.config.frame_len() {
        return Err(Error::GeometryMismatch(format!(
            "{} has {} microphones and {}-point frames; the model expects {} and {}",
            manifest.kind,
            manifest.sampler.num_mics,
            manifest.frame_len,
            model.config.num_channels,
            model.config.frame_len()
        )));
    }
    Ok(())
}

/// Probes the trained network on each test dataset and writes the reports.
pub fn cmd_probe(cfg: &ExperimentConfig, kinds: &[DatasetKind]) -> Result<Vec<ClusterReport>> {
    cfg.validate()?;
    let (ws, run, ckpt) = load_run(cfg)?;
    let out_dir = ws.report_dir(run);
    std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
    let mut reports = Vec::new();
    for &kind in kinds {
        let (manifest, dir) = read_manifest(&ws, kind)?;
        check_geometry(&manifest, &ckpt.model)?;
        log::info!("{run}: probing {kind} ({} entries)", manifest.entries.len());
        let mut report = run_protocol(&manifest, &dir, &ckpt.model, &cfg.probe.taps, &cfg.probe.protocol)?;
        if report.incomplete {
            log::warn!("{kind}: {} sequences failed", report.failures.len());
        }
        if !cfg.probe.per_sequence {
            report.sequences.clear();
        }
        report.write(
            &out_dir.join(format!("{}.json", kind.name())),
            &out_dir.join(format!("{}.csv", kind.name())),
        )?;
        reports.push(report);
    }
    cmd_report(cfg)?;
    Ok(reports)
}

/// Collects every available report of the run into `table.csv` and returns
/// it.
pub fn cmd_report(cfg: &ExperimentConfig) -> Result<String> {
    let ws = Workspace::new(&cfg.workspace);
    let run = run_name(cfg.data.train_kind);
    let dir = ws.report_dir(run);
    let mut table = String::from(ClusterReport::CSV_HEADER);
    table.push('\n');
    let mut found = 0;
    for kind in DatasetKind::ALL.iter().filter(|k| !k.is_training()) {
        let path = dir.join(format!("{}.json", kind.name()));
        if !path.exists() {
            continue;
        }
        found += 1;
        let report = ClusterReport::read(&path)?;
        table.extend(report.to_csv().lines().skip(1).map(|l| format!("{l}\n")));
    }
    if found == 0 {
        return Err(Error::Format {
            path: dir,
            reason: "no probe reports found; run `probe` first".into(),
        });
    }
    let path = dir.join("table.csv");
    std::fs::write(&path, &table).map_err(|e| Error::io(&path, e))?;
    Ok(table)
}

/// Renders plots for one sequence of a test dataset.
pub fn cmd_plot(
    cfg: &ExperimentConfig,
    artifacts: &[plot::Artifact],
    kind: DatasetKind,
    sequence: usize,
) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let (ws, run, ckpt) = load_run(cfg)?;
    let (manifest, dir) = read_manifest(&ws, kind)?;
    check_geometry(&manifest, &ckpt.model)?;
    let entry = manifest
        .entries
        .iter()
        .find(|e| e.sequence == sequence)
        .ok_or_else(|| Error::Config(format!("{kind} has no sequence {sequence}")))?;
    let out_dir = ws.plot_dir(run, kind);
    std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
    let data = plot::SequenceData::compute(&ckpt.model, &dir, entry, &cfg.probe.protocol)?;
    let mut written = Vec::new();
    for &a in artifacts {
        let path = out_dir.join(format!("seq_{sequence:04}_{}.svg", a.name()));
        std::fs::write(&path, plot::render(a, &data)).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lock_is_exclusive_and_released_on_drop() {
        let dir = tempfile::tempdir().unwrap();
        let ws = Workspace::new(dir.path());
        let held = ws.lock().unwrap();
        assert!(matches!(ws.lock(), Err(Error::Config(_))));
        drop(held);
        ws.lock().unwrap();
    }

    #[test]
    fn foreign_directories_are_never_cleared() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("notes.txt"), "keep").unwrap();
        assert!(clear_dataset_dir(dir.path()).is_err());
        assert!(dir.path().join("notes.txt").exists());
    }

    #[test]
    fn runs_are_named_after_the_training_set() {
        assert_eq!(run_name(DatasetKind::DsClean), "cospa-clean");
        assert_eq!(run_name(DatasetKind::DsWgn), "cospa-wgn");
    }
}
