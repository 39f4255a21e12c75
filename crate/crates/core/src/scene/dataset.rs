use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{mix_noise, render_scene, sample_scenario, DatasetKind, FrameLabel, SamplerConfig, ScenarioSpec, Snr, SpeechCorpus};
use crate::beamform::make_target;
use crate::error::{Error, Result};
use crate::wave::MultichannelWave;

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub kind: DatasetKind,
    pub global_seed: u64,
    pub count: usize,
    pub frame_len: usize,
    pub snr_grid: Vec<f64>,
    pub corpus: String,
    pub sampler: SamplerConfig,
    pub entries: Vec<ManifestEntry>,
}

/// One rendered mixture. File references are relative to the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub sequence: usize,
    pub sequence_seed: u64,
    pub snr: Snr,
    pub scenario: String,
    pub mixture: String,
    pub images: Vec<String>,
    pub target: String,
    pub labels: String,
}

/// Frame-level ground truth stored next to each sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceLabels {
    pub frame_len: usize,
    pub hop: usize,
    pub activity: Vec<FrameLabel>,
}

/// Everything needed to train on or probe one manifest entry.
#[derive(Debug, Clone)]
pub struct LoadedEntry {
    pub scenario: ScenarioSpec,
    pub mixture: MultichannelWave,
    pub target: MultichannelWave,
    pub labels: SequenceLabels,
}

impl DatasetManifest {
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::json(&path, e))?;
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    /// Reads a manifest from a file, or from `manifest.json` in a directory.
    pub fn read(path: &Path) -> Result<(Self, PathBuf)> {
        let file = if path.is_dir() {
            path.join(MANIFEST_FILE)
        } else {
            path.to_path_buf()
        };
        let text = std::fs::read_to_string(&file).map_err(|e| Error::io(&file, e))?;
        let manifest: Self = serde_json::from_str(&text).map_err(|e| Error::json(&file, e))?;
        if manifest.format_version != MANIFEST_VERSION {
            return Err(Error::Format {
                path: file,
                reason: format!("manifest version {} is not supported", manifest.format_version),
            });
        }
        let dir = file.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((manifest, dir))
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

pub fn load_entry(dir: &Path, entry: &ManifestEntry) -> Result<LoadedEntry> {
    Ok(LoadedEntry {
        scenario: read_json(&dir.join(&entry.scenario))?,
        mixture: MultichannelWave::read_wav(&dir.join(&entry.mixture))?,
        target: MultichannelWave::read_wav(&dir.join(&entry.target))?,
        labels: read_json(&dir.join(&entry.labels))?,
    })
}

fn snr_tag(snr: Snr) -> String {
    match snr {
        Snr::Clean => String::new(),
        Snr::Db(v) => format!("_snr{v:+}"),
    }
}

/// Generator for sequence `index`, independent of how sequences are
/// distributed over workers.
pub(crate) fn sequence_rng(global_seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(global_seed);
    rng.set_stream(index as u64 + 1);
    rng
}

fn render_sequence(
    kind: DatasetKind,
    index: usize,
    global_seed: u64,
    corpus: &dyn SpeechCorpus,
    cfg: &SamplerConfig,
    frame_len: usize,
    snr_grid: &[f64],
    out_dir: &Path,
) -> Result<Vec<ManifestEntry>> {
    let sequence_seed: u64 = sequence_rng(global_seed, index).gen();
    let mut rng = ChaCha8Rng::seed_from_u64(sequence_seed);
    let mut speakers = corpus.speakers();
    if speakers.len() < kind.speakers_needed() {
        return Err(Error::CorpusExhausted(format!(
            "{kind} needs {} speakers, corpus has {}",
            kind.speakers_needed(),
            speakers.len()
        )));
    }
    speakers.shuffle(&mut rng);
    let snrs: Vec<Snr> = match kind {
        DatasetKind::DsWgn => vec![Snr::Db(snr_grid[index % snr_grid.len()])],
        DatasetKind::DstWgn => snr_grid.iter().map(|&v| Snr::Db(v)).collect(),
        _ => vec![Snr::Clean],
    };
    let spec = sample_scenario(kind, &mut rng, cfg, &speakers[..2.min(speakers.len())], snrs[0])?;
    let n = spec.num_samples();
    let dry = spec
        .sources
        .iter()
        .map(|s| {
            corpus
                .utterance(&s.speaker_id, s.utterance, n, spec.sample_rate)
                .and_then(|v| MultichannelWave::mono(v, spec.sample_rate))
        })
        .collect::<Result<Vec<_>>>()?;
    let scene = render_scene(&spec, &dry, frame_len, frame_len / 2)?;
    let target = make_target(&spec, &scene.images, frame_len)?;

    let rel_dir = format!("seq_{index:04}");
    let seq_dir = out_dir.join(&rel_dir);
    std::fs::create_dir_all(&seq_dir).map_err(|e| Error::io(&seq_dir, e))?;
    let images: Vec<String> = scene
        .images
        .iter()
        .enumerate()
        .map(|(q, img)| {
            let name = format!("{rel_dir}/image_{q}.wav");
            img.write_wav(&out_dir.join(&name)).map(|_| name)
        })
        .collect::<Result<_>>()?;
    let target_name = format!("{rel_dir}/target.wav");
    target.write_wav(&out_dir.join(&target_name))?;
    let labels_name = format!("{rel_dir}/labels.json");
    write_json(
        &out_dir.join(&labels_name),
        &SequenceLabels {
            frame_len,
            hop: frame_len / 2,
            activity: scene.activity.clone(),
        },
    )?;

    let mut entries = Vec::with_capacity(snrs.len());
    for (k, &snr) in snrs.iter().enumerate() {
        let spec_k = ScenarioSpec {
            snr_db: snr,
            ..spec.clone()
        };
        let tag = snr_tag(snr);
        let scenario_name = format!("{rel_dir}/scenario{tag}.json");
        write_json(&out_dir.join(&scenario_name), &spec_k)?;
        let mut noise_rng = ChaCha8Rng::seed_from_u64(spec.seed);
        noise_rng.set_stream(k as u64);
        let mixture = mix_noise(&scene.mixture, snr, &mut noise_rng)?;
        let mixture_name = format!("{rel_dir}/mixture{tag}.wav");
        mixture.write_wav(&out_dir.join(&mixture_name))?;
        entries.push(ManifestEntry {
            sequence: index,
            sequence_seed,
            snr,
            scenario: scenario_name,
            mixture: mixture_name,
            images: images.clone(),
            target: target_name.clone(),
            labels: labels_name.clone(),
        });
    }
    Ok(entries)
}

/// Options shared by every sequence of a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetOptions {
    pub sampler: SamplerConfig,
    pub frame_len: usize,
    pub snr_grid: Vec<f64>,
}

/// Renders `count` sequences into `out_dir` and writes `manifest.json` there.
pub fn build_dataset(
    kind: DatasetKind,
    count: usize,
    global_seed: u64,
    corpus: &dyn SpeechCorpus,
    corpus_name: &str,
    opts: &DatasetOptions,
    out_dir: &Path,
) -> Result<DatasetManifest> {
    opts.sampler.validate()?;
    if kind.is_noisy() && opts.snr_grid.is_empty() {
        return Err(Error::Config(format!("{kind} needs a non-empty SNR grid")));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let per_sequence: Vec<Vec<ManifestEntry>> = (0..count)
        .into_par_iter()
        .map(|i| {
            render_sequence(
                kind,
                i,
                global_seed,
                corpus,
                &opts.sampler,
                opts.frame_len,
                &opts.snr_grid,
                out_dir,
            )
        })
        .collect::<Result<_>>()?;
    let manifest = DatasetManifest {
        format_version: MANIFEST_VERSION,
        kind,
        global_seed,
        count,
        frame_len: opts.frame_len,
        snr_grid: if kind.is_noisy() { opts.snr_grid.clone() } else { Vec::new() },
        corpus: corpus_name.to_string(),
        sampler: opts.sampler.clone(),
        entries: per_sequence.into_iter().flatten().collect(),
    };
    manifest.write(out_dir)?;
    Ok(manifest)
}
