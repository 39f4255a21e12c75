use super::checkpoint::Checkpoint;
use super::loss::{loss_and_grad, mask_gradient, spectral_loss};
use super::optim::{clip_grad_norm, AdamConfig};
use super::{apply_mask, ComplexMask};
use crate::scene::{load_entry, DatasetManifest, ManifestEntry};
use crate::spectral::{stft, SpectralTensor};
use crate::{Error, Result};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub optimizer: AdamConfig,
    pub clip_norm: f64,
    pub seed: u64,
    /// Extra checkpoint every this many steps; 0 writes one per epoch only.
    pub checkpoint_every: u64,
    /// Number of manifest entries at the end held out for validation.
    pub val_count: usize,
    /// Stop after this many steps in total, if set.
    #[serde(default)]
    pub max_steps: Option<u64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            optimizer: AdamConfig::default(),
            clip_norm: 5.0,
            seed: 0,
            checkpoint_every: 0,
            val_count: 0,
            max_steps: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub step: u64,
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub grad_norm: f64,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub checkpoint: Checkpoint,
    pub epochs: Vec<EpochMetrics>,
    /// Loss of every step run in this call, in order.
    pub step_losses: Vec<f64>,
}

/// Mixture spectra and target spectrum of one sequence.
pub struct TrainSample {
    pub mixture: SpectralTensor,
    pub target: SpectralTensor,
}

impl TrainSample {
    pub fn load(dir: &Path, entry: &ManifestEntry, frame_len: usize) -> Result<Self> {
        let e = load_entry(dir, entry)?;
        let hop = frame_len / 2;
        Ok(Self {
            mixture: stft(&e.mixture, frame_len, hop)?,
            target: stft(&e.target, frame_len, hop)?,
        })
    }
}

/// One optimizer update on a single sequence. Returns the loss before the
/// update and the unclipped gradient norm. Parameters are untouched when the
/// loss or gradient is not finite.
pub fn train_step(ckpt: &mut Checkpoint, sample: &TrainSample, clip_norm: f64) -> Result<(f64, f64)> {
    let model = &ckpt.model;
    let acts = model.forward_cached(&sample.mixture)?;
    let mask = ComplexMask::from_rows(&acts.mask, model.config.num_channels, acts.frames);
    let estimate = apply_mask(&mask, &sample.mixture)?;
    let (loss, g_est) = loss_and_grad(&estimate, &sample.target)?;
    if !loss.is_finite() {
        return Err(Error::Divergence {
            step: ckpt.step,
            loss,
        });
    }
    let g_mask = mask_gradient(&g_est, &sample.mixture);
    let mut grad = model.backward(&acts, &g_mask);
    let norm = clip_grad_norm(&mut grad, clip_norm);
    if !norm.is_finite() {
        return Err(Error::Divergence {
            step: ckpt.step,
            loss: norm,
        });
    }
    ckpt.optimizer.step(&mut ckpt.model.params, &grad);
    ckpt.step += 1;
    Ok((loss, norm))
}

fn validation_loss(ckpt: &Checkpoint, dir: &Path, entries: &[ManifestEntry]) -> Result<Option<f64>> {
    if entries.is_empty() {
        return Ok(None);
    }
    let frame_len = ckpt.model.config.frame_len();
    let mut sum = 0.0;
    for e in entries {
        let s = TrainSample::load(dir, e, frame_len)?;
        let (mask, _) = ckpt.model.forward(&s.mixture)?;
        sum += spectral_loss(&apply_mask(&mask, &s.mixture)?, &s.target)?;
    }
    Ok(Some(sum / entries.len() as f64))
}

struct Outputs {
    dir: PathBuf,
    metrics: std::fs::File,
}

impl Outputs {
    fn open(dir: &Path, append: bool) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join("metrics.csv");
        let fresh = !append || !path.exists();
        let mut metrics = std::fs::OpenOptions::new()
            .create(true)
            .append(!fresh)
            .write(true)
            .truncate(fresh)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        if fresh {
            writeln!(metrics, "step,epoch,train_loss,val_loss,grad_norm").map_err(|e| Error::io(&path, e))?;
        }
        Ok(Self {
            dir: dir.to_path_buf(),
            metrics,
        })
    }

    fn log(&mut self, m: &EpochMetrics) -> Result<()> {
        let val = m.val_loss.map(|v| format!("{v:.8e}")).unwrap_or_default();
        writeln!(
            self.metrics,
            "{},{},{:.8e},{},{:.6e}",
            m.step, m.epoch, m.train_loss, val, m.grad_norm
        )
        .map_err(|e| Error::io(self.dir.join("metrics.csv"), e))
    }
}

/// Per-epoch visiting order of the training entries.
fn epoch_order(seed: u64, epoch: usize, n: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64 + 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

/// Trains `start` on the manifest entries, one sequence per step.
///
/// Training resumes from `start.step`: completed epochs are skipped and the
/// current epoch continues at the same position of its fixed shuffle. With
/// `out_dir` set, `metrics.csv`, `last.ckpt` and periodic
/// `step_NNNNNNNN.ckpt` files are written there; on divergence the last good
/// state is saved as `last_good.ckpt` before the error is returned.
pub fn train(
    start: Checkpoint,
    manifest: &DatasetManifest,
    dir: &Path,
    cfg: &TrainConfig,
    out_dir: Option<&Path>,
) -> Result<TrainReport> {
    let frame_len = start.model.config.frame_len();
    if manifest.frame_len != frame_len {
        log::warn!(
            "manifest frame length {} differs from model frame length {}; spectra are recomputed",
            manifest.frame_len,
            frame_len
        );
    }
    if cfg.val_count >= manifest.entries.len() {
        return Err(Error::Config(format!(
            "validation count {} leaves no training entries out of {}",
            cfg.val_count,
            manifest.entries.len()
        )));
    }
    let split = manifest.entries.len() - cfg.val_count;
    let (train_entries, val_entries) = manifest.entries.split_at(split);
    let per_epoch = train_entries.len() as u64;
    let mut outputs = match out_dir {
        Some(d) => Some(Outputs::open(d, start.step > 0)?),
        None => None,
    };

    let mut ckpt = start;
    ckpt.train_seed = cfg.seed;
    ckpt.threads = rayon::current_num_threads();
    ckpt.optimizer.config = cfg.optimizer;
    let mut report_epochs = Vec::new();
    let mut step_losses = Vec::new();
    let first_epoch = (ckpt.step / per_epoch) as usize;
    'epochs: for epoch in first_epoch..cfg.epochs {
        let order = epoch_order(cfg.seed, epoch, train_entries.len());
        let skip = if epoch == first_epoch { (ckpt.step % per_epoch) as usize } else { 0 };
        let (mut loss_sum, mut norm_sum, mut count) = (0.0, 0.0, 0usize);
        for &idx in &order[skip..] {
            if cfg.max_steps.is_some_and(|m| ckpt.step >= m) {
                break 'epochs;
            }
            let sample = TrainSample::load(dir, &train_entries[idx], frame_len)?;
            let before = ckpt.clone();
            match train_step(&mut ckpt, &sample, cfg.clip_norm) {
                Ok((loss, norm)) => {
                    loss_sum += loss;
                    norm_sum += norm;
                    count += 1;
                    step_losses.push(loss);
                    log::debug!("step {} loss {loss:.6e} grad {norm:.3e}", ckpt.step);
                }
                Err(e @ Error::Divergence { .. }) => {
                    if let Some(o) = &outputs {
                        before.save(&o.dir.join("last_good.ckpt"))?;
                    }
                    return Err(e);
                }
                Err(e) => return Err(e),
            }
            if let Some(o) = &outputs {
                if cfg.checkpoint_every > 0 && ckpt.step % cfg.checkpoint_every == 0 {
                    ckpt.save(&o.dir.join(format!("step_{:08}.ckpt", ckpt.step)))?;
                }
            }
        }
        if count == 0 {
            continue;
        }
        let metrics = EpochMetrics {
            step: ckpt.step,
            epoch,
            train_loss: loss_sum / count as f64,
            val_loss: validation_loss(&ckpt, dir, val_entries)?,
            grad_norm: norm_sum / count as f64,
        };
        log::info!(
            "epoch {epoch} step {} train {:.5} val {}",
            metrics.step,
            metrics.train_loss,
            metrics.val_loss.map(|v| format!("{v:.5}")).unwrap_or_else(|| "-".into())
        );
        if let Some(o) = &mut outputs {
            o.log(&metrics)?;
            ckpt.save(&o.dir.join("last.ckpt"))?;
        }
        report_epochs.push(metrics);
    }
    if let Some(o) = &outputs {
        ckpt.save(&o.dir.join("last.ckpt"))?;
    }
    Ok(TrainReport {
        checkpoint: ckpt,
        epochs: report_epochs,
        step_losses,
    })
}
