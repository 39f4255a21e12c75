//! Complex-valued masking network with a tapped GRU bottleneck.
//!
//! Per frame, a channel-shared encoder maps each channel's compressed
//! spectrum to a feature vector, a complex dense layer fuses all channels
//! into `u_in` features (`h_in`), a complex GRU turns these into `u_out`
//! features (`h_out`), and a second dense layer plus a channel-shared decoder
//! expand them back to one complex mask per channel.

mod checkpoint;
mod gru;
mod layers;
mod loss;
mod model;
mod optim;
mod train;

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use gru::{complex_gru_step, ComplexGru, GruStepCache};
pub use layers::{ctanh, CMat, ComplexDense, C64};
pub use loss::{loss, loss_and_grad, mask_gradient, spectral_loss};
pub use model::{compress, tap_features, Activations, Model, Params};
pub use optim::{clip_grad_norm, Adam, AdamConfig};
pub use train::{train, train_step, EpochMetrics, TrainConfig, TrainReport, TrainSample};

use crate::spectral::SpectralTensor;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Floor on magnitudes inside power-law compression.
pub const MAG_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Bottleneck {
    #[default]
    Gru,
    /// Memoryless variant: `h_out = h_in`. Requires `u_in == u_out`.
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub num_channels: usize,
    pub num_bins: usize,
    pub u_in: usize,
    pub u_out: usize,
    pub encoder_widths: Vec<usize>,
    /// Hidden decoder widths; the final layer to `num_bins` is implicit.
    pub decoder_widths: Vec<usize>,
    pub mask_cap: f64,
    /// Power-law exponent applied to input magnitudes.
    pub compression: f64,
    #[serde(default)]
    pub bottleneck: Bottleneck,
    pub seed: u64,
}

impl ModelConfig {
    /// Full-size network for 1024-point frames.
    pub fn paper(num_channels: usize) -> Self {
        Self {
            num_channels,
            num_bins: 513,
            u_in: 128,
            u_out: 128,
            encoder_widths: vec![256, 128],
            decoder_widths: vec![256],
            mask_cap: 10.0,
            compression: 0.3,
            bottleneck: Bottleneck::Gru,
            seed: 0,
        }
    }

    /// Small network for 256-point frames that trains in minutes on a CPU.
    pub fn desk(num_channels: usize) -> Self {
        Self {
            num_channels,
            num_bins: 129,
            u_in: 32,
            u_out: 32,
            encoder_widths: vec![64, 32],
            decoder_widths: vec![64],
            mask_cap: 10.0,
            compression: 0.3,
            bottleneck: Bottleneck::Gru,
            seed: 0,
        }
    }

    pub fn frame_len(&self) -> usize {
        2 * (self.num_bins - 1)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.num_channels == 0 || self.num_bins < 2 || self.u_in == 0 || self.u_out == 0 {
            return bad("model dimensions must be positive (num_bins ≥ 2)".into());
        }
        if self.encoder_widths.contains(&0) || self.decoder_widths.contains(&0) {
            return bad("layer widths must be positive".into());
        }
        if !(self.mask_cap > 0.0 && self.mask_cap.is_finite()) {
            return bad(format!("mask cap must be positive, got {}", self.mask_cap));
        }
        if !(self.compression > 0.0 && self.compression <= 1.0) {
            return bad(format!("compression exponent must lie in (0, 1], got {}", self.compression));
        }
        if self.bottleneck == Bottleneck::Identity && self.u_in != self.u_out {
            return bad("identity bottleneck needs u_in == u_out".into());
        }
        Ok(())
    }
}

/// One complex mask per channel, indexed `(channel, frame, bin)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMask {
    num_channels: usize,
    num_frames: usize,
    num_bins: usize,
    values: Vec<C64>,
}

impl ComplexMask {
    pub fn new(num_channels: usize, num_frames: usize, num_bins: usize, values: Vec<C64>) -> Result<Self> {
        if values.len() != num_channels * num_frames * num_bins {
            return Err(Error::Shape(format!(
                "mask needs {} values, got {}",
                num_channels * num_frames * num_bins,
                values.len()
            )));
        }
        Ok(Self {
            num_channels,
            num_frames,
            num_bins,
            values,
        })
    }

    pub fn constant(num_channels: usize, num_frames: usize, num_bins: usize, v: C64) -> Self {
        Self {
            num_channels,
            num_frames,
            num_bins,
            values: vec![v; num_channels * num_frames * num_bins],
        }
    }

    /// Converts network rows ordered `(frame, channel)` to channel-major layout.
    pub fn from_rows(rows: &CMat, num_channels: usize, num_frames: usize) -> Self {
        let f = rows.cols;
        let mut values = vec![C64::new(0.0, 0.0); rows.data.len()];
        for tau in 0..num_frames {
            for m in 0..num_channels {
                let dst = (m * num_frames + tau) * f;
                values[dst..dst + f].copy_from_slice(rows.row(tau * num_channels + m));
            }
        }
        Self {
            num_channels,
            num_frames,
            num_bins: f,
            values,
        }
    }

    pub fn num_channels(&self) -> usize {
        self.num_channels
    }
    pub fn num_frames(&self) -> usize {
        self.num_frames
    }
    pub fn num_bins(&self) -> usize {
        self.num_bins
    }

    #[inline]
    pub fn get(&self, m: usize, tau: usize, f: usize) -> C64 {
        self.values[(m * self.num_frames + tau) * self.num_bins + f]
    }

    pub fn frame(&self, m: usize, tau: usize) -> &[C64] {
        let s = (m * self.num_frames + tau) * self.num_bins;
        &self.values[s..s + self.num_bins]
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn max_magnitude(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

/// Filter output `Ŝ(τ,f) = Σ_m mask_m(τ,f) X_m(τ,f)`.
pub fn apply_mask(mask: &ComplexMask, x: &SpectralTensor) -> Result<SpectralTensor> {
    if mask.num_channels != x.num_channels() || mask.num_frames != x.num_frames() || mask.num_bins != x.num_bins() {
        return Err(Error::Shape(format!(
            "mask {}×{}×{} does not match tensor {}×{}×{}",
            mask.num_channels,
            mask.num_frames,
            mask.num_bins,
            x.num_channels(),
            x.num_frames(),
            x.num_bins()
        )));
    }
    let mut out = x.zeros_like(1);
    for m in 0..mask.num_channels {
        for tau in 0..mask.num_frames {
            let w = mask.frame(m, tau);
            let xs = x.frame(m, tau);
            for ((o, a), b) in out.frame_mut(0, tau).iter_mut().zip(w).zip(xs) {
                *o += a * b;
            }
        }
    }
    Ok(out)
}

/// GRU input and output features of one sequence, one row per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTrace {
    pub h_in: CMat,
    pub h_out: CMat,
    pub model_checksum: String,
    pub sequence_id: Option<String>,
}

impl FeatureTrace {
    pub fn num_frames(&self) -> usize {
        self.h_in.rows
    }

    pub fn with_sequence(mut self, id: impl Into<String>) -> Self {
        self.sequence_id = Some(id.into());
        self
    }
}
