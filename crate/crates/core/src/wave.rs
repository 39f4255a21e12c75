//! Time-domain multichannel signals and RIFF WAV persistence.

use std::path::Path;

use hound::{SampleFormat, WavSpec};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `M × T` real samples at a common sample rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultichannelWave {
    channels: Vec<Vec<f64>>,
    sample_rate: u32,
}

impl MultichannelWave {
    pub fn new(channels: Vec<Vec<f64>>, sample_rate: u32) -> Result<Self> {
        if channels.is_empty() {
            return Err(Error::Shape("wave needs at least one channel".into()));
        }
        let len = channels[0].len();
        if channels.iter().any(|c| c.len() != len) {
            return Err(Error::Shape("channels differ in length".into()));
        }
        if channels.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NumericInstability("non-finite sample in wave".into()));
        }
        Ok(Self {
            channels,
            sample_rate,
        })
    }

    pub fn zeros(num_channels: usize, len: usize, sample_rate: u32) -> Self {
        Self {
            channels: vec![vec![0.0; len]; num_channels],
            sample_rate,
        }
    }

    pub fn mono(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        Self::new(vec![samples], sample_rate)
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn channel(&self, m: usize) -> &[f64] {
        &self.channels[m]
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.channels
    }

    pub(crate) fn channels_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.channels
    }

    pub fn into_channels(self) -> Vec<Vec<f64>> {
        self.channels
    }

    /// Mean power over all channels and samples.
    pub fn mean_power(&self) -> f64 {
        let n = (self.num_channels() * self.len()).max(1) as f64;
        self.channels.iter().flatten().map(|v| v * v).sum::<f64>() / n
    }

    pub fn peak(&self) -> f64 {
        self.channels.iter().flatten().fold(0.0, |a, v| a.max(v.abs()))
    }

    /// Element-wise sum; both waves must share shape and rate.
    pub fn add(&self, other: &MultichannelWave) -> Result<MultichannelWave> {
        self.check_same_shape(other)?;
        let channels = self
            .channels
            .iter()
            .zip(&other.channels)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect())
            .collect();
        Ok(MultichannelWave {
            channels,
            sample_rate: self.sample_rate,
        })
    }

    fn check_same_shape(&self, other: &MultichannelWave) -> Result<()> {
        if self.sample_rate != other.sample_rate {
            return Err(Error::SampleRateMismatch {
                expected: self.sample_rate,
                got: other.sample_rate,
            });
        }
        if self.num_channels() != other.num_channels() || self.len() != other.len() {
            return Err(Error::Shape(format!(
                "{}x{} vs {}x{}",
                self.num_channels(),
                self.len(),
                other.num_channels(),
                other.len()
            )));
        }
        Ok(())
    }

    /// Writes 32-bit float interleaved WAV.
    pub fn write_wav(&self, path: &Path) -> Result<()> {
        let spec = WavSpec {
            channels: self.num_channels() as u16,
            sample_rate: self.sample_rate,
            bits_per_sample: 32,
            sample_format: SampleFormat::Float,
        };
        let wav_err = |source| Error::Wav {
            path: path.to_path_buf(),
            source,
        };
        let mut writer = hound::WavWriter::create(path, spec).map_err(wav_err)?;
        for t in 0..self.len() {
            for ch in &self.channels {
                writer.write_sample(ch[t] as f32).map_err(wav_err)?;
            }
        }
        writer.finalize().map_err(wav_err)
    }

    /// Reads 16-bit PCM or 32-bit float WAV, de-interleaving the channels.
    pub fn read_wav(path: &Path) -> Result<Self> {
        let wav_err = |source| Error::Wav {
            path: path.to_path_buf(),
            source,
        };
        let mut reader = hound::WavReader::open(path).map_err(wav_err)?;
        let spec = reader.spec();
        let num_channels = spec.channels as usize;
        let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
            (SampleFormat::Float, 32) => reader
                .samples::<f32>()
                .map(|s| s.map(f64::from))
                .collect::<std::result::Result<_, _>>()
                .map_err(wav_err)?,
            (SampleFormat::Int, 16) => reader
                .samples::<i16>()
                .map(|s| s.map(|v| f64::from(v) / 32768.0))
                .collect::<std::result::Result<_, _>>()
                .map_err(wav_err)?,
            (fmt, bits) => {
                return Err(Error::Format {
                    path: path.to_path_buf(),
                    reason: format!("unsupported sample format {fmt:?}/{bits} bit"),
                })
            }
        };
        let len = interleaved.len() / num_channels;
        let mut channels = vec![Vec::with_capacity(len); num_channels];
        for frame in interleaved.chunks_exact(num_channels) {
            for (ch, &v) in channels.iter_mut().zip(frame) {
                ch.push(v);
            }
        }
        Self::new(channels, spec.sample_rate)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wav_round_trip_preserves_f32_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.wav");
        let wave = MultichannelWave::new(
            vec![vec![0.25, -0.5, 0.125], vec![1.0, 0.0, -1.0]],
            16000,
        )
        .unwrap();
        wave.write_wav(&path).unwrap();
        let back = MultichannelWave::read_wav(&path).unwrap();
        assert_eq!(back, wave);
    }

    #[test]
    fn reads_16_bit_pcm() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pcm.wav");
        let spec = WavSpec {
            channels: 1,
            sample_rate: 16000,
            bits_per_sample: 16,
            sample_format: SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(&path, spec).unwrap();
        for v in [0i16, 16384, -32768] {
            w.write_sample(v).unwrap();
        }
        w.finalize().unwrap();
        let wave = MultichannelWave::read_wav(&path).unwrap();
        assert_eq!(wave.channel(0), &[0.0, 0.5, -1.0]);
    }

    #[test]
    fn rejects_ragged_and_non_finite() {
        assert!(MultichannelWave::new(vec![vec![0.0; 3], vec![0.0; 2]], 16000).is_err());
        assert!(MultichannelWave::new(vec![vec![f64::NAN]], 16000).is_err());
    }
}
