//! Half-overlapping STFT analysis and overlap-add synthesis.
//!
//! Both directions use a periodic square-root Hann window. At a hop of half
//! the frame length the squared window sums to one, so synthesis is a plain
//! overlap-add of windowed inverse transforms.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::wave::MultichannelWave;

/// Complex one-sided spectra indexed `(channel, frame, bin)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralTensor {
    data: Vec<Complex64>,
    num_channels: usize,
    num_frames: usize,
    num_bins: usize,
    frame_len: usize,
    hop: usize,
    sample_rate: u32,
    signal_len: usize,
}

impl SpectralTensor {
    pub fn zeros(
        num_channels: usize,
        num_frames: usize,
        frame_len: usize,
        sample_rate: u32,
        signal_len: usize,
    ) -> Result<Self> {
        check_framing(frame_len, frame_len / 2)?;
        let num_bins = frame_len / 2 + 1;
        Ok(Self {
            data: vec![Complex64::new(0.0, 0.0); num_channels * num_frames * num_bins],
            num_channels,
            num_frames,
            num_bins,
            frame_len,
            hop: frame_len / 2,
            sample_rate,
            signal_len,
        })
    }

    /// Same framing, different channel count, zero-filled.
    pub fn zeros_like(&self, num_channels: usize) -> Self {
        Self {
            data: vec![Complex64::new(0.0, 0.0); num_channels * self.num_frames * self.num_bins],
            num_channels,
            num_frames: self.num_frames,
            num_bins: self.num_bins,
            frame_len: self.frame_len,
            hop: self.hop,
            sample_rate: self.sample_rate,
            signal_len: self.signal_len,
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
    pub fn frame_len(&self) -> usize {
        self.frame_len
    }
    pub fn hop(&self) -> usize {
        self.hop
    }
    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }
    pub fn signal_len(&self) -> usize {
        self.signal_len
    }

    /// Center frequency of bin `f` in Hz.
    pub fn bin_hz(&self, f: usize) -> f64 {
        f as f64 * f64::from(self.sample_rate) / self.frame_len as f64
    }

    #[inline]
    fn index(&self, m: usize, tau: usize, f: usize) -> usize {
        (m * self.num_frames + tau) * self.num_bins + f
    }

    #[inline]
    pub fn get(&self, m: usize, tau: usize, f: usize) -> Complex64 {
        self.data[self.index(m, tau, f)]
    }

    #[inline]
    pub fn set(&mut self, m: usize, tau: usize, f: usize, v: Complex64) {
        let i = self.index(m, tau, f);
        self.data[i] = v;
    }

    /// Spectrum of one channel at one frame.
    pub fn frame(&self, m: usize, tau: usize) -> &[Complex64] {
        let start = self.index(m, tau, 0);
        &self.data[start..start + self.num_bins]
    }

    pub fn frame_mut(&mut self, m: usize, tau: usize) -> &mut [Complex64] {
        let start = self.index(m, tau, 0);
        let nb = self.num_bins;
        &mut self.data[start..start + nb]
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn same_shape(&self, other: &SpectralTensor) -> bool {
        self.num_channels == other.num_channels
            && self.num_frames == other.num_frames
            && self.num_bins == other.num_bins
            && self.frame_len == other.frame_len
    }

    /// Element-wise sum of two tensors with identical shape.
    pub fn add(&self, other: &SpectralTensor) -> Result<SpectralTensor> {
        if !self.same_shape(other) {
            return Err(Error::Shape("spectral tensors differ in shape".into()));
        }
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(out)
    }

    /// Time-domain energy implied by the one-sided spectra: interior bins
    /// count twice, DC and Nyquist once, all scaled by `1/frame_len`.
    pub fn energy(&self) -> f64 {
        let n = self.frame_len as f64;
        let last = self.num_bins - 1;
        self.data
            .chunks_exact(self.num_bins)
            .map(|frame| {
                frame
                    .iter()
                    .enumerate()
                    .map(|(f, v)| {
                        let w = if f == 0 || f == last { 1.0 } else { 2.0 };
                        w * v.norm_sqr()
                    })
                    .sum::<f64>()
            })
            .sum::<f64>()
            / n
    }

    /// Per-frame energy summed over channels (same scaling as [`Self::energy`]).
    pub fn frame_energies(&self) -> Vec<f64> {
        let n = self.frame_len as f64;
        let last = self.num_bins - 1;
        (0..self.num_frames)
            .map(|tau| {
                (0..self.num_channels)
                    .map(|m| {
                        self.frame(m, tau)
                            .iter()
                            .enumerate()
                            .map(|(f, v)| {
                                let w = if f == 0 || f == last { 1.0 } else { 2.0 };
                                w * v.norm_sqr()
                            })
                            .sum::<f64>()
                    })
                    .sum::<f64>()
                    / n
            })
            .collect()
    }
}

fn check_framing(frame_len: usize, hop: usize) -> Result<()> {
    if frame_len < 4 || frame_len % 2 != 0 {
        return Err(Error::InvalidFraming(format!(
            "frame length {frame_len} must be even and at least 4"
        )));
    }
    if hop * 2 != frame_len {
        return Err(Error::InvalidFraming(format!(
            "hop {hop} must be half the frame length {frame_len}"
        )));
    }
    Ok(())
}

/// Periodic square-root Hann window.
pub fn sqrt_hann(frame_len: usize) -> Vec<f64> {
    (0..frame_len)
        .map(|n| (0.5 - 0.5 * (2.0 * PI * n as f64 / frame_len as f64).cos()).sqrt())
        .collect()
}

/// Number of frames needed so every one of `len` samples lies in exactly two
/// frames, with the first frame starting `hop` samples before the signal.
pub fn num_frames_for(len: usize, hop: usize) -> usize {
    if len == 0 {
        return 1;
    }
    (len - 1) / hop + 2
}

struct Plans {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

fn plans(frame_len: usize) -> Plans {
    let mut planner = FftPlanner::new();
    Plans {
        forward: planner.plan_fft_forward(frame_len),
        inverse: planner.plan_fft_inverse(frame_len),
    }
}

pub fn stft(wave: &MultichannelWave, frame_len: usize, hop: usize) -> Result<SpectralTensor> {
    check_framing(frame_len, hop)?;
    if wave.len() < frame_len {
        return Err(Error::InvalidFraming(format!(
            "wave of {} samples is shorter than one frame ({frame_len})",
            wave.len()
        )));
    }
    let len = wave.len();
    let num_frames = num_frames_for(len, hop);
    let mut out = SpectralTensor::zeros(
        wave.num_channels(),
        num_frames,
        frame_len,
        wave.sample_rate(),
        len,
    )?;
    let window = sqrt_hann(frame_len);
    let fft = plans(frame_len).forward;
    let mut buf = vec![Complex64::new(0.0, 0.0); frame_len];
    for m in 0..wave.num_channels() {
        let x = wave.channel(m);
        for tau in 0..num_frames {
            let start = tau as isize * hop as isize - hop as isize;
            for (n, b) in buf.iter_mut().enumerate() {
                let t = start + n as isize;
                let v = if t >= 0 && (t as usize) < len {
                    x[t as usize]
                } else {
                    0.0
                };
                *b = Complex64::new(v * window[n], 0.0);
            }
            fft.process(&mut buf);
            out.frame_mut(m, tau)
                .copy_from_slice(&buf[..frame_len / 2 + 1]);
        }
    }
    Ok(out)
}

/// Overlap-add synthesis. The one-sided spectrum is extended by conjugate
/// symmetry; imaginary parts of DC and Nyquist are discarded.
pub fn istft(tensor: &SpectralTensor) -> Result<MultichannelWave> {
    check_framing(tensor.frame_len, tensor.hop)?;
    let frame_len = tensor.frame_len;
    let hop = tensor.hop;
    let len = tensor.signal_len;
    if tensor.num_frames < num_frames_for(len, hop) {
        return Err(Error::Shape(format!(
            "{} frames cannot cover {len} samples",
            tensor.num_frames
        )));
    }
    let window = sqrt_hann(frame_len);
    let ifft = plans(frame_len).inverse;
    let scale = 1.0 / frame_len as f64;
    let mut buf = vec![Complex64::new(0.0, 0.0); frame_len];
    let mut channels = Vec::with_capacity(tensor.num_channels);
    for m in 0..tensor.num_channels {
        let mut y = vec![0.0; len];
        for tau in 0..tensor.num_frames {
            let spec = tensor.frame(m, tau);
            buf[0] = Complex64::new(spec[0].re, 0.0);
            buf[frame_len / 2] = Complex64::new(spec[frame_len / 2].re, 0.0);
            for f in 1..frame_len / 2 {
                buf[f] = spec[f];
                buf[frame_len - f] = spec[f].conj();
            }
            ifft.process(&mut buf);
            let start = tau as isize * hop as isize - hop as isize;
            for (n, b) in buf.iter().enumerate() {
                let t = start + n as isize;
                if t >= 0 && (t as usize) < len {
                    y[t as usize] += b.re * scale * window[n];
                }
            }
        }
        channels.push(y);
    }
    MultichannelWave::new(channels, tensor.sample_rate)
}
