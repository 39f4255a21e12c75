use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::rir::{reflection_coefficient, synth_rir_with};
use super::{ScenarioSpec, Snr};
use crate::error::{Error, Result};
use crate::spectral::num_frames_for;
use crate::wave::MultichannelWave;

/// Ground-truth label of one STFT frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "i64", try_from = "i64")]
pub enum FrameLabel {
    Pause,
    /// Zero-based source index.
    Source(usize),
}

impl From<FrameLabel> for i64 {
    fn from(l: FrameLabel) -> i64 {
        match l {
            FrameLabel::Pause => 0,
            FrameLabel::Source(q) => q as i64 + 1,
        }
    }
}

impl TryFrom<i64> for FrameLabel {
    type Error = String;

    fn try_from(v: i64) -> std::result::Result<Self, String> {
        match v {
            0 => Ok(FrameLabel::Pause),
            v if v > 0 => Ok(FrameLabel::Source(v as usize - 1)),
            v => Err(format!("invalid frame label {v}")),
        }
    }
}

/// Pause threshold relative to the loudest frame.
const PAUSE_THRESHOLD_DB: f64 = -40.0;

#[derive(Debug, Clone)]
pub struct RenderedScene {
    pub mixture: MultichannelWave,
    pub images: Vec<MultichannelWave>,
    pub activity: Vec<FrameLabel>,
}

/// Linear convolution truncated to `out_len` samples.
pub(crate) fn convolve(x: &[f64], h: &[f64], out_len: usize) -> Vec<f64> {
    if x.is_empty() || h.is_empty() {
        return vec![0.0; out_len];
    }
    let full = x.len() + h.len() - 1;
    let n = full.next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut a: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    a.resize(n, Complex64::new(0.0, 0.0));
    let mut b: Vec<Complex64> = h.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    b.resize(n, Complex64::new(0.0, 0.0));
    fwd.process(&mut a);
    fwd.process(&mut b);
    for (p, q) in a.iter_mut().zip(&b) {
        *p *= q;
    }
    inv.process(&mut a);
    let scale = 1.0 / n as f64;
    (0..out_len)
        .map(|i| if i < full { a[i].re * scale } else { 0.0 })
        .collect()
}

/// Dry signal of every source with samples outside its scheduled segments
/// zeroed.
fn gate(spec: &ScenarioSpec, dry: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = spec.num_samples();
    let mut out = vec![vec![0.0; n]; spec.sources.len()];
    for seg in &spec.schedule {
        let (a, b) = spec.segment_samples(seg);
        out[seg.source][a..b].copy_from_slice(&dry[seg.source][a..b]);
    }
    out
}

/// Per-frame labels from gated dry signals, using the STFT frame layout.
pub fn frame_activity(gated: &[Vec<f64>], frame_len: usize, hop: usize) -> Vec<FrameLabel> {
    let len = gated.first().map_or(0, Vec::len);
    let num_frames = num_frames_for(len, hop);
    let energies: Vec<Vec<f64>> = (0..num_frames)
        .map(|tau| {
            let start = tau as isize * hop as isize - hop as isize;
            gated
                .iter()
                .map(|x| {
                    (0..frame_len as isize)
                        .map(|n| start + n)
                        .filter(|&t| t >= 0 && (t as usize) < len)
                        .map(|t| x[t as usize] * x[t as usize])
                        .sum::<f64>()
                })
                .collect()
        })
        .collect();
    let totals: Vec<f64> = energies.iter().map(|e| e.iter().sum()).collect();
    let max = totals.iter().cloned().fold(0.0, f64::max);
    let threshold = max * 10f64.powf(PAUSE_THRESHOLD_DB / 10.0);
    energies
        .iter()
        .zip(&totals)
        .map(|(e, &total)| {
            if max == 0.0 || total < threshold {
                FrameLabel::Pause
            } else {
                let q = (0..e.len()).max_by(|&a, &b| e[a].total_cmp(&e[b])).unwrap_or(0);
                FrameLabel::Source(q)
            }
        })
        .collect()
}

/// Renders the reverberant image of every source at every microphone and
/// their sum. Noise is not added here.
pub fn render_scene(
    spec: &ScenarioSpec,
    dry: &[MultichannelWave],
    frame_len: usize,
    hop: usize,
) -> Result<RenderedScene> {
    if dry.len() != spec.sources.len() {
        return Err(Error::Shape(format!(
            "{} dry signals for {} sources",
            dry.len(),
            spec.sources.len()
        )));
    }
    let n = spec.num_samples();
    for (q, d) in dry.iter().enumerate() {
        if d.sample_rate() != spec.sample_rate {
            return Err(Error::SampleRateMismatch {
                expected: spec.sample_rate,
                got: d.sample_rate(),
            });
        }
        let needed = spec
            .schedule
            .iter()
            .filter(|s| s.source == q)
            .map(|s| spec.segment_samples(s).1)
            .max()
            .unwrap_or(0);
        if d.len() < needed {
            return Err(Error::DrySignalTooShort {
                source_index: q,
                len: d.len(),
                needed,
            });
        }
    }
    let padded: Vec<Vec<f64>> = dry
        .iter()
        .map(|d| {
            let mut v = d.channel(0).to_vec();
            v.resize(n.max(v.len()), 0.0);
            v
        })
        .collect();
    let gated = gate(spec, &padded);
    let mics = spec.array.mic_positions();
    if !(spec.room.rt60 > 0.0) {
        return Err(Error::Config(format!("rt60 must be positive, got {}", spec.room.rt60)));
    }
    let beta = reflection_coefficient(&spec.room, spec.sample_rate);
    let mut images = Vec::with_capacity(spec.sources.len());
    for (q, src) in spec.sources.iter().enumerate() {
        let mut channels = Vec::with_capacity(mics.len());
        for mic in &mics {
            let h = synth_rir_with(&spec.room, beta, &src.position, mic, spec.sample_rate)?;
            channels.push(convolve(&gated[q], &h, n));
        }
        images.push(MultichannelWave::new(channels, spec.sample_rate)?);
    }
    let mut mixture = MultichannelWave::zeros(mics.len(), n, spec.sample_rate);
    for img in &images {
        mixture = mixture.add(img)?;
    }
    let activity = frame_activity(&gated, frame_len, hop);
    Ok(RenderedScene {
        mixture,
        images,
        activity,
    })
}

/// Adds independent white Gaussian noise to every channel so that the mean
/// signal power over channels divided by the per-channel noise power equals
/// the requested SNR.
pub fn mix_noise<R: Rng + ?Sized>(
    wave: &MultichannelWave,
    snr: Snr,
    rng: &mut R,
) -> Result<MultichannelWave> {
    let Some(db) = snr.db() else {
        return Ok(wave.clone());
    };
    let power = wave.mean_power();
    if power == 0.0 {
        return Err(Error::UndefinedSnr);
    }
    let sigma = (power * 10f64.powf(-db / 10.0)).sqrt();
    let mut out = wave.clone();
    for ch in out.channels_mut() {
        for v in ch.iter_mut() {
            let g: f64 = rng.sample(StandardNormal);
            *v += sigma * g;
        }
    }
    Ok(out)
}
