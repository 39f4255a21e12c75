//! Speaker corpora: a directory of mono recordings, or a synthetic
//! speech-like generator used when no recordings are available.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::wave::MultichannelWave;

/// Source of dry single-channel speech keyed by speaker id.
pub trait SpeechCorpus: Send + Sync {
    fn speakers(&self) -> Vec<String>;

    /// `len` samples of speech from `speaker`; the same `(speaker, utterance)`
    /// pair always yields the same signal.
    fn utterance(&self, speaker: &str, utterance: u64, len: usize, fs: u32) -> Result<Vec<f64>>;
}

/// Voice parameters of one synthetic speaker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeakerProfile {
    pub f0_mean: f64,
    /// Relative f0 excursion.
    pub f0_spread: f64,
    /// Vocal-tract scaling of all formants.
    pub formant_scale: f64,
    /// Level of aspiration noise in voiced parts.
    pub breathiness: f64,
    /// Syllables per second.
    pub rate: f64,
    /// Spectral tilt exponent of the glottal source.
    pub tilt: f64,
}

impl SpeakerProfile {
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let female = rng.gen_bool(0.5);
        Self {
            f0_mean: if female {
                rng.gen_range(165.0..260.0)
            } else {
                rng.gen_range(85.0..150.0)
            },
            f0_spread: rng.gen_range(0.08..0.2),
            formant_scale: if female {
                rng.gen_range(1.05..1.2)
            } else {
                rng.gen_range(0.88..1.02)
            },
            breathiness: rng.gen_range(0.02..0.12),
            rate: rng.gen_range(3.0..5.5),
            tilt: rng.gen_range(0.8..1.4),
        }
    }

    /// Profile derived deterministically from a speaker id.
    pub fn from_id(id: &str) -> Self {
        Self::random(&mut ChaCha8Rng::from_seed(seed_from_str(id)))
    }
}

fn seed_from_str(s: &str) -> [u8; 32] {
    Sha256::digest(s.as_bytes()).into()
}

/// Separately synthesized components of a speech-like signal, scaled by the
/// same factor so that `harmonic + noise` peaks at 0.5.
#[derive(Debug, Clone)]
pub struct SpeechParts {
    pub harmonic: Vec<f64>,
    pub noise: Vec<f64>,
}

impl SpeechParts {
    pub fn combined(&self) -> Vec<f64> {
        self.harmonic.iter().zip(&self.noise).map(|(a, b)| a + b).collect()
    }
}

// (F1, F2, F3) of a few vowels for an adult male vocal tract, Hz
const VOWELS: [[f64; 3]; 6] = [
    [730.0, 1090.0, 2440.0],
    [270.0, 2290.0, 3010.0],
    [530.0, 1840.0, 2480.0],
    [570.0, 840.0, 2410.0],
    [300.0, 870.0, 2240.0],
    [660.0, 1720.0, 2410.0],
];
const FORMANT_BW: [f64; 3] = [90.0, 120.0, 180.0];

struct Syllable {
    start: usize,
    end: usize,
    voiced: bool,
    formants: [f64; 3],
    gain: f64,
    f0_scale: f64,
    fricative_center: f64,
}

fn plan_syllables<R: Rng + ?Sized>(p: &SpeakerProfile, n: usize, fs: f64, rng: &mut R) -> Vec<Syllable> {
    let mut out = Vec::new();
    let mut t = rng.gen_range(0.0..0.15) * fs;
    while (t as usize) < n {
        let len = rng.gen_range(0.6..1.4) / p.rate * fs;
        let voiced = rng.gen_bool(0.8);
        let v = VOWELS[rng.gen_range(0..VOWELS.len())];
        out.push(Syllable {
            start: t as usize,
            end: ((t + len) as usize).min(n),
            voiced,
            formants: [
                v[0] * p.formant_scale,
                v[1] * p.formant_scale,
                v[2] * p.formant_scale,
            ],
            gain: rng.gen_range(0.35..1.0),
            f0_scale: 1.0 + p.f0_spread * rng.gen_range(-1.0..1.0),
            fricative_center: rng.gen_range(2500.0..6000.0),
        });
        let gap = if rng.gen_bool(0.15) {
            rng.gen_range(0.25..0.6)
        } else {
            rng.gen_range(0.02..0.12)
        };
        t += len + gap * fs;
    }
    out
}

fn envelope(i: usize, syl: &Syllable, fs: f64) -> f64 {
    let ramp = (0.02 * fs).min((syl.end - syl.start) as f64 / 2.0).max(1.0);
    let a = (i - syl.start) as f64;
    let b = (syl.end - i) as f64;
    let r = (a / ramp).min(b / ramp).min(1.0);
    0.5 - 0.5 * (PI * r).cos()
}

fn formant_gain(f: f64, formants: &[f64; 3], scale: f64) -> f64 {
    formants
        .iter()
        .zip(FORMANT_BW)
        .enumerate()
        .map(|(i, (&fc, bw))| {
            let bw = bw * scale;
            let w = [1.0, 0.6, 0.3][i];
            w / (1.0 + ((f - fc) / bw).powi(2))
        })
        .sum::<f64>()
        + 0.02
}

/// Two-pole resonator coefficients for white-noise shaping.
fn resonator(center: f64, bw: f64, fs: f64) -> (f64, f64, f64) {
    let r = (-PI * bw / fs).exp();
    let theta = 2.0 * PI * center / fs;
    let a1 = -2.0 * r * theta.cos();
    let a2 = r * r;
    let g = (1.0 - r) * (1.0 - 2.0 * r * (2.0 * theta).cos() + r * r).sqrt();
    (a1, a2, g)
}

fn synth_parts<R: Rng + ?Sized>(p: &SpeakerProfile, n: usize, fs: u32, rng: &mut R) -> SpeechParts {
    let fsf = f64::from(fs);
    let syllables = plan_syllables(p, n, fsf, rng);
    let mut harmonic = vec![0.0; n];
    let mut noise = vec![0.0; n];
    let nyq = fsf / 2.0;
    let mut phase = 0.0;
    // slow f0 drift
    let drift_rate = rng.gen_range(0.2..0.6);
    let drift_phase = rng.gen_range(0.0..2.0 * PI);
    let mut y1 = 0.0;
    let mut y2 = 0.0;
    for syl in &syllables {
        let (a1, a2, g) = resonator(syl.fricative_center, 1500.0, fsf);
        let mut amps: Vec<f64> = Vec::new();
        let mut last_f0 = 0.0;
        for i in syl.start..syl.end {
            let env = envelope(i, syl, fsf) * syl.gain;
            let t = i as f64 / fsf;
            let decl = 1.0 - 0.1 * (i - syl.start) as f64 / (syl.end - syl.start).max(1) as f64;
            let f0 = p.f0_mean
                * syl.f0_scale
                * decl
                * (1.0 + 0.5 * p.f0_spread * (2.0 * PI * drift_rate * t + drift_phase).sin());
            phase = (phase + 2.0 * PI * f0 / fsf) % (2.0 * PI);
            let white: f64 = rng.sample(StandardNormal);
            if syl.voiced {
                if (f0 - last_f0).abs() > 2.0 || amps.is_empty() {
                    let k_max = ((nyq * 0.9) / f0).floor() as usize;
                    amps = (1..=k_max)
                        .map(|k| {
                            let f = k as f64 * f0;
                            formant_gain(f, &syl.formants, p.formant_scale) / (k as f64).powf(p.tilt * 0.5)
                        })
                        .collect();
                    last_f0 = f0;
                }
                let h: f64 = amps
                    .iter()
                    .enumerate()
                    .map(|(k, a)| a * ((k + 1) as f64 * phase).sin())
                    .sum();
                harmonic[i] = env * h;
                noise[i] = env * p.breathiness * white;
            } else {
                let y = g * white - a1 * y1 - a2 * y2;
                y2 = y1;
                y1 = y;
                noise[i] = env * 0.6 * (y + 0.3 * white);
            }
        }
    }
    let peak = harmonic
        .iter()
        .zip(&noise)
        .fold(0.0f64, |m, (a, b)| m.max((a + b).abs()));
    if peak > 0.0 {
        let s = 0.5 / peak;
        harmonic.iter_mut().for_each(|v| *v *= s);
        noise.iter_mut().for_each(|v| *v *= s);
    }
    SpeechParts { harmonic, noise }
}

/// Speech-like signal of a random voice, peak-normalized to 0.5.
pub fn synth_speechlike<R: Rng + ?Sized>(duration: f64, fs: u32, rng: &mut R) -> Vec<f64> {
    synth_speechlike_parts(duration, fs, rng).combined()
}

pub fn synth_speechlike_parts<R: Rng + ?Sized>(duration: f64, fs: u32, rng: &mut R) -> SpeechParts {
    let profile = SpeakerProfile::random(rng);
    let n = (duration * f64::from(fs)).round() as usize;
    synth_parts(&profile, n, fs, rng)
}

/// Synthetic speakers `syn-<split>-NNN`, each with a fixed voice profile.
#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    split: String,
    num_speakers: usize,
}

impl SyntheticCorpus {
    pub fn new(split: impl Into<String>, num_speakers: usize) -> Self {
        Self {
            split: split.into(),
            num_speakers,
        }
    }
}

impl SpeechCorpus for SyntheticCorpus {
    fn speakers(&self) -> Vec<String> {
        (0..self.num_speakers)
            .map(|i| format!("syn-{}-{i:03}", self.split))
            .collect()
    }

    fn utterance(&self, speaker: &str, utterance: u64, len: usize, fs: u32) -> Result<Vec<f64>> {
        let profile = SpeakerProfile::from_id(speaker);
        let mut seed = seed_from_str(speaker);
        for (b, u) in seed.iter_mut().zip(utterance.to_le_bytes()) {
            *b ^= u;
        }
        let mut rng = ChaCha8Rng::from_seed(seed);
        Ok(synth_parts(&profile, len, fs, &mut rng).combined())
    }
}

/// Mono recordings laid out as `<root>/<speaker id>/*.wav`.
#[derive(Debug, Clone)]
pub struct DirectoryCorpus {
    root: PathBuf,
    files: BTreeMap<String, Vec<PathBuf>>,
}

impl DirectoryCorpus {
    pub fn open(root: &Path) -> Result<Self> {
        let mut files = BTreeMap::new();
        let entries = std::fs::read_dir(root).map_err(|e| Error::io(root, e))?;
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(root, e))?;
            let path = entry.path();
            if !path.is_dir() {
                continue;
            }
            let mut wavs: Vec<PathBuf> = std::fs::read_dir(&path)
                .map_err(|e| Error::io(&path, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
                .collect();
            wavs.sort();
            if !wavs.is_empty() {
                files.insert(entry.file_name().to_string_lossy().into_owned(), wavs);
            }
        }
        if files.is_empty() {
            return Err(Error::CorpusExhausted(format!("no speaker directories in {root:?}")));
        }
        Ok(Self {
            root: root.to_path_buf(),
            files,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }
}

impl SpeechCorpus for DirectoryCorpus {
    fn speakers(&self) -> Vec<String> {
        self.files.keys().cloned().collect()
    }

    /// Concatenates the speaker's files in a seed-dependent order until
    /// `len` samples are collected.
    fn utterance(&self, speaker: &str, utterance: u64, len: usize, fs: u32) -> Result<Vec<f64>> {
        let files = self
            .files
            .get(speaker)
            .ok_or_else(|| Error::CorpusExhausted(format!("unknown speaker {speaker:?}")))?;
        let mut order = files.clone();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(utterance));
        let mut out = Vec::with_capacity(len);
        for path in order.iter().cycle().take(order.len() * 64) {
            if out.len() >= len {
                break;
            }
            let wave = MultichannelWave::read_wav(path)?;
            if wave.sample_rate() != fs {
                return Err(Error::SampleRateMismatch {
                    expected: fs,
                    got: wave.sample_rate(),
                });
            }
            out.extend_from_slice(wave.channel(0));
        }
        if out.len() < len {
            return Err(Error::CorpusExhausted(format!(
                "speaker {speaker:?} has too little audio for {len} samples"
            )));
        }
        out.truncate(len);
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rustfft::num_complex::Complex64;
    use rustfft::FftPlanner;

    fn max_ncc(a: &[f64], b: &[f64], max_lag: usize) -> f64 {
        let ea: f64 = a.iter().map(|v| v * v).sum();
        let eb: f64 = b.iter().map(|v| v * v).sum();
        let norm = (ea * eb).sqrt();
        let mut best = 0.0f64;
        for lag in 0..=max_lag {
            for (x, y) in [(a, b), (b, a)] {
                let c: f64 = x.iter().zip(&y[lag.min(y.len())..]).map(|(p, q)| p * q).sum();
                best = best.max(c.abs() / norm);
            }
        }
        best
    }

    /// Geometric over arithmetic mean of the averaged power spectrum.
    fn flatness(x: &[f64]) -> f64 {
        let n = 512;
        let fft = FftPlanner::new().plan_fft_forward(n);
        let mut psd = vec![0.0; n / 2];
        for frame in x.chunks_exact(n) {
            if frame.iter().all(|&v| v == 0.0) {
                continue;
            }
            let mut buf: Vec<Complex64> = frame.iter().map(|&v| Complex64::new(v, 0.0)).collect();
            fft.process(&mut buf);
            for (p, b) in psd.iter_mut().zip(&buf) {
                *p += b.norm_sqr();
            }
        }
        // 200 Hz .. 7 kHz at 16 kHz
        let band = &psd[6..224];
        let geo = (band.iter().map(|p| (p + 1e-30).ln()).sum::<f64>() / band.len() as f64).exp();
        let arith = band.iter().sum::<f64>() / band.len() as f64;
        geo / arith
    }

    #[test]
    fn deterministic_and_peak_normalized() {
        let a = synth_speechlike(7.0, 16000, &mut ChaCha8Rng::seed_from_u64(1));
        let b = synth_speechlike(7.0, 16000, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(a, b);
        assert_eq!(a.len(), 112_000);
        let peak = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!((peak - 0.5).abs() < 1e-12);
    }

    #[test]
    fn contains_pauses() {
        let a = synth_speechlike(7.0, 16000, &mut ChaCha8Rng::seed_from_u64(2));
        let silent_blocks = a.chunks(800).filter(|c| c.iter().all(|&v| v == 0.0)).count();
        assert!(silent_blocks >= 2, "{silent_blocks}");
    }

    #[test]
    fn different_seeds_decorrelate() {
        let a = synth_speechlike(3.0, 16000, &mut ChaCha8Rng::seed_from_u64(10));
        let b = synth_speechlike(3.0, 16000, &mut ChaCha8Rng::seed_from_u64(11));
        assert!(max_ncc(&a, &b, 400) < 0.5);
    }

    #[test]
    fn noise_part_flatter_than_harmonic_part() {
        for seed in 0..3 {
            let parts = synth_speechlike_parts(4.0, 16000, &mut ChaCha8Rng::seed_from_u64(seed));
            let fh = flatness(&parts.harmonic);
            let fnz = flatness(&parts.noise);
            assert!(fnz > fh, "seed {seed}: noise {fnz} harmonic {fh}");
        }
    }

    #[test]
    fn synthetic_corpus_is_deterministic_per_utterance() {
        let c = SyntheticCorpus::new("test", 4);
        assert_eq!(c.speakers()[3], "syn-test-003");
        let a = c.utterance("syn-test-001", 5, 16000, 16000).unwrap();
        let b = c.utterance("syn-test-001", 5, 16000, 16000).unwrap();
        let d = c.utterance("syn-test-001", 6, 16000, 16000).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, d);
    }

    #[test]
    fn directory_corpus_reads_speakers() {
        let dir = tempfile::tempdir().unwrap();
        for spk in ["alice", "bob"] {
            std::fs::create_dir(dir.path().join(spk)).unwrap();
            for i in 0..2 {
                let w = MultichannelWave::mono(vec![0.1 * (i + 1) as f64; 1000], 16000).unwrap();
                w.write_wav(&dir.path().join(spk).join(format!("{i}.wav"))).unwrap();
            }
        }
        let c = DirectoryCorpus::open(dir.path()).unwrap();
        assert_eq!(c.speakers(), vec!["alice", "bob"]);
        let u = c.utterance("bob", 3, 1500, 16000).unwrap();
        assert_eq!(u.len(), 1500);
        assert!(matches!(c.utterance("carol", 0, 10, 16000), Err(Error::CorpusExhausted(_))));
        assert!(matches!(
            c.utterance("bob", 0, 10, 8000),
            Err(Error::SampleRateMismatch { .. })
        ));
    }
}
