//! Far-field delay-and-sum beamforming for the uniform linear array, applied
//! as per-bin phase shifts in the STFT domain.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::scene::{ArraySpec, ScenarioSpec};
use crate::spectral::{istft, stft, SpectralTensor};
use crate::wave::MultichannelWave;

/// Unit-magnitude phasors `a_m(f)` of a plane wave from `doa_deg`, relative to
/// microphone 1.
#[derive(Debug, Clone, PartialEq)]
pub struct SteeringVector {
    pub doa_deg: f64,
    pub spacing: f64,
    pub speed_of_sound: f64,
    /// Indexed `[mic][bin]`.
    pub phasors: Vec<Vec<Complex64>>,
}

impl SteeringVector {
    pub fn new(
        num_mics: usize,
        spacing: f64,
        speed_of_sound: f64,
        doa_deg: f64,
        bin_hz: impl Fn(usize) -> f64,
        num_bins: usize,
    ) -> Self {
        let cos = doa_deg.to_radians().cos();
        let phasors = (0..num_mics)
            .map(|m| {
                (0..num_bins)
                    .map(|f| {
                        let phase = -2.0 * std::f64::consts::PI * bin_hz(f) * m as f64 * spacing * cos
                            / speed_of_sound;
                        Complex64::from_polar(1.0, phase)
                    })
                    .collect()
            })
            .collect();
        Self {
            doa_deg,
            spacing,
            speed_of_sound,
            phasors,
        }
    }

    pub fn for_tensor(array: &ArraySpec, speed_of_sound: f64, doa_deg: f64, x: &SpectralTensor) -> Self {
        Self::new(
            array.num_mics,
            array.spacing,
            speed_of_sound,
            doa_deg,
            |f| x.bin_hz(f),
            x.num_bins(),
        )
    }
}

/// `Y(τ,f) = (1/M) Σ_m conj(a_m(f)) X_m(τ,f)`.
pub fn dsb(x: &SpectralTensor, array: &ArraySpec, speed_of_sound: f64, theta_deg: f64) -> Result<SpectralTensor> {
    if x.num_channels() != array.num_mics {
        return Err(Error::GeometryMismatch(format!(
            "tensor has {} channels, array has {} microphones",
            x.num_channels(),
            array.num_mics
        )));
    }
    if !(0.0..=180.0).contains(&theta_deg) {
        return Err(Error::Config(format!("steering angle {theta_deg}° outside [0, 180]")));
    }
    let steer = SteeringVector::for_tensor(array, speed_of_sound, theta_deg, x);
    let inv_m = 1.0 / array.num_mics as f64;
    let mut out = x.zeros_like(1);
    for tau in 0..x.num_frames() {
        for m in 0..x.num_channels() {
            let w = &steer.phasors[m];
            let src = x.frame(m, tau);
            let dst = out.frame_mut(0, tau);
            for f in 0..src.len() {
                dst[f] += w[f].conj() * src[f] * inv_m;
            }
        }
    }
    Ok(out)
}

/// Training target: every source's multichannel image beamformed toward that
/// source's DoA, summed over sources.
pub fn make_target(
    spec: &ScenarioSpec,
    images: &[MultichannelWave],
    frame_len: usize,
) -> Result<MultichannelWave> {
    if let Some(seg) = spec.schedule.iter().find(|s| s.source >= images.len()) {
        return Err(Error::Shape(format!("no image for scheduled source {}", seg.source)));
    }
    let mut acc: Option<Vec<f64>> = None;
    for (q, image) in images.iter().enumerate() {
        let doa = spec
            .sources
            .get(q)
            .ok_or_else(|| Error::Shape(format!("image {q} has no source record")))?
            .doa_deg;
        let x = stft(image, frame_len, frame_len / 2)?;
        let y = istft(&dsb(&x, &spec.array, spec.room.speed_of_sound, doa)?)?;
        let y = y.into_channels().remove(0);
        acc = Some(match acc {
            None => y,
            Some(a) => a.iter().zip(&y).map(|(p, q)| p + q).collect(),
        });
    }
    let samples = acc.unwrap_or_else(|| vec![0.0; spec.num_samples()]);
    MultichannelWave::mono(samples, spec.sample_rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn array() -> ArraySpec {
        ArraySpec::new(3, 0.04, [2.0, 2.0, 1.0], 0.0)
    }

    /// Plane-wave spectra: X_m(τ,f) = a_m(f; θ₀) S(τ,f).
    fn plane_wave(theta: f64, frames: usize, seed: u64) -> SpectralTensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = SpectralTensor::zeros(3, frames, 256, 16000, 128 * (frames - 1)).unwrap();
        let steer = SteeringVector::for_tensor(&array(), 343.0, theta, &x);
        for tau in 0..frames {
            for f in 0..x.num_bins() {
                let s = Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
                for m in 0..3 {
                    x.set(m, tau, f, steer.phasors[m][f] * s);
                }
            }
        }
        x
    }

    #[test]
    fn broadside_is_channel_mean() {
        let x = plane_wave(40.0, 4, 1);
        let y = dsb(&x, &array(), 343.0, 90.0).unwrap();
        for tau in 0..4 {
            for f in 0..x.num_bins() {
                let mean = (x.get(0, tau, f) + x.get(1, tau, f) + x.get(2, tau, f)) / 3.0;
                assert!((y.get(0, tau, f) - mean).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn steered_plane_wave_passes_distortionless() {
        for theta in [0.0, 37.0, 90.0, 151.0, 180.0] {
            let x = plane_wave(theta, 3, 2);
            let y = dsb(&x, &array(), 343.0, theta).unwrap();
            for tau in 0..3 {
                for f in 0..x.num_bins() {
                    let r = x.get(0, tau, f);
                    assert!((y.get(0, tau, f) - r).norm() <= 1e-9 * r.norm().max(1e-12));
                }
            }
        }
    }

    #[test]
    fn steering_has_unit_magnitude_and_reference_phase() {
        let x = plane_wave(0.0, 1, 3);
        let s = SteeringVector::for_tensor(&array(), 343.0, 60.0, &x);
        for m in 0..3 {
            for f in 0..x.num_bins() {
                assert!((s.phasors[m][f].norm() - 1.0).abs() < 1e-12);
                let expect = -2.0 * std::f64::consts::PI * x.bin_hz(f) * m as f64 * 0.04 * 0.5 / 343.0;
                let d = (s.phasors[m][f] * Complex64::from_polar(1.0, -expect)).arg();
                assert!(d.abs() < 1e-9);
            }
            assert_eq!(s.phasors[m][0], Complex64::new(1.0, 0.0));
        }
    }

    #[test]
    fn geometry_mismatch_rejected() {
        let x = SpectralTensor::zeros(2, 2, 256, 16000, 128).unwrap();
        assert!(matches!(dsb(&x, &array(), 343.0, 10.0), Err(Error::GeometryMismatch(_))));
        let x = SpectralTensor::zeros(3, 2, 256, 16000, 128).unwrap();
        assert!(dsb(&x, &array(), 343.0, 181.0).is_err());
    }

    #[test]
    fn white_noise_gain_is_num_mics() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut gains = Vec::new();
        for trial in 0..20 {
            let theta: f64 = rng.gen_range(0.0..180.0);
            let s = plane_wave(theta, 8, 100 + trial);
            let mut x = s.clone();
            for v in x.as_mut_slice() {
                *v += Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
            }
            let noise_in = x.add(&scale(&s, -1.0)).unwrap();
            let y_noise = dsb(&noise_in, &array(), 343.0, theta).unwrap();
            let in_noise = noise_in.energy() / 3.0;
            gains.push(in_noise / y_noise.energy());
        }
        let mean = gains.iter().sum::<f64>() / gains.len() as f64;
        assert!((mean - 3.0).abs() < 0.15, "{mean}");
    }

    fn scale(x: &SpectralTensor, a: f64) -> SpectralTensor {
        let mut y = x.clone();
        y.as_mut_slice().iter_mut().for_each(|v| *v *= a);
        y
    }
}
