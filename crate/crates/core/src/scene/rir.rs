//! Image-source room impulse responses for shoebox rooms with uniform,
//! frequency-independent wall reflection.

use std::f64::consts::PI;

use super::RoomSpec;
use crate::error::{Error, Result};

/// Length of the Hann-windowed sinc used for fractional delays.
pub const SINC_TAPS: usize = 81;
const HALF_TAPS: isize = (SINC_TAPS as isize - 1) / 2;

/// Wall pressure reflection coefficient from Sabine's formula.
fn sabine_coefficient(room: &RoomSpec) -> f64 {
    let alpha = 24.0 * std::f64::consts::LN_10 * room.volume()
        / (room.speed_of_sound * room.surface() * room.rt60);
    if alpha >= 1.0 {
        0.0
    } else {
        (1.0 - alpha).sqrt()
    }
}

/// Calls `f(delay_samples, reflection_order, distance)` for every image whose
/// delay is below `max_delay` samples.
fn for_each_image(
    room: &RoomSpec,
    src: &[f64; 3],
    mic: &[f64; 3],
    fs: f64,
    max_delay: f64,
    mut f: impl FnMut(f64, i32, f64),
) {
    let c = room.speed_of_sound;
    let max_dist = max_delay / fs * c;
    let l = room.dimensions;
    let n_max: [i64; 3] = std::array::from_fn(|i| (max_dist / (2.0 * l[i])).ceil() as i64 + 1);
    for nx in -n_max[0]..=n_max[0] {
        for ny in -n_max[1]..=n_max[1] {
            for nz in -n_max[2]..=n_max[2] {
                for mask in 0..8u32 {
                    let par = [mask & 1, (mask >> 1) & 1, (mask >> 2) & 1];
                    let n = [nx, ny, nz];
                    let mut d2 = 0.0;
                    let mut order = 0i64;
                    for i in 0..3 {
                        let sign = 1.0 - 2.0 * f64::from(par[i]);
                        let img = sign * src[i] + 2.0 * n[i] as f64 * l[i];
                        d2 += (img - mic[i]).powi(2);
                        order += (n[i] - i64::from(par[i])).abs() + n[i].abs();
                    }
                    let dist = d2.sqrt();
                    let delay = dist / c * fs;
                    if delay < max_delay {
                        f(delay, order as i32, dist);
                    }
                }
            }
        }
    }
}

/// Wall reflection coefficient for which the image model of `room` decays
/// with the requested `rt60`.
///
/// Sabine's coefficient overestimates the decay time of shoebox image models
/// (low-order axial paths dominate the late tail), so the coefficient is
/// refined by bisection on the Schroeder estimate of an energy response
/// between two fixed reference points of the room.
pub fn reflection_coefficient(room: &RoomSpec, fs: u32) -> f64 {
    let sabine = sabine_coefficient(room);
    if sabine == 0.0 {
        return 0.0;
    }
    let fsf = f64::from(fs);
    let d = room.dimensions;
    let src = [0.31 * d[0], 0.37 * d[1], 0.43 * d[2]];
    let mic = [0.67 * d[0], 0.59 * d[1], 0.53 * d[2]];
    let len = (room.rt60 * fsf).ceil() as usize;
    let mut images: Vec<(usize, i32, f64)> = Vec::new();
    for_each_image(room, &src, &mic, fsf, len as f64, |delay, order, dist| {
        images.push((delay as usize, order, 1.0 / (dist * dist)));
    });
    let max_order = images.iter().map(|i| i.1).max().unwrap_or(0) as usize;
    let estimate = |beta: f64| -> Option<f64> {
        let mut energy = vec![0.0; len];
        let gains = powers(beta * beta, max_order);
        for &(t, order, e) in &images {
            energy[t] += e * gains[order as usize];
        }
        let h: Vec<f64> = energy.iter().map(|e| e.sqrt()).collect();
        schroeder_rt60(&h, fs)
    };
    // decay time grows with beta
    let (mut lo, mut hi) = (0.0f64, sabine.max(1e-6));
    match estimate(hi) {
        Some(t) if t > room.rt60 => {}
        _ => hi = 1.0 - 1e-9,
    }
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        match estimate(mid) {
            Some(t) if t > room.rt60 => hi = mid,
            _ => lo = mid,
        }
    }
    0.5 * (lo + hi)
}

/// `[1, b, b², …, b^max]`
fn powers(b: f64, max: usize) -> Vec<f64> {
    std::iter::successors(Some(1.0), |p| Some(p * b)).take(max + 1).collect()
}

#[cfg(test)]
fn windowed_sinc(x: f64) -> f64 {
    let w = 0.5 * (1.0 + (PI * x / (HALF_TAPS as f64 + 1.0)).cos());
    let s = if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    };
    w * s
}

/// Adds a Hann-windowed sinc centred at `delay`. The sine of `π(n − delay)`
/// only alternates in sign across taps and the window cosine advances by a
/// fixed angle, so both are evaluated once per pulse.
fn add_pulse(h: &mut [f64], delay: f64, amplitude: f64) {
    let center = delay.round() as isize;
    let len = h.len() as isize;
    let lo = (center - HALF_TAPS).max(0);
    let hi = (center + HALF_TAPS).min(len - 1);
    if lo > hi {
        return;
    }
    let step = PI / (HALF_TAPS as f64 + 1.0);
    let x0 = lo as f64 - delay;
    let (mut ws, mut wc) = (step * x0).sin_cos();
    let (ds, dc) = step.sin_cos();
    // sin(π(n − d)) = sin(π(lo − d)) · (−1)^(n − lo)
    let mut s = (PI * x0).sin();
    for n in lo..=hi {
        let x = n as f64 - delay;
        if x.abs() <= HALF_TAPS as f64 {
            let sinc = if x.abs() < 1e-12 { 1.0 } else { s / (PI * x) };
            h[n as usize] += amplitude * 0.5 * (1.0 + wc) * sinc;
        }
        s = -s;
        let c = wc * dc - ws * ds;
        ws = ws * dc + wc * ds;
        wc = c;
    }
}

/// Impulse response from `src` to `mic`. Amplitudes follow `β^n / distance`
/// with `n` wall reflections; the response is truncated after `rt60` seconds
/// (extended just enough to hold the direct path for very short `rt60`).
pub fn synth_rir(room: &RoomSpec, src: &[f64; 3], mic: &[f64; 3], fs: u32) -> Result<Vec<f64>> {
    room.check_inside(src)?;
    room.check_inside(mic)?;
    if !(room.rt60 > 0.0) {
        return Err(Error::Config(format!("rt60 must be positive, got {}", room.rt60)));
    }
    synth_rir_with(room, reflection_coefficient(room, fs), src, mic, fs)
}

/// [`synth_rir`] with a precomputed wall reflection coefficient.
pub(crate) fn synth_rir_with(room: &RoomSpec, beta: f64, src: &[f64; 3], mic: &[f64; 3], fs: u32) -> Result<Vec<f64>> {
    room.check_inside(src)?;
    room.check_inside(mic)?;
    let fs = f64::from(fs);
    let direct = super::distance(src, mic) / room.speed_of_sound * fs;
    let len = ((room.rt60 * fs).ceil() as usize).max(direct.ceil() as usize + HALF_TAPS as usize + 1);
    let mut direct_path = vec![0.0; len];
    let mut reflections = vec![0.0; len];
    let mut gains = Vec::new();
    for_each_image(room, src, mic, fs, len as f64 + HALF_TAPS as f64, |delay, order, dist| {
        if order == 0 {
            add_pulse(&mut direct_path, delay, 1.0 / dist);
        } else if beta > 0.0 {
            let order = order as usize;
            if gains.len() <= order {
                gains = powers(beta, 2 * order + 8);
            }
            add_pulse(&mut reflections, delay, gains[order] / dist);
        }
    });
    if beta > 0.0 {
        high_pass(&mut reflections, fs);
    }
    let h = direct_path.iter().zip(&reflections).map(|(a, b)| a + b).collect();
    Ok(h)
}

/// Allen-Berkley 100 Hz high-pass. The all-positive image pulses otherwise
/// accumulate a DC component that decays much slower than the energy.
fn high_pass(x: &mut [f64], fs: f64) {
    let w = 2.0 * PI * 100.0 / fs;
    let r1 = (-w).exp();
    let b1 = 2.0 * r1 * w.cos();
    let b2 = -r1 * r1;
    let a1 = -(1.0 + r1);
    let mut y = [0.0f64; 3];
    for v in x.iter_mut() {
        y[2] = y[1];
        y[1] = y[0];
        y[0] = b1 * y[1] + b2 * y[2] + *v;
        *v = y[0] + a1 * y[1] + r1 * y[2];
    }
}

/// Reverberation time from the Schroeder backward integral, fitted on the
/// -5 dB to -25 dB portion of the decay and extrapolated to -60 dB.
pub fn schroeder_rt60(h: &[f64], fs: u32) -> Option<f64> {
    let mut edc: Vec<f64> = h.iter().rev().scan(0.0, |acc, v| {
        *acc += v * v;
        Some(*acc)
    }).collect();
    edc.reverse();
    let total = *edc.first()?;
    if total <= 0.0 {
        return None;
    }
    let db: Vec<f64> = edc.iter().map(|e| 10.0 * (e / total).max(1e-300).log10()).collect();
    let start = db.iter().position(|&v| v <= -5.0)?;
    let end = db.iter().position(|&v| v <= -25.0)?;
    if end <= start + 1 {
        return None;
    }
    // least-squares line through (t, dB)
    let n = (end - start) as f64;
    let (mut st, mut sy, mut stt, mut sty) = (0.0, 0.0, 0.0, 0.0);
    for (i, &y) in db.iter().enumerate().take(end).skip(start) {
        let t = i as f64 / f64::from(fs);
        st += t;
        sy += y;
        stt += t * t;
        sty += t * y;
    }
    let slope = (n * sty - st * sy) / (n * stt - st * st);
    (slope < 0.0).then(|| -60.0 / slope)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn room(dims: [f64; 3], rt60: f64) -> RoomSpec {
        RoomSpec {
            dimensions: dims,
            rt60,
            speed_of_sound: 343.0,
        }
    }

    fn argmax(h: &[f64]) -> usize {
        (0..h.len()).max_by(|&a, &b| h[a].abs().total_cmp(&h[b].abs())).unwrap()
    }

    /// Delay of `b` relative to `a` in samples, from a least-squares fit of
    /// the cross-spectrum phase below 3 kHz.
    fn tdoa_samples(a: &[f64], b: &[f64]) -> f64 {
        use rustfft::num_complex::Complex64;
        let n = 8192;
        let fft = rustfft::FftPlanner::new().plan_fft_forward(n);
        let spec = |x: &[f64]| {
            let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
            buf.resize(n, Complex64::new(0.0, 0.0));
            fft.process(&mut buf);
            buf
        };
        let (sa, sb) = (spec(a), spec(b));
        let (mut num, mut den) = (0.0, 0.0);
        for k in 1..(3000 * n / 16000) {
            let w = 2.0 * PI * k as f64 / n as f64;
            let phase = (sb[k] * sa[k].conj()).arg();
            num += -phase * w;
            den += w * w;
        }
        num / den
    }

    #[test]
    fn incremental_pulse_matches_direct_evaluation() {
        for &d in &[50.0, 50.37, 12.5, 3.9, 97.2] {
            let mut h = vec![0.0; 100];
            add_pulse(&mut h, d, 0.7);
            for (n, v) in h.iter().enumerate() {
                let x = n as f64 - d;
                let expect = if x.abs() <= HALF_TAPS as f64 { 0.7 * windowed_sinc(x) } else { 0.0 };
                assert!((v - expect).abs() < 1e-12, "{d} {n}");
            }
        }
    }

    #[test]
    fn anechoic_pulse_at_direct_delay() {
        let r = room([6.0, 5.0, 3.0], 1e-4);
        assert_eq!(reflection_coefficient(&r, 16000), 0.0);
        let src = [1.0, 2.0, 1.5];
        let mic = [2.715, 2.0, 1.5];
        let h = synth_rir(&r, &src, &mic, 16000).unwrap();
        assert!(h.len() >= (r.rt60 * 16000.0).ceil() as usize);
        assert_eq!(argmax(&h), 80);
        assert!((h[80] - 1.0 / 1.715).abs() < 1e-12);
        // only one pulse: everything outside the sinc support is zero
        assert!(h[..40].iter().chain(&h[121..]).all(|&v| v == 0.0));
    }

    #[test]
    fn endfire_tdoa_matches_geometry() {
        let r = room([6.0, 5.0, 3.0], 1e-4);
        let src = [1.0, 2.0, 1.5];
        let m1 = [3.0, 2.0, 1.5];
        let m2 = [3.04, 2.0, 1.5];
        let h1 = synth_rir(&r, &src, &m1, 16000).unwrap();
        let h2 = synth_rir(&r, &src, &m2, 16000).unwrap();
        let expected: f64 = 0.04 / 343.0 * 16000.0;
        assert!((expected - 1.866).abs() < 1e-3);
        assert!((tdoa_samples(&h1, &h2) - expected).abs() < 0.1);
    }

    #[test]
    fn broadside_delays_identical() {
        let src = [3.02, 4.0, 1.5];
        let (m1, m2) = ([3.0, 2.0, 1.5], [3.04, 2.0, 1.5]);
        let r = room([6.0, 5.0, 3.0], 0.3);
        let h1 = synth_rir(&r, &src, &m1, 16000).unwrap();
        let h2 = synth_rir(&r, &src, &m2, 16000).unwrap();
        assert_eq!(argmax(&h1), argmax(&h2));
        let r = room([6.0, 5.0, 3.0], 1e-4);
        let h1 = synth_rir(&r, &src, &m1, 16000).unwrap();
        let h2 = synth_rir(&r, &src, &m2, 16000).unwrap();
        assert!(tdoa_samples(&h1, &h2).abs() < 1e-9);
    }

    #[test]
    fn tdoa_follows_cosine_law_for_far_sources() {
        let r = room([8.0, 8.0, 3.0], 1e-4);
        let m1 = [4.0, 4.0, 1.5];
        let m2 = [4.04, 4.0, 1.5];
        let mid = [4.02, 4.0, 1.5];
        for deg in [0.0f64, 30.0, 60.0, 90.0, 120.0, 150.0, 180.0] {
            let th = deg.to_radians();
            let src = [mid[0] - 3.5 * th.cos(), mid[1] + 3.5 * th.sin(), 1.5];
            let h1 = synth_rir(&r, &src, &m1, 16000).unwrap();
            let h2 = synth_rir(&r, &src, &m2, 16000).unwrap();
            let expected = 0.04 * th.cos() / 343.0 * 16000.0;
            assert!((tdoa_samples(&h1, &h2) - expected).abs() < 0.1, "{deg}");
        }
    }

    #[test]
    fn outside_positions_rejected() {
        let r = room([4.0, 4.0, 2.0], 0.3);
        assert!(matches!(
            synth_rir(&r, &[5.0, 1.0, 1.0], &[1.0, 1.0, 1.0], 16000),
            Err(Error::Geometry { .. })
        ));
        assert!(synth_rir(&r, &[1.0, 1.0, 1.0], &[1.0, 1.0, 2.0], 16000).is_err());
    }

    #[test]
    fn decay_matches_requested_rt60() {
        use crate::scene::{sample_scenario, DatasetKind, SamplerConfig, Snr};
        use rand::SeedableRng;
        let cfg = SamplerConfig::default();
        let ids = ["a".to_string(), "b".to_string()];
        for seed in 0..16 {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let s = sample_scenario(DatasetKind::DstClean, &mut rng, &cfg, &ids, Snr::Clean).unwrap();
            let mic = s.array.mic_positions()[0];
            let h = synth_rir(&s.room, &s.sources[0].position, &mic, 16000).unwrap();
            let est = schroeder_rt60(&h, 16000).unwrap();
            let rt60 = s.room.rt60;
            assert!((est - rt60).abs() <= 0.2 * rt60, "{:?} rt60 {rt60}: {est}", s.room.dimensions);
        }
    }

    #[test]
    fn nothing_after_rt60() {
        let r = room([5.0, 6.0, 2.5], 0.3);
        let h = synth_rir(&r, &[1.0, 1.0, 1.0], &[3.0, 4.0, 1.2], 16000).unwrap();
        assert_eq!(h.len(), (0.3f64 * 16000.0).ceil() as usize);
    }
}
