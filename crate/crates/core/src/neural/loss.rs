use super::layers::CMat;
use super::model::compress;
use super::MAG_FLOOR;
use crate::spectral::{stft, SpectralTensor};
use crate::wave::MultichannelWave;
use crate::{Error, Result};

/// Magnitude exponent of the compressed spectral error.
pub const LOSS_POWER: f64 = 0.3;

fn check_pair(estimate: &SpectralTensor, target: &SpectralTensor) -> Result<()> {
    if estimate.num_channels() != 1 || !estimate.same_shape(target) {
        return Err(Error::Shape(format!(
            "loss needs two single-channel tensors of equal shape, got {}×{}×{} and {}×{}×{}",
            estimate.num_channels(),
            estimate.num_frames(),
            estimate.num_bins(),
            target.num_channels(),
            target.num_frames(),
            target.num_bins()
        )));
    }
    Ok(())
}

/// Mean over frames and bins of `|c(Ŝ) − c(S)|²` with `c(s) = s |s|^(p−1)`.
pub fn spectral_loss(estimate: &SpectralTensor, target: &SpectralTensor) -> Result<f64> {
    check_pair(estimate, target)?;
    let n = estimate.as_slice().len() as f64;
    let sum: f64 = estimate
        .as_slice()
        .iter()
        .zip(target.as_slice())
        .map(|(&a, &b)| (compress(a, LOSS_POWER) - compress(b, LOSS_POWER)).norm_sqr())
        .sum();
    Ok(sum / n)
}

/// Loss against a mono time-domain target, transformed with the estimate's
/// framing.
pub fn loss(estimate: &SpectralTensor, target: &MultichannelWave) -> Result<f64> {
    if target.num_channels() != 1 || target.len() != estimate.signal_len() {
        return Err(Error::Shape(format!(
            "target must be mono with {} samples, got {} channels × {}",
            estimate.signal_len(),
            target.num_channels(),
            target.len()
        )));
    }
    let s = stft(target, estimate.frame_len(), estimate.hop())?;
    spectral_loss(estimate, &s)
}

/// Loss and its gradient with respect to the estimate.
pub fn loss_and_grad(estimate: &SpectralTensor, target: &SpectralTensor) -> Result<(f64, SpectralTensor)> {
    check_pair(estimate, target)?;
    let p = LOSS_POWER;
    let n = estimate.as_slice().len() as f64;
    let mut grad = estimate.zeros_like(1);
    let mut sum = 0.0;
    for ((g, &s), &t) in grad.as_mut_slice().iter_mut().zip(estimate.as_slice()).zip(target.as_slice()) {
        let d = compress(s, p) - compress(t, p);
        sum += d.norm_sqr();
        let rho = s.norm();
        *g = if rho <= MAG_FLOOR {
            d * (2.0 / n * MAG_FLOOR.powf(p - 1.0))
        } else {
            let radial = (d.conj() * s).re * (p - 1.0) * rho.powf(p - 3.0);
            (d * rho.powf(p - 1.0) + s * radial) * (2.0 / n)
        };
    }
    Ok((sum / n, grad))
}

/// Chains the estimate gradient through `Ŝ = Σ_m mask_m X_m`, giving one row
/// per (frame, channel) as the network produces them.
pub fn mask_gradient(g_estimate: &SpectralTensor, x: &SpectralTensor) -> CMat {
    let (m, t, f) = (x.num_channels(), x.num_frames(), x.num_bins());
    let mut out = CMat::zeros(t * m, f);
    for tau in 0..t {
        let g = g_estimate.frame(0, tau);
        for ch in 0..m {
            for ((o, gv), xv) in out.row_mut(tau * m + ch).iter_mut().zip(g).zip(x.frame(ch, tau)) {
                *o = gv * xv.conj();
            }
        }
    }
    out
}
