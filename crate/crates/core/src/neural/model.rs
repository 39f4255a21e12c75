use super::gru::{ComplexGru, GruStepCache};
use super::layers::{ctanh_backward_inplace, ctanh_inplace, CMat, ComplexDense, C64};
use super::{Bottleneck, ComplexMask, FeatureTrace, ModelConfig};
use crate::spectral::SpectralTensor;
use crate::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// All trainable tensors of the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub encoder: Vec<ComplexDense>,
    pub fc_in: ComplexDense,
    pub gru: Option<ComplexGru>,
    pub fc_out: ComplexDense,
    pub decoder: Vec<ComplexDense>,
}

fn push_dense<'a>(out: &mut Vec<(String, &'a Vec<C64>)>, name: &str, d: &'a ComplexDense) {
    out.push((format!("{name}.weight"), &d.weight));
    out.push((format!("{name}.bias"), &d.bias));
}

fn push_dense_mut<'a>(out: &mut Vec<(String, &'a mut Vec<C64>)>, name: &str, d: &'a mut ComplexDense) {
    out.push((format!("{name}.weight"), &mut d.weight));
    out.push((format!("{name}.bias"), &mut d.bias));
}

impl Params {
    /// Parameter tensors in a fixed order with stable names.
    pub fn named(&self) -> Vec<(String, &Vec<C64>)> {
        let mut out = Vec::new();
        for (i, l) in self.encoder.iter().enumerate() {
            push_dense(&mut out, &format!("encoder.{i}"), l);
        }
        push_dense(&mut out, "fc_in", &self.fc_in);
        if let Some(gru) = &self.gru {
            for (name, l) in gru.layers() {
                push_dense(&mut out, &format!("gru.{name}"), l);
            }
        }
        push_dense(&mut out, "fc_out", &self.fc_out);
        for (i, l) in self.decoder.iter().enumerate() {
            push_dense(&mut out, &format!("decoder.{i}"), l);
        }
        out
    }

    pub fn named_mut(&mut self) -> Vec<(String, &mut Vec<C64>)> {
        let mut out = Vec::new();
        for (i, l) in self.encoder.iter_mut().enumerate() {
            push_dense_mut(&mut out, &format!("encoder.{i}"), l);
        }
        push_dense_mut(&mut out, "fc_in", &mut self.fc_in);
        if let Some(gru) = &mut self.gru {
            for (name, l) in gru.layers_mut() {
                push_dense_mut(&mut out, &format!("gru.{name}"), l);
            }
        }
        push_dense_mut(&mut out, "fc_out", &mut self.fc_out);
        for (i, l) in self.decoder.iter_mut().enumerate() {
            push_dense_mut(&mut out, &format!("decoder.{i}"), l);
        }
        out
    }

    pub fn zeros_like(&self) -> Self {
        let z = |d: &ComplexDense| ComplexDense::zeros(d.in_dim, d.out_dim);
        Self {
            encoder: self.encoder.iter().map(z).collect(),
            fc_in: z(&self.fc_in),
            gru: self.gru.as_ref().map(|g| ComplexGru::zeros(g.input_dim, g.hidden)),
            fc_out: z(&self.fc_out),
            decoder: self.decoder.iter().map(z).collect(),
        }
    }

    pub fn num_values(&self) -> usize {
        self.named().iter().map(|(_, v)| v.len()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.named()
            .iter()
            .flat_map(|(_, v)| v.iter())
            .map(|c| c.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// SHA-256 over names and little-endian values, hex encoded.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for (name, v) in self.named() {
            h.update(name.as_bytes());
            for c in v {
                h.update(c.re.to_le_bytes());
                h.update(c.im.to_le_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Everything the backward pass needs from one forward pass.
pub struct Activations {
    pub frames: usize,
    /// Compressed input spectra, one row per (frame, channel).
    pub input: CMat,
    pub encoder: Vec<CMat>,
    pub h_in: CMat,
    pub gru: Vec<GruStepCache>,
    pub h_out: CMat,
    pub fc_out: CMat,
    pub decoder: Vec<CMat>,
    /// Mask rows after the output activation, one row per (frame, channel).
    pub mask: CMat,
}

fn reshaped(mut m: CMat, rows: usize, cols: usize) -> CMat {
    assert_eq!(m.rows * m.cols, rows * cols);
    m.rows = rows;
    m.cols = cols;
    m
}

fn reshaped_ref(m: &CMat, rows: usize, cols: usize) -> CMat {
    reshaped(m.clone(), rows, cols)
}

/// `s |s|^(p-1)` with the magnitude floored at 1e-12.
#[inline]
pub fn compress(s: C64, power: f64) -> C64 {
    let mag = s.norm().max(super::MAG_FLOOR);
    s * mag.powf(power - 1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: Params,
}

impl Model {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let m = config.num_channels;
        let mut encoder = Vec::new();
        let mut width = config.num_bins;
        for &w in &config.encoder_widths {
            encoder.push(ComplexDense::init(width, w, 1.0, &mut rng));
            width = w;
        }
        let e_last = width;
        let fc_in = ComplexDense::init(m * e_last, config.u_in, 1.0, &mut rng);
        let gru = match config.bottleneck {
            Bottleneck::Gru => Some(ComplexGru::init(config.u_in, config.u_out, &mut rng)),
            Bottleneck::Identity => None,
        };
        let fc_out = ComplexDense::init(config.u_out, m * e_last, 1.0, &mut rng);
        let mut decoder = Vec::new();
        width = e_last;
        for &w in &config.decoder_widths {
            decoder.push(ComplexDense::init(width, w, 1.0, &mut rng));
            width = w;
        }
        let mut last = ComplexDense::init(width, config.num_bins, 0.01, &mut rng);
        // Start near the channel average.
        last.bias.iter_mut().for_each(|b| *b = C64::new(1.0 / m as f64, 0.0));
        decoder.push(last);
        Ok(Self {
            config,
            params: Params {
                encoder,
                fc_in,
                gru,
                fc_out,
                decoder,
            },
        })
    }

    fn check_input(&self, x: &SpectralTensor) -> Result<()> {
        if x.num_channels() != self.config.num_channels || x.num_bins() != self.config.num_bins {
            return Err(Error::Shape(format!(
                "model expects {} channels × {} bins, tensor has {} × {}",
                self.config.num_channels,
                self.config.num_bins,
                x.num_channels(),
                x.num_bins()
            )));
        }
        Ok(())
    }

    fn output_scale(&self) -> f64 {
        self.config.mask_cap / std::f64::consts::SQRT_2
    }

    /// Runs the pre-GRU path and returns its activations.
    fn front(&self, x: &SpectralTensor) -> (CMat, Vec<CMat>, CMat) {
        let (m, t, f) = (x.num_channels(), x.num_frames(), x.num_bins());
        let p = self.config.compression;
        let mut input = CMat::zeros(t * m, f);
        for tau in 0..t {
            for ch in 0..m {
                for (dst, &src) in input.row_mut(tau * m + ch).iter_mut().zip(x.frame(ch, tau)) {
                    *dst = compress(src, p);
                }
            }
        }
        let mut encoder = Vec::with_capacity(self.params.encoder.len());
        for layer in &self.params.encoder {
            let mut y = layer.forward_batch(encoder.last().unwrap_or(&input));
            ctanh_inplace(&mut y);
            encoder.push(y);
        }
        let last = encoder.last().unwrap_or(&input);
        let cat = reshaped_ref(last, t, m * last.cols);
        let mut h_in = self.params.fc_in.forward_batch(&cat);
        ctanh_inplace(&mut h_in);
        (input, encoder, h_in)
    }

    pub fn forward_cached(&self, x: &SpectralTensor) -> Result<Activations> {
        self.check_input(x)?;
        let (m, t) = (x.num_channels(), x.num_frames());
        let (input, encoder, h_in) = self.front(x);
        let (h_out, gru) = match &self.params.gru {
            Some(g) => g.run(&h_in)?,
            None => (h_in.clone(), Vec::new()),
        };
        let mut fc_out = self.params.fc_out.forward_batch(&h_out);
        ctanh_inplace(&mut fc_out);
        let e_last = fc_out.cols / m;
        let per_channel = reshaped_ref(&fc_out, t * m, e_last);
        let mut decoder = Vec::with_capacity(self.params.decoder.len());
        let (hidden, last) = self.params.decoder.split_at(self.params.decoder.len() - 1);
        for layer in hidden {
            let mut y = layer.forward_batch(decoder.last().unwrap_or(&per_channel));
            ctanh_inplace(&mut y);
            decoder.push(y);
        }
        let mut mask = last[0].forward_batch(decoder.last().unwrap_or(&per_channel));
        let k = self.output_scale();
        for v in mask.data.iter_mut() {
            *v = C64::new(k * (v.re / k).tanh(), k * (v.im / k).tanh());
        }
        if mask.data.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::NumericInstability("non-finite mask".into()));
        }
        Ok(Activations {
            frames: t,
            input,
            encoder,
            h_in,
            gru,
            h_out,
            fc_out,
            decoder,
            mask,
        })
    }

    pub fn forward(&self, x: &SpectralTensor) -> Result<(ComplexMask, FeatureTrace)> {
        let acts = self.forward_cached(x)?;
        let mask = ComplexMask::from_rows(&acts.mask, self.config.num_channels, acts.frames);
        let trace = FeatureTrace {
            h_in: acts.h_in,
            h_out: acts.h_out,
            model_checksum: self.params.checksum(),
            sequence_id: None,
        };
        Ok((mask, trace))
    }

    /// Gradients of a loss with respect to all parameters given its gradient
    /// with respect to the mask rows (`∂L/∂Re + j ∂L/∂Im`).
    pub fn backward(&self, acts: &Activations, g_mask: &CMat) -> Params {
        let m = self.config.num_channels;
        let t = acts.frames;
        let mut grad = self.params.zeros_like();
        let k = self.output_scale();
        let mut g = g_mask.clone();
        for (gv, y) in g.data.iter_mut().zip(&acts.mask.data) {
            let (a, b) = (y.re / k, y.im / k);
            *gv = C64::new(gv.re * (1.0 - a * a), gv.im * (1.0 - b * b));
        }

        let e_last = acts.fc_out.cols / m;
        let per_channel = reshaped_ref(&acts.fc_out, t * m, e_last);
        let nd = self.params.decoder.len();
        for li in (0..nd).rev() {
            let input = if li == 0 { &per_channel } else { &acts.decoder[li - 1] };
            let layer = &self.params.decoder[li];
            let mut gx = layer
                .backward_batch(&mut grad.decoder[li], input, &g, true)
                .expect("input grad");
            if li > 0 {
                ctanh_backward_inplace(&acts.decoder[li - 1], &mut gx);
            }
            g = gx;
        }
        let mut g_fc_out = reshaped(g, t, m * e_last);
        ctanh_backward_inplace(&acts.fc_out, &mut g_fc_out);
        let g_h_out = self
            .params
            .fc_out
            .backward_batch(&mut grad.fc_out, &acts.h_out, &g_fc_out, true)
            .expect("input grad");
        let mut g_h_in = match (&self.params.gru, &mut grad.gru) {
            (Some(gru), Some(gg)) => gru.backward(gg, &acts.h_in, &acts.gru, &g_h_out),
            _ => g_h_out,
        };
        ctanh_backward_inplace(&acts.h_in, &mut g_h_in);
        let last_enc = acts.encoder.last().unwrap_or(&acts.input);
        let cat = reshaped_ref(last_enc, t, m * last_enc.cols);
        let g_cat = self
            .params
            .fc_in
            .backward_batch(&mut grad.fc_in, &cat, &g_h_in, !acts.encoder.is_empty())
            .map(|gc| reshaped(gc, t * m, last_enc.cols));
        let mut g = match g_cat {
            Some(g) => g,
            None => return grad,
        };
        let ne = self.params.encoder.len();
        for li in (0..ne).rev() {
            ctanh_backward_inplace(&acts.encoder[li], &mut g);
            let input = if li == 0 { &acts.input } else { &acts.encoder[li - 1] };
            let gx = self.params.encoder[li].backward_batch(&mut grad.encoder[li], input, &g, li > 0);
            match gx {
                Some(gx) => g = gx,
                None => break,
            }
        }
        grad
    }
}

/// Returns the GRU input and output features exactly as produced by
/// [`Model::forward`].
pub fn tap_features(model: &Model, x: &SpectralTensor) -> Result<FeatureTrace> {
    model.forward(x).map(|(_, trace)| trace)
}
