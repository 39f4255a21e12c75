//! Complex affine layers and split activations with explicit backward passes.
//!
//! Gradients of the real loss with respect to a complex quantity `x` are
//! carried as `∂L/∂Re x + j ∂L/∂Im x`. Under this convention an affine map
//! `y = W x + b` back-propagates as `G_W = G_y x^H`, `G_b = G_y`,
//! `G_x = W^H G_y`.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

pub type C64 = Complex64;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Row-major batch of complex vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct CMat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<C64>,
}

impl CMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![ZERO; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<C64>) -> Self {
        assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[C64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [C64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }
}

/// Complex fully connected layer `y = W x + b` with `W` stored `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexDense {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: Vec<C64>,
    pub bias: Vec<C64>,
}

impl ComplexDense {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            in_dim,
            out_dim,
            weight: vec![ZERO; in_dim * out_dim],
            bias: vec![ZERO; out_dim],
        }
    }

    /// Weights with independent Gaussian real and imaginary parts of variance
    /// `gain / (2 in_dim)` each; zero bias.
    pub fn init<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, gain: f64, rng: &mut R) -> Self {
        let std = (gain / (2.0 * in_dim as f64)).sqrt();
        let weight = (0..in_dim * out_dim)
            .map(|_| {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                C64::new(re * std, im * std)
            })
            .collect();
        Self {
            in_dim,
            out_dim,
            weight,
            bias: vec![ZERO; out_dim],
        }
    }

    #[inline]
    pub fn forward_into(&self, x: &[C64], y: &mut [C64]) {
        debug_assert_eq!(x.len(), self.in_dim);
        for (i, yi) in y.iter_mut().enumerate() {
            let w = &self.weight[i * self.in_dim..(i + 1) * self.in_dim];
            let mut acc = self.bias[i];
            for (a, b) in w.iter().zip(x) {
                acc += a * b;
            }
            *yi = acc;
        }
    }

    pub fn forward(&self, x: &[C64]) -> Vec<C64> {
        let mut y = vec![ZERO; self.out_dim];
        self.forward_into(x, &mut y);
        y
    }

    /// Applies the layer to every row of `x`.
    pub fn forward_batch(&self, x: &CMat) -> CMat {
        assert_eq!(x.cols, self.in_dim);
        let mut out = CMat::zeros(x.rows, self.out_dim);
        out.data
            .par_chunks_mut(self.out_dim)
            .zip(x.data.par_chunks(self.in_dim))
            .for_each(|(y, xr)| self.forward_into(xr, y));
        out
    }

    /// Accumulates parameter gradients for a single input.
    pub fn accumulate_grad(&self, grad: &mut ComplexDense, x: &[C64], g: &[C64]) {
        for (i, gi) in g.iter().enumerate() {
            if *gi == ZERO {
                continue;
            }
            let row = &mut grad.weight[i * self.in_dim..(i + 1) * self.in_dim];
            for (w, xk) in row.iter_mut().zip(x) {
                *w += gi * xk.conj();
            }
            grad.bias[i] += gi;
        }
    }

    /// `W^H g` for a single output gradient.
    pub fn input_grad(&self, g: &[C64]) -> Vec<C64> {
        let mut gx = vec![ZERO; self.in_dim];
        for (i, gi) in g.iter().enumerate() {
            if *gi == ZERO {
                continue;
            }
            let w = &self.weight[i * self.in_dim..(i + 1) * self.in_dim];
            for (acc, wk) in gx.iter_mut().zip(w) {
                *acc += wk.conj() * gi;
            }
        }
        gx
    }

    /// Batched backward pass. Parameter gradients are summed over rows in
    /// row order, parallelized across output units, so the result does not
    /// depend on the thread count.
    pub fn backward_batch(&self, grad: &mut ComplexDense, x: &CMat, g: &CMat, want_input: bool) -> Option<CMat> {
        assert_eq!(x.rows, g.rows);
        let in_dim = self.in_dim;
        let out_dim = self.out_dim;
        grad.weight
            .par_chunks_mut(in_dim)
            .zip(grad.bias.par_iter_mut())
            .enumerate()
            .for_each(|(i, (wrow, b))| {
                for r in 0..x.rows {
                    let gi = g.data[r * out_dim + i];
                    if gi == ZERO {
                        continue;
                    }
                    *b += gi;
                    for (w, xk) in wrow.iter_mut().zip(x.row(r)) {
                        *w += gi * xk.conj();
                    }
                }
            });
        want_input.then(|| {
            let mut gx = CMat::zeros(x.rows, in_dim);
            gx.data
                .par_chunks_mut(in_dim)
                .zip(g.data.par_chunks(out_dim))
                .for_each(|(gxr, gr)| {
                    for (i, gi) in gr.iter().enumerate() {
                        if *gi == ZERO {
                            continue;
                        }
                        let w = &self.weight[i * in_dim..(i + 1) * in_dim];
                        for (acc, wk) in gxr.iter_mut().zip(w) {
                            *acc += wk.conj() * gi;
                        }
                    }
                });
            gx
        })
    }
}

/// Split hyperbolic tangent: `tanh(Re z) + j tanh(Im z)`.
#[inline]
pub fn ctanh(z: C64) -> C64 {
    C64::new(z.re.tanh(), z.im.tanh())
}

/// Back-propagates through [`ctanh`] given its output `y`.
#[inline]
pub fn ctanh_backward(y: C64, g: C64) -> C64 {
    C64::new(g.re * (1.0 - y.re * y.re), g.im * (1.0 - y.im * y.im))
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn ctanh_inplace(m: &mut CMat) {
    m.data.iter_mut().for_each(|v| *v = ctanh(*v));
}

/// Replaces `g` by the gradient before a [`ctanh`] whose output is `y`.
pub fn ctanh_backward_inplace(y: &CMat, g: &mut CMat) {
    g.data
        .iter_mut()
        .zip(&y.data)
        .for_each(|(gv, yv)| *gv = ctanh_backward(*yv, *gv));
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rand_vec(n: usize, rng: &mut ChaCha8Rng) -> Vec<C64> {
        (0..n)
            .map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect()
    }

    /// L = Σ Re(conj(c) ⊙ ctanh(Wx+b)) for a fixed probe vector c.
    fn probe_loss(layer: &ComplexDense, x: &[C64], c: &[C64]) -> f64 {
        layer
            .forward(x)
            .into_iter()
            .map(ctanh)
            .zip(c)
            .map(|(y, c)| (c.conj() * y).re)
            .sum()
    }

    #[test]
    fn dense_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut layer = ComplexDense::init(5, 4, 1.0, &mut rng);
        layer.bias = rand_vec(4, &mut rng);
        let x = rand_vec(5, &mut rng);
        let c = rand_vec(4, &mut rng);
        let y: Vec<C64> = layer.forward(&x).into_iter().map(ctanh).collect();
        let g: Vec<C64> = y.iter().zip(&c).map(|(&y, &c)| ctanh_backward(y, c)).collect();
        let mut grad = ComplexDense::zeros(5, 4);
        layer.accumulate_grad(&mut grad, &x, &g);
        let gx = layer.input_grad(&g);
        let eps = 1e-6;
        let check = |analytic: f64, numeric: f64| {
            assert!((analytic - numeric).abs() <= 1e-6 * analytic.abs().max(numeric.abs()).max(1e-3));
        };
        for k in 0..layer.weight.len() {
            for (part, unit) in [(0, C64::new(eps, 0.0)), (1, C64::new(0.0, eps))] {
                let mut p = layer.clone();
                p.weight[k] += unit;
                let mut n = layer.clone();
                n.weight[k] -= unit;
                let num = (probe_loss(&p, &x, &c) - probe_loss(&n, &x, &c)) / (2.0 * eps);
                let ana = if part == 0 { grad.weight[k].re } else { grad.weight[k].im };
                check(ana, num);
            }
        }
        for k in 0..5 {
            for (part, unit) in [(0, C64::new(eps, 0.0)), (1, C64::new(0.0, eps))] {
                let mut xp = x.clone();
                xp[k] += unit;
                let mut xn = x.clone();
                xn[k] -= unit;
                let num = (probe_loss(&layer, &xp, &c) - probe_loss(&layer, &xn, &c)) / (2.0 * eps);
                let ana = if part == 0 { gx[k].re } else { gx[k].im };
                check(ana, num);
            }
        }
    }

    #[test]
    fn batch_paths_match_single_paths() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let layer = ComplexDense::init(6, 3, 1.0, &mut rng);
        let x = CMat::from_vec(4, 6, rand_vec(24, &mut rng));
        let g = CMat::from_vec(4, 3, rand_vec(12, &mut rng));
        let y = layer.forward_batch(&x);
        let mut gb = ComplexDense::zeros(6, 3);
        let gx = layer.backward_batch(&mut gb, &x, &g, true).unwrap();
        let mut gs = ComplexDense::zeros(6, 3);
        for r in 0..4 {
            assert_eq!(y.row(r), layer.forward(x.row(r)).as_slice());
            layer.accumulate_grad(&mut gs, x.row(r), g.row(r));
            assert_eq!(gx.row(r), layer.input_grad(g.row(r)).as_slice());
        }
        assert_eq!(gb, gs);
    }

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert_eq!(sigmoid(-1000.0), 0.0);
        assert_eq!(sigmoid(1000.0), 1.0);
        assert!((sigmoid(0.0) - 0.5).abs() < 1e-15);
    }
}
