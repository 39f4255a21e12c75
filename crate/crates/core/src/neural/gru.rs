//! Complex GRU with real sigmoid gates and a split-tanh candidate.
//!
//! ```text
//! r  = σ(Re(W_r x + b_r + U_r h + c_r))
//! z  = σ(Re(W_z x + b_z + U_z h + c_z))
//! n  = ctanh(W_n x + b_n + r ⊙ (U_n h + c_n))
//! h' = (1 − z) ⊙ n + z ⊙ h
//! ```

use super::layers::{ctanh, ctanh_backward, sigmoid, CMat, ComplexDense, C64};
use crate::{Error, Result};
use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexGru {
    pub input_dim: usize,
    pub hidden: usize,
    pub w_r: ComplexDense,
    pub u_r: ComplexDense,
    pub w_z: ComplexDense,
    pub u_z: ComplexDense,
    pub w_n: ComplexDense,
    pub u_n: ComplexDense,
}

/// Values saved by one step for the backward pass.
#[derive(Debug, Clone)]
pub struct GruStepCache {
    pub h_prev: Vec<C64>,
    pub r: Vec<f64>,
    pub z: Vec<f64>,
    pub n: Vec<C64>,
    /// `U_n h + c_n`
    pub hn: Vec<C64>,
}

/// Gradients with respect to the three input projections of one step.
#[derive(Debug, Clone)]
pub struct GruStepGrad {
    pub g_r: Vec<C64>,
    pub g_z: Vec<C64>,
    pub g_n: Vec<C64>,
    pub g_h_prev: Vec<C64>,
}

impl ComplexGru {
    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        Self {
            input_dim,
            hidden,
            w_r: ComplexDense::zeros(input_dim, hidden),
            u_r: ComplexDense::zeros(hidden, hidden),
            w_z: ComplexDense::zeros(input_dim, hidden),
            u_z: ComplexDense::zeros(hidden, hidden),
            w_n: ComplexDense::zeros(input_dim, hidden),
            u_n: ComplexDense::zeros(hidden, hidden),
        }
    }

    pub fn init<R: Rng + ?Sized>(input_dim: usize, hidden: usize, rng: &mut R) -> Self {
        Self {
            input_dim,
            hidden,
            w_r: ComplexDense::init(input_dim, hidden, 1.0, rng),
            u_r: ComplexDense::init(hidden, hidden, 1.0, rng),
            w_z: ComplexDense::init(input_dim, hidden, 1.0, rng),
            u_z: ComplexDense::init(hidden, hidden, 1.0, rng),
            w_n: ComplexDense::init(input_dim, hidden, 1.0, rng),
            u_n: ComplexDense::init(hidden, hidden, 1.0, rng),
        }
    }

    pub fn layers(&self) -> [(&'static str, &ComplexDense); 6] {
        [
            ("w_r", &self.w_r),
            ("u_r", &self.u_r),
            ("w_z", &self.w_z),
            ("u_z", &self.u_z),
            ("w_n", &self.w_n),
            ("u_n", &self.u_n),
        ]
    }

    pub fn layers_mut(&mut self) -> [(&'static str, &mut ComplexDense); 6] {
        [
            ("w_r", &mut self.w_r),
            ("u_r", &mut self.u_r),
            ("w_z", &mut self.w_z),
            ("u_z", &mut self.u_z),
            ("w_n", &mut self.w_n),
            ("u_n", &mut self.u_n),
        ]
    }

    /// One step given the precomputed input projections `W_* x + b_*`.
    pub fn step_projected(&self, h: &[C64], xr: &[C64], xz: &[C64], xn: &[C64]) -> (Vec<C64>, GruStepCache) {
        let ur = self.u_r.forward(h);
        let uz = self.u_z.forward(h);
        let hn = self.u_n.forward(h);
        let k = self.hidden;
        let mut r = vec![0.0; k];
        let mut z = vec![0.0; k];
        let mut n = vec![C64::new(0.0, 0.0); k];
        let mut out = vec![C64::new(0.0, 0.0); k];
        for i in 0..k {
            r[i] = sigmoid(xr[i].re + ur[i].re);
            z[i] = sigmoid(xz[i].re + uz[i].re);
            n[i] = ctanh(xn[i] + hn[i] * r[i]);
            out[i] = n[i] * (1.0 - z[i]) + h[i] * z[i];
        }
        let cache = GruStepCache {
            h_prev: h.to_vec(),
            r,
            z,
            n,
            hn,
        };
        (out, cache)
    }

    /// Back-propagates `g_out` through one step, accumulating the recurrent
    /// weight gradients into `grad`.
    pub fn step_backward(&self, grad: &mut ComplexGru, cache: &GruStepCache, g_out: &[C64]) -> GruStepGrad {
        let k = self.hidden;
        let mut g_r = vec![C64::new(0.0, 0.0); k];
        let mut g_z = vec![C64::new(0.0, 0.0); k];
        let mut g_n = vec![C64::new(0.0, 0.0); k];
        let mut g_hn = vec![C64::new(0.0, 0.0); k];
        let mut g_h: Vec<C64> = Vec::with_capacity(k);
        for i in 0..k {
            let g = g_out[i];
            let (r, z, n) = (cache.r[i], cache.z[i], cache.n[i]);
            g_h.push(g * z);
            let dz = (g * (cache.h_prev[i] - n).conj()).re;
            g_z[i] = C64::new(dz * z * (1.0 - z), 0.0);
            let ga = ctanh_backward(n, g * (1.0 - z));
            g_n[i] = ga;
            let dr = (ga * cache.hn[i].conj()).re;
            g_r[i] = C64::new(dr * r * (1.0 - r), 0.0);
            g_hn[i] = ga * r;
        }
        self.u_r.accumulate_grad(&mut grad.u_r, &cache.h_prev, &g_r);
        self.u_z.accumulate_grad(&mut grad.u_z, &cache.h_prev, &g_z);
        self.u_n.accumulate_grad(&mut grad.u_n, &cache.h_prev, &g_hn);
        for (acc, v) in g_h.iter_mut().zip(self.u_r.input_grad(&g_r)) {
            *acc += v;
        }
        for (acc, v) in g_h.iter_mut().zip(self.u_z.input_grad(&g_z)) {
            *acc += v;
        }
        for (acc, v) in g_h.iter_mut().zip(self.u_n.input_grad(&g_hn)) {
            *acc += v;
        }
        GruStepGrad {
            g_r,
            g_z,
            g_n,
            g_h_prev: g_h,
        }
    }

    /// Runs the recurrence over all rows of `x` from a zero state.
    pub fn run(&self, x: &CMat) -> Result<(CMat, Vec<GruStepCache>)> {
        assert_eq!(x.cols, self.input_dim);
        let xr = self.w_r.forward_batch(x);
        let xz = self.w_z.forward_batch(x);
        let xn = self.w_n.forward_batch(x);
        let mut out = CMat::zeros(x.rows, self.hidden);
        let mut caches = Vec::with_capacity(x.rows);
        let mut h = vec![C64::new(0.0, 0.0); self.hidden];
        for t in 0..x.rows {
            let (next, cache) = self.step_projected(&h, xr.row(t), xz.row(t), xn.row(t));
            check_finite(&next, t)?;
            out.row_mut(t).copy_from_slice(&next);
            caches.push(cache);
            h = next;
        }
        Ok((out, caches))
    }

    /// Back-propagation through time. `g_out` holds the gradient arriving at
    /// every output row; returns the gradient with respect to `x`.
    pub fn backward(&self, grad: &mut ComplexGru, x: &CMat, caches: &[GruStepCache], g_out: &CMat) -> CMat {
        let rows = x.rows;
        let k = self.hidden;
        let mut gr = CMat::zeros(rows, k);
        let mut gz = CMat::zeros(rows, k);
        let mut gn = CMat::zeros(rows, k);
        let mut carry = vec![C64::new(0.0, 0.0); k];
        for t in (0..rows).rev() {
            let g: Vec<C64> = g_out.row(t).iter().zip(&carry).map(|(a, b)| a + b).collect();
            let step = self.step_backward(grad, &caches[t], &g);
            gr.row_mut(t).copy_from_slice(&step.g_r);
            gz.row_mut(t).copy_from_slice(&step.g_z);
            gn.row_mut(t).copy_from_slice(&step.g_n);
            carry = step.g_h_prev;
        }
        let mut gx = self.w_r.backward_batch(&mut grad.w_r, x, &gr, true).expect("input grad");
        let gxz = self.w_z.backward_batch(&mut grad.w_z, x, &gz, true).expect("input grad");
        let gxn = self.w_n.backward_batch(&mut grad.w_n, x, &gn, true).expect("input grad");
        for ((a, b), c) in gx.data.iter_mut().zip(&gxz.data).zip(&gxn.data) {
            *a += b + c;
        }
        gx
    }
}

fn check_finite(h: &[C64], step: usize) -> Result<()> {
    if h.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::NumericInstability(format!("non-finite GRU state at frame {step}")))
    }
}

/// Single recurrent update. The GRU output equals its new state.
pub fn complex_gru_step(state: &[C64], input: &[C64], params: &ComplexGru) -> Result<(Vec<C64>, Vec<C64>)> {
    if state.len() != params.hidden || input.len() != params.input_dim {
        return Err(Error::Shape(format!(
            "GRU expects state {} and input {}, got {} and {}",
            params.hidden,
            params.input_dim,
            state.len(),
            input.len()
        )));
    }
    let xr = params.w_r.forward(input);
    let xz = params.w_z.forward(input);
    let xn = params.w_n.forward(input);
    let (next, _) = params.step_projected(state, &xr, &xz, &xn);
    check_finite(&next, 0)?;
    Ok((next.clone(), next))
}
