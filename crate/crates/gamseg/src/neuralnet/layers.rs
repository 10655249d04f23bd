//! Layers used by the boundary detector, each with an explicit forward pass
//! and a backward pass that accumulates parameter gradients.
//!
//! Data layouts are row-major throughout: conv activations are [C, T, F]
//! (channels x time x feature), sequences are [T, width].

use super::tensor::{sigmoid, Scalar, Tensor};
use crate::rng::Rng;

/// 3x3 convolution, stride 1, zero padding 1 (spatial dims preserved).
#[derive(Debug, Clone)]
pub struct Conv2d<F: Scalar> {
    pub weight: Tensor<F>, // [out_ch, in_ch, 3, 3]
    pub bias: Tensor<F>,   // [out_ch]
    pub in_ch: usize,
    pub out_ch: usize,
}

impl<F: Scalar> Conv2d<F> {
    pub fn new(in_ch: usize, out_ch: usize, rng: &mut Rng) -> Self {
        let fan_in = (in_ch * 9) as f64;
        let fan_out = (out_ch * 9) as f64;
        let bound = (6.0 / (fan_in + fan_out)).sqrt() as f32;
        let weight = Tensor::from_vec(
            &[out_ch, in_ch, 3, 3],
            (0..out_ch * in_ch * 9)
                .map(|_| F::from_f32(rng.uniform(-bound, bound)))
                .collect(),
        );
        // biases share the uniform init: a zero bias would pin dead-input
        // positions exactly onto the ReLU kink
        let bias = Tensor::from_vec(
            &[out_ch],
            (0..out_ch).map(|_| F::from_f32(rng.uniform(-bound, bound))).collect(),
        );
        Conv2d { weight, bias, in_ch, out_ch }
    }

    /// x: [in_ch, t, f] -> [out_ch, t, f]
    pub fn forward(&self, x: &[F], t_len: usize, f_len: usize) -> Vec<F> {
        assert_eq!(x.len(), self.in_ch * t_len * f_len);
        let mut out = vec![F::ZERO; self.out_ch * t_len * f_len];
        let w = self.weight.data();
        let b = self.bias.data();
        let plane = t_len * f_len;
        for o in 0..self.out_ch {
            let out_plane = &mut out[o * plane..(o + 1) * plane];
            for v in out_plane.iter_mut() {
                *v = b[o];
            }
            for c in 0..self.in_ch {
                let x_plane = &x[c * plane..(c + 1) * plane];
                for kt in 0..3usize {
                    for kf in 0..3usize {
                        let wv = w[((o * self.in_ch + c) * 3 + kt) * 3 + kf];
                        // out[t, f] += wv * x[t + kt - 1, f + kf - 1]
                        let (dt, df) = (kt as isize - 1, kf as isize - 1);
                        let t_lo = (-dt).max(0) as usize;
                        let t_hi = (t_len as isize - dt).min(t_len as isize) as usize;
                        let f_lo = (-df).max(0) as usize;
                        let f_hi = (f_len as isize - df).min(f_len as isize) as usize;
                        for t in t_lo..t_hi {
                            let src = ((t as isize + dt) as usize) * f_len;
                            let dst = t * f_len;
                            for f in f_lo..f_hi {
                                out_plane[dst + f] +=
                                    wv * x_plane[src + (f as isize + df) as usize];
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// Accumulates weight/bias grads; returns grad w.r.t. the input.
    pub fn backward(&mut self, x: &[F], dout: &[F], t_len: usize, f_len: usize) -> Vec<F> {
        let plane = t_len * f_len;
        assert_eq!(x.len(), self.in_ch * plane);
        assert_eq!(dout.len(), self.out_ch * plane);
        let mut dx = vec![F::ZERO; x.len()];
        let w = self.weight.data().to_vec();
        {
            let db = self.bias.grad_mut();
            for o in 0..self.out_ch {
                let mut acc = F::ZERO;
                for &g in &dout[o * plane..(o + 1) * plane] {
                    acc += g;
                }
                db[o] += acc;
            }
        }
        let dw = self.weight.grad_mut();
        for o in 0..self.out_ch {
            let dout_plane = &dout[o * plane..(o + 1) * plane];
            for c in 0..self.in_ch {
                let x_plane = &x[c * plane..(c + 1) * plane];
                let dx_plane = &mut dx[c * plane..(c + 1) * plane];
                for kt in 0..3usize {
                    for kf in 0..3usize {
                        let widx = ((o * self.in_ch + c) * 3 + kt) * 3 + kf;
                        let wv = w[widx];
                        let (dt, df) = (kt as isize - 1, kf as isize - 1);
                        let t_lo = (-dt).max(0) as usize;
                        let t_hi = (t_len as isize - dt).min(t_len as isize) as usize;
                        let f_lo = (-df).max(0) as usize;
                        let f_hi = (f_len as isize - df).min(f_len as isize) as usize;
                        let mut wgrad = F::ZERO;
                        for t in t_lo..t_hi {
                            let src = ((t as isize + dt) as usize) * f_len;
                            let dst = t * f_len;
                            for f in f_lo..f_hi {
                                let g = dout_plane[dst + f];
                                let xi = src + (f as isize + df) as usize;
                                wgrad += g * x_plane[xi];
                                dx_plane[xi] += wv * g;
                            }
                        }
                        dw[widx] += wgrad;
                    }
                }
            }
        }
        dx
    }
}

/// In-place ReLU; returns the activation mask for the backward pass.
pub fn relu_forward<F: Scalar>(x: &mut [F]) -> Vec<bool> {
    let mut mask = vec![false; x.len()];
    for (v, m) in x.iter_mut().zip(mask.iter_mut()) {
        if *v > F::ZERO {
            *m = true;
        } else {
            *v = F::ZERO;
        }
    }
    mask
}

pub fn relu_backward<F: Scalar>(dout: &mut [F], mask: &[bool]) {
    for (g, &m) in dout.iter_mut().zip(mask) {
        if !m {
            *g = F::ZERO;
        }
    }
}

/// Max pooling over the time axis, window 2, stride 2, ceil semantics.
/// Returns (pooled [C, ceil(T/2), F], chosen source time index per element).
pub fn maxpool_time_forward<F: Scalar>(
    x: &[F],
    channels: usize,
    t_len: usize,
    f_len: usize,
) -> (Vec<F>, Vec<usize>, usize) {
    let t_out = t_len.div_ceil(2);
    let mut out = vec![F::ZERO; channels * t_out * f_len];
    let mut idx = vec![0usize; out.len()];
    for c in 0..channels {
        for ti in 0..t_out {
            let t0 = 2 * ti;
            let t1 = (t0 + 1).min(t_len - 1);
            for f in 0..f_len {
                let a = x[(c * t_len + t0) * f_len + f];
                let b = x[(c * t_len + t1) * f_len + f];
                let dst = (c * t_out + ti) * f_len + f;
                if t1 != t0 && b > a {
                    out[dst] = b;
                    idx[dst] = t1;
                } else {
                    out[dst] = a;
                    idx[dst] = t0;
                }
            }
        }
    }
    (out, idx, t_out)
}

pub fn maxpool_time_backward<F: Scalar>(
    dout: &[F],
    idx: &[usize],
    channels: usize,
    t_len: usize,
    t_out: usize,
    f_len: usize,
) -> Vec<F> {
    let mut dx = vec![F::ZERO; channels * t_len * f_len];
    for c in 0..channels {
        for ti in 0..t_out {
            for f in 0..f_len {
                let src = (c * t_out + ti) * f_len + f;
                dx[(c * t_len + idx[src]) * f_len + f] += dout[src];
            }
        }
    }
    dx
}

/// Single-direction LSTM parameters (gate order: input, forget, cell, output).
#[derive(Debug, Clone)]
pub struct LstmCell<F: Scalar> {
    pub w_ih: Tensor<F>, // [4H, input]
    pub w_hh: Tensor<F>, // [4H, H]
    pub b_ih: Tensor<F>, // [4H]
    pub b_hh: Tensor<F>, // [4H]
    pub input_size: usize,
    pub hidden: usize,
}

/// Per-sequence activations kept for backpropagation through time.
#[derive(Debug, Clone)]
pub struct LstmCache<F: Scalar> {
    gates: Vec<F>,  // [T, 4H] post-activation (i, f, g, o)
    cells: Vec<F>,  // [T, H]
    tanh_c: Vec<F>, // [T, H]
    pub hs: Vec<F>, // [T, H], indexed by real time
    reverse: bool,
}

impl<F: Scalar> LstmCell<F> {
    pub fn new(input_size: usize, hidden: usize, rng: &mut Rng) -> Self {
        let bound = 1.0 / (hidden as f32).sqrt();
        let mut init = |n: usize| -> Vec<F> {
            (0..n).map(|_| F::from_f32(rng.uniform(-bound, bound))).collect()
        };
        let w_ih = Tensor::from_vec(&[4 * hidden, input_size], init(4 * hidden * input_size));
        let w_hh = Tensor::from_vec(&[4 * hidden, hidden], init(4 * hidden * hidden));
        let mut b_ih = Tensor::from_vec(&[4 * hidden], init(4 * hidden));
        let b_hh = Tensor::from_vec(&[4 * hidden], init(4 * hidden));
        // Forget-gate bias offset keeps early memory open.
        for v in &mut b_ih.data_mut()[hidden..2 * hidden] {
            *v += F::ONE;
        }
        LstmCell { w_ih, w_hh, b_ih, b_hh, input_size, hidden }
    }

    /// One step of the standard LSTM equations.
    /// Returns (h, c); `gates_out`, when given, receives the post-activation
    /// gate values (i, f, g, o) for caching.
    pub fn step(
        &self,
        x: &[F],
        h_prev: &[F],
        c_prev: &[F],
        gates_out: Option<&mut Vec<F>>,
    ) -> (Vec<F>, Vec<F>) {
        let h = self.hidden;
        assert_eq!(x.len(), self.input_size, "lstm input width mismatch");
        assert_eq!(h_prev.len(), h);
        assert_eq!(c_prev.len(), h);
        let mut z: Vec<F> = self.b_ih.data().to_vec();
        for (zv, &bv) in z.iter_mut().zip(self.b_hh.data()) {
            *zv += bv;
        }
        let w_ih = self.w_ih.data();
        let w_hh = self.w_hh.data();
        for (r, zv) in z.iter_mut().enumerate() {
            let row = &w_ih[r * self.input_size..(r + 1) * self.input_size];
            let mut acc = F::ZERO;
            for (w, xv) in row.iter().zip(x) {
                acc += *w * *xv;
            }
            let row = &w_hh[r * h..(r + 1) * h];
            for (w, hv) in row.iter().zip(h_prev) {
                acc += *w * *hv;
            }
            *zv += acc;
        }
        let mut c = vec![F::ZERO; h];
        let mut h_out = vec![F::ZERO; h];
        for j in 0..h {
            z[j] = sigmoid(z[j]); // input gate
            z[h + j] = sigmoid(z[h + j]); // forget gate
            z[2 * h + j] = z[2 * h + j].tanh(); // candidate
            z[3 * h + j] = sigmoid(z[3 * h + j]); // output gate
            c[j] = z[h + j] * c_prev[j] + z[j] * z[2 * h + j];
            h_out[j] = z[3 * h + j] * c[j].tanh();
        }
        if let Some(out) = gates_out {
            out.extend_from_slice(&z);
        }
        (h_out, c)
    }

    /// Run over a [T, input] sequence; `reverse` iterates time backwards.
    /// The returned hidden states are indexed by real time either way.
    pub fn forward_seq(&self, xs: &[F], t_len: usize, reverse: bool) -> LstmCache<F> {
        let h = self.hidden;
        let mut cache = LstmCache {
            gates: vec![F::ZERO; t_len * 4 * h],
            cells: vec![F::ZERO; t_len * h],
            tanh_c: vec![F::ZERO; t_len * h],
            hs: vec![F::ZERO; t_len * h],
            reverse,
        };
        let mut h_prev = vec![F::ZERO; h];
        let mut c_prev = vec![F::ZERO; h];
        let mut gates = Vec::with_capacity(4 * h);
        for s in 0..t_len {
            let t = if reverse { t_len - 1 - s } else { s };
            gates.clear();
            let (h_t, c_t) = self.step(
                &xs[t * self.input_size..(t + 1) * self.input_size],
                &h_prev,
                &c_prev,
                Some(&mut gates),
            );
            cache.gates[t * 4 * h..(t + 1) * 4 * h].copy_from_slice(&gates);
            cache.cells[t * h..(t + 1) * h].copy_from_slice(&c_t);
            for (dst, &c) in cache.tanh_c[t * h..(t + 1) * h].iter_mut().zip(&c_t) {
                *dst = c.tanh();
            }
            cache.hs[t * h..(t + 1) * h].copy_from_slice(&h_t);
            h_prev = h_t;
            c_prev = c_t;
        }
        cache
    }

    /// Backpropagation through time. `d_hs` is the gradient w.r.t. the hidden
    /// states in real-time order; accumulates parameter grads and adds the
    /// input gradient into `dxs`.
    pub fn backward_seq(
        &mut self,
        xs: &[F],
        cache: &LstmCache<F>,
        d_hs: &[F],
        t_len: usize,
        dxs: &mut [F],
    ) {
        let h = self.hidden;
        let isz = self.input_size;
        let w_ih = self.w_ih.data().to_vec();
        let w_hh = self.w_hh.data().to_vec();
        let mut dh_next = vec![F::ZERO; h];
        let mut dc_next = vec![F::ZERO; h];
        let mut dz = vec![F::ZERO; 4 * h];
        for s in (0..t_len).rev() {
            let t = if cache.reverse { t_len - 1 - s } else { s };
            let t_prev = if s == 0 {
                None
            } else if cache.reverse {
                Some(t + 1)
            } else {
                Some(t - 1)
            };
            let gates = &cache.gates[t * 4 * h..(t + 1) * 4 * h];
            for j in 0..h {
                let (ig, fg, gg, og) = (gates[j], gates[h + j], gates[2 * h + j], gates[3 * h + j]);
                let tanh_c = cache.tanh_c[t * h + j];
                let c_prev = match t_prev {
                    Some(tp) => cache.cells[tp * h + j],
                    None => F::ZERO,
                };
                let dh = d_hs[t * h + j] + dh_next[j];
                let do_ = dh * tanh_c;
                let dc = dh * og * (F::ONE - tanh_c * tanh_c) + dc_next[j];
                let di = dc * gg;
                let dg = dc * ig;
                let df = dc * c_prev;
                dc_next[j] = dc * fg;
                dz[j] = di * ig * (F::ONE - ig);
                dz[h + j] = df * fg * (F::ONE - fg);
                dz[2 * h + j] = dg * (F::ONE - gg * gg);
                dz[3 * h + j] = do_ * og * (F::ONE - og);
            }
            let x_t = &xs[t * isz..(t + 1) * isz];
            {
                let dw_ih = self.w_ih.grad_mut();
                for (r, &dzr) in dz.iter().enumerate() {
                    let row = &mut dw_ih[r * isz..(r + 1) * isz];
                    for (dw, &xv) in row.iter_mut().zip(x_t) {
                        *dw += dzr * xv;
                    }
                }
            }
            if let Some(tp) = t_prev {
                let h_prev = &cache.hs[tp * h..(tp + 1) * h];
                let dw_hh = self.w_hh.grad_mut();
                for (r, &dzr) in dz.iter().enumerate() {
                    let row = &mut dw_hh[r * h..(r + 1) * h];
                    for (dw, &hv) in row.iter_mut().zip(h_prev) {
                        *dw += dzr * hv;
                    }
                }
            }
            {
                let db_ih = self.b_ih.grad_mut();
                for (db, &dzr) in db_ih.iter_mut().zip(&dz) {
                    *db += dzr;
                }
            }
            {
                let db_hh = self.b_hh.grad_mut();
                for (db, &dzr) in db_hh.iter_mut().zip(&dz) {
                    *db += dzr;
                }
            }
            let dx_t = &mut dxs[t * isz..(t + 1) * isz];
            for (r, &dzr) in dz.iter().enumerate() {
                let row = &w_ih[r * isz..(r + 1) * isz];
                for (dx, &w) in dx_t.iter_mut().zip(row) {
                    *dx += dzr * w;
                }
            }
            dh_next.fill(F::ZERO);
            for (r, &dzr) in dz.iter().enumerate() {
                let row = &w_hh[r * h..(r + 1) * h];
                for (dh, &w) in dh_next.iter_mut().zip(row) {
                    *dh += dzr * w;
                }
            }
        }
    }

    pub fn parameters_mut(&mut self) -> [&mut Tensor<F>; 4] {
        [&mut self.w_ih, &mut self.w_hh, &mut self.b_ih, &mut self.b_hh]
    }
}

/// Bidirectional LSTM layer: forward + backward passes concatenated per frame.
#[derive(Debug, Clone)]
pub struct BiLstm<F: Scalar> {
    pub fw: LstmCell<F>,
    pub bw: LstmCell<F>,
}

pub struct BiLstmCache<F: Scalar> {
    pub fw: LstmCache<F>,
    pub bw: LstmCache<F>,
}

impl<F: Scalar> BiLstm<F> {
    pub fn new(input_size: usize, hidden: usize, rng: &mut Rng) -> Self {
        BiLstm {
            fw: LstmCell::new(input_size, hidden, rng),
            bw: LstmCell::new(input_size, hidden, rng),
        }
    }

    /// xs: [T, input] -> (out [T, 2H], cache)
    pub fn forward(&self, xs: &[F], t_len: usize) -> (Vec<F>, BiLstmCache<F>) {
        let h = self.fw.hidden;
        let fw = self.fw.forward_seq(xs, t_len, false);
        let bw = self.bw.forward_seq(xs, t_len, true);
        let mut out = vec![F::ZERO; t_len * 2 * h];
        for t in 0..t_len {
            out[t * 2 * h..t * 2 * h + h].copy_from_slice(&fw.hs[t * h..(t + 1) * h]);
            out[t * 2 * h + h..(t + 1) * 2 * h].copy_from_slice(&bw.hs[t * h..(t + 1) * h]);
        }
        (out, BiLstmCache { fw, bw })
    }

    /// dout: [T, 2H] -> dxs [T, input]
    pub fn backward(
        &mut self,
        xs: &[F],
        cache: &BiLstmCache<F>,
        dout: &[F],
        t_len: usize,
    ) -> Vec<F> {
        let h = self.fw.hidden;
        let mut d_fw = vec![F::ZERO; t_len * h];
        let mut d_bw = vec![F::ZERO; t_len * h];
        for t in 0..t_len {
            d_fw[t * h..(t + 1) * h].copy_from_slice(&dout[t * 2 * h..t * 2 * h + h]);
            d_bw[t * h..(t + 1) * h].copy_from_slice(&dout[t * 2 * h + h..(t + 1) * 2 * h]);
        }
        let mut dxs = vec![F::ZERO; t_len * self.fw.input_size];
        self.fw.backward_seq(xs, &cache.fw, &d_fw, t_len, &mut dxs);
        self.bw.backward_seq(xs, &cache.bw, &d_bw, t_len, &mut dxs);
        dxs
    }
}

/// Fully connected layer applied per frame.
#[derive(Debug, Clone)]
pub struct Linear<F: Scalar> {
    pub weight: Tensor<F>, // [out, in]
    pub bias: Tensor<F>,   // [out]
    pub in_size: usize,
    pub out_size: usize,
}

impl<F: Scalar> Linear<F> {
    pub fn new(in_size: usize, out_size: usize, rng: &mut Rng) -> Self {
        let bound = (6.0 / (in_size + out_size) as f64).sqrt() as f32;
        let weight = Tensor::from_vec(
            &[out_size, in_size],
            (0..out_size * in_size)
                .map(|_| F::from_f32(rng.uniform(-bound, bound)))
                .collect(),
        );
        let bias = Tensor::from_vec(
            &[out_size],
            (0..out_size).map(|_| F::from_f32(rng.uniform(-bound, bound))).collect(),
        );
        Linear { weight, bias, in_size, out_size }
    }

    /// xs: [T, in] -> [T, out]
    pub fn forward(&self, xs: &[F], t_len: usize) -> Vec<F> {
        let mut out = vec![F::ZERO; t_len * self.out_size];
        let w = self.weight.data();
        let b = self.bias.data();
        for t in 0..t_len {
            let x = &xs[t * self.in_size..(t + 1) * self.in_size];
            for o in 0..self.out_size {
                let row = &w[o * self.in_size..(o + 1) * self.in_size];
                let mut acc = b[o];
                for (wv, xv) in row.iter().zip(x) {
                    acc += *wv * *xv;
                }
                out[t * self.out_size + o] = acc;
            }
        }
        out
    }

    pub fn backward(&mut self, xs: &[F], dout: &[F], t_len: usize) -> Vec<F> {
        let mut dxs = vec![F::ZERO; t_len * self.in_size];
        let w = self.weight.data().to_vec();
        for t in 0..t_len {
            let x = &xs[t * self.in_size..(t + 1) * self.in_size];
            let dx = &mut dxs[t * self.in_size..(t + 1) * self.in_size];
            for o in 0..self.out_size {
                let g = dout[t * self.out_size + o];
                {
                    let dw = self.weight.grad_mut();
                    let row = &mut dw[o * self.in_size..(o + 1) * self.in_size];
                    for (dwv, &xv) in row.iter_mut().zip(x) {
                        *dwv += g * xv;
                    }
                }
                self.bias.grad_mut()[o] += g;
                let row = &w[o * self.in_size..(o + 1) * self.in_size];
                for (dxv, &wv) in dx.iter_mut().zip(row) {
                    *dxv += g * wv;
                }
            }
        }
        dxs
    }
}

/// Inverted dropout: scales kept activations by 1/(1-p) at train time so
/// evaluation needs no rescaling. Returns the multiplicative mask.
pub fn dropout_forward<F: Scalar>(xs: &mut [F], p: f32, rng: &mut Rng) -> Vec<F> {
    assert!((0.0..1.0).contains(&p));
    if p == 0.0 {
        return vec![F::ONE; xs.len()];
    }
    let scale = F::from_f32(1.0 / (1.0 - p));
    let mut mask = Vec::with_capacity(xs.len());
    for v in xs.iter_mut() {
        let keep = rng.next_f32() >= p;
        let m = if keep { scale } else { F::ZERO };
        *v *= m;
        mask.push(m);
    }
    mask
}

pub fn dropout_backward<F: Scalar>(dout: &mut [F], mask: &[F]) {
    for (g, &m) in dout.iter_mut().zip(mask) {
        *g *= m;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manual_sigmoid(x: f64) -> f64 {
        1.0 / (1.0 + (-x).exp())
    }

    #[test]
    fn conv_shape_contract() {
        let mut rng = Rng::new(0);
        let conv = Conv2d::<f32>::new(1, 32, &mut rng);
        let x = vec![0.5f32; 44 * 98];
        let y = conv.forward(&x, 44, 98);
        assert_eq!(y.len(), 32 * 44 * 98);
    }

    #[test]
    fn conv_identity_kernel() {
        let mut rng = Rng::new(0);
        let mut conv = Conv2d::<f32>::new(1, 1, &mut rng);
        let mut w = vec![0.0f32; 9];
        w[4] = 1.0; // centered delta
        conv.weight = Tensor::from_vec(&[1, 1, 3, 3], w);
        conv.bias = Tensor::zeros(&[1]);
        let x: Vec<f32> = (0..5 * 7).map(|i| i as f32 * 0.3 - 2.0).collect();
        let y = conv.forward(&x, 5, 7);
        assert_eq!(y, x);
    }

    #[test]
    fn conv_hand_example_all_ones() {
        let mut rng = Rng::new(0);
        let mut conv = Conv2d::<f32>::new(1, 1, &mut rng);
        conv.weight = Tensor::from_vec(&[1, 1, 3, 3], vec![1.0; 9]);
        conv.bias = Tensor::zeros(&[1]);
        let x = vec![1.0f32; 9];
        let y = conv.forward(&x, 3, 3);
        // padded sum of ones: corners see a 2x2 patch, center the full 3x3
        assert_eq!(y[4], 9.0);
        for corner in [0, 2, 6, 8] {
            assert_eq!(y[corner], 4.0);
        }
        for edge in [1, 3, 5, 7] {
            assert_eq!(y[edge], 6.0);
        }
    }

    #[test]
    fn lstm_zero_params_give_zero_state() {
        let mut rng = Rng::new(1);
        let mut cell = LstmCell::<f32>::new(3, 4, &mut rng);
        for p in cell.parameters_mut() {
            p.data_mut().fill(0.0);
        }
        let (h, c) = cell.step(&[1.0, -2.0, 0.5], &[0.0; 4], &[0.0; 4], None);
        assert_eq!(h, vec![0.0; 4]);
        assert_eq!(c, vec![0.0; 4]);
    }

    /// Scalar LSTM against hand-evaluated gate equations.
    #[test]
    fn lstm_scalar_hand_oracle() {
        let mut rng = Rng::new(1);
        let mut cell = LstmCell::<f64>::new(1, 1, &mut rng);
        // gate order i, f, g, o
        cell.w_ih = Tensor::from_vec(&[4, 1], vec![0.5, -0.3, 0.8, 0.2]);
        cell.w_hh = Tensor::from_vec(&[4, 1], vec![0.1, 0.4, -0.6, 0.7]);
        cell.b_ih = Tensor::from_vec(&[4], vec![0.05, -0.1, 0.2, 0.0]);
        cell.b_hh = Tensor::from_vec(&[4], vec![0.0, 0.1, -0.2, 0.3]);

        let x = 0.7;
        let (h1, c1) = cell.step(&[x], &[0.0], &[0.0], None);
        let i = manual_sigmoid(0.5 * x + 0.05);
        let f = manual_sigmoid(-0.3 * x - 0.1 + 0.1);
        let g = (0.8 * x + 0.2 - 0.2).tanh();
        let o = manual_sigmoid(0.2 * x + 0.3);
        let c_expect = i * g;
        let h_expect = o * c_expect.tanh();
        assert!((c1[0] - c_expect).abs() < 1e-12);
        assert!((h1[0] - h_expect).abs() < 1e-12);

        // second step carries (h, c)
        let x2 = -0.4;
        let (h2, c2) = cell.step(&[x2], &h1, &c1, None);
        let i2 = manual_sigmoid(0.5 * x2 + 0.1 * h1[0] + 0.05);
        let f2 = manual_sigmoid(-0.3 * x2 + 0.4 * h1[0]);
        let g2 = (0.8 * x2 - 0.6 * h1[0]).tanh();
        let o2 = manual_sigmoid(0.2 * x2 + 0.7 * h1[0] + 0.3);
        let c2_expect = f2 * c1[0] + i2 * g2;
        let h2_expect = o2 * c2_expect.tanh();
        assert!((c2[0] - c2_expect).abs() < 1e-12);
        assert!((h2[0] - h2_expect).abs() < 1e-12);
    }

    #[test]
    fn bilstm_output_width_is_twice_hidden() {
        let mut rng = Rng::new(2);
        let layer = BiLstm::<f32>::new(5, 8, &mut rng);
        let xs = vec![0.1f32; 10 * 5];
        let (out, _) = layer.forward(&xs, 10);
        assert_eq!(out.len(), 10 * 16);
    }

    #[test]
    fn maxpool_halves_time_with_ceil() {
        let x: Vec<f32> = vec![1.0, 5.0, 2.0, 4.0, 3.0]; // C=1, T=5, F=1
        let (out, idx, t_out) = maxpool_time_forward(&x, 1, 5, 1);
        assert_eq!(t_out, 3);
        assert_eq!(out, vec![5.0, 4.0, 3.0]);
        assert_eq!(idx, vec![1, 3, 4]);
        let dx = maxpool_time_backward(&[1.0f32, 1.0, 1.0], &idx, 1, 5, 3, 1);
        assert_eq!(dx, vec![0.0, 1.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn dropout_eval_scale_balances() {
        let mut rng = Rng::new(3);
        let mut xs = vec![1.0f32; 100_000];
        let mask = dropout_forward(&mut xs, 0.5, &mut rng);
        let kept = mask.iter().filter(|&&m| m > 0.0).count();
        assert!((kept as f32 / 100_000.0 - 0.5).abs() < 0.01);
        // inverted scaling keeps the expected activation at 1.0
        let mean: f32 = xs.iter().sum::<f32>() / xs.len() as f32;
        assert!((mean - 1.0).abs() < 0.02);
    }
}
