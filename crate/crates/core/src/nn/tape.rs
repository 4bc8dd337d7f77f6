//! Reverse-mode automatic differentiation over dense `f64` matrices.
//!
//! A [`Tape`] records every operation of one forward pass. Parameters enter
//! the tape by reference (no copy) and their gradients are collected by
//! [`Tape::backward`]. When gradients are disabled the tape only evaluates.

use std::borrow::Cow;

use ndarray::{s, Array2, Axis, Zip};

use super::params::{Gradients, ParamId};

pub type Mat = Array2<f64>;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

type Backward = Box<dyn Fn(&Mat, &[Cow<'_, Mat>], &mut [Option<Mat>])>;

pub struct Tape<'a> {
    values: Vec<Cow<'a, Mat>>,
    backward: Vec<Option<Backward>>,
    params: Vec<Option<ParamId>>,
    grad_enabled: bool,
}

fn accumulate(grads: &mut [Option<Mat>], idx: usize, g: Mat) {
    match &mut grads[idx] {
        Some(existing) => *existing += &g,
        slot @ None => *slot = Some(g),
    }
}

fn row_sum(g: &Mat) -> Mat {
    g.sum_axis(Axis(0)).insert_axis(Axis(0))
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl<'a> Tape<'a> {
    pub fn new(grad_enabled: bool) -> Self {
        Self {
            values: Vec::new(),
            backward: Vec::new(),
            params: Vec::new(),
            grad_enabled,
        }
    }

    pub fn grad_enabled(&self) -> bool {
        self.grad_enabled
    }

    pub fn value(&self, v: Var) -> &Mat {
        &self.values[v.0]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn push(&mut self, value: Cow<'a, Mat>, back: Option<Backward>, param: Option<ParamId>) -> Var {
        self.values.push(value);
        self.backward.push(if self.grad_enabled { back } else { None });
        self.params.push(param);
        Var(self.values.len() - 1)
    }

    fn op(&mut self, value: Mat, back: impl Fn(&Mat, &[Cow<'_, Mat>], &mut [Option<Mat>]) + 'static) -> Var {
        let back: Option<Backward> = if self.grad_enabled { Some(Box::new(back)) } else { None };
        self.push(Cow::Owned(value), back, None)
    }

    /// Constant input; receives no gradient.
    pub fn constant(&mut self, value: Mat) -> Var {
        self.push(Cow::Owned(value), None, None)
    }

    /// Trainable parameter, borrowed from the parameter store.
    pub fn param(&mut self, id: ParamId, value: &'a Mat) -> Var {
        self.push(Cow::Borrowed(value), None, Some(id))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let out = self.values[a.0].dot(&*self.values[b.0]);
        let (ia, ib) = (a.0, b.0);
        self.op(out, move |g, vals, grads| {
            accumulate(grads, ia, g.dot(&vals[ib].t()));
            accumulate(grads, ib, vals[ia].t().dot(g));
        })
    }

    /// `a · bᵀ` without materialising the transpose on the tape.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let out = self.values[a.0].dot(&self.values[b.0].t());
        let (ia, ib) = (a.0, b.0);
        self.op(out, move |g, vals, grads| {
            accumulate(grads, ia, g.dot(&*vals[ib]));
            accumulate(grads, ib, g.t().dot(&*vals[ia]));
        })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let out = &*self.values[a.0] + &*self.values[b.0];
        let (ia, ib) = (a.0, b.0);
        self.op(out, move |g, _, grads| {
            accumulate(grads, ia, g.clone());
            accumulate(grads, ib, g.clone());
        })
    }

    /// Adds a `[1 × C]` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let out = &*self.values[a.0] + &*self.values[row.0];
        let (ia, ir) = (a.0, row.0);
        self.op(out, move |g, _, grads| {
            accumulate(grads, ia, g.clone());
            accumulate(grads, ir, row_sum(g));
        })
    }

    /// Adds a constant matrix of the same shape (positional encodings).
    pub fn add_const(&mut self, a: Var, c: &Mat) -> Var {
        let out = &*self.values[a.0] + c;
        let ia = a.0;
        self.op(out, move |g, _, grads| accumulate(grads, ia, g.clone()))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let out = &*self.values[a.0] * &*self.values[b.0];
        let (ia, ib) = (a.0, b.0);
        self.op(out, move |g, vals, grads| {
            accumulate(grads, ia, g * &*vals[ib]);
            accumulate(grads, ib, g * &*vals[ia]);
        })
    }

    /// Multiplies every row of `a` elementwise by a `[1 × C]` row.
    pub fn mul_row(&mut self, a: Var, row: Var) -> Var {
        let out = &*self.values[a.0] * &*self.values[row.0];
        let (ia, ir) = (a.0, row.0);
        self.op(out, move |g, vals, grads| {
            accumulate(grads, ia, g * &*vals[ir]);
            accumulate(grads, ir, row_sum(&(g * &*vals[ia])));
        })
    }

    /// Elementwise product with a constant broadcastable matrix (masks, dropout).
    pub fn mul_const(&mut self, a: Var, c: Mat) -> Var {
        let out = &*self.values[a.0] * &c;
        let ia = a.0;
        self.op(out, move |g, _, grads| accumulate(grads, ia, g * &c))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let out = &*self.values[a.0] * s;
        let ia = a.0;
        self.op(out, move |g, _, grads| accumulate(grads, ia, g * s))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.values[a.0].mapv(sigmoid);
        let (ia, io) = (a.0, self.values.len());
        self.op(out, move |g, vals, grads| {
            let d = vals[io].mapv(|y| y * (1.0 - y));
            accumulate(grads, ia, g * &d);
        })
    }

    /// `x · σ(x)`, a.k.a. Swish / SiLU.
    pub fn silu(&mut self, a: Var) -> Var {
        let out = self.values[a.0].mapv(|x| x * sigmoid(x));
        let ia = a.0;
        self.op(out, move |g, vals, grads| {
            let d = vals[ia].mapv(|x| {
                let s = sigmoid(x);
                s * (1.0 + x * (1.0 - s))
            });
            accumulate(grads, ia, g * &d);
        })
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.values[a.0].mapv(|x| x.max(0.0));
        let ia = a.0;
        self.op(out, move |g, vals, grads| {
            let d = vals[ia].mapv(|x| if x > 0.0 { 1.0 } else { 0.0 });
            accumulate(grads, ia, g * &d);
        })
    }

    /// Gated linear unit over the column halves: `a₁ ⊙ σ(a₂)`.
    pub fn glu(&mut self, a: Var) -> Var {
        let x = &self.values[a.0];
        let c = x.ncols() / 2;
        let first = x.slice(s![.., ..c]);
        let gate = x.slice(s![.., c..]).mapv(sigmoid);
        let out = &first * &gate;
        let ia = a.0;
        self.op(out, move |g, vals, grads| {
            let x = &vals[ia];
            let first = x.slice(s![.., ..c]);
            let gate = x.slice(s![.., c..]).mapv(sigmoid);
            let mut dx = Mat::zeros(x.raw_dim());
            dx.slice_mut(s![.., ..c]).assign(&(g * &gate));
            let dgate = gate.mapv(|s| s * (1.0 - s));
            dx.slice_mut(s![.., c..]).assign(&(g * &first * &dgate));
            accumulate(grads, ia, dx);
        })
    }

    /// Per-row layer normalisation with affine `[1 × C]` gain and bias.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Var {
        let (xhat, _) = normalize_rows(&self.values[x.0], eps);
        let out = &xhat * &*self.values[gain.0] + &*self.values[bias.0];
        let (ix, ig, ib) = (x.0, gain.0, bias.0);
        self.op(out, move |g, vals, grads| {
            let (xhat, inv_std) = normalize_rows(&vals[ix], eps);
            accumulate(grads, ig, row_sum(&(g * &xhat)));
            accumulate(grads, ib, row_sum(g));
            let dxhat = g * &*vals[ig];
            let c = xhat.ncols() as f64;
            let mut dx = Mat::zeros(xhat.raw_dim());
            for (r, mut row) in dx.rows_mut().into_iter().enumerate() {
                let dh = dxhat.row(r);
                let xh = xhat.row(r);
                let mean_dh = dh.sum() / c;
                let mean_dh_xh = (&dh * &xh).sum() / c;
                Zip::from(&mut row).and(&dh).and(&xh).for_each(|o, &d, &h| {
                    *o = inv_std[r] * (d - mean_dh - h * mean_dh_xh);
                });
            }
            accumulate(grads, ix, dx);
        })
    }

    /// Row-wise softmax. Columns with `key_valid[j] == false` receive zero
    /// probability. At least one column must be valid.
    pub fn softmax_rows(&mut self, a: Var, key_valid: &[bool]) -> Var {
        let x = &self.values[a.0];
        assert_eq!(x.ncols(), key_valid.len(), "softmax mask length");
        let mut out = Mat::zeros(x.raw_dim());
        for (mut orow, xrow) in out.rows_mut().into_iter().zip(x.rows()) {
            let max = xrow
                .iter()
                .zip(key_valid)
                .filter(|(_, &v)| v)
                .map(|(&x, _)| x)
                .fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for ((o, &x), &v) in orow.iter_mut().zip(xrow).zip(key_valid) {
                if v {
                    *o = (x - max).exp();
                    total += *o;
                }
            }
            orow /= total;
        }
        let (ia, io) = (a.0, self.values.len());
        self.op(out, move |g, vals, grads| {
            let p = &vals[io];
            let dot = (g * &**p).sum_axis(Axis(1)).insert_axis(Axis(1));
            let dx = &**p * &(g - &dot);
            accumulate(grads, ia, dx);
        })
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let out = self.values[a.0].slice(s![.., start..start + len]).to_owned();
        let ia = a.0;
        self.op(out, move |g, vals, grads| {
            let mut dx = Mat::zeros(vals[ia].raw_dim());
            dx.slice_mut(s![.., start..start + len]).assign(g);
            accumulate(grads, ia, dx);
        })
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|p| self.values[p.0].view()).collect();
        let out = ndarray::concatenate(Axis(1), &views).expect("row counts must agree");
        let spans: Vec<(usize, usize)> = parts
            .iter()
            .scan(0, |off, p| {
                let w = self.values[p.0].ncols();
                let span = (p.0, *off);
                *off += w;
                Some(span)
            })
            .collect();
        self.op(out, move |g, vals, grads| {
            for &(idx, off) in &spans {
                let w = vals[idx].ncols();
                accumulate(grads, idx, g.slice(s![.., off..off + w]).to_owned());
            }
        })
    }

    /// Depthwise 1-D convolution along rows (time) with "same" zero padding.
    /// `weight` is `[K × C]` with odd `K`, `bias` is `[1 × C]`.
    pub fn depthwise_conv(&mut self, x: Var, weight: Var, bias: Var) -> Var {
        let out = depthwise_forward(&self.values[x.0], &self.values[weight.0], &self.values[bias.0]);
        let (ix, iw, ib) = (x.0, weight.0, bias.0);
        self.op(out, move |g, vals, grads| {
            let xv = &vals[ix];
            let wv = &vals[iw];
            let (t_len, k_len) = (xv.nrows() as isize, wv.nrows() as isize);
            let pad = (k_len - 1) / 2;
            let mut dx = Mat::zeros(xv.raw_dim());
            let mut dw = Mat::zeros(wv.raw_dim());
            for t in 0..t_len {
                for k in 0..k_len {
                    let src = t + k - pad;
                    if src < 0 || src >= t_len {
                        continue;
                    }
                    let grow = g.row(t as usize);
                    Zip::from(dx.row_mut(src as usize))
                        .and(&grow)
                        .and(wv.row(k as usize))
                        .for_each(|d, &gv, &w| *d += gv * w);
                    Zip::from(dw.row_mut(k as usize))
                        .and(&grow)
                        .and(xv.row(src as usize))
                        .for_each(|d, &gv, &x| *d += gv * x);
                }
            }
            accumulate(grads, ix, dx);
            accumulate(grads, iw, dw);
            accumulate(grads, ib, row_sum(g));
        })
    }

    /// Mean over the rows flagged valid, as a `[1 × C]` row.
    pub fn mean_rows(&mut self, a: Var, valid: &[bool]) -> Var {
        let x = &self.values[a.0];
        let n = valid.iter().filter(|&&v| v).count();
        assert!(n > 0, "mean over zero valid rows");
        let mut out = Mat::zeros((1, x.ncols()));
        for (row, _) in x.rows().into_iter().zip(valid).filter(|(_, &v)| v) {
            out.row_mut(0).scaled_add(1.0, &row);
        }
        out /= n as f64;
        let valid = valid.to_vec();
        let ia = a.0;
        self.op(out, move |g, vals, grads| {
            let mut dx = Mat::zeros(vals[ia].raw_dim());
            for (mut row, _) in dx.rows_mut().into_iter().zip(&valid).filter(|(_, &v)| v) {
                row.assign(&(&g.row(0) / n as f64));
            }
            accumulate(grads, ia, dx);
        })
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Var {
        let out = self.values[a.0].slice(s![start..start + len, ..]).to_owned();
        let ia = a.0;
        self.op(out, move |g, vals, grads| {
            let mut dx = Mat::zeros(vals[ia].raw_dim());
            dx.slice_mut(s![start..start + len, ..]).assign(g);
            accumulate(grads, ia, dx);
        })
    }

    /// Numerically stable binary cross-entropy on a `[1 × 1]` logit.
    pub fn bce_with_logits(&mut self, logit: Var, label: f64) -> Var {
        let l = self.values[logit.0][[0, 0]];
        let loss = bce_with_logits(l, label);
        let il = logit.0;
        self.op(Mat::from_elem((1, 1), loss), move |g, vals, grads| {
            let l = vals[il][[0, 0]];
            accumulate(grads, il, Mat::from_elem((1, 1), g[[0, 0]] * (sigmoid(l) - label)));
        })
    }

    /// Back-propagates from a scalar `[1 × 1]` output and returns the
    /// gradient of every parameter that took part in the computation.
    pub fn backward(&self, output: Var, n_params: usize) -> Gradients {
        assert!(self.grad_enabled, "backward on a tape without gradients");
        assert_eq!(self.values[output.0].dim(), (1, 1), "backward from a non-scalar");
        let mut grads: Vec<Option<Mat>> = vec![None; output.0 + 1];
        grads[output.0] = Some(Mat::ones((1, 1)));
        let mut out = Gradients::zeros_like_count(n_params);
        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            if let Some(back) = &self.backward[idx] {
                back(&g, &self.values, &mut grads);
            }
            if let Some(pid) = self.params[idx] {
                out.accumulate(pid, g);
            }
        }
        out
    }
}

pub fn bce_with_logits(logit: f64, label: f64) -> f64 {
    logit.max(0.0) - logit * label + (-logit.abs()).exp().ln_1p()
}

pub fn sigmoid_scalar(x: f64) -> f64 {
    sigmoid(x)
}

fn normalize_rows(x: &Mat, eps: f64) -> (Mat, Vec<f64>) {
    let c = x.ncols() as f64;
    let mut out = x.clone();
    let mut inv = Vec::with_capacity(x.nrows());
    for mut row in out.rows_mut() {
        let mean = row.sum() / c;
        row.mapv_inplace(|v| v - mean);
        let var = row.iter().map(|v| v * v).sum::<f64>() / c;
        let is = 1.0 / (var + eps).sqrt();
        row.mapv_inplace(|v| v * is);
        inv.push(is);
    }
    (out, inv)
}

fn depthwise_forward(x: &Mat, w: &Mat, b: &Mat) -> Mat {
    let (t_len, k_len) = (x.nrows() as isize, w.nrows() as isize);
    let pad = (k_len - 1) / 2;
    let mut out = Mat::zeros(x.raw_dim());
    for t in 0..t_len {
        let mut orow = out.row_mut(t as usize);
        orow.assign(&b.row(0));
        for k in 0..k_len {
            let src = t + k - pad;
            if src < 0 || src >= t_len {
                continue;
            }
            Zip::from(&mut orow)
                .and(x.row(src as usize))
                .and(w.row(k as usize))
                .for_each(|o, &xv, &wv| *o += xv * wv);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::params::ParamStore;
    use ndarray::array;

    fn numeric_grad(store: &ParamStore, id: ParamId, f: &dyn Fn(&ParamStore) -> f64) -> Mat {
        let h = 1e-6;
        let base = store.get(id).clone();
        let mut out = Mat::zeros(base.raw_dim());
        for idx in 0..base.len() {
            let (r, c) = (idx / base.ncols(), idx % base.ncols());
            let mut plus = store.clone();
            plus.get_mut(id)[[r, c]] += h;
            let mut minus = store.clone();
            minus.get_mut(id)[[r, c]] -= h;
            out[[r, c]] = (f(&plus) - f(&minus)) / (2.0 * h);
        }
        out
    }

    type LossFn<'a> = &'a dyn Fn(&ParamStore, bool) -> (f64, Option<Gradients>);

    fn check(store: &ParamStore, f: LossFn) {
        let (_, grads) = f(store, true);
        let grads = grads.unwrap();
        for id in store.ids() {
            let num = numeric_grad(store, id, &|s| f(s, false).0);
            let ana = grads.get(id).cloned().unwrap_or_else(|| Mat::zeros(num.raw_dim()));
            for (a, n) in ana.iter().zip(num.iter()) {
                assert!((a - n).abs() < 1e-6 * (1.0 + n.abs()), "{} analytic {a} numeric {n}", store.name(id));
            }
        }
    }

    #[test]
    fn softmax_masks_invalid_columns() {
        let mut tape = Tape::new(false);
        let x = tape.constant(array![[1.0, 2.0, 50.0], [0.0, 0.0, 0.0]]);
        let p = tape.softmax_rows(x, &[true, true, false]);
        let p = tape.value(p);
        assert_eq!(p[[0, 2]], 0.0);
        assert!((p.row(0).sum() - 1.0).abs() < 1e-12);
        assert!((p[[1, 0]] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn depthwise_conv_matches_direct_sum() {
        let x = array![[1.0], [2.0], [3.0]];
        let w = array![[1.0], [10.0], [100.0]];
        let b = array![[0.5]];
        let y = depthwise_forward(&x, &w, &b);
        // y[t] = b + x[t-1]*w0 + x[t]*w1 + x[t+1]*w2
        assert_eq!(y, array![[0.5 + 10.0 + 200.0], [0.5 + 1.0 + 20.0 + 300.0], [0.5 + 2.0 + 30.0]]);
    }

    #[test]
    fn composite_gradients_match_finite_differences() {
        let mut store = ParamStore::default();
        let w = store.insert("w", array![[0.3, -0.2, 0.1, 0.4], [0.5, 0.1, -0.3, 0.2], [-0.1, 0.2, 0.6, -0.5]]);
        let gain = store.insert("gain", array![[1.1, 0.9, 1.2, 0.8]]);
        let bias = store.insert("bias", array![[0.1, -0.1, 0.05, 0.0]]);
        let kern = store.insert("kern", array![[0.2, -0.1], [0.5, 0.3], [-0.4, 0.7]]);
        let kb = store.insert("kb", array![[0.01, -0.02]]);
        let head = store.insert("head", array![[0.7], [-0.3]]);
        let x = array![[0.2, -0.4, 1.0], [1.5, 0.3, -0.7], [-0.6, 0.9, 0.1], [0.4, 0.4, -1.2]];
        let f = |s: &ParamStore, grad: bool| {
            let mut t = Tape::new(grad);
            let xi = t.constant(x.clone());
            let wv = t.param(w, s.get(w));
            let h = t.matmul(xi, wv);
            let gv = t.param(gain, s.get(gain));
            let bv = t.param(bias, s.get(bias));
            let h = t.layer_norm(h, gv, bv, 1e-5);
            let h = t.glu(h);
            let h = t.mul_const(h, array![[1.0], [1.0], [1.0], [0.0]]);
            let kw = t.param(kern, s.get(kern));
            let kbv = t.param(kb, s.get(kb));
            let h = t.depthwise_conv(h, kw, kbv);
            let h = t.silu(h);
            let att = t.matmul_t(h, h);
            let p = t.softmax_rows(att, &[true, true, false, true]);
            let h2 = t.matmul(p, h);
            let h2 = t.add(h2, h);
            let pooled = t.mean_rows(h2, &[true, true, true, false]);
            let hv = t.param(head, s.get(head));
            let logit = t.matmul(pooled, hv);
            let loss = t.bce_with_logits(logit, 1.0);
            let val = t.value(loss)[[0, 0]];
            let g = grad.then(|| t.backward(loss, s.len()));
            (val, g)
        };
        check(&store, &f);
    }

    #[test]
    fn bce_closed_forms() {
        assert!((bce_with_logits(0.0, 1.0) - 2f64.ln()).abs() < 1e-15);
        assert!((bce_with_logits(0.0, 0.0) - 2f64.ln()).abs() < 1e-15);
        assert!(bce_with_logits(800.0, 1.0).abs() < 1e-12);
        assert!((bce_with_logits(-800.0, 1.0) - 800.0).abs() < 1e-9);
    }
}
