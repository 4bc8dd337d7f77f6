//! Building blocks of the network. Each layer holds parameter ids only;
//! values live in the model's [`ParamStore`] and are read through a [`Pass`].

use ndarray::Array3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::nn::{Mat, ParamId, ParamStore, Tape, Var};

const LN_EPS: f64 = 1e-5;

/// One forward evaluation: the tape plus dropout state.
pub struct Pass<'p> {
    pub tape: Tape<'p>,
    params: &'p ParamStore,
    dropout: f64,
    rng: Option<ChaCha8Rng>,
}

impl<'p> Pass<'p> {
    /// Evaluation pass: dropout disabled, no gradients.
    pub fn eval(params: &'p ParamStore) -> Self {
        Self { tape: Tape::new(false), params, dropout: 0.0, rng: None }
    }

    /// Gradient-recording pass; dropout is active when `dropout_seed` is set.
    pub fn train(params: &'p ParamStore, dropout: f64, dropout_seed: Option<u64>) -> Self {
        Self {
            tape: Tape::new(true),
            params,
            dropout,
            rng: dropout_seed.map(ChaCha8Rng::seed_from_u64),
        }
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        self.tape.param(id, self.params.get(id))
    }

    pub fn dropout(&mut self, x: Var) -> Var {
        let p = self.dropout;
        let Some(rng) = self.rng.as_mut() else { return x };
        if p <= 0.0 {
            return x;
        }
        let shape = self.tape.value(x).raw_dim();
        let keep = 1.0 / (1.0 - p);
        let mask = Mat::from_shape_simple_fn(shape, || if rng.random::<f64>() < p { 0.0 } else { keep });
        self.tape.mul_const(x, mask)
    }

    pub fn value(&self, v: Var) -> &Mat {
        self.tape.value(v)
    }
}

/// Registers parameters with deterministic initialisation.
pub struct Init<'a> {
    pub store: &'a mut ParamStore,
    pub rng: ChaCha8Rng,
}

impl Init<'_> {
    fn uniform(&mut self, name: &str, rows: usize, cols: usize, bound: f64) -> ParamId {
        let rng = &mut self.rng;
        let m = Mat::from_shape_simple_fn((rows, cols), || rng.random_range(-bound..bound));
        self.store.insert(name, m)
    }

    fn constant(&mut self, name: &str, rows: usize, cols: usize, v: f64) -> ParamId {
        self.store.insert(name, Mat::from_elem((rows, cols), v))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    pub fn new(init: &mut Init, name: &str, fan_in: usize, fan_out: usize) -> Self {
        Self::with_gain(init, name, fan_in, fan_out, 1.0)
    }

    /// Glorot-uniform weights scaled by `gain`, zero bias.
    pub fn with_gain(init: &mut Init, name: &str, fan_in: usize, fan_out: usize, gain: f64) -> Self {
        let bound = gain * (6.0 / (fan_in + fan_out) as f64).sqrt();
        Self {
            w: init.uniform(&format!("{name}.w"), fan_in, fan_out, bound),
            b: init.constant(&format!("{name}.b"), 1, fan_out, 0.0),
        }
    }

    pub fn forward(&self, pass: &mut Pass, x: Var) -> Var {
        let w = pass.param(self.w);
        let b = pass.param(self.b);
        let y = pass.tape.matmul(x, w);
        pass.tape.add_row(y, b)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
}

impl LayerNorm {
    pub fn new(init: &mut Init, name: &str, dim: usize) -> Self {
        Self {
            gain: init.constant(&format!("{name}.g"), 1, dim, 1.0),
            bias: init.constant(&format!("{name}.b"), 1, dim, 0.0),
        }
    }

    pub fn forward(&self, pass: &mut Pass, x: Var) -> Var {
        let g = pass.param(self.gain);
        let b = pass.param(self.bias);
        pass.tape.layer_norm(x, g, b, LN_EPS)
    }
}

/// Scaled dot-product multi-head attention. Queries come from one sequence,
/// keys and values from another (or the same one for self-attention).
#[derive(Debug, Clone, Copy)]
pub struct MultiHeadAttention {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
    pub heads: usize,
    pub dim: usize,
}

impl MultiHeadAttention {
    pub fn new(init: &mut Init, name: &str, dim: usize, heads: usize) -> Self {
        Self {
            q: Linear::new(init, &format!("{name}.q"), dim, dim),
            k: Linear::new(init, &format!("{name}.k"), dim, dim),
            v: Linear::new(init, &format!("{name}.v"), dim, dim),
            o: Linear::new(init, &format!("{name}.o"), dim, dim),
            heads,
            dim,
        }
    }

    /// Returns the attended sequence and, when `record` is set, the
    /// attention weights `[heads × T_query × T_key]`.
    pub fn forward(
        &self,
        pass: &mut Pass,
        query: Var,
        key_value: Var,
        key_valid: &[bool],
        record: bool,
    ) -> (Var, Option<Array3<f64>>) {
        let q = self.q.forward(pass, query);
        let k = self.k.forward(pass, key_value);
        let v = self.v.forward(pass, key_value);
        let hd = self.dim / self.heads;
        let scale = 1.0 / (hd as f64).sqrt();
        let tq = pass.value(q).nrows();
        let tk = key_valid.len();
        let mut weights = record.then(|| Array3::zeros((self.heads, tq, tk)));
        let mut outs = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let qh = pass.tape.slice_cols(q, h * hd, hd);
            let kh = pass.tape.slice_cols(k, h * hd, hd);
            let vh = pass.tape.slice_cols(v, h * hd, hd);
            let scores = pass.tape.matmul_t(qh, kh);
            let scores = pass.tape.scale(scores, scale);
            let probs = pass.tape.softmax_rows(scores, key_valid);
            if let Some(w) = weights.as_mut() {
                w.index_axis_mut(ndarray::Axis(0), h).assign(pass.value(probs));
            }
            outs.push(pass.tape.matmul(probs, vh));
        }
        let merged = if outs.len() == 1 { outs[0] } else { pass.tape.concat_cols(&outs) };
        (self.o.forward(pass, merged), weights)
    }
}

/// Conformer feed-forward: LN → Linear → Swish → Dropout → Linear → Dropout.
#[derive(Debug, Clone, Copy)]
pub struct FeedForward {
    pub norm: LayerNorm,
    pub up: Linear,
    pub down: Linear,
}

impl FeedForward {
    pub fn new(init: &mut Init, name: &str, dim: usize, hidden: usize) -> Self {
        Self {
            norm: LayerNorm::new(init, &format!("{name}.ln"), dim),
            up: Linear::new(init, &format!("{name}.up"), dim, hidden),
            down: Linear::new(init, &format!("{name}.down"), hidden, dim),
        }
    }

    pub fn forward(&self, pass: &mut Pass, x: Var) -> Var {
        let h = self.norm.forward(pass, x);
        let h = self.up.forward(pass, h);
        let h = pass.tape.silu(h);
        let h = pass.dropout(h);
        let h = self.down.forward(pass, h);
        pass.dropout(h)
    }
}

/// Conformer convolution module: LN → pointwise (2C) → GLU → depthwise conv
/// → LN → Swish → pointwise → Dropout. Padding frames are zeroed before the
/// depthwise convolution so they never leak into valid frames.
#[derive(Debug, Clone, Copy)]
pub struct ConvModule {
    pub norm: LayerNorm,
    pub pointwise_in: Linear,
    pub depthwise_w: ParamId,
    pub depthwise_b: ParamId,
    pub inner_norm: LayerNorm,
    pub pointwise_out: Linear,
}

impl ConvModule {
    pub fn new(init: &mut Init, name: &str, dim: usize, kernel: usize) -> Self {
        let norm = LayerNorm::new(init, &format!("{name}.ln"), dim);
        let pointwise_in = Linear::new(init, &format!("{name}.pw_in"), dim, 2 * dim);
        let bound = 1.0 / (kernel as f64).sqrt();
        let depthwise_w = init.uniform(&format!("{name}.dw.w"), kernel, dim, bound);
        let depthwise_b = init.constant(&format!("{name}.dw.b"), 1, dim, 0.0);
        Self {
            norm,
            pointwise_in,
            depthwise_w,
            depthwise_b,
            inner_norm: LayerNorm::new(init, &format!("{name}.ln_inner"), dim),
            pointwise_out: Linear::new(init, &format!("{name}.pw_out"), dim, dim),
        }
    }

    pub fn forward(&self, pass: &mut Pass, x: Var, valid: &[bool]) -> Var {
        let h = self.norm.forward(pass, x);
        let h = self.pointwise_in.forward(pass, h);
        let h = pass.tape.glu(h);
        let h = pass.tape.mul_const(h, row_mask(valid));
        let w = pass.param(self.depthwise_w);
        let b = pass.param(self.depthwise_b);
        let h = pass.tape.depthwise_conv(h, w, b);
        let h = self.inner_norm.forward(pass, h);
        let h = pass.tape.silu(h);
        let h = self.pointwise_out.forward(pass, h);
        pass.dropout(h)
    }
}

/// Macaron conformer block: ½FFN, self-attention, convolution, ½FFN, LN.
#[derive(Debug, Clone, Copy)]
pub struct ConformerBlock {
    pub ff_in: FeedForward,
    pub attn_norm: LayerNorm,
    pub attn: MultiHeadAttention,
    pub conv: ConvModule,
    pub ff_out: FeedForward,
    pub out_norm: LayerNorm,
}

impl ConformerBlock {
    pub fn new(init: &mut Init, name: &str, dim: usize, heads: usize, ff: usize, kernel: usize) -> Self {
        Self {
            ff_in: FeedForward::new(init, &format!("{name}.ff_in"), dim, ff),
            attn_norm: LayerNorm::new(init, &format!("{name}.attn_ln"), dim),
            attn: MultiHeadAttention::new(init, &format!("{name}.attn"), dim, heads),
            conv: ConvModule::new(init, &format!("{name}.conv"), dim, kernel),
            ff_out: FeedForward::new(init, &format!("{name}.ff_out"), dim, ff),
            out_norm: LayerNorm::new(init, &format!("{name}.out_ln"), dim),
        }
    }

    pub fn forward(&self, pass: &mut Pass, x: Var, valid: &[bool], record: bool) -> (Var, Option<Array3<f64>>) {
        let f = self.ff_in.forward(pass, x);
        let f = pass.tape.scale(f, 0.5);
        let x = pass.tape.add(x, f);

        let n = self.attn_norm.forward(pass, x);
        let (a, weights) = self.attn.forward(pass, n, n, valid, record);
        let a = pass.dropout(a);
        let x = pass.tape.add(x, a);

        let c = self.conv.forward(pass, x, valid);
        let x = pass.tape.add(x, c);

        let f = self.ff_out.forward(pass, x);
        let f = pass.tape.scale(f, 0.5);
        let x = pass.tape.add(x, f);
        (self.out_norm.forward(pass, x), weights)
    }
}

/// Post-norm transformer encoder layer whose attention reads keys and
/// values from the other speaker's sequence.
#[derive(Debug, Clone, Copy)]
pub struct CrossLayer {
    pub attn: MultiHeadAttention,
    pub attn_norm: LayerNorm,
    pub ff_up: Linear,
    pub ff_down: Linear,
    pub ff_norm: LayerNorm,
}

impl CrossLayer {
    pub fn new(init: &mut Init, name: &str, dim: usize, heads: usize, ff: usize) -> Self {
        Self {
            attn: MultiHeadAttention::new(init, &format!("{name}.attn"), dim, heads),
            attn_norm: LayerNorm::new(init, &format!("{name}.attn_ln"), dim),
            ff_up: Linear::new(init, &format!("{name}.ff_up"), dim, ff),
            ff_down: Linear::new(init, &format!("{name}.ff_down"), ff, dim),
            ff_norm: LayerNorm::new(init, &format!("{name}.ff_ln"), dim),
        }
    }

    pub fn forward(
        &self,
        pass: &mut Pass,
        query: Var,
        other: Var,
        other_valid: &[bool],
        record: bool,
    ) -> (Var, Option<Array3<f64>>) {
        let (a, weights) = self.attn.forward(pass, query, other, other_valid, record);
        let a = pass.dropout(a);
        let x = pass.tape.add(query, a);
        let x = self.attn_norm.forward(pass, x);
        let f = self.ff_up.forward(pass, x);
        let f = pass.tape.relu(f);
        let f = self.ff_down.forward(pass, f);
        let f = pass.dropout(f);
        let x = pass.tape.add(x, f);
        (self.ff_norm.forward(pass, x), weights)
    }
}

/// Column vector of 1.0 / 0.0 per frame, broadcast across features.
pub fn row_mask(valid: &[bool]) -> Mat {
    Mat::from_shape_fn((valid.len(), 1), |(i, _)| if valid[i] { 1.0 } else { 0.0 })
}

/// Sinusoidal absolute positional encoding `[T × dim]`.
pub fn positional_encoding(len: usize, dim: usize) -> Mat {
    Mat::from_shape_fn((len, dim), |(pos, i)| {
        let pair = (i / 2) as f64;
        let angle = pos as f64 / 10000f64.powf(2.0 * pair / dim as f64);
        if i % 2 == 0 {
            angle.sin()
        } else {
            angle.cos()
        }
    })
}
