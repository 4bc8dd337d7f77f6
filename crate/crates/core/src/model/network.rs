//! The CED network: a shared conformer self-encoder per speaker, two
//! cross-subject transformer encoders and a real/fake classification head.
//!
//! ```text
//! lead frames ─ input proj ─ +PE ─ conformer ─┐        ┌─ cross-encoder 1 (lead queries) ─ pool ─┐
//!                                             ├ proj ──┤                                         ├ concat ─ FFN ─ logit
//! resp frames ─ input proj ─ +PE ─ conformer ─┘        └─ cross-encoder 2 (resp queries) ─ pool ─┘
//! ```

use std::fmt;

use ndarray::{s, Array1, Array3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{ModelConfig, Pooling};
use super::layers::{positional_encoding, ConformerBlock, CrossLayer, Init, Linear, Pass};
use crate::corpus::TurnPair;
use crate::error::{CedError, Result};
use crate::nn::{Gradients, Mat, ParamStore, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttentionLayer {
    SelfEncoder,
    /// Leading-speaker queries over responding-speaker keys.
    CrossEncoder1,
    /// Responding-speaker queries over leading-speaker keys.
    CrossEncoder2,
}

impl fmt::Display for AttentionLayer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AttentionLayer::SelfEncoder => "self_encoder",
            AttentionLayer::CrossEncoder1 => "cross_encoder_1",
            AttentionLayer::CrossEncoder2 => "cross_encoder_2",
        })
    }
}

/// Captured attention weights `[heads × T_query × T_key]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionRecord {
    pub layer: AttentionLayer,
    pub depth: usize,
    pub weights: Array3<f64>,
}

/// Cross-encoder outputs for both turns of a pair and their pooled vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingPair {
    pub z_lead: Mat,
    pub z_resp: Mat,
    pub pooled_lead: Array1<f64>,
    pub pooled_resp: Array1<f64>,
}

/// A frame matrix with a validity flag per row (false = padding).
#[derive(Debug, Clone, Copy)]
pub struct Masked<'a> {
    pub frames: &'a Mat,
    pub valid: &'a [bool],
}

impl<'a> Masked<'a> {
    pub fn new(frames: &'a Mat, valid: &'a [bool]) -> Self {
        Self { frames, valid }
    }
}

#[derive(Debug, Clone)]
pub struct CedModel {
    cfg: ModelConfig,
    params: ParamStore,
    input: Linear,
    blocks: Vec<ConformerBlock>,
    proj: Linear,
    cross_lead: Vec<CrossLayer>,
    cross_resp: Vec<CrossLayer>,
    head_hidden: Linear,
    head_out: Linear,
}

struct Encoded {
    z_lead: Var,
    z_resp: Var,
    records: Vec<AttentionRecord>,
}

impl CedModel {
    pub fn new(cfg: ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let mut params = ParamStore::default();
        let mut init = Init { store: &mut params, rng: ChaCha8Rng::seed_from_u64(cfg.init_seed) };
        let (cu, tu) = (cfg.conformer_units, cfg.transformer_units);
        let input = Linear::new(&mut init, "input", cfg.input_dim, cu);
        let blocks = (0..cfg.conformer_layers)
            .map(|i| {
                ConformerBlock::new(&mut init, &format!("conformer.{i}"), cu, cfg.heads, cfg.conformer_ff_dim, cfg.conv_kernel)
            })
            .collect();
        let proj = Linear::new(&mut init, "proj", cu, tu);
        let cross_lead: Vec<CrossLayer> = (0..cfg.cross_layers)
            .map(|i| CrossLayer::new(&mut init, &format!("cross1.{i}"), tu, cfg.heads, cfg.cross_ff_dim))
            .collect();
        let cross_resp = if cfg.share_cross_weights {
            cross_lead.clone()
        } else {
            (0..cfg.cross_layers)
                .map(|i| CrossLayer::new(&mut init, &format!("cross2.{i}"), tu, cfg.heads, cfg.cross_ff_dim))
                .collect()
        };
        let head_hidden = Linear::new(&mut init, "head.hidden", 2 * tu, cfg.head_hidden);
        // small output weights keep initial logits near zero
        let head_out = Linear::with_gain(&mut init, "head.out", cfg.head_hidden, 1, 0.1);
        Ok(Self { cfg, params, input, blocks, proj, cross_lead, cross_resp, head_hidden, head_out })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// Number of trainable scalars.
    pub fn param_count(&self) -> usize {
        self.params.scalar_count()
    }

    fn check_input(&self, x: Masked, who: &str) -> Result<()> {
        if x.frames.ncols() != self.cfg.input_dim {
            return Err(CedError::Dimension(format!(
                "{who}: feature dim {} but model expects {}",
                x.frames.ncols(),
                self.cfg.input_dim
            )));
        }
        if x.valid.len() != x.frames.nrows() {
            return Err(CedError::Dimension(format!(
                "{who}: mask length {} for {} frames",
                x.valid.len(),
                x.frames.nrows()
            )));
        }
        let n = x.valid.iter().filter(|&&v| v).count();
        if n < 2 {
            return Err(CedError::InputTooShort(format!("{who}: {n} valid frame(s), need at least 2")));
        }
        Ok(())
    }

    fn finite(pass: &Pass, v: Var, layer: &str) -> Result<()> {
        if pass.value(v).iter().all(|x| x.is_finite()) {
            Ok(())
        } else {
            Err(CedError::Numeric(layer.to_string()))
        }
    }

    fn self_encode_var(&self, pass: &mut Pass, x: Masked, records: Option<&mut Vec<AttentionRecord>>) -> Result<Var> {
        let xi = pass.tape.constant(x.frames.clone());
        let h = self.input.forward(pass, xi);
        let pe = positional_encoding(x.frames.nrows(), self.cfg.conformer_units);
        let mut h = pass.tape.add_const(h, &pe);
        let record = records.is_some();
        let mut captured = Vec::new();
        for (depth, block) in self.blocks.iter().enumerate() {
            let (out, w) = block.forward(pass, h, x.valid, record);
            h = out;
            if let Some(weights) = w {
                captured.push(AttentionRecord { layer: AttentionLayer::SelfEncoder, depth, weights });
            }
        }
        Self::finite(pass, h, "self_encoder")?;
        if let Some(r) = records {
            r.extend(captured);
        }
        Ok(h)
    }

    fn cross_encode_var(
        &self,
        pass: &mut Pass,
        h_lead: Var,
        lead_valid: &[bool],
        h_resp: Var,
        resp_valid: &[bool],
        record: bool,
    ) -> Result<Encoded> {
        let mut lead = self.proj.forward(pass, h_lead);
        let mut resp = self.proj.forward(pass, h_resp);
        let mut records = Vec::new();
        for depth in 0..self.cfg.cross_layers {
            let (nl, w1) = self.cross_lead[depth].forward(pass, lead, resp, resp_valid, record);
            let (nr, w2) = self.cross_resp[depth].forward(pass, resp, lead, lead_valid, record);
            lead = nl;
            resp = nr;
            if let (Some(w1), Some(w2)) = (w1, w2) {
                records.push(AttentionRecord { layer: AttentionLayer::CrossEncoder1, depth, weights: w1 });
                records.push(AttentionRecord { layer: AttentionLayer::CrossEncoder2, depth, weights: w2 });
            }
        }
        Self::finite(pass, lead, "cross_encoder_1")?;
        Self::finite(pass, resp, "cross_encoder_2")?;
        Ok(Encoded { z_lead: lead, z_resp: resp, records })
    }

    fn pool(&self, pass: &mut Pass, z: Var, valid: &[bool]) -> Var {
        match self.cfg.pooling {
            Pooling::Mean => pass.tape.mean_rows(z, valid),
            Pooling::First => {
                let first = valid.iter().position(|&v| v).expect("validated non-empty");
                pass.tape.slice_rows(z, first, 1)
            }
        }
    }

    fn logit_var(&self, pass: &mut Pass, lead: Masked, resp: Masked) -> Result<Var> {
        self.check_input(lead, "leading turn")?;
        self.check_input(resp, "responding turn")?;
        let hl = self.self_encode_var(pass, lead, None)?;
        let hr = self.self_encode_var(pass, resp, None)?;
        let enc = self.cross_encode_var(pass, hl, lead.valid, hr, resp.valid, false)?;
        let pl = self.pool(pass, enc.z_lead, lead.valid);
        let pr = self.pool(pass, enc.z_resp, resp.valid);
        let joined = pass.tape.concat_cols(&[pl, pr]);
        let h = self.head_hidden.forward(pass, joined);
        let h = pass.tape.relu(h);
        let h = pass.dropout(h);
        let logit = self.head_out.forward(pass, h);
        Self::finite(pass, logit, "head")?;
        Ok(logit)
    }

    /// Per-frame conformer encodings `[T × conformer_units]` (evaluation mode).
    pub fn self_encode(&self, x: Masked) -> Result<Mat> {
        self.check_input(x, "input")?;
        let mut pass = Pass::eval(&self.params);
        let h = self.self_encode_var(&mut pass, x, None)?;
        Ok(pass.value(h).clone())
    }

    /// Self-encoder output plus the self-attention weights of every block.
    pub fn self_encode_with_attention(&self, x: Masked) -> Result<(Mat, Vec<AttentionRecord>)> {
        self.check_input(x, "input")?;
        let mut pass = Pass::eval(&self.params);
        let mut records = Vec::new();
        let h = self.self_encode_var(&mut pass, x, Some(&mut records))?;
        Ok((pass.value(h).clone(), records))
    }

    /// Cross-subject encoding of two self-encoded sequences
    /// (`[T × conformer_units]` each). Attention weights are captured when
    /// `record` is set.
    pub fn cross_encode(
        &self,
        h_lead: Masked,
        h_resp: Masked,
        record: bool,
    ) -> Result<(EmbeddingPair, Vec<AttentionRecord>)> {
        for (h, who) in [(h_lead, "leading"), (h_resp, "responding")] {
            if h.frames.ncols() != self.cfg.conformer_units {
                return Err(CedError::Dimension(format!(
                    "{who} encoding has {} columns, expected {}",
                    h.frames.ncols(),
                    self.cfg.conformer_units
                )));
            }
            if h.valid.len() != h.frames.nrows() || !h.valid.iter().any(|&v| v) {
                return Err(CedError::InputTooShort(format!("{who} encoding has no valid frames")));
            }
        }
        let mut pass = Pass::eval(&self.params);
        let hl = pass.tape.constant(h_lead.frames.clone());
        let hr = pass.tape.constant(h_resp.frames.clone());
        let enc = self.cross_encode_var(&mut pass, hl, h_lead.valid, hr, h_resp.valid, record)?;
        Ok((self.embedding_pair(&mut pass, &enc, h_lead.valid, h_resp.valid), enc.records))
    }

    fn embedding_pair(&self, pass: &mut Pass, enc: &Encoded, lead_valid: &[bool], resp_valid: &[bool]) -> EmbeddingPair {
        let pl = self.pool(pass, enc.z_lead, lead_valid);
        let pr = self.pool(pass, enc.z_resp, resp_valid);
        EmbeddingPair {
            z_lead: pass.value(enc.z_lead).clone(),
            z_resp: pass.value(enc.z_resp).clone(),
            pooled_lead: pass.value(pl).row(0).to_owned(),
            pooled_resp: pass.value(pr).row(0).to_owned(),
        }
    }

    /// Full encoder stack on (possibly padded) frame matrices.
    pub fn embed(&self, lead: Masked, resp: Masked, record: bool) -> Result<(EmbeddingPair, Vec<AttentionRecord>)> {
        self.check_input(lead, "leading turn")?;
        self.check_input(resp, "responding turn")?;
        let mut pass = Pass::eval(&self.params);
        let mut records = Vec::new();
        let hl = self.self_encode_var(&mut pass, lead, None)?;
        let hr = self.self_encode_var(&mut pass, resp, None)?;
        let enc = self.cross_encode_var(&mut pass, hl, lead.valid, hr, resp.valid, record)?;
        records.extend(enc.records.iter().cloned());
        Ok((self.embedding_pair(&mut pass, &enc, lead.valid, resp.valid), records))
    }

    /// Evaluation-mode logit on (possibly padded) frame matrices.
    pub fn logit(&self, lead: Masked, resp: Masked) -> Result<f64> {
        let mut pass = Pass::eval(&self.params);
        let l = self.logit_var(&mut pass, lead, resp)?;
        Ok(pass.value(l)[[0, 0]])
    }

    /// Real/fake logit of a turn pair (evaluation mode, truncated).
    pub fn classify_pair(&self, pair: &TurnPair) -> Result<f64> {
        let (lead, resp) = self.truncate(pair);
        let (lv, rv) = (vec![true; lead.nrows()], vec![true; resp.nrows()]);
        self.logit(Masked::new(&lead, &lv), Masked::new(&resp, &rv))
    }

    /// Embeddings of a turn pair (evaluation mode, truncated).
    pub fn embed_pair(&self, pair: &TurnPair, record: bool) -> Result<(EmbeddingPair, Vec<AttentionRecord>)> {
        let (lead, resp) = self.truncate(pair);
        let (lv, rv) = (vec![true; lead.nrows()], vec![true; resp.nrows()]);
        self.embed(Masked::new(&lead, &lv), Masked::new(&resp, &rv), record)
    }

    /// Keeps the final `max_frames` of the leading turn and the initial
    /// `max_frames` of the responding turn.
    pub fn truncate(&self, pair: &TurnPair) -> (Mat, Mat) {
        let m = self.cfg.max_frames;
        let lead = &pair.leading.frames;
        let resp = &pair.responding.frames;
        let lead = if lead.nrows() > m { lead.slice(s![lead.nrows() - m.., ..]).to_owned() } else { lead.clone() };
        let resp = if resp.nrows() > m { resp.slice(s![..m, ..]).to_owned() } else { resp.clone() };
        (lead, resp)
    }

    /// BCE-with-logits loss and its parameter gradients for one example.
    /// Dropout is applied when `dropout_seed` is given.
    pub fn loss_and_gradients(
        &self,
        lead: Masked,
        resp: Masked,
        label: f64,
        dropout_seed: Option<u64>,
    ) -> Result<(f64, f64, Gradients)> {
        let mut pass = Pass::train(&self.params, self.cfg.dropout, dropout_seed);
        let logit = self.logit_var(&mut pass, lead, resp)?;
        let loss = pass.tape.bce_with_logits(logit, label);
        let value = pass.value(loss)[[0, 0]];
        let logit_value = pass.value(logit)[[0, 0]];
        if !value.is_finite() {
            return Err(CedError::Numeric("loss".into()));
        }
        let grads = pass.tape.backward(loss, self.params.len());
        Ok((value, logit_value, grads))
    }

    /// Loss and gradients for a turn pair after truncation.
    pub fn pair_loss_and_gradients(
        &self,
        pair: &TurnPair,
        label: f64,
        dropout_seed: Option<u64>,
    ) -> Result<(f64, f64, Gradients)> {
        let (lead, resp) = self.truncate(pair);
        let (lv, rv) = (vec![true; lead.nrows()], vec![true; resp.nrows()]);
        self.loss_and_gradients(Masked::new(&lead, &lv), Masked::new(&resp, &rv), label, dropout_seed)
    }
}
