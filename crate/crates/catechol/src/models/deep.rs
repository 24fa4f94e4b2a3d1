//! Deep tabular baseline: input projection, one multi-head self-attention
//! block over an 8-token reshape of the hidden vector, four residual
//! SwiGLU blocks and a small regression head. Outputs are unconstrained
//! reals; the harness clamps at metric time.

use super::ModelError;
use crate::autodiff::{Mat, NodeId, ParamStore, Tape};
use std::sync::Arc;

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct DeepModelConfig {
    pub input_width: usize,
    pub hidden: usize,
    pub heads: usize,
    pub swiglu_blocks: usize,
    pub dropout: f64,
    pub head_dropout: f64,
    /// Table 2 "MLP" row: skip the attention block and SwiGLU stack.
    pub plain_mlp: bool,
}

impl DeepModelConfig {
    pub fn new(input_width: usize) -> Self {
        DeepModelConfig {
            input_width,
            hidden: 384,
            heads: 8,
            swiglu_blocks: 4,
            dropout: 0.15,
            head_dropout: 0.075,
            plain_mlp: false,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !self.hidden.is_multiple_of(self.heads) {
            return Err(ModelError::BadConfig(format!(
                "hidden {} not divisible by heads {}",
                self.hidden, self.heads
            )));
        }
        let token_width = self.hidden / self.heads;
        if !token_width.is_multiple_of(self.heads) {
            return Err(ModelError::BadConfig(format!(
                "token width {token_width} not divisible by heads {}",
                self.heads
            )));
        }
        Ok(())
    }

    fn tokens(&self) -> usize {
        self.heads
    }

    fn token_width(&self) -> usize {
        self.hidden / self.tokens()
    }
}

struct SwigluIds {
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
}

struct AttnIds {
    pos: usize,
    wq: usize,
    wk: usize,
    wv: usize,
    wo: usize,
}

pub struct DeepModel {
    pub config: DeepModelConfig,
    pub store: ParamStore,
    in_w: usize,
    in_b: usize,
    /// Absent in the plain MLP configuration.
    attn: Option<AttnIds>,
    blocks: Vec<SwigluIds>,
    head_w1: usize,
    head_b1: usize,
    head_w2: usize,
    head_b2: usize,
}

impl DeepModel {
    pub fn new(config: DeepModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut store = ParamStore::new();
        let h = config.hidden;
        let tw = config.token_width();
        let in_w = store.add_xavier("in.w", config.input_width, h, seed);
        let in_b = store.add_zeros("in.b", 1, h);
        let mut attn = None;
        let mut blocks = Vec::with_capacity(config.swiglu_blocks);
        if !config.plain_mlp {
            attn = Some(AttnIds {
                pos: store.add_xavier("pos", config.tokens(), tw, seed),
                wq: store.add_xavier("attn.wq", tw, tw, seed),
                wk: store.add_xavier("attn.wk", tw, tw, seed),
                wv: store.add_xavier("attn.wv", tw, tw, seed),
                wo: store.add_xavier("attn.wo", tw, tw, seed),
            });
            for i in 0..config.swiglu_blocks {
                blocks.push(SwigluIds {
                    w1: store.add_xavier(&format!("swiglu{i}.w1"), h, h, seed),
                    b1: store.add_zeros(&format!("swiglu{i}.b1"), 1, h),
                    w2: store.add_xavier(&format!("swiglu{i}.w2"), h, h, seed),
                    b2: store.add_zeros(&format!("swiglu{i}.b2"), 1, h),
                });
            }
        }
        let head_w1 = store.add_xavier("head.w1", h, 128, seed);
        let head_b1 = store.add_zeros("head.b1", 1, 128);
        let head_w2 = store.add_xavier("head.w2", 128, 3, seed);
        let head_b2 = store.add_zeros("head.b2", 1, 3);
        Ok(DeepModel {
            config,
            store,
            in_w,
            in_b,
            attn,
            blocks,
            head_w1,
            head_b1,
            head_w2,
            head_b2,
        })
    }

    fn attention(&self, tape: &mut Tape, x: NodeId, rows: usize) -> Result<NodeId, ModelError> {
        let ids = self
            .attn
            .as_ref()
            .expect("attention ids exist unless plain_mlp");
        let t = self.config.tokens();
        let tw = self.config.token_width();
        let heads = self.config.heads;
        let hd = tw / heads;

        // row-major [R, hidden] reinterpreted as [R*t, tw] token rows
        let tokens = tape.reshape(x, rows * t, tw)?;
        let pos_index: Vec<usize> = (0..rows * t).map(|i| i % t).collect();
        let pos = tape.param(&self.store, ids.pos);
        let pos_rows = tape.gather_rows(pos, Arc::new(pos_index))?;
        let tokens = tape.add(tokens, pos_rows)?;

        let wq = tape.param(&self.store, ids.wq);
        let wk = tape.param(&self.store, ids.wk);
        let wv = tape.param(&self.store, ids.wv);
        let q = tape.matmul(tokens, wq)?;
        let k = tape.matmul(tokens, wk)?;
        let v = tape.matmul(tokens, wv)?;

        // dense all-pairs edge list within each row's token group
        let mut src = Vec::with_capacity(rows * t * t);
        let mut dst = Vec::with_capacity(rows * t * t);
        for r in 0..rows {
            for i in 0..t {
                for j in 0..t {
                    dst.push(r * t + i);
                    src.push(r * t + j);
                }
            }
        }
        let src = Arc::new(src);
        let dst = Arc::new(dst);

        let mut head_outs = Vec::with_capacity(heads);
        for h in 0..heads {
            let qh = tape.slice_cols(q, h * hd, hd)?;
            let kh = tape.slice_cols(k, h * hd, hd)?;
            let vh = tape.slice_cols(v, h * hd, hd)?;
            let q_e = tape.gather_rows(qh, dst.clone())?;
            let k_e = tape.gather_rows(kh, src.clone())?;
            let score = tape.rowdot(q_e, k_e)?;
            let score = tape.scale(score, 1.0 / (hd as f64).sqrt());
            let alpha = tape.softmax_segments(score, dst.clone(), rows * t)?;
            let v_e = tape.gather_rows(vh, src.clone())?;
            let msg = tape.mul_colvec(v_e, alpha)?;
            head_outs.push(tape.segment_sum(msg, dst.clone(), rows * t)?);
        }
        let attn = tape.concat_cols(&head_outs)?;
        let wo = tape.param(&self.store, ids.wo);
        let attn = tape.matmul(attn, wo)?;
        let tokens = tape.add(tokens, attn)?;
        Ok(tape.reshape(tokens, rows, self.config.hidden)?)
    }

    /// Forward pass over a feature matrix [R, input_width] -> [R, 3].
    pub fn forward(&self, tape: &mut Tape, features: &Mat) -> Result<NodeId, ModelError> {
        if features.cols != self.config.input_width {
            return Err(ModelError::BadInput(format!(
                "feature width {} does not match configured {}",
                features.cols, self.config.input_width
            )));
        }
        let rows = features.rows;
        let x = tape.constant(features.clone());
        let w = tape.param(&self.store, self.in_w);
        let b = tape.param(&self.store, self.in_b);
        let mut h = tape.matmul(x, w)?;
        h = tape.add_bias(h, b)?;

        if self.config.plain_mlp {
            h = tape.silu(h);
        } else {
            h = self.attention(tape, h, rows)?;
            for (i, blk) in self.blocks.iter().enumerate() {
                let w1 = tape.param(&self.store, blk.w1);
                let b1 = tape.param(&self.store, blk.b1);
                let w2 = tape.param(&self.store, blk.w2);
                let b2 = tape.param(&self.store, blk.b2);
                let lin = tape.matmul(h, w1)?;
                let lin = tape.add_bias(lin, b1)?;
                let gate = tape.matmul(h, w2)?;
                let gate = tape.add_bias(gate, b2)?;
                let gate = tape.silu(gate);
                let glu = tape.mul(lin, gate)?;
                let glu = tape.dropout(glu, self.config.dropout, 300 + i as u64);
                h = tape.add(h, glu)?;
            }
        }

        let w1 = tape.param(&self.store, self.head_w1);
        let b1 = tape.param(&self.store, self.head_b1);
        let mut out = tape.matmul(h, w1)?;
        out = tape.add_bias(out, b1)?;
        out = tape.silu(out);
        out = tape.dropout(out, self.config.head_dropout, 390);
        let w2 = tape.param(&self.store, self.head_w2);
        let b2 = tape.param(&self.store, self.head_b2);
        out = tape.matmul(out, w2)?;
        Ok(tape.add_bias(out, b2)?)
    }
}
