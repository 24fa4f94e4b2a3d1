//! Parameter storage, AdamW, gradient clipping, LR scheduling and
//! checkpoint serialization.

use super::mat::Mat;
use super::rng;
use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OptimError {
    #[error("parameter {0} has no accumulated gradient")]
    MissingGradient(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad checkpoint: {0}")]
    BadCheckpoint(String),
    #[error("checkpoint metadata: {0}")]
    Json(#[from] serde_json::Error),
}

pub struct Parameter {
    pub name: String,
    pub value: Mat,
    pub grad: Mat,
    pub grad_seen: bool,
    /// First and second Adam moments.
    m: Mat,
    v: Mat,
}

/// Owns all trainable tensors of a model plus their optimizer state.
#[derive(Default)]
pub struct ParamStore {
    params: Vec<Parameter>,
    /// Adam step counter (for bias correction), shared by all parameters.
    pub t: u64,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    pub fn add(&mut self, name: &str, value: Mat) -> usize {
        let (r, c) = value.shape();
        self.params.push(Parameter {
            name: name.to_string(),
            grad: Mat::zeros(r, c),
            grad_seen: false,
            m: Mat::zeros(r, c),
            v: Mat::zeros(r, c),
            value,
        });
        self.params.len() - 1
    }

    /// Uniform(-limit, limit) with limit = sqrt(6 / (fan_in + fan_out)),
    /// deterministic in (seed, name).
    pub fn add_xavier(&mut self, name: &str, rows: usize, cols: usize, seed: u64) -> usize {
        let limit = (6.0 / (rows + cols) as f64).sqrt();
        let name_key = rng::key_hash(&name.bytes().map(u64::from).collect::<Vec<_>>());
        let data = (0..rows * cols)
            .map(|i| rng::uniform_signed(&[seed, name_key, i as u64], limit))
            .collect();
        self.add(name, Mat::from_vec(rows, cols, data))
    }

    pub fn add_zeros(&mut self, name: &str, rows: usize, cols: usize) -> usize {
        self.add(name, Mat::zeros(rows, cols))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn value(&self, id: usize) -> &Mat {
        &self.params[id].value
    }

    pub fn value_mut(&mut self, id: usize) -> &mut Mat {
        &mut self.params[id].value
    }

    pub fn grad(&self, id: usize) -> &Mat {
        &self.params[id].grad
    }

    pub fn accumulate_grad(&mut self, id: usize, g: &Mat) {
        self.params[id].grad.add_assign(g);
        self.params[id].grad_seen = true;
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.data.iter_mut().for_each(|x| *x = 0.0);
            p.grad_seen = false;
        }
    }

    /// Scale all gradients so the global L2 norm does not exceed
    /// `max_norm`. Returns the pre-clip norm.
    pub fn clip_grad_norm(&mut self, max_norm: f64) -> f64 {
        let total: f64 = self.params.iter().map(|p| p.grad.frobenius_sq()).sum();
        let norm = total.sqrt();
        if norm > max_norm && norm > 0.0 {
            let scale = max_norm / norm;
            for p in &mut self.params {
                p.grad.data.iter_mut().for_each(|x| *x *= scale);
            }
        }
        norm
    }

    /// One AdamW update with decoupled weight decay and bias correction.
    /// Every parameter must have received a gradient this step.
    pub fn adamw_step(
        &mut self,
        lr: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
        weight_decay: f64,
    ) -> Result<(), OptimError> {
        for p in &self.params {
            if !p.grad_seen {
                return Err(OptimError::MissingGradient(p.name.clone()));
            }
        }
        self.t += 1;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        for p in &mut self.params {
            for i in 0..p.value.data.len() {
                let g = p.grad.data[i];
                p.m.data[i] = beta1 * p.m.data[i] + (1.0 - beta1) * g;
                p.v.data[i] = beta2 * p.v.data[i] + (1.0 - beta2) * g * g;
                let m_hat = p.m.data[i] / bc1;
                let v_hat = p.v.data[i] / bc2;
                p.value.data[i] -=
                    lr * (m_hat / (v_hat.sqrt() + eps)) + lr * weight_decay * p.value.data[i];
            }
        }
        self.zero_grads();
        Ok(())
    }

    /// Copy of all parameter values, for best-epoch bookkeeping.
    pub fn snapshot(&self) -> Vec<Mat> {
        self.params.iter().map(|p| p.value.clone()).collect()
    }

    pub fn restore(&mut self, snapshot: &[Mat]) {
        assert_eq!(snapshot.len(), self.params.len(), "snapshot arity");
        for (p, s) in self.params.iter_mut().zip(snapshot) {
            assert_eq!(p.value.shape(), s.shape(), "snapshot shape for {}", p.name);
            p.value = s.clone();
        }
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.iter().map(|p| p.name.as_str())
    }

    /// Write parameter values to a binary checkpoint: magic, metadata
    /// length, JSON metadata (names, shapes, extra), then raw little
    /// endian f64 payload in declaration order.
    pub fn save(&self, path: &Path, extra: &BTreeMap<String, String>) -> Result<(), OptimError> {
        #[derive(serde::Serialize)]
        struct Meta<'a> {
            version: u32,
            dtype: &'a str,
            tensors: Vec<(String, usize, usize)>,
            extra: &'a BTreeMap<String, String>,
        }
        let meta = Meta {
            version: 1,
            dtype: "f64le",
            tensors: self
                .params
                .iter()
                .map(|p| (p.name.clone(), p.value.rows, p.value.cols))
                .collect(),
            extra,
        };
        let meta_bytes = serde_json::to_vec(&meta)?;
        let mut f = std::fs::File::create(path)?;
        f.write_all(b"CTCH0001")?;
        f.write_all(&(meta_bytes.len() as u64).to_le_bytes())?;
        f.write_all(&meta_bytes)?;
        for p in &self.params {
            for &x in &p.value.data {
                f.write_all(&x.to_le_bytes())?;
            }
        }
        Ok(())
    }

    /// Load a checkpoint written by [`save`](Self::save) into this store.
    /// Names and shapes must match exactly. Returns the extra metadata.
    pub fn load(&mut self, path: &Path) -> Result<BTreeMap<String, String>, OptimError> {
        #[derive(serde::Deserialize)]
        struct Meta {
            version: u32,
            dtype: String,
            tensors: Vec<(String, usize, usize)>,
            extra: BTreeMap<String, String>,
        }
        let mut f = std::fs::File::open(path)?;
        let mut magic = [0u8; 8];
        f.read_exact(&mut magic)?;
        if &magic != b"CTCH0001" {
            return Err(OptimError::BadCheckpoint("wrong magic".into()));
        }
        let mut len_bytes = [0u8; 8];
        f.read_exact(&mut len_bytes)?;
        let mut meta_bytes = vec![0u8; u64::from_le_bytes(len_bytes) as usize];
        f.read_exact(&mut meta_bytes)?;
        let meta: Meta = serde_json::from_slice(&meta_bytes)?;
        if meta.version != 1 || meta.dtype != "f64le" {
            return Err(OptimError::BadCheckpoint(format!(
                "unsupported version {} dtype {}",
                meta.version, meta.dtype
            )));
        }
        if meta.tensors.len() != self.params.len() {
            return Err(OptimError::BadCheckpoint(format!(
                "tensor count {} vs expected {}",
                meta.tensors.len(),
                self.params.len()
            )));
        }
        for (p, (name, rows, cols)) in self.params.iter_mut().zip(&meta.tensors) {
            if &p.name != name || p.value.rows != *rows || p.value.cols != *cols {
                return Err(OptimError::BadCheckpoint(format!(
                    "tensor {name} ({rows}, {cols}) does not match {} ({}, {})",
                    p.name, p.value.rows, p.value.cols
                )));
            }
            let mut buf = [0u8; 8];
            for x in p.value.data.iter_mut() {
                f.read_exact(&mut buf)?;
                *x = f64::from_le_bytes(buf);
            }
        }
        Ok(meta.extra)
    }
}

/// Multiplies the learning rate by `factor` after `patience` consecutive
/// epochs without an absolute improvement above `threshold`.
pub struct PlateauScheduler {
    pub lr: f64,
    factor: f64,
    patience: usize,
    threshold: f64,
    best: f64,
    bad_epochs: usize,
}

impl PlateauScheduler {
    pub fn new(lr: f64, factor: f64, patience: usize, threshold: f64) -> Self {
        PlateauScheduler {
            lr,
            factor,
            patience,
            threshold,
            best: f64::INFINITY,
            bad_epochs: 0,
        }
    }

    /// Feed the epoch's validation loss; returns the LR to use next.
    pub fn step(&mut self, loss: f64) -> f64 {
        if loss < self.best - self.threshold {
            self.best = loss;
            self.bad_epochs = 0;
        } else {
            self.bad_epochs += 1;
            if self.bad_epochs >= self.patience {
                self.lr *= self.factor;
                self.bad_epochs = 0;
            }
        }
        self.lr
    }
}
