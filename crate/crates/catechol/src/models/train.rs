//! Minibatch training loop shared by the two neural models: AdamW,
//! gradient clipping, optional plateau scheduling, early stopping on
//! validation loss and best-epoch parameter restoration.

use super::deep::DeepModel;
use super::gnn::{assemble_gnn_inputs, GnnModel, SolventGraphCache};
use super::ModelError;
use crate::autodiff::{Mat, NodeId, ParamStore, PlateauScheduler, Tape};
use crate::data::ReactionRecord;
use crate::drfp::Fingerprint;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlateauConfig {
    pub factor: f64,
    pub patience: usize,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub clip_norm: f64,
    pub seed: u64,
    pub plateau: Option<PlateauConfig>,
}

impl TrainConfig {
    pub fn gnn_defaults(seed: u64) -> Self {
        TrainConfig {
            lr: 3e-4,
            weight_decay: 1e-5,
            batch_size: 128,
            max_epochs: 400,
            patience: 50,
            clip_norm: 1.0,
            seed,
            plateau: Some(PlateauConfig {
                factor: 0.7,
                patience: 30,
                threshold: 1e-6,
            }),
        }
    }

    pub fn deep_defaults(seed: u64) -> Self {
        TrainConfig {
            lr: 7e-4,
            plateau: None,
            ..TrainConfig::gnn_defaults(seed)
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CurvePoint {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub lr: f64,
}

/// A model wired to its data, exposing just what the loop needs.
trait TrainTask {
    fn num_train(&self) -> usize;
    /// Scalar training loss node for the given training row indices.
    fn loss(&mut self, tape: &mut Tape, rows: &[usize]) -> Result<NodeId, ModelError>;
    /// Full-validation loss in evaluation mode (no dropout).
    fn val_loss(&mut self, seed: u64) -> Result<f64, ModelError>;
    fn store_mut(&mut self) -> &mut ParamStore;
}

fn fit(task: &mut dyn TrainTask, cfg: &TrainConfig) -> Result<Vec<CurvePoint>, ModelError> {
    let n = task.num_train();
    if n == 0 {
        return Err(ModelError::BadInput("empty training set".to_string()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut scheduler = cfg
        .plateau
        .as_ref()
        .map(|p| PlateauScheduler::new(cfg.lr, p.factor, p.patience, p.threshold));
    let mut lr = cfg.lr;
    let mut curve = Vec::new();
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0;
    let mut best_params = task.store_mut().snapshot();
    let mut step: u64 = 0;

    for epoch in 0..cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut tape = Tape::new(cfg.seed);
            tape.training = true;
            tape.step = step;
            step += 1;
            let loss = task.loss(&mut tape, batch)?;
            let lv = tape.value(loss).data[0];
            if !lv.is_finite() {
                return Err(ModelError::NonFiniteLoss { epoch });
            }
            epoch_loss += lv;
            batches += 1.0;
            tape.backward(loss, task.store_mut())?;
            let store = task.store_mut();
            store.clip_grad_norm(cfg.clip_norm);
            store.adamw_step(lr, 0.9, 0.999, 1e-8, cfg.weight_decay)?;
        }
        let train_loss = epoch_loss / batches;
        let val_loss = task.val_loss(cfg.seed)?;
        if !val_loss.is_finite() {
            return Err(ModelError::NonFiniteLoss { epoch });
        }
        curve.push(CurvePoint {
            epoch,
            train_loss,
            val_loss,
            lr,
        });
        if val_loss < best_val {
            best_val = val_loss;
            best_epoch = epoch;
            best_params = task.store_mut().snapshot();
        }
        if let Some(s) = scheduler.as_mut() {
            lr = s.step(val_loss);
        }
        if epoch - best_epoch >= cfg.patience {
            break;
        }
    }
    task.store_mut().restore(&best_params);
    Ok(curve)
}

struct GnnTask<'a> {
    model: &'a mut GnnModel,
    train: &'a [&'a ReactionRecord],
    train_fps: &'a [Fingerprint],
    val: &'a [&'a ReactionRecord],
    val_fps: &'a [Fingerprint],
    cache: SolventGraphCache,
}

impl TrainTask for GnnTask<'_> {
    fn num_train(&self) -> usize {
        self.train.len()
    }

    fn loss(&mut self, tape: &mut Tape, rows: &[usize]) -> Result<NodeId, ModelError> {
        let records: Vec<&ReactionRecord> = rows.iter().map(|&i| self.train[i]).collect();
        let fps: Vec<Fingerprint> = rows.iter().map(|&i| self.train_fps[i].clone()).collect();
        let inputs = assemble_gnn_inputs(&records, &fps, &mut self.cache)?;
        let pred = self.model.forward(tape, &inputs)?;
        Ok(tape.mse_loss(pred, &inputs.targets)?)
    }

    fn val_loss(&mut self, seed: u64) -> Result<f64, ModelError> {
        if self.val.is_empty() {
            // no validation carve-out: fall back to the training loss so
            // early stopping degenerates gracefully
            let mut tape = Tape::new(seed);
            let rows: Vec<usize> = (0..self.train.len()).collect();
            let loss = self.loss(&mut tape, &rows)?;
            return Ok(tape.value(loss).data[0]);
        }
        let mut tape = Tape::new(seed);
        let inputs = assemble_gnn_inputs(self.val, self.val_fps, &mut self.cache)?;
        let pred = self.model.forward(&mut tape, &inputs)?;
        let loss = tape.mse_loss(pred, &inputs.targets)?;
        Ok(tape.value(loss).data[0])
    }

    fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.model.store
    }
}

pub fn train_gnn(
    model: &mut GnnModel,
    train: &[&ReactionRecord],
    train_fps: &[Fingerprint],
    val: &[&ReactionRecord],
    val_fps: &[Fingerprint],
    cfg: &TrainConfig,
) -> Result<Vec<CurvePoint>, ModelError> {
    let mut task = GnnTask {
        model,
        train,
        train_fps,
        val,
        val_fps,
        cache: SolventGraphCache::default(),
    };
    fit(&mut task, cfg)
}

struct DeepTask<'a> {
    model: &'a mut DeepModel,
    x_train: &'a Mat,
    y_train: &'a Mat,
    x_val: &'a Mat,
    y_val: &'a Mat,
}

impl DeepTask<'_> {
    fn gather(m: &Mat, rows: &[usize]) -> Mat {
        let mut out = Mat::zeros(rows.len(), m.cols);
        for (i, &r) in rows.iter().enumerate() {
            out.row_mut(i).copy_from_slice(m.row(r));
        }
        out
    }
}

impl TrainTask for DeepTask<'_> {
    fn num_train(&self) -> usize {
        self.x_train.rows
    }

    fn loss(&mut self, tape: &mut Tape, rows: &[usize]) -> Result<NodeId, ModelError> {
        let x = Self::gather(self.x_train, rows);
        let y = Self::gather(self.y_train, rows);
        let pred = self.model.forward(tape, &x)?;
        Ok(tape.mse_loss(pred, &y)?)
    }

    fn val_loss(&mut self, seed: u64) -> Result<f64, ModelError> {
        let (x, y) = if self.x_val.rows == 0 {
            (self.x_train, self.y_train)
        } else {
            (self.x_val, self.y_val)
        };
        let mut tape = Tape::new(seed);
        let pred = self.model.forward(&mut tape, x)?;
        let loss = tape.mse_loss(pred, y)?;
        Ok(tape.value(loss).data[0])
    }

    fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.model.store
    }
}

pub fn train_deep(
    model: &mut DeepModel,
    x_train: &Mat,
    y_train: &Mat,
    x_val: &Mat,
    y_val: &Mat,
    cfg: &TrainConfig,
) -> Result<Vec<CurvePoint>, ModelError> {
    if x_train.rows != y_train.rows || x_val.rows != y_val.rows {
        return Err(ModelError::BadInput(
            "feature and target row counts differ".to_string(),
        ));
    }
    let mut task = DeepTask {
        model,
        x_train,
        y_train,
        x_val,
        y_val,
    };
    fit(&mut task, cfg)
}
