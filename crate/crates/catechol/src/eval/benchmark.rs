//! The fold runner: trains each requested method on every fold of a split
//! plan, scores held-out rows, combines the tree and neural predictions
//! into the inverse-variance ensemble and emits JSON, text and residual
//! CSV reports. Reports are byte-identical across reruns with the same
//! seed; wall-clock timings are kept in memory but never serialized.

use super::metrics::{clamp_unit, ensemble_combine, mse, row_variance, sample_std};
use super::splits::{carve_validation, make_splits, Protocol};
use super::EvalError;
use crate::autodiff::{Mat, Tape};
use crate::data::{Dataset, ReactionRecord};
use crate::descriptors::{
    assemble_baseline_features, builtin_acs, builtin_spange, pca_fit, DescriptorTable, Standardizer,
};
use crate::drfp::{drfp_fingerprint, fnv1a64, Fingerprint};
use crate::models::deep::{DeepModel, DeepModelConfig};
use crate::models::gbdt::{gbdt_fit, gbdt_predict, GbdtConfig};
use crate::models::gnn::{
    assemble_gnn_inputs, GnnConfig, GnnModel, SolventGraphCache, P2_SMILES, P3_SMILES, SM_SMILES,
};
use crate::models::train::{train_deep, train_gnn, TrainConfig};
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Gbdt,
    DeepModel,
    Mlp,
    Gnn,
    Ensemble,
}

impl std::str::FromStr for Method {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, EvalError> {
        match s.to_lowercase().as_str() {
            "gbdt" => Ok(Method::Gbdt),
            "deepmodel" | "deep" => Ok(Method::DeepModel),
            "mlp" => Ok(Method::Mlp),
            "gnn" => Ok(Method::Gnn),
            "ensemble" => Ok(Method::Ensemble),
            other => Err(EvalError::BadMethod(other.to_string())),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Method::Gbdt => "gbdt",
            Method::DeepModel => "deepmodel",
            Method::Mlp => "mlp",
            Method::Gnn => "gnn",
            Method::Ensemble => "ensemble",
        };
        f.write_str(s)
    }
}

impl Method {
    /// Parse a comma-separated method list, deduplicating while keeping
    /// a stable order.
    pub fn parse_list(s: &str) -> Result<Vec<Method>, EvalError> {
        let mut out = Vec::new();
        for part in s.split(',') {
            let m: Method = part.trim().parse()?;
            if !out.contains(&m) {
                out.push(m);
            }
        }
        Ok(out)
    }
}

/// Every knob the harness exposes; `--set key=value` mutates one field.
#[derive(Debug, Clone, Serialize)]
pub struct RunSettings {
    pub gbdt: GbdtConfig,
    pub gnn: GnnConfig,
    pub train_gnn: TrainConfig,
    pub train_deep: TrainConfig,
    pub deep_hidden: usize,
    pub drfp_radius: usize,
    pub drfp_width: usize,
    pub acs_pca_components: usize,
    /// Weight the ensemble by per-fold mean variance instead of per-row.
    pub variance_per_fold: bool,
}

impl RunSettings {
    pub fn defaults(seed: u64) -> Self {
        RunSettings {
            gbdt: GbdtConfig::default(),
            gnn: GnnConfig::default(),
            train_gnn: TrainConfig::gnn_defaults(seed),
            train_deep: TrainConfig::deep_defaults(seed),
            deep_hidden: 384,
            drfp_radius: crate::drfp::DEFAULT_RADIUS,
            drfp_width: crate::drfp::DEFAULT_WIDTH,
            acs_pca_components: 5,
            variance_per_fold: false,
        }
    }

    /// Apply one `key=value` override. Unknown keys and unparseable
    /// values are usage errors.
    pub fn apply_override(&mut self, key: &str, value: &str) -> Result<(), EvalError> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, EvalError>
        where
            T::Err: std::fmt::Display,
        {
            value
                .parse()
                .map_err(|e: T::Err| EvalError::BadOverrideValue {
                    key: key.to_string(),
                    message: e.to_string(),
                })
        }
        match key {
            "gbdt.iterations" => self.gbdt.iterations = parse(key, value)?,
            "gbdt.learning_rate" => self.gbdt.learning_rate = parse(key, value)?,
            "gbdt.max_depth" => self.gbdt.max_depth = parse(key, value)?,
            "gbdt.min_samples_leaf" => self.gbdt.min_samples_leaf = parse(key, value)?,
            "gbdt.l2" => self.gbdt.l2 = parse(key, value)?,
            "gbdt.max_leaves" => self.gbdt.max_leaves = parse(key, value)?,
            "gbdt.max_bins" => self.gbdt.max_bins = parse(key, value)?,
            "gnn.hidden" => self.gnn.hidden = parse(key, value)?,
            "gnn.gat_layers" => self.gnn.gat_layers = parse(key, value)?,
            "gnn.heads" => self.gnn.heads = parse(key, value)?,
            "gnn.dropout" => self.gnn.dropout = parse(key, value)?,
            "gnn.use_drfp" => self.gnn.use_drfp = parse(key, value)?,
            "gnn.use_reactant_product_graphs" => {
                self.gnn.use_reactant_product_graphs = parse(key, value)?
            }
            "gnn.use_mixture_encoder" => self.gnn.use_mixture_encoder = parse(key, value)?,
            "gnn.use_attention" => self.gnn.use_attention = parse(key, value)?,
            "train_gnn.lr" => self.train_gnn.lr = parse(key, value)?,
            "train_gnn.batch_size" => self.train_gnn.batch_size = parse(key, value)?,
            "train_gnn.max_epochs" => self.train_gnn.max_epochs = parse(key, value)?,
            "train_gnn.patience" => self.train_gnn.patience = parse(key, value)?,
            "train_deep.lr" => self.train_deep.lr = parse(key, value)?,
            "train_deep.batch_size" => self.train_deep.batch_size = parse(key, value)?,
            "train_deep.max_epochs" => self.train_deep.max_epochs = parse(key, value)?,
            "train_deep.patience" => self.train_deep.patience = parse(key, value)?,
            "deep.hidden" => self.deep_hidden = parse(key, value)?,
            "drfp.radius" => self.drfp_radius = parse(key, value)?,
            "drfp.width" => self.drfp_width = parse(key, value)?,
            "acs.pca_components" => self.acs_pca_components = parse(key, value)?,
            "eval.variance_per_fold" => self.variance_per_fold = parse(key, value)?,
            other => return Err(EvalError::BadOverride(other.to_string())),
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct BenchmarkRequest {
    pub protocol: Protocol,
    pub methods: Vec<Method>,
    pub seed: u64,
    /// Worker threads for fold-level parallelism; 0 = rayon default.
    pub jobs: usize,
    pub settings: RunSettings,
}

#[derive(Debug, Clone, Serialize)]
pub struct FoldResult {
    pub method: Method,
    pub fold: String,
    pub n_test: usize,
    pub mse_per_target: [f64; 3],
    pub mse_pooled: f64,
    #[serde(skip)]
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MethodSummary {
    pub method: Method,
    pub folds: usize,
    pub mean_pooled_mse: f64,
    pub std_pooled_mse: f64,
    pub mean_per_target_mse: [f64; 3],
}

#[derive(Debug, Clone, Serialize)]
pub struct ResidualRow {
    pub method: Method,
    pub fold: String,
    pub solvent: String,
    pub row: usize,
    pub target: usize,
    pub truth: f64,
    pub predicted: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchmarkReport {
    pub version: String,
    pub protocol: Protocol,
    pub seed: u64,
    pub methods: Vec<Method>,
    pub config_digest: String,
    pub data_digest: String,
    pub settings: RunSettings,
    pub folds: Vec<FoldResult>,
    pub summaries: Vec<MethodSummary>,
    #[serde(skip)]
    pub residuals: Vec<ResidualRow>,
    #[serde(skip)]
    pub seconds_total: f64,
}

impl BenchmarkReport {
    pub fn to_json(&self) -> Result<String, EvalError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "benchmark  protocol={}  seed={}",
            self.protocol, self.seed
        );
        let _ = writeln!(
            out,
            "config {}  data {}",
            self.config_digest, self.data_digest
        );
        let _ = writeln!(
            out,
            "{:<10} {:>5} {:>12} {:>12}  per-target",
            "method", "folds", "mean mse", "std"
        );
        for s in &self.summaries {
            let _ = writeln!(
                out,
                "{:<10} {:>5} {:>12.6} {:>12.6}  [{:.6}, {:.6}, {:.6}]",
                s.method.to_string(),
                s.folds,
                s.mean_pooled_mse,
                s.std_pooled_mse,
                s.mean_per_target_mse[0],
                s.mean_per_target_mse[1],
                s.mean_per_target_mse[2],
            );
        }
        out
    }

    pub fn residuals_csv(&self) -> String {
        let mut out =
            String::from("method,protocol,fold,solvent,row,target,true,predicted,residual\n");
        for r in &self.residuals {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.method,
                self.protocol,
                r.fold,
                r.solvent,
                r.row,
                r.target,
                r.truth,
                r.predicted,
                r.predicted - r.truth,
            );
        }
        out
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    format!("{:x}", h.finalize())
}

/// Digest of the dataset content, independent of source path.
pub fn dataset_digest(ds: &Dataset) -> String {
    let mut h = Sha256::new();
    for r in &ds.records {
        let line = format!(
            "{}|{}|{}|{}|{}|{}|{}|{}|{}|{}|{}\n",
            r.solvent_a_name,
            r.solvent_a_smiles,
            r.solvent_b_name.as_deref().unwrap_or(""),
            r.solvent_b_smiles.as_deref().unwrap_or(""),
            r.pct_b,
            r.temperature_c,
            r.residence_time_s,
            r.yields[0],
            r.yields[1],
            r.yields[2],
            r.ramp_id,
        );
        h.update(line.as_bytes());
    }
    format!("{:x}", h.finalize())
}

/// Solvent label used in residual rows: "a" or "a+b@pct".
fn solvent_label(r: &ReactionRecord) -> String {
    match &r.solvent_b_name {
        Some(b) => format!("{}+{}@{}", r.solvent_a_name, b, r.pct_b),
        None => r.solvent_a_name.clone(),
    }
}

/// Precomputed per-record inputs shared across folds.
pub struct FeatureContext {
    pub fingerprints: Vec<Fingerprint>,
    pub baseline_rows: Vec<Vec<f64>>,
    pub targets: Vec<[f64; 3]>,
}

/// Insert table-mean vectors for roster solvents missing from a
/// descriptor table so leave-one-out folds never abort on coverage gaps.
fn cover_roster(table: &mut DescriptorTable, roster: &[String]) {
    let (_, rows) = table.as_matrix();
    if rows.is_empty() {
        return;
    }
    let width = table.width();
    let mut mean = vec![0.0; width];
    for row in &rows {
        for (m, x) in mean.iter_mut().zip(row) {
            *m += x / rows.len() as f64;
        }
    }
    for name in roster {
        if table.get(name).is_err() {
            let _ = table.insert(name, mean.clone());
        }
    }
}

/// PCA-reduce the bulk property table (z-scored columns) into the
/// "acs_pca" table used by the tabular baselines. The fit uses the full
/// fixed 24-solvent roster, which is external reference data rather than
/// training data, so it does not leak fold labels.
fn build_acs_pca(k: usize) -> Result<DescriptorTable, EvalError> {
    let acs = builtin_acs();
    let (names, rows) = acs.as_matrix();
    let z = Standardizer::fit(&rows);
    let z_rows: Vec<Vec<f64>> = rows.iter().map(|r| z.transform(r)).collect();
    let basis = pca_fit(&z_rows, k)?;
    let cols = (0..k).map(|i| format!("pc{i}")).collect();
    let mut table = DescriptorTable::new("acs_pca", cols);
    for (name, row) in names.iter().zip(&z_rows) {
        table.insert(name, basis.transform(row))?;
    }
    Ok(table)
}

pub fn build_features(ds: &Dataset, settings: &RunSettings) -> Result<FeatureContext, EvalError> {
    let mut spange = builtin_spange();
    let mut acs_pca = build_acs_pca(settings.acs_pca_components)?;
    cover_roster(&mut spange, &ds.roster);
    cover_roster(&mut acs_pca, &ds.roster);

    // The solvent pair takes part on both sides of the reaction, so its
    // differential keys come only from genuinely reaction-changed
    // environments; identical pairs share one fingerprint.
    let mut fp_cache: HashMap<(String, Option<String>), Fingerprint> = HashMap::new();
    let mut fingerprints = Vec::with_capacity(ds.records.len());
    for r in &ds.records {
        if let Some(hex) = &r.drfp_hex {
            fingerprints.push(Fingerprint::from_hex(hex, settings.drfp_radius)?);
            continue;
        }
        let key = (r.solvent_a_smiles.clone(), r.solvent_b_smiles.clone());
        let fp = match fp_cache.get(&key) {
            Some(fp) => fp.clone(),
            None => {
                let mut reactants = vec![SM_SMILES, r.solvent_a_smiles.as_str()];
                let mut products = vec![P2_SMILES, P3_SMILES, r.solvent_a_smiles.as_str()];
                if let Some(b) = &r.solvent_b_smiles {
                    reactants.push(b);
                    products.push(b);
                }
                let fp = drfp_fingerprint(
                    &reactants,
                    &products,
                    settings.drfp_radius,
                    settings.drfp_width,
                )?;
                fp_cache.insert(key, fp.clone());
                fp
            }
        };
        fingerprints.push(fp);
    }

    let mut baseline_rows = Vec::with_capacity(ds.records.len());
    let mut targets = Vec::with_capacity(ds.records.len());
    for (r, fp) in ds.records.iter().zip(&fingerprints) {
        baseline_rows.push(assemble_baseline_features(r, &spange, &acs_pca, fp)?);
        targets.push(r.yields);
    }
    Ok(FeatureContext {
        fingerprints,
        baseline_rows,
        targets,
    })
}

fn gather_rows(ctx: &FeatureContext, rows: &[usize]) -> (Vec<Vec<f64>>, Vec<[f64; 3]>) {
    (
        rows.iter().map(|&i| ctx.baseline_rows[i].clone()).collect(),
        rows.iter().map(|&i| ctx.targets[i]).collect(),
    )
}

fn to_mat(rows: &[Vec<f64>]) -> Mat {
    let width = rows.first().map(|r| r.len()).unwrap_or(0);
    let mut m = Mat::zeros(rows.len(), width);
    for (i, r) in rows.iter().enumerate() {
        m.row_mut(i).copy_from_slice(r);
    }
    m
}

fn targets_mat(rows: &[[f64; 3]]) -> Mat {
    let mut m = Mat::zeros(rows.len(), 3);
    for (i, r) in rows.iter().enumerate() {
        m.row_mut(i).copy_from_slice(r);
    }
    m
}

fn predict_gbdt(
    ds_rows: (&[usize], &[usize]),
    ctx: &FeatureContext,
    settings: &RunSettings,
) -> Result<Vec<[f64; 3]>, EvalError> {
    let (train, test) = ds_rows;
    let (x_train, y_train) = gather_rows(ctx, train);
    let model = gbdt_fit(&x_train, &y_train, &settings.gbdt)?;
    let (x_test, _) = gather_rows(ctx, test);
    let preds = gbdt_predict(&model, &x_test)?;
    Ok(preds.iter().map(clamp_unit).collect())
}

#[allow(clippy::too_many_arguments)]
fn predict_deep(
    fit: &[usize],
    val: &[usize],
    test: &[usize],
    ctx: &FeatureContext,
    settings: &RunSettings,
    plain_mlp: bool,
    fold_seed: u64,
) -> Result<Vec<[f64; 3]>, EvalError> {
    let (x_fit, y_fit) = gather_rows(ctx, fit);
    let (x_val, y_val) = gather_rows(ctx, val);
    let (x_test, _) = gather_rows(ctx, test);
    let z = Standardizer::fit(&x_fit);
    let zx = |rows: &[Vec<f64>]| -> Vec<Vec<f64>> { rows.iter().map(|r| z.transform(r)).collect() };
    let width = x_fit.first().map(|r| r.len()).unwrap_or(0);
    let config = DeepModelConfig {
        hidden: settings.deep_hidden,
        plain_mlp,
        ..DeepModelConfig::new(width)
    };
    let mut model = DeepModel::new(config, fold_seed)?;
    let cfg = TrainConfig {
        seed: fold_seed,
        ..settings.train_deep.clone()
    };
    train_deep(
        &mut model,
        &to_mat(&zx(&x_fit)),
        &targets_mat(&y_fit),
        &to_mat(&zx(&x_val)),
        &targets_mat(&y_val),
        &cfg,
    )?;
    let mut tape = Tape::new(fold_seed);
    let out = model.forward(&mut tape, &to_mat(&zx(&x_test)))?;
    let v = tape.value(out);
    let preds: Vec<[f64; 3]> = (0..v.rows)
        .map(|i| clamp_unit(&[v.at(i, 0), v.at(i, 1), v.at(i, 2)]))
        .collect();
    Ok(preds)
}

fn predict_gnn(
    ds: &Dataset,
    fit: &[usize],
    val: &[usize],
    test: &[usize],
    ctx: &FeatureContext,
    settings: &RunSettings,
    fold_seed: u64,
) -> Result<Vec<[f64; 3]>, EvalError> {
    let pick_records =
        |rows: &[usize]| -> Vec<&ReactionRecord> { rows.iter().map(|&i| &ds.records[i]).collect() };
    let pick_fps = |rows: &[usize]| -> Vec<Fingerprint> {
        rows.iter().map(|&i| ctx.fingerprints[i].clone()).collect()
    };
    let config = GnnConfig {
        fp_width: ctx
            .fingerprints
            .first()
            .map(|f| f.width)
            .unwrap_or(settings.drfp_width),
        ..settings.gnn.clone()
    };
    let mut model = GnnModel::new(config, fold_seed)?;
    let cfg = TrainConfig {
        seed: fold_seed,
        ..settings.train_gnn.clone()
    };
    train_gnn(
        &mut model,
        &pick_records(fit),
        &pick_fps(fit),
        &pick_records(val),
        &pick_fps(val),
        &cfg,
    )?;
    let mut cache = SolventGraphCache::default();
    let inputs = assemble_gnn_inputs(&pick_records(test), &pick_fps(test), &mut cache)?;
    let mut tape = Tape::new(fold_seed);
    let out = model.forward(&mut tape, &inputs)?;
    let v = tape.value(out);
    Ok((0..v.rows)
        .map(|i| [v.at(i, 0), v.at(i, 1), v.at(i, 2)])
        .collect())
}

/// Combine the tree and neural predictions row by row with inverse
/// variance weights; the variance proxy is the spread of a model's three
/// outputs (per row, or its fold mean when `variance_per_fold` is set).
fn combine_ensemble(tree: &[[f64; 3]], neural: &[[f64; 3]], per_fold: bool) -> Vec<[f64; 3]> {
    let fold_var = |preds: &[[f64; 3]]| -> f64 {
        preds.iter().map(row_variance).sum::<f64>() / preds.len().max(1) as f64
    };
    let (tv, nv) = (fold_var(tree), fold_var(neural));
    tree.iter()
        .zip(neural)
        .map(|(t, n)| {
            let (var_t, var_n) = if per_fold {
                (tv, nv)
            } else {
                (row_variance(t), row_variance(n))
            };
            clamp_unit(&ensemble_combine(t, n, var_t, var_n))
        })
        .collect()
}

/// Methods whose predictions a fold must actually compute, including
/// ensemble components that were not requested on their own.
fn required_methods(requested: &[Method]) -> Vec<Method> {
    let mut needed: BTreeSet<Method> = requested.iter().copied().collect();
    if needed.contains(&Method::Ensemble) {
        needed.insert(Method::Gbdt);
        if !needed.contains(&Method::DeepModel) {
            needed.insert(Method::Gnn);
        }
    }
    needed.into_iter().collect()
}

struct FoldOutput {
    results: Vec<FoldResult>,
    residuals: Vec<ResidualRow>,
}

#[allow(clippy::too_many_arguments)]
fn run_fold(
    ds: &Dataset,
    ctx: &FeatureContext,
    fold: &super::splits::Fold,
    requested: &[Method],
    settings: &RunSettings,
    seed: u64,
) -> Result<FoldOutput, EvalError> {
    let fold_seed = seed ^ fnv1a64(&fold.group);
    let (fit, val) = carve_validation(ds, &fold.train, fold_seed);
    let truth: Vec<[f64; 3]> = fold.test.iter().map(|&i| ctx.targets[i]).collect();

    let mut predictions: BTreeMap<Method, (Vec<[f64; 3]>, f64)> = BTreeMap::new();
    for method in required_methods(requested) {
        let start = Instant::now();
        let preds = match method {
            Method::Gbdt => predict_gbdt((&fold.train, &fold.test), ctx, settings)?,
            Method::DeepModel => {
                predict_deep(&fit, &val, &fold.test, ctx, settings, false, fold_seed)?
            }
            Method::Mlp => predict_deep(&fit, &val, &fold.test, ctx, settings, true, fold_seed)?,
            Method::Gnn => predict_gnn(ds, &fit, &val, &fold.test, ctx, settings, fold_seed)?,
            Method::Ensemble => {
                let tree = &predictions[&Method::Gbdt].0;
                let neural = predictions
                    .get(&Method::Gnn)
                    .or_else(|| predictions.get(&Method::DeepModel))
                    .map(|(p, _)| p)
                    .expect("ensemble components computed first");
                combine_ensemble(tree, neural, settings.variance_per_fold)
            }
        };
        predictions.insert(method, (preds, start.elapsed().as_secs_f64()));
    }

    let mut results = Vec::new();
    let mut residuals = Vec::new();
    for &method in requested {
        let (preds, seconds) = &predictions[&method];
        let (per_target, pooled) = mse(preds, &truth)?;
        results.push(FoldResult {
            method,
            fold: fold.group.clone(),
            n_test: fold.test.len(),
            mse_per_target: per_target,
            mse_pooled: pooled,
            seconds: *seconds,
        });
        for (slot, &row) in fold.test.iter().enumerate() {
            for target in 0..3 {
                residuals.push(ResidualRow {
                    method,
                    fold: fold.group.clone(),
                    solvent: solvent_label(&ds.records[row]),
                    row,
                    target,
                    truth: truth[slot][target],
                    predicted: preds[slot][target],
                });
            }
        }
    }
    Ok(FoldOutput { results, residuals })
}

pub fn run_benchmark(ds: &Dataset, req: &BenchmarkRequest) -> Result<BenchmarkReport, EvalError> {
    let start = Instant::now();
    if req.methods.is_empty() {
        return Err(EvalError::BadMethod("empty method list".to_string()));
    }
    let plan = make_splits(ds, req.protocol, req.seed)?;
    let ctx = build_features(ds, &req.settings)?;

    let run_all = || -> Result<Vec<FoldOutput>, EvalError> {
        plan.folds
            .par_iter()
            .map(|fold| run_fold(ds, &ctx, fold, &req.methods, &req.settings, req.seed))
            .collect()
    };
    let outputs = if req.jobs > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(req.jobs)
            .build()
            .map_err(|e| EvalError::Io(std::io::Error::other(e.to_string())))?
            .install(run_all)?
    } else {
        run_all()?
    };

    let mut folds: Vec<FoldResult> = Vec::new();
    let mut residuals: Vec<ResidualRow> = Vec::new();
    for out in outputs {
        folds.extend(out.results);
        residuals.extend(out.residuals);
    }
    folds.sort_by(|a, b| (a.method, &a.fold).cmp(&(b.method, &b.fold)));
    residuals.sort_by(|a, b| {
        (a.method, &a.fold, a.row, a.target).cmp(&(b.method, &b.fold, b.row, b.target))
    });

    let mut summaries = Vec::new();
    for &method in &req.methods {
        let pooled: Vec<f64> = folds
            .iter()
            .filter(|f| f.method == method)
            .map(|f| f.mse_pooled)
            .collect();
        let per: Vec<[f64; 3]> = folds
            .iter()
            .filter(|f| f.method == method)
            .map(|f| f.mse_per_target)
            .collect();
        let n = pooled.len().max(1) as f64;
        let mut mean_per = [0.0; 3];
        for p in &per {
            for k in 0..3 {
                mean_per[k] += p[k] / n;
            }
        }
        summaries.push(MethodSummary {
            method,
            folds: pooled.len(),
            mean_pooled_mse: pooled.iter().sum::<f64>() / n,
            std_pooled_mse: sample_std(&pooled),
            mean_per_target_mse: mean_per,
        });
    }

    let config_digest = sha256_hex(
        serde_json::to_string(&(&req.protocol, &req.methods, req.seed, &req.settings))?.as_bytes(),
    );
    Ok(BenchmarkReport {
        version: env!("CARGO_PKG_VERSION").to_string(),
        protocol: req.protocol,
        seed: req.seed,
        methods: req.methods.clone(),
        config_digest,
        data_digest: dataset_digest(ds),
        settings: req.settings.clone(),
        folds,
        summaries,
        residuals,
        seconds_total: start.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationVariant {
    pub label: String,
    pub mean_pooled_mse: f64,
    pub std_pooled_mse: f64,
    pub delta_vs_full: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationReport {
    pub version: String,
    pub protocol: Protocol,
    pub seed: u64,
    pub config_digest: String,
    pub data_digest: String,
    pub variants: Vec<AblationVariant>,
}

impl AblationReport {
    pub fn to_json(&self) -> Result<String, EvalError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "ablation  protocol={}  seed={}",
            self.protocol, self.seed
        );
        let _ = writeln!(
            out,
            "{:<38} {:>12} {:>12} {:>12}",
            "variant", "mean mse", "std", "delta"
        );
        for v in &self.variants {
            let _ = writeln!(
                out,
                "{:<38} {:>12.6} {:>12.6} {:>+12.6}",
                v.label, v.mean_pooled_mse, v.std_pooled_mse, v.delta_vs_full
            );
        }
        out
    }
}

/// Run the full GNN plus each single-switch ablation under one protocol.
pub fn ablation_suite(
    ds: &Dataset,
    protocol: Protocol,
    seed: u64,
    settings: &RunSettings,
    jobs: usize,
) -> Result<AblationReport, EvalError> {
    type Tweak = fn(&mut GnnConfig);
    let variants: [(&str, Tweak); 5] = [
        ("GNN (Full)", |_| {}),
        ("without DRFP features", |c| c.use_drfp = false),
        ("without reactant/product graphs", |c| {
            c.use_reactant_product_graphs = false
        }),
        ("without learned mixture encoding", |c| {
            c.use_mixture_encoder = false
        }),
        ("without multi-head attention", |c| c.use_attention = false),
    ];
    let mut rows = Vec::new();
    for (label, tweak) in variants {
        let mut settings = settings.clone();
        tweak(&mut settings.gnn);
        let req = BenchmarkRequest {
            protocol,
            methods: vec![Method::Gnn],
            seed,
            jobs,
            settings,
        };
        let report = run_benchmark(ds, &req)?;
        let s = &report.summaries[0];
        rows.push(AblationVariant {
            label: label.to_string(),
            mean_pooled_mse: s.mean_pooled_mse,
            std_pooled_mse: s.std_pooled_mse,
            delta_vs_full: 0.0,
        });
    }
    let full = rows[0].mean_pooled_mse;
    for v in rows.iter_mut() {
        v.delta_vs_full = v.mean_pooled_mse - full;
    }
    let config_digest =
        sha256_hex(serde_json::to_string(&(&protocol, "ablation", seed, settings))?.as_bytes());
    Ok(AblationReport {
        version: env!("CARGO_PKG_VERSION").to_string(),
        protocol,
        seed,
        config_digest,
        data_digest: dataset_digest(ds),
        variants: rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SubsetTag;

    fn record(
        a: (&str, &str),
        b: Option<(&str, &str)>,
        pct: f64,
        temp: f64,
        tau: f64,
        yields: [f64; 3],
        ramp: &str,
    ) -> ReactionRecord {
        ReactionRecord {
            solvent_a_name: a.0.to_string(),
            solvent_a_smiles: a.1.to_string(),
            solvent_b_name: b.map(|x| x.0.to_string()),
            solvent_b_smiles: b.map(|x| x.1.to_string()),
            pct_b: pct,
            temperature_c: temp,
            residence_time_s: tau,
            yields,
            ramp_id: ramp.to_string(),
            drfp_hex: None,
        }
    }

    fn toy_dataset() -> Dataset {
        let solvents = [
            ("methanol", "CO"),
            ("ethanol", "CCO"),
            ("toluene", "Cc1ccccc1"),
            ("acetonitrile", "CC#N"),
        ];
        let mut records = Vec::new();
        for (si, s) in solvents.iter().enumerate() {
            for j in 0..8 {
                let t = 60.0 + 10.0 * (j % 4) as f64;
                let tau = 60.0 + 30.0 * j as f64;
                let y0 = (0.1 + 0.02 * si as f64 + 0.05 * (j % 4) as f64).min(0.9);
                records.push(record(
                    *s,
                    None,
                    0.0,
                    t,
                    tau,
                    [y0, (1.0 - y0) * 0.5, (1.0 - y0) * 0.3],
                    &format!("ramp{}{}", si, j / 4),
                ));
            }
        }
        let mut roster: Vec<String> = solvents.iter().map(|s| s.0.to_string()).collect();
        roster.sort();
        Dataset {
            records,
            subset: SubsetTag::SingleSolvents,
            roster,
            yields_were_percent: false,
            warnings: vec![],
        }
    }

    fn small_settings(seed: u64) -> RunSettings {
        let mut s = RunSettings::defaults(seed);
        s.gbdt.iterations = 30;
        s.gbdt.max_depth = 3;
        s.gbdt.min_samples_leaf = 2;
        s.gnn = GnnConfig {
            hidden: 16,
            gat_layers: 1,
            heads: 4,
            dropout: 0.0,
            fp_width: 128,
            ..GnnConfig::default()
        };
        s.train_gnn.max_epochs = 2;
        s.train_gnn.batch_size = 16;
        s.train_deep.max_epochs = 2;
        s.train_deep.batch_size = 16;
        s.deep_hidden = 64;
        s.drfp_radius = 2;
        s.drfp_width = 128;
        s.acs_pca_components = 3;
        s
    }

    #[test]
    fn gbdt_random_protocol_report() {
        let ds = toy_dataset();
        let req = BenchmarkRequest {
            protocol: Protocol::Random,
            methods: vec![Method::Gbdt],
            seed: 7,
            jobs: 1,
            settings: small_settings(7),
        };
        let report = run_benchmark(&ds, &req).unwrap();
        assert_eq!(report.folds.len(), 1);
        assert_eq!(report.summaries.len(), 1);
        assert!(report.summaries[0].mean_pooled_mse.is_finite());
        assert!(report.residuals_csv().lines().count() > 1);
        // timings live in memory only
        assert!(report.seconds_total > 0.0);
        assert!(!report.to_json().unwrap().contains("seconds"));
    }

    #[test]
    fn loso_report_has_one_fold_per_solvent() {
        let ds = toy_dataset();
        let req = BenchmarkRequest {
            protocol: Protocol::Loso,
            methods: vec![Method::Gbdt],
            seed: 3,
            jobs: 2,
            settings: small_settings(3),
        };
        let report = run_benchmark(&ds, &req).unwrap();
        assert_eq!(report.folds.len(), 4);
        assert_eq!(report.summaries[0].folds, 4);
    }

    #[test]
    fn reports_byte_identical_across_runs() {
        let ds = toy_dataset();
        let run = |jobs| {
            let req = BenchmarkRequest {
                protocol: Protocol::Loso,
                methods: vec![Method::Gbdt, Method::Mlp],
                seed: 11,
                jobs,
                settings: small_settings(11),
            };
            let r = run_benchmark(&ds, &req).unwrap();
            (r.to_json().unwrap(), r.residuals_csv())
        };
        // identical across reruns and across thread counts
        assert_eq!(run(1), run(1));
        assert_eq!(run(1), run(2));
    }

    #[test]
    fn ensemble_pulls_in_components() {
        let ds = toy_dataset();
        let req = BenchmarkRequest {
            protocol: Protocol::Random,
            methods: vec![Method::Ensemble],
            seed: 5,
            jobs: 1,
            settings: small_settings(5),
        };
        let report = run_benchmark(&ds, &req).unwrap();
        // only the requested method is reported
        assert!(report.folds.iter().all(|f| f.method == Method::Ensemble));
        assert!(report.summaries[0].mean_pooled_mse.is_finite());
    }

    #[test]
    fn override_keys() {
        let mut s = RunSettings::defaults(0);
        s.apply_override("gbdt.iterations", "50").unwrap();
        assert_eq!(s.gbdt.iterations, 50);
        s.apply_override("gnn.use_drfp", "false").unwrap();
        assert!(!s.gnn.use_drfp);
        s.apply_override("eval.variance_per_fold", "true").unwrap();
        assert!(s.variance_per_fold);
        assert!(matches!(
            s.apply_override("no.such.key", "1"),
            Err(EvalError::BadOverride(_))
        ));
        assert!(matches!(
            s.apply_override("gbdt.iterations", "many"),
            Err(EvalError::BadOverrideValue { .. })
        ));
    }

    #[test]
    fn method_parsing() {
        assert_eq!(
            Method::parse_list("gbdt, gnn,ensemble").unwrap(),
            vec![Method::Gbdt, Method::Gnn, Method::Ensemble]
        );
        assert!(Method::parse_list("gbdt,magic").is_err());
    }

    #[test]
    fn ablation_suite_runs_all_variants() {
        let ds = toy_dataset();
        let mut settings = small_settings(2);
        settings.train_gnn.max_epochs = 1;
        let report = ablation_suite(&ds, Protocol::Random, 2, &settings, 1).unwrap();
        assert_eq!(report.variants.len(), 5);
        assert_eq!(report.variants[0].label, "GNN (Full)");
        assert_eq!(report.variants[0].delta_vs_full, 0.0);
        assert!(report
            .variants
            .iter()
            .all(|v| v.mean_pooled_mse.is_finite()));
    }
}
