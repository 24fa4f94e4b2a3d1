//! Command-line entry point: fingerprinting, training, benchmarking and
//! ablations over the catechol rearrangement datasets.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error.

use catechol::autodiff::{Mat, Tape};
use catechol::data::{load_dataset, ColumnMapping, Dataset, SubsetTag};
use catechol::descriptors::Standardizer;
use catechol::eval::{
    ablation_suite, build_features, dataset_digest, run_benchmark, sha256_hex, BenchmarkRequest,
    EvalError, Method, Protocol, RunSettings,
};
use catechol::models::deep::{DeepModel, DeepModelConfig};
use catechol::models::gnn::GnnModel;
use catechol::models::train::{train_deep, train_gnn, CurvePoint};
use clap::{Parser, Subcommand};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "catechol",
    version,
    about = "Reaction yield models for catechol alkylation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute per-row reaction fingerprints and write them as CSV.
    Fingerprint {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        mapping: Option<PathBuf>,
        #[arg(long, default_value = "mixtures")]
        subset: String,
        #[arg(long, default_value_t = catechol::drfp::DEFAULT_RADIUS)]
        radius: usize,
        #[arg(long, default_value_t = catechol::drfp::DEFAULT_WIDTH)]
        width: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one model on the full dataset; write a checkpoint and curve.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        mapping: Option<PathBuf>,
        #[arg(long, default_value = "mixtures")]
        subset: String,
        #[arg(long, default_value = "gnn")]
        method: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Cross-validated benchmark over one protocol.
    Benchmark {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        mapping: Option<PathBuf>,
        #[arg(long, default_value = "mixtures")]
        subset: String,
        #[arg(long, default_value = "loso")]
        protocol: String,
        #[arg(long, default_value = "gbdt")]
        methods: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Full GNN plus each single-switch ablation.
    Ablate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        mapping: Option<PathBuf>,
        #[arg(long, default_value = "mixtures")]
        subset: String,
        #[arg(long, default_value = "loso")]
        protocol: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
}

enum AppError {
    Usage(String),
    Runtime(String),
}

impl From<EvalError> for AppError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::BadProtocol(_)
            | EvalError::BadMethod(_)
            | EvalError::BadOverride(_)
            | EvalError::BadOverrideValue { .. } => AppError::Usage(e.to_string()),
            other => AppError::Runtime(other.to_string()),
        }
    }
}

fn runtime<E: std::fmt::Display>(e: E) -> AppError {
    AppError::Runtime(e.to_string())
}

fn parse_subset(s: &str) -> Result<SubsetTag, AppError> {
    match s.to_lowercase().as_str() {
        "mixtures" => Ok(SubsetTag::Mixtures),
        "single" | "single_solvents" | "single-solvents" => Ok(SubsetTag::SingleSolvents),
        "ether" | "ether_transfer" | "ether-transfer" => Ok(SubsetTag::EtherTransfer),
        other => Err(AppError::Usage(format!(
            "unknown subset '{other}' (expected mixtures, single-solvents or ether-transfer)"
        ))),
    }
}

fn load(data: &Path, mapping: Option<&PathBuf>, subset: &str) -> Result<Dataset, AppError> {
    if !data.exists() {
        return Err(AppError::Usage(format!(
            "dataset path {} does not exist",
            data.display()
        )));
    }
    if let Some(m) = mapping {
        if !m.exists() {
            return Err(AppError::Usage(format!(
                "mapping path {} does not exist",
                m.display()
            )));
        }
    }
    let tag = parse_subset(subset)?;
    let mapping = mapping
        .map(|p| ColumnMapping::load(p))
        .transpose()
        .map_err(runtime)?;
    let ds = load_dataset(data, tag, mapping.as_ref()).map_err(runtime)?;
    for warning in &ds.warnings {
        eprintln!("warning: {warning}");
    }
    Ok(ds)
}

fn build_settings(seed: u64, overrides: &[String]) -> Result<RunSettings, AppError> {
    let mut settings = RunSettings::defaults(seed);
    for entry in overrides {
        let (key, value) = entry.split_once('=').ok_or_else(|| {
            AppError::Usage(format!("override '{entry}' is not of the form key=value"))
        })?;
        settings.apply_override(key.trim(), value.trim())?;
    }
    Ok(settings)
}

fn write_artifact(path: &Path, contents: &str) -> Result<(), AppError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(runtime)?;
    }
    std::fs::write(path, contents).map_err(runtime)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_fingerprint(
    data: &Path,
    mapping: Option<&PathBuf>,
    subset: &str,
    radius: usize,
    width: usize,
    out: &Path,
) -> Result<(), AppError> {
    let ds = load(data, mapping, subset)?;
    let mut settings = RunSettings::defaults(0);
    settings.drfp_radius = radius;
    settings.drfp_width = width;
    let ctx = build_features(&ds, &settings)?;
    let mut csv = String::from("row,solvent_a,solvent_b,pct_b,drfp_hex\n");
    for (i, (r, fp)) in ds.records.iter().zip(&ctx.fingerprints).enumerate() {
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            i,
            r.solvent_a_name,
            r.solvent_b_name.as_deref().unwrap_or(""),
            r.pct_b,
            fp.to_hex(),
        );
    }
    write_artifact(out, &csv)
}

fn curve_csv(curve: &[CurvePoint]) -> String {
    let mut out = String::from("epoch,train_loss,val_loss,lr\n");
    for p in curve {
        let _ = writeln!(out, "{},{},{},{}", p.epoch, p.train_loss, p.val_loss, p.lr);
    }
    out
}

fn to_mat(rows: &[Vec<f64>]) -> Mat {
    let width = rows.first().map(|r| r.len()).unwrap_or(0);
    let mut m = Mat::zeros(rows.len(), width);
    for (i, r) in rows.iter().enumerate() {
        m.row_mut(i).copy_from_slice(r);
    }
    m
}

fn cmd_train(
    data: &Path,
    mapping: Option<&PathBuf>,
    subset: &str,
    method: &str,
    seed: u64,
    out: &Path,
    overrides: &[String],
) -> Result<(), AppError> {
    let method: Method = method.parse().map_err(AppError::from)?;
    let ds = load(data, mapping, subset)?;
    let settings = build_settings(seed, overrides)?;
    let ctx = build_features(&ds, &settings)?;
    let all: Vec<usize> = (0..ds.records.len()).collect();
    let (fit, val) = catechol::eval::carve_validation(&ds, &all, seed);

    let mut extra = BTreeMap::new();
    extra.insert("version".to_string(), env!("CARGO_PKG_VERSION").to_string());
    extra.insert("seed".to_string(), seed.to_string());
    extra.insert("method".to_string(), method.to_string());
    extra.insert(
        "config_digest".to_string(),
        sha256_hex(
            serde_json::to_string(&settings)
                .map_err(runtime)?
                .as_bytes(),
        ),
    );
    extra.insert("data_digest".to_string(), dataset_digest(&ds));

    std::fs::create_dir_all(out).map_err(runtime)?;
    let curve = match method {
        Method::Gnn => {
            let config = catechol::models::gnn::GnnConfig {
                fp_width: settings.drfp_width,
                ..settings.gnn.clone()
            };
            let mut model = GnnModel::new(config, seed).map_err(runtime)?;
            let records = |rows: &[usize]| -> Vec<&catechol::data::ReactionRecord> {
                rows.iter().map(|&i| &ds.records[i]).collect()
            };
            let fps = |rows: &[usize]| -> Vec<catechol::drfp::Fingerprint> {
                rows.iter().map(|&i| ctx.fingerprints[i].clone()).collect()
            };
            let curve = train_gnn(
                &mut model,
                &records(&fit),
                &fps(&fit),
                &records(&val),
                &fps(&val),
                &settings.train_gnn,
            )
            .map_err(runtime)?;
            model
                .store
                .save(&out.join("checkpoint.bin"), &extra)
                .map_err(runtime)?;
            curve
        }
        Method::DeepModel | Method::Mlp => {
            let x_fit: Vec<Vec<f64>> = fit.iter().map(|&i| ctx.baseline_rows[i].clone()).collect();
            let z = Standardizer::fit(&x_fit);
            let matrix = |rows: &[usize]| -> Mat {
                to_mat(
                    &rows
                        .iter()
                        .map(|&i| z.transform(&ctx.baseline_rows[i]))
                        .collect::<Vec<_>>(),
                )
            };
            let targets = |rows: &[usize]| -> Mat {
                let mut m = Mat::zeros(rows.len(), 3);
                for (slot, &i) in rows.iter().enumerate() {
                    m.row_mut(slot).copy_from_slice(&ctx.targets[i]);
                }
                m
            };
            let width = ctx.baseline_rows.first().map(|r| r.len()).unwrap_or(0);
            let config = DeepModelConfig {
                hidden: settings.deep_hidden,
                plain_mlp: method == Method::Mlp,
                ..DeepModelConfig::new(width)
            };
            let mut model = DeepModel::new(config, seed).map_err(runtime)?;
            let curve = train_deep(
                &mut model,
                &matrix(&fit),
                &targets(&fit),
                &matrix(&val),
                &targets(&val),
                &settings.train_deep,
            )
            .map_err(runtime)?;
            model
                .store
                .save(&out.join("checkpoint.bin"), &extra)
                .map_err(runtime)?;
            // exercise the restored model once so a broken checkpoint
            // fails the run rather than a later consumer
            let mut tape = Tape::new(seed);
            model.forward(&mut tape, &matrix(&fit)).map_err(runtime)?;
            curve
        }
        other => {
            return Err(AppError::Usage(format!(
                "method '{other}' has no training loop; use gnn, deepmodel or mlp"
            )))
        }
    };
    write_artifact(&out.join("curve.csv"), &curve_csv(&curve))
}

#[allow(clippy::too_many_arguments)]
fn cmd_benchmark(
    data: &Path,
    mapping: Option<&PathBuf>,
    subset: &str,
    protocol: &str,
    methods: &str,
    seed: u64,
    out: &Path,
    jobs: usize,
    overrides: &[String],
) -> Result<(), AppError> {
    let protocol: Protocol = protocol.parse().map_err(AppError::from)?;
    let methods = Method::parse_list(methods)?;
    let ds = load(data, mapping, subset)?;
    let settings = build_settings(seed, overrides)?;
    let req = BenchmarkRequest {
        protocol,
        methods,
        seed,
        jobs,
        settings,
    };
    let report = run_benchmark(&ds, &req)?;
    let stem = format!("benchmark_{protocol}_seed{seed}");
    write_artifact(&out.join(format!("{stem}.json")), &report.to_json()?)?;
    write_artifact(&out.join(format!("{stem}.txt")), &report.to_text())?;
    write_artifact(
        &out.join(format!("residuals_{protocol}_seed{seed}.csv")),
        &report.residuals_csv(),
    )?;
    print!("{}", report.to_text());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_ablate(
    data: &Path,
    mapping: Option<&PathBuf>,
    subset: &str,
    protocol: &str,
    seed: u64,
    out: &Path,
    jobs: usize,
    overrides: &[String],
) -> Result<(), AppError> {
    let protocol: Protocol = protocol.parse().map_err(AppError::from)?;
    let ds = load(data, mapping, subset)?;
    let settings = build_settings(seed, overrides)?;
    let report = ablation_suite(&ds, protocol, seed, &settings, jobs)?;
    let stem = format!("ablation_{protocol}_seed{seed}");
    write_artifact(&out.join(format!("{stem}.json")), &report.to_json()?)?;
    write_artifact(&out.join(format!("{stem}.txt")), &report.to_text())?;
    print!("{}", report.to_text());
    Ok(())
}

fn run(cli: Cli) -> Result<(), AppError> {
    match cli.command {
        Command::Fingerprint {
            data,
            mapping,
            subset,
            radius,
            width,
            out,
        } => cmd_fingerprint(&data, mapping.as_ref(), &subset, radius, width, &out),
        Command::Train {
            data,
            mapping,
            subset,
            method,
            seed,
            out,
            set,
        } => cmd_train(&data, mapping.as_ref(), &subset, &method, seed, &out, &set),
        Command::Benchmark {
            data,
            mapping,
            subset,
            protocol,
            methods,
            seed,
            out,
            jobs,
            set,
        } => cmd_benchmark(
            &data,
            mapping.as_ref(),
            &subset,
            &protocol,
            &methods,
            seed,
            &out,
            jobs,
            &set,
        ),
        Command::Ablate {
            data,
            mapping,
            subset,
            protocol,
            seed,
            out,
            jobs,
            set,
        } => cmd_ablate(
            &data,
            mapping.as_ref(),
            &subset,
            &protocol,
            seed,
            &out,
            jobs,
            &set,
        ),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(AppError::Usage(message)) => {
            eprintln!("usage error: {message}");
            ExitCode::from(2)
        }
        Err(AppError::Runtime(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(1)
        }
    }
}
