//! Acceptance gate. Prints one line per criterion:
//!
//!   criterion 1 (property suite): PASS
//!   criterion 2 (oracle equivalence): PASS
//!   criterion 3 (capacity): PASS
//!   criterion 4 (dataset reproduction): SKIP - no dataset
//!   criterion 5 (determinism): PASS
//!
//! Criterion 4 needs the public dataset files; point CATECHOL_DATA at the
//! mixtures CSV (and optionally CATECHOL_MAPPING at a column mapping) to
//! enable it. Everything else runs on built-in fixtures.

use catechol::autodiff::{Mat, ParamStore, PlateauScheduler, Tape};
use catechol::data::{load_dataset, ColumnMapping, Dataset, ReactionRecord, SubsetTag};
use catechol::descriptors::mix_descriptors;
use catechol::drfp::drfp_fingerprint;
use catechol::eval::{
    ablation_suite, ensemble_combine, make_splits, run_benchmark, BenchmarkRequest, Method,
    Protocol, RunSettings,
};
use catechol::models::gbdt::{gbdt_fit, GbdtConfig};
use catechol::models::gnn::{
    assemble_gnn_inputs, GnnConfig, GnnModel, SolventGraphCache, P2_SMILES, P3_SMILES, SM_SMILES,
};
use catechol::models::train::{train_gnn, TrainConfig};
use catechol::smiles::{parse_smiles, BondOrder};

type Check = Result<(), String>;

fn fail(msg: impl Into<String>) -> Check {
    Err(msg.into())
}

fn record(a: &str, smiles: &str, t: f64, tau: f64, y: [f64; 3], ramp: &str) -> ReactionRecord {
    ReactionRecord {
        solvent_a_name: a.to_string(),
        solvent_a_smiles: smiles.to_string(),
        solvent_b_name: None,
        solvent_b_smiles: None,
        pct_b: 0.0,
        temperature_c: t,
        residence_time_s: tau,
        yields: y,
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
    for (si, (name, smiles)) in solvents.iter().enumerate() {
        for j in 0..8 {
            let y0 = 0.1 + 0.02 * si as f64 + 0.05 * (j % 4) as f64;
            records.push(record(
                name,
                smiles,
                60.0 + 10.0 * (j % 4) as f64,
                30.0 + 30.0 * j as f64,
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

fn criterion_1_property_suite() -> Check {
    // gradient check on a composed network
    let mut store = ParamStore::new();
    let x = store.add(
        "x",
        Mat::from_vec(3, 4, (0..12).map(|i| ((i as f64) * 0.7).sin()).collect()),
    );
    let w = store.add(
        "w",
        Mat::from_vec(
            4,
            2,
            (0..8).map(|i| ((i as f64) * 1.3).cos() * 0.5).collect(),
        ),
    );
    let target = Mat::from_vec(3, 2, vec![0.3; 6]);
    let loss_of = |store: &ParamStore| -> f64 {
        let mut tape = Tape::new(0);
        let xn = tape.param(store, x);
        let wn = tape.param(store, w);
        let y = tape.matmul(xn, wn).unwrap();
        let y = tape.sigmoid(y);
        let l = tape.mse_loss(y, &target).unwrap();
        tape.value(l).data[0]
    };
    {
        let mut tape = Tape::new(0);
        let xn = tape.param(&store, x);
        let wn = tape.param(&store, w);
        let y = tape.matmul(xn, wn).unwrap();
        let y = tape.sigmoid(y);
        let l = tape.mse_loss(y, &target).unwrap();
        tape.backward(l, &mut store).unwrap();
    }
    let h = 1e-5;
    for id in [x, w] {
        for k in 0..store.value(id).data.len() {
            let orig = store.value(id).data[k];
            let exact = store.grad(id).data[k];
            store.value_mut(id).data[k] = orig + h;
            let up = loss_of(&store);
            store.value_mut(id).data[k] = orig - h;
            let down = loss_of(&store);
            store.value_mut(id).data[k] = orig;
            let numeric = (up - down) / (2.0 * h);
            let rel = (numeric - exact).abs() / numeric.abs().max(exact.abs()).max(1e-6);
            if rel >= 1e-4 {
                return fail(format!("gradient check rel err {rel:.2e}"));
            }
        }
    }

    // GAT permutation invariance and zero-weight residual identity
    let config = GnnConfig {
        hidden: 16,
        gat_layers: 2,
        heads: 4,
        dropout: 0.0,
        fp_width: 128,
        ..GnnConfig::default()
    };
    let fp = drfp_fingerprint(&[SM_SMILES], &[P2_SMILES, P3_SMILES], 2, 128).unwrap();
    let forward = |model: &GnnModel, smiles: &str| -> Vec<f64> {
        let r = record("s", smiles, 80.0, 120.0, [0.3, 0.4, 0.3], "r");
        let mut cache = SolventGraphCache::default();
        let inputs = assemble_gnn_inputs(&[&r], std::slice::from_ref(&fp), &mut cache).unwrap();
        let mut tape = Tape::new(0);
        let out = model.forward(&mut tape, &inputs).unwrap();
        tape.value(out).data.clone()
    };
    let model = GnnModel::new(config.clone(), 5).unwrap();
    let a = forward(&model, "CCO");
    let b = forward(&model, "OCC");
    if a.iter().zip(&b).any(|(p, q)| (p - q).abs() >= 1e-6) {
        return fail("GAT not invariant to atom reordering");
    }
    let mut zeroed = GnnModel::new(config, 6).unwrap();
    for id in 0..zeroed.store.len() {
        zeroed
            .store
            .value_mut(id)
            .data
            .iter_mut()
            .for_each(|v| *v = 0.0);
    }
    if forward(&zeroed, "CC#N").iter().any(|&y| y != 0.5) {
        return fail("zero-weight residual identity broken");
    }

    // LOSO/LORO leakage scans
    let ds = toy_dataset();
    for protocol in [Protocol::Loso, Protocol::Loro] {
        let plan = make_splits(&ds, protocol, 0).map_err(|e| e.to_string())?;
        for fold in &plan.folds {
            if fold.train.iter().any(|i| fold.test.contains(i)) {
                return fail(format!("{protocol}: train/test overlap"));
            }
        }
    }

    // DRFP symmetry, spectator cancellation, determinism
    let f1 = drfp_fingerprint(&["CCO"], &["CC=O"], 3, 2048).unwrap();
    let f2 = drfp_fingerprint(&["CC=O"], &["CCO"], 3, 2048).unwrap();
    if f1 != f2 {
        return fail("DRFP side symmetry broken");
    }
    let f3 = drfp_fingerprint(&["CCO", "O"], &["CC=O", "O"], 3, 2048).unwrap();
    if f1 != f3 {
        return fail("DRFP spectator not cancelled");
    }
    if f1 != drfp_fingerprint(&["CCO"], &["CC=O"], 3, 2048).unwrap() {
        return fail("DRFP not deterministic");
    }

    // mixing endpoints and affine identity
    let a = [1.0, -2.0];
    let b = [0.5, 3.0];
    if mix_descriptors(&a, &b, 0.0).unwrap() != a.to_vec()
        || mix_descriptors(&a, &b, 100.0).unwrap() != b.to_vec()
    {
        return fail("mix endpoints wrong");
    }

    // ensemble convexity and epsilon dominance
    let out = ensemble_combine(&[1.0; 3], &[0.0; 3], 0.0, 1.0);
    if out[0] <= 0.999_99 {
        return fail("zero-variance prediction does not dominate");
    }

    // clip norm arithmetic
    let mut s = ParamStore::new();
    let p = s.add("p", Mat::from_vec(1, 2, vec![0.0, 0.0]));
    s.accumulate_grad(p, &Mat::from_vec(1, 2, vec![3.0, 4.0]));
    let norm = s.clip_grad_norm(1.0);
    if (norm - 5.0).abs() > 1e-12 || (s.grad(p).data[0] - 0.6).abs() > 1e-12 {
        return fail("clip-norm arithmetic wrong");
    }

    // plateau scheduler arithmetic
    let mut sched = PlateauScheduler::new(1.0, 0.5, 1, 1e-6);
    sched.step(1.0); // establishes the best loss
    let lr = sched.step(1.0); // one stale epoch at patience 1 halves the lr
    if (lr - 0.5).abs() > 1e-12 {
        return fail(format!("plateau scheduler lr {lr}, expected 0.5"));
    }
    Ok(())
}

fn criterion_2_oracles() -> Check {
    // SMILES counts vs the frozen reference for all 24 solvents
    let fixture = include_str!("fixtures/solvent_counts.csv");
    for line in fixture.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let g = parse_smiles(f[1]).map_err(|e| format!("{}: {e}", f[0]))?;
        let got = [
            g.num_atoms(),
            g.num_bonds(),
            g.atoms.iter().filter(|a| a.aromatic).count(),
            g.bonds
                .iter()
                .filter(|b| b.order == BondOrder::Aromatic)
                .count(),
            g.atoms.iter().filter(|a| a.in_ring).count(),
            g.bonds.iter().filter(|b| b.in_ring).count(),
        ];
        for (k, got_v) in got.iter().enumerate() {
            let want: usize = f[k + 2].parse().unwrap();
            if *got_v != want {
                return fail(format!("{}: field {k} got {got_v}, reference {want}", f[0]));
            }
        }
    }

    // GBDT first split vs exhaustive search
    let features: Vec<Vec<f64>> = (0..60)
        .map(|i| vec![((i as f64) * 0.61).sin() * 4.0, (i % 7) as f64])
        .collect();
    let targets: Vec<[f64; 3]> = features
        .iter()
        .map(|r| {
            let s = if r[0] > 0.5 { 0.7 } else { 0.2 } + r[1] * 0.01;
            [s, s * 0.5, 1.0 - s * 0.4]
        })
        .collect();
    let config = GbdtConfig {
        iterations: 1,
        learning_rate: 1.0,
        max_depth: 1,
        max_leaves: 2,
        ..GbdtConfig::default()
    };
    let model = gbdt_fit(&features, &targets, &config).unwrap();
    for t in 0..3 {
        let mean: f64 = targets.iter().map(|y| y[t]).sum::<f64>() / 60.0;
        let residuals: Vec<f64> = targets.iter().map(|y| mean - y[t]).collect();
        let g_total: f64 = residuals.iter().sum();
        let parent = g_total * g_total / (60.0 + config.l2);
        let mut best: Option<(usize, f64, f64)> = None;
        for f in 0..2 {
            let mut vals: Vec<f64> = features.iter().map(|r| r[f]).collect();
            vals.sort_by(f64::total_cmp);
            vals.dedup();
            for pair in vals.windows(2) {
                let thr = (pair[0] + pair[1]) / 2.0;
                let (mut gl, mut nl) = (0.0, 0usize);
                for (row, &g) in features.iter().zip(&residuals) {
                    if row[f] < thr {
                        gl += g;
                        nl += 1;
                    }
                }
                let nr = 60 - nl;
                if nl < config.min_samples_leaf || nr < config.min_samples_leaf {
                    continue;
                }
                let gr = g_total - gl;
                let gain =
                    gl * gl / (nl as f64 + config.l2) + gr * gr / (nr as f64 + config.l2) - parent;
                if best.is_none_or(|(_, _, bg)| gain > bg + 1e-12) {
                    best = Some((f, thr, gain));
                }
            }
        }
        let (ef, et, _) = best.unwrap();
        let (gf, gt) = model.first_split(t).ok_or("model found no split")?;
        if gf != ef || (gt - et).abs() > 1e-9 {
            return fail(format!(
                "target {t}: split ({gf}, {gt}) vs exhaustive ({ef}, {et})"
            ));
        }
    }
    Ok(())
}

fn criterion_3_capacity() -> Check {
    let solvents = ["CO", "CCO", "CC#N", "Cc1ccccc1", "O"];
    let records: Vec<ReactionRecord> = (0..20)
        .map(|i| {
            let y0 = 0.05 + 0.04 * i as f64;
            record(
                "s",
                solvents[i % solvents.len()],
                60.0 + 5.0 * i as f64,
                30.0 + 10.0 * i as f64,
                [y0, (1.0 - y0) * 0.6, (1.0 - y0) * 0.4],
                "r",
            )
        })
        .collect();
    let refs: Vec<&ReactionRecord> = records.iter().collect();
    let fp = drfp_fingerprint(&[SM_SMILES], &[P2_SMILES, P3_SMILES], 2, 128).unwrap();
    let fps = vec![fp; refs.len()];
    let config = GnnConfig {
        hidden: 32,
        gat_layers: 2,
        heads: 4,
        dropout: 0.0,
        fp_width: 128,
        ..GnnConfig::default()
    };
    let mut model = GnnModel::new(config, 1).unwrap();
    let cfg = TrainConfig {
        lr: 3e-3,
        weight_decay: 0.0,
        batch_size: 20,
        max_epochs: 800,
        patience: 800,
        clip_norm: 10.0,
        seed: 1,
        plateau: None,
    };
    let curve = train_gnn(&mut model, &refs, &fps, &[], &[], &cfg).map_err(|e| e.to_string())?;
    let last = curve.last().unwrap().train_loss;
    if last >= 1e-3 {
        return fail(format!("GNN train MSE {last:.2e} >= 1e-3"));
    }
    // DeepModel capacity is covered by the same bound family with a looser
    // threshold; see tests/model_properties.rs for the standalone check.
    Ok(())
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
    s.train_gnn.max_epochs = 1;
    s.train_gnn.batch_size = 16;
    s.drfp_radius = 2;
    s.drfp_width = 128;
    s.acs_pca_components = 3;
    s
}

fn criterion_4_dataset() -> Result<Option<String>, String> {
    let Ok(path) = std::env::var("CATECHOL_DATA") else {
        return Ok(Some("no dataset (set CATECHOL_DATA to enable)".to_string()));
    };
    let mapping = std::env::var("CATECHOL_MAPPING")
        .ok()
        .map(|p| ColumnMapping::load(std::path::Path::new(&p)))
        .transpose()
        .map_err(|e| e.to_string())?;
    let ds = load_dataset(
        std::path::Path::new(&path),
        SubsetTag::Mixtures,
        mapping.as_ref(),
    )
    .map_err(|e| e.to_string())?;
    let seed = 0;

    // (a) GBDT LOSO pooled MSE within [0.08, 0.13]
    let gbdt_req = BenchmarkRequest {
        protocol: Protocol::Loso,
        methods: vec![Method::Gbdt],
        seed,
        jobs: 0,
        settings: RunSettings::defaults(seed),
    };
    let gbdt_report = run_benchmark(&ds, &gbdt_req).map_err(|e| e.to_string())?;
    let gbdt_mse = gbdt_report.summaries[0].mean_pooled_mse;
    if !(0.08..=0.13).contains(&gbdt_mse) {
        return Err(format!(
            "GBDT LOSO pooled MSE {gbdt_mse:.4} outside [0.08, 0.13]"
        ));
    }

    // (b) GNN at least 5x better than GBDT on LOSO
    let gnn_req = BenchmarkRequest {
        protocol: Protocol::Loso,
        methods: vec![Method::Gnn],
        seed,
        jobs: 0,
        settings: RunSettings::defaults(seed),
    };
    let gnn_report = run_benchmark(&ds, &gnn_req).map_err(|e| e.to_string())?;
    let gnn_mse = gnn_report.summaries[0].mean_pooled_mse;
    if gnn_mse * 5.0 > gbdt_mse {
        return Err(format!(
            "GNN LOSO MSE {gnn_mse:.4} not 5x below GBDT {gbdt_mse:.4}"
        ));
    }

    // (c) every ablation scores worse than the full GNN
    let ablation = ablation_suite(&ds, Protocol::Loso, seed, &RunSettings::defaults(seed), 0)
        .map_err(|e| e.to_string())?;
    let full = ablation.variants[0].mean_pooled_mse;
    for v in &ablation.variants[1..] {
        if v.mean_pooled_mse <= full {
            return Err(format!("ablation '{}' not worse than full GNN", v.label));
        }
    }
    println!(
        "  measured: gbdt loso {gbdt_mse:.4}, gnn loso {gnn_mse:.4}, full gnn ablation base {full:.4}"
    );
    Ok(None)
}

fn criterion_5_determinism() -> Check {
    let ds = toy_dataset();
    let run = || {
        let req = BenchmarkRequest {
            protocol: Protocol::Loso,
            methods: vec![Method::Gbdt, Method::Gnn],
            seed: 21,
            jobs: 2,
            settings: small_settings(21),
        };
        let r = run_benchmark(&ds, &req).unwrap();
        (r.to_json().unwrap(), r.to_text(), r.residuals_csv())
    };
    if run() != run() {
        return fail("reports differ across identical reruns");
    }
    Ok(())
}

#[test]
fn acceptance() {
    let mut failures = Vec::new();
    let mut report = |name: &str, outcome: Result<Option<String>, String>| match outcome {
        Ok(None) => println!("{name}: PASS"),
        Ok(Some(reason)) => println!("{name}: SKIP - {reason}"),
        Err(e) => {
            println!("{name}: FAIL - {e}");
            failures.push(format!("{name}: {e}"));
        }
    };
    report(
        "criterion 1 (property suite)",
        criterion_1_property_suite().map(|()| None),
    );
    report(
        "criterion 2 (oracle equivalence)",
        criterion_2_oracles().map(|()| None),
    );
    report(
        "criterion 3 (capacity)",
        criterion_3_capacity().map(|()| None),
    );
    report("criterion 4 (dataset reproduction)", criterion_4_dataset());
    report(
        "criterion 5 (determinism)",
        criterion_5_determinism().map(|()| None),
    );
    assert!(
        failures.is_empty(),
        "acceptance failures:\n{}",
        failures.join("\n")
    );
}
