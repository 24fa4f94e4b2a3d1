//! Tabular solvent descriptor sets, linear mixture interpolation, and PCA.
//!
//! Two tables back the baselines: empirical solvatochromic descriptors
//! ("spange") and PCA-reduced bulk physical properties ("acs_pca"). Both
//! load from CSV resources keyed by normalized solvent name.

use crate::data::{normalize_name, ReactionRecord};
use crate::drfp::Fingerprint;
use nalgebra::{DMatrix, SymmetricEigen};
use std::collections::BTreeMap;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DescriptorError {
    #[error("descriptor width mismatch: {0} vs {1}")]
    WidthMismatch(usize, usize),
    #[error("pctB {0} outside [0, 100]")]
    PctOutOfRange(f64),
    #[error("solvent '{solvent}' not found in table '{table}'")]
    UnknownSolvent { solvent: String, table: String },
    #[error("duplicate solvent '{0}' in descriptor table")]
    DuplicateSolvent(String),
    #[error("PCA requires k <= min(samples, features); got k={k}, samples={samples}, features={features}")]
    BadComponentCount {
        k: usize,
        samples: usize,
        features: usize,
    },
    #[error("degenerate input: zero variance in all directions")]
    DegenerateInput,
    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone)]
pub struct DescriptorTable {
    pub id: String,
    pub column_names: Vec<String>,
    vectors: BTreeMap<String, Vec<f64>>,
}

impl DescriptorTable {
    pub fn new(id: &str, column_names: Vec<String>) -> Self {
        DescriptorTable {
            id: id.to_string(),
            column_names,
            vectors: BTreeMap::new(),
        }
    }

    pub fn width(&self) -> usize {
        self.column_names.len()
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn solvents(&self) -> impl Iterator<Item = &String> {
        self.vectors.keys()
    }

    pub fn insert(&mut self, solvent: &str, vector: Vec<f64>) -> Result<(), DescriptorError> {
        if vector.len() != self.width() {
            return Err(DescriptorError::WidthMismatch(vector.len(), self.width()));
        }
        let key = normalize_name(solvent);
        if self.vectors.contains_key(&key) {
            return Err(DescriptorError::DuplicateSolvent(key));
        }
        self.vectors.insert(key, vector);
        Ok(())
    }

    pub fn get(&self, solvent: &str) -> Result<&Vec<f64>, DescriptorError> {
        self.vectors
            .get(&normalize_name(solvent))
            .ok_or_else(|| DescriptorError::UnknownSolvent {
                solvent: normalize_name(solvent),
                table: self.id.clone(),
            })
    }

    /// Load from CSV: first column = solvent name, header row = descriptor
    /// names.
    pub fn load_csv(id: &str, path: &Path) -> Result<Self, DescriptorError> {
        let reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| DescriptorError::Io {
                path: path.display().to_string(),
                source: std::io::Error::other(e.to_string()),
            })?;
        Self::from_reader(id, reader)
    }

    /// Parse CSV text, for the tables compiled into the binary.
    pub fn from_csv_str(id: &str, text: &str) -> Result<Self, DescriptorError> {
        let reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        Self::from_reader(id, reader)
    }

    fn from_reader<R: std::io::Read>(
        id: &str,
        mut reader: csv::Reader<R>,
    ) -> Result<Self, DescriptorError> {
        let headers = reader.headers()?.clone();
        let column_names: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
        let mut table = DescriptorTable::new(id, column_names);
        for row in reader.records() {
            let row = row?;
            let name = row.get(0).unwrap_or_default().to_string();
            let vector: Vec<f64> = row
                .iter()
                .skip(1)
                .map(|v| v.parse::<f64>().unwrap_or(f64::NAN))
                .collect();
            table.insert(&name, vector)?;
        }
        Ok(table)
    }

    /// Rows in key order as (names, matrix) for PCA fitting.
    pub fn as_matrix(&self) -> (Vec<String>, Vec<Vec<f64>>) {
        let names = self.vectors.keys().cloned().collect();
        let rows = self.vectors.values().cloned().collect();
        (names, rows)
    }
}

/// Solvatochromic (Spange) parameter table for the 24 benchmark solvents,
/// compiled into the binary.
pub fn builtin_spange() -> DescriptorTable {
    DescriptorTable::from_csv_str("spange", include_str!("../resources/spange.csv"))
        .expect("bundled spange table parses")
}

/// Bulk physical property table (ACS-style) for the same roster.
pub fn builtin_acs() -> DescriptorTable {
    DescriptorTable::from_csv_str("acs", include_str!("../resources/acs_properties.csv"))
        .expect("bundled acs table parses")
}

/// (1 - pctB/100) * f_A + (pctB/100) * f_B, elementwise.
pub fn mix_descriptors(f_a: &[f64], f_b: &[f64], pct_b: f64) -> Result<Vec<f64>, DescriptorError> {
    if f_a.len() != f_b.len() {
        return Err(DescriptorError::WidthMismatch(f_a.len(), f_b.len()));
    }
    if !(0.0..=100.0).contains(&pct_b) {
        return Err(DescriptorError::PctOutOfRange(pct_b));
    }
    let w = pct_b / 100.0;
    Ok(f_a
        .iter()
        .zip(f_b)
        .map(|(a, b)| (1.0 - w) * a + w * b)
        .collect())
}

#[derive(Debug, Clone)]
pub struct PcaBasis {
    pub mean: Vec<f64>,
    /// k rows, each an orthonormal component of length = feature count.
    pub components: Vec<Vec<f64>>,
    pub explained_variance: Vec<f64>,
}

impl PcaBasis {
    pub fn transform(&self, row: &[f64]) -> Vec<f64> {
        let centered: Vec<f64> = row.iter().zip(&self.mean).map(|(x, m)| x - m).collect();
        self.components
            .iter()
            .map(|c| c.iter().zip(&centered).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn inverse_transform(&self, coords: &[f64]) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (c, &w) in self.components.iter().zip(coords) {
            for (o, &v) in out.iter_mut().zip(c) {
                *o += w * v;
            }
        }
        out
    }
}

/// Fit a PCA basis: mean vector plus k orthonormal components sorted by
/// descending explained variance.
pub fn pca_fit(matrix: &[Vec<f64>], k: usize) -> Result<PcaBasis, DescriptorError> {
    let samples = matrix.len();
    let features = matrix.first().map(|r| r.len()).unwrap_or(0);
    if k > samples.min(features) || k == 0 {
        return Err(DescriptorError::BadComponentCount {
            k,
            samples,
            features,
        });
    }
    let mut mean = vec![0.0; features];
    for row in matrix {
        for (m, x) in mean.iter_mut().zip(row) {
            *m += x / samples as f64;
        }
    }
    // covariance (divides by n-1; n=1 is degenerate anyway)
    let denom = (samples.max(2) - 1) as f64;
    let mut cov = DMatrix::zeros(features, features);
    for row in matrix {
        let centered: Vec<f64> = row.iter().zip(&mean).map(|(x, m)| x - m).collect();
        for i in 0..features {
            for j in 0..features {
                cov[(i, j)] += centered[i] * centered[j] / denom;
            }
        }
    }
    if cov.iter().all(|v: &f64| v.abs() < 1e-12) {
        return Err(DescriptorError::DegenerateInput);
    }
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..features).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let components = order[..k]
        .iter()
        .map(|&i| eig.eigenvectors.column(i).iter().copied().collect())
        .collect();
    let explained_variance = order[..k]
        .iter()
        .map(|&i| eig.eigenvalues[i].max(0.0))
        .collect();
    Ok(PcaBasis {
        mean,
        components,
        explained_variance,
    })
}

/// Column-wise z-scoring statistics, fit on training rows only.
#[derive(Debug, Clone)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(rows: &[Vec<f64>]) -> Standardizer {
        let n = rows.len().max(1) as f64;
        let width = rows.first().map(|r| r.len()).unwrap_or(0);
        let mut mean = vec![0.0; width];
        for row in rows {
            for (m, x) in mean.iter_mut().zip(row) {
                *m += x / n;
            }
        }
        let mut var = vec![0.0; width];
        for row in rows {
            for ((v, x), m) in var.iter_mut().zip(row).zip(&mean) {
                *v += (x - m).powi(2) / n;
            }
        }
        let std = var.iter().map(|v| v.sqrt().max(1e-9)).collect();
        Standardizer { mean, std }
    }

    pub fn transform(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(x, (m, s))| (x - m) / s)
            .collect()
    }
}

/// Fixed baseline layout: [tau, T, spange mix block, acs mix block,
/// drfp bits as 0/1 reals]. Width = 2 + n_spange + n_acs + n_drfp.
pub fn assemble_baseline_features(
    record: &ReactionRecord,
    spange: &DescriptorTable,
    acs_pca: &DescriptorTable,
    fp: &Fingerprint,
) -> Result<Vec<f64>, DescriptorError> {
    let mut out = Vec::with_capacity(2 + spange.width() + acs_pca.width() + fp.width);
    out.push(record.residence_time_s);
    out.push(record.temperature_c);
    for table in [spange, acs_pca] {
        let f_a = table.get(&record.solvent_a_name)?;
        let mixed = match &record.solvent_b_name {
            Some(b) => {
                let f_b = table.get(b)?;
                mix_descriptors(f_a, f_b, record.pct_b)?
            }
            None => f_a.clone(),
        };
        out.extend(mixed);
    }
    out.extend(fp.as_reals());
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn table(id: &str, width: usize, entries: &[(&str, &[f64])]) -> DescriptorTable {
        let cols = (0..width).map(|i| format!("d{i}")).collect();
        let mut t = DescriptorTable::new(id, cols);
        for (name, v) in entries {
            t.insert(name, v.to_vec()).unwrap();
        }
        t
    }

    #[test]
    fn mix_convex_combination() {
        let m = mix_descriptors(&[1.0, 0.0], &[0.0, 1.0], 25.0).unwrap();
        assert_eq!(m, vec![0.75, 0.25]);
    }

    #[test]
    fn mix_endpoints() {
        let a = [1.5, -2.0, 3.0];
        let b = [0.5, 4.0, -1.0];
        assert_eq!(mix_descriptors(&a, &b, 0.0).unwrap(), a.to_vec());
        assert_eq!(mix_descriptors(&a, &b, 100.0).unwrap(), b.to_vec());
    }

    #[test]
    fn mix_errors() {
        assert!(matches!(
            mix_descriptors(&[1.0], &[1.0, 2.0], 50.0),
            Err(DescriptorError::WidthMismatch(1, 2))
        ));
        assert!(matches!(
            mix_descriptors(&[1.0], &[2.0], 101.0),
            Err(DescriptorError::PctOutOfRange(_))
        ));
    }

    #[test]
    fn mix_affine_identity() {
        let a = [1.0, 2.0, 3.0];
        let b = [-1.0, 0.5, 2.0];
        for p in [0.0, 10.0, 33.3, 50.0, 87.5] {
            let m1 = mix_descriptors(&a, &b, p).unwrap();
            let m2 = mix_descriptors(&a, &b, 100.0 - p).unwrap();
            for i in 0..3 {
                assert_abs_diff_eq!(m1[i] + m2[i], a[i] + b[i], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn pca_collinear_points() {
        // points on a line in 2D: first component explains all variance
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, 2.0 * i as f64]).collect();
        let basis = pca_fit(&rows, 2).unwrap();
        let total: f64 = basis.explained_variance.iter().sum();
        assert!(basis.explained_variance[0] / total > 1.0 - 1e-9);
    }

    #[test]
    fn pca_components_orthonormal() {
        let rows: Vec<Vec<f64>> = (0..20)
            .map(|i| {
                let x = i as f64;
                vec![x.sin(), x.cos() * 2.0, x * 0.1, (x * 0.7).sin()]
            })
            .collect();
        let basis = pca_fit(&rows, 4).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let dot: f64 = basis.components[i]
                    .iter()
                    .zip(&basis.components[j])
                    .map(|(a, b)| a * b)
                    .sum();
                let expected = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(dot, expected, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn pca_full_reconstruction() {
        let rows: Vec<Vec<f64>> = (0..15)
            .map(|i| {
                let x = i as f64;
                vec![x, x * x * 0.1, (x * 0.3).sin()]
            })
            .collect();
        let basis = pca_fit(&rows, 3).unwrap();
        for row in &rows {
            let rec = basis.inverse_transform(&basis.transform(row));
            for (a, b) in row.iter().zip(&rec) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn pca_reconstruction_error_monotone_in_k() {
        let rows: Vec<Vec<f64>> = (0..25)
            .map(|i| {
                let x = i as f64;
                vec![
                    x,
                    (x * 0.5).sin() * 3.0,
                    x * 0.2 + (x * 0.9).cos(),
                    x.sqrt(),
                ]
            })
            .collect();
        let mut prev = f64::INFINITY;
        for k in 1..=4 {
            let basis = pca_fit(&rows, k).unwrap();
            let err: f64 = rows
                .iter()
                .map(|row| {
                    let rec = basis.inverse_transform(&basis.transform(row));
                    row.iter()
                        .zip(&rec)
                        .map(|(a, b)| (a - b).powi(2))
                        .sum::<f64>()
                })
                .sum();
            assert!(err <= prev + 1e-9, "k={k}: {err} > {prev}");
            prev = err;
        }
    }

    #[test]
    fn pca_degenerate_input() {
        let rows = vec![vec![1.0, 2.0]; 5];
        assert!(matches!(
            pca_fit(&rows, 1),
            Err(DescriptorError::DegenerateInput)
        ));
    }

    fn record(pct_b: f64, b: Option<&str>) -> ReactionRecord {
        ReactionRecord {
            solvent_a_name: "methanol".into(),
            solvent_a_smiles: "CO".into(),
            solvent_b_name: b.map(String::from),
            solvent_b_smiles: b.map(|_| "CCO".into()),
            pct_b,
            temperature_c: 80.0,
            residence_time_s: 120.0,
            yields: [0.5, 0.3, 0.2],
            ramp_id: "r".into(),
            drfp_hex: None,
        }
    }

    fn tiny_fp() -> Fingerprint {
        Fingerprint {
            bits: vec![true, false, false, true],
            width: 4,
            radius: 1,
        }
    }

    #[test]
    fn assemble_layout_and_width() {
        let spange = table(
            "spange",
            2,
            &[("methanol", &[1.0, 2.0]), ("ethanol", &[3.0, 4.0])],
        );
        let acs = table(
            "acs_pca",
            3,
            &[
                ("methanol", &[5.0, 6.0, 7.0]),
                ("ethanol", &[8.0, 9.0, 10.0]),
            ],
        );
        let fp = tiny_fp();
        let v =
            assemble_baseline_features(&record(0.0, Some("ethanol")), &spange, &acs, &fp).unwrap();
        assert_eq!(v.len(), 2 + 2 + 3 + 4);
        // pure-A row: spange block equals table lookup of A
        assert_eq!(&v[..2], &[120.0, 80.0]);
        assert_eq!(&v[2..4], &[1.0, 2.0]);
        assert_eq!(&v[4..7], &[5.0, 6.0, 7.0]);
        assert_eq!(&v[7..], &[1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn assemble_mixing_symmetry() {
        let spange = table(
            "spange",
            2,
            &[("methanol", &[1.0, 2.0]), ("ethanol", &[3.0, 4.0])],
        );
        let acs = table("acs_pca", 1, &[("methanol", &[5.0]), ("ethanol", &[8.0])]);
        let fp = tiny_fp();
        let mut fwd = record(30.0, Some("ethanol"));
        let v1 = assemble_baseline_features(&fwd, &spange, &acs, &fp).unwrap();
        // swap A and B, pctB -> 100 - pctB
        fwd.solvent_a_name = "ethanol".into();
        fwd.solvent_b_name = Some("methanol".into());
        fwd.pct_b = 70.0;
        let v2 = assemble_baseline_features(&fwd, &spange, &acs, &fp).unwrap();
        for (a, b) in v1.iter().zip(&v2) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn assemble_unknown_solvent_names_table() {
        let spange = table("spange", 1, &[("methanol", &[1.0])]);
        let acs = table("acs_pca", 1, &[("methanol", &[1.0])]);
        let err =
            assemble_baseline_features(&record(50.0, Some("exoticol")), &spange, &acs, &tiny_fp())
                .unwrap_err();
        match err {
            DescriptorError::UnknownSolvent { solvent, table } => {
                assert_eq!(solvent, "exoticol");
                assert_eq!(table, "spange");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn load_shipped_tables() {
        let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("resources");
        let spange = DescriptorTable::load_csv("spange", &dir.join("spange.csv")).unwrap();
        assert_eq!(spange.len(), 24);
        assert_eq!(spange.width(), 6);
        let acs = DescriptorTable::load_csv("acs", &dir.join("acs_properties.csv")).unwrap();
        assert_eq!(acs.len(), 24);
        assert_eq!(acs.width(), 10);
        assert!(spange.get("Methanol ").is_ok()); // normalization
    }
}
