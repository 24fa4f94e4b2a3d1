//! Benchmark CSV ingestion and validation.
//!
//! The loader speaks a canonical column vocabulary; a key=value mapping
//! file translates whatever headers the distributed files actually use.
//! Yields are auto-detected as percents (max value > 1.5) and normalized
//! to fractions, with the decision echoed in the dataset metadata.

use crate::smiles;
use serde::Serialize;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("missing column '{0}' in header")]
    MissingColumn(String),
    #[error("row {row}, column '{column}': {message}")]
    RowParseError {
        row: usize,
        column: String,
        message: String,
    },
    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("solvent SMILES failed to parse at row {row}: {source}")]
    BadSolventSmiles {
        row: usize,
        source: smiles::SmilesError,
    },
    #[error("bad column mapping line {0}: expected 'canonical=actual'")]
    BadMappingLine(usize),
}

/// Canonical column names; the mapping file translates to actual headers.
pub const CANONICAL_COLUMNS: &[&str] = &[
    "solvent_a_name",
    "solvent_a_smiles",
    "solvent_b_name",
    "solvent_b_smiles",
    "pct_b",
    "temperature_c",
    "residence_time_s",
    "yield_sm",
    "yield_p2",
    "yield_p3",
    "ramp_id",
];

/// Columns that may be absent: B-side identity, ramp id, precomputed DRFP.
const OPTIONAL_COLUMNS: &[&str] = &["solvent_b_name", "solvent_b_smiles", "ramp_id", "drfp_hex"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SubsetTag {
    Mixtures,
    SingleSolvents,
    EtherTransfer,
}

impl SubsetTag {
    /// Official (row count, solvent count) when known.
    fn official_shape(self) -> Option<(usize, usize)> {
        match self {
            SubsetTag::Mixtures => Some((1227, 24)),
            SubsetTag::SingleSolvents => Some((656, 24)),
            SubsetTag::EtherTransfer => Some((283, 11)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReactionRecord {
    pub solvent_a_name: String,
    pub solvent_a_smiles: String,
    pub solvent_b_name: Option<String>,
    pub solvent_b_smiles: Option<String>,
    /// Volume percent of solvent B, 0-100.
    pub pct_b: f64,
    pub temperature_c: f64,
    pub residence_time_s: f64,
    /// Yields as fractions in [0,1]: starting material, product 2, product 3.
    pub yields: [f64; 3],
    pub ramp_id: String,
    /// Externally supplied per-row DRFP bits, hex encoded.
    pub drfp_hex: Option<String>,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub records: Vec<ReactionRecord>,
    pub subset: SubsetTag,
    /// Distinct solvent names (A and B sides), sorted.
    pub roster: Vec<String>,
    /// True when raw yields looked like percents and were divided by 100.
    pub yields_were_percent: bool,
    /// Non-fatal findings from load (e.g. roster mismatch vs Table shapes).
    pub warnings: Vec<String>,
}

/// Lowercased, trimmed solvent name used as the lookup key everywhere.
pub fn normalize_name(name: &str) -> String {
    name.trim().to_lowercase()
}

#[derive(Debug, Clone, Default)]
pub struct ColumnMapping {
    map: BTreeMap<String, String>,
}

impl ColumnMapping {
    /// Parse a key=value mapping file; '#' starts a comment.
    pub fn load(path: &Path) -> Result<Self, DataError> {
        let text = std::fs::read_to_string(path).map_err(|source| DataError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut map = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or(DataError::BadMappingLine(i + 1))?;
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
        Ok(ColumnMapping { map })
    }

    fn actual(&self, canonical: &str) -> String {
        self.map
            .get(canonical)
            .cloned()
            .unwrap_or_else(|| canonical.to_string())
    }
}

fn parse_f64(field: &str, row: usize, column: &str) -> Result<f64, DataError> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|e| DataError::RowParseError {
            row,
            column: column.to_string(),
            message: e.to_string(),
        })
}

pub fn load_dataset(
    path: &Path,
    subset: SubsetTag,
    mapping: Option<&ColumnMapping>,
) -> Result<Dataset, DataError> {
    let default_mapping = ColumnMapping::default();
    let mapping = mapping.unwrap_or(&default_mapping);
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => DataError::Io {
                path: path.display().to_string(),
                source: std::io::Error::other(e.to_string()),
            },
            _ => DataError::Csv(e),
        })?;

    let headers = reader.headers()?.clone();
    let mut col_idx: BTreeMap<&str, usize> = BTreeMap::new();
    for &canonical in CANONICAL_COLUMNS.iter().chain(&["drfp_hex"]) {
        let actual = mapping.actual(canonical);
        match headers.iter().position(|h| h == actual) {
            Some(i) => {
                col_idx.insert(canonical, i);
            }
            None if OPTIONAL_COLUMNS.contains(&canonical) => {}
            None => return Err(DataError::MissingColumn(actual)),
        }
    }

    let get = |record: &csv::StringRecord, canonical: &str| -> Option<String> {
        col_idx
            .get(canonical)
            .and_then(|&i| record.get(i))
            .map(str::to_string)
            .filter(|s| !s.is_empty())
    };

    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row?;
        let rownum = i + 2; // 1-based, after header
        let required = |canonical: &str| -> Result<String, DataError> {
            get(&row, canonical).ok_or_else(|| DataError::RowParseError {
                row: rownum,
                column: canonical.to_string(),
                message: "empty field".to_string(),
            })
        };
        let solvent_a_name = normalize_name(&required("solvent_a_name")?);
        let solvent_a_smiles = required("solvent_a_smiles")?;
        let solvent_b_name = get(&row, "solvent_b_name").map(|s| normalize_name(&s));
        let solvent_b_smiles = get(&row, "solvent_b_smiles");
        let pct_b = parse_f64(&required("pct_b")?, rownum, "pct_b")?;
        let temperature_c = parse_f64(&required("temperature_c")?, rownum, "temperature_c")?;
        let residence_time_s =
            parse_f64(&required("residence_time_s")?, rownum, "residence_time_s")?;
        let yields = [
            parse_f64(&required("yield_sm")?, rownum, "yield_sm")?,
            parse_f64(&required("yield_p2")?, rownum, "yield_p2")?,
            parse_f64(&required("yield_p3")?, rownum, "yield_p3")?,
        ];
        let ramp_id = get(&row, "ramp_id").unwrap_or_else(|| {
            // a ramp is one mixture scanned across T and residence time
            format!(
                "{}|{}|{}",
                solvent_a_name,
                solvent_b_name.as_deref().unwrap_or("-"),
                pct_b
            )
        });
        records.push(ReactionRecord {
            solvent_a_name,
            solvent_a_smiles,
            solvent_b_name,
            solvent_b_smiles,
            pct_b,
            temperature_c,
            residence_time_s,
            yields,
            ramp_id,
            drfp_hex: get(&row, "drfp_hex"),
        });
    }

    // percent auto-detection over all targets
    let max_yield = records
        .iter()
        .flat_map(|r| r.yields.iter().copied())
        .fold(f64::NEG_INFINITY, f64::max);
    let yields_were_percent = max_yield > 1.5;
    if yields_were_percent {
        for r in &mut records {
            for y in &mut r.yields {
                *y /= 100.0;
            }
        }
    }

    let mut roster: Vec<String> = records
        .iter()
        .flat_map(|r| std::iter::once(r.solvent_a_name.clone()).chain(r.solvent_b_name.clone()))
        .collect();
    roster.sort();
    roster.dedup();

    let mut warnings = Vec::new();
    if let Some((rows, solvents)) = subset.official_shape() {
        if records.len() != rows || roster.len() != solvents {
            warnings.push(format!(
                "roster mismatch: expected {rows} rows / {solvents} solvents for {subset:?}, \
                 found {} rows / {} solvents",
                records.len(),
                roster.len()
            ));
        } else {
            // official shape: every solvent SMILES must parse
            for (i, r) in records.iter().enumerate() {
                smiles::parse_smiles(&r.solvent_a_smiles)
                    .map_err(|source| DataError::BadSolventSmiles { row: i + 2, source })?;
                if let Some(s) = &r.solvent_b_smiles {
                    smiles::parse_smiles(s)
                        .map_err(|source| DataError::BadSolventSmiles { row: i + 2, source })?;
                }
            }
        }
    }

    Ok(Dataset {
        records,
        subset,
        roster,
        yields_were_percent,
        warnings,
    })
}

#[derive(Debug, Clone, Serialize, Default)]
pub struct ValidationReport {
    pub range_violations: Vec<String>,
    pub duplicate_rows: Vec<String>,
    pub unknown_solvents: Vec<String>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.range_violations.is_empty()
            && self.duplicate_rows.is_empty()
            && self.unknown_solvents.is_empty()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "validation report");
        let _ = writeln!(out, "  range violations: {}", self.range_violations.len());
        for v in &self.range_violations {
            let _ = writeln!(out, "    {v}");
        }
        let _ = writeln!(out, "  duplicate rows: {}", self.duplicate_rows.len());
        for v in &self.duplicate_rows {
            let _ = writeln!(out, "    {v}");
        }
        let _ = writeln!(out, "  unknown solvents: {}", self.unknown_solvents.len());
        for v in &self.unknown_solvents {
            let _ = writeln!(out, "    {v}");
        }
        out
    }
}

/// Report-only dataset checks: condition ranges, duplicates, and solvent
/// names absent from the supplied descriptor roster.
pub fn validate_dataset(ds: &Dataset, known_solvents: &[String]) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut seen = std::collections::HashSet::new();

    for (i, r) in ds.records.iter().enumerate() {
        let row = i + 2;
        if !(0.0..=100.0).contains(&r.pct_b) {
            report
                .range_violations
                .push(format!("row {row}: pct_b {} outside [0, 100]", r.pct_b));
        }
        if !(60.0..=120.0).contains(&r.temperature_c) {
            report.range_violations.push(format!(
                "row {row}: temperature {} outside [60, 120]",
                r.temperature_c
            ));
        }
        if !(30.0..=300.0).contains(&r.residence_time_s) {
            report.range_violations.push(format!(
                "row {row}: residence time {} outside [30, 300]",
                r.residence_time_s
            ));
        }
        for (t, y) in r.yields.iter().enumerate() {
            if !(0.0..=1.0).contains(y) || !y.is_finite() {
                report
                    .range_violations
                    .push(format!("row {row}: yield[{t}] {y} outside [0, 1]"));
            }
        }
        let key = format!(
            "{}|{}|{}|{}|{}",
            r.solvent_a_name,
            r.solvent_b_name.as_deref().unwrap_or("-"),
            r.pct_b,
            r.temperature_c,
            r.residence_time_s
        );
        if !seen.insert(key.clone()) {
            report.duplicate_rows.push(format!("row {row}: {key}"));
        }
    }

    for name in &ds.roster {
        if !known_solvents.iter().any(|k| normalize_name(k) == *name) {
            report.unknown_solvents.push(name.clone());
        }
    }
    report
}
