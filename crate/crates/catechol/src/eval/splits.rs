//! Cross-validation split construction: leave-one-solvent-out,
//! leave-one-ramp-out and a seeded random 80/20 split.

use super::EvalError;
use crate::data::Dataset;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::collections::BTreeSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Loso,
    Loro,
    Random,
}

impl std::str::FromStr for Protocol {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, EvalError> {
        match s.to_lowercase().as_str() {
            "loso" => Ok(Protocol::Loso),
            "loro" => Ok(Protocol::Loro),
            "random" => Ok(Protocol::Random),
            other => Err(EvalError::BadProtocol(other.to_string())),
        }
    }
}

impl std::fmt::Display for Protocol {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Protocol::Loso => "loso",
            Protocol::Loro => "loro",
            Protocol::Random => "random",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Fold {
    /// Held-out group key: solvent name, ramp id or "random".
    pub group: String,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SplitPlan {
    pub protocol: Protocol,
    pub folds: Vec<Fold>,
}

/// A record touches a solvent if it appears on either side of the mix.
fn touches_solvent(ds: &Dataset, row: usize, solvent: &str) -> bool {
    let r = &ds.records[row];
    r.solvent_a_name == solvent || r.solvent_b_name.as_deref() == Some(solvent)
}

pub fn make_splits(ds: &Dataset, protocol: Protocol, seed: u64) -> Result<SplitPlan, EvalError> {
    let n = ds.records.len();
    let folds = match protocol {
        Protocol::Loso => {
            if ds.roster.len() < 2 {
                return Err(EvalError::TooFewGroups {
                    protocol: "loso",
                    found: ds.roster.len(),
                });
            }
            ds.roster
                .iter()
                .map(|solvent| {
                    let (test, train): (Vec<usize>, Vec<usize>) =
                        (0..n).partition(|&i| touches_solvent(ds, i, solvent));
                    Fold {
                        group: solvent.clone(),
                        train,
                        test,
                    }
                })
                .filter(|f| !f.test.is_empty() && !f.train.is_empty())
                .collect::<Vec<_>>()
        }
        Protocol::Loro => {
            let ramps: BTreeSet<String> = ds.records.iter().map(|r| r.ramp_id.clone()).collect();
            if ramps.len() < 2 {
                return Err(EvalError::TooFewGroups {
                    protocol: "loro",
                    found: ramps.len(),
                });
            }
            ramps
                .into_iter()
                .map(|ramp| {
                    let (test, train): (Vec<usize>, Vec<usize>) =
                        (0..n).partition(|&i| ds.records[i].ramp_id == ramp);
                    Fold {
                        group: ramp,
                        train,
                        test,
                    }
                })
                .collect()
        }
        Protocol::Random => {
            if n < 5 {
                return Err(EvalError::TooFewGroups {
                    protocol: "random",
                    found: n,
                });
            }
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let test_len = (n / 5).max(1);
            let mut test = order[..test_len].to_vec();
            let mut train = order[test_len..].to_vec();
            test.sort_unstable();
            train.sort_unstable();
            vec![Fold {
                group: "random".to_string(),
                train,
                test,
            }]
        }
    };
    if folds.len() < 2 && protocol != Protocol::Random {
        return Err(EvalError::TooFewGroups {
            protocol: match protocol {
                Protocol::Loso => "loso",
                Protocol::Loro => "loro",
                Protocol::Random => "random",
            },
            found: folds.len(),
        });
    }
    Ok(SplitPlan { protocol, folds })
}

/// Carve a grouped validation subset (about 15% of rows, whole ramps at a
/// time) out of a fold's training rows for early stopping.
pub fn carve_validation(ds: &Dataset, train: &[usize], seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut ramps: Vec<String> = train
        .iter()
        .map(|&i| ds.records[i].ramp_id.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if ramps.len() < 2 {
        // cannot hold out whole groups: fall back to a plain row split
        let cut = (train.len() * 85) / 100;
        return (train[..cut.max(1)].to_vec(), train[cut.max(1)..].to_vec());
    }
    ramps.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let target = (train.len() * 15) / 100;
    let mut val_ramps = BTreeSet::new();
    let mut val_rows = 0;
    for ramp in &ramps {
        if val_rows >= target.max(1) || val_ramps.len() + 1 >= ramps.len() {
            break;
        }
        val_rows += train
            .iter()
            .filter(|&&i| ds.records[i].ramp_id == *ramp)
            .count();
        val_ramps.insert(ramp.clone());
    }
    let (val, fit): (Vec<usize>, Vec<usize>) = train
        .iter()
        .partition(|&&i| val_ramps.contains(&ds.records[i].ramp_id));
    (fit, val)
}
