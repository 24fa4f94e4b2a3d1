//! Histogram-based gradient boosted regression trees.
//!
//! Three independent ensembles, one per target. Squared loss, so the
//! per-row gradient is (prediction - target) with unit hessian; trees are
//! grown best-first under depth, leaf-count and min-samples constraints
//! with an L2 leaf penalty. Split thresholds sit at midpoints between
//! distinct feature values, which makes small-fixture splits identical to
//! an exhaustive split search.

use super::ModelError;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtConfig {
    pub iterations: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub l2: f64,
    pub max_leaves: usize,
    pub max_bins: usize,
}

impl Default for GbdtConfig {
    fn default() -> Self {
        GbdtConfig {
            iterations: 1200,
            learning_rate: 0.025,
            max_depth: 10,
            min_samples_leaf: 5,
            l2: 0.05,
            max_leaves: 100,
            max_bins: 256,
        }
    }
}

impl GbdtConfig {
    fn validate(&self) -> Result<(), ModelError> {
        if self.iterations == 0
            || self.learning_rate <= 0.0
            || self.max_depth == 0
            || self.min_samples_leaf == 0
            || self.l2 < 0.0
            || self.max_leaves < 2
            || self.max_bins < 2
        {
            return Err(ModelError::BadConfig(
                "gbdt config values must be positive".to_string(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Tree {
    nodes: Vec<TreeNode>,
}

impl Tree {
    fn predict(&self, row: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                TreeNode::Leaf { value } => return *value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if row[*feature] < *threshold {
                        *left
                    } else {
                        *right
                    };
                }
            }
        }
    }

    pub fn num_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, TreeNode::Leaf { .. }))
            .count()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GbdtModel {
    pub config: GbdtConfig,
    pub n_features: usize,
    base: [f64; 3],
    ensembles: [Vec<Tree>; 3],
}

/// Per-feature candidate thresholds: midpoints between consecutive
/// distinct values. If a feature has more distinct values than bins, an
/// evenly spaced subset of the distinct values is kept; thresholds are
/// still midpoints so they never coincide with data.
fn bin_edges(column: &[f64], max_bins: usize) -> Vec<f64> {
    let mut uniques: Vec<f64> = column.to_vec();
    uniques.sort_by(f64::total_cmp);
    uniques.dedup();
    if uniques.len() < 2 {
        return Vec::new();
    }
    let selected: Vec<f64> = if uniques.len() <= max_bins {
        uniques
    } else {
        (0..max_bins)
            .map(|i| uniques[i * (uniques.len() - 1) / (max_bins - 1)])
            .collect()
    };
    selected.windows(2).map(|w| (w[0] + w[1]) / 2.0).collect()
}

/// Index of the bin a value falls into given ascending edges; bin b means
/// value < edges[b] for all later edges (standard left-closed histogram).
fn bin_of(value: f64, edges: &[f64]) -> usize {
    edges.partition_point(|&e| e <= value)
}

struct Partition {
    rows: Vec<usize>,
    depth: usize,
    node: usize,
}

struct SplitChoice {
    feature: usize,
    edge_index: usize,
    gain: f64,
}

/// Greedy tree growth on gradients g (hessian 1 per row).
fn grow_tree(
    binned: &[Vec<usize>],
    edges: &[Vec<f64>],
    gradients: &[f64],
    rows: &[usize],
    config: &GbdtConfig,
) -> Tree {
    let lambda = config.l2;
    let leaf_value = |idx: &[usize]| -> f64 {
        let g: f64 = idx.iter().map(|&r| gradients[r]).sum();
        -g / (idx.len() as f64 + lambda)
    };
    let mut nodes = vec![TreeNode::Leaf {
        value: leaf_value(rows),
    }];
    let mut open = vec![Partition {
        rows: rows.to_vec(),
        depth: 0,
        node: 0,
    }];
    let mut leaves = 1;

    let best_split = |part: &Partition| -> Option<SplitChoice> {
        if part.depth >= config.max_depth || part.rows.len() < 2 * config.min_samples_leaf {
            return None;
        }
        let g_total: f64 = part.rows.iter().map(|&r| gradients[r]).sum();
        let n_total = part.rows.len() as f64;
        let parent_score = g_total * g_total / (n_total + lambda);
        let mut best: Option<SplitChoice> = None;
        for (f, feature_edges) in edges.iter().enumerate() {
            if feature_edges.is_empty() {
                continue;
            }
            let bins = feature_edges.len() + 1;
            let mut hist_g = vec![0.0; bins];
            let mut hist_n = vec![0usize; bins];
            for &r in &part.rows {
                let b = binned[f][r];
                hist_g[b] += gradients[r];
                hist_n[b] += 1;
            }
            let mut g_left = 0.0;
            let mut n_left = 0usize;
            for e in 0..feature_edges.len() {
                g_left += hist_g[e];
                n_left += hist_n[e];
                let n_right = part.rows.len() - n_left;
                if n_left < config.min_samples_leaf || n_right < config.min_samples_leaf {
                    continue;
                }
                let g_right = g_total - g_left;
                let gain = g_left * g_left / (n_left as f64 + lambda)
                    + g_right * g_right / (n_right as f64 + lambda)
                    - parent_score;
                if gain > 1e-12 && best.as_ref().is_none_or(|b| gain > b.gain) {
                    best = Some(SplitChoice {
                        feature: f,
                        edge_index: e,
                        gain,
                    });
                }
            }
        }
        best
    };

    // best-first growth: always expand the open partition with top gain
    while leaves < config.max_leaves {
        let mut chosen: Option<(usize, SplitChoice)> = None;
        for (i, part) in open.iter().enumerate() {
            if let Some(s) = best_split(part) {
                if chosen.as_ref().is_none_or(|(_, c)| s.gain > c.gain) {
                    chosen = Some((i, s));
                }
            }
        }
        let Some((part_idx, split)) = chosen else {
            break;
        };
        let part = open.swap_remove(part_idx);
        let threshold = edges[split.feature][split.edge_index];
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = part
            .rows
            .iter()
            .partition(|&&r| binned[split.feature][r] <= split.edge_index);
        let left = nodes.len();
        nodes.push(TreeNode::Leaf {
            value: leaf_value(&left_rows),
        });
        let right = nodes.len();
        nodes.push(TreeNode::Leaf {
            value: leaf_value(&right_rows),
        });
        nodes[part.node] = TreeNode::Split {
            feature: split.feature,
            threshold,
            left,
            right,
        };
        open.push(Partition {
            rows: left_rows,
            depth: part.depth + 1,
            node: left,
        });
        open.push(Partition {
            rows: right_rows,
            depth: part.depth + 1,
            node: right,
        });
        leaves += 1;
    }
    Tree { nodes }
}

pub fn gbdt_fit(
    features: &[Vec<f64>],
    targets: &[[f64; 3]],
    config: &GbdtConfig,
) -> Result<GbdtModel, ModelError> {
    config.validate()?;
    if features.len() != targets.len() {
        return Err(ModelError::BadInput(format!(
            "{} feature rows vs {} target rows",
            features.len(),
            targets.len()
        )));
    }
    if features.len() < 2 * config.min_samples_leaf {
        return Err(ModelError::InsufficientData {
            rows: features.len(),
            needed: 2 * config.min_samples_leaf,
        });
    }
    let n = features.len();
    let n_features = features[0].len();
    if features.iter().any(|r| r.len() != n_features) {
        return Err(ModelError::BadInput("ragged feature rows".to_string()));
    }

    // per-feature edges and per-row bin indices, computed once
    let mut edges = Vec::with_capacity(n_features);
    let mut binned = Vec::with_capacity(n_features);
    for f in 0..n_features {
        let column: Vec<f64> = features.iter().map(|r| r[f]).collect();
        let e = bin_edges(&column, config.max_bins);
        let b: Vec<usize> = column.iter().map(|&v| bin_of(v, &e)).collect();
        edges.push(e);
        binned.push(b);
    }
    let all_rows: Vec<usize> = (0..n).collect();

    let mut base = [0.0; 3];
    let mut ensembles: [Vec<Tree>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for t in 0..3 {
        base[t] = targets.iter().map(|y| y[t]).sum::<f64>() / n as f64;
        let mut preds = vec![base[t]; n];
        let mut trees = Vec::with_capacity(config.iterations);
        for _ in 0..config.iterations {
            let gradients: Vec<f64> = preds.iter().zip(targets).map(|(p, y)| p - y[t]).collect();
            let tree = grow_tree(&binned, &edges, &gradients, &all_rows, config);
            if tree.nodes.len() == 1 {
                // no split had positive gain; further rounds are identical
                let TreeNode::Leaf { value } = tree.nodes[0] else {
                    unreachable!()
                };
                if value.abs() < 1e-15 {
                    break;
                }
            }
            for (p, row) in preds.iter_mut().zip(features) {
                *p += config.learning_rate * tree.predict(row);
            }
            trees.push(tree);
        }
        ensembles[t] = trees;
    }

    Ok(GbdtModel {
        config: config.clone(),
        n_features,
        base,
        ensembles,
    })
}

pub fn gbdt_predict(model: &GbdtModel, features: &[Vec<f64>]) -> Result<Vec<[f64; 3]>, ModelError> {
    let mut out = Vec::with_capacity(features.len());
    for row in features {
        if row.len() != model.n_features {
            return Err(ModelError::BadInput(format!(
                "feature width {} does not match trained {}",
                row.len(),
                model.n_features
            )));
        }
        let mut y = model.base;
        for (t, ensemble) in model.ensembles.iter().enumerate() {
            for tree in ensemble {
                y[t] += model.config.learning_rate * tree.predict(row);
            }
        }
        out.push(y);
    }
    Ok(out)
}

impl GbdtModel {
    /// First tree's root split for target `t`, when one exists.
    pub fn first_split(&self, t: usize) -> Option<(usize, f64)> {
        match self.ensembles[t].first()?.nodes.first()? {
            TreeNode::Split {
                feature, threshold, ..
            } => Some((*feature, *threshold)),
            TreeNode::Leaf { .. } => None,
        }
    }

    pub fn num_trees(&self, t: usize) -> usize {
        self.ensembles[t].len()
    }
}
