//! Fixed-width numeric featurization of molecular graphs and batching.
//!
//! Node rows: element one-hot over a fixed vocabulary (with an "other"
//! slot), degree one-hot (0-6, capped), formal charge as a scaled scalar,
//! hybridization one-hot, aromatic flag, H-count one-hot (0-4, capped).
//! Edge rows: bond-type one-hot, conjugated flag, ring flag; every bond is
//! emitted in both directions.

use crate::smiles::{BondOrder, Hybridization, MolecularGraph};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FeaturizeError {
    #[error("cannot featurize a molecule with zero atoms")]
    EmptyMolecule,
    #[error("cannot batch an empty list of graphs")]
    EmptyBatch,
}

/// Element vocabulary: covers every element in the benchmark roster plus
/// a trailing "other" slot so novel solvents degrade instead of failing.
pub const ELEMENT_VOCAB: &[u8] = &[1, 5, 6, 7, 8, 9, 14, 15, 16, 17, 35, 53];

const DEGREE_BINS: usize = 7; // 0..=6, last bin capped
const HCOUNT_BINS: usize = 5; // 0..=4, last bin capped
const HYBRID_BINS: usize = 4;

/// Node feature width, constant across all molecules.
pub const F_NODE: usize = ELEMENT_VOCAB.len() + 1 + DEGREE_BINS + 1 + HYBRID_BINS + 1 + HCOUNT_BINS;
/// Edge feature width: bond-type one-hot + conjugated + ring.
pub const F_EDGE: usize = 4 + 1 + 1;

/// Row-major feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        FeatureMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }
}

/// One featurized molecule: node matrix, directed edge index pairs
/// (src, dst), and per-directed-edge feature rows.
#[derive(Debug, Clone, PartialEq)]
pub struct FeaturizedGraph {
    pub nodes: FeatureMatrix,
    pub edges: FeatureMatrix,
    /// Directed (source, destination) node index pairs, one per edge row.
    pub edge_index: Vec<(usize, usize)>,
}

/// Multiple graphs concatenated with node offsets applied.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphBatch {
    pub nodes: FeatureMatrix,
    pub edges: FeatureMatrix,
    pub edge_index: Vec<(usize, usize)>,
    /// Node -> graph id, non-decreasing.
    pub membership: Vec<usize>,
    pub num_graphs: usize,
}

fn element_slot(z: u8) -> usize {
    ELEMENT_VOCAB
        .iter()
        .position(|&e| e == z)
        .unwrap_or(ELEMENT_VOCAB.len())
}

fn hybrid_slot(h: Hybridization) -> usize {
    match h {
        Hybridization::Sp => 0,
        Hybridization::Sp2 => 1,
        Hybridization::Sp3 => 2,
        Hybridization::Other => 3,
    }
}

fn bond_slot(order: BondOrder) -> usize {
    match order {
        BondOrder::Single => 0,
        BondOrder::Double => 1,
        BondOrder::Triple => 2,
        BondOrder::Aromatic => 3,
    }
}

pub fn featurize_graph(graph: &MolecularGraph) -> Result<FeaturizedGraph, FeaturizeError> {
    if graph.num_atoms() == 0 {
        return Err(FeaturizeError::EmptyMolecule);
    }
    let mut nodes = FeatureMatrix::zeros(graph.num_atoms(), F_NODE);
    for (i, atom) in graph.atoms.iter().enumerate() {
        let row = nodes.row_mut(i);
        let mut off = 0;
        row[off + element_slot(atom.element)] = 1.0;
        off += ELEMENT_VOCAB.len() + 1;
        row[off + (atom.degree as usize).min(DEGREE_BINS - 1)] = 1.0;
        off += DEGREE_BINS;
        row[off] = atom.formal_charge as f64;
        off += 1;
        row[off + hybrid_slot(atom.hybridization)] = 1.0;
        off += HYBRID_BINS;
        row[off] = if atom.aromatic { 1.0 } else { 0.0 };
        off += 1;
        row[off + (atom.hydrogen_count() as usize).min(HCOUNT_BINS - 1)] = 1.0;
    }

    let mut edges = FeatureMatrix::zeros(graph.num_bonds() * 2, F_EDGE);
    let mut edge_index = Vec::with_capacity(graph.num_bonds() * 2);
    for (bi, bond) in graph.bonds.iter().enumerate() {
        for (k, (src, dst)) in [(bond.a, bond.b), (bond.b, bond.a)].into_iter().enumerate() {
            let row = edges.row_mut(bi * 2 + k);
            row[bond_slot(bond.order)] = 1.0;
            row[4] = if bond.conjugated { 1.0 } else { 0.0 };
            row[5] = if bond.in_ring { 1.0 } else { 0.0 };
            edge_index.push((src, dst));
        }
    }

    Ok(FeaturizedGraph {
        nodes,
        edges,
        edge_index,
    })
}

pub fn batch_graphs(graphs: &[FeaturizedGraph]) -> Result<GraphBatch, FeaturizeError> {
    if graphs.is_empty() {
        return Err(FeaturizeError::EmptyBatch);
    }
    let total_nodes: usize = graphs.iter().map(|g| g.nodes.rows).sum();
    let total_edges: usize = graphs.iter().map(|g| g.edges.rows).sum();
    let mut nodes = FeatureMatrix::zeros(total_nodes, F_NODE);
    let mut edges = FeatureMatrix::zeros(total_edges, F_EDGE);
    let mut edge_index = Vec::with_capacity(total_edges);
    let mut membership = Vec::with_capacity(total_nodes);

    let mut node_off = 0;
    let mut edge_off = 0;
    for (gid, g) in graphs.iter().enumerate() {
        nodes.data[node_off * F_NODE..(node_off + g.nodes.rows) * F_NODE]
            .copy_from_slice(&g.nodes.data);
        edges.data[edge_off * F_EDGE..(edge_off + g.edges.rows) * F_EDGE]
            .copy_from_slice(&g.edges.data);
        for &(s, d) in &g.edge_index {
            edge_index.push((s + node_off, d + node_off));
        }
        membership.extend(std::iter::repeat_n(gid, g.nodes.rows));
        node_off += g.nodes.rows;
        edge_off += g.edges.rows;
    }

    Ok(GraphBatch {
        nodes,
        edges,
        edge_index,
        membership,
        num_graphs: graphs.len(),
    })
}
