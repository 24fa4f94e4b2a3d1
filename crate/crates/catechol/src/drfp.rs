//! Differential reaction fingerprints.
//!
//! Circular substructure keys are enumerated per atom at radii 0..=r, the
//! symmetric difference between the reactant and product sides is taken,
//! and each surviving key sets one bit at `fnv1a64(key) % width`. The hash
//! is fixed (FNV-1a, 64-bit) so fingerprints are bit-identical across runs
//! and platforms.

use crate::smiles::{self, BondOrder, MolecularGraph, SmilesError};
use std::collections::HashSet;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DrfpError {
    #[error("failed to parse {side} SMILES '{smiles}': {source}")]
    Parse {
        side: &'static str,
        smiles: String,
        source: SmilesError,
    },
    #[error("fingerprint width {0} is not a power of two")]
    WidthNotPowerOfTwo(usize),
    #[error("bad fingerprint hex at position {0}")]
    BadHex(usize),
}

pub const DEFAULT_WIDTH: usize = 2048;
pub const DEFAULT_RADIUS: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fingerprint {
    pub bits: Vec<bool>,
    pub width: usize,
    pub radius: usize,
}

impl Fingerprint {
    pub fn popcount(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Bits as 0.0/1.0 reals for feature concatenation.
    pub fn as_reals(&self) -> Vec<f64> {
        self.bits
            .iter()
            .map(|&b| if b { 1.0 } else { 0.0 })
            .collect()
    }

    /// Hex encoding, most-significant bit first, for the fingerprint CSV.
    pub fn to_hex(&self) -> String {
        let mut out = String::with_capacity(self.width / 4);
        for chunk in self.bits.chunks(4) {
            let mut nibble = 0u8;
            for (i, &b) in chunk.iter().enumerate() {
                if b {
                    nibble |= 1 << (3 - i);
                }
            }
            out.push(char::from_digit(nibble as u32, 16).unwrap());
        }
        out
    }

    /// Inverse of [`to_hex`](Self::to_hex). The radius is not recoverable
    /// from hex, so the caller supplies the one used upstream.
    pub fn from_hex(hex: &str, radius: usize) -> Result<Fingerprint, DrfpError> {
        let width = hex.len() * 4;
        if !width.is_power_of_two() {
            return Err(DrfpError::WidthNotPowerOfTwo(width));
        }
        let mut bits = Vec::with_capacity(width);
        for (i, c) in hex.chars().enumerate() {
            let nibble = c.to_digit(16).ok_or(DrfpError::BadHex(i))? as u8;
            for b in 0..4 {
                bits.push(nibble & (1 << (3 - b)) != 0);
            }
        }
        Ok(Fingerprint {
            bits,
            width,
            radius,
        })
    }
}

/// FNV-1a 64-bit. Fixed constants; this is the documented fingerprint hash.
pub fn fnv1a64(key: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in key.as_bytes() {
        h ^= *byte as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn atom_invariant(graph: &MolecularGraph, atom: usize) -> String {
    let a = &graph.atoms[atom];
    format!(
        "z{}c{}h{}d{}a{}r{}",
        a.element,
        a.formal_charge,
        a.hydrogen_count(),
        a.degree,
        a.aromatic as u8,
        a.in_ring as u8
    )
}

fn bond_symbol(order: BondOrder) -> char {
    match order {
        BondOrder::Single => '-',
        BondOrder::Double => '=',
        BondOrder::Triple => '#',
        BondOrder::Aromatic => ':',
    }
}

/// Canonical keys of every atom-centered environment at radii 0..=radius.
///
/// A key is the sorted-neighbor unfolding of the environment: radius-0 keys
/// are atom invariants; a radius-k key appends the lexicographically sorted
/// list of (bond symbol, neighbor radius-(k-1) key) pairs. Two atoms with
/// isomorphic rooted environments always produce equal keys.
pub fn circular_substructures(graph: &MolecularGraph, radius: usize) -> HashSet<String> {
    let n = graph.num_atoms();
    let mut prev: Vec<String> = (0..n).map(|i| atom_invariant(graph, i)).collect();
    let mut keys: HashSet<String> = prev.iter().cloned().collect();

    for _ in 1..=radius {
        let mut next = Vec::with_capacity(n);
        for v in 0..n {
            let mut nbrs: Vec<String> = graph.adjacency[v]
                .iter()
                .map(|&b| {
                    let bond = &graph.bonds[b];
                    format!("{}{}", bond_symbol(bond.order), prev[bond.other(v)])
                })
                .collect();
            nbrs.sort();
            next.push(format!("{}({})", prev[v], nbrs.join(",")));
        }
        keys.extend(next.iter().cloned());
        prev = next;
    }
    keys
}

fn side_substructures(
    side: &'static str,
    smiles_list: &[&str],
    radius: usize,
) -> Result<HashSet<String>, DrfpError> {
    let mut keys = HashSet::new();
    for s in smiles_list {
        let graph = smiles::parse_smiles(s).map_err(|source| DrfpError::Parse {
            side,
            smiles: s.to_string(),
            source,
        })?;
        keys.extend(circular_substructures(&graph, radius));
    }
    Ok(keys)
}

/// Symmetric-difference keys between the two sides of a reaction.
pub fn differential_keys(
    reactants: &[&str],
    products: &[&str],
    radius: usize,
) -> Result<HashSet<String>, DrfpError> {
    let r = side_substructures("reactant", reactants, radius)?;
    let p = side_substructures("product", products, radius)?;
    Ok(r.symmetric_difference(&p).cloned().collect())
}

pub fn drfp_fingerprint(
    reactants: &[&str],
    products: &[&str],
    radius: usize,
    width: usize,
) -> Result<Fingerprint, DrfpError> {
    if !width.is_power_of_two() {
        return Err(DrfpError::WidthNotPowerOfTwo(width));
    }
    let keys = differential_keys(reactants, products, radius)?;
    let mut bits = vec![false; width];
    for key in &keys {
        bits[(fnv1a64(key) % width as u64) as usize] = true;
    }
    Ok(Fingerprint {
        bits,
        width,
        radius,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smiles::parse_smiles;

    #[test]
    fn single_atom_radius_zero() {
        let g = parse_smiles("C").unwrap();
        assert_eq!(circular_substructures(&g, 0).len(), 1);
    }

    #[test]
    fn ethane_symmetric_atoms_share_key() {
        let g = parse_smiles("CC").unwrap();
        assert_eq!(circular_substructures(&g, 0).len(), 1);
        assert_eq!(circular_substructures(&g, 1).len(), 2);
    }

    #[test]
    fn identical_sides_all_zero() {
        let fp = drfp_fingerprint(&["CCO"], &["CCO"], 3, 2048).unwrap();
        assert_eq!(fp.popcount(), 0);
        assert!(fp.to_hex().chars().all(|c| c == '0'));
    }

    #[test]
    fn symmetry_of_sides() {
        let a = drfp_fingerprint(&["CCO", "CC(C)=O"], &["c1ccccc1O"], 3, 2048).unwrap();
        let b = drfp_fingerprint(&["c1ccccc1O"], &["CCO", "CC(C)=O"], 3, 2048).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn spectator_invariance() {
        // A spectator cancels exactly when its keys do not collide with
        // keys unique to one side; water shares no environment with the
        // ethanol oxidation below.
        let without = drfp_fingerprint(&["CCO"], &["CC=O"], 3, 2048).unwrap();
        let with = drfp_fingerprint(&["CCO", "O"], &["CC=O", "O"], 3, 2048).unwrap();
        assert_eq!(without, with);
    }

    #[test]
    fn determinism() {
        let a = drfp_fingerprint(&["C=CCOc1ccccc1O"], &["C=CCc1ccccc1O"], 3, 2048).unwrap();
        let b = drfp_fingerprint(&["C=CCOc1ccccc1O"], &["C=CCc1ccccc1O"], 3, 2048).unwrap();
        assert_eq!(a.to_hex(), b.to_hex());
        assert!(a.popcount() > 0);
    }

    #[test]
    fn width_must_be_power_of_two() {
        assert_eq!(
            drfp_fingerprint(&["C"], &["C"], 1, 100).unwrap_err(),
            DrfpError::WidthNotPowerOfTwo(100)
        );
    }

    #[test]
    fn parse_error_names_side() {
        let err = drfp_fingerprint(&["C("], &["C"], 1, 2048).unwrap_err();
        assert!(matches!(
            err,
            DrfpError::Parse {
                side: "reactant",
                ..
            }
        ));
    }

    #[test]
    fn hex_roundtrip_width() {
        let fp = drfp_fingerprint(&["CCO"], &["CC=O"], 2, 512).unwrap();
        assert_eq!(fp.to_hex().len(), 512 / 4);
        assert_eq!(Fingerprint::from_hex(&fp.to_hex(), 2).unwrap(), fp);
    }

    #[test]
    fn from_hex_rejects_garbage() {
        assert!(matches!(
            Fingerprint::from_hex("0g", 3),
            Err(DrfpError::BadHex(1))
        ));
    }
}
