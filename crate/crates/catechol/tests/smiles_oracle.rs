//! The parser must agree exactly with the frozen reference counts for the
//! 24 benchmark solvents (fixtures/solvent_counts.csv, produced by an
//! independent implementation).

use catechol::smiles::{parse_smiles, BondOrder};

#[derive(Debug, PartialEq)]
struct Counts {
    atoms: usize,
    bonds: usize,
    aromatic_atoms: usize,
    aromatic_bonds: usize,
    ring_atoms: usize,
    ring_bonds: usize,
}

fn count(smiles: &str) -> Counts {
    let g = parse_smiles(smiles).unwrap_or_else(|e| panic!("parse '{smiles}': {e}"));
    Counts {
        atoms: g.num_atoms(),
        bonds: g.num_bonds(),
        aromatic_atoms: g.atoms.iter().filter(|a| a.aromatic).count(),
        aromatic_bonds: g
            .bonds
            .iter()
            .filter(|b| b.order == BondOrder::Aromatic)
            .count(),
        ring_atoms: g.atoms.iter().filter(|a| a.in_ring).count(),
        ring_bonds: g.bonds.iter().filter(|b| b.in_ring).count(),
    }
}

#[test]
fn benchmark_solvents_match_reference_counts() {
    let fixture = include_str!("fixtures/solvent_counts.csv");
    let mut checked = 0;
    for line in fixture.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), 8, "bad fixture line: {line}");
        let name = fields[0];
        let smiles = fields[1];
        let expected = Counts {
            atoms: fields[2].parse().unwrap(),
            bonds: fields[3].parse().unwrap(),
            aromatic_atoms: fields[4].parse().unwrap(),
            aromatic_bonds: fields[5].parse().unwrap(),
            ring_atoms: fields[6].parse().unwrap(),
            ring_bonds: fields[7].parse().unwrap(),
        };
        assert_eq!(count(smiles), expected, "{name} ({smiles})");
        checked += 1;
    }
    assert_eq!(checked, 24, "fixture must cover the full roster");
}

#[test]
fn reaction_molecules_parse() {
    use catechol::models::gnn::{P2_SMILES, P3_SMILES, SM_SMILES};
    // the three fixed reaction species: monoallyl ether and both isomers
    let sm = count(SM_SMILES);
    assert_eq!((sm.atoms, sm.aromatic_atoms), (11, 6));
    let p2 = count(P2_SMILES);
    assert_eq!((p2.atoms, p2.aromatic_atoms), (11, 6));
    let p3 = count(P3_SMILES);
    assert_eq!((p3.atoms, p3.aromatic_atoms), (11, 6));
}
