//! SMILES parsing into annotated molecular graphs.
//!
//! Supports the organic subset, bracket atoms with charge and explicit
//! hydrogen counts, branches, ring closures (`1`..`9` and `%nn`), and
//! aromatic lowercase notation. Stereo markers (`/`, `\`, `@`) are parsed
//! and ignored with a warning. Aromaticity is taken from the lowercase
//! notation directly; no Hückel perception is performed.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SmilesError {
    #[error("empty SMILES input")]
    EmptyInput,
    #[error("unbalanced parenthesis at offset {offset}")]
    UnbalancedParenthesis { offset: usize },
    #[error("unclosed ring bond {label} opened at offset {offset}")]
    UnclosedRingBond { label: String, offset: usize },
    #[error("unknown element '{symbol}' at offset {offset}")]
    UnknownElement { symbol: String, offset: usize },
    #[error(
        "valence overflow on {symbol} at offset {offset}: bond order sum {bond_sum} exceeds {max}"
    )]
    ValenceOverflow {
        symbol: String,
        offset: usize,
        bond_sum: u32,
        max: u32,
    },
    #[error("unexpected character '{ch}' at offset {offset}")]
    UnexpectedChar { ch: char, offset: usize },
    #[error("unterminated bracket atom at offset {offset}")]
    UnterminatedBracket { offset: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Hybridization {
    Sp,
    Sp2,
    Sp3,
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BondOrder {
    Single,
    Double,
    Triple,
    Aromatic,
}

impl BondOrder {
    /// Contribution to an atom's bond-order sum, in half units so that
    /// aromatic bonds (1.5) stay integral.
    fn half_units(self) -> u32 {
        match self {
            BondOrder::Single => 2,
            BondOrder::Double => 4,
            BondOrder::Triple => 6,
            BondOrder::Aromatic => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    /// Atomic number.
    pub element: u8,
    pub formal_charge: i32,
    /// H count stated in a bracket atom; `None` means implicit.
    pub explicit_h: Option<u8>,
    pub aromatic: bool,
    pub in_ring: bool,
    /// Heavy-atom bond count; kept in sync with the adjacency lists.
    pub degree: u8,
    /// Hydrogens derived from the valence table (0 for bracket atoms).
    pub implicit_h: u8,
    pub hybridization: Hybridization,
}

impl Atom {
    /// Total hydrogen count used downstream: the bracket-stated count if
    /// present, otherwise the valence-derived one.
    pub fn hydrogen_count(&self) -> u8 {
        self.explicit_h.unwrap_or(self.implicit_h)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bond {
    pub a: usize,
    pub b: usize,
    pub order: BondOrder,
    pub conjugated: bool,
    pub in_ring: bool,
}

impl Bond {
    pub fn other(&self, atom: usize) -> usize {
        if self.a == atom {
            self.b
        } else {
            self.a
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MolecularGraph {
    pub atoms: Vec<Atom>,
    pub bonds: Vec<Bond>,
    /// Per-atom incident bond indices.
    pub adjacency: Vec<Vec<usize>>,
    pub canonical_source: String,
    pub warnings: Vec<String>,
}

impl MolecularGraph {
    pub fn num_atoms(&self) -> usize {
        self.atoms.len()
    }

    pub fn num_bonds(&self) -> usize {
        self.bonds.len()
    }

    /// Bond-order sum of one atom in half units (aromatic = 3).
    fn bond_sum_half(&self, atom: usize) -> u32 {
        self.adjacency[atom]
            .iter()
            .map(|&b| self.bonds[b].order.half_units())
            .sum()
    }
}

/// Symbol table for the elements we expect in solvents and reaction
/// components, plus enough of the periodic table to reject garbage.
const ELEMENTS: &[(&str, u8)] = &[
    ("H", 1),
    ("He", 2),
    ("Li", 3),
    ("Be", 4),
    ("B", 5),
    ("C", 6),
    ("N", 7),
    ("O", 8),
    ("F", 9),
    ("Ne", 10),
    ("Na", 11),
    ("Mg", 12),
    ("Al", 13),
    ("Si", 14),
    ("P", 15),
    ("S", 16),
    ("Cl", 17),
    ("Ar", 18),
    ("K", 19),
    ("Ca", 20),
    ("Ti", 22),
    ("Cr", 24),
    ("Mn", 25),
    ("Fe", 26),
    ("Co", 27),
    ("Ni", 28),
    ("Cu", 29),
    ("Zn", 30),
    ("Ga", 31),
    ("Ge", 32),
    ("As", 33),
    ("Se", 34),
    ("Br", 35),
    ("Kr", 36),
    ("Ru", 44),
    ("Rh", 45),
    ("Pd", 46),
    ("Ag", 47),
    ("Cd", 48),
    ("Sn", 50),
    ("Sb", 51),
    ("Te", 52),
    ("I", 53),
    ("Xe", 54),
    ("Pt", 78),
    ("Au", 79),
    ("Hg", 80),
    ("Pb", 82),
];

fn element_number(symbol: &str) -> Option<u8> {
    ELEMENTS.iter().find(|(s, _)| *s == symbol).map(|(_, z)| *z)
}

pub fn element_symbol(z: u8) -> &'static str {
    ELEMENTS
        .iter()
        .find(|(_, n)| *n == z)
        .map(|(s, _)| *s)
        .unwrap_or("?")
}

/// Implicit-hydrogen valence table. Multiple entries model hypervalent
/// states (S, P): the smallest valence that covers the explicit bonds wins.
fn default_valences(z: u8) -> &'static [u32] {
    match z {
        1 => &[1],
        5 => &[3],
        6 => &[4],
        7 => &[3],
        8 => &[2],
        9 | 17 | 35 | 53 => &[1],
        15 => &[3, 5],
        16 => &[2, 4, 6],
        _ => &[],
    }
}

struct Parser<'a> {
    bytes: &'a [u8],
    pos: usize,
    atoms: Vec<Atom>,
    atom_offsets: Vec<usize>,
    bonds: Vec<(usize, usize, BondOrder)>,
    warnings: Vec<String>,
}

#[derive(Clone, Copy)]
struct PendingBond {
    order: Option<BondOrder>,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn add_bond(&mut self, a: usize, b: usize, pending: Option<BondOrder>) {
        let order = pending.unwrap_or({
            if self.atoms[a].aromatic && self.atoms[b].aromatic {
                BondOrder::Aromatic
            } else {
                BondOrder::Single
            }
        });
        self.bonds.push((a, b, order));
    }

    fn push_atom(
        &mut self,
        offset: usize,
        element: u8,
        aromatic: bool,
        charge: i32,
        explicit_h: Option<u8>,
    ) -> usize {
        self.atom_offsets.push(offset);
        self.atoms.push(Atom {
            element,
            formal_charge: charge,
            explicit_h,
            aromatic,
            in_ring: false,
            degree: 0,
            implicit_h: 0,
            hybridization: Hybridization::Other,
        });
        self.atoms.len() - 1
    }

    /// Parse `[...]`, cursor on '['.
    fn parse_bracket(&mut self) -> Result<usize, SmilesError> {
        let open = self.pos;
        self.pos += 1; // '['
                       // isotope (ignored)
        let mut saw_isotope = false;
        while matches!(self.peek(), Some(b'0'..=b'9')) {
            saw_isotope = true;
            self.pos += 1;
        }
        if saw_isotope {
            self.warnings
                .push(format!("isotope label at offset {open} ignored"));
        }
        // element symbol, possibly aromatic lowercase
        let (symbol, aromatic) = {
            let c = self
                .peek()
                .ok_or(SmilesError::UnterminatedBracket { offset: open })?;
            if c.is_ascii_uppercase() {
                let mut sym = String::from(c as char);
                self.pos += 1;
                if let Some(n) = self.peek() {
                    if n.is_ascii_lowercase() && n != b'h' {
                        let two = format!("{}{}", sym, n as char);
                        if element_number(&two).is_some() {
                            sym = two;
                            self.pos += 1;
                        }
                    }
                }
                (sym, false)
            } else if c.is_ascii_lowercase() {
                let mut sym = String::from((c as char).to_ascii_uppercase());
                self.pos += 1;
                // aromatic two-letter forms: se, as
                if (sym == "S" || sym == "A") && self.peek() == Some(b'e') && sym == "S" {
                    sym.push('e');
                    self.pos += 1;
                } else if sym == "A" && self.peek() == Some(b's') {
                    sym.push('s');
                    self.pos += 1;
                }
                (sym, true)
            } else {
                return Err(SmilesError::UnexpectedChar {
                    ch: c as char,
                    offset: self.pos,
                });
            }
        };
        let element = element_number(&symbol).ok_or(SmilesError::UnknownElement {
            symbol: symbol.clone(),
            offset: open + 1,
        })?;
        // chirality (ignored)
        while self.peek() == Some(b'@') {
            self.pos += 1;
            self.warnings.push(format!(
                "stereo marker '@' at offset {} ignored",
                self.pos - 1
            ));
        }
        if matches!(self.peek(), Some(b'T')) {
            // @TH1 etc. -- skip letters/digits of the chirality class
            while matches!(self.peek(), Some(c) if c.is_ascii_alphanumeric()) {
                self.pos += 1;
            }
        }
        // explicit hydrogens
        let mut explicit_h: u8 = 0;
        let mut saw_h = false;
        if self.peek() == Some(b'H') {
            saw_h = true;
            self.pos += 1;
            explicit_h = 1;
            let mut digits = String::new();
            while matches!(self.peek(), Some(b'0'..=b'9')) {
                digits.push(self.peek().unwrap() as char);
                self.pos += 1;
            }
            if !digits.is_empty() {
                explicit_h = digits.parse().unwrap_or(0);
            }
        }
        // charge
        let mut charge: i32 = 0;
        while let Some(c) = self.peek() {
            match c {
                b'+' => {
                    charge += 1;
                    self.pos += 1;
                    if let Some(d) = self.peek() {
                        if d.is_ascii_digit() {
                            charge = (d - b'0') as i32;
                            self.pos += 1;
                        }
                    }
                }
                b'-' => {
                    charge -= 1;
                    self.pos += 1;
                    if let Some(d) = self.peek() {
                        if d.is_ascii_digit() {
                            charge = -((d - b'0') as i32);
                            self.pos += 1;
                        }
                    }
                }
                _ => break,
            }
        }
        if self.peek() != Some(b']') {
            return Err(SmilesError::UnterminatedBracket { offset: open });
        }
        self.pos += 1;
        Ok(self.push_atom(
            open,
            element,
            aromatic,
            charge,
            Some(if saw_h { explicit_h } else { 0 }),
        ))
    }

    /// Parse an organic-subset atom, cursor on its first letter.
    fn parse_organic(&mut self) -> Result<usize, SmilesError> {
        let start = self.pos;
        let c = self.bytes[self.pos];
        let (symbol, aromatic) = match c {
            b'C' if self.bytes.get(self.pos + 1) == Some(&b'l') => {
                self.pos += 2;
                ("Cl", false)
            }
            b'B' if self.bytes.get(self.pos + 1) == Some(&b'r') => {
                self.pos += 2;
                ("Br", false)
            }
            b'B' | b'C' | b'N' | b'O' | b'P' | b'S' | b'F' | b'I' => {
                self.pos += 1;
                (
                    match c {
                        b'B' => "B",
                        b'C' => "C",
                        b'N' => "N",
                        b'O' => "O",
                        b'P' => "P",
                        b'S' => "S",
                        b'F' => "F",
                        _ => "I",
                    },
                    false,
                )
            }
            b'b' | b'c' | b'n' | b'o' | b'p' | b's' => {
                self.pos += 1;
                (
                    match c {
                        b'b' => "B",
                        b'c' => "C",
                        b'n' => "N",
                        b'o' => "O",
                        b'p' => "P",
                        _ => "S",
                    },
                    true,
                )
            }
            _ => {
                return Err(SmilesError::UnexpectedChar {
                    ch: c as char,
                    offset: start,
                })
            }
        };
        let element = element_number(symbol).expect("organic subset symbol");
        Ok(self.push_atom(start, element, aromatic, 0, None))
    }
}

/// Parse a SMILES string into a fully annotated molecular graph: bonds,
/// rings, implicit hydrogens, hybridization, and conjugation.
pub fn parse_smiles(text: &str) -> Result<MolecularGraph, SmilesError> {
    if text.trim().is_empty() {
        return Err(SmilesError::EmptyInput);
    }
    let mut p = Parser {
        bytes: text.trim().as_bytes(),
        pos: 0,
        atoms: Vec::new(),
        atom_offsets: Vec::new(),
        bonds: Vec::new(),
        warnings: Vec::new(),
    };

    let mut prev: Option<usize> = None;
    let mut pending = PendingBond { order: None };
    // branch stack: (previous atom at '(', offset of '(')
    let mut stack: Vec<(Option<usize>, usize)> = Vec::new();
    // ring-closure label -> (atom, pending order, offset of first sight)
    let mut ring_open: std::collections::HashMap<u16, (usize, Option<BondOrder>, usize)> =
        std::collections::HashMap::new();

    while let Some(c) = p.peek() {
        let offset = p.pos;
        match c {
            b'(' => {
                stack.push((prev, offset));
                p.pos += 1;
            }
            b')' => {
                let (restored, _) = stack
                    .pop()
                    .ok_or(SmilesError::UnbalancedParenthesis { offset })?;
                prev = restored;
                p.pos += 1;
            }
            b'-' => {
                pending.order = Some(BondOrder::Single);
                p.pos += 1;
            }
            b'=' => {
                pending.order = Some(BondOrder::Double);
                p.pos += 1;
            }
            b'#' => {
                pending.order = Some(BondOrder::Triple);
                p.pos += 1;
            }
            b':' => {
                pending.order = Some(BondOrder::Aromatic);
                p.pos += 1;
            }
            b'/' | b'\\' => {
                p.warnings.push(format!(
                    "stereo bond '{}' at offset {offset} treated as single",
                    c as char
                ));
                pending.order = Some(BondOrder::Single);
                p.pos += 1;
            }
            b'.' => {
                prev = None;
                pending.order = None;
                p.pos += 1;
            }
            b'0'..=b'9' | b'%' => {
                let label: u16 = if c == b'%' {
                    p.pos += 1;
                    let mut n = 0u16;
                    let mut got = 0;
                    while got < 2 {
                        match p.peek() {
                            Some(d @ b'0'..=b'9') => {
                                n = n * 10 + (d - b'0') as u16;
                                p.pos += 1;
                                got += 1;
                            }
                            _ => return Err(SmilesError::UnexpectedChar { ch: '%', offset }),
                        }
                    }
                    n
                } else {
                    p.pos += 1;
                    (c - b'0') as u16
                };
                let cur = prev.ok_or(SmilesError::UnexpectedChar {
                    ch: c as char,
                    offset,
                })?;
                match ring_open.remove(&label) {
                    Some((other, open_order, _)) => {
                        let order = pending.order.or(open_order);
                        p.add_bond(other, cur, order);
                    }
                    None => {
                        ring_open.insert(label, (cur, pending.order, offset));
                    }
                }
                pending.order = None;
            }
            b'[' => {
                let atom = p.parse_bracket()?;
                if let Some(pr) = prev {
                    p.add_bond(pr, atom, pending.order);
                }
                pending.order = None;
                prev = Some(atom);
            }
            _ if c.is_ascii_alphabetic() => {
                let atom = p.parse_organic()?;
                if let Some(pr) = prev {
                    p.add_bond(pr, atom, pending.order);
                }
                pending.order = None;
                prev = Some(atom);
            }
            _ => {
                return Err(SmilesError::UnexpectedChar {
                    ch: c as char,
                    offset,
                })
            }
        }
    }

    if let Some((_, offset)) = stack.first() {
        return Err(SmilesError::UnbalancedParenthesis { offset: *offset });
    }
    if let Some((&label, &(_, _, offset))) = ring_open.iter().min_by_key(|(_, v)| v.2) {
        return Err(SmilesError::UnclosedRingBond {
            label: label.to_string(),
            offset,
        });
    }

    let atom_offsets = p.atom_offsets.clone();
    let mut graph = MolecularGraph {
        adjacency: vec![Vec::new(); p.atoms.len()],
        atoms: p.atoms,
        bonds: p
            .bonds
            .iter()
            .map(|&(a, b, order)| Bond {
                a,
                b,
                order,
                conjugated: false,
                in_ring: false,
            })
            .collect(),
        canonical_source: text.trim().to_string(),
        warnings: p.warnings,
    };
    for (i, bond) in graph.bonds.iter().enumerate() {
        graph.adjacency[bond.a].push(i);
        graph.adjacency[bond.b].push(i);
    }
    for i in 0..graph.atoms.len() {
        graph.atoms[i].degree = graph.adjacency[i].len() as u8;
    }

    fill_implicit_hydrogens(&mut graph, &atom_offsets)?;
    perceive_rings(&mut graph);
    assign_hybridization(&mut graph);
    assign_conjugation(&mut graph);
    Ok(graph)
}

/// Fill implicit hydrogens from the valence table. Bracket atoms keep their
/// stated H count; organic-subset atoms get the smallest standard valence
/// that covers the explicit bond order sum.
#[allow(clippy::needless_range_loop)] // the index addresses graph.atoms both ways
fn fill_implicit_hydrogens(
    graph: &mut MolecularGraph,
    offsets: &[usize],
) -> Result<(), SmilesError> {
    for i in 0..graph.atoms.len() {
        let sum_half = graph.bond_sum_half(i);
        // Round the half-unit sum up: an aromatic pair (3.0) counts as 3.
        let atom = &graph.atoms[i];
        // An odd half-unit sum happens at atoms touching an odd number of
        // aromatic bonds. For aromatic atoms (ring fusion carbons) the sum
        // rounds down: three aromatic bonds consume valence 4, not 5.
        let bond_sum = if atom.aromatic {
            sum_half / 2
        } else {
            sum_half.div_ceil(2)
        };
        if atom.explicit_h.is_some() {
            continue; // bracket atom: H count is authoritative
        }
        let valences = default_valences(atom.element);
        if valences.is_empty() {
            // Outside the table: accept with no implicit hydrogens.
            continue;
        }
        match valences.iter().find(|&&v| v >= bond_sum) {
            Some(&v) => graph.atoms[i].implicit_h = (v - bond_sum) as u8,
            None => {
                return Err(SmilesError::ValenceOverflow {
                    symbol: element_symbol(atom.element).to_string(),
                    offset: offsets[i],
                    bond_sum,
                    max: *valences.last().unwrap(),
                })
            }
        }
    }
    Ok(())
}

/// Mark ring membership on atoms and bonds. A bond is in a ring iff it is
/// not a bridge of its connected component; the union of all cycles equals
/// the set of non-bridge edges, which matches a cycle-basis union.
pub fn perceive_rings(graph: &mut MolecularGraph) {
    let n = graph.atoms.len();
    let mut disc = vec![usize::MAX; n];
    let mut low = vec![0usize; n];
    let mut timer = 0usize;
    let mut is_bridge = vec![false; graph.bonds.len()];

    // Iterative DFS to avoid recursion limits on long chains.
    for root in 0..n {
        if disc[root] != usize::MAX {
            continue;
        }
        // stack entries: (node, parent bond, next adjacency slot)
        let mut stack: Vec<(usize, usize, usize)> = vec![(root, usize::MAX, 0)];
        disc[root] = timer;
        low[root] = timer;
        timer += 1;
        while let Some(&mut (v, pbond, ref mut slot)) = stack.last_mut() {
            if *slot < graph.adjacency[v].len() {
                let bond_idx = graph.adjacency[v][*slot];
                *slot += 1;
                if bond_idx == pbond {
                    continue;
                }
                let u = graph.bonds[bond_idx].other(v);
                if disc[u] == usize::MAX {
                    disc[u] = timer;
                    low[u] = timer;
                    timer += 1;
                    stack.push((u, bond_idx, 0));
                } else {
                    low[v] = low[v].min(disc[u]);
                }
            } else {
                stack.pop();
                if let Some(&(parent, _, _)) = stack.last() {
                    low[parent] = low[parent].min(low[v]);
                    if low[v] > disc[parent] {
                        is_bridge[pbond] = true;
                    }
                }
            }
        }
    }

    for (i, bond) in graph.bonds.iter_mut().enumerate() {
        bond.in_ring = !is_bridge[i];
    }
    for i in 0..n {
        graph.atoms[i].in_ring = graph.adjacency[i].iter().any(|&b| graph.bonds[b].in_ring);
    }
}

/// Assign hybridization: sp for a triple bond or two doubles, sp2 for
/// aromatic membership or one double bond, sp3 for saturated atoms in the
/// valence table, Other for everything else.
pub fn assign_hybridization(graph: &mut MolecularGraph) {
    for i in 0..graph.atoms.len() {
        let mut doubles = 0;
        let mut triples = 0;
        let mut aromatic_bonds = 0;
        for &b in &graph.adjacency[i] {
            match graph.bonds[b].order {
                BondOrder::Double => doubles += 1,
                BondOrder::Triple => triples += 1,
                BondOrder::Aromatic => aromatic_bonds += 1,
                BondOrder::Single => {}
            }
        }
        let atom = &mut graph.atoms[i];
        atom.hybridization = if triples > 0 || doubles >= 2 {
            Hybridization::Sp
        } else if atom.aromatic || aromatic_bonds > 0 || doubles == 1 {
            Hybridization::Sp2
        } else if !default_valences(atom.element).is_empty() {
            Hybridization::Sp3
        } else {
            Hybridization::Other
        };
    }
}

/// A bond is conjugated iff it is aromatic, or both of its endpoints are
/// sp2/sp hybridized (delocalizable pi system on both sides).
fn assign_conjugation(graph: &mut MolecularGraph) {
    let hyb: Vec<Hybridization> = graph.atoms.iter().map(|a| a.hybridization).collect();
    for bond in &mut graph.bonds {
        let pi = |h: Hybridization| matches!(h, Hybridization::Sp | Hybridization::Sp2);
        bond.conjugated = bond.order == BondOrder::Aromatic || (pi(hyb[bond.a]) && pi(hyb[bond.b]));
    }
}
