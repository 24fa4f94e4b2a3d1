#!/usr/bin/env python3
"""Independent SMILES reference parser used to freeze expected values.

This is a from-first-principles reimplementation (regex tokenizer +
networkx cycle basis) kept deliberately separate from the Rust parser.
It emits atom/bond/aromatic/ring counts for the solvent roster; the
output is frozen into the Rust test suite as a fixture.

Usage: python3 tools/smiles_oracle.py crates/catechol/resources/solvents.csv
"""
import csv
import re
import sys

import networkx as nx

TOKEN = re.compile(
    r"(\[[^\]]*\]|Br|Cl|[BCNOPSFI]|[bcnops]|[-=#:/\\.]|[%]\d\d|\d|[()])"
)
BRACKET = re.compile(
    r"\[(?P<iso>\d+)?(?P<sym>[A-Z][a-z]?|[a-z]{1,2})(?P<chi>@+[A-Z]*\d*)?"
    r"(?P<h>H\d*)?(?P<chg>[+-]+\d*|\d*)?\]"
)


def parse(smiles):
    g = nx.Graph()
    prev = None
    order = None
    stack = []
    ring = {}
    idx = 0
    pos = 0
    for m in TOKEN.finditer(smiles):
        assert m.start() == pos, f"lex error at {pos} in {smiles!r}"
        pos = m.end()
        t = m.group(0)
        if t == "(":
            stack.append(prev)
        elif t == ")":
            prev = stack.pop()
        elif t in "-=#:":
            order = {"-": 1, "=": 2, "#": 3, ":": 1.5}[t]
        elif t in "/\\":
            order = 1
        elif t == ".":
            prev, order = None, None
        elif t.isdigit() or t.startswith("%"):
            label = t.lstrip("%")
            if label in ring:
                other, o2 = ring.pop(label)
                o = order or o2
                if o is None:
                    o = 1.5 if (g.nodes[prev]["ar"] and g.nodes[other]["ar"]) else 1
                g.add_edge(prev, other, order=o)
            else:
                ring[label] = (prev, order)
            order = None
        else:
            if t.startswith("["):
                b = BRACKET.match(t)
                sym = b.group("sym")
                ar = sym.islower()
            else:
                sym = t
                ar = t.islower()
            g.add_node(idx, sym=sym.capitalize(), ar=ar)
            if prev is not None:
                o = order
                if o is None:
                    o = 1.5 if (ar and g.nodes[prev]["ar"]) else 1
                g.add_edge(prev, idx, order=o)
            prev = idx
            order = None
            idx += 1
    assert not stack and not ring, f"unbalanced in {smiles!r}"
    return g


def counts(g):
    ring_edges = set()
    for cycle in nx.cycle_basis(g):
        for i, a in enumerate(cycle):
            b = cycle[(i + 1) % len(cycle)]
            ring_edges.add(frozenset((a, b)))
    # cycle_basis gives a basis; the union of *all* cycles is the set of
    # edges inside a biconnected component that contains a cycle.
    ring_edges = set()
    for comp in nx.biconnected_component_edges(g):
        comp = list(comp)
        if len(comp) > 1:  # a bridge alone is a biconnected component
            for a, b in comp:
                ring_edges.add(frozenset((a, b)))
    ring_atoms = {a for e in ring_edges for a in e}
    return dict(
        atoms=g.number_of_nodes(),
        bonds=g.number_of_edges(),
        aromatic_atoms=sum(1 for _, d in g.nodes(data=True) if d["ar"]),
        aromatic_bonds=sum(1 for *_, d in g.edges(data=True) if d["order"] == 1.5),
        ring_atoms=len(ring_atoms),
        ring_bonds=len(ring_edges),
    )


def main(path):
    w = csv.writer(sys.stdout)
    w.writerow(
        "name smiles atoms bonds aromatic_atoms aromatic_bonds ring_atoms ring_bonds".split()
    )
    with open(path) as f:
        for row in csv.DictReader(f):
            c = counts(parse(row["smiles"]))
            w.writerow([row["name"], row["smiles"]] + list(c.values()))


if __name__ == "__main__":
    main(sys.argv[1])
