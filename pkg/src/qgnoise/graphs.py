"""Molecular graph data model, JSONL ingestion, deterministic splitting, synthetic generation.

A graph is a small set of typed atoms (C/N/O/F) joined by typed bonds
(single/aromatic/double/triple) with one scalar regression target. Graphs are
capped at 11 atoms so every molecule fits the 12-qubit circuit layout (11 atom
qubits plus one readout qubit).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

ELEMENTS = ("C", "N", "O", "F")
MAX_ATOMS = 11


class BondType(IntEnum):
    """Chemical bond categories; the integer value is the parameter index."""

    SINGLE = 0
    AROMATIC = 1
    DOUBLE = 2
    TRIPLE = 3


BOND_NAMES = {
    "single": BondType.SINGLE,
    "aromatic": BondType.AROMATIC,
    "double": BondType.DOUBLE,
    "triple": BondType.TRIPLE,
}
_BOND_STRINGS = {v: k for k, v in BOND_NAMES.items()}

# Planted synthetic-target constants. The target depends on bond-type counts
# and element-weighted degrees, so fitting it requires both the bond-type
# circuit parameters and the element encoding.
BOND_WEIGHTS = {
    BondType.SINGLE: 0.9,
    BondType.AROMATIC: 0.45,
    BondType.DOUBLE: 1.2,
    BondType.TRIPLE: 0.6,
}
ELEMENT_WEIGHTS = {"C": 2.0, "N": -1.5, "O": 3.0, "F": -2.5}
TARGET_SCALE = 4.0
TARGET_CENTER = 7.5


class DatasetError(ValueError):
    """A dataset record or file violates the graph schema."""


@dataclass(frozen=True)
class MolecularGraph:
    """Connected undirected graph of typed atoms and bonds with a scalar target."""

    atoms: tuple[str, ...]
    bonds: tuple[tuple[int, int, BondType], ...]
    target: float

    def __post_init__(self):
        _validate_graph(self.atoms, self.bonds, self.target)

    @property
    def n_atoms(self) -> int:
        return len(self.atoms)

    @property
    def n_bonds(self) -> int:
        return len(self.bonds)

    def degrees(self) -> list[int]:
        deg = [0] * self.n_atoms
        for i, j, _ in self.bonds:
            deg[i] += 1
            deg[j] += 1
        return deg


def _validate_graph(atoms, bonds, target) -> None:
    if not 1 <= len(atoms) <= MAX_ATOMS:
        raise DatasetError(
            f"atom count {len(atoms)} exceeds qubit budget {MAX_ATOMS}"
            if len(atoms) > MAX_ATOMS
            else "graph has no atoms"
        )
    for a in atoms:
        if a not in ELEMENTS:
            raise DatasetError(f"unknown element {a!r}; expected one of {ELEMENTS}")
    seen = set()
    for i, j, t in bonds:
        if not isinstance(t, BondType):
            raise DatasetError(f"bond type {t!r} is not a BondType")
        if not (0 <= i < len(atoms)) or not (0 <= j < len(atoms)):
            raise DatasetError(f"bond ({i}, {j}) references a missing atom")
        if i >= j:
            raise DatasetError(f"self-loop / invalid bond ({i}, {j}); bonds require i < j")
        if (i, j) in seen:
            raise DatasetError(f"duplicate bond ({i}, {j})")
        seen.add((i, j))
    if not _is_connected(len(atoms), bonds):
        raise DatasetError("graph is disconnected")
    if not math.isfinite(target):
        raise DatasetError(f"target {target!r} is not finite")


def _is_connected(n: int, bonds) -> bool:
    if n == 1:
        return True
    adj: list[list[int]] = [[] for _ in range(n)]
    for i, j, _ in bonds:
        adj[i].append(j)
        adj[j].append(i)
    seen = {0}
    stack = [0]
    while stack:
        u = stack.pop()
        for v in adj[u]:
            if v not in seen:
                seen.add(v)
                stack.append(v)
    return len(seen) == n


def graph_from_record(record: dict) -> MolecularGraph:
    """Build a graph from one decoded JSONL record."""
    try:
        atoms = tuple(record["atoms"])
        raw_bonds = record["bonds"]
        target = float(record["target"])
    except (KeyError, TypeError, ValueError) as exc:
        raise DatasetError(f"record missing or malformed field: {exc}") from exc
    bonds = []
    for entry in raw_bonds:
        if len(entry) != 3:
            raise DatasetError(f"bond entry {entry!r} must be [i, j, type]")
        i, j, name = entry
        if name not in BOND_NAMES:
            raise DatasetError(f"unknown bond type {name!r}")
        bonds.append((int(i), int(j), BOND_NAMES[name]))
    return MolecularGraph(atoms=atoms, bonds=tuple(bonds), target=target)


def graph_to_record(graph: MolecularGraph) -> dict:
    """Inverse of graph_from_record."""
    return {
        "atoms": list(graph.atoms),
        "bonds": [[i, j, _BOND_STRINGS[t]] for i, j, t in graph.bonds],
        "target": graph.target,
    }


def parse_dataset(path) -> list[MolecularGraph]:
    """Read a JSON-lines dataset file, one graph per line; blank lines are skipped."""
    graphs = []
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"line {lineno}: malformed JSON ({exc.msg})") from exc
            try:
                graphs.append(graph_from_record(record))
            except DatasetError as exc:
                raise DatasetError(f"line {lineno}: {exc}") from exc
    return graphs


def write_dataset(graphs, path) -> None:
    """Write graphs as UTF-8 JSON lines with LF endings."""
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        for graph in graphs:
            handle.write(json.dumps(graph_to_record(graph)) + "\n")


@dataclass(frozen=True)
class DatasetSplit:
    train: list[MolecularGraph]
    validation: list[MolecularGraph]
    test: list[MolecularGraph]
    split_seed: int


def split_dataset(graphs, ratios=(0.8, 0.1, 0.1), seed: int = 0) -> DatasetSplit:
    """Deterministic 80/10/10 shuffle-split; identical seed gives identical splits."""
    n = len(graphs)
    if n < 10:
        raise DatasetError(f"need at least 10 graphs to split, got {n}")
    if len(ratios) != 3 or abs(sum(ratios) - 1.0) > 1e-9 or min(ratios) <= 0:
        raise DatasetError(f"ratios {ratios!r} must be three positive fractions summing to 1")
    order = np.random.default_rng(seed).permutation(n)
    n_train = int(math.floor(ratios[0] * n))
    n_val = int(math.floor(ratios[1] * n))
    if n_train == 0 or n_val == 0 or n_train + n_val >= n:
        raise DatasetError(f"{n} graphs cannot populate every split at ratios {ratios!r}")
    train = [graphs[k] for k in order[:n_train]]
    val = [graphs[k] for k in order[n_train : n_train + n_val]]
    test = [graphs[k] for k in order[n_train + n_val :]]
    return DatasetSplit(train=train, validation=val, test=test, split_seed=seed)


def planted_target(atoms, bonds) -> float:
    """Deterministic target function used by the synthetic generator.

    raw = 2 + sum of bond-type weights + 0.1 * sum of degree-weighted element
    weights; the centered tanh squash bounds targets inside (-4, 4).
    """
    deg = [0] * len(atoms)
    raw = 2.0
    for i, j, t in bonds:
        raw += BOND_WEIGHTS[t]
        deg[i] += 1
        deg[j] += 1
    for a, elem in enumerate(atoms):
        raw += 0.1 * deg[a] * ELEMENT_WEIGHTS[elem]
    return TARGET_SCALE * math.tanh((raw - TARGET_CENTER) / TARGET_SCALE)


def permute_graph(graph: MolecularGraph, perm) -> MolecularGraph:
    """Relabel nodes: atom a moves to index perm[a]; bonds are renormalized to i < j."""
    perm = list(perm)
    if sorted(perm) != list(range(graph.n_atoms)):
        raise ValueError(f"perm {perm!r} is not a permutation of 0..{graph.n_atoms - 1}")
    atoms = [None] * graph.n_atoms
    for a, elem in enumerate(graph.atoms):
        atoms[perm[a]] = elem
    bonds = tuple(
        sorted((min(perm[i], perm[j]), max(perm[i], perm[j]), t) for i, j, t in graph.bonds)
    )
    return MolecularGraph(atoms=tuple(atoms), bonds=bonds, target=graph.target)


def _max_extra_edges(n: int) -> int:
    # Keep single-layer circuits at or under 130 gates: 1 + 2n + 9* n_bonds.
    budget = (129 - 2 * n) // 9 - (n - 1)
    return max(0, min(2, n * (n - 1) // 2 - (n - 1), budget))


def generate_synthetic(count: int, seed: int, max_atoms: int = MAX_ATOMS) -> list[MolecularGraph]:
    """Generate connected random graphs (spanning tree plus extra edges) with planted targets.

    Sizes are drawn from the molecule-like band of 4 to 9 heavy atoms (clipped
    by max_atoms), atoms are listed in canonical element order, and elements
    and bond types are uniform.
    """
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    if not 2 <= max_atoms <= MAX_ATOMS:
        raise ValueError(f"max_atoms must be in [2, {MAX_ATOMS}], got {max_atoms}")
    lo = min(4, max_atoms)
    hi = min(9, max_atoms)
    rng = np.random.default_rng(seed)
    graphs = []
    for _ in range(count):
        n = int(rng.integers(lo, hi + 1))
        atoms = tuple(
            sorted((ELEMENTS[k] for k in rng.integers(0, len(ELEMENTS), size=n)),
                   key=ELEMENTS.index)
        )
        edges = set()
        for node in range(1, n):
            parent = int(rng.integers(0, node))
            edges.add((parent, node))
        candidates = [
            (i, j) for i in range(n) for j in range(i + 1, n) if (i, j) not in edges
        ]
        n_extra = int(rng.integers(0, _max_extra_edges(n) + 1))
        if n_extra and candidates:
            picks = rng.choice(len(candidates), size=min(n_extra, len(candidates)), replace=False)
            for k in sorted(int(p) for p in picks):
                edges.add(candidates[k])
        bonds = tuple(
            (i, j, BondType(int(rng.integers(0, 4)))) for i, j in sorted(edges)
        )
        graphs.append(
            MolecularGraph(atoms=atoms, bonds=bonds, target=planted_target(atoms, bonds))
        )
    return graphs
