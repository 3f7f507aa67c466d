import math

import numpy as np
import pytest

from qgnoise.graphs import BondType, MolecularGraph
from qgnoise.model import QuantumParams


def random_params(rng, n_layers=1) -> QuantumParams:
    return QuantumParams(
        element_angles=rng.uniform(-math.pi, math.pi, 4),
        theta=rng.uniform(-math.pi, math.pi, (n_layers, 4)),
        phi=rng.uniform(-math.pi, math.pi, (n_layers, 4)),
        psi=rng.uniform(-math.pi, math.pi, n_layers),
        readout_alpha=rng.uniform(-math.pi, math.pi, n_layers),
    )


def random_graph(rng, n_min=2, n_max=6) -> MolecularGraph:
    """Random connected graph over the full size range (the generator's own
    distribution starts at 4 atoms, so tiny cases are built here)."""
    n = int(rng.integers(n_min, n_max + 1))
    elements = ("C", "N", "O", "F")
    atoms = tuple(elements[k] for k in rng.integers(0, 4, size=n))
    edges = {(int(rng.integers(0, k)), k) for k in range(1, n)}
    extras = int(rng.integers(0, 2))
    pool = [(i, j) for i in range(n) for j in range(i + 1, n) if (i, j) not in edges]
    for k in range(min(extras, len(pool))):
        edges.add(pool[int(rng.integers(0, len(pool)))])
    bonds = tuple((i, j, BondType(int(rng.integers(0, 4)))) for i, j in sorted(edges))
    return MolecularGraph(atoms=atoms, bonds=bonds, target=float(rng.normal()))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
