"""Equivariant quantum graph circuit and the classical regression head.

Circuit layout for a molecule (master/readout qubit fixed at index 11):
  1. H on the master qubit,
  2. one element-encoding RY per atom qubit,
  3. per layer: bonds grouped by type in the fixed order single, aromatic,
     double, triple; each bond (i, j) of type t applies the two-qubit block
     V_i V_j RZZ(psi) V_i' V_j' with V = RZ(phi_t) RY(theta_t),
  4. per layer: one shared-angle CRY from every atom qubit onto the master.

The per-atom V blocks are node-local, the RZZ core is symmetric, the type
order never depends on node labels, and the readout angle is shared, so
relabeling atoms permutes the per-atom features and leaves the master feature
unchanged.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import backend
from .graphs import ELEMENTS, BondType, MolecularGraph
from .simulator import GateOp

FEATURE_DIM = 12
N_QUBITS = 12
MASTER_QUBIT = 11
BOND_TYPE_ORDER = (BondType.SINGLE, BondType.AROMATIC, BondType.DOUBLE, BondType.TRIPLE)
PARAMS_PER_LAYER = 10  # 4 theta + 4 phi + psi + readout alpha

CHECKPOINT_FORMAT = "qgnoise-checkpoint/1"


@dataclass(frozen=True)
class QuantumParams:
    """Trainable circuit angles: element encoding plus per-layer bond blocks."""

    element_angles: np.ndarray          # (4,) one RY angle per element
    theta: np.ndarray                   # (L, 4) per bond type
    phi: np.ndarray                     # (L, 4) per bond type
    psi: np.ndarray                     # (L,) layer-shared entangling angle
    readout_alpha: np.ndarray           # (L,) shared CRY angle onto the master

    def __post_init__(self):
        for name in ("element_angles", "theta", "phi", "psi", "readout_alpha"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        L = self.theta.shape[0]
        if L < 1:
            raise ValueError("need at least one layer")
        shapes = {
            "element_angles": (4,),
            "theta": (L, 4),
            "phi": (L, 4),
            "psi": (L,),
            "readout_alpha": (L,),
        }
        for name, want in shapes.items():
            arr = getattr(self, name)
            if arr.shape != want:
                raise ValueError(f"{name} has shape {arr.shape}, expected {want}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite entries")

    @property
    def n_layers(self) -> int:
        return int(self.theta.shape[0])

    @property
    def n_params(self) -> int:
        return 4 + PARAMS_PER_LAYER * self.n_layers

    def to_vector(self) -> np.ndarray:
        """Flat layout: elements, then per layer theta[4], phi[4], psi, alpha."""
        parts = [self.element_angles]
        for l in range(self.n_layers):
            parts.extend([self.theta[l], self.phi[l], [self.psi[l]], [self.readout_alpha[l]]])
        return np.concatenate([np.asarray(p, dtype=np.float64) for p in parts])

    @classmethod
    def from_vector(cls, vec: np.ndarray, n_layers: int) -> "QuantumParams":
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (4 + PARAMS_PER_LAYER * n_layers,):
            raise ValueError(f"vector of {vec.shape} does not match {n_layers} layer(s)")
        theta = np.empty((n_layers, 4))
        phi = np.empty((n_layers, 4))
        psi = np.empty(n_layers)
        alpha = np.empty(n_layers)
        for l in range(n_layers):
            base = 4 + PARAMS_PER_LAYER * l
            theta[l] = vec[base : base + 4]
            phi[l] = vec[base + 4 : base + 8]
            psi[l] = vec[base + 8]
            alpha[l] = vec[base + 9]
        return cls(vec[:4].copy(), theta, phi, psi, alpha)


def param_index(family: tuple, n_layers: int) -> int:
    """Flat-vector index of a parameter family tag."""
    kind = family[0]
    if kind == "element":
        return family[1]
    l = family[1]
    if not 0 <= l < n_layers:
        raise ValueError(f"layer {l} out of range")
    base = 4 + PARAMS_PER_LAYER * l
    if kind == "theta":
        return base + family[2]
    if kind == "phi":
        return base + 4 + family[2]
    if kind == "psi":
        return base + 8
    if kind == "alpha":
        return base + 9
    raise ValueError(f"unknown parameter family {family!r}")


def readout_param_indices(n_layers: int) -> frozenset[int]:
    """Flat indices of the CRY readout angles (gradients need the FD fallback)."""
    return frozenset(4 + PARAMS_PER_LAYER * l + 9 for l in range(n_layers))


def _circuit_events(graph: MolecularGraph, n_layers: int, master: int):
    """Yield (kind, qa, qb, family, sign) for every gate, in application order."""
    yield ("H", master, -1, None, 0.0)
    for a, elem in enumerate(graph.atoms):
        yield ("RY", a, -1, ("element", ELEMENTS.index(elem)), 1.0)
    for l in range(n_layers):
        for t in BOND_TYPE_ORDER:
            th = ("theta", l, int(t))
            ph = ("phi", l, int(t))
            ps = ("psi", l)
            for i, j, bond_type in graph.bonds:
                if bond_type != t:
                    continue
                yield ("RY", i, -1, th, 1.0)
                yield ("RZ", i, -1, ph, 1.0)
                yield ("RY", j, -1, th, 1.0)
                yield ("RZ", j, -1, ph, 1.0)
                yield ("RZZ", i, j, ps, 1.0)
                yield ("RZ", i, -1, ph, -1.0)
                yield ("RY", i, -1, th, -1.0)
                yield ("RZ", j, -1, ph, -1.0)
                yield ("RY", j, -1, th, -1.0)
        al = ("alpha", l)
        for a in range(graph.n_atoms):
            yield ("CRY", a, master, al, 1.0)


def build_circuit(graph: MolecularGraph, params: QuantumParams) -> list[GateOp]:
    """Gate list on the full 12-qubit register (master qubit = index 11)."""
    vec = params.to_vector()
    gates = []
    for kind, qa, qb, family, sign in _circuit_events(graph, params.n_layers, MASTER_QUBIT):
        if family is None:
            gates.append(GateOp(kind, (qa,)))
            continue
        angle = float(sign * vec[param_index(family, params.n_layers)])
        qubits = (qa,) if qb < 0 else (qa, qb)
        gates.append(GateOp(kind, qubits, angle, param_tag=(*family, int(sign))))
    return gates


def gate_count(graph: MolecularGraph, depth: int = 1) -> int:
    """Exact gate count: H + element RYs + depth * (9 per bond + CRY per atom)."""
    if depth < 1:
        raise ValueError(f"depth must be >= 1, got {depth}")
    return 1 + graph.n_atoms + depth * (9 * graph.n_bonds + graph.n_atoms)


_OPCODE = {"H": 0, "RY": 1, "RZ": 2, "RZZ": 3, "CRY": 4}


@dataclass(frozen=True)
class CircuitProgram:
    """Compiled gate arrays for the kernel backends.

    Compact programs keep only the atom qubits plus the master (remapped to
    index n_atoms); untouched qubits factor out of every expectation exactly.
    """

    n_qubits: int
    n_atoms: int
    n_layers: int
    master: int
    ops: np.ndarray
    qa: np.ndarray
    qb: np.ndarray
    pidx: np.ndarray
    sign: np.ndarray
    _occ: dict = field(default_factory=dict, repr=False, compare=False)

    def __len__(self) -> int:
        return int(self.ops.shape[0])

    def occurrences(self, flat_index: int) -> np.ndarray:
        """Gate positions that read the given flat parameter index."""
        if flat_index not in self._occ:
            self._occ[flat_index] = np.flatnonzero(self.pidx == flat_index)
        return self._occ[flat_index]

    def active_params(self) -> np.ndarray:
        """Sorted flat indices of parameters that appear in this circuit."""
        return np.unique(self.pidx[self.pidx >= 0])


def compile_program(graph: MolecularGraph, n_layers: int, compact: bool = True) -> CircuitProgram:
    master = graph.n_atoms if compact else MASTER_QUBIT
    n_qubits = graph.n_atoms + 1 if compact else N_QUBITS
    events = list(_circuit_events(graph, n_layers, master))
    n = len(events)
    ops = np.empty(n, dtype=np.int64)
    qa = np.empty(n, dtype=np.int64)
    qb = np.empty(n, dtype=np.int64)
    pidx = np.empty(n, dtype=np.int64)
    sign = np.empty(n, dtype=np.float64)
    for g, (kind, a, b, family, s) in enumerate(events):
        ops[g] = _OPCODE[kind]
        qa[g] = a
        qb[g] = b
        pidx[g] = -1 if family is None else param_index(family, n_layers)
        sign[g] = s
    return CircuitProgram(n_qubits, graph.n_atoms, n_layers, master, ops, qa, qb, pidx, sign)


def program_features(program: CircuitProgram, param_vector: np.ndarray,
                     buffer: np.ndarray | None = None,
                     shift_gate: int = -1, shift_delta: float = 0.0) -> np.ndarray:
    """Per-qubit <Z> of the program state, in the program's local qubit order."""
    if buffer is None:
        buffer = np.empty(1 << program.n_qubits, dtype=np.complex128)
    return np.asarray(
        backend.impl.program_features(
            buffer, program.n_qubits, program.ops, program.qa, program.qb,
            program.pidx, program.sign, param_vector, shift_gate, shift_delta,
        )
    )


def scatter_features(program: CircuitProgram, local_z: np.ndarray) -> np.ndarray:
    """Place compact-program features into the fixed 12-slot layout.

    Atom qubits keep their index, unused atom qubits read exactly +1 (they
    stay in |0>), and the master feature lands in slot 11.
    """
    out = np.ones(FEATURE_DIM)
    k = program.n_atoms
    out[:k] = local_z[:k]
    out[MASTER_QUBIT] = local_z[program.master]
    return out


def extract_features(graph: MolecularGraph, params: QuantumParams) -> np.ndarray:
    """12-dimensional quantum feature vector z_i = <Z_i> for the graph circuit."""
    program = compile_program(graph, params.n_layers)
    return scatter_features(program, program_features(program, params.to_vector()))


@dataclass
class MlpParams:
    """Four affine layers 12 -> h1 -> h2 -> h3 -> 1 with ReLU on the hidden ones."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    dropout_rate: float = 0.2

    def __post_init__(self):
        self.weights = [np.asarray(w, dtype=np.float64) for w in self.weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in self.biases]
        if len(self.weights) != 4 or len(self.biases) != 4:
            raise ValueError("expected exactly 4 (weight, bias) layers")
        dims = [FEATURE_DIM]
        for w, b in zip(self.weights, self.biases):
            if w.ndim != 2 or w.shape[0] != dims[-1]:
                raise ValueError(f"weight shape {w.shape} incompatible with input {dims[-1]}")
            if b.shape != (w.shape[1],):
                raise ValueError(f"bias shape {b.shape} does not match weight {w.shape}")
            dims.append(w.shape[1])
        if dims[-1] != 1:
            raise ValueError(f"final layer must output a scalar, got {dims[-1]}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        for arr in self.weights + self.biases:
            if not np.all(np.isfinite(arr)):
                raise ValueError("MLP parameters contain non-finite entries")

    @property
    def hidden_dims(self) -> tuple[int, ...]:
        return tuple(w.shape[1] for w in self.weights[:-1])


def mlp_forward(z: np.ndarray, params: MlpParams,
                dropout_mask: list[np.ndarray] | None = None,
                training: bool = False) -> float:
    """Scalar head: three ReLU layers (inverted dropout when training) + linear out."""
    h = np.asarray(z, dtype=np.float64)
    if h.shape != (FEATURE_DIM,):
        raise ValueError(f"feature vector must have shape ({FEATURE_DIM},), got {h.shape}")
    use_dropout = training and params.dropout_rate > 0.0
    if use_dropout and dropout_mask is None:
        raise ValueError("training with dropout_rate > 0 requires a dropout mask")
    keep = 1.0 - params.dropout_rate
    for k in range(3):
        h = np.maximum(h @ params.weights[k] + params.biases[k], 0.0)
        if use_dropout:
            h = h * dropout_mask[k] / keep
    out = h @ params.weights[3] + params.biases[3]
    return float(out[0])


@dataclass
class ModelParams:
    """Quantum circuit angles plus the classical head."""

    quantum: QuantumParams
    classical: MlpParams


def predict(graph: MolecularGraph, params: ModelParams) -> float:
    """Evaluation-mode prediction: classical head on the quantum features."""
    return mlp_forward(extract_features(graph, params.quantum), params.classical)


def save_checkpoint(path, params: ModelParams, seeds: dict | None = None) -> None:
    """Persist all model arrays plus the seeds that produced them."""
    payload = {
        "format": CHECKPOINT_FORMAT,
        "seeds": dict(seeds or {}),
        "quantum": {
            "element_angles": params.quantum.element_angles.tolist(),
            "theta": params.quantum.theta.tolist(),
            "phi": params.quantum.phi.tolist(),
            "psi": params.quantum.psi.tolist(),
            "readout_alpha": params.quantum.readout_alpha.tolist(),
        },
        "classical": {
            "weights": [w.tolist() for w in params.classical.weights],
            "biases": [b.tolist() for b in params.classical.biases],
            "dropout_rate": params.classical.dropout_rate,
        },
    }
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(payload, handle)
        handle.write("\n")


def load_checkpoint(path) -> tuple[ModelParams, dict]:
    """Inverse of save_checkpoint; returns (params, seeds)."""
    with open(path, encoding="utf-8") as handle:
        payload = json.load(handle)
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"unsupported checkpoint format {payload.get('format')!r}")
    q = payload["quantum"]
    quantum = QuantumParams(
        element_angles=np.array(q["element_angles"]),
        theta=np.array(q["theta"]),
        phi=np.array(q["phi"]),
        psi=np.array(q["psi"]),
        readout_alpha=np.array(q["readout_alpha"]),
    )
    c = payload["classical"]
    classical = MlpParams(
        weights=[np.array(w) for w in c["weights"]],
        biases=[np.array(b) for b in c["biases"]],
        dropout_rate=float(c["dropout_rate"]),
    )
    return ModelParams(quantum=quantum, classical=classical), payload.get("seeds", {})
