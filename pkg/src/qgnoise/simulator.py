"""Exact statevector simulation of the H / RY / RZ / RZZ / CRY gate alphabet.

Conventions (fixed; every closed-form test value depends on them):
  RY(t)  = exp(-i t Y / 2)
  RZ(t)  = exp(-i t Z / 2)
  RZZ(t) = exp(-i t Z(x)Z / 2)
  CRY(t) = |0><0| (x) I + |1><1| (x) RY(t), qubits = (control, target)
  H      = standard Hadamard
Qubit 0 is the least significant bit of the basis-state index.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import backend

MAX_QUBITS = 16

GATE_KINDS = ("H", "RY", "RZ", "RZZ", "CRY")
_TWO_QUBIT = frozenset({"RZZ", "CRY"})
_OPCODES = {"H": 0, "RY": 1, "RZ": 2, "RZZ": 3, "CRY": 4}


@dataclass(frozen=True)
class GateOp:
    """One gate application; param_tag links the angle to a trainable parameter."""

    kind: str
    qubits: tuple[int, ...]
    angle: float | None = None
    param_tag: tuple | None = None

    def __post_init__(self):
        if self.kind not in GATE_KINDS:
            raise ValueError(f"unknown gate kind {self.kind!r}")
        want = 2 if self.kind in _TWO_QUBIT else 1
        if len(self.qubits) != want:
            raise ValueError(f"{self.kind} takes {want} qubit(s), got {self.qubits}")
        if len(set(self.qubits)) != len(self.qubits):
            raise ValueError(f"{self.kind} qubits must be distinct, got {self.qubits}")
        if min(self.qubits) < 0:
            raise ValueError(f"negative qubit index in {self.qubits}")
        if self.kind == "H":
            if self.angle is not None:
                raise ValueError("H takes no angle")
        elif self.angle is None or not math.isfinite(self.angle):
            raise ValueError(f"{self.kind} needs a finite angle, got {self.angle!r}")


@dataclass
class Statevector:
    """2**n_qubits complex amplitudes; qubit 0 is the least significant bit."""

    n_qubits: int
    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        if not 1 <= self.n_qubits <= MAX_QUBITS:
            raise ValueError(f"n_qubits must be in [1, {MAX_QUBITS}], got {self.n_qubits}")
        self.amplitudes = np.ascontiguousarray(self.amplitudes, dtype=np.complex128)
        if self.amplitudes.shape != (1 << self.n_qubits,):
            raise ValueError(
                f"expected {1 << self.n_qubits} amplitudes, got {self.amplitudes.shape}"
            )
        norm = float(np.sum(np.abs(self.amplitudes) ** 2))
        if abs(norm - 1.0) > 1e-8:
            raise ValueError(f"state is not normalized: |amps|^2 = {norm}")

    @classmethod
    def zero(cls, n_qubits: int) -> "Statevector":
        amps = np.zeros(1 << n_qubits, dtype=np.complex128)
        amps[0] = 1.0
        return cls(n_qubits=n_qubits, amplitudes=amps)

    def norm_error(self) -> float:
        return abs(float(np.sum(np.abs(self.amplitudes) ** 2)) - 1.0)

    def copy(self) -> "Statevector":
        return Statevector(self.n_qubits, self.amplitudes.copy())


def _check_qubits(gate: GateOp, n_qubits: int) -> None:
    if max(gate.qubits) >= n_qubits:
        raise ValueError(f"gate {gate.kind} on {gate.qubits} exceeds register of {n_qubits}")


def _apply_inplace(amps: np.ndarray, gate: GateOp) -> None:
    k = backend.impl
    kind = gate.kind
    if kind == "H":
        k.apply_h(amps, gate.qubits[0])
    elif kind == "RY":
        k.apply_ry(amps, gate.qubits[0], gate.angle)
    elif kind == "RZ":
        k.apply_rz(amps, gate.qubits[0], gate.angle)
    elif kind == "RZZ":
        k.apply_rzz(amps, gate.qubits[0], gate.qubits[1], gate.angle)
    else:
        k.apply_cry(amps, gate.qubits[0], gate.qubits[1], gate.angle)


def apply_gate(state: Statevector, gate: GateOp) -> Statevector:
    """Apply one gate, returning a new state; the input is left untouched."""
    _check_qubits(gate, state.n_qubits)
    amps = state.amplitudes.copy()
    _apply_inplace(amps, gate)
    return Statevector(state.n_qubits, amps)


def apply_sequence(state: Statevector, gates) -> Statevector:
    """Fold apply_gate over a gate list with a single amplitude buffer."""
    amps = state.amplitudes.copy()
    for gate in gates:
        _check_qubits(gate, state.n_qubits)
        _apply_inplace(amps, gate)
    return Statevector(state.n_qubits, amps)


def expect_z(state: Statevector, qubit: int) -> float:
    """<Z_qubit> = sum over basis states of (+-1) |amplitude|^2."""
    if not 0 <= qubit < state.n_qubits:
        raise ValueError(f"qubit {qubit} out of range for {state.n_qubits}-qubit state")
    return float(backend.impl.expect_z(state.amplitudes, qubit))


def all_expect_z(state: Statevector) -> np.ndarray:
    """Per-qubit <Z> for every qubit in one pass."""
    return np.asarray(backend.impl.all_expect_z(state.amplitudes, state.n_qubits))
