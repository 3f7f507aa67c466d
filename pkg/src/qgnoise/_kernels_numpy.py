"""Pure-NumPy statevector kernels: the fallback path behind the numba kernels.

All kernels mutate the amplitude array in place. Qubit 0 is the least
significant bit of the basis-state index, so the axis split for qubit q is
amps.reshape(-1, 2, 2**q).
"""

from __future__ import annotations

import cmath
import math

import numpy as np

OP_H = 0
OP_RY = 1
OP_RZ = 2
OP_RZZ = 3
OP_CRY = 4

# Test-only fault-injection hook: a nonzero warp replaces every RY angle with
# theta + warp*sin(theta), which keeps gates unitary but breaks the gradient
# cross-checks in the validation suite. Never set outside tests.
RY_ANGLE_WARP = 0.0


def apply_h(amps: np.ndarray, q: int) -> None:
    inv = 1.0 / math.sqrt(2.0)
    v = amps.reshape(-1, 2, 1 << q)
    a0 = v[:, 0, :].copy()
    a1 = v[:, 1, :]
    v[:, 0, :] = (a0 + a1) * inv
    v[:, 1, :] = (a0 - a1) * inv


def apply_ry(amps: np.ndarray, q: int, theta: float) -> None:
    if RY_ANGLE_WARP:
        theta = theta + RY_ANGLE_WARP * math.sin(theta)
    c = math.cos(0.5 * theta)
    s = math.sin(0.5 * theta)
    v = amps.reshape(-1, 2, 1 << q)
    a0 = v[:, 0, :].copy()
    a1 = v[:, 1, :]
    v[:, 0, :] = c * a0 - s * a1
    v[:, 1, :] = s * a0 + c * a1


def apply_rz(amps: np.ndarray, q: int, phi: float) -> None:
    v = amps.reshape(-1, 2, 1 << q)
    v[:, 0, :] *= cmath.exp(-0.5j * phi)
    v[:, 1, :] *= cmath.exp(0.5j * phi)


def apply_rzz(amps: np.ndarray, qa: int, qb: int, psi: float) -> None:
    lo, hi = (qa, qb) if qa < qb else (qb, qa)
    v = amps.reshape(-1, 2, 1 << (hi - lo - 1), 2, 1 << lo)
    eq = cmath.exp(-0.5j * psi)
    ne = cmath.exp(0.5j * psi)
    v[:, 0, :, 0, :] *= eq
    v[:, 1, :, 1, :] *= eq
    v[:, 0, :, 1, :] *= ne
    v[:, 1, :, 0, :] *= ne


def apply_cry(amps: np.ndarray, control: int, target: int, alpha: float) -> None:
    c = math.cos(0.5 * alpha)
    s = math.sin(0.5 * alpha)
    lo, hi = (control, target) if control < target else (target, control)
    v = amps.reshape(-1, 2, 1 << (hi - lo - 1), 2, 1 << lo)
    if control > target:
        a0 = v[:, 1, :, 0, :].copy()
        a1 = v[:, 1, :, 1, :]
        v[:, 1, :, 0, :] = c * a0 - s * a1
        v[:, 1, :, 1, :] = s * a0 + c * a1
    else:
        a0 = v[:, 0, :, 1, :].copy()
        a1 = v[:, 1, :, 1, :]
        v[:, 0, :, 1, :] = c * a0 - s * a1
        v[:, 1, :, 1, :] = s * a0 + c * a1


def expect_z(amps: np.ndarray, q: int) -> float:
    p = (amps.real * amps.real + amps.imag * amps.imag).reshape(-1, 2, 1 << q)
    return float(p[:, 0, :].sum() - p[:, 1, :].sum())


def all_expect_z(amps: np.ndarray, n_qubits: int) -> np.ndarray:
    p = amps.real * amps.real + amps.imag * amps.imag
    out = np.empty(n_qubits)
    for q in range(n_qubits):
        v = p.reshape(-1, 2, 1 << q)
        out[q] = v[:, 0, :].sum() - v[:, 1, :].sum()
    return out


def run_program(amps, ops, qa, qb, pidx, sign, params, shift_gate=-1, shift_delta=0.0):
    """Apply a compiled gate program in place.

    Gate g draws its angle as sign[g] * params[pidx[g]] (pidx -1 means no
    parameter). When g == shift_gate the angle is offset by shift_delta, which
    is how parameter-shift evaluations address a single gate occurrence.
    """
    for g in range(len(ops)):
        angle = 0.0
        if pidx[g] >= 0:
            angle = sign[g] * params[pidx[g]]
        if g == shift_gate:
            angle += shift_delta
        op = ops[g]
        if op == OP_H:
            apply_h(amps, qa[g])
        elif op == OP_RY:
            apply_ry(amps, qa[g], angle)
        elif op == OP_RZ:
            apply_rz(amps, qa[g], angle)
        elif op == OP_RZZ:
            apply_rzz(amps, qa[g], qb[g], angle)
        elif op == OP_CRY:
            apply_cry(amps, qa[g], qb[g], angle)
        else:
            raise ValueError(f"unknown opcode {op}")


def program_features(amps, n_qubits, ops, qa, qb, pidx, sign, params,
                     shift_gate=-1, shift_delta=0.0) -> np.ndarray:
    """Reset amps to |0...0>, run the program, return per-qubit <Z> values."""
    amps[:] = 0.0
    amps[0] = 1.0
    run_program(amps, ops, qa, qb, pidx, sign, params, shift_gate, shift_delta)
    return all_expect_z(amps, n_qubits)
