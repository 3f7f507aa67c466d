"""Numba-jitted statevector kernels: the hot path for circuit evaluation.

Same contracts as _kernels_numpy; compiled with cache=True so worker processes
reuse the on-disk compilation instead of re-jitting.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

OP_H = 0
OP_RY = 1
OP_RZ = 2
OP_RZZ = 3
OP_CRY = 4


@njit(cache=True, fastmath=True)
def apply_h(amps, q):
    inv = 1.0 / math.sqrt(2.0)
    step = 1 << q
    for base in range(0, amps.shape[0], step << 1):
        for i in range(base, base + step):
            a0 = amps[i]
            a1 = amps[i + step]
            amps[i] = (a0 + a1) * inv
            amps[i + step] = (a0 - a1) * inv


@njit(cache=True, fastmath=True)
def apply_ry(amps, q, theta):
    c = math.cos(0.5 * theta)
    s = math.sin(0.5 * theta)
    step = 1 << q
    for base in range(0, amps.shape[0], step << 1):
        for i in range(base, base + step):
            a0 = amps[i]
            a1 = amps[i + step]
            amps[i] = c * a0 - s * a1
            amps[i + step] = s * a0 + c * a1


@njit(cache=True, fastmath=True)
def apply_rz(amps, q, phi):
    lo = complex(math.cos(0.5 * phi), -math.sin(0.5 * phi))
    hi = complex(math.cos(0.5 * phi), math.sin(0.5 * phi))
    step = 1 << q
    for base in range(0, amps.shape[0], step << 1):
        for i in range(base, base + step):
            amps[i] *= lo
            amps[i + step] *= hi


@njit(cache=True, fastmath=True)
def apply_rzz(amps, qa, qb, psi):
    eq = complex(math.cos(0.5 * psi), -math.sin(0.5 * psi))
    ne = complex(math.cos(0.5 * psi), math.sin(0.5 * psi))
    for i in range(amps.shape[0]):
        if ((i >> qa) & 1) == ((i >> qb) & 1):
            amps[i] *= eq
        else:
            amps[i] *= ne


@njit(cache=True, fastmath=True)
def apply_cry(amps, control, target, alpha):
    c = math.cos(0.5 * alpha)
    s = math.sin(0.5 * alpha)
    cbit = 1 << control
    tbit = 1 << target
    for i in range(amps.shape[0]):
        if (i & cbit) != 0 and (i & tbit) == 0:
            j = i | tbit
            a0 = amps[i]
            a1 = amps[j]
            amps[i] = c * a0 - s * a1
            amps[j] = s * a0 + c * a1


@njit(cache=True, fastmath=True)
def expect_z(amps, q):
    acc = 0.0
    bit = 1 << q
    for i in range(amps.shape[0]):
        p = amps[i].real * amps[i].real + amps[i].imag * amps[i].imag
        if i & bit:
            acc -= p
        else:
            acc += p
    return acc


@njit(cache=True, fastmath=True)
def all_expect_z(amps, n_qubits):
    out = np.zeros(n_qubits)
    for i in range(amps.shape[0]):
        p = amps[i].real * amps[i].real + amps[i].imag * amps[i].imag
        for q in range(n_qubits):
            if (i >> q) & 1:
                out[q] -= p
            else:
                out[q] += p
    return out


@njit(cache=True, fastmath=True)
def run_program(amps, ops, qa, qb, pidx, sign, params, shift_gate=-1, shift_delta=0.0):
    for g in range(ops.shape[0]):
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
        else:
            apply_cry(amps, qa[g], qb[g], angle)


@njit(cache=True, fastmath=True)
def program_features(amps, n_qubits, ops, qa, qb, pidx, sign, params,
                     shift_gate=-1, shift_delta=0.0):
    amps[:] = 0.0
    amps[0] = 1.0
    run_program(amps, ops, qa, qb, pidx, sign, params, shift_gate, shift_delta)
    return all_expect_z(amps, n_qubits)
