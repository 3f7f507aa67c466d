"""Self-contained property suite behind the `validate` CLI command.

Each property runs on small random instances and reports pass/fail; the dense
reference simulator here is built from explicit matrix products, independent
of the kernel backends it checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .graphs import BondType, MolecularGraph, generate_synthetic, permute_graph
from .model import (
    MASTER_QUBIT,
    build_circuit,
    compile_program,
    extract_features,
    gate_count,
    program_features,
    QuantumParams,
)
from .noise import NoiseProfile, apply_output_noise, gaussian, p_error, theoretical_optimal_epsilon
from .simulator import GateOp, Statevector, all_expect_z, apply_sequence
from .training import FINITE_DIFFERENCE, PARAMETER_SHIFT, feature_gradient

P_ERROR_REFERENCE = 0.39422956350927178  # 1 - 0.995^100 at 40-digit precision


@dataclass(frozen=True)
class PropertyResult:
    name: str
    passed: bool
    detail: str


# --- dense reference ----------------------------------------------------------

def _mat_h():
    return np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2.0)


def _mat_ry(t):
    c, s = math.cos(0.5 * t), math.sin(0.5 * t)
    return np.array([[c, -s], [s, c]], dtype=complex)


def _mat_rz(t):
    return np.diag([np.exp(-0.5j * t), np.exp(0.5j * t)])


def _mat_rzz(t):
    eq, ne = np.exp(-0.5j * t), np.exp(0.5j * t)
    return np.diag([eq, ne, ne, eq])


def _mat_cry(t):
    m = np.eye(4, dtype=complex)
    m[2:, 2:] = _mat_ry(t)
    return m


def _embed_single(mat, q, n):
    return np.kron(np.eye(1 << (n - 1 - q)), np.kron(mat, np.eye(1 << q)))


def _embed_pair(mat, q0, q1, n):
    # mat indexed by (bit_q0, bit_q1) as 2*b0 + b1 on rows and columns.
    dim = 1 << n
    full = np.zeros((dim, dim), dtype=complex)
    for col in range(dim):
        b0, b1 = (col >> q0) & 1, (col >> q1) & 1
        for a0 in (0, 1):
            for a1 in (0, 1):
                row = (col & ~(1 << q0) & ~(1 << q1)) | (a0 << q0) | (a1 << q1)
                full[row, col] = mat[2 * a0 + a1, 2 * b0 + b1]
    return full


def dense_gate_matrix(gate: GateOp, n: int) -> np.ndarray:
    if gate.kind == "H":
        return _embed_single(_mat_h(), gate.qubits[0], n)
    if gate.kind == "RY":
        return _embed_single(_mat_ry(gate.angle), gate.qubits[0], n)
    if gate.kind == "RZ":
        return _embed_single(_mat_rz(gate.angle), gate.qubits[0], n)
    if gate.kind == "RZZ":
        return _embed_pair(_mat_rzz(gate.angle), gate.qubits[0], gate.qubits[1], n)
    return _embed_pair(_mat_cry(gate.angle), gate.qubits[0], gate.qubits[1], n)


def dense_apply(state: np.ndarray, gates, n: int) -> np.ndarray:
    out = state.copy()
    for gate in gates:
        out = dense_gate_matrix(gate, n) @ out
    return out


def _random_gate(rng, n) -> GateOp:
    kinds = ("H", "RY", "RZ", "RZZ", "CRY") if n >= 2 else ("H", "RY", "RZ")
    kind = kinds[rng.integers(0, len(kinds))]
    if kind in ("RZZ", "CRY"):
        q = rng.choice(n, size=2, replace=False)
        return GateOp(kind, (int(q[0]), int(q[1])), float(rng.uniform(-math.pi, math.pi)))
    angle = None if kind == "H" else float(rng.uniform(-math.pi, math.pi))
    return GateOp(kind, (int(rng.integers(0, n)),), angle)


def _random_params(rng, n_layers=1) -> QuantumParams:
    return QuantumParams(
        element_angles=rng.uniform(-math.pi, math.pi, 4),
        theta=rng.uniform(-math.pi, math.pi, (n_layers, 4)),
        phi=rng.uniform(-math.pi, math.pi, (n_layers, 4)),
        psi=rng.uniform(-math.pi, math.pi, n_layers),
        readout_alpha=rng.uniform(-math.pi, math.pi, n_layers),
    )


# --- properties -----------------------------------------------------------------

def check_dense_oracle(rng, n_circuits=20, tol=1e-12) -> PropertyResult:
    worst = 0.0
    for n in (1, 2, 3):
        for _ in range(n_circuits):
            gates = [_random_gate(rng, n) for _ in range(12)]
            state = Statevector.zero(n)
            fast = apply_sequence(state, gates).amplitudes
            slow = dense_apply(state.amplitudes, gates, n)
            worst = max(worst, float(np.max(np.abs(fast - slow))))
    return PropertyResult("statevector-dense-oracle", worst < tol,
                          f"max amplitude deviation {worst:.2e} (tol {tol:g})")


def check_unitarity(rng, n_sequences=20, n_gates=50, tol=1e-10) -> PropertyResult:
    worst = 0.0
    for _ in range(n_sequences):
        gates = [_random_gate(rng, 12) for _ in range(n_gates)]
        state = apply_sequence(Statevector.zero(12), gates)
        worst = max(worst, state.norm_error())
    return PropertyResult("statevector-unitarity", worst < tol,
                          f"max norm error {worst:.2e} over {n_sequences} sequences")


def check_equivariance(rng, n_cases=30, tol=1e-10) -> PropertyResult:
    worst = 0.0
    for case in range(n_cases):
        graph = generate_synthetic(1, seed=int(rng.integers(1 << 30)), max_atoms=6)[0]
        params = _random_params(rng)
        perm = rng.permutation(graph.n_atoms)
        z = extract_features(graph, params)
        z_perm = extract_features(permute_graph(graph, perm), params)
        for a in range(graph.n_atoms):
            worst = max(worst, abs(z_perm[perm[a]] - z[a]))
        worst = max(worst, abs(z_perm[MASTER_QUBIT] - z[MASTER_QUBIT]))
    return PropertyResult("feature-equivariance", worst < tol,
                          f"max feature deviation {worst:.2e} over {n_cases} relabelings")


def check_bond_order_invariance(rng, n_cases=30, tol=1e-12) -> PropertyResult:
    worst = 0.0
    for _ in range(n_cases):
        graph = generate_synthetic(1, seed=int(rng.integers(1 << 30)))[0]
        params = _random_params(rng)
        bonds = list(graph.bonds)
        rng.shuffle(bonds)
        shuffled = MolecularGraph(graph.atoms, tuple(bonds), graph.target)
        a = apply_sequence(Statevector.zero(12), build_circuit(graph, params)).amplitudes
        b = apply_sequence(Statevector.zero(12), build_circuit(shuffled, params)).amplitudes
        worst = max(worst, float(np.linalg.norm(a - b)))
    return PropertyResult("bond-order-invariance", worst < tol,
                          f"max statevector deviation {worst:.2e}")


def check_entangler_zero_identity(rng, n_cases=10, tol=1e-12) -> PropertyResult:
    worst = 0.0
    for _ in range(n_cases):
        graph = generate_synthetic(1, seed=int(rng.integers(1 << 30)))[0]
        params = _random_params(rng)
        no_entangle = QuantumParams(
            params.element_angles, params.theta, params.phi,
            np.zeros_like(params.psi), params.readout_alpha,
        )
        z_blocks = extract_features(graph, no_entangle)
        z_free = _bond_free_features(graph, no_entangle)
        worst = max(worst, float(np.max(np.abs(z_blocks - z_free))))
    return PropertyResult("entangler-zero-identity", worst < tol,
                          f"max feature deviation {worst:.2e} at psi=0")


def _bond_free_features(graph: MolecularGraph, params: QuantumParams) -> np.ndarray:
    """Features of the same circuit with every bond block dropped."""
    gates = [g for g in build_circuit(graph, params)
             if g.param_tag is None or g.param_tag[0] in ("element", "alpha")]
    state = apply_sequence(Statevector.zero(12), gates)
    return all_expect_z(state)


def check_gradient_consistency(rng, n_models=6, rel_tol=1e-5, abs_floor=1e-8) -> PropertyResult:
    worst = 0.0
    for _ in range(n_models):
        graph = generate_synthetic(1, seed=int(rng.integers(1 << 30)), max_atoms=7)[0]
        params = _random_params(rng)
        program = compile_program(graph, 1)
        vec = params.to_vector()
        gz = rng.normal(size=12)
        g_fd = feature_gradient(program, vec, gz, mode=FINITE_DIFFERENCE, fd_step=1e-4)
        g_ps = feature_gradient(program, vec, gz, mode=PARAMETER_SHIFT)
        gap = np.abs(g_fd - g_ps) - (rel_tol * np.abs(g_ps) + abs_floor)
        worst = max(worst, float(gap.max()))
    # Closed form: a single-atom circuit reads <Z_0> = cos(element angle).
    single = MolecularGraph(("C",), (), 0.0)
    angle = 0.7
    params = QuantumParams(
        np.array([angle, 0.0, 0.0, 0.0]), np.zeros((1, 4)), np.zeros((1, 4)),
        np.zeros(1), np.zeros(1),
    )
    program = compile_program(single, 1)
    gz = np.zeros(12)
    gz[0] = 1.0
    expected = -math.sin(angle)
    closed_ok = True
    for mode in (FINITE_DIFFERENCE, PARAMETER_SHIFT):
        got = feature_gradient(program, params.to_vector(), gz, mode=mode)[0]
        closed_ok &= abs(got - expected) < 1e-6
    passed = worst <= 0.0 and closed_ok
    return PropertyResult(
        "gradient-consistency", passed,
        f"worst tolerance excess {worst:.2e}; closed-form d<Z>/dtheta check "
        f"{'ok' if closed_ok else 'FAILED'}",
    )


def check_noise_closed_forms() -> PropertyResult:
    checks = [
        abs(p_error(NoiseProfile(0.005, 100, 1)) - P_ERROR_REFERENCE) < 1e-9,
        p_error(NoiseProfile(0.0, 100, 1)) == 0.0,
        abs(theoretical_optimal_epsilon(100, 1) - math.log(2) / 100.0) < 1e-12,
        abs(theoretical_optimal_epsilon(100, 1) - 0.007) < 5e-4,
        abs(theoretical_optimal_epsilon(50, 1) - 0.014) < 5e-4,
        p_error(NoiseProfile(0.015, 50, 2)) == p_error(NoiseProfile(0.015, 100, 1)),
    ]
    # sigma_coeff = 0 must make the channel deterministic.
    rng = np.random.default_rng(0)
    profile = NoiseProfile(0.01, 80, 1, sigma_coeff=0.0)
    outs = {apply_output_noise(1.0, profile, rng) for _ in range(20)}
    checks.append(len(outs) == 1)
    passed = all(checks)
    return PropertyResult("noise-closed-forms", passed,
                          f"{sum(checks)}/{len(checks)} closed-form identities hold")


def check_noise_gaussian_ks(n_samples=10_000, alpha=0.01, seed=2024) -> PropertyResult:
    rng = np.random.default_rng(seed)
    samples = np.array([gaussian(rng, 1.0) for _ in range(n_samples)])
    p = ks_normal_pvalue(samples)
    return PropertyResult("noise-gaussian-ks", p > alpha,
                          f"KS p-value {p:.4f} for {n_samples} standardized draws (alpha {alpha})")


def ks_normal_pvalue(samples: np.ndarray) -> float:
    """Kolmogorov-Smirnov p-value against the standard normal (asymptotic)."""
    x = np.sort(np.asarray(samples, dtype=np.float64))
    n = x.size
    cdf = 0.5 * (1.0 + np.vectorize(math.erf)(x / math.sqrt(2.0)))
    up = np.arange(1, n + 1) / n - cdf
    down = cdf - np.arange(0, n) / n
    d = float(max(up.max(), down.max()))
    lam = (math.sqrt(n) + 0.12 + 0.11 / math.sqrt(n)) * d
    total = 0.0
    for k in range(1, 101):
        total += (-1.0) ** (k - 1) * math.exp(-2.0 * k * k * lam * lam)
    return max(0.0, min(1.0, 2.0 * total))


def check_gate_count_range(graphs, low=14, high=130) -> PropertyResult:
    counts = [gate_count(g, 1) for g in graphs]
    lo, hi = min(counts), max(counts)
    ok = low <= lo and hi <= high
    return PropertyResult("gate-count-range", ok,
                          f"measured gate counts span [{lo}, {hi}] (bounds [{low}, {high}])")


def run_property_suite(graphs=None, seed: int = 7) -> list[PropertyResult]:
    """Execute every property; any failure flips the CLI to exit code 3."""
    rng = np.random.default_rng(seed)
    if graphs is None:
        graphs = generate_synthetic(100, seed=seed)
    return [
        check_dense_oracle(rng),
        check_unitarity(rng),
        check_equivariance(rng),
        check_bond_order_invariance(rng),
        check_entangler_zero_identity(rng),
        check_gradient_consistency(rng),
        check_noise_closed_forms(),
        check_noise_gaussian_ks(),
        check_gate_count_range(graphs),
    ]
