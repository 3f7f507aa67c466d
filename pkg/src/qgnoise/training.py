"""Hybrid training: quantum-parameter gradients plus classical backprop.

Quantum gradients run at the feature level: both gradient modes produce
d z / d param for the 12 measured expectations, which chain with the head's
input gradient. Parameter-shift sums two-term +-pi/2 shifts over every gate
occurrence of a shared angle; the CRY readout angle falls back to central
differences (its generator has three eigenvalues, so the two-term rule does
not apply).

Randomness is split into independent streams so runs are reproducible and
comparable: parameter init depends only on init_seed, batch order and dropout
masks depend on (init_seed, epoch) / init_seed, and the output-noise stream is
keyed by (init_seed, epsilon).
"""

from __future__ import annotations

import hashlib
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .analysis import r2_score
from .graphs import DatasetSplit, MolecularGraph
from .model import (
    FEATURE_DIM,
    CircuitProgram,
    MlpParams,
    ModelParams,
    QuantumParams,
    compile_program,
    gate_count,
    program_features,
    readout_param_indices,
    scatter_features,
)
from .noise import NoiseProfile, NoiseSettings, apply_output_noise, p_error

PARAMETER_SHIFT = "parameter-shift"
FINITE_DIFFERENCE = "finite-difference"
GRADIENT_MODES = (PARAMETER_SHIFT, FINITE_DIFFERENCE)

# Stream tags keep the rng streams of one run statistically independent.
_NOISE_STREAM = 11
_DROPOUT_STREAM = 13
_SHUFFLE_STREAM = 17


class TrainingDivergedError(RuntimeError):
    """Raised when the training loss stops being finite."""

    def __init__(self, message: str, epoch: int):
        super().__init__(message)
        self.epoch = epoch


@dataclass(frozen=True)
class TrainConfig:
    max_epochs: int = 200
    batch_size: int = 32
    learning_rate: float = 5e-3
    patience: int = 15
    gradient_mode: str = FINITE_DIFFERENCE
    fd_step: float = 1e-4
    init_seed: int = 0
    hidden_dims: tuple[int, int, int] = (64, 32, 16)
    dropout_rate: float = 0.2
    n_layers: int = 1

    def __post_init__(self):
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.fd_step <= 0:
            raise ValueError("fd_step must be > 0")
        if self.gradient_mode not in GRADIENT_MODES:
            raise ValueError(f"gradient_mode must be one of {GRADIENT_MODES}")
        if self.n_layers < 1:
            raise ValueError("n_layers must be >= 1")
        if len(self.hidden_dims) != 3:
            raise ValueError("hidden_dims must list the three hidden sizes")


@dataclass(frozen=True)
class RunRecord:
    init_seed: int
    epsilon: float
    r2_train: float
    r2_val: float
    r2_test: float
    epochs_run: int
    early_stopped: bool
    wall_time: float
    checkpoint_path: str | None = None


def init_params(seed: int, config: TrainConfig) -> ModelParams:
    """Seed-determined init: angles uniform in [-pi, pi], He weights, zero biases."""
    rng = np.random.default_rng(seed)
    qvec = rng.uniform(-math.pi, math.pi, 4 + 10 * config.n_layers)
    quantum = QuantumParams.from_vector(qvec, config.n_layers)
    dims = (FEATURE_DIM, *config.hidden_dims, 1)
    weights = []
    biases = []
    for k in range(4):
        scale = math.sqrt(2.0 / dims[k])
        weights.append(rng.normal(0.0, scale, size=(dims[k], dims[k + 1])))
        biases.append(np.zeros(dims[k + 1]))
    classical = MlpParams(weights=weights, biases=biases, dropout_rate=config.dropout_rate)
    return ModelParams(quantum=quantum, classical=classical)


def params_digest(params: ModelParams) -> str:
    """sha256 over the raw float64 bytes of every parameter array."""
    h = hashlib.sha256()
    h.update(params.quantum.to_vector().tobytes())
    for w, b in zip(params.classical.weights, params.classical.biases):
        h.update(np.ascontiguousarray(w).tobytes())
        h.update(np.ascontiguousarray(b).tobytes())
    return h.hexdigest()


# --- classical head ---------------------------------------------------------

def _mlp_forward_batch(Z, mlp: MlpParams, masks=None):
    """Batched forward pass; returns (predictions, cache for backprop)."""
    keep = 1.0 - mlp.dropout_rate
    a = Z
    cache = []
    for k in range(3):
        pre = a @ mlp.weights[k] + mlp.biases[k]
        post = np.maximum(pre, 0.0)
        if masks is not None:
            post = post * masks[k] / keep
        cache.append((a, pre))
        a = post
    out = a @ mlp.weights[3] + mlp.biases[3]
    cache.append((a, None))
    return out[:, 0], cache


def _mlp_backward_batch(cache, mlp: MlpParams, masks, d_preds):
    """Gradients of sum(d_preds * preds) w.r.t. weights, biases, and inputs."""
    keep = 1.0 - mlp.dropout_rate
    grad_w = [None] * 4
    grad_b = [None] * 4
    d = d_preds[:, None]
    a_last, _ = cache[3]
    grad_w[3] = a_last.T @ d
    grad_b[3] = d.sum(axis=0)
    d = d @ mlp.weights[3].T
    for k in (2, 1, 0):
        a_in, pre = cache[k]
        if masks is not None:
            d = d * masks[k] / keep
        d = d * (pre > 0.0)
        grad_w[k] = a_in.T @ d
        grad_b[k] = d.sum(axis=0)
        d = d @ mlp.weights[k].T
    return grad_w, grad_b, d


def mlp_input_gradient(z: np.ndarray, mlp: MlpParams) -> tuple[float, np.ndarray]:
    """Evaluation-mode prediction and its gradient w.r.t. the 12 features."""
    preds, cache = _mlp_forward_batch(np.asarray(z, dtype=np.float64)[None, :], mlp)
    _, _, dz = _mlp_backward_batch(cache, mlp, None, np.ones(1))
    return float(preds[0]), dz[0]


# --- quantum gradients ------------------------------------------------------

def _local_feature_grad(program: CircuitProgram, gz: np.ndarray) -> np.ndarray:
    """Gather the 12-slot feature gradient into the program's local qubit order."""
    if program.n_qubits == FEATURE_DIM and program.master == FEATURE_DIM - 1:
        return np.asarray(gz, dtype=np.float64)
    out = np.zeros(program.n_qubits)
    out[: program.n_atoms] = gz[: program.n_atoms]
    out[program.master] = gz[FEATURE_DIM - 1]
    return out


def feature_gradient(program: CircuitProgram, param_vector: np.ndarray, gz: np.ndarray,
                     mode: str = FINITE_DIFFERENCE, fd_step: float = 1e-4,
                     buffer: np.ndarray | None = None) -> np.ndarray:
    """d(gz . z) / d(param) for every flat quantum parameter.

    Entries for parameters absent from the circuit are exactly zero.
    """
    if mode not in GRADIENT_MODES:
        raise ValueError(f"gradient mode must be one of {GRADIENT_MODES}, got {mode!r}")
    if buffer is None:
        buffer = np.empty(1 << program.n_qubits, dtype=np.complex128)
    gz_local = _local_feature_grad(program, gz)
    grad = np.zeros(param_vector.shape[0])
    fd_params = readout_param_indices(program.n_layers)
    vec = np.asarray(param_vector, dtype=np.float64)
    for k in program.active_params():
        k = int(k)
        if mode == FINITE_DIFFERENCE or k in fd_params:
            shifted = vec.copy()
            shifted[k] = vec[k] + fd_step
            zp = program_features(program, shifted, buffer)
            shifted[k] = vec[k] - fd_step
            zm = program_features(program, shifted, buffer)
            grad[k] = float(gz_local @ (zp - zm)) / (2.0 * fd_step)
        else:
            acc = 0.0
            for g in program.occurrences(k):
                g = int(g)
                zp = program_features(program, vec, buffer, shift_gate=g, shift_delta=0.5 * math.pi)
                zm = program_features(program, vec, buffer, shift_gate=g, shift_delta=-0.5 * math.pi)
                acc += program.sign[g] * float(gz_local @ (zp - zm)) / 2.0
            grad[k] = acc
    return grad


def quantum_gradient(graph: MolecularGraph, params: ModelParams, upstream: float = 1.0,
                     mode: str = FINITE_DIFFERENCE, fd_step: float = 1e-4) -> np.ndarray:
    """upstream * d f / d(quantum params), flat in the QuantumParams vector layout."""
    program = compile_program(graph, params.quantum.n_layers)
    vec = params.quantum.to_vector()
    z = scatter_features(program, program_features(program, vec))
    _, gz = mlp_input_gradient(z, params.classical)
    return upstream * feature_gradient(program, vec, gz, mode=mode, fd_step=fd_step)


# --- optimizer and early stopping -------------------------------------------

class Adam:
    """Adaptive moment estimation over a list of parameter arrays (in-place)."""

    def __init__(self, params, lr: float, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in self.params]
        self.v = [np.zeros_like(p) for p in self.params]

    def step(self, grads) -> None:
        self.t += 1
        bc1 = 1.0 - self.b1 ** self.t
        bc2 = 1.0 - self.b2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


class EarlyStopper:
    """Stop after `patience` epochs without a strictly better validation loss."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best = math.inf
        self.bad_epochs = 0

    def update(self, value: float) -> bool:
        if value < self.best:
            self.best = value
            self.bad_epochs = 0
            return True
        self.bad_epochs += 1
        return False

    @property
    def should_stop(self) -> bool:
        return self.bad_epochs >= self.patience


# --- training loop ----------------------------------------------------------

def _epsilon_key(epsilon: float) -> int:
    return int(round(epsilon * 1e6))


def noise_stream(init_seed: int, epsilon: float) -> np.random.Generator:
    """Output-noise rng for one (seed, epsilon) run."""
    return np.random.default_rng(
        np.random.SeedSequence((init_seed, _epsilon_key(epsilon), _NOISE_STREAM))
    )


def _profile_for(graph: MolecularGraph, settings: NoiseSettings, n_layers: int) -> NoiseProfile | None:
    if settings.epsilon == 0.0:
        return None
    if settings.gate_count is not None:
        # Fixed override: effective per-layer count, Eq-style N_g * L exponent.
        return NoiseProfile(settings.epsilon, settings.gate_count, n_layers, settings.sigma_coeff)
    # Per-molecule counting: gate_count() already totals all layers.
    return NoiseProfile(settings.epsilon, gate_count(graph, n_layers), 1, settings.sigma_coeff)


@dataclass
class _SplitData:
    graphs: list
    programs: list
    targets: np.ndarray
    profiles: list


def _prepare(graphs, settings: NoiseSettings, n_layers: int) -> _SplitData:
    return _SplitData(
        graphs=list(graphs),
        programs=[compile_program(g, n_layers) for g in graphs],
        targets=np.array([g.target for g in graphs], dtype=np.float64),
        profiles=[_profile_for(g, settings, n_layers) for g in graphs],
    )


def _buffer_for(program: CircuitProgram, buffers: dict) -> np.ndarray:
    buf = buffers.get(program.n_qubits)
    if buf is None:
        buf = np.empty(1 << program.n_qubits, dtype=np.complex128)
        buffers[program.n_qubits] = buf
    return buf


def _features_of(data: _SplitData, indices, qvec, buffers) -> np.ndarray:
    Z = np.empty((len(indices), FEATURE_DIM))
    for row, i in enumerate(indices):
        program = data.programs[i]
        z_local = program_features(program, qvec, _buffer_for(program, buffers))
        Z[row] = scatter_features(program, z_local)
    return Z


def _noisy_predictions(preds: np.ndarray, data: _SplitData, indices, rng) -> np.ndarray:
    out = np.empty(len(indices))
    for row, i in enumerate(indices):
        profile = data.profiles[i]
        out[row] = preds[row] if profile is None else apply_output_noise(preds[row], profile, rng)
    return out


def _evaluate(data: _SplitData, qvec, mlp, buffers, rng) -> tuple[float, float]:
    """Evaluation-mode (noisy MSE, noisy R^2) over one split."""
    indices = range(len(data.graphs))
    Z = _features_of(data, indices, qvec, buffers)
    preds, _ = _mlp_forward_batch(Z, mlp)
    noisy = _noisy_predictions(preds, data, list(indices), rng)
    resid = noisy - data.targets
    return float(np.mean(resid * resid)), r2_score(data.targets, noisy)


def train_model(split: DatasetSplit, settings: NoiseSettings,
                config: TrainConfig) -> tuple[ModelParams, RunRecord]:
    """Train on noisy MSE with early stopping; returns best-validation parameters.

    Deterministic for a fixed (split, settings, config): every random stream is
    seeded from init_seed, the epoch index, and the noise level alone.
    """
    if not split.train or not split.validation or not split.test:
        raise ValueError("every split part must be nonempty")
    start = time.perf_counter()
    n_layers = config.n_layers
    model = init_params(config.init_seed, config)
    qvec = model.quantum.to_vector()
    mlp = model.classical

    train_data = _prepare(split.train, settings, n_layers)
    val_data = _prepare(split.validation, settings, n_layers)
    test_data = _prepare(split.test, settings, n_layers)
    buffers: dict[int, np.ndarray] = {}

    rng_noise = noise_stream(config.init_seed, settings.epsilon)
    rng_dropout = np.random.default_rng(
        np.random.SeedSequence((config.init_seed, _DROPOUT_STREAM))
    )
    attenuation = np.array(
        [1.0 if p is None else 1.0 - p_error(p) for p in train_data.profiles]
    )

    opt = Adam([qvec, *mlp.weights, *mlp.biases], lr=config.learning_rate)
    stopper = EarlyStopper(config.patience)
    use_dropout = mlp.dropout_rate > 0.0

    def snapshot():
        return qvec.copy(), [w.copy() for w in mlp.weights], [b.copy() for b in mlp.biases]

    def restore(state):
        qvec[:] = state[0]
        for w, saved in zip(mlp.weights, state[1]):
            w[:] = saved
        for b, saved in zip(mlp.biases, state[2]):
            b[:] = saved

    best_state = snapshot()
    epochs_run = 0
    early_stopped = False
    n_train = len(train_data.graphs)

    for epoch in range(1, config.max_epochs + 1):
        epochs_run = epoch
        order = np.random.default_rng(
            np.random.SeedSequence((config.init_seed, epoch, _SHUFFLE_STREAM))
        ).permutation(n_train)
        for lo in range(0, n_train, config.batch_size):
            batch = order[lo : lo + config.batch_size]
            Z = _features_of(train_data, batch, qvec, buffers)
            masks = None
            if use_dropout:
                masks = [
                    (rng_dropout.random((len(batch), h)) >= mlp.dropout_rate).astype(np.float64)
                    for h in mlp.hidden_dims
                ]
            preds, cache = _mlp_forward_batch(Z, mlp, masks)
            noisy = _noisy_predictions(preds, train_data, batch, rng_noise)
            resid = noisy - train_data.targets[batch]
            loss = float(np.mean(resid * resid))
            if not math.isfinite(loss):
                raise TrainingDivergedError(
                    f"training loss became non-finite ({loss}) at epoch {epoch}", epoch
                )
            # Straight-through noise gradient: xi constant, attenuation a scale.
            d_preds = 2.0 * resid * attenuation[batch] / len(batch)
            grad_w, grad_b, dZ = _mlp_backward_batch(cache, mlp, masks, d_preds)
            grad_q = np.zeros_like(qvec)
            for row, i in enumerate(batch):
                program = train_data.programs[i]
                grad_q += feature_gradient(
                    program, qvec, dZ[row],
                    mode=config.gradient_mode, fd_step=config.fd_step,
                    buffer=_buffer_for(program, buffers),
                )
            opt.step([grad_q, *grad_w, *grad_b])
        val_loss, _ = _evaluate(val_data, qvec, mlp, buffers, rng_noise)
        if not math.isfinite(val_loss):
            raise TrainingDivergedError(
                f"validation loss became non-finite at epoch {epoch}", epoch
            )
        if stopper.update(val_loss):
            best_state = snapshot()
        if stopper.should_stop:
            early_stopped = True
            break

    restore(best_state)
    _, r2_train = _evaluate(train_data, qvec, mlp, buffers, rng_noise)
    _, r2_val = _evaluate(val_data, qvec, mlp, buffers, rng_noise)
    _, r2_test = _evaluate(test_data, qvec, mlp, buffers, rng_noise)
    record = RunRecord(
        init_seed=config.init_seed,
        epsilon=settings.epsilon,
        r2_train=r2_train,
        r2_val=r2_val,
        r2_test=r2_test,
        epochs_run=epochs_run,
        early_stopped=early_stopped,
        wall_time=time.perf_counter() - start,
    )
    return ModelParams(QuantumParams.from_vector(qvec, n_layers), mlp), record
