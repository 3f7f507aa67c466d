"""Noise-response laboratory for equivariant quantum graph circuits.

Exact 12-qubit statevector simulation of permutation-equivariant bond-block
circuits over molecular graphs, hybrid quantum-classical regression training
under a calibrated output-noise channel, and the per-initialization response
statistics (beneficial / detrimental / marginal) with their significance tests.
"""

from .analysis import (
    Category,
    CohortReport,
    ResponseSummary,
    build_cohort_report,
    classify,
    delta_r2,
    dose_response,
    pearson,
    permutation_test,
    r2_score,
    summarize_seed,
    threshold_analysis,
    welch_t_test,
)
from .graphs import (
    BondType,
    DatasetSplit,
    DatasetError,
    MolecularGraph,
    generate_synthetic,
    parse_dataset,
    planted_target,
    split_dataset,
    write_dataset,
)
from .model import (
    MlpParams,
    ModelParams,
    QuantumParams,
    build_circuit,
    extract_features,
    gate_count,
    load_checkpoint,
    mlp_forward,
    predict,
    save_checkpoint,
)
from .noise import (
    NoiseProfile,
    NoiseSettings,
    apply_output_noise,
    p_error,
    theoretical_optimal_epsilon,
)
from .simulator import GateOp, Statevector, all_expect_z, apply_gate, apply_sequence, expect_z
from .training import (
    FINITE_DIFFERENCE,
    PARAMETER_SHIFT,
    RunRecord,
    TrainConfig,
    TrainingDivergedError,
    init_params,
    params_digest,
    quantum_gradient,
    train_model,
)

__version__ = "0.1.0"
