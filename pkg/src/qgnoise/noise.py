"""Phenomenological output-noise channel.

The noisy prediction is (1 - p_error) * f + xi with
p_error = 1 - (1 - epsilon)^(N_g * L) and xi ~ Normal(0, (sigma_coeff * p_error)^2).
Gaussian draws use the Box-Muller cosine branch on top of the caller's seeded
bit generator, so identical streams give identical noise on every platform.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

DEFAULT_SIGMA_COEFF = 0.2
DEFAULT_EPSILONS = (0.0, 0.005, 0.010, 0.015)


@dataclass(frozen=True)
class NoiseProfile:
    """Concrete channel parameters for one circuit: error rate, gates, depth."""

    epsilon: float
    gate_count: int
    depth: int = 1
    sigma_coeff: float = DEFAULT_SIGMA_COEFF

    def __post_init__(self):
        if not 0.0 <= self.epsilon < 1.0:
            raise ValueError(f"epsilon must be in [0, 1), got {self.epsilon}")
        if self.gate_count < 1:
            raise ValueError(f"gate_count must be >= 1, got {self.gate_count}")
        if self.depth < 1:
            raise ValueError(f"depth must be >= 1, got {self.depth}")
        if self.sigma_coeff < 0.0:
            raise ValueError(f"sigma_coeff must be >= 0, got {self.sigma_coeff}")


@dataclass(frozen=True)
class NoiseSettings:
    """Run-level channel configuration; gate_count None means per-molecule counting."""

    epsilon: float
    sigma_coeff: float = DEFAULT_SIGMA_COEFF
    gate_count: int | None = None

    def __post_init__(self):
        if not 0.0 <= self.epsilon < 1.0:
            raise ValueError(f"epsilon must be in [0, 1), got {self.epsilon}")
        if self.sigma_coeff < 0.0:
            raise ValueError(f"sigma_coeff must be >= 0, got {self.sigma_coeff}")
        if self.gate_count is not None and self.gate_count < 1:
            raise ValueError(f"gate_count override must be >= 1, got {self.gate_count}")


def p_error(profile: NoiseProfile) -> float:
    """Probability of at least one gate error: 1 - (1 - eps)^(N_g * L)."""
    if profile.epsilon == 0.0:
        return 0.0
    # -expm1(n*log1p(-eps)) keeps full precision for small eps * N_g * L; the
    # clamp keeps the documented [0, 1) range when the float saturates.
    p = -math.expm1(profile.gate_count * profile.depth * math.log1p(-profile.epsilon))
    return min(p, math.nextafter(1.0, 0.0))


def noise_sigma(profile: NoiseProfile) -> float:
    """Standard deviation of the additive fluctuation: sigma_coeff * p_error."""
    return profile.sigma_coeff * p_error(profile)


def gaussian(rng: np.random.Generator, sigma: float) -> float:
    """One Normal(0, sigma^2) draw via the Box-Muller cosine branch."""
    u1 = 1.0 - rng.random()  # (0, 1]; log(u1) is finite
    u2 = rng.random()
    return sigma * math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)


def apply_output_noise(f: float, profile: NoiseProfile, rng: np.random.Generator) -> float:
    """Attenuate the prediction and add a fresh Gaussian fluctuation.

    With epsilon = 0 the channel is the identity and consumes no random bits.
    """
    if not math.isfinite(f):
        raise ValueError(f"prediction must be finite, got {f!r}")
    if profile.epsilon == 0.0:
        return f
    p = p_error(profile)
    sigma = profile.sigma_coeff * p
    xi = gaussian(rng, sigma) if sigma > 0.0 else 0.0
    return (1.0 - p) * f + xi


def theoretical_optimal_epsilon(gate_count: int, depth: int = 1) -> float:
    """Per-gate error rate at which p_error reaches 1/2 to first order: ln2 / (N_g L)."""
    if gate_count * depth < 1:
        raise ValueError("gate_count * depth must be >= 1")
    return math.log(2.0) / (gate_count * depth)
