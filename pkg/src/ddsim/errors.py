"""Systematic pulse-error model: per-spin draws of detuning, rotation-angle
error and rotation-axis error.

Each spin in the ensemble carries one static realization for its whole
evolution: a detuning field ``B ~ N(0, b^2)`` (Gauss), a rotation-angle
error ``epsilon`` shared by the x and y pulses, and an out-of-plane axis
tilt ``n_z`` shared by both pulse axes.  The edge errors follow the
inverted-parabola law ``a0 * (1 - 3 u^2)`` with ``u`` uniform on [-1, 1],
which has density ``(1/2a0) [3 (1 - v/a0)]^(-1/2)`` supported on
``[-2 a0, a0]`` (support reversed for negative amplitude), zero mean and
variance ``0.8 a0^2``.

Sampling is counter-based: realization ``i`` for a given seed is a pure
function of ``(seed, i)``, independent of the batch size and of how the
ensemble is partitioned across workers.  Each spin consumes one fixed-size
Philox counter block, and the Gaussian is produced by inverse CDF rather
than rejection so the stream alignment never slips.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import ndtri

__all__ = [
    "GAMMA_E",
    "ErrorParameters",
    "ErrorRealization",
    "draw_realization",
    "ideal_realization",
    "realizations",
    "sample_detuning",
    "sample_edge_error",
    "scale_errors",
]

# Electron gyromagnetic ratio, rad s^-1 Gauss^-1 (g ~ 2 electron).  With the
# default linewidth b = 50 mG this gives an inhomogeneous dephasing time
# sqrt(2)/(gamma_e b) ~ 1.6 us.
GAMMA_E = 2.0 * math.pi * 2.8025e6

# Uniform draws consumed per realization: one Philox 4x64 block per spin, so
# a batch starting at spin index i0 is reachable by advance(i0).
_DRAWS_PER_SPIN = 4


@dataclass(frozen=True)
class ErrorParameters:
    """Distribution widths and timing for the spin ensemble.

    Attributes
    ----------
    b : float
        RMS of the Gaussian static detuning, Gauss.
    epsilon0 : float
        Amplitude of the rotation-angle error distribution, radians.
    n0 : float
        Amplitude of the out-of-plane axis-error distribution (dimensionless
        axis component).  May be negative; the support flips accordingly.
    m_x, n_y : float
        In-plane axis-error components, fixed constants (default 0: phase
        calibration makes them negligible).
    gamma_e : float
        Gyromagnetic ratio, rad s^-1 Gauss^-1.
    tau : float
        Inter-pulse delay, seconds.
    t_p : float
        Pulse duration, seconds (used only by the finite-duration model).
    """

    b: float = 0.050
    epsilon0: float = 0.3
    n0: float = -0.12
    m_x: float = 0.0
    n_y: float = 0.0
    gamma_e: float = GAMMA_E
    tau: float = 11e-6
    t_p: float = 0.18e-6

    def __post_init__(self):
        if self.b < 0:
            raise ValueError("detuning rms b must be >= 0")
        if not (0 < self.t_p < self.tau):
            raise ValueError("pulse duration t_p must satisfy 0 < t_p < tau")
        for name in ("epsilon0", "n0", "m_x", "n_y", "gamma_e"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")


@dataclass(frozen=True)
class ErrorRealization:
    """Per-spin systematic errors, fixed for the spin's entire evolution.

    Fields may be scalars (one spin) or equally shaped arrays (a batch of
    independent spins); all downstream operations broadcast.  The angle
    error ``epsilon`` is shared by the x and y pulses; ``epsilon_y`` can
    override the y-pulse value for analytic studies that separate the two.
    ``p_x``, ``p_y`` and ``epsilon_z`` only matter for direct z pulses (the
    analytic variant without the x-y substitution) and default to zero.
    """

    detuning: float | np.ndarray
    epsilon: float | np.ndarray
    n_z: float | np.ndarray
    m_x: float | np.ndarray = 0.0
    n_y: float | np.ndarray = 0.0
    gamma_e: float = GAMMA_E
    p_x: float | np.ndarray = 0.0
    p_y: float | np.ndarray = 0.0
    epsilon_z: float | np.ndarray = 0.0
    epsilon_y: float | np.ndarray | None = None

    @property
    def eps_y(self) -> float | np.ndarray:
        """Effective y-pulse angle error (the shared value unless overridden)."""
        return self.epsilon if self.epsilon_y is None else self.epsilon_y

    @property
    def size(self) -> int:
        return np.size(self.detuning)


def ideal_realization(gamma_e: float = GAMMA_E) -> ErrorRealization:
    """All error amplitudes zero: exact ideal pulses, zero detuning."""
    return ErrorRealization(detuning=0.0, epsilon=0.0, n_z=0.0, gamma_e=gamma_e)


def scale_errors(real: ErrorRealization, s: float) -> ErrorRealization:
    """Scale every pulse-error field by ``s``, leaving the detuning alone.

    Used by the order-of-error convergence checks.
    """
    return replace(
        real,
        epsilon=np.asarray(real.epsilon) * s,
        n_z=np.asarray(real.n_z) * s,
        m_x=np.asarray(real.m_x) * s,
        n_y=np.asarray(real.n_y) * s,
        p_x=np.asarray(real.p_x) * s,
        p_y=np.asarray(real.p_y) * s,
        epsilon_z=np.asarray(real.epsilon_z) * s,
        epsilon_y=None if real.epsilon_y is None else np.asarray(real.epsilon_y) * s,
    )


def _detuning_from_uniform(u, b):
    """Map uniform [0, 1) draws to N(0, b^2) by inverse CDF."""
    if b == 0.0:
        return np.zeros_like(np.asarray(u, dtype=float))
    eps = 2.0**-53
    return b * ndtri(np.clip(u, eps, 1.0 - eps))


def _edge_from_uniform(u, a0):
    """Map uniform [0, 1) draws to the edge-error law a0 * (1 - 3 v^2)."""
    v = 2.0 * np.asarray(u, dtype=float) - 1.0
    return a0 * (1.0 - 3.0 * v * v)


def sample_detuning(b: float, rng: np.random.Generator):
    """One (or an array of) static detuning draw(s), Gaussian with std b."""
    return _detuning_from_uniform(rng.random(), b)


def sample_edge_error(a0: float, rng: np.random.Generator):
    """One draw of the pulse-edge error law with amplitude ``a0``.

    Zero mean; variance 0.8 a0^2; support [-2 a0, a0] (reversed for a0 < 0).
    """
    return _edge_from_uniform(rng.random(), a0)


def _uniform_block(seed: int, start: int, count: int) -> np.ndarray:
    """Rows [start, start+count) of the per-spin uniform stream for ``seed``."""
    bitgen = np.random.Philox(key=seed)
    if start:
        bitgen.advance(start)
    u = np.random.Generator(bitgen).random(count * _DRAWS_PER_SPIN)
    return u.reshape(count, _DRAWS_PER_SPIN)


def realizations(
    params: ErrorParameters, seed: int, count: int, start: int = 0
) -> ErrorRealization:
    """Batch of ``count`` independent realizations starting at spin ``start``.

    Bitwise reproducible: element ``i`` depends only on ``(seed, start + i)``,
    so partitioning a run into arbitrary worker slices reproduces the exact
    same ensemble.
    """
    u = _uniform_block(seed, start, count)
    return ErrorRealization(
        detuning=_detuning_from_uniform(u[:, 0], params.b),
        epsilon=_edge_from_uniform(u[:, 1], params.epsilon0),
        n_z=_edge_from_uniform(u[:, 2], params.n0),
        m_x=np.full(count, float(params.m_x)),
        n_y=np.full(count, float(params.n_y)),
        gamma_e=params.gamma_e,
    )


def draw_realization(params: ErrorParameters, seed: int, index: int = 0) -> ErrorRealization:
    """The single realization at ``(seed, index)`` with scalar fields."""
    batch = realizations(params, seed, 1, start=index)
    return ErrorRealization(
        detuning=float(batch.detuning[0]),
        epsilon=float(batch.epsilon[0]),
        n_z=float(batch.n_z[0]),
        m_x=float(params.m_x),
        n_y=float(params.n_y),
        gamma_e=params.gamma_e,
    )
