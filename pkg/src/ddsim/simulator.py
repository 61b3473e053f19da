"""Instantaneous-pulse spin propagation and Monte Carlo ensemble fidelities.

Each spin evolves under its own static error realization: delays rotate the
Bloch vector about +z by ``gamma_e * B * t``, pulses rotate by ``pi + eps``
about the per-spin perturbed axis.  One cycle of a pulse program therefore
collapses to a single effective rotation per spin, and the stroboscopic
fidelity after k cycles is the inner product of the initial Bloch vector
with its k-fold rotated image.

Ensemble averages reduce fixed-size chunks in index order, so results are
bitwise identical for any worker count; realizations are counter-seeded per
spin index (see :mod:`ddsim.errors`).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import IO, Sequence

import numpy as np

from .errors import ErrorParameters, ErrorRealization, realizations
from .sequences import Delay, Pulse, PulseProgram
from .su2 import (
    RENORM_EVERY,
    Rotation,
    bloch_state,
    quat_axis_angle,
    quat_identity,
    quat_mul,
    quat_normalize,
)

__all__ = [
    "FidelityRecord",
    "cycle_propagator",
    "free_rotation",
    "pulse_rotation",
    "run_ensemble",
    "run_fidelity",
    "saturation_estimate",
    "write_records_csv",
]

# Fixed reduction-partition width; never depends on the worker count.
_CHUNK = 4096

CSV_COLUMNS = (
    "sequence",
    "variant",
    "level_or_cycle",
    "initial_state",
    "fidelity",
    "stderr",
    "M",
    "seed",
)


@dataclass(frozen=True)
class FidelityRecord:
    """Ensemble-averaged survival probability at one readout point."""

    sequence_label: str
    initial_state: str
    index: int
    fidelity: float
    stderr: float

    def __post_init__(self):
        if abs(self.fidelity) > 1.0 + 1e-9:
            raise ValueError("fidelity outside [-1, 1]")
        if self.stderr < 0.0:
            raise ValueError("stderr must be >= 0")


def _as_field(value):
    return np.asarray(value, dtype=float)


def _pulse_quat(pulse: Pulse, real: ErrorRealization) -> np.ndarray:
    """Quaternion(s) of one imperfect pulse, broadcast over the realization."""
    scale = pulse.angle / math.pi
    if pulse.axis == "x":
        n_y = _as_field(real.n_y)
        n_z = _as_field(real.n_z)
        sq = 1.0 - n_y**2 - n_z**2
        if np.any(sq <= 0.0):
            raise ValueError("x-pulse axis errors too large to normalize")
        axis = np.stack(np.broadcast_arrays(np.sqrt(sq), n_y, n_z), axis=-1)
        angle = pulse.angle + _as_field(real.epsilon) * scale
    elif pulse.axis == "y":
        m_x = _as_field(real.m_x)
        m_z = _as_field(real.n_z)  # shared out-of-plane tilt: m_z = n_z
        sq = 1.0 - m_x**2 - m_z**2
        if np.any(sq <= 0.0):
            raise ValueError("y-pulse axis errors too large to normalize")
        axis = np.stack(np.broadcast_arrays(m_x, np.sqrt(sq), m_z), axis=-1)
        angle = pulse.angle + _as_field(real.eps_y) * scale
    else:
        p_x = _as_field(real.p_x)
        p_y = _as_field(real.p_y)
        sq = 1.0 - p_x**2 - p_y**2
        if np.any(sq <= 0.0):
            raise ValueError("z-pulse axis errors too large to normalize")
        axis = np.stack(np.broadcast_arrays(p_x, p_y, np.sqrt(sq)), axis=-1)
        angle = pulse.angle + _as_field(real.epsilon_z) * scale
    half = 0.5 * angle
    q = np.empty(np.broadcast_shapes(axis.shape[:-1], np.shape(half)) + (4,))
    q[..., 0] = np.cos(half)
    q[..., 1:] = np.sin(half)[..., None] * axis
    return q


def _delay_quat(duration: float, real: ErrorRealization) -> np.ndarray:
    half = 0.5 * real.gamma_e * _as_field(real.detuning) * duration
    q = np.zeros(np.shape(half) + (4,))
    q[..., 0] = np.cos(half)
    q[..., 3] = np.sin(half)
    return q


def pulse_rotation(pulse: Pulse, real: ErrorRealization) -> Rotation:
    """Rotation implemented by one imperfect pulse.

    x pulses rotate by ``pi + eps`` about ``(sqrt(1 - n_y^2 - n_z^2), n_y,
    n_z)``; y pulses share the angle error and the out-of-plane tilt, axis
    ``(m_x, sqrt(1 - m_x^2 - n_z^2), n_z)``.  Literal z pulses (no x-y
    substitution) use axis ``(p_x, p_y, sqrt(1 - p_x^2 - p_y^2))`` and angle
    ``pi + epsilon_z``.  Nominal pi/2 pulses scale the angle error by 1/2
    (the error is proportional to the drive duration).
    """
    return Rotation(_pulse_quat(pulse, real))


def free_rotation(duration: float, real: ErrorRealization) -> Rotation:
    """Free evolution: rotation about +z by ``gamma_e * B * duration``."""
    if duration < 0:
        raise ValueError("duration must be >= 0")
    return Rotation(_delay_quat(duration, real))


def _cycle_quat(prog: PulseProgram, real: ErrorRealization) -> np.ndarray:
    shape = np.shape(_as_field(real.detuning))
    total = quat_identity(shape)
    count = 0
    for instr in prog.instructions:
        if isinstance(instr, Delay):
            q = _delay_quat(instr.duration, real)
        else:
            q = _pulse_quat(instr, real)
        total = quat_mul(q, total)
        count += 1
        if count % RENORM_EVERY == 0:
            total = quat_normalize(total)
    return quat_normalize(total)


def cycle_propagator(prog: PulseProgram, real: ErrorRealization) -> Rotation:
    """Total rotation of one program cycle (instructions composed in time order)."""
    return Rotation(_cycle_quat(prog, real))


def _resolve_state(initial) -> np.ndarray:
    if isinstance(initial, str):
        return bloch_state(initial)
    state = np.asarray(initial, dtype=float)
    if state.shape != (3,):
        raise ValueError("initial state must be a label or a length-3 Bloch vector")
    return state


def run_fidelity(
    prog: PulseProgram,
    initial,
    real: ErrorRealization,
    repetitions: int,
) -> np.ndarray:
    """Stroboscopic fidelities after 1..repetitions cycles.

    Single realization: returns shape ``(repetitions,)``.  Batch realization
    with fields of shape ``(M,)``: returns ``(repetitions, M)``.
    """
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    s0 = _resolve_state(initial)
    q = _cycle_quat(prog, real)
    rot = Rotation(q)
    state = np.broadcast_to(s0, q.shape[:-1] + (3,)).copy()
    out = np.empty((repetitions,) + q.shape[:-1])
    for k in range(repetitions):
        state = rot.apply(state)
        out[k] = state @ s0
    return out


def _ensemble_chunk(
    prog: PulseProgram,
    s0: np.ndarray,
    params: ErrorParameters,
    seed: int,
    lo: int,
    hi: int,
    repetitions: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-cycle (sum F, sum F^2) over spins [lo, hi)."""
    real = realizations(params, seed, hi - lo, start=lo)
    fid = run_fidelity(prog, s0, real, repetitions)
    return fid.sum(axis=1), (fid * fid).sum(axis=1)


def run_ensemble(
    prog: PulseProgram,
    initial,
    params: ErrorParameters,
    ensemble_size: int = 10_000,
    repetitions: int = 1,
    seed: int = 1,
    workers: int = 1,
) -> list[FidelityRecord]:
    """Ensemble-averaged fidelity after each of 1..repetitions cycles.

    Deterministic for fixed (seed, ensemble_size): spins are drawn by
    counter-based streams and reduced over fixed-width index chunks, so the
    worker count changes only the execution schedule, never the result.
    """
    if ensemble_size < 1:
        raise ValueError("ensemble_size must be >= 1")
    s0 = _resolve_state(initial)
    label = initial if isinstance(initial, str) else "custom"
    bounds = [
        (lo, min(lo + _CHUNK, ensemble_size))
        for lo in range(0, ensemble_size, _CHUNK)
    ]

    def work(span):
        lo, hi = span
        return _ensemble_chunk(prog, s0, params, seed, lo, hi, repetitions)

    if workers > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            partials = list(pool.map(work, bounds))
    else:
        partials = [work(span) for span in bounds]

    total = np.zeros(repetitions)
    total_sq = np.zeros(repetitions)
    for part_sum, part_sq in partials:  # fixed chunk order
        total += part_sum
        total_sq += part_sq

    m = ensemble_size
    mean = total / m
    if m > 1:
        var = np.maximum(total_sq - total * total / m, 0.0) / (m - 1)
        stderr = np.sqrt(var / m)
    else:
        stderr = np.zeros(repetitions)
    return [
        FidelityRecord(prog.label, label, k + 1, float(mean[k]), float(stderr[k]))
        for k in range(repetitions)
    ]


def saturation_estimate(
    prog: PulseProgram,
    initial,
    params: ErrorParameters,
    ensemble_size: int = 10_000,
    seed: int = 1,
) -> float:
    """Long-time fidelity limit: mean squared projection of the initial state
    on each spin's effective rotation axis.

    Degenerate (identity-like) cycle propagators contribute 1: such spins
    never dephase stroboscopically.
    """
    s0 = _resolve_state(initial)
    acc = 0.0
    for lo in range(0, ensemble_size, _CHUNK):
        hi = min(lo + _CHUNK, ensemble_size)
        real = realizations(params, seed, hi - lo, start=lo)
        axis, _, degenerate = quat_axis_angle(_cycle_quat(prog, real))
        a2 = (axis @ s0) ** 2
        acc += float(np.where(degenerate, 1.0, a2).sum())
    return acc / ensemble_size


def write_records_csv(
    records: Sequence[FidelityRecord],
    fh: IO[str],
    ensemble_size: int,
    seed: int,
    extra: dict[str, str] | None = None,
) -> None:
    """Write fidelity records in the fixed CSV layout.

    Columns: sequence, variant, level_or_cycle, initial_state, fidelity,
    stderr, M, seed, then any extra constant columns (e.g. config_hash).
    """
    cols = list(CSV_COLUMNS) + list(extra or {})
    fh.write(",".join(cols) + "\n")
    for rec in records:
        variant = rec.sequence_label.split("-", 1)[0].upper()
        row = [
            rec.sequence_label,
            variant,
            str(rec.index),
            rec.initial_state,
            f"{rec.fidelity:.12g}",
            f"{rec.stderr:.12g}",
            str(ensemble_size),
            str(seed),
        ]
        row.extend((extra or {}).values())
        fh.write(",".join(row) + "\n")
