"""Spin-1/2 rotations: unit-quaternion composition, Bloch-vector action,
axis-angle extraction.

Conventions (fixed repo-wide)
-----------------------------
* A rotation by angle ``theta`` about unit axis ``a`` corresponds to the
  spin-1/2 unitary ``exp(-i * theta * (S . a))`` with ``S = sigma/2``.  Its
  action on a Bloch vector is the *active*, right-handed rotation: rotating
  ``(1, 0, 0)`` about ``+z`` by ``phi`` gives ``(cos phi, sin phi, 0)``.
  This matches free evolution under a positive detuning field along ``+z``.
* Quaternions are stored as ``(..., 4)`` float arrays ``[w, x, y, z]`` with
  ``w = cos(theta/2)`` and ``(x, y, z) = sin(theta/2) * a``.  The Hamilton
  product ``quat_mul(q1, q2)`` equals the unitary product ``U1 @ U2``, i.e.
  ``q2`` acts *first*.
* Temporal composition is the only order exposed on :class:`Rotation`:
  ``first.then(later)`` and ``compose(first, later)`` apply ``first`` first.
* ``q`` and ``-q`` describe the same physical rotation (global phase);
  every observable derived here is insensitive to that sign.

Bloch vectors (spin states) are plain length-3 float arrays; pure states
have unit norm.  All functions broadcast over leading axes, so a ``(M, 4)``
quaternion array acts on ``(M, 3)`` states as M independent rotations.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, NamedTuple

import numpy as np

__all__ = [
    "DEGENERACY_SIN_HALF",
    "RENORM_EVERY",
    "AxisAngle",
    "Rotation",
    "compose",
    "compose_sequence",
    "quat_apply",
    "quat_axis_angle",
    "quat_conj",
    "quat_from_axis_angle",
    "quat_identity",
    "quat_mul",
    "quat_normalize",
    "bloch_state",
]

# |sin(theta/2)| below which the rotation axis is reported as degenerate.
DEGENERACY_SIN_HALF = 1e-9

# Quaternion drift is bounded by renormalizing after this many products;
# long products (level-4 concatenation has 596 factors) stay unit to ~1e-15.
RENORM_EVERY = 32

_STATE_VECTORS = {
    "x": np.array([1.0, 0.0, 0.0]),
    "y": np.array([0.0, 1.0, 0.0]),
    "z": np.array([0.0, 0.0, 1.0]),
    "+z": np.array([0.0, 0.0, 1.0]),
    "-z": np.array([0.0, 0.0, -1.0]),
}


def bloch_state(label: str) -> np.ndarray:
    """Unit Bloch vector for one of the named initial states x, y, z, +z, -z."""
    try:
        return _STATE_VECTORS[label].copy()
    except KeyError:
        raise ValueError(f"unknown state label {label!r}") from None


def quat_identity(shape: tuple[int, ...] = ()) -> np.ndarray:
    q = np.zeros(shape + (4,))
    q[..., 0] = 1.0
    return q


def quat_from_axis_angle(axis, angle) -> np.ndarray:
    """Quaternion for a rotation by ``angle`` about ``axis`` (normalized here)."""
    axis = np.asarray(axis, dtype=float)
    angle = np.asarray(angle, dtype=float)
    norm = np.linalg.norm(axis, axis=-1, keepdims=True)
    if np.any(norm == 0.0):
        raise ValueError("rotation axis must be nonzero")
    axis = axis / norm
    half = 0.5 * angle
    q = np.empty(np.broadcast_shapes(axis.shape[:-1], angle.shape) + (4,))
    q[..., 0] = np.cos(half)
    q[..., 1:] = np.sin(half)[..., None] * axis
    return q


def quat_mul(q1, q2) -> np.ndarray:
    """Hamilton product; equals the unitary product U1 @ U2 (q2 acts first)."""
    q1 = np.asarray(q1, dtype=float)
    q2 = np.asarray(q2, dtype=float)
    w1, v1 = q1[..., 0], q1[..., 1:]
    w2, v2 = q2[..., 0], q2[..., 1:]
    out = np.empty(np.broadcast_shapes(q1.shape, q2.shape))
    out[..., 0] = w1 * w2 - np.sum(v1 * v2, axis=-1)
    out[..., 1:] = (
        w1[..., None] * v2 + w2[..., None] * v1 + np.cross(v1, v2)
    )
    return out


def quat_conj(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    out = q.copy()
    out[..., 1:] *= -1.0
    return out


def quat_normalize(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


def quat_apply(q, vec) -> np.ndarray:
    """Rotate Bloch vector(s): r' = (w^2 - |v|^2) r + 2 (v.r) v + 2 w (v x r)."""
    q = np.asarray(q, dtype=float)
    vec = np.asarray(vec, dtype=float)
    w, v = q[..., 0], q[..., 1:]
    ww = w * w - np.sum(v * v, axis=-1)
    dot = np.sum(v * vec, axis=-1)
    return (
        ww[..., None] * vec
        + 2.0 * dot[..., None] * v
        + 2.0 * w[..., None] * np.cross(v, vec)
    )


def quat_axis_angle(q) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Canonical (axis, angle, degenerate) of the physical rotation.

    The angle lies in [0, pi]; the axis sign is chosen accordingly, so
    (a, theta) and (-a, 2 pi - theta) map to the same canonical output.
    Where |sin(theta/2)| < DEGENERACY_SIN_HALF the rotation is within
    numerical noise of the identity: the angle is ~0, the axis is arbitrary
    and reported as +z with the degenerate flag set.
    """
    q = np.asarray(q, dtype=float)
    w = q[..., 0]
    v = q[..., 1:]
    s = np.linalg.norm(v, axis=-1)
    angle = 2.0 * np.arctan2(s, w)
    flip = angle > np.pi
    angle = np.where(flip, 2.0 * np.pi - angle, angle)
    sign = np.where(flip, -1.0, 1.0)
    degenerate = s < DEGENERACY_SIN_HALF
    safe = np.where(degenerate, 1.0, s)
    axis = sign[..., None] * v / safe[..., None]
    axis = np.where(degenerate[..., None], np.array([0.0, 0.0, 1.0]), axis)
    return axis, angle, degenerate


class AxisAngle(NamedTuple):
    axis: np.ndarray
    angle: np.ndarray
    degenerate: np.ndarray


@dataclass(frozen=True)
class Rotation:
    """An SU(2) rotation (up to global phase), stored as a unit quaternion.

    Instances are immutable values and safe to share between workers.  The
    wrapped quaternion may carry leading batch axes.
    """

    quat: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.quat, dtype=float)
        if q.shape[-1] != 4:
            raise ValueError("quaternion must have trailing dimension 4")
        q = q.copy()
        q.flags.writeable = False
        object.__setattr__(self, "quat", q)

    @classmethod
    def identity(cls, shape: tuple[int, ...] = ()) -> "Rotation":
        return cls(quat_identity(shape))

    @classmethod
    def from_axis_angle(cls, axis, angle) -> "Rotation":
        return cls(quat_from_axis_angle(axis, angle))

    @classmethod
    def rx(cls, angle) -> "Rotation":
        return cls.from_axis_angle((1.0, 0.0, 0.0), angle)

    @classmethod
    def ry(cls, angle) -> "Rotation":
        return cls.from_axis_angle((0.0, 1.0, 0.0), angle)

    @classmethod
    def rz(cls, angle) -> "Rotation":
        return cls.from_axis_angle((0.0, 0.0, 1.0), angle)

    def then(self, later: "Rotation") -> "Rotation":
        """Temporal composition: self acts first, `later` afterwards."""
        return Rotation(quat_normalize(quat_mul(later.quat, self.quat)))

    def inverse(self) -> "Rotation":
        return Rotation(quat_conj(self.quat))

    def apply(self, bloch) -> np.ndarray:
        """Rotate Bloch vector(s); preserves the Euclidean norm."""
        return quat_apply(self.quat, bloch)

    def axis_angle(self) -> AxisAngle:
        return AxisAngle(*quat_axis_angle(self.quat))

    def angle_from_identity(self) -> np.ndarray:
        """SO(3) rotation angle in [0, pi]; the residual rotation magnitude."""
        return self.axis_angle().angle

    def to_matrix(self) -> np.ndarray:
        """The 3x3 orthogonal matrix acting on Bloch vectors."""
        eye = np.eye(3)
        cols = [quat_apply(self.quat, eye[i]) for i in range(3)]
        return np.stack(cols, axis=-1)

    def approx_equal(self, other: "Rotation", tol: float = 1e-12) -> np.ndarray:
        """Equality of the physical rotation, insensitive to global phase."""
        d = np.abs(np.sum(self.quat * other.quat, axis=-1))
        return d >= 1.0 - tol

    def distance_to(self, other: "Rotation") -> np.ndarray:
        """Phase-insensitive SO(3) distance: the angle of self o other^-1."""
        rel = quat_mul(self.quat, quat_conj(other.quat))
        return quat_axis_angle(rel)[1]


def compose(first: Rotation, later: Rotation) -> Rotation:
    """Rotation equal to applying ``first`` first, then ``later``."""
    return first.then(later)


def compose_sequence(rotations: Iterable[Rotation]) -> Rotation:
    """Temporal composition of many rotations (first element acts first).

    Renormalizes every RENORM_EVERY products to bound floating drift over
    long pulse trains.
    """
    total = None
    count = 0
    for rot in rotations:
        if total is None:
            total = np.array(rot.quat, dtype=float)
            continue
        total = quat_mul(rot.quat, total)
        count += 1
        if count % RENORM_EVERY == 0:
            total = quat_normalize(total)
    if total is None:
        return Rotation.identity()
    return Rotation(quat_normalize(total))
