"""Pulse-program builders for the decoupling sequences under study.

A pulse program is one cycle of a named sequence: an ordered tuple of
instructions, each either a free-evolution delay or a nominal pi rotation
about x, y or z.  Pulses are zero-duration markers here; the finite-duration
model attaches a width to them separately.

Builders
--------
* ``build_pdd``  : four-pulse two-axis cycle, d-X-d-Y-d-X-d-Y (or X/Z).
* ``build_sdd``  : time-symmetrized eight-pulse cycle with an adjacent Y-Y
  pair at the midpoint; ``reduced=True`` deletes that pair.
* ``build_cdd``  : level-n concatenation, nesting the level-(n-1) block as
  ``inner-X-inner-Y-inner-X-inner-Y``.  Level 1 is the plain four-pulse
  cycle.  Pulse count is (4^(n+1) - 4)/3, delay count 4^n.
* ``build_cpmg`` : single-axis train, n repetitions of d-X.

Z pulses in XZ sequences are kept literal by default.  With
``z_substitution=True`` each z pulse is replaced by the temporally ordered
pair (x pulse, y pulse) back to back, which equals a z pi rotation up to
global phase for ideal pulses but differs at first order in the errors.

Programs serialize to a line-oriented text format (``D <seconds>`` /
``P <axis> <angle>``) for golden-file tests and external tooling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

__all__ = [
    "Delay",
    "Pulse",
    "Instruction",
    "PulseProgram",
    "build_cdd",
    "build_cpmg",
    "build_pdd",
    "build_sdd",
    "parse_program",
]

_AXES = ("x", "y", "z")
_ALLOWED_ANGLES = (math.pi, math.pi / 2.0)
MAX_CDD_LEVEL = 8


@dataclass(frozen=True)
class Delay:
    duration: float

    def __post_init__(self):
        if not self.duration > 0:
            raise ValueError("delay duration must be > 0")


@dataclass(frozen=True)
class Pulse:
    axis: str
    angle: float = math.pi

    def __post_init__(self):
        if self.axis not in _AXES:
            raise ValueError(f"pulse axis must be one of {_AXES}, got {self.axis!r}")
        if not any(math.isclose(self.angle, a) for a in _ALLOWED_ANGLES):
            raise ValueError("nominal pulse angle must be pi or pi/2")


Instruction = Union[Delay, Pulse]


@dataclass(frozen=True)
class PulseProgram:
    """One cycle of a named sequence: immutable, shareable between workers."""

    label: str
    instructions: tuple[Instruction, ...]

    @property
    def cycle_span(self) -> float:
        """Total cycle duration in seconds (pulses are instantaneous)."""
        return sum(i.duration for i in self.instructions if isinstance(i, Delay))

    @property
    def n_delays(self) -> int:
        return sum(1 for i in self.instructions if isinstance(i, Delay))

    @property
    def n_pulses(self) -> int:
        return sum(1 for i in self.instructions if isinstance(i, Pulse))

    def serialize(self) -> str:
        lines = [f"# {self.label}"]
        for instr in self.instructions:
            if isinstance(instr, Delay):
                lines.append(f"D {instr.duration!r}")
            else:
                lines.append(f"P {instr.axis} {instr.angle!r}")
        return "\n".join(lines) + "\n"


def parse_program(text: str) -> PulseProgram:
    """Inverse of :meth:`PulseProgram.serialize`."""
    label = "unnamed"
    instructions: list[Instruction] = []
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            label = line[1:].strip()
            continue
        kind, *rest = line.split()
        if kind == "D":
            instructions.append(Delay(float(rest[0])))
        elif kind == "P":
            instructions.append(Pulse(rest[0], float(rest[1])))
        else:
            raise ValueError(f"unrecognized program line: {line!r}")
    return PulseProgram(label, tuple(instructions))


def _pi(axis: str) -> Pulse:
    return Pulse(axis, math.pi)


def _substitute_z(instructions: list[Instruction]) -> list[Instruction]:
    """Replace each z pulse by the back-to-back pair x then y (temporal)."""
    out: list[Instruction] = []
    for instr in instructions:
        if isinstance(instr, Pulse) and instr.axis == "z":
            out.append(_pi("x"))
            out.append(_pi("y"))
        else:
            out.append(instr)
    return out


def build_pdd(variant: str, tau: float, z_substitution: bool = False) -> PulseProgram:
    """Two-axis periodic cycle: d-X-d-Y-d-X-d-Y (XY) or d-X-d-Z-d-X-d-Z (XZ)."""
    variant = variant.upper()
    if variant not in ("XY", "XZ"):
        raise ValueError("PDD variant must be 'XY' or 'XZ'")
    second = "y" if variant == "XY" else "z"
    instrs: list[Instruction] = [
        Delay(tau), _pi("x"), Delay(tau), _pi(second),
        Delay(tau), _pi("x"), Delay(tau), _pi(second),
    ]
    label = f"{variant.lower()}-pdd"
    if variant == "XZ" and z_substitution:
        instrs = _substitute_z(instrs)
        label += "-sub"
    return PulseProgram(label, tuple(instrs))


def build_sdd(tau: float, reduced: bool = False) -> PulseProgram:
    """Symmetrized XY cycle; ``reduced`` deletes the adjacent midpoint Y-Y pair.

    Full cycle: d-X-d-Y-d-X-d-Y-Y-d-X-d-Y-d-X-d (8 delays, 8 pulses; the two
    delays around the Y-Y pair remain distinct).  Reduced: same with the two
    adjacent Y pulses removed (8 delays, 6 pulses).
    """
    first_half: list[Instruction] = [
        Delay(tau), _pi("x"), Delay(tau), _pi("y"),
        Delay(tau), _pi("x"), Delay(tau),
    ]
    second_half: list[Instruction] = [
        Delay(tau), _pi("x"), Delay(tau), _pi("y"),
        Delay(tau), _pi("x"), Delay(tau),
    ]
    if reduced:
        instrs = first_half + second_half
        label = "xy-sdd-reduced"
    else:
        instrs = first_half + [_pi("y"), _pi("y")] + second_half
        label = "xy-sdd"
    return PulseProgram(label, tuple(instrs))


def build_cdd(
    variant: str,
    level: int,
    tau: float,
    z_substitution: bool = False,
) -> PulseProgram:
    """Level-n concatenated cycle built by recursive nesting.

    The interleaving pulses sit between sub-blocks with no extra delay.
    Guarded to level <= MAX_CDD_LEVEL: the pulse count grows as 4^n.
    """
    variant = variant.upper()
    if variant not in ("XY", "XZ"):
        raise ValueError("CDD variant must be 'XY' or 'XZ'")
    if not (1 <= level <= MAX_CDD_LEVEL):
        raise ValueError(f"CDD level must be in [1, {MAX_CDD_LEVEL}], got {level}")
    second = "y" if variant == "XY" else "z"

    block: list[Instruction] = [
        Delay(tau), _pi("x"), Delay(tau), _pi(second),
        Delay(tau), _pi("x"), Delay(tau), _pi(second),
    ]
    for _ in range(level - 1):
        block = (
            block + [_pi("x")] + block + [_pi(second)]
            + block + [_pi("x")] + block + [_pi(second)]
        )
    label = f"{variant.lower()}-cdd{level}"
    if variant == "XZ" and z_substitution:
        block = _substitute_z(block)
        label += "-sub"
    return PulseProgram(label, tuple(block))


def build_cpmg(n_pulses: int, tau: float) -> PulseProgram:
    """Single-axis train: n repetitions of d-X."""
    if n_pulses < 1:
        raise ValueError("n_pulses must be >= 1")
    instrs: list[Instruction] = []
    for _ in range(n_pulses):
        instrs.append(Delay(tau))
        instrs.append(_pi("x"))
    return PulseProgram(f"cpmg-x{n_pulses}", tuple(instrs))
