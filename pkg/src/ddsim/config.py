"""Experiment configuration: flat key=value files, typed coercion, hashing.

Config precedence is defaults < config file < command-line flags.  The
shipped ``paper.cfg`` carries the reference parameter set (11 us delays,
50 mG linewidth, angle-error amplitude 0.3, axis-error amplitude -0.12,
0.18 us pulses, 2 us damping constant, 10^4 spins).
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .errors import GAMMA_E, ErrorParameters

__all__ = [
    "EXPERIMENTS",
    "ExperimentConfig",
    "config_hash",
    "default_config_text",
    "error_parameters",
    "load_config",
    "parse_config_text",
]

EXPERIMENTS = ("pdd", "sdd", "cdd", "cpmg", "rd-table", "verify-analysis")


@dataclass
class ExperimentConfig:
    """Every knob of a run; one flat namespace shared by file keys and flags."""

    experiment: str = "pdd"
    variant: str = "XY"
    cycles: int = 100
    levels: int = 4
    n_pulses: int = 2
    reduced: bool = False
    z_substitution: bool = True
    tau: float = 11e-6
    b: float = 0.050
    epsilon0: float = 0.3
    n0: float = -0.12
    m_x: float = 0.0
    n_y: float = 0.0
    gamma_e: float = GAMMA_E
    t_p: float = 0.18e-6
    ensemble: int = 10_000
    rd_ensemble: int = 2000
    tau_r: float = 2e-6
    seed: int = 1
    workers: int = 1
    out: str = "runs"

    def validate(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise ValueError(
                f"unknown experiment {self.experiment!r}; choose from {EXPERIMENTS}"
            )
        if self.variant.upper() not in ("XY", "XZ"):
            raise ValueError(f"invalid value for variant: {self.variant!r}")
        for key in ("cycles", "levels", "n_pulses", "ensemble", "rd_ensemble",
                    "seed", "workers"):
            if getattr(self, key) < 1 and key != "seed":
                raise ValueError(f"invalid value for {key}: must be >= 1")
        if not 1 <= self.levels <= 8:
            raise ValueError("invalid value for levels: must be in [1, 8]")
        if not self.tau_r > 0:
            raise ValueError("invalid value for tau_r: must be > 0 (inf allowed)")
        # delegates range checks on the physics parameters
        error_parameters(self)


def error_parameters(cfg: ExperimentConfig) -> ErrorParameters:
    return ErrorParameters(
        b=cfg.b,
        epsilon0=cfg.epsilon0,
        n0=cfg.n0,
        m_x=cfg.m_x,
        n_y=cfg.n_y,
        gamma_e=cfg.gamma_e,
        tau=cfg.tau,
        t_p=cfg.t_p,
    )


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(ExperimentConfig)}
_BOOL_TRUE = ("1", "true", "yes", "on")
_BOOL_FALSE = ("0", "false", "no", "off")


def coerce(key: str, raw: str):
    """Parse a raw string for config key ``key``; errors name the key."""
    if key not in _FIELD_TYPES:
        raise ValueError(f"unknown config key: {key}")
    kind = _FIELD_TYPES[key]
    raw = raw.strip()
    try:
        if kind == "bool":
            low = raw.lower()
            if low in _BOOL_TRUE:
                return True
            if low in _BOOL_FALSE:
                return False
            raise ValueError
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        return raw
    except ValueError:
        raise ValueError(f"invalid value for {key}: {raw!r}") from None


def parse_config_text(text: str) -> dict:
    """Parse flat ``key = value`` lines; '#' starts a comment."""
    values: dict = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected 'key = value'")
        key, raw = line.split("=", 1)
        key = key.strip()
        values[key] = coerce(key, raw)
    return values


def default_config_text() -> str:
    return resources.files("ddsim").joinpath("paper.cfg").read_text()


def load_config(
    path: str | Path | None = None, overrides: dict | None = None
) -> ExperimentConfig:
    """Defaults, overlaid by the config file, overlaid by explicit overrides."""
    values = parse_config_text(default_config_text())
    if path is not None:
        values.update(parse_config_text(Path(path).read_text()))
    for key, val in (overrides or {}).items():
        if key not in _FIELD_TYPES:
            raise ValueError(f"unknown config key: {key}")
        values[key] = val
    cfg = ExperimentConfig(**values)
    cfg.validate()
    return cfg


def config_hash(cfg: ExperimentConfig) -> str:
    """Short stable digest of the result-determining configuration.

    The output directory and worker count are excluded: neither may change
    any computed value.
    """
    payload = dataclasses.asdict(cfg)
    payload.pop("out")
    payload.pop("workers")
    return hashlib.sha256(
        json.dumps(payload, sort_keys=True, default=repr).encode()
    ).hexdigest()[:12]
