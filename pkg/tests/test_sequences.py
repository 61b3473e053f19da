"""Pulse-program builders: instruction structure, counts, serialization,
and the ideal-pulse cycle identities."""

import math

import numpy as np
import pytest

from ddsim.errors import ErrorRealization, ideal_realization
from ddsim.sequences import (
    Delay,
    Pulse,
    build_cdd,
    build_cpmg,
    build_pdd,
    build_sdd,
    parse_program,
)
from ddsim.simulator import cycle_propagator
from conftest import GOLDEN_DIR

TAU = 11e-6


def pulse_axes(prog):
    return [i.axis for i in prog.instructions if isinstance(i, Pulse)]


class TestPdd:
    def test_xy_structure(self):
        prog = build_pdd("XY", TAU)
        kinds = ["D" if isinstance(i, Delay) else i.axis for i in prog.instructions]
        assert kinds == ["D", "x", "D", "y", "D", "x", "D", "y"]
        assert prog.cycle_span == pytest.approx(4 * TAU)

    def test_xz_structure(self):
        assert pulse_axes(build_pdd("XZ", TAU)) == ["x", "z", "x", "z"]

    def test_xz_substituted(self):
        prog = build_pdd("XZ", TAU, z_substitution=True)
        assert pulse_axes(prog) == ["x", "x", "y", "x", "x", "y"]
        assert prog.n_delays == 4
        assert prog.label == "xz-pdd-sub"

    def test_bad_variant(self):
        with pytest.raises(ValueError):
            build_pdd("YZ", TAU)


class TestSdd:
    def test_full_structure(self):
        prog = build_sdd(TAU)
        assert len(prog.instructions) == 16
        assert prog.n_delays == 8 and prog.n_pulses == 8
        axes = pulse_axes(prog)
        assert axes == ["x", "y", "x", "y", "y", "x", "y", "x"]
        # the adjacent y-y pair sits back to back at the midpoint
        mid = prog.instructions[7:9]
        assert all(isinstance(i, Pulse) and i.axis == "y" for i in mid)

    def test_reduced_structure(self):
        prog = build_sdd(TAU, reduced=True)
        assert prog.n_pulses == 6 and prog.n_delays == 8
        assert pulse_axes(prog) == ["x", "y", "x", "x", "y", "x"]
        # the two middle delays remain distinct instructions
        assert isinstance(prog.instructions[6], Delay)
        assert isinstance(prog.instructions[7], Delay)


class TestCdd:
    def test_pulse_and_delay_counts(self):
        for level, pulses, delays in ((1, 4, 4), (2, 20, 16), (3, 84, 64), (4, 340, 256)):
            prog = build_cdd("XY", level, TAU)
            assert prog.n_pulses == pulses
            assert prog.n_delays == delays
            assert prog.cycle_span == pytest.approx(delays * TAU)

    def test_level_one_is_pdd(self):
        assert build_cdd("XY", 1, TAU).instructions == build_pdd("XY", TAU).instructions

    def test_level_bounds(self):
        with pytest.raises(ValueError):
            build_cdd("XY", 0, TAU)
        with pytest.raises(ValueError):
            build_cdd("XY", 9, TAU)

    def test_structural_determinism(self):
        # rebuilding the level-n body textually from the level-(n-1) text
        # reproduces the serialized instruction stream
        for level in (2, 3):
            inner = build_cdd("XY", level - 1, TAU).serialize().splitlines()[1:]
            outer = build_cdd("XY", level, TAU).serialize().splitlines()[1:]
            pi = math.pi
            rebuilt = (
                inner + [f"P x {pi!r}"] + inner + [f"P y {pi!r}"]
            ) * 2
            assert outer == rebuilt

    def test_z_substitution_counts(self):
        prog = build_cdd("XZ", 2, TAU, z_substitution=True)
        # 20 pulses, 10 of them z, each becoming two
        assert prog.n_pulses == 30
        assert "z" not in pulse_axes(prog)


class TestCpmg:
    def test_structure(self):
        prog = build_cpmg(4, TAU)
        assert prog.n_pulses == 4 and prog.n_delays == 4
        assert set(pulse_axes(prog)) == {"x"}

    def test_requires_pulses(self):
        with pytest.raises(ValueError):
            build_cpmg(0, TAU)


class TestSerialization:
    def test_round_trip(self):
        prog = build_cdd("XZ", 2, TAU, z_substitution=True)
        again = parse_program(prog.serialize())
        assert again == prog

    @pytest.mark.parametrize(
        "name, factory",
        [
            ("xy_pdd", lambda: build_pdd("XY", TAU)),
            ("xz_pdd_sub", lambda: build_pdd("XZ", TAU, z_substitution=True)),
            ("xy_sdd", lambda: build_sdd(TAU)),
            ("xy_sdd_reduced", lambda: build_sdd(TAU, reduced=True)),
            ("xy_cdd2", lambda: build_cdd("XY", 2, TAU)),
        ],
    )
    def test_golden_files(self, name, factory):
        golden = (GOLDEN_DIR / f"{name}.txt").read_text()
        assert factory().serialize() == golden


class TestIdealPulseIdentities:
    @pytest.mark.parametrize(
        "factory",
        [
            lambda: build_pdd("XY", TAU),
            lambda: build_pdd("XZ", TAU),
            lambda: build_pdd("XZ", TAU, z_substitution=True),
            lambda: build_sdd(TAU),
            lambda: build_sdd(TAU, reduced=True),
            lambda: build_cdd("XY", 3, TAU),
            lambda: build_cdd("XZ", 2, TAU, z_substitution=True),
            lambda: build_cpmg(2, TAU),
        ],
    )
    def test_identity_at_zero_detuning(self, factory):
        rot = cycle_propagator(factory(), ideal_realization())
        assert float(rot.angle_from_identity()) < 1e-10

    def test_xy_xz_equivalent_for_ideal_pulses(self, rng):
        # with a static field and perfect pulses the two-axis variants agree
        for b_field in rng.normal(0, 0.05, size=100):
            real = ErrorRealization(detuning=b_field, epsilon=0.0, n_z=0.0)
            r_xy = cycle_propagator(build_pdd("XY", TAU), real)
            for z_sub in (False, True):
                r_xz = cycle_propagator(build_pdd("XZ", TAU, z_substitution=z_sub), real)
                assert float(r_xy.distance_to(r_xz)) < 1e-10

    def test_substitution_orders_equal_z_pulse_up_to_phase(self):
        # ideal pulses: x-then-y and y-then-x both give a z pi-rotation
        from ddsim.su2 import Rotation, compose

        target = Rotation.rz(math.pi)
        xy = compose(Rotation.rx(math.pi), Rotation.ry(math.pi))
        yx = compose(Rotation.ry(math.pi), Rotation.rx(math.pi))
        assert float(xy.distance_to(target)) < 1e-12
        assert float(yx.distance_to(target)) < 1e-12
