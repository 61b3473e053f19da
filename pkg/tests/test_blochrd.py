"""Finite-duration pulses with radiation damping: field geometry, schedule
expansion, integrator limits and invariants, and the fidelity table plumbing."""

import math

import numpy as np
import pytest

from ddsim.blochrd import (
    RdParameters,
    Segment,
    StepSizeError,
    case_parameters,
    finite_duration_schedule,
    integrate_ensemble,
    rd_field,
    rd_table,
    run_rd_experiment,
)
from ddsim.errors import GAMMA_E, ErrorParameters, ErrorRealization, realizations
from ddsim.sequences import Delay, Pulse, PulseProgram, build_cdd, build_pdd
from ddsim.simulator import run_ensemble

T_P = 0.18e-6
TAU = 11e-6


def zero_errors(m):
    return ErrorRealization(
        detuning=np.zeros(m), epsilon=np.zeros(m), n_z=np.zeros(m)
    )


def one_x_pulse():
    return PulseProgram("one-x", (Delay(TAU), Pulse("x")))


class TestRdField:
    def test_zero_for_longitudinal_magnetization(self):
        assert np.allclose(rd_field([0, 0, -1.0], 2e-6, GAMMA_E), 0.0)

    def test_direct_substitution(self):
        got = GAMMA_E * rd_field([1.0, 0, 0], 2e-6, GAMMA_E)
        assert np.allclose(got, [0.0, 1.0 / 2e-6, 0.0])

    def test_perpendicular_to_inplane_magnetization(self, rng):
        for _ in range(100):
            mag = rng.normal(size=3)
            field = rd_field(mag, 2e-6, GAMMA_E)
            assert abs(field @ np.array([mag[0], mag[1], 0.0])) < 1e-12
            assert field[2] == 0.0

    def test_infinite_damping_time_gives_zero(self):
        assert np.allclose(rd_field([1.0, 1.0, 0.0], math.inf, GAMMA_E), 0.0)


class TestCases:
    def test_case_flags(self):
        a = case_parameters("A")
        assert math.isinf(a.tau_r) and a.rate == 0.0
        b = case_parameters("B", tau_r=2e-6)
        assert not b.rd_during_pulses and b.rd_during_delays
        c = case_parameters("C", tau_r=2e-6)
        assert c.rd_during_pulses and c.rd_during_delays
        with pytest.raises(ValueError):
            case_parameters("D")


class TestSchedule:
    def test_pulse_consumes_preceding_delay(self):
        segs = finite_duration_schedule(build_pdd("XY", TAU), T_P)
        assert len(segs) == 8
        for k in range(0, 8, 2):
            assert segs[k].kind == "delay"
            assert segs[k].duration == pytest.approx(TAU - T_P)
            assert segs[k + 1] == Segment(T_P, "pulse", segs[k + 1].axis)
        total = sum(s.duration for s in segs)
        assert total == pytest.approx(4 * TAU)

    def test_adjacent_pulses_share_one_delay(self):
        # concatenation interleaves put pulses back to back; both are carved
        # from the same preceding delay
        prog = build_cdd("XY", 2, TAU)
        segs = finite_duration_schedule(prog, T_P)
        assert sum(s.duration for s in segs) == pytest.approx(prog.cycle_span)
        durations = sorted({round(s.duration * 1e9) for s in segs if s.kind == "delay"})
        assert durations == [
            round((TAU - 2 * T_P) * 1e9),
            round((TAU - T_P) * 1e9),
        ]

    def test_prep_pulse_prepended_without_carving(self):
        segs = finite_duration_schedule(build_pdd("XY", TAU), T_P, prepend_prep_x=True)
        assert segs[0] == Segment(T_P, "pulse", "x")
        assert sum(s.duration for s in segs) == pytest.approx(4 * TAU + T_P)

    def test_z_pulse_rejected(self):
        with pytest.raises(ValueError):
            finite_duration_schedule(build_pdd("XZ", TAU), T_P)

    def test_pulse_longer_than_delay_rejected(self):
        with pytest.raises(ValueError):
            finite_duration_schedule(build_pdd("XY", 0.9 * T_P), T_P)


class TestIntegration:
    def test_exact_rotation_limit_single_pulse(self):
        rd = case_parameters("A", t_p=T_P)
        states = np.array([[0.0, 0.0, -1.0]])
        res = integrate_ensemble(states, one_x_pulse(), zero_errors(1), rd)
        assert np.max(np.abs(res.final[0] - [0, 0, 1])) < 1e-8

    def test_rk4_matches_exact_path(self):
        rd = case_parameters("A", t_p=T_P)
        real = realizations(ErrorParameters(), seed=4, count=16)
        states = np.tile([0.0, 0.0, -1.0], (16, 1))
        prog = build_pdd("XY", TAU)
        exact = integrate_ensemble(states, prog, real, rd)
        rk4 = integrate_ensemble(states, prog, real, rd, force_rk4=True)
        assert np.max(np.abs(exact.final - rk4.final)) < 1e-7

    def test_no_damping_factorizes_over_spins(self):
        # joint integration with the RD term off equals per-spin runs
        rd = case_parameters("A", t_p=T_P)
        real = realizations(ErrorParameters(), seed=4, count=8)
        states = np.tile([0.0, 0.0, -1.0], (8, 1))
        prog = build_pdd("XY", TAU)
        joint = integrate_ensemble(states, prog, real, rd, force_rk4=True)
        for i in range(8):
            single = ErrorRealization(
                detuning=np.asarray([real.detuning[i]]),
                epsilon=np.asarray([real.epsilon[i]]),
                n_z=np.asarray([real.n_z[i]]),
            )
            res = integrate_ensemble(
                states[i : i + 1], prog, single, rd, force_rk4=True
            )
            assert np.max(np.abs(res.final[0] - joint.final[i])) < 1e-10

    def test_rd_relaxes_toward_equilibrium(self):
        # tipped slightly from -z with damping on, |Mz + 1| must shrink
        rd = RdParameters(tau_r=2e-6, t_p=T_P)
        prog = PulseProgram("idle", (Delay(8e-6),))
        tip = np.tile([0.25, 0.0, -math.sqrt(1 - 0.25**2)], (4, 1))
        res = integrate_ensemble(tip, prog, zero_errors(4), rd)
        assert abs(res.final[:, 2].mean() + 1) < abs(tip[0, 2] + 1)

    def test_norm_drift_within_budget_per_cycle(self):
        # level-1 cycle with RD everywhere at the default step
        params = ErrorParameters()
        rd = case_parameters("C", t_p=params.t_p)
        real = realizations(params, seed=2, count=64)
        states = np.tile([0.0, 0.0, -1.0], (64, 1))
        res = integrate_ensemble(states, build_cdd("XY", 1, params.tau), real, rd)
        assert res.max_norm_drift < 1e-8

    def test_step_size_precondition(self):
        rd = case_parameters("A", t_p=T_P)
        with pytest.raises(StepSizeError):
            integrate_ensemble(
                np.array([[0.0, 0.0, -1.0]]), one_x_pulse(), zero_errors(1), rd,
                dt=T_P / 10,
            )

    def test_oversized_step_aborts_on_drift(self):
        # a full cycle integrated at the coarsest admissible step accumulates
        # enough norm drift to trip the per-cycle abort
        rd = case_parameters("A", t_p=T_P)
        real = zero_errors(2)
        states = np.tile([0.0, 0.0, -1.0], (2, 1))
        with pytest.raises(StepSizeError):
            integrate_ensemble(
                states, build_cdd("XY", 3, TAU), real, rd,
                dt=T_P / 50, force_rk4=True,
            )

    def test_magnetization_trace_shape(self):
        rd = case_parameters("A", t_p=T_P)
        res = integrate_ensemble(
            np.array([[0.0, 0.0, -1.0]]), one_x_pulse(), zero_errors(1), rd
        )
        assert res.times.shape[0] == res.magnetization.shape[0] == 3
        assert res.times[-1] == pytest.approx(TAU)


class TestCrossModel:
    def test_finite_pulses_match_instantaneous_for_z_states(self):
        # without damping, finite 0.18 us pulses reproduce the instantaneous
        # model's one-cycle fidelity for the z states to 0.01
        params = ErrorParameters()
        m = 2000
        fid_fd = run_rd_experiment(params, 1, "A", "-z", m, seed=6)
        records = run_ensemble(
            build_cdd("XY", 1, params.tau), "-z", params, m, 1, seed=6
        )
        assert abs(fid_fd - records[0].fidelity) < 0.01

    def test_level_one_fidelities_near_reference(self):
        # reference values 0.929 / 0.999 for the no-damping column
        params = ErrorParameters()
        fp = run_rd_experiment(params, 1, "A", "+z", 2000, seed=1)
        fm = run_rd_experiment(params, 1, "A", "-z", 2000, seed=1)
        assert abs(fp - 0.929) < 0.05
        assert abs(fm - 0.999) < 0.05
        assert fm >= fp


class TestTablePlumbing:
    def test_rows_and_worker_determinism(self):
        params = ErrorParameters()
        kwargs = dict(levels=(1,), ensemble_size=64, seed=5, tau_r=2e-6)
        rows1 = rd_table(params, workers=1, **kwargs)
        rows2 = rd_table(params, workers=2, **kwargs)
        assert rows1 == rows2
        assert [(r.level, r.case) for r in rows1] == [(1, "A"), (1, "B"), (1, "C")]

    def test_initial_state_validation(self):
        with pytest.raises(ValueError):
            run_rd_experiment(ErrorParameters(), 1, "A", "z", 8, seed=1)
