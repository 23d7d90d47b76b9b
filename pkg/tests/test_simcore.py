import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from acclab import simcore as sc
from acclab.simcore import (
    ActuatorMap, ContractError, EpisodeSpec, TerminationStatus, VehicleKinematics,
    WorldState, check_termination, ev_episode_spec, force_to_accel, gap, reset, step,
)


def world(lead_x=100.0, lead_v=30.0, host_x=40.0, host_v=30.0, length=5.0):
    return WorldState(0.0, 0, VehicleKinematics(lead_x, lead_v),
                      VehicleKinematics(host_x, host_v), length)


class TestForceToAccel:
    def test_endpoints(self):
        assert force_to_accel(1.0) == 3.5
        assert force_to_accel(-1.0) == -5.5

    def test_zero(self):
        assert force_to_accel(0.0) == 0.0

    def test_half_brake(self):
        assert force_to_accel(-0.5) == -2.75

    def test_out_of_range_rejected(self):
        with pytest.raises(ContractError):
            force_to_accel(1.2)
        with pytest.raises(ContractError):
            force_to_accel(float("nan"))

    @given(st.floats(-1.0, 1.0), st.floats(-1.0, 1.0))
    def test_monotone(self, f1, f2):
        if f1 <= f2:
            assert force_to_accel(f1) <= force_to_accel(f2)


class TestGap:
    def test_definition(self):
        assert gap(world(lead_x=100, host_x=40, length=5)) == 55.0

    def test_translation_invariance(self):
        w = world()
        shifted = WorldState(
            w.sim_time, w.step_index,
            VehicleKinematics(w.lead.position + 1000, w.lead.speed),
            VehicleKinematics(w.host.position + 1000, w.host.speed),
            w.vehicle_length)
        assert gap(shifted) == gap(w)

    def test_collision_boundary(self):
        assert gap(world(lead_x=45.0, host_x=40.0, length=5.0)) == 0.0


class TestStep:
    def test_identical_motion_keeps_gap(self):
        spec = EpisodeSpec()
        w = world(lead_v=30.0, host_v=30.0)
        g0 = gap(w)
        for _ in range(1000):
            w = step(w, 0.0, 30.0, spec)
        assert abs(gap(w) - g0) < 1e-9

    def test_hand_arithmetic(self):
        spec = EpisodeSpec()
        w = world(host_v=20.0)
        w2 = step(w, 1.0, 30.0, spec)
        assert w2.host.speed == pytest.approx(20.02, abs=1e-12)
        assert w2.host.position - w.host.position == pytest.approx(0.4004, abs=1e-12)

    def test_gap_growth_closed_form(self):
        spec = EpisodeSpec()
        w = world(lead_v=31.0, host_v=30.0)
        for _ in range(10):
            w2 = step(w, 0.0, 31.0, spec)
            assert gap(w2) - gap(w) == pytest.approx(0.02, abs=1e-12)
            w = w2

    def test_single_step_gap_delta_matches_speed_integral(self):
        spec = EpisodeSpec()
        rng = np.random.default_rng(7)
        for _ in range(200):
            w = world(lead_v=rng.uniform(0, 33), host_v=rng.uniform(0, 33))
            a = rng.uniform(-5.5, 3.5)
            lead_next = rng.uniform(0, 33)
            w2 = step(w, a, lead_next, spec)
            expected = (lead_next - w2.host.speed) * spec.dt
            assert gap(w2) - gap(w) == pytest.approx(expected, abs=1e-9)

    def test_clock_advances(self):
        spec = EpisodeSpec()
        w = step(world(), 0.0, 30.0, spec)
        assert w.step_index == 1
        assert w.sim_time == spec.dt

    def test_rejects_nonfinite(self):
        with pytest.raises(ContractError):
            step(world(), float("inf"), 30.0, EpisodeSpec())

    def test_determinism_bit_identical(self):
        spec = EpisodeSpec()
        a = step(world(), 1.234, 29.87, spec)
        b = step(world(), 1.234, 29.87, spec)
        assert a == b

    def test_speed_never_negative_fuzz(self):
        spec = EpisodeSpec()
        rng = np.random.default_rng(0)
        w = world(host_v=2.0)
        for _ in range(20_000):
            w = step(w, force_to_accel(rng.uniform(-1, 1)), rng.uniform(0, 33), spec)
            assert w.host.speed >= 0.0


class TestTermination:
    def test_collision(self):
        spec = EpisodeSpec()
        w = world(lead_x=44.9, host_x=40.0)
        assert gap(w) < 0
        assert check_termination(w, spec) is TerminationStatus.COLLISION

    def test_gap_exceeded(self):
        w = world(lead_x=40 + 5 + 300.5, host_x=40.0)
        assert check_termination(w, EpisodeSpec()) is TerminationStatus.GAP_EXCEEDED

    def test_running(self):
        w = WorldState(0.2, 10, VehicleKinematics(100, 30), VehicleKinematics(40, 30))
        assert check_termination(w, EpisodeSpec(max_steps=1000)) is TerminationStatus.RUNNING

    def test_time_limit(self):
        w = WorldState(20.0, 1000, VehicleKinematics(100, 30), VehicleKinematics(40, 30))
        assert check_termination(w, EpisodeSpec(max_steps=1000)) is TerminationStatus.TIME_LIMIT

    def test_collision_precedence_over_time_limit(self):
        w = WorldState(20.0, 1000, VehicleKinematics(44, 30), VehicleKinematics(40, 30))
        assert check_termination(w, EpisodeSpec(max_steps=1000)) is TerminationStatus.COLLISION


class TestReset:
    def test_ice_ranges(self):
        spec = EpisodeSpec()
        rng = np.random.default_rng(0)
        for _ in range(10_000):
            w = reset(spec, rng)
            assert 27.0 <= w.lead.speed <= 33.0
            assert 25.0 <= w.host.speed <= 30.0
            assert 25.0 <= gap(w) <= 35.0

    def test_ev_ranges(self):
        spec = ev_episode_spec()
        rng = np.random.default_rng(0)
        for _ in range(10_000):
            w = reset(spec, rng)
            assert 11.2 <= w.lead.speed <= 15.6
            assert 11.0 <= w.host.speed <= 16.0

    def test_deterministic(self):
        spec = EpisodeSpec()
        assert reset(spec, np.random.default_rng(5)) == reset(spec, np.random.default_rng(5))

    def test_host_at_origin(self):
        w = reset(EpisodeSpec(), np.random.default_rng(1))
        assert w.host.position == 0.0
        assert w.sim_time == 0.0


class TestSpecValidation:
    def test_bad_dt(self):
        with pytest.raises(ContractError):
            EpisodeSpec(dt=0.0)

    def test_bad_interval(self):
        with pytest.raises(ContractError):
            EpisodeSpec(lead_speed_range=(33.0, 27.0))

    def test_max_gap_must_exceed_initial(self):
        with pytest.raises(ContractError):
            EpisodeSpec(max_gap=30.0)

    def test_actuator_positive(self):
        with pytest.raises(ContractError):
            ActuatorMap(max_accel=0.0)
