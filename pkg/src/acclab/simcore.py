"""Deterministic fixed-step longitudinal world model.

Two vehicles on a straight road: a kinematic lead that follows its speed
trace exactly, and a host driven through a normalized force actuator.
Integration is semi-implicit Euler at a fixed tick, so a whole episode is
a pure function of (initial state, action sequence, lead trace).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np

MODE_ICE = "ICE"
MODE_EV = "EV"


class ContractError(ValueError):
    """An operation was called outside its stated preconditions."""


@dataclass(frozen=True)
class VehicleKinematics:
    position: float  # m, longitudinal station
    speed: float     # m/s, >= 0
    accel: float = 0.0  # m/s^2


@dataclass(frozen=True)
class ActuatorMap:
    """Bounds of the force -> acceleration mapping (asymmetric)."""

    max_accel: float = 3.5            # m/s^2, force = +1
    max_decel_magnitude: float = 5.5  # m/s^2, force = -1

    def __post_init__(self):
        if self.max_accel <= 0 or self.max_decel_magnitude <= 0:
            raise ContractError("actuator limits must be strictly positive")


@dataclass(frozen=True)
class WorldState:
    sim_time: float
    step_index: int
    lead: VehicleKinematics
    host: VehicleKinematics
    vehicle_length: float = 5.0


@dataclass(frozen=True)
class EpisodeSpec:
    """Episode geometry, tick and reset ranges (closed intervals)."""

    dt: float = 0.02
    max_gap: float = 300.0
    max_steps: int = 12000
    mode: str = MODE_ICE
    lead_speed_range: tuple[float, float] = (27.0, 33.0)
    host_speed_range: tuple[float, float] = (25.0, 30.0)
    initial_gap_range: tuple[float, float] = (25.0, 35.0)
    vehicle_length: float = 5.0

    def __post_init__(self):
        if self.dt <= 0:
            raise ContractError("dt must be positive")
        if self.max_steps <= 0:
            raise ContractError("max_steps must be positive")
        if self.mode not in (MODE_ICE, MODE_EV):
            raise ContractError(f"unknown mode {self.mode!r}")
        for name in ("lead_speed_range", "host_speed_range", "initial_gap_range"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ContractError(f"{name}: lower bound {lo} exceeds upper bound {hi}")
        if self.max_gap <= self.initial_gap_range[1]:
            raise ContractError("max_gap must exceed all initial gaps")


def ev_episode_spec(**overrides) -> EpisodeSpec:
    """EpisodeSpec with the EV reset ranges."""
    base = dict(
        mode=MODE_EV,
        lead_speed_range=(11.2, 15.6),
        host_speed_range=(11.0, 16.0),
        initial_gap_range=(25.0, 35.0),
    )
    base.update(overrides)
    return EpisodeSpec(**base)


class TerminationStatus(enum.Enum):
    RUNNING = "running"
    COLLISION = "collision"
    GAP_EXCEEDED = "gap_exceeded"
    TIME_LIMIT = "time_limit"


def force_to_accel(force: float, actuator: ActuatorMap = ActuatorMap()) -> float:
    """Map normalized force in [-1, 1] to acceleration in m/s^2.

    Piecewise linear through zero: positive force scales max_accel,
    negative force scales max_decel_magnitude.
    """
    if not math.isfinite(force) or abs(force) > 1.0:
        raise ContractError(f"force {force} outside [-1, 1]")
    if force >= 0.0:
        return force * actuator.max_accel
    return force * actuator.max_decel_magnitude


def gap(world: WorldState) -> float:
    """Bumper-to-bumper distance; <= 0 means collision."""
    return world.lead.position - world.host.position - world.vehicle_length


def step(world: WorldState, host_accel: float, lead_speed_next: float,
         spec: EpisodeSpec) -> WorldState:
    """Advance one tick with semi-implicit Euler.

    The host integrates its commanded acceleration (speed clamped at 0,
    no reverse); the lead is kinematic and adopts lead_speed_next exactly.
    """
    if not (math.isfinite(host_accel) and math.isfinite(lead_speed_next)):
        raise ContractError("non-finite step inputs")
    if lead_speed_next < 0:
        raise ContractError("lead speed must be nonnegative")
    dt = spec.dt
    host_v = max(world.host.speed + host_accel * dt, 0.0)
    host = VehicleKinematics(
        position=world.host.position + host_v * dt,
        speed=host_v,
        accel=host_accel,
    )
    lead_accel = (lead_speed_next - world.lead.speed) / dt
    lead = VehicleKinematics(
        position=world.lead.position + lead_speed_next * dt,
        speed=lead_speed_next,
        accel=lead_accel,
    )
    return replace(
        world,
        sim_time=(world.step_index + 1) * dt,
        step_index=world.step_index + 1,
        lead=lead,
        host=host,
    )


def check_termination(world: WorldState, spec: EpisodeSpec) -> TerminationStatus:
    """Collision, then gap-exceeded, then time limit, else running."""
    g = gap(world)
    if g <= 0.0:
        return TerminationStatus.COLLISION
    if g > spec.max_gap:
        return TerminationStatus.GAP_EXCEEDED
    if world.step_index >= spec.max_steps:
        return TerminationStatus.TIME_LIMIT
    return TerminationStatus.RUNNING


def reset(spec: EpisodeSpec, rng: np.random.Generator) -> WorldState:
    """Draw a fresh initial state uniformly from the spec's reset ranges."""
    lead_v = rng.uniform(*spec.lead_speed_range)
    host_v = rng.uniform(*spec.host_speed_range)
    gap0 = rng.uniform(*spec.initial_gap_range)
    return WorldState(
        sim_time=0.0,
        step_index=0,
        lead=VehicleKinematics(position=gap0 + spec.vehicle_length, speed=lead_v),
        host=VehicleKinematics(position=0.0, speed=host_v),
        vehicle_length=spec.vehicle_length,
    )
