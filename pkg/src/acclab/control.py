"""Consensus ACC baseline and the discretized force action space.

The baseline commands a reference acceleration from gap and speed errors,
then drives through the same 21-force actuator as the learned agent so
gap-RMSE comparisons are apples to apples.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .simcore import ActuatorMap, ContractError, force_to_accel

N_ACTIONS = 21


@dataclass(frozen=True)
class ConsensusGains:
    beta: float = 0.15          # 1/s^2, gap-error gain
    gamma_gain: float = 0.9     # 1/s, speed-error gain
    t_gap: float = 55.0 / 30.0  # s, desired time gap (55 m at 30 m/s cruise)
    d_safe: float = 10.0        # m, stopped-traffic floor

    def __post_init__(self):
        if min(self.beta, self.gamma_gain, self.t_gap, self.d_safe) <= 0:
            raise ContractError("all consensus gains must be strictly positive")


@dataclass(frozen=True)
class ActionSpace:
    """The 21 normalized forces -1.0, -0.9, ..., +1.0."""

    forces: tuple[float, ...] = tuple(round(-1.0 + 0.1 * i, 1) for i in range(N_ACTIONS))

    def __post_init__(self):
        if len(self.forces) != N_ACTIONS:
            raise ContractError(f"expected {N_ACTIONS} forces")
        if any(b <= a for a, b in zip(self.forces, self.forces[1:])):
            raise ContractError("forces must be strictly increasing")
        if any(abs(f + self.forces[-1 - i]) > 1e-12 for i, f in enumerate(self.forces)):
            raise ContractError("forces must be symmetric about 0")


def desired_gap(v_host: float, gains: ConsensusGains = ConsensusGains()) -> float:
    """Desired inter-vehicle gap: time-gap distance with a minimum-safe floor."""
    if v_host < 0:
        raise ContractError("host speed must be nonnegative")
    return max(v_host * gains.t_gap, gains.d_safe)


def consensus_accel(gap_actual: float, v_host: float, v_pre: float,
                    gains: ConsensusGains = ConsensusGains(),
                    actuator: ActuatorMap = ActuatorMap()) -> float:
    """Reference acceleration from gap and speed errors, clamped to actuator limits."""
    if not all(math.isfinite(x) for x in (gap_actual, v_host, v_pre)):
        raise ContractError("non-finite consensus inputs")
    a_ref = gains.beta * (gap_actual - desired_gap(v_host, gains)) \
        + gains.gamma_gain * (v_pre - v_host)
    return min(max(a_ref, -actuator.max_decel_magnitude), actuator.max_accel)


def accel_to_force_index(a_ref: float, space: ActionSpace = ActionSpace(),
                         actuator: ActuatorMap = ActuatorMap()) -> int:
    """Invert the force map, then snap to the nearest discrete force.

    Ties break toward the smaller-magnitude force.
    """
    if not math.isfinite(a_ref):
        raise ContractError("non-finite reference acceleration")
    if a_ref >= 0:
        f = min(a_ref / actuator.max_accel, 1.0)
    else:
        f = max(a_ref / actuator.max_decel_magnitude, -1.0)
    forces = np.asarray(space.forces)
    accels = np.array([force_to_accel(x, actuator) for x in forces])
    target = force_to_accel(f, actuator)
    dist = np.abs(accels - target)
    best = dist.min()
    candidates = np.flatnonzero(dist <= best + 1e-12)
    return int(min(candidates, key=lambda i: (abs(forces[i]), i)))
