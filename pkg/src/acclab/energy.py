"""Post-hoc energy and emission evaluation of driven trajectories.

ICE fuel follows the power-demand CMEM form (friction + engine power over
efficiency), pollutants scale with fuel through engine-out indices and
catalyst pass fractions, and EV power is a 9-term polynomial in speed and
acceleration. All numeric defaults are documented placeholders, not
calibrated values; only formula correctness and orderings are asserted.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .simcore import ContractError

GRAVITY = 9.81          # m/s^2
METERS_PER_MILE = 1609.344


@dataclass(frozen=True)
class EmissionSpec:
    species: str                 # CO2 | CO | HC | NOx
    engine_out_index: float      # g emission per g fuel
    catalyst_pass_fraction: float

    def __post_init__(self):
        if self.engine_out_index < 0:
            raise ContractError("engine-out index must be nonnegative")
        if not 0.0 <= self.catalyst_pass_fraction <= 1.0:
            raise ContractError("CPF must lie in [0, 1]")


# Placeholder indices in plausible magnitude order only; users calibrate.
DEFAULT_EMISSIONS = (
    EmissionSpec("CO2", 3.10, 1.0),
    EmissionSpec("CO", 0.40, 0.10),
    EmissionSpec("HC", 0.06, 0.08),
    EmissionSpec("NOx", 0.025, 0.12),
)


@dataclass(frozen=True)
class IcePowertrain:
    fuel_per_kj: float = 1.0 / 43.5       # lambda: g fuel per kJ (LHV ~43.5 kJ/g)
    friction_factor: float = 0.2          # k: kJ per (rev * liter)
    idle_rev_s: float = 11.7              # ~700 rpm
    rev_per_speed: float = 0.9            # rev/s per m/s
    displacement_l: float = 2.0
    engine_efficiency: float = 0.4
    mass_kg: float = 1500.0
    rolling_coeff: float = 0.009
    drag_area: float = 0.704              # C_d * A, m^2
    air_density: float = 1.225
    driveline_efficiency: float = 0.9
    accessory_kw: float = 1.5
    emissions: tuple[EmissionSpec, ...] = DEFAULT_EMISSIONS

    def __post_init__(self):
        positives = (self.fuel_per_kj, self.friction_factor, self.idle_rev_s,
                     self.rev_per_speed, self.displacement_l, self.mass_kg,
                     self.driveline_efficiency)
        if any(x <= 0 for x in positives):
            raise ContractError("powertrain parameters must be positive")
        if not 0.0 < self.engine_efficiency <= 1.0:
            raise ContractError("engine efficiency must lie in (0, 1]")

    def engine_speed(self, v: float) -> float:
        """rev/s, floored at idle."""
        return max(self.idle_rev_s, self.rev_per_speed * v)


@dataclass(frozen=True)
class EvCoefficients:
    """Coefficients of P = l0 + l1*v + l2*v^3 + l3*v*a + l4*v^2 + l5*v^4
    + l6*v^2*a + l7*v^3*a + l8*v*a^2 (kW; v m/s, a m/s^2).

    Placeholder values shaped like a 1.5 t EV; supply calibrated ones for
    real studies.
    """

    values: tuple[float, ...] = (
        0.8,       # l0: idle/accessory kW
        0.13,      # l1: rolling, kW per m/s
        4.4e-4,    # l2: aero, kW per (m/s)^3
        1.6,       # l3: inertia, kW per (m^2/s^3)
        1e-3,      # l4
        1e-6,      # l5
        1e-3,      # l6
        1e-5,      # l7
        1e-2,      # l8
    )

    def __post_init__(self):
        if len(self.values) != 9:
            raise ContractError("exactly 9 coefficients required")
        if not all(np.isfinite(self.values)):
            raise ContractError("coefficients must be finite")


def road_load_power(v: float, a: float, pt: IcePowertrain = IcePowertrain()) -> float:
    """Engine power demand in kW from inertia, rolling and aero loads."""
    if v < 0:
        raise ContractError("speed must be nonnegative")
    tractive_kw = (pt.mass_kg * a
                   + pt.mass_kg * GRAVITY * pt.rolling_coeff
                   + 0.5 * pt.air_density * pt.drag_area * v * v) * v / 1000.0
    return max(tractive_kw, 0.0) / pt.driveline_efficiency + pt.accessory_kw


def cmem_fuel_rate(v: float, a: float, pt: IcePowertrain = IcePowertrain()) -> float:
    """Fuel use in g/s: lambda * (k*N*D + P_engine / eta_engine)."""
    p_engine = road_load_power(v, a, pt)
    return pt.fuel_per_kj * (
        pt.friction_factor * pt.engine_speed(v) * pt.displacement_l
        + p_engine / pt.engine_efficiency
    )


def emission_rate(fuel_rate: float, spec: EmissionSpec) -> float:
    """Tailpipe g/s: fuel rate times engine-out index times catalyst pass fraction."""
    if fuel_rate < 0:
        raise ContractError("fuel rate must be nonnegative")
    return fuel_rate * spec.engine_out_index * spec.catalyst_pass_fraction


def ev_power(v: float, a: float, coeffs: EvCoefficients = EvCoefficients()) -> float:
    """EV power demand polynomial in kW (zero road grade)."""
    if v < 0:
        raise ContractError("speed must be nonnegative")
    l = coeffs.values
    return (l[0] + l[1] * v + l[2] * v ** 3 + l[3] * v * a + l[4] * v ** 2
            + l[5] * v ** 4 + l[6] * v ** 2 * a + l[7] * v ** 3 * a
            + l[8] * v * a ** 2)


@dataclass(frozen=True)
class TripMetrics:
    distance_miles: float
    fuel_g_per_mile: float | None = None
    emissions_g_per_mile: dict[str, float] | None = None
    energy_kj_per_mile: float | None = None
    gap_rmse_m: float | None = None


def gap_rmse(gaps: np.ndarray, reference: float = 55.0) -> float:
    gaps = np.asarray(gaps, dtype=float)
    return float(np.sqrt(np.mean((gaps - reference) ** 2)))


def trip_metrics(t: np.ndarray, v: np.ndarray, a: np.ndarray,
                 gaps: np.ndarray | None, model,
                 reference_gap: float = 55.0,
                 clamp_regen: bool = True) -> TripMetrics:
    """Trapezoid-integrate rates over a uniformly sampled trajectory.

    model is an IcePowertrain or EvCoefficients; per-mile figures divide
    totals by the trapezoidal travel distance.
    """
    t = np.asarray(t, dtype=float)
    v = np.asarray(v, dtype=float)
    a = np.asarray(a, dtype=float)
    if len(t) < 2:
        raise ContractError("need at least 2 samples")
    if not (len(t) == len(v) == len(a)):
        raise ContractError("t, v, a must have equal lengths")
    distance_m = float(np.trapezoid(v, t))
    if distance_m <= 0:
        raise ContractError("trip distance must be positive")
    miles = distance_m / METERS_PER_MILE

    rmse = None
    if gaps is not None:
        rmse = gap_rmse(gaps, reference_gap)

    if isinstance(model, IcePowertrain):
        fuel = np.array([cmem_fuel_rate(vi, ai, model) for vi, ai in zip(v, a)])
        total_fuel = float(np.trapezoid(fuel, t))
        per_species = {}
        for spec in model.emissions:
            rate = fuel * spec.engine_out_index * spec.catalyst_pass_fraction
            per_species[spec.species] = float(np.trapezoid(rate, t)) / miles
        return TripMetrics(
            distance_miles=miles,
            fuel_g_per_mile=total_fuel / miles,
            emissions_g_per_mile=per_species,
            gap_rmse_m=rmse,
        )
    if isinstance(model, EvCoefficients):
        power = np.array([ev_power(vi, ai, model) for vi, ai in zip(v, a)])
        if clamp_regen:
            power = np.maximum(power, 0.0)
        total_kj = float(np.trapezoid(power, t))  # kW over s -> kJ
        return TripMetrics(
            distance_miles=miles,
            energy_kj_per_mile=total_kj / miles,
            gap_rmse_m=rmse,
        )
    raise ContractError(f"unknown energy model {type(model)!r}")
