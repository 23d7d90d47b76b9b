"""Lead-vehicle speed traces.

Virtual traces are sums of 10 sinusoids around a 30 m/s cruise; real-world
traces are ingested from `t,v` CSV and resampled onto a uniform grid.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

BASE_SPEED = 30.0
AMPLITUDE_SCALE = 0.3
ANGULAR_MULTIPLIER = 2.0
N_TERMS = 10

TEST_SET_DURATION_S = 240.0
TEST_SET_SIZE = 4
DEFAULT_DT = 0.02


class TraceError(ValueError):
    """Raised for malformed or unparsable trace input."""


@dataclass(frozen=True)
class SinusoidSpec:
    """Parameters of one generated lead trace: v(t) = 30 + 0.3 * sum A_i sin(2 w_i t)."""

    signs: tuple[int, ...]
    omegas: tuple[float, ...]

    def __post_init__(self):
        if len(self.signs) != N_TERMS or len(self.omegas) != N_TERMS:
            raise TraceError(f"expected {N_TERMS} terms")
        if any(s not in (-1, 1) for s in self.signs):
            raise TraceError("signs must be -1 or +1")
        if any(not 0.0 < w < 1.0 for w in self.omegas):
            raise TraceError("omegas must lie in (0, 1)")


@dataclass(frozen=True)
class SpeedTrace:
    dt: float
    samples: np.ndarray  # m/s, uniform grid
    source: str = "generated"  # generated | ingested | recorded

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        if samples.ndim != 1 or samples.size < 2:
            raise TraceError("a trace needs at least 2 samples")
        if not np.all(np.isfinite(samples)) or np.any(samples < 0):
            raise TraceError("trace samples must be finite and nonnegative")
        object.__setattr__(self, "samples", samples)

    @property
    def duration(self) -> float:
        return (len(self.samples) - 1) * self.dt


@dataclass(frozen=True)
class TraceLimits:
    speed: tuple[float, float]
    accel: tuple[float, float]

    def __post_init__(self):
        if self.speed[0] > self.speed[1] or self.accel[0] > self.accel[1]:
            raise TraceError("limit intervals must be nonempty")


ICE_LIMITS = TraceLimits(speed=(27.0, 33.0), accel=(-3.5, 3.5))
EV_LIMITS = TraceLimits(speed=(0.0, 30.0), accel=(-5.5, 3.5))


@dataclass(frozen=True)
class Violation:
    index: int
    kind: str   # "speed" | "accel"
    value: float
    limit: tuple[float, float]


def sample_spec(rng: np.random.Generator) -> SinusoidSpec:
    """Draw signs uniformly from {-1, +1} and frequencies uniformly from (0, 1)."""
    signs = tuple(int(s) for s in rng.choice([-1, 1], size=N_TERMS))
    omegas = tuple(float(w) for w in rng.uniform(0.0, 1.0, size=N_TERMS))
    # uniform(0,1) can return exactly 0.0; nudge into the open interval
    omegas = tuple(w if w > 0.0 else np.nextafter(0.0, 1.0) for w in omegas)
    return SinusoidSpec(signs=signs, omegas=omegas)


def eval_speed(spec: SinusoidSpec, t) -> float | np.ndarray:
    """Evaluate the sinusoid-pool speed at time t (scalar or array, seconds)."""
    t = np.asarray(t, dtype=float)
    signs = np.asarray(spec.signs, dtype=float)
    omegas = np.asarray(spec.omegas, dtype=float)
    terms = signs * np.sin(ANGULAR_MULTIPLIER * omegas * t[..., None])
    out = BASE_SPEED + AMPLITUDE_SCALE * terms.sum(axis=-1)
    return float(out) if out.ndim == 0 else out


def _rate_limit(samples: np.ndarray, dt: float, accel: tuple[float, float]) -> np.ndarray:
    """Clamp successive differences so finite-difference accel stays in limits."""
    out = samples.copy()
    lo, hi = accel[0] * dt, accel[1] * dt
    for i in range(1, len(out)):
        out[i] = out[i - 1] + min(max(samples[i] - out[i - 1], lo), hi)
    return out


def generate_trace(spec: SinusoidSpec, duration: float, dt: float = DEFAULT_DT,
                   limits: TraceLimits = ICE_LIMITS) -> SpeedTrace:
    """Sample a SinusoidSpec on the dt grid, rate-limited to the accel interval."""
    n = int(round(duration / dt)) + 1
    t = np.arange(n) * dt
    v = eval_speed(spec, t)
    v = _rate_limit(np.asarray(v), dt, limits.accel)
    return SpeedTrace(dt=dt, samples=v, source="generated")


def load_trace(stream, target_dt: float) -> SpeedTrace:
    """Parse `t,v` CSV and linearly interpolate onto a uniform target_dt grid.

    Accepts a text stream or a string of CSV content.
    """
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    if target_dt <= 0:
        raise TraceError("target dt must be positive")
    times: list[float] = []
    speeds: list[float] = []
    for lineno, line in enumerate(stream, start=1):
        line = line.strip()
        if not line:
            continue
        if lineno == 1 and line.lower().replace(" ", "") == "t,v":
            continue
        parts = line.split(",")
        if len(parts) != 2:
            raise TraceError(f"line {lineno}: expected 2 fields, got {len(parts)}")
        try:
            t, v = float(parts[0]), float(parts[1])
        except ValueError as exc:
            raise TraceError(f"line {lineno}: unparsable field ({exc})") from None
        if times and t <= times[-1]:
            raise TraceError(f"line {lineno}: time {t} not after previous {times[-1]}")
        if v < 0:
            raise TraceError(f"line {lineno}: negative speed {v}")
        times.append(t)
        speeds.append(v)
    if len(times) < 2:
        raise TraceError(f"need at least 2 rows, got {len(times)}")
    duration = times[-1] - times[0]
    n = int(np.floor(duration / target_dt + 1e-9)) + 1
    grid = times[0] + np.arange(n) * target_dt
    samples = np.interp(grid, times, speeds)
    return SpeedTrace(dt=target_dt, samples=samples, source="ingested")


def dump_trace(trace: SpeedTrace) -> str:
    """Render a trace in the `t,v` CSV schema."""
    lines = ["t,v"]
    for i, v in enumerate(trace.samples):
        lines.append(f"{i * trace.dt:.6f},{v:.9f}")
    return "\n".join(lines) + "\n"


def validate_trace(trace: SpeedTrace, limits: TraceLimits) -> list[Violation]:
    """Report every sample / finite-difference accel outside the closed intervals."""
    violations: list[Violation] = []
    lo, hi = limits.speed
    for i, v in enumerate(trace.samples):
        if not lo <= v <= hi:
            violations.append(Violation(index=i, kind="speed", value=float(v), limit=limits.speed))
    alo, ahi = limits.accel
    accel = np.diff(trace.samples) / trace.dt
    for i, a in enumerate(accel):
        if not alo <= a <= ahi:
            violations.append(Violation(index=i + 1, kind="accel", value=float(a), limit=limits.accel))
    return violations


def make_test_set(seed: int, duration: float = TEST_SET_DURATION_S,
                  dt: float = DEFAULT_DT) -> list[SpeedTrace]:
    """Build the fixed 4-trace test set from 4 distinct seeded sinusoid specs."""
    rng = np.random.default_rng(seed)
    return [generate_trace(sample_spec(rng), duration, dt) for _ in range(TEST_SET_SIZE)]
