"""Run configuration: JSON in, validated dataclasses out.

Unknown keys are rejected and every error names the offending key path,
so a typo never silently falls back to a default.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from . import agent, energy, simcore
from .control import ConsensusGains
from .simcore import ActuatorMap, EpisodeSpec


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class BridgeConfig:
    udp_port: int = 47310
    ws_port: int = 8765
    action_timeout_s: float = 0.1
    max_consecutive_timeouts: int = 50


@dataclass(frozen=True)
class PathsConfig:
    traces_dir: str = "traces"
    checkpoints_dir: str = "checkpoints"
    out_dir: str = "out"
    human_sessions_dir: str = "human_sessions"


@dataclass(frozen=True)
class RunConfig:
    mode: str = "ice"                  # ice | ev
    reward: str = "gap"                # gap | gap+force
    state: str = "feature"             # feature | vision
    seed: int = 0
    gains: ConsensusGains = ConsensusGains()
    actuator: ActuatorMap = ActuatorMap()
    episode: EpisodeSpec = EpisodeSpec()
    train: agent.TrainConfig = agent.TrainConfig()
    reward_cfg: agent.RewardConfig = agent.RewardConfig()
    powertrain: energy.IcePowertrain = energy.IcePowertrain()
    ev_coefficients: energy.EvCoefficients = energy.EvCoefficients()
    paths: PathsConfig = PathsConfig()
    bridge: BridgeConfig = BridgeConfig()

    def __post_init__(self):
        if self.mode not in ("ice", "ev"):
            raise ConfigError(f"mode: expected 'ice' or 'ev', got {self.mode!r}")
        if self.state not in ("feature", "vision"):
            raise ConfigError(f"state: expected 'feature' or 'vision', got {self.state!r}")


# key name in JSON -> (dataclass, RunConfig field)
_SECTION_TYPES = {
    "gains": ConsensusGains,
    "actuator": ActuatorMap,
    "episode": EpisodeSpec,
    "train": agent.TrainConfig,
    "reward_cfg": agent.RewardConfig,
    "powertrain": energy.IcePowertrain,
    "ev_coefficients": energy.EvCoefficients,
    "paths": PathsConfig,
    "bridge": BridgeConfig,
}

_SCALARS = {"mode", "reward", "state", "seed"}

# fields that arrive as JSON lists but are tuples in the dataclasses
_TUPLE_FIELDS = {
    "lead_speed_range", "host_speed_range", "initial_gap_range",
    "gap_band", "force_band", "values",
}


def _build_section(cls, data: dict, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected an object")
    allowed = set(cls.__dataclass_fields__)
    kwargs = {}
    for key, value in data.items():
        if key not in allowed:
            raise ConfigError(f"{path}.{key}: unknown key")
        if key == "emissions":
            value = tuple(energy.EmissionSpec(**v) for v in value)
        elif key in _TUPLE_FIELDS and isinstance(value, list):
            value = tuple(value)
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except (simcore.ContractError, ValueError, TypeError) as exc:
        raise ConfigError(f"{path}: {exc}") from None


def from_dict(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("top level: expected an object")
    kwargs = {}
    for key, value in data.items():
        if key in _SCALARS:
            kwargs[key] = value
        elif key in _SECTION_TYPES:
            kwargs[key] = _build_section(_SECTION_TYPES[key], value, key)
        else:
            raise ConfigError(f"{key}: unknown key")
    if "episode" not in kwargs and kwargs.get("mode") == "ev":
        kwargs["episode"] = simcore.ev_episode_spec()
    try:
        return RunConfig(**kwargs)
    except (simcore.ContractError, ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from None


def parse_config(path: str) -> RunConfig:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}") from None
    return from_dict(data)
