"""DDQN training and inference.

Rewards are piecewise linear around the paper-anchored bands (gap peak at
55 m, zeros at 30/80 m; force plateau |f| <= 0.3), the replay buffer is a
uniform ring, and bootstrap targets use online-net selection with
target-net evaluation. The training loop is single-threaded and fully
deterministic given (seed, config).
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field, asdict

import numpy as np

from . import netcore, simcore, trajectory, vision
from .control import ActionSpace, N_ACTIONS
from .simcore import ActuatorMap, ContractError, EpisodeSpec, TerminationStatus

FEATURE_LEN = 8  # history length for the non-vision feature state

# fixed normalizers for network inputs
SPEED_NORM = 30.0
GAP_NORM = 55.0
PIXEL_NORM = 255.0


@dataclass(frozen=True)
class RewardConfig:
    mode: str = "gap"                # "gap" | "gap+force"
    desired_gap: float = 55.0
    gap_band: tuple[float, float] = (30.0, 80.0)
    force_band: tuple[float, float] = (-0.3, 0.3)
    outer_width: float = 25.0        # m from zero-crossing down to the -1 floor

    def __post_init__(self):
        if not self.gap_band[0] < self.desired_gap < self.gap_band[1]:
            raise ContractError("desired gap must lie inside the encouraged band")
        if self.mode not in ("gap", "gap+force"):
            raise ContractError(f"unknown reward mode {self.mode!r}")


@dataclass(frozen=True)
class TrainConfig:
    discount: float = 0.99
    batch_size: int = 32
    target_sync_period: int = 1000
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_decay_steps: int = 50_000
    learning_rate: float = 1e-4
    buffer_capacity: int = 50_000
    learning_starts: int = 1_000
    seed: int = 0
    max_episodes: int = 300
    max_steps_per_episode: int = 1500
    action_repeat: int = 1
    checkpoint_period_episodes: int = 100

    def __post_init__(self):
        if not 0.0 < self.discount < 1.0:
            raise ContractError("discount must lie in (0, 1)")
        if self.action_repeat < 1:
            raise ContractError("action_repeat must be >= 1")


def gap_reward(g: float, cfg: RewardConfig = RewardConfig()) -> float:
    """Piecewise linear: 1 at the desired gap, 0 at the band edges, floor -1."""
    if not math.isfinite(g):
        raise ContractError("gap must be finite")
    lo, hi = cfg.gap_band
    if g <= cfg.desired_gap:
        r = (g - lo) / (cfg.desired_gap - lo)
    else:
        r = (hi - g) / (hi - cfg.desired_gap)
    return max(r, -1.0)


def force_reward(f: float, cfg: RewardConfig = RewardConfig()) -> float:
    """1 on the encouraged plateau, linear descent to -1 at |f| = 1."""
    if abs(f) > 1.0:
        raise ContractError("force outside [-1, 1]")
    plateau = cfg.force_band[1]
    if abs(f) <= plateau:
        return 1.0
    return 1.0 - 2.0 * (abs(f) - plateau) / (1.0 - plateau)


def combined_reward(g: float, f: float, cfg: RewardConfig = RewardConfig(),
                    collided: bool = False) -> float:
    """Normalized to [-1, 1]; collision overrides everything with the floor."""
    if collided:
        return -1.0
    if cfg.mode == "gap":
        return gap_reward(g, cfg)
    return 0.5 * (gap_reward(g, cfg) + force_reward(f, cfg))


@dataclass(frozen=True)
class FeatureState:
    """Desk-scale non-vision state: 8 host speeds + 8 gaps, oldest first."""

    speeds: tuple[float, ...]
    gaps: tuple[float, ...]

    def __post_init__(self):
        if len(self.speeds) != FEATURE_LEN or len(self.gaps) != FEATURE_LEN:
            raise ContractError(f"feature state needs exactly {FEATURE_LEN} of each")
        if any(not math.isfinite(x) for x in self.speeds + self.gaps):
            raise ContractError("feature state must be finite")


def encode_state(state) -> tuple[np.ndarray, ...]:
    """Network-input arrays (unbatched) for either state kind."""
    if isinstance(state, FeatureState):
        return (np.concatenate([
            np.asarray(state.speeds, dtype=np.float32) / SPEED_NORM,
            np.asarray(state.gaps, dtype=np.float32) / GAP_NORM,
        ]),)
    if isinstance(state, vision.FrameStack):
        images = np.stack(state.frames).astype(np.float32) / PIXEL_NORM
        speeds = np.asarray(state.speeds, dtype=np.float32) / SPEED_NORM
        return images, speeds
    raise ContractError(f"unknown state kind {type(state)!r}")


def batch_states(encoded: list[tuple[np.ndarray, ...]]) -> tuple[np.ndarray, ...]:
    return tuple(np.stack(parts) for parts in zip(*encoded))


@dataclass(frozen=True)
class Transition:
    state: tuple[np.ndarray, ...]
    action: int
    reward: float
    next_state: tuple[np.ndarray, ...]
    done: bool

    def __post_init__(self):
        if not 0 <= self.action < N_ACTIONS:
            raise ContractError("action index out of range")
        if not -1.0 <= self.reward <= 1.0:
            raise ContractError("reward outside [-1, 1]")


class ReplayBuffer:
    """Uniform-sampling ring buffer."""

    def __init__(self, capacity: int = 50_000):
        if capacity < 1:
            raise ContractError("capacity must be positive")
        self.capacity = capacity
        self._store: list[Transition] = []
        self._next = 0

    def __len__(self):
        return len(self._store)

    def push(self, transition: Transition) -> None:
        if len(self._store) < self.capacity:
            self._store.append(transition)
        else:
            self._store[self._next] = transition
        self._next = (self._next + 1) % self.capacity

    def sample(self, batch_size: int, rng: np.random.Generator) -> list[Transition]:
        if len(self._store) < batch_size:
            raise ContractError("replay buffer holds fewer transitions than the batch size")
        idx = rng.integers(0, len(self._store), size=batch_size)
        return [self._store[i] for i in idx]


def epsilon_at(step: int, cfg: TrainConfig) -> float:
    frac = min(step / cfg.epsilon_decay_steps, 1.0)
    return cfg.epsilon_start + (cfg.epsilon_end - cfg.epsilon_start) * frac


def select_action(net, state, epsilon: float, rng: np.random.Generator) -> int:
    """Epsilon-greedy over the 21 actions; greedy ties break to the lowest index."""
    if not 0.0 <= epsilon <= 1.0:
        raise ContractError("epsilon outside [0, 1]")
    if epsilon > 0.0 and rng.random() < epsilon:
        return int(rng.integers(0, N_ACTIONS))
    encoded = encode_state(state) if not isinstance(state, tuple) else state
    q = net.forward(*(p[None] for p in encoded))[0]
    return int(np.argmax(q))


def ddqn_targets(batch: list[Transition], online, target, gamma: float) -> np.ndarray:
    """y = r + gamma*(1-done)*Q_target(s', argmax_a Q_online(s', a))."""
    next_batch = batch_states([t.next_state for t in batch])
    q_online_next = online.forward(*next_batch)
    best = np.argmax(q_online_next, axis=1)
    q_target_next = target.forward(*next_batch)
    rewards = np.array([t.reward for t in batch], dtype=np.float64)
    not_done = np.array([0.0 if t.done else 1.0 for t in batch])
    return rewards + gamma * not_done * q_target_next[np.arange(len(batch)), best]


def sync_target(online, target) -> None:
    for (_, src, _), (_, dst, _) in zip(online.named_params(), target.named_params()):
        dst[...] = src


def huber(residual: np.ndarray, delta: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Per-element Huber loss and its derivative w.r.t. the residual."""
    absr = np.abs(residual)
    quad = absr <= delta
    loss = np.where(quad, 0.5 * residual ** 2, delta * (absr - 0.5 * delta))
    grad = np.where(quad, residual, delta * np.sign(residual))
    return loss, grad


def train_step(buffer: ReplayBuffer, online, target, opt: netcore.Adam,
               cfg: TrainConfig, rng: np.random.Generator, global_step: int) -> float:
    """One uniform-batch Huber update on the chosen actions; periodic target sync."""
    batch = buffer.sample(cfg.batch_size, rng)
    y = ddqn_targets(batch, online, target, cfg.discount)
    state_batch = batch_states([t.state for t in batch])
    q = online.forward(*state_batch)
    actions = np.array([t.action for t in batch])
    residual = q[np.arange(len(batch)), actions] - y
    loss, grad = huber(residual)
    dq = np.zeros_like(q)
    dq[np.arange(len(batch)), actions] = grad / len(batch)
    online.zero_grads()
    online.backward(dq)
    opt.step(online, lr=cfg.learning_rate)
    if cfg.target_sync_period > 0 and (global_step + 1) % cfg.target_sync_period == 0:
        sync_target(online, target)
    return float(loss.mean())


class SinusoidSource:
    """Fresh 10-sinusoid lead trace per episode (virtual / ICE training)."""

    def __init__(self, limits: trajectory.TraceLimits = trajectory.ICE_LIMITS):
        self.limits = limits

    def episode_trace(self, n_steps: int, dt: float, rng: np.random.Generator) -> np.ndarray:
        spec = trajectory.sample_spec(rng)
        return trajectory.generate_trace(spec, n_steps * dt, dt, self.limits).samples


class ConstantSource:
    """Constant-speed lead (desk-scale learning-progress runs)."""

    def __init__(self, speed: float = 30.0):
        self.speed = speed

    def episode_trace(self, n_steps: int, dt: float, rng) -> np.ndarray:
        return np.full(n_steps + 1, self.speed)


class FixedTraceSource:
    """Cycle through pre-built traces (EV ingested data, fixed test sets)."""

    def __init__(self, traces: list[trajectory.SpeedTrace]):
        if not traces:
            raise ContractError("need at least one trace")
        self.traces = traces
        self._i = 0

    def episode_trace(self, n_steps: int, dt: float, rng) -> np.ndarray:
        samples = self.traces[self._i % len(self.traces)].samples
        self._i += 1
        if len(samples) < n_steps + 1:
            reps = int(np.ceil((n_steps + 1) / len(samples)))
            samples = np.tile(samples, reps)
        return samples[: n_steps + 1]


class AccEnv:
    """Gym-style wrapper tying sim-core, trajectory and (optionally) vision.

    step() applies a discrete force for action_repeat ticks; the reward uses
    the gap after the move and the force that produced it (one-step
    actuation delay).
    """

    def __init__(self, spec: EpisodeSpec, trace_source, reward_cfg: RewardConfig,
                 state_mode: str = "feature", action_repeat: int = 1,
                 max_steps: int | None = None,
                 actuator: ActuatorMap = ActuatorMap(),
                 action_space: ActionSpace = ActionSpace(),
                 camera: vision.CameraModel = vision.LOW_RES):
        if state_mode not in ("feature", "vision"):
            raise ContractError(f"unknown state mode {state_mode!r}")
        self.spec = spec
        self.trace_source = trace_source
        self.reward_cfg = reward_cfg
        self.state_mode = state_mode
        self.action_repeat = action_repeat
        self.max_steps = spec.max_steps if max_steps is None else max_steps
        self.actuator = actuator
        self.action_space = action_space
        self.camera = camera
        self.world = None
        self._trace = None
        self._speeds = None
        self._gaps = None
        self._stack = None

    def _observe(self):
        if self.state_mode == "feature":
            return FeatureState(speeds=tuple(self._speeds), gaps=tuple(self._gaps))
        return self._stack

    def reset(self, rng: np.random.Generator):
        self.world = simcore.reset(self.spec, rng)
        self._trace = self.trace_source.episode_trace(self.max_steps, self.spec.dt, rng)
        self.world = simcore.WorldState(
            sim_time=0.0, step_index=0,
            lead=simcore.VehicleKinematics(self.world.lead.position, float(self._trace[0])),
            host=self.world.host, vehicle_length=self.world.vehicle_length,
        )
        g = simcore.gap(self.world)
        v = self.world.host.speed
        if self.state_mode == "feature":
            self._speeds = [v] * FEATURE_LEN
            self._gaps = [g] * FEATURE_LEN
        else:
            frame = vision.preprocess(vision.render(self.world, self.camera), self.camera)
            self._stack = vision.bootstrap_stack(frame, v)
        return self._observe()

    def current_gap(self) -> float:
        return simcore.gap(self.world)

    def step(self, action_index: int):
        """Returns (state, reward, done, info) with info carrying gap/force/status."""
        return self.step_force(self.action_space.forces[action_index])

    def step_force(self, force: float):
        """Apply a raw normalized force (bridge and cockpit path)."""
        accel = simcore.force_to_accel(force, self.actuator)
        status = TerminationStatus.RUNNING
        for _ in range(self.action_repeat):
            k = min(self.world.step_index + 1, len(self._trace) - 1)
            self.world = simcore.step(self.world, accel, float(self._trace[k]), self.spec)
            status = simcore.check_termination(self.world, self.spec)
            if status is TerminationStatus.RUNNING and self.world.step_index >= self.max_steps:
                status = TerminationStatus.TIME_LIMIT
            if status is not TerminationStatus.RUNNING:
                break
        g = simcore.gap(self.world)
        v = self.world.host.speed
        collided = status is TerminationStatus.COLLISION
        reward = combined_reward(g, force, self.reward_cfg, collided=collided)
        if self.state_mode == "feature":
            self._speeds = self._speeds[1:] + [v]
            self._gaps = self._gaps[1:] + [g]
        elif not collided:
            frame = vision.preprocess(vision.render(self.world, self.camera), self.camera)
            self._stack = vision.push(self._stack, frame, v)
        done = status is not TerminationStatus.RUNNING
        info = {"gap": g, "force": force, "status": status,
                "speed": v, "time": self.world.sim_time}
        return self._observe(), reward, done, info


def make_network(state_mode: str, camera: vision.CameraModel, seed: int,
                 dtype=np.float32):
    if state_mode == "feature":
        return netcore.FeatureQNetwork(n_inputs=2 * FEATURE_LEN, seed=seed, dtype=dtype)
    rows, cols = camera.proc_shape
    topo = netcore.QTopology(image_shape=(vision.STACK_LEN, rows, cols))
    return netcore.QNetwork(topo, seed=seed, dtype=dtype)


def run_training(env: AccEnv, cfg: TrainConfig, out_dir: str | None = None,
                 progress: bool = False) -> dict:
    """Fig. 1-style loop: observe, act, step, store, learn; one episode per reset.

    Writes reward_curve.csv, periodic + final checkpoints and a manifest when
    out_dir is given. Returns the training history.
    """
    seeds = np.random.SeedSequence(cfg.seed).spawn(3)
    env_rng = np.random.default_rng(seeds[0])
    action_rng = np.random.default_rng(seeds[1])
    batch_rng = np.random.default_rng(seeds[2])

    online = make_network(env.state_mode, env.camera, seed=cfg.seed)
    target = netcore.clone_into_target(online)
    opt = netcore.Adam(online, lr=cfg.learning_rate)
    buffer = ReplayBuffer(cfg.buffer_capacity)

    history = {"episode": [], "steps": [], "mean_reward": []}
    global_step = 0
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)

    for episode in range(cfg.max_episodes):
        state = env.reset(env_rng)
        encoded = encode_state(state)
        rewards = []
        for _ in range(cfg.max_steps_per_episode):
            eps = epsilon_at(global_step, cfg)
            action = select_action(online, encoded, eps, action_rng)
            next_state, reward, done, _ = env.step(action)
            next_encoded = encode_state(next_state)
            buffer.push(Transition(encoded, action, reward, next_encoded, done))
            rewards.append(reward)
            if len(buffer) >= max(cfg.batch_size, cfg.learning_starts):
                loss = train_step(buffer, online, target, opt, cfg, batch_rng, global_step)
                if not math.isfinite(loss):
                    raise ContractError(f"non-finite loss at step {global_step}")
            global_step += 1
            encoded = next_encoded
            if done:
                break
        history["episode"].append(episode)
        history["steps"].append(len(rewards))
        history["mean_reward"].append(float(np.mean(rewards)))
        if progress and (episode + 1) % 20 == 0:
            print(f"episode {episode + 1}/{cfg.max_episodes} "
                  f"mean_reward={history['mean_reward'][-1]:+.3f} eps={eps:.2f}")
        if out_dir and (episode + 1) % cfg.checkpoint_period_episodes == 0:
            netcore.save_checkpoint(online, os.path.join(out_dir, f"ckpt_ep{episode + 1:05d}.qnet"))

    if out_dir:
        netcore.save_checkpoint(online, os.path.join(out_dir, "ckpt_final.qnet"))
        with open(os.path.join(out_dir, "reward_curve.csv"), "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["episode", "steps", "mean_reward"])
            for e, s, r in zip(history["episode"], history["steps"], history["mean_reward"]):
                writer.writerow([e, s, f"{r:.9f}"])
        manifest = {
            "train_config": asdict(cfg),
            "reward_config": asdict(env.reward_cfg),
            "state_mode": env.state_mode,
            "episode_spec": asdict(env.spec),
            "seed": cfg.seed,
        }
        with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
    history["network"] = online
    return history


def moving_average(values, window: int = 100) -> np.ndarray:
    """Trailing moving average used for the reward-curve plots."""
    values = np.asarray(values, dtype=float)
    out = np.empty_like(values)
    csum = np.cumsum(values)
    for i in range(len(values)):
        lo = max(0, i - window + 1)
        out[i] = (csum[i] - (csum[lo - 1] if lo > 0 else 0.0)) / (i - lo + 1)
    return out
