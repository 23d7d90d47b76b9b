"""Sim <-> agent transport.

Two channels: a little-endian binary datagram protocol for external agents
(lockstep: the simulation freezes until the action for the current tick
arrives or times out), and a JSON text-frame gateway feeding the browser
cockpit. Transports are pluggable so tests can run over lossless or lossy
in-memory links as well as real UDP sockets.
"""

from __future__ import annotations

import json
import math
import socket
import struct
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .simcore import ContractError, TerminationStatus

MAGIC = b"ACC1"
VERSION = 1
HEADER = struct.Struct("<4sBBIH")  # magic, version, msg_type, seq, payload_len

TYPE_STATE = 1
TYPE_ACTION = 2
TYPE_RESET = 3
TYPE_EPISODE_END = 4
TYPE_ACK = 5

ACTION_MODE_INDEX = 0
ACTION_MODE_FORCE = 1

_STATUS_CODES = {
    TerminationStatus.RUNNING: 0,
    TerminationStatus.COLLISION: 1,
    TerminationStatus.GAP_EXCEEDED: 2,
    TerminationStatus.TIME_LIMIT: 3,
}
_STATUS_FROM_CODE = {v: k for k, v in _STATUS_CODES.items()}
TRANSPORT_FAILURE_CODE = 4


class DecodeError(ValueError):
    """Malformed datagram; decode never raises anything else."""


class TransportTimeout(Exception):
    """No datagram arrived within the allotted time."""


@dataclass(frozen=True)
class StateMsg:
    seq: int
    step: int
    sim_time: float
    host_speed: float
    lead_speed: float
    gap: float
    frame: np.ndarray | None = None

    def __eq__(self, other):
        if not isinstance(other, StateMsg):
            return NotImplemented
        same_frame = (self.frame is None and other.frame is None) or (
            self.frame is not None and other.frame is not None
            and np.array_equal(self.frame, other.frame))
        return (self.seq, self.step, self.sim_time, self.host_speed,
                self.lead_speed, self.gap) == (
            other.seq, other.step, other.sim_time, other.host_speed,
            other.lead_speed, other.gap) and same_frame


@dataclass(frozen=True)
class ActionMsg:
    seq: int
    step: int
    mode: int = ACTION_MODE_INDEX
    action_index: int | None = None
    force: float | None = None

    def __post_init__(self):
        if self.mode == ACTION_MODE_INDEX:
            if self.action_index is None or not 0 <= self.action_index < 21:
                raise ContractError("action index must be in 0..20")
        elif self.mode == ACTION_MODE_FORCE:
            if self.force is None or abs(self.force) > 1.0:
                raise ContractError("force must lie in [-1, 1]")
        else:
            raise ContractError(f"unknown action mode {self.mode}")


@dataclass(frozen=True)
class ResetMsg:
    seq: int


@dataclass(frozen=True)
class EpisodeEndMsg:
    seq: int
    step: int
    status_code: int


@dataclass(frozen=True)
class AckMsg:
    seq: int


@dataclass(frozen=True)
class SessionConfig:
    action_timeout_s: float = 0.1
    max_consecutive_timeouts: int = 50
    tick_rate_hz: float = 50.0
    cockpit_rate_hz: float = 20.0
    send_frames: bool = False

    def __post_init__(self):
        if min(self.action_timeout_s, self.max_consecutive_timeouts,
               self.tick_rate_hz, self.cockpit_rate_hz) <= 0:
            raise ContractError("session parameters must be positive")


def _frame_bytes(header_type, seq, payload):
    return HEADER.pack(MAGIC, VERSION, header_type, seq, len(payload)) + payload


def encode(msg) -> bytes:
    if isinstance(msg, StateMsg):
        flag = 0 if msg.frame is None else 1
        payload = struct.pack("<IdfffB", msg.step, msg.sim_time, msg.host_speed,
                              msg.lead_speed, msg.gap, flag)
        if msg.frame is not None:
            h, w = msg.frame.shape
            payload += struct.pack("<HH", w, h)
            payload += np.ascontiguousarray(msg.frame, dtype=np.uint8).tobytes()
        return _frame_bytes(TYPE_STATE, msg.seq, payload)
    if isinstance(msg, ActionMsg):
        if msg.mode == ACTION_MODE_INDEX:
            payload = struct.pack("<IBB", msg.step, msg.mode, msg.action_index)
        else:
            payload = struct.pack("<IBf", msg.step, msg.mode, msg.force)
        return _frame_bytes(TYPE_ACTION, msg.seq, payload)
    if isinstance(msg, ResetMsg):
        return _frame_bytes(TYPE_RESET, msg.seq, b"")
    if isinstance(msg, EpisodeEndMsg):
        return _frame_bytes(TYPE_EPISODE_END, msg.seq,
                            struct.pack("<IB", msg.step, msg.status_code))
    if isinstance(msg, AckMsg):
        return _frame_bytes(TYPE_ACK, msg.seq, b"")
    raise ContractError(f"cannot encode {type(msg)!r}")


def decode(data: bytes):
    """Total: any byte string either decodes or raises DecodeError."""
    if len(data) < HEADER.size:
        raise DecodeError(f"datagram too short ({len(data)} bytes)")
    magic, version, msg_type, seq, payload_len = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise DecodeError(f"bad magic {magic!r}")
    if version != VERSION:
        raise DecodeError(f"unsupported version {version}")
    payload = data[HEADER.size:]
    if len(payload) != payload_len:
        raise DecodeError(f"payload length {len(payload)} != declared {payload_len}")
    try:
        if msg_type == TYPE_STATE:
            step, sim_time, host_v, lead_v, gap, flag = struct.unpack_from("<IdfffB", payload)
            frame = None
            if flag == 1:
                w, h = struct.unpack_from("<HH", payload, 25)
                pixels = payload[29:]
                if len(pixels) != w * h:
                    raise DecodeError("frame pixel count mismatch")
                frame = np.frombuffer(pixels, dtype=np.uint8).reshape(h, w)
            elif flag != 0:
                raise DecodeError(f"bad frame flag {flag}")
            return StateMsg(seq, step, sim_time, host_v, lead_v, gap, frame)
        if msg_type == TYPE_ACTION:
            step, mode = struct.unpack_from("<IB", payload)
            if mode == ACTION_MODE_INDEX:
                (index,) = struct.unpack_from("<B", payload, 5)
                if index >= 21:
                    raise DecodeError(f"action index {index} out of range")
                return ActionMsg(seq, step, mode, action_index=index)
            if mode == ACTION_MODE_FORCE:
                (force,) = struct.unpack_from("<f", payload, 5)
                if not math.isfinite(force) or abs(force) > 1.0:
                    raise DecodeError(f"force {force} out of range")
                return ActionMsg(seq, step, mode, force=force)
            raise DecodeError(f"unknown action mode {mode}")
        if msg_type == TYPE_RESET:
            return ResetMsg(seq)
        if msg_type == TYPE_EPISODE_END:
            step, status = struct.unpack_from("<IB", payload)
            return EpisodeEndMsg(seq, step, status)
        if msg_type == TYPE_ACK:
            return AckMsg(seq)
        raise DecodeError(f"unknown message type {msg_type}")
    except struct.error as exc:
        raise DecodeError(f"truncated payload: {exc}") from None


class LoopbackTransport:
    """In-memory datagram pair; optional seeded drop on send.

    recv blocks on a condition variable up to the caller's timeout, so both
    ends can live on different threads; a zero timeout polls the queue.
    """

    def __init__(self, drop_rate: float = 0.0, rng: np.random.Generator | None = None):
        import threading

        self._lock = threading.Lock()
        self._cond = threading.Condition(self._lock)
        self._a_to_b: deque[bytes] = deque()
        self._b_to_a: deque[bytes] = deque()
        self.drop_rate = drop_rate
        self.rng = rng or np.random.default_rng(0)
        self.server = _LoopbackEnd(self, self._b_to_a, self._a_to_b)
        self.client = _LoopbackEnd(self, self._a_to_b, self._b_to_a)

    def _maybe_drop(self) -> bool:
        return self.drop_rate > 0 and self.rng.random() < self.drop_rate


class _LoopbackEnd:
    def __init__(self, pair, rx, tx):
        self._pair, self._rx, self._tx = pair, rx, tx

    def send(self, data: bytes) -> None:
        with self._pair._cond:
            if not self._pair._maybe_drop():
                self._tx.append(data)
                self._pair._cond.notify_all()

    def recv(self, timeout: float) -> bytes:
        with self._pair._cond:
            if not self._rx and timeout > 0:
                self._pair._cond.wait_for(lambda: bool(self._rx), timeout)
            if not self._rx:
                raise TransportTimeout
            return self._rx.popleft()

    def close(self):
        pass


class UdpTransport:
    """One endpoint of a UDP session; the peer address locks on first receive."""

    def __init__(self, bind=("127.0.0.1", 0), peer=None):
        self.sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        self.sock.bind(bind)
        self.peer = peer

    @property
    def address(self):
        return self.sock.getsockname()

    def send(self, data: bytes) -> None:
        if self.peer is None:
            raise ContractError("peer address not yet known")
        self.sock.sendto(data, self.peer)

    def recv(self, timeout: float) -> bytes:
        self.sock.settimeout(timeout)
        try:
            data, addr = self.sock.recvfrom(65535)
        except socket.timeout:
            raise TransportTimeout from None
        if self.peer is None:
            self.peer = addr
        return data

    def close(self):
        self.sock.close()


@dataclass
class EpisodeRecord:
    times: list[float] = field(default_factory=list)
    speeds: list[float] = field(default_factory=list)
    gaps: list[float] = field(default_factory=list)
    forces: list[float] = field(default_factory=list)
    rewards: list[float] = field(default_factory=list)
    status: TerminationStatus | str = TerminationStatus.RUNNING
    hold_events: int = 0
    steps: int = 0


def _await_action(transport, step: int, timeout: float):
    """Collect the ACTION echoing this step; stale echoes are discarded."""
    while True:
        msg = decode(transport.recv(timeout))
        if isinstance(msg, ActionMsg) and msg.step == step:
            return msg
        # stale action, duplicate reset, or anything else: ignore


def serve_episode(env, transport, cfg: SessionConfig = SessionConfig(),
                  env_rng: np.random.Generator | None = None,
                  await_reset: bool = True) -> EpisodeRecord:
    """Run one lockstep episode over a datagram transport.

    Per tick: send STATE, wait for the matching ACTION; on timeout reapply
    the previous force (initially 0); abort the episode as a transport
    failure after max_consecutive_timeouts in a row.
    """
    env_rng = env_rng or np.random.default_rng(0)
    if await_reset:
        while True:
            try:
                msg = decode(transport.recv(cfg.action_timeout_s))
            except (DecodeError, TransportTimeout):
                continue
            if isinstance(msg, ResetMsg):
                transport.send(encode(AckMsg(msg.seq)))
                break
    env.reset(env_rng)
    record = EpisodeRecord()
    force = 0.0
    consecutive_timeouts = 0
    seq = 0
    step_no = 0
    while True:
        world = env.world
        frame = None
        if cfg.send_frames and env.state_mode == "vision":
            frame = env._stack.frames[-1]
        transport.send(encode(StateMsg(
            seq=seq, step=step_no, sim_time=world.sim_time,
            host_speed=world.host.speed, lead_speed=world.lead.speed,
            gap=env.current_gap(), frame=frame)))
        try:
            action = _await_action(transport, step_no, cfg.action_timeout_s)
            consecutive_timeouts = 0
            if action.mode == ACTION_MODE_INDEX:
                force = env.action_space.forces[action.action_index]
            else:
                force = float(action.force)
        except (TransportTimeout, DecodeError):
            consecutive_timeouts += 1
            record.hold_events += 1
            if consecutive_timeouts > cfg.max_consecutive_timeouts:
                record.status = "transport_failure"
                transport.send(encode(EpisodeEndMsg(seq + 1, step_no, TRANSPORT_FAILURE_CODE)))
                return record
        _, reward, done, info = env.step_force(force)
        record.times.append(info["time"])
        record.speeds.append(info["speed"])
        record.gaps.append(info["gap"])
        record.forces.append(force)
        record.rewards.append(reward)
        record.steps += 1
        seq += 1
        step_no += 1
        if done:
            record.status = info["status"]
            transport.send(encode(EpisodeEndMsg(seq, step_no, _STATUS_CODES[info["status"]])))
            return record


def run_policy_client(transport, policy, cfg: SessionConfig = SessionConfig(),
                      send_reset: bool = True) -> int:
    """Loopback agent: answer every STATE with policy(state_msg) -> action index."""
    seq = 0
    if send_reset:
        transport.send(encode(ResetMsg(seq)))
        seq += 1
    answered = 0
    while True:
        try:
            msg = decode(transport.recv(cfg.action_timeout_s))
        except TransportTimeout:
            return answered
        except DecodeError:
            continue
        if isinstance(msg, EpisodeEndMsg):
            return answered
        if isinstance(msg, StateMsg):
            index = policy(msg)
            transport.send(encode(ActionMsg(seq, msg.step, ACTION_MODE_INDEX,
                                            action_index=int(index))))
            seq += 1
            answered += 1


class GatewaySession:
    """Transport-free cockpit session logic: force hold/decay and 20 Hz state frames.

    The websocket layer feeds wall-clock timestamps in; all rules (clamp,
    hold between control frames, decay to coast after 500 ms of silence,
    pause until first control) live here so they are directly testable.
    """

    COAST_AFTER_S = 0.5

    def __init__(self, env, cfg: SessionConfig = SessionConfig(),
                 env_rng: np.random.Generator | None = None):
        self.env = env
        self.cfg = cfg
        self.force = 0.0
        self.started = False
        self.last_control_time: float | None = None
        self._tick_accum = 0.0
        self.record = EpisodeRecord()
        self.done = False
        env.reset(env_rng or np.random.default_rng(0))

    def on_control(self, payload, now: float) -> None:
        """Handle one parsed control frame; malformed input is ignored."""
        if not isinstance(payload, dict) or payload.get("type") != "control":
            return
        force = payload.get("force")
        if not isinstance(force, (int, float)) or not math.isfinite(force):
            return
        self.force = min(max(float(force), -1.0), 1.0)
        self.last_control_time = now
        self.started = True

    def applied_force(self, now: float) -> float:
        if self.last_control_time is None or now - self.last_control_time > self.COAST_AFTER_S:
            return 0.0
        return self.force

    def advance(self, now: float) -> dict | None:
        """Advance one cockpit frame's worth of simulation, return the state frame.

        Before the first control frame the simulation does not tick.
        """
        if not self.started or self.done:
            return self.state_frame()
        force = self.applied_force(now)
        self._tick_accum += self.cfg.tick_rate_hz / self.cfg.cockpit_rate_hz
        reward = None
        while self._tick_accum >= 1.0 and not self.done:
            _, reward, done, info = self.env.step_force(force)
            self._tick_accum -= 1.0
            self.record.times.append(info["time"])
            self.record.speeds.append(info["speed"])
            self.record.gaps.append(info["gap"])
            self.record.forces.append(force)
            self.record.rewards.append(reward)
            self.record.steps += 1
            if done:
                self.done = True
                self.record.status = info["status"]
        return self.state_frame()

    def state_frame(self) -> dict:
        world = self.env.world
        g = self.env.current_gap()
        reward = self.record.rewards[-1] if self.record.rewards else 0.0
        return {
            "type": "state",
            "t": world.sim_time,
            "vHost": world.host.speed,
            "vLead": world.lead.speed,
            "gap": g,
            "force": self.force,
            "reward": reward,
        }


async def ws_gateway(env, host: str = "127.0.0.1", port: int = 8765,
                     cfg: SessionConfig = SessionConfig(),
                     realtime: bool = True, session_holder: list | None = None,
                     stop_event=None):
    """Serve a cockpit drive session over a websocket.

    One client at a time; each state frame is emitted at the cockpit rate
    (wall clock when realtime, else as fast as control frames arrive).
    """
    import asyncio
    import time as _time

    import websockets

    session = GatewaySession(env, cfg)
    if session_holder is not None:
        session_holder.append(session)
    frame_period = 1.0 / cfg.cockpit_rate_hz

    async def handler(ws):
        async def receiver():
            async for raw in ws:
                try:
                    payload = json.loads(raw)
                except (ValueError, TypeError):
                    continue
                session.on_control(payload, _time.monotonic())
                if not realtime:
                    frame = session.advance(_time.monotonic())
                    await ws.send(json.dumps(frame))

        recv_task = asyncio.ensure_future(receiver())
        try:
            if realtime:
                while not session.done:
                    frame = session.advance(_time.monotonic())
                    await ws.send(json.dumps(frame))
                    await asyncio.sleep(frame_period)
            else:
                await recv_task
        finally:
            recv_task.cancel()

    async def _run():
        async with websockets.serve(handler, host, port):
            if stop_event is not None:
                await stop_event.wait()
            else:
                await asyncio.Future()

    await _run()
