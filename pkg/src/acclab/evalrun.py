"""Four-way method comparison over the fixed test set.

Replays each requested method (lead trace, gap/force DDQN checkpoints,
consensus baseline, recorded human sessions) over the same seeded initial
conditions, logs every trajectory as `t,v,a,gap,force` CSV, and builds a
table-style report whose numbers are all recomputable from those CSVs.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
from dataclasses import asdict

import numpy as np

from . import agent, control, energy, netcore, simcore, trajectory
from .config import RunConfig

METHOD_NAMES = ("lead", "gap_agent", "force_agent", "consensus", "human")
METHOD_LABELS = {
    "lead": "Leading Vehicle",
    "gap_agent": "Gap-based DDQN",
    "force_agent": "Force-based DDQN",
    "consensus": "Traditional ACC",
    "human": "Human Driving",
}


class MissingArtifact(FileNotFoundError):
    pass


def _energy_model(cfg: RunConfig):
    return cfg.powertrain if cfg.mode == "ice" else cfg.ev_coefficients


def write_trajectory_csv(path, t, v, a, gaps, forces) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t", "v", "a", "gap", "force"])
        for i in range(len(t)):
            g = "nan" if gaps is None else f"{gaps[i]:.9f}"
            writer.writerow([f"{t[i]:.6f}", f"{v[i]:.9f}", f"{a[i]:.9f}",
                             g, f"{forces[i]:.6f}"])


def read_trajectory_csv(path):
    rows = np.genfromtxt(path, delimiter=",", names=True)
    gaps = rows["gap"]
    if np.all(np.isnan(gaps)):
        gaps = None
    return rows["t"], rows["v"], rows["a"], gaps, rows["force"]


def metrics_from_csv(path, cfg: RunConfig) -> energy.TripMetrics:
    t, v, a, gaps, _ = read_trajectory_csv(path)
    return energy.trip_metrics(t, v, a, gaps, _energy_model(cfg),
                               reference_gap=cfg.reward_cfg.desired_gap)


def _finite_diff_accel(v: np.ndarray, dt: float) -> np.ndarray:
    a = np.zeros_like(v)
    a[1:] = np.diff(v) / dt
    return a


def _eval_spec(cfg: RunConfig, n_steps: int) -> simcore.EpisodeSpec:
    base = asdict(cfg.episode)
    base["max_steps"] = n_steps
    base["mode"] = simcore.MODE_ICE if cfg.mode == "ice" else simcore.MODE_EV
    return simcore.EpisodeSpec(**base)


def _make_env(cfg: RunConfig, trace: trajectory.SpeedTrace, state_mode: str,
              reward_mode: str) -> agent.AccEnv:
    n_steps = len(trace.samples) - 1
    return agent.AccEnv(
        spec=_eval_spec(cfg, n_steps),
        trace_source=agent.FixedTraceSource([trace]),
        reward_cfg=agent.RewardConfig(mode=reward_mode),
        state_mode=state_mode,
        action_repeat=1,
        actuator=cfg.actuator,
    )


def _trace_rng(seed: int, trace_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, trace_index]))


def rollout(env: agent.AccEnv, policy, rng: np.random.Generator):
    """Drive a full trace with policy(env) -> action index; returns arrays."""
    env.reset(rng)
    t = [0.0]
    v = [env.world.host.speed]
    gaps = [env.current_gap()]
    forces = [0.0]
    done = False
    while not done:
        action = policy(env)
        _, _, done, info = env.step(action)
        t.append(info["time"])
        v.append(info["speed"])
        gaps.append(info["gap"])
        forces.append(info["force"])
    t, v, gaps, forces = map(np.asarray, (t, v, gaps, forces))
    return t, v, _finite_diff_accel(v, env.spec.dt), gaps, forces


def consensus_policy(cfg: RunConfig):
    def policy(env: agent.AccEnv) -> int:
        a_ref = control.consensus_accel(
            env.current_gap(), env.world.host.speed, env.world.lead.speed,
            cfg.gains, cfg.actuator)
        return control.accel_to_force_index(a_ref, env.action_space, cfg.actuator)
    return policy


def checkpoint_policy(net):
    def policy(env: agent.AccEnv) -> int:
        encoded = agent.encode_state(env._observe())
        q = net.forward(*(p[None] for p in encoded))[0]
        return int(np.argmax(q))
    return policy


def _aggregate(metrics: list[energy.TripMetrics], cfg: RunConfig) -> dict:
    """Mean over traces/sessions of each per-mile figure."""
    out = {"distance_miles": float(np.mean([m.distance_miles for m in metrics]))}
    if cfg.mode == "ice":
        out["fuel_g_per_mile"] = float(np.mean([m.fuel_g_per_mile for m in metrics]))
        species = metrics[0].emissions_g_per_mile.keys()
        out["emissions_g_per_mile"] = {
            s: float(np.mean([m.emissions_g_per_mile[s] for m in metrics])) for s in species}
    else:
        out["energy_kj_per_mile"] = float(np.mean([m.energy_kj_per_mile for m in metrics]))
    rmses = [m.gap_rmse_m for m in metrics if m.gap_rmse_m is not None]
    out["gap_rmse_m"] = float(np.mean(rmses)) if rmses else None
    return out


def run_eval(cfg: RunConfig, methods: list[str], out_dir: str,
             test_seed: int | None = None) -> dict:
    """Replay every method over the 4-trace test set and emit the report."""
    for m in methods:
        if m not in METHOD_NAMES:
            raise ValueError(f"unknown method {m!r}")
    os.makedirs(out_dir, exist_ok=True)
    traj_dir = os.path.join(out_dir, "trajectories")
    os.makedirs(traj_dir, exist_ok=True)
    seed = cfg.seed if test_seed is None else test_seed

    if cfg.mode == "ice":
        traces = trajectory.make_test_set(seed)
    else:
        traces = _load_ev_test_set(cfg)

    checkpoints = {}
    report_methods: dict[str, dict] = {}
    for method in methods:
        per_trace_metrics: list[energy.TripMetrics] = []
        csv_paths: list[str] = []
        if method == "human":
            sessions = _human_sessions(cfg)
            if not sessions:
                raise MissingArtifact(
                    f"method 'human': no session CSVs in {cfg.paths.human_sessions_dir}")
            for path in sessions:
                per_trace_metrics.append(metrics_from_csv(path, cfg))
                csv_paths.append(path)
            report_methods[method] = _aggregate(per_trace_metrics, cfg)
            report_methods[method]["sessions"] = len(sessions)
            report_methods[method]["trajectories"] = csv_paths
            continue

        for i, trace in enumerate(traces):
            path = os.path.join(traj_dir, f"{method}_trace{i}.csv")
            if method == "lead":
                v = trace.samples
                t = np.arange(len(v)) * trace.dt
                a = _finite_diff_accel(v, trace.dt)
                write_trajectory_csv(path, t, v, a, None, np.zeros_like(v))
            else:
                if method == "consensus":
                    env = _make_env(cfg, trace, "feature", cfg.reward_cfg.mode)
                    policy = consensus_policy(cfg)
                else:
                    net, ckpt_path = _load_agent(cfg, method)
                    checkpoints[method] = ckpt_path
                    state_mode = "vision" if net.describe()["kind"] == "vision" else "feature"
                    reward_mode = "gap" if method == "gap_agent" else "gap+force"
                    env = _make_env(cfg, trace, state_mode, reward_mode)
                    policy = checkpoint_policy(net)
                t, v, a, gaps, forces = rollout(env, policy, _trace_rng(seed, i))
                write_trajectory_csv(path, t, v, a, gaps, forces)
            per_trace_metrics.append(metrics_from_csv(path, cfg))
            csv_paths.append(path)
        report_methods[method] = _aggregate(per_trace_metrics, cfg)
        report_methods[method]["trajectories"] = csv_paths

    report = {
        "mode": cfg.mode,
        "methods": report_methods,
        "provenance": {
            "seed": seed,
            "config_digest": hashlib.sha256(
                json.dumps(asdict(cfg), sort_keys=True, default=str).encode()).hexdigest(),
            "checkpoints": checkpoints,
        },
    }
    with open(os.path.join(out_dir, "report.json"), "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return report


def _load_agent(cfg: RunConfig, method: str):
    path = os.path.join(cfg.paths.checkpoints_dir, f"{method}.qnet")
    if not os.path.exists(path):
        raise MissingArtifact(f"method {method!r}: checkpoint {path} not found")
    return netcore.load_checkpoint(path), path


def _human_sessions(cfg: RunConfig) -> list[str]:
    d = cfg.paths.human_sessions_dir
    if not os.path.isdir(d):
        return []
    return sorted(os.path.join(d, f) for f in os.listdir(d) if f.endswith(".csv"))


def _load_ev_test_set(cfg: RunConfig) -> list[trajectory.SpeedTrace]:
    d = cfg.paths.traces_dir
    if not os.path.isdir(d):
        raise MissingArtifact(f"EV mode needs recorded traces in {d}")
    files = sorted(os.path.join(d, f) for f in os.listdir(d) if f.endswith(".csv"))
    if not files:
        raise MissingArtifact(f"EV mode needs recorded traces in {d}")
    traces = []
    for path in files[:trajectory.TEST_SET_SIZE]:
        with open(path) as fh:
            traces.append(trajectory.load_trace(fh, cfg.episode.dt))
    return traces


def render_report(report: dict) -> str:
    """Human-readable table; missing methods render as explicit gaps."""
    mode = report.get("mode", "ice")
    rows = ["Fuel Rate (g/mi)", "CO2 (g/mi)", "CO (g/mi)", "HC (g/mi)",
            "NOx (g/mi)"] if mode == "ice" else ["Energy Rate (kJ/mi)"]
    rows.append("Gap RMSE (m)")
    methods = [m for m in METHOD_NAMES if m in report.get("methods", {})]
    absent = [m for m in METHOD_NAMES if m not in report.get("methods", {})]
    header = ["Metric"] + [METHOD_LABELS[m] for m in METHOD_NAMES]
    lines = ["\t".join(header)]

    def cell(method, row):
        if method in absent:
            return "-"
        data = report["methods"][method]
        if row == "Gap RMSE (m)":
            val = data.get("gap_rmse_m")
            return "N/A" if val is None else f"{val:.3f}"
        if row == "Fuel Rate (g/mi)":
            return f"{data['fuel_g_per_mile']:.3f}"
        if row == "Energy Rate (kJ/mi)":
            return f"{data['energy_kj_per_mile']:.3f}"
        species = row.split(" ")[0]
        return f"{data['emissions_g_per_mile'][species]:.3f}"

    for row in rows:
        lines.append("\t".join([row] + [cell(m, row) for m in METHOD_NAMES]))
    prov = report.get("provenance", {})
    lines.append(f"seed={prov.get('seed')} config={str(prov.get('config_digest'))[:12]}")
    return "\n".join(lines) + "\n"
