"""Command-line orchestration.

Subcommands: train | eval | baseline | drive | gen-traj | report.
Exit codes: 0 success, 2 config error, 3 missing artifact, 4 runtime failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from . import agent, bridge, evalrun, simcore, trajectory
from .config import ConfigError, RunConfig, parse_config

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_MISSING = 3
EXIT_RUNTIME = 4


def _load_config(args) -> RunConfig:
    cfg = parse_config(args.config) if args.config else RunConfig()
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if getattr(args, "mode", None):
        overrides["mode"] = args.mode
    if getattr(args, "reward", None):
        overrides["reward"] = args.reward
    if getattr(args, "state", None):
        overrides["state"] = args.state
    if overrides:
        cfg = dataclasses.replace(cfg, **overrides)
        if "seed" in overrides:
            cfg = dataclasses.replace(
                cfg, train=dataclasses.replace(cfg.train, seed=overrides["seed"]))
        if cfg.mode == "ev" and "mode" in overrides and args.config is None:
            cfg = dataclasses.replace(cfg, episode=simcore.ev_episode_spec())
        if "reward" in overrides:
            cfg = dataclasses.replace(
                cfg, reward_cfg=dataclasses.replace(cfg.reward_cfg, mode=overrides["reward"]))
    return cfg


def _build_training_env(cfg: RunConfig) -> agent.AccEnv:
    if cfg.mode == "ice":
        source = agent.SinusoidSource()
    else:
        traces = evalrun._load_ev_test_set(cfg)
        source = agent.FixedTraceSource(traces)
    return agent.AccEnv(
        spec=cfg.episode,
        trace_source=source,
        reward_cfg=cfg.reward_cfg,
        state_mode=cfg.state,
        action_repeat=cfg.train.action_repeat,
        max_steps=cfg.train.max_steps_per_episode * cfg.train.action_repeat,
        actuator=cfg.actuator,
    )


def cmd_gen_traj(args) -> int:
    cfg = _load_config(args)
    out = args.out or cfg.paths.traces_dir
    os.makedirs(out, exist_ok=True)
    for i, trace in enumerate(trajectory.make_test_set(cfg.seed)):
        path = os.path.join(out, f"test_trace{i}.csv")
        with open(path, "w", newline="") as fh:
            fh.write(trajectory.dump_trace(trace))
        print(path)
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _load_config(args)
    out = args.out or cfg.paths.out_dir
    env = _build_training_env(cfg)
    agent.run_training(env, cfg.train, out_dir=out, progress=not args.quiet)
    print(os.path.join(out, "ckpt_final.qnet"))
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _load_config(args)
    out = args.out or cfg.paths.out_dir
    methods = args.methods.split(",") if args.methods else ["lead", "consensus"]
    report = evalrun.run_eval(cfg, methods, out)
    print(evalrun.render_report(report))
    return EXIT_OK


def cmd_baseline(args) -> int:
    cfg = _load_config(args)
    out = args.out or cfg.paths.out_dir
    report = evalrun.run_eval(cfg, ["lead", "consensus"], out)
    print(evalrun.render_report(report))
    return EXIT_OK


def cmd_report(args) -> int:
    try:
        with open(args.report) as fh:
            report = json.load(fh)
    except OSError as exc:
        print(f"missing report: {exc}", file=sys.stderr)
        return EXIT_MISSING
    print(evalrun.render_report(report))
    return EXIT_OK


def cmd_drive(args) -> int:
    import asyncio

    cfg = _load_config(args)
    out = args.out or cfg.paths.out_dir
    os.makedirs(out, exist_ok=True)
    if cfg.mode == "ice":
        source = agent.ConstantSource(30.0) if args.constant_lead \
            else agent.FixedTraceSource(trajectory.make_test_set(cfg.seed))
    else:
        source = agent.FixedTraceSource(evalrun._load_ev_test_set(cfg))
    env = agent.AccEnv(
        spec=cfg.episode, trace_source=source, reward_cfg=cfg.reward_cfg,
        state_mode="feature", actuator=cfg.actuator,
        max_steps=cfg.episode.max_steps,
    )
    session_cfg = bridge.SessionConfig(
        action_timeout_s=cfg.bridge.action_timeout_s,
        max_consecutive_timeouts=cfg.bridge.max_consecutive_timeouts,
        tick_rate_hz=1.0 / cfg.episode.dt,
    )
    holder: list = []
    print(f"drive gateway on ws://{args.host}:{cfg.bridge.ws_port} "
          f"(simulation waits for the first control frame)")
    try:
        asyncio.run(bridge.ws_gateway(
            env, host=args.host, port=cfg.bridge.ws_port, cfg=session_cfg,
            realtime=not args.turbo, session_holder=holder))
    except KeyboardInterrupt:
        pass
    finally:
        if holder and holder[0].record.steps:
            rec = holder[0].record
            path = os.path.join(out, "drive_session.csv")
            v = np.asarray(rec.speeds)
            evalrun.write_trajectory_csv(
                path, np.asarray(rec.times), v,
                evalrun._finite_diff_accel(v, cfg.episode.dt),
                np.asarray(rec.gaps), np.asarray(rec.forces))
            print(path)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="acclab")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--mode", choices=["ice", "ev"])
        p.add_argument("--reward", choices=["gap", "gap+force"])
        p.add_argument("--state", choices=["feature", "vision"])
        p.add_argument("--out", help="output directory")

    p = sub.add_parser("train", help="train a DDQN agent")
    common(p)
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate methods over the fixed test set")
    common(p)
    p.add_argument("--methods", help="comma-separated subset of "
                   + ",".join(evalrun.METHOD_NAMES))
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("baseline", help="consensus-ACC-only evaluation")
    common(p)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("drive", help="serve the human cockpit gateway")
    common(p)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--turbo", action="store_true",
                   help="tick per control frame instead of wall clock")
    p.add_argument("--constant-lead", action="store_true")
    p.set_defaults(func=cmd_drive)

    p = sub.add_parser("gen-traj", help="materialize the fixed 4-trace test set")
    common(p)
    p.set_defaults(func=cmd_gen_traj)

    p = sub.add_parser("report", help="render a report.json as text")
    p.add_argument("report")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except evalrun.MissingArtifact as exc:
        print(f"missing artifact: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
