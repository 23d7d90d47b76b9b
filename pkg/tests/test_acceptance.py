"""End-to-end acceptance gate.

Each test covers one numbered release criterion and prints a single
PASS line on success (run with `pytest -s tests/test_acceptance.py -v`
to see them). All checks are deterministic; the two training-based
items are the slow ones (a few minutes total on one CPU core).
"""

import json
import struct
import threading
import time

import numpy as np
import pytest

from acclab import agent as ag
from acclab import bridge as br
from acclab import config as cf
from acclab import energy as en
from acclab import evalrun as ev
from acclab import netcore as nc
from acclab import simcore as sc
from acclab import trajectory as tj
from acclab import vision as vz
from acclab.control import accel_to_force_index, consensus_accel
from acclab.simcore import EpisodeSpec, TerminationStatus


def report(n, text):
    print(f"\nACCEPTANCE {n:02d} PASS: {text}")


def test_criterion_01_lead_speed_bound():
    """10^5 sinusoid-trace evaluations all inside [27, 33] m/s in under 1 s."""
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    total = 0
    for _ in range(100):
        spec = tj.sample_spec(rng)
        t = rng.uniform(0.0, 2000.0, size=1000)
        v = tj.eval_speed(spec, t)
        assert np.all(v >= 27.0) and np.all(v <= 33.0)
        total += len(t)
    elapsed = time.perf_counter() - t0
    assert total == 100_000
    assert elapsed < 1.0
    report(1, f"{total} evaluations in [27, 33] m/s ({elapsed:.3f} s)")


def test_criterion_02_consensus_fixed_point():
    """100 seeded starts, constant lead 30 m/s: gap within 1% of 55 m in 60 s."""
    spec = EpisodeSpec(max_steps=3000)
    rng = np.random.default_rng(0)
    t0 = time.perf_counter()
    for _ in range(100):
        w = sc.reset(spec, rng)
        for _ in range(3000):
            a_ref = consensus_accel(sc.gap(w), w.host.speed, w.lead.speed)
            w = sc.step(w, a_ref, 30.0, spec)
            assert sc.gap(w) > 0.0
        assert abs(sc.gap(w) - 55.0) / 55.0 < 0.01
    elapsed = time.perf_counter() - t0
    assert elapsed < 10.0
    report(2, f"100/100 runs settle within 1% of 55 m, zero collisions ({elapsed:.2f} s)")


def test_criterion_03_ddqn_targets_oracle():
    """ddqn_targets vs per-sample selection/evaluation oracle, 1000 batches."""
    rng = np.random.default_rng(3)
    online = nc.FeatureQNetwork(n_inputs=4, hidden=(), n_outputs=6, seed=1)
    target = nc.FeatureQNetwork(n_inputs=4, hidden=(), n_outputs=6, seed=2)
    t0 = time.perf_counter()
    worst = 0.0
    for b in range(1000):
        gamma = float(rng.uniform(0.0, 1.0)) if b % 10 else 0.0
        batch = []
        for _ in range(8):
            s = (rng.random(4).astype(np.float32),)
            s2 = (rng.random(4).astype(np.float32),)
            batch.append(ag.Transition(s, int(rng.integers(0, 6)),
                                       float(rng.uniform(-1, 1)), s2,
                                       bool(rng.random() < 0.2)))
        y = ag.ddqn_targets(batch, online, target, gamma)
        for k, tr in enumerate(batch):
            q_on = online.forward(tr.next_state[0][None])[0]
            q_tg = target.forward(tr.next_state[0][None])[0]
            expected = tr.reward + gamma * (0.0 if tr.done else 1.0) * q_tg[int(np.argmax(q_on))]
            worst = max(worst, abs(y[k] - expected))
            if gamma == 0.0 or tr.done:
                assert y[k] == tr.reward
    elapsed = time.perf_counter() - t0
    assert worst < 1e-6
    assert elapsed < 5.0
    report(3, f"1000 batches, max |y - oracle| = {worst:.2e} ({elapsed:.2f} s)")


def test_criterion_04_gradient_fidelity():
    """Backprop vs central differences (f64) on the reduced two-branch topology."""
    topo = nc.QTopology(image_shape=(vz.STACK_LEN, *vz.LOW_RES.proc_shape))
    net = nc.QNetwork(topo, seed=0, dtype=np.float64)
    rng = np.random.default_rng(4)
    images = rng.random((2, vz.STACK_LEN, *vz.LOW_RES.proc_shape))
    speeds = rng.random((2, vz.STACK_LEN))
    target = rng.standard_normal((2, 21))

    def loss():
        return 0.5 * np.sum((net.forward(images, speeds) - target) ** 2)

    t0 = time.perf_counter()
    net.zero_grads()
    out = net.forward(images, speeds)
    net.backward(out - target)
    # the net is piecewise polynomial in each weight, so a larger step adds
    # no truncation error but suppresses float64 cancellation noise
    eps = 1e-4
    worst = 0.0
    for name, p, g in net.named_params():
        flat = p.reshape(-1)
        gflat = g.reshape(-1)
        idx = rng.choice(flat.size, size=min(12, flat.size), replace=False)
        for i in idx:
            orig = flat[i]
            flat[i] = orig + eps
            lp = loss()
            flat[i] = orig - eps
            lm = loss()
            flat[i] = orig
            num = (lp - lm) / (2 * eps)
            denom = max(abs(num), abs(gflat[i]), 1e-8)
            worst = max(worst, abs(num - gflat[i]) / denom)
    elapsed = time.perf_counter() - t0
    assert worst < 1e-6
    assert elapsed < 60.0
    report(4, f"max relative gradient error {worst:.2e} over sampled coords ({elapsed:.1f} s)")


def _progress_config(seed):
    return ag.TrainConfig(seed=seed, max_episodes=300, max_steps_per_episode=300,
                          batch_size=32, learning_starts=500, buffer_capacity=50_000,
                          learning_rate=1e-3, epsilon_decay_steps=20_000,
                          target_sync_period=500, action_repeat=5,
                          checkpoint_period_episodes=10_000)


def _progress_env():
    return ag.AccEnv(EpisodeSpec(max_steps=10 ** 9), ag.ConstantSource(30.0),
                     ag.RewardConfig(mode="gap"), max_steps=300 * 5, action_repeat=5)


def test_criterion_05_learning_progress():
    """Gap-only feature training improves by >= 0.5 mean reward in 2 of 3 seeds."""
    t0 = time.perf_counter()
    improved = 0
    deltas = []
    for seed in (0, 1, 2):
        history = ag.run_training(_progress_env(), _progress_config(seed))
        rewards = np.asarray(history["mean_reward"])
        decile = len(rewards) // 10
        delta = rewards[-decile:].mean() - rewards[:decile].mean()
        deltas.append(delta)
        if delta >= 0.5:
            improved += 1
    elapsed = time.perf_counter() - t0
    assert improved >= 2, deltas
    assert elapsed < 1800.0
    report(5, "last-decile minus first-decile reward: "
              + ", ".join(f"{d:+.2f}" for d in deltas)
              + f" -> {improved}/3 seeds improved >= 0.5 ({elapsed:.0f} s)")


def _ordering_config(seed):
    return ag.TrainConfig(seed=seed, max_episodes=200, max_steps_per_episode=300,
                          batch_size=32, learning_starts=500, buffer_capacity=50_000,
                          learning_rate=1e-3, epsilon_decay_steps=20_000,
                          target_sync_period=500, action_repeat=5,
                          checkpoint_period_episodes=10_000)


def _ordering_env(reward_mode):
    return ag.AccEnv(EpisodeSpec(max_steps=10 ** 9), ag.SinusoidSource(),
                     ag.RewardConfig(mode=reward_mode), max_steps=300 * 5,
                     action_repeat=5)


def _test_set_rmse(net, seed):
    rmses = []
    for i, trace in enumerate(tj.make_test_set(seed=1234)):
        n_steps = len(trace.samples) - 1
        env = ag.AccEnv(EpisodeSpec(max_steps=n_steps),
                        ag.FixedTraceSource([trace]), ag.RewardConfig())
        rng = np.random.default_rng(np.random.SeedSequence([seed, i]))
        _, _, _, gaps, _ = ev.rollout(env, ev.checkpoint_policy(net), rng)
        rmses.append(en.gap_rmse(gaps))
    return float(np.mean(rmses))


def test_criterion_06_gap_regulation_ordering():
    """Trained gap-only agent tracks 55 m tighter than the same-seed force agent."""
    t0 = time.perf_counter()
    wins = 0
    pairs = []
    for seed in (0, 1, 2):
        gap_net = ag.run_training(_ordering_env("gap"), _ordering_config(seed))["network"]
        force_net = ag.run_training(_ordering_env("gap+force"), _ordering_config(seed))["network"]
        r_gap = _test_set_rmse(gap_net, seed)
        r_force = _test_set_rmse(force_net, seed)
        pairs.append((r_gap, r_force))
        if r_gap < r_force:
            wins += 1
    elapsed = time.perf_counter() - t0
    assert wins >= 2, pairs
    report(6, "gap vs force RMSE (m): "
              + ", ".join(f"{g:.2f}<{f:.2f}" if g < f else f"{g:.2f}>={f:.2f}"
                          for g, f in pairs)
              + f" -> {wins}/3 seeds ordered ({elapsed:.0f} s)")


def test_criterion_07_energy_formula_fidelity():
    """Fuel, emission and EV power formulas vs independent oracles."""
    pt = en.IcePowertrain()
    evc = en.EvCoefficients()
    rng = np.random.default_rng(7)
    t0 = time.perf_counter()
    for _ in range(10_000):
        v, a = rng.uniform(0, 40), rng.uniform(-5.5, 3.5)
        tractive = (pt.mass_kg * a + pt.mass_kg * en.GRAVITY * pt.rolling_coeff
                    + 0.5 * pt.air_density * pt.drag_area * v * v) * v / 1000.0
        p = max(tractive, 0.0) / pt.driveline_efficiency + pt.accessory_kw
        n_rev = max(pt.idle_rev_s, pt.rev_per_speed * v)
        fuel = pt.fuel_per_kj * (pt.friction_factor * n_rev * pt.displacement_l
                                 + p / pt.engine_efficiency)
        assert en.cmem_fuel_rate(v, a, pt) == pytest.approx(fuel, rel=1e-12)
        spec = pt.emissions[int(rng.integers(0, len(pt.emissions)))]
        assert en.emission_rate(fuel, spec) == pytest.approx(
            fuel * spec.engine_out_index * spec.catalyst_pass_fraction, rel=1e-12)
        l = evc.values
        poly = (l[0] + v * (l[1] + l[3] * a + l[8] * a * a)
                + v * v * (l[4] + l[6] * a) + v ** 3 * (l[2] + l[7] * a)
                + v ** 4 * l[5])
        assert en.ev_power(v, a, evc) == pytest.approx(poly, rel=1e-12)
    # constant-cruise closed form
    T, vc = 240.0, 30.0
    t = np.linspace(0.0, T, 12001)
    m = en.trip_metrics(t, np.full_like(t, vc), np.zeros_like(t), None, pt)
    miles = vc * T / en.METERS_PER_MILE
    assert m.fuel_g_per_mile == pytest.approx(
        en.cmem_fuel_rate(vc, 0.0, pt) * T / miles, rel=1e-9)
    elapsed = time.perf_counter() - t0
    assert elapsed < 5.0
    report(7, f"3 formulas x 10^4 inputs at 1e-12, cruise closed form at 1e-9 ({elapsed:.2f} s)")


def test_criterion_08_smoothness_energy_direction():
    """Mean-preserving smooth trace never burns more ICE fuel than its oscillatory pair."""
    pt = en.IcePowertrain()
    rng = np.random.default_rng(8)
    T = 240.0
    t = np.linspace(0.0, T, 12001)
    t0 = time.perf_counter()
    for _ in range(20):
        v_mean = rng.uniform(25, 32)
        amp = rng.uniform(1.0, 3.0)
        omega = 2.0 * np.pi * int(rng.integers(4, 20)) / T
        m_smooth = en.trip_metrics(t, np.full_like(t, v_mean), np.zeros_like(t), None, pt)
        m_osc = en.trip_metrics(t, v_mean + amp * np.sin(omega * t),
                                amp * omega * np.cos(omega * t), None, pt)
        assert m_smooth.fuel_g_per_mile <= m_osc.fuel_g_per_mile
    elapsed = time.perf_counter() - t0
    assert elapsed < 5.0
    report(8, f"smooth <= oscillatory fuel per mile on 20/20 pairs ({elapsed:.2f} s)")


def _consensus_index_policy(msg: br.StateMsg) -> int:
    return accel_to_force_index(consensus_accel(msg.gap, msg.host_speed, msg.lead_speed))


def _bridge_env(max_steps):
    return ag.AccEnv(EpisodeSpec(max_steps=10 ** 9), ag.ConstantSource(30.0),
                     ag.RewardConfig(), max_steps=max_steps)


def test_criterion_09_bridge_lockstep():
    """Loopback episode bit-identical to in-process; lossy sessions never deadlock."""
    t0 = time.perf_counter()
    # in-process reference
    env = _bridge_env(150)
    env.reset(np.random.default_rng(0))
    ref_gaps, ref_forces = [], []
    done = False
    while not done:
        idx = accel_to_force_index(consensus_accel(
            env.current_gap(), env.world.host.speed, env.world.lead.speed))
        _, _, done, info = env.step(idx)
        ref_gaps.append(info["gap"])
        ref_forces.append(info["force"])

    # lossless bridged run
    env = _bridge_env(150)
    pair = br.LoopbackTransport()
    record = {}

    def server():
        record["rec"] = br.serve_episode(env, pair.server,
                                         env_rng=np.random.default_rng(0))

    t = threading.Thread(target=server)
    t.start()
    pair.client.send(br.encode(br.ResetMsg(0)))
    seq = 0
    deadline = time.monotonic() + 30
    while t.is_alive() and time.monotonic() < deadline:
        try:
            msg = br.decode(pair.client.recv(0.05))
        except br.TransportTimeout:
            continue
        if isinstance(msg, br.EpisodeEndMsg):
            break
        if isinstance(msg, br.StateMsg):
            seq += 1
            pair.client.send(br.encode(br.ActionMsg(
                seq, msg.step, br.ACTION_MODE_INDEX,
                action_index=_consensus_index_policy(msg))))
    t.join(timeout=30)
    assert not t.is_alive()
    assert record["rec"].gaps == ref_gaps
    assert record["rec"].forces == ref_forces

    # 50 seeded lossy sessions
    drop_rng = np.random.default_rng(9)
    for session in range(50):
        env = _bridge_env(60)
        pair = br.LoopbackTransport(drop_rate=0.1,
                                    rng=np.random.default_rng(drop_rng.integers(2 ** 32)))
        cfg = br.SessionConfig(action_timeout_s=0.01, max_consecutive_timeouts=50)
        record = {}

        def server():
            record["rec"] = br.serve_episode(env, pair.server, cfg,
                                             np.random.default_rng(session),
                                             await_reset=False)

        t = threading.Thread(target=server)
        t.start()
        seq = 0
        deadline = time.monotonic() + 10
        while t.is_alive() and time.monotonic() < deadline:
            try:
                msg = br.decode(pair.client.recv(0.005))
            except br.TransportTimeout:
                continue
            if isinstance(msg, br.StateMsg):
                seq += 1
                pair.client.send(br.encode(br.ActionMsg(
                    seq, msg.step, br.ACTION_MODE_INDEX,
                    action_index=_consensus_index_policy(msg))))
        t.join(timeout=10)
        assert not t.is_alive()
        rec = record["rec"]
        assert rec.status is not TerminationStatus.RUNNING or rec.status == "transport_failure"
    elapsed = time.perf_counter() - t0
    assert elapsed < 60.0
    report(9, f"lossless run bit-identical; 50 lossy sessions all terminated ({elapsed:.1f} s)")


def test_criterion_10_realtime_inference():
    """Reduced-resolution vision forward pass under 20 ms per step."""
    topo = nc.QTopology(image_shape=(vz.STACK_LEN, *vz.LOW_RES.proc_shape))
    net = nc.QNetwork(topo, seed=0)
    rng = np.random.default_rng(10)
    images = rng.random((1, vz.STACK_LEN, *vz.LOW_RES.proc_shape)).astype(np.float32)
    speeds = rng.random((1, vz.STACK_LEN)).astype(np.float32)
    net.forward(images, speeds)  # warm up
    t0 = time.perf_counter()
    n = 200
    for _ in range(n):
        net.forward(images, speeds)
    per_step_ms = (time.perf_counter() - t0) / n * 1000.0
    assert per_step_ms < 20.0
    report(10, f"vision-mode forward pass {per_step_ms:.2f} ms/step (< 20 ms)")


def test_criterion_11_determinism(tmp_path, monkeypatch):
    """Same seed and config: byte-identical curve, checkpoint and report bodies."""
    train_outs = []
    cfg = ag.TrainConfig(seed=21, max_episodes=4, max_steps_per_episode=40,
                         batch_size=8, learning_starts=16, buffer_capacity=1000,
                         epsilon_decay_steps=200, target_sync_period=50,
                         checkpoint_period_episodes=1000)
    for name in ("t1", "t2"):
        env = ag.AccEnv(EpisodeSpec(max_steps=10 ** 9), ag.ConstantSource(30.0),
                        ag.RewardConfig(), max_steps=40)
        d = tmp_path / name
        ag.run_training(env, cfg, out_dir=str(d))
        train_outs.append(((d / "reward_curve.csv").read_bytes(),
                           (d / "ckpt_final.qnet").read_bytes(),
                           (d / "manifest.json").read_bytes()))
    assert train_outs[0] == train_outs[1]

    reports = []
    for name in ("e1", "e2"):
        root = tmp_path / name
        root.mkdir()
        monkeypatch.chdir(root)
        run_cfg = cf.from_dict({"seed": 21})
        ev.run_eval(run_cfg, ["lead", "consensus"], "out")
        reports.append((root / "out" / "report.json").read_bytes())
    assert reports[0] == reports[1]
    report(11, "repeated train and eval runs byte-identical "
               "(curve, checkpoint, manifest, report)")


def test_criterion_12_cockpit_round_trip(tmp_path, monkeypatch):
    """[SECONDARY] Scripted 60 s drive exports a CSV that run_eval ingests."""
    env = ag.AccEnv(EpisodeSpec(max_steps=10 ** 9), ag.ConstantSource(30.0),
                    ag.RewardConfig(), max_steps=10 ** 6)
    session = br.GatewaySession(env)
    latencies = []
    now = 0.0
    frames = int(60.0 * session.cfg.cockpit_rate_hz)
    for i in range(frames):
        now = (i + 1) / session.cfg.cockpit_rate_hz
        # scripted driver: proportional gap hold
        g = session.env.current_gap()
        force = min(max(0.05 * (g - 55.0) + 0.9 * (
            session.env.world.lead.speed - session.env.world.host.speed), -1.0), 1.0)
        wall0 = time.perf_counter()
        session.on_control({"type": "control", "force": force}, now)
        frame = session.advance(now)
        latencies.append(time.perf_counter() - wall0)
        assert frame["type"] == "state"
    assert session.record.steps == 3000  # 60 s at 50 Hz
    assert max(latencies) < 0.1

    sessions_dir = tmp_path / "human"
    sessions_dir.mkdir()
    rec = session.record
    v = np.asarray(rec.speeds)
    ev.write_trajectory_csv(sessions_dir / "scripted.csv", np.asarray(rec.times),
                            v, ev._finite_diff_accel(v, 0.02),
                            np.asarray(rec.gaps), np.asarray(rec.forces))
    run_cfg = cf.from_dict({"paths": {"human_sessions_dir": str(sessions_dir),
                                      "out_dir": str(tmp_path / "out")}})
    result = ev.run_eval(run_cfg, ["human"], str(tmp_path / "out"))
    human = result["methods"]["human"]
    assert human["sessions"] == 1
    assert human["fuel_g_per_mile"] > 0
    assert human["gap_rmse_m"] is not None
    text = ev.render_report(result)
    assert "Human Driving" in text
    report(12, f"60 s scripted drive -> report row; max loop latency "
               f"{max(latencies) * 1000:.1f} ms (< 100 ms)")
