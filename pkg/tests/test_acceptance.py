"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run ``pytest tests/test_acceptance.py -v`` (about half an hour on one core; the campaign
criteria carry the ``slow`` marker) or
``python tests/test_acceptance.py`` for the PASS/FAIL lines alone.
"""

import dataclasses
import itertools
import subprocess
import sys
import time
from functools import lru_cache
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))
from conftest import full_set, random_mdp, random_space  # noqa: E402

from tcbo.continuous import run_continuous_campaign  # noqa: E402
from tcbo.environments.knorr import (integrate_kinetics, linearized_y1_closed_form,  # noqa: E402
                                     linearized_y1_numeric)
from tcbo.harness.config import RunConfig  # noqa: E402
from tcbo.harness.persist import dumps_records  # noqa: E402
from tcbo.harness.registry import BENCHMARKS, campaign_config, run_replicate  # noqa: E402
from tcbo.kernels import Kernel  # noqa: E402
from tcbo.mdp import solve_dp, visitation_of_policy  # noqa: E402
from tcbo.objective import AdaptiveObjective, information_matrix, utility, utility_gradient  # noqa: E402
from tcbo.planner import FwConfig, fw_plan, run_campaign  # noqa: E402
from tcbo.surrogate import build_nystrom, pair_variance_exact  # noqa: E402

SEEDS = range(25)


_capture = {}


@pytest.fixture(autouse=True)
def _terminal(capsys):
    _capture["capsys"] = capsys
    yield
    _capture.clear()


def report(number, ok, detail):
    line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    with _capture["capsys"].disabled():
        print(f"\n{line}", flush=True)
    assert ok, line


# reference solutions ---------------------------------------------------------

def expectimax(mdp, reward, h, x):
    """Optimal value by enumerating the full decision tree (no memoization)."""
    if h == mdp.horizon:
        return 0.0
    best = -np.inf
    for a in np.flatnonzero(mdp.mask[h, x]):
        v = reward[h, x, a]
        for y in np.flatnonzero(mdp.transitions[x, a]):
            v += mdp.transitions[x, a, y] * expectimax(mdp, reward, h + 1, y)
        best = max(best, v)
    return best


def best_action_sequence(mdp, reward):
    """Deterministic MDP from a point start: enumerate every action sequence."""
    x0 = int(np.argmax(mdp.initial))
    best = -np.inf
    for seq in itertools.product(range(mdp.n_actions), repeat=mdp.horizon):
        x, total = x0, 0.0
        for h, a in enumerate(seq):
            if not mdp.mask[h, x, a]:
                break
            total += reward[h, x, a]
            x = int(mdp.successors[x, a])
        else:
            best = max(best, total)
    return best


def deterministic_trajectories(mdp):
    x0 = int(np.argmax(mdp.initial))
    for seq in itertools.product(range(mdp.n_actions), repeat=mdp.horizon):
        x, d, ok = x0, np.zeros(mdp.mask.shape), True
        for h, a in enumerate(seq):
            if not mdp.mask[h, x, a]:
                ok = False
                break
            d[h, x, a] = 1.0 / mdp.horizon
            x = int(mdp.successors[x, a])
        if ok:
            yield d


def central_difference(f, d, step=1e-5):
    g = np.zeros_like(d)
    for i in np.ndindex(d.shape):
        e = np.zeros_like(d)
        e[i] = step
        g[i] = (f(d + e) - f(d - e)) / (2 * step)
    return g


# shared campaign runs --------------------------------------------------------

@lru_cache(maxsize=None)
def replicate(benchmark, seed, **overrides):
    base = {"knorr": dict(T=10, feedback="episodic"),
            "ypacarai": dict(T=2, feedback="episodic"),
            "laser": dict(T=1, feedback="episodic")}[benchmark]
    base.update(overrides)
    return run_replicate(RunConfig(benchmark, **base), seed)


def cached(benchmark, seed, **overrides):
    return replicate(benchmark, seed, **dict(sorted(overrides.items())))


# criteria --------------------------------------------------------------------

def test_criterion_01_dp_oracle():
    rng = np.random.default_rng(101)
    start = time.perf_counter()
    worst = 0.0
    for i in range(200):
        n, A, H = (int(rng.integers(1, k + 1)) for k in (4, 3, 4))
        deterministic = i % 2 == 0
        mdp = random_mdp(rng, n, A, H, deterministic=deterministic,
                         start=np.eye(n)[0] if deterministic else None)
        reward = rng.standard_normal(mdp.mask.shape)
        _, _, value = solve_dp(mdp, reward)
        if deterministic:
            oracle = best_action_sequence(mdp, reward)
        else:
            oracle = sum(mdp.initial[x] * expectimax(mdp, reward, 0, x) for x in range(n))
        worst = max(worst, abs(value - oracle))
    elapsed = time.perf_counter() - start
    report(1, worst <= 1e-12 and elapsed < 10.0,
           f"max |DP - enumeration| = {worst:.1e} over 200 MDPs, {elapsed:.2f} s")


def test_criterion_02_gradient():
    rng = np.random.default_rng(102)
    worst = 0.0
    for _ in range(50):
        mdp = random_mdp(rng, 5, int(rng.integers(2, 4)), int(rng.integers(2, 5)))
        space = random_space(rng, mdp)
        d = visitation_of_policy(mdp, mdp.uniform_policy())
        Z = full_set(5)
        g = np.broadcast_to(utility_gradient(d, Z, space), d.shape)
        fd = central_difference(lambda e: utility(e, Z, space)[0], d)
        worst = max(worst, np.linalg.norm(g - fd) / np.linalg.norm(fd))
    report(2, worst < 1e-4, f"max relative error {worst:.2e} over 50 instances")


def test_criterion_03_feature_vs_kernel():
    rng = np.random.default_rng(103)
    worst = 0.0
    for _ in range(50):
        X = rng.random((20, 2))
        k = Kernel("rbf", float(rng.uniform(0.5, 2.0)), float(rng.uniform(0.1, 1.0)))
        Phi = build_nystrom(k, X)(X)
        w = rng.random(20) * (rng.random(20) < 0.6)
        noise = 0.01 + rng.random(20)
        V = information_matrix(Phi, w / noise, 1.0)
        for i, j in rng.choice(20, (5, 2), replace=False).reshape(-1, 2):
            diff = Phi[i] - Phi[j]
            feat = float(diff @ np.linalg.solve(V, diff))
            exact = pair_variance_exact(k, X, w, X[i], X[j], noise)
            worst = max(worst, abs(feat - exact))
    report(3, worst < 1e-6, f"max |feature - kernel| = {worst:.1e} on 20-point domains")


@pytest.mark.slow
def test_criterion_04_polytope_invariants():
    checked, steps, bad = 0, 0, []
    for name, bench in BENCHMARKS.items():
        if bench.kind == "discrete":
            cfg = RunConfig(name, T=2, feedback="episodic")
            env = bench.make()
            camp = dataclasses.replace(campaign_config(cfg), check_invariants=True)
            res = run_campaign(env, camp, seed=0)
            checked += res.checked_visitations
            for states, actions, last in res.trajectories:
                path = states + [last]
                for h, (x, a) in enumerate(zip(states, actions)):
                    steps += 1
                    if not env.mdp.mask[h, x, a] or env.mdp.transitions[x, a, path[h + 1]] <= 0:
                        bad.append((name, h))
        else:
            env = bench.make()
            cfg = RunConfig(name, T=2, feedback="instant", maximizer_set="ucb-batch")
            res = run_continuous_campaign(env, campaign_config(cfg), bench.horizon, seed=0,
                                          n_mesh=512, refine_steps=10)
            for states, actions, last in res.trajectories:
                path = states + [last]
                for h, a in enumerate(actions):
                    steps += 1
                    move = np.asarray(path[h + 1]) - np.asarray(path[h])
                    inside = np.all(path[h + 1] >= env.lo) and np.all(path[h + 1] <= env.hi)
                    if np.max(np.abs(a)) > env.delta_max or not np.allclose(move, a) \
                            or not inside:
                        bad.append((name, h))
    report(4, not bad and checked > 0,
           f"{checked} visitations checked, {steps} transitions, {len(bad)} infeasible")


def test_criterion_05_relaxation_bound():
    rng = np.random.default_rng(105)
    worst = -np.inf
    for _ in range(30):
        mdp = random_mdp(rng, 3, 3, 2, deterministic=True, start=np.eye(3)[0])
        space = random_space(rng, mdp)
        obj = AdaptiveObjective(space, full_set(3), np.zeros((3, 3)), 0, 0, 2)
        mix = fw_plan(obj, mdp, FwConfig(components=60, step_rule="line-search",
                                         corrective=True, warm_start="off"))
        best = min(utility(d, full_set(3), space)[0] for d in deterministic_trajectories(mdp))
        worst = max(worst, mix.value - best)
    report(5, worst <= 1e-9, f"max FW - best trajectory = {worst:.2e} over 30 instances")


def _identified(res):
    return bool(res.records[-1].identified)


@pytest.mark.slow
def test_criterion_06_knorr():
    rates, monotone, slowest = {}, True, 0.0
    for algorithm in ("mdp-bo", "greedy-ucb"):
        hits = 0
        for seed in SEEDS:
            res = cached("knorr", seed, algorithm=algorithm)
            env = BENCHMARKS["knorr"].make()
            for states, _, last in res.trajectories:
                tau = env.points[states + [last], 0]
                monotone &= bool(np.all(np.diff(tau) >= 0))
            hits += _identified(res)
            slowest = max(slowest, max(res.solve_ms))
        rates[algorithm] = hits / len(SEEDS)
    ok = monotone and rates["mdp-bo"] > rates["greedy-ucb"] and slowest <= 5000
    report(6, ok, f"identified MDP-BO {rates['mdp-bo']:.2f} vs Greedy-UCB "
                  f"{rates['greedy-ucb']:.2f}, tau monotone {monotone}, "
                  f"slowest step {slowest / 1e3:.2f} s")


@pytest.mark.slow
def test_criterion_07_ypacarai():
    env = BENCHMARKS["ypacarai"].make()
    hits, at_port, slowest = 0, True, 0.0
    for seed in SEEDS:
        res = cached("ypacarai", seed)
        for states, _, last in res.trajectories:
            at_port &= states[0] == env.port and last == env.port
        hits += _identified(res)
        slowest = max(slowest, max(res.solve_ms))
    rate = hits / len(SEEDS)
    report(7, rate >= 0.4 and at_port and slowest <= 15000,
           f"identified by episode 2: {rate:.2f}, port start/end {at_port}, "
           f"slowest step {slowest / 1e3:.2f} s")


@pytest.mark.slow
def test_criterion_08_laser():
    final, slowest = {}, 0.0
    for agnostic in (False, True):
        regrets = []
        for seed in SEEDS:
            res = cached("laser", seed, noise_agnostic=agnostic)
            regrets.append(res.records[-1].regret)
            slowest = max(slowest, max(res.solve_ms))
        final[agnostic] = float(np.median(regrets))
    report(8, final[False] < final[True] and slowest <= 75000,
           f"median final regret aware {final[False]:.4f} vs agnostic {final[True]:.4f}, "
           f"slowest step {slowest / 1e3:.2f} s")


def test_criterion_09_linearization():
    rng = np.random.default_rng(109)
    err = max(abs(linearized_y1_closed_form(t, B) - linearized_y1_numeric(t, B))
              for t, B in zip(rng.random(100), rng.random(100)))
    ys = integrate_kinetics(np.linspace(0, 1, 11), np.linspace(0, 1, 101))
    drift = float(np.max(np.abs((ys[..., 1] - ys[..., 2]) - (ys[:1, :, 1] - ys[:1, :, 2]))))
    report(9, err < 1e-6 and drift < 1e-8,
           f"closed form vs numeric {err:.1e} at 100 points, y2 - y3 drift {drift:.1e}")


@pytest.mark.slow
def test_criterion_10_branin():
    bench = BENCHMARKS["branin2d"]
    cfg = RunConfig("branin2d", T=1, H=100, feedback="instant", maximizer_set="ucb-batch")
    curves, worst_step = [], 0.0
    for seed in SEEDS:
        env = bench.make()
        res = run_continuous_campaign(env, campaign_config(cfg), 100, seed)
        curves.append([r.regret for r in res.records])
        worst_step = max(worst_step, max(np.max(np.abs(r.action)) for r in res.records))
    median = np.median(np.array(curves), axis=0)
    smooth = np.convolve(median, np.ones(10) / 10, mode="valid")  # smooth[k] ends at step k + 9
    tail = smooth[-50:]
    rises = int(np.sum(np.diff(tail) > 0))
    report(10, rises == 0 and worst_step <= env.delta_max,
           f"smoothed median regret {tail[0]:.4f} -> {tail[-1]:.4f} with {rises} rises "
           f"over the last 50 steps, max |a| {worst_step:.4f} <= {env.delta_max}")


def _cli_log(tmp_path, benchmark, seed, T):
    cfg = tmp_path / f"{benchmark}.ini"
    cfg.write_text(f"[run]\nbenchmark = {benchmark}\nT = {T}\nfeedback = episodic\n"
                   f"seed = {seed}\noutput = {tmp_path / benchmark}\n")
    subprocess.run([sys.executable, "-m", "tcbo.harness.cli", "run", "--config", str(cfg),
                    "--no-plot"], check=True, capture_output=True)
    return (tmp_path / benchmark / f"{benchmark}-mdp-bo-s{seed}.jsonl").read_bytes()


@pytest.mark.slow
def test_criterion_11_determinism(tmp_path):
    same = {}
    for benchmark, T in (("knorr", 10), ("ypacarai", 2), ("laser", 1)):
        in_process = dumps_records(cached(benchmark, 3).records).encode()
        same[benchmark] = in_process == _cli_log(tmp_path, benchmark, 3, T)
    report(11, all(same.values()),
           "byte-identical JSONL across processes: "
           + ", ".join(f"{k} {v}" for k, v in same.items()))


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
