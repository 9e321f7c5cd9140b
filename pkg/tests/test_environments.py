import sys

import numpy as np
import pytest

from tcbo.environments import (ExternalBlackBox, knorr_env, laser_env, synthetic_env,
                               ypacarai_env)
from tcbo.environments.base import read_field, read_mask, write_field
from tcbo.environments.generate import laser_field, ypacarai_field
from tcbo.environments.knorr import (RK4_STEP, integrate_kinetics, linearized_jacobian,
                                     linearized_y1_closed_form, linearized_y1_numeric,
                                     product_concentration)
from tcbo.environments.synthetic import SPECS, _michalewicz_optimum
from tcbo.environments.ypacarai import check_connected
from tcbo.mdp import rollout, solve_dp


@pytest.fixture(scope="module")
def knorr():
    return knorr_env()


@pytest.fixture(scope="module")
def lake():
    return ypacarai_env()


@pytest.fixture(scope="module")
def laser():
    return laser_env()


def test_table_sizes(knorr, lake, laser):
    assert (knorr.mdp.n_states, knorr.mdp.n_actions, knorr.mdp.horizon) == (100, 6, 10)
    assert lake.mdp.n_states <= 100 and lake.mdp.n_actions == 8 and lake.mdp.horizon == 50
    assert (laser.mdp.n_states, laser.mdp.n_actions, laser.mdp.horizon) == (100, 100, 100)


def test_knorr_equilibria_give_no_product():
    tau = np.linspace(0, 1, 5)
    y = product_concentration(tau, np.array([0.0, 1.0]))
    assert np.all(y == 0.0)


def test_knorr_conservation_and_consistency():
    t = np.linspace(0, 1, 21)
    ys = integrate_kinetics(np.array([0.2, 0.5, 0.8]), t)
    assert np.max(np.abs((ys[..., 1] - ys[..., 2]) - (ys[0, :, 1] - ys[0, :, 2]))) < 1e-8
    # d/dt (y2 + y4) = -k3 y4 <= 0
    s = ys[..., 1] + ys[..., 3]
    assert np.all(np.diff(s, axis=0) <= 1e-12)


def test_knorr_halved_step_agrees():
    tau = np.linspace(0, 1, 10)
    B = np.arange(10) / 10
    a = product_concentration(tau, B, RK4_STEP)
    b = product_concentration(tau, B, RK4_STEP / 2)
    assert np.max(np.abs(a - b)) < 1e-8


def test_knorr_linearization_closed_form():
    rng = np.random.default_rng(0)
    for t, B in zip(rng.random(10) * 0.02, rng.uniform(0.05, 0.95, 10)):
        assert abs(linearized_y1_closed_form(t, B) - linearized_y1_numeric(t, B)) < 1e-6
    J = linearized_jacobian(0.4)
    assert J.shape == (5, 5)


def test_knorr_paths_never_lower_residence_time(knorr):
    rng = np.random.default_rng(1)
    pi = knorr.mdp.uniform_policy()
    for _ in range(50):
        tr = rollout(knorr.mdp, pi, rng)
        tau = knorr.points[tr.states + [tr.final_state], 0]
        assert np.all(np.diff(tau) >= 0)
    assert knorr.mdp.initial[0] == 1.0 and tuple(knorr.points[0]) == (0.0, 0.0)


def test_knorr_optimum(knorr):
    assert knorr.optimum_index == 95
    assert knorr.points[95] == pytest.approx([1.0, 0.5])


def test_lake_episodes_start_and_end_at_port(lake):
    rng = np.random.default_rng(2)
    for _ in range(20):
        r = rng.standard_normal(lake.mdp.mask.shape)
        policy, _, _ = solve_dp(lake.mdp, r)
        tr = rollout(lake.mdp, policy, rng)
        assert tr.states[0] == lake.port and tr.final_state == lake.port


def test_lake_field_and_mask(lake):
    free, port = read_mask(lake_mask_path())
    check_connected(free)
    assert free[port]
    assert lake.optimum_index == int(np.argmax(lake.values))
    field = ypacarai_field(free.shape)
    assert np.allclose(field[free], lake.values, atol=1e-11)


def lake_mask_path():
    from tcbo.environments.base import DATA_DIR
    return DATA_DIR / "ypacarai_mask.txt"


def test_mask_reader_errors(tmp_path):
    p = tmp_path / "m.txt"
    p.write_text("..\n...\n")
    with pytest.raises(ValueError, match="ragged"):
        read_mask(p)
    p.write_text("..\n.x\n")
    with pytest.raises(ValueError, match="characters"):
        read_mask(p)
    p.write_text("P.\n.P\n")
    with pytest.raises(ValueError, match="port"):
        read_mask(p)
    with pytest.raises(ValueError):
        check_connected(np.array([[True, False, True]]))


def test_field_roundtrip(tmp_path):
    f = np.arange(6.0).reshape(2, 3) / 7
    write_field(tmp_path / "f.txt", f, seed=3)
    back, header = read_field(tmp_path / "f.txt")
    assert np.allclose(back, f, atol=1e-12) and header["seed"] == "3"
    (tmp_path / "g.txt").write_text("# shape=2x2\n1 2 3\n")
    with pytest.raises(ValueError):
        read_field(tmp_path / "g.txt")


def test_laser_noise_and_field(laser):
    assert laser.noise[5, 5] == pytest.approx(0.01)
    assert laser.noise.max() == pytest.approx(0.41)
    assert np.all(laser.worst_noise == pytest.approx(0.41))
    assert np.allclose(laser.values, laser_field().ravel(), atol=1e-11)
    # any target is reachable in one move
    assert laser.mdp.successors[0, 57] == 57 and laser.mdp.query[3, 57] == 57
    homo = laser_env(w=0.0)
    assert np.all(homo.noise == 0.01)


def test_sample_variance_matches_declared(laser):
    rng = np.random.default_rng(4)
    for x, a in [(0, 0), (0, 99), (44, 47)]:
        ys = np.array([laser.query(x, a, rng) for _ in range(10000)])
        assert abs(ys.var() / laser.noise[x, a] - 1) < 0.05


@pytest.mark.parametrize("name", sorted(SPECS))
def test_synthetic_optima(name):
    env = synthetic_env(name)
    x, v = env.optimum
    assert env.f(x)[0] == pytest.approx(v, abs=1e-6)
    rng = np.random.default_rng(0)
    assert np.max(env.f(rng.random((20000, env.dim)))) <= v + 1e-9
    if SPECS[name].max_value is not None:
        assert v == pytest.approx(SPECS[name].max_value, abs=1e-5)


def test_michalewicz_reference_values():
    assert _michalewicz_optimum(2)[1] == pytest.approx(1.8013, abs=1e-4)
    assert _michalewicz_optimum(5)[1] == pytest.approx(4.687658, abs=1e-5)


def test_synthetic_noise():
    env = synthetic_env("branin2d", noise=1e-3)
    rng = np.random.default_rng(0)
    ys = np.array([env.query(env.start, rng) for _ in range(10000)])
    assert abs(ys.var() / 1e-3 - 1) < 0.05
    with pytest.raises(KeyError):
        synthetic_env("rosenbrock")


def test_external_black_box():
    script = ("import sys\n"
              "for line in sys.stdin:\n"
              "    v = [float(t) for t in line.split()]\n"
              "    print(sum(v), flush=True)\n")
    with ExternalBlackBox([sys.executable, "-c", script]) as box:
        assert box([1.0, 2.0], [0.5, 0.25]) == pytest.approx(3.75)
        assert box(1.0, 2.0) == pytest.approx(3.0)
    bad = ExternalBlackBox([sys.executable, "-c", "print('nan?')"])
    with pytest.raises(RuntimeError):
        bad(0.0, 0.0)
    bad.close()
