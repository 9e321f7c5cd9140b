import numpy as np
import pytest

from tcbo.continuous import (ActionPlan, AtomDesign, LinearSystem, arrival_steps,
                             continuous_plan, mpc_subproblem, path_objective,
                             run_continuous_campaign, shortest_feasible_path)
from tcbo.environments import synthetic_env
from tcbo.kernels import Kernel
from tcbo.planner import CampaignConfig
from tcbo.surrogate import build_nystrom


def box(dim=2, a_max=0.1):
    return LinearSystem(dim, a_max, 0.0, 1.0)


def test_system_validation_and_clipping():
    with pytest.raises(ValueError):
        LinearSystem(2, 0.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        LinearSystem(2, 0.1, 1.0, 1.0)
    s = box()
    assert s.identity
    assert np.allclose(s.step(np.array([0.95, 0.5]), np.array([0.1, 0.0])), [1.0, 0.5])


def test_shortest_path_reaches_and_holds():
    s = box(a_max=0.1)
    plan = shortest_feasible_path(s, [0.5, 0.5], [0.8, 0.45], 5)
    assert np.all(np.abs(plan.actions) <= 0.1 + 1e-15)
    assert np.allclose(plan.states[2], [0.8, 0.45])
    assert np.allclose(plan.states[-1], [0.8, 0.45])
    assert arrival_steps([0.5, 0.5], [0.8, 0.45], 0.1) == 3
    with pytest.raises(ValueError):
        shortest_feasible_path(s, [0.5, 0.5], [0.8, 0.45], 0)


def test_shortest_path_with_input_matrix():
    s = LinearSystem(2, 0.2, 0.0, 1.0, A=np.eye(2), B=2.0 * np.eye(2))
    plan = shortest_feasible_path(s, [0.5, 0.5], [0.9, 0.5], 3)
    assert np.allclose(plan.states[0], [0.9, 0.5])
    assert not s.identity


def test_mpc_keeps_lower_path_and_breaks_ties_to_first():
    s = box()
    field = lambda X: -X[:, 0]  # the right-hand target collects more negative gradient
    plan = mpc_subproblem(field, s, [0.5, 0.5], 4, [0.1, 0.5], [0.9, 0.5])
    assert plan.states[-1][0] == pytest.approx(0.9)
    flat = lambda X: np.zeros(len(X))
    plan = mpc_subproblem(flat, s, [0.5, 0.5], 4, [0.1, 0.5], [0.9, 0.5])
    assert plan.states[-1][0] == pytest.approx(0.1)
    assert path_objective(field, plan) == pytest.approx(-np.sum(plan.states[:, 0]))


def test_atom_design_matrix():
    Phi = np.eye(2)
    M = AtomDesign(None, 0.5, 4.0).matrix(Phi, np.array([1.0, 0.5]))
    assert np.allclose(M, np.diag([2.25, 1.25]))


def test_continuous_plan_is_feasible_and_no_worse_than_staying():
    rng = np.random.default_rng(0)
    s = box()
    feats = build_nystrom(Kernel("rbf", 1.0, 0.2), rng.random((64, 2)))
    design = AtomDesign(feats, 1e-3, 100.0)
    Z = rng.random((6, 2))
    plan, value = continuous_plan(feats, design, s, np.array([0.5, 0.5]), Z, None, 0, 0, 10)
    assert isinstance(plan, ActionPlan) and len(plan) == 10
    assert np.all(np.abs(plan.actions) <= 0.1 + 1e-15)
    stay, stay_value = continuous_plan(feats, design, s, np.array([0.5, 0.5]), Z[:1], None,
                                       0, 0, 10)
    assert np.isfinite(stay_value)


@pytest.mark.parametrize("algorithm", ["mdp-bo", "greedy-ucb"])
def test_short_branin_campaign(algorithm):
    env = synthetic_env("branin2d")
    cfg = CampaignConfig(T=1, feedback="instant", algorithm=algorithm, maximizer_set="ucb-batch",
                         K=8)
    res = run_continuous_campaign(env, cfg, H=6, seed=0, n_mesh=256, refine_steps=5)
    assert len(res.records) == 6
    for r in res.records:
        assert np.max(np.abs(r.action)) <= env.delta_max
        assert r.regret >= -1e-9
    states = [np.array(r.state) for r in res.records]
    for a, b in zip(states, states[1:]):
        assert np.max(np.abs(b - a)) <= env.delta_max + 1e-12


def test_continuous_campaign_deterministic_and_async():
    env = synthetic_env("branin2d", noise=1e-4)
    cfg = CampaignConfig(T=1, feedback="asynchronous", delay=3, maximizer_set="thompson", K=5)
    a = run_continuous_campaign(env, cfg, H=5, seed=3, n_mesh=128, refine_steps=3)
    b = run_continuous_campaign(env, cfg, H=5, seed=3, n_mesh=128, refine_steps=3)
    assert [vars(r) for r in a.records] == [vars(r) for r in b.records]
    assert a.surrogate.n_obs == 2
