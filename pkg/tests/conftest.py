import numpy as np
import pytest

from tcbo.kernels import Kernel
from tcbo.mdp import FiniteMdp
from tcbo.objective import DesignSpace, MaximizerSet
from tcbo.surrogate import build_nystrom


def random_mdp(rng, n_states, n_actions, horizon, deterministic=False, start=None):
    """Random MDP with at least one feasible action per (stage, state)."""
    mask = rng.random((horizon, n_states, n_actions)) < 0.7
    for h in range(horizon):
        for x in range(n_states):
            if not mask[h, x].any():
                mask[h, x, rng.integers(n_actions)] = True
    if deterministic:
        nxt = rng.integers(n_states, size=(n_states, n_actions))
        P = np.zeros((n_states, n_actions, n_states))
        P[np.arange(n_states)[:, None], np.arange(n_actions)[None, :], nxt] = 1.0
    else:
        P = rng.random((n_states, n_actions, n_states)) ** 2
        P /= P.sum(axis=2, keepdims=True)
    if start is None:
        init = rng.random(n_states) + 0.1
        init /= init.sum()
    else:
        init = start
    coords = rng.random((n_states, 2))
    return FiniteMdp(coords, P, mask, horizon, init)


def random_space(rng, mdp, lengthscale=0.5, budget=None):
    """Design space with RBF features over the MDP states and random heteroscedastic noise."""
    kernel = Kernel("rbf", 1.0, lengthscale)
    feats = build_nystrom(kernel, mdp.coords)
    Phi = feats(mdp.coords)
    noise = 0.05 + rng.random(mdp.query.shape)
    budget = float(mdp.horizon) if budget is None else budget
    return DesignSpace(Phi, mdp.query, noise, budget)


def full_set(n):
    idx = np.arange(n)
    return MaximizerSet(idx[:, None].astype(float), "credible", idx)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
