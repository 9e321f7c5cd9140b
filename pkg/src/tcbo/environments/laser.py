"""Free-electron laser tuning: any target reachable, noise grows with the move size."""

from __future__ import annotations

import numpy as np

from ..kernels import Kernel
from ..mdp import FiniteMdp
from ..surrogate import NoiseModel
from .base import DATA_DIR, DiscreteEnvironment, read_field

HORIZON = 100
SCALE = 0.01
PENALTY = 20.0


def laser_env(s=SCALE, w=PENALTY, horizon=HORIZON, field_path=None, lengthscale=0.4,
              variance=1.0, start=0):
    """Actions are target states; the observation is taken at the target."""
    field, _ = read_field(field_path or DATA_DIR / "laser_field.txt")
    n = field.shape[0]
    g = np.linspace(-0.5, 0.5, n)
    R, C = np.meshgrid(g, g, indexing="ij")
    coords = np.column_stack([R.ravel(), C.ravel()])
    N = len(coords)
    P = np.zeros((N, N, N))
    P[:, np.arange(N), np.arange(N)] = 1.0
    query = np.tile(np.arange(N), (N, 1))
    mdp = FiniteMdp(coords, P, np.ones((N, N), dtype=bool), horizon, start, query,
                    successors=query.copy())
    model = NoiseModel(s, w)
    noise = model.variance(coords[:, None, :], coords[None, :, :])
    diam = float(np.max(np.sum((coords[:, None] - coords[None]) ** 2, axis=-1)))
    worst = model.worst_case(diam).scale
    return DiscreteEnvironment("laser", mdp, field.ravel(), Kernel("rbf", variance, lengthscale),
                               noise, worst_noise=worst)
