"""Lake monitoring on an obstacle grid with a fixed start and return port."""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from ..kernels import Kernel
from ..mdp import grid_mdp, reachability_filter
from .base import DATA_DIR, DiscreteEnvironment, read_field, read_mask

MOVES = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]
HORIZON = 50
NOISE = 1e-3


def check_connected(free) -> None:
    _, n = ndimage.label(free, structure=np.ones((3, 3)))
    if n != 1:
        raise ValueError(f"mask must form one connected free region, found {n}")


def ypacarai_env(mask_path=None, field_path=None, horizon=HORIZON, noise=NOISE, variance=1.0,
                 lengthscale=0.2):
    free, port = read_mask(mask_path or DATA_DIR / "ypacarai_mask.txt")
    check_connected(free)
    field, _ = read_field(field_path or DATA_DIR / "ypacarai_field.txt")
    if field.shape != free.shape:
        raise ValueError("field and mask shapes differ")
    rows, cols = free.shape
    cells = np.argwhere(free)
    coords = cells / np.array([rows - 1, cols - 1], dtype=float)
    index = -np.ones(free.shape, dtype=int)
    index[free] = np.arange(len(cells))
    start = int(index[port])
    mdp = grid_mdp(coords, MOVES, horizon, start, free=free, shape=free.shape)
    mdp = reachability_filter(mdp, {start})
    env = DiscreteEnvironment("ypacarai", mdp, field[free], Kernel("rbf", variance, lengthscale),
                              noise)
    env.port = start
    return env
