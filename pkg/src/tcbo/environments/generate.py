"""Regenerate the shipped benchmark fields: ``python -m tcbo.environments.generate``."""

from __future__ import annotations

import numpy as np

from ..kernels import Kernel
from .base import DATA_DIR, read_mask, write_field

YPACARAI_BUMPS = (  # (row, col, amplitude, width) in normalized grid units
    (1.0 / 9, 7.0 / 9, 1.0, 0.15),
    (6.0 / 9, 2.0 / 9, 0.85, 0.15),
)
LASER_SEED = 4
LASER_LENGTHSCALE = 0.4


def grid_coords(n, lo=0.0, hi=1.0):
    g = np.linspace(lo, hi, n)
    R, C = np.meshgrid(g, g, indexing="ij")
    return np.column_stack([R.ravel(), C.ravel()])


def ypacarai_field(shape=(10, 10), bumps=YPACARAI_BUMPS):
    X = grid_coords(shape[0])
    f = np.zeros(len(X))
    for r, c, amp, width in bumps:
        f += amp * np.exp(-0.5 * ((X[:, 0] - r) ** 2 + (X[:, 1] - c) ** 2) / width**2)
    return f.reshape(shape)


def laser_field(seed=LASER_SEED, n=10, lengthscale=LASER_LENGTHSCALE):
    X = grid_coords(n, -0.5, 0.5)
    K = Kernel("rbf", 1.0, lengthscale)(X, X)
    L = np.linalg.cholesky(K + 1e-10 * np.eye(len(X)))
    z = np.random.default_rng(seed).standard_normal(len(X))
    return (L @ z).reshape(n, n)


def main():
    free, _ = read_mask(DATA_DIR / "ypacarai_mask.txt")
    field = ypacarai_field(free.shape)
    write_field(DATA_DIR / "ypacarai_field.txt", field, kind="two-bump",
                bumps=";".join(",".join(f"{v:.6f}" for v in b) for b in YPACARAI_BUMPS))
    write_field(DATA_DIR / "laser_field.txt", laser_field(), kind="gp-sample", seed=LASER_SEED,
                lengthscale=LASER_LENGTHSCALE, variance=1.0, box="-0.5:0.5")


if __name__ == "__main__":
    main()
