"""Closed-form test functions on the unit box, oriented for maximization."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import optimize

from ..kernels import Kernel
from ..surrogate import NoiseModel

SYNC_NOISE = 1e-3
ASYNC_NOISE = 1e-4


def branin(X):
    """Rescaled Branin, negated; unit-box inputs."""
    x1 = 15.0 * X[:, 0] - 5.0
    x2 = 15.0 * X[:, 1]
    a = x2 - 5.1 * x1**2 / (4 * np.pi**2) + 5.0 * x1 / np.pi - 6.0
    val = (a**2 + (10.0 - 10.0 / (8 * np.pi)) * np.cos(x1) - 44.81) / 51.95
    return -val


_H3_A = np.array([[3.0, 10, 30], [0.1, 10, 35], [3.0, 10, 30], [0.1, 10, 35]])
_H3_P = 1e-4 * np.array([[3689, 1170, 2673], [4699, 4387, 7470], [1091, 8732, 5547],
                         [381, 5743, 8828]])
_H6_A = np.array([[10, 3, 17, 3.5, 1.7, 8], [0.05, 10, 17, 0.1, 8, 14],
                  [3, 3.5, 1.7, 10, 17, 8], [17, 8, 0.05, 10, 0.1, 14]])
_H6_P = 1e-4 * np.array([[1312, 1696, 5569, 124, 8283, 5886], [2329, 4135, 8307, 3736, 1004, 9991],
                         [2348, 1451, 3522, 2883, 3047, 6650], [4047, 8828, 8732, 5743, 1091, 381]])
_H_ALPHA = np.array([1.0, 1.2, 3.0, 3.2])


def _hartmann(X, A, P):
    inner = np.sum(A[None] * (X[:, None, :] - P[None]) ** 2, axis=2)
    return np.sum(_H_ALPHA * np.exp(-inner), axis=1)


def hartmann3(X):
    return _hartmann(X, _H3_A, _H3_P)


def hartmann6(X):
    return _hartmann(X, _H6_A, _H6_P)


def michalewicz(X, m=10):
    """Negated Michalewicz with the unit box mapped onto [0, pi]^d."""
    Z = np.pi * X
    i = np.arange(1, X.shape[1] + 1)
    return np.sum(np.sin(Z) * np.sin(i * Z**2 / np.pi) ** (2 * m), axis=1)


def levy(X):
    """Negated Levy with the unit box mapped onto [-10, 10]^d; maximum 0 at all ones."""
    Z = 20.0 * X - 10.0
    w = 1.0 + (Z - 1.0) / 4.0
    first = np.sin(np.pi * w[:, 0]) ** 2
    mid = np.sum((w[:, :-1] - 1) ** 2 * (1 + 10 * np.sin(np.pi * w[:, :-1] + 1) ** 2), axis=1)
    last = (w[:, -1] - 1) ** 2 * (1 + np.sin(2 * np.pi * w[:, -1]) ** 2)
    return -(first + mid + last)


def _michalewicz_optimum(d, m=10):
    """Separable maximization coordinate by coordinate: dense grid then bounded polish."""
    xs, total = [], 0.0
    grid = np.linspace(0.0, 1.0, 20001)
    for i in range(1, d + 1):
        g = lambda u: np.sin(np.pi * u) * np.sin(i * np.pi * u**2) ** (2 * m)
        u0 = grid[np.argmax(g(grid))]
        res = optimize.minimize_scalar(lambda u: -g(u), bounds=(u0 - 1e-4, u0 + 1e-4),
                                       method="bounded", options={"xatol": 1e-12})
        xs.append(res.x)
        total += -res.fun
    return np.array(xs), total


@dataclass(frozen=True)
class SyntheticSpec:
    name: str
    fn: object
    dim: int
    delta_max: float
    variance: float
    lengthscale: float
    argmax: tuple = None
    max_value: float = None


SPECS = {
    "branin2d": SyntheticSpec("branin2d", branin, 2, 0.05, 0.6, 0.15,
                              ((np.pi + 5) / 15, 2.275 / 15), 1.0473938),
    "hartmann3d": SyntheticSpec("hartmann3d", hartmann3, 3, 0.1, 2.0, 0.13849,
                                (0.114614, 0.555649, 0.852547), 3.86278),
    "hartmann6d": SyntheticSpec("hartmann6d", hartmann6, 6, 0.2, 1.7, 0.22,
                                (0.20169, 0.150011, 0.476874, 0.275332, 0.311652, 0.6573),
                                3.32237),
    "michalewicz2d": SyntheticSpec("michalewicz2d", michalewicz, 2, 0.05, 0.35, 0.179485),
    "michalewicz3d": SyntheticSpec("michalewicz3d", michalewicz, 3, 0.1, 0.85, 0.179485),
    "levy4d": SyntheticSpec("levy4d", levy, 4, 0.1, 0.6, 0.14175, (0.55,) * 4, 0.0),
}


class ContinuousEnvironment:
    """Black box on a box domain, observed at the state reached after each move."""

    def __init__(self, spec: SyntheticSpec, noise: float = SYNC_NOISE, lo=0.0, hi=1.0,
                 delta_max=None):
        self.spec = spec
        self.name = spec.name
        self.dim = spec.dim
        self.lo = np.full(spec.dim, float(lo))
        self.hi = np.full(spec.dim, float(hi))
        self.delta_max = spec.delta_max if delta_max is None else float(delta_max)
        self.kernel = Kernel("rbf", spec.variance, spec.lengthscale)
        self.noise_model = NoiseModel(noise)
        self.noise = float(noise)
        self.prior_mean = None

    def f(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return self.spec.fn(X)

    def query(self, x, rng: np.random.Generator) -> float:
        return float(self.f(x)[0] + np.sqrt(self.noise) * rng.standard_normal())

    @cached_property
    def optimum(self):
        """(argmax, max value) in unit-box coordinates."""
        if self.spec.name.startswith("michalewicz"):
            return _michalewicz_optimum(self.dim)
        x = np.array(self.spec.argmax)
        return x, float(self.f(x)[0])

    @property
    def optimum_value(self) -> float:
        return self.optimum[1]

    @property
    def start(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)


def synthetic_env(name: str, noise: float = SYNC_NOISE, delta_max=None) -> ContinuousEnvironment:
    if name not in SPECS:
        raise KeyError(f"unknown synthetic benchmark {name!r}; choose from {sorted(SPECS)}")
    return ContinuousEnvironment(SPECS[name], noise, delta_max=delta_max)
