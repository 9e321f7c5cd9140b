"""Finite-rank Gaussian surrogate built on Nyström features.

The unknown function is modelled as ``f(x) = m(x) + Phi(x) @ theta`` with
``theta ~ N(0, I)``. The posterior is stored as the precision matrix
``V = I + sum Phi Phi^T / sigma^2`` together with ``b = sum Phi (y - m) / sigma^2``
so that updates cost O(m^2) per observation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional

import numpy as np
from scipy import linalg

from .errors import IllConditionedError
from .kernels import Kernel

EIG_DROP = 1e-10
PSD_JITTER = 1e-8


@dataclass(frozen=True, eq=False)
class FeatureMap:
    """Nyström embedding ``Phi(x) = D^{-1/2} U^T k(landmarks, x)``."""

    kernel: Kernel
    landmarks: np.ndarray
    projection: np.ndarray  # (rank, n_landmarks)

    @property
    def rank(self) -> int:
        return self.projection.shape[0]

    def __call__(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return self.kernel(X, self.landmarks) @ self.projection.T


def build_nystrom(kernel: Kernel, landmarks, drop_tol: float = EIG_DROP) -> FeatureMap:
    landmarks = np.atleast_2d(np.asarray(landmarks, dtype=float))
    if landmarks.shape[0] == 0:
        raise ValueError("at least one landmark is required")
    K = kernel(landmarks, landmarks)
    K = 0.5 * (K + K.T)
    eigval, eigvec = np.linalg.eigh(K)
    scale = max(1.0, float(eigval[-1]))
    if eigval[0] < -PSD_JITTER * scale:
        raise IllConditionedError(
            f"landmark kernel matrix is indefinite (min eigenvalue {eigval[0]:.3e})")
    keep = eigval > drop_tol
    if not keep.any():
        raise IllConditionedError("landmark kernel matrix is numerically zero")
    projection = (eigvec[:, keep] / np.sqrt(eigval[keep])).T
    return FeatureMap(kernel, landmarks, projection)


def n_continuous_landmarks(dim: int) -> int:
    return min(2 ** (5 + dim), 512)


@dataclass(frozen=True)
class NoiseModel:
    """Observation variance ``s * (1 + w * ||x - a||^2)``; ``w = 0`` is homoscedastic."""

    scale: float
    movement_penalty: float = 0.0

    def __post_init__(self):
        if self.scale <= 0 or self.movement_penalty < 0:
            raise ValueError("noise scale must be positive and movement penalty non-negative")

    def variance(self, x, a) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        a = np.asarray(a, dtype=float)
        d2 = np.sum((x - a) ** 2, axis=-1)
        return self.scale * (1.0 + self.movement_penalty * d2)

    def worst_case(self, max_sq_move: float) -> "NoiseModel":
        return NoiseModel(self.scale * (1.0 + self.movement_penalty * max_sq_move), 0.0)


@dataclass(frozen=True)
class Observation:
    x: tuple
    a: tuple
    y: float
    noise_var: float


@dataclass(frozen=True, eq=False)
class Surrogate:
    features: Callable[[np.ndarray], np.ndarray]
    precision: np.ndarray
    weighted_sum: np.ndarray
    records: tuple = ()
    prior_mean: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None)

    @classmethod
    def prior(cls, features, rank: Optional[int] = None, prior_mean=None) -> "Surrogate":
        m = rank if rank is not None else features.rank
        return cls(features, np.eye(m), np.zeros(m), (), prior_mean)

    @property
    def rank(self) -> int:
        return self.precision.shape[0]

    @property
    def n_obs(self) -> int:
        return len(self.records)

    @cached_property
    def _chol(self) -> np.ndarray:
        try:
            return linalg.cholesky(self.precision, lower=True)
        except linalg.LinAlgError as exc:
            raise IllConditionedError("posterior precision is not positive definite") from exc

    @cached_property
    def theta_mean(self) -> np.ndarray:
        return linalg.cho_solve((self._chol, True), self.weighted_sum)

    def offset(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.prior_mean is None:
            return np.zeros(X.shape[0])
        return np.asarray(self.prior_mean(X), dtype=float)

    # --- feature-space primitives -------------------------------------------------
    def solve(self, Phi: np.ndarray) -> np.ndarray:
        """``V^{-1} Phi^T`` for a row-stacked feature matrix."""
        return linalg.cho_solve((self._chol, True), np.asarray(Phi).T)

    def mean_phi(self, Phi, offset=None) -> np.ndarray:
        mu = np.asarray(Phi) @ self.theta_mean
        return mu if offset is None else mu + offset

    def var_phi(self, Phi) -> np.ndarray:
        W = linalg.solve_triangular(self._chol, np.asarray(Phi).T, lower=True)
        return np.sum(W * W, axis=0)

    # --- point-space API ------------------------------------------------------------
    def mean(self, X) -> np.ndarray:
        return self.mean_phi(self.features(X), self.offset(X))

    def variance(self, X) -> np.ndarray:
        return self.var_phi(self.features(X))

    def update(self, X, y, noise_var, actions=None, Phi=None, offset=None) -> "Surrogate":
        X = np.atleast_2d(np.asarray(X, dtype=float))
        y = np.atleast_1d(np.asarray(y, dtype=float))
        if y.size == 0:
            return self
        noise_var = np.broadcast_to(np.asarray(noise_var, dtype=float), y.shape)
        if not np.all(np.isfinite(noise_var)) or np.any(noise_var <= 0):
            raise IllConditionedError("observation noise variances must be finite and positive")
        Phi = self.features(X) if Phi is None else np.atleast_2d(Phi)
        offset = self.offset(X) if offset is None else np.asarray(offset, dtype=float)
        resid = y - offset
        V = self.precision + Phi.T @ (Phi / noise_var[:, None])
        b = self.weighted_sum + Phi.T @ (resid / noise_var)
        if not (np.all(np.isfinite(V)) and np.all(np.isfinite(b))):
            raise IllConditionedError("posterior update overflowed")
        if actions is None:
            actions = X
        actions = np.atleast_2d(np.asarray(actions, dtype=float))
        new = tuple(
            Observation(tuple(X[i]), tuple(actions[i]), float(y[i]), float(noise_var[i]))
            for i in range(y.size))
        return Surrogate(self.features, V, b, self.records + new, self.prior_mean)


def confidence_bounds(surrogate: Surrogate, X, beta: float = 2.0):
    if beta < 0:
        raise ValueError("beta must be non-negative")
    mu = surrogate.mean(X)
    sd = np.sqrt(surrogate.variance(X))
    return mu - beta * sd, mu + beta * sd


def sample_function(surrogate: Surrogate, rng: np.random.Generator, size: Optional[int] = None):
    """Draw weight vectors ``theta ~ N(mu_theta, V^{-1})``; shape (m,) or (size, m)."""
    m = surrogate.rank
    n = 1 if size is None else size
    eps = rng.standard_normal((m, n))
    draws = surrogate.theta_mean[:, None] + linalg.solve_triangular(
        surrogate._chol.T, eps, lower=False)
    return draws[:, 0] if size is None else draws.T


def pair_variance_exact(kernel: Kernel, points, weights, z, z_prime, noise_var) -> float:
    """``Var[f(z) - f(z')]`` after weighted observations, using only kernel evaluations.

    ``weights`` play the role of the diagonal design matrix; ``noise_var`` is the
    (scalar or per-point) effective noise. Zero-weight points are excluded.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    weights = np.asarray(weights, dtype=float)
    if np.any(weights < 0):
        raise ValueError("weights must be non-negative")
    noise_var = np.broadcast_to(np.asarray(noise_var, dtype=float), weights.shape)
    keep = weights > 0
    Z = np.vstack([np.atleast_1d(np.asarray(z, float)), np.atleast_1d(np.asarray(z_prime, float))])
    Kzz = kernel(Z, Z)
    if keep.any():
        Xs = points[keep]
        A = np.diag(noise_var[keep] / weights[keep]) + kernel(Xs, Xs)
        Kzx = kernel(Z, Xs)
        try:
            c, low = linalg.cho_factor(A, lower=True)
        except linalg.LinAlgError as exc:
            raise IllConditionedError("regularized kernel system is singular") from exc
        Kzz = Kzz - Kzx @ linalg.cho_solve((c, low), Kzx.T)
    return float(Kzz[0, 0] + Kzz[1, 1] - 2.0 * Kzz[0, 1])
