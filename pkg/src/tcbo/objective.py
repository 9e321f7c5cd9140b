"""Best-arm identification utility over state-action visitations.

``U(d) = max_{z != z'} ||Phi(z) - Phi(z')||^2_{V(d)^{-1}}`` with
``V(d) = sum_{x,a} d(x,a) Phi(x,a) Phi(x,a)^T / sigma^2(x,a) + I / (T H)``.
The G-allocation variant replaces the pairwise difference with a single embedding.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import linalg, optimize, stats

from .errors import IllConditionedError, OptimumIdentified
from .surrogate import Surrogate, sample_function

TIE_TOL = 1e-12
# candidate sets larger than this are pruned before the pairwise scan
PRUNE_MIN = 64
# rows per block in the pairwise scan
PAIR_BLOCK = 256


# --- domains ----------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DiscreteDomain:
    points: np.ndarray
    Phi: np.ndarray
    offset: np.ndarray

    @classmethod
    def build(cls, points, surrogate: Surrogate) -> "DiscreteDomain":
        points = np.atleast_2d(np.asarray(points, dtype=float))
        return cls(points, surrogate.features(points), surrogate.offset(points))

    @property
    def size(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True, eq=False)
class BoxDomain:
    """Continuous box searched over a seeded quasi-uniform mesh plus local refinement."""

    lo: np.ndarray
    hi: np.ndarray
    mesh: np.ndarray
    Phi: np.ndarray
    offset: np.ndarray
    features: object
    prior_mean: object = None
    refine_steps: int = 50

    @classmethod
    def build(cls, lo, hi, surrogate: Surrogate, n_mesh: int = 4096, seed: int = 0,
              refine_steps: int = 50) -> "BoxDomain":
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        sobol = stats.qmc.Sobol(d=lo.size, scramble=True, seed=seed)
        mesh = stats.qmc.scale(sobol.random(n_mesh), lo, hi)
        return cls(lo, hi, mesh, surrogate.features(mesh), surrogate.offset(mesh),
                   surrogate.features, surrogate.prior_mean, refine_steps)

    @property
    def points(self) -> np.ndarray:
        return self.mesh

    def value_fn(self, theta, scale_sd=0.0, surrogate=None):
        """Pointwise ``Phi(x) theta + m(x) (+ scale_sd * sd(x))`` for refinement."""
        def f(x):
            x = np.clip(x, self.lo, self.hi)[None, :]
            phi = self.features(x)
            v = float((phi @ theta)[0])
            if self.prior_mean is not None:
                v += float(self.prior_mean(x)[0])
            if scale_sd:
                v += scale_sd * float(np.sqrt(surrogate.var_phi(phi)[0]))
            return v
        return f

    def refine(self, f, start) -> np.ndarray:
        if self.refine_steps <= 0:
            return np.asarray(start, dtype=float)
        res = optimize.minimize(lambda x: -f(x), start, method="Nelder-Mead",
                                bounds=list(zip(self.lo, self.hi)),
                                options={"maxiter": self.refine_steps, "xatol": 1e-6,
                                         "fatol": 1e-10})
        x = np.clip(res.x, self.lo, self.hi)
        return x if f(x) >= f(start) else np.asarray(start, dtype=float)


def _argmax_columns(values: np.ndarray) -> np.ndarray:
    return np.argmax(values, axis=0)


def recommend(surrogate: Surrogate, domain) -> np.ndarray:
    """Point (or index, on a discrete domain) maximizing the posterior mean."""
    mu = surrogate.mean_phi(domain.Phi, domain.offset)
    i = int(np.argmax(mu))
    if isinstance(domain, DiscreteDomain):
        return np.asarray(i)
    return domain.refine(domain.value_fn(surrogate.theta_mean), domain.mesh[i])


# --- maximizer sets ---------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class MaximizerSet:
    points: np.ndarray
    method: str
    indices: Optional[np.ndarray] = None
    betas: Optional[np.ndarray] = None

    def __post_init__(self):
        if len(self.points) == 0:
            raise ValueError("a maximizer set cannot be empty")

    @property
    def size(self) -> int:
        return len(self.points)

    def unique(self):
        """Distinct candidates in first-occurrence order (points, indices)."""
        if self.indices is not None:
            _, first = np.unique(self.indices, return_index=True)
            order = np.sort(first)
            return self.points[order], self.indices[order]
        _, first = np.unique(np.round(self.points, 12), axis=0, return_index=True)
        order = np.sort(first)
        return self.points[order], None


def credible_set(surrogate: Surrogate, domain, beta: float = 2.0) -> MaximizerSet:
    if beta < 0:
        raise ValueError("beta must be non-negative")
    mu = surrogate.mean_phi(domain.Phi, domain.offset)
    sd = np.sqrt(surrogate.var_phi(domain.Phi))
    ucb, lcb = mu + beta * sd, mu - beta * sd
    keep = ucb >= lcb.max()
    keep[int(np.argmax(mu))] = True
    idx = np.flatnonzero(keep)
    return MaximizerSet(domain.points[idx], "credible", idx)


def thompson_set(surrogate: Surrogate, domain, K: int, rng: np.random.Generator) -> MaximizerSet:
    if K < 1:
        raise ValueError("K must be at least 1")
    thetas = sample_function(surrogate, rng, size=K)
    values = domain.Phi @ thetas.T + domain.offset[:, None]
    idx = _argmax_columns(values)
    if isinstance(domain, DiscreteDomain):
        return MaximizerSet(domain.points[idx], "thompson", idx)
    pts = np.array([domain.refine(domain.value_fn(thetas[k]), domain.mesh[idx[k]])
                    for k in range(K)])
    return MaximizerSet(pts, "thompson")


def ucb_betas(K: int) -> np.ndarray:
    return np.linspace(0.0, 2.5, K)


def ucb_batch_set(surrogate: Surrogate, domain, K: int) -> MaximizerSet:
    if K < 1:
        raise ValueError("K must be at least 1")
    betas = ucb_betas(K)
    mu = surrogate.mean_phi(domain.Phi, domain.offset)
    sd = np.sqrt(surrogate.var_phi(domain.Phi))
    idx = _argmax_columns(mu[:, None] + sd[:, None] * betas[None, :])
    if isinstance(domain, DiscreteDomain):
        return MaximizerSet(domain.points[idx], "ucb-batch", idx, betas)
    # refine each distinct mesh argmax once, under the first bound that selected it
    cache = {}
    pts = []
    for k, beta in enumerate(betas):
        key = int(idx[k])
        if key not in cache:
            f = domain.value_fn(surrogate.theta_mean, beta, surrogate)
            cache[key] = domain.refine(f, domain.mesh[key])
        pts.append(cache[key])
    return MaximizerSet(np.array(pts), "ucb-batch", None, betas)


# --- utility ----------------------------------------------------------------------

@dataclass(frozen=True)
class UtilityValue:
    value: float
    pair: tuple  # positions within the distinct candidate list
    direction: np.ndarray  # V(d)^{-1} (Phi(z*) - Phi(z*')) or V(d)^{-1} Phi(z*)


def information_matrix(Phi: np.ndarray, weights: np.ndarray, budget: float) -> np.ndarray:
    """``sum_i w_i Phi_i Phi_i^T + I / budget`` for row features ``Phi`` and precision weights."""
    m = Phi.shape[1]
    return Phi.T @ (Phi * weights[:, None]) + np.eye(m) / budget


def evaluate_utility(V: np.ndarray, Zphi: np.ndarray, allocation: str = "xy") -> UtilityValue:
    try:
        c = linalg.cho_factor(V, lower=True)
    except linalg.LinAlgError as exc:
        raise IllConditionedError("design matrix is not positive definite") from exc
    if allocation == "g":
        W = linalg.cho_solve(c, Zphi.T)
        scores = np.einsum("ij,ji->i", Zphi, W)
        i = int(np.argmax(scores >= scores.max() - TIE_TOL))
        return UtilityValue(float(scores[i]), (i,), W[:, i])
    if allocation != "xy":
        raise ValueError(f"unknown allocation {allocation!r}")
    K = Zphi.shape[0]
    if K < 2:
        raise OptimumIdentified("fewer than two candidate maximizers remain")
    keep = _diameter_candidates(c[0], Zphi) if K > PRUNE_MIN else np.arange(K)
    Zk = Zphi[keep]
    W = linalg.cho_solve(c, Zk.T)
    value, i, j = _max_pair(Zk, W)
    return UtilityValue(value, (int(keep[i]), int(keep[j])), W[:, i] - W[:, j])


def _pair_block(Zk, W, diag, i0, i1):
    """Pair variances for rows i0:i1 against columns i0:, lower part masked."""
    S = Zk[i0:i1] @ W[:, i0:]
    S *= -2.0
    S += diag[i0:i1, None]
    S += diag[None, i0:]
    S[np.tri(i1 - i0, S.shape[1], dtype=bool)] = -np.inf
    return S


def _max_pair(Zk: np.ndarray, W: np.ndarray, block: int = PAIR_BLOCK):
    """Largest pair variance over i < j; ties within TIE_TOL go to the lowest (i, j).

    Rows are scanned in blocks over the upper triangle only; the block holding
    the first near-maximal entry is recomputed to locate it in row-major order.
    """
    n = Zk.shape[0]
    diag = np.einsum("ij,ji->i", Zk, W)
    starts = range(0, n - 1, block)
    maxima = [float(_pair_block(Zk, W, diag, i0, min(i0 + block, n)).max()) for i0 in starts]
    top = max(maxima)
    b = next(k for k, v in enumerate(maxima) if v >= top - TIE_TOL)
    i0 = starts[b]
    S = _pair_block(Zk, W, diag, i0, min(i0 + block, n))
    k = int(np.argmax(S.ravel() >= top - TIE_TOL))
    r, c = divmod(k, S.shape[1])
    return float(S[r, c]), i0 + r, i0 + c


def _diameter_candidates(L: np.ndarray, Zphi: np.ndarray) -> np.ndarray:
    """Indices that can belong to a maximizing pair, in their original order.

    In whitened coordinates y = L^{-1} phi the utility is the squared diameter.
    A point at radius r from the centroid is only in a pair of length at most
    r + r_max, so it is dropped when that falls short of a pair already found.
    """
    Y = linalg.solve_triangular(L, Zphi.T, lower=True).T
    r = np.linalg.norm(Y - Y.mean(axis=0), axis=1)
    far = int(np.argmax(r))
    known = np.max(np.sum((Y - Y[far]) ** 2, axis=1))
    # generous slack: bounds are in floating point and ties must survive
    bound = np.sqrt(max(known - TIE_TOL, 0.0)) * (1 - 1e-9) - 1e-12
    return np.flatnonzero(r + r[far] >= bound)


@dataclass(frozen=True, eq=False)
class DesignSpace:
    """Discrete design: domain features, query map and noise table of an MDP."""

    Phi: np.ndarray  # (n_points, m)
    query: np.ndarray  # (X, A) -> point index
    noise: np.ndarray  # (X, A) observation variances
    budget: float  # T * H
    allocation: str = "xy"

    def point_weights(self, d_agg: np.ndarray) -> np.ndarray:
        return np.bincount(self.query.ravel(), weights=(d_agg / self.noise).ravel(),
                           minlength=self.Phi.shape[0])

    def matrix(self, d_agg: np.ndarray) -> np.ndarray:
        return information_matrix(self.Phi, self.point_weights(d_agg), self.budget)


def _aggregate(d: np.ndarray) -> np.ndarray:
    return d.sum(axis=0) if d.ndim == 3 else d


def candidate_features(Z: MaximizerSet, space: DesignSpace) -> np.ndarray:
    _, idx = Z.unique()
    return space.Phi[idx]


def utility(d: np.ndarray, Z: MaximizerSet, space: DesignSpace):
    """Utility value and the achieving candidate pair (as domain indices)."""
    _, idx = Z.unique()
    u = evaluate_utility(space.matrix(_aggregate(d)), space.Phi[idx], space.allocation)
    return u.value, tuple(int(idx[p]) for p in u.pair)


def gradient_from(u: UtilityValue, space: DesignSpace) -> np.ndarray:
    proj = space.Phi @ u.direction
    return -(proj[space.query] ** 2) / space.noise


def utility_gradient(d: np.ndarray, Z: MaximizerSet, space: DesignSpace) -> np.ndarray:
    """Danskin gradient ``dU/dd(x, a)`` at the achieving pair; always non-positive."""
    _, idx = Z.unique()
    u = evaluate_utility(space.matrix(_aggregate(d)), space.Phi[idx], space.allocation)
    return gradient_from(u, space)


def blend_weights(t: int, h: int, H: int):
    """Coefficients on (plan, history) of the receding-horizon blend."""
    return (H - h) / ((1.0 + t) * H), (t * H + h) / ((1.0 + t) * H)


def blend(d_agg: np.ndarray, dhat: np.ndarray, t: int, h: int, H: int) -> np.ndarray:
    wp, wh = blend_weights(t, h, H)
    return wp * d_agg + wh * dhat


def adaptive_objective(d, dhat, t, h, H, Z: MaximizerSet, space: DesignSpace) -> float:
    return utility(blend(_aggregate(d), dhat, t, h, H), Z, space)[0]


class AdaptiveObjective:
    """``U_{t,h}`` as a function of a remaining-horizon visitation, with its gradient."""

    def __init__(self, space: DesignSpace, Z: MaximizerSet, dhat: np.ndarray, t: int, h: int,
                 H: int):
        self.space = space
        self.Z = Z
        self.dhat = dhat
        self.t, self.h, self.H = t, h, H
        _, idx = Z.unique()
        self.Zphi = space.Phi[idx]
        self.Zidx = idx
        self.wp, _ = blend_weights(t, h, H)

    def _eval(self, d) -> UtilityValue:
        mixed = blend(_aggregate(d), self.dhat, self.t, self.h, self.H)
        return evaluate_utility(self.space.matrix(mixed), self.Zphi, self.space.allocation)

    def value(self, d) -> float:
        return self._eval(d).value

    def value_and_gradient(self, d):
        u = self._eval(d)
        return u.value, self.wp * gradient_from(u, self.space)

    def gradient(self, d) -> np.ndarray:
        return self.value_and_gradient(d)[1]

    def pairs(self, d):
        """Values and gradients of every candidate pair (or point) at ``d``."""
        mixed = blend(_aggregate(d), self.dhat, self.t, self.h, self.H)
        V = self.space.matrix(mixed)
        W = linalg.solve(V, self.Zphi.T, assume_a="pos")
        if self.space.allocation == "g":
            dirs = W
            vals = np.einsum("ij,ji->i", self.Zphi, W)
        else:
            iu, ju = np.triu_indices(self.Zphi.shape[0], k=1)
            dirs = W[:, iu] - W[:, ju]
            diffs = self.Zphi[iu] - self.Zphi[ju]
            vals = np.einsum("pi,ip->p", diffs, dirs)
        proj = self.space.Phi @ dirs  # (n_points, P)
        grads = -self.wp * proj[self.space.query] ** 2 / self.space.noise[..., None]
        return vals, np.moveaxis(grads, -1, 0)
