"""Finite-horizon MDPs encoding transition constraints.

Visitations are arrays ``d[h, x, a]`` normalized jointly over stages, so a
valid visitation has total mass 1 and per-stage mass ``1 / H``. Policies are
arrays ``pi[h, x, a]`` of action probabilities.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import InfeasibleError

FLOW_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class FiniteMdp:
    """Known dynamics over a finite state set.

    ``transitions[x, a, x']`` holds ``P(x'|x, a)``; ``mask[h, x, a]`` marks the
    actions available at stage ``h`` (a 2-d mask is broadcast over stages).
    ``query[x, a]`` is the index of the domain point observed when taking
    ``a`` in ``x``.
    """

    coords: np.ndarray
    transitions: np.ndarray
    mask: np.ndarray
    horizon: int
    initial: np.ndarray
    query: Optional[np.ndarray] = None
    terminal: Optional[frozenset] = None
    successors: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        n, A = self.transitions.shape[:2]
        if self.transitions.shape != (n, A, n):
            raise ValueError("transitions must have shape (X, A, X)")
        if self.horizon < 1:
            raise ValueError("horizon must be at least 1")
        mask = np.asarray(self.mask, dtype=bool)
        if mask.ndim == 2:
            mask = np.broadcast_to(mask, (self.horizon,) + mask.shape)
        if mask.shape != (self.horizon, n, A):
            raise ValueError(f"mask shape {mask.shape} does not match (H, X, A)")
        object.__setattr__(self, "mask", mask)
        init = np.asarray(self.initial, dtype=float)
        if init.ndim == 0 or init.shape == ():
            init = np.eye(n)[int(init)]
        if abs(init.sum() - 1.0) > 1e-12 or np.any(init < 0):
            raise ValueError("initial law must be a probability vector")
        object.__setattr__(self, "initial", init)
        if self.query is None:
            object.__setattr__(self, "query", np.repeat(np.arange(n)[:, None], A, axis=1))
        used = mask.any(axis=0)
        sums = self.transitions.sum(axis=2)
        if np.any(np.abs(sums[used] - 1.0) > 1e-12):
            raise ValueError("transition rows of feasible actions must sum to one")
        if self.successors is None:
            succ = np.argmax(self.transitions, axis=2)
            det = np.all(np.take_along_axis(self.transitions, succ[..., None], 2)[..., 0][used] == 1.0)
            object.__setattr__(self, "successors", succ if det else None)

    @property
    def n_states(self) -> int:
        return self.transitions.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transitions.shape[1]

    @property
    def deterministic(self) -> bool:
        return self.successors is not None

    def expect_next(self, values: np.ndarray) -> np.ndarray:
        """``sum_x' P(x'|x,a) values[x']`` for every (x, a)."""
        if self.deterministic:
            return values[self.successors]
        return self.transitions @ values

    def push_forward(self, d_h: np.ndarray) -> np.ndarray:
        """State marginal at the next stage induced by a stage visitation."""
        if self.deterministic:
            return np.bincount(self.successors.ravel(), weights=d_h.ravel(),
                               minlength=self.n_states)
        return np.einsum("xa,xay->y", d_h, self.transitions)

    def reroot(self, stage: int, state: int) -> "FiniteMdp":
        """The remaining-horizon MDP starting deterministically at ``state``."""
        if not 0 <= stage < self.horizon:
            raise ValueError("stage out of range")
        return FiniteMdp(self.coords, self.transitions, self.mask[stage:], self.horizon - stage,
                         np.eye(self.n_states)[state], self.query, self.terminal, self.successors)

    def uniform_policy(self) -> np.ndarray:
        m = self.mask.astype(float)
        cnt = m.sum(axis=2, keepdims=True)
        return np.divide(m, cnt, out=np.zeros_like(m), where=cnt > 0)


def grid_mdp(coords, moves: Sequence[Sequence[int]], horizon, initial, free=None,
             shape=None, query=None) -> FiniteMdp:
    """Deterministic grid MDP; ``moves`` are (row, col) offsets, infeasible moves masked."""
    rows, cols = shape
    free = np.ones(shape, dtype=bool) if free is None else np.asarray(free, dtype=bool)
    index = -np.ones(shape, dtype=int)
    index[free] = np.arange(free.sum())
    cells = np.argwhere(free)
    n, A = len(cells), len(moves)
    P = np.zeros((n, A, n))
    mask = np.zeros((n, A), dtype=bool)
    for i, (r, c) in enumerate(cells):
        for j, (dr, dc) in enumerate(moves):
            rr, cc = r + dr, c + dc
            if 0 <= rr < rows and 0 <= cc < cols and free[rr, cc]:
                P[i, j, index[rr, cc]] = 1.0
                mask[i, j] = True
            else:
                P[i, j, i] = 1.0
    return FiniteMdp(np.asarray(coords, float), P, mask, horizon, initial, query)


def solve_dp(mdp: FiniteMdp, reward: np.ndarray):
    """Maximize expected total stage reward by backward induction.

    ``reward`` is (X, A) (stationary) or (H, X, A). Returns the deterministic
    optimal policy, its visitation and the expected per-trajectory reward.
    Ties go to the lowest action index.
    """
    H, n, A = mdp.mask.shape
    reward = np.asarray(reward, dtype=float)
    if reward.ndim == 2:
        reward = np.broadcast_to(reward, (H, n, A))
    feasible = mdp.mask
    if not np.all(np.isfinite(reward[feasible])):
        raise ValueError("rewards must be finite on feasible state-action pairs")
    policy = np.zeros((H, n, A))
    value = np.zeros(n)
    rows = np.arange(n)
    for h in range(H - 1, -1, -1):
        Q = np.where(feasible[h], reward[h] + mdp.expect_next(value), -np.inf)
        best = np.argmax(Q, axis=1)
        dead = ~np.isfinite(Q[rows, best])
        if dead.any():
            best[dead] = np.argmax(feasible[h][dead], axis=1)
        policy[h, rows, best] = 1.0
        value = Q[rows, best]
    d = visitation_of_policy(mdp, policy)
    total = float(mdp.initial @ np.where(mdp.initial > 0, value, 0.0))
    return policy, d, total


def visitation_of_policy(mdp: FiniteMdp, policy: np.ndarray) -> np.ndarray:
    H, n, A = mdp.mask.shape
    d = np.zeros((H, n, A))
    rho = mdp.initial.copy()
    for h in range(H):
        # only states carrying mass are touched; visitations from a point start stay sparse
        live = np.flatnonzero(rho > 0)
        stuck = live[~mdp.mask[h, live].any(axis=1)]
        if stuck.size:
            x = int(stuck[0])
            raise InfeasibleError(f"state {x} has no feasible action at stage {h}", x, h)
        rows = rho[live, None] * policy[h, live] / H
        if np.any(rows[~mdp.mask[h, live]] > 0):
            raise ValueError(f"policy puts mass on infeasible actions at stage {h}")
        d[h, live] = rows
        if mdp.deterministic:
            rho = np.bincount(mdp.successors[live].ravel(), weights=rows.ravel() * H,
                              minlength=n)
        else:
            rho = np.einsum("xa,xay->y", rows * H, mdp.transitions[live])
    return d


def mixture_visitation(weights, visitations) -> np.ndarray:
    return sum(w * v for w, v in zip(weights, visitations))


def marginalize(mdp: FiniteMdp, d: np.ndarray) -> np.ndarray:
    """Policy realizing ``d``; states without mass fall back to uniform over feasible actions."""
    mass = d.sum(axis=2, keepdims=True)
    fallback = mdp.uniform_policy()
    ratio = np.divide(d, mass, out=np.zeros_like(d), where=mass > 0)
    return np.where(mass > 0, ratio, fallback)


def check_visitation(mdp: FiniteMdp, d: np.ndarray, tol: float = FLOW_TOL) -> None:
    """Raise ``AssertionError`` unless ``d`` lies in the flow polytope of ``mdp``."""
    H = mdp.horizon
    if d.shape != mdp.mask.shape:
        raise AssertionError(f"visitation shape {d.shape} != {mdp.mask.shape}")
    if np.any(d < -tol):
        raise AssertionError("negative visitation mass")
    if np.any(np.abs(d[~mdp.mask]) > tol):
        raise AssertionError("mass on infeasible state-action pairs")
    if abs(d.sum() - 1.0) > tol:
        raise AssertionError(f"total mass {d.sum():.12f} != 1")
    if np.any(np.abs(d[0].sum(axis=1) - mdp.initial / H) > tol):
        raise AssertionError("stage-0 marginal differs from the initial law")
    for h in range(1, H):
        inflow = mdp.push_forward(d[h - 1])
        if np.any(np.abs(d[h].sum(axis=1) - inflow) > tol):
            raise AssertionError(f"flow conservation violated at stage {h}")


@dataclass
class Trajectory:
    states: list
    actions: list
    episode: int = 0
    observations: list = field(default_factory=list)
    final_state: Optional[int] = None


def _sample(rng, p):
    return int(rng.choice(len(p), p=p / p.sum()))


def rollout(mdp: FiniteMdp, policy, rng: np.random.Generator, steps: Optional[int] = None,
            episode: int = 0) -> Trajectory:
    """Sample one trajectory; a ``MixturePolicy`` draws its component once up front."""
    steps = mdp.horizon if steps is None else steps
    if steps > mdp.horizon:
        raise ValueError("steps exceed the horizon")
    if hasattr(policy, "weights"):
        policy = policy.policies[_sample(rng, np.asarray(policy.weights, float))]
    x = _sample(rng, mdp.initial)
    traj = Trajectory([], [], episode)
    for h in range(steps):
        a = _sample(rng, policy[h, x])
        traj.states.append(x)
        traj.actions.append(a)
        if mdp.deterministic:
            x = int(mdp.successors[x, a])
        else:
            x = _sample(rng, mdp.transitions[x, a])
    traj.final_state = x
    return traj


def reachability_filter(mdp: FiniteMdp, terminal) -> FiniteMdp:
    """Prune stage-indexed actions from which ``terminal`` cannot be reached after the last step.

    The state reached after ``H`` transitions must lie in ``terminal``; every kept
    action leads, with probability one, to a state that can still make it.
    """
    terminal = frozenset(int(t) for t in terminal)
    if not terminal:
        raise ValueError("terminal set must be non-empty")
    H, n, A = mdp.mask.shape
    alive = np.zeros(n, dtype=bool)
    alive[list(terminal)] = True
    mask = np.array(mdp.mask, copy=True)
    for h in range(H - 1, -1, -1):
        safe = mdp.transitions[:, :, ~alive].sum(axis=2) == 0
        mask[h] &= safe
        alive = mask[h].any(axis=1)
    if np.any(mdp.initial[~alive] > 0):
        x = int(np.flatnonzero((mdp.initial > 0) & ~alive)[0])
        raise InfeasibleError(
            f"initial state {x} cannot reach the terminal set within {H} steps", x, 0)
    return FiniteMdp(mdp.coords, mdp.transitions, mask, H, mdp.initial, mdp.query,
                     terminal, mdp.successors)


@dataclass(frozen=True, eq=False)
class EmpiricalVisitation:
    """Equal-mass atoms on every visited state-action pair."""

    counts: np.ndarray
    total: int = 0

    @classmethod
    def empty(cls, n_states: int, n_actions: int) -> "EmpiricalVisitation":
        return cls(np.zeros((n_states, n_actions)), 0)

    def add(self, x: int, a: int) -> "EmpiricalVisitation":
        counts = self.counts.copy()
        counts[x, a] += 1.0
        return EmpiricalVisitation(counts, self.total + 1)

    @property
    def distribution(self) -> np.ndarray:
        if self.total == 0:
            return np.zeros_like(self.counts)
        return self.counts / self.total


def empirical_update(dhat: EmpiricalVisitation, t: int, h: int, H: int, x: int, a: int):
    if dhat.total != t * H + h:
        raise ValueError(f"history holds {dhat.total} atoms but (t, h) = ({t}, {h})")
    return dhat.add(x, a)
