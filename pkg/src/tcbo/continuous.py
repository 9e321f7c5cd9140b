"""Planning on a box with additive step-bounded dynamics ``x' = A x + B a``.

The visitation is represented by atoms: every visited point of the history and
every state of the candidate plan. The linearized subproblem is solved by the
two-mode heuristic: walk straight to either member of the current maximizing
pair and keep the path with the lower summed gradient.
"""

from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .objective import BoxDomain, blend_weights, evaluate_utility, recommend
from .planner import CampaignConfig, CampaignResult, StepRecord, build_maximizer_set, make_streams
from .surrogate import Surrogate, build_nystrom, n_continuous_landmarks


@dataclass(frozen=True, eq=False)
class LinearSystem:
    dim: int
    a_max: float
    lo: np.ndarray
    hi: np.ndarray
    A: Optional[np.ndarray] = None
    B: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.a_max <= 0:
            raise ValueError("a_max must be positive")
        lo = np.broadcast_to(np.asarray(self.lo, float), (self.dim,)).copy()
        hi = np.broadcast_to(np.asarray(self.hi, float), (self.dim,)).copy()
        if np.any(hi <= lo):
            raise ValueError("box must be non-degenerate")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def identity(self) -> bool:
        eye = np.eye(self.dim)
        return ((self.A is None or np.array_equal(self.A, eye))
                and (self.B is None or np.array_equal(self.B, eye)))

    def step(self, x, a) -> np.ndarray:
        Ax = x if self.A is None else self.A @ x
        Ba = a if self.B is None else self.B @ a
        return np.clip(Ax + Ba, self.lo, self.hi)

    def project(self, x) -> np.ndarray:
        return np.clip(np.asarray(x, dtype=float), self.lo, self.hi)


@dataclass(frozen=True, eq=False)
class ActionPlan:
    actions: np.ndarray  # (H, d)
    states: np.ndarray  # (H, d): x_1 .. x_H
    objective: float = np.nan

    def __len__(self):
        return len(self.actions)


def shortest_feasible_path(system: LinearSystem, x0, target, horizon: int) -> ActionPlan:
    """Move by ``clamp(target - x, +-a_max)`` per coordinate, then hold at the target."""
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    x = np.asarray(x0, dtype=float)
    target = np.asarray(target, dtype=float)
    actions, states = [], []
    for _ in range(horizon):
        Ax = x if system.A is None else system.A @ x
        want = target - Ax
        if system.B is not None:
            want = np.linalg.solve(system.B, want)
        a = np.clip(want, -system.a_max, system.a_max)
        x = system.step(x, a)
        actions.append(a)
        states.append(x)
    return ActionPlan(np.array(actions), np.array(states))


def arrival_steps(x0, target, a_max) -> int:
    gap = float(np.max(np.abs(np.asarray(target, float) - np.asarray(x0, float))))
    return int(np.ceil(gap / a_max - 1e-12)) if gap > 0 else 0


def path_objective(grad_field, plan: ActionPlan) -> float:
    return float(np.sum(grad_field(plan.states)))


def mpc_subproblem(grad_field, system: LinearSystem, x0, horizon: int, z_star, z_prime=None):
    """Better of the straight paths to ``z_star`` and ``z_prime``; ties keep ``z_star``."""
    best = None
    for target in (z_star, z_prime):
        if target is None:
            continue
        plan = shortest_feasible_path(system, x0, system.project(target), horizon)
        plan = ActionPlan(plan.actions, plan.states, path_objective(grad_field, plan))
        if best is None or plan.objective < best.objective:
            best = plan
    return best


class AtomDesign:
    """Information matrix over weighted point atoms with homoscedastic noise."""

    def __init__(self, features, noise: float, budget: float):
        self.features = features
        self.noise = noise
        self.budget = budget

    def matrix(self, Phi_atoms, weights) -> np.ndarray:
        m = Phi_atoms.shape[1]
        return Phi_atoms.T @ (Phi_atoms * (weights / self.noise)[:, None]) + np.eye(m) / self.budget


def continuous_plan(surrogate_features, design: AtomDesign, system: LinearSystem, x, Z_points,
                    hist_phi, t: int, h: int, H: int, allocation: str = "xy",
                    components: int = 1):
    """Receding-horizon plan from ``x`` for the remaining ``H - h`` steps.

    Starts from the plan that stays at ``x``; each component linearizes the
    blended utility at the current plan and replaces it by the heuristic path
    as long as the utility does not increase.
    """
    steps = H - h
    wp, wh = blend_weights(t, h, H)
    Zphi = surrogate_features(Z_points)
    if allocation == "xy" and len(Z_points) < 2:
        allocation = "g"
    n_hist = 0 if hist_phi is None else len(hist_phi)
    w = np.concatenate([np.full(n_hist, wh / max(n_hist, 1)), np.full(steps, wp / steps)])

    def evaluate(states):
        phi = surrogate_features(states)
        atoms = phi if hist_phi is None else np.vstack([hist_phi, phi])
        return evaluate_utility(design.matrix(atoms, w), Zphi, allocation)

    x = np.asarray(x, dtype=float)
    stay = ActionPlan(np.zeros((steps, system.dim)), np.repeat(x[None], steps, axis=0))
    u = evaluate(stay.states)
    best, best_val = None, np.inf
    for _ in range(components):
        direction = u.direction

        def grad_field(X, direction=direction):
            return -wp * (surrogate_features(X) @ direction) ** 2 / design.noise

        z_star = Z_points[u.pair[0]]
        z_prime = Z_points[u.pair[1]] if len(u.pair) > 1 else None
        cand = mpc_subproblem(grad_field, system, x, steps, z_star, z_prime)
        u = evaluate(cand.states)
        if best is not None and u.value >= best_val:
            break
        best, best_val = cand, u.value
    return best, best_val


def run_continuous_campaign(env, cfg: CampaignConfig, H: int, seed: int = 0, run_id: str = "run",
                            n_mesh: int = 4096, refine_steps: int = 50) -> CampaignResult:
    """Receding-horizon BO on a box; each step moves at most ``delta_max`` per coordinate."""
    noise_rng, policy_rng, ts_rng = make_streams(seed)
    lm_rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(4)[3])
    n_lm = n_continuous_landmarks(env.dim)
    landmarks = env.lo + (env.hi - env.lo) * lm_rng.random((n_lm, env.dim))
    features = build_nystrom(env.kernel, landmarks)
    surrogate = Surrogate.prior(features)
    domain = BoxDomain.build(env.lo, env.hi, surrogate, n_mesh=n_mesh, seed=seed,
                             refine_steps=refine_steps)
    system = LinearSystem(env.dim, env.delta_max, env.lo, env.hi)
    design = AtomDesign(features, env.noise, float(cfg.T * H))
    Z = build_maximizer_set(surrogate, domain, cfg, ts_rng)
    delay = cfg.effective_delay
    pending = deque()
    hist_phi = None
    records, solve_ms, trajectories = [], [], []
    step = 0

    def release(items):
        nonlocal surrogate, Z
        if not items:
            return
        X = np.array([i[1] for i in items])
        y = np.array([i[2] for i in items])
        surrogate = surrogate.update(X, y, env.noise)
        for i in items:
            records[i[0]].observation = float(i[2])
        Z = build_maximizer_set(surrogate, domain, cfg, ts_rng)

    for t in range(cfg.T):
        x = env.start.copy()
        states, actions = [], []
        for h in range(H):
            start = time.perf_counter()
            pts, _ = Z.unique()
            if cfg.algorithm == "greedy-ucb":
                plan, util = _greedy_step(surrogate, system, x, cfg.beta)
            else:
                plan, util = continuous_plan(features, design, system, x, pts, hist_phi, t, h, H,
                                             cfg.allocation, cfg.fw.components)
            elapsed = 1e3 * (time.perf_counter() - start)
            a = plan.actions[0]
            x_next = plan.states[0]
            try:
                y = env.query(x_next, noise_rng)
            except Exception as exc:
                exc.partial_records = records
                raise
            phi = features(x_next[None])
            hist_phi = phi if hist_phi is None else np.vstack([hist_phi, phi])
            records.append(StepRecord(run_id, seed, t, h, x.tolist(), a.tolist(), None,
                                      int(Z.size), None if util is None else float(util), 0.0,
                                      None))
            solve_ms.append(elapsed)
            pending.append((step, x_next, y))
            states.append(x)
            actions.append(a)
            if cfg.feedback == "episodic":
                if h == H - 1:
                    release(list(pending))
                    pending.clear()
            else:
                out = []
                while pending and pending[0][0] <= step - delay:
                    out.append(pending.popleft())
                release(out)
            rec = recommend(surrogate, domain)
            records[-1].regret = float(env.optimum_value - env.f(rec)[0])
            records[-1].z_size = int(Z.size)
            x = x_next
            step += 1
        trajectories.append((states, actions, x))
    return CampaignResult(records, solve_ms, recommend(surrogate, domain), surrogate,
                          trajectories)


def _greedy_step(surrogate, system: LinearSystem, x, beta):
    """Greedy-UCB on a box: best UCB among the corners and faces of the local step box."""
    d = system.dim
    grid = np.array(np.meshgrid(*[[-1.0, 0.0, 1.0]] * d, indexing="ij")).reshape(d, -1).T
    grid = grid[np.any(grid != 0, axis=1)] if len(grid) > 1 else grid
    cands = np.array([system.step(x, system.a_max * g) for g in grid])
    mu = surrogate.mean(cands)
    sd = np.sqrt(surrogate.variance(cands))
    k = int(np.argmax(mu + beta * sd))
    a = np.clip(cands[k] - x, -system.a_max, system.a_max)
    return ActionPlan(a[None], cands[k][None]), None
