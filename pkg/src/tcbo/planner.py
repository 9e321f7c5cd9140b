"""Frank-Wolfe planning over visitations and the receding-horizon campaign loop."""

from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import optimize, stats

from .errors import InfeasibleError
from .mdp import (EmpiricalVisitation, FiniteMdp, check_visitation, empirical_update, solve_dp,
                  visitation_of_policy)
from .objective import (AdaptiveObjective, DesignSpace, DiscreteDomain, MaximizerSet,
                        credible_set, thompson_set, ucb_batch_set)
from .surrogate import Surrogate

STEP_RULES = ("harmonic", "fixed", "line-search")
# off: linearize at the uniform policy; point: linearize at the previous plan's tail;
# mixture: keep the previous plan's tail as the initial Frank-Wolfe iterate
WARM_STARTS = ("off", "point", "mixture")


@dataclass(frozen=True)
class FwConfig:
    components: int = 1
    step_rule: str = "harmonic"
    fixed_step: float = 0.5
    tol: float = 1e-10
    monotone: bool = True
    corrective: bool = False
    warm_start: str = "mixture"
    solver: Callable = solve_dp

    def __post_init__(self):
        if self.components < 1:
            raise ValueError("at least one Frank-Wolfe component is required")
        if self.tol <= 0:
            raise ValueError("tolerance must be positive")
        if self.warm_start not in WARM_STARTS:
            raise ValueError(f"unknown warm start {self.warm_start!r}")
        if self.step_rule not in STEP_RULES:
            raise ValueError(f"unknown step rule {self.step_rule!r}")


@dataclass(frozen=True, eq=False)
class MixturePolicy:
    weights: np.ndarray
    policies: tuple
    visitations: tuple
    trace: tuple = ()
    gap: float = np.inf
    steps: int = 0

    @property
    def visitation(self) -> np.ndarray:
        return sum(w * v for w, v in zip(self.weights, self.visitations))

    @property
    def value(self) -> float:
        return self.trace[-1] if self.trace else np.nan

    def select(self, u: float) -> int:
        """Component drawn by the uniform variate ``u``."""
        cum = np.cumsum(self.weights)
        return int(min(np.searchsorted(cum, u * cum[-1], side="right"), len(cum) - 1))


def advance_mixture(mix: MixturePolicy, mdp: FiniteMdp, max_components: int = 64):
    """Tails of every component, one stage later, as a mixture on the re-rooted ``mdp``.

    Components are deterministic DP policies that prescribe an action at every
    live state, so each tail is a feasible plan from the new root.
    """
    order = np.argsort(-np.asarray(mix.weights), kind="stable")[:max_components]
    order = np.sort(order)
    w = np.asarray(mix.weights)[order]
    pols = tuple(mix.policies[i][1:] for i in order)
    verts = tuple(visitation_of_policy(mdp, p) for p in pols)
    return MixturePolicy(w / w.sum(), pols, verts, (), np.inf, mix.steps)


def _agg(d):
    return d.sum(axis=0) if d.ndim == 3 else d


def _fw_gap(grad, d, s) -> float:
    g = grad if grad.ndim == 3 else grad[None]
    return float(np.sum(g * (d - s)))


def _segment_search(objective, d, s, hi):
    f = lambda g: objective.value((1.0 - g) * d + g * s)
    res = optimize.minimize_scalar(f, bounds=(0.0, hi), method="bounded",
                                   options={"xatol": 1e-12})
    cands = [(f(hi), hi), (float(res.fun), float(res.x))]
    val, gamma = min(cands)
    return gamma, val


def _corrective(objective, verts, weights, value):
    """Re-optimize mixture weights over the active vertices (epigraph SLSQP)."""
    k = len(verts)
    V = np.stack([_agg(v).ravel() for v in verts])

    def pairs(lam):
        return objective.pairs(np.tensordot(lam, np.stack([_agg(v) for v in verts]), 1))

    def cons(z):
        vals, _ = pairs(z[:k])
        return z[k] - vals

    def cons_jac(z):
        _, grads = pairs(z[:k])
        J = np.zeros((grads.shape[0], k + 1))
        J[:, :k] = -(grads.reshape(grads.shape[0], -1) @ V.T)
        J[:, k] = 1.0
        return J

    z0 = np.append(weights, value)
    res = optimize.minimize(lambda z: z[k], z0, jac=lambda z: np.eye(k + 1)[k], method="SLSQP",
                            bounds=[(0.0, 1.0)] * k + [(None, None)],
                            constraints=[{"type": "ineq", "fun": cons, "jac": cons_jac},
                                         {"type": "eq", "fun": lambda z: z[:k].sum() - 1.0,
                                          "jac": lambda z: np.append(np.ones(k), 0.0)}],
                            options={"maxiter": 200, "ftol": 1e-15})
    lam = np.clip(res.x[:k], 0.0, None)
    lam /= lam.sum()
    d = sum(l * v for l, v in zip(lam, verts))
    val = objective.value(d)
    return (lam, d, val) if val < value else (weights, None, value)


def fw_plan(objective, mdp: FiniteMdp, config: FwConfig = FwConfig(),
            warm: Optional[MixturePolicy] = None) -> MixturePolicy:
    """Frank-Wolfe over the flow polytope; each vertex is a DP solution for ``-grad U``.

    Without ``warm`` the first step has size one, so the returned mixture never
    includes the uniform-policy starting point. A warm start (a mixture already
    expressed on ``mdp``) is kept as the initial iterate and the harmonic step
    counter continues from ``warm.steps``.
    """
    if warm is None or config.warm_start == "point":
        d = visitation_of_policy(mdp, mdp.uniform_policy()) if warm is None else warm.visitation
        policies, verts, weights, offset = [], [], np.zeros(0), 0
    else:
        d = warm.visitation
        policies, verts = list(warm.policies), list(warm.visitations)
        weights, offset = np.array(warm.weights, dtype=float), warm.steps
    value, grad = objective.value_and_gradient(d)
    trace = []
    gap = np.inf
    steps = offset
    for n in range(config.components):
        policy, s, _ = config.solver(mdp, -grad)
        gap = _fw_gap(grad, d, s)
        k = n + offset
        if k > 0 and gap <= config.tol:
            break
        if k == 0:
            gamma = 1.0
        elif config.step_rule == "harmonic":
            gamma = 2.0 / (k + 2.0)
        elif config.step_rule == "fixed":
            gamma = config.fixed_step
        else:
            gamma, _ = _segment_search(objective, d, s, 1.0)
        cand = (1.0 - gamma) * d + gamma * s
        cval = objective.value(cand)
        if k > 0 and config.monotone and cval > value:
            gamma, cval = _segment_search(objective, d, s, gamma)
            if gamma <= 0.0 or cval > value:
                break
            cand = (1.0 - gamma) * d + gamma * s
        weights = np.append(weights * (1.0 - gamma), gamma)
        match = next((i for i, p in enumerate(policies) if np.array_equal(p, policy)), None)
        if match is not None and k > 0:
            weights[match] += weights[-1]
            weights = weights[:-1]
        else:
            policies.append(policy)
            verts.append(s)
        d, value = cand, cval
        if config.corrective and len(verts) > 1:
            weights, dc, value = _corrective(objective, verts, weights, value)
            if dc is not None:
                d = dc
        trace.append(value)
        steps = k + 1
        value, grad = objective.value_and_gradient(d)
    if not trace:
        trace.append(value)
    keep = weights > 0
    return MixturePolicy(weights[keep], tuple(p for p, k in zip(policies, keep) if k),
                         tuple(v for v, k in zip(verts, keep) if k), tuple(trace), gap, steps)


# --- baselines ------------------------------------------------------------------------

def expected_improvement(mu, sd, best):
    mu = np.asarray(mu, dtype=float)
    sd = np.asarray(sd, dtype=float)
    imp = mu - best
    safe = np.where(sd > 0, sd, 1.0)
    z = imp / safe
    ei = imp * stats.norm.cdf(z) + sd * stats.norm.pdf(z)
    return np.where(sd > 0, ei, np.maximum(imp, 0.0))


def baseline_greedy_ucb(mdp: FiniteMdp, stage: int, state: int, ucb: np.ndarray) -> int:
    """Feasible action whose successor has the largest UCB (lowest index on ties)."""
    feasible = mdp.mask[stage, state]
    if not feasible.any():
        raise InfeasibleError(f"state {state} has no feasible action at stage {stage}", state, stage)
    score = mdp.expect_next(ucb)[state]
    score = np.where(feasible, score, -np.inf)
    return int(np.argmax(score))


def baseline_mdp_ei(mdp: FiniteMdp, surrogate: Surrogate, domain: DiscreteDomain) -> MixturePolicy:
    """Single DP solve with the expected improvement of each queried point as reward."""
    mu = surrogate.mean_phi(domain.Phi, domain.offset)
    sd = np.sqrt(surrogate.var_phi(domain.Phi))
    if surrogate.n_obs:
        seen = np.array([r.x for r in surrogate.records])
        best = float(surrogate.mean(seen).max())
    else:
        best = 0.0
    ei = expected_improvement(mu, sd, best)
    policy, d, total = solve_dp(mdp, ei[mdp.query])
    return MixturePolicy(np.ones(1), (policy,), (d,), (total,), 0.0)


# --- campaign ---------------------------------------------------------------------------

FEEDBACK = ("episodic", "instant", "asynchronous")
ALGORITHMS = ("mdp-bo", "greedy-ucb", "mdp-ei")


@dataclass(frozen=True)
class CampaignConfig:
    T: int = 1
    feedback: str = "episodic"
    delay: int = 0
    algorithm: str = "mdp-bo"
    maximizer_set: str = "credible"
    K: int = 50
    beta: float = 2.0
    allocation: str = "xy"
    fw: FwConfig = FwConfig()
    noise_agnostic: bool = False
    check_invariants: bool = False

    def __post_init__(self):
        if self.T < 1 or self.K < 1 or self.delay < 0:
            raise ValueError("T and K must be positive and delay non-negative")
        if self.feedback not in FEEDBACK:
            raise ValueError(f"unknown feedback mode {self.feedback!r}")
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}")

    @property
    def effective_delay(self) -> int:
        return 0 if self.feedback == "instant" else self.delay


@dataclass
class StepRecord:
    run_id: str
    seed: int
    t: int
    h: int
    state: object
    action: object
    observation: Optional[float]
    z_size: int
    utility: Optional[float]
    regret: float
    identified: Optional[bool]


@dataclass
class Campaign:
    """Mutable per-run state of the receding-horizon loop."""

    surrogate: Surrogate
    Z: MaximizerSet
    dhat: EmpiricalVisitation
    state: int = 0
    t: int = 0
    h: int = 0
    pending: deque = field(default_factory=deque)
    history: list = field(default_factory=list)
    plan: Optional[MixturePolicy] = None


@dataclass
class CampaignResult:
    records: list
    solve_ms: list
    recommendation: object
    surrogate: Surrogate
    trajectories: list
    checked_visitations: int = 0


def make_streams(seed: int):
    """Independent generators for environment noise, policy sampling and Thompson draws."""
    return tuple(np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(3))


def build_maximizer_set(surrogate, domain, cfg: CampaignConfig, rng) -> MaximizerSet:
    if cfg.maximizer_set == "credible":
        return credible_set(surrogate, domain, cfg.beta)
    if cfg.maximizer_set == "thompson":
        return thompson_set(surrogate, domain, cfg.K, rng)
    if cfg.maximizer_set == "ucb-batch":
        return ucb_batch_set(surrogate, domain, cfg.K)
    raise ValueError(f"unknown maximizer set {cfg.maximizer_set!r}")


def _planning_space(space: DesignSpace, Z: MaximizerSet) -> DesignSpace:
    """Fall back to single-point variance when fewer than two candidates remain."""
    _, idx = Z.unique()
    if space.allocation == "xy" and len(idx) < 2:
        return DesignSpace(space.Phi, space.query, space.noise, space.budget, "g")
    return space


def plan_step(camp: Campaign, mdp: FiniteMdp, space: DesignSpace, domain, cfg: CampaignConfig,
              u: float, ucb_beta: float = 2.0):
    """Plan from the current (stage, state) and return (action, utility, mixture or None)."""
    H = mdp.horizon
    x, h, t = camp.state, camp.h, camp.t
    sub = mdp.reroot(h, x)
    if cfg.algorithm == "greedy-ucb":
        mu = camp.surrogate.mean_phi(domain.Phi, domain.offset)
        sd = np.sqrt(camp.surrogate.var_phi(domain.Phi))
        return baseline_greedy_ucb(mdp, h, x, mu + ucb_beta * sd), None, None
    if cfg.algorithm == "mdp-ei":
        mix = baseline_mdp_ei(sub, camp.surrogate, domain)
    else:
        obj = AdaptiveObjective(_planning_space(space, camp.Z), camp.Z, camp.dhat.distribution,
                                t, h, H)
        warm = None
        if cfg.fw.warm_start != "off" and h > 0 and camp.plan is not None:
            warm = advance_mixture(camp.plan, sub)
        mix = fw_plan(obj, sub, cfg.fw, warm)
        camp.plan = mix
    comp = mix.policies[mix.select(u)]
    probs = comp[0, x]
    a = int(np.argmax(probs)) if probs.max() == 1.0 else None
    util = mix.value if cfg.algorithm == "mdp-bo" else None
    return a, util, mix


def _regret(env, surrogate, domain):
    mu = surrogate.mean_phi(domain.Phi, domain.offset)
    rec = int(np.argmax(mu))
    return env.optimum_value - float(env.values[rec]), rec == env.optimum_index, rec


def _check_step(mdp: FiniteMdp, stage: int, x: int, a: int, x_next: int):
    if not mdp.mask[stage, x, a] or mdp.transitions[x, a, x_next] <= 0.0:
        raise AssertionError(f"infeasible transition {x} -{a}-> {x_next} at stage {stage}")


def run_campaign(env, cfg: CampaignConfig, seed: int = 0, run_id: str = "run") -> CampaignResult:
    """Transition-constrained BO on a discrete environment.

    ``env`` supplies ``mdp``, ``points``, ``values`` (true function on points),
    ``noise`` (X, A), ``model_noise`` (X, A), ``features``, ``prior_mean`` and
    ``query(x, a, rng)``.
    """
    mdp: FiniteMdp = env.mdp
    H = mdp.horizon
    noise_rng, policy_rng, ts_rng = make_streams(seed)
    model_noise = env.worst_noise if cfg.noise_agnostic else env.noise
    surrogate = Surrogate.prior(env.features, prior_mean=env.prior_mean)
    domain = DiscreteDomain(env.points, env.Phi, surrogate.offset(env.points))
    space = DesignSpace(env.Phi, mdp.query, model_noise, float(cfg.T * H), cfg.allocation)
    camp = Campaign(surrogate, build_maximizer_set(surrogate, domain, cfg, ts_rng),
                    EmpiricalVisitation.empty(mdp.n_states, mdp.n_actions))
    records, solve_ms, trajectories = [], [], []
    checked = 0
    delay = cfg.effective_delay
    step = 0

    def release(items):
        if not items:
            return
        xs = np.array([i[1] for i in items])
        acts = np.array([i[2] for i in items])
        ys = np.array([i[3] for i in items])
        pts = mdp.query[xs, acts]
        camp.surrogate = camp.surrogate.update(env.points[pts], ys, model_noise[xs, acts],
                                               Phi=env.Phi[pts], offset=domain.offset[pts])
        for i in items:
            records[i[0]].observation = float(i[3])
        camp.Z = build_maximizer_set(camp.surrogate, domain, cfg, ts_rng)

    for t in range(cfg.T):
        camp.t = t
        x = int(policy_rng.choice(mdp.n_states, p=mdp.initial))
        camp.state = x
        u = float(policy_rng.random())
        states, actions = [], []
        for h in range(H):
            camp.h = h
            start = time.perf_counter()
            a, util, mix = plan_step(camp, mdp, space, domain, cfg, u, cfg.beta)
            elapsed = 1e3 * (time.perf_counter() - start)
            if a is None:
                comp = mix.policies[mix.select(u)]
                a = int(policy_rng.choice(mdp.n_actions, p=comp[0, x]))
            if cfg.check_invariants and mix is not None:
                sub = mdp.reroot(h, x)
                for v in mix.visitations:
                    check_visitation(sub, v)
                check_visitation(sub, mix.visitation)
                checked += len(mix.visitations) + 1
            try:
                y = float(env.query(x, a, noise_rng))
            except Exception as exc:
                exc.partial_records = records
                raise
            if mdp.deterministic:
                x_next = int(mdp.successors[x, a])
            else:
                x_next = int(policy_rng.choice(mdp.n_states, p=mdp.transitions[x, a]))
            if cfg.check_invariants:
                _check_step(mdp, h, x, a, x_next)
            states.append(x)
            actions.append(a)
            camp.dhat = empirical_update(camp.dhat, t, h, H, x, a)
            records.append(StepRecord(run_id, seed, t, h, x, a, None, 0, util, 0.0, None))
            solve_ms.append(elapsed)
            camp.pending.append((step, x, a, y))
            if cfg.feedback == "episodic":
                if h == H - 1:
                    release(list(camp.pending))
                    camp.pending.clear()
            else:
                out = []
                while camp.pending and camp.pending[0][0] <= step - delay:
                    out.append(camp.pending.popleft())
                release(out)
            regret, ident, _ = _regret(env, camp.surrogate, domain)
            rec = records[-1]
            rec.z_size = int(camp.Z.size)
            rec.regret = regret
            rec.identified = bool(ident)
            x = x_next
            camp.state = x
            step += 1
        trajectories.append((states, actions, x))
        camp.history.append((states, actions))
    _, _, best = _regret(env, camp.surrogate, domain)
    return CampaignResult(records, solve_ms, best, camp.surrogate, trajectories, checked)
