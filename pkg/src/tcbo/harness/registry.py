"""Benchmark registry and single-replicate execution."""

from __future__ import annotations

import inspect
from dataclasses import dataclass

from ..continuous import run_continuous_campaign
from ..environments import knorr_env, laser_env, synthetic_env, ypacarai_env
from ..environments.knorr import HORIZON as KNORR_H
from ..environments.laser import HORIZON as LASER_H
from ..environments.synthetic import SPECS
from ..environments.ypacarai import HORIZON as YPACARAI_H
from ..planner import CampaignConfig, FwConfig, run_campaign

CONTINUOUS_H = 100
# campaign-level knobs accepted in [environment] for box benchmarks
_CONTINUOUS_EXTRA = ("n_mesh", "refine_steps")


def _knorr(horizon, linearization=None, **kw):
    if linearization is not None:
        b1, c1, b2, c2 = (float(v) for v in linearization)
        linearization = ((b1, c1), (b2, c2))
    return knorr_env(horizon=horizon, linearization=linearization, **kw)


def _synthetic(name):
    def make(horizon=None, **kw):
        return synthetic_env(name, **kw)
    make.params = ("noise", "delta_max")
    return make


@dataclass(frozen=True)
class Benchmark:
    name: str
    kind: str  # "discrete" or "continuous"
    factory: object
    horizon: int
    description: str
    warm_start: str = "mixture"

    def params(self) -> tuple:
        if hasattr(self.factory, "params"):
            return self.factory.params + _CONTINUOUS_EXTRA
        target = knorr_env if self.factory is _knorr else self.factory
        names = [p for p in inspect.signature(target).parameters if p != "horizon"]
        return tuple(names)

    def make(self, horizon=None, **params):
        return self.factory(horizon=horizon or self.horizon, **params)


BENCHMARKS = {
    # the optimum sits on the far edge, ten straight moves away; a single fresh
    # deterministic vertex per step reaches it, a carried mixture often does not
    "knorr": Benchmark("knorr", "discrete", _knorr, KNORR_H,
                       "flow reactor over (residence time, ratio); residence time never decreases",
                       warm_start="off"),
    "ypacarai": Benchmark("ypacarai", "discrete", ypacarai_env, YPACARAI_H,
                          "lake contamination survey; episodes start and end at the port"),
    "laser": Benchmark("laser", "discrete", laser_env, LASER_H,
                       "free-electron laser tuning; noise grows with the size of the move"),
}
for _name, _spec in SPECS.items():
    BENCHMARKS[_name] = Benchmark(_name, "continuous", _synthetic(_name), CONTINUOUS_H,
                                  f"{_spec.dim}-d box, step bound {_spec.delta_max}")


def check_environment_params(name: str, params: dict) -> None:
    allowed = BENCHMARKS[name].params()
    for key in params:
        if key not in allowed:
            raise ValueError(f"benchmark {name} has no parameter '{key}'")


def campaign_config(cfg) -> CampaignConfig:
    warm = cfg.warm_start or BENCHMARKS[cfg.benchmark].warm_start
    return CampaignConfig(T=cfg.T, feedback=cfg.feedback, delay=cfg.delay,
                          algorithm=cfg.algorithm, maximizer_set=cfg.maximizer_set, K=cfg.K,
                          beta=cfg.beta, allocation=cfg.allocation,
                          fw=FwConfig(components=cfg.components, step_rule=cfg.step_rule,
                                      warm_start=warm),
                          noise_agnostic=cfg.noise_agnostic)


def run_id(cfg, seed: int) -> str:
    return f"{cfg.benchmark}-{cfg.algorithm}-s{seed}"


def run_replicate(cfg, seed: int):
    """Build a fresh environment and run one seeded campaign."""
    bench = BENCHMARKS[cfg.benchmark]
    params = dict(cfg.environment)
    extra = {k: params.pop(k) for k in _CONTINUOUS_EXTRA if k in params}
    env = bench.make(cfg.H, **params)
    camp = campaign_config(cfg)
    if bench.kind == "continuous":
        return run_continuous_campaign(env, camp, cfg.H or bench.horizon, seed, run_id(cfg, seed),
                                       **extra)
    return run_campaign(env, camp, seed, run_id(cfg, seed))
