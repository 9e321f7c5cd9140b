"""Shared environment plumbing: discrete black boxes on MDP states and regret metrics."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from ..mdp import FiniteMdp
from ..surrogate import FeatureMap, build_nystrom

DATA_DIR = Path(__file__).parent / "data"


class DiscreteEnvironment:
    """Black box defined on the states of a finite MDP.

    ``values[p]`` is the true function at domain point ``p``; the domain points are
    the MDP states, and taking action ``a`` in state ``x`` observes point
    ``mdp.query[x, a]`` with variance ``noise[x, a]``.
    """

    def __init__(self, name: str, mdp: FiniteMdp, values, kernel, noise, prior_mean=None,
                 features: FeatureMap = None, worst_noise=None):
        self.name = name
        self.mdp = mdp
        self.points = np.asarray(mdp.coords, dtype=float)
        self.values = np.asarray(values, dtype=float)
        if self.values.shape != (self.points.shape[0],):
            raise ValueError("one true value per state is required")
        self.kernel = kernel
        self.noise = np.broadcast_to(np.asarray(noise, dtype=float), mdp.query.shape).copy()
        if np.any(self.noise <= 0):
            raise ValueError("noise variances must be positive")
        self.worst_noise = (np.full_like(self.noise, self.noise.max()) if worst_noise is None
                            else np.broadcast_to(np.asarray(worst_noise, float), self.noise.shape).copy())
        self.prior_mean = prior_mean
        self.features = features if features is not None else build_nystrom(kernel, self.points)
        self.Phi = self.features(self.points)

    @property
    def optimum_index(self) -> int:
        return int(np.argmax(self.values))

    @property
    def optimum_value(self) -> float:
        return float(self.values.max())

    def f(self, x: int, a: int) -> float:
        return float(self.values[self.mdp.query[x, a]])

    def query(self, x: int, a: int, rng: np.random.Generator) -> float:
        return self.f(x, a) + float(np.sqrt(self.noise[x, a]) * rng.standard_normal())


def metrics(records, env=None):
    """Inference-regret and identification series from a step log."""
    regret = np.array([r.regret if hasattr(r, "regret") else r["regret"] for r in records],
                      dtype=float)
    ident = [r.identified if hasattr(r, "identified") else r["identified"] for r in records]
    ident = np.array([np.nan if v is None else float(v) for v in ident])
    return {"inference_regret": regret, "identified": ident}


def read_field(path):
    """Read a gridded field file: ``#``-prefixed ``key=value`` header lines, then values."""
    header = {}
    values = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                for tok in line[1:].split():
                    if "=" in tok:
                        k, v = tok.split("=", 1)
                        header[k] = v
                continue
            values.extend(float(v) for v in line.split())
    shape = tuple(int(s) for s in header.get("shape", f"{len(values)}").split("x"))
    arr = np.array(values)
    if arr.size != int(np.prod(shape)):
        raise ValueError(f"{path}: expected {np.prod(shape)} values, found {arr.size}")
    return arr.reshape(shape), header


def write_field(path, field, **header):
    field = np.asarray(field, dtype=float)
    meta = {"shape": "x".join(str(s) for s in field.shape), **header}
    with open(path, "w") as fh:
        fh.write("# " + " ".join(f"{k}={v}" for k, v in meta.items()) + "\n")
        for row in np.atleast_2d(field):
            fh.write(" ".join(f"{v:.12f}" for v in row) + "\n")


def read_mask(path):
    """Grid mask: ``.`` free, ``#`` obstacle, ``P`` port. Returns (free, port)."""
    rows = [ln.rstrip("\n") for ln in open(path) if ln.strip()]
    width = {len(r) for r in rows}
    if len(width) != 1:
        raise ValueError(f"{path}: ragged mask rows")
    grid = np.array([list(r) for r in rows])
    if not np.all(np.isin(grid, [".", "#", "P"])):
        raise ValueError(f"{path}: mask characters must be '.', '#' or 'P'")
    ports = np.argwhere(grid == "P")
    if len(ports) != 1:
        raise ValueError(f"{path}: exactly one port cell is required")
    return grid != "#", tuple(int(v) for v in ports[0])
