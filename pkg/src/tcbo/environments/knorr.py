"""Knorr pyrazole flow reactor: nonlinear kinetics, grid MDP and ODE-informed surrogate."""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.integrate import solve_ivp

from ..kernels import Kernel, linearized_eigenvalues, ode_feature
from ..mdp import grid_mdp
from .base import DiscreteEnvironment

K1, K2, K3 = 10.0, 874.0, 19200.0
RK4_STEP = 1e-4
N_TAU = 10
N_B = 10
HORIZON = 10
NOISE = 1e-4
# (delta tau, delta B) grid offsets; tau may never decrease
MOVES = [(0, -1), (0, 0), (0, 1), (1, -1), (1, 0), (1, 1)]


def kinetics_rhs(y, k1=K1, k2=K2, k3=K3):
    """Time derivative of the five concentrations; ``y`` has species on the last axis."""
    y1, y2, y3, y4, y5 = np.moveaxis(y, -1, 0)
    r1 = k1 * y2 * y3 - k2 * y4 * y5
    r2 = k3 * y4
    return np.stack([r2, -r1, -r1, r1 - r2, r1 + r2], axis=-1)


def initial_state(B):
    B = np.atleast_1d(np.asarray(B, dtype=float))
    z = np.zeros_like(B)
    return np.stack([z, 1.0 - B, B, z, z], axis=-1)


def rk4(y, t_end, step, rhs=kinetics_rhs, record=None):
    """Fixed-step classical Runge-Kutta from 0 to ``t_end``.

    ``record`` is an increasing array of output times; the step is shrunk so that
    every segment is an integer number of steps. Returns the states at ``record``
    (or the final state).
    """
    times = np.atleast_1d(t_end if record is None else record).astype(float)
    out = []
    t = 0.0
    for target in times:
        span = target - t
        n = int(np.ceil(span / step - 1e-9)) if span > 0 else 0
        dt = span / n if n else 0.0
        for _ in range(n):
            a = rhs(y)
            b = rhs(y + 0.5 * dt * a)
            c = rhs(y + 0.5 * dt * b)
            d = rhs(y + dt * c)
            y = y + dt / 6.0 * (a + 2 * b + 2 * c + d)
        t = target
        out.append(y)
    return np.stack(out) if record is not None else out[-1]


def integrate_kinetics(B, times, step=RK4_STEP):
    """Concentrations at ``times`` for each ratio in ``B``: shape (len(times), len(B), 5).

    A non-finite result triggers one retry at half the step.
    """
    y0 = initial_state(B)
    for s in (step, step / 2):
        with np.errstate(over="ignore", invalid="ignore"):
            ys = rk4(y0, None, s, record=np.asarray(times, dtype=float))
        if np.all(np.isfinite(ys)):
            return ys
    raise FloatingPointError("kinetics integration diverged after step refinement")


def product_concentration(tau, B, step=RK4_STEP):
    """Product ``y1`` on the tensor grid ``tau x B``: shape (len(tau), len(B))."""
    return integrate_kinetics(B, tau, step)[..., 0]


def linearized_y1_closed_form(t, B, b=None, c=0.0, k1=K1, k2=K2, k3=K3):
    """Closed-form product of the kinetics linearized at an equilibrium with constants (b, c)."""
    t = np.asarray(t, dtype=float)
    B = np.asarray(B, dtype=float)
    b = 1.0 - B if b is None else b
    l1, l2 = linearized_eigenvalues(b, c, k1, k2, k3)
    gap = l1 - l2
    return B * (l2 / gap * np.exp(l1 * t) - l1 / gap * np.exp(l2 * t) + 1.0)


def linearized_jacobian(b, c=0.0, k1=K1, k2=K2, k3=K3):
    return np.array([
        [0, 0, 0, k3, 0],
        [0, 0, -k1 * b, k2 * c, 0],
        [0, 0, -k1 * b, k2 * c, 0],
        [0, 0, k1 * b, -k2 * c - k3, 0],
        [0, 0, k1 * b, -k2 * c + k3, 0],
    ], dtype=float)


def linearized_y1_numeric(t, B, b=None, c=0.0, rtol=1e-12, atol=1e-14):
    """Product of the linearized system integrated with an implicit stiff solver."""
    b = 1.0 - B if b is None else b
    J = linearized_jacobian(b, c)
    sol = solve_ivp(lambda _, y: J @ y, (0.0, float(t)), initial_state(B)[0], method="Radau",
                    jac=J, rtol=rtol, atol=atol, t_eval=[float(t)])
    return float(sol.y[0, -1])


def knorr_grid():
    return np.linspace(0.0, 1.0, N_TAU), np.round(np.arange(N_B) / N_B, 12)


@lru_cache(maxsize=4)
def _table(step):
    tau, B = knorr_grid()
    return product_concentration(tau, B, step)


def knorr_kernel(alpha_ode=0.6, alpha_rbf=0.001, lengthscale=0.1, linearization=None):
    return Kernel("ode-composite", variance=1.0, lengthscale=lengthscale, k1=K1, k2=K2, k3=K3,
                  alpha_sig=5.0, alpha_ode=alpha_ode, alpha_rbf=alpha_rbf,
                  linearization=linearization)


def knorr_env(noise=NOISE, horizon=HORIZON, ode_mean=0.0, ode_var=0.6, rbf_var=0.001,
              lengthscale=0.1, step=RK4_STEP, linearization=None):
    """Reactor over a (tau, B) grid; actions keep tau or raise it by one cell."""
    tau, B = knorr_grid()
    TT, BB = np.meshgrid(tau, B, indexing="ij")
    coords = np.column_stack([TT.ravel(), BB.ravel()])
    mdp = grid_mdp(coords, MOVES, horizon, 0, shape=(N_TAU, N_B))
    values = _table(step).ravel()
    kernel = knorr_kernel(ode_var, rbf_var, lengthscale, linearization)

    def prior_mean(X):
        X = np.atleast_2d(X)
        return ode_mean * ode_feature(X[:, 0], X[:, 1], K1, K2, K3, 5.0, linearization)

    return DiscreteEnvironment("knorr", mdp, values, kernel, noise,
                               prior_mean if ode_mean else None)
