"""Pontryagin baseline: closed-form intro solution and forward-backward sweep.

Sign convention (shared by every problem): ``H = L + λ·f`` and
``λ' = -∂H/∂x`` with ``λ(T) = 0``. Minimize-sense problems take the
control minimizing ``H`` pointwise, the maximize-sense intro problem the
one maximizing it; ``OcpProblem.characterize`` encodes that choice.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import kernels
from .ode import IntegrationDiverged, TimeGrid
from .problems import OcpProblem, to_minimized

log = logging.getLogger(__name__)


def intro_closed_form(t: float) -> tuple[float, float]:
    """Adjoint and optimal control of the intro problem at time ``t``."""
    if not 0.0 <= t <= 2.0:
        raise ValueError("t must lie in [0, 2]")
    e = math.exp(2.0 - t)
    return 2.0 * (e - 1.0), min(max(e - 2.5, 0.0), 2.0)


INTRO_SWITCH_OFF_UPPER = 2.0 - math.log(4.5)
INTRO_SWITCH_TO_ZERO = 2.0 - math.log(2.5)


def characterize_control(problem: OcpProblem, x, lam, t: float = 0.0) -> np.ndarray:
    """Pointwise extremizer of the Hamiltonian, clamped to the control box."""
    if problem.characterize is None:
        raise ValueError(f"problem {problem.name!r} has no control characterization")
    return np.asarray(problem.characterize(np.asarray(x, float),
                                           np.asarray(lam, float), t), dtype=float)


@dataclass(frozen=True, eq=False)
class SweepResult:
    times: np.ndarray
    controls: np.ndarray
    states: np.ndarray
    adjoints: np.ndarray
    raw: float
    minimized: float
    iterations: int
    converged: bool
    relax: float
    tol: float

    def to_json(self) -> dict:
        return {
            "raw": self.raw,
            "minimized": self.minimized,
            "iterations": self.iterations,
            "converged": self.converged,
            "relax": self.relax,
            "tol": self.tol,
            "grid_steps": self.times.size - 1,
        }


class _GenericOps:
    """Sweep passes built from the problem's Python callables."""

    def __init__(self, problem: OcpProblem, grid: TimeGrid):
        self.p = problem
        self.n = grid.step_count
        self.h = grid.h

    def forward(self, U):
        p, h = self.p, self.h
        X = np.empty((self.n + 1, p.n_x))
        X[0] = p.x0
        for k in range(self.n):
            t = k * h
            um = 0.5 * (U[k] + U[k + 1])
            x = X[k]
            k1 = p.dynamics(x, U[k], t)
            k2 = p.dynamics(x + 0.5 * h * k1, um, t + 0.5 * h)
            k3 = p.dynamics(x + 0.5 * h * k2, um, t + 0.5 * h)
            k4 = p.dynamics(x + h * k3, U[k + 1], t + h)
            X[k + 1] = x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if not np.all(np.isfinite(X[k + 1])):
                raise IntegrationDiverged(t, x)
        return X

    def backward(self, X, U):
        p, h = self.p, self.h
        Lam = np.zeros((self.n + 1, p.n_x))
        for k in range(self.n, 0, -1):
            t = k * h
            um = 0.5 * (U[k] + U[k - 1])
            xm = 0.5 * (X[k] + X[k - 1])
            lam = Lam[k]
            k1 = p.adjoint_rhs(X[k], lam, U[k], t)
            k2 = p.adjoint_rhs(xm, lam - 0.5 * h * k1, um, t - 0.5 * h)
            k3 = p.adjoint_rhs(xm, lam - 0.5 * h * k2, um, t - 0.5 * h)
            k4 = p.adjoint_rhs(X[k - 1], lam - h * k3, U[k - 1], t - h)
            Lam[k - 1] = lam - h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if not np.all(np.isfinite(Lam[k - 1])):
                raise IntegrationDiverged(t, X[k])
        return Lam

    def characterize(self, X, Lam):
        h = self.h
        return np.array([self.p.characterize(X[k], Lam[k], k * h)
                         for k in range(self.n + 1)])

    def cost(self, X, U):
        h = self.h
        vals = np.array([self.p.running_cost(X[k], U[k], k * h)
                         for k in range(self.n + 1)])
        return float(h * (vals.sum() - 0.5 * (vals[0] + vals[-1])))


class _KernelOps:
    def __init__(self, problem: OcpProblem, grid: TimeGrid, backend: Optional[str]):
        self.core = kernels.get(backend)
        self.p = problem
        self.n = grid.step_count
        self.bounds = np.ascontiguousarray(problem.bounds)

    def _call(self, fn, *args):
        try:
            return fn(self.p.kernel_model, self.p.kernel_params, *args)
        except self.core.IntegrationDivergedCore as exc:
            raise IntegrationDiverged(exc.args[0]) from None

    def forward(self, U):
        return self._call(self.core.sweep_forward, self.p.x0, self.p.T, self.n,
                          np.ascontiguousarray(U))

    def backward(self, X, U):
        return self._call(self.core.sweep_backward, self.p.T, self.n,
                          np.ascontiguousarray(X), np.ascontiguousarray(U))

    def characterize(self, X, Lam):
        return self._call(self.core.characterize_nodes, X, Lam, self.bounds)

    def cost(self, X, U):
        return self._call(self.core.node_running_cost, self.p.T, self.n,
                          np.ascontiguousarray(X), np.ascontiguousarray(U))


def sweep_ops(problem: OcpProblem, grid: TimeGrid, backend: Optional[str] = None):
    if problem.kernel_model is not None and backend != "generic":
        return _KernelOps(problem, grid, backend)
    if problem.adjoint_rhs is None or problem.characterize is None:
        raise ValueError(f"problem {problem.name!r} lacks adjoint or characterization")
    return _GenericOps(problem, grid)


def fbs(problem: OcpProblem, grid: Optional[TimeGrid] = None,
        relax: Optional[float] = None,
        tol: float = 1e-3, max_iter: int = 500, backend: Optional[str] = None,
        u_init=None) -> SweepResult:
    """Forward-backward sweep on the uniform grid.

    Each iteration integrates the state forward, the adjoint backward from
    ``λ(T) = 0``, and blends the characterized control into the current one
    with weight ``relax``. Stops once, for every channel,
    ``Σ|u_new - u_old| <= tol Σ|u_new|``. Non-convergence is reported in
    the result, not raised.

    The reported control is the characterization evaluated at the last
    iterate's state and adjoint (the relaxed blend lags it by a factor
    ``1 - relax``); states, adjoints and cost are recomputed for it.
    ``relax`` defaults to the problem's ``sweep_relax``.
    """
    relax = problem.sweep_relax if relax is None else relax
    if not 0.0 < relax <= 1.0:
        raise ValueError("relax must lie in (0, 1]")
    grid = grid or problem.default_grid()
    ops = sweep_ops(problem, grid, backend)
    n = grid.step_count
    if u_init is None:
        U = np.tile(problem.bounds[:, 0], (n + 1, 1))
    else:
        U = np.array(u_init, dtype=float).reshape(n + 1, problem.m)

    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        X = ops.forward(U)
        Lam = ops.backward(X, U)
        U_new = relax * ops.characterize(X, Lam) + (1.0 - relax) * U
        change = np.abs(U_new - U).sum(axis=0)
        scale = np.abs(U_new).sum(axis=0)
        U = U_new
        if np.all(change <= tol * scale):
            converged = True
            break
    if not converged:
        log.warning("forward-backward sweep for %s did not converge in %d iterations",
                    problem.name, max_iter)
    X = ops.forward(U)
    U = ops.characterize(X, ops.backward(X, U))
    X = ops.forward(U)
    Lam = ops.backward(X, U)
    raw = ops.cost(X, U)
    return SweepResult(grid.nodes(), U, X, Lam, raw, to_minimized(raw, problem.sense),
                       it, converged, relax, tol)
