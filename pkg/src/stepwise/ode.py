"""Fixed-step RK4 integration of controlled dynamics and trapezoid cost quadrature.

This is the generic numpy path: it works for any problem whose dynamics
and running cost are plain Python callables. Built-in problems also have
compiled kernels (see :mod:`stepwise.kernels`) that implement the same
scheme; both are checked against each other in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Callable, Optional, Union

import numpy as np

from .schedule import ControlSchedule

if TYPE_CHECKING:
    from .problems import OcpProblem

# A breakpoint closer than SNAP * h to a grid node is treated as that node.
SNAP = 1e-9


class IntegrationDiverged(ArithmeticError):
    """State became non-finite during integration."""

    def __init__(self, t: float, x=None, schedule=None):
        self.t = float(t)
        self.x = None if x is None else np.asarray(x)
        self.schedule = schedule
        super().__init__(f"integration diverged at t={self.t:.6g}")


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t_k = t0 + k h`` with the last node pinned to ``t_end``."""

    t0: float
    t_end: float
    step_count: int

    def __post_init__(self):
        if self.step_count < 1:
            raise ValueError("step_count must be positive")
        if not self.t_end > self.t0:
            raise ValueError("t_end must exceed t0")

    @classmethod
    def over(cls, T: float, step_count: int) -> "TimeGrid":
        return cls(0.0, float(T), int(step_count))

    @property
    def h(self) -> float:
        return (self.t_end - self.t0) / self.step_count

    def nodes(self) -> np.ndarray:
        t = self.t0 + self.h * np.arange(self.step_count + 1)
        t[-1] = self.t_end
        return t


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Simulation output.

    ``times`` are the integration nodes: the uniform grid nodes plus any
    schedule breakpoints that fell inside a step. ``controls`` holds the
    right-continuous control at each node. ``interval_controls`` holds the
    control on each interval when it is piecewise constant there (schedule
    input); it is None for continuous controls.
    """

    grid: TimeGrid
    times: np.ndarray
    states: np.ndarray
    controls: np.ndarray
    interval_controls: Optional[np.ndarray] = None

    def __len__(self):
        return self.times.size


def rk4_step(f: Callable, t: float, x, u_of_t: Callable, h: float) -> np.ndarray:
    """One classical RK4 step; the control is evaluated at ``t``, ``t+h/2``, ``t+h``."""
    if not h > 0:
        raise ValueError("step size must be positive")
    x = np.asarray(x, dtype=float)
    um = u_of_t(t + 0.5 * h)
    k1 = np.asarray(f(x, u_of_t(t), t), dtype=float)
    k2 = np.asarray(f(x + 0.5 * h * k1, um, t + 0.5 * h), dtype=float)
    k3 = np.asarray(f(x + 0.5 * h * k2, um, t + 0.5 * h), dtype=float)
    k4 = np.asarray(f(x + h * k3, u_of_t(t + h), t + h), dtype=float)
    out = x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise IntegrationDiverged(t, x)
    return out


def merged_nodes(grid: TimeGrid, breakpoints) -> np.ndarray:
    """Grid nodes plus breakpoints lying strictly inside a step."""
    nodes = grid.nodes()
    tol = SNAP * grid.h
    inner = np.asarray(breakpoints, dtype=float)[1:-1]
    if inner.size == 0:
        return nodes
    k = np.clip(np.floor((inner - grid.t0) / grid.h).astype(int), 0,
                grid.step_count - 1)
    keep = (inner > nodes[k] + tol) & (inner < nodes[k + 1] - tol)
    return np.union1d(nodes, inner[keep])


def _integrate_schedule(problem, s: ControlSchedule, grid: TimeGrid) -> Trajectory:
    times = merged_nodes(grid, s.breakpoints)
    mids = 0.5 * (times[:-1] + times[1:])
    seg = np.searchsorted(s.breakpoints, mids, side="right") - 1
    seg = np.minimum(seg, s.n_segments - 1)
    u_int = s.values[seg]
    states = np.empty((times.size, problem.n_x))
    x = np.asarray(problem.x0, dtype=float)
    states[0] = x
    for k in range(times.size - 1):
        uk = u_int[k]
        try:
            x = rk4_step(problem.dynamics, times[k], x, lambda _t: uk,
                         times[k + 1] - times[k])
        except IntegrationDiverged as exc:
            raise IntegrationDiverged(exc.t, exc.x, s) from None
        states[k + 1] = x
    controls = np.array([s(t) for t in times])
    return Trajectory(grid, times, states, controls, u_int)


def _integrate_function(problem, u: Callable, grid: TimeGrid) -> Trajectory:
    times = grid.nodes()
    ufun = lambda t: np.atleast_1d(np.asarray(u(t), dtype=float))  # noqa: E731
    states = np.empty((times.size, problem.n_x))
    x = np.asarray(problem.x0, dtype=float)
    states[0] = x
    for k in range(grid.step_count):
        x = rk4_step(problem.dynamics, times[k], x, ufun, times[k + 1] - times[k])
        states[k + 1] = x
    controls = np.array([ufun(t) for t in times])
    return Trajectory(grid, times, states, controls, None)


def integrate(problem: "OcpProblem", control: Union[ControlSchedule, Callable],
              grid: TimeGrid) -> Trajectory:
    """Integrate ``problem`` under ``control`` on ``grid``.

    A :class:`ControlSchedule` is integrated on the merged grid so that the
    control is constant inside every RK4 step, and the state carries over
    unchanged across breakpoints. Any other callable ``u(t)`` is evaluated
    at the RK4 stage times on the uniform grid.
    """
    if abs(grid.t0) > 0 or abs(grid.t_end - problem.T) > 1e-12 * problem.T:
        raise ValueError(f"grid must span [0, {problem.T}]")
    if isinstance(control, ControlSchedule):
        if abs(control.T - problem.T) > 1e-12 * problem.T:
            raise ValueError("schedule horizon differs from problem horizon")
        return _integrate_schedule(problem, control, grid)
    return _integrate_function(problem, control, grid)


def quadrature_running_cost(problem: "OcpProblem", traj: Trajectory) -> float:
    """Composite trapezoid of the running cost over the trajectory nodes.

    On piecewise-constant input each interval uses its own control at both
    ends, so jumps at breakpoints are not smeared.
    """
    t = traj.times
    L = problem.running_cost
    if traj.interval_controls is not None:
        left = np.array([L(traj.states[k], traj.interval_controls[k], t[k])
                         for k in range(t.size - 1)])
        right = np.array([L(traj.states[k + 1], traj.interval_controls[k], t[k + 1])
                          for k in range(t.size - 1)])
    else:
        vals = np.array([L(traj.states[k], traj.controls[k], t[k])
                         for k in range(t.size)])
        left, right = vals[:-1], vals[1:]
    return float(np.sum(0.5 * np.diff(t) * (left + right)))
