"""Benchmark optimal-control problems and scalar cost evaluation.

Three built-in instances:

``intro``
    maximize ``∫ (2x - 3u - u²) dt`` with ``x' = x + u``, ``x(0) = 5``,
    ``u ∈ [0, 2]`` on ``[0, 2]``.
``chemo``
    Gompertz tumour growth ``N' = r N ln(1/N) - u δ N`` with cost
    ``∫ a (N - N_d)² + b u² dt``.
``dsdi``
    Two susceptible and two infected groups (S1, S2, I1, I2, R), four
    controls, cost ``∫ A I1² + B I2² + C u1² + D u2² + E u3² + F u4² dt``.

Hamiltonians are ``H = L + λ·f`` for every problem. Minimize-sense
problems take the control that minimizes ``H``; the maximize-sense intro
problem takes the one that maximizes it. The adjoint is ``λ' = -∂H/∂x``
with ``λ(T) = 0`` either way.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Callable, Mapping, Optional

import numpy as np

from . import kernels
from .ode import IntegrationDiverged, TimeGrid, integrate, quadrature_running_cost
from .schedule import ControlSchedule, decode, decision_bounds, equal_breakpoints, \
    layout_size, widths_to_breakpoints, FIXED, VARIABLE

MINIMIZE = "minimize"
MAXIMIZE = "maximize"

# the log in the Gompertz term is evaluated at max(N, LN_FLOOR)
LN_FLOOR = 1e-12


class UnknownProblem(KeyError):
    def __str__(self):
        return str(self.args[0])


class ParameterError(ValueError):
    """Unknown or invalid parameter override."""


@dataclass(frozen=True, eq=False)
class OcpProblem:
    """A fixed-horizon control problem with free terminal state."""

    name: str
    n_x: int
    m: int
    T: float
    x0: np.ndarray
    bounds: np.ndarray
    sense: str
    dynamics: Callable
    running_cost: Callable
    parameters: Mapping[str, float] = field(default_factory=dict)
    adjoint_rhs: Optional[Callable] = None
    characterize: Optional[Callable] = None
    dh_du: Optional[Callable] = None
    kernel_model: Optional[int] = None
    kernel_params: Optional[np.ndarray] = None
    default_steps: int = 1000
    sweep_relax: float = 0.5
    state_names: tuple = ()
    control_names: tuple = ()

    def __post_init__(self):
        bd = np.asarray(self.bounds, dtype=float).reshape(-1, 2)
        if bd.shape[0] != self.m:
            raise ParameterError("need one bound pair per control channel")
        if np.any(bd[:, 0] >= bd[:, 1]):
            raise ParameterError("control bounds need lo < hi")
        if self.sense not in (MINIMIZE, MAXIMIZE):
            raise ParameterError(f"bad sense {self.sense!r}")
        if not self.T > 0:
            raise ParameterError("horizon must be positive")
        x0 = np.asarray(self.x0, dtype=float).ravel()
        if x0.size != self.n_x:
            raise ParameterError("x0 length must equal n_x")
        x0.setflags(write=False)
        bd.setflags(write=False)
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "bounds", bd)
        object.__setattr__(self, "parameters", MappingProxyType(dict(self.parameters)))
        if not self.state_names:
            object.__setattr__(self, "state_names",
                               tuple(f"x{i + 1}" for i in range(self.n_x)))
        if not self.control_names:
            object.__setattr__(self, "control_names",
                               tuple(f"u{i + 1}" for i in range(self.m)))

    def default_grid(self) -> TimeGrid:
        return TimeGrid.over(self.T, self.default_steps)

    def hamiltonian(self, x, lam, u, t=0.0) -> float:
        return float(self.running_cost(x, u, t)
                     + np.dot(lam, self.dynamics(x, u, t)))

    def summary(self) -> dict:
        return {
            "name": self.name,
            "n_x": self.n_x,
            "m": self.m,
            "T": self.T,
            "sense": self.sense,
            "x0": self.x0.tolist(),
            "bounds": self.bounds.tolist(),
            "default_steps": self.default_steps,
            "sweep_relax": self.sweep_relax,
            "states": list(self.state_names),
            "controls": list(self.control_names),
        }


# ---------------------------------------------------------------- intro

INTRO_DEFAULTS = {"T": 2.0, "x0": 5.0, "u_min": 0.0, "u_max": 2.0}


def _intro(p) -> OcpProblem:
    def f(x, u, t):
        return np.array([x[0] + u[0]])

    def L(x, u, t):
        return 2.0 * x[0] - 3.0 * u[0] - u[0] ** 2

    def adj(x, lam, u, t):
        return np.array([-2.0 - lam[0]])

    def dh_du(x, lam, u, t):
        return np.array([-3.0 - 2.0 * u[0] + lam[0]])

    def char(x, lam, t):
        return np.array([min(max((lam[0] - 3.0) / 2.0, p["u_min"]), p["u_max"])])

    return OcpProblem(
        "intro", 1, 1, p["T"], [p["x0"]], [[p["u_min"], p["u_max"]]], MAXIMIZE,
        f, L, p, adj, char, dh_du,
        kernel_model=kernels.MODEL_INTRO, kernel_params=np.zeros(0),
        default_steps=max(1, round(p["T"] / 0.001)),
        state_names=("x",), control_names=("u",))


# ---------------------------------------------------------------- chemo

CHEMO_DEFAULTS = {"r": 0.1, "a": 3.0, "b": 1.0, "delta": 0.45, "N_d": 0.0,
                  "N0": 0.975, "T": 20.0, "u_max": 10.0}


def _chemo(p) -> OcpProblem:
    r, a, b, dl, Nd = p["r"], p["a"], p["b"], p["delta"], p["N_d"]

    def f(x, u, t):
        N = x[0]
        return np.array([r * N * math.log(1.0 / max(N, LN_FLOOR)) - u[0] * dl * N])

    def L(x, u, t):
        return a * (x[0] - Nd) ** 2 + b * u[0] ** 2

    def adj(x, lam, u, t):
        N = max(x[0], LN_FLOOR)
        dfdN = r * (math.log(1.0 / N) - 1.0) - dl * u[0]
        return np.array([-(2.0 * a * (x[0] - Nd) + lam[0] * dfdN)])

    def dh_du(x, lam, u, t):
        return np.array([2.0 * b * u[0] - lam[0] * dl * x[0]])

    def char(x, lam, t):
        return np.array([min(max(dl * lam[0] * x[0] / (2.0 * b), 0.0), p["u_max"])])

    return OcpProblem(
        "chemo", 1, 1, p["T"], [p["N0"]], [[0.0, p["u_max"]]], MINIMIZE,
        f, L, p, adj, char, dh_du,
        kernel_model=kernels.MODEL_CHEMO,
        kernel_params=np.array([r, a, b, dl, Nd]),
        default_steps=max(1, round(p["T"] / 0.01)),
        state_names=("N",), control_names=("u",))


# ---------------------------------------------------------------- dsdi

DSDI_DEFAULTS = {
    "S0": 1.0, "mu": 0.012, "p1": 0.5, "p2": 0.5,
    "alpha1": 0.05, "alpha2": 0.2, "nu1": 0.15, "nu2": 0.6,
    "beta1": 0.2, "beta2": 0.06, "r": 25.0,
    "q11": 0.9, "q12": 0.1, "q21": 0.1, "q22": 0.9, "delta": 0.0,
    "A": 3.0, "B": 3.0, "C": 0.002, "D": 0.002, "E": 0.002, "F": 0.002,
    "S1_0": 0.47, "S2_0": 0.47, "I1_0": 0.02, "I2_0": 0.04, "R_0": 0.0,
    "T": 1000.0, "u_max": 1.0,
}
_DSDI_KERNEL_ORDER = ("S0", "mu", "p1", "p2", "alpha1", "alpha2", "nu1", "nu2",
                      "beta1", "beta2", "r", "q11", "q12", "q21", "q22", "delta",
                      "A", "B", "C", "D", "E", "F")


def _dsdi(p) -> OcpProblem:
    S0, mu, dl = p["S0"], p["mu"], p["delta"]
    al = np.array([p["alpha1"], p["alpha2"]])
    be = np.array([p["beta1"], p["beta2"]])
    nu = np.array([p["nu1"], p["nu2"]])
    pp = np.array([p["p1"], p["p2"]])
    # q[i, j]: share of new infections from S_i entering I_j
    q = np.array([[p["q11"], p["q12"]], [p["q21"], p["q22"]]])
    w_state = np.array([p["A"], p["B"]])
    w_ctrl = np.array([p["C"], p["D"], p["E"], p["F"]])
    r = p["r"]

    def force(x):
        # force of infection for S1 and S2
        return r * al * (be @ x[2:4])

    def f(x, u, t):
        S, I, R = x[0:2], x[2:4], x[4]
        new = force(x) * S * (1.0 - u[0:2])
        out = np.empty(5)
        out[0:2] = mu * (pp * S0 - S) - new
        out[2:4] = q.T @ new - (mu + nu + u[2:4]) * I
        out[4] = np.dot(nu + u[2:4], I) - (mu + dl) * R
        return out

    def L(x, u, t):
        return float(np.dot(w_state, x[2:4] ** 2) + np.dot(w_ctrl, u ** 2))

    def adj(x, lam, u, t):
        S, I = x[0:2], x[2:4]
        lS, lI, lR = lam[0:2], lam[2:4], lam[4]
        Lam = force(x)
        # net adjoint weight of one new infection out of S_i
        w = (1.0 - u[0:2]) * (q @ lI - lS)
        dHdS = -mu * lS + Lam * w
        dHdI = (2.0 * w_state * I + r * be * np.dot(al * S, w)
                - (mu + nu + u[2:4]) * lI + (nu + u[2:4]) * lR)
        dHdR = -(mu + dl) * lR
        return -np.concatenate([dHdS, dHdI, [dHdR]])

    def dh_du(x, lam, u, t):
        S, I = x[0:2], x[2:4]
        lS, lI, lR = lam[0:2], lam[2:4], lam[4]
        Lam = force(x)
        g_prev = 2.0 * w_ctrl[0:2] * u[0:2] - Lam * S * (q @ lI - lS)
        g_treat = 2.0 * w_ctrl[2:4] * u[2:4] - I * (lI - lR)
        return np.concatenate([g_prev, g_treat])

    def char(x, lam, t):
        S, I = x[0:2], x[2:4]
        lS, lI, lR = lam[0:2], lam[2:4], lam[4]
        Lam = force(x)
        prev = Lam * S * (q @ lI - lS) / (2.0 * w_ctrl[0:2])
        treat = I * (lI - lR) / (2.0 * w_ctrl[2:4])
        return np.clip(np.concatenate([prev, treat]), 0.0, p["u_max"])

    x0 = [p["S1_0"], p["S2_0"], p["I1_0"], p["I2_0"], p["R_0"]]
    return OcpProblem(
        "dsdi", 5, 4, p["T"], x0, [[0.0, p["u_max"]]] * 4, MINIMIZE,
        f, L, p, adj, char, dh_du,
        kernel_model=kernels.MODEL_DSDI,
        kernel_params=np.array([p[k] for k in _DSDI_KERNEL_ORDER]),
        default_steps=max(1, round(p["T"] / 0.1)),
        sweep_relax=0.1,
        state_names=("S1", "S2", "I1", "I2", "R"),
        control_names=("u1", "u2", "u3", "u4"))


_BUILDERS = {
    "intro": (INTRO_DEFAULTS, _intro),
    "chemo": (CHEMO_DEFAULTS, _chemo),
    "dsdi": (DSDI_DEFAULTS, _dsdi),
}
NAMES = tuple(_BUILDERS)


def defaults(name: str) -> dict:
    if name not in _BUILDERS:
        raise UnknownProblem(
            f"unknown problem {name!r}; valid names: {', '.join(NAMES)}")
    return dict(_BUILDERS[name][0])


def builtin(name: str, overrides: Optional[Mapping[str, float]] = None,
            u_max: Optional[float] = None) -> OcpProblem:
    """Built-in problem with optional parameter overrides.

    Unknown override keys raise :class:`ParameterError`.
    """
    params = defaults(name)
    overrides = dict(overrides or {})
    if u_max is not None:
        overrides["u_max"] = u_max
    unknown = sorted(set(overrides) - set(params))
    if unknown:
        raise ParameterError(
            f"unknown parameter(s) for {name}: {', '.join(unknown)}; "
            f"valid: {', '.join(params)}")
    for key, val in overrides.items():
        try:
            params[key] = float(val)
        except (TypeError, ValueError):
            raise ParameterError(f"parameter {key} needs a number, got {val!r}")
    return _BUILDERS[name][1](params)


def from_json(obj: Mapping) -> OcpProblem:
    """Problem from ``{"problem": ..., "overrides": {...}, "u_max": ...}``."""
    extra = sorted(set(obj) - {"problem", "overrides", "u_max"})
    if extra:
        raise ParameterError(f"unknown key(s) in problem spec: {', '.join(extra)}")
    if "problem" not in obj:
        raise ParameterError("problem spec needs a 'problem' name")
    return builtin(obj["problem"], obj.get("overrides"), obj.get("u_max"))


# ---------------------------------------------------------------- costs

def to_minimized(raw: float, sense: str) -> float:
    """Map a raw objective to the value optimizers minimize.

    Maximize-sense objectives become ``1 / (1 + J)``; for ``J <= -1`` that
    map is not order-preserving, so the result is ``inf``.
    """
    if sense == MINIMIZE:
        return raw
    if not raw > -1.0:
        return math.inf
    return 1.0 / (1.0 + raw)


@dataclass(frozen=True)
class CostReport:
    raw: float
    minimized: float
    grid: TimeGrid
    schedule: ControlSchedule
    feasible: bool = True

    def to_json(self) -> dict:
        return {
            "raw": self.raw,
            "minimized": self.minimized,
            "feasible": self.feasible,
            "grid_steps": self.grid.step_count,
        }


def _uses_kernel(problem: OcpProblem, backend: Optional[str]) -> bool:
    return problem.kernel_model is not None and backend != "generic"


def raw_cost(problem: OcpProblem, schedule: ControlSchedule,
             grid: Optional[TimeGrid] = None, backend: Optional[str] = None) -> float:
    grid = grid or problem.default_grid()
    if _uses_kernel(problem, backend):
        core = kernels.get(backend)
        try:
            return core.schedule_cost(
                problem.kernel_model, problem.kernel_params, problem.x0,
                problem.T, grid.step_count, schedule.breakpoints,
                np.ascontiguousarray(schedule.values))
        except core.IntegrationDivergedCore as exc:
            raise IntegrationDiverged(exc.args[0], None, schedule) from None
    traj = integrate(problem, schedule, grid)
    return quadrature_running_cost(problem, traj)


def evaluate_cost(problem: OcpProblem, schedule: ControlSchedule,
                  grid: Optional[TimeGrid] = None,
                  backend: Optional[str] = None) -> CostReport:
    """Cost of ``schedule`` on ``problem``.

    ``backend`` picks the kernel (``"cython"``/``"python"``, default: best
    available) or ``"generic"`` for the numpy integrator.
    """
    grid = grid or problem.default_grid()
    raw = raw_cost(problem, schedule, grid, backend)
    mini = to_minimized(raw, problem.sense)
    return CostReport(raw, mini, grid, schedule, math.isfinite(mini))


def simulate(problem: OcpProblem, schedule: ControlSchedule,
             grid: Optional[TimeGrid] = None, backend: Optional[str] = None):
    """Trajectory of ``schedule``; the kernel path when one exists."""
    from .ode import Trajectory

    grid = grid or problem.default_grid()
    if not _uses_kernel(problem, backend):
        return integrate(problem, schedule, grid)
    core = kernels.get(backend)
    try:
        t, x, u, _ = core.schedule_trajectory(
            problem.kernel_model, problem.kernel_params, problem.x0, problem.T,
            grid.step_count, schedule.breakpoints,
            np.ascontiguousarray(schedule.values))
    except core.IntegrationDivergedCore as exc:
        raise IntegrationDiverged(exc.args[0], None, schedule) from None
    mids = 0.5 * (t[:-1] + t[1:])
    seg = np.minimum(np.searchsorted(schedule.breakpoints, mids, side="right") - 1,
                     schedule.n_segments - 1)
    return Trajectory(grid, t, x, u, schedule.values[seg])


class StepwiseObjective:
    """Minimized cost as a function of a flat decision vector.

    Args:
        problem: the control problem.
        kind: ``"fixed"`` or ``"variable"`` layout.
        n: number of segments.
        grid: integration grid (default: the problem's).
        backend: kernel backend name, or ``"generic"``.
    """

    def __init__(self, problem: OcpProblem, kind: str, n: int,
                 grid: Optional[TimeGrid] = None, backend: Optional[str] = None):
        layout_size(kind, n, problem.m)  # validates kind
        self.problem = problem
        self.kind = kind
        self.n = int(n)
        self.grid = grid or problem.default_grid()
        self.backend = backend
        self.bounds = decision_bounds(kind, self.n, problem.bounds)
        self.dim = self.bounds.shape[0]
        self._fixed_breaks = equal_breakpoints(self.n, problem.T)
        self._core = None if not _uses_kernel(problem, backend) else kernels.get(backend)

    def decode(self, v) -> ControlSchedule:
        return decode(v, self.kind, self.n, self.problem.m, self.problem.T,
                      self.problem.bounds)

    def _arrays(self, v):
        v = np.asarray(v, dtype=float)
        if v.size != self.dim:
            # decode raises the layout error
            self.decode(v)
        bd = self.problem.bounds
        if self.kind == FIXED:
            breaks, raw = self._fixed_breaks, v
        else:
            breaks, raw = widths_to_breakpoints(v[:self.n], self.problem.T), v[self.n:]
        vals = np.clip(raw.reshape(self.n, self.problem.m), bd[:, 0], bd[:, 1])
        return breaks, np.ascontiguousarray(vals)

    def raw(self, v) -> float:
        if self._core is None:
            return raw_cost(self.problem, self.decode(v), self.grid, self.backend)
        breaks, vals = self._arrays(v)
        p = self.problem
        try:
            return self._core.schedule_cost(p.kernel_model, p.kernel_params, p.x0,
                                            p.T, self.grid.step_count, breaks, vals)
        except self._core.IntegrationDivergedCore as exc:
            raise IntegrationDiverged(exc.args[0], None, self.decode(v)) from None

    def __call__(self, v) -> float:
        return to_minimized(self.raw(v), self.problem.sense)

    def batch(self, V) -> np.ndarray:
        """Minimized costs for the rows of ``V``; diverged rows give ``inf``."""
        V = np.atleast_2d(np.asarray(V, dtype=float))
        if self._core is None:
            out = []
            for v in V:
                try:
                    out.append(self(v))
                except IntegrationDiverged:
                    out.append(math.inf)
            return np.array(out)
        p = self.problem
        if V.shape[1] != self.dim:
            self.decode(V[0])
        rows = V.shape[0]
        bd = p.bounds
        if self.kind == FIXED:
            breaks = np.tile(self._fixed_breaks, (rows, 1))
            raw_vals = V
        else:
            w = np.maximum(V[:, :self.n], 0.0)
            total = w.sum(axis=1, keepdims=True)
            breaks = np.empty((rows, self.n + 1))
            breaks[:, 0] = 0.0
            with np.errstate(invalid="ignore", divide="ignore"):
                breaks[:, 1:] = p.T * (np.cumsum(w, axis=1) / total)
            breaks[total[:, 0] <= 0.0] = self._fixed_breaks
            breaks[:, -1] = p.T
            raw_vals = V[:, self.n:]
        vals = np.clip(raw_vals.reshape(rows, self.n, p.m), bd[:, 0], bd[:, 1])
        raw = self._core.batch_schedule_cost(
            p.kernel_model, p.kernel_params, p.x0, p.T, self.grid.step_count,
            np.ascontiguousarray(breaks), np.ascontiguousarray(vals))
        if p.sense == MINIMIZE:
            return np.where(np.isfinite(raw), raw, math.inf)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(raw > -1.0, 1.0 / (1.0 + raw), math.inf)
        return out
