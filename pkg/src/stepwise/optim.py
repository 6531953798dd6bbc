"""Derivative-free minimizers over a box, a restart harness and a grid oracle.

All randomness comes from ``numpy.random.Generator(PCG64(seed))`` so runs
reproduce across platforms for a given numpy release.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

PATTERN_SEARCH = "pattern-search"
SIMULATED_ANNEALING = "simulated-annealing"
GENETIC = "genetic"
METHODS = (PATTERN_SEARCH, SIMULATED_ANNEALING, GENETIC)
ALIASES = {"ps": PATTERN_SEARCH, "sa": SIMULATED_ANNEALING, "ga": GENETIC}

MAX_ORACLE_POINTS = 10**7


def make_rng(seed: int) -> np.random.Generator:
    """PCG64 generator; the seed is reduced to 64 bits."""
    return np.random.Generator(np.random.PCG64(int(seed) & 0xFFFFFFFFFFFFFFFF))


def method_name(name: str) -> str:
    name = ALIASES.get(name, name)
    if name not in METHODS:
        raise ValueError(f"unknown optimizer {name!r}; expected one of "
                         f"{', '.join(METHODS)} or {', '.join(ALIASES)}")
    return name


@dataclass(frozen=True)
class OptimizerConfig:
    """Settings shared by all methods plus per-method knobs.

    ``None`` for ``sa_sweep`` means ``10 * dim``; for ``ga_mutation_rate``
    it means ``1 / dim``.
    """

    method: str
    bounds: np.ndarray
    budget: int = 20_000
    seed: int = 0
    ps_delta0: float = 0.25
    ps_min_step: float = 1e-9
    sa_sigma0: float = 0.3
    sa_cooling: float = 0.95
    sa_accept0: float = 0.8
    sa_warmup: int = 100
    sa_sweep: Optional[int] = None
    ga_population: int = 50
    ga_tournament: int = 2
    ga_blx_alpha: float = 0.5
    ga_mutation_rate: Optional[float] = None
    ga_mutation_scale: float = 0.1
    ga_elite: int = 1

    def __post_init__(self):
        object.__setattr__(self, "method", method_name(self.method))
        bd = np.array(self.bounds, dtype=float).reshape(-1, 2)
        if np.any(bd[:, 0] > bd[:, 1]):
            raise ValueError("bounds need lo <= hi")
        bd.setflags(write=False)
        object.__setattr__(self, "bounds", bd)
        if self.budget < 1:
            raise ValueError("budget must be >= 1")

    @property
    def dim(self) -> int:
        return self.bounds.shape[0]

    def settings(self) -> dict:
        """Method-specific settings as plain JSON values."""
        out = {"budget": self.budget, "seed": self.seed}
        prefix = {PATTERN_SEARCH: "ps_", SIMULATED_ANNEALING: "sa_",
                  GENETIC: "ga_"}[self.method]
        for name in self.__dataclass_fields__:
            if name.startswith(prefix):
                out[name] = getattr(self, name)
        return out


@dataclass
class OptimizerRun:
    x: np.ndarray
    cost: float
    evaluations: int
    seed: int
    method: str
    wall_time: float = 0.0
    budget_exhausted: bool = False
    trace: list = field(default_factory=list)
    info: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "method": self.method,
            "seed": self.seed,
            "x": self.x.tolist(),
            "cost": self.cost,
            "evaluations": self.evaluations,
            "budget_exhausted": self.budget_exhausted,
        }


@dataclass
class RestartSummary:
    runs: list
    best: OptimizerRun
    mean: float
    std: float

    @property
    def run_count(self) -> int:
        return len(self.runs)

    @property
    def costs(self) -> np.ndarray:
        return np.array([r.cost for r in self.runs])

    def to_json(self) -> dict:
        return {
            "run_count": self.run_count,
            "best_cost": self.best.cost,
            "best_seed": self.best.seed,
            "mean_cost": self.mean,
            "std_cost": self.std,
            "costs": self.costs.tolist(),
            "evaluations": [r.evaluations for r in self.runs],
        }


class _Budgeted:
    """Counts evaluations and remembers the best point seen."""

    def __init__(self, f: Callable, budget: int):
        self.f = f
        self.budget = budget
        self.count = 0
        self.best_x = None
        self.best_f = math.inf
        self.trace = []

    @property
    def exhausted(self) -> bool:
        return self.count >= self.budget

    def __call__(self, x) -> float:
        self.count += 1
        fx = float(self.f(x))
        if fx < self.best_f or self.best_x is None:
            self.best_f = fx
            self.best_x = np.array(x, dtype=float)
            self.trace.append((self.count, fx))
        return fx


def _start(config: OptimizerConfig, rng, x0) -> np.ndarray:
    lo, hi = config.bounds[:, 0], config.bounds[:, 1]
    if x0 is None:
        return rng.uniform(lo, hi)
    return np.clip(np.asarray(x0, dtype=float), lo, hi)


def _finish(ev: _Budgeted, config, t0, **info) -> OptimizerRun:
    return OptimizerRun(ev.best_x, ev.best_f, ev.count, config.seed, config.method,
                        time.perf_counter() - t0, ev.exhausted, ev.trace, info)


def pattern_search(objective: Callable, config: OptimizerConfig, x0=None) -> OptimizerRun:
    """Compass search: poll ``±Δ_i e_i`` in index order, take the first
    improvement, halve ``Δ`` after a poll with none."""
    t0 = time.perf_counter()
    rng = make_rng(config.seed)
    lo, hi = config.bounds[:, 0], config.bounds[:, 1]
    ev = _Budgeted(objective, config.budget)
    x = _start(config, rng, x0)
    fx = ev(x)
    delta = config.ps_delta0 * (hi - lo)
    halvings = 0
    while not ev.exhausted and delta.max() >= config.ps_min_step:
        improved = False
        for i in range(x.size):
            if delta[i] == 0.0:
                continue
            for sign in (1.0, -1.0):
                y = x.copy()
                y[i] = min(max(x[i] + sign * delta[i], lo[i]), hi[i])
                if y[i] == x[i]:
                    continue
                fy = ev(y)
                if fy < fx:
                    x, fx = y, fy
                    improved = True
                    break
                if ev.exhausted:
                    break
            if improved or ev.exhausted:
                break
        if not improved:
            delta = 0.5 * delta
            halvings += 1
    return _finish(ev, config, t0, halvings=halvings,
                   final_step=float(delta.max()))


def _reflect(y, lo, hi):
    span = hi - lo
    out = y.copy()
    ok = span > 0
    z = np.mod(y[ok] - lo[ok], 2.0 * span[ok])
    z = np.where(z > span[ok], 2.0 * span[ok] - z, z)
    out[ok] = lo[ok] + z
    out[~ok] = lo[~ok]
    return out


def simulated_annealing(objective: Callable, config: OptimizerConfig,
                        x0=None) -> OptimizerRun:
    """Metropolis search with Gaussian proposals reflected into the box.

    The proposal scale shrinks with temperature, ``σ = σ0 · temp/temp0``,
    and temperature drops geometrically after every sweep. ``temp0`` is
    set from warm-up proposals so that uphill moves start out accepted
    with probability about ``sa_accept0``.
    """
    t0 = time.perf_counter()
    rng = make_rng(config.seed)
    lo, hi = config.bounds[:, 0], config.bounds[:, 1]
    d = config.dim
    sweep = config.sa_sweep or 10 * d
    sigma0 = config.sa_sigma0 * (hi - lo)
    ev = _Budgeted(objective, config.budget)
    x = _start(config, rng, x0)
    fx = ev(x)

    uphill = []
    for _ in range(config.sa_warmup):
        if ev.exhausted:
            break
        fy = ev(_reflect(x + sigma0 * rng.standard_normal(d), lo, hi))
        if math.isfinite(fy) and math.isfinite(fx) and fy > fx:
            uphill.append(fy - fx)
    temp0 = -np.mean(uphill) / math.log(config.sa_accept0) if uphill else 1.0
    temp = temp0

    proposed = accepted = 0
    while not ev.exhausted:
        for _ in range(sweep):
            if ev.exhausted:
                break
            sigma = sigma0 * (temp / temp0)
            y = _reflect(x + sigma * rng.standard_normal(d), lo, hi)
            fy = ev(y)
            proposed += 1
            if not math.isfinite(fx):
                take = True
            elif not math.isfinite(fy):
                take = False
            else:
                dE = fy - fx
                take = dE <= 0.0 or rng.random() < math.exp(-dE / temp)
            if take:
                x, fx = y, fy
                accepted += 1
        temp *= config.sa_cooling
    rate = accepted / proposed if proposed else float("nan")
    return _finish(ev, config, t0, temp0=float(temp0), acceptance_rate=rate)


def genetic_algorithm(objective: Callable, config: OptimizerConfig, x0=None,
                      population=None) -> OptimizerRun:
    """Real-coded GA: binary tournaments, BLX-α crossover, Gaussian mutation,
    elitism.

    ``population`` seeds the initial individuals (rows); otherwise they are
    uniform in the box, with ``x0`` (if given) as the first one.
    """
    t0 = time.perf_counter()
    rng = make_rng(config.seed)
    lo, hi = config.bounds[:, 0], config.bounds[:, 1]
    span = hi - lo
    d = config.dim
    P = config.ga_population
    pm = (1.0 / d) if config.ga_mutation_rate is None else config.ga_mutation_rate
    scale = config.ga_mutation_scale * span
    alpha = config.ga_blx_alpha
    ev = _Budgeted(objective, config.budget)

    if population is not None:
        pop = np.clip(np.array(population, dtype=float).reshape(-1, d), lo, hi)
    else:
        pop = rng.uniform(lo, hi, size=(P, d))
        if x0 is not None:
            pop[0] = np.clip(x0, lo, hi)
    fit = []
    for ind in pop:
        if ev.exhausted:
            break
        fit.append(ev(ind))
    pop = pop[:len(fit)]
    fit = np.array(fit)

    def tournament():
        idx = rng.integers(0, pop.shape[0], size=config.ga_tournament)
        return pop[idx[np.argmin(fit[idx])]]

    generations = 0
    best_history = [float(fit.min())]
    while not ev.exhausted:
        order = np.argsort(fit, kind="stable")
        n_elite = min(config.ga_elite, pop.shape[0])
        children = [pop[i].copy() for i in order[:n_elite]]
        child_fit = [fit[i] for i in order[:n_elite]]
        while len(children) < P and not ev.exhausted:
            a, b = tournament(), tournament()
            lo_c = np.minimum(a, b) - alpha * np.abs(a - b)
            hi_c = np.maximum(a, b) + alpha * np.abs(a - b)
            for _ in range(2):
                if len(children) >= P or ev.exhausted:
                    break
                c = rng.uniform(lo_c, hi_c)
                mask = rng.random(d) < pm
                c = c + mask * scale * rng.standard_normal(d)
                c = np.clip(c, lo, hi)
                children.append(c)
                child_fit.append(ev(c))
        pop = np.array(children)
        fit = np.array(child_fit)
        generations += 1
        best_history.append(float(fit.min()))
    return _finish(ev, config, t0, generations=generations,
                   best_history=best_history)


_DISPATCH = {
    PATTERN_SEARCH: pattern_search,
    SIMULATED_ANNEALING: simulated_annealing,
    GENETIC: genetic_algorithm,
}


def run(objective: Callable, config: OptimizerConfig, x0=None) -> OptimizerRun:
    return _DISPATCH[config.method](objective, config, x0)


def multi_restart(method: str, objective: Callable, config: OptimizerConfig,
                  runs: int, workers: int = 1) -> RestartSummary:
    """Independent runs with seeds ``seed, seed+1, …``; each starts uniformly
    at random in the box. Results come back in seed order."""
    if runs < 1:
        raise ValueError("runs must be >= 1")
    config = replace(config, method=method_name(method))
    configs = [replace(config, seed=config.seed + i) for i in range(runs)]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda c: run(objective, c), configs))
    else:
        results = [run(objective, c) for c in configs]
    costs = np.array([r.cost for r in results])
    best = results[int(np.argmin(costs))]
    return RestartSummary(results, best, float(costs.mean()), float(costs.std()))


def grid_oracle(objective: Callable, box, resolution, chunk: int = 65_536):
    """Exhaustive minimum over a uniform grid in ``box``.

    ``resolution`` is points per axis (int or one per axis). Uses
    ``objective.batch`` when available. Returns ``(best_x, best_cost)``.
    """
    box = np.asarray(box, dtype=float).reshape(-1, 2)
    d = box.shape[0]
    res = np.broadcast_to(np.asarray(resolution, dtype=int), (d,))
    if np.any(res < 1):
        raise ValueError("resolution must be >= 1")
    total = int(np.prod(res.astype(object)))
    if total > MAX_ORACLE_POINTS:
        raise ValueError(f"grid has {total} points, above the {MAX_ORACLE_POINTS} limit")
    axes = [np.linspace(lo, hi, r) if r > 1 else np.array([lo])
            for (lo, hi), r in zip(box, res)]
    batch = getattr(objective, "batch", None)
    best_x, best_f = None, math.inf
    for start in range(0, total, chunk):
        idx = np.arange(start, min(start + chunk, total))
        coords = np.unravel_index(idx, tuple(res))
        V = np.column_stack([ax[c] for ax, c in zip(axes, coords)])
        if batch is not None:
            vals = np.asarray(batch(V), dtype=float)
        else:
            vals = np.array([objective(v) for v in V], dtype=float)
        k = int(np.argmin(vals))
        if vals[k] < best_f:
            best_f, best_x = float(vals[k]), V[k].copy()
    return best_x, best_f
