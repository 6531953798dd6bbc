"""Piecewise-constant control schedules.

A schedule holds ``n`` segments on ``[0, T]`` with one value per control
channel in each segment. Segment ``k`` covers the half-open interval
``[b_k, b_{k+1})``; the last segment also owns ``t = T``. Zero-width
segments are legal and are skipped by evaluation.

Two decision-vector layouts are supported:

``fixed``
    ``n * m`` segment values on an equal-width grid, segment-major.
``variable``
    ``n`` nonnegative width increments followed by the ``n * m`` values.
    Widths are normalized so they sum to ``T``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

FIXED = "fixed"
VARIABLE = "variable"
KINDS = (FIXED, VARIABLE)


class ScheduleError(ValueError):
    """Raised for malformed schedules or decision vectors."""


class LayoutError(ScheduleError):
    """Decision vector length does not match the declared layout."""


@dataclass(frozen=True, eq=False)
class ControlSchedule:
    """Piecewise-constant control law on ``[0, T]``.

    Attributes:
        breakpoints: ``n + 1`` non-decreasing times, first 0 and last ``T``.
        values: ``(n, m)`` array of segment control levels.
        bounds: ``(m, 2)`` array of per-channel ``[lo, hi]``.
    """

    breakpoints: np.ndarray
    values: np.ndarray
    bounds: np.ndarray

    def __post_init__(self):
        b = np.array(self.breakpoints, dtype=float)
        v = np.array(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        bd = np.array(self.bounds, dtype=float).reshape(-1, 2)
        if b.ndim != 1 or b.size < 2:
            raise ScheduleError("need at least two breakpoints")
        if v.shape[0] != b.size - 1:
            raise ScheduleError(
                f"{b.size - 1} segments but {v.shape[0]} value rows")
        if bd.shape[0] != v.shape[1]:
            raise ScheduleError(
                f"{v.shape[1]} channels but {bd.shape[0]} bound pairs")
        if b[0] != 0.0:
            raise ScheduleError("first breakpoint must be 0")
        if np.any(np.diff(b) < 0):
            raise ScheduleError("breakpoints must be non-decreasing")
        if b[-1] <= 0:
            raise ScheduleError("horizon must be positive")
        if np.any(v < bd[:, 0]) or np.any(v > bd[:, 1]):
            raise ScheduleError("segment value outside channel bounds")
        for arr in (b, v, bd):
            arr.setflags(write=False)
        object.__setattr__(self, "breakpoints", b)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "bounds", bd)

    @property
    def T(self) -> float:
        return float(self.breakpoints[-1])

    @property
    def n_segments(self) -> int:
        return self.values.shape[0]

    @property
    def channels(self) -> int:
        return self.values.shape[1]

    def segment_index(self, t: float) -> int:
        """Index of the (non-empty) segment that owns time ``t``."""
        if not 0.0 <= t <= self.T:
            raise ScheduleError(f"t={t} outside [0, {self.T}]")
        b = self.breakpoints
        if t >= self.T:
            # last non-empty segment
            k = self.n_segments - 1
            while k > 0 and b[k + 1] == b[k]:
                k -= 1
            return k
        # rightmost k with b[k] <= t, which skips zero-width segments
        return int(np.searchsorted(b, t, side="right")) - 1

    def __call__(self, t: float) -> np.ndarray:
        return self.values[self.segment_index(t)]

    def __eq__(self, other):
        if not isinstance(other, ControlSchedule):
            return NotImplemented
        return (np.array_equal(self.breakpoints, other.breakpoints)
                and np.array_equal(self.values, other.values)
                and np.array_equal(self.bounds, other.bounds))

    __hash__ = None

    def to_json(self) -> dict:
        return {
            "T": self.T,
            "breakpoints": self.breakpoints.tolist(),
            "values": self.values.tolist(),
            "bounds": self.bounds.tolist(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ControlSchedule":
        s = cls(obj["breakpoints"], obj["values"], obj["bounds"])
        if "T" in obj and float(obj["T"]) != s.T:
            raise ScheduleError("T disagrees with last breakpoint")
        return s


def eval_schedule(s: ControlSchedule, t: float) -> np.ndarray:
    """Right-continuous value of ``s`` at ``t``; ``t = T`` takes the last segment."""
    return s(t)


def equal_breakpoints(n: int, T: float) -> np.ndarray:
    b = np.linspace(0.0, T, n + 1)
    b[-1] = T
    return b


def constant(value, T: float, bounds) -> ControlSchedule:
    value = np.atleast_1d(np.asarray(value, dtype=float))
    return ControlSchedule([0.0, T], value[None, :], bounds)


def from_values(values, T: float, bounds) -> ControlSchedule:
    """Equal-width schedule with the given ``(n, m)`` (or ``(n,)``) values."""
    v = np.asarray(values, dtype=float)
    if v.ndim == 1:
        v = v[:, None]
    return ControlSchedule(equal_breakpoints(v.shape[0], T), v, bounds)


def layout_size(kind: str, n: int, m: int) -> int:
    if kind == FIXED:
        return n * m
    if kind == VARIABLE:
        return n + n * m
    raise ScheduleError(f"unknown layout {kind!r}; expected one of {KINDS}")


def decision_bounds(kind: str, n: int, bounds) -> np.ndarray:
    """Box ``(d, 2)`` for the decision vector of the given layout."""
    bd = np.asarray(bounds, dtype=float).reshape(-1, 2)
    vals = np.tile(bd, (n, 1))
    if kind == FIXED:
        return vals
    if kind == VARIABLE:
        return np.vstack([np.tile([0.0, 1.0], (n, 1)), vals])
    raise ScheduleError(f"unknown layout {kind!r}; expected one of {KINDS}")


def encode(s: ControlSchedule, kind: str) -> np.ndarray:
    if kind == FIXED:
        return s.values.ravel().copy()
    if kind == VARIABLE:
        widths = np.diff(s.breakpoints) / s.T
        return np.concatenate([widths, s.values.ravel()])
    raise ScheduleError(f"unknown layout {kind!r}; expected one of {KINDS}")


def widths_to_breakpoints(widths: np.ndarray, T: float) -> np.ndarray:
    w = np.maximum(np.asarray(widths, dtype=float), 0.0)
    total = w.sum()
    if total <= 0.0:
        return equal_breakpoints(w.size, T)
    b = np.empty(w.size + 1)
    b[0] = 0.0
    b[1:] = T * (np.cumsum(w) / total)
    b[-1] = T
    return b


def decode(v, kind: str, n: int, m: int, T: float, bounds) -> ControlSchedule:
    """Map a decision vector to a schedule; values are clamped to ``bounds``."""
    v = np.asarray(v, dtype=float).ravel()
    expected = layout_size(kind, n, m)
    if v.size != expected:
        raise LayoutError(
            f"{kind} layout with n={n}, m={m} needs {expected} entries, "
            f"got {v.size}")
    bd = np.asarray(bounds, dtype=float).reshape(-1, 2)
    if kind == FIXED:
        b = equal_breakpoints(n, T)
        raw = v
    else:
        b = widths_to_breakpoints(v[:n], T)
        raw = v[n:]
    vals = np.clip(raw.reshape(n, m), bd[:, 0], bd[:, 1])
    return ControlSchedule(b, vals, bd)


def refine(s: ControlSchedule, factor: int) -> ControlSchedule:
    """Split every segment into ``factor`` equal pieces holding the same value."""
    if factor < 1:
        raise ScheduleError("refine factor must be >= 1")
    b = s.breakpoints
    pieces = [b[k] + (b[k + 1] - b[k]) * np.arange(factor) / factor
              for k in range(s.n_segments)]
    nb = np.append(np.concatenate(pieces), s.T)
    return ControlSchedule(nb, np.repeat(s.values, factor, axis=0), s.bounds)


def sample_continuous(u: Callable[[float], Sequence[float] | float], n: int,
                      T: float, bounds) -> ControlSchedule:
    """Equal-width schedule holding ``u`` at each segment midpoint (clamped)."""
    b = equal_breakpoints(n, T)
    mids = 0.5 * (b[:-1] + b[1:])
    vals = np.array([np.atleast_1d(u(t)) for t in mids], dtype=float)
    bd = np.asarray(bounds, dtype=float).reshape(-1, 2)
    return ControlSchedule(b, np.clip(vals, bd[:, 0], bd[:, 1]), bd)
