"""Dyadic search for a concave expected-welfare curve.

Each epoch probes three points ``l < c < r`` around the midpoint of the
active interval, estimates the welfare differences ``W(c) - W(l)`` and
``W(r) - W(c)`` from demand samples, and cuts away the part of the interval
that confidence intervals rule out.  Welfare differences need the integral
of demand between two points, estimated from samples spread over the open
interval between them.

Probe offsets alternate between a quarter and a sixth of the interval width,
so widths alternate between ``2^-m`` and ``3 * 2^-m`` and every sampled point
is a dyadic rational, exactly representable as a float.  Statistics are
therefore keyed by the float value itself.

:class:`DyadicSearch` is a readable step-by-step implementation;
:func:`run_dyadic` runs the same algorithm in compiled form.
"""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import _kernels
from .envs import Environment
from .welfare import demand

TARGETS = ("l", "c", "r", "lc", "cr")

#: constants of the half-width decay guarantee
MIN_EPOCH_ROUNDS = 10


def default_delta(T: int) -> float:
    return float(T) ** -2.5


def width_decay_constant(delta: float) -> float:
    return 72 * math.sqrt(10) * (math.sqrt(2 * math.log(2 / delta)) + 4)


@dataclass(frozen=True)
class DyadicConfig:
    lam: float
    delta: float

    def __post_init__(self):
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta!r}")
        if not 0.0 < self.lam < 1.0:
            raise ValueError(f"lam must lie in (0, 1), got {self.lam!r}")

    @classmethod
    def for_horizon(cls, lam: float, T: int) -> "DyadicConfig":
        return cls(lam, default_delta(T))

    @property
    def log_term(self) -> float:
        return math.log(2 / self.delta)


@dataclass
class ConfidenceInterval:
    center: float
    half_width: float

    @property
    def lower(self) -> float:
        return self.center - self.half_width

    @property
    def upper(self) -> float:
        return self.center + self.half_width


def epoch_probe_points(lo: float, hi: float, tau: int) -> Tuple[float, float, float]:
    """Probe points of epoch ``tau`` (1-based) on the interval ``[lo, hi]``."""
    if not hi > lo:
        raise ValueError("interval must have positive length")
    c = (lo + hi) / 2
    d = hi - lo
    off = d / 4 if tau % 2 == 1 else d / 6
    return c - off, c, c + off


def interior_sample_point(w1: float, w2: float, n: int, k: int) -> float:
    """Point ``k`` of the ``n + 1`` evenly spaced cell centers of ``(w1, w2)``."""
    if not 0 <= k <= n:
        raise ValueError(f"need 0 <= k <= n, got k={k}, n={n}")
    return w1 + (w2 - w1) * ((k + 0.5) / (n + 1))


def _is_power_of_two(m: int) -> bool:
    return m > 0 and m & (m - 1) == 0


def truncation_index(hit_times: List[int], t: int) -> int:
    """Latest round ``s <= t`` at which the interval hit count plus one is a power of two.

    ``hit_times`` are the increasing rounds (1-based) of samples inside the
    interval.  Returns 0 if no hit happened by ``t``.
    """
    s = 0
    for j, h in enumerate(hit_times):
        if h > t:
            break
        if _is_power_of_two(j + 2):
            # count stays at j + 1 until the next hit
            nxt = hit_times[j + 1] if j + 1 < len(hit_times) else None
            s = t if nxt is None or nxt > t else nxt - 1
    return s


def interval_demand_estimate(outcomes: List[int]) -> Tuple[float, int]:
    """Truncated demand mean from time-ordered in-interval outcomes.

    Only the first ``2^m - 1`` outcomes count, for the largest such number
    available; the sum is divided by the count plus one.
    """
    n = 0
    while 2 * n + 1 <= len(outcomes):
        n = 2 * n + 1
    return sum(outcomes[:n]) / (n + 1), n


def half_widths(x: float, n_x: int, w1: float, w2: float, interval_n: int, lam: float, delta: float):
    """Confidence half-widths for the demand at ``x`` and the integral over ``(w1, w2)``."""
    log_term = math.log(2 / delta)
    return (_kernels._point_width(x, n_x, log_term),
            _kernels._interval_width(w1, w2, interval_n, lam, log_term))


@dataclass
class _IntervalLog:
    """Running and truncated statistics of samples inside an open interval."""

    w1: float
    w2: float
    raw_n: int = 0
    raw_sum: int = 0
    n: int = 0
    sum: int = 0
    k: int = 0

    def add(self, x: float, y: int):
        if self.w1 < x < self.w2:
            self.raw_n += 1
            self.raw_sum += y
            if _is_power_of_two(self.raw_n + 1):
                self.n, self.sum = self.raw_n, self.raw_sum

    @property
    def mean(self) -> float:
        return self.sum / (self.n + 1)


@dataclass
class DyadicSearch:
    """Step-by-step dyadic search; call :meth:`step` with each valuation."""

    config: DyadicConfig
    lo: float = 0.0
    hi: float = 1.0
    tau: int = 0
    t: int = 0
    history: List[Tuple[float, int]] = field(default_factory=list)
    point_n: Dict[float, int] = field(default_factory=lambda: defaultdict(int))
    point_sum: Dict[float, int] = field(default_factory=lambda: defaultdict(int))
    epochs: List[Tuple[int, float, float]] = field(default_factory=list)
    record_widths: bool = False
    width_log: List[Tuple[int, int, float]] = field(default_factory=list)

    def __post_init__(self):
        self._start_epoch()

    def _start_epoch(self):
        self.tau += 1
        self.epoch_start = self.t
        self.epochs.append((self.t, self.lo, self.hi))
        self.l, self.c, self.r = epoch_probe_points(self.lo, self.hi, self.tau)
        self.logs = (_IntervalLog(self.l, self.c), _IntervalLog(self.c, self.r))
        for x, y in self.history:
            for log in self.logs:
                log.add(x, y)

    def point_mean(self, x: float) -> float:
        n = self.point_n.get(x, 0)
        return self.point_sum.get(x, 0) / n if n else 0.0

    def gammas(self) -> List[float]:
        """Half-widths of the five targets in tie-break order."""
        lt = self.config.log_term
        out = [_kernels._point_width(x, self.point_n.get(x, 0), lt) for x in (self.l, self.c, self.r)]
        out += [_kernels._interval_width(g.w1, g.w2, g.n, self.config.lam, lt) for g in self.logs]
        return out

    def select_sampling_target(self) -> str:
        g = self.gammas()
        return TARGETS[int(np.argmax(g))]

    def next_point(self) -> float:
        target = self.select_sampling_target()
        if target in ("l", "c", "r"):
            return getattr(self, target)
        log = self.logs[0] if target == "lc" else self.logs[1]
        x = interior_sample_point(log.w1, log.w2, log.n, log.k)
        log.k = (log.k + 1) % (log.n + 1)
        return x

    def confidence_intervals(self) -> Tuple[ConfidenceInterval, ConfidenceInterval, ConfidenceInterval]:
        """Intervals for ``W(c) - W(l)``, ``W(r) - W(c)`` and ``W(r) - W(l)``."""
        lam = self.config.lam
        gl, gc, gr, glc, gcr = self.gammas()
        pts = (self.l, self.c, self.r)
        dh = [self.point_mean(x) for x in pts]
        centers = []
        for j, log in enumerate(self.logs):
            x, x2 = pts[j], pts[j + 1]
            centers.append(x2 * dh[j + 1] - x * dh[j] - lam * (x2 - x) * log.mean)
        return (
            ConfidenceInterval(centers[0], gc + gl + glc),
            ConfidenceInterval(centers[1], gr + gc + gcr),
            ConfidenceInterval(centers[0] + centers[1], gr + gl + glc + gcr),
        )

    def step(self, valuation: float) -> Tuple[float, int]:
        x = self.next_point()
        y = demand(x, valuation)
        self.t += 1
        self.history.append((x, y))
        self.point_n[x] += 1
        self.point_sum[x] += y
        for log in self.logs:
            log.add(x, y)
        J = self.confidence_intervals()
        if self.record_widths:
            self.width_log.append((self.tau, self.t - self.epoch_start, max(j.half_width for j in J)))
        new = trim_active_interval((self.lo, self.hi), (self.l, self.c, self.r), J)
        if new is not None:
            self.lo, self.hi = new
            self._start_epoch()
        return x, y


def trim_active_interval(interval, probes, J) -> Optional[Tuple[float, float]]:
    """New active interval, or ``None`` to continue the epoch."""
    lo, hi = interval
    l, _, r = probes
    j_lc, j_cr, j_lr = J
    if j_lc.lower >= 0 or j_lr.lower >= 0:
        return max(lo, l), hi
    if j_cr.upper <= 0 or j_lr.upper <= 0:
        return lo, min(hi, r)
    return None


@dataclass
class DyadicRun:
    policies: np.ndarray
    outcomes: np.ndarray
    valuations: np.ndarray
    epoch_start: np.ndarray
    epoch_lo: np.ndarray
    epoch_hi: np.ndarray
    final: Tuple[float, float]

    @property
    def widths(self) -> np.ndarray:
        """Active-interval width at the start of each epoch, then the final width."""
        return np.append(self.epoch_hi - self.epoch_lo, self.final[1] - self.final[0])


def replay_dyadic(config: DyadicConfig, values) -> DyadicRun:
    """Run the compiled search on explicit valuations."""
    values = np.ascontiguousarray(values, dtype=float)
    T = len(values)
    xs = np.empty(T)
    ys = np.empty(T, dtype=np.int64)
    n_ep = T + 1
    start = np.empty(n_ep, dtype=np.int64)
    elo = np.empty(n_ep)
    ehi = np.empty(n_ep)
    if T == 0:
        return DyadicRun(xs, ys, values, start[:0], elo[:0], ehi[:0], (0.0, 1.0))
    tau, lo, hi = _kernels.dyadic_episode(values, config.lam, config.log_term, xs, ys, start, elo, ehi)
    return DyadicRun(xs, ys.astype(np.int8), values, start[:tau], elo[:tau], ehi[:tau], (lo, hi))


def run_dyadic(config: DyadicConfig, env: Environment, T: int, seed: int) -> DyadicRun:
    """Play ``T`` rounds against ``env`` reseeded with ``seed``."""
    values = env.with_seed(seed).valuations(1, T) if T else np.empty(0)
    return replay_dyadic(config, values)
