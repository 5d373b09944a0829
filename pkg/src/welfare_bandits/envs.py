"""Valuation environments.

Stochastic environments turn uniforms from a counter-based stream into
valuations by inverse-CDF sampling, so the valuation of round ``i`` is a pure
function of ``(seed, i)``.  Fixed sequences ignore the seed.

Two families come from the lower-bound constructions:

* :class:`FourPointMuEnv` -- four atoms at 1/4, 1/2, 3/4, 1 whose middle
  masses are tilted by ``epsilon``; the optimum jumps between 1/4 and 1.
* :class:`ConcaveEnv` -- a three-piece density with concave expected welfare
  whose maximizer sits at 1/2 or at ``1 - h_bar`` depending on the sign of
  ``epsilon``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import rng
from .welfare import check_masses, expected_welfare_discrete, expected_welfare_uniform

IDENTITY_TOL = 1e-10


# ---------------------------------------------------------------------------
# lower-bound constants


def _check_lambda(lam: float) -> float:
    lam = float(lam)
    if not 0.0 < lam < 1.0:
        raise ValueError(f"lambda must lie in (0, 1), got {lam!r}")
    return lam


def mu_epsilon_constants(lam: float) -> Tuple[float, float]:
    """Masses ``(a, b)`` of the four-point family for welfare weight ``lam``."""
    lam = _check_lambda(lam)
    a = (1 - lam) * (136 - 99 * lam) / (2 * (4 - 3 * lam) * (24 - 17 * lam))
    b = (1 - lam) / (2 * (24 - 17 * lam))
    return a, b


def lower_bound_proof_constants(lam: float) -> Tuple[float, float, float, float]:
    """Constants ``(c1, c2, c3, C)`` of the T^(2/3) lower-bound argument.

    ``C`` is the minimum of its three defining terms.
    """
    a, b = mu_epsilon_constants(lam)
    c1 = lam / 4 * b
    c2 = (1 - lam) / (8 * (4 - 3 * lam))
    c3 = b * math.sqrt(2 / (a * (1 - a - 2 * b)))
    C = min(c1**2 * c3**2 / c2, c2 / 2, (c1**2 * c2 / c3**2) ** (1 / 3) / 16)
    return c1, c2, c3, C


def mu_epsilon_support(lam: float, epsilon: float) -> List[Tuple[float, float]]:
    """Atoms ``(value, mass)`` of the four-point distribution."""
    if not -1.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon must lie in [-1, 1], got {epsilon!r}")
    a, b = mu_epsilon_constants(lam)
    masses = (a, (1 + epsilon) * b, (1 - epsilon) * b, 1 - a - 2 * b)
    return list(zip((0.25, 0.5, 0.75, 1.0), masses))


# ---------------------------------------------------------------------------
# environments


class Environment:
    """Base class; subclasses are frozen dataclasses with a ``seed`` field."""

    kind: str = "abstract"
    seed: int

    #: whether valuations are i.i.d. draws with a known expected welfare
    stochastic = True

    def from_uniform(self, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def valuations(self, start_round: int, count: int) -> np.ndarray:
        """Valuations of rounds ``start_round, ..., start_round + count - 1`` (1-based)."""
        if start_round < 1:
            raise ValueError("rounds are numbered from 1")
        return self.from_uniform(rng.uniforms(self.seed, rng.VALUATIONS, start_round - 1, count))

    def stream(self):
        """Sequential block sampler ``draw(count)`` over the valuation stream."""
        gen = rng.generator(self.seed, rng.VALUATIONS)
        return lambda count: self.from_uniform(gen.random(count))

    def with_seed(self, seed: int) -> "Environment":
        return replace(self, seed=int(seed))

    def expected_welfare(self, x, lam):
        raise NotImplementedError(f"{self.kind} environment has no expected welfare")

    def describe(self) -> dict:
        return {"kind": self.kind}


def draw_valuation(env: Environment, round: int) -> float:
    """Valuation of 1-based ``round``; deterministic in ``(env.seed, round)``."""
    return float(env.valuations(round, 1)[0])


@dataclass(frozen=True)
class UniformEnv(Environment):
    seed: int = 0
    kind = "uniform"

    def from_uniform(self, u):
        return np.asarray(u, dtype=float)

    def expected_welfare(self, x, lam):
        return expected_welfare_uniform(x, lam)


@dataclass(frozen=True)
class DiscreteEnv(Environment):
    """Finitely supported valuations given as ``(value, mass)`` pairs."""

    support: Tuple[Tuple[float, float], ...] = ((0.5, 0.5), (1.0, 0.5))
    seed: int = 0
    kind = "discrete"

    def __post_init__(self):
        object.__setattr__(self, "support", tuple((float(v), float(m)) for v, m in self.support))
        values, masses = check_masses(self.support)
        keep = masses > 0
        cum = np.cumsum(masses[keep])
        cum[-1] = 1.0
        object.__setattr__(self, "_atoms", values[keep])
        object.__setattr__(self, "_cum", cum)

    def from_uniform(self, u):
        idx = np.searchsorted(self._cum, np.asarray(u), side="right")
        return self._atoms[idx]

    def expected_welfare(self, x, lam):
        return expected_welfare_discrete(x, self.support, lam)

    def describe(self):
        return {"kind": self.kind, "support": [list(s) for s in self.support]}


@dataclass(frozen=True)
class FourPointMuEnv(DiscreteEnv):
    """The four-atom family; ``lam`` parametrizes the masses."""

    lam: float = 0.95
    epsilon: float = 0.0
    support: Tuple[Tuple[float, float], ...] = field(default=(), repr=False)
    seed: int = 0
    kind = "four_point_mu"

    def __post_init__(self):
        object.__setattr__(self, "support", tuple(mu_epsilon_support(self.lam, self.epsilon)))
        super().__post_init__()

    def describe(self):
        return {"kind": self.kind, "lam": self.lam, "epsilon": self.epsilon}


@dataclass(frozen=True)
class FixedSequenceEnv(Environment):
    """An oblivious adversary: a fixed list of valuations."""

    values: Tuple[float, ...] = ()
    seed: int = 0
    kind = "fixed_sequence"
    stochastic = False

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        bad = [i for i, v in enumerate(vals) if not 0.0 <= v <= 1.0]
        if bad:
            raise ValueError(f"valuation {vals[bad[0]]!r} at position {bad[0] + 1} outside [0, 1]")
        object.__setattr__(self, "values", vals)

    def valuations(self, start_round, count):
        if start_round < 1:
            raise ValueError("rounds are numbered from 1")
        stop = start_round - 1 + count
        if stop > len(self.values):
            raise IndexError(f"round {stop} beyond fixed sequence of length {len(self.values)}")
        return np.array(self.values[start_round - 1 : stop])

    def stream(self):
        pos = [1]

        def draw(count):
            out = self.valuations(pos[0], count)
            pos[0] += count
            return out

        return draw

    def describe(self):
        return {"kind": self.kind, "length": len(self.values)}


# ---------------------------------------------------------------------------
# concave family


@dataclass(frozen=True)
class ConcaveFamilyParams:
    lam: float
    epsilon: float = 0.0

    def __post_init__(self):
        _check_lambda(self.lam)
        if not abs(self.epsilon) < self.eps_bar:
            raise ValueError(f"|epsilon| must be below {self.eps_bar:.6g}, got {self.epsilon!r}")

    @property
    def h_bar(self) -> float:
        return (1 - math.sqrt(1 - self.lam)) / 2

    @property
    def eta_bar(self) -> float:
        h, lam = self.h_bar, self.lam
        return 1 / (h * (1 - h) ** (1 - lam) * (1 - lam))

    @property
    def eps_bar(self) -> float:
        return 0.5 * min(self.eta_bar, 2 / 3 * 2 ** (-self.lam))

    @property
    def c_bar(self) -> float:
        lam, h = self.lam, self.h_bar
        middle = (2 ** (1 - lam) - (1 - h) ** (lam - 1)) / (1 - lam)
        return 1 / (2 ** (2 - lam) / 8 + middle + self.eta_bar * h)

    @property
    def slope(self) -> float:
        """Coefficient of the density's linear piece on ``[0, 1/2)``."""
        return 2 ** (2 - self.lam) - 8 * self.h_bar * self.epsilon


def concave_density(x, params: ConcaveFamilyParams):
    """Density of the concave family at ``x``."""
    x = np.asarray(x, dtype=float)
    lam, h, cb = params.lam, params.h_bar, params.c_bar
    with np.errstate(divide="ignore"):
        middle = np.where(x > 0, x, 1.0) ** (lam - 2)
    out = cb * np.where(
        x < 0.5,
        params.slope * x,
        np.where(x <= 1 - h, middle, params.eta_bar + params.epsilon),
    )
    out = np.where((x < 0) | (x > 1), 0.0, out)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class ConcaveEnv(Environment):
    lam: float = 0.75
    epsilon: float = 0.0
    seed: int = 0
    kind = "concave_f"

    @property
    def params(self) -> ConcaveFamilyParams:
        return ConcaveFamilyParams(self.lam, self.epsilon)

    def __post_init__(self):
        p = self.params
        lam, h, cb = p.lam, p.h_bar, p.c_bar
        f1 = cb * p.slope / 8
        f2 = f1 + cb * (2 ** (1 - lam) - (1 - h) ** (lam - 1)) / (1 - lam)
        object.__setattr__(self, "_breaks", (f1, f2))

    def density(self, x):
        return concave_density(x, self.params)

    def cdf(self, x):
        p = self.params
        lam, h, cb = p.lam, p.h_bar, p.c_bar
        x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
        first = cb * p.slope * np.minimum(x, 0.5) ** 2 / 2
        t = np.clip(x, 0.5, 1 - h)
        second = cb * (t ** (lam - 1) - 0.5 ** (lam - 1)) / (lam - 1)
        third = cb * (p.eta_bar + p.epsilon) * (np.clip(x, 1 - h, 1.0) - (1 - h))
        out = first + second + third
        return out if out.ndim else float(out)

    def from_uniform(self, u):
        p = self.params
        lam, h, cb = p.lam, p.h_bar, p.c_bar
        f1, f2 = self._breaks
        u = np.asarray(u, dtype=float)
        first = np.sqrt(2 * np.minimum(u, f1) / (cb * p.slope))
        inner = 2 ** (1 - lam) - (1 - lam) * (np.clip(u, f1, f2) - f1) / cb
        second = inner ** (1 / (lam - 1))
        third = 1 - h + (np.maximum(u, f2) - f2) / (cb * (p.eta_bar + p.epsilon))
        out = np.where(u < f1, first, np.where(u < f2, second, third))
        return np.clip(out, 0.0, 1.0)

    def surplus(self, x):
        """``E[max(v - x, 0)]``, piece by piece in closed form."""
        p = self.params
        lam, h, cb = p.lam, p.h_bar, p.c_bar
        x = np.asarray(x, dtype=float)

        def g1(t):
            return cb * p.slope * (t**3 / 3 - x * t**2 / 2)

        def g2(t):
            return cb * (t**lam / lam - x * t ** (lam - 1) / (lam - 1))

        def g3(t):
            return cb * (p.eta_bar + p.epsilon) * (t - x) ** 2 / 2

        lo1 = np.clip(x, 0.0, 0.5)
        lo2 = np.clip(x, 0.5, 1 - h)
        lo3 = np.clip(x, 1 - h, 1.0)
        return (g1(0.5) - g1(lo1)) + (g2(1 - h) - g2(lo2)) + (g3(1.0) - g3(lo3))

    def expected_welfare(self, x, lam):
        x = np.asarray(x, dtype=float)
        out = x * (1 - self.cdf(x)) + lam * self.surplus(x)
        return out if out.ndim else float(out)

    def describe(self):
        return {"kind": self.kind, "lam": self.lam, "epsilon": self.epsilon}


# ---------------------------------------------------------------------------
# sequences


def load_sequence(path) -> FixedSequenceEnv:
    """Read one valuation per line; blank lines and ``#`` comments are skipped."""
    path = Path(path)
    values = []
    with path.open() as fh:
        for lineno, line in enumerate(fh, 1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            try:
                v = float(text)
            except ValueError:
                raise ValueError(f"{path}:{lineno}: not a number: {text!r}") from None
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{path}:{lineno}: valuation {v!r} outside [0, 1]")
            values.append(v)
    if not values:
        raise ValueError(f"{path}: no valuations")
    return FixedSequenceEnv(tuple(values))


def frozen_sequence(env: Environment, length: int) -> FixedSequenceEnv:
    """Freeze the first ``length`` draws of a stochastic environment."""
    return FixedSequenceEnv(tuple(env.valuations(1, length).tolist()))


def switching_sequence(length: int, low: float = 0.3, high: float = 0.9, period: Optional[int] = None) -> FixedSequenceEnv:
    """Valuations that alternate between two levels in blocks of ``period`` rounds."""
    period = period or max(length // 2, 1)
    blocks = (np.arange(length) // period) % 2
    return FixedSequenceEnv(tuple(np.where(blocks == 0, low, high).tolist()))


# ---------------------------------------------------------------------------
# identity checks for the four-point family


@dataclass
class IdentityCheck:
    name: str
    lhs: float
    rhs: float
    passed: bool

    @property
    def error(self) -> float:
        return abs(self.lhs - self.rhs)


@dataclass
class IdentityReport:
    lam: float
    epsilon: float
    checks: List[IdentityCheck]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


def _max_on(lo: float, hi: float, fn, include_lo: bool, n: int = 2001) -> float:
    grid = np.linspace(lo, hi, n)
    if not include_lo:
        grid = grid[1:]
    return float(np.max(fn(grid)))


def check_mu_identities(lam: float, epsilon: float, tol: float = IDENTITY_TOL, c1_shift: float = 0.0) -> IdentityReport:
    """Evaluate the algebraic facts about the four-point family at ``(lam, epsilon)``.

    Welfare is computed through :func:`expected_welfare_discrete`.  Region
    maxima are brute-forced on a fine grid that contains the claimed
    maximizers.  ``c1_shift`` perturbs ``c1`` and exists so the failure path
    can be exercised.
    """
    c1, c2, _, C = lower_bound_proof_constants(lam)
    c1 += c1_shift

    def W(x, eps=epsilon):
        return expected_welfare_discrete(x, mu_epsilon_support(lam, eps), lam)

    checks = []
    lhs = W(1.0) - W(0.25)
    checks.append(IdentityCheck("W(1) - W(1/4) = c1*eps", lhs, c1 * epsilon, abs(lhs - c1 * epsilon) <= tol))
    lhs = W(0.25, 1.0) - W(0.75, -1.0)
    checks.append(IdentityCheck("W^1(1/4) - W^-1(3/4) = c2", lhs, c2, abs(lhs - c2) <= tol))
    for name, lo, hi, include_lo, at in (
        ("max over (1/2,3/4] at 3/4", 0.5, 0.75, False, 0.75),
        ("max over [0,1/2] at 1/4", 0.0, 0.5, True, 0.25),
        ("max over (3/4,1] at 1", 0.75, 1.0, False, 1.0),
    ):
        best = _max_on(lo, hi, W, include_lo)
        checks.append(IdentityCheck(name, best, W(at), best <= W(at) + tol))
    checks.append(IdentityCheck("C > 0", C, 0.0, C > 0))
    return IdentityReport(lam, epsilon, checks)


def check_mu_extremes(lam: float, n_eps: int = 201, tol: float = IDENTITY_TOL) -> List[IdentityCheck]:
    """Extremes over epsilon: the worst optimum candidate and the best middle value."""
    eps_grid = np.linspace(-1.0, 1.0, n_eps)
    low = min(
        min(expected_welfare_discrete(0.25, mu_epsilon_support(lam, e), lam),
            expected_welfare_discrete(1.0, mu_epsilon_support(lam, e), lam))
        for e in eps_grid
    )
    target_low = expected_welfare_discrete(0.25, mu_epsilon_support(lam, 1.0), lam)
    mid = np.linspace(0.5, 0.75, 501)[1:]
    high = max(float(np.max(expected_welfare_discrete(mid, mu_epsilon_support(lam, e), lam))) for e in eps_grid)
    target_high = expected_welfare_discrete(0.75, mu_epsilon_support(lam, -1.0), lam)
    return [
        IdentityCheck("min_eps min(W(1/4), W(1)) = W^1(1/4)", low, target_low, abs(low - target_low) <= tol),
        IdentityCheck("max_eps max_(1/2,3/4] W = W^-1(3/4)", high, target_high, abs(high - target_high) <= tol),
    ]
