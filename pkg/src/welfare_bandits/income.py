"""Tempered Exp3 for piecewise-constant income tax schedules.

An individual with wage ``w`` and participation cost ``v`` works iff
``v <= w (1 - x)`` where ``x`` is the tax rate of their wage bracket.  Each
bracket runs its own tempered exponential-weights distribution over the rate
grid, and one uniform draw per round selects the rate in every bracket by
inverse CDF, so the chosen arms are comonotone across brackets.  The wage is
observed only when the individual works.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Tuple

import numpy as np

from . import _kernels, rng
from .envs import Environment, UniformEnv
from .exp3 import E_MINUS_2
from .welfare import policy_grid


def _as_grid(grid) -> np.ndarray:
    g = np.asarray(grid, dtype=float)
    if g.ndim != 1 or len(g) == 0 or g[0] != 0.0:
        raise ValueError("wage grid must start at 0")
    if np.any(np.diff(g) <= 0) or g[-1] > 1.0:
        raise ValueError("wage grid must be strictly increasing within [0, 1]")
    return g


def bracket_index(w, grid) -> np.ndarray:
    """Index of the largest grid point not above ``w``."""
    g = _as_grid(grid)
    return np.searchsorted(g, np.asarray(w, dtype=float), side="right") - 1


def bracket_floor(w, grid):
    """Round a wage down to its bracket's grid point."""
    out = _as_grid(grid)[bracket_index(w, grid)]
    return out if np.ndim(out) else float(out)


def labor_supply(w, v, x):
    """``1(v <= w (1 - x))``."""
    out = np.asarray(v) <= np.asarray(w) * (1.0 - np.asarray(x))
    return out.astype(np.int64) if out.ndim else int(out)


def income_social_welfare(x, w, v, omega):
    """Revenue ``x w y`` plus ``omega`` times the worker's surplus ``max(w (1 - x) - v, 0)``.

    ``x`` and ``omega`` are the rate and weight of the individual's bracket.
    """
    x, w, v = (np.asarray(a, dtype=float) for a in (x, w, v))
    net = w * (1.0 - x)
    out = np.where(v <= net, x * w, 0.0) + omega * np.maximum(net - v, 0.0)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class IncomeConfig:
    K: int
    gamma: float
    eta: float
    wage_grid: Tuple[float, ...] = (0.0,)
    omega: Tuple[float, ...] = (0.5,)

    def __post_init__(self):
        if int(self.K) != self.K or self.K < 1:
            raise ValueError(f"K must be a positive integer, got {self.K!r}")
        object.__setattr__(self, "K", int(self.K))
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in (0, 1], got {self.gamma!r}")
        if not self.eta > 0.0:
            raise ValueError(f"eta must be positive, got {self.eta!r}")
        object.__setattr__(self, "wage_grid", tuple(float(w) for w in _as_grid(self.wage_grid)))
        omega = tuple(float(o) for o in self.omega)
        if len(omega) != len(self.wage_grid):
            raise ValueError("omega needs one weight per wage bracket")
        if any(not 0.0 <= o <= 1.0 for o in omega):
            raise ValueError("omega weights must lie in [0, 1]")
        object.__setattr__(self, "omega", omega)

    @property
    def H(self) -> int:
        return len(self.wage_grid)

    @property
    def grid(self) -> np.ndarray:
        return policy_grid(self.K)

    @property
    def in_hypothesis(self) -> bool:
        return (self.K + 1) * self.eta < self.gamma


@dataclass
class IncomeExp3State:
    sw_hat: np.ndarray
    round: int = 0

    @classmethod
    def fresh(cls, config: IncomeConfig) -> "IncomeExp3State":
        return cls(np.zeros((config.H, config.K + 1)))


def bracket_probabilities(state: IncomeExp3State, config: IncomeConfig) -> np.ndarray:
    """``H x (K + 1)`` table of per-bracket sampling distributions."""
    out = np.empty_like(state.sw_hat)
    for h in range(config.H):
        _kernels.tempered_softmax(state.sw_hat[h], config.gamma, config.eta, out[h])
    return out


def coupled_schedule(probs: np.ndarray, A: float) -> np.ndarray:
    """Arm index per bracket chosen by the shared draw ``A``."""
    return np.array([_kernels.inverse_cdf(row, float(A)) for row in probs])


def income_step(state: IncomeExp3State, config: IncomeConfig, A: float, w: float, v: float):
    """One round; ``state`` is updated in place.

    Returns
    -------
    (schedule, y, state)
        ``schedule`` holds the chosen arm index of every bracket.
    """
    probs = bracket_probabilities(state, config)
    schedule = coupled_schedule(probs, A)
    b = int(bracket_index(w, config.wage_grid))
    k = int(schedule[b])
    x = config.grid[k]
    y = int(v <= w * (1.0 - x))
    if y:
        d = w / probs[b, k]
        _kernels.welfare_update(state.sw_hat[b], k, x, d, config.omega[b] / config.K * d)
    state.round += 1
    return schedule, y, state


# ---------------------------------------------------------------------------
# wage environments


class WageEnvironment:
    seed: int

    def pairs(self, T: int) -> Tuple[np.ndarray, np.ndarray]:
        """Wages and participation costs of rounds ``1..T``."""
        raise NotImplementedError

    def with_seed(self, seed: int):
        return replace(self, seed=int(seed))


@dataclass(frozen=True)
class ProductWageEnv(WageEnvironment):
    """Wages and costs drawn independently from two valuation environments."""

    wage: Environment = field(default_factory=UniformEnv)
    cost: Environment = field(default_factory=UniformEnv)
    seed: int = 0
    kind = "product"

    def pairs(self, T):
        w = self.wage.from_uniform(rng.uniforms(self.seed, rng.WAGES, 0, T))
        v = self.cost.with_seed(self.seed).valuations(1, T) if T else np.empty(0)
        return w, v


@dataclass(frozen=True)
class UnitWageEnv(WageEnvironment):
    """Wage one and cost ``1 - v`` for ``v`` from a willingness-to-pay environment.

    Working iff ``1 - v <= 1 - x``, i.e. iff ``x <= v``: the single-good model.
    """

    base: Environment = field(default_factory=UniformEnv)
    seed: int = 0
    kind = "unit_wage"

    def pairs(self, T):
        v = self.base.with_seed(self.seed).valuations(1, T) if T else np.empty(0)
        return np.ones(T), 1.0 - v


@dataclass(frozen=True)
class FixedWageSequence(WageEnvironment):
    wages: Tuple[float, ...] = ()
    costs: Tuple[float, ...] = ()
    seed: int = 0
    kind = "fixed_pairs"

    def __post_init__(self):
        if len(self.wages) != len(self.costs):
            raise ValueError("wages and costs differ in length")
        for name, seq in (("wage", self.wages), ("cost", self.costs)):
            for i, a in enumerate(seq):
                if not 0.0 <= a <= 1.0:
                    raise ValueError(f"{name} {a!r} at position {i + 1} outside [0, 1]")

    def pairs(self, T):
        if T > len(self.wages):
            raise IndexError(f"round {T} beyond fixed sequence of length {len(self.wages)}")
        return np.array(self.wages[:T], dtype=float), np.array(self.costs[:T], dtype=float)


@dataclass
class IncomeTrajectory:
    arms: np.ndarray
    brackets: np.ndarray
    policies: np.ndarray
    outcomes: np.ndarray
    wages: np.ndarray
    costs: np.ndarray
    welfare: np.ndarray
    sw_hat: np.ndarray = field(repr=False)


def replay_income(config: IncomeConfig, draws, wages, costs) -> IncomeTrajectory:
    draws = np.ascontiguousarray(draws, dtype=float)
    wages = np.ascontiguousarray(wages, dtype=float)
    costs = np.ascontiguousarray(costs, dtype=float)
    T = len(draws)
    b = np.ascontiguousarray(bracket_index(wages, config.wage_grid), dtype=np.int64)
    weights = np.asarray(config.omega)[b]
    arms = np.empty(T, dtype=np.int64)
    outcomes = np.empty(T, dtype=np.int8)
    S = np.zeros((config.H, config.K + 1))
    _kernels.income_episode(config.grid, config.gamma, config.eta, draws, wages, costs, b, weights, S, arms, outcomes)
    x = config.grid[arms]
    sw = income_social_welfare(x, wages, costs, weights)
    return IncomeTrajectory(arms, b, x, outcomes, wages, costs, np.asarray(sw, dtype=float), S)


def run_income_episode(config: IncomeConfig, env: WageEnvironment, T: int, seed: int) -> IncomeTrajectory:
    draws = rng.uniforms(seed, rng.POLICY, 0, T)
    wages, costs = env.with_seed(seed).pairs(T)
    return replay_income(config, draws, wages, costs)


def income_regret_bound(K: int, gamma: float, eta: float, H: int, T: float, check_hypothesis: bool = True) -> float:
    """Upper bound on expected regret of the income-tax algorithm with ``H`` brackets."""
    if check_hypothesis and not (K + 1) * eta < gamma:
        raise ValueError(f"(K+1)*eta = {(K + 1) * eta:.4g} is not below gamma = {gamma:.4g}")
    per_round = gamma + eta * E_MINUS_2 * (K + 1) / K * ((2 * K + 1) / 6 + 1 / gamma) + 1 / K
    return per_round * T + H * math.log(K + 1) / eta


def income_tuning(T: int, H: int, c1: float = 1.0, c2: float = 0.5, c3: float = 0.25) -> Tuple[int, float, float]:
    """``K = c1 (T/H)^(1/3)``, ``gamma = c2/(K+1)``, ``eta = c3/(K+1)^2``; ``c3 < c2`` keeps the hypothesis."""
    K = max(1, round(c1 * (T / H) ** (1 / 3)))
    return K, c2 / (K + 1), c3 / (K + 1) ** 2
