"""Tempered Exp3 over a discretized policy grid.

Exponential weights with an enlarged uniform exploration share ``gamma``.
Only the demand at the chosen arm is observed, but because private surplus
is the integral of demand above the policy, one importance-weighted demand
observation updates the welfare estimate of every arm below the chosen one.

Baselines: ``gamma = 1`` plays the grid uniformly at random, and ``lam = 0``
is Exp3 on revenue, i.e. posted-price learning
(:func:`run_monopoly_episode`).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Tuple

import numpy as np

from . import _kernels, rng
from .envs import Environment
from .welfare import policy_grid, social_welfare

E_MINUS_2 = math.e - 2.0


@dataclass(frozen=True)
class Exp3Config:
    """Grid size ``K``, exploration ``gamma``, learning rate ``eta`` and weight ``lam``."""

    K: int
    gamma: float
    eta: float
    lam: float

    def __post_init__(self):
        if int(self.K) != self.K or self.K < 1:
            raise ValueError(f"K must be a positive integer, got {self.K!r}")
        object.__setattr__(self, "K", int(self.K))
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in (0, 1], got {self.gamma!r}")
        if not self.eta > 0.0:
            raise ValueError(f"eta must be positive, got {self.eta!r}")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lam must lie in [0, 1], got {self.lam!r}")

    @property
    def grid(self) -> np.ndarray:
        return policy_grid(self.K)

    @property
    def in_hypothesis(self) -> bool:
        """Whether ``(K + 1) eta < gamma``, the condition of the regret bound."""
        return (self.K + 1) * self.eta < self.gamma


@dataclass
class Exp3State:
    """Cumulative importance-weighted demand and welfare estimates per arm."""

    dem_hat: np.ndarray
    sw_hat: np.ndarray
    round: int = 0

    @classmethod
    def fresh(cls, K: int) -> "Exp3State":
        return cls(np.zeros(K + 1), np.zeros(K + 1))

    def consistency_gap(self, config: Exp3Config) -> float:
        """Largest deviation of ``sw_hat`` from its definition through ``dem_hat``."""
        above = np.concatenate([np.cumsum(self.dem_hat[::-1])[::-1][1:], [0.0]])
        implied = config.grid * self.dem_hat + config.lam / config.K * above
        return float(np.max(np.abs(implied - self.sw_hat)))


def assignment_probabilities(state: Exp3State, config: Exp3Config) -> np.ndarray:
    """Sampling distribution over the ``K + 1`` arms."""
    p = np.empty(config.K + 1)
    _kernels.tempered_softmax(state.sw_hat, config.gamma, config.eta, p)
    return p


def select_arm(p: np.ndarray, draw: float) -> int:
    """Inverse-CDF choice: the largest ``k`` whose left cumulative mass is ``<= draw``."""
    return int(_kernels.inverse_cdf(np.asarray(p, dtype=float), float(draw)))


def step(state: Exp3State, config: Exp3Config, draw: float, valuation: float):
    """One round: choose an arm with ``draw``, observe demand, update ``state`` in place.

    Returns
    -------
    (k, y, state)
    """
    p = assignment_probabilities(state, config)
    k = select_arm(p, draw)
    x = config.grid[k]
    y = int(x <= valuation)
    if y:
        d = 1.0 / p[k]
        state.dem_hat[k] += d
        _kernels.welfare_update(state.sw_hat, k, x, d, config.lam / config.K * d)
    state.round += 1
    return k, y, state


@dataclass
class Trajectory:
    """Per-round record of one episode."""

    arms: np.ndarray
    policies: np.ndarray
    outcomes: np.ndarray
    valuations: np.ndarray
    welfare: np.ndarray
    sw_hat: np.ndarray = field(repr=False)

    def __len__(self):
        return len(self.arms)


def episode_inputs(env: Environment, T: int, seed: int) -> Tuple[np.ndarray, np.ndarray]:
    """Policy draws and valuations of one seeded episode."""
    draws = rng.uniforms(seed, rng.POLICY, 0, T)
    values = env.with_seed(seed).valuations(1, T) if T else np.empty(0)
    return draws, values


def _trajectory(config, arms, outcomes, values, S) -> Trajectory:
    x = config.grid[arms]
    return Trajectory(arms, x, outcomes, values, social_welfare(x, values, config.lam), S)


def run_episode(config: Exp3Config, env: Environment, T: int, seed: int) -> Trajectory:
    """Play ``T`` rounds of tempered Exp3 against ``env``.

    Valuations come from ``env`` reseeded with ``seed`` and arm draws from the
    policy stream of ``seed``.  Realized welfare is evaluated against the
    true valuations, which the algorithm itself only sees through demand.
    """
    draws, values = episode_inputs(env, T, seed)
    return replay(config, draws, values)


def replay(config: Exp3Config, draws, values) -> Trajectory:
    """Run the algorithm on explicit arm draws and valuations."""
    draws = np.ascontiguousarray(draws, dtype=float)
    values = np.ascontiguousarray(values, dtype=float)
    arms = np.empty(len(draws), dtype=np.int64)
    outcomes = np.empty(len(draws), dtype=np.int8)
    S = np.zeros(config.K + 1)
    _kernels.exp3_episode(config.grid, config.gamma, config.eta, config.lam, draws, values, S, arms, outcomes)
    return _trajectory(config, arms, outcomes, values, S)


def run_monopoly_episode(K: int, gamma: float, eta: float, env: Environment, T: int, seed: int) -> Trajectory:
    """Exp3 on importance-weighted revenue; welfare is reported at zero weight."""
    config = Exp3Config(K, gamma, eta, 0.0)
    draws, values = episode_inputs(env, T, seed)
    arms = np.empty(T, dtype=np.int64)
    outcomes = np.empty(T, dtype=np.int8)
    R = np.zeros(K + 1)
    _kernels.monopoly_episode(config.grid, gamma, eta, draws, values, R, arms, outcomes)
    return _trajectory(config, arms, outcomes, values, R)


def regret_bound(config: Exp3Config, T: float, check_hypothesis: bool = True) -> float:
    """Upper bound on expected adversarial regret after ``T`` rounds.

    Raises
    ------
    ValueError
        If ``check_hypothesis`` and ``(K + 1) eta >= gamma``.
    """
    if check_hypothesis and not config.in_hypothesis:
        raise ValueError(
            f"(K+1)*eta = {(config.K + 1) * config.eta:.4g} is not below gamma = {config.gamma:.4g}"
        )
    K, g, eta, lam = config.K, config.gamma, config.eta, config.lam
    per_round = g + eta * E_MINUS_2 * (K + 1) / K * ((2 * K + 1) / 6 + lam**2 / g) + lam / K
    return per_round * T + math.log(K + 1) / eta


def optimized_tuning(lam: float, T: int) -> Tuple[int, float, float]:
    """``(K, gamma, eta)`` minimizing the leading terms of the regret bound at horizon ``T``.

    ``gamma`` is clamped to 0.5 with a warning if the formula gives a value
    of one or more.
    """
    if T < 2:
        raise ValueError("T must be at least 2")
    if not 0.0 < lam < 1.0:
        raise ValueError(f"lam must lie in (0, 1), got {lam!r}")
    a = (9 * E_MINUS_2) ** (1 / 3) * (math.sqrt(lam / 3) + lam) ** (2 / 3)
    ratio = math.log(T) / T
    eta = ratio ** (2 / 3) / a
    gamma = lam * math.sqrt(E_MINUS_2 / a) * ratio ** (1 / 3)
    K = max(1, round(math.sqrt(3 * lam * a / E_MINUS_2) * ratio ** (-1 / 3)))
    if gamma >= 1.0:
        warnings.warn(f"tuned gamma {gamma:.3g} >= 1 at T={T}; clamped to 0.5", RuntimeWarning)
        gamma = 0.5
    return K, gamma, eta


def grid_welfare(config: Exp3Config, env: Environment) -> np.ndarray:
    """Expected welfare of every grid arm under a stochastic ``env``."""
    return np.asarray(env.expected_welfare(config.grid, config.lam), dtype=float)


def discretized_welfare(config: Exp3Config, values) -> np.ndarray:
    """Cumulative welfare of every arm with the surplus integral taken as a grid sum.

    Arm ``k`` collects ``x_k 1(x_k <= v) + (lam / K) #{j > k : x_j <= v}`` per
    valuation ``v``; this is the expectation of the welfare estimates.
    """
    x = config.grid
    buys = (x[:, None] <= np.asarray(values, dtype=float)[None, :]).sum(axis=1)
    above = np.concatenate([np.cumsum(buys[::-1])[::-1][1:], [0]])
    return x * buys + config.lam / config.K * above
