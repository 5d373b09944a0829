"""Best constant policies and regret.

For a fixed valuation sequence the cumulative welfare of a constant policy is
piecewise linear in the policy, continuous from the left and dropping just
above each valuation.  Its supremum is therefore attained on the finite set
``{0} U {v_i}``, which a sort and two suffix sums evaluate in ``O(n log n)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize_scalar

from . import _kernels
from .envs import ConcaveEnv, DiscreteEnv, Environment, UniformEnv
from .welfare import uniform_optimum

#: tolerance of the bounded scalar search on concave environments
SEARCH_XTOL = 1e-10


def _sorted_candidates(values, weights):
    """Candidate policies ascending with the cumulative welfare pieces at each."""
    order = np.argsort(values, kind="stable")
    v = values[order]
    w = weights[order]
    mass = np.cumsum(w[::-1])[::-1]
    surplus_base = np.cumsum((w * v)[::-1])[::-1]
    return v, mass, surplus_base


def weighted_best_constant(values, weights, lam: float) -> Tuple[float, float]:
    """Maximize ``sum_i w_i [x 1(x <= v_i) + lam max(v_i - x, 0)]`` over ``x`` in ``[0, 1]``.

    Entries with ``v_i < 0`` never buy and are ignored.  Ties go to the
    smallest maximizer.
    """
    values = np.asarray(values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    keep = values >= 0
    values, weights = values[keep], weights[keep]
    at_zero = lam * float(np.dot(weights, values))
    if len(values) == 0:
        return 0.0, 0.0
    v, mass, sb = _sorted_candidates(values, weights)
    # for a tie group, the first sorted position already sees the whole group
    W = v * mass + lam * (sb - v * mass)
    j = int(np.argmax(W))
    if at_zero >= W[j]:
        return 0.0, at_zero
    return float(v[j]), float(W[j])


def best_constant_adversarial(values: Sequence[float], lam: float) -> Tuple[float, float]:
    """Best constant policy in hindsight and its cumulative welfare."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValueError("need at least one valuation")
    return weighted_best_constant(values, np.ones_like(values), lam)


def prefix_best_welfare(values, lam: float, checkpoints, weights=None) -> np.ndarray:
    """``sup_x`` cumulative welfare over the first ``t`` entries for each checkpoint ``t``."""
    values = np.asarray(values, dtype=float)
    weights = np.ones_like(values) if weights is None else np.asarray(weights, dtype=float)
    weights = np.where(values >= 0, weights, 0.0)
    order = np.argsort(values, kind="stable")
    out = np.empty(len(checkpoints))
    _kernels.prefix_sup(values[order], weights[order], order.astype(np.int64),
                        np.asarray(checkpoints, dtype=np.int64), float(lam), out)
    return out


def best_constant_stochastic(env: Environment, lam: float) -> Tuple[float, float]:
    """Maximizer and maximum of expected welfare for an environment with known law."""
    if isinstance(env, UniformEnv):
        return uniform_optimum(lam)
    if isinstance(env, DiscreteEnv):
        cands = np.concatenate([[0.0], [v for v, m in env.support]])
        W = env.expected_welfare(cands, lam)
        j = int(np.argmax(W))
        return float(cands[j]), float(W[j])
    if isinstance(env, ConcaveEnv):
        res = minimize_scalar(lambda x: -env.expected_welfare(x, lam), bounds=(0.0, 1.0),
                              method="bounded", options={"xatol": SEARCH_XTOL})
        return float(res.x), float(-res.fun)
    raise TypeError(f"no known expected welfare for {type(env).__name__}")


@dataclass
class Benchmark:
    """Comparator for regret: ``kind`` is ``"adversarial"`` or ``"stochastic"``.

    Adversarial benchmarks hold the best cumulative welfare of the whole
    sequence; stochastic ones hold the optimal expected per-round welfare and
    the expected-welfare function of the environment.
    """

    kind: str
    value: float
    x_star: float
    expected: Optional[object] = None

    @classmethod
    def adversarial(cls, values, lam) -> "Benchmark":
        x, W = best_constant_adversarial(values, lam)
        return cls("adversarial", W, x)

    @classmethod
    def stochastic(cls, env: Environment, lam: float) -> "Benchmark":
        x, W = best_constant_stochastic(env, lam)
        return cls("stochastic", W, x, lambda p: env.expected_welfare(p, lam))


@dataclass
class RegretRecord:
    """Per-round records; cumulative columns are prefix sums."""

    rounds: np.ndarray
    policies: np.ndarray
    outcomes: np.ndarray
    welfare: np.ndarray
    cum_welfare: np.ndarray
    cum_regret: np.ndarray


def cumulative_regret(policies, outcomes, welfare, benchmark: Benchmark, valuations=None, lam=None) -> RegretRecord:
    """Regret after every round.

    Adversarial: welfare of the best constant policy of the full sequence,
    evaluated on the prefix, minus realized welfare.  Needs ``valuations``
    and ``lam``.  Stochastic: ``t W* - sum W(x_i)`` with expected welfare of
    the chosen policies.
    """
    policies = np.asarray(policies, dtype=float)
    welfare = np.asarray(welfare, dtype=float)
    if not len(policies) == len(outcomes) == len(welfare):
        raise ValueError("trajectory columns differ in length")
    t = np.arange(1, len(policies) + 1)
    cum = np.cumsum(welfare)
    if benchmark.kind == "stochastic":
        regret = t * benchmark.value - np.cumsum(benchmark.expected(policies))
    elif benchmark.kind == "adversarial":
        if valuations is None or lam is None:
            raise ValueError("adversarial regret needs the valuations and lam")
        valuations = np.asarray(valuations, dtype=float)
        if len(valuations) != len(policies):
            raise ValueError("valuations and trajectory differ in length")
        x = benchmark.x_star
        best = np.where(x <= valuations, x, 0.0) + lam * np.maximum(valuations - x, 0.0)
        regret = np.cumsum(best) - cum
    else:
        raise ValueError(f"unknown benchmark kind {benchmark.kind!r}")
    return RegretRecord(t, policies, np.asarray(outcomes), welfare, cum, regret)
