"""Analytic identity suite behind the ``verify`` subcommand."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, List

import numpy as np
from scipy.integrate import quad

from .envs import (ConcaveEnv, UniformEnv, check_mu_extremes, check_mu_identities, concave_density,
                   lower_bound_proof_constants, mu_epsilon_support)
from .oracles import best_constant_adversarial, best_constant_stochastic
from .welfare import check_masses, expected_welfare_uniform, social_welfare

DEFAULT_LAMBDAS = (0.05, 0.25, 0.5, 0.75, 0.95)
DEFAULT_EPSILONS = (-1.0, -0.5, 0.0, 0.5, 1.0)


@dataclass
class Row:
    suite: str
    lam: float
    epsilon: float
    name: str
    value: float
    target: float
    passed: bool


def mu_rows(lam: float, eps: float, c1_shift: float = 0.0) -> List[Row]:
    rep = check_mu_identities(lam, eps, c1_shift=c1_shift)
    rows = [Row("four-point", lam, eps, c.name, c.lhs, c.rhs, c.passed) for c in rep.checks]
    try:
        check_masses(mu_epsilon_support(lam, eps))
        ok = True
    except ValueError:
        ok = False
    rows.append(Row("four-point", lam, eps, "masses form a distribution", float(ok), 1.0, ok))
    return rows


def concave_rows(lam: float, eps_fraction: float) -> List[Row]:
    """Checks on the concave family at ``epsilon = eps_fraction * eps_bar``."""
    base = ConcaveEnv(lam=lam)
    eps = eps_fraction * base.params.eps_bar
    env = ConcaveEnv(lam=lam, epsilon=eps)
    p = env.params
    rows = []
    total = quad(lambda x: concave_density(x, p), 0, 1, points=[0.5, 1 - p.h_bar], epsabs=1e-13)[0]
    rows.append(Row("concave", lam, eps, "density integrates to 1", total, 1.0, abs(total - 1) <= 1e-9))
    xs = np.linspace(0, 1, 1000)
    W = env.expected_welfare(xs, lam)
    d2 = float(np.max(np.diff(W, 2)))
    rows.append(Row("concave", lam, eps, "second differences <= 0", d2, 0.0, d2 <= 1e-9))
    mid = np.linspace(0.5, 1 - p.h_bar, 50)
    slopes = np.diff(env.expected_welfare(mid, lam)) / np.diff(mid)
    target = (1 - lam) * p.h_bar * eps * p.c_bar
    err = float(np.max(np.abs(slopes - target)))
    rows.append(Row("concave", lam, eps, "linear middle piece slope", float(slopes.mean()), target, err <= 1e-9))
    if eps != 0:
        x_star, _ = best_constant_stochastic(env, lam)
        want = 1 - p.h_bar if eps > 0 else 0.5
        rows.append(Row("concave", lam, eps, "maximizer location", x_star, want, abs(x_star - want) <= 1e-6))
    return rows


def oracle_rows(seed: int = 0, n_sequences: int = 5, length: int = 50, grid: int = 10**5) -> List[Row]:
    """Candidate-set best constant against a grid that contains every candidate."""
    gen = np.random.default_rng(seed)
    xs = np.arange(grid + 1) / grid
    rows = []
    for i in range(n_sequences):
        lam = float(gen.uniform(0.05, 0.95))
        values = gen.integers(0, grid + 1, size=length) / grid
        _, W = best_constant_adversarial(values, lam)
        brute = np.zeros_like(xs)
        for v in values:
            brute += social_welfare(xs, v, lam)
        b = float(brute.max())
        rows.append(Row("oracle", lam, 0.0, f"candidate sup = grid sup (sequence {i})", W, b, abs(W - b) <= 1e-9))
    lam = 0.7
    _, W_star = best_constant_stochastic(UniformEnv(), lam)
    g = float(expected_welfare_uniform(xs, lam).max())
    rows.append(Row("oracle", lam, 0.0, "uniform optimum >= grid max", W_star, g, W_star >= g - 1e-12))
    return rows


def run_suite(lambdas: Iterable[float] = DEFAULT_LAMBDAS, epsilons: Iterable[float] = DEFAULT_EPSILONS,
              c1_shift: float = 0.0) -> List[Row]:
    rows = []
    lambdas, epsilons = list(lambdas), list(epsilons)
    for lam in lambdas:
        for eps in epsilons:
            rows += mu_rows(lam, eps, c1_shift)
        for c in check_mu_extremes(lam):
            rows.append(Row("four-point", lam, float("nan"), c.name, c.lhs, c.rhs, c.passed))
        for frac in (-0.5, 0.5):
            rows += concave_rows(lam, frac)
    rows += oracle_rows()
    return rows


def constants_table(lam: float) -> dict:
    c1, c2, c3, C = lower_bound_proof_constants(lam)
    return {"c1": c1, "c2": c2, "c3": c3, "C": C}


def format_rows(rows: List[Row]) -> str:
    lines = [f"{'suite':<11} {'lambda':>6} {'eps':>8}  {'check':<42} {'value':>14} {'target':>14}  result"]
    for r in rows:
        lines.append(
            f"{r.suite:<11} {r.lam:>6.3f} {r.epsilon:>8.4f}  {r.name:<42} {r.value:>14.6e} {r.target:>14.6e}  "
            + ("pass" if r.passed else "FAIL")
        )
    return "\n".join(lines)
