"""Per-round welfare model: demand, social welfare and expected welfare.

A tax rate (or price) ``x`` and a willingness to pay ``v`` both live in
``[0, 1]``.  The individual buys iff ``x <= v``; social welfare weights public
revenue by one and private surplus by ``lam``.

All functions accept scalars or numpy arrays and broadcast.
"""
from __future__ import annotations

from typing import Sequence, Tuple

import numpy as np

#: tolerance used when checking that a mass vector is normalized
MASS_TOL = 1e-12


def policy_grid(K: int) -> np.ndarray:
    """Return the ``K + 1`` evenly spaced policies ``0, 1/K, ..., 1``."""
    if int(K) != K or K < 1:
        raise ValueError(f"K must be a positive integer, got {K!r}")
    K = int(K)
    return np.arange(K + 1) / K


def demand(x, v):
    """Purchase indicator ``1(x <= v)``; ties buy."""
    out = np.asarray(x) <= np.asarray(v)
    return out.astype(np.int64) if out.ndim else int(out)


def social_welfare(x, v, lam):
    """Revenue ``x * 1(x <= v)`` plus ``lam`` times the surplus ``max(v - x, 0)``."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    out = np.where(x <= v, x, 0.0) + lam * np.maximum(v - x, 0.0)
    return out if out.ndim else float(out)


def expected_welfare_uniform(x, lam):
    """Expected welfare when ``v ~ Uniform[0, 1]``: ``x(1-x) + lam (1-x)^2 / 2``."""
    x = np.asarray(x, dtype=float)
    out = x * (1.0 - x) + lam * (1.0 - x) ** 2 / 2.0
    return out if out.ndim else float(out)


def uniform_optimum(lam: float) -> Tuple[float, float]:
    """Maximizer and maximum of :func:`expected_welfare_uniform`."""
    x_star = (1.0 - lam) / (2.0 - lam)
    return x_star, expected_welfare_uniform(x_star, lam)


def check_masses(support: Sequence[Tuple[float, float]]) -> Tuple[np.ndarray, np.ndarray]:
    """Split ``(value, mass)`` pairs into arrays, validating the masses.

    Raises
    ------
    ValueError
        If a value lies outside ``[0, 1]``, a mass is negative, or the masses
        do not sum to one within ``MASS_TOL``.
    """
    if len(support) == 0:
        raise ValueError("support must be nonempty")
    values = np.array([float(s[0]) for s in support])
    masses = np.array([float(s[1]) for s in support])
    if np.any(values < 0) or np.any(values > 1):
        raise ValueError("support values must lie in [0, 1]")
    if np.any(masses < 0):
        raise ValueError("masses must be nonnegative")
    total = masses.sum()
    if abs(total - 1.0) > MASS_TOL:
        raise ValueError(f"masses sum to {total!r}, not 1")
    return values, masses


def expected_welfare_discrete(x, support, lam):
    """Expected welfare for a finitely supported valuation distribution.

    ``x * P(v >= x) + lam * E[max(v - x, 0)]``.  The surplus term is the
    integral of the step-shaped demand curve and is evaluated exactly from
    the atoms.

    Parameters
    ----------
    x : float or array
        Policy or policies in ``[0, 1]``.
    support : sequence of (value, mass)
        Atoms of the distribution; masses must sum to one.
    lam : float
        Weight on private surplus.
    """
    values, masses = check_masses(support)
    x = np.asarray(x, dtype=float)
    xs = x[..., None]
    buys = (xs <= values) * masses
    revenue = xs[..., 0] * buys.sum(axis=-1)
    surplus = (np.maximum(values - xs, 0.0) * masses).sum(axis=-1)
    out = revenue + lam * surplus
    return out if out.ndim else float(out)


def one_sided_lipschitz_check(x, eps, v, lam) -> bool:
    """Whether ``W(x + eps) <= W(x) + eps`` for the single-round welfare ``W``."""
    if eps < 0 or x + eps > 1:
        raise ValueError("need eps >= 0 and x + eps <= 1")
    return bool(social_welfare(x + eps, v, lam) <= social_welfare(x, v, lam) + eps)
