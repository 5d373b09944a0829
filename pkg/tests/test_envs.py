import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats
from scipy.integrate import quad

from welfare_bandits.envs import (ConcaveEnv, ConcaveFamilyParams, DiscreteEnv, FixedSequenceEnv,
                                  FourPointMuEnv, UniformEnv, check_mu_extremes, check_mu_identities,
                                  concave_density, draw_valuation, frozen_sequence, load_sequence,
                                  lower_bound_proof_constants, mu_epsilon_constants, mu_epsilon_support,
                                  switching_sequence)
from welfare_bandits.welfare import social_welfare

lams = st.floats(0.01, 0.99)


def _exact_ab(lam):
    lam = Fraction(lam)
    a = (1 - lam) * (136 - 99 * lam) / (2 * (4 - 3 * lam) * (24 - 17 * lam))
    b = (1 - lam) / (2 * (24 - 17 * lam))
    return a, b


def test_mu_constants_examples():
    a, b = mu_epsilon_constants(0.95)
    assert a == pytest.approx(0.116173, abs=1e-6)
    assert b == pytest.approx(0.00318471, abs=1e-8)
    a, b = mu_epsilon_constants(0.5)
    assert a == pytest.approx(43.25 / 77.5, abs=1e-12)
    assert b == pytest.approx(0.5 / 31, abs=1e-12)
    for lam in (0.05, 0.5, 0.95):
        ea, eb = _exact_ab(lam)
        a, b = mu_epsilon_constants(lam)
        assert a == pytest.approx(float(ea), rel=1e-14) and b == pytest.approx(float(eb), rel=1e-14)


def test_mu_constants_reject_lambda():
    for lam in (0.0, 1.0, -0.2):
        with pytest.raises(ValueError):
            mu_epsilon_constants(lam)


def test_proof_constants_examples():
    c1, c2, c3, C = lower_bound_proof_constants(0.95)
    assert c2 == pytest.approx(0.125 * 0.05 / 1.15, rel=1e-12)
    assert c1 == pytest.approx(0.2375 * mu_epsilon_constants(0.95)[1], rel=1e-12)
    assert c1 == pytest.approx(7.5637e-4, abs=1e-8)


@given(lams)
def test_proof_constant_C_positive_and_minimum(lam):
    c1, c2, c3, C = lower_bound_proof_constants(lam)
    terms = [c1**2 * c3**2 / c2, c2 / 2, (c1**2 * c2 / c3**2) ** (1 / 3) / 16]
    assert C > 0 and C == min(terms)


@given(lams, st.floats(-1.0, 1.0))
def test_mu_masses_valid(lam, eps):
    a, b = mu_epsilon_constants(lam)
    assert a > 0 and b > 0 and 1 - a - 2 * b > 0
    masses = [m for _, m in mu_epsilon_support(lam, eps)]
    assert min(masses) >= 0
    assert abs(sum(masses) - 1) <= 1e-12


def test_draw_valuation_examples():
    assert draw_valuation(FixedSequenceEnv((0.3, 0.9)), 2) == 0.9
    with pytest.raises(IndexError):
        draw_valuation(FixedSequenceEnv((0.3, 0.9)), 3)
    env = FourPointMuEnv(lam=0.95, epsilon=1.0, seed=4)
    vals = env.valuations(1, 20000)
    assert set(np.unique(vals)) <= {0.25, 0.5, 1.0}
    assert UniformEnv(seed=9).valuations(5, 1)[0] == draw_valuation(UniformEnv(seed=9), 5)


def test_discrete_sampler_frequencies():
    env = DiscreteEnv(((0.2, 0.25), (0.6, 0.0), (0.9, 0.75)), seed=1)
    v = env.valuations(1, 200000)
    p = np.mean(v == 0.2)
    assert abs(p - 0.25) < 3 * math.sqrt(0.25 * 0.75 / len(v))
    assert not np.any(v == 0.6)


@given(st.integers(0, 2**32), st.integers(1, 1000))
def test_stream_determinism(seed, start):
    env = ConcaveEnv(lam=0.6, epsilon=0.01, seed=seed)
    assert np.array_equal(env.valuations(start, 5), env.valuations(start, 5))
    assert np.array_equal(env.valuations(start, 5)[1:], env.valuations(start + 1, 4))


def test_concave_params_example():
    p = ConcaveFamilyParams(0.75)
    assert p.h_bar == pytest.approx(0.25)
    # independent evaluation of the defining expression
    assert p.eta_bar == pytest.approx(1 / (0.25 * 0.75**0.25 * 0.25), rel=1e-14)
    assert p.eta_bar == pytest.approx(17.192, abs=2e-3)
    assert 0 < p.h_bar < 0.5


@pytest.mark.parametrize("lam", [0.1, 0.5, 0.75, 0.95])
@pytest.mark.parametrize("frac", [-0.9, 0.0, 0.6])
def test_concave_density_integrates_to_one(lam, frac):
    eps = frac * ConcaveFamilyParams(lam).eps_bar
    p = ConcaveFamilyParams(lam, eps)
    total = quad(lambda x: concave_density(x, p), 0, 1, points=[0.5, 1 - p.h_bar], epsabs=1e-13)[0]
    assert abs(total - 1) < 1e-9


def test_concave_rejects_large_epsilon():
    bar = ConcaveFamilyParams(0.5).eps_bar
    with pytest.raises(ValueError):
        ConcaveFamilyParams(0.5, bar)
    with pytest.raises(ValueError):
        ConcaveEnv(lam=0.5, epsilon=-bar)


@pytest.mark.parametrize("lam,eps", [(0.75, 0.1), (0.3, -0.05), (0.9, 0.0)])
def test_concave_cdf_and_welfare_match_quadrature(lam, eps):
    env = ConcaveEnv(lam=lam, epsilon=eps)
    p = env.params
    f = lambda t: concave_density(t, p)
    for x in (0.0, 0.2, 0.5, 0.61, 1 - p.h_bar, 0.9, 1.0):
        F = quad(f, 0, x, points=[v for v in (0.5, 1 - p.h_bar) if v < x] or None)[0] if x > 0 else 0.0
        assert env.cdf(x) == pytest.approx(F, abs=1e-11)
        surplus = quad(lambda t: max(t - x, 0) * f(t), x, 1,
                       points=[v for v in (0.5, 1 - p.h_bar) if x < v < 1] or None)[0] if x < 1 else 0.0
        assert env.expected_welfare(x, lam) == pytest.approx(x * (1 - F) + lam * surplus, abs=1e-10)


@pytest.mark.parametrize("lam", [0.2, 0.6, 0.75, 0.95])
@pytest.mark.parametrize("frac", [-0.5, -0.1, 0.1, 0.5])
def test_concave_welfare_shape(lam, frac):
    p0 = ConcaveFamilyParams(lam)
    eps = frac * p0.eps_bar
    env = ConcaveEnv(lam=lam, epsilon=eps)
    p = env.params
    xs = np.linspace(0, 1, 1000)
    W = env.expected_welfare(xs, lam)
    assert np.max(np.diff(W, 2)) <= 1e-9
    want = 1 - p.h_bar if eps > 0 else 0.5
    fine = np.linspace(0, 1, 200001)
    assert abs(fine[np.argmax(env.expected_welfare(fine, lam))] - want) <= 1e-5
    mid = np.linspace(0.5, 1 - p.h_bar, 40)
    slope = np.diff(env.expected_welfare(mid, lam)) / np.diff(mid)
    assert np.allclose(slope, (1 - lam) * p.h_bar * eps * p.c_bar, atol=1e-10, rtol=0)


def test_concave_sampler_ks():
    env = ConcaveEnv(lam=0.75, epsilon=0.1, seed=12)
    v = env.valuations(1, 10**6)
    assert stats.kstest(v, env.cdf).statistic < 0.002


def test_mu_identity_examples():
    assert check_mu_identities(0.95, 1.0).passed
    rep = check_mu_identities(0.95, 0.0)
    assert rep.checks[0].lhs == pytest.approx(0.0, abs=1e-12)
    # brute-force expectation over the four atoms
    c1 = lower_bound_proof_constants(0.5)[0]
    sup = mu_epsilon_support(0.5, -0.7)
    W = lambda x: sum(m * social_welfare(x, v, 0.5) for v, m in sup)
    assert W(1.0) - W(0.25) == pytest.approx(-0.7 * c1, abs=1e-12)
    assert check_mu_identities(0.5, -0.7).passed


def test_mu_identity_grid():
    for lam in np.linspace(0.05, 0.95, 5):
        for eps in np.linspace(-1, 1, 5):
            rep = check_mu_identities(lam, eps)
            assert rep.passed, [c for c in rep.checks if not c.passed]
        assert all(c.passed for c in check_mu_extremes(lam))


def test_mu_identity_detects_perturbation():
    assert not check_mu_identities(0.95, 1.0, c1_shift=1e-8).passed


def test_optimum_flips_with_sign():
    from welfare_bandits.oracles import best_constant_stochastic

    assert best_constant_stochastic(FourPointMuEnv(lam=0.9, epsilon=0.3), 0.9)[0] == 1.0
    assert best_constant_stochastic(FourPointMuEnv(lam=0.9, epsilon=-0.3), 0.9)[0] == 0.25


def test_load_sequence(tmp_path):
    f = tmp_path / "seq.txt"
    f.write_text("# header\n0.25\n\n1\n0.5  # comment\n")
    assert load_sequence(f).values == (0.25, 1.0, 0.5)
    f.write_text("0.2\n1.5\n")
    with pytest.raises(ValueError, match=":2:"):
        load_sequence(f)
    f.write_text("0.2\nabc\n")
    with pytest.raises(ValueError, match=":2:"):
        load_sequence(f)


def test_sequence_constructors():
    base = FourPointMuEnv(lam=0.95, epsilon=0.5, seed=3)
    fz = frozen_sequence(base, 100)
    assert np.array_equal(fz.valuations(1, 100), base.valuations(1, 100))
    assert np.array_equal(fz.with_seed(99).valuations(1, 100), fz.valuations(1, 100))
    sw = switching_sequence(10, 0.3, 0.9, 3)
    assert sw.values == (0.3,) * 3 + (0.9,) * 3 + (0.3,) * 3 + (0.9,)
    with pytest.raises(ValueError):
        FixedSequenceEnv((0.1, 1.2))
