import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rddp.model import RiskParams
from rddp.risk import (FiniteDistribution, avar_dual, avar_primal, avar_weights, rho,
                       worst_case)

UNIFORM4 = FiniteDistribution.uniform([1.0, 2.0, 3.0, 4.0])


def envelope_by_vertices(dist, alpha):
    """Max of E_q[Z] over the vertices of {0 <= q <= p/alpha, sum q = 1}.

    A vertex has every coordinate but one at a bound.
    """
    p, z = dist.probs, dist.values
    cap = p / alpha
    best = -np.inf
    k = p.size
    for free in range(k):
        others = [i for i in range(k) if i != free]
        for at_cap in itertools.product([False, True], repeat=len(others)):
            q = np.zeros(k)
            for i, hit in zip(others, at_cap):
                q[i] = cap[i] if hit else 0.0
            q[free] = 1.0 - q.sum()
            if -1e-12 <= q[free] <= cap[free] + 1e-12:
                best = max(best, float(q @ z))
    return best


def test_alpha_one_is_mean():
    assert avar_primal(UNIFORM4, 1.0) == pytest.approx(2.5, abs=1e-12)


@pytest.mark.parametrize("alpha, expected", [(0.5, 3.5), (0.3, 11.5 / 3), (0.7, 21.5 / 7)])
def test_uniform_examples(alpha, expected):
    assert envelope_by_vertices(UNIFORM4, alpha) == pytest.approx(expected, abs=1e-12)
    assert avar_primal(UNIFORM4, alpha) == pytest.approx(expected, abs=1e-12)
    assert avar_dual(UNIFORM4, alpha).value == pytest.approx(expected, abs=1e-9)


def test_dual_mu_is_a_quantile():
    res = avar_dual(UNIFORM4, 0.5)
    assert 2.0 - 1e-9 <= res.mu <= 3.0 + 1e-9
    assert np.all(res.xi >= -1e-12)


def test_single_atom():
    res = avar_dual(FiniteDistribution([1.0], [7.5]), 0.4)
    assert res.value == pytest.approx(7.5)
    assert res.mu == pytest.approx(7.5)
    assert res.xi == pytest.approx([0.0])


def test_constant_values():
    dist = FiniteDistribution([0.2, 0.5, 0.3], [5.0, 5.0, 5.0])
    assert avar_dual(dist, 0.4).value == pytest.approx(5.0)
    assert avar_primal(dist, 0.4) == pytest.approx(5.0)


def test_worst_case():
    assert worst_case(UNIFORM4) == 4.0
    assert worst_case(FiniteDistribution([1.0], [7.0])) == 7.0
    assert worst_case(FiniteDistribution([1.0, 0.0], [3.0, 9.0])) == 3.0


@pytest.mark.parametrize("lam, alpha, expected", [
    (0.2, 0.7, 0.8 * 2.5 + 0.2 * 21.5 / 7), (0.0, 0.5, 2.5), (1.0, 0.0, 4.0)])
def test_rho_examples(lam, alpha, expected):
    assert rho(UNIFORM4, RiskParams(lam, alpha)) == pytest.approx(expected, abs=1e-12)


def test_weights_lie_in_envelope():
    dist = FiniteDistribution([0.1, 0.4, 0.2, 0.3], [3.0, -1.0, 3.0, 2.0])
    q = avar_weights(dist, 0.35)
    assert q.sum() == pytest.approx(1.0)
    assert np.all(q >= 0) and np.all(q <= dist.probs / 0.35 + 1e-15)


@pytest.mark.parametrize("alpha", [0.0, -0.1, 1.5])
def test_alpha_domain(alpha):
    with pytest.raises(ValueError):
        avar_primal(UNIFORM4, alpha)


@pytest.mark.parametrize("probs, values", [
    ([0.5, 0.4], [1.0, 2.0]), ([1.2, -0.2], [1.0, 2.0]), ([1.0], [2e6]), ([], [])])
def test_distribution_guards(probs, values):
    with pytest.raises(ValueError):
        FiniteDistribution(probs, values)


def normalized(p):
    p = np.asarray(p, dtype=float)
    p = p / p.sum()
    p[-1] = 1.0 - p[:-1].sum()
    return p


risks = st.one_of(
    st.tuples(st.floats(0.0, 1.0), st.floats(0.01, 1.0)),
    st.tuples(st.floats(0.0, 1.0), st.just(0.0)),
).map(lambda t: RiskParams(*t))


@st.composite
def paired(draw):
    k = draw(st.integers(1, 10))
    p = normalized(draw(st.lists(st.floats(0.01, 1.0), min_size=k, max_size=k)))
    z1 = np.array(draw(st.lists(st.floats(-100, 100), min_size=k, max_size=k)))
    z2 = np.array(draw(st.lists(st.floats(-100, 100), min_size=k, max_size=k)))
    return p, z1, z2


@settings(max_examples=200, deadline=None)
@given(paired(), risks, st.floats(0.0, 1.0))
def test_convexity(pz, risk, t):
    p, z1, z2 = pz
    lhs = rho(FiniteDistribution(p, t * z1 + (1 - t) * z2), risk)
    rhs = t * rho(FiniteDistribution(p, z1), risk) + (1 - t) * rho(FiniteDistribution(p, z2), risk)
    assert lhs <= rhs + 1e-9


@settings(max_examples=200, deadline=None)
@given(paired(), risks)
def test_monotonicity(pz, risk):
    p, z1, z2 = pz
    lo, hi = np.minimum(z1, z2), np.maximum(z1, z2)
    assert rho(FiniteDistribution(p, lo), risk) <= rho(FiniteDistribution(p, hi), risk) + 1e-12


@settings(max_examples=200, deadline=None)
@given(paired(), risks, st.floats(-1000, 1000))
def test_translation_equivariance(pz, risk, c):
    p, z, _ = pz
    assert rho(FiniteDistribution(p, z + c), risk) == pytest.approx(
        rho(FiniteDistribution(p, z), risk) + c, abs=1e-9)


@settings(max_examples=200, deadline=None)
@given(paired(), risks, st.floats(0.001, 1000))
def test_positive_homogeneity(pz, risk, t):
    p, z, _ = pz
    assert rho(FiniteDistribution(p, t * z), risk) == pytest.approx(
        t * rho(FiniteDistribution(p, z), risk), abs=1e-9)


@settings(max_examples=100, deadline=None)
@given(paired(), st.floats(0.01, 1.0))
def test_primal_matches_dual_and_envelope(pz, alpha):
    p, z, _ = pz
    dist = FiniteDistribution(p, z)
    primal = avar_primal(dist, alpha)
    assert avar_dual(dist, alpha).value == pytest.approx(primal, abs=1e-9)
    if dist.values.size <= 8:
        assert envelope_by_vertices(dist, alpha) == pytest.approx(primal, abs=1e-9)


@settings(max_examples=100, deadline=None)
@given(paired(), st.floats(0.01, 1.0), st.floats(0.01, 1.0))
def test_nonincreasing_in_alpha(pz, a1, a2):
    p, z, _ = pz
    dist = FiniteDistribution(p, z)
    lo, hi = sorted((a1, a2))
    assert avar_primal(dist, hi) <= avar_primal(dist, lo) + 1e-12
