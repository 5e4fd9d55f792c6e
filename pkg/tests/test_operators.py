from math import comb

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conekit.cones import Garding, project_P, sample_cone, varrho
from conekit.operators import (
    DomainError,
    HessianQuotient,
    InadmissibleParameterError,
    Induced,
    SigmaKRoot,
    finite_difference_gradient,
    gradient,
    operator_from_json,
    pue_ratio,
    sorted_gradient,
    structural_audit,
    theta_lower_bound,
    theta_search,
    trace_bound_constant,
    uniform_ellipticity_audit,
    value,
)

OPERATORS = [
    SigmaKRoot(1, 3), SigmaKRoot(2, 3), SigmaKRoot(3, 3), SigmaKRoot(2, 5),
    HessianQuotient(3, 1, 4), HessianQuotient(2, 0, 3),
    Induced(SigmaKRoot(2, 3), 1.0), Induced(SigmaKRoot(3, 3), 1.0),
    SigmaKRoot(3, 3, degree=0.5),
]


def test_value_examples():
    assert value(SigmaKRoot(2, 3), [1, 1, 1]) == pytest.approx(np.sqrt(3))
    for n in (2, 4, 6):
        assert value(SigmaKRoot(n, n), np.ones(n)) == pytest.approx(1.0)


@pytest.mark.parametrize("n, k", [(3, 1), (4, 2), (5, 3)])
def test_hessian_quotient_unnormalized(n, k):
    f = HessianQuotient(n, k, n)
    f1 = value(f, np.ones(n))
    assert f1 == pytest.approx(comb(n, k) ** (-1 / (n - k)), rel=1e-13)
    assert value(f, 2 * np.ones(n)) == pytest.approx(2 * f1, rel=1e-13)


def test_hessian_quotient_validation():
    with pytest.raises(ValueError):
        HessianQuotient(2, 2, 3)


def test_domain_error_carries_index():
    with pytest.raises(DomainError) as exc:
        value(SigmaKRoot(2, 3), [-1.0, 1.0, 1.0])
    assert exc.value.index == 2


def test_gradient_examples():
    np.testing.assert_allclose(gradient(SigmaKRoot(1, 4), [1.0, -0.5, 2.0, 3.0]), np.ones(4))
    # sqrt(sigma_2) at (1,2,3): (5,4,3) / (2 sqrt(11))
    np.testing.assert_allclose(gradient(SigmaKRoot(2, 3), [1.0, 2.0, 3.0]),
                               np.array([5.0, 4.0, 3.0]) / (2 * np.sqrt(11)))


@pytest.mark.parametrize("f", OPERATORS, ids=repr)
def test_gradient_matches_finite_differences(f, rng):
    lam = sample_cone(f.cone, 50, rng, depth=(0.1, 5.0))
    g = gradient(f, lam)
    fd = finite_difference_gradient(f, lam)
    np.testing.assert_allclose(g, fd, rtol=1e-5, atol=1e-7 * np.abs(g).max())


@pytest.mark.parametrize("f", OPERATORS, ids=repr)
def test_value_symmetric(f, rng):
    lam = sample_cone(f.cone, 20, rng)
    perm = rng.permutation(f.cone.n)
    np.testing.assert_allclose(value(f, lam[:, perm]), value(f, lam), rtol=1e-12)


@given(st.floats(0.5, 3.0), st.floats(0.01, 100.0))
@settings(max_examples=40, deadline=None)
def test_induced_gradient_sum_identity(rho, scale):
    base = SigmaKRoot(2, 4)
    rho = min(rho, varrho(base.cone))
    f = Induced(base, rho)
    rng = np.random.default_rng(int(scale * 1000))
    lam = sample_cone(f.cone, 16, rng) * scale
    lhs = gradient(f, lam).sum(axis=1)
    rhs = gradient(base, project_P(lam, rho)).sum(axis=1)
    np.testing.assert_allclose(lhs, rhs, rtol=1e-12)


@pytest.mark.parametrize("f", OPERATORS, ids=repr)
def test_structural_audit_clean(f):
    rep = structural_audit(f, nsamples=2000, seed=3)
    assert rep.passed, rep.violations


def test_audit_tangent_equality_at_same_point():
    f = SigmaKRoot(2, 3)
    lam = np.array([1.0, 2.0, 0.5])
    fl = value(f, lam)
    assert fl + gradient(f, lam) @ (lam - lam) - fl == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("n", [2, 3, 5])
def test_trace_bound_constant_orthant(n):
    assert trace_bound_constant(SigmaKRoot(n, n)) == pytest.approx(n)


def test_growth_reported_not_failed():
    rep = structural_audit(HessianQuotient(3, 1, 4), nsamples=500, seed=0)
    assert rep.passed
    assert not rep.unbounded
    assert structural_audit(SigmaKRoot(2, 3), nsamples=500, seed=0).unbounded


@pytest.mark.parametrize("n", [2, 3, 6])
def test_theta_orthant(n):
    assert theta_lower_bound(Garding(n, n)) == pytest.approx(1 / n)


@pytest.mark.parametrize("k, n, expected", [(2, 3, 1 / 12)])
def test_theta_known_value(k, n, expected):
    assert theta_search(Garding(k, n)).value == pytest.approx(expected, rel=1e-6)


def test_theta_halfspace_consistent_with_equal_gradients():
    n = 4
    th = theta_lower_bound(Garding(1, n))
    assert 0 < th <= 1 / n + 1e-12
    assert pue_ratio(SigmaKRoot(1, n), [3.0, -1.0, 0.2, 0.5]) == pytest.approx(1 / n)


@pytest.mark.parametrize("k, n", [(2, 3), (3, 4)])
def test_pue_ratio_above_theta(k, n, rng):
    f = SigmaKRoot(k, n)
    lam = sample_cone(f.cone, 3000, rng)
    assert pue_ratio(f, lam).min() >= theta_lower_bound(f.cone)


def test_sorted_gradient_monotone(rng):
    f = SigmaKRoot(2, 4)
    lam_s, g = sorted_gradient(f, sample_cone(f.cone, 500, rng))
    assert np.all(np.diff(lam_s, axis=1) >= 0)
    assert np.all(np.diff(g, axis=1) <= 1e-12 * g.max(axis=1, keepdims=True))


def test_uniform_ellipticity_halfspace_exact():
    n = 4
    rep = uniform_ellipticity_audit(Induced(SigmaKRoot(1, n), 2.0), nsamples=500, seed=1)
    assert rep.min_ratio == pytest.approx(1 / n, rel=1e-12)


def test_uniform_ellipticity_regimes():
    uni = uniform_ellipticity_audit(Induced(SigmaKRoot(2, 3), 1.0), nsamples=2000, seed=2)
    assert uni.regime == "uniform" and uni.passed and uni.theta_hat > 0
    lim = uniform_ellipticity_audit(Induced(SigmaKRoot(2, 3), 1.5), nsamples=2000, seed=2)
    assert lim.regime == "limiting" and lim.passed
    with pytest.raises(InadmissibleParameterError):
        uniform_ellipticity_audit(Induced(SigmaKRoot(2, 3), 1.7), nsamples=10)


def test_operator_json():
    f = Induced(SigmaKRoot(2, 3), 1.0)
    assert operator_from_json(f.to_json()) == f
    with pytest.raises(ValueError, match="missing field 'n'"):
        operator_from_json({"sigma_k_root": {"k": 2}})
