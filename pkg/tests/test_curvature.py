import math

import numpy as np
import pytest

from conekit.cones import Garding, transform_cone, varrho
from conekit.curvature import (
    MixedRicciParams,
    Regime,
    chern_ricci_flat_conformal,
    chern_scalar_flat_conformal,
    classify_regime,
    mixed_operator_matrix,
    reduce_first_chern,
    reduce_mixed,
)
from conekit.newton import InitializationError
from conekit.operators import Induced, SigmaKRoot, uniform_ellipticity_audit
from conekit.pencil import discrete_complex_hessian, torus_coordinates
from conekit.torus import TorusProblem, solve_torus


def test_limiting_example():
    red = reduce_mixed(MixedRicciParams(0.0, 1.0, -0.5, 2), Garding(2, 2))
    assert red.rho == pytest.approx(1.0)
    assert red.regime is Regime.LIMITING
    assert not red.pure_laplacian


def test_pure_laplacian():
    red = reduce_mixed(MixedRicciParams(1.0, 2.0, -1.0, 2), Garding(2, 2))
    assert red.rho == 0.0
    assert red.pure_laplacian
    assert red.regime is Regime.INADMISSIBLE


@pytest.mark.parametrize("beta", [0.0, -1.0])
def test_beta_must_be_positive(beta):
    with pytest.raises(ValueError):
        MixedRicciParams(0.0, beta, 0.0, 2)


def test_exponent_shift():
    red = reduce_mixed(MixedRicciParams(0.0, 2.0, 0.0, 3), Garding(2, 3), ric=np.eye(3), sigma_deg=0.5)
    assert red.exponent_shift == pytest.approx(-0.5 * math.log(2.0))
    np.testing.assert_allclose(red.chi_shift, -0.5 * np.eye(3))
    assert red.regime is Regime.INADMISSIBLE  # rho = 0


def test_classifier_random_triples(rng):
    cone = Garding(2, 3)
    vr = varrho(cone)
    for _ in range(10_000):
        a, g = rng.uniform(-2, 2, 2)
        b = rng.uniform(0.05, 2)
        red = reduce_mixed(MixedRicciParams(a, b, g, 3), cone)
        rho = -(3 * a + 2 * g) / b
        if rho == 0 or rho > vr:
            assert red.regime is Regime.INADMISSIBLE
        else:
            assert red.regime is Regime.UNIFORMLY_ELLIPTIC


def test_classify_regime_boundary():
    assert classify_regime(1.5, 1.5) is Regime.LIMITING
    assert classify_regime(1.5 + 1e-14, 1.5) is Regime.LIMITING
    assert classify_regime(1.6, 1.5) is Regime.INADMISSIBLE
    assert classify_regime(-3.0, 1.5) is Regime.UNIFORMLY_ELLIPTIC


@pytest.mark.parametrize("a,g", [(0.0, -0.5), (0.25, -0.6), (-0.5, 0.2)])
def test_reduction_feeds_transform_and_audit(a, g):
    cone = Garding(2, 3)
    red = reduce_mixed(MixedRicciParams(a, 1.0, g, 3), cone)
    assert red.regime is not Regime.INADMISSIBLE
    transform_cone(cone, red.rho)
    rep = uniform_ellipticity_audit(Induced(SigmaKRoot(2, 3), red.rho), nsamples=2000)
    assert rep.passed


def test_mixed_operator_matrix():
    H = np.diag([1.0, 3.0])
    np.testing.assert_allclose(mixed_operator_matrix(1.0, H), np.diag([3.0, 1.0]))


def test_first_chern_shift():
    red = reduce_first_chern(np.eye(2) * -2.0, 2)
    assert red.exponent_shift == pytest.approx(-math.log(2))
    np.testing.assert_allclose(red.chi_shift, np.eye(2))
    with pytest.raises(ValueError):
        reduce_first_chern(0.0, 2, sigma_deg=1.5)


@pytest.mark.parametrize("method", ["fd", "spectral", "direct"])
def test_constant_u_is_flat(method):
    ric = chern_ricci_flat_conformal(np.full((6,) * 4, 0.7), method)
    assert np.abs(ric).max() < 1e-12


def smooth_field(N):
    x1, y1, x2, y2 = torus_coordinates(N)
    return np.broadcast_to(0.2 * np.sin(2 * np.pi * x1) * np.cos(2 * np.pi * y2)
                           + 0.1 * np.cos(2 * np.pi * (x2 + y1)), (N,) * 4)


def test_methods_agree():
    u = smooth_field(12)
    spec = chern_ricci_flat_conformal(u, "spectral")
    direct = chern_ricci_flat_conformal(u, "direct")
    # e^u is not band-limited, so the two agree only to its Fourier tail
    np.testing.assert_allclose(direct, spec, atol=1e-5)
    fd = chern_ricci_flat_conformal(u, "fd")
    assert np.abs(fd - spec).max() < 0.1 * np.abs(spec).max()


def test_fd_ricci_second_order():
    errs = []
    for N in (8, 16, 32):
        x1 = torus_coordinates(N)[0]
        u = np.broadcast_to(np.sin(2 * np.pi * x1), (N,) * 4)
        exact = 2 * np.pi**2 * np.sin(2 * np.pi * x1)  # -2 u_{1 1bar}
        errs.append(np.abs(chern_ricci_flat_conformal(u)[..., 0, 0] - exact).max())
    assert errs[0] / errs[1] == pytest.approx(4, rel=0.05)
    assert errs[1] / errs[2] == pytest.approx(4, rel=0.05)


def test_scalar_is_trace():
    u = smooth_field(8)
    ric = chern_ricci_flat_conformal(u, "spectral")
    R = chern_scalar_flat_conformal(u, "spectral")
    np.testing.assert_allclose(R, np.exp(-u) * np.real(np.trace(ric, axis1=-2, axis2=-1)), atol=1e-12)


def test_subharmonic_gives_negative_scalar():
    N = 8
    x1 = torus_coordinates(N)[0]
    u = np.broadcast_to(np.cos(2 * np.pi * x1), (N,) * 4)
    lap = np.real(np.trace(discrete_complex_hessian(u), axis1=-2, axis2=-1))
    R = chern_scalar_flat_conformal(u, "fd")
    mask = lap > 1e-9
    assert mask.any()
    assert np.all(R[mask] < 0)


def test_flat_first_chern_problem_is_infeasible():
    # chi = 0 leaves u = 0 on the cone boundary
    red = reduce_first_chern(np.zeros((2, 2)), 2)
    p = TorusProblem(4, SigmaKRoot(2, 2), red.chi_shift, 1.0)
    with pytest.raises(InitializationError):
        solve_torus(p)


def test_reduced_json():
    d = reduce_mixed(MixedRicciParams(0.0, 1.0, -0.5, 2), Garding(2, 2)).to_json()
    assert d["regime"] == "Limiting" and d["chi_shift"] == 0.0


def test_condition_instances_uniformly_elliptic(rng):
    cone = Garding(2, 3)
    for _ in range(500):
        b = rng.uniform(0.1, 2)
        a, g = rng.uniform(-2, 2, 2)
        s = 3 * a + 2 * g
        if not (b + s > 0 and s != 0):
            continue
        red = reduce_mixed(MixedRicciParams(a, b, g, 3), cone)
        assert red.rho < 1 <= varrho(cone)
        assert red.regime is Regime.UNIFORMLY_ELLIPTIC


def test_limiting_audit_asserts_positivity_only():
    red = reduce_mixed(MixedRicciParams(0.0, 1.0, -0.75, 3), Garding(2, 3))
    assert red.regime is Regime.LIMITING
    rep = uniform_ellipticity_audit(Induced(SigmaKRoot(2, 3), red.rho), nsamples=2000)
    assert rep.regime == "limiting" and rep.theta_hat == 0 and rep.passed


def test_first_chern_log_law():
    assert reduce_first_chern(0.0, 4).exponent_shift == pytest.approx(2 * reduce_first_chern(0.0, 2).exponent_shift)
