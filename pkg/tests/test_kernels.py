import json

import numpy as np
import pytest

from symlab.kernels import (
    QuadConfig,
    TruncatedHeatKernel,
    _cached_unit,
    _unit_integrals,
    bar_c_2d,
    check_c_2d,
    cutoff,
    gaussian,
    parabolic_norm,
    q_unit,
    renorm_constants,
    unit_constants,
)
from symlab.noise import get_mollifier
from symlab.stats import loglog_slope

K2 = TruncatedHeatKernel(2, 0.25)
FAST = QuadConfig(tol=1e-4, max_level=1)


def test_cutoff_shape():
    u = np.linspace(0, 1.5, 301)
    v = cutoff(u)
    assert np.all(v[u <= 0.5] == 1) and np.all(v[u >= 1] == 0)
    assert np.all(np.diff(v) <= 0)
    _, d1, d2 = cutoff(u, deriv=2)
    h = 1e-5
    mid = np.linspace(0.55, 0.95, 9)
    fd1 = (cutoff(mid + h) - cutoff(mid - h)) / (2 * h)
    fd2 = (cutoff(mid + h) - 2 * cutoff(mid) + cutoff(mid - h)) / h**2
    assert np.allclose(cutoff(mid, 2)[1], fd1, atol=1e-6)
    assert np.allclose(cutoff(mid, 2)[2], fd2, atol=1e-3)


@pytest.mark.parametrize("d", [2, 3])
def test_gaussian_unit_mass(d):
    r, w = np.polynomial.legendre.leggauss(200)
    r, w = 4.0 * (r + 1), 4.0 * w
    area = 2 * np.pi * r if d == 2 else 4 * np.pi * r**2
    for t in (0.05, 0.3):
        assert w @ (gaussian(t, r, d) * area) == pytest.approx(1, abs=1e-10)
    assert np.all(gaussian(np.array([0.0, -1.0]), 0.1, d) == 0)


def test_truncated_kernel_support():
    k = TruncatedHeatKernel(2, 0.25)
    # inside rho < r_K / 2 the kernel is the heat kernel
    for t, r in [(1e-3, 0.02), (0.01, 0.05)]:
        assert parabolic_norm(t, r) < 0.125
        assert k.radial(t, r) == pytest.approx(gaussian(t, r, 2)[()], rel=1e-14)
    assert k.radial(-0.01, 0.0) == 0
    assert k.radial(0.0625, 0.0) == 0
    assert k(0.01, np.array([0.03, 0.04])) == pytest.approx(k.radial(0.01, 0.05))


@pytest.mark.parametrize("d", [2, 3])
def test_remainder_is_heat_operator_of_kernel(d):
    # Q = (d_t - Delta) K away from the origin, checked by finite differences
    h = 1e-4
    for t, r in [(0.3, 0.5), (0.5, 0.2), (0.1, 0.75)]:
        K = lambda tt, rr: gaussian(tt, rr, d) * cutoff(parabolic_norm(tt, rr))  # noqa: E731
        kt = (K(t + h, r) - K(t - h, r)) / (2 * h)
        kr = (K(t, r + h) - K(t, r - h)) / (2 * h)
        krr = (K(t, r + h) - 2 * K(t, r) + K(t, r - h)) / h**2
        want = kt - krr - (d - 1) / r * kr
        assert q_unit(t, r, d) == pytest.approx(want, rel=1e-4, abs=1e-8)
    # Q vanishes where the cutoff is flat
    assert q_unit(0.01, 0.1, d) == 0


@pytest.fixture(scope="module")
def rc4():
    return renorm_constants(K2, "na", 0.25 / 4, FAST)


def test_constants_identity_and_non_anticipative(rc4):
    assert rc4.c_sym == 4 * rc4.c_hat - rc4.c_bar
    assert rc4.c_tilde0 == 0.0
    assert rc4.c_bar > 0 and rc4.c_hat > 0
    assert np.allclose(rc4.lam, -4 * np.eye(3))
    assert np.allclose(rc4.check_c(), rc4.lam * (rc4.c_tilde - rc4.c_sym))
    assert np.allclose(rc4.bar_c(), rc4.lam * rc4.c_tilde)


def test_constants_json_provenance(rc4):
    doc = json.loads(json.dumps(rc4.to_json()))
    for key in ("eps", "r_K", "mollifier", "quadrature", "lambda", "inner_product"):
        assert key in doc
    assert doc["quadrature"]["rel_change"] < FAST.tol


def test_check_c_forms_agree(rc4):
    val, report = check_c_2d(K2, "na", 0.25 / 4, FAST)
    assert np.array_equal(val, rc4.check_c())
    # the remainder form is a slower-converging quadrature of the same quantity
    ratio = report["remainder_form"][0, 0] / report["difference_form"][0, 0]
    assert ratio == pytest.approx(1, abs=0.01)


def test_u1_counterterms_vanish():
    assert np.all(bar_c_2d(K2, "na", 0.25 / 4, FAST, group="u1") == 0)
    assert np.all(check_c_2d(K2, "na", 0.25 / 4, FAST, group="u1")[0] == 0)


def test_quadrature_is_deterministic():
    moll = get_mollifier("na", 2)
    sizes = QuadConfig().sizes(0)
    assert _unit_integrals(moll, 4.0, sizes, want_w=False) == _unit_integrals(moll, 4.0, sizes, want_w=False)
    _cached_unit.cache_clear()
    a = unit_constants("na", 2, 2.0, FAST, want_w=False)
    _cached_unit.cache_clear()
    assert unit_constants("na", 2, 2.0, FAST, want_w=False) == a


def test_c_bar_log_growth_matches_heat_kernel_coefficient():
    # int G(t, .)^2 dx = 1 / (8 pi t) in 2D, so int (K^eps)^2 grows like log(1/eps) / (4 pi)
    eps = np.array([2.0**-4, 2.0**-5, 2.0**-6]) * K2.r_k
    vals = [unit_constants("na", 2, K2.r_k / e, FAST, want_w=False)[0]["c_bar"] for e in eps]
    slope = np.polyfit(np.log(1 / eps), vals, 1)[0]
    assert slope == pytest.approx(1 / (4 * np.pi), rel=0.15)


def test_3d_c_bar_diverges_like_inverse_eps():
    k3 = TruncatedHeatKernel(3, 0.25)
    eps = np.array([2.0**-3, 2.0**-4, 2.0**-5]) * k3.r_k
    vals = [renorm_constants(k3, "na", e, FAST).c_bar for e in eps]
    slope, _ = loglog_slope(eps, vals)
    assert slope == pytest.approx(-1, abs=0.15)


def test_bar_c_stable_under_kernel_truncation():
    eps = 0.25 / 4
    a = bar_c_2d(TruncatedHeatKernel(2, 0.25), "na", eps, FAST)
    b = bar_c_2d(TruncatedHeatKernel(2, 0.5), "na", eps, FAST)
    assert np.allclose(a, b, rtol=1e-3)


def test_renorm_constants_errors():
    with pytest.raises(ValueError):
        renorm_constants(K2, "na", 0.0)
    with pytest.raises(ValueError):
        renorm_constants(K2, "na", 0.5)
    with pytest.raises(ValueError):
        check_c_2d(TruncatedHeatKernel(3, 0.25), "na", 0.1)
