import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from symlab.dynamics import gff_sample
from symlab.gauge import GroupField, gauge_transform, smooth_gauge_field, smooth_group_field
from symlab.lattice import GaugeField, TorusGrid, partial_derivative
from symlab.observables import (
    NormParamError,
    NormParams,
    abelian_loop_observable,
    dyadic_times,
    heatgr_norm,
    holder_besov_norm,
    norm_alpha,
    norm_gr_alpha,
    theta_metric,
)

G32 = TorusGrid(2, 32)
G3 = TorusGrid(3, 8)
seeds = st.integers(0, 2**32 - 1)


def test_norm_params_ranges():
    NormParams()
    for kw, rng in [({"alpha": 0.5}, "(2/3, 1)"), ({"eta": -0.4}, "-1/2"), ({"beta": 0.1}, "(-inf, 0)"),
                    ({"delta": 0.8}, "1 + beta/2"), ({"alpha3": 0.6}, "(0, 1/2)"), ({"theta": 0.0}, "(0, inf)")]:
        with pytest.raises(NormParamError, match=rng.replace("(", r"\(").replace(")", r"\)").replace("+", r"\+")):
            NormParams(**kw)


def test_holder_besov_constant():
    f = np.full(G32.shape, -2.5)
    assert holder_besov_norm(f, -0.5, grid=G32) == pytest.approx(2.5)
    with pytest.raises(NormParamError):
        holder_besov_norm(f, 0.1, grid=G32)
    with pytest.raises(NormParamError):
        holder_besov_norm(f, -0.5)


@pytest.mark.parametrize("k,gamma", [((1, 0), -0.5), ((3, 2), -1.2), ((4, 0), -1.8)])
def test_holder_besov_single_mode(k, gamma):
    x1, x2 = G32.coords()
    f = np.cos(2 * np.pi * (k[0] * x1 + k[1] * x2))
    mu = sum(2 / G32.h**2 * (1 - np.cos(2 * np.pi * kj * G32.h)) for kj in k)
    t_star = -gamma / (2 * mu)
    closed = t_star ** (-gamma / 2) * np.exp(-mu * t_star)
    assert holder_besov_norm(f, gamma, grid=G32, times=[t_star]) == pytest.approx(closed, rel=1e-12)
    # the dyadic grid brackets t*, so it can only undershoot, and only slightly
    fine = holder_besov_norm(f, gamma, grid=G32, per_octave=32)
    assert closed * (1 - 1e-3) <= fine <= closed * (1 + 1e-12)


def test_holder_besov_stops_at_grid_scale():
    # a mode peaking below t = h^2 is read off at the smallest time
    x1, x2 = G32.coords()
    f = np.cos(2 * np.pi * 8 * (x1 + x2))
    mu = 2 * 2 / G32.h**2 * (1 - np.cos(2 * np.pi * 8 * G32.h))
    t0 = dyadic_times(G32)[-1]
    assert t0 <= G32.h**2
    assert holder_besov_norm(f, -0.3, grid=G32) == pytest.approx(t0 ** 0.15 * np.exp(-mu * t0), rel=1e-9)


def test_holder_besov_report_witness():
    x1, _ = G32.coords()
    f = np.sin(2 * np.pi * 4 * x1)
    rep = holder_besov_norm(f, -0.5, grid=G32, report=True)
    assert rep.witness["t"] in dyadic_times(G32)
    assert float(rep) == holder_besov_norm(f, -0.5, grid=G32)


def test_white_noise_holder_threshold():
    # mean removed: the zero mode is an O(1) coin flip at t = 1 for every n
    vals = {-0.5: [], -1.5: []}
    for n in (32, 64, 128, 256):
        grid = TorusGrid(2, n)
        f = np.random.default_rng(n).standard_normal(grid.shape) / grid.h
        f -= f.mean()
        for g in vals:
            vals[g].append(holder_besov_norm(f, g, grid=grid))
    assert vals[-0.5][-1] / vals[-0.5][0] > 2.5
    assert max(vals[-1.5]) / min(vals[-1.5]) < 2.5
    assert max(vals[-1.5]) < 0.5


def test_gr_alpha_zero_and_constant():
    p = NormParams()
    assert norm_gr_alpha(GaugeField.zeros(G32, "su2"), p) == 0
    c = np.array([[0.3, 0.0, 0.0], [0.0, 0.4, 0.0]])
    A = GaugeField(G32, "su2", np.broadcast_to(c[:, None, None, :], (2, 32, 32, 3)))
    rep = norm_gr_alpha(A, p, report=True)
    sup = 0.4 * 0.25 ** (1 - p.alpha)  # largest singular value times (1/4)^(1-alpha)
    assert sup * 0.98 < rep.value <= sup * (1 + 1e-12)
    assert np.linalg.norm(rep.witness["v"]) == pytest.approx(0.25)


def test_gr_alpha_gff_stable_under_doubled_budget():
    A = gff_sample(G32, "su2", 3)
    p = NormParams()
    a, b = norm_gr_alpha(A, p), norm_gr_alpha(A, p.doubled())
    assert b >= a
    assert b / a < 1.1


def test_norm_alpha_on_exact_form():
    grid = TorusGrid(2, 64)
    x1, x2 = grid.coords()
    omega = np.sin(2 * np.pi * x1) * np.cos(2 * np.pi * x2)
    A = GaugeField(grid, "u1", np.stack([partial_derivative(omega, j, grid) for j in range(2)])[..., None])
    p = NormParams(triangles_per_scale=16, segments_per_scale=16)
    tri = norm_alpha(A, p) - norm_gr_alpha(A, p)
    assert 0 <= tri < 0.05 * norm_gr_alpha(A, p)


def test_norm_alpha_needs_triangle_scales():
    with pytest.raises(NormParamError, match="too coarse"):
        norm_alpha(GaugeField.zeros(TorusGrid(2, 16), "u1"))


def test_heatgr_zero_and_smooth_bound(rng):
    p = NormParams(segments_per_scale=8)
    assert heatgr_norm(GaugeField.zeros(G3, "u1"), p) == 0
    A = smooth_gauge_field(G3, "su2", rng)
    bound = np.sqrt(np.max(np.sum(A.coeffs**2, axis=-1))) * np.sqrt(3) * 0.25 ** (1 - p.alpha3)
    assert heatgr_norm(A, p) <= bound


def test_heatgr_non_increasing_in_theta(rng):
    A = gff_sample(G3, "u1", 2)
    vals = [heatgr_norm(A, NormParams(theta=th, segments_per_scale=8)) for th in (0.1, 0.3, 0.6)]
    assert vals[0] >= vals[1] >= vals[2]


def test_theta_metric_properties(rng):
    p = NormParams()
    A = gff_sample(G3, "su2", 0)
    B = gff_sample(G3, "su2", 1)
    assert theta_metric(A, A, p) == 0
    assert theta_metric(A, B, p) == pytest.approx(theta_metric(B, A, p), rel=1e-12)
    zero = GaugeField.zeros(G3, "su2")
    r1 = theta_metric(A, zero, p, report=True)
    r2 = theta_metric(2 * A, zero, p, report=True)
    assert r2.witness["first_term"] == pytest.approx(2 * r1.witness["first_term"], rel=1e-12)
    assert r2.witness["second_term"] == pytest.approx(4 * r1.witness["second_term"], rel=1e-12)
    assert np.isfinite(r1.value)


def test_theta_first_term_triangle_inequality():
    p = NormParams()
    A, B, C = (gff_sample(G3, "u1", s) for s in range(3))
    first = lambda X, Y: holder_besov_norm(X - Y, p.eta)  # noqa: E731
    assert first(A, C) <= first(A, B) + first(B, C) + 1e-12


def test_abelian_loop_observable():
    assert abelian_loop_observable(GaugeField.zeros(G32, "u1")) == 1
    A = gff_sample(G32, "u1", 0)
    x1, x2 = G32.coords()
    omega = 0.3 * np.sin(2 * np.pi * x1) + np.cos(2 * np.pi * (x1 - x2))
    g = GroupField(G32, "u1", np.exp(1j * omega)[..., None, None])
    assert abelian_loop_observable(gauge_transform(A, g)) == pytest.approx(abelian_loop_observable(A), abs=1e-12)
    shifted = A.copy()
    shifted.coeffs[0] += 2 * np.pi
    assert abelian_loop_observable(shifted) == pytest.approx(abelian_loop_observable(A), abs=1e-12)
    with pytest.raises(ValueError):
        abelian_loop_observable(GaugeField.zeros(G32, "su2"))


@given(seeds, st.floats(-4, 4).filter(lambda c: abs(c) > 1e-3))
def test_norms_absolutely_homogeneous(seed, c):
    A = gff_sample(TorusGrid(2, 32), "su2", seed)
    p = NormParams(segments_per_scale=8, triangles_per_scale=8)
    assert norm_gr_alpha(c * A, p) == pytest.approx(abs(c) * norm_gr_alpha(A, p), rel=1e-12)
    assert norm_alpha(c * A, p) == pytest.approx(abs(c) * norm_alpha(A, p), rel=1e-12)
    assert holder_besov_norm(c * A, -0.5) == pytest.approx(abs(c) * holder_besov_norm(A, -0.5), rel=1e-12)


@given(seeds)
def test_norms_monotone_in_budget(seed):
    A = gff_sample(TorusGrid(2, 32), "u1", seed)
    p = NormParams(segments_per_scale=8, triangles_per_scale=8)
    assert norm_gr_alpha(A, p.doubled()) >= norm_gr_alpha(A, p)
    assert norm_alpha(A, p.doubled()) >= norm_alpha(A, p)


@given(seeds, st.floats(-1.9, -0.1), st.floats(-1.9, -0.1))
def test_holder_besov_ordered_in_gamma(seed, g1, g2):
    # rougher exponents weigh small t less, so the norm can only drop
    hi, lo = max(g1, g2), min(g1, g2)
    A = gff_sample(TorusGrid(2, 16), "u1", seed)
    assert holder_besov_norm(A, lo) <= holder_besov_norm(A, hi) + 1e-12


def _group_holder(g, alpha, max_shift=8):
    """Grid Holder seminorm of ``g`` over axis shifts up to ``max_shift`` cells."""
    best = 0.0
    for axis in range(g.grid.d):
        for s in range(1, max_shift + 1):
            diff = np.linalg.norm(np.roll(g.values, -s, axis=axis) - g.values, axis=(-2, -1))
            best = max(best, float(diff.max()) / (s * g.grid.h) ** alpha)
    return best


def test_gauge_holder_controlled_by_field_norms():
    # only the direction of the bound is checked; its constant is unknown
    grid = TorusGrid(2, 64)
    p = NormParams(segments_per_scale=256)
    A = smooth_gauge_field(grid, "su2", np.random.default_rng(5), amplitude=0.5)
    ratios = []
    for amp in (0.1, 0.5, 1.0, 2.0, 4.0):
        g = smooth_group_field(grid, "su2", np.random.default_rng(6), amplitude=amp)
        bound = 1 + norm_gr_alpha(A, p) + norm_gr_alpha(gauge_transform(A, g), p)
        ratios.append(_group_holder(g, p.alpha) / bound)
    assert max(ratios) < 2
    assert max(ratios) / min(ratios) < 10
