import numpy as np
import pytest

from symlab.dynamics import (
    BlowUpError,
    Propagator,
    SimConfig,
    SimConfigError,
    Trajectory,
    counterterm_matrix,
    gff_sample,
    run_generative,
    solve_bar_a,
    solve_coupled_bg,
    solve_det_ym_flow,
    solve_she_exact,
    solve_sym,
    step_sym,
)
from symlab.gauge import GroupField, gauge_transform, smooth_gauge_field
from symlab.lattice import GaugeField, TorusGrid, heat_semigroup, laplacian, ym_energy
from symlab.lie_algebra import casimir_adjoint, get_algebra
from symlab.noise import WhiteNoise

G16 = TorusGrid(2, 16)
SU2 = get_algebra("su2")


def _u1_field(grid, seed, mean=0.0):
    c = np.random.default_rng(seed).standard_normal((grid.d, *grid.shape, 1))
    c -= c.mean(axis=tuple(range(1, grid.d + 1)), keepdims=True)
    c[0] += mean
    return GaugeField(grid, "u1", c)


def test_config_validation():
    with pytest.raises(SimConfigError):
        SimConfig(G16, cfl=0.3)
    with pytest.raises(SimConfigError):
        SimConfig(G16, counterterm="user")
    with pytest.raises(SimConfigError):
        SimConfig(G16, counterterm="magic")
    with pytest.raises(SimConfigError):
        SimConfig(G16, eps=0.05)
    with pytest.raises(SimConfigError):
        SimConfig(G16, dt=1e-2).check_stability()
    SimConfig(G16, dt=0.25 / 256).check_stability()


def test_counterterm_matrix_cases():
    lam = casimir_adjoint(SU2.basis)
    assert np.all(counterterm_matrix(SimConfig(G16, "u1", eps=0.25)) == 0)
    assert np.all(counterterm_matrix(SimConfig(G16, counterterm="none")) == 0)
    user = counterterm_matrix(SimConfig(G16, counterterm="user", counterterm_value=-0.3))
    assert np.allclose(user, -0.3 * np.eye(3))
    g3 = TorusGrid(3, 8)
    cfg = SimConfig(g3, eps=0.25, c_divergent=0.2, c_finite=-0.1)
    assert np.allclose(counterterm_matrix(cfg), lam * (0.2 / 0.25 - 0.1))
    with pytest.raises(SimConfigError):
        counterterm_matrix(SimConfig(G16))


def test_abelian_step_is_exact_she_step():
    A = _u1_field(G16, 0)
    dt = 1e-3
    xi = WhiteNoise(3, G16, dt, "u1").cell(0)
    out = step_sym(A, xi, np.zeros((1, 1)), dt, white=True)
    mu = G16.laplacian_symbol(real=True)[None, ..., None]
    ah = np.fft.rfftn(A.coeffs, axes=(1, 2))
    wh = np.fft.rfftn(xi, axes=(1, 2))
    safe = np.where(mu > 0, mu, 1)
    sd = np.where(mu > 0, np.sqrt(-np.expm1(-2 * mu * dt) / (2 * safe)), np.sqrt(dt))
    want = np.fft.irfftn(np.exp(-mu * dt) * ah + np.sqrt(dt) * sd * wh, s=G16.shape, axes=(1, 2))
    assert np.allclose(out.coeffs, want, atol=1e-12)


def test_zero_stays_zero():
    A = GaugeField.zeros(G16, SU2)
    for _ in range(5):
        A = step_sym(A, None, np.zeros((3, 3)), 1e-4)
    assert np.all(A.coeffs == 0)


def test_noiseless_step_matches_flow_to_first_order():
    a = smooth_gauge_field(G16, SU2, np.random.default_rng(2), amplitude=0.5)
    dt = 1 / 1024
    t = 20 * dt
    cfg = SimConfig(G16, dt=dt)
    A = a
    for _ in range(20):
        A = step_sym(A, None, np.zeros((3, 3)), dt)
    assert np.allclose(A.coeffs, solve_det_ym_flow(cfg, a, t).coeffs, atol=1e-13)
    ref = solve_det_ym_flow(cfg.with_(dt=dt / 16), a, t)
    errs = [np.max(np.abs(solve_det_ym_flow(cfg.with_(dt=s), a, t).coeffs - ref.coeffs)) for s in (dt, dt / 2)]
    assert errs[0] < 2e-2 * np.max(np.abs(ref.coeffs))
    assert 1.6 < errs[0] / errs[1] < 2.4


def test_solve_sym_deterministic():
    cfg = SimConfig(G16, dt=1 / 1024, horizon=10 / 1024, counterterm="none", seed=4, sample_every=2)
    a0 = smooth_gauge_field(G16, SU2, np.random.default_rng(0))
    t1, t2 = solve_sym(cfg, a0), solve_sym(cfg, a0)
    assert t1.times == t2.times
    assert all(np.array_equal(x.coeffs, y.coeffs) for x, y in zip(t1.states, t2.states))
    assert t1.status == "horizon"


def test_abelian_zero_mode_is_brownian():
    grid = TorusGrid(2, 8)
    cfg = SimConfig(grid, "u1", dt=0.02, horizon=1.0, counterterm="none")
    finals = []
    for seed in range(400):
        tr = solve_sym(cfg.with_(seed=seed), GaugeField.zeros(grid, "u1"))
        finals.append(tr.final.mean()[0, 0])
    # Var of a sample variance with 400 normals: relative sd sqrt(2/399)
    assert np.var(finals, ddof=1) == pytest.approx(1.0, abs=4 * np.sqrt(2 / 399))


def test_abelian_linearity_with_bare_mass():
    grid = TorusGrid(2, 16)
    c = 0.7
    cfg = SimConfig(grid, "u1", dt=1e-3, horizon=0.05, bare_mass=c, counterterm="none", seed=8)
    a, b = _u1_field(grid, 1, mean=0.3), _u1_field(grid, 2, mean=-1.0)
    ta, tb = solve_sym(cfg, a), solve_sym(cfg, b)
    diff = tb.final.coeffs - ta.final.coeffs
    want = np.exp(c * cfg.horizon) * heat_semigroup(b.coeffs - a.coeffs, cfg.horizon, grid, axis=1)
    assert np.allclose(diff, want, atol=1e-11)


def test_she_exact_stationary_variance_and_gff_agree():
    grid = TorusGrid(2, 8)
    mu = grid.laplacian_symbol(real=True)
    cfg = SimConfig(grid, "u1", dt=0.01, horizon=0.5)
    she, gff = [], []
    for seed in range(300):
        a0 = gff_sample(grid, "u1", 10_000 + seed)
        tr = solve_she_exact(cfg.with_(seed=seed), a0)
        she.append(np.fft.rfftn(tr.final.coeffs[0, ..., 0]) / 64)
        gff.append(np.fft.rfftn(gff_sample(grid, "u1", seed).coeffs[0, ..., 0]) / 64)
    she, gff = np.array(she), np.array(gff)
    sel = (mu > 0) & (mu < 200)
    exact = 1 / (2 * mu[sel])
    for s in (she, gff):
        ratio = np.mean(np.abs(s[:, sel]) ** 2, axis=0) / exact
        assert np.all(np.abs(ratio - 1) < 0.35)
        assert np.mean(ratio) == pytest.approx(1, abs=0.06)
    # independent modes: cross-correlation of two distinct modes vanishes
    x, y = she[:, 0, 1].real, she[:, 1, 0].real
    assert abs(np.corrcoef(x, y)[0, 1]) < 4 / np.sqrt(len(x))


def test_she_exact_rejects_mollified_noise():
    with pytest.raises(SimConfigError):
        solve_she_exact(SimConfig(G16, "u1", eps=0.25, dt=1e-3), GaugeField.zeros(G16, "u1"))


def _coupled_cfg(**kw):
    base = dict(group="su2", dt=1 / 1024, eps=0.25, horizon=12 / 1024, counterterm="user", counterterm_value=-0.1, seed=3)
    base.update(kw)
    return SimConfig(G16, **base)


def test_coupled_with_identity_g_matches_solve_sym():
    cfg = _coupled_cfg()
    a0 = smooth_gauge_field(G16, SU2, np.random.default_rng(1), amplitude=0.3)
    ref = solve_sym(cfg, a0)
    traj, gs = solve_coupled_bg(cfg, a0, GroupField.identity(G16, SU2))
    assert np.allclose(traj.final.coeffs, ref.final.coeffs, atol=1e-12)
    assert np.allclose(gs[-1], np.eye(2))
    bar, _ = solve_bar_a(cfg.with_(check_c=0.05), a0, GroupField.identity(G16, SU2))
    assert np.allclose(bar.final.coeffs, ref.final.coeffs, atol=1e-12)


def test_abelian_coupled_difference_is_heat_flow():
    grid = TorusGrid(2, 32)
    cfg = SimConfig(grid, "u1", dt=1e-4, eps=0.125, horizon=0.01, seed=2)
    x1, x2 = grid.coords()
    omega = 0.5 * np.sin(2 * np.pi * x1) * np.cos(2 * np.pi * x2)
    g0 = GroupField(grid, "u1", np.exp(1j * omega)[..., None, None])
    a0 = _u1_field(grid, 4) * 0.1
    b0 = gauge_transform(a0, g0)
    A = solve_sym(cfg, a0).final
    B, _ = solve_coupled_bg(cfg, b0, g0)
    want = heat_semigroup(b0.coeffs - a0.coeffs, cfg.horizon, grid, axis=1)
    err = np.max(np.abs(B.final.coeffs - A.coeffs - want))
    assert err < 2e-2 * np.max(np.abs(want))


def test_rotated_noise_keeps_variance():
    grid = TorusGrid(2, 16)
    cfg = SimConfig(grid, "su2", dt=1 / 1024, eps=0.25, horizon=40 / 1024, counterterm="none")
    rng = np.random.default_rng(0)
    from symlab.dynamics import NoiseSource
    from symlab.gauge import adjoint_coeffs, smooth_group_field

    plain, rotated = [], []
    for seed in range(6):
        c = cfg.with_(seed=seed)
        src, rot = NoiseSource(c), NoiseSource(c)
        for n in range(0, 40, 8):
            g = smooth_group_field(grid, SU2, rng, amplitude=1.0)
            plain.append(src(n))
            rotated.append(rot(n, lambda cell, g=g: adjoint_coeffs(g, cell)))
    vp, vr = np.var(np.array(plain)), np.var(np.array(rotated))
    assert vr == pytest.approx(vp, rel=0.1)


def test_rotated_noise_needs_non_anticipative():
    cfg = _coupled_cfg(mollifier="sym")
    with pytest.raises(SimConfigError):
        solve_bar_a(cfg, GaugeField.zeros(G16, SU2), GroupField.identity(G16, SU2))


def test_det_flow_cases():
    cfg = SimConfig(G16, dt=1 / 1024)
    a = smooth_gauge_field(G16, SU2, np.random.default_rng(6), amplitude=0.5)
    assert np.array_equal(solve_det_ym_flow(cfg, a, 0).coeffs, a.coeffs)
    u = _u1_field(G16, 3)
    out = solve_det_ym_flow(cfg.with_(group="u1"), u, 0.05)
    assert np.allclose(out.coeffs, heat_semigroup(u.coeffs, 0.05, G16, axis=1), atol=1e-12)
    _, energies = solve_det_ym_flow(cfg, a, 0.02, energies=True)
    assert np.all(np.diff(energies) <= 1e-8)
    with pytest.raises(SimConfigError):
        solve_det_ym_flow(cfg, a, -1)


def test_det_flow_blow_up_raises():
    cfg = SimConfig(G16, dt=1 / 1024, blow_up=1.0)
    a = smooth_gauge_field(G16, SU2, np.random.default_rng(6), amplitude=50)
    with pytest.raises(BlowUpError):
        solve_det_ym_flow(cfg, a, 0.01)


def test_cemetery_is_absorbing():
    cfg = SimConfig(G16, "u1", dt=1e-3, horizon=0.01, blow_up=1.0, counterterm="none")
    a0 = _u1_field(G16, 0) * 100
    tr = solve_sym(cfg, a0)
    assert tr.status == "cemetery"
    assert tr.diagnostics["step"] == 1
    with pytest.raises(RuntimeError):
        tr.record(1.0, a0)
    bad = a0.copy()
    bad.coeffs[1, 2, 3, 0] = np.nan
    tr = solve_sym(cfg.with_(blow_up=1e12), bad)
    assert tr.status == "cemetery" and tr.diagnostics["reason"] == "non-finite value"
    assert tr.diagnostics["component"] == 1


def test_generative_jump_to_representative():
    cfg = SimConfig(G16, "u1", dt=1e-3, horizon=0.01, counterterm="none")
    a0 = _u1_field(G16, 5, mean=10 * np.pi)
    tr = run_generative(cfg, a0)
    assert tr.jump_times[0] == 0.0
    post = tr.post_jump[0]
    assert -np.pi <= post.mean()[0, 0] < np.pi
    fl = lambda F: F.coeffs - F.mean()[:, None, None, :]  # noqa: E731
    assert np.allclose(fl(post), fl(a0), atol=1e-12)
    assert tr.status == "horizon"
    assert all(-np.pi <= s.mean()[0, 0] < np.pi + 0.5 for s in tr.states)


def test_generative_selection_failure():
    cfg = SimConfig(G16, "u1", dt=1e-3, horizon=0.01, counterterm="none")

    def broken(A):
        raise ValueError("no representative")

    with pytest.raises(RuntimeError, match="orbit selection failed"):
        run_generative(cfg, _u1_field(G16, 0), selection=broken)


def test_generative_cemetery_when_representative_too_large():
    cfg = SimConfig(G16, "u1", dt=1e-3, horizon=0.01, counterterm="none", blow_up=1.0)
    tr = run_generative(cfg, _u1_field(G16, 0) * 100)
    assert tr.status == "cemetery" and not tr.states


def test_trajectory_record_copies():
    tr = Trajectory()
    a = GaugeField.zeros(G16, "u1")
    tr.record(0.0, a)
    a.coeffs[:] = 1
    assert np.all(tr.final.coeffs == 0)


def test_propagator_mass_exact():
    grid = TorusGrid(2, 8)
    m = np.array([[0.2, -0.5, 0], [0.5, 0.2, 0], [0, 0, -0.1]])
    p = Propagator(grid, 0.1, m)
    a = np.ones((2, 8, 8, 3))
    import scipy.linalg

    assert np.allclose(p(a), a @ scipy.linalg.expm(0.1 * m).T)
    assert np.allclose(laplacian(p(a), grid, axis=1), 0)
