"""Time integrators for the gauge-field evolutions.

Every solver uses the same exponential step per discrete Fourier mode ``k``
with Laplacian symbol ``mu_k``::

    A_{n+1} = e^{-mu dt} exp(dt C) A_n + (1 - e^{-mu dt}) / mu * F_n + noise

``C`` is the constant mass matrix acting on algebra coordinates; folding it
into the exact propagator makes linear (Abelian) evolutions exact to rounding.
``F_n`` collects the explicit terms evaluated at ``t_n``.  White noise enters
through the exact Ornstein-Uhlenbeck transition variance, mollified noise is
sampled at ``t_n``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
import scipy.linalg

from .gauge import GroupField, abelian_representative, adjoint_coeffs, right_log_derivative, left_log_derivative
from .lattice import GaugeField, TorusGrid, bracket_coeffs, partial_derivative, ym_energy, ym_nonlinearity
from .lie_algebra import LieAlgebra, casimir_adjoint, exp_map, get_algebra, group_matmul, project_unitary
from .noise import MollifiedNoise, NoiseConfigError, WhiteNoise, check_resolution, get_mollifier

log = logging.getLogger(__name__)

GFF_STREAM = 1
REUNITARISE_EVERY = 100


class SimConfigError(ValueError):
    pass


class BlowUpError(RuntimeError):
    pass


def _mass(x, dim):
    if x is None:
        return np.zeros((dim, dim))
    m = np.asarray(x, float)
    if m.ndim == 0:
        return float(m) * np.eye(dim)
    if m.shape != (dim, dim):
        raise SimConfigError(f"mass matrix must be {dim}x{dim}, got {m.shape}")
    return m


@dataclass(frozen=True)
class SimConfig:
    """Simulation parameters.

    ``eps = None`` selects unmollified white noise.  ``counterterm`` is
    ``"computed"`` (continuum quadrature in 2D, ``c_divergent/eps + c_finite``
    times the Casimir in 3D), ``"user"`` (``counterterm_value``) or ``"none"``.
    Mass matrices may be scalars (multiples of the identity) or ``dim x dim``.
    """

    grid: TorusGrid
    group: str = "su2"
    dt: float = 1e-4
    eps: float | None = None
    mollifier: str = "na"
    r_k: float = 0.25
    bare_mass: object = None
    dg_mass: object = None
    check_c: object = None
    counterterm: str = "computed"
    counterterm_value: object = None
    c_divergent: float = 0.0
    c_finite: float = 0.0
    horizon: float = 0.1
    blow_up: float = 1e4
    seed: int = 0
    noise_n: int | None = None
    noise_tau: float | None = None
    cfl: float = 0.25
    sample_every: int = 0

    def __post_init__(self):
        if self.dt <= 0 or self.horizon < 0:
            raise SimConfigError("dt must be positive and horizon non-negative")
        if not 0 < self.cfl <= 0.25:
            raise SimConfigError(f"cfl = {self.cfl} is outside (0, 0.25]")
        if self.counterterm not in ("computed", "user", "none"):
            raise SimConfigError(f"unknown counterterm source {self.counterterm!r}")
        if self.counterterm == "user" and self.counterterm_value is None:
            raise SimConfigError("counterterm = 'user' needs counterterm_value")
        if self.eps is not None:
            if self.eps <= 0:
                raise SimConfigError("eps must be positive")
            try:
                check_resolution(self.eps, self.grid.h, 0.0)
                check_resolution(self.eps, self.noise_grid.h, self.tau)
            except NoiseConfigError as exc:
                raise SimConfigError(str(exc)) from None
            get_mollifier(self.mollifier, self.grid.d)

    @property
    def algebra(self) -> LieAlgebra:
        return get_algebra(self.group)

    @property
    def steps(self):
        return int(round(self.horizon / self.dt))

    @property
    def noise_grid(self):
        return TorusGrid(self.grid.d, self.noise_n or self.grid.n)

    @property
    def tau(self):
        if self.noise_tau is not None:
            return self.noise_tau
        return self.eps**2 / 8 if self.eps is not None else self.dt

    def check_stability(self):
        """Explicit nonlinear terms need ``dt <= cfl h^2``."""
        if self.dt > self.cfl * self.grid.h**2 * (1 + 1e-12):
            raise SimConfigError(
                f"dt = {self.dt:.3g} exceeds the stability bound cfl*h^2 = {self.cfl * self.grid.h**2:.3g}"
            )

    def with_(self, **kw):
        return replace(self, **kw)


def lie_casimir(group):
    return casimir_adjoint(get_algebra(group).basis)


def counterterm_matrix(config: SimConfig):
    """``C_bphz`` in algebra coordinates (bare mass not included)."""
    alg = config.algebra
    lam = casimir_adjoint(alg.basis)
    if config.counterterm == "none" or alg.abelian:
        return np.zeros((alg.dim, alg.dim))
    if config.counterterm == "user":
        return _mass(config.counterterm_value, alg.dim)
    if config.eps is None:
        raise SimConfigError("a computed counterterm needs a mollifier scale eps")
    if config.grid.d == 3:
        return lam * (config.c_divergent / config.eps + config.c_finite)
    from .kernels import TruncatedHeatKernel, renorm_constants

    rc = renorm_constants(TruncatedHeatKernel(2, config.r_k), config.mollifier, config.eps, group=config.group)
    return rc.bphz()


def check_c_matrix(config: SimConfig):
    """``Check C`` in coordinates: user value or the 2D quadrature."""
    alg = config.algebra
    if config.check_c is not None:
        return _mass(config.check_c, alg.dim)
    if alg.abelian:
        return np.zeros((alg.dim, alg.dim))
    if config.eps is None or config.grid.d != 2:
        raise SimConfigError("check_c must be supplied unless d = 2 with eps set")
    from .kernels import TruncatedHeatKernel, renorm_constants

    rc = renorm_constants(TruncatedHeatKernel(2, config.r_k), config.mollifier, config.eps, group=config.group)
    return rc.check_c()


# --- linear propagator -----------------------------------------------------------


class Propagator:
    """Exact linear part and forcing weights for one time step."""

    def __init__(self, grid: TorusGrid, dt, mass=None):
        self.grid = grid
        self.dt = dt
        self.axes = tuple(range(1, grid.d + 1))
        mu = grid.laplacian_symbol(real=True)
        safe = np.where(mu > 0, mu, 1.0)
        self.decay = np.exp(-mu * dt)[None, ..., None]
        self.phi = np.where(mu > 0, -np.expm1(-mu * dt) / safe, dt)[None, ..., None]
        white = np.where(mu > 0, np.sqrt(-np.expm1(-2 * mu * dt) / (2 * safe * dt)), 1.0)
        self.white = (dt * white)[None, ..., None]
        self.E = None
        if mass is not None and np.any(mass):
            self.E = scipy.linalg.expm(dt * np.asarray(mass, float))

    def __call__(self, a, forcing=None, white=None):
        if self.E is not None:
            a = a @ self.E.T
        ah = np.fft.rfftn(a, axes=self.axes) * self.decay
        if forcing is not None:
            ah += self.phi * np.fft.rfftn(forcing, axes=self.axes)
        if white is not None:
            ah += self.white * np.fft.rfftn(white, axes=self.axes)
        return np.fft.irfftn(ah, s=self.grid.shape, axes=self.axes)


def step_sym(A: GaugeField, xi, C, dt, white=False, extra=None, prop: Propagator | None = None):
    """One exponential step of ``dA = (Delta A + N(A) + C A + xi) dt``.

    ``xi`` is a mollified-noise slice (``white=False``) or a white-noise cell
    of variance ``1/(dt h^d)`` (``white=True``); ``extra`` is added to the
    explicit forcing.
    """
    prop = prop or Propagator(A.grid, dt, C)
    forcing = None if A.algebra.abelian else ym_nonlinearity(A)
    if extra is not None:
        forcing = extra if forcing is None else forcing + extra
    if xi is not None and not white:
        forcing = xi if forcing is None else forcing + xi
    return A.like(prop(A.coeffs, forcing, xi if white else None))


# --- trajectories ---------------------------------------------------------------


@dataclass
class Trajectory:
    """Sampled states of one run; ``status`` is ``running``, ``horizon`` or ``cemetery``."""

    times: list = field(default_factory=list)
    states: list = field(default_factory=list)
    status: str = "running"
    jump_times: list = field(default_factory=list)
    pre_jump: list = field(default_factory=list)
    post_jump: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    def record(self, t, state):
        if self.status == "cemetery":
            raise RuntimeError("no states may be recorded after the cemetery state")
        self.times.append(float(t))
        self.states.append(state.copy())

    def kill(self, t, **diag):
        self.status = "cemetery"
        self.diagnostics.update({"time": float(t), **diag})

    @property
    def final(self):
        return self.states[-1] if self.states else None


def _blow_up_check(A: GaugeField, config: SimConfig, step):
    """``None`` if the state is acceptable, else a diagnostics dict."""
    c = A.coeffs
    if not np.all(np.isfinite(c)):
        bad = np.argwhere(~np.isfinite(c))[0]
        return {"step": step, "reason": "non-finite value", "component": int(bad[0]), "index": bad[1:].tolist()}
    sup = float(np.max(np.abs(c)))
    if sup <= config.blow_up:
        return None
    from .observables import holder_besov_norm

    # sup norm bounds the heat-flow norm, so it only needs computing here
    norm = holder_besov_norm(A, -0.25)
    if norm > config.blow_up:
        comp = int(np.argmax(np.max(np.abs(c).reshape(c.shape[0], -1), axis=1)))
        return {"step": step, "reason": "norm above blow-up threshold", "norm": norm, "component": comp}
    return None


class NoiseSource:
    """White or mollified noise for a run, addressed by step index."""

    def __init__(self, config: SimConfig, stream=0):
        self.config = config
        alg = config.algebra
        if config.eps is None:
            self.white = WhiteNoise(config.seed, config.grid, config.dt, alg, stream)
            self.moll = None
        else:
            wn = WhiteNoise(config.seed, config.noise_grid, config.tau, alg, stream)
            self.moll = MollifiedNoise(wn, get_mollifier(config.mollifier, config.grid.d), config.eps, config.grid)

    @property
    def is_white(self):
        return self.moll is None

    def __call__(self, n, rotation=None):
        if self.moll is None:
            return self.white.cell(n)
        return self.moll.field(n * self.config.dt, rotation)


def _sample_due(config, n):
    k = config.sample_every
    return (k and n % k == 0) or n == config.steps


def solve_sym(config: SimConfig, A0: GaugeField, observer: Callable | None = None, noise=None) -> Trajectory:
    """Integrate the renormalised equation with mass ``C_bphz + C_bare`` to the horizon.

    ``observer(n, t, A)`` is called after every step (and at ``n = 0``).
    """
    alg = config.algebra
    if not alg.abelian:
        config.check_stability()
    C = counterterm_matrix(config) + _mass(config.bare_mass, alg.dim)
    prop = Propagator(config.grid, config.dt, C)
    noise = noise or NoiseSource(config)
    traj = Trajectory()
    traj.diagnostics["mass"] = C.tolist()
    A = A0.copy()
    traj.record(0.0, A)
    if observer:
        observer(0, 0.0, A)
    for n in range(config.steps):
        A = step_sym(A, noise(n), C, config.dt, white=noise.is_white, prop=prop)
        t = (n + 1) * config.dt
        bad = _blow_up_check(A, config, n + 1)
        if bad:
            traj.kill(t, **bad)
            return traj
        if observer:
            observer(n + 1, t, A)
        if _sample_due(config, n + 1):
            traj.record(t, A)
    traj.status = "horizon"
    return traj


def gff_sample(grid: TorusGrid, algebra, seed, components=None):
    """Stationary law of the stochastic heat equation with zero mean.

    Each nonzero mode of ``rfftn(A) / n^d`` has ``E|.|^2 = 1 / (2 mu_k)``.
    """
    from .noise import philox_generator

    alg = get_algebra(algebra) if isinstance(algebra, str) else algebra
    comps = grid.d if components is None else components
    rng = philox_generator(seed, 0, GFF_STREAM)
    z = rng.standard_normal((comps, *grid.shape, alg.dim))
    axes = tuple(range(1, grid.d + 1))
    mu = grid.laplacian_symbol(real=True)
    scale = np.where(mu > 0, grid.n ** (grid.d / 2) / np.sqrt(2 * np.where(mu > 0, mu, 1.0)), 0.0)
    zh = np.fft.rfftn(z, axes=axes) * scale[None, ..., None]
    return GaugeField(grid, alg, np.fft.irfftn(zh, s=grid.shape, axes=axes))


def solve_she_exact(config: SimConfig, A0: GaugeField, observer: Callable | None = None) -> Trajectory:
    """Exact-in-law sampler of ``dA = Delta A dt + dW`` (no brackets, no mass)."""
    if config.eps is not None:
        raise SimConfigError("solve_she_exact uses unmollified white noise (eps = None)")
    prop = Propagator(config.grid, config.dt)
    noise = WhiteNoise(config.seed, config.grid, config.dt, A0.algebra)
    traj = Trajectory()
    a = A0.coeffs.copy()
    traj.record(0.0, A0)
    if observer:
        observer(0, 0.0, A0)
    for n in range(config.steps):
        a = prop(a, None, noise.cell(n))
        t = (n + 1) * config.dt
        if observer:
            observer(n + 1, t, A0.like(a))
        if _sample_due(config, n + 1):
            traj.record(t, A0.like(a))
    traj.status = "horizon"
    return traj


# --- gauge-transformation flow ---------------------------------------------------------


def g_velocity(B: GaugeField, g: GroupField, convention="right"):
    """Right convention: ``(d_t g) g^{-1} = d_j((d_j g) g^{-1}) + [B_j, (d_j g) g^{-1}]``.

    Left convention: ``g^{-1} d_t g = d_j(g^{-1} d_j g) + [B_j, g^{-1} d_j g]``,
    where ``B`` is then the untransformed field.
    """
    if convention == "right":
        R = right_log_derivative(g)
    elif convention == "left":
        R = left_log_derivative(g)
    else:
        raise ValueError(f"unknown convention {convention!r}")
    grid = g.grid
    out = sum(partial_derivative(R[j], j, grid) for j in range(grid.d))
    if not g.algebra.abelian:
        out = out + sum(bracket_coeffs(g.algebra, B.coeffs[j], R[j]) for j in range(grid.d))
    return out, R


def _g_update(g: GroupField, r, dt, n, convention="right"):
    inc = exp_map(g.algebra.from_coeffs(dt * r))
    vals = group_matmul(inc, g.values) if convention == "right" else group_matmul(g.values, inc)
    if (n + 1) % REUNITARISE_EVERY == 0:
        drift = float(np.max(np.abs(vals @ np.conj(np.swapaxes(vals, -1, -2)) - np.eye(g.algebra.n))))
        if drift > 1e-12:
            log.debug("re-unitarising g at step %d (drift %.2e)", n + 1, drift)
        vals = project_unitary(vals)
    return _fast_group(g, vals)


def _fast_group(g, vals):
    """GroupField without the unitarity check (values come from exp products)."""
    out = object.__new__(GroupField)
    out.grid, out.algebra, out.values = g.grid, g.algebra, vals
    return out


def _coupled(config: SimConfig, B0, g0, bar: bool, observer=None, convention="right"):
    alg = config.algebra
    if not alg.abelian:
        config.check_stability()
    if config.eps is None:
        raise SimConfigError("the coupled systems are stated for eps > 0")
    noise = NoiseSource(config)
    if bar and not noise.moll.mollifier.non_anticipative:
        raise SimConfigError("the rotated-noise system needs a non-anticipative mollifier")
    C = counterterm_matrix(config) + _mass(config.bare_mass, alg.dim)
    if config.dg_mass is not None:
        Cdg = _mass(config.dg_mass, alg.dim)
    elif bar:
        Cdg = _mass(config.bare_mass, alg.dim) - check_c_matrix(config)
    else:
        Cdg = C
    prop = Propagator(config.grid, config.dt, C)
    stride = noise.moll.stride
    traj, gtraj = Trajectory(), []
    B, g = B0.copy(), _fast_group(g0, g0.values.copy())
    traj.record(0.0, B)
    gtraj.append(g.values.copy())
    if observer:
        observer(0, 0.0, B, g)
    d = config.grid.d
    for n in range(config.steps):
        r, R = g_velocity(B, g, convention)
        if bar:
            sub = _fast_group(g, g.values[(slice(None, None, stride),) * d])

            def rotation(cell, sub=sub):
                return adjoint_coeffs(sub, cell)

            xi = noise(n, rotation)
        else:
            xi = adjoint_coeffs(g, noise(n))
        extra = R @ Cdg.T if np.any(Cdg) else None
        B = step_sym(B, xi, C, config.dt, extra=extra, prop=prop)
        g = _g_update(g, r, config.dt, n, convention)
        t = (n + 1) * config.dt
        bad = _blow_up_check(B, config, n + 1)
        if bad:
            traj.kill(t, **bad)
            return traj, gtraj
        if observer:
            observer(n + 1, t, B, g)
        if _sample_due(config, n + 1):
            traj.record(t, B)
            gtraj.append(g.values.copy())
    traj.status = "horizon"
    traj.diagnostics.update({"mass": C.tolist(), "dg_mass": Cdg.tolist()})
    return traj, gtraj


def solve_coupled_bg(config: SimConfig, B0: GaugeField, g0: GroupField, observer=None):
    """Co-evolve ``B`` (noise ``Ad_g xi_eps``) and the gauge transformation ``g``.

    The ``(dg) g^{-1}`` term carries ``config.dg_mass`` if given, otherwise the
    same matrix as ``B``.  Returns the trajectory and the list of sampled ``g``.
    """
    return _coupled(config, B0, g0, bar=False, observer=observer)


def solve_bar_a(config: SimConfig, A0: GaugeField, g0: GroupField, observer=None):
    """Co-evolve ``A-bar`` driven by ``chi_eps * (Ad_g xi)`` and ``g-bar``.

    Each noise cell is rotated by ``g-bar`` once, when it first enters the
    mollifier window.  The ``(dg) g^{-1}`` mass defaults to ``bare_mass - Check C``.
    """
    return _coupled(config, A0, g0, bar=True, observer=observer)


def solve_det_ym_flow(config: SimConfig, a: GaugeField, t, energies=False):
    """Noiseless flow ``d_t A = Delta A + N(A)`` up to time ``t``."""
    if t < 0:
        raise SimConfigError("flow time must be non-negative")
    steps = int(np.ceil(t / config.dt - 1e-9))
    out = a.copy()
    record = [ym_energy(out)] if energies else None
    if steps == 0:
        return (out, np.array(record)) if energies else out
    dt = t / steps
    if not a.algebra.abelian:
        config.with_(dt=dt).check_stability()
    prop = Propagator(a.grid, dt)
    for n in range(steps):
        out = step_sym(out, None, None, dt, prop=prop)
        if not np.all(np.isfinite(out.coeffs)) or float(np.max(np.abs(out.coeffs))) > config.blow_up:
            raise BlowUpError(f"deterministic flow blew up at step {n + 1} (t = {(n + 1) * dt:.4g})")
        if energies:
            record.append(ym_energy(out))
    return (out, np.array(record)) if energies else out


# --- generative process ----------------------------------------------------------


def abelian_selection(A: GaugeField):
    """Shipped orbit representative for U(1): zero modes shifted into ``[-pi, pi)``."""
    return abelian_representative(A)[0]


def default_trigger_norm(A: GaugeField):
    from .observables import holder_besov_norm

    return holder_besov_norm(A, -0.25)


def run_generative(
    config: SimConfig,
    a0: GaugeField,
    selection: Callable = abelian_selection,
    norm: Callable = default_trigger_norm,
    check_every=1,
    observer=None,
) -> Trajectory:
    """Run the renormalised equation, jumping to ``selection(A)`` whenever
    ``norm(A) >= 2 + norm(selection(A))``; the noise stream continues unchanged."""
    alg = config.algebra
    if not alg.abelian:
        config.check_stability()
    C = counterterm_matrix(config) + _mass(config.bare_mass, alg.dim)
    prop = Propagator(config.grid, config.dt, C)
    noise = NoiseSource(config)
    traj = Trajectory()
    A = a0.copy()

    def maybe_jump(A, t, n):
        try:
            rep = selection(A)
        except Exception as exc:  # surface the selection failure with context
            raise RuntimeError(f"orbit selection failed at step {n} (t = {t:.4g}): {exc}") from exc
        rep_norm = norm(rep)
        if rep_norm > config.blow_up:
            traj.kill(t, step=n, reason="representative above blow-up threshold", norm=rep_norm)
            return None
        if norm(A) >= 2 + rep_norm:
            traj.jump_times.append(float(t))
            traj.pre_jump.append(A.copy())
            traj.post_jump.append(rep.copy())
            return rep
        return A

    A = maybe_jump(A, 0.0, 0)
    if A is None:
        return traj
    traj.record(0.0, A)
    if observer:
        observer(0, 0.0, A)
    for n in range(config.steps):
        A = step_sym(A, noise(n), C, config.dt, white=noise.is_white, prop=prop)
        t = (n + 1) * config.dt
        if not np.all(np.isfinite(A.coeffs)):
            traj.kill(t, step=n + 1, reason="non-finite value")
            return traj
        if (n + 1) % check_every == 0:
            A = maybe_jump(A, t, n + 1)
            if A is None:
                return traj
        if observer:
            observer(n + 1, t, A)
        if _sample_due(config, n + 1):
            traj.record(t, A)
    traj.status = "horizon"
    return traj
