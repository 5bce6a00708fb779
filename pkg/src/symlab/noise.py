"""Space-time white noise and its mollification.

White noise is generated cell by cell from a counter-based generator (numpy's
Philox keyed by the seed, with the cell index in the counter), so any time cell
can be reproduced independently of the others.

Mollified noise ``xi_eps = chi_eps * xi`` is evaluated on a simulation grid by a
midpoint rule over the noise cells: cell ``k`` (time span ``[k tau, (k+1) tau)``)
contributes ``tau h^d chi_eps(t - (k + 1/2) tau, x - y) xi_k(y)``.  The noise
grid may be coarser than the simulation grid; this keeps the driving signal
fixed while the simulation grid is refined.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from .lattice import TorusGrid
from .lie_algebra import LieAlgebra, get_algebra

_MASK64 = (1 << 64) - 1


class NoiseConfigError(ValueError):
    pass


def philox_generator(seed, cell, stream=0):
    """Generator for one noise cell; independent of every other ``(cell, stream)``."""
    counter = np.array([0, 0, cell & _MASK64, stream & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=seed & ((1 << 128) - 1), counter=counter))


@dataclass
class WhiteNoise:
    """Discrete white noise: each orthonormal coefficient of each cell is
    ``N(0, 1 / (dt h^d))``; components ``xi_1..xi_d`` are independent."""

    seed: int
    grid: TorusGrid
    dt: float
    algebra: LieAlgebra
    stream: int = 0

    def __post_init__(self):
        if self.dt <= 0:
            raise NoiseConfigError("white noise needs dt > 0")
        if isinstance(self.algebra, str):
            self.algebra = get_algebra(self.algebra)

    @property
    def std(self):
        return 1.0 / np.sqrt(self.dt * self.grid.cell_volume)

    @property
    def cell_shape(self):
        return (self.grid.d, *self.grid.shape, self.algebra.dim)

    def cell(self, k):
        """Noise values of time cell ``k`` (any integer, negative allowed)."""
        rng = philox_generator(self.seed, int(k), self.stream)
        return self.std * rng.standard_normal(self.cell_shape)

    def increments(self, k0, steps):
        """Cells ``k0 .. k0+steps-1`` stacked, shape ``(steps, d, *shape, dim)``."""
        return np.stack([self.cell(k0 + j) for j in range(steps)])


def sample_white_noise(seed, grid, dt, steps, algebra="su2", stream=0):
    """Noise object plus its first ``steps`` increments."""
    wn = WhiteNoise(seed, grid, dt, algebra, stream)
    return wn, wn.increments(0, steps)


# --- mollifiers ----------------------------------------------------------------


def _ball_volume_weight(d):
    return 2 * np.pi if d == 2 else 4 * np.pi


@dataclass(frozen=True)
class Mollifier:
    """Space-time bump ``c exp(-1/(1 - tau^2 - rho^2))`` with
    ``tau = (t - t0)/w`` and ``rho = |x|/a``, normalised to unit mass in ``d``
    spatial dimensions.  Support is ``(t0 - w, t0 + w) x B(0, a)``."""

    name: str
    d: int
    t0: float
    w: float
    a: float
    norm: float = field(default=1.0, repr=False)

    @property
    def t_lo(self):
        return self.t0 - self.w

    @property
    def t_hi(self):
        return self.t0 + self.w

    @property
    def non_anticipative(self):
        return self.t_lo >= 0.0

    def _u(self, t, r):
        return 1.0 - ((t - self.t0) / self.w) ** 2 - (r / self.a) ** 2

    def profile(self, t, r):
        """Unit-scale profile ``chi(t, |x| = r)``."""
        u = self._u(np.asarray(t, float), np.asarray(r, float))
        inside = u > 0
        out = np.zeros(np.broadcast(u).shape)
        out[inside] = np.exp(-1.0 / u[inside])
        return self.norm * out

    def profile_dr(self, t, r):
        """Radial derivative of the unit profile."""
        t = np.asarray(t, float)
        r = np.asarray(r, float)
        u = self._u(t, r)
        inside = u > 0
        out = np.zeros(np.broadcast(u).shape)
        ui = u[inside]
        rr = np.broadcast_to(r, u.shape)[inside]
        out[inside] = np.exp(-1.0 / ui) * (-2.0 * rr / (self.a**2 * ui**2))
        return self.norm * out

    def spatial_radius(self, t):
        """Radius of the support slice at unit time ``t``."""
        q = 1.0 - ((np.asarray(t, float) - self.t0) / self.w) ** 2
        return self.a * np.sqrt(np.clip(q, 0.0, None))

    def scaled(self, t, r, eps):
        """``chi_eps(t, x) = eps^{-2-d} chi(t/eps^2, x/eps)``."""
        return eps ** (-2.0 - self.d) * self.profile(np.asarray(t) / eps**2, np.asarray(r) / eps)

    def l2_squared(self, eps=1.0, nodes=96):
        """``int chi_eps^2`` by tensor Gauss-Legendre quadrature."""
        t, wt = _gl(self.t_lo, self.t_hi, nodes)
        x, wx = _gl(0.0, self.a, nodes)
        vals = self.profile(t[:, None], x[None, :]) ** 2
        rad = _ball_volume_weight(self.d) * x ** (self.d - 1)
        return float(wt @ vals @ (wx * rad)) * eps ** (-2.0 - self.d)


def _gl(lo, hi, n):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (hi - lo) * x + 0.5 * (hi + lo), 0.5 * (hi - lo) * w


_PROFILES = {
    # symmetric in time; anticipative
    "sym": (0.0, 1.0, 1.0),
    # supported in (0, 1) x B(0, 1)
    "na": (0.5, 0.5, 1.0),
    # a second non-anticipative choice, supported in (0.2, 1) x B(0, 0.75)
    "na2": (0.6, 0.4, 0.75),
}

MOLLIFIER_NAMES = tuple(_PROFILES)


def get_mollifier(name, d):
    if name not in _PROFILES:
        raise NoiseConfigError(f"unknown mollifier {name!r}; choose from {MOLLIFIER_NAMES}")
    if d not in (2, 3):
        raise NoiseConfigError("mollifiers are defined for d = 2, 3")
    t0, w, a = _PROFILES[name]
    raw = Mollifier(name, d, t0, w, a)
    t, wt = _gl(raw.t_lo, raw.t_hi, 128)
    x, wx = _gl(0.0, a, 128)
    mass = wt @ raw.profile(t[:, None], x[None, :]) @ (wx * _ball_volume_weight(d) * x ** (d - 1))
    return Mollifier(name, d, t0, w, a, norm=1.0 / float(mass))


def check_resolution(eps, h, dt):
    """Enforce ``eps >= max(2h, 2 sqrt(dt))``."""
    need = max(2 * h, 2 * np.sqrt(dt))
    if eps < need * (1 - 1e-12):
        raise NoiseConfigError(
            f"mollifier scale eps={eps:.4g} is under-resolved; need eps >= max(2h, 2 sqrt(dt)) = {need:.4g}"
        )


class MollifiedNoise:
    """Streaming evaluation of ``chi_eps * xi`` on a simulation grid.

    ``white`` lives on a noise grid whose ``n`` divides the simulation ``n``;
    its ``dt`` is the noise cell duration ``tau``.
    """

    def __init__(self, white: WhiteNoise, mollifier: Mollifier, eps: float, grid: TorusGrid):
        if grid.n % white.grid.n or grid.d != white.grid.d:
            raise NoiseConfigError("noise grid size must divide the simulation grid size")
        if mollifier.d != grid.d:
            raise NoiseConfigError("mollifier dimension does not match the grid")
        check_resolution(eps, white.grid.h, white.dt)
        check_resolution(eps, grid.h, 0.0)
        self.white = white
        self.mollifier = mollifier
        self.eps = float(eps)
        self.grid = grid
        self.stride = grid.n // white.grid.n
        self.tau = white.dt
        self.prefactor = self.tau * white.grid.cell_volume
        self._cache: OrderedDict[int, np.ndarray] = OrderedDict()
        self._activated = -(1 << 62)
        d = grid.d
        off = (np.arange(grid.n) + grid.n // 2) % grid.n - grid.n // 2
        mesh = np.meshgrid(*([off * grid.h] * d), indexing="ij")
        self._dist = np.sqrt(sum(m**2 for m in mesh))
        self._axes = tuple(range(1, d + 1))

    def active_cells(self, t):
        """Cell indices whose midpoint lag lies inside the mollifier support."""
        e2 = self.eps**2
        lo = t - e2 * self.mollifier.t_hi
        hi = t - e2 * self.mollifier.t_lo
        k_lo = int(np.floor(lo / self.tau - 0.5)) - 1
        k_hi = int(np.ceil(hi / self.tau - 0.5)) + 1
        out = []
        for k in range(k_lo, k_hi + 1):
            lag = t - (k + 0.5) * self.tau
            if e2 * self.mollifier.t_lo < lag < e2 * self.mollifier.t_hi:
                out.append(k)
        return out

    def _upsampled_fft(self, values):
        d = self.grid.d
        full = np.zeros((d, *self.grid.shape, values.shape[-1]))
        sl = (slice(None),) + (slice(None, None, self.stride),) * d
        full[sl] = values
        return np.fft.rfftn(full, axes=self._axes)

    def _cell_fft(self, k, rotation):
        hit = self._cache.get(k)
        if hit is not None:
            return hit
        values = self.white.cell(k)
        if rotation is not None:
            if not self.mollifier.non_anticipative:
                raise NoiseConfigError("rotated noise requires a non-anticipative mollifier")
            if k <= self._activated:
                raise NoiseConfigError("noise cells must be activated in time order")
            values = rotation(values)
            self._activated = k
        out = self._cache[k] = self._upsampled_fft(values)
        return out

    def kernel_slice(self, lag):
        return self.mollifier.scaled(lag, self._dist, self.eps)

    def field(self, t, rotation=None):
        """``xi_eps(t)`` as coordinates ``(d, *shape, dim)``.

        ``rotation`` (optional) maps a raw noise cell to its rotated version; it
        is applied once, when the cell first enters the window.
        """
        cells = self.active_cells(t)
        acc = None
        for k in cells:
            lag = t - (k + 0.5) * self.tau
            kern = np.fft.rfftn(self.kernel_slice(lag))
            term = self._cell_fft(k, rotation) * kern[None, ..., None]
            acc = term if acc is None else acc + term
        while self._cache and cells and next(iter(self._cache)) < cells[0]:
            self._cache.popitem(last=False)
        shape = (self.grid.d, *self.grid.shape, self.white.algebra.dim)
        if acc is None:
            return np.zeros(shape)
        return self.prefactor * np.fft.irfftn(acc, s=self.grid.shape, axes=self._axes)


def mollify(white: WhiteNoise, mollifier: Mollifier, eps, times, grid=None):
    """``xi_eps`` at each time in ``times``; shape ``(len(times), d, *shape, dim)``."""
    mn = MollifiedNoise(white, mollifier, eps, grid or white.grid)
    return np.stack([mn.field(t) for t in times])
