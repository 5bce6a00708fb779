"""Gauge transformations, holonomies and Wilson loops on the lattice torus."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .lattice import GaugeField, LatticeError, TorusGrid, line_integrals, partial_derivative
from .lie_algebra import (
    TOL_ALG,
    LieAlgebra,
    LieAlgebraError,
    anti_hermitian_part,
    dagger,
    exp_map,
    get_algebra,
    group_matmul,
    is_unitary,
)


class GaugeError(ValueError):
    pass


@dataclass
class GroupField:
    """``G``-valued function on the grid; ``values`` has shape ``(*grid.shape, N, N)``."""

    grid: TorusGrid
    algebra: LieAlgebra
    values: np.ndarray

    def __post_init__(self):
        if isinstance(self.algebra, str):
            self.algebra = get_algebra(self.algebra)
        self.values = np.asarray(self.values, dtype=complex)
        want = (*self.grid.shape, self.algebra.n, self.algebra.n)
        if self.values.shape != want:
            raise LatticeError(f"group field shape {self.values.shape}, expected {want}")
        if not is_unitary(self.values, tol=1e-8):
            raise LieAlgebraError("group field values must be unitary")

    @classmethod
    def identity(cls, grid, algebra):
        alg = get_algebra(algebra) if isinstance(algebra, str) else algebra
        return cls(grid, alg, alg.identity(grid.shape))

    @classmethod
    def constant(cls, grid, algebra, g):
        alg = get_algebra(algebra) if isinstance(algebra, str) else algebra
        return cls(grid, alg, np.broadcast_to(np.asarray(g, complex), (*grid.shape, alg.n, alg.n)).copy())

    @classmethod
    def exp(cls, grid, algebra, coeffs):
        """``exp`` of an algebra-valued function given by coordinates ``(*shape, dim)``."""
        alg = get_algebra(algebra) if isinstance(algebra, str) else algebra
        return cls(grid, alg, exp_map(alg.from_coeffs(coeffs)))

    def inverse(self):
        return GroupField(self.grid, self.algebra, dagger(self.values))

    def __matmul__(self, other):
        return GroupField(self.grid, self.algebra, group_matmul(self.values, other.values))

    def at(self, point):
        """Value at a grid point given in torus coordinates."""
        idx = tuple(int(round(c * self.grid.n)) % self.grid.n for c in np.atleast_1d(point))
        off = np.abs(np.asarray(point) * self.grid.n - np.round(np.asarray(point) * self.grid.n))
        if np.any(off > 1e-9):
            raise GaugeError("point is not a grid point")
        return self.values[idx]

    def ad_matrix(self):
        return self.algebra.ad_matrix(self.values)


def smooth_random_coeffs(grid: TorusGrid, dim, rng, modes=2, amplitude=1.0, lead=()):
    """Random trigonometric polynomial with wavenumbers ``|k_j| <= modes``.

    Returns coordinates of shape ``(*lead, *grid.shape, dim)``.
    """
    x = grid.coords()
    out = np.zeros((*lead, *grid.shape, dim))
    ks = np.array(np.meshgrid(*([np.arange(-modes, modes + 1)] * grid.d), indexing="ij")).reshape(grid.d, -1).T
    for k in ks:
        if not np.any(k):
            continue
        phase = 2 * np.pi * sum(kj * xj for kj, xj in zip(k, x))
        a = rng.standard_normal((*lead, 1, dim)) / (1 + k @ k)
        b = rng.standard_normal((*lead, 1, dim)) / (1 + k @ k)
        c, s = np.cos(phase)[..., None], np.sin(phase)[..., None]
        out += a.reshape(*lead, *([1] * grid.d), dim) * c + b.reshape(*lead, *([1] * grid.d), dim) * s
    return amplitude * out


def smooth_gauge_field(grid, algebra, rng, modes=2, amplitude=1.0):
    alg = get_algebra(algebra) if isinstance(algebra, str) else algebra
    return GaugeField(grid, alg, smooth_random_coeffs(grid, alg.dim, rng, modes, amplitude, lead=(grid.d,)))


def smooth_group_field(grid, algebra, rng, modes=2, amplitude=1.0):
    alg = get_algebra(algebra) if isinstance(algebra, str) else algebra
    return GroupField.exp(grid, alg, smooth_random_coeffs(grid, alg.dim, rng, modes, amplitude))


# --- gauge action -----------------------------------------------------------------


def right_log_derivative(g: GroupField):
    """Coordinates of ``(d_j g) g^{-1}`` (central differences, anti-Hermitian part).

    Shape ``(d, *shape, dim)``.
    """
    gi = dagger(g.values)
    out = []
    for j in range(g.grid.d):
        dg = partial_derivative(g.values, j, g.grid)
        out.append(g.algebra.to_coeffs(anti_hermitian_part(group_matmul(dg, gi))))
    return np.stack(out)


def left_log_derivative(g: GroupField):
    """Coordinates of ``g^{-1} d_j g``; shape ``(d, *shape, dim)``."""
    gi = dagger(g.values)
    out = []
    for j in range(g.grid.d):
        dg = partial_derivative(g.values, j, g.grid)
        out.append(g.algebra.to_coeffs(anti_hermitian_part(group_matmul(gi, dg))))
    return np.stack(out)


def adjoint_coeffs(g: GroupField, coeffs):
    """``Ad_g`` applied to coordinate arrays of shape ``(k, *shape, dim)``."""
    if g.algebra.abelian:
        return np.array(coeffs, copy=True)
    M = g.ad_matrix()
    return np.sum(M[None] * np.asarray(coeffs)[..., None, :], axis=-1)


def gauge_transform(A: GaugeField, g: GroupField) -> GaugeField:
    """``A^g = Ad_g A - (dg) g^{-1}``."""
    if A.grid != g.grid or A.algebra.name != g.algebra.name:
        raise GaugeError("gauge field and group field live on different grids or groups")
    return A.like(adjoint_coeffs(g, A.coeffs) - right_log_derivative(g))


def group_action_property_check(A: GaugeField, g: GroupField, u: GroupField) -> float:
    """Sup-norm of ``(A^g)^u - A^{ug}``; vanishes in the continuum."""
    lhs = gauge_transform(gauge_transform(A, g), u)
    rhs = gauge_transform(A, u @ g)
    return (lhs - rhs).sup_norm()


# --- paths and holonomy --------------------------------------------------------------


def _min_image(delta):
    return np.mod(np.asarray(delta) + 0.5, 1.0) - 0.5


@dataclass(frozen=True)
class Path:
    """Piecewise-linear path through sample points on the torus.

    Consecutive samples are joined by the shortest displacement, so each step
    must be shorter than half the torus in every coordinate.
    """

    points: np.ndarray
    smooth: bool = False

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        if pts.shape[0] < 2:
            raise GaugeError("a path needs at least two points")
        raw = np.diff(pts, axis=0)
        if np.any(np.abs(_min_image(raw)) >= 0.5 - 1e-12) or np.any(np.abs(raw - _min_image(raw) - np.round(raw - _min_image(raw))) > 1e-12):
            raise GaugeError("consecutive path points must be within half the torus")
        object.__setattr__(self, "points", pts)

    @property
    def d(self):
        return self.points.shape[1]

    @property
    def steps(self):
        return _min_image(np.diff(self.points, axis=0))

    @property
    def closed(self):
        return bool(np.all(np.abs(_min_image(self.points[-1] - self.points[0])) <= 1e-9))

    @property
    def length(self):
        return float(np.linalg.norm(self.steps, axis=1).sum())

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="") as fh:
            rows = [[float(c) for c in row] for row in csv.reader(fh) if row and not row[0].startswith("#")]
        return cls(np.array(rows))

    def rotated(self, k):
        """Same closed loop started at sample ``k``."""
        if not self.closed:
            raise GaugeError("only closed paths can be rotated")
        body = self.points[:-1]
        pts = np.concatenate([body[k:], body[:k], body[k : k + 1]])
        return Path(pts, self.smooth)


def rectangle_loop(x0, a, b, axes=(0, 1), d=2, points_per_side=2):
    """Axis-parallel rectangle with sides ``a`` (along ``axes[0]``) and ``b``."""
    if not (0 < a < 1 and 0 < b < 1):
        raise GaugeError("rectangle sides must lie in (0, 1)")
    e1 = np.zeros(d)
    e2 = np.zeros(d)
    e1[axes[0]] = a
    e2[axes[1]] = b
    corners = [np.zeros(d), e1, e1 + e2, e2, np.zeros(d)]
    pts = []
    per = max(points_per_side, int(np.ceil(2 * max(a, b))) + 1)
    for p, q in zip(corners[:-1], corners[1:]):
        for s in np.linspace(0, 1, per, endpoint=False):
            pts.append(p + s * (q - p))
    pts.append(corners[-1])
    return Path(np.mod(np.asarray(x0, float) + np.array(pts), 1.0))


def loop_catalogue(sides, d=2, x0=None):
    """Rectangles of every pair of side lengths in ``sides`` based at ``x0``."""
    x0 = np.full(d, 0.125) if x0 is None else np.asarray(x0, float)
    return {(a, b): rectangle_loop(x0, a, b, d=d) for a in sides for b in sides}


def _ordered_product(mats):
    """``M_0 M_1 ... M_{k-1}`` by pairwise reduction."""
    while mats.shape[0] > 1:
        if mats.shape[0] % 2:
            tail = mats[-1:]
            mats = np.concatenate([mats[:-1:2] @ mats[1::2], tail])
        else:
            mats = mats[0::2] @ mats[1::2]
    return mats[0]


def holonomy(A: GaugeField, path: Path, substeps=None, quad=None):
    """Holonomy ``y_1`` of ``dy = y dl_A`` along ``path``.

    Each piece is split into ``substeps`` sub-segments (default: length at most
    ``h``) and ``y <- y exp(A(l_k))`` is applied in order.
    """
    if path.d != A.grid.d:
        raise GaugeError("path dimension does not match the field")
    steps = path.steps
    lengths = np.linalg.norm(steps, axis=1)
    if substeps is None:
        counts = np.maximum(1, np.ceil(lengths / A.grid.h).astype(int))
    else:
        if int(substeps) < 1:
            raise GaugeError("substeps must be at least 1")
        counts = np.full(len(steps), int(substeps))
    bases, disps = [], []
    for p, v, c in zip(path.points[:-1], steps, counts):
        s = np.arange(c)[:, None] / c
        bases.append(p + s * v)
        disps.append(np.repeat(v[None] / c, c, axis=0))
    x = np.concatenate(bases)
    v = np.concatenate(disps)
    if quad is None:
        quad = max(2, int(np.ceil(2 * float(np.max(np.linalg.norm(v, axis=1))) / A.grid.h)) + 1)
    coeffs = line_integrals(A, x, v, m=quad)
    mats = exp_map(A.algebra.from_coeffs(coeffs))
    return _ordered_product(mats)


def wilson_loop(A: GaugeField, loop: Path, substeps=None):
    """``Tr(hol(A, loop)) / N``."""
    if not loop.closed:
        raise GaugeError("wilson_loop needs a closed path")
    y = holonomy(A, loop, substeps)
    return complex(np.trace(y) / A.algebra.n)


def holonomy_conjugation_identity(A: GaugeField, g: GroupField, path: Path, substeps=None):
    """``|| g(y) - hol(A^g)^{-1} g(x) hol(A) ||`` for a path from ``x`` to ``y``."""
    x = path.points[0]
    y = path.points[-1]
    Ag = gauge_transform(A, g)
    rhs = dagger(holonomy(Ag, path, substeps)) @ g.at(x) @ holonomy(A, path, substeps)
    return float(np.linalg.norm(g.at(y) - rhs, ord=2))


def abelian_representative(A: GaugeField):
    """Shift each component mean into ``[-pi, pi)`` by an integer multiple of ``2 pi``.

    Returns the representative and ``g(x) = exp(i 2 pi sum_j k_j x_j)``.
    """
    if A.algebra.n != 1:
        raise GaugeError("abelian_representative supports U(1) only")
    means = A.mean()[:, 0]
    k = np.floor((means + np.pi) / (2 * np.pi))
    shift = (2 * np.pi * k)[(slice(None),) + (None,) * (A.grid.d + 1)]
    B = A.like(A.coeffs - shift)
    phase = 2 * np.pi * sum(kj * xj for kj, xj in zip(k, A.grid.coords()))
    g = GroupField(A.grid, A.algebra, np.exp(1j * phase)[..., None, None])
    return B, g


__all__ = [
    "GaugeError",
    "GroupField",
    "Path",
    "TOL_ALG",
    "abelian_representative",
    "adjoint_coeffs",
    "gauge_transform",
    "group_action_property_check",
    "holonomy",
    "holonomy_conjugation_identity",
    "left_log_derivative",
    "loop_catalogue",
    "rectangle_loop",
    "right_log_derivative",
    "smooth_gauge_field",
    "smooth_group_field",
    "smooth_random_coeffs",
    "wilson_loop",
]
