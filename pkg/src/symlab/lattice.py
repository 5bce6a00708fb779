"""Lattice 1-forms on the unit torus and their finite-difference calculus.

A :class:`GaugeField` stores its components as real coordinates in the
orthonormal algebra basis, shape ``(d, n, ..., n, dim)``.  This is the same
data as ``d`` arrays of anti-Hermitian matrices but keeps the anti-Hermitian
invariant exact and makes brackets cheap.  ``GaugeField.matrices()`` converts
to the matrix picture when needed.

Spatial operators act on plain arrays too; pass ``axis`` to say where the
``d`` spatial axes start.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lie_algebra import LieAlgebra, get_algebra, structure_matrices


class LatticeError(ValueError):
    pass


@dataclass(frozen=True)
class TorusGrid:
    """Periodic grid with ``n`` points per side on ``[0, 1)^d``."""

    d: int
    n: int

    def __post_init__(self):
        if self.d not in (2, 3):
            raise LatticeError(f"d must be 2 or 3, got {self.d}")
        if self.n < 8 or self.n % 2:
            raise LatticeError(f"n must be even and >= 8, got {self.n}")

    @property
    def h(self):
        return 1.0 / self.n

    @property
    def shape(self):
        return (self.n,) * self.d

    @property
    def cell_volume(self):
        return self.h**self.d

    def coords(self):
        """Coordinate arrays ``x_j`` of shape ``grid.shape`` each."""
        ax = np.arange(self.n) * self.h
        return np.meshgrid(*([ax] * self.d), indexing="ij")

    def wavenumbers(self, real=False):
        """Integer wavenumbers per axis, broadcastable to the (r)fft shape."""
        k = np.fft.fftfreq(self.n, d=1.0 / self.n)
        out = []
        for j in range(self.d):
            kj = np.fft.rfftfreq(self.n, d=1.0 / self.n) if (real and j == self.d - 1) else k
            shp = [1] * self.d
            shp[j] = kj.size
            out.append(kj.reshape(shp))
        return out

    def laplacian_symbol(self, real=False):
        """``mu_k = (2/h^2) sum_j (1 - cos(2 pi k_j h))`` (non-negative)."""
        h = self.h
        mu = sum(2.0 / h**2 * (1.0 - np.cos(2 * np.pi * kj * h)) for kj in self.wavenumbers(real))
        return np.broadcast_to(mu, self.fft_shape(real)).copy()

    def fft_shape(self, real=False):
        if real:
            return (self.n,) * (self.d - 1) + (self.n // 2 + 1,)
        return self.shape


def _spatial_axes(grid, axis):
    return tuple(range(axis, axis + grid.d))


def _expand(sym, ndim, axis):
    """Reshape a spatial symbol so it broadcasts against an array of ``ndim`` dims."""
    return sym.reshape((1,) * axis + sym.shape + (1,) * (ndim - axis - sym.ndim))


def partial_derivative(f, j, grid, axis=0):
    """Central difference along spatial axis ``j`` (0-based), periodic wrap."""
    if not 0 <= j < grid.d:
        raise LatticeError(f"axis j={j} out of range for d={grid.d}")
    ax = axis + j
    return (np.roll(f, -1, axis=ax) - np.roll(f, 1, axis=ax)) / (2 * grid.h)


def laplacian(f, grid, axis=0):
    """Standard ``(2d+1)``-point Laplacian."""
    out = -2.0 * grid.d * f
    for j in range(grid.d):
        ax = axis + j
        out = out + np.roll(f, -1, axis=ax) + np.roll(f, 1, axis=ax)
    return out / grid.h**2


def heat_semigroup(f, t, grid, axis=0):
    """Apply ``exp(t Delta_h)`` exactly in discrete Fourier space."""
    if t < 0:
        raise LatticeError("heat_semigroup requires t >= 0")
    if t == 0:
        return np.array(f, copy=True)
    axes = _spatial_axes(grid, axis)
    real = not np.iscomplexobj(f)
    mult = _expand(np.exp(-t * grid.laplacian_symbol(real=real)), np.ndim(f), axis)
    if real:
        fh = np.fft.rfftn(f, axes=axes)
        return np.fft.irfftn(fh * mult, s=grid.shape, axes=axes)
    return np.fft.ifftn(np.fft.fftn(f, axes=axes) * mult, axes=axes)


class BracketCoeffs:
    """Lie bracket in coordinates, with a fast path for 3-dimensional algebras."""

    def __init__(self, algebra: LieAlgebra):
        self.dim = algebra.dim
        m = structure_matrices(algebra.basis)  # m[a, c, b] = <[e_a, e_b], e_c>
        self.f = np.ascontiguousarray(np.transpose(m, (0, 2, 1)))  # f[a, b, c]
        self.abelian = np.allclose(self.f, 0.0)
        self.cross_scale = None
        if self.dim == 3:
            eps = np.zeros((3, 3, 3))
            for a, b, c in [(0, 1, 2), (1, 2, 0), (2, 0, 1)]:
                eps[a, b, c], eps[b, a, c] = 1.0, -1.0
            scale = self.f[0, 1, 2]
            if np.allclose(self.f, scale * eps):
                self.cross_scale = scale

    def __call__(self, x, y):
        if self.abelian:
            return np.zeros(np.broadcast_shapes(x.shape, y.shape))
        if self.cross_scale is not None:
            return self.cross_scale * np.cross(x, y)
        return np.einsum("abc,...a,...b->...c", self.f, x, y)


_BRACKETS: dict[str, BracketCoeffs] = {}


def bracket_coeffs(algebra, x, y):
    """``[X, Y]`` for coordinate arrays with trailing axis ``dim``."""
    br = _BRACKETS.get(algebra.name)
    if br is None:
        br = _BRACKETS[algebra.name] = BracketCoeffs(algebra)
    return br(x, y)


@dataclass
class GaugeField:
    """Discrete algebra-valued 1-form; ``coeffs`` has shape ``(d, *grid.shape, dim)``."""

    grid: TorusGrid
    algebra: LieAlgebra
    coeffs: np.ndarray

    def __post_init__(self):
        if isinstance(self.algebra, str):
            self.algebra = get_algebra(self.algebra)
        want = (self.grid.d, *self.grid.shape, self.algebra.dim)
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.shape != want:
            raise LatticeError(f"gauge field shape {self.coeffs.shape}, expected {want}")

    @classmethod
    def zeros(cls, grid, algebra):
        if isinstance(algebra, str):
            algebra = get_algebra(algebra)
        return cls(grid, algebra, np.zeros((grid.d, *grid.shape, algebra.dim)))

    @classmethod
    def from_matrices(cls, grid, algebra, mats):
        if isinstance(algebra, str):
            algebra = get_algebra(algebra)
        return cls(grid, algebra, algebra.to_coeffs(np.asarray(mats)))

    def matrices(self):
        return self.algebra.from_coeffs(self.coeffs)

    def copy(self):
        return GaugeField(self.grid, self.algebra, self.coeffs.copy())

    def like(self, coeffs):
        return GaugeField(self.grid, self.algebra, coeffs)

    def __add__(self, other):
        return self.like(self.coeffs + other.coeffs)

    def __sub__(self, other):
        return self.like(self.coeffs - other.coeffs)

    def __mul__(self, c):
        return self.like(self.coeffs * c)

    __rmul__ = __mul__

    def __neg__(self):
        return self.like(-self.coeffs)

    def sup_norm(self):
        """Largest pointwise algebra norm over components and sites."""
        return float(np.sqrt(np.max(np.sum(self.coeffs**2, axis=-1)))) if self.coeffs.size else 0.0

    def mean(self):
        """Spatial mean of each component, shape ``(d, dim)``."""
        return self.coeffs.mean(axis=tuple(range(1, self.grid.d + 1)))


def _derivatives(A: GaugeField):
    """``dA[j, i] = partial_j A_i`` as an array ``(d, d, *shape, dim)``."""
    return np.stack([partial_derivative(A.coeffs, j, A.grid, axis=1) for j in range(A.grid.d)])


def curvature(A: GaugeField):
    """``F_ij = d_i A_j - d_j A_i + [A_i, A_j]``, shape ``(d, d, *shape, dim)``."""
    d = A.grid.d
    dA = _derivatives(A)
    F = np.zeros((d, d) + A.coeffs.shape[1:])
    for i in range(d):
        for j in range(i + 1, d):
            f = dA[i, j] - dA[j, i] + bracket_coeffs(A.algebra, A.coeffs[i], A.coeffs[j])
            F[i, j] = f
            F[j, i] = -f
    return F


def ym_nonlinearity(A: GaugeField):
    """``sum_j [A_j, 2 d_j A_i - d_i A_j + [A_j, A_i]]`` for each ``i``."""
    alg = A.algebra
    if alg.abelian:
        return np.zeros_like(A.coeffs)
    d = A.grid.d
    a = A.coeffs
    dA = _derivatives(A)
    out = np.zeros_like(a)
    for i in range(d):
        for j in range(d):
            if i == j:
                # [A_i, 2 d_i A_i - d_i A_i + 0]
                out[i] += bracket_coeffs(alg, a[i], dA[i, i])
                continue
            inner = 2 * dA[j, i] - dA[i, j] + bracket_coeffs(alg, a[j], a[i])
            out[i] += bracket_coeffs(alg, a[j], inner)
    return out


def ym_drift(A: GaugeField) -> GaugeField:
    """Deterministic drift ``Delta A_i + sum_j [A_j, 2 d_j A_i - d_i A_j + [A_j, A_i]]``."""
    return A.like(laplacian(A.coeffs, A.grid, axis=1) + ym_nonlinearity(A))


def ym_energy(A: GaugeField) -> float:
    """Lattice action ``h^d sum_x sum_{i<j} <F_ij, F_ij>``."""
    F = curvature(A)
    d = A.grid.d
    tot = 0.0
    for i in range(d):
        for j in range(i + 1, d):
            tot += np.sum(F[i, j] ** 2)
    return float(tot * A.grid.cell_volume)


# --- line and triangle integrals -------------------------------------------------

MAX_SEGMENT = 0.25


@dataclass(frozen=True)
class LineSegment:
    """Straight segment from base point ``x`` with displacement ``v`` (``|v| <= 1/4``)."""

    x: tuple
    v: tuple

    def __post_init__(self):
        if np.linalg.norm(self.v) > MAX_SEGMENT + 1e-12:
            raise LatticeError(f"segment length {np.linalg.norm(self.v):.4g} exceeds 1/4")

    @property
    def length(self):
        return float(np.linalg.norm(self.v))

    @property
    def end(self):
        return tuple(np.mod(np.add(self.x, self.v), 1.0))

    def reversed(self):
        return LineSegment(self.end, tuple(-np.asarray(self.v)))


def _torus_close(p, q, tol=1e-9):
    diff = np.mod(np.asarray(p) - np.asarray(q) + 0.5, 1.0) - 0.5
    return bool(np.all(np.abs(diff) <= tol))


@dataclass(frozen=True)
class Triangle:
    """Oriented triangle given by three boundary segments."""

    edges: tuple

    def __post_init__(self):
        if len(self.edges) != 3:
            raise LatticeError("a triangle needs exactly three edges")
        for k in range(3):
            if not _torus_close(self.edges[k].end, self.edges[(k + 1) % 3].x):
                raise LatticeError("triangle boundary is not closed")
        if self.area <= 0:
            raise LatticeError("degenerate triangle")

    @classmethod
    def from_vertices(cls, p0, p1, p2):
        p = [np.asarray(q, dtype=float) for q in (p0, p1, p2)]
        edges = tuple(LineSegment(tuple(p[k] % 1.0), tuple(p[(k + 1) % 3] - p[k])) for k in range(3))
        return cls(edges)

    @property
    def area(self):
        u = np.asarray(self.edges[0].v)
        w = -np.asarray(self.edges[2].v)
        if u.size == 2:
            return 0.5 * abs(u[0] * w[1] - u[1] * w[0])
        return 0.5 * float(np.linalg.norm(np.cross(u, w)))


def interpolate(field, points, grid, lead=0):
    """Periodic multilinear interpolation.

    ``field`` has ``lead`` leading axes, then the grid axes, then any trailing
    axes; ``points`` has shape ``(P, d)``.  Returns ``(*lead, P, *trail)``.
    """
    d, n = grid.d, grid.n
    pts = np.mod(np.asarray(points, dtype=float), 1.0) * n
    base = np.floor(pts).astype(np.int64)
    frac = pts - base
    out = 0.0
    for corner in range(2**d):
        bits = [(corner >> j) & 1 for j in range(d)]
        idx = tuple((base[:, j] + bits[j]) % n for j in range(d))
        w = np.prod([frac[:, j] if bits[j] else 1.0 - frac[:, j] for j in range(d)], axis=0)
        vals = field[(slice(None),) * lead + idx]
        w = w.reshape((1,) * lead + (-1,) + (1,) * (vals.ndim - lead - 1))
        out = out + w * vals
    return out


def default_quadrature_points(length, grid):
    """Trapezoid node count giving a spacing of at most ``h/2``."""
    return max(2, int(np.ceil(2 * length / grid.h)) + 1)


def line_integrals(A: GaugeField, x, v, m=None):
    """Vectorised ``A(l)`` for segments with base points ``x`` and displacements ``v``.

    ``x`` and ``v`` have shape ``(S, d)``; returns coordinates ``(S, dim)``.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    v = np.atleast_2d(np.asarray(v, dtype=float))
    S, d = v.shape
    if m is None:
        m = default_quadrature_points(float(np.max(np.linalg.norm(v, axis=1))) if S else 0.0, A.grid)
    if m < 2:
        raise LatticeError("line integral needs m >= 2 quadrature points")
    t = np.linspace(0.0, 1.0, m)
    w = np.full(m, 1.0 / (m - 1))
    w[0] = w[-1] = 0.5 / (m - 1)
    pts = (x[:, None, :] + t[None, :, None] * v[:, None, :]).reshape(-1, d)
    vals = interpolate(A.coeffs, pts, A.grid, lead=1).reshape(d, S, m, -1)  # (d, S, m, dim)
    return np.einsum("isma,si,m->sa", vals, v, w)


def line_integral(A: GaugeField, seg: LineSegment, m=None):
    """``A(l) = int_0^1 sum_i A_i(x + t v) v_i dt`` as algebra coordinates."""
    return line_integrals(A, [seg.x], [seg.v], m)[0]


def triangle_boundary_integral(A: GaugeField, P: Triangle, m=None):
    return sum(line_integral(A, e, m) for e in P.edges)
