"""State-space norms, heat-flow Hoelder-Besov norms and scalar observables.

Suprema over segments, triangles and times are estimated on stratified samples:
dyadic length (or area, or time) strata, quasi-random base points and
directions inside each stratum.  Every estimate carries its argmax witness so
that a reported value can be reproduced by a single line integral.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import qmc

from .lattice import GaugeField, TorusGrid, _expand, default_quadrature_points, line_integrals, partial_derivative


class NormParamError(ValueError):
    pass


@dataclass(frozen=True)
class NormParams:
    """Exponents and sampling budgets for the state-space norms.

    ``alpha`` belongs to the 2D norms; ``eta, beta, delta, alpha3, theta``
    to the 3D heat-flow norms.
    """

    alpha: float = 0.75
    eta: float = -0.55
    beta: float = -0.25
    delta: float = 0.9
    alpha3: float = 0.45
    theta: float = 0.3
    segments_per_scale: int = 4096
    triangles_per_scale: int = 2048
    times_per_octave: int = 2
    seed: int = 0

    def __post_init__(self):
        checks = [
            ("alpha", 2 / 3 < self.alpha < 1, "(2/3, 1)"),
            ("eta", self.eta < -0.5, "(-inf, -1/2)"),
            ("beta", self.beta < 0, "(-inf, 0)"),
            ("delta", 1 + self.beta / 2 < self.delta < 1, "(1 + beta/2, 1)"),
            ("alpha3", 0 < self.alpha3 < 0.5, "(0, 1/2)"),
            ("theta", self.theta > 0, "(0, inf)"),
            ("segments_per_scale", self.segments_per_scale >= 1, "[1, inf)"),
            ("triangles_per_scale", self.triangles_per_scale >= 1, "[1, inf)"),
            ("times_per_octave", self.times_per_octave >= 1, "[1, inf)"),
        ]
        for name, ok, rng in checks:
            if not ok:
                raise NormParamError(f"{name} = {getattr(self, name)} is outside its valid range {rng}")

    def doubled(self):
        """Same parameters with every sampling budget doubled."""
        d = asdict(self)
        d["segments_per_scale"] *= 2
        d["triangles_per_scale"] *= 2
        d["times_per_octave"] *= 2
        return NormParams(**d)


@dataclass
class NormReport:
    value: float
    witness: dict = field(default_factory=dict)
    budget: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)

    def __float__(self):
        return float(self.value)

    def to_json(self):
        return {"value": self.value, "witness": self.witness, "budget": self.budget, "params": self.params}


# --- heat-flow characterisation ---------------------------------------------------


def dyadic_times(grid: TorusGrid, per_octave=2, t_max=1.0):
    """``t_max 2^{-j/per_octave}`` down to the grid scale ``h^2``."""
    octaves = int(np.ceil(np.log2(t_max / grid.h**2)))
    j = np.arange(octaves * per_octave + 1)
    return t_max * 2.0 ** (-j / per_octave)


class _Spectral:
    """DFT of a field computed once and reused for every ``P_t``."""

    def __init__(self, f, grid, axis):
        self.grid = grid
        self.axis = axis
        self.axes = tuple(range(axis, axis + grid.d))
        self.ndim = np.ndim(f)
        self.fh = np.fft.rfftn(f, axes=self.axes)
        self.mu = grid.laplacian_symbol(real=True)

    def at(self, t):
        mult = _expand(np.exp(-t * self.mu), self.ndim, self.axis)
        return np.fft.irfftn(self.fh * mult, s=self.grid.shape, axes=self.axes)

    def batch(self, ts):
        """``P_t f`` for every ``t`` in ``ts``, stacked along a new leading axis."""
        ts = np.asarray(ts, float)
        mu = self.mu
        mult = np.exp(-ts.reshape(-1, *(1,) * mu.ndim) * mu)
        mult = mult.reshape((len(ts),) + (1,) * self.axis + mu.shape + (1,) * (self.ndim - self.axis - mu.ndim))
        axes = tuple(a + 1 for a in self.axes)
        return np.fft.irfftn(self.fh[None] * mult, s=self.grid.shape, axes=axes)


def _sup(values, vector_axis):
    if vector_axis is None:
        return np.abs(values)
    return np.sqrt(np.sum(values**2, axis=vector_axis))


def holder_besov_norm(f, gamma, grid: TorusGrid | None = None, times=None, axis=0, per_octave=2, report=False):
    """``sup_t t^{-gamma/2} |P_t f|_inf`` over a dyadic grid of ``t`` in ``(0, 1]``.

    ``f`` is a :class:`GaugeField` (pointwise algebra norm, max over components)
    or an array whose spatial axes start at ``axis``.
    """
    if not -2 < gamma < 0:
        raise NormParamError(f"gamma = {gamma} is outside (-2, 0)")
    vec = None
    if isinstance(f, GaugeField):
        grid = f.grid
        arr = f.coeffs
        axis = 1
        vec = -1
    else:
        if grid is None:
            raise NormParamError("grid is required for plain arrays")
        arr = np.asarray(f, float)
    times = dyadic_times(grid, per_octave) if times is None else np.asarray(times, float)
    spec = _Spectral(arr, grid, axis)
    best, best_t = -1.0, None
    # several times per inverse DFT; chunks keep the stacked array near 32 MB
    chunk = max(1, int(4e6 // max(1, arr.size)))
    for lo in range(0, len(times), chunk):
        ts = times[lo : lo + chunk]
        fields = spec.batch(ts)
        red = tuple(range(1, fields.ndim + (0 if vec is None else -1)))
        sups = np.max(_sup(fields, vec), axis=red) * ts ** (-gamma / 2)
        k = int(np.argmax(sups))
        if sups[k] > best:
            best, best_t = float(sups[k]), float(ts[k])
    if report:
        return NormReport(best, {"t": best_t}, {"times": len(times)}, {"gamma": gamma})
    return best


# --- segment and triangle sampling ------------------------------------------------


def _qmc(dim, count, seed):
    eng = qmc.Halton(d=dim, scramble=True, seed=seed)
    return eng.random(count)


def _directions(u, d):
    """Map uniform samples to unit vectors."""
    if d == 2:
        ang = 2 * np.pi * u[:, 0]
        return np.stack([np.cos(ang), np.sin(ang)], -1)
    z = 2 * u[:, 0] - 1
    phi = 2 * np.pi * u[:, 1]
    s = np.sqrt(1 - z**2)
    return np.stack([s * np.cos(phi), s * np.sin(phi), z], -1)


def segment_sample(grid: TorusGrid, lengths, count, seed):
    """Base points ``(L, count, d)`` and displacements for each length."""
    d = grid.d
    xs, vs = [], []
    for j, L in enumerate(lengths):
        u = _qmc(d + d - 1, count, seed * 1000 + j)
        xs.append(u[:, :d])
        vs.append(L * _directions(u[:, d:], d))
    return np.array(xs), np.array(vs)


def dyadic_lengths(grid: TorusGrid, shortest=None):
    """``1/4, 1/8, ...`` down to ``h`` (or ``shortest``)."""
    lo = grid.h if shortest is None else shortest
    out = []
    L = 0.25
    while L >= lo * (1 - 1e-12):
        out.append(L)
        L /= 2
    return np.array(out)


def _algebra_norm(c):
    return np.sqrt(np.sum(c**2, axis=-1))


def _scale_integrals(A, xs, vs, lengths):
    """Line integrals per length group, node count fixed by the length.

    Tying the node count to the scale (not to the batch) keeps every sampled
    value independent of what else is in the sample, so enlarging the sample
    can only raise a supremum.
    """
    return np.concatenate(
        [line_integrals(A, x, v, default_quadrature_points(L, A.grid)) for x, v, L in zip(xs, vs, lengths)]
    )


def norm_gr_alpha(A: GaugeField, p: NormParams = NormParams(), alpha=None, report=False):
    """``sup_l |A(l)| / |l|^alpha`` over sampled segments with dyadic lengths in ``[h, 1/4]``."""
    alpha = p.alpha if alpha is None else alpha
    lengths = dyadic_lengths(A.grid)
    xs, vs = segment_sample(A.grid, lengths, p.segments_per_scale, p.seed)
    vals = _scale_integrals(A, xs, vs, lengths)
    ratio = _algebra_norm(vals) / np.repeat(lengths, p.segments_per_scale) ** alpha
    k = int(np.argmax(ratio))
    value = float(ratio[k])
    if not report:
        return value
    wit = {"x": xs.reshape(-1, A.grid.d)[k].tolist(), "v": vs.reshape(-1, A.grid.d)[k].tolist()}
    return NormReport(value, wit, {"segments": int(ratio.size), "scales": len(lengths)}, {"alpha": alpha})


def triangle_sample(grid: TorusGrid, areas, count, seed):
    """Triangles with prescribed areas and quasi-random shapes.

    Returns vertices ``(A, count, 3, d)``; every edge is at most ``1/4`` long.
    """
    d = grid.d
    out = []
    for j, area in enumerate(areas):
        u = _qmc(d + 3 + (d - 2) * 2, count, 7919 + seed * 1000 + j)
        base = u[:, :d]
        # shape: angle between two edges in (pi/6, 5pi/6), edge ratio in (1/2, 2)
        ang = np.pi / 6 + (2 * np.pi / 3) * u[:, d]
        ratio = 2.0 ** (2 * u[:, d + 1] - 1)
        rot = 2 * np.pi * u[:, d + 2]
        a = np.sqrt(2 * area / (ratio * np.sin(ang)))
        b = ratio * a
        e1 = np.stack([np.cos(rot), np.sin(rot)], -1)
        e2 = np.stack([np.cos(rot + ang), np.sin(rot + ang)], -1)
        if d == 3:
            # random plane: orthonormal frame from two quasi-random unit vectors
            n1 = _directions(u[:, d + 3 : d + 5], 3)
            helper = np.where(np.abs(n1[:, :1]) < 0.9, np.array([[1.0, 0, 0]]), np.array([[0, 1.0, 0]]))
            f1 = np.cross(n1, helper)
            f1 /= np.linalg.norm(f1, axis=1, keepdims=True)
            f2 = np.cross(n1, f1)
            e1 = e1[:, :1] * f1 + e1[:, 1:] * f2
            e2 = e2[:, :1] * f1 + e2[:, 1:] * f2
        p1 = base + a[:, None] * e1
        p2 = base + b[:, None] * e2
        out.append(np.stack([base, p1, p2], axis=1))
    return np.array(out)


def triangle_boundary_values(A: GaugeField, verts, m=None):
    """``A(dP)`` for vertex arrays ``(..., 3, d)``; returns ``(..., dim)``."""
    shp = verts.shape[:-2]
    v = verts.reshape(-1, 3, A.grid.d)
    x = np.concatenate([v[:, 0], v[:, 1], v[:, 2]])
    disp = np.concatenate([v[:, 1] - v[:, 0], v[:, 2] - v[:, 1], v[:, 0] - v[:, 2]])
    vals = line_integrals(A, x, disp, m).reshape(3, v.shape[0], -1).sum(0)
    return vals.reshape(*shp, -1)


def _triangle_values_by_area(A, verts, areas):
    if len(areas) == 0:
        raise NormParamError(f"n = {A.grid.n} is too coarse for the triangle scales (4 h^2 must be at most 1/128)")
    # sampled shapes keep every edge below 2 sqrt(8 area)
    return np.stack(
        [triangle_boundary_values(A, vt, default_quadrature_points(2 * np.sqrt(8 * a), A.grid)) for vt, a in zip(verts, areas)]
    )


def dyadic_areas(grid: TorusGrid, smallest=None):
    """Areas from ``1/128`` down to ``smallest`` (default ``4 h^2``)."""
    lo = 4 * grid.h**2 if smallest is None else smallest
    out = []
    a = 1.0 / 128
    while a >= lo * (1 - 1e-12):
        out.append(a)
        a /= 2
    return np.array(out)


def norm_alpha(A: GaugeField, p: NormParams = NormParams(), report=False):
    """``|A|_{gr alpha} + sup_P |A(dP)| / |P|^{alpha/2}``."""
    gr = norm_gr_alpha(A, p, report=True)
    areas = dyadic_areas(A.grid)
    verts = triangle_sample(A.grid, areas, p.triangles_per_scale, p.seed)
    vals = _triangle_values_by_area(A, verts, areas)
    ratio = _algebra_norm(vals) / areas[:, None] ** (p.alpha / 2)
    idx = np.unravel_index(int(np.argmax(ratio)), ratio.shape)
    value = gr.value + float(ratio[idx])
    if not report:
        return value
    wit = {"segment": gr.witness, "triangle": verts[idx].tolist()}
    bud = {**gr.budget, "triangles": int(ratio.size)}
    return NormReport(value, wit, bud, {"alpha": p.alpha})


def heatgr_norm(A: GaugeField, p: NormParams = NormParams(), report=False):
    """``sup_t sup_{|l| < t^theta} |(P_t A)(l)| / |l|^alpha3`` (3D state-space norm)."""
    grid = A.grid
    spec = _Spectral(A.coeffs, grid, 1)
    times = dyadic_times(grid, p.times_per_octave)
    lengths_all = dyadic_lengths(grid)
    xs, vs = segment_sample(grid, lengths_all, p.segments_per_scale, p.seed)
    best, wit = 0.0, {}
    for t in times:
        keep = lengths_all < t**p.theta
        if not np.any(keep):
            continue
        At = A.like(spec.at(t))
        x = xs[keep].reshape(-1, grid.d)
        v = vs[keep].reshape(-1, grid.d)
        ratio = _algebra_norm(_scale_integrals(At, xs[keep], vs[keep], lengths_all[keep])) / np.repeat(lengths_all[keep], p.segments_per_scale) ** p.alpha3
        k = int(np.argmax(ratio))
        if ratio[k] > best:
            best = float(ratio[k])
            wit = {"t": float(t), "x": x[k].tolist(), "v": v[k].tolist()}
    if report:
        return NormReport(best, wit, {"times": len(times), "segments_per_scale": p.segments_per_scale}, {"alpha3": p.alpha3, "theta": p.theta})
    return best


def _product_term(At, grid):
    """All products ``(P_t A)_i^a d_j (P_t A)_k^b``, stacked as ``(d^3 dim^2, *shape)``."""
    d = grid.d
    dA = np.stack([partial_derivative(At, j, grid, axis=1) for j in range(d)])  # (j, k, ..., b)
    prod = np.einsum("i...a,jk...b->ijkab...", At, dA)
    return prod.reshape(-1, *grid.shape)


def theta_metric(A: GaugeField, B: GaugeField, p: NormParams = NormParams(), report=False):
    """``|A - B|_{C^eta} + sup_t t^delta |P_t A . dP_t A - P_t B . dP_t B|_{C^beta}``."""
    grid = A.grid
    first = holder_besov_norm(A - B, p.eta, per_octave=p.times_per_octave)
    sa = _Spectral(A.coeffs, grid, 1)
    sb = _Spectral(B.coeffs, grid, 1)
    inner_times = dyadic_times(grid, p.times_per_octave)
    best, best_t = 0.0, None
    for t in dyadic_times(grid, p.times_per_octave):
        diff = _product_term(sa.at(t), grid) - _product_term(sb.at(t), grid)
        if not np.any(diff):
            continue
        v = t**p.delta * holder_besov_norm(diff, p.beta, grid=grid, times=inner_times, axis=1)
        if v > best:
            best, best_t = v, float(t)
    value = first + best
    if report:
        return NormReport(value, {"product_t": best_t, "first_term": first, "second_term": best}, {"times": len(inner_times)}, {"eta": p.eta, "beta": p.beta, "delta": p.delta})
    return value


# --- scalar observables ---------------------------------------------------------


def abelian_loop_observable(A: GaugeField):
    """``exp(i int A_1)`` for a U(1) field (coordinate ``c`` of ``i c``)."""
    if A.algebra.n != 1:
        raise ValueError("abelian_loop_observable needs a U(1) field")
    total = float(np.sum(A.coeffs[0, ..., 0]) * A.grid.cell_volume)
    return complex(np.exp(1j * total))


def segment_second_moments(A: GaugeField, lengths, count, seed=0, axis_aligned=False):
    """Spatial average of ``|A(l)|^2`` over ``count`` segments per length."""
    d = A.grid.d
    out = []
    for j, L in enumerate(lengths):
        u = _qmc(2 * d, count, seed * 1000 + j)
        x = u[:, :d]
        if axis_aligned:
            axis = np.floor(u[:, d] * d).astype(int) % d
            v = np.zeros((count, d))
            v[np.arange(count), axis] = L
        else:
            v = L * _directions(u[:, d:], d)
        out.append(float(np.mean(np.sum(line_integrals(A, x, v) ** 2, axis=-1))))
    return np.array(out)


def triangle_second_moments(A: GaugeField, areas, count, seed=0):
    """Spatial average of ``|A(dP)|^2`` over ``count`` triangles per area."""
    verts = triangle_sample(A.grid, areas, count, seed)
    vals = _triangle_values_by_area(A, verts, areas)
    return np.mean(np.sum(vals**2, axis=-1), axis=1)
