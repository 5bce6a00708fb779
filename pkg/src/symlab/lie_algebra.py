"""Matrix Lie algebra arithmetic for subgroups of U(N).

Algebra elements are anti-Hermitian ``(..., N, N)`` complex arrays and group
elements are unitary arrays of the same shape.  Every function broadcasts over
leading axes so whole lattice fields can be passed in one call.

The inner product is fixed to ``<X, Y> = -Tr(XY)``.  With this choice the
standard su(2) basis ``(i/sqrt 2) sigma_a`` is orthonormal and the adjoint
Casimir equals ``-4 Id``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numpy as np
import scipy.linalg

TOL_ALG = 1e-10
LOG_RADIUS = 1.0

INNER_PRODUCT = "-Tr(XY)"


class LieAlgebraError(ValueError):
    """Invalid input to a Lie algebra operation."""


class LogDomainError(LieAlgebraError):
    """Group element outside the principal branch of the logarithm."""


def _check_same_dim(x, y):
    if x.shape[-2:] != y.shape[-2:]:
        raise LieAlgebraError(f"dimension mismatch: {x.shape[-2:]} vs {y.shape[-2:]}")


def dagger(x):
    return np.conj(np.swapaxes(x, -1, -2))


def anti_hermitian_part(x):
    return 0.5 * (x - dagger(x))


def is_anti_hermitian(x, tol=TOL_ALG):
    return bool(np.all(np.abs(x + dagger(x)) <= tol))


def is_unitary(g, tol=TOL_ALG):
    n = g.shape[-1]
    return bool(np.all(np.abs(g @ dagger(g) - np.eye(n)) <= tol))


def group_matmul(a, b):
    """Batched matrix product; written out for 2x2, where it beats ``@``."""
    if a.shape[-1] != 2:
        return a @ b
    a00, a01, a10, a11 = a[..., 0, 0], a[..., 0, 1], a[..., 1, 0], a[..., 1, 1]
    b00, b01, b10, b11 = b[..., 0, 0], b[..., 0, 1], b[..., 1, 0], b[..., 1, 1]
    out = np.empty(np.broadcast_shapes(a.shape, b.shape), dtype=np.result_type(a, b))
    out[..., 0, 0] = a00 * b00 + a01 * b10
    out[..., 0, 1] = a00 * b01 + a01 * b11
    out[..., 1, 0] = a10 * b00 + a11 * b10
    out[..., 1, 1] = a10 * b01 + a11 * b11
    return out


def bracket(x, y):
    """Commutator ``XY - YX``."""
    x = np.asarray(x)
    y = np.asarray(y)
    _check_same_dim(x, y)
    return x @ y - y @ x


def ad_inner(x, y):
    """Ad-invariant inner product ``-Tr(XY)`` (real part), broadcast over leading axes."""
    x = np.asarray(x)
    y = np.asarray(y)
    _check_same_dim(x, y)
    return -np.einsum("...ij,...ji->...", x, y).real


def adjoint_action(g, x, check=True):
    """``Ad_g X = g X g^{-1}``; ``g`` must be unitary."""
    g = np.asarray(g)
    x = np.asarray(x)
    _check_same_dim(g, x)
    if check and not is_unitary(g, tol=1e-8):
        raise LieAlgebraError("adjoint_action requires a unitary group element")
    return g @ x @ dagger(g)


def exp_map(x):
    """Matrix exponential of algebra elements.

    The 1x1 and 2x2 cases use closed forms (exact for anti-Hermitian input);
    larger N fall back to scipy's scaling-and-squaring ``expm``.
    """
    x = np.asarray(x, dtype=complex)
    n = x.shape[-1]
    if n == 1:
        return np.exp(x)
    if n == 2:
        tr = 0.5 * (x[..., 0, 0] + x[..., 1, 1])
        y = x - tr[..., None, None] * np.eye(2)
        # y is traceless anti-Hermitian, so y @ y = -theta^2 Id with theta^2 = det y
        theta2 = (y[..., 0, 0] * y[..., 1, 1] - y[..., 0, 1] * y[..., 1, 0]).real
        theta = np.sqrt(np.maximum(theta2, 0.0))
        c = np.cos(theta)
        s = np.sinc(theta / np.pi)
        out = c[..., None, None] * np.eye(2) + s[..., None, None] * y
        return np.exp(tr)[..., None, None] * out
    return scipy.linalg.expm(x)


def log_map(g):
    """Principal matrix logarithm of unitary ``g`` with ``||g - Id||_2 < 1``."""
    g = np.asarray(g, dtype=complex)
    n = g.shape[-1]
    dist = np.linalg.norm(g - np.eye(n), ord=2, axis=(-2, -1))
    if np.any(dist >= LOG_RADIUS):
        raise LogDomainError(f"log_map needs ||g - Id|| < {LOG_RADIUS}, got {np.max(dist):.3g}")
    if n == 1:
        return 1j * np.angle(g)
    flat = g.reshape(-1, n, n)
    out = np.stack([scipy.linalg.logm(m) for m in flat]).reshape(g.shape)
    return anti_hermitian_part(out)


def project_unitary(g):
    """Nearest unitary matrix (polar factor) via SVD."""
    u, _, vh = np.linalg.svd(g)
    return u @ vh


@dataclass(frozen=True)
class LieAlgebra:
    """A concrete matrix Lie algebra with a cached orthonormal basis.

    ``name`` is one of ``u1``, ``su2`` or the general forms ``uN`` / ``suN``.
    """

    name: str
    n: int
    basis: np.ndarray = field(repr=False)
    special: bool

    @property
    def dim(self):
        return self.basis.shape[0]

    @property
    def abelian(self):
        return self.dim == 1

    @cached_property
    def _coeff_matrix(self):
        n = self.n
        return -np.transpose(self.basis, (2, 1, 0)).reshape(n * n, self.dim)

    @cached_property
    def _basis_matrix(self):
        return self.basis.reshape(self.dim, self.n * self.n)

    @cached_property
    def _ad_tensor(self):
        e = self.basis
        n2 = self.n**2
        return -np.einsum("bjk,ali->ijlkab", e, e).reshape(n2 * n2, self.dim * self.dim)

    def to_coeffs(self, x):
        """Coordinates ``<X, e_a>``; shape ``(..., dim)``."""
        x = np.asarray(x)
        n = self.n
        return (x.reshape(-1, n * n) @ self._coeff_matrix).real.reshape(*x.shape[:-2], self.dim)

    def from_coeffs(self, c):
        c = np.asarray(c, dtype=float)
        return (c.reshape(-1, self.dim) @ self._basis_matrix).reshape(*c.shape[:-1], self.n, self.n)

    def identity(self, shape=()):
        return np.broadcast_to(np.eye(self.n, dtype=complex), (*shape, self.n, self.n)).copy()

    def random_element(self, rng, shape=(), scale=1.0):
        return self.from_coeffs(scale * rng.standard_normal((*shape, self.dim)))

    def random_group(self, rng, shape=(), scale=1.0):
        return exp_map(self.random_element(rng, shape, scale))

    def ad_matrix(self, g):
        """Matrix of ``Ad_g`` in the orthonormal basis, shape ``(..., dim, dim)``."""
        # M[a, b] = <g e_b g^*, e_a> is linear in the entries of g (x) conj(g)
        g = np.asarray(g)
        n = self.n
        pairs = (g[..., :, :, None, None] * np.conj(g)[..., None, None, :, :]).reshape(-1, n**4)
        return (pairs @ self._ad_tensor).real.reshape(*g.shape[:-2], self.dim, self.dim)


def _spanning_set(n, special):
    out = []
    for j in range(n):
        for k in range(j + 1, n):
            m = np.zeros((n, n), complex)
            m[j, k] = m[k, j] = 1j
            out.append(m)
            m = np.zeros((n, n), complex)
            m[j, k], m[k, j] = 1.0, -1.0
            out.append(m)
    for j in range(n - 1):
        m = np.zeros((n, n), complex)
        m[j, j], m[j + 1, j + 1] = 1j, -1j
        out.append(m)
    if not special:
        out.append(1j * np.eye(n))
    return out


def gram_schmidt(elements):
    basis = []
    for x in elements:
        y = x.copy()
        for e in basis:
            y = y - ad_inner(y, e) * e
        norm = np.sqrt(ad_inner(y, y))
        if norm > TOL_ALG:
            basis.append(y / norm)
    return np.array(basis)


@lru_cache(maxsize=None)
def get_algebra(name):
    """Look up (and cache) the algebra called ``name``, e.g. ``"su2"``."""
    m = re.fullmatch(r"(s?u)(\d+)", name)
    if not m:
        raise LieAlgebraError(f"unknown group {name!r}; expected u1, su2, uN or suN")
    special = m.group(1) == "su"
    n = int(m.group(2))
    if n < 1 or (special and n < 2):
        raise LieAlgebraError(f"invalid group {name!r}")
    basis = gram_schmidt(_spanning_set(n, special))
    basis.setflags(write=False)
    return LieAlgebra(name=name, n=n, basis=basis, special=special)


def structure_matrices(basis):
    """``ad_{e_a}`` as matrices: ``M[a, c, b] = <[e_a, e_b], e_c>``."""
    br = bracket(basis[:, None], basis[None, :])
    return -np.einsum("abij,cji->acb", br, basis).real


def casimir_adjoint(basis):
    """Adjoint Casimir ``sum_a ad_{e_a} ad_{e_a}`` in the given orthonormal basis."""
    basis = np.asarray(basis)
    gram = ad_inner(basis[:, None], basis[None, :])
    if not np.allclose(gram, np.eye(len(basis)), atol=TOL_ALG):
        raise LieAlgebraError("casimir_adjoint requires an orthonormal basis")
    m = structure_matrices(basis)
    return np.einsum("acb,abd->cd", m, m)
