"""Functional calculus on positive-definite fiber endomorphisms.

Everything here operates on stacks of matrices, shape ``(..., n, n)``, so a
whole cosphere section is handled in one call.  Powers, the conjugation
representation ``Phi(t) A = P^{-t} A P^t`` and the averaging operator
``T(a) A = int_0^a Phi(t) A dt`` are all evaluated in the eigenbasis of ``P``,
where ``Phi(t)`` acts entrywise by ``exp(t * mu_ij)`` with
``mu_ij = log(lam_j) - log(lam_i)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._validation import (
    NotPositiveDefiniteError,
    check_complex,
    check_fiber_matrix,
    check_positive,
    check_positive_int,
    check_same_fiber,
)

HERMITIAN_TOL = 1e-12
DEGENERATE_TOL = 1e-12

__all__ = [
    "PDMatrix",
    "ContourSpec",
    "pd_power",
    "conjugate",
    "t_operator",
    "t_solve",
    "dyadic_t_operator",
    "contour_power",
]


def _dagger(a):
    return np.conj(np.swapaxes(a, -1, -2))


class PDMatrix:
    """A Hermitian positive-definite matrix (or stack) with its eigendecomposition.

    Parameters
    ----------
    matrix : array_like, shape (..., n, n)
        Hermitian to within ``hermitian_tol`` (relative to the largest entry).
        The stored base is the symmetrized ``(A + A*) / 2``.
    floor : float, optional
        Spectral floor; every eigenvalue must be ``>= floor``.  Defaults to
        the smallest eigenvalue found, which must be strictly positive.
    """

    def __init__(self, matrix, floor=None, hermitian_tol=HERMITIAN_TOL):
        a = check_fiber_matrix(matrix)
        scale = max(1.0, float(np.abs(a).max()))
        asym = float(np.abs(a - _dagger(a)).max())
        if asym > hermitian_tol * scale:
            raise NotPositiveDefiniteError(
                f"matrix is not Hermitian: max |A - A*| = {asym:.3e} (tolerance {hermitian_tol * scale:.1e})"
            )
        a = 0.5 * (a + _dagger(a))
        w, u = np.linalg.eigh(a)
        lo = float(w.min())
        if lo <= 0:
            idx = np.unravel_index(np.argmin(w.min(axis=-1)), w.shape[:-1]) if w.ndim > 1 else ()
            raise NotPositiveDefiniteError(
                f"matrix is not positive definite: smallest eigenvalue {lo:.3e} at index {idx}"
            )
        if floor is None:
            floor = lo
        floor = check_positive(floor, "floor")
        if lo < floor:
            raise NotPositiveDefiniteError(f"smallest eigenvalue {lo:.3e} below spectral floor {floor:.3e}")
        self.matrix = a
        self.eigvals = w
        self.eigvecs = u
        self.floor = floor
        self.log_eigvals = np.log(w)

    @property
    def n(self):
        return self.matrix.shape[-1]

    @property
    def batch_shape(self):
        return self.matrix.shape[:-2]

    def log_gaps(self):
        """``mu[..., i, j] = log(lam_j) - log(lam_i)``."""
        lw = self.log_eigvals
        return lw[..., None, :] - lw[..., :, None]

    def to_eigenbasis(self, a):
        return _dagger(self.eigvecs) @ a @ self.eigvecs

    def from_eigenbasis(self, a):
        return self.eigvecs @ a @ _dagger(self.eigvecs)

    def __repr__(self):
        return f"PDMatrix(n={self.n}, batch_shape={self.batch_shape}, floor={self.floor:.3g})"


def _as_pd(p):
    return p if isinstance(p, PDMatrix) else PDMatrix(p)


def _operand(p, a, name="A"):
    a = check_fiber_matrix(a, name)
    check_same_fiber(p.matrix, a, ("P", name))
    return a


def pd_power(p, s):
    """``P^s = U diag(lam^s) U*``; ``s = 0`` returns the identity exactly."""
    p = _as_pd(p)
    s = check_complex(s)
    if s == 0:
        return np.broadcast_to(np.eye(p.n, dtype=np.complex128), p.matrix.shape).copy()
    lam_s = np.exp(s * p.log_eigvals)
    return (p.eigvecs * lam_s[..., None, :]) @ _dagger(p.eigvecs)


def conjugate(p, t, a):
    """The conjugation representation ``Phi(t) A = P^{-t} A P^t``."""
    p = _as_pd(p)
    t = check_complex(t, "t")
    a = _operand(p, a)
    if t == 0:
        return a.copy()
    return p.from_eigenbasis(p.to_eigenbasis(a) * np.exp(t * p.log_gaps()))


def _t_factor(mu, a):
    """Entrywise multiplier of ``T(a)``: ``(exp(a mu) - 1) / mu``, with limit ``a`` at ``mu = 0``."""
    small = np.abs(mu) < DEGENERATE_TOL
    safe = np.where(small, 1.0, mu)
    return np.where(small, a, np.expm1(a * safe) / safe)


def t_operator(p, a, x):
    """``T(a) X = int_0^a Phi(t) X dt`` in closed form; ``a`` may be complex."""
    p = _as_pd(p)
    a = check_complex(a, "a")
    x = _operand(p, x, "X")
    return p.from_eigenbasis(p.to_eigenbasis(x) * _t_factor(p.log_gaps(), a))


def t_solve(p, b, method="direct", levels=6, tol=1e-15, max_iter=200):
    """Solve ``T(1) X = B`` for ``X``.

    ``method="direct"`` divides entrywise by the (strictly positive) factor
    ``(e^mu - 1) / mu`` in the eigenbasis.  ``method="dyadic"`` uses the
    factorization ``T(1) = prod_i (Id + Phi(2^-i)) T(2^-levels)``: each factor
    ``Id + Phi(2^-i)`` is inverted and the remaining ``2^levels T(2^-levels)``,
    which is close to the identity, is inverted by fixed-point iteration using
    only forward applications of ``T``.
    """
    p = _as_pd(p)
    b = _operand(p, b, "B")
    mu = p.log_gaps()
    if method == "direct":
        return p.from_eigenbasis(p.to_eigenbasis(b) / _t_factor(mu, 1.0))
    if method != "dyadic":
        raise ValueError(f"unknown method {method!r}")
    levels = check_positive_int(levels, "levels")
    y = p.to_eigenbasis(b)
    for i in range(1, levels + 1):
        y = y / (1.0 + np.exp(mu * 2.0**-i))
    # y = T(2^-n) X; scaled operator S = 2^n T(2^-n) is near the identity
    h = 2.0**-levels
    scaled = _t_factor(mu, h) / h
    contraction = float(np.abs(1.0 - scaled).max())
    if contraction >= 0.5:
        raise ValueError(
            f"dyadic inversion needs more levels: |Id - 2^n T(2^-n)| = {contraction:.3f}"
        )
    rhs = y / h
    x = rhs.copy()
    for _ in range(max_iter):
        x_new = rhs + (1.0 - scaled) * x
        if np.abs(x_new - x).max() <= tol * max(1.0, np.abs(x_new).max()):
            x = x_new
            break
        x = x_new
    return p.from_eigenbasis(x)


def dyadic_t_operator(p, x, levels):
    """Apply ``(Id + Phi(1/2)) ... (Id + Phi(2^-n)) T(2^-n)`` to ``X``; equals ``T(1) X``."""
    p = _as_pd(p)
    levels = check_positive_int(levels, "levels")
    y = t_operator(p, 2.0**-levels, x)
    for i in range(levels, 0, -1):
        y = y + conjugate(p, 2.0**-i, y)
    return y


@dataclass(frozen=True)
class ContourSpec:
    """Keyhole contour: two rays at ``Im = +-line_offset`` joined by a circular arc.

    The arc of radius ``inner_radius`` passes to the right of the origin and
    must stay left of the spectrum.  ``node_count`` quadrature nodes are split
    half on the arc and a quarter on each ray.
    """

    inner_radius: float
    line_offset: float
    node_count: int = 512

    def __post_init__(self):
        check_positive(self.inner_radius, "inner_radius")
        check_positive(self.line_offset, "line_offset")
        check_positive_int(self.node_count, "node_count", minimum=64)
        if self.line_offset >= self.inner_radius:
            raise ValueError("line_offset must be smaller than inner_radius")

    @classmethod
    def for_matrix(cls, p, node_count=512):
        r = 0.5 * float(_as_pd(p).eigvals.min())
        return cls(inner_radius=r, line_offset=0.5 * r, node_count=node_count)


def _gauss(a, b, n):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (b - a) * x + 0.5 * (b + a), 0.5 * (b - a) * w


def contour_power(p, s, contour=None, ray_length_factor=50.0):
    """``P^s = (1 / 2 pi i) int_gamma lam^s (lam - P)^{-1} d lam`` for ``Re s < 0``.

    Independent of the eigendecomposition used by :func:`pd_power`: the
    resolvent is formed by dense inversion at every node.  Rays are
    integrated out to ``ray_length_factor * lam_max`` with Gauss-Legendre in
    ``log|lam|``; the remainder to infinity is added from the Neumann series of
    the resolvent, term by term in closed form.
    """
    p = _as_pd(p)
    s = check_complex(s)
    if s.real >= 0:
        raise ValueError("contour_power needs Re(s) < 0; use P^s = P^(s-k) P^k otherwise")
    if contour is None:
        contour = ContourSpec.for_matrix(p)
    if contour.inner_radius >= p.eigvals.min():
        raise ValueError(
            f"contour touches the spectrum: inner_radius {contour.inner_radius:.3g} >= "
            f"smallest eigenvalue {p.eigvals.min():.3g}"
        )
    a = p.matrix
    n = p.n
    eye = np.eye(n, dtype=np.complex128)
    r0, delta = contour.inner_radius, contour.line_offset
    lam_max = float(p.eigvals.max())
    x_c = np.sqrt(r0**2 - delta**2)
    big = ray_length_factor * lam_max
    n_arc = contour.node_count // 2
    n_ray = (contour.node_count - n_arc) // 2

    def integrand(lam):
        lam_b = lam.reshape((-1,) + (1,) * a.ndim)
        return np.exp(s * np.log(lam_b)) * np.linalg.inv(lam_b * eye - a[None])

    # arc, clockwise from angle phi0 to -phi0
    phi0 = np.pi - np.arcsin(delta / r0)
    th, wt = _gauss(-phi0, phi0, n_arc)
    lam = r0 * np.exp(1j * th)
    total = -np.tensordot(wt * 1j * lam, integrand(lam), axes=(0, 0))
    # rays, substituted x = exp(u)
    u, wu = _gauss(np.log(x_c), np.log(big), n_ray)
    x = np.exp(u)
    total = total + np.tensordot(wu * x, integrand(-x + 1j * delta), axes=(0, 0))
    total = total - np.tensordot(wu * x, integrand(-x - 1j * delta), axes=(0, 0))
    # tails beyond |lam| = big via (lam - P)^{-1} = sum_j P^j lam^{-j-1}
    z_up, z_dn = -big + 1j * delta, -big - 1j * delta
    term = np.broadcast_to(eye, a.shape).copy()
    ratio = lam_max / abs(z_up)
    j = 0
    while True:
        coef = (np.exp((s - j) * np.log(z_up)) - np.exp((s - j) * np.log(z_dn))) / (s - j)
        total = total + coef * term
        j += 1
        if ratio**j < 1e-18 or j > 60:
            break
        term = term @ a
    return total / (2j * np.pi)
