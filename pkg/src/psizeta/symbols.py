"""Classical matrix-valued symbols on T^m x (R^m \\ 0), m in {1, 2}.

A homogeneous term of degree ``d`` is stored by its restriction to the
cosphere bundle: samples on a uniform x-grid (``2X + 1`` points per
coordinate) times the angular nodes (the two sheets ``xi = +-1`` for m = 1, a
uniform theta-grid for m = 2), each sample an ``n x n`` matrix.  The value at
``(x, xi)`` is ``|xi|^d`` times the trigonometric interpolant at
``(x, xi / |xi|)``.

Quantization is toroidal, ``(A f)(x) = sum_k e^{ik.x} a(x, k) f_hat(k)``, so
compositions follow ``sum_alpha (1/alpha!) d_xi^alpha a . D_x^alpha b`` with
``D_x = -i d_x`` and ``xi``-derivatives taken in polar form: the radial part
comes from homogeneity, the angular part by spectral differentiation.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from functools import cached_property, lru_cache

import numpy as np

from ._validation import check_fiber_matrix, check_positive_int, SpecError
from .fiber import PDMatrix

__all__ = [
    "CosphereGrid",
    "CosphereMeasure",
    "CosphereSection",
    "HomogeneousTerm",
    "ClassicalSymbol",
    "evaluate",
    "compose",
    "parametrix",
    "adjoint",
    "poisson_bracket",
    "restrict_to_cosphere",
    "extend_homogeneous",
    "quantize",
    "symbol_at_lattice",
]

DEFAULT_TRUNCATION = 4


@dataclass(frozen=True)
class CosphereGrid:
    """Sampling grid on S*(T^m) with fiber dimension ``fiber_dim``."""

    dim: int
    x_modes: int
    angular_nodes: int = 2
    fiber_dim: int = 1

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        check_positive_int(self.x_modes, "x_modes")
        check_positive_int(self.fiber_dim, "fiber_dim")
        if self.dim == 1 and self.angular_nodes != 2:
            raise ValueError("for dim=1 the angular nodes are the two sheets xi = +1, -1")
        if self.dim == 2 and (self.angular_nodes < 8 or self.angular_nodes % 2):
            raise ValueError(f"angular_nodes must be even and >= 8, got {self.angular_nodes}")

    @property
    def nx(self):
        return 2 * self.x_modes + 1

    @property
    def x_shape(self):
        return (self.nx,) * self.dim

    @property
    def sample_shape(self):
        return self.x_shape + (self.angular_nodes, self.fiber_dim, self.fiber_dim)

    @cached_property
    def x_points(self):
        return 2 * np.pi * np.arange(self.nx) / self.nx

    @cached_property
    def x_wavenumbers(self):
        return np.fft.fftfreq(self.nx, 1.0 / self.nx)

    @cached_property
    def theta(self):
        if self.dim == 1:
            return np.array([0.0, np.pi])
        return 2 * np.pi * np.arange(self.angular_nodes) / self.angular_nodes

    @cached_property
    def directions(self):
        """Unit covectors at the angular nodes, shape ``(angular_nodes, dim)``."""
        if self.dim == 1:
            return np.array([[1.0], [-1.0]])
        return np.stack([np.cos(self.theta), np.sin(self.theta)], axis=1)

    @cached_property
    def _ang_cs(self):
        # cos/sin of the angular nodes shaped to broadcast against one term's samples
        c = np.cos(self.theta).reshape(-1, 1, 1)
        s = np.sin(self.theta).reshape(-1, 1, 1)
        return c, s

    @cached_property
    def _ang_wavenumbers(self):
        k = np.fft.fftfreq(self.angular_nodes, 1.0 / self.angular_nodes)
        k[self.angular_nodes // 2] = 0.0
        return k

    def with_fiber_dim(self, n):
        return replace(self, fiber_dim=n)

    def zeros(self, lead=()):
        return np.zeros(tuple(lead) + self.sample_shape, dtype=np.complex128)

    def identity_samples(self):
        return np.broadcast_to(np.eye(self.fiber_dim, dtype=np.complex128), self.sample_shape).copy()

    def check_samples(self, samples, name="samples"):
        samples = np.asarray(samples, dtype=np.complex128)
        if samples.shape != self.sample_shape:
            raise ValueError(f"{name} has shape {samples.shape}, expected {self.sample_shape}")
        if not np.all(np.isfinite(samples)):
            raise ValueError(f"{name} has non-finite entries")
        return samples


@dataclass(frozen=True)
class CosphereSection:
    """A matrix-valued function on S*(T^m) given by its grid samples."""

    samples: np.ndarray
    grid: CosphereGrid


@dataclass(frozen=True, eq=False)
class HomogeneousTerm:
    """``|xi|^degree`` times a section sampled on the cosphere grid."""

    degree: complex
    samples: np.ndarray
    grid: CosphereGrid

    def __post_init__(self):
        object.__setattr__(self, "degree", complex(self.degree))
        object.__setattr__(self, "samples", self.grid.check_samples(self.samples))


class ClassicalSymbol:
    """Symbol of order ``order`` with homogeneous terms of degrees ``order - j``, j = 0..K.

    ``terms`` has shape ``(K + 1,) + grid.sample_shape``.
    """

    def __init__(self, order, terms, grid):
        self.order = complex(order)
        terms = np.asarray(terms, dtype=np.complex128)
        if terms.ndim != len(grid.sample_shape) + 1 or terms.shape[1:] != grid.sample_shape:
            raise ValueError(f"terms shape {terms.shape} incompatible with grid {grid.sample_shape}")
        self.terms = terms
        self.grid = grid

    @property
    def truncation(self):
        return self.terms.shape[0] - 1

    @property
    def degrees(self):
        return self.order - np.arange(self.truncation + 1)

    def term(self, j):
        return HomogeneousTerm(self.order - j, self.terms[j], self.grid)

    @property
    def principal(self):
        return self.term(0)

    @cached_property
    def x_independent(self):
        ref = self.terms[(slice(None),) + (slice(0, 1),) * self.grid.dim]
        return bool(np.array_equal(np.broadcast_to(ref, self.terms.shape), self.terms))

    @classmethod
    def identity(cls, grid, truncation=DEFAULT_TRUNCATION):
        terms = grid.zeros((truncation + 1,))
        terms[0] = grid.identity_samples()
        return cls(0, terms, grid)

    @classmethod
    def from_terms(cls, order, term_samples, grid, truncation=None):
        """Build from a list of per-degree samples, zero-padding to ``truncation``."""
        term_samples = list(term_samples)
        if truncation is None:
            truncation = len(term_samples) - 1
        if len(term_samples) > truncation + 1:
            raise ValueError("more terms than the truncation allows")
        terms = grid.zeros((truncation + 1,))
        for j, t in enumerate(term_samples):
            terms[j] = grid.check_samples(t, f"term {j}")
        return cls(order, terms, grid)

    def truncate(self, K):
        if K > self.truncation:
            raise ValueError(f"truncation {K} exceeds stored depth {self.truncation}")
        return ClassicalSymbol(self.order, self.terms[: K + 1].copy(), self.grid)

    def _check_compatible(self, other):
        if not isinstance(other, ClassicalSymbol):
            return NotImplemented
        if other.grid != self.grid:
            raise ValueError("symbols live on different grids")
        if other.order != self.order or other.truncation != self.truncation:
            raise ValueError("symbols must share order and truncation to be added")
        return None

    def __add__(self, other):
        if self._check_compatible(other) is NotImplemented:
            return NotImplemented
        return ClassicalSymbol(self.order, self.terms + other.terms, self.grid)

    def __sub__(self, other):
        if self._check_compatible(other) is NotImplemented:
            return NotImplemented
        return ClassicalSymbol(self.order, self.terms - other.terms, self.grid)

    def __mul__(self, c):
        return ClassicalSymbol(self.order, complex(c) * self.terms, self.grid)

    __rmul__ = __mul__

    def term_norms(self):
        """Max-abs norm of every stored term."""
        return np.abs(self.terms).reshape(self.truncation + 1, -1).max(axis=1)

    def __repr__(self):
        return (
            f"ClassicalSymbol(order={self.order:.6g}, K={self.truncation}, dim={self.grid.dim}, "
            f"n={self.grid.fiber_dim})"
        )


# --------------------------------------------------------------------------
# derivative kernels on single-term sample arrays, shape x_shape + (A, n, n)


@lru_cache(maxsize=None)
def _multi_indices(dim, order):
    if dim == 1:
        return ((order,),)
    return tuple((a, order - a) for a in range(order + 1))


def _alpha_factorial(alpha):
    return math.prod(math.factorial(a) for a in alpha)


def _x_axes(grid):
    return tuple(range(grid.dim))


def _fft_x(samples, grid):
    return np.fft.fftn(samples, axes=_x_axes(grid))


@lru_cache(maxsize=256)
def _x_multiplier(grid, alpha):
    """Fourier multiplier of ``D_x^alpha``, broadcastable against a term's samples."""
    k = grid.x_wavenumbers
    out = np.ones(grid.x_shape)
    for j, a in enumerate(alpha):
        if a:
            shape = [1] * grid.dim
            shape[j] = grid.nx
            out = out * (k**a).reshape(shape)
    return out.reshape(grid.x_shape + (1, 1, 1))


def _dx_from_hat(hat, grid, alpha):
    if not any(alpha):
        return np.fft.ifftn(hat, axes=_x_axes(grid))
    return np.fft.ifftn(hat * _x_multiplier(grid, alpha), axes=_x_axes(grid))


def _D_x(samples, grid, alpha):
    """``D_x^alpha`` with ``D_x = -i d/dx``."""
    if not any(alpha):
        return samples
    return _dx_from_hat(_fft_x(samples, grid), grid, alpha)


def _partial_x(samples, grid, j):
    """Plain derivative ``d/dx_j``."""
    alpha = tuple(1 if i == j else 0 for i in range(grid.dim))
    return 1j * _D_x(samples, grid, alpha)


def _d_theta(samples, grid):
    ax = grid.dim
    hat = np.fft.fft(samples, axis=ax)
    shape = [1] * samples.ndim
    shape[ax] = grid.angular_nodes
    return np.fft.ifft(hat * (1j * grid._ang_wavenumbers).reshape(shape), axis=ax)


def _falling(d, p):
    out = 1.0 + 0j
    for i in range(p):
        out *= d - i
    return out


def _d_xi(samples, degree, grid, alpha):
    """Samples of ``d_xi^alpha`` of a degree-``degree`` term; the result has degree ``degree - |alpha|``."""
    if not any(alpha):
        return samples
    if grid.dim == 1:
        p = alpha[0]
        sign = np.array([1.0, -1.0]).reshape(1, 2, 1, 1) ** p
        return _falling(degree, p) * sign * samples
    c, s = grid._ang_cs
    out, d = samples, degree
    for j, a in enumerate(alpha):
        for _ in range(a):
            ft = _d_theta(out, grid)
            out = d * c * out - s * ft if j == 0 else d * s * out + c * ft
            d -= 1
    return out


def _check_same_grid(a, b):
    if a.grid != b.grid:
        raise ValueError(f"grid mismatch: {a.grid} vs {b.grid}")


def _resolve_K(K, *symbols):
    depth = min(s.truncation for s in symbols)
    if K is None:
        return depth
    K = int(K)
    if K < 0 or K > depth:
        raise ValueError(f"truncation K={K} exceeds stored depth {depth}")
    return K


# --------------------------------------------------------------------------
# symbol operations


def evaluate(term, x, xi):
    """Value of a homogeneous term at a point ``x`` and nonzero covector ``xi``."""
    grid = term.grid
    x = np.atleast_1d(np.asarray(x, dtype=float))
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    if x.shape != (grid.dim,) or xi.shape != (grid.dim,):
        raise ValueError(f"x and xi must have {grid.dim} components")
    r = float(np.linalg.norm(xi))
    if r == 0:
        raise ValueError("xi = 0 is outside the domain of a homogeneous symbol")
    vals = term.samples
    for j in range(grid.dim):
        w = _trig_weights(grid.nx, np.array([x[j]]))[0]
        vals = np.tensordot(w, vals, axes=(0, 0))
    if grid.dim == 1:
        ang = vals[0 if xi[0] > 0 else 1]
    else:
        w = _trig_weights(grid.angular_nodes, np.array([np.arctan2(xi[1], xi[0])]))[0]
        ang = np.tensordot(w, vals, axes=(0, 0))
    return np.exp(term.degree * np.log(r)) * ang


def _trig_weights(n, pts):
    """Rows of weights mapping ``n`` uniform samples on [0, 2 pi) to trigonometric interpolant values."""
    pts = np.asarray(pts, dtype=float)
    nodes = 2 * np.pi * np.arange(n) / n
    diff = pts[:, None] - nodes[None, :]
    k = np.arange(-((n - 1) // 2), (n - 1) // 2 + 1)
    w = np.cos(diff[..., None] * k).sum(-1)
    if n % 2 == 0:
        # Nyquist mode enters as a cosine, split evenly between +-n/2
        w += np.cos(n // 2 * diff)
    return w / n


def compose(a, b, K=None):
    """Symbol of the operator product ``Op(a) Op(b)``, truncated at ``K`` terms below the leading one."""
    _check_same_grid(a, b)
    K = _resolve_K(K, a, b)
    grid = a.grid
    out = grid.zeros((K + 1,))
    if b.x_independent:
        for r in range(K + 1):
            for i in range(r + 1):
                out[r] += a.terms[i] @ b.terms[r - i]
        return ClassicalSymbol(a.order + b.order, out, grid)
    b_hat = [_fft_x(b.terms[j], grid) for j in range(K + 1)]
    for order in range(K + 1):
        for alpha in _multi_indices(grid.dim, order):
            inv_fact = 1.0 / _alpha_factorial(alpha)
            db = [_dx_from_hat(b_hat[j], grid, alpha) for j in range(K + 1 - order)]
            for i in range(K + 1 - order):
                da = _d_xi(a.terms[i], a.order - i, grid, alpha)
                if inv_fact != 1.0:
                    da = inv_fact * da
                for j in range(K + 1 - order - i):
                    out[i + j + order] += da @ db[j]
    return ClassicalSymbol(a.order + b.order, out, grid)


def _min_singular(m):
    return np.linalg.svd(m, compute_uv=False)[..., -1]


def parametrix(a, K=None, min_singular=1e-8):
    """Symbol ``b`` with ``compose(a, b) = identity`` through degree ``-K``."""
    K = _resolve_K(K, a)
    grid = a.grid
    smin = _min_singular(a.terms[0])
    worst = float(smin.min())
    if worst < min_singular:
        idx = tuple(int(i) for i in np.unravel_index(np.argmin(smin), smin.shape))
        raise np.linalg.LinAlgError(
            f"leading term not invertible: smallest singular value {worst:.3e} at grid index {idx}"
        )
    b = grid.zeros((K + 1,))
    b[0] = np.linalg.inv(a.terms[0])
    order_b = -a.order
    xind = a.x_independent
    da_cache = {}
    b_hat = []
    for r in range(1, K + 1):
        b_hat.append(None if xind else _fft_x(b[r - 1], grid))
        acc = np.zeros(grid.sample_shape, dtype=np.complex128)
        for order in range(0, r + 1):
            if xind and order:
                break
            for alpha in _multi_indices(grid.dim, order):
                for i in range(r - order + 1):
                    j = r - order - i
                    if j == r:
                        continue
                    key = (i, alpha)
                    if key not in da_cache:
                        da = _d_xi(a.terms[i], a.order - i, grid, alpha)
                        da_cache[key] = da / _alpha_factorial(alpha)
                    db = b[j] if xind else _dx_from_hat(b_hat[j], grid, alpha)
                    acc += da_cache[key] @ db
        b[r] = -b[0] @ acc
    return ClassicalSymbol(order_b, b, grid)


def adjoint(a, K=None):
    """Symbol of the formal L^2 adjoint: ``sum_alpha (1/alpha!) d_xi^alpha D_x^alpha a*``."""
    K = _resolve_K(K, a)
    grid = a.grid
    star = np.conj(np.swapaxes(a.terms[: K + 1], -1, -2))
    order = np.conj(a.order)
    out = grid.zeros((K + 1,))
    out[:] = star
    if a.x_independent:
        return ClassicalSymbol(order, out, grid)
    for o in range(1, K + 1):
        for alpha in _multi_indices(grid.dim, o):
            inv_fact = 1.0 / _alpha_factorial(alpha)
            for j in range(K + 1 - o):
                t = _D_x(star[j], grid, alpha)
                out[j + o] += inv_fact * _d_xi(t, order - j, grid, alpha)
    return ClassicalSymbol(order, out, grid)


def poisson_bracket(g, h):
    """``{g, h} = sum_j d_xi_j g d_x_j h - d_x_j g d_xi_j h`` for scalar ``g``.

    The result is homogeneous of degree ``deg g + deg h - 1``.
    """
    gs = g.samples
    if g.grid.fiber_dim != 1:
        off = gs - np.eye(g.grid.fiber_dim) * gs[..., :1, :1]
        if np.abs(off).max() > 0:
            raise ValueError("poisson_bracket needs a scalar-valued g")
        gs = gs[..., :1, :1]
    if g.grid.with_fiber_dim(h.grid.fiber_dim) != h.grid:
        raise ValueError("g and h live on different grids")
    grid = h.grid
    ggrid = g.grid.with_fiber_dim(1)
    out = np.zeros(grid.sample_shape, dtype=np.complex128)
    for j in range(grid.dim):
        e = tuple(1 if i == j else 0 for i in range(grid.dim))
        out += _d_xi(gs, g.degree, ggrid, e) * _partial_x(h.samples, grid, j)
        out -= _partial_x(gs, ggrid, j) * _d_xi(h.samples, h.degree, grid, e)
    return HomogeneousTerm(g.degree + h.degree - 1, out, grid)


def restrict_to_cosphere(term):
    return CosphereSection(term.samples.copy(), term.grid)


def extend_homogeneous(section, degree):
    return HomogeneousTerm(degree, section.samples.copy(), section.grid)


@dataclass(frozen=True)
class CosphereMeasure:
    """The density ``|mu|``, ``mu = alpha ^ omega^(m-1)``, on S*(T^m).

    ``omega = sum d xi_j ^ d x_j`` is the canonical symplectic form,
    ``Xi = xi . d/dxi`` generates the dilations and ``alpha = i_Xi omega =
    sum xi_j dx_j``.  On the unit cosphere ``|mu| = dx`` on each sheet for
    m = 1 and ``|xi_1 d xi_2/d theta - xi_2 d xi_1/d theta| dx d theta =
    dx d theta`` for m = 2.
    """

    grid: CosphereGrid
    angular_weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        grid = self.grid
        u = grid.directions
        if grid.dim == 1:
            w = np.abs(u[:, 0])
        else:
            du = np.stack([-u[:, 1], u[:, 0]], axis=1)  # d(direction)/d theta
            w = np.abs(u[:, 0] * du[:, 1] - u[:, 1] * du[:, 0]) * (2 * np.pi / grid.angular_nodes)
        object.__setattr__(self, "angular_weights", w)

    @property
    def x_volume(self):
        return (2 * np.pi) ** self.grid.dim

    @property
    def total_mass(self):
        return self.x_volume * float(self.angular_weights.sum())

    def integrate(self, samples):
        """Integral of a sampled section, returned as an ``n x n`` matrix."""
        grid = self.grid
        samples = grid.check_samples(samples)
        xmean = samples.mean(axis=_x_axes(grid))
        return self.x_volume * np.tensordot(self.angular_weights, xmean, axes=(0, 0))


# --------------------------------------------------------------------------
# lattice evaluation and quantization


def _lattice(dim, B):
    k = np.arange(-B, B + 1)
    if dim == 1:
        return k[:, None]
    k1, k2 = np.meshgrid(k, k, indexing="ij")
    return np.stack([k1.ravel(), k2.ravel()], axis=1)


def symbol_at_lattice(symbol, points, k0_override=None):
    """Full symbol ``sum_j |k|^(order - j) a_j(x, k/|k|)`` on the x-grid at integer ``points``.

    Returns shape ``(len(points),) + x_shape + (n, n)``.  At ``k = 0`` the value
    is ``k0_override`` (identity by default), constant in x.
    """
    grid = symbol.grid
    pts = np.asarray(points, dtype=float).reshape(-1, grid.dim)
    n = grid.fiber_dim
    k0 = np.eye(n) if k0_override is None else check_fiber_matrix(k0_override, "k0_override")
    r = np.linalg.norm(pts, axis=1)
    nz = r > 0
    out = np.zeros((len(pts),) + grid.x_shape + (n, n), dtype=np.complex128)
    out[~nz] = k0
    if not nz.any():
        return out
    ax = grid.dim  # angular axis of a term
    if grid.dim == 1:
        sheet = np.where(pts[nz, 0] > 0, 0, 1)
        ang = np.moveaxis(np.take(symbol.terms, sheet, axis=ax + 1), ax + 1, 1)
    else:
        th = np.arctan2(pts[nz, 1], pts[nz, 0])
        w = _trig_weights(grid.angular_nodes, th)
        ang = np.tensordot(w, symbol.terms, axes=(1, ax + 1))  # (P, K+1, x.., n, n)
        ang = np.moveaxis(ang, 0, 1)
    # ang: (K+1, P, x..., n, n)
    logr = np.log(r[nz])
    acc = np.zeros(ang.shape[1:], dtype=np.complex128)
    for j in range(symbol.truncation + 1):
        scale = np.exp((symbol.order - j) * logr).reshape((-1,) + (1,) * (ang.ndim - 2))
        acc += scale * ang[j]
    out[nz] = acc
    return out


def quantize(symbol, B, k0_override=None):
    """Matrix of ``Op(symbol)`` on the Fourier modes ``|k_i| <= B`` (tensor-product box).

    Element ``[(p, a), (k, b)]`` is the ``p - k`` Fourier coefficient in x of
    ``symbol(x, k)[a, b]``.  The basis is ordered lexicographically in ``k``
    with the fiber index fastest.
    """
    grid = symbol.grid
    B = check_positive_int(B, "B")
    pts = _lattice(grid.dim, B)
    vals = symbol_at_lattice(symbol, pts, k0_override)
    hat = np.fft.fftn(vals, axes=tuple(range(1, 1 + grid.dim))) / grid.nx**grid.dim
    n = grid.fiber_dim
    npts = len(pts)
    mat = np.zeros((npts, n, npts, n), dtype=np.complex128)
    X = grid.x_modes
    shifts = list(itertools.product(range(-X, X + 1), repeat=grid.dim))
    index = {tuple(p): i for i, p in enumerate(pts.tolist())}
    for col, k in enumerate(pts.tolist()):
        for ell in shifts:
            p = tuple(ki + li for ki, li in zip(k, ell))
            row = index.get(p)
            if row is None:
                continue
            idx = (col,) + tuple(li % grid.nx for li in ell)
            mat[row, :, col, :] = hat[idx]
    return mat.reshape(npts * n, npts * n)


def lattice_points(dim, B):
    """The basis ordering used by :func:`quantize`."""
    return _lattice(dim, B)


def symbol_from_function(order, funcs, grid, truncation=DEFAULT_TRUNCATION):
    """Sample callables ``f_j(x, direction) -> (n, n)`` onto ``grid`` as the terms of a symbol.

    ``x`` arrives with shape ``x_shape + (dim,)`` broadcast against the angular
    axis; each callable must return an array of shape ``grid.sample_shape``.
    """
    xs = np.meshgrid(*([grid.x_points] * grid.dim), indexing="ij")
    x = np.stack(xs, axis=-1)[..., None, :]  # x_shape + (1, dim)
    u = grid.directions.reshape((1,) * grid.dim + grid.directions.shape)
    samples = []
    for f in funcs:
        v = np.asarray(f(x, u), dtype=np.complex128)
        samples.append(np.broadcast_to(v, grid.sample_shape))
    return ClassicalSymbol.from_terms(order, samples, grid, truncation)


def principal_pd(symbol, floor=None):
    """The leading term as a :class:`PDMatrix` over the grid; raises if not Hermitian PD."""
    try:
        return PDMatrix(symbol.terms[0], floor=floor)
    except ValueError as exc:
        raise SpecError(f"leading term is not elliptic positive: {exc}") from exc
