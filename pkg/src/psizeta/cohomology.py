"""The cochain complex of (C, +) acting on cosphere sections by sigma-conjugation.

A section is an array of fiber matrices, shape ``(..., n, n)``; ``s`` acts on
it by ``s . g = sigma^{-s} g sigma^s`` pointwise.  One-cochains ``h`` and
two-cochains ``f`` are holomorphic, section-valued and vanish when any
argument is zero:

    (delta1 h)(a, b)    = a.h(b) - h(a + b) + h(a)
    (delta2 f)(a, b, c) = a.f(b, c) - f(a + b, c) + f(a, b + c) - f(a, b)

:func:`solve` inverts ``delta1`` on cocycles: given ``f`` and the value
``h(1)`` it returns the ``h`` with ``h(0) = 0`` whose derivative obeys
``h'(a) = a.h'(0) - g(a)``, ``g(t) = df/db (t, 0)``, so that

    h(a) = T(a) h'(0) - int_0^a g,   h'(0) = T(1)^{-1} (h(1) + int_0^1 g).
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np

from ._validation import check_complex, check_positive, check_positive_int
from .fiber import PDMatrix, conjugate, t_operator, t_solve

__all__ = [
    "ConjugationAction",
    "OneCochain",
    "TwoCochain",
    "SeriesCochain",
    "CocycleReport",
    "CocycleError",
    "delta1",
    "delta2",
    "cauchy_derivative",
    "verify_cocycle",
    "solve",
]


class CocycleError(ValueError):
    """Raised when a two-cochain fails the cocycle check; ``triple`` is the worst sample."""

    def __init__(self, message, triple=None):
        self.triple = triple
        super().__init__(message)


class ConjugationAction:
    """``s . g = sigma^{-s} g sigma^s`` for a positive-definite section ``sigma``."""

    def __init__(self, sigma):
        self.sigma = sigma if isinstance(sigma, PDMatrix) else PDMatrix(sigma)

    @classmethod
    def trivial(cls, shape):
        """The action of ``sigma = I`` on sections of shape ``shape + (n, n)``."""
        *batch, n, _ = shape
        return cls(np.broadcast_to(np.eye(n), tuple(shape)).copy())

    @property
    def shape(self):
        return self.sigma.matrix.shape

    def __call__(self, s, g):
        return conjugate(self.sigma, s, g)


class _Memo:
    """Thread-safe memo keyed by argument tuples; results never depend on cache state."""

    def __init__(self, func):
        self._func = func
        self._cache = {}
        self._lock = threading.Lock()

    def __call__(self, *args):
        key = tuple(complex(a) for a in args)
        with self._lock:
            hit = self._cache.get(key)
        if hit is not None:
            return hit
        val = np.asarray(self._func(*key), dtype=np.complex128)
        val.setflags(write=False)
        with self._lock:
            return self._cache.setdefault(key, val)

    def clear(self):
        with self._lock:
            self._cache.clear()


def cauchy_derivative(func, z0=0.0, radius=0.01, nodes=16):
    """First derivative of a holomorphic function at ``z0`` from ``nodes`` samples on a circle."""
    radius = check_positive(radius, "radius")
    nodes = check_positive_int(nodes, "nodes", minimum=2)
    w = radius * np.exp(2j * np.pi * np.arange(nodes) / nodes)
    acc = 0
    for wq in w:
        acc = acc + np.asarray(func(z0 + wq)) / wq
    return acc / nodes


class OneCochain:
    """A lazily evaluated, memoized holomorphic map ``s -> section`` with ``h(0) = 0``."""

    def __init__(self, evaluator, radius=0.01):
        self._memo = _Memo(evaluator)
        self.radius = radius

    def __call__(self, s):
        return self._memo(check_complex(s))

    def derivative(self, s, radius=None, nodes=16):
        return cauchy_derivative(self, s, self.radius if radius is None else radius, nodes)

    @classmethod
    def zero(cls, shape):
        z = np.zeros(shape, dtype=np.complex128)
        return cls(lambda s: z)


class TwoCochain:
    """A lazily evaluated, memoized holomorphic map ``(a, b) -> section``."""

    def __init__(self, evaluator):
        self._memo = _Memo(evaluator)

    def __call__(self, a, b):
        return self._memo(check_complex(a, "a"), check_complex(b, "b"))

    def db_at_zero(self, t, radius=0.01, nodes=16):
        """``df/db (t, 0)`` by Cauchy differentiation in the second argument."""
        return cauchy_derivative(lambda b: self(t, b), 0.0, radius, nodes)


def delta1(h, action):
    """Coboundary of a one-cochain."""
    return TwoCochain(lambda a, b: action(a, h(b)) - h(a + b) + h(a))


def delta2(f, action):
    """Coboundary of a two-cochain, returned as a plain callable ``(a, b, c) -> section``."""

    def g(a, b, c):
        return action(a, f(b, c)) - f(a + b, c) + f(a, b + c) - f(a, b)

    return g


@dataclass(frozen=True)
class CocycleReport:
    """Outcome of :func:`verify_cocycle`; violations are max-abs entries."""

    samples: int
    vanishing: float
    delta2: float
    worst_triple: tuple
    tol: float

    @property
    def max_violation(self):
        return max(self.vanishing, self.delta2)

    @property
    def passed(self):
        return self.max_violation <= self.tol


def _unit_disk(rng, size):
    r = np.sqrt(rng.uniform(size=size))
    return r * np.exp(2j * np.pi * rng.uniform(size=size))


def verify_cocycle(f, action, samples=50, seed=0, tol=1e-8):
    """Check ``f(0, b) = f(a, 0) = 0`` and ``delta2 f = 0`` at random points of the unit polydisk."""
    samples = check_positive_int(samples, "samples")
    rng = np.random.default_rng(seed)
    pts = _unit_disk(rng, (samples, 3))
    d2 = delta2(f, action)
    vanish = 0.0
    worst, worst_triple = 0.0, (0j, 0j, 0j)
    for a, b, c in pts:
        vanish = max(vanish, float(np.abs(f(a, 0)).max()), float(np.abs(f(0, b)).max()))
        v = float(np.abs(d2(a, b, c)).max())
        if v > worst:
            worst, worst_triple = v, (complex(a), complex(b), complex(c))
    return CocycleReport(samples, vanish, worst, worst_triple, tol)


class SeriesCochain(OneCochain):
    """``h(a) = T(a) h'(0) - G(a)`` with ``G`` a polynomial given by its Taylor coefficients.

    ``coeffs[n]`` is the coefficient of ``a^(n+1)`` in ``G``.
    """

    def __init__(self, sigma, h_prime0, coeffs, radius=0.01):
        self.sigma = sigma
        self.h_prime0 = h_prime0
        self.coeffs = coeffs
        super().__init__(self._evaluate, radius)

    def integral(self, a):
        a = complex(a)
        acc = np.zeros(self.coeffs.shape[1:], dtype=np.complex128)
        for c in self.coeffs[::-1]:  # Horner
            acc = acc * a + c
        return acc * a

    def _evaluate(self, a):
        if a == 0:
            return np.zeros_like(self.h_prime0)
        return t_operator(self.sigma, a, self.h_prime0) - self.integral(a)


def _gauss_integral(g, a, nodes):
    x, w = np.polynomial.legendre.leggauss(nodes)
    x, w = 0.5 * (x + 1), 0.5 * w
    acc = 0
    for xi, wi in zip(x, w):
        acc = acc + wi * g(a * xi)
    return a * acc


def solve(
    f,
    action,
    h1,
    method="gauss",
    quad_nodes=64,
    cauchy_radius=0.01,
    cauchy_nodes=16,
    series_radius=4.5,
    series_nodes=96,
    t_method="direct",
    check=True,
    check_samples=20,
    tol=1e-8,
    seed=0,
):
    """Solve ``delta1 h = f`` with ``h(0) = 0`` and ``h(1) = h1``.

    Parameters
    ----------
    f : TwoCochain
        Must be a cocycle; with ``check=True`` this is verified first and a
        :class:`CocycleError` names the worst sampled triple on failure.
    action : ConjugationAction
    h1 : ndarray
        Prescribed value at ``s = 1``.
    method : {"gauss", "series"}
        How ``int_0^a g`` is formed.  ``"gauss"`` integrates along the
        segment ``[0, a]`` with ``quad_nodes`` Gauss-Legendre nodes on every
        call (memoized).  ``"series"`` samples ``g`` once at ``series_nodes``
        points on the circle of radius ``series_radius``, recovers its Taylor
        coefficients by FFT and integrates them exactly; valid for
        ``|a| < series_radius``.
    t_method : {"direct", "dyadic"}
        Inversion of ``T(1)``, see :func:`psizeta.fiber.t_solve`.

    Returns
    -------
    OneCochain
    """
    sigma = action.sigma
    h1 = np.asarray(h1, dtype=np.complex128)
    if check:
        report = verify_cocycle(f, action, samples=check_samples, seed=seed, tol=tol)
        if not report.passed:
            raise CocycleError(
                f"not a cocycle: max violation {report.max_violation:.3e} > {tol:.1e} "
                f"at (a, b, c) = {report.worst_triple}",
                report.worst_triple,
            )

    def g(t):
        return f.db_at_zero(t, cauchy_radius, cauchy_nodes)

    if method == "series":
        series_radius = check_positive(series_radius, "series_radius")
        series_nodes = check_positive_int(series_nodes, "series_nodes", minimum=8)
        z = series_radius * np.exp(2j * np.pi * np.arange(series_nodes) / series_nodes)
        samples = np.stack([g(zq) for zq in z])
        taylor = np.fft.fft(samples, axis=0) / series_nodes
        taylor /= (series_radius ** np.arange(series_nodes)).reshape((-1,) + (1,) * h1.ndim)
        coeffs = taylor / np.arange(1, series_nodes + 1).reshape((-1,) + (1,) * h1.ndim)
        g_int1 = coeffs.sum(axis=0)
        h_prime0 = t_solve(sigma, h1 + g_int1, method=t_method)
        return SeriesCochain(sigma, h_prime0, coeffs, radius=cauchy_radius)
    if method != "gauss":
        raise ValueError(f"unknown method {method!r}")
    quad_nodes = check_positive_int(quad_nodes, "quad_nodes")
    g_int1 = _gauss_integral(g, 1.0, quad_nodes)
    h_prime0 = t_solve(sigma, h1 + g_int1, method=t_method)

    def h(a):
        if a == 0:
            return np.zeros_like(h1)
        return t_operator(sigma, a, h_prime0) - _gauss_integral(g, a, quad_nodes)

    return OneCochain(h, radius=cauchy_radius)
