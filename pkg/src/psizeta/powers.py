"""Holomorphic families of complex powers built by cohomological induction.

Level 1 is ``E(s) = sigma^s |xi|^s`` with ``sigma`` the leading term of the
input symbol ``A``.  A family at level ``k`` obeys the group law
``E(s) E(t) E(s + t)^{-1} = Id`` in degrees ``0 .. -(k - 1)``.  One refinement
step takes the degree ``-k`` part ``F_k(s, t)`` of that defect, forms the
cocycle ``f(a, b) = sigma^{-(a+b)} F_k(b, a) sigma^{a+b}``, solves
``delta1 h = f`` with ``h(1)`` equal to the degree ``-k`` part of
``A^{-1} E(1) - Id``, and replaces ``E(s)`` by ``E(s) (Id - H(s))`` where
``H(s)`` is the single homogeneous term ``h(s)`` of degree ``-k``.
"""

from __future__ import annotations

import threading
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import SpecError, as_complex_array, check_complex, check_positive_int
from .cohomology import (
    CocycleError,
    ConjugationAction,
    TwoCochain,
    cauchy_derivative,
    solve,
    verify_cocycle,
)
from .fiber import PDMatrix, pd_power
from .symbols import ClassicalSymbol, adjoint, compose, parametrix

__all__ = [
    "HolomorphicSymbolFamily",
    "DefectReport",
    "RefineReport",
    "initial_family",
    "defect",
    "defect_report",
    "refine",
    "build_family",
    "symmetrize",
    "ComplexPowers",
]

CACHE_SIZE = 4096


class _LRU:
    def __init__(self, maxsize):
        self.maxsize = maxsize
        self._data = OrderedDict()
        self._lock = threading.Lock()

    def get(self, key):
        with self._lock:
            val = self._data.get(key)
            if val is not None:
                self._data.move_to_end(key)
            return val

    def put(self, key, val):
        with self._lock:
            self._data.setdefault(key, val)
            self._data.move_to_end(key)
            while len(self._data) > self.maxsize:
                self._data.popitem(last=False)
            return self._data[key]


@dataclass(frozen=True)
class RefineReport:
    """Diagnostics of one refinement step."""

    level: int
    cocycle_violation: float
    worst_triple: tuple
    h1_norm: float


class HolomorphicSymbolFamily:
    """Memoized evaluator ``s -> ClassicalSymbol`` of order ``s``.

    Attributes
    ----------
    base : ClassicalSymbol
        The order-one symbol ``A`` whose powers the family approximates.
    level : int
        The group law holds modulo degrees below ``-(level - 1)``.
    sigma : PDMatrix
        Leading term of ``base`` over the cosphere grid.
    """

    def __init__(self, base, level, sigma, evaluator, truncation, history=(), symmetric=False):
        self.base = base
        self.level = level
        self.sigma = sigma
        self.truncation = truncation
        self.history = tuple(history)
        self.symmetric = symmetric
        self._evaluator = evaluator
        self._cache = _LRU(CACHE_SIZE)

    @property
    def grid(self):
        return self.base.grid

    @property
    def is_multiplier(self):
        return _is_pure_multiplier(self.base)

    def __call__(self, s):
        s = check_complex(s)
        if s == 0:
            return ClassicalSymbol.identity(self.grid, self.truncation)
        hit = self._cache.get(s)
        if hit is not None:
            return hit
        val = self._evaluator(s)
        val.terms.setflags(write=False)
        return self._cache.put(s, val)

    def derivative(self, s, radius=0.01, nodes=16):
        """``d/ds`` of all stored terms (array of term samples) by Cauchy differentiation."""
        return cauchy_derivative(lambda z: self(z).terms, s, radius, nodes)

    def __repr__(self):
        return (
            f"HolomorphicSymbolFamily(level={self.level}, K={self.truncation}, "
            f"dim={self.grid.dim}, n={self.grid.fiber_dim}, symmetric={self.symmetric})"
        )


def _is_pure_multiplier(a):
    return a.x_independent and not np.any(a.terms[1:])


def _leading_pd(a, floor=None):
    try:
        return PDMatrix(a.terms[0], floor=floor)
    except ValueError as exc:
        raise SpecError(f"leading term must be Hermitian positive definite: {exc}", "terms[0]") from exc


def initial_family(A, K=None, floor=None):
    """Level-one family ``s -> pd_power(sigma, s) |xi|^s``."""
    if complex(A.order) != 1:
        raise SpecError(f"order must be 1, got {A.order}", "order")
    K = A.truncation if K is None else check_positive_int(K, "K", minimum=0)
    A = A.truncate(K)
    sigma = _leading_pd(A, floor)
    grid = A.grid

    def evaluator(s):
        terms = grid.zeros((K + 1,))
        terms[0] = pd_power(sigma, s)
        return ClassicalSymbol(s, terms, grid)

    level = K + 1 if _is_pure_multiplier(A) else 1
    return HolomorphicSymbolFamily(A, level, sigma, evaluator, K)


def defect(F, s, t, K=None):
    """``E(s) E(t) E(s + t)^{-1} - Id``, associated left to right."""
    K = F.truncation if K is None else K
    s, t = check_complex(s), check_complex(t)
    eye = ClassicalSymbol.identity(F.grid, K)
    if s == 0 or t == 0:
        # E(0) = Id exactly, so the group law holds exactly on the axes
        return eye - eye
    prod = compose(compose(F(s), F(t), K), parametrix(F(s + t), K), K)
    return prod - eye


@dataclass(frozen=True)
class DefectReport:
    """Per-degree max-abs norms of the defect at sampled ``(s, t)``.

    ``norms[i, j]`` is the norm of the degree ``-j`` term at ``samples[i]``.
    """

    samples: tuple
    norms: np.ndarray = field(repr=False)
    tol: float

    @property
    def max_norms(self):
        return self.norms.max(axis=0)

    @property
    def achieved_level(self):
        """Number of leading degrees (from 0 down) whose defect is below ``tol``."""
        bad = np.nonzero(self.max_norms > self.tol)[0]
        return int(bad[0]) if bad.size else self.norms.shape[1]


def sample_pairs(n, seed, radius=2.0):
    """``n`` seeded points ``(s, t)`` of the bidisk of the given radius."""
    rng = np.random.default_rng(seed)
    r = radius * np.sqrt(rng.uniform(size=(n, 2)))
    z = r * np.exp(2j * np.pi * rng.uniform(size=(n, 2)))
    return tuple((complex(a), complex(b)) for a, b in z)


def defect_report(F, samples=10, seed=0, radius=2.0, tol=1e-7):
    pairs = sample_pairs(samples, seed, radius) if isinstance(samples, int) else tuple(samples)
    norms = np.array([defect(F, s, t).term_norms() for s, t in pairs])
    return DefectReport(pairs, norms, tol)


def _cocycle(F, k):
    sigma = F.sigma

    def f(a, b):
        if a == 0 or b == 0:
            return np.zeros(F.grid.sample_shape, dtype=np.complex128)
        d = defect(F, b, a).terms[k]
        u = a + b
        return pd_power(sigma, -u) @ d @ pd_power(sigma, u)

    return TwoCochain(f)


def refine(
    F,
    method="series",
    cocycle_samples=20,
    cocycle_tol=1e-8,
    seed=0,
    **solver_options,
):
    """Advance a family from level ``k`` to ``k + 1``.

    Raises
    ------
    CocycleError
        If the degree ``-k`` defect fails the cocycle test; the message names
        the offending ``(a, b, c)``.
    """
    k = F.level
    if k > F.truncation:
        return F
    A = F.base
    K = F.truncation
    action = ConjugationAction(F.sigma)
    f = _cocycle(F, k)
    report = verify_cocycle(f, action, samples=cocycle_samples, seed=seed, tol=cocycle_tol)
    if not report.passed:
        raise CocycleError(
            f"level {k}: degree -{k} defect is not a cocycle, violation "
            f"{report.max_violation:.3e} at (a, b, c) = {report.worst_triple}",
            report.worst_triple,
        )
    eye = ClassicalSymbol.identity(F.grid, K)
    h1 = (compose(parametrix(A, K), F(1.0), K) - eye).terms[k]
    h = solve(f, action, h1, method=method, check=False, **solver_options)
    grid = F.grid

    def evaluator(s):
        corr = grid.zeros((K + 1,))
        corr[0] = grid.identity_samples()
        corr[k] = -h(s)
        return compose(F(s), ClassicalSymbol(0, corr, grid), K)

    info = RefineReport(k, report.max_violation, report.worst_triple, float(np.abs(h1).max()))
    return HolomorphicSymbolFamily(A, k + 1, F.sigma, evaluator, K, F.history + (info,))


def build_family(A, K=None, n_levels=None, floor=None, **refine_options):
    """Refine the initial family until level ``n_levels`` (default ``K + 1``, i.e. all stored degrees)."""
    F = initial_family(A, K, floor)
    target = F.truncation + 1 if n_levels is None else check_positive_int(n_levels, "n_levels")
    while F.level < target:
        F = refine(F, **refine_options)
    return F


def symmetrize(F):
    """``s -> (E(s) + E(conj s)^*) / 2``."""
    if F.symmetric:
        return F
    K = F.truncation

    def evaluator(s):
        return 0.5 * (F(s) + adjoint(F(np.conj(s)), K))

    return HolomorphicSymbolFamily(F.base, F.level, F.sigma, evaluator, K, F.history, symmetric=True)


class ComplexPowers(TransformerMixin, BaseEstimator):
    """Estimator-style wrapper: ``fit`` builds the family, ``transform`` evaluates it.

    Parameters
    ----------
    truncation : int
        Number of homogeneous terms kept below the leading one.
    n_levels : int or None
        Induction depth; ``None`` means ``truncation + 1``.
    method : {"series", "gauss"}
        Integration scheme of the cohomology solver.
    symmetric : bool
        Apply :func:`symmetrize` after building.
    seed : int
        Seed of the cocycle checks.
    """

    def __init__(self, truncation=4, n_levels=None, method="series", symmetric=False, seed=0):
        self.truncation = truncation
        self.n_levels = n_levels
        self.method = method
        self.symmetric = symmetric
        self.seed = seed

    def fit(self, X, y=None):
        if not isinstance(X, ClassicalSymbol):
            raise TypeError("fit expects a ClassicalSymbol of order 1")
        F = build_family(X, self.truncation, self.n_levels, method=self.method, seed=self.seed)
        self.family_ = symmetrize(F) if self.symmetric else F
        return self

    def transform(self, X):
        """Stacked term samples of the family at each ``s`` in ``X``."""
        check_is_fitted(self, "family_")
        s = as_complex_array(X, "s")
        return np.stack([self.family_(si).terms for si in s])
