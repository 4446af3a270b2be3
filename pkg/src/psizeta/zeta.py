"""Trace functions, their meromorphic continuation and the noncommutative residue.

Under toroidal quantization the trace of ``Op(a)`` is the lattice sum
``sum_k mean_x tr a(x, k)``.  For a classical symbol of order ``s`` the term
of degree ``s - j`` contributes ``sum_{k != 0} |k|^(s-j) abar_j(k / |k|)`` with
``abar_j`` the x-mean of its fiber trace.  Sums up to ``|k| <= N`` are taken
exactly; the remainder is an explicit meromorphic function of ``s``:

* m = 1: Euler-Maclaurin for ``sum_{k > N} k^(-w)``, ``w = j - s``, whose only
  pole ``N^(1-w) / (w - 1)`` sits at ``s = j - 1`` with residue
  ``-(abar_j(+1) + abar_j(-1))``;
* m = 2: the radial integral ``-2 pi c_j r^(s-j+2) / (s - j + 2)`` of the
  angular mean ``c_j``, pole at ``s = j - 2``; the lattice-minus-integral
  remainder is holomorphic only for ``Re s < -1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import bernoulli
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import (
    NotPositiveDefiniteError,
    PoleError,
    as_complex_array,
    check_complex,
    check_fiber_matrix,
    check_positive_int,
)
from .fiber import PDMatrix, pd_power
from .symbols import CosphereMeasure, lattice_points, quantize, _trig_weights

__all__ = [
    "LatticeSumConfig",
    "MeromorphicData",
    "ResidueValue",
    "Calibration",
    "CalibrationError",
    "nc_residue",
    "trace_function",
    "meromorphic_extend",
    "residue_at_first_pole",
    "gamma0",
    "galerkin_zeta",
    "galerkin_power",
    "commutator_trace_check",
    "SpectralZeta",
]

POLE_TOL = 1e-12


class CalibrationError(ValueError):
    """Raised when calibration specs disagree on gamma_0."""


@dataclass(frozen=True)
class LatticeSumConfig:
    """Exact summation over ``|k| <= N``, ``tail_order`` Euler-Maclaurin corrections (m = 1)."""

    N: int = 10_000
    tail_order: int = 6
    k0_override: np.ndarray | None = None

    def __post_init__(self):
        check_positive_int(self.N, "N", minimum=8)
        check_positive_int(self.tail_order, "tail_order", minimum=0)
        if self.tail_order > 10:
            raise ValueError(f"tail_order must be <= 10, got {self.tail_order}")
        if self.k0_override is not None:
            object.__setattr__(self, "k0_override", check_fiber_matrix(self.k0_override, "k0_override"))


@dataclass(frozen=True)
class ResidueValue:
    matrix_part: np.ndarray
    scalar_part: complex


@dataclass(frozen=True)
class MeromorphicData:
    """Poles ``(location, residue)`` and regular values ``(s, value)`` in ``window = (lo, hi)`` of Re s."""

    poles: tuple
    regular_evaluations: tuple
    window: tuple


@dataclass(frozen=True)
class Calibration:
    value: float
    values: tuple = field(default=())
    spread: float = 0.0


# --------------------------------------------------------------------------
# noncommutative residue


def nc_residue(term):
    """Integral of a degree ``-m`` term over the cosphere bundle; zero for any other degree."""
    grid = term.grid
    n = grid.fiber_dim
    if abs(term.degree + grid.dim) > POLE_TOL:
        return ResidueValue(np.zeros((n, n), dtype=np.complex128), 0j)
    mat = CosphereMeasure(grid).integrate(term.samples)
    return ResidueValue(mat, complex(np.trace(mat)))


# --------------------------------------------------------------------------
# lattice sums


def _k0_trace(k0, s, n):
    """Fiber trace of the family's value at ``k = 0``: ``tr(k0^s)``."""
    if s == 0:
        return complex(n)
    if k0 is None:
        return complex(n)
    if not np.any(k0):
        return 0j
    return complex(np.trace(pd_power(PDMatrix(k0), s)))


def _mean_traces(symbol):
    """``abar[j, q]``: x-mean of the fiber trace of term ``j`` at angular node ``q``."""
    tr = np.trace(symbol.terms, axis1=-2, axis2=-1)
    return tr.mean(axis=tuple(range(1, 1 + symbol.grid.dim)))


def _rising(w, n):
    out = 1.0 + 0j
    for i in range(n):
        out *= w + i
    return out


@lru_cache(maxsize=None)
def _bernoulli_even(P):
    b = bernoulli(2 * P)
    return tuple(float(b[2 * p]) for p in range(1, P + 1))


def _em_tail(w, N, P):
    """``sum_{k > N} k^(-w)`` continued meromorphically in ``w``; pole at ``w = 1``."""
    logN = np.log(N)
    out = -0.5 * np.exp(-w * logN)
    if w != 1:
        out += np.exp((1 - w) * logN) / (w - 1)
    fact = 1.0
    for p, b in enumerate(_bernoulli_even(P), start=1):
        fact *= (2 * p - 1) * (2 * p)
        out += b / fact * _rising(w, 2 * p - 1) * np.exp((1 - w - 2 * p) * logN)
    return out


@lru_cache(maxsize=8)
def _ring_counts(N):
    """``counts[n] = #{k in Z^2 : |k|^2 = n}`` for ``n <= N^2``."""
    # quadrant k1 > 0, k2 >= 0 covers Z^2 \ {0} four times over
    k1 = np.arange(1, N + 1)
    top = np.floor(np.sqrt(N * N - k1 * k1 + 0.5)).astype(np.int64)
    sq = np.arange(N + 1, dtype=np.int64) ** 2
    r = np.concatenate([k * k + sq[: t + 1] for k, t in zip(k1, top)])
    r = r[r <= N * N]
    counts = 4 * np.bincount(r, minlength=N * N + 1)
    counts[0] = 1
    counts.setflags(write=False)
    return counts


def _disc_isotropic(N, exponent):
    """``sum_{0 < |k| <= N} |k|^exponent`` over Z^2."""
    counts = _ring_counts(N)
    n = np.nonzero(counts)[0]
    n = n[n > 0]
    return complex(np.sum(counts[n] * np.exp(0.5 * exponent * np.log(n.astype(float)))))


def _disc_mode(N, exponent, p, chunk=256):
    """``sum_{0 < |k| <= N} |k|^exponent e^{i p theta_k}`` over Z^2."""
    if p % 4:
        return 0j
    total = 0j
    k2 = np.arange(-N, N + 1)
    for start in range(-N, N + 1, chunk):
        k1 = np.arange(start, min(start + chunk, N + 1))[:, None]
        z = k1 + 1j * k2[None, :]
        r2 = np.abs(z) ** 2
        mask = (r2 > 0) & (r2 <= N * N)
        zz = z[mask]
        r = np.abs(zz)
        total += np.sum(np.exp(exponent * np.log(r)) * (zz / r) ** p)
    return total


def _lattice_sum_1d(abar, order, cfg, mode):
    N = cfg.N
    k = np.arange(1, N + 1, dtype=float)
    logk = np.log(k)
    total = 0j
    for j, (cp, cm) in enumerate(abar):
        c = cp + cm
        if c == 0:
            continue
        w = j - order
        total += c * np.sum(np.exp(-w * logk))
        if mode == "continuation":
            if abs(w - 1) < POLE_TOL:
                raise PoleError(f"s = {order} is a pole of the term of degree -{j} offset")
            total += c * _em_tail(w, N, cfg.tail_order)
    return total


def _angular_modes(abar_j, grid):
    """Fourier coefficients ``{p: c_p}`` of the angular trigonometric interpolant."""
    A = grid.angular_nodes
    hat = np.fft.fft(abar_j) / A
    modes = {}
    for q in range(A):
        p = q if q < A // 2 else q - A
        c = hat[q]
        if q == A // 2:
            # Nyquist interpolates as cos: split between +-A/2
            modes[A // 2] = modes.get(A // 2, 0) + 0.5 * c
            modes[-A // 2] = modes.get(-A // 2, 0) + 0.5 * c
            continue
        if abs(c) > 0:
            modes[p] = modes.get(p, 0) + c
    return modes


def _effective_radius(N):
    count = int(_ring_counts(N).sum())  # includes k = 0
    return np.sqrt(count / np.pi)


def _lattice_sum_2d(abar, order, grid, cfg, mode):
    N = cfg.N
    total = 0j
    r_eff = _effective_radius(N)
    for j, row in enumerate(abar):
        if not np.any(row):
            continue
        exponent = order - j
        for p, c in _angular_modes(row, grid).items():
            if abs(c) < 1e-300:
                continue
            if p == 0:
                total += c * _disc_isotropic(N, exponent)
            else:
                total += c * _disc_mode(N, exponent, p)
        if mode == "continuation":
            c0 = row.mean()
            e2 = exponent + 2
            if abs(e2) < POLE_TOL:
                raise PoleError(f"s = {order} is a pole of the term of degree -{j} offset")
            total += -2 * np.pi * c0 * np.exp(e2 * np.log(r_eff)) / e2
    return total


def _symbol_trace(symbol, cfg, mode, k0_value):
    grid = symbol.grid
    order = symbol.order
    abar = _mean_traces(symbol)
    if grid.dim == 1:
        core = _lattice_sum_1d(abar, order, cfg, mode)
    else:
        core = _lattice_sum_2d(abar, order, grid, cfg, mode)
    return core + k0_value


def _check_mode(mode, s, m):
    if mode == "direct":
        if s.real >= -m:
            raise ValueError(f"direct lattice sums need Re(s) < {-m}, got {s}")
    elif mode == "continuation":
        if m == 2 and s.real >= -1:
            raise ValueError(f"the m=2 continuation is valid only for Re(s) < -1, got {s}")
    else:
        raise ValueError(f"unknown mode {mode!r}")


def trace_function(F, s, cfg=None, mode="continuation"):
    """``sum_k mean_x tr E(s)(x, k)`` for a family ``F``.

    ``mode="direct"`` returns the plain partial sum over ``|k| <= N`` (needs
    ``Re s < -m``); ``"continuation"`` adds the meromorphic tail and raises
    :class:`PoleError` exactly at a pole.
    """
    cfg = LatticeSumConfig() if cfg is None else cfg
    s = check_complex(s)
    m = F.grid.dim
    _check_mode(mode, s, m)
    k0 = _k0_trace(cfg.k0_override, s, F.grid.fiber_dim)
    return _symbol_trace(F(s), cfg, mode, k0)


def _first_pole_coefficient(F, j, s0):
    """Residue of the degree ``s - j`` tail at its pole ``s0``."""
    sym = F(s0)
    abar = _mean_traces(sym)[j]
    if F.grid.dim == 1:
        return complex(-(abar[0] + abar[1]))
    return complex(-2 * np.pi * abar.mean())


def _pole_range(m, K):
    if m == 1:
        return [(j, j - 1.0) for j in range(min(K, 2) + 1)]
    return [(0, -2.0)]


def meromorphic_extend(F, window, cfg=None, samples=9):
    """Poles with residues and regular values of the trace function for ``lo < Re s < hi``."""
    cfg = LatticeSumConfig() if cfg is None else cfg
    lo, hi = float(window[0]), float(window[1])
    if not lo < hi:
        raise ValueError(f"empty window {window}")
    m = F.grid.dim
    limit = 2.0 if m == 1 else -1.0
    if hi > limit:
        raise ValueError(f"window {window} exceeds the implemented continuation range Re(s) < {limit}")
    poles = []
    locations = []
    for j, s0 in _pole_range(m, F.truncation):
        if lo < s0 < hi:
            poles.append((s0, _first_pole_coefficient(F, j, s0)))
            locations.append(s0)
    regular = []
    for s in np.linspace(lo, hi, samples + 2)[1:-1]:
        if any(abs(s - p) < 1e-3 for p in locations) or (m == 1 and abs(s - round(s)) < 1e-3):
            s = s + 0.0625
        if s >= hi:
            continue
        regular.append((complex(s), trace_function(F, s, cfg)))
    return MeromorphicData(tuple(poles), tuple(regular), (lo, hi))


def residue_at_first_pole(F, cfg=None):
    """Residue of the trace function at ``s = -m``; depends only on the leading term."""
    m = F.grid.dim
    return _first_pole_coefficient(F, 0, -float(m))


def gamma0(families, tol=1e-6, cfg=None):
    """Ratio of the first-pole residue to the noncommutative residue, common to all ``families``.

    Raises
    ------
    CalibrationError
        If fewer than two families are given, they live in different
        dimensions, or their ratios differ pairwise by more than ``tol``.
    """
    families = list(families)
    if len(families) < 2:
        raise CalibrationError("calibration needs at least two specs")
    dims = {F.grid.dim for F in families}
    if len(dims) != 1:
        raise CalibrationError(f"specs mix dimensions {sorted(dims)}")
    m = dims.pop()
    values = []
    for F in families:
        res = nc_residue(F(-float(m)).principal).scalar_part
        values.append((residue_at_first_pole(F, cfg) / res).real)
    spread = float(np.max(values) - np.min(values))
    if spread > tol:
        raise CalibrationError(f"gamma_0 differs between specs by {spread:.3e} > {tol:.1e}: {values}")
    return Calibration(float(np.mean(values)), tuple(values), spread)


# --------------------------------------------------------------------------
# Galerkin oracles


def _galerkin_spectrum(symbol, B, k0_override):
    M = quantize(symbol, B, k0_override)
    M = 0.5 * (M + M.conj().T)
    w, v = np.linalg.eigh(M)
    if w[0] <= 0:
        raise NotPositiveDefiniteError(
            f"Galerkin matrix at B={B} is not positive definite: smallest eigenvalue {w[0]:.3e}"
        )
    return w, v


def galerkin_zeta(symbol, B, s, k0_override=None, floor=0.0):
    """``sum lam^s`` over eigenvalues above ``floor`` of the symmetrized Galerkin matrix."""
    s = check_complex(s)
    w, _ = _galerkin_spectrum(symbol, B, k0_override)
    w = w[w > floor]
    return complex(np.sum(np.exp(s * np.log(w))))


def galerkin_power(symbol, B, s, k0_override=None):
    """Matrix power of the symmetrized Galerkin matrix by eigendecomposition."""
    s = check_complex(s)
    w, v = _galerkin_spectrum(symbol, B, k0_override)
    return (v * np.exp(s * np.log(w))) @ v.conj().T


def commutator_trace_check(G, H, B, extra=None, k0_override=None):
    """``|Tr P [Op(G), Op(H)] P|`` with ``P`` the projection onto ``|k_i| <= B``.

    Both operators are assembled on the larger box ``|k_i| <= B + extra``
    (default: the x-bandwidth of the two symbols) so the products are exact
    on the range of ``P``.
    """
    if G.grid.with_fiber_dim(1) != H.grid.with_fiber_dim(1) or G.grid.dim != H.grid.dim:
        raise ValueError("G and H live on different grids")
    B = check_positive_int(B, "B")
    if extra is None:
        extra = G.grid.x_modes + H.grid.x_modes
    big = B + extra
    g = quantize(G, big, k0_override)
    h = quantize(H, big, k0_override)
    pts = lattice_points(G.grid.dim, big)
    inside = np.all(np.abs(pts) <= B, axis=1)
    idx = np.repeat(inside, H.grid.fiber_dim)
    if G.grid.fiber_dim == 1 and H.grid.fiber_dim > 1:
        g = np.kron(g, np.eye(H.grid.fiber_dim))
    gh = g[idx] @ h[:, idx]
    hg = h[idx] @ g[:, idx]
    return float(abs(np.trace(gh) - np.trace(hg)))


class SpectralZeta(BaseEstimator):
    """Estimator-style wrapper: ``fit`` stores a family, ``predict`` evaluates its trace function.

    Parameters
    ----------
    N : int
        Exact lattice cutoff.
    tail_order : int
        Euler-Maclaurin correction terms (m = 1).
    k0_override : array_like or None
        Value at ``k = 0`` of the operator; the family uses its power.
    mode : {"continuation", "direct"}
    """

    def __init__(self, N=10_000, tail_order=6, k0_override=None, mode="continuation"):
        self.N = N
        self.tail_order = tail_order
        self.k0_override = k0_override
        self.mode = mode

    def fit(self, X, y=None):
        self.config_ = LatticeSumConfig(self.N, self.tail_order, self.k0_override)
        self.family_ = X
        return self

    def predict(self, X):
        check_is_fitted(self, "family_")
        s = as_complex_array(X, "s")
        return np.array([trace_function(self.family_, si, self.config_, self.mode) for si in s])

    def residue(self):
        check_is_fitted(self, "family_")
        return residue_at_first_pole(self.family_, self.config_)
