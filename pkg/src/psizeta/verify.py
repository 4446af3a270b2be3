"""Named invariant suites run by ``psizeta verify``.

Each suite takes a :class:`~psizeta.spec_io.RunConfig` and returns a list of
:class:`Check` records with the measured value and its tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cohomology import ConjugationAction, OneCochain, delta1, delta2, solve, verify_cocycle
from .fiber import PDMatrix, conjugate, contour_power, dyadic_t_operator, pd_power, t_operator, t_solve
from .powers import build_family, defect_report
from .symbols import (
    ClassicalSymbol,
    CosphereGrid,
    adjoint,
    compose,
    evaluate,
    parametrix,
    poisson_bracket,
    symbol_from_function,
)
from .zeta import LatticeSumConfig, gamma0, nc_residue, residue_at_first_pole, trace_function

__all__ = ["Check", "SUITES", "run_suite", "random_pd", "random_symbol", "perturbed_abs_symbol"]


@dataclass(frozen=True)
class Check:
    name: str
    value: float
    tol: float

    @property
    def passed(self):
        return bool(np.isfinite(self.value)) and self.value <= self.tol

    def line(self):
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.value:.3e} (tol {self.tol:.1e})"


def random_pd(rng, n, lo=0.5, hi=10.0, batch=()):
    """Hermitian PD matrices with spectrum drawn uniformly from ``[lo, hi]``."""
    z = rng.standard_normal(tuple(batch) + (n, n)) + 1j * rng.standard_normal(tuple(batch) + (n, n))
    q, _ = np.linalg.qr(z)
    w = rng.uniform(lo, hi, size=tuple(batch) + (n,))
    return (q * w[..., None, :]) @ np.conj(np.swapaxes(q, -1, -2))


def _smooth_field(rng, grid, x_band=2, ang_band=2):
    """Random sample array whose x- and angular spectra are band limited."""
    shape = grid.sample_shape
    z = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    axes = tuple(range(grid.dim))
    hat = np.fft.fftn(z, axes=axes)
    k = np.abs(grid.x_wavenumbers) <= x_band
    for ax in axes:
        sh = [1] * len(shape)
        sh[ax] = grid.nx
        hat = hat * k.reshape(sh)
    z = np.fft.ifftn(hat, axes=axes)
    if grid.dim == 2:
        ax = grid.dim
        ka = np.abs(np.fft.fftfreq(grid.angular_nodes, 1.0 / grid.angular_nodes)) <= ang_band
        sh = [1] * len(shape)
        sh[ax] = grid.angular_nodes
        z = np.fft.ifft(np.fft.fft(z, axis=ax) * ka.reshape(sh), axis=ax)
    return z


def random_symbol(rng, grid, order, K=4, scale=0.1, elliptic=True):
    """Random smooth symbol; with ``elliptic`` the leading term is ``3 I`` plus a small perturbation."""
    terms = np.stack([scale * _smooth_field(rng, grid) for _ in range(K + 1)])
    if elliptic:
        terms[0] += 3 * np.eye(grid.fiber_dim)
    return ClassicalSymbol(order, terms, grid)


def perturbed_abs_symbol(x_modes=8, eps=0.3, K=4):
    """``|xi| + eps cos(x)`` on T^1, scalar fiber."""
    grid = CosphereGrid(1, x_modes)
    return symbol_from_function(
        1,
        [
            lambda x, u: np.ones(x.shape[:-1])[..., None, None],
            lambda x, u: (eps * np.cos(x[..., 0]))[..., None, None],
        ],
        grid,
        truncation=K,
    )


def _rel(a, b):
    return float(np.abs(a - b).max() / max(1.0, np.abs(b).max()))


def suite_fiber(cfg):
    rng = np.random.default_rng(cfg.seed)
    group, rep, rt, dy, ct = 0.0, 0.0, 0.0, 0.0, 0.0
    for _ in range(100):
        P = PDMatrix(random_pd(rng, 3))
        s, t = rng.uniform(-2, 2, 2) + 1j * rng.uniform(-1, 1, 2)
        group = max(group, _rel(pd_power(P, s) @ pd_power(P, t), pd_power(P, s + t)))
        A = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
        rep = max(rep, _rel(conjugate(P, s, conjugate(P, t, A)), conjugate(P, s + t, A)))
        rt = max(rt, _rel(t_operator(P, 1, t_solve(P, A)), A), _rel(t_solve(P, t_operator(P, 1, A)), A))
    for levels in range(1, 7):
        P = PDMatrix(random_pd(rng, 4))
        A = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
        dy = max(dy, _rel(dyadic_t_operator(P, A, levels), t_operator(P, 1, A)))
    for s in (-0.1, -0.4, -1.0, -3.0, -0.5 + 0.7j):
        P = PDMatrix(random_pd(rng, 3))
        ct = max(ct, _rel(contour_power(P, s), pd_power(P, s)))
    return [
        Check("group law of pd_power", group, 1e-10),
        Check("conjugation is a representation", rep, 1e-10),
        Check("t_solve inverts T(1)", rt, 1e-10),
        Check("dyadic factorization of T(1), levels 1..6", dy, 1e-8),
        Check("contour_power vs pd_power", ct, 1e-8),
    ]


def suite_symbols(cfg):
    rng = np.random.default_rng(cfg.seed)
    checks = []
    for grid in (CosphereGrid(1, 12, fiber_dim=2), CosphereGrid(2, 6, 16, fiber_dim=2)):
        tag = f"m={grid.dim}"
        a = random_symbol(rng, grid, 1)
        b = random_symbol(rng, grid, 0.5 + 0.25j)
        c = random_symbol(rng, grid, -1)
        assoc = np.abs(compose(compose(a, b), c).terms - compose(a, compose(b, c)).terms).max()
        eye = ClassicalSymbol.identity(grid)
        par = np.abs(compose(a, parametrix(a)).terms - eye.terms).max()
        inv = np.abs(adjoint(adjoint(a)).terms - a.terms).max()
        euler = 0.0
        h = 1e-5
        for _ in range(20):
            t = a.term(int(rng.integers(0, a.truncation + 1)))
            x = rng.uniform(0, 2 * np.pi, grid.dim)
            xi = rng.standard_normal(grid.dim)
            xi *= rng.uniform(0.5, 2.0) / np.linalg.norm(xi)
            num = sum(
                xi[j] * (evaluate(t, x, xi + h * e) - evaluate(t, x, xi - h * e)) / (2 * h)
                for j, e in enumerate(np.eye(grid.dim))
            )
            euler = max(euler, _rel(num, t.degree * evaluate(t, x, xi)))
        sgrid = grid.with_fiber_dim(1)
        g = random_symbol(rng, sgrid, 1).principal
        hs = random_symbol(rng, sgrid, -grid.dim).principal
        anti = np.abs(poisson_bracket(g, hs).samples + poisson_bracket(hs, g).samples).max()
        checks += [
            Check(f"{tag} composition associativity", assoc, 1e-8),
            Check(f"{tag} parametrix right inverse", par, 1e-9),
            Check(f"{tag} adjoint involution", inv, 1e-10),
            Check(f"{tag} Euler identity by finite differences", euler, 1e-6),
            Check(f"{tag} Poisson bracket antisymmetry", anti, 1e-10),
        ]
    return checks


def suite_cocycle(cfg):
    rng = np.random.default_rng(cfg.seed)
    shape = (5, 3, 3)
    action = ConjugationAction(random_pd(rng, 3, 0.5, 2.0, batch=(5,)))
    coeffs = [
        (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * 0.5**k / (k + 1) for k in range(5)
    ]
    g = OneCochain(lambda s: sum(c * s ** (k + 1) for k, c in enumerate(coeffs)) + coeffs[0] * np.sin(s))
    f = delta1(g, action)
    d2 = delta2(f, action)
    pts = rng.uniform(-1, 1, (50, 3)) + 1j * rng.uniform(-1, 1, (50, 3))
    dd = max(float(np.abs(d2(a, b, c)).max()) for a, b, c in pts)
    h = solve(f, action, g(1.0), seed=cfg.seed)
    dh = delta1(h, action)
    pairs = rng.uniform(-1, 1, (20, 2)) + 1j * rng.uniform(-1, 1, (20, 2))
    rt = max(float(np.abs(dh(a, b) - f(a, b)).max()) for a, b in pairs)
    h_series = solve(f, action, g(1.0), method="series", check=False)
    agree = max(float(np.abs(h(a) - h_series(a)).max()) for a in pairs[:, 0])
    report = verify_cocycle(f, action, samples=50, seed=cfg.seed)
    return [
        Check("delta2 after delta1 vanishes", dd, 1e-9),
        Check("coboundary round trip", rt, 1e-8),
        Check("h(1) is the prescribed value", float(np.abs(h(1.0) - g(1.0)).max()), 1e-9),
        Check("series and Gauss solvers agree", agree, 1e-8),
        Check("verify_cocycle on a coboundary", report.max_violation, 1e-10),
    ]


def suite_powers(cfg):
    A = perturbed_abs_symbol(K=cfg.K)
    F = build_family(A, cocycle_tol=cfg.cocycle_tol, seed=cfg.seed)
    rep = defect_report(F, cfg.samples, seed=cfg.seed, tol=cfg.defect_tol)
    inv = np.abs(F(-1.0).terms - parametrix(A).terms).max()
    sq = np.abs(F(2.0).terms - compose(A, A).terms).max()
    lead = max(
        float(np.abs(F(s).terms[0] - pd_power(F.sigma, s)).max()) for s in (0.3 + 0.2j, -1.7, 1.4 - 0.9j)
    )
    viol = max((r.cocycle_violation for r in F.history), default=0.0)
    return [
        Check("group-law defect, all retained degrees", float(rep.max_norms.max()), cfg.defect_tol),
        Check("cocycle verification at every level", viol, cfg.cocycle_tol),
        Check("E(-1) equals the parametrix", inv, 1e-7),
        Check("E(2) equals A composed with A", sq, 1e-7),
        Check("principal term is sigma^s", lead, 1e-10),
    ]


def suite_zeta(cfg):
    rng = np.random.default_rng(cfg.seed)
    lat = LatticeSumConfig(cfg.N, cfg.tail_order)
    grid = CosphereGrid(1, 2)
    one = lambda x, u: np.ones(x.shape[:-1])[..., None, None]  # noqa: E731
    families = [build_family(symbol_from_function(1, [one], grid).__mul__(c)) for c in (1.0, 2.0, 0.5)]
    z2 = trace_function(families[0], -2.0, lat)
    res = residue_at_first_pole(families[0], lat)
    cal = gamma0(families)
    brackets = 0.0
    for _ in range(20):
        gm = random_symbol(rng, CosphereGrid(1, 6), 1).principal
        hm = random_symbol(rng, CosphereGrid(1, 6, fiber_dim=2), -1).principal
        g_scalar = type(gm)(gm.degree, gm.samples.real + 0j, gm.grid)
        brackets = max(brackets, abs(nc_residue(poisson_bracket(g_scalar, hm)).scalar_part))
    return [
        Check("trace at s=-2 equals 1 + pi^2/3", abs(z2 - (1 + np.pi**2 / 3)), 1e-8),
        Check("residue at s=-1 equals -2", abs(res + 2), 1e-7),
        Check("gamma_0 equals -1/(2 pi)", abs(cal.value + 1 / (2 * np.pi)), 1e-6),
        Check("residue vanishes on Poisson brackets", brackets, 1e-8),
    ]


SUITES = {
    "fiber": suite_fiber,
    "symbols": suite_symbols,
    "cocycle": suite_cocycle,
    "powers": suite_powers,
    "zeta": suite_zeta,
}


def run_suite(name, cfg):
    if name not in SUITES:
        raise KeyError(f"unknown suite {name!r}; choose from {sorted(SUITES)}")
    return SUITES[name](cfg)
