import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from psizeta.symbols import (
    ClassicalSymbol,
    CosphereGrid,
    CosphereMeasure,
    HomogeneousTerm,
    adjoint,
    compose,
    evaluate,
    extend_homogeneous,
    lattice_points,
    parametrix,
    poisson_bracket,
    quantize,
    restrict_to_cosphere,
    symbol_from_function,
)
from psizeta.verify import random_symbol

from conftest import scalar_multiplier


def const(c):
    return lambda x, u: c * np.ones(x.shape[:-1])[..., None, None]


def xi_times(f):
    # degree-1 symbol xi * f(x) on T^1: the sheet direction carries the sign
    return lambda x, u: (u[..., 0] * f(x[..., 0]))[..., None, None]


def of_x(f):
    return lambda x, u: f(x[..., 0])[..., None, None] * np.ones(u.shape[:-1])[..., None, None]


def interior(B, margin, near_zero=1):
    # away from the truncation boundary and from k = 0, where k0_override stands in
    k = np.abs(lattice_points(1, B)[:, 0])
    return np.flatnonzero((k <= B - margin) & (k >= near_zero))


# -- grids and terms ---------------------------------------------------------


def test_grid_validation():
    with pytest.raises(ValueError):
        CosphereGrid(3, 4)
    with pytest.raises(ValueError):
        CosphereGrid(1, 0)
    with pytest.raises(ValueError):
        CosphereGrid(2, 4, angular_nodes=6)
    with pytest.raises(ValueError):
        CosphereGrid(2, 4, angular_nodes=9)
    with pytest.raises(ValueError):
        CosphereGrid(1, 4, angular_nodes=4)


def test_grid_shapes():
    g = CosphereGrid(2, 3, 8, fiber_dim=2)
    assert g.sample_shape == (7, 7, 8, 2, 2)
    np.testing.assert_allclose(np.linalg.norm(g.directions, axis=1), 1.0)


def test_term_rejects_bad_samples(grid1):
    with pytest.raises(ValueError, match="shape"):
        HomogeneousTerm(1, np.zeros((3, 2, 1, 1)), grid1)
    bad = grid1.zeros()
    bad[0, 0] = np.nan
    with pytest.raises(ValueError, match="non-finite"):
        HomogeneousTerm(1, bad, grid1)


def test_truncate_beyond_depth(grid1):
    with pytest.raises(ValueError, match="exceeds"):
        ClassicalSymbol.identity(grid1, 2).truncate(3)


# -- evaluate ----------------------------------------------------------------


def test_evaluate_constant_term():
    g = CosphereGrid(2, 2, 8, fiber_dim=2)
    t = HomogeneousTerm(0, 2.5 * g.identity_samples(), g)
    np.testing.assert_allclose(evaluate(t, [0.3, 1.1], [0.2, -0.7]), 2.5 * np.eye(2), atol=1e-14)


def test_evaluate_abs_xi_on_axis():
    g = CosphereGrid(2, 2, 8)
    t = HomogeneousTerm(1, g.identity_samples(), g)
    np.testing.assert_allclose(evaluate(t, [0.0, 0.0], [0.0, 3.0]), [[3.0]], atol=1e-13)


@settings(max_examples=30, deadline=None)
@given(
    lam=st.floats(0.1, 10.0),
    angle=st.floats(0, 2 * np.pi),
    x=st.tuples(st.floats(0, 2 * np.pi), st.floats(0, 2 * np.pi)),
)
def test_evaluate_scaling(lam, angle, x):
    g = CosphereGrid(2, 3, 12, fiber_dim=2)
    t = random_symbol(np.random.default_rng(3), g, 0.7 - 0.4j).term(1)
    xi = np.array([np.cos(angle), np.sin(angle)])
    ref = lam**t.degree * evaluate(t, x, xi)
    np.testing.assert_allclose(evaluate(t, x, lam * xi), ref, atol=1e-12 * max(1.0, np.abs(ref).max()))


def test_evaluate_interpolates_smooth_data(grid1):
    a = symbol_from_function(0, [of_x(lambda x: np.cos(2 * x) + 0.5 * np.sin(x))], grid1)
    for x in (0.1, 1.234, 5.5):
        val = evaluate(a.principal, [x], [-2.0])
        np.testing.assert_allclose(val, [[np.cos(2 * x) + 0.5 * np.sin(x)]], atol=1e-13)


def test_evaluate_rejects_zero_covector(grid1):
    t = ClassicalSymbol.identity(grid1).principal
    with pytest.raises(ValueError, match="xi = 0"):
        evaluate(t, [0.0], [0.0])


def test_euler_identity_finite_differences(rng):
    g = CosphereGrid(2, 3, 16, fiber_dim=2)
    a = random_symbol(rng, g, 1.3 + 0.2j)
    h = 1e-5
    for _ in range(20):
        t = a.term(int(rng.integers(0, a.truncation + 1)))
        x = rng.uniform(0, 2 * np.pi, 2)
        xi = rng.standard_normal(2)
        num = sum(
            xi[j] * (evaluate(t, x, xi + h * e) - evaluate(t, x, xi - h * e)) / (2 * h)
            for j, e in enumerate(np.eye(2))
        )
        ref = t.degree * evaluate(t, x, xi)
        assert np.abs(num - ref).max() <= 1e-6 * max(1.0, np.abs(ref).max())


# -- compose -----------------------------------------------------------------


def test_compose_multipliers(grid1):
    a = scalar_multiplier(grid1)
    c = compose(a, a)
    assert c.order == 2
    np.testing.assert_array_equal(c.terms[0], grid1.identity_samples())
    assert not c.terms[1:].any()


def test_compose_identity_is_neutral(rng):
    g = CosphereGrid(2, 3, 8, fiber_dim=2)
    b = random_symbol(rng, g, 0.5)
    np.testing.assert_allclose(compose(ClassicalSymbol.identity(g), b).terms, b.terms, atol=1e-14)


def test_compose_xi_with_function_terms(grid1):
    bf = lambda x: 0.4 + 0.3 * np.cos(x) - 0.2 * np.sin(3 * x)  # noqa: E731
    dbf = lambda x: -0.3 * np.sin(x) - 0.6 * np.cos(3 * x)  # noqa: E731
    a = symbol_from_function(1, [xi_times(np.ones_like)], grid1)
    b = symbol_from_function(0, [of_x(bf)], grid1)
    c = compose(a, b)
    ref = symbol_from_function(1, [xi_times(bf), of_x(lambda x: -1j * dbf(x))], grid1)
    np.testing.assert_allclose(c.terms, ref.terms, atol=1e-12)


def test_compose_xi_with_function_matches_fourier_modes(grid1):
    # apply both quantized operators to 64 modes and compare matrix elements
    bf = lambda x: 0.4 + 0.3 * np.cos(x) - 0.2 * np.sin(3 * x)  # noqa: E731
    a = symbol_from_function(1, [xi_times(np.ones_like)], grid1)
    b = symbol_from_function(0, [of_x(bf)], grid1)
    B = 64
    lhs = quantize(a, B, k0_override=[[0.0]]) @ quantize(b, B)
    rhs = quantize(compose(a, b), B)
    cols = interior(B, 0)
    np.testing.assert_allclose(lhs[:, cols], rhs[:, cols], atol=1e-10)


def test_leibniz_consistency_with_quantization(rng):
    # a is polynomial in xi, so the composition expansion terminates and is exact
    grid = CosphereGrid(1, 6)
    p = lambda x: 1.0 + 0.2 * np.cos(x)  # noqa: E731
    q = lambda x: 0.3 * np.sin(2 * x) + 0.1j * np.cos(x)  # noqa: E731
    a = symbol_from_function(1, [xi_times(p), of_x(q)], grid)
    b = random_symbol(rng, grid, 0, elliptic=False)
    b.terms[-1] = 0
    B = 64
    lhs = quantize(a, B) @ quantize(b, B)
    rhs = quantize(compose(a, b), B)
    # rows within x_modes of 0 pass through the intermediate mode q = 0
    idx = interior(B, 2 * grid.x_modes, near_zero=grid.x_modes + 1)
    np.testing.assert_allclose(lhs[np.ix_(idx, idx)], rhs[np.ix_(idx, idx)], atol=1e-8)


@pytest.mark.parametrize("grid", [CosphereGrid(1, 10, fiber_dim=2), CosphereGrid(2, 5, 16, fiber_dim=2)])
def test_compose_associative(rng, grid):
    a = random_symbol(rng, grid, 1)
    b = random_symbol(rng, grid, 0.5 + 0.25j)
    c = random_symbol(rng, grid, -1)
    np.testing.assert_allclose(compose(compose(a, b), c).terms, compose(a, compose(b, c)).terms, atol=1e-8)


def test_compose_grid_mismatch(rng):
    a = ClassicalSymbol.identity(CosphereGrid(1, 4))
    b = ClassicalSymbol.identity(CosphereGrid(1, 5))
    with pytest.raises(ValueError):
        compose(a, b)


def test_compose_truncation_too_deep(grid1):
    a = ClassicalSymbol.identity(grid1, 2)
    with pytest.raises(ValueError, match="exceeds"):
        compose(a, a, K=3)


# -- parametrix --------------------------------------------------------------


def test_parametrix_of_multiplier(grid1):
    p = parametrix(scalar_multiplier(grid1, 2.0))
    assert p.order == -1
    np.testing.assert_allclose(p.terms[0], 0.5 * grid1.identity_samples(), atol=1e-15)
    assert not p.terms[1:].any()


def test_parametrix_of_identity(grid1):
    eye = ClassicalSymbol.identity(grid1)
    np.testing.assert_array_equal(parametrix(eye).terms, eye.terms)


@pytest.mark.parametrize("grid", [CosphereGrid(1, 10, fiber_dim=3), CosphereGrid(2, 5, 16, fiber_dim=2)])
def test_parametrix_two_sided(rng, grid):
    a = random_symbol(rng, grid, 1)
    p = parametrix(a)
    eye = ClassicalSymbol.identity(grid).terms
    np.testing.assert_allclose(compose(a, p).terms, eye, atol=1e-9)


def test_parametrix_reports_worst_point(grid1):
    a = scalar_multiplier(grid1)
    a.terms[0, 3, 1] = 0.0
    with pytest.raises(np.linalg.LinAlgError, match=r"grid index \(3, 1"):
        parametrix(a)


# -- adjoint -----------------------------------------------------------------


def test_adjoint_hermitian_multiplier(rng):
    g = CosphereGrid(1, 3, fiber_dim=2)
    P = np.array([[2.0, 0.5j], [-0.5j, 1.0]])
    a = symbol_from_function(1, [lambda x, u: np.broadcast_to(P, g.sample_shape)], g)
    np.testing.assert_array_equal(adjoint(a).terms, a.terms)


def test_adjoint_involution(rng):
    for grid in (CosphereGrid(1, 10, fiber_dim=2), CosphereGrid(2, 5, 16, fiber_dim=2)):
        a = random_symbol(rng, grid, 1 + 0.3j)
        np.testing.assert_allclose(adjoint(adjoint(a)).terms, a.terms, atol=1e-10)


def test_adjoint_of_real_multiplication_operator(grid1):
    c = symbol_from_function(0, [of_x(lambda x: 1 + 0.5 * np.cos(x))], grid1)
    np.testing.assert_allclose(adjoint(c).terms, c.terms, atol=1e-14)


def test_adjoint_matches_conjugate_transpose_of_quantization():
    grid = CosphereGrid(1, 5)
    a = symbol_from_function(
        1, [xi_times(lambda x: 1 + 0.3j * np.sin(x)), of_x(lambda x: 0.2 * np.cos(2 * x) + 0.1j)], grid
    )
    B = 48
    lhs = quantize(a, B).conj().T
    rhs = quantize(adjoint(a), B)
    idx = interior(B, 2 * grid.x_modes)
    np.testing.assert_allclose(lhs[np.ix_(idx, idx)], rhs[np.ix_(idx, idx)], atol=1e-12)


# -- Poisson bracket ---------------------------------------------------------


def test_bracket_abs_xi_with_function(grid1):
    g = scalar_multiplier(grid1).principal
    f = lambda x: np.cos(x) + 0.3 * np.sin(2 * x)  # noqa: E731
    h = symbol_from_function(0, [of_x(f)], grid1).principal
    pb = poisson_bracket(g, h)
    assert pb.degree == 0
    # finite-difference check of d_xi g d_x h at sampled points
    eps = 1e-5
    for x, xi in [(0.3, 1.7), (2.2, -0.4), (5.0, -3.0)]:
        fd_g = (abs(xi + eps) - abs(xi - eps)) / (2 * eps)
        fd_h = (f(x + eps) - f(x - eps)) / (2 * eps)
        np.testing.assert_allclose(evaluate(pb, [x], [xi])[0, 0], fd_g * fd_h, atol=1e-8)


def test_bracket_of_multipliers_vanishes(rng):
    g = CosphereGrid(2, 3, 8)
    a = symbol_from_function(1, [lambda x, u: (2 + u[..., :1, None]) * np.ones(x.shape[:-1])[..., None, None]], g)
    b = symbol_from_function(-2, [const(1.0)], g)
    # x-derivatives of constants vanish up to FFT roundoff
    assert np.abs(poisson_bracket(a.principal, b.principal).samples).max() < 1e-14


def test_bracket_degree_bookkeeping(rng):
    g = CosphereGrid(2, 3, 8, fiber_dim=2)
    gs = random_symbol(rng, g.with_fiber_dim(1), 1).principal
    h = random_symbol(rng, g, -2).principal
    assert poisson_bracket(gs, h).degree == -2


def test_bracket_antisymmetry(rng):
    for grid in (CosphereGrid(1, 8), CosphereGrid(2, 4, 16)):
        g = random_symbol(rng, grid, 1).principal
        h = random_symbol(rng, grid, -grid.dim).principal
        np.testing.assert_allclose(poisson_bracket(g, h).samples, -poisson_bracket(h, g).samples, atol=1e-10)


def test_bracket_rejects_matrix_g(rng):
    g = CosphereGrid(1, 4, fiber_dim=2)
    a = random_symbol(rng, g, 1).principal
    with pytest.raises(ValueError, match="scalar"):
        poisson_bracket(a, a)


# -- cosphere sections and measure --------------------------------------------


def test_restrict_abs_xi_is_constant_identity():
    g = CosphereGrid(2, 2, 8, fiber_dim=2)
    sec = restrict_to_cosphere(scalar_multiplier(g).principal)
    np.testing.assert_array_equal(sec.samples, g.identity_samples())


def test_restrict_extend_round_trip(rng):
    g = CosphereGrid(2, 3, 8, fiber_dim=2)
    t = random_symbol(rng, g, -0.5 + 1j).term(2)
    back = extend_homogeneous(restrict_to_cosphere(t), t.degree)
    assert back.degree == t.degree
    np.testing.assert_array_equal(back.samples, t.samples)


def test_measure_total_mass():
    assert CosphereMeasure(CosphereGrid(1, 4)).total_mass == pytest.approx(4 * np.pi, rel=1e-14)
    assert CosphereMeasure(CosphereGrid(2, 3, 16)).total_mass == pytest.approx(8 * np.pi**3, rel=1e-14)


def test_measure_weights_positive():
    assert np.all(CosphereMeasure(CosphereGrid(2, 3, 8)).angular_weights > 0)


def test_measure_integrates_trig_exactly():
    g = CosphereGrid(2, 4, 16)
    sym = symbol_from_function(
        0,
        [lambda x, u: (1 + np.cos(x[..., 0]) * np.sin(x[..., 1]) + u[..., 0] ** 2)[..., None, None]],
        g,
    )
    # mean of cos^2 over the circle is 1/2
    val = CosphereMeasure(g).integrate(sym.terms[0])[0, 0]
    np.testing.assert_allclose(val, 8 * np.pi**3 * 1.5, rtol=1e-13)


# -- quantization ------------------------------------------------------------


def test_quantize_multiplier_is_diagonal():
    g = CosphereGrid(1, 2, fiber_dim=2)
    a = symbol_from_function(1, [lambda x, u: np.broadcast_to(np.diag([1.0, 2.0]), g.sample_shape)], g)
    Q = quantize(a, 5, k0_override=np.eye(2))
    k = np.abs(lattice_points(1, 5)[:, 0]).astype(float)
    expected = np.ravel(np.column_stack([np.where(k == 0, 1, k), np.where(k == 0, 1, 2 * k)]))
    np.testing.assert_allclose(Q, np.diag(expected), atol=1e-14)


def test_quantize_multiplication_operator_is_toeplitz(grid1):
    c = symbol_from_function(0, [of_x(lambda x: 0.5 * np.cos(x))], grid1)
    Q = quantize(c, 4)
    Q = np.delete(Q, 4, axis=1)  # the k = 0 column carries k0_override
    np.testing.assert_allclose(Q[1:, :4].diagonal(), 0.25, atol=1e-15)
    np.testing.assert_allclose(Q[4:8, 4:].diagonal(), 0.25, atol=1e-15)
    np.testing.assert_allclose(Q[:4, :4].diagonal(), 0.0, atol=1e-15)
