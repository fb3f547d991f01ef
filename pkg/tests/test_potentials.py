import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import brentq, minimize_scalar

from bvhilbert.calculus import SineGrid, SpectralSpace
from bvhilbert.exceptions import ArgumentError, CapabilityError
from bvhilbert.potentials import (
    Potential, ScalarNonlinearity, check_potential, constant_potential, moreau_yosida, prox,
    quadratic_potential, reaction_diffusion_potential, scalar_resolvent,
    separable_polynomial_potential, yosida_scalar,
)

CUBIC = ScalarNonlinearity([0, 0, 0, 1])


def sine_space(n):
    return SpectralSpace.from_rule("dirichlet_half_inverse", n, basis="sine")


def test_nonlinearity_validation():
    with pytest.raises(ArgumentError):
        ScalarNonlinearity([0, 1])
    with pytest.raises(ArgumentError):
        ScalarNonlinearity([0, 0, 0, -1])
    nl = ScalarNonlinearity([1, 2, 0, 1])
    s = np.linspace(-3, 3, 101)
    np.testing.assert_allclose(nl.Phi.deriv()(s), nl.f(s), atol=1e-10)
    assert nl.degree == 3


def test_yosida_scalar_example():
    assert yosida_scalar(CUBIC, 1.0, 2.0) == pytest.approx(1.0, abs=1e-10)


@given(st.floats(-20, 20), st.floats(1e-3, 5))
def test_resolvent_matches_brentq(s, alpha):
    r = scalar_resolvent(CUBIC, alpha, s)
    oracle = brentq(lambda x: x + alpha * x**3 - s, -abs(s) - 1, abs(s) + 1, xtol=1e-14)
    assert r == pytest.approx(oracle, abs=1e-10 * (1 + abs(s)))


@given(st.floats(-5, 5))
def test_yosida_small_alpha_limit(s):
    f = CUBIC.f(s)
    assert abs(yosida_scalar(CUBIC, 1e-6, s) - f) <= 1e-4 * (1 + abs(f))


def test_yosida_monotone_in_s():
    grid = np.linspace(-10, 10, 2001)
    for alpha in (0.01, 0.1, 1.0):
        vals = yosida_scalar(CUBIC, alpha, grid)
        assert np.all(np.diff(vals) >= 0)


def test_reaction_diffusion_examples():
    space = sine_space(5)
    quad = ScalarNonlinearity([0, 2, 0.0, 1e-300])  # f(s) = 2s up to a negligible cubic
    U = reaction_diffusion_potential(ScalarNonlinearity([0, 0, 0, 1]), space)
    assert U.value(np.zeros(5)) == pytest.approx(0.0, abs=1e-14)
    c = 1.7
    x = c * np.eye(5)[0]
    lin = reaction_diffusion_potential(quad, space)
    assert lin.value(x) == pytest.approx(c**2, abs=1e-8)
    np.testing.assert_allclose(lin.gradient(x), 2 * c * np.eye(5)[0], atol=1e-8)
    with pytest.raises(ArgumentError):
        reaction_diffusion_potential(CUBIC, space, quad_points=32)
    with pytest.raises(ArgumentError):
        reaction_diffusion_potential(CUBIC, SpectralSpace(np.ones(5)))


def test_reaction_diffusion_derivatives(rng):
    U = reaction_diffusion_potential(ScalarNonlinearity([0.5, 1, 0, 1]), sine_space(6))
    check_potential(U, rng, scale=0.5)
    X = rng.standard_normal((5, 6)) * 0.5
    H = rng.standard_normal((5, 6))
    eps = 1e-6
    fd = (U.gradient(X + eps * H) - U.gradient(X - eps * H)) / (2 * eps)
    np.testing.assert_allclose(U.hessian_vec(X, H), fd, atol=1e-6)


def test_hessian_entry_bound(rng):
    # |<D^2U e_k, e_j>| <= sup|e|^2 int |f'(x(xi))| dxi
    space = sine_space(8)
    U = reaction_diffusion_potential(CUBIC, space)
    grid = U.structure["grid"]
    X = rng.standard_normal((10, 8)) * 0.4
    Hs = U.hessian(X)
    bound = grid.sup_basis**2 * grid.integrate(np.abs(CUBIC.df(grid.values(X))))
    assert np.all(np.abs(Hs) <= bound[:, None, None] * (1 + 1e-12))


def test_moreau_quadratic_closed_form():
    U = quadratic_potential(1, 1.0)
    for force in (False, True):
        Ua = moreau_yosida(U, 1.0, force_generic=force)
        assert Ua.value(np.array([2.0])) == pytest.approx(1.0, abs=1e-10)
    xs = np.linspace(-3, 3, 13)[:, None]
    Ua = moreau_yosida(U, 0.3)
    np.testing.assert_allclose(Ua.value(xs), xs[:, 0] ** 2 / (2 * 1.3), atol=1e-10)
    np.testing.assert_allclose(Ua.gradient(xs), xs / 1.3, atol=1e-9)


def test_moreau_generic_matches_scalar_minimization():
    U = separable_polynomial_potential(1, [0, 0, 1, 0, 1])  # s^2 + s^4
    Ua = moreau_yosida(U, 0.5)
    for x in (-2.0, 0.3, 1.5):
        oracle = minimize_scalar(lambda y: y**2 + y**4 + (x - y) ** 2 / 1.0, bracket=(-3, 3), tol=1e-12).fun
        assert Ua.value(np.array([x])) == pytest.approx(oracle, abs=1e-9)


def test_moreau_monotone_family(rng):
    space = sine_space(6)
    U = reaction_diffusion_potential(CUBIC, space)
    X = rng.standard_normal((40, 6)) * 0.5
    u = U.value(X)
    vals = [moreau_yosida(U, a).value(X) for a in (1.0, 0.1, 0.01)]
    assert np.all(vals[0] <= vals[1] + 1e-12)
    assert np.all(vals[1] <= vals[2] + 1e-12)
    assert np.all(vals[2] <= u + 1e-12)


def test_moreau_gradient_is_yosida_composition(rng):
    space = sine_space(6)
    U = reaction_diffusion_potential(CUBIC, space)
    grid = U.structure["grid"]
    X = rng.standard_normal((10, 6)) * 0.7
    for alpha in (1.0, 0.1):
        Ua = moreau_yosida(U, alpha)
        expected = grid.project(yosida_scalar(CUBIC, alpha, grid.values(X)))
        np.testing.assert_allclose(Ua.gradient(X), expected, atol=1e-10)
        # the generic prox minimises over the truncated span only, a smaller set
        Ug = moreau_yosida(U, alpha, force_generic=True)
        assert np.all(Ua.value(X[:3]) <= Ug.value(X[:3]) + 1e-10)
        assert np.all(Ug.value(X[:3]) <= U.value(X[:3]) + 1e-10)


def test_moreau_gradient_lipschitz(rng):
    space = sine_space(5)
    for alpha in (1.0, 0.1):
        Ua = moreau_yosida(reaction_diffusion_potential(CUBIC, space), alpha)
        assert Ua.lip_grad == pytest.approx(1 / alpha)
        check_potential(Ua, rng, scale=2.0)
    Uq = moreau_yosida(quadratic_potential(3, 0.5), 0.1)
    assert Uq.lip_grad == pytest.approx(0.5)


def test_prox_requires_hessian():
    U = Potential(1, lambda X: X[:, 0] ** 2, lambda X: 2 * X)
    with pytest.raises(CapabilityError):
        prox(U, 1.0, np.array([1.0]))


def test_check_potential_flags_bad_gradient(rng):
    U = Potential(2, lambda X: np.sum(X**2, axis=1), lambda X: X)
    with pytest.raises(ArgumentError):
        check_potential(U, rng)


def test_constant_and_quadratic_potentials(rng):
    c = constant_potential(3, 2.0)
    assert c.value(np.ones(3)) == 2.0
    np.testing.assert_array_equal(c.gradient(np.ones(3)), np.zeros(3))
    q = quadratic_potential(3, 2.0, [1.0, 0.5, 0.0])
    assert q.value(np.array([1.0, 2.0, 3.0])) == pytest.approx(0.5 * 2 * (1 + 0.5 * 4))
    check_potential(q, rng)
    with pytest.raises(ArgumentError):
        quadratic_potential(2, -1.0)


def test_separable_polynomial_validation():
    with pytest.raises(ArgumentError):
        separable_polynomial_potential(2, [0, 0, -1])
    U = separable_polynomial_potential(2, [1, -2, 1])  # (s - 1)^2
    assert U.lower_bound == pytest.approx(0.0, abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.floats(-2, 2), st.floats(-2, 2))
def test_hessian_assembly_matches_vector_products(a, b):
    U = reaction_diffusion_potential(CUBIC, sine_space(3), 64)
    x = np.array([a, b, 0.5])
    H = U.hessian(x)
    h = np.array([0.3, -1.0, 2.0])
    np.testing.assert_allclose(H @ h, U.hessian_vec(x, h), atol=1e-10)
    np.testing.assert_allclose(H, H.T, atol=1e-12)


def test_sine_grid_matches_analytic_integral():
    grid = SineGrid(3, 256)
    x = np.array([[1.0, 0.0, 0.0]])
    # int_0^1 (sqrt2 sin pi xi)^4 = 3/2
    assert grid.integrate(grid.values(x) ** 4)[0] == pytest.approx(1.5, abs=1e-12)
