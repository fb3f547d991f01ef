import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from bvhilbert.calculus import (
    CylField, SineGrid, SmoothedIndicator, SpectralSpace, affine, check_cyl_function, constant,
    div_m_star, div_nabla_star, eigenvalue_preset, full_gradient, partial_star, product, project,
    projected, quadratic, radial_bump, stretched_gradient, stretched_hessian, tanh_affine, theta_eps,
)
from bvhilbert.exceptions import ArgumentError, CapabilityError
from bvhilbert.measures import GaussianMeasure, ProductMeasure, WeightedGaussianMeasure
from bvhilbert.potentials import quadratic_potential
from bvhilbert.quadrature import RngStream, mc_integrate

from conftest import measure_zoo

finite = st.floats(-3, 3, allow_nan=False)


def test_space_rejects_bad_eigenvalues():
    with pytest.raises(ArgumentError):
        SpectralSpace([1.0, 0.0])
    with pytest.raises(ArgumentError):
        SpectralSpace([])
    with pytest.raises(ArgumentError):
        SpectralSpace([1.0], basis="cosine")


def test_space_r_diag_squares_to_eigenvalues():
    lam = eigenvalue_preset("dirichlet_half_inverse", 40)
    space = SpectralSpace(lam)
    np.testing.assert_allclose(space.r_diag**2, lam, rtol=1e-12)


def test_eigenvalue_presets():
    k = np.arange(1, 6)
    np.testing.assert_allclose(eigenvalue_preset("paper_lambda", 5), 1 / (k * np.pi) ** 2)
    np.testing.assert_allclose(eigenvalue_preset("dirichlet_half_inverse", 5), 1 / (2 * k**2 * np.pi**2))
    np.testing.assert_allclose(eigenvalue_preset("geometric(0.5)", 3), [1, 0.5, 0.25])
    with pytest.raises(ArgumentError):
        eigenvalue_preset("geometric(2)", 3)
    with pytest.raises(ArgumentError):
        eigenvalue_preset("unknown", 3)


def test_project_examples():
    space = SpectralSpace([1.0, 1.0, 1.0])
    np.testing.assert_array_equal(project(space, [1, 2, 3], 2), [1, 2, 0])
    np.testing.assert_array_equal(project(space, [1, 2, 3], 3), [1, 2, 3])
    np.testing.assert_array_equal(project(space, [1, 2, 3], 0), [0, 0, 0])
    with pytest.raises(ArgumentError):
        project(space, [1, 2, 3], 4)
    with pytest.raises(ArgumentError):
        project(space, [1, 2, 3], -1)


@given(arrays(float, 5, elements=finite), st.integers(0, 5))
def test_project_idempotent(x, m):
    space = SpectralSpace(np.ones(5))
    once = project(space, x, m)
    np.testing.assert_array_equal(project(space, once, m), once)


def test_stretched_gradient_examples():
    space = SpectralSpace([1.0, 0.25])
    f = affine([1.0, 1.0])
    np.testing.assert_allclose(stretched_gradient(space, f, [0.3, -2.0]), [1.0, 0.5])
    np.testing.assert_array_equal(stretched_gradient(space, constant(4.0), [0.3, -2.0]), [0.0, 0.0])
    space1 = SpectralSpace([4.0])
    f2 = quadratic([[2.0]])
    np.testing.assert_allclose(stretched_gradient(space1, f2, [3.0]), [12.0])


def test_stretched_gradient_zero_outside_active():
    space = SpectralSpace(np.ones(4))
    f = tanh_affine([1.0, 2.0], indices=[1, 3])
    g = stretched_gradient(space, f, np.array([0.1, 0.2, 0.3, 0.4]))
    assert g[0] == 0.0 and g[2] == 0.0


def test_full_gradient_examples():
    space = SpectralSpace([1.0, 1.0])
    f = quadratic([[0.0, 1.0], [1.0, 0.0]])  # x1 x2
    np.testing.assert_allclose(full_gradient(space, f, [2.0, 3.0]), [3.0, 2.0])
    np.testing.assert_array_equal(full_gradient(space, constant(1.0), [2.0, 3.0]), [0.0, 0.0])
    space3 = SpectralSpace(np.ones(3))
    np.testing.assert_allclose(full_gradient(space3, tanh_affine([1.0]), [0.0, 5.0, 1.0]), [1, 0, 0])


def test_stretched_hessian_examples():
    np.testing.assert_allclose(stretched_hessian(SpectralSpace([1.0]), quadratic([[2.0]]), [0.7]), [[2.0]])
    space2 = SpectralSpace([1.0, 4.0])
    np.testing.assert_array_equal(stretched_hessian(space2, affine([1.0, -2.0]), [0.1, 0.2]), np.zeros((2, 2)))
    H = stretched_hessian(space2, quadratic([[0.0, 1.0], [1.0, 0.0]]), [0.3, -0.4])
    np.testing.assert_allclose(H, [[0.0, 2.0], [2.0, 0.0]])


def test_stretched_hessian_needs_hessian():
    f = CylField.constant_field([1.0]).terms[0][0]
    no_hess = type(f)((0,), lambda Y: Y[:, 0], lambda Y: np.ones_like(Y))
    with pytest.raises(CapabilityError):
        stretched_hessian(SpectralSpace([1.0]), no_hess, [0.0])


def test_stretched_hessian_symmetric(rng):
    space = SpectralSpace([1.0, 0.3, 0.2, 0.05])
    f = product(radial_bump([0.2, -0.1, 0.4]), tanh_affine([0.5, -1.0], indices=[1, 3]))
    X = rng.standard_normal((50, 4))
    H = stretched_hessian(space, f, X)
    asym = np.linalg.norm(H - H.transpose(0, 2, 1), axis=(1, 2))
    assert np.all(asym <= 1e-10 * np.maximum(np.linalg.norm(H, axis=(1, 2)), 1e-300))


def test_constructor_gradients_match_finite_differences(rng):
    fns = [
        affine([1.0, -2.0, 0.5]),
        quadratic([[1.0, 0.2], [0.2, 2.0]], [0.3, -0.1], indices=[0, 2]),
        tanh_affine([0.7, -0.4], 0.2, 1.5, indices=[1, 3]),
        radial_bump([0.1, 0.0, -0.3], width=0.8),
        product(tanh_affine([1.0]), radial_bump([0.5, 0.5], indices=[1, 2])),
        projected(tanh_affine([1.0, 1.0, 1.0, 1.0]), 2),
    ]
    for f in fns:
        assert check_cyl_function(f, 4, rng) <= 1e-6


def test_check_cyl_function_flags_wrong_gradient(rng):
    bad = type(constant(0.0))((0,), lambda Y: Y[:, 0] ** 2, lambda Y: Y)  # missing factor 2
    with pytest.raises(ArgumentError):
        check_cyl_function(bad, 2, rng)


def test_product_rule_pointwise(rng):
    space = SpectralSpace([1.0, 0.4, 0.1])
    phi = tanh_affine([0.8, -0.5], indices=[0, 2])
    psi = radial_bump([0.3, 0.1], indices=[1, 2])
    X = rng.standard_normal((200, 3))
    lhs = stretched_gradient(space, product(phi, psi), X)
    rhs = (phi.value(X)[:, None] * stretched_gradient(space, psi, X)
           + psi.value(X)[:, None] * stretched_gradient(space, phi, X))
    np.testing.assert_allclose(lhs, rhs, atol=1e-10)


def test_projection_keeps_sup_bounds(rng):
    f = tanh_affine([1.0, -2.0, 0.5], scale=0.8)
    for m in (0, 1, 2, 3):
        fm = projected(f, m)
        X = rng.standard_normal((500, 3)) * 3
        assert np.max(np.abs(fm.value(X))) <= f.sup_bound
        assert np.max(np.linalg.norm(fm.gradient(X), axis=1)) <= f.grad_sup_bound + 1e-12


def test_projected_drops_high_coordinates():
    f = affine([1.0, 1.0, 1.0])
    fm = projected(f, 2)
    assert fm.value(np.array([1.0, 2.0, 100.0])) == pytest.approx(3.0)


# -- adjoint operators ------------------------------------------------------


def test_partial_star_examples():
    gauss = GaussianMeasure(SpectralSpace([1.0]))
    assert partial_star(gauss, affine([1.0]), [1.0], [2.0]) == pytest.approx(-3.0)
    assert partial_star(gauss, constant(1.0), [1.0], [2.0]) == pytest.approx(-gauss.v([1.0], [2.0]))
    assert partial_star(gauss, tanh_affine([1.0]), [0.0], [2.0]) == 0.0


def test_div_m_star_examples(rng):
    space = SpectralSpace([1.0, 0.5, 0.2])
    gauss = GaussianMeasure(space)
    X = rng.standard_normal((20, 3))
    z = np.array([0.3, -1.0, 2.0])
    np.testing.assert_allclose(div_m_star(gauss, CylField.constant_field(z), X), gauss.v(z, X))
    np.testing.assert_array_equal(div_m_star(gauss, CylField(((constant(0.0), z),)), X), np.zeros(20))
    f1, f2 = tanh_affine([1.0, 0.5]), radial_bump([0.0, 0.2, 0.1])
    z2 = np.array([1.0, 0.0, -0.5])
    both = div_m_star(gauss, CylField(((f1, z), (f2, z2))), X)
    apart = div_m_star(gauss, CylField(((f1, z),)), X) + div_m_star(gauss, CylField(((f2, z2),)), X)
    np.testing.assert_allclose(both, apart, atol=1e-12)


def test_div_nabla_star_examples(rng):
    space = SpectralSpace([1.0, 0.5, 0.2])
    gauss = GaussianMeasure(space)
    X = rng.standard_normal((20, 3))
    y = np.array([0.3, -1.0, 2.0])
    np.testing.assert_allclose(div_nabla_star(gauss, CylField.constant_field(y), X),
                               gauss.v(y / space.r_diag, X))
    np.testing.assert_array_equal(div_nabla_star(gauss, CylField(((constant(0.0), y),)), X), np.zeros(20))


@pytest.mark.parametrize("name", ["gaussian", "weighted_quadratic", "product_m2"])
def test_m_star_equals_nabla_star_of_stretched_field(name, rng):
    measure = measure_zoo()[name]
    d = measure.dim
    F = CylField(((tanh_affine(rng.standard_normal(2), indices=[0, d - 1]), rng.standard_normal(d)),
                  (radial_bump(rng.standard_normal(2), indices=[0, 1]), rng.standard_normal(d))))
    X = rng.standard_normal((50, d))
    np.testing.assert_allclose(div_m_star(measure, F, X),
                               div_nabla_star(measure, F.scaled_directions(measure.space.r_diag), X),
                               atol=1e-10)


@settings(max_examples=30, deadline=None)
@given(arrays(float, 3, elements=finite), st.floats(-4, 4), st.floats(-4, 4))
def test_adjoints_linear_in_direction(z, a, b):
    space = SpectralSpace([1.0, 0.5, 0.2])
    measure = WeightedGaussianMeasure(GaussianMeasure(space), quadratic_potential(3, 0.4))
    f = tanh_affine([0.5, 1.0, -0.3])
    X = np.array([[0.1, -0.2, 0.3], [1.0, 0.5, -1.5]])
    w = np.array([0.2, -0.7, 1.1])
    lhs = partial_star(measure, f, a * z + b * w, X)
    rhs = a * partial_star(measure, f, z, X) + b * partial_star(measure, f, w, X)
    np.testing.assert_allclose(lhs, rhs, atol=1e-10 * (1 + np.abs(rhs).max()))


@pytest.mark.parametrize("name", ["gaussian", "weighted_quadratic", "weighted_rd", "product_m1", "product_m2"])
def test_duality_residual(name):
    measure = measure_zoo()[name]
    d = measure.dim
    gen = np.random.default_rng(7)
    phi = tanh_affine(gen.standard_normal(2), 0.3, indices=[0, 1])
    F = CylField(((radial_bump(gen.standard_normal(2) * 0.3, indices=[0, d - 1]), gen.standard_normal(d)),
                  (constant(0.5), gen.standard_normal(d))))
    space = measure.space

    def both(X):
        lhs = np.sum(stretched_gradient(space, phi, X) * F.value(X), axis=1)
        rhs = phi.value(X) * div_m_star(measure, F, X)
        return np.stack([lhs, rhs, lhs - rhs], axis=1)

    _, _, diff = mc_integrate(both, measure, 200_000, RngStream(11, 3))
    assert abs(diff.value) <= 4 * diff.stderr


# -- smoothed indicators ----------------------------------------------------


def test_theta_eps_examples():
    assert theta_eps(-1.0, 0.0, 0.5) == 1.0
    assert theta_eps(0.0, 0.0, 0.5) == 0.0
    assert theta_eps(2.0, 0.0, 0.5) == 0.0
    assert theta_eps(-0.25, 0.0, 0.5) == pytest.approx(0.5)


@given(st.floats(-5, 5), st.floats(-2, 2), st.floats(1e-3, 3))
def test_smoothed_indicator_range_and_gradient(x0, r, eps):
    g = affine([1.0])
    si = SmoothedIndicator(g, r, eps)
    x = np.array([x0])
    v = si.value(x)
    assert 0.0 <= v <= 1.0
    grad = si.gradient(x)[0]
    if r - eps < x0 < r:
        assert grad == pytest.approx(-1.0 / eps)
    else:
        assert grad == 0.0


def test_smoothed_indicator_rejects_nonpositive_eps():
    with pytest.raises(ArgumentError):
        SmoothedIndicator(affine([1.0]), 0.0, 0.0)


def test_sine_grid_orthonormal():
    grid = SineGrid(8, 128)
    E = grid.values(np.eye(8))
    gram = np.array([[grid.integrate((E[i] * E[j])[None, :])[0] for j in range(8)] for i in range(8)])
    np.testing.assert_allclose(gram, np.eye(8), atol=1e-12)
    with pytest.raises(ArgumentError):
        SineGrid(8, 16)


def test_product_measure_space_eigenvalues():
    pm = ProductMeasure(2.0, [1.0, 0.25])
    np.testing.assert_allclose(pm.space.eigenvalues, pm.moment_b(1) * np.array([1.0, 0.5]))
