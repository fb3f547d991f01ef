"""Galerkin truncation, cylindrical test objects and first/second order operators.

Everything lives in the span of the first ``dim`` eigenvectors of the
covariance ``Q``.  A point is stored by its coefficients ``<x, e_k>`` and the
operator ``R = Q^{1/2}`` by its diagonal ``sqrt(lambda_k)``.

Functions and fields are evaluated on batches: ``X`` has shape
``(n_points, dim)``.  Every operator also accepts a single point and then
returns a scalar (or a single vector).
"""
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .exceptions import ArgumentError, CapabilityError
from .validation import check_points, check_vector, maybe_scalar

__all__ = [
    "SpectralSpace", "eigenvalue_preset", "SineGrid",
    "CylFunction", "CylField", "SmoothedIndicator",
    "constant", "affine", "quadratic", "tanh_affine", "radial_bump", "product",
    "projected", "check_cyl_function",
    "project", "stretched_gradient", "full_gradient", "stretched_hessian",
    "partial_star", "div_m_star", "div_nabla_star", "theta_eps",
]


def eigenvalue_preset(rule, dim):
    """Covariance eigenvalues from a named rule.

    ``"dirichlet_half_inverse"`` gives ``1/(2 k^2 pi^2)``, the eigenvalues of
    ``(-2A)^{-1}`` for the Dirichlet Laplacian ``A`` on (0, 1).
    ``"paper_lambda"`` gives ``(k pi)^{-2}``, the inverse Dirichlet Laplacian
    without the factor 2; both are kept so results can be compared.  ``"geometric(rho)"`` gives ``rho^(k-1)``.
    """
    k = np.arange(1, dim + 1, dtype=float)
    if rule == "dirichlet_half_inverse":
        return 1.0 / (2.0 * k**2 * np.pi**2)
    if rule == "paper_lambda":
        return 1.0 / (k * np.pi) ** 2
    if isinstance(rule, str) and rule.startswith("geometric(") and rule.endswith(")"):
        rho = float(rule[len("geometric("):-1])
        if not 0 < rho <= 1:
            raise ArgumentError(f"geometric ratio must lie in (0, 1], got {rho}")
        return rho ** (k - 1)
    raise ArgumentError(f"unknown eigenvalue rule {rule!r}")


@dataclass(frozen=True, eq=False)
class SpectralSpace:
    """Truncated Hilbert space with diagonal covariance ``Q``.

    Parameters
    ----------
    eigenvalues : array_like
        ``lambda_1 .. lambda_n``, all strictly positive.
    basis : {None, "sine"}
        ``"sine"`` identifies ``X`` with ``L^2(0, 1)`` through
        ``e_k(xi) = sqrt(2) sin(k pi xi)``.
    """

    eigenvalues: np.ndarray
    basis: Optional[str] = None

    def __post_init__(self):
        lam = np.asarray(self.eigenvalues, dtype=float).ravel()
        if lam.size == 0:
            raise ArgumentError("a space needs at least one dimension")
        if not np.all(np.isfinite(lam)) or np.any(lam <= 0):
            raise ArgumentError("covariance eigenvalues must be finite and positive")
        if self.basis not in (None, "sine"):
            raise ArgumentError(f"unknown basis {self.basis!r}")
        lam.setflags(write=False)
        r = np.sqrt(lam)
        r.setflags(write=False)
        object.__setattr__(self, "eigenvalues", lam)
        object.__setattr__(self, "r_diag", r)

    @classmethod
    def from_rule(cls, rule, dim, basis=None):
        return cls(eigenvalue_preset(rule, dim), basis=basis)

    @property
    def dim(self):
        return self.eigenvalues.size

    @property
    def r_norm(self):
        """Operator norm of ``R``."""
        return float(self.r_diag.max())

    def apply_r(self, z):
        return np.asarray(z, dtype=float) * self.r_diag

    def apply_r_inv(self, y):
        return np.asarray(y, dtype=float) / self.r_diag

    def basis_vector(self, k):
        e = np.zeros(self.dim)
        e[k] = 1.0
        return e

    def sine_grid(self, quad_points=256):
        if self.basis != "sine":
            raise CapabilityError("this space has no sine basis attached")
        return SineGrid(self.dim, quad_points)


class SineGrid:
    """Gauss-Legendre grid on (0, 1) carrying the orthonormal sine basis.

    Used for integral functionals ``x -> int_0^1 Phi(x(xi)) dxi``.  The same
    grid serves values, gradients and Hessians, so the gradient of the
    discretised functional is exactly the discretised gradient.
    """

    MIN_POINTS = 64

    def __init__(self, dim, quad_points=256):
        if quad_points < self.MIN_POINTS:
            raise ArgumentError(f"need at least {self.MIN_POINTS} quadrature points, got {quad_points}")
        nodes, weights = np.polynomial.legendre.leggauss(quad_points)
        self.dim = dim
        self.quad_points = quad_points
        self.nodes = 0.5 * (nodes + 1.0)
        self.weights = 0.5 * weights
        k = np.arange(1, dim + 1)
        # e_k(xi) = sqrt(2) sin(k pi xi); orthonormal in L^2(0, 1)
        self.basis = np.sqrt(2.0) * np.sin(np.pi * np.outer(self.nodes, k))
        self.sup_basis = np.sqrt(2.0)

    def values(self, X):
        """``x(xi_j)`` for each coefficient vector: shape ``(n, quad_points)``."""
        return X @ self.basis.T

    def project(self, G):
        """``<g, e_k>`` by quadrature for grid values ``G``: shape ``(n, dim)``."""
        return (G * self.weights) @ self.basis

    def integrate(self, G):
        return G @ self.weights


# --------------------------------------------------------------------------
# cylindrical functions


def _idx_array(indices):
    idx = np.asarray(indices, dtype=int).ravel()
    if idx.size and (np.any(idx < 0) or np.any(np.diff(idx) <= 0)):
        raise ArgumentError("active indices must be sorted, distinct and nonnegative")
    return idx


@dataclass(frozen=True, eq=False)
class CylFunction:
    """Smooth function depending on finitely many coordinates.

    ``core`` maps ``Y`` of shape ``(n, m)`` (the active coordinates) to values
    of shape ``(n,)``; ``core_grad`` returns ``(n, m)`` and the optional
    ``core_hess`` returns ``(n, m, m)``.  Bounds, when present, are certified
    values of the sup norm of the function and of its gradient.
    """

    indices: tuple
    core: Callable
    core_grad: Callable
    core_hess: Optional[Callable] = None
    sup_bound: Optional[float] = None
    grad_sup_bound: Optional[float] = None
    name: str = "cyl"

    def __post_init__(self):
        object.__setattr__(self, "indices", tuple(int(i) for i in _idx_array(self.indices)))

    @property
    def active(self):
        return np.asarray(self.indices, dtype=int)

    @property
    def has_hessian(self):
        return self.core_hess is not None

    def _active_coords(self, X):
        if self.indices and max(self.indices) >= X.shape[1]:
            raise ArgumentError(
                f"{self.name}: active index {max(self.indices)} outside dimension {X.shape[1]}")
        return X[:, self.active]

    def value(self, x):
        X, single = check_points(x)
        vals = np.asarray(self.core(self._active_coords(X)), dtype=float).reshape(X.shape[0])
        return maybe_scalar(vals, single)

    __call__ = value

    def gradient(self, x):
        X, single = check_points(x)
        out = np.zeros_like(X)
        if self.indices:
            out[:, self.active] = self.core_grad(self._active_coords(X))
        return out[0] if single else out

    def hessian(self, x):
        if self.core_hess is None:
            raise CapabilityError(f"{self.name} has no Hessian")
        X, single = check_points(x)
        n, d = X.shape
        out = np.zeros((n, d, d))
        if self.indices:
            idx = self.active
            out[:, idx[:, None], idx[None, :]] = self.core_hess(self._active_coords(X))
        return out[0] if single else out


def constant(c):
    c = float(c)
    return CylFunction(
        (), lambda Y: np.full(Y.shape[0], c), lambda Y: np.zeros(Y.shape),
        lambda Y: np.zeros((Y.shape[0], 0, 0)), sup_bound=abs(c), grad_sup_bound=0.0,
        name="constant")


def _indices_for(coef, indices):
    coef = np.atleast_1d(np.asarray(coef, dtype=float))
    if indices is None:
        indices = range(coef.size)
    idx = _idx_array(indices)
    if idx.size != coef.shape[0]:
        raise ArgumentError("coefficients and active indices disagree in length")
    return coef, tuple(idx)


def affine(coef, offset=0.0, indices=None):
    """``x -> <coef, x_active> + offset``."""
    a, idx = _indices_for(coef, indices)
    b = float(offset)
    return CylFunction(
        idx, lambda Y: Y @ a + b, lambda Y: np.broadcast_to(a, Y.shape).copy(),
        lambda Y: np.zeros((Y.shape[0], a.size, a.size)), name="affine")


def quadratic(matrix, coef=None, offset=0.0, indices=None):
    """``x -> y^T A y / 2 + <coef, y> + offset`` with ``y = x_active``; ``A`` symmetrised."""
    A = np.atleast_2d(np.asarray(matrix, dtype=float))
    A = 0.5 * (A + A.T)
    m = A.shape[0]
    a = np.zeros(m) if coef is None else np.asarray(coef, dtype=float)
    _, idx = _indices_for(a, indices if indices is not None else range(m))
    b = float(offset)
    return CylFunction(
        idx,
        lambda Y: 0.5 * np.einsum("ni,ij,nj->n", Y, A, Y) + Y @ a + b,
        lambda Y: Y @ A + a,
        lambda Y: np.broadcast_to(A, (Y.shape[0], m, m)).copy(),
        name="quadratic")


def tanh_affine(coef, offset=0.0, scale=1.0, indices=None):
    """``x -> scale * tanh(<coef, x_active> + offset)``."""
    w, idx = _indices_for(coef, indices)
    b, c = float(offset), float(scale)

    def grad(Y):
        s2 = 1.0 - np.tanh(Y @ w + b) ** 2
        return c * s2[:, None] * w

    def hess(Y):
        t = np.tanh(Y @ w + b)
        return (-2.0 * c * t * (1.0 - t**2))[:, None, None] * np.outer(w, w)

    return CylFunction(
        idx, lambda Y: c * np.tanh(Y @ w + b), grad, hess,
        sup_bound=abs(c), grad_sup_bound=abs(c) * float(np.linalg.norm(w)), name="tanh_affine")


def radial_bump(center, width=1.0, amplitude=1.0, indices=None):
    """``x -> amplitude * exp(-|y - center|^2 / (2 width^2))``."""
    c0, idx = _indices_for(center, indices)
    s2 = float(width) ** 2
    amp = float(amplitude)
    m = c0.size

    def val(Y):
        return amp * np.exp(-np.sum((Y - c0) ** 2, axis=1) / (2 * s2))

    def grad(Y):
        return -(val(Y) / s2)[:, None] * (Y - c0)

    def hess(Y):
        D = Y - c0
        v = val(Y)[:, None, None]
        return v * (np.einsum("ni,nj->nij", D, D) / s2**2 - np.eye(m) / s2)

    return CylFunction(
        idx, val, grad, hess, sup_bound=abs(amp),
        grad_sup_bound=abs(amp) / (np.sqrt(s2) * np.sqrt(np.e)), name="radial_bump")


def _embed(f, idx_union):
    """Positions of ``f``'s active coordinates inside ``idx_union``."""
    return np.searchsorted(idx_union, f.active)


def product(f, g):
    """Pointwise product of two cylindrical functions."""
    idx = np.union1d(f.active, g.active).astype(int)
    pf, pg = _embed(f, idx), _embed(g, idx)
    m = idx.size

    def val(Y):
        return f.core(Y[:, pf]) * g.core(Y[:, pg])

    def grad(Y):
        out = np.zeros(Y.shape)
        out[:, pf] += g.core(Y[:, pg])[:, None] * f.core_grad(Y[:, pf])
        out[:, pg] += f.core(Y[:, pf])[:, None] * g.core_grad(Y[:, pg])
        return out

    hess = None
    if f.has_hessian and g.has_hessian:
        def hess(Y):
            n = Y.shape[0]
            Gf = np.zeros((n, m))
            Gg = np.zeros((n, m))
            Gf[:, pf] = f.core_grad(Y[:, pf])
            Gg[:, pg] = g.core_grad(Y[:, pg])
            H = np.einsum("ni,nj->nij", Gf, Gg)
            H = H + H.transpose(0, 2, 1)
            H[:, pf[:, None], pf[None, :]] += g.core(Y[:, pg])[:, None, None] * f.core_hess(Y[:, pf])
            H[:, pg[:, None], pg[None, :]] += f.core(Y[:, pf])[:, None, None] * g.core_hess(Y[:, pg])
            return H

    sup = None
    if f.sup_bound is not None and g.sup_bound is not None:
        sup = f.sup_bound * g.sup_bound
    return CylFunction(tuple(idx), val, grad, hess, sup_bound=sup, name=f"({f.name}*{g.name})")


def projected(f, m):
    """``f o P_m``: coordinates with index ``>= m`` are replaced by zero."""
    keep = f.active < m
    n_active = f.active.size

    def lift(Y):
        full = np.zeros((Y.shape[0], n_active))
        full[:, keep] = Y
        return full

    def grad(Y):
        return f.core_grad(lift(Y))[:, keep]

    hess = None
    if f.has_hessian:
        def hess(Y):
            return f.core_hess(lift(Y))[:, keep][:, :, keep]

    return CylFunction(
        tuple(f.active[keep]), lambda Y: f.core(lift(Y)), grad, hess,
        sup_bound=f.sup_bound, grad_sup_bound=f.grad_sup_bound, name=f"{f.name}oP{m}")


def check_cyl_function(f, dim, rng, n_probes=20, rtol=1e-6):
    """Compare the analytic gradient with central differences at random probes.

    Returns the worst relative mismatch; raises ``ArgumentError`` when it
    exceeds ``rtol`` or a declared sup bound is violated.
    """
    X = rng.standard_normal((n_probes, dim)) * 1.5
    G = f.gradient(X)
    worst = 0.0
    for k in f.indices:
        h = 1e-5 * (1.0 + np.abs(X[:, k]))
        E = np.zeros_like(X)
        E[:, k] = h
        fd = (f.value(X + E) - f.value(X - E)) / (2 * h)
        err = np.abs(fd - G[:, k]) / (1.0 + np.abs(G[:, k]))
        worst = max(worst, float(err.max()))
    if worst > rtol:
        raise ArgumentError(f"{f.name}: gradient mismatch {worst:.3g} against finite differences")
    if f.sup_bound is not None and np.max(np.abs(f.value(X))) > f.sup_bound * (1 + 1e-12):
        raise ArgumentError(f"{f.name}: sup bound violated")
    return worst


# --------------------------------------------------------------------------
# fields


@dataclass(frozen=True, eq=False)
class CylField:
    """Finite-rank vector field ``F(x) = sum_i f_i(x) z_i``."""

    terms: tuple

    def __post_init__(self):
        terms = tuple((f, np.asarray(z, dtype=float)) for f, z in self.terms)
        if not terms:
            raise ArgumentError("a field needs at least one term")
        for _, z in terms:
            if not np.all(np.isfinite(z)):
                raise ArgumentError("field directions must be finite")
        object.__setattr__(self, "terms", terms)

    @classmethod
    def constant_field(cls, z):
        return cls(((constant(1.0), z),))

    def value(self, x):
        X, single = check_points(x)
        out = sum(f.value(X)[:, None] * z[None, :] for f, z in self.terms)
        return out[0] if single else out

    def scaled_directions(self, diag):
        """The field with every direction multiplied by a diagonal operator."""
        return CylField(tuple((f, z * diag) for f, z in self.terms))


# --------------------------------------------------------------------------
# smoothed indicators


def theta_eps(xi, r, eps):
    """Piecewise-linear cut-off: 1 below ``r - eps``, 0 above ``r``, linear between."""
    return np.clip(-(np.asarray(xi, dtype=float) - r) / eps, 0.0, 1.0)


@dataclass(frozen=True, eq=False)
class SmoothedIndicator:
    """``theta_eps o g``, a Lipschitz approximation of ``1{g < r}``.

    ``g`` is anything with ``value(X)`` and ``gradient(X)`` (a cylindrical
    function, a potential, an integral functional).
    """

    g: object
    r: float
    eps: float

    def __post_init__(self):
        if not self.eps > 0:
            raise ArgumentError("eps must be positive")

    def value(self, x):
        X, single = check_points(x)
        return maybe_scalar(theta_eps(self.g.value(X), self.r, self.eps), single)

    def gradient(self, x):
        X, single = check_points(x)
        gx = self.g.value(X)
        window = (gx > self.r - self.eps) & (gx < self.r)
        out = -(window / self.eps)[:, None] * self.g.gradient(X)
        return out[0] if single else out


# --------------------------------------------------------------------------
# operators


def project(space, x, n_keep):
    """Orthogonal projection onto the span of the first ``n_keep`` basis vectors."""
    if not 0 <= n_keep <= space.dim:
        raise ArgumentError(f"projection rank {n_keep} outside [0, {space.dim}]")
    X, single = check_points(x, space.dim)
    out = X.copy()
    out[:, n_keep:] = 0.0
    return out[0] if single else out


def full_gradient(space, f, x):
    X, single = check_points(x, space.dim)
    G = f.gradient(X)
    return G[0] if single else G


def stretched_gradient(space, f, x):
    """``R grad f``: the gradient scaled coordinatewise by ``sqrt(lambda_k)``."""
    X, single = check_points(x, space.dim)
    G = f.gradient(X) * space.r_diag
    return G[0] if single else G


def stretched_hessian(space, f, x):
    """``R D^2 f R``."""
    X, single = check_points(x, space.dim)
    r = space.r_diag
    H = f.hessian(X) * r[None, :, None] * r[None, None, :]
    return H[0] if single else H


def partial_star(measure, f, z, x):
    """``<R grad f, z> - v_z f``."""
    space = measure.space
    X, single = check_points(x, space.dim)
    z = check_vector(z, space.dim)
    vals = stretched_gradient(space, f, X) @ z - measure.v(z, X) * f.value(X)
    return maybe_scalar(vals, single)


def div_m_star(measure, F, x):
    """Adjoint of the stretched gradient on a finite-rank field.

    ``M* F = sum_i ( v_{z_i} f_i - <R grad f_i, z_i> )``, so that
    ``int <M phi, F> dnu = int phi M*F dnu``.
    """
    X, single = check_points(x, measure.space.dim)
    vals = -sum(partial_star(measure, f, z, X) for f, z in F.terms)
    return maybe_scalar(vals, single)


def div_nabla_star(measure, F, x):
    """Adjoint of the plain gradient: ``sum_i ( v_{R^{-1} y_i} f_i - d f_i / d y_i )``."""
    space = measure.space
    X, single = check_points(x, space.dim)
    vals = np.zeros(X.shape[0])
    for f, y in F.terms:
        y = check_vector(y, space.dim, "y")
        vals += measure.v(space.apply_r_inv(y), X) * f.value(X) - f.gradient(X) @ y
    return maybe_scalar(vals, single)
