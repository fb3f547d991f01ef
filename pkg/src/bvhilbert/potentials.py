"""Convex potentials ``U`` for weighted Gaussian measures ``e^{-2U} dgamma / Z``.

Includes the integral functional ``x -> int_0^1 Phi(x(xi)) dxi`` of a
reaction-diffusion nonlinearity, its Moreau-Yosida regularisation, and a
generic proximal solver for potentials without that structure.
"""
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from numpy.polynomial import Polynomial

from .calculus import SineGrid
from .exceptions import ArgumentError, CapabilityError, NumericError
from .validation import check_points, check_positive, maybe_scalar

__all__ = [
    "Potential", "ScalarNonlinearity", "constant_potential", "quadratic_potential",
    "separable_polynomial_potential", "reaction_diffusion_potential", "moreau_yosida",
    "yosida_scalar", "scalar_resolvent", "check_potential",
]


@dataclass(frozen=True, eq=False)
class Potential:
    """A convex function on the truncated space with its derivatives.

    ``value`` maps ``(n, dim) -> (n,)``, ``grad`` maps ``(n, dim) -> (n, dim)``
    and the optional ``hess_vec(X, H)`` returns ``D^2U(x_i) h_i`` row by row.
    ``lip_grad`` is a Lipschitz constant of the gradient when one is known;
    ``lower_bound`` must satisfy ``U >= lower_bound`` everywhere.
    """

    dim: int
    value_fn: Callable
    grad_fn: Callable
    hess_vec_fn: Optional[Callable] = None
    lip_grad: Optional[float] = None
    convex: bool = True
    lower_bound: float = 0.0
    name: str = "potential"
    structure: Optional[dict] = None

    def value(self, x):
        X, single = check_points(x, self.dim)
        return maybe_scalar(np.asarray(self.value_fn(X), dtype=float), single)

    __call__ = value

    def gradient(self, x):
        X, single = check_points(x, self.dim)
        G = np.asarray(self.grad_fn(X), dtype=float)
        return G[0] if single else G

    @property
    def has_hessian(self):
        return self.hess_vec_fn is not None

    def hessian_vec(self, x, h):
        if self.hess_vec_fn is None:
            raise CapabilityError(f"{self.name} has no Hessian-vector product")
        X, single = check_points(x, self.dim)
        H = np.broadcast_to(np.asarray(h, dtype=float), X.shape)
        out = np.asarray(self.hess_vec_fn(X, H), dtype=float)
        return out[0] if single else out

    def hessian(self, x):
        """Full Hessian, assembled column by column from Hessian-vector products."""
        X, single = check_points(x, self.dim)
        cols = [self.hessian_vec(X, np.broadcast_to(np.eye(self.dim)[j], X.shape))
                for j in range(self.dim)]
        H = np.stack(cols, axis=2)
        return H[0] if single else H


def constant_potential(dim, c=0.0):
    c = float(c)
    return Potential(dim, lambda X: np.full(X.shape[0], c), lambda X: np.zeros(X.shape),
                     lambda X, H: np.zeros(X.shape), lip_grad=0.0, lower_bound=c,
                     name="constant", structure={"kind": "constant"})


def quadratic_potential(dim, kappa, s_diag=None):
    """``U(x) = kappa/2 <S x, x>`` with diagonal ``S >= 0``."""
    s = np.ones(dim) if s_diag is None else np.asarray(s_diag, dtype=float)
    if s.shape != (dim,) or np.any(s < 0) or kappa < 0:
        raise ArgumentError("quadratic potential needs kappa >= 0 and a nonnegative diagonal")
    c = float(kappa) * s
    return Potential(
        dim, lambda X: 0.5 * (X * X) @ c, lambda X: X * c, lambda X, H: H * c,
        lip_grad=float(c.max()), lower_bound=0.0, name="quadratic",
        structure={"kind": "quadratic", "diag": c})


def separable_polynomial_potential(dim, coeffs):
    """``U(x) = sum_k Phi(x_k)`` for a convex polynomial ``Phi`` (ascending coefficients)."""
    phi = Polynomial(np.asarray(coeffs, dtype=float))
    d1, d2 = phi.deriv(), phi.deriv(2)
    grid = np.linspace(-50, 50, 20001)
    if np.any(d2(grid) < -1e-12):
        raise ArgumentError("custom polynomial potential must be convex")
    if phi.degree() % 2 or phi.coef[-1] <= 0:
        if phi.degree() > 0 and d1.degree() > 0:
            raise ArgumentError("custom polynomial must be bounded below")
    crit = [r.real for r in d1.roots() if abs(r.imag) < 1e-9] if phi.degree() > 1 else [0.0]
    lower = dim * float(min(phi(np.asarray(crit)))) if crit else -np.inf
    return Potential(
        dim, lambda X: phi(X).sum(axis=1), lambda X: d1(X), lambda X, H: d2(X) * H,
        lower_bound=lower, name="custom_polynomial",
        structure={"kind": "custom_polynomial", "coeffs": list(map(float, coeffs))})


class ScalarNonlinearity:
    """Strictly increasing polynomial ``f`` with primitive ``Phi`` (``Phi(0) = 0``).

    Parameters
    ----------
    coeffs : sequence of float
        Ascending coefficients of ``f``; the degree must exceed 1.
    """

    def __init__(self, coeffs):
        self.f = Polynomial(np.asarray(coeffs, dtype=float)).trim()
        if self.f.degree() <= 1:
            raise ArgumentError("the nonlinearity must have degree > 1")
        self.df = self.f.deriv()
        self.Phi = self.f.integ()
        probe = np.linspace(-20, 20, 40001)
        if np.any(self.df(probe) < 0):
            raise ArgumentError("the nonlinearity must be increasing")
        real = [r.real for r in self.f.roots() if abs(r.imag) < 1e-7]
        self.zero = float(np.median(real)) if real else 0.0

    @property
    def degree(self):
        return self.f.degree()

    def min_primitive(self):
        return float(self.Phi(self.zero))


def scalar_resolvent(nl, alpha, s, tol=1e-14, max_iter=200):
    """Solve ``r + alpha f(r) = s`` for ``r`` (vectorised).

    The map is strictly increasing so the root is unique.  Newton steps are
    used when they stay inside the current bracket, bisection otherwise.
    """
    alpha = check_positive(alpha, "alpha")
    s = np.asarray(s, dtype=float)
    shape = s.shape
    s = s.ravel()

    def h(r):
        return r + alpha * nl.f(r) - s

    lo = s.copy()
    hi = s.copy()
    width = 1.0 + np.abs(s)
    for _ in range(200):
        bad = h(lo) > 0
        if not bad.any():
            break
        lo[bad] -= width[bad]
        width[bad] *= 2
    else:
        raise NumericError("bracket expansion failed (lower side)")
    width = 1.0 + np.abs(s)
    for _ in range(200):
        bad = h(hi) < 0
        if not bad.any():
            break
        hi[bad] += width[bad]
        width[bad] *= 2
    else:
        raise NumericError("bracket expansion failed (upper side)")

    r = np.clip(s, lo, hi)
    act = np.arange(s.size)
    for _ in range(max_iter):
        ra, la, ua = r[act], lo[act], hi[act]
        hr = h(ra) if act.size == s.size else ra + alpha * nl.f(ra) - s[act]
        la = np.where(hr < 0, ra, la)
        ua = np.where(hr > 0, ra, ua)
        cand = ra - hr / (1.0 + alpha * nl.df(ra))
        # a Newton step landing on the bracket end is kept; only escapes bisect
        outside = (cand < la) | (cand > ua)
        cand = np.where(outside, 0.5 * (la + ua), cand)
        cand = np.where(hr == 0, ra, cand)
        done = np.abs(cand - ra) <= tol * (1.0 + np.abs(ra))
        r[act], lo[act], hi[act] = cand, la, ua
        act = act[~done]
        if act.size == 0:
            break
    else:
        raise NumericError("scalar resolvent did not converge", float(np.abs(h(r)).max()))
    return r.reshape(shape)


def yosida_scalar(nl, alpha, s):
    """Yosida approximation ``f_alpha(s) = f((I + alpha f)^{-1} s)``."""
    return nl.f(scalar_resolvent(nl, alpha, s))


def _yosida_derivative(nl, alpha, r):
    d = nl.df(r)
    return d / (1.0 + alpha * d)


def reaction_diffusion_potential(nl, space, quad_points=256):
    """``U(x) = int_0^1 Phi(x(xi)) dxi`` on the sine basis; ``grad U = <f o x, e_k>``."""
    if space.basis != "sine":
        raise ArgumentError("the reaction-diffusion potential needs the sine basis")
    grid = SineGrid(space.dim, quad_points)

    def value(X):
        return grid.integrate(nl.Phi(grid.values(X)))

    def grad(X):
        return grid.project(nl.f(grid.values(X)))

    def hess_vec(X, H):
        return grid.project(nl.df(grid.values(X)) * grid.values(H))

    return Potential(space.dim, value, grad, hess_vec, lip_grad=None,
                     lower_bound=nl.min_primitive(), name="reaction_diffusion",
                     structure={"kind": "reaction_diffusion", "nl": nl, "grid": grid})


def _pointwise_moreau(U, alpha):
    nl, grid = U.structure["nl"], U.structure["grid"]

    def parts(X):
        S = grid.values(X)
        return S, scalar_resolvent(nl, alpha, S)

    def value(X):
        S, Rr = parts(X)
        return grid.integrate(nl.Phi(Rr) + (S - Rr) ** 2 / (2 * alpha))

    def grad(X):
        _, Rr = parts(X)
        return grid.project(nl.f(Rr))

    def hess_vec(X, H):
        _, Rr = parts(X)
        return grid.project(_yosida_derivative(nl, alpha, Rr) * grid.values(H))

    return Potential(U.dim, value, grad, hess_vec, lip_grad=1.0 / alpha,
                     lower_bound=U.lower_bound, name=f"{U.name}_moreau({alpha:g})",
                     structure={"kind": "moreau_pointwise", "nl": nl, "grid": grid,
                                "alpha": alpha, "base": U})


def prox(U, alpha, x, tol=1e-10, max_iter=100):
    """``argmin_y U(y) + |x - y|^2 / (2 alpha)`` by damped Newton, row by row."""
    X, single = check_points(x, U.dim)
    if not U.has_hessian:
        raise CapabilityError("generic prox needs a Hessian-vector product")
    Y = X.copy()
    eye = np.eye(U.dim)
    thresh = tol * (1.0 + np.linalg.norm(X, axis=1) / alpha)

    def objective(Yc, Xc):
        return U.value_fn(Yc) + np.sum((Yc - Xc) ** 2, axis=1) / (2 * alpha)

    active = np.ones(X.shape[0], dtype=bool)
    residual = np.zeros(X.shape[0])
    for _ in range(max_iter):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        Ya, Xa = Y[idx], X[idx]
        g = U.grad_fn(Ya) + (Ya - Xa) / alpha
        residual[idx] = np.linalg.norm(g, axis=1)
        conv = residual[idx] <= thresh[idx]
        active[idx[conv]] = False
        idx, g, Ya, Xa = idx[~conv], g[~conv], Ya[~conv], Xa[~conv]
        if idx.size == 0:
            break
        Hm = U.hessian(Ya) + eye / alpha
        d = np.linalg.solve(Hm, g[:, :, None])[:, :, 0]
        f0 = objective(Ya, Xa)
        slope = np.sum(g * d, axis=1)
        t = np.ones(idx.size)
        for _ in range(40):
            trial = Ya - t[:, None] * d
            ok = objective(trial, Xa) <= f0 - 1e-4 * t * slope + 1e-14 * np.abs(f0)
            if ok.all():
                break
            t = np.where(ok, t, 0.5 * t)
        Y[idx] = Ya - t[:, None] * d
    else:
        idx = np.flatnonzero(active)
        if idx.size:
            g = U.grad_fn(Y[idx]) + (Y[idx] - X[idx]) / alpha
            residual[idx] = np.linalg.norm(g, axis=1)
            if np.any(residual[idx] > thresh[idx]):
                raise NumericError("prox solver did not converge", float(residual.max()))
    return Y[0] if single else Y


def moreau_yosida(U, alpha, force_generic=False):
    """Moreau-Yosida envelope ``U_alpha(x) = inf_y U(y) + |x - y|^2 / (2 alpha)``.

    For an integral functional the infimum decouples in ``xi`` and reduces
    to the scalar resolvent of the nonlinearity; otherwise the proximal
    point is found by damped Newton.  ``grad U_alpha(x) = (x - prox(x)) / alpha``.
    """
    alpha = check_positive(alpha, "alpha")
    if not U.convex:
        raise ArgumentError("Moreau-Yosida approximation needs a convex potential")
    kind = (U.structure or {}).get("kind")
    if kind == "reaction_diffusion" and not force_generic:
        return _pointwise_moreau(U, alpha)

    def value(X):
        Y = prox(U, alpha, X)
        return U.value_fn(Y) + np.sum((X - Y) ** 2, axis=1) / (2 * alpha)

    def grad(X):
        return (X - prox(U, alpha, X)) / alpha

    hv = None
    if U.has_hessian:
        def hv(X, H):
            # D^2 U_alpha = (I - (I + alpha D^2U(p))^{-1}) / alpha at p = prox(x)
            Y = prox(U, alpha, X)
            A = np.eye(U.dim) + alpha * U.hessian(Y)
            return (H - np.linalg.solve(A, H[:, :, None])[:, :, 0]) / alpha

    lip = 1.0 / alpha if U.lip_grad is None else min(1.0 / alpha, U.lip_grad)
    return Potential(U.dim, value, grad, hv, lip_grad=lip, lower_bound=U.lower_bound,
                     name=f"{U.name}_moreau({alpha:g})",
                     structure={"kind": "moreau_generic", "alpha": alpha, "base": U})


def check_potential(U, rng, n_probes=20, scale=1.0, rtol=1e-5):
    """Finite-difference and Lipschitz checks at random probes; returns diagnostics."""
    X = rng.standard_normal((n_probes, U.dim)) * scale
    G = U.gradient(X)
    worst = 0.0
    for k in range(U.dim):
        h = 1e-5 * (1.0 + np.abs(X[:, k]))
        E = np.zeros_like(X)
        E[:, k] = h
        fd = (U.value(X + E) - U.value(X - E)) / (2 * h)
        worst = max(worst, float(np.max(np.abs(fd - G[:, k]) / (1.0 + np.abs(G[:, k])))))
    if worst > rtol:
        raise ArgumentError(f"{U.name}: gradient mismatch {worst:.3g}")
    lip_ratio = None
    if U.lip_grad is not None:
        Y = rng.standard_normal((n_probes, U.dim)) * scale
        num = np.linalg.norm(U.gradient(X) - U.gradient(Y), axis=1)
        den = np.linalg.norm(X - Y, axis=1)
        lip_ratio = float(np.max(num / den))
        if lip_ratio > U.lip_grad * (1 + 1e-8) + 1e-12:
            raise ArgumentError(f"{U.name}: gradient Lipschitz bound violated ({lip_ratio:.4g})")
    low = float(np.min(U.value(X)))
    if low < U.lower_bound - 1e-9 * (1 + abs(U.lower_bound)):
        raise ArgumentError(f"{U.name}: declared lower bound violated")
    return {"grad_mismatch": worst, "lip_ratio": lip_ratio}
