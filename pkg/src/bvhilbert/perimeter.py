"""Perimeters of halfspaces, sublevel sets and L^p balls."""
import math
from dataclasses import dataclass

import numpy as np

from .calculus import SineGrid, SmoothedIndicator
from .exceptions import ArgumentError
from .potentials import Potential
from .quadrature import McEngine, McEstimate, RngStream, mc_integrate

__all__ = [
    "Halfspace", "SublevelSet", "halfspace_perimeter", "sublevel_perimeter", "SublevelReport",
    "mu_curve", "lp_ball_functional", "gaussian_halfspace_oracle",
]

STABILITY_TOL = 0.05


@dataclass(frozen=True)
class Halfspace:
    """``{x : <x, a> < r}``; ``a`` may be longer than the truncation dimension."""

    a: tuple
    r: float

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float).ravel()
        if not np.linalg.norm(a) > 0:
            raise ArgumentError("halfspace normal must be nonzero")
        object.__setattr__(self, "a", tuple(a.tolist()))

    def truncated(self, dim):
        a = np.zeros(dim)
        full = np.asarray(self.a)
        a[: min(dim, full.size)] = full[:dim]
        return a


@dataclass(frozen=True)
class SublevelSet:
    """``{x : g(x) < r}`` for ``g`` with ``value`` and ``gradient``."""

    g: object
    r: float


def gaussian_halfspace_oracle(space, a, r):
    """``phi_std(r / sigma)`` with ``sigma^2 = <Q a, a>``."""
    sigma = float(np.linalg.norm(space.r_diag * np.asarray(a, dtype=float)))
    return math.exp(-0.5 * (r / sigma) ** 2) / math.sqrt(2 * math.pi)


def halfspace_perimeter(measure, h, which="p", engine=None, stream_id=0):
    """``p = -int_H v_{Ra} dnu / |Ra|`` or ``p0 = -int_H v_{R^{-1}a} dnu / |a|``.

    ``p0`` tests against the constant field ``a / |a|``, whose adjoint
    under the plain gradient is ``v_{R^{-1}a} / |a|``.

    ``a`` is first truncated to the working dimension; if nothing is left
    the result is exactly zero.
    """
    engine = engine or McEngine()
    dim = measure.dim
    a = h.truncated(dim)
    r_diag = measure.space.r_diag
    if which == "p":
        d = r_diag * a
        norm = float(np.linalg.norm(d))
    elif which == "p0":
        d = a / r_diag
        norm = float(np.linalg.norm(a))
    else:
        raise ArgumentError(f"unknown perimeter kind {which!r}")
    meta = {"method": "halfspace", "which": which}
    if norm == 0.0:
        meta["note"] = "normal vanishes after truncation"
        return McEstimate(0.0, 0.0, 0, engine.seed, meta)
    unit = d / norm

    def integrand(X):
        return -np.where(X @ a < h.r, measure.v(unit, X), 0.0)

    est = engine.integrate(integrand, measure, stream_id)
    est.meta.update(meta)
    return est


@dataclass
class SublevelReport:
    """Left-derivative surrogate of ``mu(r) = int_{g<r} |M g| dnu``."""

    value: McEstimate
    window_estimates: list
    richardson: list
    relaxation: McEstimate
    eps_grid: list
    spread: float
    stable: bool

    def to_dict(self):
        return {"value": self.value.to_dict(), "eps_grid": list(self.eps_grid),
                "window_estimates": [w.to_dict() for w in self.window_estimates],
                "richardson": [w.to_dict() for w in self.richardson],
                "relaxation": self.relaxation.to_dict(), "spread": self.spread,
                "stable": self.stable, "status": "stable" if self.stable else "unstable at this r"}


def _default_eps_grid(measure, g, engine, stream_id):
    X, _ = measure.draw(RngStream(engine.seed, stream_id).child(99).generator(), 4096)
    sd = float(np.std(g.value(X)))
    if not sd > 0:
        sd = 1.0
    return [sd * e for e in (0.2, 0.1, 0.05, 0.025)]


def sublevel_perimeter(measure, s, eps_grid=None, engine=None, stream_id=0):
    """Estimate ``mu'_-(r)`` by ``(mu(r) - mu(r - eps)) / eps`` on a decreasing grid.

    The window is half-open, ``r - eps <= g < r``.  Consecutive pairs are
    combined by linear Richardson extrapolation; the last one is the
    reported value and the relative spread of all of them decides
    stability.  The relaxation ``int |M (theta_eps o g)| dnu`` at the
    smallest ``eps`` is computed through the smoothed indicator's gradient.
    """
    engine = engine or McEngine()
    if eps_grid is None:
        eps_grid = _default_eps_grid(measure, s.g, engine, stream_id)
    eps = [float(e) for e in eps_grid]
    if len(eps) < 2 or any(b >= a for a, b in zip(eps, eps[1:])) or eps[-1] <= 0:
        raise ArgumentError("eps_grid must be positive and strictly decreasing")
    r_diag = measure.space.r_diag
    si = SmoothedIndicator(s.g, s.r, eps[-1])
    ne = len(eps)

    def integrand(X):
        gx = s.g.value(X)
        norm = np.linalg.norm(s.g.gradient(X) * r_diag, axis=1)
        W = np.stack([((gx >= s.r - e) & (gx < s.r)) * norm / e for e in eps], axis=1)
        R = np.stack([(eps[i] * W[:, i + 1] - eps[i + 1] * W[:, i]) / (eps[i] - eps[i + 1])
                      for i in range(ne - 1)], axis=1)
        relax = np.linalg.norm(si.gradient(X) * r_diag, axis=1)
        return np.concatenate([W, R, relax[:, None]], axis=1)

    cols = mc_integrate(integrand, measure, engine.n_samples, RngStream(engine.seed, stream_id),
                        workers=engine.workers, chunk_size=engine.chunk_size)
    windows, rich, relax = cols[:ne], cols[ne:2 * ne - 1], cols[-1]
    best = rich[-1]
    vals = [x.value for x in rich]
    spread = (max(vals) - min(vals)) / abs(best.value) if best.value != 0 else (0.0 if max(vals) == min(vals) else math.inf)
    stable = spread <= STABILITY_TOL
    best.meta.update({"method": "sublevel", "status": "stable" if stable else "unstable at this r"})
    return SublevelReport(best, windows, rich, relax, eps, float(spread), bool(stable))


def mu_curve(measure, g, r_grid, engine=None, stream_id=0):
    """``mu(r)`` for each ``r`` in the grid, plus paired adjacent increments."""
    engine = engine or McEngine()
    rs = [float(r) for r in r_grid]
    r_diag = measure.space.r_diag

    def integrand(X):
        gx = g.value(X)
        norm = np.linalg.norm(g.gradient(X) * r_diag, axis=1)
        M = np.stack([(gx < r) * norm for r in rs], axis=1)
        return np.concatenate([M, M[:, 1:] - M[:, :-1]], axis=1)

    cols = mc_integrate(integrand, measure, engine.n_samples, RngStream(engine.seed, stream_id),
                        workers=engine.workers, chunk_size=engine.chunk_size)
    return cols[: len(rs)], cols[len(rs):]


def lp_ball_functional(p, space, quad_points=256):
    """``F(x) = int_0^1 |x(xi)|^p dxi`` on the sine basis, with its gradient."""
    if not p > 2:
        raise ArgumentError("the L^p ball functional needs p > 2")
    if space.basis != "sine":
        raise ArgumentError("the L^p ball functional needs the sine basis")
    grid = SineGrid(space.dim, quad_points)
    p = float(p)

    def value(X):
        return grid.integrate(np.abs(grid.values(X)) ** p)

    def grad(X):
        S = grid.values(X)
        return grid.project(p * np.abs(S) ** (p - 1) * np.sign(S))

    def hess_vec(X, H):
        S = grid.values(X)
        return grid.project(p * (p - 1) * np.abs(S) ** (p - 2) * grid.values(H))

    return Potential(space.dim, value, grad, hess_vec, lower_bound=0.0, name=f"lp_ball({p:g})",
                     structure={"kind": "lp_ball", "p": p, "grid": grid})
