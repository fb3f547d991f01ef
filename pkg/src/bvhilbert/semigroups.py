"""Ornstein-Uhlenbeck type semigroups and the Dirichlet-form semigroup.

Gaussian kernels (Mehler, drifted OU, linear drift) are evaluated by tensor
Gauss-Hermite on the active coordinates of a cylindrical function.  The
Dirichlet-form semigroup of a weighted measure is the transition semigroup
of ``dX = (AX - grad U(X)) dt + dW`` and is simulated with the splitting
integrator in ``_langevin``.
"""
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from . import _langevin
from .exceptions import ArgumentError, CapabilityError
from .measures import WeightedGaussianMeasure
from .potentials import Potential
from .quadrature import McEstimate, RngStream, gh_expectation, mc_integrate, run_chunks
from .validation import check_points, check_positive

__all__ = [
    "GaussianKernel", "SemigroupSpec", "mehler_apply", "drifted_ou_apply", "dirichlet_em_apply",
    "em_gradient", "commutation_defect", "CommutationResult", "energy_bound_check",
    "coupled_difference", "appendix_mollified_potential", "path_estimate",
]

_SQRT_2PI = math.sqrt(2.0 * math.pi)
KINDS = ("classical_mehler", "drifted_ou", "dirichlet_em")


class GaussianKernel:
    """Transition ``T f(x) = E f(decay * x + std * Y)``, ``Y`` standard normal."""

    def __init__(self, decay, std, label="gaussian"):
        self.decay = np.asarray(decay, dtype=float)
        self.std = np.asarray(std, dtype=float)
        self.label = label

    @classmethod
    def mehler(cls, space, t):
        d = math.exp(-t)
        return cls(np.full(space.dim, d), math.sqrt(-math.expm1(-2 * t)) * space.r_diag, "mehler")

    @classmethod
    def drifted_ou(cls, space, t):
        lam = space.eigenvalues
        # stationary reading: variance lambda (1 - e^{-t/lambda}) keeps gamma invariant
        return cls(np.exp(-t / (2 * lam)), np.sqrt(lam * -np.expm1(-t / lam)), "drifted_ou")

    @classmethod
    def linear_drift(cls, rates, t):
        """Kernel of ``dX = -c X dt + dW`` with per-coordinate rates ``c > 0``."""
        c = np.asarray(rates, dtype=float)
        return cls(np.exp(-c * t), np.sqrt(-np.expm1(-2 * c * t) / (2 * c)), "linear_drift")

    def apply(self, f, x, order=32):
        X, single = check_points(x, self.decay.size)
        vals = gh_expectation(f.value, X * self.decay, self.std, f.active, order)
        return float(vals[0]) if single else vals

    def apply_mc(self, f, x, rng, n_inner=4096):
        """Inner Monte Carlo for functions with many active coordinates."""
        X, single = check_points(x, self.decay.size)
        gen = rng.generator() if isinstance(rng, RngStream) else rng
        out = []
        for row in X:
            Y = gen.standard_normal((n_inner, row.size))
            vals = f.value(self.decay * row + self.std * Y)
            out.append(McEstimate(float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(n_inner)),
                                  n_inner, getattr(rng, "seed", 0), {"kernel": self.label}))
        return out[0] if single else out

    def transport_gradient(self, f, x, order=32):
        """``T grad f``, the kernel applied to each partial derivative."""
        X, single = check_points(x, self.decay.size)
        G = np.zeros_like(X)
        idx = f.active
        if idx.size:
            G[:, idx] = gh_expectation(lambda P: f.gradient(P)[:, idx], X * self.decay, self.std, idx, order)
        return G[0] if single else G

    def gradient(self, f, x, order=32):
        """``grad T f = decay * T grad f`` (commutation for Gaussian kernels)."""
        return self.decay * self.transport_gradient(f, x, order)

    def kernel_gradient(self, f, x, order=32):
        """``grad T f`` by differentiating the kernel: ``(decay/std) E[f(.) Y]``."""
        X, single = check_points(x, self.decay.size)
        G = np.zeros_like(X)
        idx = f.active
        if idx.size:
            inner = gh_expectation(lambda P, Z: f.value(P)[:, None] * Z, X * self.decay, self.std,
                                   idx, order, with_nodes=True)
            G[:, idx] = (self.decay[idx] / self.std[idx]) * inner
        return G[0] if single else G

    def halfspace(self, a, r, x):
        """Closed form of ``T 1{<., a> < r}`` and its gradient."""
        X, _ = check_points(x, self.decay.size)
        a = np.asarray(a, dtype=float)
        tau = float(np.linalg.norm(self.std * a))
        zeta = (r - X @ (self.decay * a)) / tau
        dens = np.exp(-0.5 * zeta**2) / _SQRT_2PI
        return ndtr(zeta), -(dens / tau)[:, None] * (self.decay * a)


def mehler_apply(space, f, t, x, engine="gh", rng=None, n_inner=4096, order=32):
    """Classical Mehler semigroup ``E f(e^{-t} x + sqrt(1 - e^{-2t}) Y)``, ``Y ~ gamma``.

    The Gauss-Hermite engine returns floats; the Monte Carlo engine returns
    ``McEstimate`` records.  ``t = 0`` returns ``f(x)`` exactly.
    """
    if t < 0:
        raise ArgumentError("t must be nonnegative")
    if t == 0:
        return f.value(x)
    K = GaussianKernel.mehler(space, t)
    return _apply(K, f, x, engine, rng, n_inner, order)


def drifted_ou_apply(space, f, t, x, engine="gh", rng=None, n_inner=4096, order=32):
    """Transition semigroup of ``dX = AX dt + dW``: mean ``e^{-t/2 lambda} x``."""
    if t < 0:
        raise ArgumentError("t must be nonnegative")
    if t == 0:
        return f.value(x)
    K = GaussianKernel.drifted_ou(space, t)
    return _apply(K, f, x, engine, rng, n_inner, order)


def _apply(K, f, x, engine, rng, n_inner, order):
    if engine == "auto":
        engine = "gh" if f.active.size <= 4 else "mc"
    if engine == "gh":
        return K.apply(f, x, order)
    if engine == "mc":
        if rng is None:
            raise ArgumentError("the Monte Carlo engine needs an rng stream")
        return K.apply_mc(f, x, rng, n_inner)
    raise ArgumentError(f"unknown engine {engine!r}")


@dataclass
class SemigroupSpec:
    """Which semigroup, on which measure, with which path parameters."""

    kind: str
    measure: object
    dt: float = 1e-3
    burn_in: float = None
    paths: int = 4096

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ArgumentError(f"unknown semigroup kind {self.kind!r}")
        check_positive(self.dt, "dt")
        if self.paths < 2:
            raise ArgumentError("need at least two paths")
        if self.kind == "dirichlet_em" and not isinstance(self.measure, WeightedGaussianMeasure):
            raise ArgumentError("dirichlet_em needs a weighted Gaussian measure")

    @property
    def space(self):
        return self.measure.space

    @property
    def potential(self):
        return getattr(self.measure, "potential", None)

    def kernel(self, t):
        """Gaussian kernel at time ``t`` when one exists in closed form."""
        if self.kind == "classical_mehler":
            return GaussianKernel.mehler(self.space, t)
        if self.kind == "drifted_ou":
            return GaussianKernel.drifted_ou(self.space, t)
        structure = (self.potential.structure or {}) if self.potential is not None else {}
        if structure.get("kind") == "constant":
            return GaussianKernel.drifted_ou(self.space, t)
        if structure.get("kind") == "quadratic":
            rates = 1.0 / (2.0 * self.space.eigenvalues) + structure["diag"]
            return GaussianKernel.linear_drift(rates, t)
        raise CapabilityError("no closed-form kernel for this potential")

    def simulate(self, X0, t, gen):
        return _langevin.simulate(X0, t, self.dt, self.space.eigenvalues,
                                  self.potential.grad_fn, gen)


def path_estimate(per_path, seed, meta=None):
    """McEstimate from a list of per-path value arrays (merged exactly)."""
    chunks = [np.asarray(c, dtype=float) for c in per_path]
    n = sum(c.size for c in chunks)
    s1 = math.fsum(math.fsum(c) for c in chunks)
    mean = s1 / n
    s2 = math.fsum(math.fsum((c - mean) ** 2) for c in chunks)
    return McEstimate(mean, math.sqrt(s2 / (n - 1) / n), n, seed, dict(meta or {}))


def _spec_rng(rng):
    return rng if isinstance(rng, RngStream) else RngStream(int(rng))


def dirichlet_em_apply(spec, f, t, x, rng, paths=None, chunk_size=1 << 15):
    """``T(t) f(x) = E f(X_t^x)`` by simulated paths; one ``McEstimate`` per point."""
    if spec.kind != "dirichlet_em":
        raise ArgumentError("dirichlet_em_apply needs a dirichlet_em spec")
    check_positive(t, "t")
    X, single = check_points(x, spec.space.dim)
    rng = _spec_rng(rng)
    paths = paths or spec.paths
    out = []
    for i, row in enumerate(X):
        def work(c, size, gen, row=row):
            XT = spec.simulate(np.broadcast_to(row, (size, row.size)), t, gen)
            return f.value(XT)
        vals = run_chunks(paths, rng.child(i), work, chunk_size=chunk_size)
        out.append(path_estimate(vals, rng.seed, {"t": t, "dt": spec.dt}))
    return out[0] if single else out


def em_gradient(spec, f, X, t, gen, paths=1, h_scale=1e-3):
    """Full gradient of ``T(t) f`` at every row of ``X`` by common-random-number
    central differences; averages ``paths`` coupled paths per row.
    """
    X = np.asarray(X, dtype=float)
    n, dim = X.shape
    H = h_scale * (1.0 + np.abs(X))
    eye = np.eye(dim)
    plus = X[None, :, :] + H[None, :, :] * eye[:, None, :]
    minus = X[None, :, :] - H[None, :, :] * eye[:, None, :]
    X0 = np.concatenate([plus, minus], axis=0)
    X0 = np.repeat(X0, paths, axis=1)
    XT = spec.simulate(X0, t, gen)
    vals = f.value(XT.reshape(-1, dim)).reshape(2 * dim, n, paths).mean(axis=2)
    return ((vals[:dim] - vals[dim:]) / (2 * H.T)).T


@dataclass
class CommutationResult:
    """Both sides of the commutation identity and their difference."""

    lhs: McEstimate
    rhs: McEstimate
    defect: McEstimate
    per_probe: list = field(default_factory=list)


def _gl_nodes(t, n_nodes):
    x, w = np.polynomial.legendre.leggauss(n_nodes)
    return 0.5 * t * (x + 1.0), 0.5 * t * w


def _commutation_em_paths(spec, f, k, t, x, gen, size, nodes, weights):
    U = spec.potential
    dim = x.size
    a_k = 1.0 / (2.0 * spec.space.eigenvalues[k])
    e_k = np.eye(dim)[k]
    h = 1e-3 * (1.0 + abs(x[k]))
    X0 = np.stack([x + h * e_k, x - h * e_k, x])[:, None, :] * np.ones((1, size, 1))
    XT = spec.simulate(X0, t, gen)
    lhs = (f.value(XT[0]) - f.value(XT[1])) / (2 * h) - math.exp(-a_k * t) * f.gradient(XT[2])[:, k]
    rhs = np.zeros(size)
    for s, w in zip(nodes, weights):
        Y = spec.simulate(np.broadcast_to(x, (size, dim)), t - s, gen)
        direction = U.hessian_vec(Y, np.broadcast_to(e_k, Y.shape))
        norm = np.linalg.norm(direction, axis=1)
        unit = np.divide(direction, norm[:, None], out=np.zeros_like(direction), where=norm[:, None] > 0)
        delta = 1e-3 * (1.0 + np.linalg.norm(Y, axis=1))
        Z = spec.simulate(np.stack([Y + delta[:, None] * unit, Y - delta[:, None] * unit]), s, gen)
        deriv = norm * (f.value(Z[0]) - f.value(Z[1])) / (2 * delta)
        rhs -= w * math.exp(-a_k * (t - s)) * deriv
    return lhs, rhs


def _commutation_gh(spec, f, k, t, x, nodes, weights, order):
    U = spec.potential
    a_k = 1.0 / (2.0 * spec.space.eigenvalues[k])
    K_t = spec.kernel(t)
    X = x[None, :]
    # score route for d/dx_k T f, commutation-free
    lhs = (K_t.kernel_gradient(f, X, order)[0, k]
           - math.exp(-a_k * t) * K_t.transport_gradient(f, X, order)[0, k])
    rhs = 0.0
    e_k = np.eye(x.size)[k]
    for s, w in zip(nodes, weights):
        K_out, K_in = spec.kernel(t - s), spec.kernel(s)

        def integrand(Y, K_in=K_in):
            D = U.hessian_vec(Y, np.broadcast_to(e_k, Y.shape))
            return np.sum(D * K_in.kernel_gradient(f, Y, order), axis=1)

        val = gh_expectation(integrand, X * K_out.decay, K_out.std, f.active, order)[0]
        rhs -= w * math.exp(-a_k * (t - s)) * val
    return float(lhs), float(rhs)


def commutation_defect(spec, f, k, t, x, rng=0, engine="em", paths=None, n_nodes=8, order=24,
                       chunk_size=1 << 14):
    """Compare ``d_k T(t) f - e^{-t/2 lambda_k} T(t) d_k f`` with the curvature integral
    ``-int_0^t e^{-(t-s)/2 lambda_k} T(t-s) <D^2U e_k, grad T(s) f> ds``.

    ``x`` holds one or more probe points; the defect is averaged over them.
    The ``"em"`` engine couples every path quantity through shared noise so
    per-path differences carry a paired standard error.  The ``"gh"`` engine
    needs a closed-form kernel and is deterministic (zero standard error).
    """
    if spec.kind != "dirichlet_em":
        raise ArgumentError("the commutation formula concerns the dirichlet_em semigroup")
    if not spec.potential.has_hessian:
        raise CapabilityError("the potential needs a Hessian-vector product")
    check_positive(t, "t")
    X, _ = check_points(x, spec.space.dim)
    if not 0 <= k < spec.space.dim:
        raise ArgumentError("direction index out of range")
    rng = _spec_rng(rng)
    nodes, weights = _gl_nodes(t, n_nodes)
    probes = []
    for i, row in enumerate(X):
        if engine == "gh":
            l, r = _commutation_gh(spec, f, k, t, row, nodes, weights, order)
            zero = {"engine": "gh"}
            probes.append((McEstimate(l, 0.0, 1, rng.seed, zero), McEstimate(r, 0.0, 1, rng.seed, zero),
                           McEstimate(l - r, 0.0, 1, rng.seed, zero)))
            continue
        if engine != "em":
            raise ArgumentError(f"unknown engine {engine!r}")

        def work(c, size, gen, row=row):
            return _commutation_em_paths(spec, f, k, t, row, gen, size, nodes, weights)

        chunks = run_chunks(paths or spec.paths, rng.child(i), work, chunk_size=chunk_size)
        meta = {"engine": "em", "dt": spec.dt, "nodes": n_nodes}
        probes.append((path_estimate([c[0] for c in chunks], rng.seed, meta),
                       path_estimate([c[1] for c in chunks], rng.seed, meta),
                       path_estimate([c[0] - c[1] for c in chunks], rng.seed, meta)))

    def average(j):
        vals = [p[j] for p in probes]
        m = len(vals)
        return McEstimate(math.fsum(v.value for v in vals) / m,
                          math.sqrt(math.fsum(v.stderr**2 for v in vals)) / m,
                          sum(v.n_samples for v in vals), rng.seed, dict(vals[0].meta))

    return CommutationResult(average(0), average(1), average(2), probes)


def energy_bound_check(spec, f, t, rng=0, n_outer=1 << 13, inner_paths=2, chunk_size=1 << 11):
    """Estimate ``int |grad T(t) f|^2 dnu`` against ``|f|^2_{L^2(nu)} / (t e)``.

    Each outer draw ``x ~ nu`` carries two independent gradient estimates;
    their inner product is unbiased for ``|grad T(t) f(x)|^2``.
    """
    check_positive(t, "t")
    rng = _spec_rng(rng)

    def integrand(X, gen):
        g1 = em_gradient(spec, f, X, t, gen, inner_paths)
        g2 = em_gradient(spec, f, X, t, gen, inner_paths)
        return np.sum(g1 * g2, axis=1)

    lhs = mc_integrate(integrand, spec.measure, n_outer, rng.child(1), pass_rng=True,
                       chunk_size=chunk_size)
    norm = mc_integrate(lambda X: f.value(X) ** 2, spec.measure, n_outer * 8, rng.child(2))
    bound = norm.scaled(1.0 / (t * math.e))
    slack = 4.0 * math.hypot(lhs.stderr, bound.stderr)
    return {"t": t, "gradient_energy": lhs, "bound": bound,
            "passed": bool(lhs.value <= bound.value + slack), "slack": slack}


def coupled_difference(spec, f, x, y, t, rng=0, paths=None):
    """``T(t) f(x) - T(t) f(y)`` with both paths driven by the same noise."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    rng = _spec_rng(rng)

    def work(c, size, gen):
        Z = spec.simulate(np.stack([np.broadcast_to(x, (size, x.size)), np.broadcast_to(y, (size, y.size))]),
                          t, gen)
        return f.value(Z[0]) - f.value(Z[1])

    return path_estimate(run_chunks(paths or spec.paths, rng, work), rng.seed, {"t": t})


def _bump_nodes(n, count, seed):
    """Antithetic nodes from the density ``exp(-1/(1-|y|^2))`` on the unit ball."""
    gen = RngStream(seed, 0xB0B).generator()
    out = []
    while sum(len(o) for o in out) < count:
        Y = gen.standard_normal((4 * count, n))
        Y *= (gen.random(4 * count) ** (1.0 / n) / np.linalg.norm(Y, axis=1))[:, None]
        r2 = np.sum(Y * Y, axis=1)
        keep = gen.random(4 * count) < np.exp(1.0 - 1.0 / (1.0 - r2))
        out.append(Y[keep])
    Y = np.concatenate(out)[:count]
    return np.concatenate([Y, -Y])


def appendix_mollified_potential(U, n, eps, n_nodes=64, seed=0):
    """``x -> mean_j U(P_n x - eps y_j)`` over fixed antithetic bump nodes.

    An average of convex functions with ``L``-Lipschitz gradients, so both
    properties carry over.  For a quadratic ``U`` the antithetic pairs make
    the result ``U o P_n`` plus a constant.
    """
    if not 1 <= n <= U.dim:
        raise ArgumentError("projection rank out of range")
    check_positive(eps, "eps")
    nodes = _bump_nodes(n, n_nodes, seed)
    shifts = np.zeros((nodes.shape[0], U.dim))
    shifts[:, :n] = eps * nodes
    J = shifts.shape[0]

    def shifted(X):
        P = X.copy()
        P[:, n:] = 0.0
        return (P[:, None, :] - shifts[None, :, :]).reshape(-1, U.dim)

    def value(X):
        return U.value_fn(shifted(X)).reshape(X.shape[0], J).mean(axis=1)

    def grad(X):
        G = U.grad_fn(shifted(X)).reshape(X.shape[0], J, U.dim).mean(axis=1)
        G[:, n:] = 0.0
        return G

    hv = None
    if U.has_hessian:
        def hv(X, H):
            Hp = np.array(H, dtype=float)
            Hp[:, n:] = 0.0
            out = U.hess_vec_fn(shifted(X), np.repeat(Hp, J, axis=0)).reshape(X.shape[0], J, U.dim).mean(axis=1)
            out[:, n:] = 0.0
            return out

    return Potential(U.dim, value, grad, hv, lip_grad=U.lip_grad, convex=U.convex,
                     lower_bound=U.lower_bound, name=f"{U.name}_mollified",
                     structure={"kind": "mollified", "radius": eps, "nodes": J})
