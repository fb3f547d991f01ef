"""Total-variation functionals of a candidate ``u``.

Three routes:

* ``direct_variation`` integrates ``|R grad u|`` (or ``|grad u|``,
  ``|<R grad u, z>|``) when ``u`` has a known Sobolev gradient;
* ``sup_variation`` maximises ``int u M*F dnu`` over a parametric family of
  fields with ``|F| < 1`` built in, giving a lower bound;
* ``semigroup_variation`` follows ``t -> int |M T(t) u| dnu`` to ``t -> 0``.
"""
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ArgumentError, CapabilityError, IntegrityError
from .quadrature import McEngine, McEstimate, RngStream, mc_integrate
from .semigroups import em_gradient
from .validation import check_points, check_vector

__all__ = [
    "BvCandidate", "AscentConfig", "FieldFamily", "direct_variation", "sup_variation",
    "semigroup_variation", "SemigroupCurve", "variation_inequalities_report", "extrapolate_limit",
]


class BvCandidate:
    """A function ``u`` whose variation is to be measured.

    Build with ``from_cyl``, ``indicator``, ``halfspace`` or ``smoothed``.
    ``gradient`` is ``None`` when ``u`` has no Sobolev gradient.
    """

    def __init__(self, value_fn, gradient_fn=None, kind="custom", active=None, halfspace_data=None,
                 scale=1.0, label=None):
        self._value = value_fn
        self._gradient = gradient_fn
        self.kind = kind
        self.active = None if active is None else np.asarray(active, dtype=int)
        self.halfspace_data = halfspace_data
        self.scale = float(scale)
        self.label = label or kind

    @classmethod
    def from_cyl(cls, f):
        return cls(f.value, f.gradient, "cyl", f.active, label=f.name)

    @classmethod
    def indicator(cls, g, r, active=None):
        """``1{g < r}`` for any ``g`` with a ``value`` method."""
        act = active if active is not None else getattr(g, "active", None)
        return cls(lambda X: (g.value(X) < r).astype(float), None, "indicator", act)

    @classmethod
    def halfspace(cls, a, r):
        a = np.asarray(a, dtype=float)
        if not np.linalg.norm(a) > 0:
            raise ArgumentError("halfspace normal must be nonzero")
        return cls(lambda X: (X @ a < r).astype(float), None, "halfspace", np.flatnonzero(a),
                   halfspace_data=(a, float(r)))

    @classmethod
    def smoothed(cls, si):
        return cls(si.value, si.gradient, "smoothed", getattr(si.g, "active", None))

    @property
    def has_gradient(self):
        return self._gradient is not None

    def value(self, x):
        X, single = check_points(x)
        vals = self.scale * np.asarray(self._value(X), dtype=float)
        return float(vals[0]) if single else vals

    def gradient(self, x):
        if self._gradient is None:
            raise CapabilityError(f"{self.label} has no Sobolev gradient")
        X, single = check_points(x)
        G = self.scale * np.asarray(self._gradient(X), dtype=float)
        return G[0] if single else G

    def scaled(self, c):
        out = BvCandidate(self._value, self._gradient, self.kind, self.active, self.halfspace_data,
                          self.scale * c, self.label)
        return out


def _engine(engine):
    return engine if engine is not None else McEngine()


def direct_variation(measure, u, which="M", z=None, engine=None, stream_id=0):
    """``int |R grad u| dnu`` (``"M"``), ``int |grad u| dnu`` (``"nabla"``) or
    ``int |<R grad u, z>| dnu`` (``"Vz"``)."""
    engine = _engine(engine)
    r = measure.space.r_diag
    if which == "M":
        fn = lambda X: np.linalg.norm(u.gradient(X) * r, axis=1)
    elif which == "nabla":
        fn = lambda X: np.linalg.norm(u.gradient(X), axis=1)
    elif which == "Vz":
        zz = check_vector(z, measure.dim)
        fn = lambda X: np.abs((u.gradient(X) * r) @ zz)
    else:
        raise ArgumentError(f"unknown variation kind {which!r}")
    est = engine.integrate(fn, measure, stream_id)
    est.meta["method"] = "direct"
    return est


# --------------------------------------------------------------------------
# parametric test fields


class FieldFamily:
    """Fields ``F_theta = sum_j N(A(x))_j d_j`` with ``N(A) = A / sqrt(1 + |A|^2)``.

    ``A(x) = W feat(x) + b`` where ``feat`` holds the whitened active
    coordinates ``y``, their squares and ``|y|^2``.  Because
    ``|N(A)| < 1`` and the directions ``d_j`` are orthonormal,
    ``|F(x)| < 1`` everywhere.  ``c_dirs`` are the directions the adjoint
    differentiates along and ``v_dirs`` those entering the logarithmic
    derivative, so the same code evaluates ``M*F``, ``nabla* F`` and (with
    one direction) ``-d*_z phi``.
    """

    def __init__(self, space, active, v_dirs, c_dirs):
        self.active = np.asarray(active, dtype=int)
        self.whiten = 1.0 / space.r_diag[self.active]
        self.v_dirs = np.atleast_2d(v_dirs)
        self.c_dirs = np.atleast_2d(c_dirs)
        self.q = self.v_dirs.shape[0]
        self.m = self.active.size
        self.p = 2 * self.m + 1

    @property
    def n_params(self):
        return self.q * self.p + self.q

    def unpack(self, theta):
        W = theta[: self.q * self.p].reshape(self.q, self.p)
        return W, theta[self.q * self.p:]

    def prepare(self, measure, X):
        """Per-batch quantities independent of the parameters."""
        Y = X[:, self.active] * self.whiten
        feat = np.concatenate([Y, Y * Y, np.sum(Y * Y, axis=1, keepdims=True)], axis=1)
        n = X.shape[0]
        # d feat / d x_active, shape (n, p, m)
        dfeat = np.zeros((n, self.p, self.m))
        idx = np.arange(self.m)
        dfeat[:, idx, idx] = self.whiten
        dfeat[:, self.m + idx, idx] = 2.0 * Y * self.whiten
        dfeat[:, -1, :] = 2.0 * Y * self.whiten
        Gdir = np.einsum("npm,jm->njp", dfeat, self.c_dirs[:, self.active])
        V = measure.v_many(self.v_dirs, X)
        return feat, Gdir, V

    def evaluate(self, theta, batch, coef=None):
        """Adjoint values per sample, and ``sum_n coef_n * grad_theta`` when ``coef`` is given."""
        feat, Gdir, V = batch
        W, b = self.unpack(theta)
        A = feat @ W.T + b
        s = 1.0 / np.sqrt(1.0 + np.sum(A * A, axis=1))
        Omega = np.einsum("ip,njp->nji", W, Gdir)  # Omega[n, j, i] = (W g_j)_i = P[n, i, j]
        trP = np.einsum("njj->n", Omega)
        APA = np.einsum("ni,nji,nj->n", A, Omega, A)
        AV = np.sum(A * V, axis=1)
        vals = s * AV - (s * trP - s**3 * APA)
        if coef is None:
            return vals
        s3 = s**3
        PA = np.einsum("nji,nj->ni", Omega, A)
        PtA = np.einsum("nji,ni->nj", Omega, A)
        gA = (s[:, None] * V - (s3 * AV)[:, None] * A + (s3 * trP)[:, None] * A
              - (3.0 * s**5 * APA)[:, None] * A + s3[:, None] * (PA + PtA))
        gA *= coef[:, None]
        grad_b = gA.sum(axis=0)
        # d/dW of -div: -(J Gamma) with J = s I - s^3 A A^T
        AG = np.einsum("ni,nip->np", A, Gdir)
        JG = s[:, None, None] * Gdir - s3[:, None, None] * A[:, :, None] * AG[:, None, :]
        grad_W = gA.T @ feat - np.einsum("n,nip->ip", coef, JG)
        return vals, np.concatenate([grad_W.ravel(), grad_b])

    def field_value(self, theta, X):
        """``N(A(x))``, the coefficients along the directions."""
        W, b = self.unpack(theta)
        Y = X[:, self.active] * self.whiten
        feat = np.concatenate([Y, Y * Y, np.sum(Y * Y, axis=1, keepdims=True)], axis=1)
        A = feat @ W.T + b
        return A / np.sqrt(1.0 + np.sum(A * A, axis=1))[:, None]


@dataclass(frozen=True)
class AscentConfig:
    steps: int = 500
    restarts: int = 5
    lr: float = 0.05
    batch: int = 4096
    select_samples: int = 1 << 16
    init_scale: float = 0.5
    max_active: int = 8
    directions: str = "basis"


def _candidate_active(u, dim, max_active):
    act = u.active if u.active is not None else np.arange(dim)
    act = np.asarray(act, dtype=int)
    if act.size == 0:
        return act
    return act[:max_active]


def _family(measure, u, which, z, cfg):
    space = measure.space
    dim = space.dim
    active = _candidate_active(u, dim, cfg.max_active)
    if which == "Vz":
        zz = check_vector(z, dim)
        if active.size == 0:
            active = np.flatnonzero(zz)[: cfg.max_active]
        return FieldFamily(space, active, zz[None, :], (space.r_diag * zz)[None, :])
    if active.size == 0:
        return None
    dirs = np.eye(dim)[active]
    if cfg.directions == "rotated" and active.size > 1:
        rng = np.random.default_rng(12345)
        Qm, _ = np.linalg.qr(rng.standard_normal((active.size, active.size)))
        dirs = Qm.T @ dirs
    elif cfg.directions != "basis" and cfg.directions != "rotated":
        raise ArgumentError(f"unknown direction set {cfg.directions!r}")
    if which == "V":
        return FieldFamily(space, active, dirs, dirs * space.r_diag)
    if which == "V0":
        return FieldFamily(space, active, dirs / space.r_diag, dirs)
    raise ArgumentError(f"unknown variation kind {which!r}")


def _batch_weights(measure, gen, n):
    X, logw = measure.draw(gen, n)
    if logw is None:
        return X, np.full(n, 1.0 / n)
    w = np.exp(logw - logw.max())
    return X, w / w.sum()


def _adam(family, measure, u, theta0, cfg, root):
    theta = theta0.copy()
    m1 = np.zeros_like(theta)
    m2 = np.zeros_like(theta)
    b1, b2, eps = 0.9, 0.999, 1e-8
    history = []
    for step in range(1, cfg.steps + 1):
        gen = root.child(step).generator()
        X, w = _batch_weights(measure, gen, cfg.batch)
        coef = w * u.value(X)
        vals, g = family.evaluate(theta, family.prepare(measure, X), coef)
        obj = float(coef @ vals)
        if not (np.isfinite(obj) and np.all(np.isfinite(g))):
            raise IntegrityError("non-finite ascent objective")
        m1 = b1 * m1 + (1 - b1) * g
        m2 = b2 * m2 + (1 - b2) * g * g
        mh = m1 / (1 - b1**step)
        vh = m2 / (1 - b2**step)
        theta = theta + cfg.lr * mh / (np.sqrt(vh) + eps)
        if step % 10 == 0 or step == cfg.steps:
            history.append((step, obj))
    return theta, history


def sup_variation(measure, u, which="V", z=None, config=None, engine=None, stream_id=0):
    """Lower bound for ``V(u)`` (``"V"``), ``V_0(u)`` (``"V0"``) or ``V_z(u)`` (``"Vz"``).

    Runs ``restarts`` Adam ascents on fresh mini-batches, keeps the
    parameters that score best on a common selection sample, and reports
    the objective re-estimated on an independent final sample.  Returns the
    estimate and a trace dictionary.
    """
    cfg = config or AscentConfig()
    engine = _engine(engine)
    family = _family(measure, u, which, z, cfg)
    meta = {"method": "sup", "which": which}
    if family is None:
        return McEstimate(0.0, 0.0, engine.n_samples, engine.seed, meta), {"restarts": []}
    root = RngStream(engine.seed, stream_id)
    init_gen = root.child(0).generator()
    sel_gen = root.child(2).generator()
    Xs, ws = _batch_weights(measure, sel_gen, cfg.select_samples)
    sel_batch = family.prepare(measure, Xs)
    sel_coef = ws * u.value(Xs)

    trace = {"restarts": []}
    best = None
    for rho in range(cfg.restarts):
        theta0 = cfg.init_scale * init_gen.standard_normal(family.n_params)
        theta, history = _adam(family, measure, u, theta0, cfg, root.child(1).child(rho))
        score = float(sel_coef @ family.evaluate(theta, sel_batch))
        trace["restarts"].append({"restart": rho, "history": history, "selection": score})
        if best is None or score > best[0]:
            best = (score, theta)
    theta = best[1]

    def integrand(X):
        return u.value(X) * family.evaluate(theta, family.prepare(measure, X))

    est = mc_integrate(integrand, measure, engine.n_samples, root.child(3), workers=engine.workers,
                       chunk_size=engine.chunk_size)
    est.meta.update(meta)
    trace["theta"] = theta
    trace["family"] = family
    return est, trace


# --------------------------------------------------------------------------
# semigroup route


@dataclass
class SemigroupCurve:
    t_grid: list
    values: list
    limit: float
    spread: float
    stable: bool
    monotone: bool
    flags: list = field(default_factory=list)

    def to_dict(self):
        return {"t_grid": list(self.t_grid), "values": [v.to_dict() for v in self.values],
                "limit": self.limit, "spread": self.spread, "stable": self.stable,
                "monotone": self.monotone, "flags": list(self.flags)}


def extrapolate_limit(t, J, tol=0.02):
    """Value at ``t = 0`` from the smallest-``t`` samples.

    The limit is the quadratic through the last three points; its
    reliability is the relative spread of the linear extrapolants of the
    last four consecutive pairs.
    """
    t = np.asarray(t, dtype=float)
    J = np.asarray(J, dtype=float)
    order = np.argsort(t)[::-1]
    t, J = t[order], J[order]
    if t.size < 4:
        raise ArgumentError("extrapolation needs at least four grid points")
    limit = float(np.polyval(np.polyfit(t[-3:], J[-3:], 2), 0.0))
    lin = [(J[i + 1] * t[i] - J[i] * t[i + 1]) / (t[i] - t[i + 1]) for i in range(t.size - 4, t.size - 1)]
    scale = max(abs(limit), 1e-300)
    spread = float((max(lin) - min(lin)) / scale)
    if limit == 0 and max(lin) == min(lin):
        spread = 0.0
    return limit, spread, spread <= tol


def _semigroup_gradient(spec, u, t, X, gen, inner_paths, order):
    if u.kind == "halfspace" or u.has_gradient or u.active is not None:
        try:
            K = spec.kernel(t)
        except CapabilityError:
            K = None
        if K is not None:
            if u.kind == "halfspace":
                a, r = u.halfspace_data
                return u.scale * K.halfspace(a, r, X)[1]
            if u.active is None or u.active.size > 4:
                raise CapabilityError("Gauss-Hermite route limited to 4 active coordinates")
            if u.has_gradient:
                return K.gradient(u, X, order)
            return K.kernel_gradient(u, X, order)
    if spec.kind == "dirichlet_em":
        return em_gradient(spec, u, X, t, gen, inner_paths)
    raise CapabilityError("no gradient route for this candidate and semigroup")


def semigroup_variation(spec, u, t_grid, which="M", engine=None, stream_id=0, inner_paths=8,
                        order=32, tol=0.02):
    """``J(t) = int |M T(t) u| dnu`` on a decreasing grid and its ``t -> 0`` limit.

    All grid values share the outer draws, so adjacent differences carry
    paired errors.  ``which="nabla"`` drops the ``R`` scaling (for ``V_0``).
    """
    engine = _engine(engine)
    t_grid = [float(t) for t in t_grid]
    if len(t_grid) < 4 or any(b >= a for a, b in zip(t_grid, t_grid[1:])) or t_grid[-1] <= 0:
        raise ArgumentError("t_grid must be positive, strictly decreasing, with >= 4 points")
    if which not in ("M", "nabla"):
        raise ArgumentError(f"unknown variation kind {which!r}")
    scale = spec.space.r_diag if which == "M" else np.ones(spec.space.dim)
    nt = len(t_grid)

    def integrand(X, gen):
        cols = [np.linalg.norm(_semigroup_gradient(spec, u, t, X, gen, inner_paths, order) * scale, axis=1)
                for t in t_grid]
        Jm = np.stack(cols, axis=1)
        # adjacent differences J(t_{i+1}) - J(t_i) for paired monotonicity checks
        return np.concatenate([Jm, Jm[:, 1:] - Jm[:, :-1]], axis=1)

    ests = mc_integrate(integrand, spec.measure, engine.n_samples, RngStream(engine.seed, stream_id),
                        workers=engine.workers, chunk_size=engine.chunk_size, pass_rng=True)
    values, diffs = ests[:nt], ests[nt:]
    flags = []
    monotone = True
    for i, d in enumerate(diffs):
        if d.value < -4.0 * d.stderr - 1e-12 * max(1.0, abs(values[i].value)):
            monotone = False
            flags.append(f"increase between t={t_grid[i]:g} and t={t_grid[i + 1]:g}")
    limit, spread, stable = extrapolate_limit(t_grid, [v.value for v in values], tol)
    if not stable:
        flags.append("no stable limit at this resolution")
    if spec.kind == "dirichlet_em" and not u.kind == "halfspace":
        flags.append("inner path noise biases |gradient| upward")
    return SemigroupCurve(t_grid, values, limit, spread, stable, monotone, flags)


# --------------------------------------------------------------------------
# inequality report


def variation_inequalities_report(measure, u, z_set, engine=None, stream_id=0, n_sigma=4.0):
    """Check ``V_z <= V |z|`` for each ``z`` and ``V <= V_0 |R|`` on shared draws.

    Sobolev candidates use the direct integrands; halfspace indicators use
    ``V_z = |int_H v_z|``, ``V = -int_H v_{Ra} / |Ra|`` and
    ``V_0 = -int_H v_{R^{-1}a} / |a|``.  Each inequality is judged on the paired
    difference of the two sides.
    """
    engine = _engine(engine)
    Z = np.atleast_2d(np.asarray(z_set, dtype=float))
    r = measure.space.r_diag
    rnorm = measure.space.r_norm
    nz = Z.shape[0]

    if u.has_gradient:
        def integrand(X):
            G = u.gradient(X)
            MG = G * r
            Vz = np.abs(MG @ Z.T)
            V = np.linalg.norm(MG, axis=1)
            V0 = np.linalg.norm(G, axis=1)
            return np.concatenate([Vz, V[:, None], V0[:, None]], axis=1)
        absolute = None
    elif u.kind == "halfspace":
        a, rr = u.halfspace_data
        Ra = r * a
        dirs = np.vstack([Z, -Ra[None, :] / np.linalg.norm(Ra), -(a / r)[None, :] / np.linalg.norm(a)])

        def integrand(X):
            ind = u.value(X)
            return ind[:, None] * measure.v_many(dirs, X)
        absolute = nz
    else:
        raise CapabilityError("report needs a Sobolev candidate or a halfspace indicator")

    cols = mc_integrate(integrand, measure, engine.n_samples, RngStream(engine.seed, stream_id),
                        workers=engine.workers, chunk_size=engine.chunk_size)
    if absolute is not None:
        cols = [McEstimate(abs(c.value), c.stderr, c.n_samples, c.seed, c.meta) if j < absolute else c
                for j, c in enumerate(cols)]
    V, V0 = cols[nz], cols[nz + 1]
    rows = []
    for j in range(nz):
        zn = float(np.linalg.norm(Z[j]))
        lhs, rhs = cols[j], V.scaled(zn)
        # the two sides share draws; the plain sum of errors bounds the paired one
        slack = n_sigma * (lhs.stderr + rhs.stderr)
        rows.append({"kind": "Vz<=V|z|", "z": Z[j].tolist(), "lhs": lhs.value, "rhs": rhs.value,
                     "slack": slack, "passed": bool(lhs.value <= rhs.value + slack)})
    rhs = V0.scaled(rnorm)
    slack = n_sigma * (V.stderr + rhs.stderr)
    rows.append({"kind": "V<=V0|R|", "lhs": V.value, "rhs": rhs.value, "slack": slack,
                 "passed": bool(V.value <= rhs.value + slack)})
    return {"V": V, "V0": V0, "Vz": cols[:nz], "rows": rows, "passed": all(r_["passed"] for r_ in rows)}
