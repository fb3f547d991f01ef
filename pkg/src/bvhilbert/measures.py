"""The three measure families with exact samplers and logarithmic derivatives.

Every measure exposes ``space``, ``draw(generator, n) -> (X, log_weights)``,
``v(z, X)`` and ``v_many(Z, X)``.  ``log_weights`` is ``None`` for exact
samplers; weighted measures sampled by importance return unnormalised
log-weights against the Gaussian proposal.
"""
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from . import _langevin
from .calculus import SpectralSpace
from .exceptions import ArgumentError
from .quadrature import RngStream, McEstimate, mc_integrate
from .validation import check_points, check_vector, maybe_scalar

__all__ = ["GaussianMeasure", "WeightedGaussianMeasure", "ProductMeasure", "Sample", "effective_sample_size"]

ESS_WARN_FRACTION = 0.1


def effective_sample_size(log_weights):
    w = np.exp(log_weights - np.max(log_weights))
    return float(w.sum() ** 2 / (w * w).sum())


@dataclass
class Sample:
    """Draws from a measure; ``weights`` are self-normalised (or ``None``)."""

    points: np.ndarray
    weights: object = None
    meta: dict = field(default_factory=dict)

    def mean(self, values):
        values = np.asarray(values, dtype=float)
        if self.weights is None:
            return values.mean(axis=0)
        return np.tensordot(self.weights, values, axes=1)


class _Measure:
    kind = "measure"

    @property
    def dim(self):
        return self.space.dim

    def sample(self, rng, count):
        """``count`` draws from ``rng`` (an ``RngStream`` or a numpy Generator)."""
        if count < 1:
            raise ArgumentError("count must be at least 1")
        gen = rng.generator() if isinstance(rng, RngStream) else rng
        X, logw = self.draw(gen, count)
        meta = {"measure": self.kind, "mode": getattr(self, "mode", "exact")}
        if logw is None:
            return Sample(X, None, meta)
        ess = effective_sample_size(logw)
        meta["ess"] = ess
        if ess < ESS_WARN_FRACTION * count:
            meta["warnings"] = ["importance weights degenerate: ESS below 10% of draws"]
        w = np.exp(logw - logw.max())
        return Sample(X, w / w.sum(), meta)

    def v(self, z, x):
        X, single = check_points(x, self.dim)
        z = check_vector(z, self.dim)
        return maybe_scalar(self.v_many(z[None, :], X)[:, 0], single)

    def covariance_diag(self):
        return self.space.eigenvalues.copy()


class GaussianMeasure(_Measure):
    """Centred Gaussian with covariance ``diag(lambda)``.

    ``v_z(x) = sum_k x_k z_k / sqrt(lambda_k)``.
    """

    kind = "gaussian"

    def __init__(self, space):
        self.space = space

    def draw(self, gen, n):
        return gen.standard_normal((n, self.dim)) * self.space.r_diag, None

    def v_many(self, Z, X):
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        return X @ (Z / self.space.r_diag).T


class WeightedGaussianMeasure(_Measure):
    """``nu = e^{-2U} gamma / Z`` for a convex potential ``U``.

    Parameters
    ----------
    base : GaussianMeasure
    potential : Potential
    mode : {"importance", "chain"}
        ``"importance"`` draws from ``base`` with weights ``e^{-2U}``;
        ``"chain"`` runs independent Langevin chains started from ``base``
        for ``burn_in`` time units with step ``dt``.
    """

    kind = "weighted_gaussian"

    def __init__(self, base, potential, mode="importance", dt=1e-3, burn_in=None):
        if potential.dim != base.dim:
            raise ArgumentError("potential and base measure disagree in dimension")
        if mode not in ("importance", "chain"):
            raise ArgumentError(f"unknown sampling mode {mode!r}")
        if not np.isfinite(potential.lower_bound):
            raise ArgumentError("the potential must be bounded below")
        self.base = base
        self.space = base.space
        self.potential = potential
        self.mode = mode
        self.dt = float(dt)
        self.burn_in = _langevin.burn_in_time(self.space.eigenvalues) if burn_in is None else float(burn_in)
        self._log_norm = {}

    def draw(self, gen, n):
        X, _ = self.base.draw(gen, n)
        if self.mode == "chain":
            X = _langevin.simulate(X, self.burn_in, self.dt, self.space.eigenvalues,
                                   self.potential.grad_fn, gen)
            return X, None
        return X, -2.0 * (self.potential.value_fn(X) - self.potential.lower_bound)

    def v_many(self, Z, X):
        # v_z = <x, R^{-1} z> + 2 <grad U, R z>; the plus sign is what makes
        # int d_z phi dnu = int phi v_z dnu hold for e^{-2U} weights.
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        r = self.space.r_diag
        return X @ (Z / r).T + 2.0 * self.potential.grad_fn(X) @ (Z * r).T

    def log_normalizer(self, n=1 << 18, seed=0):
        """``log int e^{-2U} dgamma`` as an estimate, cached per ``(n, seed)``."""
        key = (n, seed)
        if key not in self._log_norm:
            U = self.potential
            est = mc_integrate(lambda X: np.exp(-2.0 * (U.value_fn(X) - U.lower_bound)),
                               self.base, n, RngStream(seed, 0x10C))
            val = math.log(est.value) - 2.0 * U.lower_bound
            self._log_norm[key] = McEstimate(val, est.stderr / est.value, n, seed,
                                             {"quantity": "log normalizer"})
        return self._log_norm[key]

    def covariance_diag(self, n=1 << 18, seed=0):
        """Per-coordinate second moments under ``nu`` (estimated)."""
        ests = mc_integrate(lambda X: X * X, self, n, RngStream(seed, 0xC0F))
        return np.array([e.value for e in ests])


class ProductMeasure(_Measure):
    """Product of one-dimensional laws ``a mu^{-1/2m} exp(-|xi|^{2m} / (2 m mu))``.

    The coordinate variances are ``b_1 mu_h^{1/m}``; they define the
    attached space, so ``R`` is the square root of this covariance.  The
    logarithmic derivative is obtained coordinatewise from the density:
    ``v_z(x) = sum_h sqrt(lambda_h) z_h sign(x_h) |x_h|^{2m-1} / mu_h``.
    """

    kind = "product"

    def __init__(self, m, mus, basis=None):
        if not m >= 1:
            raise ArgumentError("the exponent m must be at least 1")
        mus = np.asarray(mus, dtype=float).ravel()
        if mus.size == 0 or np.any(mus <= 0) or not np.all(np.isfinite(mus)):
            raise ArgumentError("the scales mu_h must be finite and positive")
        self.m = float(m)
        self.mus = mus
        self.mus.setflags(write=False)
        self.space = SpectralSpace(self.moment_b(1) * mus ** (1.0 / self.m), basis=basis)

    @property
    def a_const(self):
        m = self.m
        return (2 * m) ** (1 - 1 / (2 * m)) / (2 * math.gamma(1 / (2 * m)))

    def moment_b(self, N):
        """``b_N = (2m)^{N/m} Gamma((2N+1)/(2m)) / Gamma(1/(2m))``."""
        if N < 0:
            raise ArgumentError("moment order must be nonnegative")
        m = self.m
        return math.exp((N / m) * math.log(2 * m) + gammaln((2 * N + 1) / (2 * m)) - gammaln(1 / (2 * m)))

    def moment(self, N):
        """Exact ``E|x_h|^{2N}`` for every coordinate."""
        return self.moment_b(N) * self.mus ** (N / self.m)

    def draw(self, gen, n):
        two_m = 2.0 * self.m
        G = gen.standard_gamma(1.0 / two_m, size=(n, self.dim))
        sign = np.where(gen.random((n, self.dim)) < 0.5, -1.0, 1.0)
        return sign * (two_m * self.mus * G) ** (1.0 / two_m), None

    def v_many(self, Z, X):
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        score = np.sign(X) * np.abs(X) ** (2.0 * self.m - 1.0) / self.mus
        return score @ (Z * self.space.r_diag).T
