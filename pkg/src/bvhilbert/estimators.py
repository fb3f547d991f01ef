"""Estimator-style wrappers around the variation and perimeter routines.

Hyperparameters go to ``__init__`` (so ``get_params``/``set_params`` and
``sklearn.base.clone`` work); ``fit`` takes the object being measured and
stores the result in trailing-underscore attributes.
"""
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .perimeter import halfspace_perimeter, sublevel_perimeter
from .quadrature import McEngine
from .variation import AscentConfig, direct_variation, semigroup_variation, sup_variation

__all__ = ["DirectVariation", "SupVariation", "SemigroupVariation", "HalfspacePerimeter",
           "SublevelPerimeter"]


class _McEstimator(BaseEstimator):

    def _engine(self):
        return McEngine(n_samples=self.n_samples, seed=self.seed, workers=self.workers)

    def _store(self, estimate):
        self.estimate_ = estimate
        self.value_ = estimate.value
        self.stderr_ = estimate.stderr
        return self

    def score(self, obj=None):
        """The fitted value (``obj`` is accepted for API symmetry and ignored)."""
        check_is_fitted(self, "estimate_")
        return self.value_


class DirectVariation(_McEstimator):
    """``int |R grad u|`` (``which="M"``), ``int |grad u|`` (``"nabla"``) or ``int |<R grad u, z>|``."""

    def __init__(self, measure=None, which="M", z=None, n_samples=1 << 16, seed=0, workers=1):
        self.measure = measure
        self.which = which
        self.z = z
        self.n_samples = n_samples
        self.seed = seed
        self.workers = workers

    def fit(self, u, y=None):
        return self._store(direct_variation(self.measure, u, self.which, self.z, self._engine()))


class SupVariation(_McEstimator):
    """Stochastic-ascent lower bound for ``V``, ``V0`` or ``Vz``."""

    def __init__(self, measure=None, which="V", z=None, steps=500, restarts=5, lr=0.05, batch=4096,
                 n_samples=1 << 16, seed=0, workers=1):
        self.measure = measure
        self.which = which
        self.z = z
        self.steps = steps
        self.restarts = restarts
        self.lr = lr
        self.batch = batch
        self.n_samples = n_samples
        self.seed = seed
        self.workers = workers

    def fit(self, u, y=None):
        cfg = AscentConfig(steps=self.steps, restarts=self.restarts, lr=self.lr, batch=self.batch)
        est, trace = sup_variation(self.measure, u, self.which, self.z, cfg, self._engine())
        self.trace_ = trace
        return self._store(est)

    def transform(self, X):
        """Evaluate the best test field found on points ``X``."""
        check_is_fitted(self, "trace_")
        return self.trace_["family"].field_value(self.trace_["theta"], X)


class SemigroupVariation(_McEstimator):
    """``t -> int |M T(t) u|`` on a grid, extrapolated to ``t = 0``."""

    def __init__(self, spec=None, t_grid=(0.4, 0.2, 0.1, 0.05, 0.025), which="M", n_samples=1 << 16,
                 seed=0, workers=1):
        self.spec = spec
        self.t_grid = t_grid
        self.which = which
        self.n_samples = n_samples
        self.seed = seed
        self.workers = workers

    def fit(self, u, y=None):
        curve = semigroup_variation(self.spec, u, self.t_grid, self.which, self._engine())
        self.curve_ = curve
        self.limit_ = curve.limit
        self.stable_ = curve.stable
        return self._store(curve.values[-1])

    def score(self, obj=None):
        check_is_fitted(self, "curve_")
        return self.limit_


class HalfspacePerimeter(_McEstimator):

    def __init__(self, measure=None, which="p", n_samples=1 << 16, seed=0, workers=1):
        self.measure = measure
        self.which = which
        self.n_samples = n_samples
        self.seed = seed
        self.workers = workers

    def fit(self, halfspace, y=None):
        return self._store(halfspace_perimeter(self.measure, halfspace, self.which, self._engine()))


class SublevelPerimeter(_McEstimator):

    def __init__(self, measure=None, eps_grid=None, n_samples=1 << 16, seed=0, workers=1):
        self.measure = measure
        self.eps_grid = eps_grid
        self.n_samples = n_samples
        self.seed = seed
        self.workers = workers

    def fit(self, sublevel_set, y=None):
        report = sublevel_perimeter(self.measure, sublevel_set, self.eps_grid, self._engine())
        self.report_ = report
        self.stable_ = report.stable
        return self._store(report.value)
