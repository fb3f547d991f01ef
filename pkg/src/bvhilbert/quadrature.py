"""Seeded Monte Carlo with error bars and tensor Gauss-Hermite quadrature.

Reproducibility contract: the sample set is cut into fixed-size chunks and
chunk ``c`` always draws from the counter-based stream ``(seed, child(c))``.
Workers only decide who computes which chunk; accumulators are merged with
exactly rounded summation (``math.fsum``), so results are bit-identical for
any worker count.
"""
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ArgumentError, CapabilityError, IntegrityError

__all__ = [
    "RngStream", "McEstimate", "McEngine", "run_chunks", "mc_integrate",
    "gh_integrate", "gh_expectation", "gh_rule",
]

_MASK64 = (1 << 64) - 1
DEFAULT_CHUNK = 1 << 15
MAX_REJECT_FRACTION = 1e-3


def _splitmix64(x):
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


@dataclass(frozen=True)
class RngStream:
    """A (seed, stream id) pair naming one Philox counter-based stream."""

    seed: int
    stream_id: int = 0

    def __post_init__(self):
        for name in ("seed", "stream_id"):
            v = getattr(self, name)
            if not 0 <= int(v) <= _MASK64:
                raise ArgumentError(f"{name} must be an unsigned 64-bit integer")
            object.__setattr__(self, name, int(v))

    def generator(self):
        key = np.array([self.seed, self.stream_id], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))

    def child(self, index):
        """Deterministically derived substream; distinct indices give distinct streams."""
        return RngStream(self.seed, _splitmix64(self.stream_id ^ _splitmix64(int(index) + 1)))


@dataclass
class McEstimate:
    """A Monte Carlo value with its standard error."""

    value: float
    stderr: float
    n_samples: int
    seed: int
    meta: dict = field(default_factory=dict)

    def to_dict(self):
        return {"value": self.value, "stderr": self.stderr, "n_samples": self.n_samples,
                "seed": self.seed, "meta": dict(self.meta)}

    def __sub__(self, other):
        """Difference assuming independent estimates."""
        return McEstimate(self.value - other.value, math.hypot(self.stderr, other.stderr),
                          min(self.n_samples, other.n_samples), self.seed,
                          {"combined": "independent difference"})

    def scaled(self, c):
        return McEstimate(c * self.value, abs(c) * self.stderr, self.n_samples, self.seed,
                          dict(self.meta))

    def within(self, target, n_sigma=4.0, slack=0.0):
        return abs(self.value - target) <= n_sigma * self.stderr + slack


@dataclass(frozen=True)
class McEngine:
    """Sample budget, seed and sharding shared by the estimators."""

    n_samples: int = 1 << 16
    seed: int = 0
    workers: int = 1
    chunk_size: int = DEFAULT_CHUNK

    def stream(self, stream_id=0):
        return RngStream(self.seed, stream_id)

    def integrate(self, fn, measure, stream_id=0, n_samples=None, **kw):
        return mc_integrate(fn, measure, n_samples or self.n_samples, self.stream(stream_id),
                            workers=self.workers, chunk_size=self.chunk_size, **kw)


def run_chunks(n, rng, work, workers=1, chunk_size=DEFAULT_CHUNK, first=None):
    """Split ``n`` draws into fixed chunks and call ``work(c, size, generator)``.

    Returns the per-chunk results in chunk order.  ``first`` optionally
    post-processes chunk 0 before the others start (used to fix a shift).
    """
    if n < 1:
        raise ArgumentError("need at least one draw")
    sizes = [chunk_size] * (n // chunk_size)
    if n % chunk_size:
        sizes.append(n % chunk_size)

    def job(c):
        return work(c, sizes[c], rng.child(c).generator())

    head = job(0)
    if first is not None:
        first(head)
    rest = range(1, len(sizes))
    if workers > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            tail = list(pool.map(job, rest))
    else:
        tail = [job(c) for c in rest]
    return [head] + tail


def _as_columns(values, n):
    vals = np.asarray(values, dtype=float)
    if vals.ndim == 1:
        return vals.reshape(n, 1), True
    return vals.reshape(n, -1), False


def mc_integrate(fn, measure, n, rng, workers=1, chunk_size=DEFAULT_CHUNK, pass_rng=False,
                 labels=None):
    """Estimate ``int fn dnu`` from ``n`` draws of ``measure``.

    ``fn`` maps a batch ``(m, dim)`` to ``(m,)`` or ``(m, k)``; in the latter
    case one estimate per column is returned (all columns share the draws, so
    a column holding a difference gets a paired standard error).  Weighted
    measures are handled by the self-normalised ratio estimator with a
    delta-method standard error.  With ``pass_rng`` the integrand receives
    the chunk generator as second argument for inner randomness.
    """
    if n < 2:
        raise ArgumentError("mc_integrate needs n >= 2")
    state = {}

    def work(c, size, gen):
        X, logw = measure.draw(gen, size)
        vals = fn(X, gen) if pass_rng else fn(X)
        G, scalar = _as_columns(vals, size)
        state.setdefault("scalar", scalar)
        ok = np.all(np.isfinite(G), axis=1)
        G = G[ok]
        w = None if logw is None else np.exp(logw[ok])
        return {"G": G, "w": w, "rejected": int(size - ok.sum())}

    def fix_shift(head):
        G, w = head["G"], head["w"]
        if G.shape[0] == 0:
            state["shift"] = np.zeros(G.shape[1])
        elif w is None:
            state["shift"] = G.mean(axis=0)
        else:
            state["shift"] = (w @ G) / w.sum()

    def reduce(chunk):
        G = chunk.pop("G") - state["shift"]
        w = chunk.pop("w")
        chunk["count"] = G.shape[0]
        if w is None:
            chunk["s1"] = G.sum(axis=0)
            chunk["s2"] = (G * G).sum(axis=0)
        else:
            w2 = w * w
            chunk["sw"] = w.sum()
            chunk["sw2"] = w2.sum()
            chunk["swg"] = w @ G
            chunk["sw2g"] = w2 @ G
            chunk["sw2g2"] = w2 @ (G * G)
        return chunk

    def reducing_work(c, size, gen):
        out = work(c, size, gen)
        if c == 0:
            return out
        return reduce(out)

    chunks = run_chunks(n, rng, reducing_work, workers, chunk_size, first=fix_shift)
    chunks[0] = reduce(chunks[0])

    rejected = sum(ch["rejected"] for ch in chunks)
    if rejected > MAX_REJECT_FRACTION * n:
        raise IntegrityError(f"{rejected} of {n} integrand values were not finite", rejected)
    count = sum(ch["count"] for ch in chunks)
    shift = state["shift"]
    weighted = "sw" in chunks[0]
    k = shift.size
    fs = math.fsum

    results = []
    meta_common = {"rejected": rejected, "weighted": weighted,
                   "chunk_size": chunk_size, "stream_id": rng.stream_id}
    if weighted:
        sw = fs(ch["sw"] for ch in chunks)
        sw2 = fs(ch["sw2"] for ch in chunks)
        ess = sw * sw / sw2
        meta_common["ess"] = ess
        if ess < 0.1 * count:
            meta_common["warnings"] = ["importance weights degenerate: ESS below 10% of draws"]
    for j in range(k):
        if weighted:
            swg = fs(ch["swg"][j] for ch in chunks)
            sw2g = fs(ch["sw2g"][j] for ch in chunks)
            sw2g2 = fs(ch["sw2g2"][j] for ch in chunks)
            mean_g = swg / sw
            var_num = sw2g2 - 2.0 * mean_g * sw2g + mean_g * mean_g * sw2
            stderr = math.sqrt(max(var_num, 0.0)) / sw
        else:
            s1 = fs(ch["s1"][j] for ch in chunks)
            s2 = fs(ch["s2"][j] for ch in chunks)
            mean_g = s1 / count
            var = max(s2 - s1 * mean_g, 0.0) / (count - 1)
            stderr = math.sqrt(var / count)
        meta = dict(meta_common)
        if labels is not None:
            meta["label"] = labels[j]
        results.append(McEstimate(float(shift[j] + mean_g), float(stderr), count, rng.seed, meta))
    return results[0] if state["scalar"] else results


# --------------------------------------------------------------------------
# Gauss-Hermite

MAX_GH_DIMS = 4
MAX_GH_ORDER = 64


def gh_rule(order):
    """Nodes and weights for ``E[g(Z)]``, ``Z`` standard normal."""
    if not 1 <= order <= MAX_GH_ORDER:
        raise CapabilityError(f"Gauss-Hermite order must lie in [1, {MAX_GH_ORDER}]")
    x, w = np.polynomial.hermite_e.hermegauss(order)
    return x, w / math.sqrt(2.0 * math.pi)


def _tensor_rule(m, order):
    x, w = gh_rule(order)
    if m == 0:
        return np.zeros((1, 0)), np.ones(1)
    grids = np.meshgrid(*([x] * m), indexing="ij")
    wgrids = np.meshgrid(*([w] * m), indexing="ij")
    Z = np.stack([g.ravel() for g in grids], axis=1)
    W = np.prod(np.stack([g.ravel() for g in wgrids], axis=1), axis=1)
    return Z, W


def gh_expectation(fn, mean, std, active, order=32, with_nodes=False):
    """``E[fn(mean + std * Z)]`` with ``Z`` standard normal on the active coordinates.

    ``mean`` has shape ``(n, dim)`` (one Gaussian per row), ``std`` shape
    ``(dim,)``.  Coordinates outside ``active`` are held at the mean.  ``fn``
    may return ``(m,)`` or ``(m, ...)``; the trailing shape is preserved.
    With ``with_nodes`` the integrand is called as ``fn(X, Z)``.
    """
    active = np.asarray(active, dtype=int)
    if active.size > MAX_GH_DIMS:
        raise CapabilityError(f"tensor Gauss-Hermite limited to {MAX_GH_DIMS} active dimensions")
    mean = np.atleast_2d(np.asarray(mean, dtype=float))
    std = np.asarray(std, dtype=float)
    Z, W = _tensor_rule(active.size, order)
    G = W.size
    block = max(1, (1 << 18) // G)
    outs = []
    for start in range(0, mean.shape[0], block):
        M = mean[start:start + block]
        nb = M.shape[0]
        X = np.repeat(M, G, axis=0)
        if active.size:
            X[:, active] += np.tile(Z * std[active], (nb, 1))
        if with_nodes:
            vals = np.asarray(fn(X, np.tile(Z, (nb, 1))), dtype=float)
        else:
            vals = np.asarray(fn(X), dtype=float)
        vals = vals.reshape((nb, G) + vals.shape[1:])
        outs.append(np.tensordot(W, vals, axes=([0], [1])))
    return np.concatenate(outs, axis=0)


def gh_integrate(fn, measure, active_dims, order=32):
    """Tensor Gauss-Hermite value of ``int fn dgamma`` for a Gaussian measure.

    Exact for polynomials of degree below ``2 * order`` in each active
    coordinate; ``fn`` must not depend on the other coordinates.
    """
    space = measure.space
    mean = np.zeros((1, space.dim))
    return float(gh_expectation(fn, mean, space.r_diag, active_dims, order)[0])
