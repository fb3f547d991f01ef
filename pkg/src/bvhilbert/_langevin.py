"""Lie-splitting integrator for ``dX = (A X - grad U(X)) dt + dW``, ``A = -(2Q)^{-1}``.

Each step applies the exact Ornstein-Uhlenbeck flow of the linear part and
then an explicit Euler step for ``-grad U``.  Leading axes of the state are
coupled copies that share the noise (synchronous coupling).
"""
import numpy as np

from .exceptions import IntegrityError

OVERFLOW_GUARD = 1e8


def ou_step_params(eigenvalues, dt):
    lam = np.asarray(eigenvalues, dtype=float)
    decay = np.exp(-dt / (2.0 * lam))
    std = np.sqrt(lam * -np.expm1(-dt / lam))
    return decay, std


def simulate(X0, t, dt, eigenvalues, grad_U, gen, guard=OVERFLOW_GUARD):
    """Advance ``X0`` (shape ``(..., n, dim)``) to time ``t``.

    The step count is ``ceil(t / dt)`` with the step shrunk to land on ``t``.
    One noise array of shape ``(n, dim)`` per step is shared by all copies.
    """
    X = np.array(X0, dtype=float, copy=True)
    if t <= 0:
        return X
    steps = max(1, int(np.ceil(t / dt - 1e-9)))
    h = t / steps
    decay, std = ou_step_params(eigenvalues, h)
    lead = X.shape[:-2]
    n, dim = X.shape[-2:]
    for _ in range(steps):
        noise = gen.standard_normal((n, dim))
        X = X * decay + std * noise
        if grad_U is not None:
            with np.errstate(over="ignore", invalid="ignore"):
                X = X - h * grad_U(X.reshape(-1, dim)).reshape(lead + (n, dim))
            # explicit drift steps can blow up; stop at the first escape
            bad = ~(np.abs(X) <= guard).all(axis=-1)
            if bad.any():
                raise IntegrityError(f"{int(bad.sum())} paths left the overflow guard", int(bad.sum()))
    return X


def burn_in_time(eigenvalues):
    """Ten relaxation times of the slowest linear mode (gap ``1/(2 lambda_max)``)."""
    return 20.0 * float(np.max(eigenvalues))
