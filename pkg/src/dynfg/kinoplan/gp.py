"""Constant-acceleration GP prior between consecutive states ``x = [q; qd; qdd]``."""
from __future__ import annotations

import numpy as np

_S1 = np.array([[1 / 2, 1 / 8, 1 / 6],
                [1 / 8, 1 / 3, 1 / 2],
                [1 / 6, 1 / 2, 1.0]])


class NonSpdSigma(ValueError):
    pass


def _qc_matrix(qc, n: int) -> np.ndarray:
    qc = np.asarray(qc, dtype=float)
    if qc.ndim == 0:
        return float(qc) * np.eye(n)
    if qc.shape != (n, n):
        raise ValueError(f"Q_C must be a scalar or {n}x{n}")
    return qc


def gp_transition(dt: float, n: int = 1, qc=1.0):
    """``(Phi, Sigma)`` for one interval, each 3n x 3n.

    ``Sigma`` uses the covariance blocks ``[dt^5/2, dt^4/8, dt^3/6; ...; dt]``
    times ``Q_C``.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    phi1 = np.array([[1.0, dt, 0.5 * dt * dt], [0.0, 1.0, dt], [0.0, 0.0, 1.0]])
    d = np.array([dt ** 2.5, dt ** 1.5, dt ** 0.5])
    sigma1 = _S1 * np.outer(d, d)
    q = _qc_matrix(qc, n)
    return np.kron(phi1, np.eye(n)), np.kron(sigma1, q)


def gp_whitener(dt: float, n: int = 1, qc=1.0) -> np.ndarray:
    """``W`` with ``W^T W = Sigma^-1``."""
    _, sigma = gp_transition(dt, n, qc)
    try:
        chol = np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError as exc:
        raise NonSpdSigma(f"GP covariance is not SPD at dt={dt}") from exc
    return np.linalg.inv(chol)


def gp_factor_residual(x_prev, x_next, dt: float, qc=1.0) -> np.ndarray:
    """Whitened ``x_next - Phi x_prev``."""
    x_prev = np.asarray(x_prev, dtype=float)
    x_next = np.asarray(x_next, dtype=float)
    if x_prev.shape != x_next.shape or x_prev.size % 3:
        raise ValueError("states must be equal-length [q; qd; qdd] stacks")
    n = x_prev.size // 3
    phi, _ = gp_transition(dt, n, qc)
    return gp_whitener(dt, n, qc) @ (x_next - phi @ x_prev)
