"""RBF covariance, cross-covariance and analytic derivatives.

The kernel is

    k(x, x') = s * exp(-g/2 * |x - x'|^2)

with signal variance ``s`` and inverse width ``g``.  Gram matrices add
``noise_variance`` plus a small jitter on the diagonal.  Hyperparameters live
in log space so any real vector is a valid optimiser state.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import InvalidInputError, NumericalError

JITTER_START = 1e-8
JITTER_MAX = 1e-4


@dataclass(frozen=True)
class RbfHyperparams:
    """Log-space RBF hyperparameters (signal variance, inverse width, noise)."""

    log_signal_variance: float
    log_inverse_width: float
    log_noise_variance: float

    def __post_init__(self):
        if not np.all(np.isfinite(self.as_log())):
            raise InvalidInputError(f"non-finite log hyperparameters: {self.as_log()}")

    @classmethod
    def from_natural(cls, signal_variance, inverse_width, noise_variance):
        vals = np.array([signal_variance, inverse_width, noise_variance], dtype=float)
        if not np.all(np.isfinite(vals)) or np.any(vals <= 0):
            raise InvalidInputError(f"hyperparameters must be finite and positive, got {vals}")
        return cls(*(float(v) for v in np.log(vals)))

    @classmethod
    def from_log(cls, values):
        values = np.asarray(values, dtype=float)
        return cls(float(values[0]), float(values[1]), float(values[2]))

    def as_log(self) -> np.ndarray:
        return np.array(
            [self.log_signal_variance, self.log_inverse_width, self.log_noise_variance]
        )

    @property
    def signal_variance(self) -> float:
        return float(np.exp(self.log_signal_variance))

    @property
    def inverse_width(self) -> float:
        return float(np.exp(self.log_inverse_width))

    @property
    def noise_variance(self) -> float:
        return float(np.exp(self.log_noise_variance))


def _as_points(X, name="X") -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
        raise InvalidInputError(f"{name} must be a non-empty N x q array, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    return X


def sq_dist(A, B) -> np.ndarray:
    """Pairwise squared Euclidean distances, computed from explicit differences."""
    out = np.zeros((A.shape[0], B.shape[0]))
    for d in range(A.shape[1]):
        diff = A[:, d, None] - B[None, :, d]
        out += diff * diff
    return out


def _rbf(X, Xs, h: RbfHyperparams) -> np.ndarray:
    return h.signal_variance * np.exp(-0.5 * h.inverse_width * sq_dist(X, Xs))


def _symmetrize_upper(K: np.ndarray) -> np.ndarray:
    upper = np.triu(K)
    return upper + np.triu(K, 1).T


def cross(X, Xs, h: RbfHyperparams) -> np.ndarray:
    """RBF cross-covariance between ``X`` (N x q) and ``Xs`` (M x q).

    No noise or jitter is added, even when ``Xs`` is ``X``.
    """
    X = _as_points(X)
    Xs = _as_points(Xs, "Xs")
    if X.shape[1] != Xs.shape[1]:
        raise InvalidInputError(
            f"dimension mismatch: X has q={X.shape[1]}, Xs has q={Xs.shape[1]}"
        )
    return _rbf(X, Xs, h)


def jitter_levels(h: RbfHyperparams):
    """Jitter values tried in order: 1e-8 s, 1e-7 s, ... up to 1e-4 s."""
    s = h.signal_variance
    n_levels = int(round(np.log10(JITTER_MAX / JITTER_START))) + 1
    return [JITTER_START * 10.0**i * s for i in range(n_levels)]


def gram_with_jitter(X, h: RbfHyperparams, jitter: float) -> np.ndarray:
    """Gram matrix with an explicit diagonal jitter (no factorisation attempted)."""
    X = _as_points(X)
    K = _symmetrize_upper(_rbf(X, X, h))
    K[np.diag_indices_from(K)] += h.noise_variance + jitter
    return K


def factor_rbf(rbf: np.ndarray, h: RbfHyperparams):
    """Add noise and escalating jitter to a noise-free RBF matrix and factorise it."""
    diag = np.diag_indices_from(rbf)
    for jitter in jitter_levels(h):
        K = rbf.copy()
        K[diag] += h.noise_variance + jitter
        try:
            L = scipy.linalg.cholesky(K, lower=True, check_finite=False)
        except np.linalg.LinAlgError:
            continue
        if np.all(np.isfinite(L)):
            return K, L, jitter
    raise NumericalError(
        f"Cholesky failed for {rbf.shape[0]}x{rbf.shape[0]} gram after jitter "
        f"{JITTER_MAX:g} * signal_variance"
    )


def gram_factor(X, h: RbfHyperparams):
    """Gram matrix, its lower Cholesky factor and the jitter that was needed.

    Jitter starts at ``1e-8 * signal_variance`` and escalates by factors of
    ten up to ``1e-4 * signal_variance``.

    Returns
    -------
    K : ndarray (N, N)
    L : ndarray (N, N), lower triangular with ``L @ L.T == K``
    jitter : float
    """
    X = _as_points(X)
    return factor_rbf(_symmetrize_upper(_rbf(X, X, h)), h)


def gram(X, h: RbfHyperparams) -> np.ndarray:
    """Noisy, jittered RBF Gram matrix of the latent points ``X``.

    ``K[i, j] = s exp(-g/2 |x_i - x_j|^2) + (noise + jitter) delta_ij``.
    The result is exactly symmetric and Cholesky-factorisable.
    """
    return gram_factor(X, h)[0]


def grad_gram_hyper(X, h: RbfHyperparams, jitter: float | None = None):
    """Derivatives of the Gram matrix w.r.t. each log-hyperparameter.

    The jitter is treated as a fixed multiple of the signal variance, so it
    contributes to the signal-variance derivative.  When ``jitter`` is None
    the smallest level (``1e-8 * s``) is assumed.

    Returns
    -------
    (dK_dlog_signal, dK_dlog_inverse_width, dK_dlog_noise), each N x N.
    """
    X = _as_points(X)
    if jitter is None:
        jitter = JITTER_START * h.signal_variance
    r2 = _symmetrize_upper(sq_dist(X, X))
    rbf = h.signal_variance * np.exp(-0.5 * h.inverse_width * r2)
    n = X.shape[0]
    d_signal = rbf + jitter * np.eye(n)
    d_width = rbf * (-0.5 * h.inverse_width * r2)
    d_noise = h.noise_variance * np.eye(n)
    return d_signal, d_width, d_noise


def grad_gram_inputs(X, h: RbfHyperparams) -> np.ndarray:
    """Derivative tensor ``D[i, j, d] = d k(x_i, x_j) / d x_i[d]``.

    The diagonal is zero; noise and jitter do not depend on ``X``.  For a
    scalar objective with ``G = dL/dK`` the input gradient is
    ``dL/dX[n, d] = sum_j (G[n, j] + G[j, n]) D[n, j, d]``.
    """
    X = _as_points(X)
    diff = X[:, None, :] - X[None, :, :]
    rbf = _rbf(X, X, h)
    return -h.inverse_width * diff * rbf[:, :, None]


def input_gradient(G: np.ndarray, X, h: RbfHyperparams) -> np.ndarray:
    """Contract ``dL/dK`` with the input derivative tensor without forming it."""
    X = _as_points(X)
    Gs = G + G.T
    A = Gs * _rbf(X, X, h)
    # sum_j A[n,j] (x_n - x_j) = x_n * rowsum(A) - A @ X
    return -h.inverse_width * (X * A.sum(axis=1)[:, None] - A @ X)
