"""Shared GP-LVM with RBF back constraints.

One latent space (q = 2) carries two GP mappings: latent -> human pose and
latent -> robot pose.  Latent locations are not free parameters; they are an
RBF function of the human training poses, ``X = Phi(Y) @ W``, so training
optimises ``W`` and both kernels' log hyperparameters against the sum of the
two log marginal likelihoods.  Data are centred per space before the
zero-mean GP is applied; predictions add the training mean back.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.linalg.lapack

from . import kernels
from .errors import CompatibilityError, InvalidInputError, NumericalError, StateError
from .kernels import RbfHyperparams
from .optim import OptimConfig, maximize

log = logging.getLogger(__name__)

LATENT_DIM = 2
LOG_2PI = np.log(2.0 * np.pi)
MODEL_FORMAT = "latentcoach.shared-gplvm"
MODEL_VERSION = 1
Y_SPACE = "Y"
Z_SPACE = "Z"


@dataclass(frozen=True)
class TrainConfig:
    """Training settings.

    ``bc_width_scale`` multiplies the median-heuristic back-constraint
    inverse width; larger values give more local RBF features.
    """

    max_iters: int = 200
    grad_tolerance: float = 1e-4
    f_tolerance: float = 1e-9
    method: str = "lbfgs"
    initial_step: float = 1.0
    restarts: int = 0
    seed: int = 0
    bc_width_scale: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.bc_width_scale) and self.bc_width_scale > 0):
            raise InvalidInputError("bc_width_scale must be positive")
        if self.max_iters < 1:
            raise InvalidInputError("max_iters must be >= 1")
        if self.grad_tolerance <= 0 or self.f_tolerance < 0:
            raise InvalidInputError("tolerances must be positive")
        if self.restarts < 0:
            raise InvalidInputError("restarts must be >= 0")

    def optim(self) -> OptimConfig:
        return OptimConfig(
            max_iters=self.max_iters,
            grad_tolerance=self.grad_tolerance,
            f_tolerance=self.f_tolerance,
            method=self.method,
            initial_step=self.initial_step,
        )


@dataclass(frozen=True, eq=False)
class BackConstraintMap:
    """RBF inverse mapping ``h(y) = sum_n W[n] exp(-bc_width/2 |y - c_n|^2)``."""

    centers: np.ndarray
    bc_width: float
    weights: np.ndarray

    def __post_init__(self):
        c = np.array(np.atleast_2d(self.centers), dtype=float, order="C")
        w = np.array(self.weights, dtype=float, order="C")
        if w.ndim == 1:
            w = w[:, None]
        if c.shape[0] != w.shape[0]:
            raise InvalidInputError(f"{c.shape[0]} centers but {w.shape[0]} weight rows")
        if not (np.isfinite(self.bc_width) and self.bc_width > 0):
            raise InvalidInputError(f"bc_width must be positive, got {self.bc_width}")
        if not (np.all(np.isfinite(c)) and np.all(np.isfinite(w))):
            raise InvalidInputError("back-constraint map has non-finite entries")
        c.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "centers", c)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bc_width", float(self.bc_width))

    @property
    def q(self) -> int:
        return self.weights.shape[1]

    def features(self, Y) -> np.ndarray:
        """RBF features ``Phi[m, n] = exp(-bc_width/2 |y_m - c_n|^2)``."""
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        if Y.shape[1] != self.centers.shape[1]:
            raise InvalidInputError(
                f"pose has {Y.shape[1]} values, back constraint expects {self.centers.shape[1]}"
            )
        if not np.all(np.isfinite(Y)):
            raise InvalidInputError("pose contains non-finite values")
        return np.exp(-0.5 * self.bc_width * kernels.sq_dist(Y, self.centers))

    def with_weights(self, weights) -> "BackConstraintMap":
        return BackConstraintMap(self.centers, self.bc_width, weights)


def project(y, bc: BackConstraintMap) -> np.ndarray:
    """Map a pose vector (or rows of poses) into the latent space."""
    y = np.asarray(y, dtype=float)
    X = bc.features(y) @ bc.weights
    return X[0] if y.ndim == 1 else X


def median_width(centers) -> float:
    """Median heuristic: 1 / median squared pairwise distance."""
    centers = np.asarray(centers, dtype=float)
    d2 = kernels.sq_dist(centers, centers)[np.triu_indices(len(centers), 1)]
    med = float(np.median(d2)) if d2.size else 0.0
    if not med > 0:
        raise InvalidInputError("all training poses coincide; cannot set back-constraint width")
    return 1.0 / med


# --------------------------------------------------------------------------
# Likelihood
# --------------------------------------------------------------------------


def _cholesky(K):
    try:
        L = scipy.linalg.cholesky(K, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"gram matrix not positive definite: {exc}") from None
    if not np.all(np.isfinite(L)):
        raise NumericalError("gram factorisation produced non-finite values")
    return L


def _log_marginal_from_factor(Yd, L):
    N, D = Yd.shape
    A = scipy.linalg.solve_triangular(L, Yd, lower=True, check_finite=False)
    logdet = 2.0 * np.sum(np.log(np.diag(L)))
    return -0.5 * D * N * LOG_2PI - 0.5 * D * logdet - 0.5 * np.sum(A * A)


def log_marginal(Yd, K) -> float:
    """Log density of the columns of ``Yd`` under independent N(0, K) priors.

    ``-(D N / 2) ln 2 pi - (D / 2) ln|K| - 1/2 tr(K^-1 Y Y^T)``, evaluated via
    the Cholesky factor of ``K``.
    """
    Yd = np.asarray(Yd, dtype=float)
    if Yd.ndim == 1:
        Yd = Yd[:, None]
    K = np.asarray(K, dtype=float)
    if K.shape != (Yd.shape[0], Yd.shape[0]):
        raise InvalidInputError(f"gram {K.shape} does not match data with {Yd.shape[0]} rows")
    return float(_log_marginal_from_factor(Yd, _cholesky(K)))


def _inverse_from_factor(L):
    inv, info = scipy.linalg.lapack.dpotri(L, lower=1)
    if info != 0:
        raise NumericalError(f"matrix inversion from Cholesky factor failed (info={info})")
    lower = np.tril(inv)
    return lower + np.tril(inv, -1).T


def _space_terms(X, r2, data, h: RbfHyperparams):
    """Log marginal of one space and its gradients w.r.t. X and log hypers.

    ``r2`` holds the (exactly symmetric) squared latent distances.
    """
    rbf = h.signal_variance * np.exp(-0.5 * h.inverse_width * r2)
    K, L, jitter = kernels.factor_rbf(rbf, h)
    N, D = data.shape
    ll = _log_marginal_from_factor(data, L)
    alpha = scipy.linalg.cho_solve((L, True), data, check_finite=False)
    Kinv = _inverse_from_factor(L)
    G = 0.5 * (alpha @ alpha.T - D * Kinv)
    trace_G = np.trace(G)
    GR = G * rbf
    d_hyper = np.array([
        GR.sum() + jitter * trace_G,
        np.sum(GR * (-0.5 * h.inverse_width * r2)),
        h.noise_variance * trace_G,
    ])
    # G is symmetric, so (G + G^T) * rbf = 2 GR
    A = 2.0 * GR
    d_X = -h.inverse_width * (X * A.sum(axis=1)[:, None] - A @ X)
    return ll, d_X, d_hyper


def _pack(W, hyper_Y: RbfHyperparams, hyper_Z: RbfHyperparams):
    return np.concatenate([W.ravel(), hyper_Y.as_log(), hyper_Z.as_log()])


def _unpack(theta, n, q):
    W = theta[: n * q].reshape(n, q)
    hY = RbfHyperparams.from_log(theta[n * q : n * q + 3])
    hZ = RbfHyperparams.from_log(theta[n * q + 3 : n * q + 6])
    return W, hY, hZ


def objective_and_grad(theta, Phi, Yc, Zc, q=LATENT_DIM):
    """Joint log marginal and gradient in the packed ``(W, log hY, log hZ)`` vector.

    ``Phi`` is the N x N back-constraint feature matrix of the training poses
    and ``Yc``/``Zc`` are the centred data of the two spaces.
    """
    n = Phi.shape[1]
    W, hY, hZ = _unpack(np.asarray(theta, dtype=float), n, q)
    X = Phi @ W
    r2 = kernels.sq_dist(X, X)
    r2 = np.triu(r2) + np.triu(r2, 1).T
    llY, dXY, dhY = _space_terms(X, r2, Yc, hY)
    llZ, dXZ, dhZ = _space_terms(X, r2, Zc, hZ)
    dW = Phi.T @ (dXY + dXZ)
    return llY + llZ, np.concatenate([dW.ravel(), dhY, dhZ])


# --------------------------------------------------------------------------
# Model
# --------------------------------------------------------------------------


def _checksum(arr) -> str:
    return hashlib.sha256(np.ascontiguousarray(arr, dtype="<f8").tobytes()).hexdigest()


class SharedGplvmModel:
    """A trained shared GP-LVM for one body part.

    Holds the human/robot training data, the back-constraint map, both
    kernels and cached Cholesky factors.  Treat instances as immutable.
    """

    def __init__(self, training_Y, training_Z, bc: BackConstraintMap,
                 hyper_Y: RbfHyperparams, hyper_Z: RbfHyperparams,
                 part=None, trained=True, info=None):
        # C order keeps reductions (and so reloaded models) bitwise reproducible
        Y = np.array(np.atleast_2d(training_Y), dtype=float, order="C")
        Z = np.array(np.atleast_2d(training_Z), dtype=float, order="C")
        if Y.shape[0] != Z.shape[0]:
            raise InvalidInputError(f"{Y.shape[0]} human rows but {Z.shape[0]} robot rows")
        if not np.array_equal(bc.centers, Y):
            raise InvalidInputError("back-constraint centers must be the training poses")
        self.training_Y = Y
        self.training_Z = Z
        self.bc = bc
        self.hyper_Y = hyper_Y
        self.hyper_Z = hyper_Z
        self.part = part
        self.trained = trained
        self.info = dict(info or {})
        self.mean_Y = Y.mean(axis=0)
        self.mean_Z = Z.mean(axis=0)
        self.latent_X = bc.features(Y) @ bc.weights
        self._cache = {}
        for space, data, h in ((Y_SPACE, Y - self.mean_Y, hyper_Y), (Z_SPACE, Z - self.mean_Z, hyper_Z)):
            K, L, jitter = kernels.gram_factor(self.latent_X, h)
            alpha = scipy.linalg.cho_solve((L, True), data, check_finite=False)
            self._cache[space] = (K, L, jitter, data, alpha)
        for arr in (self.training_Y, self.training_Z, self.mean_Y, self.mean_Z, self.latent_X):
            arr.setflags(write=False)

    @property
    def N(self) -> int:
        return self.training_Y.shape[0]

    @property
    def q(self) -> int:
        return self.bc.q

    def hyper(self, space):
        return self._select(space)[1]

    def _select(self, space):
        if space == Y_SPACE:
            return self.mean_Y, self.hyper_Y
        if space == Z_SPACE:
            return self.mean_Z, self.hyper_Z
        raise InvalidInputError(f"space must be 'Y' or 'Z', got {space!r}")

    def gram(self, space):
        return self._cache[space][0]

    def factor(self, space):
        return self._cache[space][1]

    def with_bc(self, bc: BackConstraintMap) -> "SharedGplvmModel":
        return SharedGplvmModel(self.training_Y, self.training_Z, bc, self.hyper_Y,
                                self.hyper_Z, part=self.part, trained=self.trained,
                                info=self.info)

    def checksum(self) -> str:
        h = hashlib.sha256()
        for arr in (self.training_Y, self.training_Z, self.bc.weights,
                    self.hyper_Y.as_log(), self.hyper_Z.as_log()):
            h.update(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        h.update(repr(self.bc.bc_width).encode())
        return h.hexdigest()

    # -- serialisation ---------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "part": self.part,
            "N": self.N,
            "q": self.q,
            "centers": self.training_Y.tolist(),
            "training_Z": self.training_Z.tolist(),
            "W": self.bc.weights.tolist(),
            "bc_width": self.bc.bc_width,
            "log_hyper_Y": self.hyper_Y.as_log().tolist(),
            "log_hyper_Z": self.hyper_Z.as_log().tolist(),
            "checksums": {
                "centers": _checksum(self.training_Y),
                "training_Z": _checksum(self.training_Z),
            },
            "info": {k: v for k, v in self.info.items() if k != "trace"},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SharedGplvmModel":
        if d.get("format") != MODEL_FORMAT or d.get("version") != MODEL_VERSION:
            raise CompatibilityError(
                f"model format {d.get('format')!r} v{d.get('version')!r}, "
                f"expected {MODEL_FORMAT!r} v{MODEL_VERSION}"
            )
        Y = np.array(d["centers"], dtype=float)
        Z = np.array(d["training_Z"], dtype=float)
        if _checksum(Y) != d["checksums"]["centers"] or _checksum(Z) != d["checksums"]["training_Z"]:
            raise CompatibilityError("training-data checksum mismatch in model file")
        W = np.array(d["W"], dtype=float)
        if W.shape != (d["N"], d["q"]):
            raise CompatibilityError(f"W shape {W.shape} disagrees with N={d['N']}, q={d['q']}")
        bc = BackConstraintMap(Y, d["bc_width"], W)
        return cls(Y, Z, bc, RbfHyperparams.from_log(d["log_hyper_Y"]),
                   RbfHyperparams.from_log(d["log_hyper_Z"]), part=d.get("part"),
                   trained=True, info=d.get("info"))


def joint_log_marginal(model: SharedGplvmModel) -> float:
    """``log p(Y | X, hyper_Y) + log p(Z | X, hyper_Z)`` at the model's latents."""
    return float(sum(_log_marginal_from_factor(model._cache[s][3], model._cache[s][1])
                     for s in (Y_SPACE, Z_SPACE)))


# --------------------------------------------------------------------------
# Training
# --------------------------------------------------------------------------


def pca_latents(Y, q=LATENT_DIM) -> np.ndarray:
    """Top-q principal component scores, scaled to unit variance per dimension."""
    Yc = Y - Y.mean(axis=0)
    U, S, _ = np.linalg.svd(Yc, full_matrices=False)
    X = np.zeros((Y.shape[0], q))
    k = min(q, len(S))
    X[:, :k] = U[:, :k] * S[:k]
    std = X.std(axis=0)
    std[std == 0] = 1.0
    return X / std


def initial_parameters(Y, Z, q=LATENT_DIM, bc_width=None):
    """PCA-based back-constraint weights and default hyperparameters."""
    bc_width = median_width(Y) if bc_width is None else float(bc_width)
    Phi = np.exp(-0.5 * bc_width * kernels.sq_dist(Y, Y))
    X0 = pca_latents(Y, q)
    W0 = np.linalg.lstsq(Phi, X0, rcond=1e-8)[0]

    def default_hyper(data):
        var = float((data - data.mean(axis=0)).var(axis=0).mean())
        if not var > 0:
            var = 1.0
        return RbfHyperparams.from_natural(var, 1.0, 0.01 * var)

    return BackConstraintMap(Y, bc_width, W0), default_hyper(Y), default_hyper(Z)


def canonical_scale(X, W, hY: RbfHyperparams, hZ: RbfHyperparams):
    """Rescale latents to unit mean std, compensating both inverse widths.

    ``X -> c X`` with ``g -> g / c^2`` leaves the likelihood unchanged; fixing
    the scale gives latent-space tolerances a consistent meaning.
    """
    spread = float(np.mean(X.std(axis=0)))
    if not spread > 0:
        return W, hY, hZ
    c = 1.0 / spread
    shift = -2.0 * np.log(c)
    hY = RbfHyperparams(hY.log_signal_variance, hY.log_inverse_width + shift, hY.log_noise_variance)
    hZ = RbfHyperparams(hZ.log_signal_variance, hZ.log_inverse_width + shift, hZ.log_noise_variance)
    return W * c, hY, hZ


def train(Y, Z, cfg: TrainConfig | None = None, part=None, bc_width=None) -> SharedGplvmModel:
    """Fit a back-constrained shared GP-LVM to paired human/robot rows.

    Parameters
    ----------
    Y : ndarray (N, D_Y)
        Human poses (already normalised and restricted to one body part).
    Z : ndarray (N, D_Z)
        Robot motor angles in degrees, row-aligned with ``Y``.
    cfg : TrainConfig
    part : str, optional
        Body-part label stored with the model.
    bc_width : float, optional
        Explicit back-constraint inverse width; overrides
        ``cfg.bc_width_scale * median_width(Y)``.

    Returns
    -------
    SharedGplvmModel
        ``model.info`` records the initial and final objective, the
        iteration count and the accepted-step objective trace.
    """
    cfg = cfg or TrainConfig()
    Y = np.array(np.atleast_2d(Y), dtype=float, order="C")
    Z = np.array(np.atleast_2d(Z), dtype=float, order="C")
    if Y.shape[0] != Z.shape[0]:
        raise InvalidInputError(f"unpaired data: {Y.shape[0]} human rows, {Z.shape[0]} robot rows")
    if Y.shape[0] < 4:
        raise InvalidInputError(f"training needs N >= 4 paired rows, got {Y.shape[0]}")
    if not (np.all(np.isfinite(Y)) and np.all(np.isfinite(Z))):
        raise InvalidInputError("training data contain non-finite values")
    n, q = Y.shape[0], LATENT_DIM
    if bc_width is None:
        bc_width = cfg.bc_width_scale * median_width(Y)
    bc0, hY0, hZ0 = initial_parameters(Y, Z, q, bc_width)
    Phi = bc0.features(Y)
    Yc, Zc = Y - Y.mean(axis=0), Z - Z.mean(axis=0)

    def fun(theta):
        return objective_and_grad(theta, Phi, Yc, Zc, q)

    rng = np.random.default_rng(cfg.seed)
    theta0 = _pack(bc0.weights, hY0, hZ0)
    f0 = fun(theta0)[0]
    if not np.isfinite(f0):
        raise NumericalError("non-finite objective at iteration 0")
    best = None
    for r in range(cfg.restarts + 1):
        start = theta0.copy()
        if r > 0:
            scale = 0.1 * np.std(bc0.weights)
            start[: n * q] += scale * rng.standard_normal(n * q)
        res = maximize(fun, start, cfg.optim())
        log.info("part %s restart %d: objective %.6g -> %.6g in %d iterations (%s)",
                 part, r, res.trace[0], res.f, res.n_iter, res.reason)
        if best is None or res.f > best.f:
            best = res
    W, hY, hZ = _unpack(best.x, n, q)
    W, hY, hZ = canonical_scale(Phi @ W, W, hY, hZ)
    info = {
        "initial_objective": float(f0),
        "final_objective": float(best.f),
        "iterations": int(best.n_iter),
        "stop_reason": best.reason,
        "seed": int(cfg.seed),
        "trace": list(best.trace),
    }
    return SharedGplvmModel(Y, Z, bc0.with_weights(W), hY, hZ, part=part, info=info)


# --------------------------------------------------------------------------
# Prediction
# --------------------------------------------------------------------------

VARIANCE_CLAMP = 1e-10


def _check_trained(model):
    if model is None or not getattr(model, "trained", False):
        raise StateError("model has not been trained")


def _query(x, model):
    x = np.asarray(x, dtype=float)
    Xq = np.atleast_2d(x)
    if Xq.shape[1] != model.q:
        raise InvalidInputError(f"latent points need q={model.q} columns, got {Xq.shape[1]}")
    if not np.all(np.isfinite(Xq)):
        raise InvalidInputError("latent query contains non-finite values")
    return Xq, x.ndim == 1


def predict(x, model: SharedGplvmModel, space=Z_SPACE) -> np.ndarray:
    """GP posterior mean ``mean + k*^T K^-1 (data - mean)`` in one space."""
    _check_trained(model)
    Xq, single = _query(x, model)
    mean, h = model._select(space)
    alpha = model._cache[space][4]
    out = kernels.cross(Xq, model.latent_X, h) @ alpha + mean
    return out[0] if single else out


def _latent_variance(Xq, model, space):
    _, h = model._select(space)
    L = model._cache[space][1]
    Ks = kernels.cross(model.latent_X, Xq, h)
    V = scipy.linalg.solve_triangular(L, Ks, lower=True, check_finite=False)
    return h.signal_variance + h.noise_variance - np.sum(V * V, axis=0)


def predict_var(x, model: SharedGplvmModel, space=Z_SPACE) -> np.ndarray:
    """Predictive variance of a new observation, repeated per output dimension.

    ``k(x, x) + noise - k*^T K^-1 k*``; negative values down to -1e-10 are
    clamped to zero, anything lower raises NumericalError.
    """
    _check_trained(model)
    Xq, single = _query(x, model)
    var = _latent_variance(Xq, model, space)
    if np.any(var < -VARIANCE_CLAMP):
        raise NumericalError(f"negative predictive variance {var.min():g}")
    var = np.maximum(var, 0.0)
    D = model._cache[space][3].shape[1]
    out = np.repeat(var[:, None], D, axis=1)
    return out[0] if single else out


def posterior_cov(X_seq, model: SharedGplvmModel, space=Z_SPACE) -> np.ndarray:
    """Joint predictive covariance over the query points (shared by all dims)."""
    _check_trained(model)
    Xq, _ = _query(X_seq, model)
    _, h = model._select(space)
    L = model._cache[space][1]
    Kss = kernels.gram_with_jitter(Xq, h, 0.0)
    V = scipy.linalg.solve_triangular(
        L, kernels.cross(model.latent_X, Xq, h), lower=True, check_finite=False
    )
    C = Kss - V.T @ V
    return 0.5 * (C + C.T)


def sample_sequence(X_seq, model: SharedGplvmModel, space=Z_SPACE, rng=None) -> np.ndarray:
    """Draw one trajectory from the joint posterior over the T query points.

    Each output dimension gets ``mean + L @ e`` with ``L`` the Cholesky factor
    of the posterior covariance and ``e`` standard normal.
    """
    if rng is None or isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    Xq, _ = _query(X_seq, model)
    mean = predict(Xq, model, space)
    C = posterior_cov(Xq, model, space)
    _, h = model._select(space)
    L = None
    for jitter in [0.0] + kernels.jitter_levels(h):
        try:
            L = scipy.linalg.cholesky(C + jitter * np.eye(len(C)), lower=True, check_finite=False)
            break
        except np.linalg.LinAlgError:
            continue
    if L is None:
        raise NumericalError("posterior covariance not factorisable after jitter escalation")
    return mean + L @ rng.standard_normal(mean.shape)


def retarget(seq, model: SharedGplvmModel, bc: BackConstraintMap | None = None):
    """Project each human frame to the latent space and predict robot angles.

    ``bc`` overrides the model's back constraint (used for patient profiles).
    Returns ``(robot_sequence, latent_sequence)``.
    """
    from .motion import LATENT, ROBOT

    _check_trained(model)
    X = project(seq.frames, bc or model.bc)
    Z = predict(X, model, Z_SPACE)
    return seq.with_frames(Z, kind=ROBOT), seq.with_frames(X, kind=LATENT)


def reconstruct(model: SharedGplvmModel, space) -> np.ndarray:
    """Posterior mean at the training latents."""
    return predict(model.latent_X, model, space)


__all__ = [
    "BackConstraintMap",
    "SharedGplvmModel",
    "TrainConfig",
    "joint_log_marginal",
    "log_marginal",
    "objective_and_grad",
    "predict",
    "predict_var",
    "project",
    "retarget",
    "sample_sequence",
    "train",
]
