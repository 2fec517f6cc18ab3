"""Time-augmented Gaussian mixture over the latent space, fitted by EM, and
Gaussian mixture regression of the latent position on the phase.

Points are ``(t, x)`` with ``t`` the phase in [0, 1] in column 0 and the
q latent coordinates after it.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.cluster.vq import kmeans2
from scipy.special import logsumexp

from .errors import ConvergenceError, InvalidInputError, NumericalError
from .motion import MotionSequence

log = logging.getLogger(__name__)

LOG_2PI = np.log(2.0 * np.pi)
EMPTY_MASS = 1e-10
MAX_RESCUES = 3


@dataclass(frozen=True)
class EmConfig:
    max_iters: int = 500
    tol: float = 1e-10
    floor: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if self.max_iters < 1 or self.tol < 0 or self.floor <= 0:
            raise InvalidInputError("invalid EM configuration")


@dataclass(eq=False)
class GmmModel:
    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray
    seed: int = 0
    log_likelihoods: list = field(default_factory=list)
    rescues: list = field(default_factory=list)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        self.means = np.atleast_2d(np.asarray(self.means, dtype=float))
        self.covariances = np.asarray(self.covariances, dtype=float)
        K, d = self.means.shape
        if self.weights.shape != (K,) or self.covariances.shape != (K, d, d):
            raise InvalidInputError("inconsistent GMM parameter shapes")
        if np.any(self.weights <= 0) or abs(self.weights.sum() - 1.0) > 1e-12:
            raise InvalidInputError("GMM weights must be positive and sum to 1")

    @property
    def K(self) -> int:
        return len(self.weights)

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def log_likelihood(self, points) -> float:
        return float(logsumexp(_component_logpdf(points, self), axis=1).sum())

    def to_dict(self) -> dict:
        return {
            "K": self.K,
            "seed": self.seed,
            "weights": self.weights.tolist(),
            "means": self.means.tolist(),
            "covariances": self.covariances.tolist(),
        }

    @classmethod
    def from_dict(cls, d) -> "GmmModel":
        gmm = cls(d["weights"], d["means"], d["covariances"], seed=d.get("seed", 0))
        if gmm.K != d["K"]:
            raise InvalidInputError(f"GMM lists {gmm.K} components but K={d['K']}")
        return gmm


@dataclass(frozen=True)
class GmrPrediction:
    mean: np.ndarray
    covariance: np.ndarray
    responsibilities: np.ndarray


def _component_logpdf(points, gmm: GmmModel) -> np.ndarray:
    """``log phi_k + log N(x_i | mu_k, Sigma_k)`` as an (n, K) array."""
    n, d = points.shape
    out = np.empty((n, gmm.K))
    for k in range(gmm.K):
        L = scipy.linalg.cholesky(gmm.covariances[k], lower=True, check_finite=False)
        r = scipy.linalg.solve_triangular(L, (points - gmm.means[k]).T, lower=True,
                                          check_finite=False)
        out[:, k] = (np.log(gmm.weights[k]) - 0.5 * d * LOG_2PI
                     - np.sum(np.log(np.diag(L))) - 0.5 * np.sum(r * r, axis=0))
    return out


def _regularize(cov, scale, floor):
    """Clip eigenvalues of the standardized covariance at ``floor``.

    In coordinates scaled by ``scale`` (per-dimension data std) this is the
    exact maximiser of the Gaussian likelihood under an eigenvalue bound, so
    EM stays monotone; it also implies ``diag >= floor * scale**2``.
    """
    c = 0.5 * (cov + cov.T) / np.outer(scale, scale)
    lam, V = np.linalg.eigh(c)
    if lam.min() >= floor:
        return 0.5 * (cov + cov.T)
    c = (V * np.maximum(lam, floor)) @ V.T
    c = 0.5 * (c + c.T) * np.outer(scale, scale)
    try:
        scipy.linalg.cholesky(c, lower=True, check_finite=False)
    except np.linalg.LinAlgError:
        raise NumericalError("covariance not positive definite after regularisation") from None
    return c


def _m_step(points, resp, scale, floor):
    Nk = resp.sum(axis=0)
    means = (resp.T @ points) / Nk[:, None]
    covs = np.empty((len(Nk), points.shape[1], points.shape[1]))
    for k in range(len(Nk)):
        diff = points - means[k]
        covs[k] = _regularize((resp[:, k, None] * diff).T @ diff / Nk[k], scale, floor)
    return Nk / Nk.sum(), means, covs


def em_fit(points, K: int, cfg: EmConfig | None = None) -> GmmModel:
    """Fit a K-component full-covariance GMM by expectation-maximisation.

    Initialised from seeded k-means++ labels.  Covariance eigenvalues are
    floored at ``cfg.floor`` after standardizing each dimension by the data
    std, which floors the diagonal at ``cfg.floor`` times the data variance.  A
    component whose responsibility mass drops below 1e-10 is re-seeded at the
    worst-fit point; more than three such rescues raise ConvergenceError.

    The returned model carries the per-iteration log-likelihood trace in
    ``log_likelihoods`` and the iterations at which rescues happened.
    """
    cfg = cfg or EmConfig()
    points = np.asarray(points, dtype=float)
    if points.ndim != 2:
        raise InvalidInputError("points must be a 2-D array")
    n, d = points.shape
    if K < 1:
        raise InvalidInputError(f"K must be >= 1, got {K}")
    if n < K * (d + 1):
        raise InvalidInputError(f"need at least K*(q+2) = {K * (d + 1)} points, got {n}")
    if not np.all(np.isfinite(points)):
        raise InvalidInputError("points contain non-finite values")
    var = points.var(axis=0)
    scale = np.sqrt(np.where(var > 0, var, 1.0))
    rng = np.random.default_rng(cfg.seed)

    if K == 1:
        labels = np.zeros(n, dtype=int)
    else:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            _, labels = kmeans2(points, K, minit="++", seed=rng)
    resp = np.zeros((n, K))
    resp[np.arange(n), labels] = 1.0

    rescues = []
    trace = []
    weights = means = covs = None
    for it in range(cfg.max_iters + 1):
        Nk = resp.sum(axis=0)
        empty = np.flatnonzero(Nk < EMPTY_MASS)
        if empty.size:
            if len(rescues) + empty.size > MAX_RESCUES:
                raise ConvergenceError(f"EM components kept collapsing (iteration {it})")
            if weights is None:
                worst = rng.permutation(n)[: empty.size]
            else:
                cur = GmmModel(weights, means, covs)
                worst = np.argsort(logsumexp(_component_logpdf(points, cur), axis=1))[: empty.size]
            for k, i in zip(empty, worst):
                resp[i] = 0.0
                resp[i, k] = 1.0
                rescues.append(it)
            log.debug("EM rescued %d empty component(s) at iteration %d", empty.size, it)
        weights, means, covs = _m_step(points, resp, scale, cfg.floor)
        gmm = GmmModel(weights / weights.sum(), means, covs)
        comp = _component_logpdf(points, gmm)
        norm = logsumexp(comp, axis=1)
        ll = float(norm.sum())
        resp = np.exp(comp - norm[:, None])
        trace.append(ll)
        if it > 0 and abs(ll - trace[-2]) <= cfg.tol * max(1.0, abs(ll)):
            break
    return GmmModel(gmm.weights, gmm.means, gmm.covariances, seed=cfg.seed,
                    log_likelihoods=trace, rescues=rescues)


def gmr(t, gmm: GmmModel) -> GmrPrediction:
    """Condition the mixture on phase ``t`` and moment-match a single Gaussian.

    Component ``k`` contributes ``mu_k(t) = mu_x + S_xt / S_tt (t - mu_t)`` and
    ``S_k = S_xx - S_xt S_xt^T / S_tt`` with weight ``h_k(t)`` proportional to
    ``phi_k N(t | mu_t, S_tt)``.  The result has mean ``sum h_k mu_k(t)`` and
    covariance ``sum h_k (S_k + mu_k mu_k^T) - mean mean^T``.
    """
    t = float(t)
    mu_t = gmm.means[:, 0]
    mu_x = gmm.means[:, 1:]
    s_tt = gmm.covariances[:, 0, 0]
    s_xt = gmm.covariances[:, 1:, 0]
    s_xx = gmm.covariances[:, 1:, 1:]

    with np.errstate(over="ignore", divide="ignore"):  # underflow is checked below
        log_h = np.log(gmm.weights) - 0.5 * (LOG_2PI + np.log(s_tt) + (t - mu_t) ** 2 / s_tt)
    norm = logsumexp(log_h)
    if not np.isfinite(norm):
        raise NumericalError(f"all GMR responsibilities underflow at t={t}")
    h = np.exp(log_h - norm)

    cond_mu = mu_x + s_xt * ((t - mu_t) / s_tt)[:, None]
    cond_cov = s_xx - np.einsum("ki,kj->kij", s_xt, s_xt) / s_tt[:, None, None]
    mean = h @ cond_mu
    second = np.einsum("k,kij->ij", h, cond_cov + np.einsum("ki,kj->kij", cond_mu, cond_mu))
    cov = second - np.outer(mean, mean)
    cov = 0.5 * (cov + cov.T)
    w, V = np.linalg.eigh(cov)
    if w.min() < -1e-10:
        raise NumericalError(f"GMR covariance has eigenvalue {w.min():g}")
    if w.min() < 0:
        cov = (V * np.maximum(w, 0.0)) @ V.T
        cov = 0.5 * (cov + cov.T)
    return GmrPrediction(mean, cov, h)


@dataclass(frozen=True, eq=False)
class IdealTrajectory:
    """GMR mean (``latent``, T x q) and covariance at uniformly spaced phases."""

    phase: np.ndarray
    latent: np.ndarray
    covariance: np.ndarray
    gmm: GmmModel

    def as_sequence(self, duration: float = 1.0, part=None) -> MotionSequence:
        return MotionSequence(self.phase * duration, self.latent, kind="latent", part=part)


def pool_demos(demos) -> np.ndarray:
    """Stack ``(phase, latent)`` rows from phase-normalised demonstrations."""
    return np.vstack([np.column_stack([s.phase, s.frames]) for s in demos])


def ideal_trajectory(demos, K: int = 6, T_out: int = 100,
                     cfg: EmConfig | None = None) -> IdealTrajectory:
    """Distil latent demonstrations into one trajectory via GMM + GMR.

    Parameters
    ----------
    demos : list of MotionSequence
        Latent sub-sequences (T_i x q), at least two.
    K : int
        Mixture components.
    T_out : int
        Number of output phases, uniformly spaced in [0, 1].
    """
    if len(demos) < 2:
        raise InvalidInputError("ideal trajectory needs at least 2 demonstrations")
    if T_out < 2:
        raise InvalidInputError("T_out must be >= 2")
    dims = {s.dim for s in demos}
    if len(dims) != 1:
        raise InvalidInputError(f"demonstrations disagree on latent dimension: {sorted(dims)}")
    gmm = em_fit(pool_demos(demos), K, cfg)
    phase = np.linspace(0.0, 1.0, T_out)
    preds = [gmr(t, gmm) for t in phase]
    return IdealTrajectory(
        phase,
        np.array([p.mean for p in preds]),
        np.array([p.covariance for p in preds]),
        gmm,
    )
