"""Patient-specific re-weighting of the back constraint.

A patient with a physical limitation performs an exercise differently from
the therapist, yet the performance should land on the same latent points.
Only the back-constraint weights change: starting from the therapist's
``W`` we maximise

    L(W_P) = -1/(2 s2) * sum_t |h(y_t; W_P) - x*_t|^2 - lam * |W_P - W|^2

where ``x*`` is the ideal latent trajectory, ``s2`` the alignment variance
and ``lam`` an anchor toward the therapist weights.  Kernel hyperparameters
and the base model are left untouched.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import CompatibilityError, InvalidInputError, StateError
from .gplvm import BackConstraintMap, SharedGplvmModel, project
from .optim import OptimConfig, maximize

PROFILE_FORMAT = "latentcoach.patient-profile"
PROFILE_VERSION = 1


@dataclass(frozen=True)
class AdaptConfig:
    alignment_variance: float = 0.01
    anchor: float = 1e-3
    max_iters: int = 500
    tolerance: float = 1e-6
    method: str = "lbfgs"

    def __post_init__(self):
        if self.alignment_variance <= 0 or self.anchor < 0 or self.tolerance <= 0:
            raise InvalidInputError("invalid adaptation configuration")
        if self.max_iters < 1:
            raise InvalidInputError("max_iters must be >= 1")


@dataclass(eq=False)
class PartAdaptation:
    weights: np.ndarray
    exercise_id: int | None = None
    iterations: int = 0
    initial_objective: float = 0.0
    final_objective: float = 0.0
    converged: bool = False
    trace: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "W_P": np.asarray(self.weights).tolist(),
            "exercise_id": self.exercise_id,
            "iterations": self.iterations,
            "initial_objective": self.initial_objective,
            "final_objective": self.final_objective,
            "converged": self.converged,
        }

    @classmethod
    def from_dict(cls, d) -> "PartAdaptation":
        return cls(np.array(d["W_P"], dtype=float), d.get("exercise_id"), d.get("iterations", 0),
                   d.get("initial_objective", 0.0), d.get("final_objective", 0.0),
                   d.get("converged", False))


@dataclass(eq=False)
class PatientProfile:
    """Adapted weights per body part for one patient; never touches the base model."""

    patient_id: str
    parts: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "format": PROFILE_FORMAT,
            "version": PROFILE_VERSION,
            "patient_id": self.patient_id,
            "parts": {name: self.parts[name].to_dict() for name in sorted(self.parts)},
        }

    @classmethod
    def from_dict(cls, d) -> "PatientProfile":
        if d.get("format") != PROFILE_FORMAT or d.get("version") != PROFILE_VERSION:
            raise CompatibilityError(
                f"profile format {d.get('format')!r} v{d.get('version')!r}, expected "
                f"{PROFILE_FORMAT!r} v{PROFILE_VERSION}"
            )
        return cls(d["patient_id"], {k: PartAdaptation.from_dict(v) for k, v in d["parts"].items()})


def alignment_objective(W_P, Phi, X_star, W_base, cfg: AdaptConfig):
    """Objective value and gradient (same shape as ``W_P``)."""
    resid = Phi @ W_P - X_star
    delta = W_P - W_base
    f = -0.5 / cfg.alignment_variance * np.sum(resid * resid) - cfg.anchor * np.sum(delta * delta)
    g = -(Phi.T @ resid) / cfg.alignment_variance - 2.0 * cfg.anchor * delta
    return f, g


def adapt(Y_p, X_star, model: SharedGplvmModel, cfg: AdaptConfig | None = None,
          exercise_id=None) -> PartAdaptation:
    """Fit patient weights ``W_P`` so the patient's poses project onto ``X_star``.

    Parameters
    ----------
    Y_p : MotionSequence or ndarray (T, D_Y)
        Normalised patient poses for one body part.
    X_star : MotionSequence or ndarray (T, q)
        Ideal latent trajectory, already resampled to the patient's length.
    model : SharedGplvmModel
        Base (therapist) model; read only.
    """
    cfg = cfg or AdaptConfig()
    if model is None or not model.trained:
        raise StateError("adaptation needs a trained model")
    Y = np.asarray(getattr(Y_p, "frames", Y_p), dtype=float)
    Xs = np.asarray(getattr(X_star, "frames", X_star), dtype=float)
    if Y.ndim != 2 or Xs.ndim != 2 or len(Y) != len(Xs):
        raise InvalidInputError(
            f"patient sequence ({len(Y)} frames) and ideal trajectory ({len(Xs)} frames) "
            "must have equal length"
        )
    if Xs.shape[1] != model.q:
        raise InvalidInputError(f"ideal trajectory needs q={model.q} columns")
    Phi = model.bc.features(Y)
    W0 = np.array(model.bc.weights)
    shape = W0.shape

    def fun(w):
        f, g = alignment_objective(w.reshape(shape), Phi, Xs, W0, cfg)
        return f, g.ravel()

    res = maximize(fun, W0.ravel(), OptimConfig(max_iters=cfg.max_iters,
                                                grad_tolerance=cfg.tolerance,
                                                f_tolerance=0.0, method=cfg.method))
    return PartAdaptation(res.x.reshape(shape), exercise_id, res.n_iter, res.trace[0], res.f,
                          res.converged, res.trace)


def patient_map(model: SharedGplvmModel, entry: PartAdaptation) -> BackConstraintMap:
    if np.shape(entry.weights) != model.bc.weights.shape:
        raise CompatibilityError(
            f"profile weights {np.shape(entry.weights)} do not match model {model.bc.weights.shape}"
        )
    return model.bc.with_weights(entry.weights)


def project_patient(y, model: SharedGplvmModel, profile: PatientProfile, part=None) -> np.ndarray:
    """Project with the patient's weights instead of the therapist's."""
    part = part if part is not None else model.part
    if part not in profile.parts:
        raise StateError(f"profile {profile.patient_id!r} has no entry for part {part!r}")
    return project(y, patient_map(model, profile.parts[part]))
