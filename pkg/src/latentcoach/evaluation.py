"""Motor-angle error metrics and the sampled evaluation protocol."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import InvalidInputError
from .gplvm import Z_SPACE, sample_sequence
from .motion import MotionSequence, resample_phase

DEGENERATE_STD = 1e-6


def _frames(x) -> np.ndarray:
    arr = np.asarray(getattr(x, "frames", x), dtype=float)
    return arr[:, None] if arr.ndim == 1 else arr


def _check_pair(a, b):
    if a.shape != b.shape:
        raise InvalidInputError(f"sequence shapes differ: {a.shape} vs {b.shape}")


def align_to(pred, truth):
    """Phase-resample ``pred`` to the length of ``truth`` when they differ."""
    if isinstance(pred, MotionSequence) and isinstance(truth, MotionSequence) \
            and len(pred) != len(truth):
        return resample_phase(pred, len(truth))
    return pred


def rmse(a, b) -> float:
    """Root mean squared difference over all frames and motors (degrees)."""
    a, b = _frames(a), _frames(b)
    _check_pair(a, b)
    d = a - b
    # scale first so tiny differences do not underflow to zero when squared
    scale = np.max(np.abs(d)) if d.size else 0.0
    if scale == 0.0 or not np.isfinite(scale):
        return float(scale)
    return float(scale * np.sqrt(np.mean((d / scale) ** 2)))


def normalized_rmse(a, b, reference, return_details=False):
    """Mean over motors of per-motor RMSE divided by the reference's std.

    Motors whose reference std is below 1e-6 deg are skipped; with
    ``return_details`` the per-motor ratios and skipped indices are returned
    as well.
    """
    a, b, ref = _frames(a), _frames(b), _frames(reference)
    _check_pair(a, b)
    if ref.shape[1] != a.shape[1]:
        raise InvalidInputError("reference has a different motor count")
    std = ref.std(axis=0)
    keep = std >= DEGENERATE_STD
    if not np.any(keep):
        raise InvalidInputError("every motor of the reference is static; cannot normalise")
    per_motor = np.sqrt(np.mean((a - b) ** 2, axis=0))
    ratios = np.full(a.shape[1], np.nan)
    ratios[keep] = per_motor[keep] / std[keep]
    value = float(np.mean(ratios[keep]))
    if return_details:
        return value, ratios, np.flatnonzero(~keep).tolist()
    return value


@dataclass(frozen=True)
class SampledEval:
    mean: float
    std: float
    values: tuple
    n_samples: int
    seed: int | None


def sampled_eval(X_seq, model, ground_truth, n_samples: int = 10, rng=None,
                 space=Z_SPACE) -> SampledEval:
    """RMSE of ``n_samples`` posterior draws along ``X_seq`` against ``ground_truth``.

    Reports the mean and the sample standard deviation (ddof=1) of the RMSEs.
    """
    if n_samples < 1:
        raise InvalidInputError("n_samples must be >= 1")
    seed = rng if isinstance(rng, (int, np.integer)) else None
    if rng is None or seed is not None:
        rng = np.random.default_rng(seed)
    X = _frames(X_seq)
    gt = _frames(ground_truth)
    if len(X) != len(gt):
        raise InvalidInputError(f"{len(X)} latent points but {len(gt)} ground-truth frames")
    values = tuple(rmse(sample_sequence(X, model, space, rng), gt) for _ in range(n_samples))
    std = float(np.std(values, ddof=1)) if n_samples > 1 else 0.0
    return SampledEval(float(np.mean(values)), std, values, n_samples,
                       None if seed is None else int(seed))


# --------------------------------------------------------------------------
# Reports
# --------------------------------------------------------------------------


@dataclass
class EvalRow:
    label: str
    rmse: float | None = None
    normalized_rmse: float | None = None
    sampled_mean: float | None = None
    sampled_std: float | None = None
    excluded_motors: list = field(default_factory=list)


@dataclass
class EvalReport:
    rows: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def add(self, row: EvalRow):
        if row.rmse is not None and row.rmse < 0 or row.sampled_std is not None and row.sampled_std < 0:
            raise InvalidInputError("RMSE and std must be non-negative")
        self.rows.append(row)

    def to_dict(self) -> dict:
        return {"rows": [asdict(r) for r in self.rows], "metadata": dict(self.metadata)}

    def to_text(self) -> str:
        header = ["", "RMSE (deg)", "Normalized RMSE", "Sampled RMSE (deg)"]
        body = []
        for r in self.rows:
            sampled = "" if r.sampled_mean is None else f"{r.sampled_mean:.2f} +/- {r.sampled_std:.2f}"
            body.append([
                r.label,
                "" if r.rmse is None else f"{r.rmse:.2f}",
                "" if r.normalized_rmse is None else f"{r.normalized_rmse:.3f}",
                sampled,
            ])
        widths = [max(len(row[i]) for row in [header] + body) for i in range(len(header))]

        def fmt(row):
            cells = [row[0].ljust(widths[0])] + [c.rjust(w) for c, w in zip(row[1:], widths[1:])]
            return "  ".join(cells).rstrip()

        rule = "-" * len(fmt(header))
        lines = [rule, fmt(header), rule] + [fmt(r) for r in body] + [rule]
        for k in sorted(self.metadata):
            lines.append(f"{k}: {self.metadata[k]}")
        return "\n".join(lines) + "\n"
