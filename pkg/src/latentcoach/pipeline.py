"""Whole-body orchestration: one shared GP-LVM per body part.

Human sequences are normalised once, split by body part, and each part is
handled by its own model.  Robot outputs are merged back into 13-motor
sequences.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .adaptation import AdaptConfig, PatientProfile, adapt, patient_map
from .errors import CompatibilityError, InvalidInputError, ParseError, StateError
from .evaluation import SampledEval, rmse
from .gplvm import Z_SPACE, SharedGplvmModel, TrainConfig, predict, project, sample_sequence, train
from .motion import (
    MOTOR_NAMES,
    BodyPart,
    BodyPartPartition,
    LATENT,
    ROBOT,
    MotionSequence,
    default_partition,
    merge_parts,
    normalize,
    resample_phase,
    split_by_part,
)
from .trajectory import EmConfig, GmmModel, IdealTrajectory, ideal_trajectory

log = logging.getLogger(__name__)

BODY_FORMAT = "latentcoach.body-model"
BODY_VERSION = 1
IDEAL_FORMAT = "latentcoach.ideal-trajectory"
IDEAL_VERSION = 1


def dump_json(obj, path):
    """Deterministic JSON (sorted keys, shortest round-trip floats)."""
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=1) + "\n", encoding="utf-8")


def load_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"{path}: cannot read JSON ({exc})") from exc


def _partition_dict(p: BodyPartPartition) -> list:
    return [{"name": b.name, "human_joints": list(b.human_joints),
             "robot_motors": list(b.robot_motors)} for b in p.parts]


def _partition_from(d) -> BodyPartPartition:
    return BodyPartPartition(tuple(BodyPart(x["name"], tuple(x["human_joints"]),
                                            tuple(x["robot_motors"])) for x in d))


@dataclass(eq=False)
class BodyModel:
    """Per-part shared GP-LVMs plus the partition they were trained with."""

    models: dict
    partition: BodyPartPartition = field(default_factory=default_partition)

    def __getitem__(self, part) -> SharedGplvmModel:
        if part not in self.models:
            raise StateError(f"no trained model for body part {part!r}")
        return self.models[part]

    @property
    def complete(self) -> bool:
        return all(n in self.models for n in self.partition.names)

    def to_dict(self) -> dict:
        return {
            "format": BODY_FORMAT,
            "version": BODY_VERSION,
            "partition": _partition_dict(self.partition),
            "parts": {n: self.models[n].to_dict() for n in self.partition.names if n in self.models},
        }

    @classmethod
    def from_dict(cls, d) -> "BodyModel":
        if d.get("format") != BODY_FORMAT or d.get("version") != BODY_VERSION:
            raise CompatibilityError(
                f"model file format {d.get('format')!r} v{d.get('version')!r}, expected "
                f"{BODY_FORMAT!r} v{BODY_VERSION}"
            )
        partition = _partition_from(d["partition"])
        return cls({n: SharedGplvmModel.from_dict(m) for n, m in d["parts"].items()}, partition)

    def save(self, path):
        dump_json(self.to_dict(), path)

    @classmethod
    def load(cls, path) -> "BodyModel":
        return cls.from_dict(load_json(path))


def split_human(seq: MotionSequence, partition=None) -> dict:
    return split_by_part(normalize(seq), partition or default_partition())


def _select_parts(partition, parts):
    if parts is None or parts == "all":
        return list(partition.names)
    if isinstance(parts, str):
        parts = [parts]
    unknown = [p for p in parts if p not in partition.names]
    if unknown:
        raise InvalidInputError(f"unknown body part(s): {unknown}")
    return list(parts)


def training_arrays(pairs, partition=None):
    """Per-part stacked (Y, Z) training rows from (human, robot) sequence pairs."""
    partition = partition or default_partition()
    Ys = {n: [] for n in partition.names}
    Zs = {n: [] for n in partition.names}
    for human, robot in pairs:
        if len(human) != len(robot):
            raise InvalidInputError(
                f"paired sequences differ in length ({len(human)} vs {len(robot)})"
            )
        h = split_human(human, partition)
        r = split_by_part(robot, partition)
        for n in partition.names:
            Ys[n].append(h[n].frames)
            Zs[n].append(r[n].frames)
    return {n: (np.vstack(Ys[n]), np.vstack(Zs[n])) for n in partition.names}


def train_body(pairs, cfg: TrainConfig | None = None, parts=None, partition=None) -> BodyModel:
    """Train one shared GP-LVM per selected body part."""
    partition = partition or default_partition()
    if not pairs:
        raise InvalidInputError("no training sequences given")
    names = _select_parts(partition, parts)
    arrays = training_arrays(pairs, partition)
    models = {}
    for n in names:
        Y, Z = arrays[n]
        log.info("training %s on %d frames", n, len(Y))
        models[n] = train(Y, Z, cfg, part=n)
    return BodyModel(models, partition)


def _part_map(body, part, profile):
    model = body[part]
    if profile is not None and part in profile.parts:
        return patient_map(model, profile.parts[part])
    return model.bc


def latent_parts(human: MotionSequence, body: BodyModel, profile=None, parts=None) -> dict:
    """Latent sub-sequences per part (patient weights used where the profile has them)."""
    split = split_human(human, body.partition)
    out = {}
    for n in _select_parts(body.partition, parts):
        X = project(split[n].frames, _part_map(body, n, profile))
        out[n] = split[n].with_frames(X, kind=LATENT)
    return out


def robot_from_latents(latents: dict, body: BodyModel) -> MotionSequence:
    """Predict robot angles per part and merge them into full 13-motor frames."""
    if not body.complete or set(latents) != set(body.partition.names):
        raise StateError("whole-body robot output needs latents and models for every part")
    subs = {n: seq.with_frames(predict(seq.frames, body[n]), kind=ROBOT) for n, seq in latents.items()}
    return merge_parts(subs, body.partition)


def retarget_body(human: MotionSequence, body: BodyModel, profile=None):
    """Human sequence -> (robot sequence, latent sub-sequences)."""
    latents = latent_parts(human, body, profile)
    return robot_from_latents(latents, body), latents


def motor_layout(names, partition=None):
    """Sorted robot-motor indices covered by the named parts, and their column names."""
    partition = partition or default_partition()
    idx = sorted(m for n in names for m in partition[n].robot_motors)
    return idx, tuple(MOTOR_NAMES[i] for i in idx)


def _assemble(per_part: dict, partition, template: MotionSequence) -> np.ndarray:
    idx, _ = motor_layout(per_part, partition)
    pos = {m: i for i, m in enumerate(idx)}
    out = np.zeros((len(template), len(idx)))
    for n, frames in per_part.items():
        out[:, [pos[m] for m in partition[n].robot_motors]] = frames
    return out


def robot_subset(latents: dict, body: BodyModel):
    """Robot prediction for any subset of parts.

    Returns ``(frames, columns)`` with motors in index order; for all parts
    this equals the full 13-motor layout.
    """
    template = next(iter(latents.values()))
    frames = _assemble({n: predict(seq.frames, body[n]) for n, seq in latents.items()},
                       body.partition, template)
    return frames, motor_layout(latents, body.partition)[1]


def sampled_body_eval(latents: dict, body: BodyModel, truth, n_samples=10, seed=0) -> SampledEval:
    """Sampled RMSE over the motors of the given parts (parts drawn independently)."""
    if n_samples < 1:
        raise InvalidInputError("n_samples must be >= 1")
    rng = np.random.default_rng(seed)
    template = next(iter(latents.values()))
    truth = np.asarray(getattr(truth, "frames", truth), dtype=float)
    values = []
    for _ in range(n_samples):
        draw = {n: sample_sequence(latents[n].frames, body[n], Z_SPACE, rng)
                for n in body.partition.names if n in latents}
        values.append(rmse(_assemble(draw, body.partition, template), truth))
    std = float(np.std(values, ddof=1)) if n_samples > 1 else 0.0
    return SampledEval(float(np.mean(values)), std, tuple(values), n_samples, int(seed))


@dataclass(eq=False)
class BodyIdeal:
    """Ideal latent trajectories per part for one exercise."""

    trajectories: dict
    timestamps: np.ndarray
    exercise_id: int | None = None
    seed: int = 0

    def latent(self, part) -> MotionSequence:
        tr = self.trajectories[part]
        return MotionSequence(self.timestamps, tr.latent, kind=LATENT, part=part)

    def latents(self) -> dict:
        return {n: self.latent(n) for n in self.trajectories}

    def to_dict(self) -> dict:
        return {
            "format": IDEAL_FORMAT,
            "version": IDEAL_VERSION,
            "exercise_id": self.exercise_id,
            "seed": self.seed,
            "timestamps": self.timestamps.tolist(),
            "parts": {
                n: {
                    "latent": tr.latent.tolist(),
                    "covariance": tr.covariance.tolist(),
                    "gmm": tr.gmm.to_dict(),
                }
                for n, tr in sorted(self.trajectories.items())
            },
        }

    @classmethod
    def from_dict(cls, d) -> "BodyIdeal":
        if d.get("format") != IDEAL_FORMAT or d.get("version") != IDEAL_VERSION:
            raise CompatibilityError(
                f"ideal file format {d.get('format')!r} v{d.get('version')!r}, expected "
                f"{IDEAL_FORMAT!r} v{IDEAL_VERSION}"
            )
        ts = np.array(d["timestamps"], dtype=float)
        phase = (ts - ts[0]) / (ts[-1] - ts[0])
        trs = {
            n: IdealTrajectory(phase, np.array(p["latent"], dtype=float),
                               np.array(p["covariance"], dtype=float), GmmModel.from_dict(p["gmm"]))
            for n, p in d["parts"].items()
        }
        return cls(trs, ts, d.get("exercise_id"), d.get("seed", 0))


def ideal_body(demos, body: BodyModel, K: int = 6, T_out: int | None = None,
               em: EmConfig | None = None, exercise_id=None, parts=None) -> BodyIdeal:
    """GMM/GMR ideal trajectory per part from therapist human demonstrations."""
    if len(demos) < 2:
        raise InvalidInputError("ideal trajectory needs at least 2 demonstrations")
    T_out = T_out or len(demos[0])
    names = _select_parts(body.partition, parts)
    per_demo = [latent_parts(d, body, parts=names) for d in demos]
    trs = {n: ideal_trajectory([p[n] for p in per_demo], K, T_out, em) for n in names}
    t0, t1 = demos[0].timestamps[0], demos[0].timestamps[-1]
    ts = t0 + np.linspace(0.0, 1.0, T_out) * (t1 - t0)
    return BodyIdeal(trs, ts, exercise_id, em.seed if em else 0)


def adapt_body(patient: MotionSequence, ideal: BodyIdeal, body: BodyModel,
               cfg: AdaptConfig | None = None, patient_id="patient", parts=None,
               profile: PatientProfile | None = None) -> PatientProfile:
    """Adapt back-constraint weights of the selected parts to one patient sequence.

    The ideal trajectory is phase-resampled to the patient's frame count.
    """
    names = _select_parts(body.partition, parts)
    missing = [n for n in names if n not in ideal.trajectories]
    if missing:
        raise InvalidInputError(f"ideal trajectory lacks parts {missing}")
    split = split_human(patient, body.partition)
    profile = profile or PatientProfile(patient_id)
    for n in names:
        x_star = resample_phase(ideal.latent(n), len(patient))
        profile.parts[n] = adapt(split[n], x_star, body[n], cfg, exercise_id=ideal.exercise_id)
    return profile
