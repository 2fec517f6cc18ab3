"""Pose and sequence data model, body-part partitioning and CSV ingestion.

Joint order (12 joints, 3D positions in metres, flattened to 36 values)::

    0 spine-base  1 spine-mid   2 neck        3 head
    4 L-shoulder  5 L-elbow     6 L-wrist
    7 R-shoulder  8 R-elbow     9 R-wrist
    10 L-hip      11 R-hip

Motor order (13 angles in degrees) follows the Poppy torso naming.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidInputError, ParseError

JOINT_NAMES = (
    "spine_base", "spine_mid", "neck", "head",
    "l_shoulder", "l_elbow", "l_wrist",
    "r_shoulder", "r_elbow", "r_wrist",
    "l_hip", "r_hip",
)
MOTOR_NAMES = (
    "abs_z", "bust_y", "bust_x", "head_z", "head_y",
    "l_shoulder_y", "l_shoulder_x", "l_arm_z", "l_elbow_y",
    "r_shoulder_y", "r_shoulder_x", "r_arm_z", "r_elbow_y",
)
N_JOINTS = len(JOINT_NAMES)
N_MOTORS = len(MOTOR_NAMES)
HUMAN_DIM = 3 * N_JOINTS
ROOT_JOINT = 0
TORSO_TOP_JOINT = 2  # neck; torso length is |neck - spine_base|
MIN_TORSO_LENGTH = 1e-6

HUMAN = "human"
ROBOT = "robot"
LATENT = "latent"

HUMAN_COLUMNS = tuple(f"{j}_{c}" for j in JOINT_NAMES for c in "xyz")
ROBOT_COLUMNS = MOTOR_NAMES


def joint_columns(joints) -> np.ndarray:
    """Flat column indices of the x, y, z coordinates of ``joints``."""
    joints = np.asarray(joints, dtype=int)
    return (3 * joints[:, None] + np.arange(3)[None, :]).ravel()


@dataclass(frozen=True)
class BodyPart:
    name: str
    human_joints: tuple
    robot_motors: tuple

    @property
    def human_columns(self) -> np.ndarray:
        return joint_columns(self.human_joints)


@dataclass(frozen=True)
class BodyPartPartition:
    """Ordered body parts with disjoint joint and motor index sets.

    Joint indices must jointly cover all ``n_joints`` joints and motor indices
    all ``n_motors`` motors, so that splitting is lossless.
    """

    parts: tuple
    n_joints: int = N_JOINTS
    n_motors: int = N_MOTORS

    def __post_init__(self):
        if not self.parts:
            raise InvalidInputError("partition needs at least one part")
        names = [p.name for p in self.parts]
        if len(set(names)) != len(names):
            raise InvalidInputError(f"duplicate part names: {names}")
        for label, attr, size in (
            ("joint", "human_joints", self.n_joints),
            ("motor", "robot_motors", self.n_motors),
        ):
            seen = []
            for p in self.parts:
                idx = list(getattr(p, attr))
                if any(i < 0 or i >= size for i in idx):
                    raise InvalidInputError(f"{label} index out of range in part {p.name!r}")
                seen.extend(idx)
            if len(seen) != len(set(seen)):
                raise InvalidInputError(f"overlapping {label} indices across parts")
            if sorted(seen) != list(range(size)):
                raise InvalidInputError(f"{label} indices do not cover all {size} {label}s")

    @property
    def names(self):
        return [p.name for p in self.parts]

    def __getitem__(self, name) -> BodyPart:
        for p in self.parts:
            if p.name == name:
                return p
        raise KeyError(name)


def default_partition() -> BodyPartPartition:
    return BodyPartPartition(
        (
            BodyPart("left-arm", (4, 5, 6), (5, 6, 7, 8)),
            BodyPart("right-arm", (7, 8, 9), (9, 10, 11, 12)),
            BodyPart("spine", (0, 1, 2, 3, 10, 11), (0, 1, 2, 3, 4)),
        )
    )


@dataclass(frozen=True)
class MotorRanges:
    """Per-motor angle limits in degrees; defaults to [-180, 180] everywhere."""

    lower: tuple = (-180.0,) * N_MOTORS
    upper: tuple = (180.0,) * N_MOTORS

    def __post_init__(self):
        lo, hi = np.asarray(self.lower, float), np.asarray(self.upper, float)
        if lo.shape != hi.shape or np.any(hi <= lo):
            raise InvalidInputError("motor ranges need lower < upper for every motor")

    @property
    def span(self) -> np.ndarray:
        return np.asarray(self.upper, float) - np.asarray(self.lower, float)

    @property
    def mean_span(self) -> float:
        return float(self.span.mean())

    def check(self, angles, motors=None):
        angles = np.asarray(angles, dtype=float)
        lo = np.asarray(self.lower, float)
        hi = np.asarray(self.upper, float)
        if motors is not None:
            lo, hi = lo[list(motors)], hi[list(motors)]
        bad = (angles < lo) | (angles > hi)
        if np.any(bad):
            where = np.argwhere(bad)[0]
            raise InvalidInputError(
                f"motor angle {angles[tuple(where)]:g} deg outside range at index {tuple(where)}"
            )


@dataclass(frozen=True, eq=False)
class MotionSequence:
    """Timestamped sequence of pose vectors (T x D).

    ``kind`` is ``"human"``, ``"robot"`` or ``"latent"``; ``part`` names the
    body part for sub-sequences and is None for whole-body data.
    """

    timestamps: np.ndarray
    frames: np.ndarray
    kind: str = HUMAN
    part: str | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        t = np.asarray(self.timestamps, dtype=float)
        f = np.asarray(self.frames, dtype=float)
        if f.ndim == 1:
            f = f[:, None]
        if t.ndim != 1 or f.ndim != 2 or len(t) != len(f):
            raise InvalidInputError(
                f"timestamps {t.shape} and frames {f.shape} do not describe one sequence"
            )
        if len(t) < 2:
            raise InvalidInputError("a motion sequence needs at least 2 frames")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(f))):
            raise InvalidInputError("motion sequence contains non-finite values")
        if np.any(np.diff(t) <= 0):
            raise InvalidInputError("timestamps must be strictly increasing")
        if self.part is None and self.kind == HUMAN and f.shape[1] != HUMAN_DIM:
            raise InvalidInputError(f"human frames need {HUMAN_DIM} values, got {f.shape[1]}")
        if self.part is None and self.kind == ROBOT and f.shape[1] != N_MOTORS:
            raise InvalidInputError(f"robot frames need {N_MOTORS} values, got {f.shape[1]}")
        t.setflags(write=False)
        f.setflags(write=False)
        object.__setattr__(self, "timestamps", t)
        object.__setattr__(self, "frames", f)

    def __len__(self):
        return len(self.timestamps)

    @property
    def dim(self) -> int:
        return self.frames.shape[1]

    @property
    def phase(self) -> np.ndarray:
        t = self.timestamps
        return (t - t[0]) / (t[-1] - t[0])

    def with_frames(self, frames, kind=None, part=None) -> "MotionSequence":
        return MotionSequence(
            self.timestamps,
            frames,
            kind=self.kind if kind is None else kind,
            part=self.part if part is None else part,
            meta=dict(self.meta),
        )


def uniform_timestamps(n: int, duration: float = 1.0) -> np.ndarray:
    return np.linspace(0.0, duration, n)


def normalize(seq: MotionSequence) -> MotionSequence:
    """Root-centre every frame and divide by the mean torso length.

    Invariant to global translation and uniform scaling of the skeleton, and
    idempotent.
    """
    if seq.kind != HUMAN or seq.part is not None:
        raise InvalidInputError("normalize expects a whole-body human sequence")
    joints = seq.frames.reshape(len(seq), N_JOINTS, 3)
    centred = joints - joints[:, ROOT_JOINT : ROOT_JOINT + 1, :]
    torso = np.linalg.norm(centred[:, TORSO_TOP_JOINT, :], axis=1).mean()
    if torso < MIN_TORSO_LENGTH:
        raise InvalidInputError(f"degenerate torso length {torso:g} m")
    return seq.with_frames((centred / torso).reshape(len(seq), HUMAN_DIM))


def _part_columns(part: BodyPart, kind: str) -> np.ndarray:
    if kind == HUMAN:
        return part.human_columns
    if kind == ROBOT:
        return np.asarray(part.robot_motors, dtype=int)
    raise InvalidInputError(f"cannot split a {kind!r} sequence by body part")


def _full_dim(partition: BodyPartPartition, kind: str) -> int:
    return 3 * partition.n_joints if kind == HUMAN else partition.n_motors


def split_by_part(seq: MotionSequence, partition: BodyPartPartition | None = None):
    """Column-select one sub-sequence per body part (ordered dict name -> seq)."""
    partition = partition or default_partition()
    if seq.frames.shape[1] != _full_dim(partition, seq.kind):
        raise InvalidInputError(
            f"{seq.kind} sequence has {seq.frames.shape[1]} columns, partition expects "
            f"{_full_dim(partition, seq.kind)}"
        )
    out = {}
    for p in partition.parts:
        cols = _part_columns(p, seq.kind)
        out[p.name] = MotionSequence(
            seq.timestamps, seq.frames[:, cols], kind=seq.kind, part=p.name, meta=dict(seq.meta)
        )
    return out


def merge_parts(sub_seqs, partition: BodyPartPartition | None = None) -> MotionSequence:
    """Inverse of :func:`split_by_part`."""
    partition = partition or default_partition()
    missing = [n for n in partition.names if n not in sub_seqs]
    if missing:
        raise InvalidInputError(f"missing body parts: {missing}")
    first = sub_seqs[partition.names[0]]
    kind = first.kind
    T = len(first)
    frames = np.empty((T, _full_dim(partition, kind)))
    for p in partition.parts:
        sub = sub_seqs[p.name]
        if len(sub) != T or sub.kind != kind:
            raise InvalidInputError("sub-sequences differ in length or kind")
        if not np.array_equal(sub.timestamps, first.timestamps):
            raise InvalidInputError("sub-sequences have different timestamps")
        cols = _part_columns(p, kind)
        if sub.dim != len(cols):
            raise InvalidInputError(f"part {p.name!r} has {sub.dim} columns, expected {len(cols)}")
        frames[:, cols] = sub.frames
    # whole-body validation only applies to the default sizes
    part = None if frames.shape[1] in (HUMAN_DIM, N_MOTORS) else "merged"
    return MotionSequence(first.timestamps, frames, kind=kind, part=part, meta=dict(first.meta))


def resample_phase(seq: MotionSequence, n: int) -> MotionSequence:
    """Linearly interpolate ``seq`` at ``n`` uniformly spaced phases in [0, 1].

    The first and last frames are preserved exactly; timestamps span the
    original duration.
    """
    if n < 2:
        raise InvalidInputError(f"resample needs n >= 2, got {n}")
    src = seq.phase
    dst = np.linspace(0.0, 1.0, n)
    frames = np.column_stack([np.interp(dst, src, col) for col in seq.frames.T])
    frames[0] = seq.frames[0]
    frames[-1] = seq.frames[-1]
    t0, t1 = seq.timestamps[0], seq.timestamps[-1]
    ts = t0 + dst * (t1 - t0)
    ts[-1] = t1
    return MotionSequence(ts, frames, kind=seq.kind, part=seq.part, meta=dict(seq.meta))


def concat_frames(seqs) -> np.ndarray:
    return np.vstack([s.frames for s in seqs])


# --------------------------------------------------------------------------
# CSV
# --------------------------------------------------------------------------


def columns_for(kind: str, dim: int | None = None):
    if kind == HUMAN:
        return HUMAN_COLUMNS
    if kind == ROBOT:
        return ROBOT_COLUMNS
    return tuple(f"x{i + 1}" for i in range(dim))


def write_csv(path, seq: MotionSequence, columns=None):
    """Write one frame per row with a ``timestamp`` column first."""
    columns = columns or columns_for(seq.kind, seq.dim)
    if len(columns) != seq.dim:
        raise InvalidInputError(f"{len(columns)} column names for {seq.dim} columns")
    lines = [",".join(("timestamp",) + tuple(columns))]
    for t, row in zip(seq.timestamps, seq.frames):
        lines.append(",".join(repr(float(v)) for v in (t, *row)))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_csv(path, kind: str, columns=None) -> MotionSequence:
    """Parse a human (37 columns) or robot (14 columns) CSV file.

    Raises ParseError naming the offending row and column.
    """
    path = Path(path)
    expected = ("timestamp",) + tuple(columns or columns_for(kind))
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise ParseError(f"{path}: cannot read ({exc})") from exc
    rows = list(csv.reader(text.splitlines()))
    if not rows:
        raise ParseError(f"{path}: empty file, header row required")
    header = tuple(c.strip() for c in rows[0])
    if header != expected:
        raise ParseError(
            f"{path}: row 1: header does not match the {kind} format "
            f"({len(header)} columns, expected {len(expected)} starting with 'timestamp')"
        )
    data = []
    for r, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(expected):
            raise ParseError(f"{path}: row {r}: {len(row)} columns, expected {len(expected)}")
        vals = []
        for c, cell in enumerate(row):
            try:
                v = float(cell)
            except ValueError:
                raise ParseError(f"{path}: row {r}, column {c + 1} ({expected[c]}): "
                                 f"cannot parse {cell!r}") from None
            if not np.isfinite(v):
                raise ParseError(f"{path}: row {r}, column {c + 1} ({expected[c]}): non-finite")
            vals.append(v)
        data.append(vals)
    if len(data) < 2:
        raise ParseError(f"{path}: need at least 2 data rows, found {len(data)}")
    arr = np.array(data)
    # custom column sets describe a sub-sequence, not whole-body frames
    part = None if columns is None else "subset"
    try:
        return MotionSequence(arr[:, 0], arr[:, 1:], kind=kind, part=part)
    except InvalidInputError as exc:
        raise ParseError(f"{path}: {exc}") from exc
