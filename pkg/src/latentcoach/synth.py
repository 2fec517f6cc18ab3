"""Synthetic paired human/robot motion from a toy forward-kinematics body.

Robot motor waveforms are generated per exercise, optionally corrupted by an
:class:`ErrorSpec`, then pushed through forward kinematics to obtain the
human skeleton.  Gaussian noise is added to both sides afterwards, and the
noise-free sequences are kept as ground truth.

Frame convention: x points to the subject's left, y up, z forward; the
spine base sits at the origin.  With every motor at 0 the arms hang straight
down.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidInputError
from .motion import (
    HUMAN,
    MOTOR_NAMES,
    N_JOINTS,
    N_MOTORS,
    ROBOT,
    MotionSequence,
    MotorRanges,
    default_partition,
    uniform_timestamps,
    write_csv,
)

MOTOR_INDEX = {name: i for i, name in enumerate(MOTOR_NAMES)}


def rotation(axis: str, angle_deg) -> np.ndarray:
    """Rotation matrices about a principal axis; broadcasts over ``angle_deg``."""
    a = np.deg2rad(np.asarray(angle_deg, dtype=float))
    c, s = np.cos(a), np.sin(a)
    o, z = np.ones_like(a), np.zeros_like(a)
    if axis == "x":
        m = [[o, z, z], [z, c, -s], [z, s, c]]
    elif axis == "y":
        m = [[c, z, s], [z, o, z], [-s, z, c]]
    elif axis == "z":
        m = [[c, -s, z], [s, c, z], [z, z, o]]
    else:
        raise InvalidInputError(f"unknown rotation axis {axis!r}")
    return np.moveaxis(np.array(m), (0, 1), (-2, -1))


def chain_points(base, base_rot, axes, angles_deg, links):
    """Positions along a serial chain.

    Joint ``i`` rotates about ``axes[i]`` by ``angles_deg[i]`` relative to its
    parent frame, then link vector ``links[i]`` (expressed in the rotated
    frame) is appended.  Returns the ``len(links)`` link end points and the
    final orientation.
    """
    p = np.asarray(base, dtype=float)
    R = np.asarray(base_rot, dtype=float)
    pts = []
    for axis, ang, link in zip(axes, angles_deg, links):
        R = R @ rotation(axis, ang)
        p = p + R @ np.asarray(link, dtype=float)
        pts.append(p)
    return np.array(pts), R


@dataclass(frozen=True)
class BodyDims:
    """Human link lengths in metres."""

    lower_spine: float = 0.25
    upper_spine: float = 0.25
    head: float = 0.15
    shoulder_half: float = 0.18
    shoulder_drop: float = 0.03
    upper_arm: float = 0.30
    forearm: float = 0.27
    hip_half: float = 0.10
    hip_drop: float = 0.08

    def __post_init__(self):
        for k, v in asdict(self).items():
            if k != "shoulder_drop" and not v > 0:
                raise InvalidInputError(f"link length {k} must be positive")

    def scaled(self, factor: float) -> "BodyDims":
        return BodyDims(**{k: v * factor for k, v in asdict(self).items()})


def _fk_batch(Z: np.ndarray, dims: BodyDims) -> np.ndarray:
    """Vectorised forward kinematics, ``Z`` is (T, 13) in degrees -> (T, 12, 3)."""
    T = Z.shape[0]
    a = {name: Z[:, i] for name, i in MOTOR_INDEX.items()}
    up = np.array([0.0, 1.0, 0.0])
    down = -up
    out = np.zeros((T, N_JOINTS, 3))

    def apply(R, v):
        return np.einsum("tij,j->ti", R, np.asarray(v, dtype=float))

    out[:, 10] = [dims.hip_half, -dims.hip_drop, 0.0]
    out[:, 11] = [-dims.hip_half, -dims.hip_drop, 0.0]
    R0 = rotation("y", a["abs_z"])
    out[:, 1] = apply(R0, dims.lower_spine * up)
    Rt = R0 @ rotation("x", a["bust_y"]) @ rotation("z", a["bust_x"])
    out[:, 2] = out[:, 1] + apply(Rt, dims.upper_spine * up)
    Rh = Rt @ rotation("y", a["head_z"]) @ rotation("x", a["head_y"])
    out[:, 3] = out[:, 2] + apply(Rh, dims.head * up)
    for side, sign, sh, el, wr in (("l", 1.0, 4, 5, 6), ("r", -1.0, 7, 8, 9)):
        out[:, sh] = out[:, 2] + apply(Rt, [sign * dims.shoulder_half, -dims.shoulder_drop, 0.0])
        Ra = (Rt @ rotation("x", -a[f"{side}_shoulder_y"])
              @ rotation("z", sign * a[f"{side}_shoulder_x"])
              @ rotation("y", sign * a[f"{side}_arm_z"]))
        out[:, el] = out[:, sh] + apply(Ra, dims.upper_arm * down)
        Rf = Ra @ rotation("x", -a[f"{side}_elbow_y"])
        out[:, wr] = out[:, el] + apply(Rf, dims.forearm * down)
    return out


# --------------------------------------------------------------------------
# Exercises and errors
# --------------------------------------------------------------------------


def _raise(p):
    return 0.5 * (1.0 - np.cos(2.0 * np.pi * p))


def _skewed(p):
    # fast raise, slow return; peak at p = 0.5 ** (1 / 0.6)
    return _raise(np.power(p, 0.6))


def _hold(p):
    # smoothstep up on [0, 0.3], hold, smoothstep down on [0.7, 1]
    up = np.clip(p / 0.3, 0.0, 1.0)
    down = np.clip((1.0 - p) / 0.3, 0.0, 1.0)
    s = np.minimum(up, down)
    return s * s * (3.0 - 2.0 * s)


SHAPES = {"raise": _raise, "skewed": _skewed, "hold": _hold}


@dataclass(frozen=True)
class MotorWave:
    """``amplitude * shape(frequency * (phase - lag))`` added to the rest angle."""

    motor: str
    amplitude: float
    shape: str = "raise"
    lag: float = 0.0
    frequency: float = 1.0

    def __call__(self, phase):
        p = np.clip(self.frequency * (np.asarray(phase) - self.lag), 0.0, 1.0)
        return self.amplitude * SHAPES[self.shape](p)


EXERCISES = {
    1: (  # lateral raise of both arms
        MotorWave("l_shoulder_x", 80.0),
        MotorWave("r_shoulder_x", 80.0),
        MotorWave("l_elbow_y", 15.0, lag=0.05),
        MotorWave("r_elbow_y", 15.0, lag=0.05),
        MotorWave("head_y", 8.0),
    ),
    2: (  # left-arm forward tilt with trunk lean, quick raise and slow return
        MotorWave("l_shoulder_y", 70.0, "skewed"),
        MotorWave("l_arm_z", 40.0, "skewed"),
        MotorWave("l_elbow_y", 50.0, "skewed", lag=0.03),
        MotorWave("r_shoulder_x", 20.0, "skewed"),
        MotorWave("bust_x", 15.0, "skewed"),
        MotorWave("abs_z", 10.0, "skewed"),
    ),
    3: (  # forward raise of both arms, held at the top
        MotorWave("l_shoulder_y", 100.0, "hold"),
        MotorWave("r_shoulder_y", 100.0, "hold"),
        MotorWave("l_elbow_y", 20.0, "hold"),
        MotorWave("r_elbow_y", 20.0, "hold"),
        MotorWave("bust_y", 10.0, "hold"),
    ),
}

ERROR_KINDS = ("amplitude-scale", "joint-freeze", "axis-tilt")
# motor (within the affected part) touched by freeze / tilt errors
FREEZE_MOTOR = {"left-arm": "l_elbow_y", "right-arm": "r_elbow_y", "spine": "bust_y"}
TILT_MOTOR = {"left-arm": "l_shoulder_x", "right-arm": "r_shoulder_x", "spine": "bust_x"}


@dataclass(frozen=True)
class ErrorSpec:
    """A simulated patient limitation.

    amplitude-scale
        Multiply the motion of every motor of ``part`` by ``magnitude`` in (0, 1].
    joint-freeze
        Blend the part's elbow (bust for the spine) towards its starting angle;
        ``magnitude`` in (0, 1], 1 = fully frozen.
    axis-tilt
        Tilt the part's motion plane by up to ``magnitude`` degrees in [0, 45],
        following the motion envelope.
    """

    kind: str
    magnitude: float
    part: str = "left-arm"

    def __post_init__(self):
        if self.kind not in ERROR_KINDS:
            raise InvalidInputError(f"unknown error kind {self.kind!r}")
        if self.part not in default_partition().names:
            raise InvalidInputError(f"unknown body part {self.part!r}")
        m = self.magnitude
        if self.kind == "axis-tilt":
            if not 0.0 <= m <= 45.0:
                raise InvalidInputError(f"tilt magnitude must be in [0, 45] deg, got {m}")
        elif not 0.0 < m <= 1.0:
            raise InvalidInputError(f"{self.kind} magnitude must be in (0, 1], got {m}")

    def apply(self, waves: np.ndarray) -> np.ndarray:
        """Corrupt a (T, 13) array of motor deviations from rest."""
        out = waves.copy()
        motors = list(default_partition()[self.part].robot_motors)
        if self.kind == "amplitude-scale":
            out[:, motors] = waves[:, motors] * self.magnitude
        elif self.kind == "joint-freeze":
            j = MOTOR_INDEX[FREEZE_MOTOR[self.part]]
            out[:, j] = (1.0 - self.magnitude) * waves[:, j] + self.magnitude * waves[0, j]
        else:
            env = np.abs(waves[:, motors]).max(axis=1)
            peak = env.max()
            j = MOTOR_INDEX[TILT_MOTOR[self.part]]
            if peak > 0:
                out[:, j] = waves[:, j] + self.magnitude * env / peak
        return out


@dataclass(frozen=True)
class SynthConfig:
    dims: BodyDims = field(default_factory=BodyDims)
    frames: int = 100
    duration: float = 4.0
    noise_human: float = 0.01
    noise_robot: float = 0.5
    amplitude_jitter: float = 0.05
    seed: int = 0
    ranges: MotorRanges = field(default_factory=MotorRanges)

    def __post_init__(self):
        if self.frames < 2:
            raise InvalidInputError("frames must be >= 2")
        if self.duration <= 0 or self.noise_human < 0 or self.noise_robot < 0:
            raise InvalidInputError("duration must be positive and noise non-negative")
        if self.amplitude_jitter < 0:
            raise InvalidInputError("amplitude_jitter must be non-negative")


def forward_kinematics(z, cfg: SynthConfig | None = None) -> np.ndarray:
    """Human joint positions (36-vector, or T x 36) for motor angles ``z``."""
    cfg = cfg or SynthConfig()
    z = np.asarray(z, dtype=float)
    Z = np.atleast_2d(z)
    if Z.shape[1] != N_MOTORS:
        raise InvalidInputError(f"robot pose needs {N_MOTORS} angles, got {Z.shape[1]}")
    cfg.ranges.check(Z)
    Y = _fk_batch(Z, cfg.dims).reshape(len(Z), 3 * N_JOINTS)
    return Y[0] if z.ndim == 1 else Y


def motor_waves(exercise_id: int, phase) -> np.ndarray:
    """Noise-free motor deviations from rest (T x 13) for a built-in exercise."""
    if exercise_id not in EXERCISES:
        raise InvalidInputError(f"unknown exercise id {exercise_id}; known: {sorted(EXERCISES)}")
    phase = np.asarray(phase, dtype=float)
    out = np.zeros((len(phase), N_MOTORS))
    for wave in EXERCISES[exercise_id]:
        out[:, MOTOR_INDEX[wave.motor]] += wave(phase)
    return out


@dataclass
class SynthDataset:
    exercise_id: int
    human: list
    robot: list
    truth_human: list
    truth_robot: list
    ideal_robot: MotionSequence
    error: ErrorSpec | None
    seed: int

    def sidecar(self) -> dict:
        return {
            "exercise_id": self.exercise_id,
            "seed": self.seed,
            "error": None if self.error is None else asdict(self.error),
            "truth_robot": [s.frames.tolist() for s in self.truth_robot],
            "truth_human": [s.frames.tolist() for s in self.truth_human],
            "ideal_robot": self.ideal_robot.frames.tolist(),
            "timestamps": self.ideal_robot.timestamps.tolist(),
        }


def generate_exercise(cfg: SynthConfig, exercise_id: int, n_demos: int = 3,
                      error: ErrorSpec | None = None, seed: int | None = None) -> SynthDataset:
    """Paired noisy demonstrations of one exercise plus noise-free ground truth.

    The random stream depends only on ``(seed, exercise_id)`` and is consumed
    identically with or without an error, so correct and incorrect variants
    differ only in the motors the error touches.
    """
    if n_demos < 1:
        raise InvalidInputError("n_demos must be >= 1")
    seed = cfg.seed if seed is None else seed
    rng = np.random.default_rng([seed, exercise_id])
    ts = uniform_timestamps(cfg.frames, cfg.duration)
    phase = (ts - ts[0]) / (ts[-1] - ts[0])
    nominal = motor_waves(exercise_id, phase)
    gains = 1.0 + cfg.amplitude_jitter * rng.standard_normal(n_demos)
    noise_h = rng.standard_normal((n_demos, cfg.frames, 3 * N_JOINTS))
    noise_r = rng.standard_normal((n_demos, cfg.frames, N_MOTORS))
    cfg.ranges.check(nominal)
    ideal = MotionSequence(ts, nominal, kind=ROBOT)
    human, robot, truth_h, truth_r = [], [], [], []
    for d in range(n_demos):
        waves = nominal * gains[d]
        if error is not None:
            waves = error.apply(waves)
        Z = waves
        Y = forward_kinematics(Z, cfg)
        meta = {"exercise_id": exercise_id, "demo": d}
        truth_r.append(MotionSequence(ts, Z, kind=ROBOT, meta=meta))
        truth_h.append(MotionSequence(ts, Y, kind=HUMAN, meta=meta))
        robot.append(MotionSequence(ts, Z + cfg.noise_robot * noise_r[d], kind=ROBOT, meta=meta))
        human.append(MotionSequence(ts, Y + cfg.noise_human * noise_h[d], kind=HUMAN, meta=meta))
    return SynthDataset(exercise_id, human, robot, truth_h, truth_r, ideal, error, seed)


PATIENT_SEED_OFFSET = 1000


def generate_patient(cfg: SynthConfig, exercise_id: int, error: ErrorSpec | None = None) -> SynthDataset:
    """One patient performance, drawn from a stream disjoint from the therapist demos."""
    return generate_exercise(cfg, exercise_id, 1, error, seed=cfg.seed + PATIENT_SEED_OFFSET)


def write_dataset(out_dir, datasets, cfg: SynthConfig | None = None, patients=()):
    """Write the dataset files and a ground-truth sidecar JSON.

    Per exercise ``e`` and demo ``d``: ``human_ex{e}_demo{d}.csv``,
    ``robot_ex{e}_demo{d}.csv`` (noisy) and ``truth_robot_ex{e}_demo{d}.csv``
    (noise free), plus ``ideal_robot_ex{e}.csv``.  Each patient dataset adds
    ``patient_human_ex{e}.csv`` and ``patient_truth_robot_ex{e}.csv``.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    def put(name, seq):
        write_csv(out / name, seq)
        written.append(out / name)

    side = {"config": _config_dict(cfg) if cfg else None, "exercises": [], "patients": []}
    for ds in datasets:
        e = ds.exercise_id
        for d, (h, r, tr) in enumerate(zip(ds.human, ds.robot, ds.truth_robot), start=1):
            put(f"human_ex{e}_demo{d}.csv", h)
            put(f"robot_ex{e}_demo{d}.csv", r)
            put(f"truth_robot_ex{e}_demo{d}.csv", tr)
        put(f"ideal_robot_ex{e}.csv", ds.ideal_robot)
        side["exercises"].append(ds.sidecar())
    for ds in patients:
        e = ds.exercise_id
        put(f"patient_human_ex{e}.csv", ds.human[0])
        put(f"patient_truth_robot_ex{e}.csv", ds.truth_robot[0])
        side["patients"].append(ds.sidecar())
    gp = out / "ground_truth.json"
    gp.write_text(json.dumps(side, sort_keys=True) + "\n", encoding="utf-8")
    written.append(gp)
    return written


def _config_dict(cfg: SynthConfig) -> dict:
    d = asdict(cfg)
    d["ranges"] = {"lower": list(cfg.ranges.lower), "upper": list(cfg.ranges.upper)}
    return d
