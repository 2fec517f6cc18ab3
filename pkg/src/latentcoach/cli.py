"""Command-line entry point: ``latentcoach <command> [flags]``.

Commands
--------
synth     write a synthetic paired dataset (plus patient performances)
train     fit one shared GP-LVM per body part
retarget  human CSV -> robot CSV (optionally the latent trajectory)
ideal     GMM/GMR ideal trajectory from therapist demonstrations
adapt     patient-specific back-constraint weights
eval      RMSE / normalised RMSE / sampled RMSE report with figures

Settings come from an optional JSON ``--config`` file; command-line flags win.
Every command validates all inputs before writing anything.  Failures print a
single line ``error: <kind>: <message>`` to stderr and exit with status 1.
"""

from __future__ import annotations

import argparse
import csv
import logging
import re
import sys
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import __version__
from .adaptation import AdaptConfig, PatientProfile
from .errors import InvalidInputError, LatentCoachError, ParseError
from .evaluation import EvalReport, EvalRow, align_to, normalized_rmse, rmse
from .gplvm import TrainConfig
from .motion import HUMAN, LATENT, MOTOR_NAMES, ROBOT, MotionSequence, read_csv, resample_phase, write_csv
from .pipeline import (
    BodyIdeal,
    BodyModel,
    adapt_body,
    dump_json,
    ideal_body,
    latent_parts,
    load_json,
    robot_subset,
    sampled_body_eval,
    train_body,
)
from .synth import ErrorSpec, SynthConfig, generate_exercise, generate_patient, write_dataset
from .trajectory import EmConfig

log = logging.getLogger("latentcoach")

PARTS = ("left-arm", "right-arm", "spine", "all")
ERROR_FLAGS = {"none": None, "amplitude": "amplitude-scale", "freeze": "joint-freeze", "tilt": "axis-tilt"}
DEFAULT_MAGNITUDE = {"amplitude-scale": 0.6, "joint-freeze": 1.0, "axis-tilt": 30.0}
DEMO_FILE = re.compile(r"human_ex(\d+)_demo(\d+)\.csv$")


# --------------------------------------------------------------------------
# Settings
# --------------------------------------------------------------------------


class Settings:
    """Flag value if given, else the config-file value, else the default."""

    def __init__(self, args):
        self.args = args
        self.config = {}
        if getattr(args, "config", None):
            cfg = load_json(args.config)
            if not isinstance(cfg, dict):
                raise ParseError(f"{args.config}: config must be a JSON object")
            self.config = cfg

    def get(self, name, default=None, section=None):
        value = getattr(self.args, name, None)
        if value is not None:
            return value
        src = self.config.get(section, {}) if section else self.config
        return src.get(name, default)

    def section(self, name, cls, **overrides):
        known = {f.name for f in fields(cls)}
        raw = dict(self.config.get(name, {}))
        unknown = sorted(set(raw) - known)
        if unknown:
            raise InvalidInputError(f"unknown {name} config keys: {unknown}")
        raw.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**raw)


def _parts(value):
    return None if value in (None, "all") else [value]


def _require(path, what):
    if not Path(path).is_file():
        raise InvalidInputError(f"{what} not found: {path}")
    return Path(path)


def _out_dir_ok(path):
    parent = Path(path).resolve().parent
    if not parent.is_dir():
        raise InvalidInputError(f"output directory does not exist: {parent}")


# --------------------------------------------------------------------------
# CSV helpers for part subsets and latent files
# --------------------------------------------------------------------------


def _header(path) -> tuple:
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            row = next(csv.reader(fh), [])
    except (OSError, UnicodeDecodeError) as exc:
        raise ParseError(f"{path}: cannot read ({exc})") from exc
    return tuple(c.strip() for c in row)


def read_robot_csv(path) -> tuple:
    """Robot CSV with all 13 motors or an index-ordered subset; returns (seq, columns)."""
    cols = _header(path)[1:]
    order = [MOTOR_NAMES.index(c) for c in cols if c in MOTOR_NAMES]
    if len(order) == len(MOTOR_NAMES) or not cols or len(order) != len(cols) or order != sorted(order):
        seq = read_csv(path, ROBOT)
        return seq, tuple(MOTOR_NAMES)
    return read_csv(path, ROBOT, columns=cols), cols


def write_latent_csv(path, latents: dict):
    names = list(latents)
    first = latents[names[0]]
    frames = np.hstack([latents[n].frames for n in names])
    cols = [f"{n}_x{i + 1}" for n in names for i in range(latents[n].dim)]
    write_csv(path, MotionSequence(first.timestamps, frames, kind=LATENT, part="all"), cols)


def read_latent_csv(path, body: BodyModel) -> dict:
    cols = _header(path)[1:]
    names = [n for n in body.partition.names if f"{n}_x1" in cols]
    if not names:
        raise ParseError(f"{path}: row 1: no '<part>_x1' latent columns found")
    expected = [f"{n}_x{i + 1}" for n in names for i in range(body[n].q)]
    seq = read_csv(path, LATENT, columns=expected)
    out, k = {}, 0
    for n in names:
        q = body[n].q
        out[n] = MotionSequence(seq.timestamps, seq.frames[:, k:k + q], kind=LATENT, part=n)
        k += q
    return out


def _load_body(path) -> BodyModel:
    return BodyModel.from_dict(load_json(_require(path, "model file")))


# --------------------------------------------------------------------------
# Commands
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SynthOptions:
    """Keys accepted in the ``synth`` section of the config file."""

    frames: int = 100
    duration: float = 4.0
    noise_human: float = 0.01
    noise_robot: float = 0.5
    amplitude_jitter: float = 0.05
    demos: int = 3
    exercises: tuple = (1, 2, 3)
    magnitude: float | None = None


def cmd_synth(args, st: Settings):
    seed = int(st.get("seed", 0))
    opt = st.section("synth", SynthOptions, demos=args.demos, exercises=args.exercises,
                     magnitude=args.magnitude)
    cfg = SynthConfig(frames=opt.frames, duration=opt.duration, noise_human=opt.noise_human,
                      noise_robot=opt.noise_robot, amplitude_jitter=opt.amplitude_jitter, seed=seed)
    kind = ERROR_FLAGS[st.get("error", "none")]
    error = None
    if kind is not None:
        part = st.get("part", "left-arm")
        if part == "all":
            raise InvalidInputError("--error needs a single body part, not 'all'")
        magnitude = DEFAULT_MAGNITUDE[kind] if opt.magnitude is None else opt.magnitude
        error = ErrorSpec(kind, float(magnitude), part)
    datasets = [generate_exercise(cfg, int(e), opt.demos) for e in opt.exercises]
    patients = [generate_patient(cfg, int(e), error) for e in opt.exercises]
    files = write_dataset(args.out, datasets, cfg, patients)
    print(f"wrote {len(files)} files to {args.out}")


def _find_pairs(data_dir, exercises, demos):
    data_dir = Path(data_dir)
    if not data_dir.is_dir():
        raise InvalidInputError(f"data directory not found: {data_dir}")
    found = []
    for p in sorted(data_dir.iterdir()):
        m = DEMO_FILE.match(p.name)
        if not m:
            continue
        e, d = int(m.group(1)), int(m.group(2))
        if (exercises and e not in exercises) or (demos and d not in demos):
            continue
        found.append((e, d, p, data_dir / f"robot_ex{e}_demo{d}.csv"))
    if not found:
        raise InvalidInputError(f"no human_ex*_demo*.csv files selected in {data_dir}")
    found.sort()
    pairs = []
    for _, _, hp, rp in found:
        _require(rp, "paired robot file")
        pairs.append((read_csv(hp, HUMAN), read_csv(rp, ROBOT)))
    return pairs, [(e, d) for e, d, _, _ in found]


def cmd_train(args, st: Settings):
    _out_dir_ok(args.out)
    pairs, used = _find_pairs(args.data, st.get("exercises"), st.get("demos"))
    cfg = st.section("train", TrainConfig, max_iters=args.max_iters, seed=args.seed,
                     restarts=args.restarts, bc_width_scale=args.bc_width_scale)
    body = train_body(pairs, cfg, _parts(st.get("part", "all")))
    body.save(args.out)
    print(f"trained {', '.join(sorted(body.models))} on {len(used)} demonstrations -> {args.out}")


def cmd_retarget(args, st: Settings):
    human = read_csv(_require(args.human, "human CSV"), HUMAN)
    body = _load_body(args.model)
    profile = PatientProfile.from_dict(load_json(_require(args.profile, "profile"))) if args.profile else None
    for p in (args.out, args.latent_out):
        if p:
            _out_dir_ok(p)
    parts = _parts(st.get("part", "all"))
    latents = latent_parts(human, body, profile, parts)
    frames, cols = robot_subset(latents, body)
    write_csv(args.out, MotionSequence(human.timestamps, frames, kind=ROBOT, part="subset"), cols)
    if args.latent_out:
        write_latent_csv(args.latent_out, latents)
    print(f"retargeted {len(human)} frames -> {args.out}")


def cmd_ideal(args, st: Settings):
    if len(args.demos) < 2:
        raise InvalidInputError("ideal needs at least 2 demonstration CSVs")
    demos = [read_csv(_require(p, "demonstration CSV"), HUMAN) for p in args.demos]
    body = _load_body(args.model)
    robot_out = args.robot_out or str(Path(args.out).with_suffix(".csv"))
    _out_dir_ok(args.out)
    _out_dir_ok(robot_out)
    k = int(st.get("gmm_k", 6))
    em = st.section("em", EmConfig, seed=st.get("seed", None))
    ideal = ideal_body(demos, body, K=k, T_out=st.get("frames", None), em=em,
                       exercise_id=args.exercise_id, parts=_parts(st.get("part", "all")))
    latents = ideal.latents()
    frames, cols = robot_subset(latents, body)
    dump_json(ideal.to_dict(), args.out)
    write_csv(robot_out, MotionSequence(ideal.timestamps, frames, kind=ROBOT, part="subset"), cols)
    print(f"ideal trajectory ({len(ideal.timestamps)} frames, K={k}) -> {args.out}, {robot_out}")


def cmd_adapt(args, st: Settings):
    patient = read_csv(_require(args.patient, "patient CSV"), HUMAN)
    body = _load_body(args.model)
    ideal = BodyIdeal.from_dict(load_json(_require(args.ideal, "ideal trajectory")))
    base = PatientProfile.from_dict(load_json(_require(args.profile, "profile"))) if args.profile else None
    _out_dir_ok(args.out)
    cfg = st.section("adapt", AdaptConfig)
    parts = _parts(st.get("part", "all"))
    if parts is None:
        parts = [n for n in body.partition.names if n in ideal.trajectories]
    profile = adapt_body(patient, ideal, body, cfg, args.patient_id or "patient", parts, base)
    dump_json(profile.to_dict(), args.out)
    print(f"adapted {', '.join(parts)} for {profile.patient_id} -> {args.out}")


def cmd_eval(args, st: Settings):
    from . import plotting

    truth, tcols = read_robot_csv(_require(args.truth, "ground-truth CSV"))
    preds, cols = [], None
    for p in args.pred:
        seq, pcols = read_robot_csv(_require(p, "prediction CSV"))
        if cols is not None and pcols != cols:
            raise InvalidInputError(f"{p}: motor columns differ from the first prediction")
        cols = pcols
        preds.append(seq)
    if not set(cols) <= set(tcols):
        raise InvalidInputError("ground truth lacks some predicted motors")
    if cols != tcols:
        truth = truth.with_frames(truth.frames[:, [tcols.index(c) for c in cols]], part="subset")
    preds = [align_to(s, truth) for s in preds]
    labels = list(args.label or [])
    if len(labels) > len(preds):
        raise InvalidInputError("more --label values than --pred files")
    labels += [Path(p).stem for p in args.pred[len(labels):]]
    body, latents = None, []
    if args.latent:
        if len(args.latent) != len(preds):
            raise InvalidInputError("give one --latent file per --pred file")
        if not args.model:
            raise InvalidInputError("sampled evaluation (--latent) needs --model")
        body = _load_body(args.model)
        for p in args.latent:
            lat = read_latent_csv(_require(p, "latent CSV"), body)
            if list(cols) != list(robot_subset(lat, body)[1]):
                raise InvalidInputError(f"{p}: latent parts do not cover the ground-truth motors")
            if len(next(iter(lat.values()))) != len(truth):
                lat = {n: resample_phase(s, len(truth)) for n, s in lat.items()}
            latents.append(lat)
    n_samples = int(st.get("samples", 10))
    seed = int(st.get("seed", 0))
    out = Path(args.out)
    if out.exists() and not out.is_dir():
        raise InvalidInputError(f"--out must be a directory: {out}")
    report = EvalReport(metadata={"truth": Path(args.truth).name, "samples": n_samples,
                                  "seed": seed})
    for i, (label, pred) in enumerate(zip(labels, preds)):
        nr, _, skipped = normalized_rmse(pred, truth, truth, return_details=True)
        row = EvalRow(label, rmse(pred, truth), nr, excluded_motors=[cols[j] for j in skipped])
        if latents:
            se = sampled_body_eval(latents[i], body, truth, n_samples, seed)
            row.sampled_mean, row.sampled_std = se.mean, se.std
        report.add(row)
    out.mkdir(parents=True, exist_ok=True)
    dump_json(report.to_dict(), out / "report.json")
    text = report.to_text()
    (out / "report.txt").write_text(text, encoding="utf-8")
    plotting.plot_trajectories(out / "trajectories.png", truth.timestamps, truth.frames,
                               {lab: p.frames for lab, p in zip(labels, preds)}, cols)
    if latents:
        plotting.plot_latent(out / "latent.png", body,
                             {lab: {n: s.frames for n, s in lat.items()}
                              for lab, lat in zip(labels, latents)})
    sys.stdout.write(text)


# --------------------------------------------------------------------------
# Parser
# --------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    """Usage errors as a single machine-parsable line."""

    def error(self, message):
        self.exit(2, f"error: usage: {' '.join(message.split())}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON settings file (flags override it)")
    common.add_argument("--seed", type=int, help="single source of randomness (default 0)")
    common.add_argument("--part", choices=PARTS, help="body part(s) to process")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    ap = _Parser(prog="latentcoach", description=__doc__.split("\n")[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic dataset")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--error", choices=sorted(ERROR_FLAGS), help="error injected into patient files")
    p.add_argument("--magnitude", type=float, help="error magnitude (scale, blend or degrees)")
    p.add_argument("--exercises", type=int, nargs="+", help="exercise ids (default 1 2 3)")
    p.add_argument("--demos", type=int, help="demonstrations per exercise (default 3)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", parents=[common], help="train per-part shared GP-LVMs")
    p.add_argument("--data", required=True, help="directory with human/robot demo CSVs")
    p.add_argument("--out", required=True, help="model JSON to write")
    p.add_argument("--exercises", type=int, nargs="+", help="exercise ids to use (default all)")
    p.add_argument("--demos", type=int, nargs="+", help="demo numbers to use (default all)")
    p.add_argument("--max-iters", type=int)
    p.add_argument("--restarts", type=int)
    p.add_argument("--bc-width-scale", type=float)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("retarget", parents=[common], help="human CSV -> robot CSV")
    p.add_argument("human", help="human CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True, help="robot CSV to write")
    p.add_argument("--latent-out", help="also write the latent trajectory CSV")
    p.add_argument("--profile", help="patient profile JSON (use adapted weights)")
    p.set_defaults(func=cmd_retarget)

    p = sub.add_parser("ideal", parents=[common], help="ideal trajectory from demonstrations")
    p.add_argument("demos", nargs="+", help="therapist human CSVs")
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True, help="ideal latent trajectory JSON")
    p.add_argument("--robot-out", help="ideal robot CSV (default: --out with .csv suffix)")
    p.add_argument("--gmm-k", dest="gmm_k", type=int, help="GMM components (default 6)")
    p.add_argument("--frames", type=int, help="output frames (default: first demo's length)")
    p.add_argument("--exercise-id", type=int)
    p.set_defaults(func=cmd_ideal)

    p = sub.add_parser("adapt", parents=[common], help="patient-specific back-constraint weights")
    p.add_argument("patient", help="patient human CSV")
    p.add_argument("--ideal", required=True, help="ideal trajectory JSON")
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True, help="patient profile JSON")
    p.add_argument("--patient-id")
    p.add_argument("--profile", help="existing profile to extend")
    p.set_defaults(func=cmd_adapt)

    p = sub.add_parser("eval", parents=[common], help="RMSE report with figures")
    p.add_argument("--truth", required=True, help="ground-truth robot CSV")
    p.add_argument("--pred", required=True, action="append", help="predicted robot CSV (repeatable)")
    p.add_argument("--label", action="append", help="row label per --pred")
    p.add_argument("--latent", action="append", help="latent CSV per --pred (sampled RMSE)")
    p.add_argument("--model", help="model JSON (needed with --latent)")
    p.add_argument("--samples", type=int, help="posterior samples per row (default 10)")
    p.add_argument("--out", required=True, help="report directory")
    p.set_defaults(func=cmd_eval)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s", stream=sys.stderr)
    try:
        args.func(args, Settings(args))
    except LatentCoachError as exc:
        msg = " ".join(str(exc).split())
        print(f"error: {exc.kind}: {msg}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: io: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
