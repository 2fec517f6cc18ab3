import json
import subprocess
import sys

import numpy as np
import pytest

from latentcoach import gplvm
from latentcoach.cli import main
from latentcoach.motion import HUMAN, read_csv
from latentcoach.pipeline import BodyIdeal, BodyModel, dump_json, latent_parts, split_human
from latentcoach.trajectory import EmConfig, IdealTrajectory, em_fit

CONFIG = {"synth": {"frames": 24}, "train": {"max_iters": 20}}


def run(*args):
    return main([str(a) for a in args])


def snapshot(path):
    return {p.relative_to(path).as_posix(): p.read_bytes()
            for p in sorted(path.rglob("*")) if p.is_file()}


def pipeline(root, seed=3):
    """Full command chain into ``root``; returns the exit codes."""
    root.mkdir()
    cfg = root / "cfg.json"
    cfg.write_text(json.dumps(CONFIG))
    d = root / "data"
    codes = [
        run("synth", "--config", cfg, "--seed", seed, "--out", d, "--error", "amplitude",
            "--exercises", 1, "--demos", 2),
        run("train", "--config", cfg, "--seed", seed, "--data", d, "--part", "left-arm",
            "--out", root / "model.json"),
        run("retarget", d / "patient_human_ex1.csv", "--model", root / "model.json",
            "--part", "left-arm", "--out", root / "before.csv", "--latent-out",
            root / "before_lat.csv"),
        run("ideal", d / "human_ex1_demo1.csv", d / "human_ex1_demo2.csv", "--model",
            root / "model.json", "--part", "left-arm", "--gmm-k", 2, "--seed", seed,
            "--out", root / "ideal.json", "--exercise-id", 1),
        run("adapt", d / "patient_human_ex1.csv", "--ideal", root / "ideal.json", "--model",
            root / "model.json", "--part", "left-arm", "--out", root / "profile.json"),
        run("retarget", d / "patient_human_ex1.csv", "--model", root / "model.json",
            "--part", "left-arm", "--profile", root / "profile.json", "--out",
            root / "after.csv", "--latent-out", root / "after_lat.csv"),
        run("eval", "--truth", d / "ideal_robot_ex1.csv", "--pred", root / "before.csv",
            "--latent", root / "before_lat.csv", "--label", "before", "--pred",
            root / "after.csv", "--latent", root / "after_lat.csv", "--label", "after",
            "--model", root / "model.json", "--seed", seed, "--out", root / "report"),
    ]
    return codes


@pytest.fixture(scope="module")
def runs(tmp_path_factory):
    base = tmp_path_factory.mktemp("cli")
    a, b = base / "a", base / "b"
    return a, b, pipeline(a), pipeline(b)


def test_every_command_succeeds(runs):
    _, _, codes_a, codes_b = runs
    assert codes_a == [0] * 7 and codes_b == [0] * 7


def test_reruns_are_byte_identical(runs):
    a, b, _, _ = runs
    sa, sb = snapshot(a), snapshot(b)
    assert sorted(sa) == sorted(sb)
    for name in sa:
        assert sa[name] == sb[name], name
    assert {"report/report.json", "report/report.txt", "report/trajectories.png",
            "report/latent.png"} <= set(sa)


def test_report_orders_before_and_after(runs):
    a = runs[0]
    rows = json.loads((a / "report" / "report.json").read_text())["rows"]
    assert rows[0]["label"] == "before" and rows[1]["label"] == "after"
    assert rows[1]["sampled_mean"] < rows[0]["sampled_mean"]


def test_model_file_round_trip_predictions_bitwise(runs):
    a = runs[0]
    body = BodyModel.load(a / "model.json")
    again = BodyModel.from_dict(json.loads(json.dumps(body.to_dict())))
    X = np.random.default_rng(0).normal(size=(9, 2))
    assert np.array_equal(gplvm.predict(X, body["left-arm"]),
                          gplvm.predict(X, again["left-arm"]))
    again.save(a / "copy.json")
    assert (a / "copy.json").read_bytes() == (a / "model.json").read_bytes()
    (a / "copy.json").unlink()


def test_different_seed_changes_outputs(runs, tmp_path):
    a = runs[0]
    d = tmp_path / "d"
    assert run("synth", "--seed", 4, "--out", d, "--exercises", 1, "--demos", 1,
               "--config", a / "cfg.json") == 0
    assert (d / "human_ex1_demo1.csv").read_bytes() != (a / "data" / "human_ex1_demo1.csv").read_bytes()


def test_eval_identity_reports_zero(runs, tmp_path):
    a = runs[0]
    truth = a / "data" / "ideal_robot_ex1.csv"
    assert run("eval", "--truth", truth, "--pred", truth, "--out", tmp_path / "r") == 0
    row = json.loads((tmp_path / "r" / "report.json").read_text())["rows"][0]
    assert row["rmse"] == 0.0 and row["normalized_rmse"] == 0.0


def test_adapt_on_aligned_correct_data_keeps_base_weights(runs, tmp_path):
    a = runs[0]
    body = BodyModel.load(a / "model.json")
    demo = read_csv(a / "data" / "human_ex1_demo1.csv", HUMAN)
    own = latent_parts(demo, body, parts=["left-arm"])["left-arm"]
    # ideal file whose target is the demo's own projection
    gmm = em_fit(np.column_stack([own.phase, own.frames]), 1, EmConfig())
    tr = IdealTrajectory(own.phase, own.frames, np.zeros((len(own), 2, 2)), gmm)
    dump_json(BodyIdeal({"left-arm": tr}, demo.timestamps, 1).to_dict(), tmp_path / "own.json")
    assert run("adapt", a / "data" / "human_ex1_demo1.csv", "--ideal", tmp_path / "own.json",
               "--model", a / "model.json", "--part", "left-arm", "--out", tmp_path / "p.json") == 0
    W_P = np.array(json.loads((tmp_path / "p.json").read_text())["parts"]["left-arm"]["W_P"])
    m = body["left-arm"]
    moved = gplvm.project(split_human(demo)["left-arm"].frames, m.bc.with_weights(W_P))
    assert np.max(np.linalg.norm(moved - own.frames, axis=1)) < 1e-3


def _err_line(capsys):
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1
    return err[0]


def test_errors_are_single_lines_and_write_nothing(runs, tmp_path, capsys):
    a = runs[0]
    bad = tmp_path / "bad.csv"
    text = (a / "data" / "human_ex1_demo1.csv").read_text().splitlines()
    cells = text[3].split(",")
    cells[5] = "abc"
    text[3] = ",".join(cells)
    bad.write_text("\n".join(text) + "\n")
    out = tmp_path / "o.csv"
    assert run("retarget", bad, "--model", a / "model.json", "--part", "left-arm",
               "--out", out) == 1
    line = _err_line(capsys)
    assert line.startswith("error: parse:") and "row 4, column 6" in line
    assert not out.exists()

    model = json.loads((a / "model.json").read_text())
    model["version"] = 7
    old = tmp_path / "old.json"
    old.write_text(json.dumps(model))
    assert run("retarget", a / "data" / "human_ex1_demo1.csv", "--model", old,
               "--part", "left-arm", "--out", out) == 1
    assert _err_line(capsys).startswith("error: compatibility:")
    assert not out.exists()

    assert run("eval", "--truth", tmp_path / "nope.csv", "--pred", a / "before.csv",
               "--out", tmp_path / "rep") == 1
    assert _err_line(capsys).startswith("error: invalid-input:")
    assert not (tmp_path / "rep").exists()

    assert run("synth", "--out", tmp_path / "s", "--error", "tilt", "--part", "all") == 1
    assert _err_line(capsys).startswith("error: invalid-input:")
    assert not (tmp_path / "s").exists()


def test_usage_error_is_one_line(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["retarget"])
    assert exc.value.code == 2
    assert _err_line(capsys).startswith("error: usage:")


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "latentcoach", "--version"],
                         capture_output=True, text=True)
    assert out.returncode == 0 and "latentcoach" in out.stdout
