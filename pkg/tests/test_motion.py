import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from latentcoach.errors import InvalidInputError, ParseError
from latentcoach.motion import (
    HUMAN,
    HUMAN_COLUMNS,
    HUMAN_DIM,
    MOTOR_NAMES,
    N_MOTORS,
    ROBOT,
    BodyPart,
    BodyPartPartition,
    MotionSequence,
    default_partition,
    merge_parts,
    normalize,
    read_csv,
    resample_phase,
    split_by_part,
    write_csv,
)
from latentcoach.synth import SynthConfig, forward_kinematics


def human_seq(rng, T=6):
    frames = rng.normal(size=(T, HUMAN_DIM))
    frames[:, 6:9] = frames[:, 0:3] + np.array([0.0, 1.0, 0.0]) + 0.1 * rng.normal(size=(T, 3))
    return MotionSequence(np.arange(T, dtype=float), frames, kind=HUMAN)


def test_sequence_validation():
    with pytest.raises(InvalidInputError):
        MotionSequence([0.0], np.zeros((1, HUMAN_DIM)))
    with pytest.raises(InvalidInputError):
        MotionSequence([0.0, 0.0], np.zeros((2, HUMAN_DIM)))
    with pytest.raises(InvalidInputError):
        MotionSequence([0.0, 1.0], np.zeros((2, 5)), kind=ROBOT)


def test_normalize_identity_translation_and_scale():
    rng = np.random.default_rng(0)
    seq = normalize(human_seq(rng))
    # already root-centred with unit mean torso length
    np.testing.assert_allclose(normalize(seq).frames, seq.frames, atol=1e-12)
    raw = human_seq(rng)
    shifted = raw.with_frames(raw.frames + np.tile([0.5, 0.0, 0.0], 12))
    np.testing.assert_allclose(normalize(shifted).frames, normalize(raw).frames, atol=1e-12)
    scaled = raw.with_frames(2.0 * raw.frames)
    np.testing.assert_allclose(normalize(scaled).frames, normalize(raw).frames, atol=1e-12)
    # root sits at the origin
    assert np.all(normalize(raw).frames[:, :3] == 0)


def test_normalize_degenerate_torso():
    seq = MotionSequence([0.0, 1.0], np.zeros((2, HUMAN_DIM)))
    with pytest.raises(InvalidInputError):
        normalize(seq)


@settings(max_examples=40, deadline=None)
@given(arrays(float, (5, HUMAN_DIM), elements=st.floats(-2, 2)),
       st.floats(0.2, 5.0), arrays(float, 3, elements=st.floats(-3, 3)))
def test_normalize_idempotent_and_similarity_invariant(frames, scale, shift):
    frames[:, 6:9] = frames[:, 0:3] + [0.0, 0.8, 0.1]
    seq = MotionSequence(np.arange(5.0), frames)
    n1 = normalize(seq)
    np.testing.assert_allclose(normalize(n1).frames, n1.frames, atol=1e-12)
    moved = seq.with_frames(scale * frames + np.tile(shift, 12))
    np.testing.assert_allclose(normalize(moved).frames, n1.frames, atol=1e-9)


def test_split_hand_built_pose_by_index():
    # pose where every coordinate encodes joint*10 + axis
    pose = np.array([10 * j + c for j in range(12) for c in range(3)], dtype=float)
    seq = MotionSequence([0.0, 1.0], np.vstack([pose, pose]))
    parts = split_by_part(seq)
    np.testing.assert_array_equal(parts["left-arm"].frames[0],
                                  [40, 41, 42, 50, 51, 52, 60, 61, 62])
    np.testing.assert_array_equal(parts["right-arm"].frames[0],
                                  [70, 71, 72, 80, 81, 82, 90, 91, 92])
    np.testing.assert_array_equal(parts["spine"].frames[0],
                                  [0, 1, 2, 10, 11, 12, 20, 21, 22, 30, 31, 32,
                                   100, 101, 102, 110, 111, 112])
    robot = MotionSequence([0.0, 1.0], np.tile(np.arange(13.0), (2, 1)), kind=ROBOT)
    r = split_by_part(robot)
    np.testing.assert_array_equal(r["left-arm"].frames[0], [5, 6, 7, 8])
    np.testing.assert_array_equal(r["spine"].frames[0], [0, 1, 2, 3, 4])


def test_single_part_partition_returns_input():
    whole = BodyPartPartition((BodyPart("all", tuple(range(12)), tuple(range(13))),))
    seq = human_seq(np.random.default_rng(3))
    assert np.array_equal(split_by_part(seq, whole)["all"].frames, seq.frames)


def test_partition_rejects_overlap_and_gaps():
    with pytest.raises(InvalidInputError):
        BodyPartPartition((BodyPart("a", tuple(range(12)), tuple(range(13))),
                           BodyPart("b", (0,), ())))
    with pytest.raises(InvalidInputError):
        BodyPartPartition((BodyPart("a", tuple(range(11)), tuple(range(13))),))
    with pytest.raises(InvalidInputError):
        BodyPartPartition((BodyPart("a", tuple(range(12)), tuple(range(14))),))


@st.composite
def partitions(draw):
    k = draw(st.integers(1, 4))
    j_lab = draw(st.lists(st.integers(0, k - 1), min_size=12, max_size=12))
    m_lab = draw(st.lists(st.integers(0, k - 1), min_size=13, max_size=13))
    parts = tuple(BodyPart(f"p{i}", tuple(j for j in range(12) if j_lab[j] == i),
                           tuple(m for m in range(13) if m_lab[m] == i)) for i in range(k))
    return BodyPartPartition(parts)


@settings(max_examples=60, deadline=None)
@given(partitions(), st.integers(2, 6), st.integers(0, 2**32 - 1))
def test_split_merge_bijection(partition, T, seed):
    rng = np.random.default_rng(seed)
    ts = np.cumsum(rng.uniform(0.1, 1.0, T))
    for kind, dim in ((HUMAN, HUMAN_DIM), (ROBOT, N_MOTORS)):
        seq = MotionSequence(ts, rng.normal(size=(T, dim)), kind=kind)
        back = merge_parts(split_by_part(seq, partition), partition)
        assert np.array_equal(back.frames, seq.frames)
        assert np.array_equal(back.timestamps, seq.timestamps)


def test_resample_identity_midpoint_and_ramp():
    rng = np.random.default_rng(5)
    seq = MotionSequence(np.linspace(0, 2, 7), rng.normal(size=(7, 4)), kind=ROBOT, part="x")
    np.testing.assert_allclose(resample_phase(seq, 7).frames, seq.frames, atol=1e-12)
    two = MotionSequence([0.0, 1.0], [[1.0, 2.0], [3.0, 6.0]], kind=ROBOT, part="x")
    np.testing.assert_allclose(resample_phase(two, 3).frames[1], [2.0, 4.0])
    ts = np.sort(np.concatenate([[0.0, 1.0], rng.uniform(0, 1, 9)]))
    ramp = MotionSequence(ts, ts, kind=ROBOT, part="x")
    np.testing.assert_allclose(resample_phase(ramp, 11).frames[:, 0], np.linspace(0, 1, 11),
                               atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 20), st.integers(2, 30), st.integers(0, 2**32 - 1))
def test_resample_keeps_endpoints_exactly(T, n, seed):
    rng = np.random.default_rng(seed)
    seq = MotionSequence(np.cumsum(rng.uniform(0.01, 1, T)), rng.normal(size=(T, 3)),
                         kind=ROBOT, part="x")
    out = resample_phase(seq, n)
    assert np.array_equal(out.frames[0], seq.frames[0])
    assert np.array_equal(out.frames[-1], seq.frames[-1])
    assert len(out) == n


def test_csv_round_trip_bitwise(tmp_path):
    rng = np.random.default_rng(7)
    seq = MotionSequence(np.linspace(0, 1, 5), rng.normal(size=(5, N_MOTORS)), kind=ROBOT)
    write_csv(tmp_path / "r.csv", seq)
    back = read_csv(tmp_path / "r.csv", ROBOT)
    assert np.array_equal(back.frames, seq.frames)
    assert np.array_equal(back.timestamps, seq.timestamps)


def _write_rows(path, header, rows):
    path.write_text("\n".join([",".join(header)] + [",".join(r) for r in rows]) + "\n")


def test_csv_errors_name_row_and_column(tmp_path):
    header = ("timestamp",) + MOTOR_NAMES
    good = ["0.0"] + ["1.0"] * 13
    p = tmp_path / "bad.csv"
    _write_rows(p, header, [good, ["1.0"] + ["1.0"] * 5 + ["oops"] + ["1.0"] * 7])
    with pytest.raises(ParseError, match=r"row 3, column 7 \(l_shoulder_y\)"):
        read_csv(p, ROBOT)
    _write_rows(p, header, [good, ["1.0"] * 3])
    with pytest.raises(ParseError, match="row 3: 3 columns"):
        read_csv(p, ROBOT)
    _write_rows(p, ("timestamp",) + HUMAN_COLUMNS[:-1], [good])
    with pytest.raises(ParseError, match="row 1"):
        read_csv(p, HUMAN)
    _write_rows(p, header, [good, ["nan"] + ["1.0"] * 13])
    with pytest.raises(ParseError, match="non-finite"):
        read_csv(p, ROBOT)
    _write_rows(p, header, [good, good])
    with pytest.raises(ParseError, match="strictly increasing"):
        read_csv(p, ROBOT)
    with pytest.raises(ParseError):
        read_csv(tmp_path / "missing.csv", ROBOT)


def test_default_partition_matches_joint_convention():
    p = default_partition()
    assert p["spine"].human_joints == (0, 1, 2, 3, 10, 11)
    assert p["left-arm"].human_joints == (4, 5, 6)
    assert p["right-arm"].human_joints == (7, 8, 9)
    # left-arm motors drive only left-arm joints (checked through FK)
    cfg = SynthConfig()
    base = forward_kinematics(np.zeros(13), cfg).reshape(12, 3)
    for m in p["left-arm"].robot_motors:
        z = np.zeros(13)
        z[m] = 30.0
        moved = np.flatnonzero(np.abs(forward_kinematics(z, cfg).reshape(12, 3) - base).sum(1) > 0)
        assert set(moved) <= set(p["left-arm"].human_joints)
