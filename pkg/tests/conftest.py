import sys

import numpy as np
import pytest

from latentcoach import gplvm
from latentcoach.motion import split_by_part
from latentcoach.pipeline import split_human
from latentcoach.synth import SynthConfig, generate_exercise


@pytest.fixture(scope="session")
def small_cfg():
    return SynthConfig(frames=30, seed=11)


@pytest.fixture(scope="session")
def small_data(small_cfg):
    """Left-arm rows of two short exercises, two demos each, plus a held-out demo."""
    Ys, Zs, held = [], [], []
    for e in (1, 3):
        ds = generate_exercise(small_cfg, e, 3)
        for d in range(3):
            y = split_human(ds.human[d])["left-arm"].frames
            z = split_by_part(ds.robot[d])["left-arm"].frames
            tz = split_by_part(ds.truth_robot[d])["left-arm"].frames
            if d < 2:
                Ys.append(y)
                Zs.append(z)
            else:
                held.append((y, tz))
    return np.vstack(Ys), np.vstack(Zs), held


@pytest.fixture(scope="session")
def small_model(small_data):
    Y, Z, _ = small_data
    return gplvm.train(Y, Z, gplvm.TrainConfig(max_iters=80), part="left-arm")


def pytest_terminal_summary(terminalreporter):
    """Print the acceptance lines recorded by ``test_acceptance.py``."""
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
