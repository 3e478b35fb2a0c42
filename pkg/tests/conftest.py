import numpy as np
import pytest

from nanosr import data as D


@pytest.fixture(scope="session")
def desk(tmp_path_factory):
    """The seeded 20-sequence desk dataset, generated once per session."""
    return D.make_desk_dataset(tmp_path_factory.mktemp("desk"), seed=0)


@pytest.fixture(scope="session")
def tiny_desk(tmp_path_factory):
    return D.make_desk_dataset(
        tmp_path_factory.mktemp("tiny"), n_sequences=3, n_frames=3, frame_size=(32, 48), seed=1
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance") or __import__("sys").modules.get("tests.test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for n in sorted(lines):
            terminalreporter.write_line(lines[n])
