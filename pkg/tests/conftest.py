import numpy as np
import pytest
from hypothesis import settings

from marginmine.embed_io import normalize_rows
from marginmine.records import EmbeddingMatrix
from marginmine.synthgen import SynthConfig, generate

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")

HUB_CONFIG = SynthConfig(n_pairs=1000, n_distractors=1000, dim=32, noise=0.8, n_hubs=20,
                         hub_strength=0.9, seed=42, anisotropy=0.5)
SMALL_CONFIG = SynthConfig(n_pairs=4, n_distractors=0, dim=4, noise=0.5, n_hubs=0, hub_strength=0.0, seed=42)
NOISY7_CONFIG = SynthConfig(n_pairs=500, n_distractors=0, dim=32, noise=1.0, n_hubs=0, hub_strength=0.0, seed=7)


def unit(rows) -> EmbeddingMatrix:
    return normalize_rows(EmbeddingMatrix(np.asarray(rows, dtype=np.float32)))


@pytest.fixture(scope="session")
def hub_fixture():
    return generate(HUB_CONFIG)


@pytest.fixture(scope="session")
def small_fixture():
    return generate(SMALL_CONFIG)


@pytest.fixture(scope="session")
def noisy7_fixture():
    return generate(NOISY7_CONFIG)


# acceptance reporting: one PASS/FAIL line per criterion after the run

_criteria = {}
_outcomes = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


def pytest_collection_modifyitems(items):
    for item in items:
        m = item.get_closest_marker("criterion")
        if m is not None:
            _criteria[item.nodeid] = m.args


def pytest_runtest_logreport(report):
    if report.nodeid in _criteria and (report.when == "call" or report.outcome != "passed"):
        prev = _outcomes.get(report.nodeid, "PASS")
        _outcomes[report.nodeid] = "FAIL" if report.outcome == "failed" or prev == "FAIL" else (
            "SKIP" if report.outcome == "skipped" else "PASS")


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for nodeid, (number, title) in sorted(_criteria.items(), key=lambda kv: kv[1][0]):
        if nodeid in _outcomes:
            terminalreporter.write_line(f"[{_outcomes[nodeid]}] criterion {number:>2}: {title}")
