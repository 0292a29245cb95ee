import sys
from pathlib import Path

import numpy as np
import pytest
import torch
from hypothesis import settings

sys.path.insert(0, str(Path(__file__).parent))
torch.set_num_threads(1)

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")


@pytest.fixture(scope="session")
def toy_set():
    from bindpose import toy

    return toy.make_toy_set()


@pytest.fixture(scope="session")
def toy_graph(toy_set):
    from bindpose.graph import featurize

    c = toy_set[0]
    return featurize(c.pocket, c.ligand, affinity=c.affinity, name=c.complex_id)


@pytest.fixture(scope="session")
def bundled_dir():
    from bindpose.toy import bundled_dir

    return bundled_dir()


def small_complex(seed: int = 0, n_residues=(2, 3), max_ligand: int = 8, max_pocket: int = 20):
    """A small random synthetic complex and its graph."""
    from bindpose import toy
    from bindpose.graph import featurize

    rng = np.random.default_rng(seed)
    ligand = toy.make_ligand(rng, max_atoms=max_ligand)
    protein = toy.make_pocket(ligand, rng, max_atoms=max_pocket, n_residues=n_residues)
    c = toy.ToyComplex("s", protein, ligand, 6.0, "", "", "")
    return c, featurize(c.pocket, ligand, affinity=6.0, name=f"small{seed}")


@pytest.fixture
def small():
    return small_complex(0)


# ---------------------------------------------------------------- acceptance report

_ACCEPTANCE: dict[int, tuple[str, str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): primary acceptance criterion")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    marker = dict(report.user_properties).get("acceptance")
    if marker is None:
        return
    number, title = marker
    detail = dict(report.user_properties).get("detail", "")
    _ACCEPTANCE[number] = (title, "PASS" if report.passed else "FAIL", detail)


@pytest.fixture(autouse=True)
def _acceptance_tag(request, record_property):
    mark = request.node.get_closest_marker("acceptance")
    if mark is not None:
        record_property("acceptance", tuple(mark.args))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, status, detail = _ACCEPTANCE[number]
        terminalreporter.write_line(f"[{status}] {number}. {title}" + (f" -- {detail}" if detail else ""))
