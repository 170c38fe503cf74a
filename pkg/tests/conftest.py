import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from cyclematch.mesh import Mesh, Shape  # noqa: E402
from cyclematch.synthetic import bumpy_sphere, isometric_copies  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def square_mesh():
    # unit square split along the 0-2 diagonal
    v = np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]], dtype=float)
    return Mesh(v, np.array([[0, 1, 2], [0, 2, 3]]))


@pytest.fixture(scope="session")
def small_copies():
    """Three relabelled copies of a 60-vertex bumpy sphere."""
    base = bumpy_sphere(60, seed=11)
    meshes, orders = isometric_copies(base, 3, seed=2)
    return [Shape.from_mesh(m) for m in meshes], orders


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE_RESULTS: list = []


def record_acceptance(name: str, passed: bool, detail: str = "") -> None:
    line = f"[{'PASS' if passed else 'FAIL'}] {name}" + (f": {detail}" if detail else "")
    ACCEPTANCE_RESULTS.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_RESULTS:
            terminalreporter.write_line(line)
