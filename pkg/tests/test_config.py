from pathlib import Path

import pytest

from conftest import write
from cyclematch.config import load_run_config
from cyclematch.errors import ConfigError
from cyclematch.solvers import ExternalBackend, SABackend


def test_defaults_and_relative_paths(tmp_path):
    cfg = load_run_config(write(tmp_path, "r.toml", 'shapes = ["a.off", "/abs/b.off"]\n'))
    assert cfg.shapes == [tmp_path / "a.off", Path("/abs/b.off")]
    m = cfg.match
    assert (m.T, m.worst_fraction, m.seed, m.monotone_guard, m.strict_rebuild) == (11, 0.16, 0, False, True)
    assert isinstance(m.backend, SABackend) and m.backend.num_reads == 200 and m.backend.sweeps == 100
    assert cfg.output_dir == tmp_path / "out"


def test_all_keys(tmp_path):
    text = """
shapes = ["a.off", "b.off", "c.off"]
side_labels = ["a.txt", "b.txt", "c.txt"]
T = 3
worst_fraction = 0.2
worst_count = 8
seed = 42
backend = "external:my-annealer --fast"
monotone_guard = true
strict_rebuild = false
output_dir = "results"
debug = true
[sa]
num_reads = 50
sweeps = 20
beta_min = 0.01
beta_max = 5.0
[hks]
num_eigs = 30
num_times = 8
"""
    cfg = load_run_config(write(tmp_path, "r.toml", text))
    m = cfg.match
    assert cfg.side_labels == [tmp_path / f"{c}.txt" for c in "abc"]
    assert (m.T, m.worst_fraction, m.worst_count, m.seed) == (3, 0.2, 8, 42)
    assert m.monotone_guard and not m.strict_rebuild and m.debug
    assert (m.num_eigs, m.num_times) == (30, 8)
    assert isinstance(m.backend, ExternalBackend) and m.backend.command == "my-annealer --fast"
    assert cfg.output_dir == tmp_path / "results"


def test_sa_parameters(tmp_path):
    cfg = load_run_config(write(tmp_path, "r.toml", """
shapes = ["a.off"]
[sa]
num_reads = 7
beta_min = 0.5
beta_max = 2.0
"""))
    assert cfg.match.backend.num_reads == 7 and cfg.match.backend.beta_range == (0.5, 2.0)


@pytest.mark.parametrize("text", [
    "T = 3\n",
    'shapes = ["a.off"]\nside_labels = ["x.txt", "y.txt"]\n',
    'shapes = ["a.off"]\n[sa]\nbeta_min = 1.0\n',
    'shapes = ["a.off"]\nT = "many"\n',
])
def test_invalid_configs(tmp_path, text):
    with pytest.raises(ConfigError):
        load_run_config(write(tmp_path, "r.toml", text))
