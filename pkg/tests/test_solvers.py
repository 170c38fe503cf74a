import json
import subprocess
import sys

import numpy as np
import pytest

from cyclematch.errors import EnergyMismatchError, ParameterError, ProtocolError, SolverError
from cyclematch.qubo import QuboProblem
from cyclematch.solvers import (
    ExactBackend, ExternalBackend, SABackend, SolveRequest, make_backend, solve_exact,
    solve_external, solve_sa,
)


def random_problem(rng, n):
    W = rng.normal(size=(n, n))
    return QuboProblem(W + W.T)


def brute(problem):
    n = problem.num_vars
    X = ((np.arange(2 ** n)[:, None] >> np.arange(n - 1, -1, -1)) & 1)
    return X, problem.energies(X)


def child(code):
    """argv for a throwaway python child that runs ``code``."""
    return [sys.executable, "-c", code]


@pytest.mark.parametrize("d, bits, energy", [(-1.0, [1], -1.0), (1.0, [0], 0.0)])
def test_exact_single_variable(d, bits, energy):
    r = solve_exact(QuboProblem(np.array([[d]])))
    assert list(r.best_assignment) == bits and r.best_energy == energy


def test_exact_two_variables_with_coupling():
    q = QuboProblem.from_entries(2, [[0, 0, -1], [1, 1, -1], [0, 1, 3]])
    r = solve_exact(q)
    assert r.best_energy == -1.0
    assert r.best_assignment.sum() == 1
    # lexicographically smallest of the two optima
    assert list(r.best_assignment) == [0, 1]


def test_exact_matches_brute_force(rng):
    for n in (1, 5, 10, 17):
        q = random_problem(rng, n)
        X, e = brute(q)
        r = solve_exact(q)
        assert r.best_energy == pytest.approx(e.min(), rel=1e-12)
        assert list(r.best_assignment) == list(X[np.argmin(e)])


def test_exact_limit():
    with pytest.raises(SolverError):
        solve_exact(QuboProblem(np.zeros((25, 25))))


def test_exact_empty_problem():
    r = solve_exact(QuboProblem(np.zeros((0, 0))))
    assert r.best_energy == 0.0 and r.best_assignment.size == 0


def test_sa_diagonal_problem_single_read(rng):
    d = rng.normal(size=12)
    r = solve_sa(QuboProblem(np.diag(d)), num_reads=1, seed=3)
    np.testing.assert_array_equal(r.best_assignment, (d < 0).astype(int))
    assert r.best_energy == pytest.approx(d[d < 0].sum())


def test_sa_deterministic(rng):
    q = random_problem(rng, 14)
    a, b = solve_sa(q, num_reads=20, seed=9), solve_sa(q, num_reads=20, seed=9)
    np.testing.assert_array_equal(a.best_assignment, b.best_assignment)
    assert a.best_energy == b.best_energy
    for (xa, ea), (xb, eb) in zip(a.samples, b.samples):
        np.testing.assert_array_equal(xa, xb)
        assert ea == eb


def test_sa_samples_reverify_and_beat_zero(rng):
    for _ in range(10):
        q = random_problem(rng, 10)
        # push the landscape so that many states are worse than zero
        q = QuboProblem(q.weights + np.diag(np.abs(rng.normal(size=10)) * 3))
        r = solve_sa(q, num_reads=15, seed=1, sweeps=5)
        assert len(r.samples) == 15
        for bits, e in r.samples:
            assert e == pytest.approx(q.energy(bits), abs=1e-9)
            assert e <= 1e-12
        assert r.best_energy == min(e for _, e in r.samples)
        assert r.best_energy <= 0.0


def test_sa_request_validation():
    with pytest.raises(ParameterError):
        SolveRequest(QuboProblem(np.eye(1)), num_reads=0)
    with pytest.raises(ParameterError):
        solve_sa(QuboProblem(np.eye(1)), num_reads=0)


def test_request_json_shape():
    q = QuboProblem.from_entries(2, [[0, 0, -1], [0, 1, 2]])
    doc = SolveRequest(q, num_reads=3, seed=5).to_json()
    assert doc == {"num_vars": 2, "entries": [[0, 0, -1.0], [0, 1, 2.0]], "num_reads": 3, "seed": 5}
    back = SolveRequest.from_json(json.loads(json.dumps(doc)))
    np.testing.assert_allclose(back.problem.weights, q.weights)


ZERO_SOLVER = (
    "import sys, json\n"
    "req = json.loads(sys.stdin.readline())\n"
    "print(json.dumps({'samples': [{'bits': [0] * req['num_vars'], 'energy': 0.0}]}))\n"
)


def test_external_echo_zero_solver():
    q = QuboProblem.from_entries(3, [[0, 0, -1], [1, 2, 4]])
    r = solve_external(q, child(ZERO_SOLVER))
    assert r.best_energy == 0.0
    assert list(r.best_assignment) == [0, 0, 0]


def test_external_energy_mismatch():
    code = ("import sys, json\nsys.stdin.readline()\n"
            "print(json.dumps({'samples': [{'bits': [1], 'energy': 5.0}]}))\n")
    with pytest.raises(EnergyMismatchError):
        solve_external(QuboProblem(np.array([[-1.0]])), child(code))


def test_external_malformed_json_names_line():
    code = "import sys\nsys.stdin.readline()\nprint('{not json')\n"
    with pytest.raises(ProtocolError, match="line 1"):
        solve_external(QuboProblem(np.array([[-1.0]])), child(code))


def test_external_wrong_bit_count():
    code = ("import sys, json\nsys.stdin.readline()\n"
            "print(json.dumps({'samples': [{'bits': [1, 0], 'energy': -1.0}]}))\n")
    with pytest.raises(ProtocolError):
        solve_external(QuboProblem(np.array([[-1.0]])), child(code))


def test_external_launch_failure():
    with pytest.raises(SolverError):
        solve_external(QuboProblem(np.array([[-1.0]])), ["/nonexistent/solver-binary"])


def test_external_failing_child():
    with pytest.raises(SolverError):
        solve_external(QuboProblem(np.array([[-1.0]])), child("import sys; sys.exit(3)"))


def test_bundled_child_solver(rng):
    q = random_problem(rng, 8)
    backend = make_backend(f"external:{sys.executable} -m cyclematch.solvers", num_reads=30)
    assert isinstance(backend, ExternalBackend)
    r = backend.solve(q, seed=2)
    X, e = brute(q)
    assert r.best_energy == pytest.approx(e.min(), rel=1e-9)
    assert len(r.samples) == 30


def test_bundled_child_rejects_garbage():
    proc = subprocess.run([sys.executable, "-m", "cyclematch.solvers"], input=b"garbage\n",
                          capture_output=True)
    assert proc.returncode != 0


def test_make_backend():
    assert isinstance(make_backend("exact"), ExactBackend)
    sa = make_backend("sa", num_reads=7, sweeps=9, beta_range=(0.1, 2.0))
    assert isinstance(sa, SABackend) and sa.num_reads == 7 and sa.sweeps == 9
    for bad in ("annealer", "external:", "external:   "):
        with pytest.raises(ParameterError):
            make_backend(bad)


def test_sa_beats_or_matches_zero_on_positive_problem():
    q = QuboProblem(np.diag([1.0, 2.0, 3.0]) + 0.1)
    r = solve_sa(q, num_reads=5, seed=0)
    assert r.best_energy == 0.0
