"""QUBO backends: exhaustive search, simulated annealing, external process.

Every backend minimises ``x^T W x`` (the problem constant is not included
in reported energies) and returns a :class:`SolveResult`.

Running ``python -m cyclematch.solvers`` starts a child that answers one
request line on stdin with simulated annealing, which makes it a drop-in
``external:`` backend.
"""

from __future__ import annotations

import json
import shlex
import subprocess
import sys
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import EnergyMismatchError, ParameterError, ProtocolError, SolverError
from .qubo import QuboProblem

MAX_EXACT_VARS = 24
VERIFY_TOL = 1e-9
EXTERNAL_TOL = 1e-6


@dataclass
class SolveResult:
    best_assignment: np.ndarray
    best_energy: float
    samples: list = field(default_factory=list)  # [(bits, energy), ...]

    def to_json(self) -> dict:
        return {"samples": [{"bits": [int(b) for b in bits], "energy": float(e)}
                            for bits, e in self.samples]}


@dataclass
class SolveRequest:
    problem: QuboProblem
    num_reads: int = 200
    seed: int = 0
    sweeps: int = 100
    beta_range: tuple | None = None

    def __post_init__(self):
        if self.num_reads < 1:
            raise ParameterError("num_reads must be at least 1")

    def to_json(self) -> dict:
        return {"num_vars": self.problem.num_vars,
                "entries": self.problem.upper_entries(),
                "num_reads": int(self.num_reads), "seed": int(self.seed)}

    @classmethod
    def from_json(cls, doc: dict) -> "SolveRequest":
        problem = QuboProblem.from_entries(int(doc["num_vars"]), doc.get("entries", []))
        return cls(problem, int(doc.get("num_reads", 200)), int(doc.get("seed", 0)))


def _result_from_samples(problem: QuboProblem, X) -> SolveResult:
    X = np.asarray(X, dtype=np.int8).reshape(-1, problem.num_vars)
    energies = problem.energies(X)
    best = int(np.argmin(energies))
    samples = [(X[r].copy(), float(energies[r])) for r in range(len(X))]
    return SolveResult(X[best].copy(), float(energies[best]), samples)


# ---------------------------------------------------------------- exact


def solve_exact(problem: QuboProblem) -> SolveResult:
    """Global optimum by enumeration; ties go to the lexicographically smallest bits."""
    n = problem.num_vars
    if n > MAX_EXACT_VARS:
        raise SolverError(f"exhaustive search limited to {MAX_EXACT_VARS} variables, got {n}")
    if n == 0:
        return SolveResult(np.zeros(0, np.int8), 0.0, [(np.zeros(0, np.int8), 0.0)])
    W = problem.weights
    # bit i of the assignment is bit (n-1-i) of the code, so code order is lexicographic
    shifts = np.arange(n - 1, -1, -1, dtype=np.int64)
    best_e, best_code = np.inf, 0
    chunk = 1 << min(n, 16)
    for start in range(0, 1 << n, chunk):
        codes = np.arange(start, start + chunk, dtype=np.int64)
        X = ((codes[:, None] >> shifts) & 1).astype(np.float64)
        e = np.einsum("ri,ri->r", X @ W, X)
        lo = float(e.min())
        i = int(np.flatnonzero(e <= lo + 1e-12 * max(1.0, abs(lo)))[0])
        # earlier chunks hold smaller codes, so they win near-ties
        if start == 0 or e[i] < best_e - 1e-12 * max(1.0, abs(best_e)):
            best_e, best_code = float(e[i]), int(codes[i])
    bits = ((best_code >> shifts) & 1).astype(np.int8)
    return SolveResult(bits, problem.energy(bits), [(bits.copy(), problem.energy(bits))])


# ---------------------------------------------------------------- annealing


@njit(cache=True)
def _anneal(W, betas, seeds):
    reads = seeds.shape[0]
    n = W.shape[0]
    out = np.zeros((reads, n), dtype=np.int8)
    x = np.zeros(n, dtype=np.int8)
    h = np.zeros(n)
    for r in range(reads):
        np.random.seed(seeds[r])
        for i in range(n):
            x[i] = 1 if np.random.random() < 0.5 else 0
        # h_i = W_ii + 2 sum_{j != i} W_ij x_j; flipping i changes E by (1 - 2 x_i) h_i
        energy = 0.0
        for i in range(n):
            s = W[i, i]
            for j in range(n):
                if j != i and x[j]:
                    s += 2.0 * W[i, j]
            h[i] = s
            if x[i]:
                energy += W[i, i]
                for j in range(i + 1, n):
                    if x[j]:
                        energy += 2.0 * W[i, j]
        best = energy
        for i in range(n):
            out[r, i] = x[i]
        for beta in betas:
            for i in range(n):
                delta = h[i] if x[i] == 0 else -h[i]
                if delta <= 0.0 or np.random.random() < np.exp(-beta * delta):
                    step = 1.0 if x[i] == 0 else -1.0
                    x[i] = 1 - x[i]
                    energy += delta
                    for j in range(n):
                        if j != i:
                            h[j] += 2.0 * W[j, i] * step
                    if energy < best:
                        best = energy
                        for j in range(n):
                            out[r, j] = x[j]
        # the all-zero assignment is always a candidate
        if best > 0.0:
            for j in range(n):
                out[r, j] = 0
    return out


def default_beta_range(W: np.ndarray) -> tuple:
    a = np.abs(W)
    nz = a[a > 0]
    if nz.size == 0:
        return (1.0, 1.0)
    return (0.1 / float(nz.max()), 10.0 / float(nz.mean()))


def solve_sa(problem: QuboProblem, num_reads: int = 200, seed: int = 0, sweeps: int = 100,
             beta_range: tuple | None = None) -> SolveResult:
    """Single-flip Metropolis annealing with ``num_reads`` independent restarts.

    The inverse temperature rises geometrically from ``beta_range[0]`` to
    ``beta_range[1]`` over ``sweeps`` full sweeps. Each read keeps the best
    state it visited, or the zero assignment if that is better.
    """
    if num_reads < 1 or sweeps < 1:
        raise ParameterError("num_reads and sweeps must be positive")
    n = problem.num_vars
    if n == 0:
        return _result_from_samples(problem, np.zeros((num_reads, 0)))
    lo, hi = beta_range or default_beta_range(problem.weights)
    betas = np.geomspace(lo, hi, sweeps)
    seeds = np.random.SeedSequence(int(seed)).generate_state(num_reads, dtype=np.uint32)
    seeds = (seeds & 0x7FFFFFFF).astype(np.int64)
    X = _anneal(np.ascontiguousarray(problem.weights), betas, seeds)
    return _result_from_samples(problem, X)


# ---------------------------------------------------------------- external


def _parse_response(problem: QuboProblem, line: str, lineno: int = 1) -> SolveResult:
    try:
        doc = json.loads(line)
        raw = doc["samples"]
        samples = [(np.asarray(s["bits"], dtype=np.int64), float(s["energy"])) for s in raw]
    except (ValueError, KeyError, TypeError) as exc:
        raise ProtocolError(
            f"malformed response on line {lineno} {line.strip()[:200]!r}: {exc}"
        ) from None
    if not samples:
        raise ProtocolError("response contains no samples")
    checked = []
    for bits, reported in samples:
        if bits.shape != (problem.num_vars,) or not np.isin(bits, (0, 1)).all():
            raise ProtocolError(
                f"sample has {bits.size} bits for {problem.num_vars} variables or non-binary values"
            )
        actual = problem.energy(bits)
        if abs(actual - reported) > EXTERNAL_TOL * max(1.0, abs(actual)):
            raise EnergyMismatchError(
                f"reported energy {reported} but assignment evaluates to {actual}"
            )
        checked.append((bits.astype(np.int8), actual))
    best = min(range(len(checked)), key=lambda i: checked[i][1])
    return SolveResult(checked[best][0].copy(), checked[best][1], checked)


def solve_external(problem: QuboProblem, command, num_reads: int = 200, seed: int = 0,
                   timeout: float | None = None) -> SolveResult:
    """Send one request line to a child process and validate its one-line reply."""
    argv = shlex.split(command) if isinstance(command, str) else list(command)
    request = json.dumps(SolveRequest(problem, num_reads, seed).to_json()) + "\n"
    try:
        proc = subprocess.run(argv, input=request.encode("utf-8"), capture_output=True,
                              timeout=timeout)
    except (OSError, subprocess.SubprocessError) as exc:
        raise SolverError(f"could not run external solver {argv!r}: {exc}") from None
    if proc.returncode != 0:
        err = proc.stderr.decode("utf-8", "replace").strip()
        raise SolverError(f"external solver exited with {proc.returncode}: {err[-500:]}")
    lines = [(i, ln) for i, ln in enumerate(proc.stdout.decode("utf-8", "replace").splitlines(), 1)
             if ln.strip()]
    if not lines:
        raise ProtocolError("external solver produced no output")
    lineno, line = lines[0]
    return _parse_response(problem, line, lineno)


# ---------------------------------------------------------------- backends


class ExactBackend:
    name = "exact"

    def solve(self, problem: QuboProblem, seed: int = 0) -> SolveResult:
        return solve_exact(problem)


@dataclass
class SABackend:
    num_reads: int = 200
    sweeps: int = 100
    beta_range: tuple | None = None
    name: str = "sa"

    def solve(self, problem: QuboProblem, seed: int = 0) -> SolveResult:
        return solve_sa(problem, self.num_reads, seed, self.sweeps, self.beta_range)


@dataclass
class ExternalBackend:
    command: str
    num_reads: int = 200
    timeout: float | None = None
    name: str = "external"

    def solve(self, problem: QuboProblem, seed: int = 0) -> SolveResult:
        return solve_external(problem, self.command, self.num_reads, seed, self.timeout)


def make_backend(spec: str, num_reads: int = 200, sweeps: int = 100, beta_range=None):
    """``"exact"``, ``"sa"`` or ``"external:<command>"``."""
    if spec == "exact":
        return ExactBackend()
    if spec == "sa":
        return SABackend(num_reads, sweeps, beta_range)
    if spec.startswith("external:") and spec[len("external:"):].strip():
        return ExternalBackend(spec[len("external:"):].strip(), num_reads)
    raise ParameterError(f"unknown backend {spec!r}")


def main() -> int:
    line = sys.stdin.readline()
    try:
        request = SolveRequest.from_json(json.loads(line))
    except (ValueError, KeyError, TypeError) as exc:
        print(f"bad request: {exc}", file=sys.stderr)
        return 2
    result = solve_sa(request.problem, request.num_reads, request.seed)
    sys.stdout.write(json.dumps(result.to_json()) + "\n")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
