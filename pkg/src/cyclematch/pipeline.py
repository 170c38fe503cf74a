"""Three-shape updates and the N-shape driver around a fixed anchor shape."""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .descriptors import DEFAULT_NUM_TIMES, all_pair_inits, hks, select_anchor
from .errors import DimensionError, ParameterError
from .permutations import (
    Permutation, cae_apply, derive_seed, even_worst_count, one_factorization,
    pair_rounds, worst_vertices,
)
from .qubo import EnergyOracle, QuboProblem, build_qubo, kernelize, permutation_energy
from .solvers import SABackend

logger = logging.getLogger(__name__)

# integer tags for derive_seed
_SEED_SAMPLING, _SEED_STEP = 1, 2


@dataclass(frozen=True)
class TripletSlice:
    p_xy: Permutation
    p_yz: Permutation
    p_xz: Permutation

    @classmethod
    def from_pair(cls, p_xy: Permutation, p_yz: Permutation) -> "TripletSlice":
        return cls(p_xy, p_yz, p_xy @ p_yz)


def triplet_energy(slc: TripletSlice, oracles) -> float:
    return (permutation_energy(oracles["xy"], slc.p_xy)
            + permutation_energy(oracles["yz"], slc.p_yz)
            + permutation_energy(oracles["xz"], slc.p_xz))


def monotone_guard(before: TripletSlice, after: TripletSlice, oracles, enabled: bool,
                   energy_before: float | None = None) -> TripletSlice:
    """Return ``before`` instead of ``after`` if the update raised the three-pair energy."""
    if not enabled:
        return after
    if energy_before is None:
        energy_before = triplet_energy(before, oracles)
    return before if triplet_energy(after, oracles) > energy_before else after


def solve_update(problem: QuboProblem, solver, seed: int) -> np.ndarray:
    """Kernelize, solve the residual and return the full bit vector.

    Falls back to the all-zero (no-op) update if the chosen bits score worse
    than it under the truncated objective.
    """
    reduced = kernelize(problem)
    if reduced.num_vars:
        bits = reduced.expand(solver.solve(reduced, seed).best_assignment)
    else:
        bits = reduced.expand([])
    if problem.energy(bits) > 0.0:
        bits = np.zeros(problem.num_vars, dtype=np.int8)
    return bits


def _worst_sets(source: str, p_xy, p_yz, oracles, m):
    if source == "xy":
        vx = worst_vertices(p_xy, oracles["xy"], m)
        return vx, p_xy.map[vx]
    if source == "yz":
        vy = worst_vertices(p_yz, oracles["yz"], m)
        return p_xy.inverse().map[vy], vy
    vx = worst_vertices(p_xy @ p_yz, oracles["xz"], m)
    return vx, p_xy.map[vx]


def three_shape_step(slc: TripletSlice, oracles, m: int, seed: int, solver,
                     strict_rebuild: bool = True, guard: bool = False,
                     stats: dict | None = None) -> TripletSlice:
    """One iteration over a shape triplet: three sub-iterations, one per inconsistency source.

    Each sub-iteration picks ``m`` worst vertices, 1-factorizes the candidate
    transpositions on the X and Y sides, pairs the rounds and solves one QUBO
    per pair, applying the chosen swaps to ``P_XY`` and ``P_YZ``. With
    ``strict_rebuild`` off, all QUBOs of a sub-iteration are built from the
    permutations at its start and their solutions are applied afterwards.
    """
    if slc.p_xz != slc.p_xy @ slc.p_yz:
        raise ParameterError("slice is not cycle consistent: P_XZ != P_XY P_YZ")
    p_xy, p_yz = slc.p_xy, slc.p_yz
    if m < 2:
        return slc
    stats = stats if stats is not None else {}
    energy = triplet_energy(slc, oracles) if guard else None

    def accept(new_xy, new_yz):
        nonlocal p_xy, p_yz, energy
        if guard:
            new = TripletSlice.from_pair(new_xy, new_yz)
            e = triplet_energy(new, oracles)
            if e > energy:
                stats["reverted"] = stats.get("reverted", 0) + 1
                return
            energy = e
        p_xy, p_yz = new_xy, new_yz

    for sub, source in enumerate(("xy", "yz", "xz")):
        vx, vy = _worst_sets(source, p_xy, p_yz, oracles, m)
        fx = one_factorization(vx, derive_seed(seed, sub, 0))
        fy = one_factorization(vy, derive_seed(seed, sub, 1))
        pairs = pair_rounds(fx, fy, derive_seed(seed, sub, 2))
        k = m // 2
        if strict_rebuild:
            for r, (bx, by) in enumerate(pairs):
                q = build_qubo(oracles, p_xy, p_yz, bx, by, with_constant=False)
                bits = solve_update(q, solver, derive_seed(seed, sub, 3, r))
                stats["qubos"] = stats.get("qubos", 0) + 1
                if bits.any():
                    accept(cae_apply(p_xy, bx, bits[:k]), cae_apply(p_yz, by, bits[k:]))
        else:
            problems = [build_qubo(oracles, p_xy, p_yz, bx, by, with_constant=False)
                        for bx, by in pairs]
            for r, ((bx, by), q) in enumerate(zip(pairs, problems)):
                bits = solve_update(q, solver, derive_seed(seed, sub, 3, r))
                stats["qubos"] = stats.get("qubos", 0) + 1
                if bits.any():
                    accept(cae_apply(p_xy, bx, bits[:k]), cae_apply(p_yz, by, bits[k:]))
    return TripletSlice.from_pair(p_xy, p_yz)


# ---------------------------------------------------------------- schedule


@dataclass(frozen=True)
class Schedule:
    """Geodesic phase of ``T (N - 1)`` iterations, then a Gaussian phase as long.

    The Gaussian bandwidth, as a fraction of each shape's diameter, is
    ``c2 exp(c1 / s)`` for the 1-based step ``s`` that advances every
    ``N - 1`` iterations, going from ``rho_start`` to ``rho_end``.
    """

    T: int
    N: int
    rho_start: float = 0.25
    rho_end: float = 0.05

    def __post_init__(self):
        if self.T < 1 or self.N < 3:
            raise ParameterError("schedule needs T >= 1 and N >= 3")

    @property
    def total(self) -> int:
        return 2 * self.T * (self.N - 1)

    @property
    def geodesic_iterations(self) -> int:
        return self.T * (self.N - 1)

    def mode(self, i: int) -> str:
        return "geodesic" if i < self.geodesic_iterations else "gaussian"

    @property
    def constants(self) -> tuple:
        """``(c1, c2)`` so that step 1 gives ``rho_start`` and step ``T`` gives ``rho_end``."""
        if self.T == 1:
            return 0.0, self.rho_end
        c1 = math.log(self.rho_start / self.rho_end) * self.T / (self.T - 1)
        return c1, self.rho_start * math.exp(-c1)

    def step(self, i: int) -> int:
        if not self.geodesic_iterations <= i < self.total:
            raise ParameterError(f"iteration {i} is outside the Gaussian phase")
        return (i - self.geodesic_iterations) // (self.N - 1) + 1


def rho_at(schedule: Schedule, i: int, diameter: float = 1.0) -> float:
    c1, c2 = schedule.constants
    return diameter * c2 * math.exp(c1 / schedule.step(i))


# ---------------------------------------------------------------- driver


@dataclass
class MatchConfig:
    T: int = 11
    worst_fraction: float = 0.16
    worst_count: int | None = None
    seed: int = 0
    backend: object = field(default_factory=SABackend)
    monotone_guard: bool = False
    strict_rebuild: bool = True
    num_eigs: int | None = None
    num_times: int = DEFAULT_NUM_TIMES
    debug: bool = False

    def m_for(self, n: int) -> int:
        if self.worst_count is not None:
            m = int(self.worst_count)
            if m % 2 or not 2 <= m <= n:
                raise ParameterError(f"worst_count must be even and in [2, {n}], got {m}")
            return m
        return even_worst_count(n, self.worst_fraction)


@dataclass
class LogRow:
    iteration: int
    mode: str
    energy: float
    seconds: float
    x: int
    z: int
    rho: float | None
    triplet_before: float
    triplet_after: float


@dataclass
class EnergyLog:
    initial_energy: float = 0.0
    rows: list = field(default_factory=list)

    def append(self, row: LogRow) -> None:
        self.rows.append(row)

    @property
    def energies(self) -> list:
        return [r.energy for r in self.rows]

    @property
    def final_energy(self) -> float:
        return self.rows[-1].energy if self.rows else self.initial_energy

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["iteration", "mode", "energy", "seconds"])
            for r in self.rows:
                w.writerow([r.iteration, r.mode, repr(r.energy), f"{r.seconds:.6f}"])


@dataclass
class MatchingState:
    """Permutations into the anchor; every other matching is derived from them."""

    shapes: list
    anchor: int
    perms: dict
    iteration: int = 0

    def to_anchor(self, i: int) -> Permutation:
        if i == self.anchor:
            return Permutation.identity(self.shapes[0].n)
        return self.perms[i]

    def pair(self, i: int, j: int) -> Permutation:
        """Derived ``P_IJ = P_IA P_JA^-1``."""
        return self.to_anchor(i) @ self.to_anchor(j).inverse()

    def anchor_energy(self) -> float:
        """Geodesic energy summed over all (shape, anchor) pairs."""
        A = self.shapes[self.anchor]
        return sum(permutation_energy(EnergyOracle(self.shapes[i].geodesics, A.geodesics), p)
                   for i, p in self.perms.items())


def _check_shapes(shapes):
    if len(shapes) < 3:
        raise ParameterError(f"need at least 3 shapes, got {len(shapes)}")
    sizes = {s.n for s in shapes}
    if len(sizes) != 1:
        raise DimensionError(f"all shapes need the same vertex count, got {sorted(sizes)}")


def initial_matchings(shapes, config: MatchConfig) -> dict:
    descs = [hks(s.mesh, config.num_eigs, config.num_times) for s in shapes]
    return all_pair_inits(descs)


def match_collection(shapes, config: MatchConfig | None = None, inits: dict | None = None,
                     anchor: int | None = None,
                     callback: Callable | None = None):
    """Match ``N >= 3`` shapes of equal size with cycle consistency by construction.

    ``inits`` maps ordered pairs ``(I, J)`` to initial permutations; by default
    they come from HKS descriptors. Returns ``(MatchingState, EnergyLog)``.
    ``callback(state, row)`` runs after every iteration.
    """
    config = config or MatchConfig()
    _check_shapes(shapes)
    N, n = len(shapes), shapes[0].n
    if inits is None:
        inits = initial_matchings(shapes, config)
    if anchor is None:
        anchor = select_anchor(shapes, inits)
    A = anchor
    others = [i for i in range(N) if i != A]
    state = MatchingState(list(shapes), A, {i: inits[i, A] for i in others})

    geo_energy = {i: permutation_energy(EnergyOracle(shapes[i].geodesics, shapes[A].geodesics), p)
                  for i, p in state.perms.items()}
    log = EnergyLog(initial_energy=float(sum(geo_energy.values())))
    schedule = Schedule(config.T, N)
    m = config.m_for(n)
    rng = np.random.default_rng(derive_seed(config.seed, _SEED_SAMPLING))
    logger.info("matching %d shapes (n=%d), anchor %d, m=%d, %d iterations",
                N, n, A, m, schedule.total)

    pool: list = []
    prev_x = None
    for i in range(schedule.total):
        t0 = time.perf_counter()
        if i % (N - 1) == 0:
            pool = list(others)
        # avoid X == Z when a new stratum starts with the previous pick
        candidates = [s for s in pool if s != prev_x] or pool
        x = int(candidates[rng.integers(len(candidates))])
        pool.remove(x)
        if prev_x is None:
            rest = [s for s in others if s != x]
            prev_x = int(rest[rng.integers(len(rest))])
        z = prev_x

        mode = schedule.mode(i)
        rho = None
        if mode == "geodesic":
            fx, fa, fz = shapes[x].geodesics, shapes[A].geodesics, shapes[z].geodesics
        else:
            frac = rho_at(schedule, i)
            rho = frac
            fx, fa, fz = (shapes[s].kernel(frac * shapes[s].diameter) for s in (x, A, z))
        oracles = {"xy": EnergyOracle(fx, fa, mode), "yz": EnergyOracle(fa, fz, mode),
                   "xz": EnergyOracle(fx, fz, mode)}

        p_za_inv = state.perms[z].inverse()
        slc = TripletSlice(state.perms[x], p_za_inv, state.perms[x] @ p_za_inv)
        before = triplet_energy(slc, oracles)
        new = three_shape_step(slc, oracles, m, derive_seed(config.seed, _SEED_STEP, i),
                               config.backend, config.strict_rebuild, config.monotone_guard)
        after = triplet_energy(new, oracles)

        state.perms[x] = new.p_xy
        state.perms[z] = new.p_yz.inverse()
        state.iteration = i + 1
        if config.debug:
            for p in state.perms.values():
                Permutation(p.map)
        for s in (x, z):
            geo_energy[s] = permutation_energy(
                EnergyOracle(shapes[s].geodesics, shapes[A].geodesics), state.perms[s])
        row = LogRow(i, mode, float(sum(geo_energy.values())), time.perf_counter() - t0,
                     x, z, rho, before, after)
        log.append(row)
        logger.debug("iter %d %s x=%d z=%d triplet %.6g -> %.6g total %.6g",
                     i, mode, x, z, before, after, row.energy)
        if callback is not None:
            callback(state, row)
        prev_x = x
    return state, log
