import math

import numpy as np
import pytest

from cyclematch.errors import DimensionError, ParameterError
from cyclematch.mesh import Shape
from cyclematch.permutations import Permutation
from cyclematch.pipeline import (
    MatchConfig, Schedule, TripletSlice, match_collection, monotone_guard, rho_at,
    three_shape_step, triplet_energy,
)
from cyclematch.qubo import EnergyOracle, QuboProblem
from cyclematch.solvers import ExactBackend, SolveResult
from cyclematch.synthetic import bumpy_sphere, ground_truth, isometric_copies


class RandomBackend:
    """Adversarial backend: ignores the problem and returns random bits."""

    def solve(self, problem: QuboProblem, seed: int = 0) -> SolveResult:
        bits = np.random.default_rng(seed).integers(0, 2, problem.num_vars).astype(np.int8)
        return SolveResult(bits, problem.energy(bits), [(bits, problem.energy(bits))])


def oracles_for(shapes, x, y, z):
    f = [s.geodesics for s in shapes]
    return {"xy": EnergyOracle(f[x], f[y]), "yz": EnergyOracle(f[y], f[z]),
            "xz": EnergyOracle(f[x], f[z])}


def gt_perm(orders, i, j):
    return Permutation(ground_truth(orders[i], orders[j]))


def test_identical_shapes_identity_fixed_point():
    s = Shape.from_mesh(bumpy_sphere(40, seed=0))
    I = Permutation.identity(40)
    slc = TripletSlice.from_pair(I, I)
    out = three_shape_step(slc, oracles_for([s, s, s], 0, 1, 2), 8, seed=0, solver=ExactBackend())
    assert out == slc


def test_ground_truth_fixed_point(small_copies):
    shapes, orders = small_copies
    slc = TripletSlice.from_pair(gt_perm(orders, 0, 1), gt_perm(orders, 1, 2))
    oracles = oracles_for(shapes, 0, 1, 2)
    assert triplet_energy(slc, oracles) == 0.0
    out = three_shape_step(slc, oracles, 12, seed=4, solver=ExactBackend())
    assert out == slc


def test_step_reduces_energy_with_injected_errors(small_copies):
    shapes, orders = small_copies
    rng = np.random.default_rng(8)
    p_xy = gt_perm(orders, 0, 1)
    for _ in range(5):
        u, v = rng.choice(60, 2, replace=False)
        p_xy = p_xy.swapped(u, v)
    slc = TripletSlice.from_pair(p_xy, gt_perm(orders, 1, 2))
    oracles = oracles_for(shapes, 0, 1, 2)
    before = triplet_energy(slc, oracles)
    out = three_shape_step(slc, oracles, 12, seed=1, solver=ExactBackend())
    assert triplet_energy(out, oracles) < before
    assert out.p_xz == out.p_xy @ out.p_yz


def test_step_requires_consistent_slice(small_copies):
    shapes, _ = small_copies
    I = Permutation.identity(60)
    bad = TripletSlice(I, I, I.swapped(0, 1))
    with pytest.raises(ParameterError):
        three_shape_step(bad, oracles_for(shapes, 0, 1, 2), 4, 0, ExactBackend())


def test_step_counts_qubos(small_copies):
    shapes, orders = small_copies
    stats = {}
    slc = TripletSlice.from_pair(gt_perm(orders, 0, 1), gt_perm(orders, 1, 2))
    three_shape_step(slc, oracles_for(shapes, 0, 1, 2), 8, 0, ExactBackend(), stats=stats)
    assert stats["qubos"] == 3 * 7  # three sub-iterations of m - 1 rounds


@pytest.mark.parametrize("strict", [True, False])
def test_step_adversarial_backend_stays_valid(small_copies, strict):
    shapes, orders = small_copies
    slc = TripletSlice.from_pair(gt_perm(orders, 0, 1), gt_perm(orders, 1, 2))
    out = three_shape_step(slc, oracles_for(shapes, 0, 1, 2), 10, 3, RandomBackend(),
                           strict_rebuild=strict)
    for p in (out.p_xy, out.p_yz, out.p_xz):
        Permutation(p.map)
    assert out.p_xz == out.p_xy @ out.p_yz


def test_guard_blocks_adversarial_increase(small_copies):
    shapes, orders = small_copies
    slc = TripletSlice.from_pair(gt_perm(orders, 0, 1), gt_perm(orders, 1, 2))
    oracles = oracles_for(shapes, 0, 1, 2)
    stats = {}
    out = three_shape_step(slc, oracles, 10, 3, RandomBackend(), guard=True, stats=stats)
    assert triplet_energy(out, oracles) == 0.0


def test_monotone_guard_rules(small_copies):
    shapes, orders = small_copies
    oracles = oracles_for(shapes, 0, 1, 2)
    good = TripletSlice.from_pair(gt_perm(orders, 0, 1), gt_perm(orders, 1, 2))
    bad = TripletSlice.from_pair(good.p_xy.swapped(0, 1), good.p_yz)
    assert monotone_guard(good, bad, oracles, enabled=False) is bad
    assert monotone_guard(good, bad, oracles, enabled=True) is good
    assert monotone_guard(bad, good, oracles, enabled=True) is good


def test_schedule_counts():
    s = Schedule(11, 3)
    assert s.total == 44
    assert s.geodesic_iterations == 22
    assert [s.mode(i) for i in (0, 21, 22, 43)] == ["geodesic", "geodesic", "gaussian", "gaussian"]
    assert Schedule(11, 10).total == 2 * 11 * 9


def test_rho_endpoints_and_midpoint():
    T, N = 11, 4
    s = Schedule(T, N)
    first, last = s.geodesic_iterations, s.total - 1
    assert rho_at(s, first, 2.0) == pytest.approx(0.5)
    assert rho_at(s, last, 2.0) == pytest.approx(0.1)
    # constants solved from rho(1) = 0.25 and rho(T) = 0.05, then re-plugged at step 6
    c1 = math.log(5) * T / (T - 1)
    c2 = 0.25 * math.exp(-c1)
    mid = first + 5 * (N - 1)
    assert s.step(mid) == 6
    expected = c2 * math.exp(c1 / 6)
    assert rho_at(s, mid) == pytest.approx(expected, rel=1e-12)
    assert 0.05 < rho_at(s, mid) < 0.25


def test_rho_steps_every_n_minus_one_and_decreases():
    s = Schedule(5, 4)
    vals = [rho_at(s, i) for i in range(s.geodesic_iterations, s.total)]
    assert all(a >= b for a, b in zip(vals, vals[1:]))
    assert len(set(vals)) == 5
    assert vals[:3] == [vals[0]] * 3


def test_rho_outside_phase():
    s = Schedule(3, 3)
    with pytest.raises(ParameterError):
        rho_at(s, 0)
    with pytest.raises(ParameterError):
        rho_at(s, s.total)


def test_rho_single_step_schedule():
    s = Schedule(1, 3)
    assert rho_at(s, s.geodesic_iterations) == pytest.approx(0.05)


def test_match_collection_iteration_count(small_copies):
    shapes, orders = small_copies
    cfg = MatchConfig(T=11, worst_count=4, backend=ExactBackend())
    state, log = match_collection(shapes, cfg)
    assert len(log.rows) == 44
    assert [r.iteration for r in log.rows] == list(range(44))
    assert sum(r.mode == "gaussian" for r in log.rows) == 22


def test_ground_truth_inits_give_zero_log(small_copies):
    shapes, orders = small_copies
    inits = {(i, j): gt_perm(orders, i, j) for i in range(3) for j in range(3) if i != j}
    state, log = match_collection(shapes, MatchConfig(T=2, worst_count=6, backend=ExactBackend()),
                                  inits=inits)
    assert log.initial_energy == 0.0
    assert log.energies == [0.0] * 8
    assert all(r.triplet_before == r.triplet_after == 0.0 for r in log.rows)


def test_identical_shapes_zero_log():
    s = Shape.from_mesh(bumpy_sphere(40, seed=1))
    state, log = match_collection([s, s, s], MatchConfig(T=2, worst_count=6, backend=ExactBackend()))
    assert log.energies == [0.0] * 8
    assert state.anchor == 0


def test_four_copies_energy_not_above_initial():
    meshes, orders = isometric_copies(bumpy_sphere(100, seed=6), 4, seed=1)
    shapes = [Shape.from_mesh(m) for m in meshes]
    rng = np.random.default_rng(0)
    inits = {}
    for i in range(4):
        for j in range(4):
            if i != j:
                p = gt_perm(orders, i, j)
                for _ in range(10):
                    p = p.swapped(*rng.choice(100, 2, replace=False))
                inits[i, j] = p
    state, log = match_collection(shapes, MatchConfig(T=2, seed=3), inits=inits)
    assert log.final_energy <= log.initial_energy
    assert log.final_energy < log.initial_energy


def test_cycle_consistency_every_iteration(small_copies):
    shapes, _ = small_copies
    shapes = shapes + [shapes[0]]
    violations = []

    def check(state, row):
        N = len(state.shapes)
        for i in range(N):
            for j in range(N):
                for k in range(N):
                    if state.pair(i, j) @ state.pair(j, k) != state.pair(i, k):
                        violations.append((row.iteration, i, j, k))

    match_collection(shapes, MatchConfig(T=1, worst_count=6, backend=RandomBackend()),
                     callback=check)
    assert not violations


def test_sampling_strata(small_copies):
    shapes, _ = small_copies
    shapes = shapes + [shapes[1], shapes[2]]
    state, log = match_collection(shapes, MatchConfig(T=2, worst_count=2, backend=ExactBackend(),
                                                      seed=5))
    others = sorted(set(range(5)) - {state.anchor})
    xs = [r.x for r in log.rows]
    for start in range(0, len(xs), 4):
        assert sorted(xs[start:start + 4]) == others
    for prev, row in zip(log.rows, log.rows[1:]):
        assert row.z == prev.x
        assert row.x != row.z
    assert log.rows[0].z != log.rows[0].x and log.rows[0].z in others


def test_log_csv(tmp_path, small_copies):
    shapes, orders = small_copies
    inits = {(i, j): gt_perm(orders, i, j) for i in range(3) for j in range(3) if i != j}
    _, log = match_collection(shapes, MatchConfig(T=1, worst_count=2, backend=ExactBackend()),
                              inits=inits)
    log.to_csv(tmp_path / "log.csv")
    lines = (tmp_path / "log.csv").read_text().splitlines()
    assert lines[0] == "iteration,mode,energy,seconds"
    assert len(lines) == 1 + 4
    assert lines[1].startswith("0,geodesic,0.0,")


def test_collection_input_checks(small_copies):
    shapes, _ = small_copies
    with pytest.raises(ParameterError):
        match_collection(shapes[:2])
    other = Shape.from_mesh(bumpy_sphere(30, seed=0))
    with pytest.raises(DimensionError):
        match_collection([shapes[0], shapes[1], other])


def test_worst_count_validation():
    cfg = MatchConfig(worst_count=5)
    with pytest.raises(ParameterError):
        cfg.m_for(100)
    assert MatchConfig().m_for(200) == 32
