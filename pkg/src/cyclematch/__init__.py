"""Cycle-consistent multi-shape matching with QUBO-based permutation updates."""

from .descriptors import DescriptorSet, hks, init_permutation, select_anchor
from .evaluation import EvalReport, geodesic_error, pck_auc
from .mesh import (
    GeodesicField, KernelField, Mesh, Shape, gaussian_field, geodesic_all_pairs,
    load_mesh, perturb_along_normals, save_mesh,
)
from .permutations import (
    CycleBatch, CycleFactorization, Permutation, TwoCycle, cae_apply, inconsistency,
    one_factorization, pair_rounds, worst_vertices,
)
from .pipeline import (
    EnergyLog, MatchConfig, MatchingState, Schedule, TripletSlice, match_collection,
    monotone_guard, rho_at, three_shape_step,
)
from .qubo import (
    EnergyOracle, QuboProblem, SparseMatrix, build_qubo, energy_pair, energy_sym,
    kernelize, sparse_update,
)
from .solvers import SolveRequest, SolveResult, solve_exact, solve_external, solve_sa

__version__ = "0.1.0"
