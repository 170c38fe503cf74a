"""Heat kernel signatures, descriptor assignment and anchor choice."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import linalg, sparse
from scipy.optimize import linear_sum_assignment
from scipy.sparse.linalg import ArpackNoConvergence, eigsh

from .errors import DimensionError, EigenSolverError, ParameterError
from .mesh import Mesh
from .permutations import Permutation
from .qubo import EnergyOracle, permutation_energy

logger = logging.getLogger(__name__)

DEFAULT_NUM_EIGS = 100
DEFAULT_NUM_TIMES = 16


@dataclass(frozen=True, eq=False)
class DescriptorSet:
    table: np.ndarray  # (n, D)

    @property
    def n(self) -> int:
        return self.table.shape[0]


def cotangent_laplacian(mesh: Mesh):
    """Stiffness matrix ``L`` (positive semi-definite) and lumped mass ``M``."""
    v, f = mesh.vertices, mesh.faces
    n = mesh.n
    rows, cols, vals = [], [], []
    area = np.zeros(n)
    for a, b, c in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
        # angle at corner c is opposite edge (a, b)
        e1 = v[f[:, a]] - v[f[:, c]]
        e2 = v[f[:, b]] - v[f[:, c]]
        cross = np.linalg.norm(np.cross(e1, e2), axis=1)
        cot = np.einsum("ij,ij->i", e1, e2) / np.maximum(cross, 1e-12)
        rows += [f[:, a], f[:, b]]
        cols += [f[:, b], f[:, a]]
        vals += [0.5 * cot, 0.5 * cot]
    p0, p1, p2 = v[f[:, 0]], v[f[:, 1]], v[f[:, 2]]
    tri_area = 0.5 * np.linalg.norm(np.cross(p1 - p0, p2 - p0), axis=1)
    for corner in range(3):
        np.add.at(area, f[:, corner], tri_area / 3.0)
    W = sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    ).tocsr()
    L = sparse.diags(np.asarray(W.sum(axis=1)).ravel()) - W
    return L.tocsc(), sparse.diags(area).tocsc()


def laplace_spectrum(mesh: Mesh, num_eigs: int):
    L, M = cotangent_laplacian(mesh)
    n = mesh.n
    if num_eigs >= n - 1:
        evals, evecs = linalg.eigh(L.toarray(), M.toarray())
        evals, evecs = evals[:num_eigs], evecs[:, :num_eigs]
    else:
        try:
            # fixed start vector: ARPACK otherwise draws a random one per call
            v0 = np.full(n, 1.0 / np.sqrt(n))
            evals, evecs = eigsh(L, k=num_eigs, M=M, sigma=-1e-6, which="LM", v0=v0)
        except ArpackNoConvergence as exc:
            resid = np.nan
            if exc.eigenvalues.size:
                r = L @ exc.eigenvectors - (M @ exc.eigenvectors) * exc.eigenvalues
                resid = float(np.abs(r).max())
            raise EigenSolverError(
                f"eigensolver did not converge ({exc.eigenvalues.size}/{num_eigs} pairs, residual {resid:.3g})"
            ) from None
    order = np.argsort(evals)
    evals = np.clip(evals[order], 0.0, None)
    return evals, evecs[:, order]


def hks(mesh: Mesh, num_eigs: int | None = None, num_times: int = DEFAULT_NUM_TIMES) -> DescriptorSet:
    """Unit-normalised heat kernel signature per vertex.

    Time samples are log-spaced over ``[4 ln10 / lambda_max, 4 ln10 / lambda_2]``.
    If the mesh carries side labels a column ``label * s`` is appended,
    where ``s`` is the mean row norm before it is added.
    """
    n = mesh.n
    if num_eigs is None:
        num_eigs = min(DEFAULT_NUM_EIGS, n - 2)
    if not 2 <= num_eigs <= n:
        raise ParameterError(f"num_eigs must be in [2, {n}], got {num_eigs}")
    if num_times < 1:
        raise ParameterError("num_times must be at least 1")
    evals, evecs = laplace_spectrum(mesh, num_eigs)
    lam2 = evals[1] if evals[1] > 0 else evals[evals > 0].min()
    times = np.geomspace(4 * np.log(10) / evals[-1], 4 * np.log(10) / lam2, num_times)
    table = (evecs ** 2) @ np.exp(-np.outer(evals, times))
    table /= np.linalg.norm(table, axis=1, keepdims=True)
    if mesh.side_labels is not None:
        s = float(np.linalg.norm(table, axis=1).mean())
        table = np.column_stack([table, mesh.side_labels * s])
    if not np.isfinite(table).all():
        raise EigenSolverError("non-finite descriptor values")
    return DescriptorSet(table)


def init_permutation(desc_a, desc_b) -> Permutation:
    """Assignment maximising the summed inner products ``<a_v, b_P(v)>``."""
    a = getattr(desc_a, "table", desc_a)
    b = getattr(desc_b, "table", desc_b)
    a = np.asarray(a, dtype=np.float64).reshape(len(a), -1)
    b = np.asarray(b, dtype=np.float64).reshape(len(b), -1)
    if a.shape != b.shape:
        raise DimensionError(f"descriptor shapes differ: {a.shape} vs {b.shape}")
    rows, cols = linear_sum_assignment(a @ b.T, maximize=True)
    mapping = np.empty(len(a), dtype=np.int64)
    mapping[rows] = cols
    return Permutation(mapping)


def all_pair_inits(descriptors) -> dict:
    """``{(I, J): P_IJ}`` for every ordered pair ``I != J``."""
    out = {}
    for i, da in enumerate(descriptors):
        for j, db in enumerate(descriptors):
            if i != j:
                out[i, j] = init_permutation(da, db)
    return out


def select_anchor(shapes, inits) -> int:
    """Shape minimising the summed geodesic energy of the initial matchings into it.

    ``shapes`` carry a ``geodesics`` field; ``inits[(I, A)]`` maps I to A.
    Ties go to the lowest index.
    """
    N = len(shapes)
    if N < 3:
        raise ParameterError(f"need at least 3 shapes, got {N}")
    totals = []
    for a in range(N):
        total = 0.0
        for i in range(N):
            if i != a:
                oracle = EnergyOracle(shapes[i].geodesics, shapes[a].geodesics)
                total += permutation_energy(oracle, inits[i, a])
        totals.append(total)
    logger.debug("anchor energies: %s", totals)
    return int(np.argmin(totals))
