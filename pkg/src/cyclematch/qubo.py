"""Lazy QAP energies and the 2k x 2k QUBO for one cycle-consistent update.

The energy matrix ``W`` of a shape pair is never materialised; an entry is

    W[x1*n + y1, x2*n + y2] = |f_X(x1, x2) - f_Y(y1, y2)|

for the active distance field ``f`` (geodesic or Gaussian-filtered).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import DimensionError, ParameterError
from .permutations import CycleBatch, Permutation


class EnergyOracle:
    """Evaluates ``E(A, B) = vec(A)^T W vec(B)`` from two distance fields.

    Both fields must be symmetric, which makes every ``E`` symmetric in its
    arguments. ``evaluations`` counts the ``W`` entries touched so far.
    """

    def __init__(self, field_a, field_b, mode: str = "geodesic"):
        fa = getattr(field_a, "dist", getattr(field_a, "values", field_a))
        fb = getattr(field_b, "dist", getattr(field_b, "values", field_b))
        fa, fb = np.asarray(fa, dtype=np.float64), np.asarray(fb, dtype=np.float64)
        if fa.shape != fb.shape or fa.ndim != 2 or fa.shape[0] != fa.shape[1]:
            raise DimensionError(f"field shapes differ: {fa.shape} vs {fb.shape}")
        if mode not in ("geodesic", "gaussian"):
            raise ParameterError(f"unknown energy mode {mode!r}")
        self.field_a = fa
        self.field_b = fb
        self.mode = mode
        self.evaluations = 0

    @property
    def n(self) -> int:
        return self.field_a.shape[0]

    def entry(self, x1, y1, x2, y2) -> float:
        return abs(self.field_a[x1, x2] - self.field_b[y1, y2])

    # The batched helpers below take sparse matrices as (rows, cols, vals)
    # arrays with a leading batch axis; padding entries carry val = 0.

    def perm_vs_batch(self, pmap: np.ndarray, rows, cols, vals) -> np.ndarray:
        """``E(P, S_b)`` for every sparse ``S_b`` in the batch."""
        shape = rows.shape[:-1]
        w = vals.reshape(-1)
        nz = np.flatnonzero(w)
        r, c = rows.reshape(-1)[nz], cols.reshape(-1)[nz]
        diff = np.abs(self.field_a[:, r] - self.field_b[pmap[:, None], c])
        self.evaluations += diff.size
        owner = nz // rows.shape[-1]
        out = np.bincount(owner, weights=diff.sum(axis=0) * w[nz],
                          minlength=int(np.prod(shape, dtype=np.int64)))
        return out.reshape(shape)

    def batch_vs_batch(self, r1, c1, w1, r2, c2, w2) -> np.ndarray:
        """``E(S_a, T_b)`` for all pairs of the two batches, shape (A, B)."""
        fa = self.field_a[r1[:, :, None, None], r2[None, None, :, :]]
        fb = self.field_b[c1[:, :, None, None], c2[None, None, :, :]]
        d = np.abs(fa - fb)
        self.evaluations += d.size
        return np.einsum("ae,aebf,bf->ab", w1, d, w2)

    def aligned(self, r1, c1, w1, r2, c2, w2) -> np.ndarray:
        """``E(S_b, T_b)`` for matching batch positions; leading axes broadcast.

        The first operand is expected to be the sparser one: batch items
        whose first operand is all zero are skipped.
        """
        shape = np.broadcast_shapes(w1.shape[:-1], w2.shape[:-1])
        s1, s2 = w1.shape[-1], w2.shape[-1]
        r1, c1, w1 = (np.broadcast_to(a, shape + (s1,)).reshape(-1, s1) for a in (r1, c1, w1))
        r2, c2, w2 = (np.broadcast_to(a, shape + (s2,)).reshape(-1, s2) for a in (r2, c2, w2))
        live = np.flatnonzero(np.any(w1 != 0, axis=1))
        out = np.zeros(len(w1))
        if live.size:
            r1, c1, w1, r2, c2, w2 = (a[live] for a in (r1, c1, w1, r2, c2, w2))
            d = np.abs(self.field_a[r1[:, :, None], r2[:, None, :]]
                       - self.field_b[c1[:, :, None], c2[:, None, :]])
            self.evaluations += d.size
            out[live] = np.einsum("be,bef,bf->b", w1, d, w2)
        return out.reshape(shape)


@dataclass(frozen=True)
class SparseMatrix:
    """Coordinate-form n x n matrix; duplicate coordinates add up."""

    rows: np.ndarray
    cols: np.ndarray
    vals: np.ndarray
    n: int

    @classmethod
    def from_permutation(cls, P: Permutation) -> "SparseMatrix":
        n = len(P)
        return cls(np.arange(n), P.map.copy(), np.ones(n), n)

    @classmethod
    def from_dense(cls, M) -> "SparseMatrix":
        M = np.asarray(M, dtype=np.float64)
        r, c = np.nonzero(M)
        return cls(r, c, M[r, c], M.shape[0])

    @property
    def nnz(self) -> int:
        return int(np.count_nonzero(self.vals))

    def dense(self) -> np.ndarray:
        M = np.zeros((self.n, self.n))
        np.add.at(M, (self.rows, self.cols), self.vals)
        return M

    def __matmul__(self, other: "SparseMatrix") -> "SparseMatrix":
        if other.n != self.n:
            raise DimensionError("size mismatch in sparse product")
        match = self.cols[:, None] == other.rows[None, :]
        i, j = np.nonzero(match)
        return SparseMatrix(self.rows[i], other.cols[j], self.vals[i] * other.vals[j], self.n)


def sparse_update(P: Permutation, u: int, v: int) -> SparseMatrix:
    """``(c - I) P`` for the transposition ``c = (u v)``: four signed entries."""
    pu, pv = P.map[u], P.map[v]
    return SparseMatrix(
        np.array([u, u, v, v]), np.array([pv, pu, pu, pv]),
        np.array([1.0, -1.0, 1.0, -1.0]), len(P),
    )


def _as_sparse(A, n: int) -> SparseMatrix:
    if isinstance(A, Permutation):
        A = SparseMatrix.from_permutation(A)
    elif not isinstance(A, SparseMatrix):
        A = SparseMatrix.from_dense(A)
    if A.n != n:
        raise DimensionError(f"operand has size {A.n}, oracle has {n}")
    return A


def energy_pair(oracle: EnergyOracle, A, B) -> float:
    """``vec(A)^T W vec(B)`` summed over the nonzeros of ``A`` and ``B`` only."""
    A, B = _as_sparse(A, oracle.n), _as_sparse(B, oracle.n)
    d = np.abs(
        oracle.field_a[np.ix_(A.rows, B.rows)] - oracle.field_b[np.ix_(A.cols, B.cols)]
    )
    oracle.evaluations += d.size
    return float(A.vals @ d @ B.vals)


def energy_sym(oracle: EnergyOracle, A, B) -> float:
    return energy_pair(oracle, A, B) + energy_pair(oracle, B, A)


def permutation_energy(oracle: EnergyOracle, P: Permutation) -> float:
    """``E(P, P)``: the QAP energy of a single permutation."""
    if len(P) != oracle.n:
        raise DimensionError(f"permutation has size {len(P)}, oracle has {oracle.n}")
    d = np.abs(oracle.field_a - oracle.field_b[np.ix_(P.map, P.map)])
    oracle.evaluations += d.size
    return float(d.sum())


# ---------------------------------------------------------------- QUBO


@dataclass
class QuboProblem:
    """``min_x x^T W x + constant`` over binary ``x``.

    ``weights`` is symmetric: the diagonal holds linear terms and each
    pairwise coefficient is split evenly over ``(i, j)`` and ``(j, i)``.
    After :func:`kernelize`, ``fixed`` maps original variable indices to
    forced bits and ``variables`` lists the original index of each
    remaining variable.
    """

    weights: np.ndarray
    constant: float = 0.0
    fixed: dict = field(default_factory=dict)
    variables: tuple | None = None

    def __post_init__(self):
        W = np.asarray(self.weights, dtype=np.float64)
        if W.ndim != 2 or W.shape[0] != W.shape[1]:
            raise DimensionError(f"weights must be square, got {W.shape}")
        if not np.isfinite(W).all():
            raise ParameterError("weights must be finite")
        self.weights = 0.5 * (W + W.T)
        if self.variables is None:
            self.variables = tuple(range(W.shape[0]))

    @property
    def num_vars(self) -> int:
        return self.weights.shape[0]

    @property
    def total_vars(self) -> int:
        return len(self.variables) + len(self.fixed)

    def energy(self, bits) -> float:
        """``x^T W x``, without the constant."""
        x = np.asarray(bits, dtype=np.float64)
        return float(x @ self.weights @ x)

    def energies(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        return np.einsum("ri,ij,rj->r", X, self.weights, X)

    def expand(self, bits) -> np.ndarray:
        """Full assignment over the original variables."""
        out = np.zeros(self.total_vars, dtype=np.int8)
        for q, b in self.fixed.items():
            out[q] = b
        out[list(self.variables)] = np.asarray(bits, dtype=np.int8)
        return out

    def upper_entries(self) -> list:
        """``[[i, j, w], ...]`` with ``i <= j`` so that energy = sum w x_i x_j."""
        W = self.weights
        out = []
        for i in range(self.num_vars):
            if W[i, i] != 0:
                out.append([i, i, float(W[i, i])])
            for j in range(i + 1, self.num_vars):
                if W[i, j] != 0:
                    out.append([i, j, float(2.0 * W[i, j])])
        return out

    @classmethod
    def from_entries(cls, num_vars: int, entries, constant: float = 0.0) -> "QuboProblem":
        """Build from ``(i, j, w)`` triples; ``i != j`` weights are full coefficients.

        Works for upper-triangular lists and for symmetric lists (where both
        ``(i, j)`` and ``(j, i)`` appear) alike.
        """
        W = np.zeros((num_vars, num_vars))
        for i, j, w in entries:
            i, j = int(i), int(j)
            if not (0 <= i < num_vars and 0 <= j < num_vars):
                raise DimensionError(f"entry ({i}, {j}) outside {num_vars} variables")
            if i == j:
                W[i, i] += w
            else:
                W[i, j] += 0.5 * w
                W[j, i] += 0.5 * w
        return cls(W, constant)

    def to_json(self) -> dict:
        return {"num_vars": self.num_vars, "constant": float(self.constant),
                "entries": self.upper_entries()}

    @classmethod
    def from_json(cls, doc: Mapping) -> "QuboProblem":
        try:
            return cls.from_entries(int(doc["num_vars"]), doc.get("entries", []),
                                    float(doc.get("constant", 0.0)))
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, DimensionError):
                raise
            raise ParameterError(f"malformed QUBO document: {exc}") from None

    def dumps(self) -> str:
        return json.dumps(self.to_json())


def _cycle_updates(pmap, batch: CycleBatch):
    """Row/col/val arrays, shape (k, 4), of ``(c_i - I) P`` for each cycle."""
    us, vs = batch.us, batch.vs
    pu, pv = pmap[us], pmap[vs]
    rows = np.stack([us, us, vs, vs], axis=1)
    cols = np.stack([pv, pu, pu, pv], axis=1)
    vals = np.broadcast_to(np.array([1.0, -1.0, 1.0, -1.0]), rows.shape)
    return rows, cols, np.ascontiguousarray(vals)


def build_qubo(oracles: Mapping[str, EnergyOracle], P_XY: Permutation, P_YZ: Permutation,
               batch_x: CycleBatch, batch_y: CycleBatch, with_constant: bool = True) -> QuboProblem:
    """QUBO over ``(alpha, beta)`` for updating ``P_XY`` and ``P_YZ`` together.

    ``oracles`` holds ``"xy"``, ``"yz"`` and ``"xz"`` energy oracles. Bits
    ``0..k-1`` select cycles of ``batch_x`` (acting on ``P_XY``), bits
    ``k..2k-1`` select cycles of ``batch_y`` (acting on ``P_YZ``). The
    objective is the three-pair energy after the update with every truly
    cubic and quartic cross term of the ``X -> Z`` energy dropped; terms that
    collapse onto a single alpha/beta pair are kept. ``constant`` is the
    three-pair energy of the current permutations (an O(n^2) evaluation;
    skip it with ``with_constant=False``).
    """
    k = len(batch_x)
    if len(batch_y) != k:
        raise DimensionError(f"batch sizes differ: {k} vs {len(batch_y)}")
    o_xy, o_yz, o_xz = oracles["xy"], oracles["yz"], oracles["xz"]
    n = len(P_XY)
    if len(P_YZ) != n or any(o.n != n for o in (o_xy, o_yz, o_xz)):
        raise DimensionError("permutations and oracles must share n")

    P, Q = P_XY.map, P_YZ.map
    P0 = Q[P]
    Pinv = np.empty_like(P)
    Pinv[P] = np.arange(n)

    constant = 0.0
    if with_constant:
        constant = (permutation_energy(o_xy, P_XY) + permutation_energy(o_yz, P_YZ)
                    + permutation_energy(o_xz, Permutation._trusted(P0)))
    if k == 0:
        return QuboProblem(np.zeros((0, 0)), constant)

    # C_i = (c_i - I) P_XY and Ct_j = (ct_j - I) P_YZ
    cr, cc, cw = _cycle_updates(P, batch_x)
    tr, tc, tw = _cycle_updates(Q, batch_y)
    # A_i = C_i P_YZ and B_j = P_XY Ct_j, both maps X -> Z
    ar, ac = cr, Q[cc]
    br, bc = Pinv[tr], tc
    # K_ij = C_i Ct_j: products of matching inner indices, zero-padded to 16
    hit = cc[:, None, :, None] == tr[None, :, None, :]
    kr = np.broadcast_to(cr[:, None, :, None], hit.shape).reshape(k, k, 16)
    kc = np.broadcast_to(tc[None, :, None, :], hit.shape).reshape(k, k, 16)
    kw = (cw[:, None, :, None] * tw[None, :, None, :] * hit).reshape(k, k, 16)

    # E is symmetric in its arguments, so F(A, B) = 2 E(A, B) throughout
    W_aa = o_xy.batch_vs_batch(cr, cc, cw, cr, cc, cw) + o_xz.batch_vs_batch(ar, ac, cw, ar, ac, cw)
    W_aa[np.diag_indices(k)] += 2.0 * (o_xy.perm_vs_batch(P, cr, cc, cw)
                                       + o_xz.perm_vs_batch(P0, ar, ac, cw))

    W_bb = o_yz.batch_vs_batch(tr, tc, tw, tr, tc, tw) + o_xz.batch_vs_batch(br, bc, tw, br, bc, tw)
    W_bb[np.diag_indices(k)] += 2.0 * (o_yz.perm_vs_batch(Q, tr, tc, tw)
                                       + o_xz.perm_vs_batch(P0, br, bc, tw))

    bcast = lambda a, axis: np.broadcast_to(np.expand_dims(a, axis), (k, k, a.shape[-1]))
    coeff = (
        2.0 * o_xz.batch_vs_batch(ar, ac, cw, br, bc, tw)               # F(B_j, A_i)
        + 2.0 * o_xz.perm_vs_batch(P0, kr, kc, kw)                      # F(K_ij, P_XZ)
        + 2.0 * o_xz.aligned(kr, kc, kw, bcast(br, 0), bcast(bc, 0), bcast(tw, 0))  # F(K_ij, B_j)
        + 2.0 * o_xz.aligned(kr, kc, kw, bcast(ar, 1), bcast(ac, 1), bcast(cw, 1))  # F(K_ij, A_i)
        + o_xz.aligned(kr, kc, kw, kr, kc, kw)                          # E(K_ij, K_ij)
    )

    W = np.empty((2 * k, 2 * k))
    W[:k, :k] = W_aa
    W[k:, k:] = W_bb
    W[:k, k:] = 0.5 * coeff
    W[k:, :k] = 0.5 * coeff.T
    return QuboProblem(W, constant)


def kernelize(q: QuboProblem) -> QuboProblem:
    """Fix every variable whose linear term outweighs all of its couplings.

    Variable ``i`` is fixed when ``|b_i| >= 2 * sum_j |W_ij|`` over the
    remaining ``j != i`` (``b`` is the diagonal): to 0 if ``b_i > 0``,
    otherwise to 1. Fixed variables are folded into the linear terms and the
    constant, and the test is repeated until nothing changes.
    """
    W = q.weights.copy()
    variables = list(q.variables)
    fixed = dict(q.fixed)
    constant = float(q.constant)
    while W.shape[0]:
        b = np.diag(W).copy()
        off = W - np.diag(b)
        bound = 2.0 * np.abs(off).sum(axis=1)
        decided = np.abs(b) >= bound
        if not decided.any():
            break
        ones = decided & (b <= 0)
        keep = ~decided
        # x^T W x over the ones block plus 2 W[free, ones] x_ones
        constant += float(W[np.ix_(ones, ones)].sum())
        shift = 2.0 * W[np.ix_(keep, ones)].sum(axis=1)
        for idx in np.flatnonzero(decided):
            fixed[variables[idx]] = int(ones[idx])
        W = W[np.ix_(keep, keep)]
        W[np.diag_indices(W.shape[0])] += shift
        variables = [v for v, kp in zip(variables, keep) if kp]
    return QuboProblem(W, constant, fixed, tuple(variables))
