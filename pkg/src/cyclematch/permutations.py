"""Permutations, disjoint 2-cycle batches and cyclic alpha-expansion.

A permutation from shape X to shape Y is stored as ``map`` with
``map[x] = y``; as a 0/1 matrix it has ``P[x, map[x]] = 1``. The matrix
product ``P @ Q`` is therefore the composition "first P, then Q".
"""

from __future__ import annotations

from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .errors import DimensionError, ParameterError


class Permutation:
    __slots__ = ("map",)

    def __init__(self, mapping):
        arr = np.array(mapping, dtype=np.int64).ravel()
        if not np.array_equal(np.sort(arr), np.arange(arr.size)):
            raise ParameterError("not a permutation (map must be a bijection on 0..n-1)")
        arr.setflags(write=False)
        self.map = arr

    @classmethod
    def _trusted(cls, arr: np.ndarray) -> "Permutation":
        # skips the O(n log n) bijection check; callers guarantee validity
        p = object.__new__(cls)
        arr.setflags(write=False)
        p.map = arr
        return p

    @classmethod
    def identity(cls, n: int) -> "Permutation":
        return cls._trusted(np.arange(n, dtype=np.int64))

    @classmethod
    def random(cls, n: int, rng) -> "Permutation":
        return cls._trusted(np.asarray(rng.permutation(n), dtype=np.int64))

    def __len__(self):
        return self.map.size

    def __getitem__(self, idx):
        return self.map[idx]

    def __eq__(self, other):
        if not isinstance(other, Permutation):
            return NotImplemented
        return np.array_equal(self.map, other.map)

    def __hash__(self):
        return hash(self.map.tobytes())

    def __repr__(self):
        body = ", ".join(map(str, self.map[:12].tolist()))
        return f"Permutation([{body}{', ...' if len(self) > 12 else ''}])"

    def __matmul__(self, other: "Permutation") -> "Permutation":
        if len(self) != len(other):
            raise DimensionError("cannot compose permutations of different size")
        return Permutation._trusted(other.map[self.map])

    def inverse(self) -> "Permutation":
        inv = np.empty_like(self.map)
        inv[self.map] = np.arange(self.map.size)
        return Permutation._trusted(inv)

    def matrix(self) -> np.ndarray:
        P = np.zeros((len(self), len(self)))
        P[np.arange(len(self)), self.map] = 1.0
        return P

    def swapped(self, u: int, v: int) -> "Permutation":
        m = self.map.copy()
        m[u], m[v] = m[v], m[u]
        return Permutation._trusted(m)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(str(int(t)) for t in self.map) + "\n")

    @classmethod
    def load(cls, path) -> "Permutation":
        text = Path(path).read_text(encoding="utf-8")
        try:
            return cls([int(t) for t in text.split()])
        except ValueError as exc:
            raise ParameterError(f"{path}: {exc}") from None


class TwoCycle(NamedTuple):
    u: int
    v: int


class CycleBatch:
    """A set of pairwise disjoint transpositions."""

    __slots__ = ("cycles",)

    def __init__(self, cycles: Sequence):
        cycles = tuple(TwoCycle(int(u), int(v)) for u, v in cycles)
        flat = [i for c in cycles for i in c]
        if any(u == v for u, v in cycles):
            raise ParameterError("a 2-cycle needs two distinct vertices")
        if len(set(flat)) != len(flat):
            raise ParameterError("cycles in a batch must be disjoint")
        self.cycles = cycles

    def __len__(self):
        return len(self.cycles)

    def __iter__(self):
        return iter(self.cycles)

    def __eq__(self, other):
        return isinstance(other, CycleBatch) and self.cycles == other.cycles

    def __repr__(self):
        return f"CycleBatch({list(map(tuple, self.cycles))})"

    @property
    def us(self) -> np.ndarray:
        return np.array([c.u for c in self.cycles], dtype=np.int64)

    @property
    def vs(self) -> np.ndarray:
        return np.array([c.v for c in self.cycles], dtype=np.int64)


class CycleFactorization(NamedTuple):
    vertices: tuple
    rounds: list  # list[CycleBatch]


def cae_apply(P: Permutation, batch: CycleBatch, alpha) -> Permutation:
    """Apply the transpositions selected by ``alpha`` on the left of ``P``.

    Equals ``P + sum_i alpha_i (c_i - I) P`` for the disjoint cycles ``c_i``:
    each selected cycle ``(u, v)`` swaps rows ``u`` and ``v``.
    """
    alpha = np.asarray(alpha).ravel()
    if alpha.size != len(batch):
        raise DimensionError(f"alpha has {alpha.size} bits for {len(batch)} cycles")
    if not isinstance(batch, CycleBatch):
        batch = CycleBatch(batch)
    sel = alpha.astype(bool)
    if not sel.any():
        return P
    m = P.map.copy()
    us, vs = batch.us[sel], batch.vs[sel]
    m[us], m[vs] = P.map[vs], P.map[us]
    return Permutation._trusted(m)


def inconsistency_scores(P: Permutation, oracle) -> np.ndarray:
    """Relative inconsistency of every source vertex under ``P``.

    ``I(x) = sum_w |f_X(x, w) - f_Y(P(x), P(w))|``.
    """
    fy = oracle.field_b[np.ix_(P.map, P.map)]
    return np.abs(oracle.field_a - fy).sum(axis=1)


def inconsistency(x: int, P: Permutation, oracle) -> float:
    row = np.abs(oracle.field_a[x] - oracle.field_b[P.map[x], P.map])
    return float(row.sum())


def worst_vertices(P: Permutation, oracle, m: int) -> np.ndarray:
    """The ``m`` most inconsistent vertices, highest first; ties go to the lower index."""
    if m % 2 or m < 0 or m > len(P):
        raise ParameterError(f"m must be even and at most n={len(P)}, got {m}")
    scores = inconsistency_scores(P, oracle)
    order = np.lexsort((np.arange(len(P)), -scores))
    return order[:m]


def one_factorization(vertex_set, seed: int) -> CycleFactorization:
    """Circle-method 1-factorization of the complete graph on ``vertex_set``.

    The vertex order is shuffled with ``seed`` first. Returns ``m - 1``
    rounds of ``m / 2`` disjoint pairs that together cover every pair once.
    """
    verts = [int(v) for v in vertex_set]
    m = len(verts)
    if m % 2 or m < 2:
        raise ParameterError(f"need an even number of at least 2 vertices, got {m}")
    rng = np.random.default_rng(seed)
    order = [verts[i] for i in rng.permutation(m)]
    fixed, ring = order[0], order[1:]
    rounds = []
    for r in range(m - 1):
        rot = ring[r:] + ring[:r]
        line = [fixed] + rot
        rounds.append(CycleBatch([(line[i], line[m - 1 - i]) for i in range(m // 2)]))
    return CycleFactorization(tuple(verts), rounds)


def pair_rounds(fx: CycleFactorization, fy: CycleFactorization, seed: int):
    """Randomly pair the rounds of two factorizations one-to-one."""
    if len(fx.rounds) != len(fy.rounds):
        raise DimensionError(
            f"round count mismatch: {len(fx.rounds)} vs {len(fy.rounds)}"
        )
    perm = np.random.default_rng(seed).permutation(len(fy.rounds))
    return [(fx.rounds[i], fy.rounds[j]) for i, j in enumerate(perm)]


def even_worst_count(n: int, fraction: float) -> int:
    """``fraction * n`` rounded down to an even number (at least 2)."""
    m = int(np.floor(fraction * n + 1e-9))
    m -= m % 2
    return max(2, min(m, n - n % 2))


def derive_seed(seed: int, *counters: int) -> int:
    """Deterministic per-step seed from a run seed and integer counters."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(c) for c in counters))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> 1)
