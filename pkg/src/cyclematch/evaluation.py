"""Normalised geodesic errors, PCK curves and AUC."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, ParameterError

GRID_MAX = 0.15
GRID_POINTS = 101


def default_grid() -> np.ndarray:
    # i * 0.15 / 100 lands exactly on decimal thresholds such as 0.075
    return np.arange(GRID_POINTS) * GRID_MAX / (GRID_POINTS - 1)


@dataclass
class EvalReport:
    errors: list  # one array of per-vertex errors per evaluated pair
    thresholds: np.ndarray
    pck: np.ndarray
    auc: float
    meta: dict = field(default_factory=dict)

    def pck_at(self, threshold: float) -> float:
        e = np.concatenate(self.errors)
        return float(np.mean(e <= threshold + 1e-12))

    def write(self, out_dir) -> None:
        import json
        from pathlib import Path

        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "pck.csv", "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["threshold", "fraction"])
            for t, p in zip(self.thresholds, self.pck):
                w.writerow([repr(float(t)), repr(float(p))])
        summary = {"auc": self.auc, "n": int(len(self.errors[0])),
                   "num_pairs": len(self.errors), **self.meta}
        with open(out / "summary.json", "w", encoding="utf-8", newline="\n") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
            fh.write("\n")


def geodesic_error(P, P_star, geo_target) -> np.ndarray:
    """``d_J(P(v), P*(v)) / diam(J)`` for every source vertex ``v``."""
    p = getattr(P, "map", P)
    ps = getattr(P_star, "map", P_star)
    p, ps = np.asarray(p), np.asarray(ps)
    if p.shape != ps.shape or p.size != geo_target.n:
        raise DimensionError(
            f"sizes differ: P={p.size}, P*={ps.size}, target field={geo_target.n}"
        )
    return geo_target.dist[p, ps] / geo_target.diameter


def pck_auc(errors, grid=None) -> EvalReport:
    """PCK curve (fraction with error <= threshold) and its normalised trapezoid area.

    ``errors`` is an array or a list of per-pair arrays.
    """
    if isinstance(errors, np.ndarray) and errors.ndim == 1:
        errors = [errors]
    errors = [np.asarray(e, dtype=np.float64).ravel() for e in errors]
    flat = np.concatenate(errors) if errors else np.zeros(0)
    if flat.size == 0:
        raise ParameterError("no errors to evaluate")
    grid = default_grid() if grid is None else np.asarray(grid, dtype=np.float64)
    if grid.size < 2 or np.any(np.diff(grid) <= 0):
        raise ParameterError("threshold grid must be increasing with at least 2 points")
    srt = np.sort(flat)
    # small slack so grid rounding never flips an exact tie
    pck = np.searchsorted(srt, grid + 1e-12, side="right") / flat.size
    area = float(np.sum(0.5 * (pck[1:] + pck[:-1]) * np.diff(grid)))
    auc = area / float(grid[-1] - grid[0])
    return EvalReport(errors, grid, pck, auc,
                      {"grid": [float(grid[0]), float(grid[-1]), int(grid.size)],
                       "auc_normalisation": "trapezoid area / threshold span"})
