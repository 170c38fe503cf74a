"""Run configuration files (TOML)."""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError, ParameterError
from .pipeline import MatchConfig
from .solvers import make_backend

_KNOWN = {"shapes", "side_labels", "T", "worst_fraction", "worst_count", "seed", "backend",
          "monotone_guard", "strict_rebuild", "output_dir", "sa", "hks", "debug"}


@dataclass
class RunConfig:
    shapes: list
    side_labels: list | None
    output_dir: Path
    match: MatchConfig
    backend_spec: str
    raw: dict = field(default_factory=dict)


def load_run_config(path) -> RunConfig:
    path = Path(path)
    try:
        raw = tomllib.loads(path.read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    unknown = set(raw) - _KNOWN
    if unknown:
        raise ConfigError(f"{path}: unknown keys {sorted(unknown)}")
    base = path.parent

    def resolve(p):
        p = Path(p)
        return p if p.is_absolute() else base / p

    try:
        shapes = [resolve(p) for p in raw["shapes"]]
    except KeyError:
        raise ConfigError(f"{path}: 'shapes' is required") from None
    labels = raw.get("side_labels")
    if labels is not None:
        if len(labels) != len(shapes):
            raise ConfigError("side_labels must list one file per shape")
        labels = [resolve(p) for p in labels]

    sa = raw.get("sa", {})
    beta = None
    if "beta_min" in sa or "beta_max" in sa:
        try:
            beta = (float(sa["beta_min"]), float(sa["beta_max"]))
        except KeyError:
            raise ConfigError("sa.beta_min and sa.beta_max must be given together") from None
    backend_spec = str(raw.get("backend", "sa"))
    hks_cfg = raw.get("hks", {})
    try:
        backend = make_backend(backend_spec, int(sa.get("num_reads", 200)),
                               int(sa.get("sweeps", 100)), beta)
        match = MatchConfig(
            T=int(raw.get("T", 11)),
            worst_fraction=float(raw.get("worst_fraction", 0.16)),
            worst_count=raw.get("worst_count"),
            seed=int(raw.get("seed", 0)),
            backend=backend,
            monotone_guard=bool(raw.get("monotone_guard", False)),
            strict_rebuild=bool(raw.get("strict_rebuild", True)),
            num_eigs=hks_cfg.get("num_eigs"),
            num_times=int(hks_cfg.get("num_times", 16)),
            debug=bool(raw.get("debug", False)),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ParameterError):
            raise ConfigError(str(exc)) from None
        raise ConfigError(f"{path}: {exc}") from None
    return RunConfig(shapes, labels, resolve(raw.get("output_dir", "out")), match,
                     backend_spec, raw)
