"""Command-line entry point: ``cyclematch {match,eval,solve-qubo,init,perturb}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .config import load_run_config
from .descriptors import select_anchor
from .errors import CycleMatchError, ParameterError
from .evaluation import geodesic_error, pck_auc
from .mesh import Shape, geodesic_all_pairs, load_mesh, perturb_along_normals, save_mesh
from .permutations import Permutation
from .pipeline import MatchConfig, initial_matchings, match_collection
from .qubo import QuboProblem
from .solvers import make_backend

log = logging.getLogger("cyclematch")

EXIT_IO = 12


def _load_shapes(paths, labels=None):
    labels = labels or [None] * len(paths)
    return [Shape.from_mesh(load_mesh(p, side_labels=lab)) for p, lab in zip(paths, labels)]


def _write_perms(out: Path, state) -> None:
    pdir = out / "perms"
    pdir.mkdir(parents=True, exist_ok=True)
    for i in range(len(state.shapes)):
        state.to_anchor(i).save(pdir / f"shape_{i:03d}.txt")


def _dump_json(path: Path, doc) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_match(args) -> int:
    cfg = load_run_config(args.config)
    out = Path(args.output_dir) if args.output_dir else cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    started = time.time()
    shapes = _load_shapes(cfg.shapes, cfg.side_labels)
    state, energy_log = match_collection(shapes, cfg.match)
    _write_perms(out, state)
    energy_log.to_csv(out / "energy_log.csv")
    _dump_json(out / "summary.json", {
        "anchor": state.anchor,
        "config": cfg.raw,
        "shapes": [str(p) for p in cfg.shapes],
        "initial_energy": energy_log.initial_energy,
        "final_energy": energy_log.final_energy,
        "iterations": len(energy_log.rows),
        "started": datetime.fromtimestamp(started, timezone.utc).isoformat(),
        "elapsed_seconds": time.time() - started,
    })
    print(json.dumps({"anchor": state.anchor, "final_energy": energy_log.final_energy}))
    return 0


def cmd_eval(args) -> int:
    out = Path(args.out)
    if args.group:
        aucs = []
        for p in args.group:
            doc = json.loads(Path(p).read_text(encoding="utf-8"))
            aucs.append(float(doc["auc"]))
        out.mkdir(parents=True, exist_ok=True)
        _dump_json(out / "summary.json", {"auc": float(np.mean(aucs)), "num_runs": len(aucs),
                                          "aucs": aucs})
        print(json.dumps({"auc": float(np.mean(aucs))}))
        return 0
    if not args.pred or len(args.pred) != len(args.gt) or len(args.pred) != len(args.target):
        raise ParameterError("--pred, --gt and --target must be given the same number of times")
    errors = []
    fields = {}
    for pred, gt, target in zip(args.pred, args.gt, args.target):
        if target not in fields:
            fields[target] = geodesic_all_pairs(load_mesh(target))
        errors.append(geodesic_error(Permutation.load(pred), Permutation.load(gt), fields[target]))
    report = pck_auc(errors)
    report.write(out)
    print(json.dumps({"auc": report.auc, "num_pairs": len(errors)}))
    return 0


def cmd_solve(args) -> int:
    text = sys.stdin.read() if args.problem in (None, "-") else Path(args.problem).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except ValueError as exc:
        raise ParameterError(f"problem is not valid JSON: {exc}") from None
    problem = QuboProblem.from_json(doc)
    beta = tuple(args.beta) if args.beta else None
    backend = make_backend(args.backend, args.num_reads, args.sweeps, beta)
    result = backend.solve(problem, args.seed)
    print(json.dumps({
        "best_bits": [int(b) for b in result.best_assignment],
        "best_energy": result.best_energy,
        "objective": result.best_energy + problem.constant,
        **result.to_json(),
    }))
    return 0


def cmd_init(args) -> int:
    shapes = _load_shapes(args.shapes, args.labels)
    cfg = MatchConfig(num_eigs=args.num_eigs, num_times=args.num_times)
    inits = initial_matchings(shapes, cfg)
    anchor = select_anchor(shapes, inits)
    out = Path(args.out)
    pdir = out / "perms"
    pdir.mkdir(parents=True, exist_ok=True)
    for i in range(len(shapes)):
        p = Permutation.identity(shapes[0].n) if i == anchor else inits[i, anchor]
        p.save(pdir / f"shape_{i:03d}.txt")
    _dump_json(out / "summary.json", {"anchor": anchor, "shapes": [str(s) for s in args.shapes]})
    print(json.dumps({"anchor": anchor}))
    return 0


def cmd_perturb(args) -> int:
    mesh = load_mesh(args.mesh)
    save_mesh(perturb_along_normals(mesh, args.sigma2, args.seed), args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cyclematch", description=__doc__)
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("match", help="run multi-shape matching from a TOML config")
    p.add_argument("--config", required=True)
    p.add_argument("--output-dir")
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("eval", help="geodesic-error PCK/AUC against ground truth")
    p.add_argument("--pred", action="append", default=[], help="predicted permutation file")
    p.add_argument("--gt", action="append", default=[], help="ground-truth permutation file")
    p.add_argument("--target", action="append", default=[], help="target mesh of the pair")
    p.add_argument("--group", nargs="+", help="average AUC over summary.json files instead")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("solve-qubo", help="solve a QUBO JSON document")
    p.add_argument("problem", nargs="?", help="problem file, '-' or omitted for stdin")
    p.add_argument("--backend", default="sa")
    p.add_argument("--num-reads", type=int, default=200)
    p.add_argument("--sweeps", type=int, default=100)
    p.add_argument("--beta", type=float, nargs=2, metavar=("MIN", "MAX"))
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("init", help="HKS initial permutations into the selected anchor")
    p.add_argument("shapes", nargs="+")
    p.add_argument("--labels", nargs="+")
    p.add_argument("--num-eigs", type=int)
    p.add_argument("--num-times", type=int, default=16)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_init)

    p = sub.add_parser("perturb", help="jitter vertices along their normals")
    p.add_argument("mesh")
    p.add_argument("--sigma2", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_perturb)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CycleMatchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    raise SystemExit(main())
