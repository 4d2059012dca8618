"""Command-line entry point: ``shrinknas {search,build,export-dot,compare-priors,k-sweep,selfcheck}``.

Exit codes: 0 success, 1 failed self-check, 2 bad input or configuration,
3 evaluator failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import tempfile
import time
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from . import builder
from . import topology as topo
from .config import RunConfig, load_config, parse_config, search_config_dict
from .cost import CNN_OP_COSTS
from .priors import compare_topologies
from .selfcheck import run_selfcheck
from .shrink import ConfigError, k_sweep, k_sweep_csv, run_shrink
from .topology import CellKind

log = logging.getLogger("shrinknas")

EXIT_OK, EXIT_CHECK, EXIT_USAGE, EXIT_EVAL = 0, 1, 2, 3


class UsageFailure(Exception):
    pass


def _setup_logging():
    level = os.environ.get("SHRINKNAS_LOG", "error").upper()
    logging.basicConfig(level=getattr(logging, level, logging.ERROR), format="%(levelname)s %(name)s: %(message)s")


def atomic_write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _run_config(args) -> RunConfig:
    if args.config is None:
        return parse_config("", seed_override=args.seed)
    return load_config(args.config, seed_override=args.seed)


def _read_cell(path) -> topo.CellTopology:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageFailure(f"cannot read cell {path}: {exc.strerror}") from None
    try:
        return topo.deserialize(text)
    except topo.ParseError as exc:
        raise UsageFailure(f"{path}: {exc}") from None


def _new_run_dir(out: Path, seed: int) -> Path:
    stamp = datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%S%f")
    run = out / f"run-{stamp}-{seed}"
    i = 1
    while run.exists():
        run = out / f"run-{stamp}-{seed}.{i}"
        i += 1
    run.mkdir(parents=True)
    return run


def cmd_search(args) -> int:
    rc = _run_config(args)
    cfg = rc.search
    start = time.perf_counter()
    try:
        traj = run_shrink(cfg, workers=args.workers)
    except ConfigError:
        raise
    except Exception as exc:  # evaluator failures of any type map to exit 3
        print(f"error: evaluator failed: {exc}", file=sys.stderr)
        return EXIT_EVAL
    run = _new_run_dir(Path(args.out), cfg.seed)
    outputs = {"trajectory": "trajectory.csv", "gopt": "gopt.json", "manifest": "manifest.json"}
    atomic_write(run / "trajectory.csv", traj.to_csv())
    atomic_write(run / "gopt.json", topo.serialize(traj.g_opt))
    if traj.g_opt.kind is CellKind.CNN:
        a = rc.arch
        arch = builder.build_cnn(traj.g_opt, a.stages, a.t, a.base_filters, a.resolution, a.num_classes)
    else:
        arch = builder.build_rnn(traj.g_opt, rc.arch.hidden_dim, rc.arch.embed_dim, rc.arch.vocab)
    atomic_write(run / "arch.json", builder.export(arch, "json"))
    atomic_write(run / "arch_summary.txt", builder.export(arch, "summary"))
    outputs.update(arch="arch.json", arch_summary="arch_summary.txt")
    manifest = {
        "tool": "shrinknas",
        "version": __version__,
        "config": search_config_dict(cfg),
        "seeds": {"search": cfg.seed},
        "iterations": len(traj.steps),
        "evaluations": traj.evaluations,
        "initial": {"S": traj.initial.score, "perf": traj.initial.perf,
                    "macs": traj.initial.macs, "params": traj.initial.params},
        "gopt": {"t": traj.best.t, "S": traj.best.score, "perf": traj.best.perf,
                 "macs": traj.best.macs, "params": traj.best.params, "edges": traj.g_opt.edge_count},
        "outputs": outputs,
        "wallclock": time.perf_counter() - start,
    }
    atomic_write(run / "manifest.json", json.dumps(manifest, indent=2) + "\n")
    print(run)
    return EXIT_OK


def _arch_from_args(cell, args, rc: RunConfig):
    a = rc.arch
    cnn_flags = [args.stages, args.t, args.base_filters, args.resolution]
    rnn_flags = [args.hidden_dim, args.embed_dim, args.vocab]
    if cell.kind is CellKind.CNN:
        if any(f is not None for f in rnn_flags):
            raise UsageFailure("--hidden-dim/--embed-dim/--vocab apply to rnn cells only")
        pick = lambda flag, default: default if flag is None else flag  # noqa: E731
        res = a.resolution if args.resolution is None else _parse_resolution(args.resolution)
        return builder.build_cnn(cell, pick(args.stages, a.stages), pick(args.t, a.t),
                                 pick(args.base_filters, a.base_filters), res, a.num_classes)
    if any(f is not None for f in cnn_flags):
        raise UsageFailure("--stages/--t/--base-filters/--resolution apply to cnn cells only")
    return builder.build_rnn(cell, args.hidden_dim or a.hidden_dim, args.embed_dim or a.embed_dim,
                             args.vocab or a.vocab)


def _parse_resolution(text):
    parts = text.lower().split("x")
    try:
        h, w = (int(p) for p in (parts * 2 if len(parts) == 1 else parts))
    except ValueError:
        raise UsageFailure(f"bad --resolution {text!r}; expected HxW") from None
    return h, w


def _emit(text: str, out: str | None, name: str):
    if out is None:
        sys.stdout.write(text)
    else:
        atomic_write(Path(out) / name, text)
        print(Path(out) / name)


def cmd_build(args) -> int:
    rc = _run_config(args)
    cell = _read_cell(args.cell)
    try:
        arch = _arch_from_args(cell, args, rc)
    except builder.BuildError as exc:
        raise UsageFailure(str(exc)) from None
    fmt = args.format or "summary"
    if fmt not in ("json", "dot", "summary"):
        raise UsageFailure(f"build does not support --format {fmt}")
    if args.out is not None:
        atomic_write(Path(args.out) / "arch.json", builder.export(arch, "json"))
        atomic_write(Path(args.out) / "arch_summary.txt", builder.export(arch, "summary"))
    sys.stdout.write(builder.export(arch, fmt))
    return EXIT_OK


def cmd_export_dot(args) -> int:
    path = Path(args.input)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageFailure(f"cannot read {path}: {exc}") from None
    try:
        if "cell" in doc:
            text = builder.export(builder.from_dict(doc), "dot")
        else:
            text = topo.to_dot(topo.from_dict(doc))
    except (topo.ParseError, builder.BuildError) as exc:
        raise UsageFailure(f"{path}: {exc}") from None
    _emit(text, args.out, path.stem + ".dot")
    return EXIT_OK


def cmd_compare_priors(args) -> int:
    rc = _run_config(args)
    cfg = rc.search
    if args.families is not None:
        fams = [f.strip().lower() for f in args.families.split(",") if f.strip()]
        bad = [f for f in fams if f not in ("ws", "er", "ba")]
        if bad:
            raise UsageFailure(f"unknown prior family {bad[0]!r}; expected ws, er or ba")
        rc.priors.families = tuple(fams)
    if args.trials is not None:
        rc.priors.trials = args.trials
    if args.nodes is not None:
        rc.priors.nodes = args.nodes
    if rc.priors.trials < 1:
        raise UsageFailure("--trials must be >= 1")
    try:
        specs = rc.priors.specs(cfg.seed)
    except ValueError as exc:
        raise UsageFailure(str(exc)) from None
    try:
        cell = _read_cell(args.cell) if args.cell else run_shrink(cfg, workers=args.workers).g_opt
        report = compare_topologies(specs, cell, cfg, rc.priors.trials)
    except UsageFailure:
        raise
    except Exception as exc:
        print(f"error: evaluator failed: {exc}", file=sys.stderr)
        return EXIT_EVAL
    fmt = args.format or "summary"
    if fmt == "csv":
        text = report.to_csv()
    elif fmt in ("summary", "table"):
        text = report.to_table()
    else:
        raise UsageFailure(f"compare-priors does not support --format {fmt}")
    if args.out is not None:
        atomic_write(Path(args.out) / "priors.csv", report.to_csv())
        atomic_write(Path(args.out) / "priors_table.txt", report.to_table())
    sys.stdout.write(text)
    return EXIT_OK


def _int_list(text: str, flag: str) -> list[int]:
    try:
        values = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise UsageFailure(f"{flag} expects comma-separated integers, got {text!r}") from None
    if not values:
        raise UsageFailure(f"{flag} is empty")
    return values


def cmd_k_sweep(args) -> int:
    rc = _run_config(args)
    ks = _int_list(args.k, "--k")
    ns = _int_list(args.n, "--n")
    try:
        rows = k_sweep(rc.search, ks, ns, workers=args.workers)
    except ConfigError:
        raise
    except Exception as exc:
        print(f"error: evaluator failed: {exc}", file=sys.stderr)
        return EXIT_EVAL
    _emit(k_sweep_csv(rows), args.out, "k_sweep.csv")
    return EXIT_OK


def _corrupted_table():
    table = dict(CNN_OP_COSTS)
    good = table[topo.NodeOp.SEPCONV3X3]
    table[topo.NodeOp.SEPCONV3X3] = lambda hw, c, f: tuple(x + 1 for x in good(hw, c, f))
    return table


def cmd_selfcheck(args) -> int:
    table = _corrupted_table() if args.corrupt_op_table else None
    return EXIT_OK if run_selfcheck(table) else EXIT_CHECK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="INI config with [search] [evaluator] [arch] [priors]")
    common.add_argument("--seed", type=int, help="override [search] seed")
    common.add_argument("--workers", type=int, default=1, help="threads for candidate evaluation")
    common.add_argument("--out", metavar="DIR", help="output directory")
    common.add_argument("--format", choices=["json", "dot", "summary", "csv"])

    p = argparse.ArgumentParser(prog="shrinknas", description="Topology search by progressive edge shrinking.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("search", parents=[common], help="run edge shrinking and write a run directory")
    s.set_defaults(func=cmd_search)

    b = sub.add_parser("build", parents=[common], help="assemble an architecture from a cell document")
    b.add_argument("cell", metavar="CELL", help="cell topology JSON")
    b.add_argument("--stages", type=int)
    b.add_argument("--t", type=int, help="cells per stage")
    b.add_argument("--base-filters", type=int)
    b.add_argument("--resolution", help="input resolution HxW")
    b.add_argument("--hidden-dim", type=int)
    b.add_argument("--embed-dim", type=int)
    b.add_argument("--vocab", type=int)
    b.set_defaults(func=cmd_build)

    d = sub.add_parser("export-dot", parents=[common], help="render a cell or architecture document as DOT")
    d.add_argument("input", metavar="DOC", help="cell or architecture JSON")
    d.set_defaults(func=cmd_export_dot)

    c = sub.add_parser("compare-priors", parents=[common], help="compare a searched cell against WS/ER/BA priors")
    c.add_argument("--cell", help="cell JSON (default: run a search first)")
    c.add_argument("--families", help="comma-separated subset of ws,er,ba")
    c.add_argument("--trials", type=int)
    c.add_argument("--nodes", type=int)
    c.set_defaults(func=cmd_compare_priors)

    k = sub.add_parser("k-sweep", parents=[common], help="search cost and quality across K and N")
    k.add_argument("--k", default="5,10,15", help="comma-separated K values")
    k.add_argument("--n", default="6,8,10", help="comma-separated N values")
    k.set_defaults(func=cmd_k_sweep)

    sc = sub.add_parser("selfcheck", parents=[common], help="gradient, cardinality and cost checks")
    sc.add_argument("--corrupt-op-table", action="store_true", help=argparse.SUPPRESS)
    sc.set_defaults(func=cmd_selfcheck)
    return p


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    if args.command == "search" and args.out is None:
        args.out = "."
    try:
        return args.func(args)
    except (ConfigError, UsageFailure) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
