"""Command line entry point: ``impmix {run,verify,sweep,report}``."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import itertools
import logging
import sys
from pathlib import Path

from . import envs
from .experiment import (DEFAULT_GENERATIONS, ConfigError, ExperimentConfig, ResumeConflict,
                         reuse_table, run_experiment)

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_RESUME = 4
EXIT_DATA = 5


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _add_run_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="YAML config (flat key: value, schema_version: 1)")
    p.add_argument("--seeds", type=int, help="number of seeds, 0..N-1")
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--mixing", choices=("none", "im", "eim"))
    p.add_argument("--archive-k", type=int, dest="archive_k")
    p.add_argument("--threads", type=int)
    p.add_argument("--env", choices=envs.ENV_IDS)
    p.add_argument("--algorithm", choices=("openes", "snes", "cem", "cmaes"))
    p.add_argument("--generations", type=int)
    p.add_argument("--overwrite", action="store_true", help="replace existing seed CSVs")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="impmix", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment config")
    _add_run_options(p_run)

    p_verify = sub.add_parser("verify", help="run the statistical property suite")
    p_verify.add_argument("--quick", action="store_true", help="fewer repetitions")

    p_sweep = sub.add_parser("sweep", help="grid over population size, sigma and learning rate")
    _add_run_options(p_sweep)
    p_sweep.add_argument("--populations", type=_ints)
    p_sweep.add_argument("--sigmas", type=_floats)
    p_sweep.add_argument("--lrs", type=_floats)

    p_report = sub.add_parser("report", help="reuse percentage table from run directories")
    p_report.add_argument("run_dirs", nargs="+", type=Path)
    p_report.add_argument("--out", type=Path, default=Path("reuse_table.csv"))
    return parser


def config_from_args(args) -> ExperimentConfig:
    base = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    changes = {}
    for name in ("mixing", "archive_k", "threads", "env", "algorithm", "generations"):
        value = getattr(args, name, None)
        if value is not None:
            changes[name] = value
    if args.seeds is not None:
        changes["seeds"] = list(range(args.seeds))
    if args.out is not None:
        changes["out_dir"] = str(args.out)
    if ("algorithm" in changes and "generations" not in changes
            and base.generations == DEFAULT_GENERATIONS.get(base.algorithm)):
        changes["generations"] = None
    data = dataclasses.asdict(base)
    data.update(changes)
    return ExperimentConfig(**data)


def cmd_run(args) -> int:
    cfg = config_from_args(args)
    summary = run_experiment(cfg, overwrite=args.overwrite)
    out = Path(cfg.out_dir)
    print(f"wrote {len(cfg.seeds)} seed CSV(s) to {out}")
    if summary is not None:
        print(f"total reuse {summary.total_reuse_pct:.1f}% "
              f"(IM {summary.from_im_pct:.1f}%, EIM {summary.from_eim_pct:.1f}%), "
              f"final mean fitness {summary.mean_fitness[-1]:.1f} "
              f"+/- {summary.ci_half_width[-1]:.1f}")
    return EXIT_OK


def cmd_verify(args) -> int:
    from .verify import run_suite
    results = run_suite(quick=args.quick)
    for r in results:
        print(r.line())
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} properties passed")
    return EXIT_CHECK_FAILED if failed else EXIT_OK


def cmd_sweep(args) -> int:
    base = config_from_args(args)
    pops = args.populations or [base.population]
    sigmas = args.sigmas or [base.sigma]
    lrs = args.lrs or [base.lr]
    root = Path(base.out_dir)
    root.mkdir(parents=True, exist_ok=True)
    rows = []
    for pop, sigma, lr in itertools.product(pops, sigmas, lrs):
        cell = dataclasses.replace(base, population=pop, sigma=sigma, lr=lr)
        cell.validate()
        name = f"pop{pop}_sigma{sigma:g}_lr{lr:g}"
        summary = run_experiment(cell, root / name, overwrite=args.overwrite)
        if summary is None:
            rows.append([name, pop, sigma, lr, "", "", ""])
        else:
            rows.append([name, pop, sigma, lr, f"{summary.mean_fitness[-1]:.3f}",
                         f"{summary.mean_cum_evals[-1]:.1f}", f"{summary.total_reuse_pct:.1f}"])
        print(f"{name}: done")
    with open(root / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["cell", "population", "sigma", "lr", "final_mean_fitness",
                    "final_mean_cum_evals", "total_reuse_pct"])
        w.writerows(rows)
    return EXIT_OK


def cmd_report(args) -> int:
    try:
        table = reuse_table(args.run_dirs)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    args.out.write_text(table)
    sys.stdout.write(table)
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) and EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handler = {"run": cmd_run, "verify": cmd_verify, "sweep": cmd_sweep,
               "report": cmd_report}[args.command]
    try:
        return handler(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ResumeConflict as exc:
        print(f"resume conflict: {exc}", file=sys.stderr)
        return EXIT_RESUME


if __name__ == "__main__":
    sys.exit(main())
