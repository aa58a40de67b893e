"""Command-line entry point: ``chicken-coop {emerge,ablate,transmit,analyze}``.

Exit codes: 0 success, 1 usage/config/input error, 2 runtime failure.
"""

import argparse
import logging
import sys
import uuid
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, load_config, render_config, resolved_sections
from .exceptions import InvalidInputError
from .experiments import (
    census,
    linear_populations,
    rank_linearity_profile,
    run_ablation,
    run_emergence,
    run_transmission,
    summarize_by_rank,
)
from .metrics import render_condensed
from .tables import (
    GENERATIONS_TABLE,
    HIERARCHIES_TABLE,
    SNAPSHOT_DIR,
    RunManifest,
    generation_rows,
    hierarchy_rows,
    read_populations,
    write_snapshots,
    write_table,
)

log = logging.getLogger("chicken_coop")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _build_parser():
    parser = _Parser(prog="chicken-coop",
                     description="Train Chicken Coop populations and analyse their dominance hierarchies.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, help_ in (
        ("emerge", "train independent populations and record their hierarchies"),
        ("ablate", "train populations over a grid of opponent perception accuracies"),
        ("transmit", "transplant experienced agents into naive populations"),
    ):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True, type=Path, help="config file or run manifest")
        p.add_argument("--out", required=True, type=Path, help="output directory")
        p.add_argument("--seed", type=int, help="override the master seed")
        p.add_argument("--parallelism", type=int, default=1, help="worker processes")
        if name == "transmit":
            p.add_argument("--snapshots", required=True, type=Path,
                           help="output directory of a previous 'emerge' run")
    p = sub.add_parser("analyze", help="census, per-rank tables and rank linearity of an 'emerge' run")
    p.add_argument("--results", required=True, type=Path, help="output directory of a previous 'emerge' run")
    p.add_argument("--out", required=True, type=Path, help="output directory")
    return parser


def _prepare_out(out: Path):
    if out.exists() and any(out.iterdir()):
        raise UsageError(f"output directory {out} is not empty")
    out.mkdir(parents=True, exist_ok=True)


def _cleanup(out: Path, created_dir: bool, written):
    for p in written:
        if p.is_file():
            p.unlink()
    snap = out / SNAPSHOT_DIR
    if snap.is_dir() and not any(snap.iterdir()):
        snap.rmdir()
    if created_dir and out.is_dir() and not any(out.iterdir()):
        out.rmdir()


def _emerge(cfg, out, n_jobs, written):
    results = run_emergence(cfg, n_jobs=n_jobs)
    n = cfg.n_agents
    written += [out / GENERATIONS_TABLE, out / HIERARCHIES_TABLE]
    write_table(out / GENERATIONS_TABLE, *generation_rows(results, n))
    write_table(out / HIERARCHIES_TABLE, *hierarchy_rows(results, n))
    write_snapshots(out / SNAPSHOT_DIR, results, written)


def _ablate(cfg, out, n_jobs, written):
    result = run_ablation(cfg, n_jobs=n_jobs)
    traj = out / "ablation_trajectories.csv"
    final = out / "ablation_final.csv"
    corr = out / "ablation_correlation.csv"
    written += [traj, final, corr]
    write_table(traj, ["opa", "generation", "mean_rapport"], [
        (opa, g, float(v)) for opa in result.opa_grid for g, v in enumerate(result.trajectories[opa])
    ])
    write_table(final, ["opa", "population", "converged", "n_generations", "final_mean_rapport"], [
        (opa, p.index, p.converged, p.n_generations, r)
        for opa in result.opa_grid
        for p, r in zip(result.populations[opa], result.final_mean_rapport[opa])
    ])
    if len(set(result.opa_grid)) > 1:
        rho, pval = result.spearman()
        corr_rows = [(float(rho), float(pval))]
    else:
        corr_rows = [(None, None)]
    write_table(corr, ["spearman_rho", "p_value"], corr_rows)


def _transmit(cfg, out, n_jobs, written, snapshots: Path):
    if not (snapshots / HIERARCHIES_TABLE).is_file():
        raise InvalidInputError(f"{snapshots} has no {HIERARCHIES_TABLE}")
    try:
        sources = read_populations(snapshots, with_agents=True)
    except (OSError, ValueError) as exc:
        raise InvalidInputError(f"cannot load source populations from {snapshots}: {exc}") from None
    if len(sources) < cfg.n_source_populations:
        raise InvalidInputError(
            f"{snapshots} holds {len(sources)} populations, config asks for {cfg.n_source_populations}"
        )
    result = run_transmission(cfg, sources=sources[:cfg.n_source_populations], n_jobs=n_jobs)
    samples = out / "dhtf_samples.csv"
    summary = out / "dhtf_summary.csv"
    written += [samples, summary]
    write_table(samples, ["source_population", "repeat", "k", "dhtf", "converged", "n_generations",
                          "experienced", "edges"], [
        (s.source, s.repeat, s.k, s.dhtf, s.converged, s.n_generations,
         " ".join(map(str, s.experienced)), s.hierarchy.to_tokens() if s.hierarchy is not None else None)
        for s in result.samples
    ])
    write_table(summary, ["k", "n_samples", "n_failed", "median", "q1", "q3"], [
        (r["k"], r["n_samples"], r["n_failed"], r["median"], r["q1"], r["q3"]) for r in result.summary
    ])


def _run_experiment(args) -> int:
    try:
        cfg = load_config(args.config, args.command, seed_override=args.seed)
    except ConfigError as exc:
        print(f"chicken-coop {args.command}: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.parallelism < 1:
        print("chicken-coop: --parallelism must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    out = args.out
    created = not out.exists()
    try:
        _prepare_out(out)
    except UsageError as exc:
        print(f"chicken-coop {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    base = cfg if args.command == "emerge" else cfg.base
    manifest = RunManifest(
        out, args.command, resolved_sections(cfg), render_config(cfg), base.master_seed,
        __version__, uuid.uuid4().hex,
    )
    manifest.start()
    written = []
    try:
        if args.command == "emerge":
            _emerge(cfg, out, args.parallelism, written)
        elif args.command == "ablate":
            _ablate(cfg, out, args.parallelism, written)
        else:
            _transmit(cfg, out, args.parallelism, written, args.snapshots)
    except InvalidInputError as exc:
        _cleanup(out, created, written + [manifest.path])
        print(f"chicken-coop {args.command}: invalid input: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - reported as a runtime failure
        log.exception("run failed")
        _cleanup(out, created, written + [manifest.path])
        print(f"chicken-coop {args.command}: runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    manifest.finish(written)
    return EXIT_OK


def _analyze(args) -> int:
    results_dir = args.results
    if not (results_dir / HIERARCHIES_TABLE).is_file():
        print(f"chicken-coop analyze: {results_dir} has no {HIERARCHIES_TABLE}", file=sys.stderr)
        return EXIT_USAGE
    try:
        results = read_populations(results_dir)
    except (OSError, ValueError, KeyError) as exc:
        print(f"chicken-coop analyze: cannot read {results_dir}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out = args.out
    if out.resolve() == results_dir.resolve():
        print("chicken-coop analyze: --out must differ from --results", file=sys.stderr)
        return EXIT_USAGE
    try:
        _prepare_out(out)
    except UsageError as exc:
        print(f"chicken-coop analyze: {exc}", file=sys.stderr)
        return EXIT_USAGE

    c = census(results)
    write_table(out / "census.csv", list(c), [list(c.values())])

    by_rank = summarize_by_rank(results)
    n_linear = len(linear_populations(results))
    write_table(out / "rank_aggressiveness.csv", ["rank", "mean_aggressiveness", "n_populations"],
                [] if by_rank is None else [(r, float(v), n_linear) for r, v in enumerate(by_rank)])

    complete = [r.hierarchy for r in results if r.converged and r.hierarchy.complete]
    profile = rank_linearity_profile(complete) if complete else np.array([])
    write_table(out / "rank_linearity.csv", ["rank", "linearity"],
                [(r, float(v)) for r, v in enumerate(profile)])

    lines = [f"{r.index}\t{render_condensed(r.hierarchy)}" for r in results
             if r.converged and r.hierarchy.complete]
    (out / "hierarchies.txt").write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    return EXIT_OK


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = _build_parser().parse_args(argv)
    if args.command == "analyze":
        return _analyze(args)
    return _run_experiment(args)


if __name__ == "__main__":
    sys.exit(main())
