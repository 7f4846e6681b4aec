"""Command-line entry point: ``sqgsim <command> --config run.cfg [--seed S] [--out DIR]``."""

from __future__ import annotations

import argparse
import csv
import hashlib
import logging
import math
import sys
from pathlib import Path
from typing import Sequence

from . import __version__, harness
from .config import EXPERIMENTS, ConfigError, RunConfig, parse_config
from .integrator import CSV_COLUMNS, IntegrationError, simulate
from .noise import NoiseHypothesisError, NotApplicableError
from .operators import OperatorParams
from .reporting import ExperimentReport, header_line
from .selfcheck import run_selfcheck
from .spectral import write_snapshot

log = logging.getLogger("sqgsim")

COMMANDS = ("simulate", "selfcheck") + EXPERIMENTS

# experiment-specific keys accepted in [experiment]
EXPERIMENT_KEYS = {
    "converge": {"resolutions"},
    "uniqueness": {"delta"},
    "lp-monitor": {"p", "T_long", "ceiling"},
    "markov": {"s", "t", "m"},
    "ergodic": {"T_long", "burn_in", "n_batches", "start0", "start1"},
    "mixing": {"t_grid", "m", "coupled", "start0", "start1"},
}


class UsageError(Exception):
    pass


def _starts(a: dict) -> tuple[str, str]:
    return a.get("start0", "zero"), a.get("start1", "random_h1:3")


def _run_experiment(name: str, rc: RunConfig) -> ExperimentReport:
    cfg, a = rc.sim, rc.experiment_args
    extra = set(a) - EXPERIMENT_KEYS[name]
    if extra:
        raise UsageError(f"[experiment] keys {sorted(extra)} do not apply to {name!r}")
    if name == "converge":
        if "resolutions" not in a:
            raise UsageError("converge needs [experiment] resolutions")
        return harness.galerkin_convergence(cfg, a["resolutions"])
    if name == "uniqueness":
        return harness.pathwise_uniqueness_probe(cfg, a.get("delta", 1e-6))
    if name == "lp-monitor":
        return harness.lp_supremum_monitor(cfg, a.get("p", 4.0), a.get("T_long", cfg.T),
                                           ceiling=a.get("ceiling"))
    if name == "markov":
        return harness.markov_property_test(cfg, a.get("s", cfg.T / 2), a.get("t", cfg.T / 2),
                                            m=a.get("m", 2000))
    if name == "ergodic":
        return harness.ergodic_average(cfg, None, a.get("burn_in"), a.get("T_long", cfg.T),
                                       starts=_starts(a), n_batches=a.get("n_batches", 20))
    grid = a.get("t_grid") or [cfg.T * i / 16 for i in range(17)]
    return harness.exponential_mixing_fit(cfg, None, grid, a.get("m", 200), starts=_starts(a),
                                          coupled=a.get("coupled", True))


def _fmt(x: float) -> str:
    return repr(float(x)) if math.isfinite(x) else str(x)


def _simulate(rc: RunConfig, out: Path) -> int:
    out.mkdir(parents=True, exist_ok=True)
    cfg = rc.sim
    try:
        res = simulate(cfg, snapshot_every=rc.snapshot_every)
        status, failure = 0, None
    except IntegrationError as exc:
        res, status, failure = None, 1, exc
    head = header_line(rc.digest)
    if res is not None:
        with open(out / "diagnostics.csv", "w", newline="") as fh:
            fh.write(head + "\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_COLUMNS)
            for rec in res.diagnostics:
                w.writerow([_fmt(v) for v in rec.row()])
        files = []
        for t, snap in res.snapshots:
            name = f"snapshot_{round(t / cfg.dt):08d}.bin"
            write_snapshot(out / name, snap, cfg.params.alpha, cfg.params.kappa, t)
            files.append(name)
        write_snapshot(out / "final.bin", res.final, cfg.params.alpha, cfg.params.kappa, cfg.n_steps * cfg.dt)
        files.append("final.bin")
        # binary snapshots cannot carry a text header; the manifest ties them to the digest
        with open(out / "manifest.txt", "w") as fh:
            fh.write(head + "\n")
            for name in files:
                fh.write(f"{hashlib.sha256((out / name).read_bytes()).hexdigest()}  {name}\n")
        print(f"simulate: {len(res.diagnostics)} diagnostics rows, {len(files)} snapshots -> {out}")
    else:
        with open(out / "failure.txt", "w") as fh:
            fh.write(head + "\n")
            fh.write(f"{type(failure).__name__}: {failure}\n")
        print(f"simulate: aborted, {failure}", file=sys.stderr)
    return status


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sqgsim", description="Stochastic SQG simulator and property harness.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", metavar="command", required=True)
    for cmd in COMMANDS:
        sp = sub.add_parser(cmd)
        sp.add_argument("--config", type=Path, required=(cmd != "selfcheck"), help="run configuration file")
        sp.add_argument("--seed", type=int, default=None, help="override the noise seed")
        sp.add_argument("--out", type=Path, default=None, help="override the output directory")
        sp.add_argument("-q", "--quiet", action="store_true", help="log warnings only")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s", force=True)
    try:
        if args.command == "selfcheck":
            if args.config is None:
                ok = run_selfcheck(OperatorParams(0.75, 1.0), seed=args.seed or 0)
            else:
                rc = parse_config(args.config, seed=args.seed)
                ok = run_selfcheck(rc.sim.params, rc.sim.noise, seed=rc.sim.seed)
            return 0 if ok else 1

        rc = parse_config(args.config, seed=args.seed)
        log.info("regime: %s (alpha=%g)", rc.regime, rc.sim.params.alpha)
        out = args.out or rc.output_dir
        if args.command == "simulate":
            return _simulate(rc, out)

        if rc.experiment is not None and rc.experiment != args.command:
            raise UsageError(f"configuration selects experiment {rc.experiment!r}, not {args.command!r}")
        report = _run_experiment(args.command, rc)
        report.digest = rc.digest
        report.write(out / args.command)
        print(report.summary(), end="")
        if not report.in_regime:
            log.warning("%s: outside theorem regime, verdicts not evaluated", args.command)
        return 0 if report.passed else 1
    except (ConfigError, UsageError, NotApplicableError, NoiseHypothesisError) as exc:
        print(f"sqgsim: error: {exc}", file=sys.stderr)
        return 2


def entry() -> None:
    sys.exit(main())
