"""Command-line entry point: ``zerorange <subcommand> [--config FILE] ...``.

Experiment subcommands exit with status 0 iff every criterion passes;
``pde-solve`` and ``simulate`` exit 0 on a completed run.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .config import EXPERIMENTS, TOOLS, ExperimentConfig, default_config, load_config
from .errors import ZeroRangeError
from .experiments import as_profile, invariant_sampler, profile_sampler, run_experiment
from .observables import grand_canonical
from .pde import BoundarySpec, DensityField, SolverControls, solve_recorded
from .process import Configuration
from .rng import stream
from .simulator import ensemble_run

log = logging.getLogger("zerorange")


def _profile(spec):
    """A constant or a ``"poly:c0,c1,..."`` / ``"cos:a,b"`` (``a + b cos(pi u)``) profile."""
    if isinstance(spec, (int, float)):
        return as_profile(float(spec))
    kind, _, args = str(spec).partition(":")
    vals = [float(v) for v in args.split(",")] if args else []
    if kind == "poly":
        return lambda u: np.polynomial.polynomial.polyval(np.asarray(u, float), vals)
    if kind == "cos" and len(vals) == 2:
        return lambda u: vals[0] + vals[1] * np.cos(np.pi * np.asarray(u, float))
    raise ZeroRangeError(f"cannot parse profile {spec!r}")


def pde_solve(cfg: ExperimentConfig) -> list:
    num = dict(cfg.numerics)
    params = cfg.params()
    M = int(num.pop("M", 200))
    times = num.pop("times", [num.pop("T", 0.1)])
    gamma = _profile(num.pop("gamma", 0.5))
    controls = SolverControls(**{k: num.pop(k) for k in ("cfl", "max_halvings") if k in num})
    if num:
        raise ZeroRangeError(f"unknown numerics for pde-solve: {sorted(num)}")
    sol = solve_recorded(DensityField.from_profile(gamma, M), BoundarySpec.from_params(params),
                         grand_canonical(params.g), [float(t) for t in times], controls)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if cfg.out_format == "json":
        p = out / "pde_solution.json"
        p.write_text(json.dumps({"t": sol.t.tolist(), "u": ((np.arange(M) + 0.5) / M).tolist(),
                                 "rho": sol.rho.tolist(), "steps": sol.steps}))
    else:
        p = out / "pde_solution.csv"
        with p.open("w", newline="") as fh:
            sol.write_csv(fh)
    print(f"pde-solve: M={M} steps={sol.steps} -> {p}")
    return [p]


def simulate(cfg: ExperimentConfig, workers: int = 1) -> list:
    num = dict(cfg.numerics)
    params = cfg.params()
    T = float(num.pop("T", 0.1))
    replicas = int(num.pop("replicas", 1))
    snaps = num.pop("snapshot_times", None)
    init = num.pop("initial", "invariant")
    if num:
        raise ZeroRangeError(f"unknown numerics for simulate: {sorted(num)}")
    if init == "invariant":
        sampler = invariant_sampler(params)
    elif init == "empty":
        sampler = lambda rng: Configuration.empty(params.N)
    else:
        sampler = profile_sampler(params, _profile(init))
    ens = ensemble_run(params, sampler, T, replicas, cfg.seed, snapshot_times=snaps, workers=workers)
    if ens.errors:
        raise next(iter(ens.errors.values()))
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if cfg.out_format == "json":
        p = out / "trajectories.json"
        p.write_text(json.dumps([{"replica": tr.replica, "t": tr.snapshot_times.tolist(),
                                  "eta": tr.snapshots.tolist(), "events": tr.events}
                                 for tr in ens.results]))
    else:
        p = out / "trajectories.csv"
        with p.open("w", newline="") as fh:
            for i, tr in enumerate(ens.results):
                tr.write_csv(fh, header=i == 0)
    print(f"simulate: N={params.N} replicas={replicas} events={sum(tr.events for tr in ens.results)} -> {p}")
    return [p]


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="zerorange",
                                 description="Boundary-driven zero-range process experiments")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS + TOOLS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", type=Path, help="JSON or YAML config file")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out-dir", type=Path)
        sp.add_argument("--format", choices=("csv", "json"))
        sp.add_argument("--workers", type=int, default=1, help="replica threads")
        sp.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config) if args.config else default_config(args.command)
        if cfg.experiment != args.command:
            raise ZeroRangeError(f"config is for {cfg.experiment!r}, not {args.command!r}")
        if args.seed is not None:
            cfg.seed = args.seed
        if args.out_dir is not None:
            cfg.out_dir = str(args.out_dir)
        if args.format is not None:
            cfg.out_format = args.format
        if args.command == "pde-solve":
            pde_solve(cfg)
            return 0
        if args.command == "simulate":
            simulate(cfg, args.workers)
            return 0
        rep = run_experiment(cfg, workers=args.workers)
    except ZeroRangeError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    paths = rep.write(cfg.out_dir, cfg.out_format)
    for line in rep.lines():
        print(line)
    print(f"{rep.experiment}: {'PASS' if rep.passed else 'FAIL'} ({len(paths)} file(s) in {cfg.out_dir})")
    return 0 if rep.passed else 1


if __name__ == "__main__":
    sys.exit(main())
