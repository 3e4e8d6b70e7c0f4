"""Command-line entry points.

Exit status is 0 on success, 1 for usage or configuration errors and 2 when
a numerical step fails.
"""
from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import harness as hz
from .io import ConfigError, read_config, write_csv, write_ensemble, write_t3f
from .phantom import PhantomError, phantom_report
from .rf_sim import GeometryError, place_nodes
from .solver import SolverError
from .tensor import RealnessError, TransformSpec

COMMANDS = ("phantom", "simulate", "recover", "sweep", "cdf", "trace")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="rftensor", description="RF tomographic tensor sensing experiments")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", type=Path, help="INI-style experiment config")
    p.add_argument("--out", type=Path, default=Path("results"), help="output directory")
    p.add_argument("--seed", type=int, help="master seed (overrides the config)")
    p.add_argument("--rate", type=float, help="sampling rate; for sweep, a single-rate sweep")
    p.add_argument("--rank", type=int, help="phantom and solver rank")
    p.add_argument("--iters", type=int, help="Alt-Min iterations")
    p.add_argument("--transform", choices=("fft", "dct"))
    p.add_argument("--backend", choices=("circulant", "squeeze", "transform"))
    p.add_argument("--trials", type=int, help="trials per rate (sweep)")
    p.add_argument("--workers", type=int, help="worker processes for sweep trials")
    p.add_argument("--paper-scale", action="store_true", help="60x60x15 rank-3 profile")
    return p


def _replace(obj, values: dict, rename: dict | None = None):
    rename = rename or {}
    return dataclasses.replace(obj, **{rename.get(k, k): v for k, v in values.items()})


def apply_sections(cfg: hz.ExperimentConfig, sections: dict) -> hz.ExperimentConfig:
    """Overlay parsed config sections onto ``cfg``."""
    scene = _replace(cfg.scene, sections.get("scene", {}))
    channel = _replace(cfg.channel, sections.get("channel", {}))
    ph = dict(sections.get("phantom", {}))
    phantom_seed = ph.pop("seed", cfg.phantom_seed)
    solver_sec = dict(sections.get("solver", {}))
    # solver rank follows the phantom unless set explicitly
    if "rank" in ph and "rank" not in solver_sec:
        solver_sec["rank"] = ph["rank"]
    solver = _replace(cfg.solver, solver_sec, {"iters": "max_iters", "lambda": "ridge"})
    phantom = _replace(cfg.phantom, ph)
    phantom = dataclasses.replace(phantom, dims=scene.counts, transform=solver.transform)
    exp = sections.get("experiment", {})
    return dataclasses.replace(
        cfg, scene=scene, channel=channel, phantom=phantom, solver=solver,
        phantom_seed=phantom_seed, **exp,
    )


def resolve_config(args) -> hz.ExperimentConfig:
    cfg = hz.paper_scale_config() if args.paper_scale else hz.desk_config()
    if args.config is not None:
        cfg = apply_sections(cfg, read_config(args.config))
    solver, phantom = cfg.solver, cfg.phantom
    if args.rank is not None:
        solver = dataclasses.replace(solver, rank=args.rank)
        phantom = dataclasses.replace(phantom, rank=args.rank)
    if args.iters is not None:
        solver = dataclasses.replace(solver, max_iters=args.iters)
    if args.transform is not None:
        solver = dataclasses.replace(solver, transform=args.transform)
    if args.backend is not None:
        solver = dataclasses.replace(solver, backend=args.backend)
    phantom = dataclasses.replace(phantom, transform=solver.transform)
    updates = {"solver": solver, "phantom": phantom}
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.rate is not None:
        updates["rate"] = args.rate
        updates["rates"] = (args.rate,)
    if args.trials is not None:
        updates["trials"] = args.trials
    if args.workers is not None:
        updates["workers"] = args.workers
    return dataclasses.replace(cfg, **updates)


# ---------------------------------------------------------------------------
# commands


def cmd_phantom(cfg, out: Path):
    X = hz.ground_truth(cfg)
    write_t3f(out / "phantom.t3f", X)
    rep = phantom_report(X, TransformSpec(cfg.solver.transform, X.shape[2]))
    keys = ("dims", "nonzeros", "frobenius_norm", "l_rank", "transform", "count_95")
    rows = [(k, "x".join(map(str, rep[k])) if k == "dims" else rep[k]) for k in keys]
    write_csv(out / "phantom.csv", ("key", "value"), rows)


def cmd_simulate(cfg, out: Path):
    X, H = hz.simulate(cfg, cfg.rate)
    write_t3f(out / "phantom.t3f", X)
    write_ensemble(out, H)
    nodes = place_nodes(cfg.scene.nodes, cfg.scene.grid(), cfg.scene.rings, cfg.scene.stagger)
    write_csv(out / "nodes.csv", ("id", "x", "y", "z"), ((n.id, *n.position) for n in nodes))


def _write_trace(out: Path, res: hz.TrialResult):
    rows = zip(range(1, res.iterations + 1), res.residual, res.rse)
    write_csv(out / "trace.csv", ("iter", "residual", "rse"), rows)
    write_csv(out / "timing.csv", ("iter", "seconds"), zip(range(1, res.iterations + 1), res.iter_seconds))


def cmd_recover(cfg, out: Path):
    run = hz.recover(cfg, cfg.rate)
    r = run.result
    write_t3f(out / "estimate.t3f", run.X_hat)
    write_csv(out / "rse.csv", ("rate", "trial", "M", "iterations", "final_rse"),
              [(r.rate, r.trial, r.M, r.iterations, r.final_rse)])
    _write_trace(out, r)


def cmd_sweep(cfg, out: Path):
    sw = hz.sweep_sampling(cfg)
    write_csv(out / "sweep.csv", ("rate", "trial", "M", "iterations", "final_rse"),
              [(t.rate, t.trial, t.M, t.iterations, t.final_rse) for t in sw.trials])
    write_csv(out / "sweep_summary.csv", ("rate", "trials", "mean_rse"),
              [(rate, len(sw.per_rate(rate)), sw.mean_rse(rate)) for rate in sw.rates])
    write_csv(out / "timing.csv", ("rate", "trial", "seconds"),
              [(t.rate, t.trial, t.seconds) for t in sw.trials])


def cmd_cdf(cfg, out: Path):
    write_csv(out / "cdf.csv", ("method", "k", "cumulative_fraction"), hz.cdf_rows(hz.ground_truth(cfg)))


def cmd_trace(cfg, out: Path):
    r = hz.run_recovery(cfg, cfg.rate)
    _write_trace(out, r)
    slope, intercept = hz.convergence_fit(r.rse)
    hit = hz.first_iteration_below(r.rse, 1e-10)
    write_csv(out / "fit.csv", ("slope", "intercept", "first_iter_below_1e-10"),
              [(slope, intercept, "" if hit is None else hit)])


HANDLERS = {
    "phantom": cmd_phantom,
    "simulate": cmd_simulate,
    "recover": cmd_recover,
    "sweep": cmd_sweep,
    "cdf": cmd_cdf,
    "trace": cmd_trace,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
    except (ConfigError, PhantomError, GeometryError, ValueError, TypeError) as exc:
        print(f"rftensor: configuration error: {exc}", file=sys.stderr)
        return 1
    try:
        args.out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"rftensor: cannot create output directory {args.out}: {exc}", file=sys.stderr)
        return 1
    try:
        # one BLAS thread keeps outputs bit-identical whatever the thread settings
        with threadpool_limits(limits=1):
            HANDLERS[args.command](cfg, args.out)
    except (SolverError, RealnessError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"rftensor: numerical failure: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, PhantomError, GeometryError, ValueError) as exc:
        print(f"rftensor: configuration error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
