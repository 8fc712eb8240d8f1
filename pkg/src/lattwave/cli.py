"""Command-line entry point: ``lattwave {kernel,simulate,verify,scan}``.

Exit codes: 0 success, 1 configuration or usage error (nothing written),
3 blow-up detected during ``simulate`` (``blowup.json`` written).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from .calculus import kernel_periodized, kernel_raw
from .config import RunConfig, load_config
from .experiments import ScanResult, counterexample_growth, isomorphism_check, lifespan_scan
from .lattice import LatticeBox
from .solvers import Trajectory, evolve, format_checkpoint

EXIT_OK, EXIT_CONFIG, EXIT_BLOWUP = 0, 1, 3
ENERGY_COLUMNS = ("t", "kinetic", "gradient", "potential", "total", "A_k", "sup_u", "sup_ut", "seam_tail", "status")

log = logging.getLogger("lattwave")


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lattwave", description="Lattice wave equations with the nonlocal discrete derivative.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    k = sub.add_parser("kernel", help="print the periodized derivative kernel")
    k.add_argument("--d", type=int, default=1)
    k.add_argument("--L", type=int, default=8)
    k.add_argument("--axis", type=int, default=1)
    k.add_argument("--tail-terms", type=int, default=64)

    for name, text in (("simulate", "evolve one configuration"), ("scan", "run a parameter scan")):
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True, type=Path)
        p.add_argument("--out", type=Path, default=Path("."))
        p.add_argument("--jobs", type=int, default=1)
        p.add_argument("--seed", type=int, default=None)
        if name == "simulate":
            p.add_argument("--snapshot-every", type=int, default=None)

    v = sub.add_parser("verify", help="run built-in verification suites")
    v.add_argument("suite")
    v.add_argument("--json", action="store_true")
    return ap


def cmd_kernel(d: int, L: int, axis: int, tail_terms: int = 64, out=None) -> int:
    out = out or sys.stdout
    box = LatticeBox(d, L)
    ker = kernel_periodized(box, axis, tail_terms)
    print(f"# kernel d={d} L={L} axis={axis} tail_terms={ker.tail_terms} tail_bound={ker.tail_bound:.3e}", file=out)
    print(f"{'a':>5} {'raw_imag':>22} {'periodized_imag':>22}", file=out)
    for a, val in zip(ker.offsets, ker.values):
        print(f"{int(a):>5} {kernel_raw(int(a)).imag:>22.15f} {val.imag:>22.15f}", file=out)
    total = ker.values.sum()
    print(f"{'sum':>5} {'':>22} {total.imag:>22.3e}", file=out)
    return EXIT_OK


def energy_csv(traj: Trajectory, config_hash: str) -> str:
    lines = [f"# config_hash={config_hash}", ",".join(ENERGY_COLUMNS)]
    last = len(traj.samples) - 1
    for i, s in enumerate(traj.samples):
        status = "blew-up" if traj.blowup is not None and i == last else "ok"
        e = s.energy
        vals = (s.t, e.kinetic, e.gradient, e.potential, e.total, s.a.value, s.sup_u, s.sup_ut, s.seam_tail)
        lines.append(",".join(repr(float(x)) for x in vals) + "," + status)
    return "\n".join(lines) + "\n"


def cmd_simulate(cfg: RunConfig, out: Path, snapshot_every: int | None = None) -> int:
    box = cfg.make_box()
    spec = cfg.equation_spec(box)
    f, g = cfg.initial_data(box)
    traj = evolve(f, g, spec, cfg.solver_config())
    h = cfg.hash()
    out.mkdir(parents=True, exist_ok=True)
    (out / "energy.csv").write_text(energy_csv(traj, h))
    every = snapshot_every or cfg.snapshot_every
    if every:
        snap = out / "snapshots"
        snap.mkdir(exist_ok=True)
        for i, s in enumerate(traj.samples):
            if i % every == 0 or i == len(traj.samples) - 1:
                (snap / f"sample-{i:06d}.txt").write_text(format_checkpoint(s.state, h))
    if traj.blowup is not None:
        b = traj.blowup
        record = {"config_hash": h, "t": b.t, "sup_u": b.sup_u, "sup_ut": b.sup_ut, "reason": b.reason}
        (out / "blowup.json").write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")
        log.warning("blow-up at t=%.6g", b.t)
        return EXIT_BLOWUP
    return EXIT_OK


def cmd_scan(cfg: RunConfig, out: Path, jobs: int = 1) -> int:
    box = cfg.make_box()
    if cfg.experiment == "lifespan":
        f, g = cfg.initial_data(box)
        res = lifespan_scan(cfg.equation_spec(box), f, g, cfg.scan.eps_grid, cfg.solver_config(), cfg.scan.R, jobs)
    elif cfg.experiment == "counterexample":
        res = counterexample_growth(cfg.scan.L_grid, d=cfg.box.d, jobs=jobs)
    elif cfg.experiment == "isomorphism":
        rep = isomorphism_check(cfg.seed, cfg.scan.trials, cfg.box.L, cfg.box.d)
        rows = [{"trial": i, "ratio": float(r)} for i, r in enumerate(rep.ratios)]
        res = ScanResult("isomorphism", "trial", list(range(len(rows))), rows,
                         fits={"min": rep.min, "max": rep.max}, checks={"in_band": rep.ok})
    else:
        raise ValueError(f"experiment {cfg.experiment!r} is not a scan")
    h = cfg.hash()
    out.mkdir(parents=True, exist_ok=True)
    stem = f"{cfg.experiment}-{h}"
    comment = f"config_hash={h}"
    (out / f"{stem}.csv").write_text(res.csv_text(comment))
    (out / f"{stem}.ndjson").write_text(res.ndjson_text(comment))
    print(json.dumps({"experiment": cfg.experiment, "checks": res.checks, "fits": res.fits}, sort_keys=True))
    return EXIT_OK


def cmd_verify(suite: str, as_json: bool = False, out=None) -> int:
    out = out or sys.stdout
    from .verify import SUITES, as_dicts, run_suite

    try:
        checks = run_suite(suite)
    except KeyError:
        print(f"unknown suite {suite!r}; choose from {', '.join(SUITES)} or all", file=sys.stderr)
        return EXIT_CONFIG
    if as_json:
        print(json.dumps(as_dicts(checks), indent=2), file=out)
    else:
        for c in checks:
            print(c.line(), file=out)
    return EXIT_OK if all(c.passed for c in checks) else 2


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    np.seterr(all="ignore")
    try:
        if args.command == "kernel":
            return cmd_kernel(args.d, args.L, args.axis, args.tail_terms)
        if args.command == "verify":
            return cmd_verify(args.suite, args.json)
        if args.jobs < 1:
            raise ValueError("--jobs must be >= 1")
        cfg = load_config(args.config, seed=args.seed)
    except (ValidationError, ValueError, OSError, json.JSONDecodeError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.command == "simulate":
        if cfg.experiment != "simulate":
            print(f"error: config experiment is {cfg.experiment!r}, use 'scan'", file=sys.stderr)
            return EXIT_CONFIG
        return cmd_simulate(cfg, args.out, args.snapshot_every)
    if cfg.experiment == "simulate":
        print("error: config experiment is 'simulate', use 'simulate'", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return cmd_scan(cfg, args.out, args.jobs)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
