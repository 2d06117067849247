"""Command-line entry point.

    dimlink run CONFIG.json      solve a scenario file
    dimlink validate CONFIG.json check a scenario file without solving
    dimlink example1             dissimilar regions linked by one wire
    dimlink example2             grid of independent regions joined by wires
    dimlink example3             inference from partial region averages
    dimlink convergence          manufactured-solution convergence study

Errors are reported on stderr as one JSON object and give a nonzero exit
status (1 for failures, 2 for bad command lines).
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

from . import experiments as ex
from .io import (
    ConfigError,
    export_vtk,
    export_wires_vtk,
    load_scenario,
    write_csv,
    write_text_atomic,
)
from .scenario import region_average, run

logger = logging.getLogger("dimlink")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


@dataclass(frozen=True)
class RunManifest:
    command: str
    config: Optional[str]
    out: str
    tol: float
    seed: int
    resolutions: Optional[tuple[int, ...]]
    reference: Optional[int]
    vtk: bool

    def __post_init__(self):
        if not (0 < self.tol <= 1e-2):
            raise UsageError(f"--tol must lie in (0, 1e-2], got {self.tol}")
        out = Path(self.out)
        try:
            out.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise UsageError(f"cannot create output directory {out}: {exc.strerror or exc}") from exc
        if not os.access(out, os.W_OK):
            raise UsageError(f"output directory {out} is not writable")


def _int_list(text: str) -> tuple[int, ...]:
    try:
        vals = tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not vals or any(v < 1 for v in vals):
        raise argparse.ArgumentTypeError(f"expected positive integers, got {text!r}")
    return vals


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--out", default=os.environ.get("DIMLINK_OUT", "dimlink_out"),
                        help="output directory (default: $DIMLINK_OUT or ./dimlink_out)")
    common.add_argument("--tol", type=float, default=1e-10, help="relative residual tolerance")
    common.add_argument("--seed", type=int, default=ex.DEFAULT_SEED, help="random seed (example3)")
    common.add_argument("--resolutions", type=_int_list, default=None,
                        help="comma-separated mesh or grid sizes")
    common.add_argument("--reference", type=int, default=None, help="reference mesh resolution")
    common.add_argument("--vtk", action="store_true", help="also write legacy VTK fields")

    parser = _Parser(prog="dimlink", description="Linked bulk/wire diffusion solver.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in ("run", "validate"):
        p = sub.add_parser(name, parents=[common])
        p.add_argument("config")
    for name in ("example1", "example2", "example3", "convergence"):
        sub.add_parser(name, parents=[common])
    return parser


def _cmd_validate(m: RunManifest):
    sc = load_scenario(m.config)
    print(json.dumps({
        "status": "ok",
        "config": m.config,
        "mesh": [sc.mesh.nx, sc.mesh.ny],
        "wires": len(sc.wires),
        "fixed_averages": len(sc.fixed_averages),
    }))


def _cmd_run(m: RunManifest):
    sc = load_scenario(m.config)
    r = run(sc, tol=m.tol)
    stem = Path(m.config).stem
    out = Path(m.out)
    rows = []
    avgs = r.wire_end_averages()
    for k, (lam, avg, th) in enumerate(zip(r.wire_lambdas, avgs, r.thetas)):
        rows += [(k, "wire_avg_start", avg[0]), (k, "wire_avg_end", avg[1]),
                 (k, "wire_theta_start", th[0]), (k, "wire_theta_end", th[-1]),
                 (k, "wire_lambda_start", lam[0]), (k, "wire_lambda_end", lam[1])]
    for k, (reg, lam) in enumerate(zip(r.regions.average_regions, r.average_lambdas)):
        rows += [(k, "fixed_average", region_average(r, reg)), (k, "fixed_average_lambda", lam)]
    rows += [(0, "energy", r.energy), (0, "constraint_violation", r.diagnostics["constraint_violation"])]
    write_csv(out / f"{stem}.csv", rows, header=("index", "quantity", "value"))
    if m.vtk:
        export_vtk(r.mesh, r.phi, out / f"{stem}.vtk")
        if r.thetas:
            export_wires_vtk(r, out / f"{stem}_wires.vtk")


def _cmd_example1(m: RunManifest):
    results = {} if m.vtk else None
    table = ex.run_dissimilar_regions(m.resolutions or ex.DISSIMILAR_RESOLUTIONS, tol=m.tol, results=results)
    write_csv(Path(m.out) / "example1.csv", table.sorted_rows())
    for res, r in (results or {}).items():
        export_vtk(r.mesh, r.phi, Path(m.out) / f"example1_{res}.vtk")
        export_wires_vtk(r, Path(m.out) / f"example1_{res}_wires.vtk")


def _cmd_example2(m: RunManifest):
    results = {} if m.vtk else None
    table = ex.run_region_grid(m.resolutions or ex.GRID_SIZES, reference=m.reference or 256,
                               tol=m.tol, results=results)
    write_csv(Path(m.out) / "example2.csv", table.sorted_rows())
    for n, r in (results or {}).items():
        export_vtk(r.mesh, r.phi, Path(m.out) / f"example2_{n}.vtk")
        export_wires_vtk(r, Path(m.out) / f"example2_{n}_wires.vtk")


def _cmd_example3(m: RunManifest):
    seq = ex.run_inference(seed=m.seed, reference=m.reference or 128, tol=m.tol)
    write_csv(Path(m.out) / "example3.csv", seq.rows(), header=("step", "quantity", "value"))


def _cmd_convergence(m: RunManifest):
    table = ex.run_manufactured(m.resolutions or (16, 32, 64), tol=m.tol)
    write_csv(Path(m.out) / "convergence.csv", table.sorted_rows())


COMMANDS = {
    "run": _cmd_run,
    "validate": _cmd_validate,
    "example1": _cmd_example1,
    "example2": _cmd_example2,
    "example3": _cmd_example3,
    "convergence": _cmd_convergence,
}


def _report(kind: str, exc: BaseException, code: int) -> int:
    payload = {"error": kind, "message": str(exc)}
    path = getattr(exc, "path", None)
    if path is not None:
        payload["path"] = path
    print(json.dumps(payload), file=sys.stderr)
    return code


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        args = build_parser().parse_args(argv)
        manifest = RunManifest(
            command=args.command,
            config=getattr(args, "config", None),
            out=args.out,
            tol=args.tol,
            seed=args.seed,
            resolutions=args.resolutions,
            reference=args.reference,
            vtk=args.vtk,
        )
    except UsageError as exc:
        return _report("usage", exc, 2)
    try:
        COMMANDS[manifest.command](manifest)
        if manifest.command != "validate":
            write_text_atomic(Path(manifest.out) / f"{manifest.command}.manifest.json",
                              json.dumps(asdict(manifest), indent=2, sort_keys=True) + "\n")
    except ConfigError as exc:
        return _report("config", exc, 1)
    except (ValueError, RuntimeError, OSError, MemoryError) as exc:
        return _report(type(exc).__name__, exc, 1)
    except Exception as exc:  # never let a traceback escape to the user
        logger.debug("unexpected failure", exc_info=True)
        return _report("internal", exc, 1)
    return 0


if __name__ == "__main__":
    sys.exit(main())
