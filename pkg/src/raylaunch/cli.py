"""Command-line front end.

    raylaunch simulate SCENARIO -o results.csv [--paths-out paths.csv] [--threads N]
    raylaunch sweep    SCENARIO -o grid.csv [--grid XMIN,XMAX,YMIN,YMAX,SPACING]
    raylaunch compare  RESULTS TRACE [--no-fit] [-o report.json]
    raylaunch paths    SCENARIO --rx INDEX [-o paths.csv]
    raylaunch validate SCENARIO

Exit status: 0 success, 1 bad input, 2 internal invariant violation.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numba
import numpy as np

from . import io as rio
from .analysis import grid_sweep_results, rmse
from .channel import FilterError, simulate
from .geom import GeometryError
from .tracer import ConfigurationError, Tracer

log = logging.getLogger("raylaunch")

INPUT_ERRORS = (rio.ScenarioError, rio.TraceError, GeometryError, ConfigurationError, FilterError,
                FileNotFoundError, OSError, ValueError)


def _set_threads(n: int | None) -> int:
    limit = numba.config.NUMBA_NUM_THREADS
    n = limit if n is None else max(1, min(int(n), limit))
    numba.set_num_threads(n)
    return n


def _prepare(path):
    t0 = time.perf_counter()
    scen = rio.load_scenario(path)
    tracer = Tracer(scen.build_scene())
    filters = scen.filter_spec(tracer.scene)
    log.info("scene: %d meshes, %d triangles, %d diffraction edges (%.2f s)", len(tracer.scene.meshes),
             tracer.scene.n_triangles, len(tracer.scene.edges), time.perf_counter() - t0)
    return scen, tracer, filters


def _timed_simulate(scen, tracer, filters, rx_points):
    t0 = time.perf_counter()
    results = simulate(tracer, scen.transmitters, scen.rx_antenna, rx_points, scen.launch, filters)
    dt = time.perf_counter() - t0
    rays = scen.launch.ray_count * len(scen.transmitters)
    log.info("traced %d rays x %d receivers in %.2f s (%.0f rays/s)", rays, len(rx_points), dt,
             rays / dt if dt > 0 else float("inf"))
    return results


def cmd_simulate(args) -> int:
    scen, tracer, filters = _prepare(args.scenario)
    if len(scen.receivers) == 0:
        raise rio.ScenarioError("scenario has no route receivers (use 'sweep' for grids)", "receivers")
    results = _timed_simulate(scen, tracer, filters, scen.receivers)
    rio.write_results(results, scen.receiver_latlon(), args.output)
    if args.paths_out:
        rio.write_paths(results, args.paths_out, tracer.scene)
    return 0


def cmd_sweep(args) -> int:
    scen, tracer, filters = _prepare(args.scenario)
    grid = scen.grid
    if args.grid:
        try:
            x0, x1, y0, y1, sp = (float(v) for v in args.grid.split(","))
        except ValueError:
            raise ValueError("--grid expects XMIN,XMAX,YMIN,YMAX,SPACING") from None
        grid = rio.GridSpec(x0, x1, y0, y1, sp, args.height if args.height else scen.receiver_height)
    if grid is None:
        raise rio.ScenarioError("no grid given (scenario receivers.grid or --grid)", "receivers.grid")
    t0 = time.perf_counter()
    results = grid_sweep_results(tracer, scen.transmitters, scen.rx_antenna, grid, scen.launch, filters)
    log.info("swept %d cells in %.2f s", len(results), time.perf_counter() - t0)
    rio.write_grid(grid, results, scen.origin, args.output)
    return 0


def cmd_compare(args) -> int:
    sim_rows = rio.read_results(args.results)
    trace = rio.load_trace_csv(args.trace, args.lat_col, args.lon_col, args.power_col)
    if len(sim_rows) != len(trace):
        raise ValueError(f"length mismatch: {len(sim_rows)} simulated vs {len(trace)} measured positions")
    report = rmse([r.power_dbm for r in sim_rows], trace.powers, fit_offset=not args.no_fit,
                  floor_dbm=args.floor)
    text = json.dumps(report.as_dict(), indent=2, sort_keys=True) + "\n"
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return 0


def cmd_paths(args) -> int:
    scen, tracer, filters = _prepare(args.scenario)
    if not 0 <= args.rx < len(scen.receivers):
        raise ValueError(f"--rx {args.rx} out of range (scenario has {len(scen.receivers)} receivers)")
    results = _timed_simulate(scen, tracer, filters, scen.receivers[args.rx:args.rx + 1])
    results = [type(r)(args.rx, r.paths, r.tx_power_dbm, r.tx_name) for r in results]
    out = args.output or "/dev/stdout"
    rio.write_paths(results, out, tracer.scene)
    return 0


def cmd_validate(args) -> int:
    scen, tracer, filters = _prepare(args.scenario)
    for tx in scen.transmitters:
        tracer.check_transmitter(tx.antenna.pos)
    print(json.dumps({
        "scenario": scen.name,
        "valid": True,
        "meshes": len(tracer.scene.meshes),
        "triangles": tracer.scene.n_triangles,
        "diffraction_edges": len(tracer.scene.edges),
        "transmitters": len(scen.transmitters),
        "receivers": int(len(scen.receivers)),
        "filters": len(filters.rules),
    }, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="raylaunch", description="Ray-launching radio propagation simulator")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    def threads(sp):
        sp.add_argument("--threads", type=int, default=None, help="worker threads (output is independent of this)")

    s = sub.add_parser("simulate", help="received power along the scenario route")
    s.add_argument("scenario")
    s.add_argument("-o", "--output", required=True)
    s.add_argument("--paths-out", help="also write every path to this CSV")
    threads(s)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("sweep", help="received power on a grid")
    s.add_argument("scenario")
    s.add_argument("-o", "--output", required=True)
    s.add_argument("--grid", help="XMIN,XMAX,YMIN,YMAX,SPACING in local metres")
    s.add_argument("--height", type=float, help="grid receiver height (m)")
    threads(s)
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("compare", help="RMSE between a result file and a measured trace")
    s.add_argument("results")
    s.add_argument("trace")
    s.add_argument("--no-fit", action="store_true", help="do not remove a constant offset")
    s.add_argument("--floor", type=float, default=-150.0, help="dBm used for uncovered positions")
    s.add_argument("--lat-col", default="lat")
    s.add_argument("--lon-col", default="lon")
    s.add_argument("--power-col", default="power_dbm")
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_compare)

    s = sub.add_parser("paths", help="dump the paths reaching one receiver")
    s.add_argument("scenario")
    s.add_argument("--rx", type=int, required=True)
    s.add_argument("-o", "--output")
    threads(s)
    s.set_defaults(func=cmd_paths)

    s = sub.add_parser("validate", help="check a scenario file")
    s.add_argument("scenario")
    s.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(name)s: %(message)s", stream=sys.stderr)
    t0 = time.perf_counter()
    try:
        n = _set_threads(getattr(args, "threads", None))
        log.debug("using %d threads", n)
        code = args.func(args)
    except BrokenPipeError:
        return 0
    except INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # invariant violations and bugs
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    log.info("total %.2f s", time.perf_counter() - t0)
    return code


if __name__ == "__main__":
    sys.exit(main())
