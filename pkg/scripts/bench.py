"""Time each stage of a campus simulation and the end-to-end run.

    python scripts/bench.py [SCENARIO] [--rays N] [--repeat K]
"""

from __future__ import annotations

import argparse
import time
from dataclasses import replace

import numba

from raylaunch import io as rio
from raylaunch.accel import build_bvh
from raylaunch.channel import simulate
from raylaunch.data import data_path
from raylaunch.tracer import Tracer


def timed(fn, *args):
    t0 = time.perf_counter()
    out = fn(*args)
    return out, time.perf_counter() - t0


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("scenario", nargs="?", default=str(data_path("table1.scenario")))
    ap.add_argument("--rays", type=int)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    scen = rio.load_scenario(args.scenario)
    cfg = scen.launch if args.rays is None else replace(scen.launch, ray_count=args.rays)
    scene = scen.build_scene()
    print(f"scene: {scene.n_triangles} triangles, {len(scen.receivers)} receivers, {cfg.ray_count} rays, "
          f"{len(scen.transmitters)} transmitters, {numba.get_num_threads()} threads")

    tracer, dt = timed(Tracer, scene)
    print(f"prepare (edges + BVH):  {dt:7.3f} s")
    _, dt = timed(build_bvh, scene)
    print(f"BVH rebuild:            {dt:7.3f} s")

    # first call pays for JIT compilation when the cache is cold
    simulate(tracer, scen.transmitters, scen.rx_antenna, scen.receivers[:1], cfg)
    tx = scen.transmitters[0].antenna.pos
    for k in range(args.repeat):
        caps, t_sbr = timed(tracer.sbr_captures, tx, scen.receivers, cfg)
        _, t_solve = timed(tracer.solve, tx, scen.receivers, cfg, caps)
        _, t_all = timed(simulate, tracer, scen.transmitters, scen.rx_antenna, scen.receivers, cfg,
                         scen.filter_spec(tracer.scene))
        print(f"run {k}: SBR {t_sbr:6.2f} s ({cfg.ray_count / t_sbr:,.0f} rays/s), solve {t_solve:6.2f} s, "
              f"simulate (all TX) {t_all:6.2f} s")


if __name__ == "__main__":
    main()
