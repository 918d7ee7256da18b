"""Run the three refinement cases against the bundled synthetic trace and print their RMSE.

    python scripts/run_cases.py [--rays N] [--json out.json]
"""

from __future__ import annotations

import argparse
import json
import time
from dataclasses import replace

import numpy as np

from raylaunch import io as rio
from raylaunch.analysis import rmse
from raylaunch.channel import simulate
from raylaunch.data import data_path
from raylaunch.tracer import Tracer

CASES = ("case1_no_trees", "case2_trees", "case3_filtered")


def run_case(name, rays=None):
    scen = rio.load_scenario(data_path(f"{name}.scenario"))
    cfg = scen.launch if rays is None else replace(scen.launch, ray_count=rays)
    tracer = Tracer(scen.build_scene())
    res = simulate(tracer, scen.transmitters, scen.rx_antenna, scen.receivers, cfg, scen.filter_spec(tracer.scene))
    return res


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rays", type=int)
    ap.add_argument("--json")
    args = ap.parse_args(argv)
    trace = rio.load_trace_csv(data_path("campus_trace.csv"))
    out = {}
    for name in CASES:
        t0 = time.perf_counter()
        res = run_case(name, args.rays)
        sim = np.array([r.power_dbm for r in res])
        rep = rmse(sim, trace.powers)
        kinds = {}
        for r in res:
            kinds[r.strongest_kind] = kinds.get(r.strongest_kind, 0) + 1
        out[name] = rep.as_dict()
        print(f"{name:16s} rmse {rep.rmse_db:6.2f} dB  offset {rep.fitted_offset_db:7.2f} dB  "
              f"unfitted {rep.rmse_unfitted_db:6.2f} dB  clamped {rep.n_clamped:3d}  "
              f"({time.perf_counter() - t0:.1f} s)  strongest: {kinds}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(out, fh, indent=2, sort_keys=True)


if __name__ == "__main__":
    main()
