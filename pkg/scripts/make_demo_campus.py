"""Generate the bundled synthetic campus: footprints, scenario files and a synthetic trace.

The campus mimics the published measurement setting at desk scale: two co-sited
sector transmitters on a 20 m rooftop, a slightly lower neighbouring building
whose far roof edge produces a strong diffraction path towards the start of the
route, and a tree-lined street further on. The "measured" trace is the Case III
model (trees, diffraction over the neighbour removed) shifted by -41 dB with
3 dB Gaussian noise.

    python scripts/make_demo_campus.py [--out src/raylaunch/data] [--rays 200000]
"""

from __future__ import annotations

import argparse
import json
from pathlib import Path

import numpy as np
import yaml

from raylaunch import io as rio
from raylaunch.channel import simulate
from raylaunch.geom import GeoOrigin, enu_to_wgs84, wgs84_to_enu
from raylaunch.tracer import Tracer


def dms(d, m, s):
    return d + m / 60.0 + s / 3600.0


TX1 = (dms(49, 25, 25.5), dms(7, 45, 14.7))
TX2 = (dms(49, 25, 25.2), dms(7, 45, 15.4))
ORIGIN = GeoOrigin(TX1[0], TX1[1], 0.0)
NOISE_DB = 3.0
OFFSET_DB = -41.0
SEED = 20240901

# hand-placed key buildings (ENU metres)
KEY_BUILDINGS = [
    ("bldg_tx", [(-8, -16), (22, -16), (22, 6), (-8, 6)], 20.0),
    ("bldg_neighbor", [(28, -22), (60, -22), (60, 10), (28, 10)], 18.0),
    ("bldg_east", [(138, -34), (160, -34), (160, 14), (138, 14)], 9.0),
] + [
    (f"bldg_street_{i}", [(104, y0), (128, y0), (128, y0 + 24), (104, y0 + 24)], h)
    for i, (y0, h) in enumerate([(-74, 14.0), (-104, 18.0), (-134, 12.0), (-164, 16.0), (-194, 13.0)])
]

# open lawn between the transmitters and the route
KEEP_OUT = [(-12, 170, -230, 22), (-70, 170, 22, 170)]


def route_points():
    a = np.column_stack([np.full(40, 118.0), np.linspace(8.0, -38.0, 40)])
    b = np.column_stack([np.full(128, 82.0), np.linspace(-44.0, -200.0, 128)])
    return np.vstack([a, b])


def shape(kind, cx, cy, w, d, rng):
    hw, hd = w / 2, d / 2
    if kind == "rect":
        pts = [(-hw, -hd), (hw, -hd), (hw, hd), (-hw, hd)]
    elif kind == "L":
        pts = [(-hw, -hd), (hw, -hd), (hw, 0), (0, 0), (0, hd), (-hw, hd)]
    elif kind == "U":
        t = w / 3
        pts = [(-hw, -hd), (hw, -hd), (hw, hd), (hw - t, hd), (hw - t, 0), (-hw + t, 0), (-hw + t, hd), (-hw, hd)]
    elif kind == "chamfer":
        c = min(w, d) / 4
        pts = [(-hw + c, -hd), (hw - c, -hd), (hw, -hd + c), (hw, hd - c), (hw - c, hd), (-hw + c, hd),
               (-hw, hd - c), (-hw, -hd + c)]
    elif kind == "round":
        n = int(rng.integers(10, 17))
        ang = np.linspace(0, 2 * np.pi, n, endpoint=False)
        pts = list(zip(hw * np.cos(ang), hd * np.sin(ang)))
    elif kind == "courtyard":
        # simple polygon with a notch, many vertices
        pts = [(-hw, -hd), (-hw / 3, -hd), (-hw / 3, -hd / 2), (hw / 3, -hd / 2), (hw / 3, -hd), (hw, -hd),
               (hw, hd), (hw / 3, hd), (hw / 3, hd / 2), (-hw / 3, hd / 2), (-hw / 3, hd), (-hw, hd)]
    else:
        raise ValueError(kind)
    return [(cx + x, cy + y) for x, y in pts]


def n_tris(poly):
    n = len(poly)
    return 2 * n + n - 2


def random_buildings(rng, budget):
    kinds = ["rect", "L", "U", "chamfer", "round", "courtyard"]
    placed = [(x0, x1, y0, y1) for _, p, _ in KEY_BUILDINGS
              for x0, x1, y0, y1 in [(min(q[0] for q in p), max(q[0] for q in p),
                                      min(q[1] for q in p), max(q[1] for q in p))]]
    out, used = [], 0
    tries = 0
    while used < budget and tries < 20000:
        tries += 1
        cx, cy = rng.uniform(-320, 330), rng.uniform(-330, 300)
        w, d = rng.uniform(14, 40), rng.uniform(12, 34)
        box = (cx - w / 2 - 6, cx + w / 2 + 6, cy - d / 2 - 6, cy + d / 2 + 6)
        if any(not (box[1] < k[0] or box[0] > k[1] or box[3] < k[2] or box[2] > k[3]) for k in KEEP_OUT + placed):
            continue
        kind = kinds[int(rng.integers(len(kinds)))]
        poly = shape(kind, cx, cy, w, d, rng)
        if used + n_tris(poly) > budget + 20:
            continue
        placed.append(box)
        out.append((f"bldg_{len(out):03d}", [(round(x, 2), round(y, 2)) for x, y in poly],
                    float(np.round(rng.uniform(8, 30), 1))))
        used += n_tris(poly)
    return out


def trees(rng):
    out = []
    # rows lining the route street (with small gaps between crowns)
    for side, x, step in (("w", 74.0, -11.0), ("e", 91.0, -17.0)):
        for i, y in enumerate(np.arange(-48.0, -206.0, step)):
            out.append({"id": f"tree_{side}{i:02d}", "center": [x, float(y), 0.0],
                        "size": [7.0, 9.0, float(np.round(rng.uniform(11, 16), 1))]})
    # a stand between the transmitter building and the first route segment
    for i, y in enumerate(np.arange(-30.0, -66.0, -9.0)):
        out.append({"id": f"tree_s{i:02d}", "center": [52.0, float(y), 0.0], "size": [8.0, 8.0, 14.0]})
    # scattered campus trees
    n = 0
    while n < 12:
        x, y = rng.uniform(-250, 250), rng.uniform(-250, 250)
        if any(k[0] < x < k[1] and k[2] < y < k[3] for k in KEEP_OUT):
            continue
        out.append({"id": f"tree_c{n:02d}", "center": [float(np.round(x, 1)), float(np.round(y, 1)), 0.0],
                    "size": [6.0, 6.0, 10.0]})
        n += 1
    return out


def geojson(buildings):
    feats = []
    for tag, poly, h in buildings:
        p = np.array(poly + [poly[0]], dtype=float)
        lat, lon, _ = enu_to_wgs84(np.column_stack([p, np.zeros(len(p))]), ORIGIN)
        feats.append({
            "type": "Feature",
            "properties": {"id": tag, "height": h},
            "geometry": {"type": "Polygon",
                         "coordinates": [[[round(float(a), 9), round(float(b), 9)] for a, b in zip(lon, lat)]]},
        })
    return {"type": "FeatureCollection", "features": feats}


def scenario(name, description, tree_list, filters, route_ll, rays):
    tx2 = wgs84_to_enu(TX2[0], TX2[1], 0.0, ORIGIN)
    doc = {
        "schema_version": 1,
        "name": name,
        "description": description,
        "frequency_hz": 3.75e9,
        "origin": {"lat": round(ORIGIN.lat, 9), "lon": round(ORIGIN.lon, 9), "alt": 0.0},
        "materials": {
            "concrete": {"kind": "dielectric", "eps_r": 5.24, "sigma": 0.123},
            "ground": {"kind": "dielectric", "eps_r": 3.0, "sigma": 0.05},
            "tree": {"kind": "blocker"},
        },
        "ground": {"material": "ground", "half_size": 2000.0},
        "footprints": {"file": "campus_buildings.geojson", "material": "concrete"},
        "trees": tree_list,
        "transmitters": [
            {"id": "tx_330", "position": {"lat": round(TX1[0], 9), "lon": round(TX1[1], 9), "height": 22.0},
             "power_w": 20.0,
             "antenna": {"gain_dbi": 12.5, "pattern": "sector", "hpbw_az": 65.0, "hpbw_el": 22.0,
                         "front_back_db": 30.0, "orientation_deg": 330.0, "tilt_deg": 10.0,
                         "polarization": "vertical"}},
            {"id": "tx_124", "position": {"lat": round(TX2[0], 9), "lon": round(TX2[1], 9), "height": 22.0},
             "power_w": 20.0,
             "antenna": {"gain_dbi": 12.5, "pattern": "sector", "hpbw_az": 65.0, "hpbw_el": 22.0,
                         "front_back_db": 30.0, "orientation_deg": 124.0, "tilt_deg": 1.0,
                         "polarization": "vertical"}},
        ],
        "rx_antenna": {"gain_dbi": 4.0, "pattern": "omni", "hpbw_el": 78.0, "front_back_db": 30.0,
                       "polarization": "vertical"},
        "receivers": {"height": 0.2, "route": route_ll,
                      "grid": {"x_min": -100.0, "x_max": 200.0, "y_min": -220.0, "y_max": 80.0, "spacing": 10.0}},
        "launch": {"ray_count": rays, "max_reflections": 2, "enable_diffraction": True,
                   "max_path_length": 3000.0, "capture_scale": 12.0},
    }
    if filters:
        doc["filters"] = filters
    assert np.hypot(*tx2[:2]) < 20
    return doc


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=str(Path(__file__).resolve().parents[1] / "src" / "raylaunch" / "data"))
    ap.add_argument("--rays", type=int, default=200_000)
    args = ap.parse_args(argv)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(SEED)

    tree_list = trees(rng)
    key_tris = sum(n_tris(p) for _, p, _ in KEY_BUILDINGS)
    budget = 2500 - 2 - 12 * len(tree_list) - key_tris
    buildings = KEY_BUILDINGS + random_buildings(rng, budget)
    (out / "campus_buildings.geojson").write_text(json.dumps(geojson(buildings), indent=1) + "\n")

    r = route_points()
    lat, lon, _ = enu_to_wgs84(np.column_stack([r, np.zeros(len(r))]), ORIGIN)
    route_ll = [[round(float(a), 9), round(float(b), 9)] for a, b in zip(lat, lon)]
    manual = [{"kind": "diffraction", "mesh": "bldg_neighbor",
               "note": "transmitter building stands on lower ground; no path over the neighbour exists"}]
    docs = {
        "case1_no_trees": scenario("case1_no_trees", "Campus without vegetation", [], [], route_ll, args.rays),
        "case2_trees": scenario("case2_trees", "Campus with trees as blockers", tree_list, [], route_ll, args.rays),
        "case3_filtered": scenario("case3_filtered", "Trees plus manual removal of the neighbour diffraction",
                                   tree_list, manual, route_ll, args.rays),
        "table1": scenario("table1", "Reference link parameters on the synthetic campus (trees included)",
                           tree_list, [], route_ll, args.rays),
    }
    for name, doc in docs.items():
        (out / f"{name}.scenario").write_text(
            "# generated by scripts/make_demo_campus.py\n" + yaml.safe_dump(doc, sort_keys=False, width=120))

    scen = rio.load_scenario(out / "case3_filtered.scenario")
    tracer = Tracer(scen.build_scene())
    print(f"scene: {tracer.scene.n_triangles} triangles, {len(tracer.scene.meshes)} meshes, "
          f"{len(tracer.scene.edges)} edges")
    res = simulate(tracer, scen.transmitters, scen.rx_antenna, scen.receivers, scen.launch,
                   scen.filter_spec(tracer.scene))
    p = np.array([x.power_dbm for x in res])
    if not np.all(np.isfinite(p)):
        raise SystemExit(f"route positions without coverage: {np.flatnonzero(~np.isfinite(p)).tolist()}")
    noise = rng.normal(0.0, NOISE_DB, len(p))
    measured = p + OFFSET_DB + noise
    with (out / "campus_trace.csv").open("w", newline="") as fh:
        fh.write("lat,lon,power_dbm,timestamp\n")
        for i, ((a, b), m) in enumerate(zip(route_ll, measured)):
            fh.write(f"{a:.9f},{b:.9f},{m:.4f},{i:04d}\n")
    print(f"trace: {len(p)} samples, max {measured.max():.1f} dBm")


if __name__ == "__main__":
    main()
