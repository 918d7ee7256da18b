"""Scenario files, footprint import, trace ingestion and result export.

Scenario files are YAML documents (``schema_version: 1``) validated against
:data:`SCENARIO_SCHEMA`; see ``docs/scenario_format.md`` for the field reference.
Errors name the offending field and its line.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import jsonschema
import numpy as np
import yaml

from .antenna import AntennaSpec
from .channel import ChannelResult, PathFilterSpec, PathRule, Transmitter
from .geom import (
    CONCRETE,
    GROUND,
    PEC,
    TREE,
    GeoOrigin,
    GeometryError,
    Material,
    Scene,
    enu_to_wgs84,
    extrude_footprint,
    make_ground,
    make_tree_blocker,
    wgs84_to_enu,
)
from .tracer import LaunchConfig, PathRecord

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
DEFAULT_LEVEL_HEIGHT = 3.0
DEFAULT_BUILDING_HEIGHT = 10.0
RESULT_COLUMNS = ("index", "lat", "lon", "power_dbm", "path_count", "strongest_path_kind")
GRID_COLUMNS = ("row", "col", "x", "y", "lat", "lon", "power_dbm", "path_count", "strongest_path_kind")
PATH_COLUMNS = ("rx_index", "path_index", "path_id", "kind", "length_m", "tau_ns", "amplitude_db",
                "phase_deg", "diffraction_loss_db", "n_interactions", "interactions")


class ScenarioError(ValueError):
    """Invalid scenario file; message names the field and line when known."""

    def __init__(self, message: str, field: str = "", line: Optional[int] = None):
        self.field = field
        self.line = line
        loc = ""
        if field:
            loc += f" at '{field}'"
        if line is not None:
            loc += f" (line {line})"
        super().__init__(f"{message}{loc}")


class TraceError(ValueError):
    """Malformed measurement or result CSV."""


# -- schema ------------------------------------------------------------------------

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_xy = {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}
_xyz = {"type": "array", "items": _num, "minItems": 3, "maxItems": 3}
_xy_or_xyz = {"type": "array", "items": _num, "minItems": 2, "maxItems": 3}

_ANTENNA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "gain_dbi": _num,
        "pattern": {"enum": ["sector", "omni", "isotropic"]},
        "hpbw_az": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 180},
        "hpbw_el": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 180},
        "front_back_db": {"type": "number", "minimum": 0},
        "orientation_deg": _num,
        "tilt_deg": _num,
        "polarization": {"enum": ["vertical", "horizontal"]},
    },
}

_POSITION = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "lat": {"type": "number", "minimum": -90, "maximum": 90},
        "lon": {"type": "number", "minimum": -180, "maximum": 180},
        "height": _pos,
        "enu": _xyz,
    },
    "oneOf": [{"required": ["lat", "lon", "height"]}, {"required": ["enu"]}],
}

_REGION = {
    "type": "object",
    "additionalProperties": False,
    "required": ["min", "max"],
    "properties": {"min": _xyz, "max": _xyz},
}

SCENARIO_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["schema_version", "frequency_hz", "origin", "transmitters", "receivers"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "name": {"type": "string"},
        "description": {"type": "string"},
        "frequency_hz": _pos,
        "origin": {
            "type": "object",
            "additionalProperties": False,
            "required": ["lat", "lon"],
            "properties": {
                "lat": {"type": "number", "minimum": -90, "maximum": 90},
                "lon": {"type": "number", "minimum": -180, "maximum": 180},
                "alt": _num,
            },
        },
        "materials": {
            "type": "object",
            "additionalProperties": {
                "type": "object",
                "additionalProperties": False,
                "required": ["kind"],
                "properties": {
                    "kind": {"enum": ["dielectric", "perfect_conductor", "blocker"]},
                    "eps_r": {"type": "number", "minimum": 1},
                    "sigma": {"type": "number", "minimum": 0},
                },
            },
        },
        "ground": {
            "oneOf": [
                {"type": "boolean"},
                {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {"material": {"type": "string"}, "half_size": _pos},
                },
            ]
        },
        "buildings": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["id", "height"],
                "properties": {
                    "id": {"type": "string"},
                    "footprint": {"type": "array", "items": _xy, "minItems": 3},
                    "footprint_lonlat": {"type": "array", "items": _xy, "minItems": 3},
                    "height": _pos,
                    "material": {"type": "string"},
                },
                "oneOf": [{"required": ["footprint"]}, {"required": ["footprint_lonlat"]}],
            },
        },
        "footprints": {
            "type": "object",
            "additionalProperties": False,
            "required": ["file"],
            "properties": {"file": {"type": "string"}, "material": {"type": "string"}},
        },
        "trees": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["center", "size"],
                "properties": {
                    "id": {"type": "string"},
                    "center": _xy_or_xyz,
                    "size": {"type": "array", "items": _pos, "minItems": 3, "maxItems": 3},
                    "material": {"type": "string"},
                },
            },
        },
        "transmitters": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["id", "position", "power_w", "antenna"],
                "properties": {
                    "id": {"type": "string"},
                    "position": _POSITION,
                    "power_w": _pos,
                    "antenna": _ANTENNA,
                },
            },
        },
        "rx_antenna": _ANTENNA,
        "receivers": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "height": _pos,
                "route": {"type": "array", "items": _xy},
                "route_enu": {"type": "array", "items": _xy},
                "route_csv": {"type": "string"},
                "grid": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["x_min", "x_max", "y_min", "y_max", "spacing"],
                    "properties": {
                        "x_min": _num, "x_max": _num, "y_min": _num, "y_max": _num,
                        "spacing": _pos, "height": _pos,
                    },
                },
            },
        },
        "launch": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "ray_count": {"type": "integer", "minimum": 100},
                "max_reflections": {"type": "integer", "minimum": 0, "maximum": 2},
                "enable_diffraction": {"type": "boolean"},
                "rx_sphere_mode": {"enum": ["adaptive"]},
                "max_path_length": _pos,
                "capture_scale": _pos,
                "image_candidates": {"type": "boolean"},
            },
        },
        "filters": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "minProperties": 1,
                "properties": {
                    "kind": {"enum": ["los", "reflection", "diffraction"]},
                    "mesh": {"type": "string"},
                    "edge": {"type": "integer", "minimum": 0},
                    "region": _REGION,
                    "path_id": {"type": "string"},
                    "note": {"type": "string"},
                },
            },
        },
    },
}


# -- YAML with line tracking --------------------------------------------------------------


class _Loader(yaml.SafeLoader):
    """SafeLoader that also reads YAML 1.2 floats such as ``3.75e9``."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"^[-+]?(?:[0-9][0-9_]*\.[0-9_]*(?:[eE][-+]?[0-9]+)?|\.[0-9_]+(?:[eE][-+]?[0-9]+)?"
               r"|[0-9][0-9_]*[eE][-+]?[0-9]+|\.inf|\.Inf|\.INF|\.nan|\.NaN|\.NAN)$"),
    list("-+0123456789."),
)


def _yaml_with_lines(text: str):
    """Parse YAML and return (data, {path tuple: line})."""
    loader = _Loader(text)
    try:
        node = loader.get_single_node()
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ScenarioError(f"YAML syntax error: {getattr(exc, 'problem', exc)}",
                            line=mark.line + 1 if mark else None) from None
    finally:
        loader.dispose()
    lines: dict = {}

    def walk(n, path):
        lines[path] = n.start_mark.line + 1
        if isinstance(n, yaml.MappingNode):
            out = {}
            for k, v in n.value:
                key = loader.construct_object(k)
                lines[path + (key,)] = k.start_mark.line + 1
                out[key] = walk(v, path + (key,))
                lines[path + (key,)] = k.start_mark.line + 1
            return out
        if isinstance(n, yaml.SequenceNode):
            return [walk(v, path + (i,)) for i, v in enumerate(n.value)]
        return loader.construct_object(n)

    if node is None:
        return None, lines
    return walk(node, ()), lines


def _line_for(lines: dict, path) -> Optional[int]:
    path = tuple(path)
    while path and path not in lines:
        path = path[:-1]
    return lines.get(path)


def _fmt_path(path) -> str:
    out = ""
    for p in path:
        out += f"[{p}]" if isinstance(p, int) else (f".{p}" if out else str(p))
    return out or "<root>"


# -- scenario model -------------------------------------------------------------------------


@dataclass(frozen=True)
class GridSpec:
    x_min: float
    x_max: float
    y_min: float
    y_max: float
    spacing: float
    height: float = 0.20

    def __post_init__(self):
        if not self.spacing > 0:
            raise ValueError("grid spacing must be positive")
        if self.x_max < self.x_min or self.y_max < self.y_min:
            raise ValueError("grid max must not be below min")

    @property
    def xs(self) -> np.ndarray:
        n = int(math.floor((self.x_max - self.x_min) / self.spacing + 1e-9)) + 1
        return self.x_min + self.spacing * np.arange(n)

    @property
    def ys(self) -> np.ndarray:
        n = int(math.floor((self.y_max - self.y_min) / self.spacing + 1e-9)) + 1
        return self.y_min + self.spacing * np.arange(n)

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.ys), len(self.xs)

    def points(self) -> np.ndarray:
        """Row-major cell centres: rows follow y, columns follow x."""
        yy, xx = np.meshgrid(self.ys, self.xs, indexing="ij")
        return np.column_stack([xx.ravel(), yy.ravel(), np.full(xx.size, self.height)])


@dataclass(frozen=True)
class BuildingSpec:
    id: str
    footprint: np.ndarray  # ENU metres, (n, 2)
    height: float
    material: str = "concrete"


@dataclass(frozen=True)
class TreeSpec:
    id: str
    center: tuple
    size: tuple
    material: str = "tree"


@dataclass(frozen=True, eq=False)
class Scenario:
    name: str
    origin: GeoOrigin
    frequency_hz: float
    materials: dict
    buildings: tuple
    trees: tuple
    ground: Optional[tuple]  # (material name, half size) or None
    transmitters: tuple
    rx_antenna: AntennaSpec
    receivers: np.ndarray  # (K, 3) ENU
    receiver_height: float
    grid: Optional[GridSpec]
    launch: LaunchConfig
    filter_rules: tuple = ()  # raw dicts, resolved against the scene
    source: Optional[Path] = None

    def build_scene(self) -> Scene:
        meshes = []
        if self.ground is not None:
            mat, half = self.ground
            meshes.append(make_ground(half, self.materials[mat]))
        for b in self.buildings:
            meshes.append(extrude_footprint(b.footprint, b.height, self.materials[b.material], b.id))
        for t in self.trees:
            meshes.append(make_tree_blocker(t.center, *t.size, tag=t.id, material=self.materials[t.material]))
        return Scene(self.origin, tuple(meshes))

    def filter_spec(self, scene: Scene) -> PathFilterSpec:
        rules = []
        for i, raw in enumerate(self.filter_rules):
            mesh_id = None
            if "mesh" in raw:
                try:
                    mesh_id = scene.mesh_index(raw["mesh"])
                except KeyError:
                    raise ScenarioError(f"filter references unknown mesh {raw['mesh']!r}", f"filters[{i}].mesh") from None
            region = None
            if "region" in raw:
                region = (tuple(raw["region"]["min"]), tuple(raw["region"]["max"]))
            edge = raw.get("edge")
            if edge is not None and edge >= len(scene.edges):
                raise ScenarioError(f"filter references unknown edge {edge}", f"filters[{i}].edge")
            try:
                rules.append(PathRule(kind=raw.get("kind"), mesh_id=mesh_id, edge_id=edge, region=region,
                                      path_id=raw.get("path_id")))
            except ValueError as exc:
                raise ScenarioError(str(exc), f"filters[{i}]") from None
        return PathFilterSpec(tuple(rules))

    def receiver_latlon(self) -> np.ndarray:
        if len(self.receivers) == 0:
            return np.zeros((0, 2))
        lat, lon, _ = enu_to_wgs84(np.column_stack([self.receivers[:, :2], np.zeros(len(self.receivers))]),
                                   self.origin)
        return np.column_stack([np.atleast_1d(lat), np.atleast_1d(lon)])


BUILTIN_MATERIALS = {m.name: m for m in (CONCRETE, GROUND, TREE, PEC)}


def _antenna(raw: dict, position=(0.0, 0.0, 0.0)) -> AntennaSpec:
    return AntennaSpec(position=position, **raw)


def load_scenario(path) -> Scenario:
    """Read and fully validate a scenario file."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario: {exc.strerror}", str(path)) from None
    return parse_scenario(text, base_dir=path.parent, source=path)


def parse_scenario(text: str, base_dir=".", source=None) -> Scenario:
    data, lines = _yaml_with_lines(text)
    if data is None:
        raise ScenarioError("empty scenario document", line=1)
    validator = jsonschema.Draft202012Validator(SCENARIO_SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: (len(e.absolute_path), list(map(str, e.absolute_path))))
    if errors:
        err = errors[0]
        p = list(err.absolute_path)
        if err.validator == "additionalProperties" and isinstance(err.instance, dict):
            extra = sorted(set(err.instance) - set(err.schema.get("properties", {})))
            if extra:
                p = p + [extra[0]]
                raise ScenarioError(f"unknown field {extra[0]!r}", _fmt_path(p), _line_for(lines, p))
        raise ScenarioError(err.message, _fmt_path(p), _line_for(lines, p))

    def fail(msg, *p):
        raise ScenarioError(msg, _fmt_path(p), _line_for(lines, p))

    base_dir = Path(base_dir)
    o = data["origin"]
    origin = GeoOrigin(o["lat"], o["lon"], o.get("alt", 0.0))

    materials = dict(BUILTIN_MATERIALS)
    for name, m in (data.get("materials") or {}).items():
        try:
            materials[name] = Material(name, m.get("eps_r", 1.0), m.get("sigma", 0.0), m["kind"])
        except GeometryError as exc:
            fail(str(exc), "materials", name)

    def material_ref(name, *p):
        if name not in materials:
            fail(f"unknown material {name!r}", *p)
        return name

    ground = None
    g = data.get("ground", True)
    if g is not False:
        g = {} if g is True else g
        ground = (material_ref(g.get("material", "ground"), "ground", "material"), float(g.get("half_size", 5000.0)))

    buildings = []
    for i, b in enumerate(data.get("buildings") or []):
        if "footprint" in b:
            poly = np.asarray(b["footprint"], dtype=float)
        else:
            ll = np.asarray(b["footprint_lonlat"], dtype=float)
            try:
                poly = wgs84_to_enu(ll[:, 1], ll[:, 0], origin.alt, origin)[:, :2]
            except GeometryError as exc:
                fail(str(exc), "buildings", i, "footprint_lonlat")
        mat = material_ref(b.get("material", "concrete"), "buildings", i, "material")
        try:
            extrude_footprint(poly, b["height"], materials[mat], b["id"])
        except GeometryError as exc:
            fail(str(exc), "buildings", i)
        buildings.append(BuildingSpec(b["id"], poly, float(b["height"]), mat))

    if "footprints" in data:
        fp = data["footprints"]
        mat = material_ref(fp.get("material", "concrete"), "footprints", "material")
        try:
            imported = import_footprints(base_dir / fp["file"], origin)
        except (OSError, ValueError) as exc:
            fail(f"cannot import footprints: {exc}", "footprints", "file")
        for poly, height, tag in imported:
            buildings.append(BuildingSpec(tag, poly, height, mat))

    tags = [b.id for b in buildings]
    if len(set(tags)) != len(tags):
        dup = sorted({t for t in tags if tags.count(t) > 1})[0]
        fail(f"duplicate building id {dup!r}", "buildings")

    trees = []
    for i, t in enumerate(data.get("trees") or []):
        c = list(t["center"]) + [0.0] * (3 - len(t["center"]))
        mat = material_ref(t.get("material", "tree"), "trees", i, "material")
        trees.append(TreeSpec(t.get("id", f"tree{i}"), tuple(c), tuple(t["size"]), mat))

    freq = float(data["frequency_hz"])
    transmitters = []
    for i, t in enumerate(data["transmitters"]):
        pos = t["position"]
        if "enu" in pos:
            xyz = tuple(pos["enu"])
        else:
            e = wgs84_to_enu(pos["lat"], pos["lon"], origin.alt, origin)
            xyz = (float(e[0]), float(e[1]), float(pos["height"]))
        try:
            ant = _antenna(t["antenna"], xyz)
        except ValueError as exc:
            fail(str(exc), "transmitters", i, "antenna")
        transmitters.append(Transmitter(t["id"], ant, float(t["power_w"])))

    rx_antenna = _antenna(data.get("rx_antenna") or {})

    rcv = data["receivers"]
    height = float(rcv.get("height", 0.20))
    pts = []
    if "route" in rcv:
        ll = np.asarray(rcv["route"], dtype=float).reshape(-1, 2)
        if len(ll):
            e = np.atleast_2d(wgs84_to_enu(ll[:, 0], ll[:, 1], origin.alt, origin))
            pts.append(np.column_stack([e[:, :2], np.full(len(e), height)]))
    if "route_enu" in rcv:
        e = np.asarray(rcv["route_enu"], dtype=float).reshape(-1, 2)
        pts.append(np.column_stack([e, np.full(len(e), height)]))
    if "route_csv" in rcv:
        try:
            trace = load_trace_csv(base_dir / rcv["route_csv"])
        except (OSError, TraceError) as exc:
            fail(f"cannot read route: {exc}", "receivers", "route_csv")
        from .analysis import align_positions

        pts.append(align_positions(trace, origin, height))
    receivers = np.vstack(pts) if pts else np.zeros((0, 3))
    grid = None
    if "grid" in rcv:
        gd = dict(rcv["grid"])
        gd.setdefault("height", height)
        try:
            grid = GridSpec(**gd)
        except ValueError as exc:
            fail(str(exc), "receivers", "grid")

    lc = dict(data.get("launch") or {})
    launch = LaunchConfig(frequency_hz=freq, **lc)

    filters = tuple(data.get("filters") or [])
    for i, r in enumerate(filters):
        if set(r) <= {"note"}:
            fail("empty filter rule", "filters", i)
        if r.get("kind") == "los" and set(r) - {"kind", "note", "path_id"}:
            fail("a los rule cannot constrain interactions", "filters", i)

    scen = Scenario(
        name=data.get("name", Path(source).stem if source else "scenario"),
        origin=origin,
        frequency_hz=freq,
        materials=materials,
        buildings=tuple(buildings),
        trees=tuple(trees),
        ground=ground,
        transmitters=tuple(transmitters),
        rx_antenna=rx_antenna,
        receivers=receivers,
        receiver_height=height,
        grid=grid,
        launch=launch,
        filter_rules=filters,
        source=Path(source) if source else None,
    )
    # mesh-level references can only be checked against the built scene
    scene = scen.build_scene()
    for i, r in enumerate(filters):
        if "mesh" in r:
            try:
                scene.mesh_index(r["mesh"])
            except KeyError:
                fail(f"filter references unknown mesh {r['mesh']!r}", "filters", i, "mesh")
    return scen


# -- footprints -------------------------------------------------------------------------------


def _parse_height(props: dict) -> float:
    for key in ("height", "building:height"):
        if key in props and props[key] not in (None, ""):
            try:
                return float(str(props[key]).strip().split()[0].rstrip("m"))
            except ValueError:
                log.warning("unparseable height %r; falling back", props[key])
    for key in ("levels", "building:levels"):
        if key in props and props[key] not in (None, ""):
            try:
                return DEFAULT_LEVEL_HEIGHT * float(props[key])
            except ValueError:
                log.warning("unparseable levels %r; falling back", props[key])
    return DEFAULT_BUILDING_HEIGHT


def import_footprints(path, origin: GeoOrigin) -> list[tuple[np.ndarray, float, str]]:
    """Building footprints from a GeoJSON FeatureCollection, in ENU metres.

    Height comes from ``height``, else ``levels`` x 3 m, else 10 m. Non-polygon
    features are skipped with a warning; interior rings are ignored.
    """
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    crs = (doc.get("crs") or {}).get("properties", {}).get("name", "")
    if crs and not any(s in crs for s in ("CRS84", "4326")):
        raise ValueError(f"unsupported CRS {crs!r}; expected WGS84 lon/lat")
    if doc.get("type") != "FeatureCollection":
        raise ValueError("expected a GeoJSON FeatureCollection")
    out = []
    for i, feat in enumerate(doc.get("features", [])):
        geom = feat.get("geometry") or {}
        props = feat.get("properties") or {}
        tag = str(props.get("id", feat.get("id", f"building{i}")))
        if geom.get("type") == "Polygon":
            rings = [geom["coordinates"]]
        elif geom.get("type") == "MultiPolygon":
            rings = geom["coordinates"]
        else:
            log.warning("feature %s: skipping non-polygon geometry %r", tag, geom.get("type"))
            continue
        height = _parse_height(props)
        for j, poly in enumerate(rings):
            ll = np.asarray(poly[0], dtype=float)
            e = wgs84_to_enu(ll[:, 1], ll[:, 0], origin.alt, origin)[:, :2]
            # drop the repeated closing vertex
            if len(e) > 1 and np.allclose(e[0], e[-1], atol=1e-9):
                e = e[:-1]
            out.append((e, height, tag if len(rings) == 1 else f"{tag}.{j}"))
    return out


# -- traces and results -------------------------------------------------------------------------


@dataclass(frozen=True)
class TraceSample:
    lat: float
    lon: float
    power_dbm: float
    timestamp: Optional[str] = None


@dataclass(frozen=True)
class MeasurementTrace:
    samples: tuple
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))
        if not self.samples:
            raise TraceError("trace has no samples")
        if not all(math.isfinite(s.power_dbm) for s in self.samples):
            raise TraceError("trace powers must be finite")

    @property
    def powers(self) -> np.ndarray:
        return np.array([s.power_dbm for s in self.samples])

    def __len__(self):
        return len(self.samples)


def load_trace_csv(path, lat_col="lat", lon_col="lon", power_col="power_dbm", time_col="timestamp",
                   label: Optional[str] = None) -> MeasurementTrace:
    """Measured samples in file order. Extra columns are ignored."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise TraceError(f"{path}: missing header row")
        for col in (lat_col, lon_col, power_col):
            if col not in reader.fieldnames:
                raise TraceError(f"{path}: missing required column {col!r}")
        samples, bad = [], []
        for row in reader:
            line = reader.line_num
            try:
                s = TraceSample(float(row[lat_col]), float(row[lon_col]), float(row[power_col]),
                                row.get(time_col) or None)
            except (TypeError, ValueError):
                bad.append(line)
                continue
            if not (math.isfinite(s.power_dbm) and abs(s.lat) <= 90 and abs(s.lon) <= 180):
                bad.append(line)
                continue
            samples.append(s)
    if bad:
        raise TraceError(f"{path}: malformed rows at lines {', '.join(map(str, bad))}")
    return MeasurementTrace(tuple(samples), label or path.stem)


def _g(x: float) -> str:
    return "" if not math.isfinite(x) else f"{x:.6g}"


def _deg(x: float) -> str:
    return f"{x:.9f}"


def _open_for_write(path):
    path = Path(path)
    try:
        return path.open("w", newline="", encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from None


def write_results(results: Sequence[ChannelResult], latlon, path) -> None:
    """One row per receiver; empty power for no coverage."""
    with _open_for_write(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULT_COLUMNS)
        for r, (lat, lon) in zip(results, latlon):
            w.writerow([r.rx_index, _deg(lat), _deg(lon), _g(r.power_dbm), len(r.paths), r.strongest_kind])


@dataclass(frozen=True)
class ResultRow:
    index: int
    lat: float
    lon: float
    power_dbm: float
    path_count: int
    strongest_path_kind: str


def read_results(path) -> list[ResultRow]:
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or tuple(reader.fieldnames) != RESULT_COLUMNS:
            raise TraceError(f"{path}: not a result file (columns {reader.fieldnames})")
        rows = []
        for row in reader:
            try:
                rows.append(ResultRow(int(row["index"]), float(row["lat"]), float(row["lon"]),
                                      float(row["power_dbm"]) if row["power_dbm"] else -math.inf,
                                      int(row["path_count"]), row["strongest_path_kind"]))
            except ValueError:
                raise TraceError(f"{path}: malformed row at line {reader.line_num}") from None
    return rows


def write_grid(grid: GridSpec, results: Sequence[ChannelResult], origin: GeoOrigin, path) -> None:
    pts = grid.points()
    n_rows, n_cols = grid.shape
    lat, lon, _ = enu_to_wgs84(np.column_stack([pts[:, :2], np.zeros(len(pts))]), origin)
    lat, lon = np.atleast_1d(lat), np.atleast_1d(lon)
    with _open_for_write(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(GRID_COLUMNS)
        for i, r in enumerate(results):
            w.writerow([i // n_cols, i % n_cols, _g(pts[i, 0]), _g(pts[i, 1]), _deg(lat[i]), _deg(lon[i]),
                        _g(r.power_dbm), len(r.paths), r.strongest_kind])


def read_grid(path) -> np.ndarray:
    """Power grid (rows x cols) from a grid CSV; ``-inf`` where empty."""
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        return np.zeros((0, 0))
    nr = max(int(r["row"]) for r in rows) + 1
    nc = max(int(r["col"]) for r in rows) + 1
    out = np.full((nr, nc), -math.inf)
    for r in rows:
        if r["power_dbm"]:
            out[int(r["row"]), int(r["col"])] = float(r["power_dbm"])
    return out


def serialize_interactions(path: PathRecord, scene: Optional[Scene] = None) -> str:
    parts = []
    for it in path.interactions:
        tag = scene.meshes[it.mesh_id].tag if scene is not None else str(it.mesh_id)
        prim = f"e{it.primitive_id}" if it.kind == "diffraction" else f"t{it.primitive_id}"
        x, y, z = it.point
        parts.append(f"{it.kind[0].upper()}@{tag}#{it.mesh_id}:{prim}({x:.3f};{y:.3f};{z:.3f})")
    return "|".join(parts)


def write_paths(results: Sequence[ChannelResult], path, scene: Optional[Scene] = None) -> None:
    """One row per path with its interaction list, for audits and filter authoring."""
    with _open_for_write(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PATH_COLUMNS)
        for r in results:
            for j, (p, a) in enumerate(r.paths):
                amp_db = 20.0 * math.log10(abs(a)) if abs(a) > 0 else -math.inf
                w.writerow([r.rx_index, j, p.path_id, p.label, _g(p.total_length), _g(p.tau * 1e9), _g(amp_db),
                            _g(math.degrees(np.angle(a))), _g(p.diffraction_loss_db), len(p.interactions),
                            serialize_interactions(p, scene)])


def read_paths(path) -> list[dict]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))
