"""Deterministic shooting-and-bouncing-rays propagation for urban scenes."""

import numba as _numba

# prefer OpenMP; the TBB layer in some environments is too old and only warns
_numba.config.THREADING_LAYER_PRIORITY = ["omp", "tbb", "workqueue"]

from .accel import Bvh, Hit, Ray, build_bvh, intersect_nearest, intersect_sphere  # noqa: E402
from .antenna import AntennaSpec, DirectionAngles, pattern_amplitude, world_to_antenna_frame  # noqa: E402
from .channel import (  # noqa: E402
    ChannelResult,
    PathFilterSpec,
    PathRule,
    Transmitter,
    amplitude_for_path,
    apply_filter,
    combine_transmitters,
    normalize_trace,
    received_power,
    simulate,
)
from .geom import GeoOrigin, Material, Mesh, Scene, extrude_footprint, make_tree_blocker, wgs84_to_enu  # noqa: E402
from .tracer import LaunchConfig, PathRecord, Tracer, trace_paths  # noqa: E402

__version__ = "0.1.0"
