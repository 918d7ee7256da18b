"""Simulation-vs-measurement comparison and area sweeps."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelResult, simulate
from .geom import GeoOrigin, GeometryError, wgs84_to_enu
from .io import GridSpec, MeasurementTrace, TraceError

RX_HEIGHT = 0.20
DEFAULT_FLOOR_DBM = -150.0


@dataclass(frozen=True)
class ComparisonReport:
    n_positions: int
    rmse_db: float
    fitted_offset_db: float
    residuals: np.ndarray = field(repr=False)
    rmse_unfitted_db: float = 0.0
    n_clamped: int = 0

    def as_dict(self) -> dict:
        return {
            "n_positions": self.n_positions,
            "rmse_db": round(self.rmse_db, 6),
            "rmse_unfitted_db": round(self.rmse_unfitted_db, 6),
            "fitted_offset_db": round(self.fitted_offset_db, 6),
            "n_clamped": self.n_clamped,
        }


def align_positions(trace: MeasurementTrace, origin: GeoOrigin, height: float = RX_HEIGHT) -> np.ndarray:
    """ENU receiver points (z = antenna height above flat ground) for each trace sample."""
    if len(trace.samples) == 0:
        raise TraceError("empty trace")
    lat = np.array([s.lat for s in trace.samples])
    lon = np.array([s.lon for s in trace.samples])
    for i, (a, b) in enumerate(zip(lat, lon)):
        if not (math.isfinite(a) and math.isfinite(b) and abs(a) <= 90 and abs(b) <= 180):
            raise GeometryError(f"trace sample {i}: invalid coordinates ({a}, {b})")
    e = np.atleast_2d(wgs84_to_enu(lat, lon, origin.alt, origin))
    return np.column_stack([e[:, 0], e[:, 1], np.full(len(e), height)])


def rmse(simulated, measured, fit_offset: bool = True, floor_dbm: float = DEFAULT_FLOOR_DBM) -> ComparisonReport:
    """RMSE of ``measured - simulated`` in dB.

    With ``fit_offset`` the mean residual (the least-squares constant offset) is
    removed first and reported. Simulated ``-inf`` (no coverage) is clamped to
    ``floor_dbm`` and counted.
    """
    sim = np.asarray(simulated, dtype=float)
    meas = np.asarray(measured, dtype=float)
    if sim.shape != meas.shape or sim.ndim != 1:
        raise ValueError(f"length mismatch: {sim.shape} vs {meas.shape}")
    if sim.size == 0:
        raise ValueError("need at least one position")
    if not np.all(np.isfinite(meas)):
        raise ValueError("measured powers must be finite")
    clamped = ~np.isfinite(sim)
    sim = np.where(clamped, floor_dbm, sim)
    resid = meas - sim
    unfitted = float(np.sqrt(np.mean(resid ** 2)))
    offset = float(np.mean(resid)) if fit_offset else 0.0
    resid = resid - offset
    return ComparisonReport(
        n_positions=int(sim.size),
        rmse_db=float(np.sqrt(np.mean(resid ** 2))),
        fitted_offset_db=offset,
        residuals=resid,
        rmse_unfitted_db=unfitted,
        n_clamped=int(clamped.sum()),
    )


def grid_sweep(tracer, transmitters, rx_antenna, grid: GridSpec, cfg, filters=None,
               margin: float = 50.0) -> np.ndarray:
    """Combined received power (dBm) on a row-major grid; ``-inf`` where uncovered."""
    results = grid_sweep_results(tracer, transmitters, rx_antenna, grid, cfg, filters, margin)
    return np.array([r.power_dbm for r in results]).reshape(grid.shape)


def grid_sweep_results(tracer, transmitters, rx_antenna, grid: GridSpec, cfg, filters=None,
                       margin: float = 50.0) -> list[ChannelResult]:
    lo, hi = tracer.scene.aabb(include_ground=False)
    if (grid.x_min < lo[0] - margin or grid.x_max > hi[0] + margin
            or grid.y_min < lo[1] - margin or grid.y_max > hi[1] + margin):
        raise ValueError(
            f"grid [{grid.x_min}, {grid.x_max}] x [{grid.y_min}, {grid.y_max}] lies outside the scene bounds "
            f"[{lo[0]:.1f}, {hi[0]:.1f}] x [{lo[1]:.1f}, {hi[1]:.1f}] (margin {margin} m)"
        )
    return simulate(tracer, transmitters, rx_antenna, grid.points(), cfg, filters)
