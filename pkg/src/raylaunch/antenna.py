"""Antenna patterns and orientation.

Sector antennas use the parabolic 3GPP-style model::

    A(az, el) = -min(-(A_az + A_el), A_m)
    A_az = -min(12 (az / hpbw_az)^2, A_m),  A_el = -min(12 (el / hpbw_el)^2, A_m)

with angles in degrees, offset by the peak gain ``gain_dbi``. Pattern phase is zero.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np


class PatternKind(str, enum.Enum):
    SECTOR = "sector"
    OMNI = "omni"
    ISOTROPIC = "isotropic"


class Polarization(str, enum.Enum):
    VERTICAL = "vertical"
    HORIZONTAL = "horizontal"


@dataclass(frozen=True)
class AntennaSpec:
    gain_dbi: float = 0.0
    pattern: PatternKind = PatternKind.ISOTROPIC
    hpbw_az: float = 65.0
    hpbw_el: float = 22.0
    front_back_db: float = 30.0
    orientation_deg: float = 0.0
    tilt_deg: float = 0.0
    position: tuple = (0.0, 0.0, 0.0)
    polarization: Polarization = Polarization.VERTICAL

    def __post_init__(self):
        object.__setattr__(self, "pattern", PatternKind(self.pattern))
        object.__setattr__(self, "polarization", Polarization(self.polarization))
        object.__setattr__(self, "position", tuple(float(c) for c in self.position))
        if not math.isfinite(self.gain_dbi):
            raise ValueError("antenna gain must be finite")
        for name in ("hpbw_az", "hpbw_el"):
            val = getattr(self, name)
            if not 0.0 < val < 180.0:
                raise ValueError(f"{name} must be in (0, 180) degrees, got {val}")
        if self.front_back_db < 0:
            raise ValueError("front_back_db must be >= 0")

    @property
    def pos(self) -> np.ndarray:
        return np.array(self.position)

    def moved(self, position) -> "AntennaSpec":
        return replace(self, position=tuple(position))

    @property
    def pol_vector(self) -> np.ndarray:
        """Unit polarization in the ray-fixed (v, h) basis."""
        if self.polarization is Polarization.VERTICAL:
            return np.array([1.0, 0.0])
        return np.array([0.0, 1.0])


@dataclass(frozen=True)
class DirectionAngles:
    azimuth: float
    elevation: float


def antenna_axes(spec: AntennaSpec) -> np.ndarray:
    """Rows: forward (boresight), left, up of the antenna frame in ENU."""
    phi = math.radians(spec.orientation_deg)
    tau = math.radians(spec.tilt_deg)
    fwd = np.array([math.sin(phi) * math.cos(tau), math.cos(phi) * math.cos(tau), -math.sin(tau)])
    left = np.array([-math.cos(phi), math.sin(phi), 0.0])
    up = np.cross(fwd, left)
    return np.vstack([fwd, left, up])


def world_to_antenna_frame(direction, spec: AntennaSpec) -> DirectionAngles:
    """Azimuth (counter-clockwise from boresight seen from above) and elevation, radians."""
    local = antenna_axes(spec) @ np.asarray(direction, dtype=float)
    az = math.atan2(local[1], local[0])
    if az == -math.pi:
        az = math.pi
    el = math.asin(max(-1.0, min(1.0, local[2])))
    return DirectionAngles(az, el)


def antenna_to_world(angles: DirectionAngles, spec: AntennaSpec) -> np.ndarray:
    ce = math.cos(angles.elevation)
    local = np.array([ce * math.cos(angles.azimuth), ce * math.sin(angles.azimuth), math.sin(angles.elevation)])
    return antenna_axes(spec).T @ local


def pattern_gain_db(angles: DirectionAngles, spec: AntennaSpec) -> float:
    """Power gain in dBi towards ``angles``."""
    if spec.pattern is PatternKind.ISOTROPIC:
        return spec.gain_dbi
    am = spec.front_back_db
    el = math.degrees(angles.elevation)
    a_el = -min(12.0 * (el / spec.hpbw_el) ** 2, am)
    if spec.pattern is PatternKind.OMNI:
        return spec.gain_dbi + a_el
    az = math.degrees(angles.azimuth)
    a_az = -min(12.0 * (az / spec.hpbw_az) ** 2, am)
    return spec.gain_dbi - min(-(a_az + a_el), am)


def pattern_amplitude(angles: DirectionAngles, spec: AntennaSpec) -> complex:
    """Linear field amplitude sqrt(G), gain included, zero phase."""
    return complex(10.0 ** (pattern_gain_db(angles, spec) / 20.0), 0.0)
