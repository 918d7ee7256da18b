"""Channel assembly: per-path complex amplitudes, coherent power, path filters.

For a path of length ``d`` with delay ``tau``::

    A_n = (lambda / 4 pi) / d * C_R(aoa)^T T_n C_T(aod) * 10^(-L_diff / 20) * exp(-j 2 pi f tau)

where the pattern vectors carry sqrt(gain) times the polarization unit vector.
Received power is ``P_tx + 20 log10 |sum A_n|`` in dBm.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from . import em
from .antenna import AntennaSpec, pattern_amplitude, world_to_antenna_frame
from .tracer import PathRecord

NO_COVERAGE = -math.inf
PATH_KINDS = ("los", "reflection", "diffraction")


def watts_to_dbm(p_w: float) -> float:
    return 10.0 * math.log10(p_w * 1e3)


@dataclass(frozen=True, eq=False)
class ChannelResult:
    rx_index: int
    paths: tuple  # of (PathRecord, complex amplitude)
    tx_power_dbm: float
    tx_name: str = ""

    @property
    def h(self) -> complex:
        return complex(sum(a for _, a in self.paths)) if self.paths else 0j

    @property
    def power_dbm(self) -> float:
        return received_power(self.paths, self.tx_power_dbm)

    @property
    def strongest(self) -> Optional[PathRecord]:
        if not self.paths:
            return None
        return max(self.paths, key=lambda pa: (abs(pa[1]), -pa[0].tau))[0]

    @property
    def strongest_kind(self) -> str:
        p = self.strongest
        return "" if p is None else p.label


def amplitude_for_path(path: PathRecord, tx: AntennaSpec, rx: AntennaSpec, f_c: float) -> complex:
    if not path.total_length > 0:
        raise ValueError("path length must be positive")
    g_t = pattern_amplitude(world_to_antenna_frame(path.departure, tx), tx)
    g_r = pattern_amplitude(world_to_antenna_frame(-np.asarray(path.arrival), rx), rx)
    pol = complex(rx.pol_vector @ path.polarimetric @ tx.pol_vector)
    diff = 10.0 ** (-path.diffraction_loss_db / 20.0)
    return g_r * g_t * pol * diff * em.free_space_amplitude(path.total_length, f_c)


def received_power(paths_and_amplitudes, tx_power_dbm: float) -> float:
    """Coherent sum; ``-inf`` when there are no paths (or exact cancellation)."""
    amps = [a for _, a in paths_and_amplitudes]
    if not amps:
        return NO_COVERAGE
    mag = abs(complex(sum(amps)))
    if mag == 0.0:
        return NO_COVERAGE
    return tx_power_dbm + 20.0 * math.log10(mag)


def channel_result(rx_index: int, paths: Sequence[PathRecord], tx: AntennaSpec, rx: AntennaSpec,
                   f_c: float, tx_power_dbm: float) -> ChannelResult:
    pairs = tuple((p, amplitude_for_path(p, tx, rx, f_c)) for p in paths)
    return ChannelResult(rx_index, pairs, tx_power_dbm)


# -- path filters -------------------------------------------------------------------


class FilterError(ValueError):
    """A path filter rule that cannot be applied to the scene."""


@dataclass(frozen=True)
class PathRule:
    """Removes a path when it matches every field that is set.

    ``kind`` is "los", "reflection" or "diffraction". The interaction-level fields
    (kind, mesh_id, edge_id, region) must all hold for one and the same interaction.
    """

    kind: Optional[str] = None
    mesh_id: Optional[int] = None
    edge_id: Optional[int] = None
    region: Optional[tuple] = None  # ((xmin, ymin, zmin), (xmax, ymax, zmax))
    path_id: Optional[str] = None

    def __post_init__(self):
        if self.kind is not None and self.kind not in PATH_KINDS:
            raise FilterError(f"unknown path kind {self.kind!r}")
        if all(getattr(self, f) is None for f in ("kind", "mesh_id", "edge_id", "region", "path_id")):
            raise FilterError("empty filter rule")
        if self.region is not None:
            lo, hi = (tuple(float(c) for c in r) for r in self.region)
            if len(lo) != 3 or len(hi) != 3 or any(a > b for a, b in zip(lo, hi)):
                raise FilterError("region must be ((xmin, ymin, zmin), (xmax, ymax, zmax)) with min <= max")
            object.__setattr__(self, "region", (lo, hi))
        if self.kind == "los" and (self.mesh_id is not None or self.edge_id is not None or self.region is not None):
            raise FilterError("a los rule cannot constrain interactions")

    def _interaction_matches(self, it) -> bool:
        if self.kind is not None and it.kind != self.kind:
            return False
        if self.mesh_id is not None and it.mesh_id != self.mesh_id:
            return False
        if self.edge_id is not None and not (it.kind == "diffraction" and it.primitive_id == self.edge_id):
            return False
        if self.region is not None:
            lo, hi = self.region
            if not all(a <= p <= b for a, p, b in zip(lo, it.point, hi)):
                return False
        return True

    def matches(self, path: PathRecord) -> bool:
        if self.path_id is not None and path.path_id != self.path_id:
            return False
        if self.kind == "los":
            return not path.interactions
        if self.kind is None and self.mesh_id is None and self.edge_id is None and self.region is None:
            return True
        return any(self._interaction_matches(it) for it in path.interactions)


@dataclass(frozen=True)
class PathFilterSpec:
    rules: tuple = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "rules", tuple(self.rules))

    def matches(self, path: PathRecord) -> bool:
        return any(r.matches(path) for r in self.rules)

    def validate(self, n_meshes: int, n_edges: int) -> None:
        for r in self.rules:
            if r.mesh_id is not None and not 0 <= r.mesh_id < n_meshes:
                raise FilterError(f"filter references unknown mesh id {r.mesh_id}")
            if r.edge_id is not None and not 0 <= r.edge_id < n_edges:
                raise FilterError(f"filter references unknown edge id {r.edge_id}")


def apply_filter(result: ChannelResult, spec: PathFilterSpec, n_meshes: Optional[int] = None,
                 n_edges: Optional[int] = None) -> ChannelResult:
    """New result without the paths any rule matches. The input is left untouched."""
    if n_meshes is not None or n_edges is not None:
        spec.validate(n_meshes if n_meshes is not None else 1 << 62, n_edges if n_edges is not None else 1 << 62)
    kept = tuple(pa for pa in result.paths if not spec.matches(pa[0]))
    return replace(result, paths=kept)


def combine_transmitters(results: Sequence[ChannelResult]) -> ChannelResult:
    """Serving-sector proxy: the co-sited transmitter with the highest power wins.

    Ties go to the first in the list, so the rule is order independent in value.
    """
    if not results:
        raise ValueError("no transmitter results to combine")
    rx = {r.rx_index for r in results}
    if len(rx) != 1:
        raise ValueError("results must belong to the same receiver")
    best = results[0]
    for r in results[1:]:
        if r.power_dbm > best.power_dbm:
            best = r
    return best


def normalize_trace(powers) -> np.ndarray:
    """Subtract the trace maximum (dB). ``-inf`` samples stay ``-inf``."""
    p = np.asarray(powers, dtype=float)
    if p.size == 0 or not np.any(np.isfinite(p)):
        raise ValueError("trace needs at least one finite sample")
    return p - np.max(p[np.isfinite(p)])


# -- orchestration ---------------------------------------------------------------------


@dataclass(frozen=True)
class Transmitter:
    name: str
    antenna: AntennaSpec
    power_w: float

    def __post_init__(self):
        if not self.power_w > 0:
            raise ValueError(f"transmitter {self.name!r}: power must be positive")

    @property
    def power_dbm(self) -> float:
        return watts_to_dbm(self.power_w)


def simulate(tracer, transmitters: Sequence[Transmitter], rx_antenna: AntennaSpec, rx_positions, cfg,
             filters: Optional[PathFilterSpec] = None) -> list[ChannelResult]:
    """Trace every transmitter, apply filters, keep the serving transmitter per receiver."""
    rx_positions = np.atleast_2d(np.asarray(rx_positions, dtype=float))
    if not transmitters:
        raise ValueError("need at least one transmitter")
    if filters is not None:
        filters.validate(len(tracer.scene.meshes), len(tracer.scene.edges))
    per_tx = []
    for tx in transmitters:
        paths = tracer.trace(tx.antenna.pos, rx_positions, cfg) if len(rx_positions) else []
        results = []
        for k, ps in enumerate(paths):
            r = channel_result(k, ps, tx.antenna, rx_antenna.moved(rx_positions[k]), cfg.frequency_hz,
                               tx.power_dbm)
            if filters is not None and filters.rules:
                r = apply_filter(r, filters)
            results.append(replace(r, tx_name=tx.name))
        per_tx.append(results)
    return [combine_transmitters([res[k] for res in per_tx]) for k in range(len(rx_positions))]
