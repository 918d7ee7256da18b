"""Interaction coefficients: free space, Fresnel reflection, polarimetric bases, knife edge.

Time convention is exp(+j w t), so propagation phase is exp(-j 2 pi f tau) and lossy
permittivities have a negative imaginary part.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq
from scipy.special import fresnel

from .geom import Material, MaterialKind

C0 = 299_792_458.0
EPS0 = 8.8541878128e-12


def wavelength(f_c: float) -> float:
    return C0 / f_c


def complex_permittivity(material: Material, f_c: float) -> complex:
    """eps_r - j sigma / (2 pi f eps0)."""
    if f_c <= 0:
        raise ValueError("frequency must be positive")
    return complex(material.eps_r, -material.sigma / (2.0 * math.pi * f_c * EPS0))


def fresnel_coefficients(theta_i: float, eps: complex) -> tuple[complex, complex]:
    """Amplitude reflection coefficients (r_TE, r_TM) of a smooth half-space.

    ``theta_i`` is measured from the surface normal. r_TM uses the convention in which
    both coefficients tend to -1 at grazing incidence and r_TM = -r_TE at normal incidence.
    """
    if not (0.0 <= theta_i < math.pi / 2):
        raise ValueError(f"incidence angle must be in [0, pi/2), got {theta_i}")
    c = math.cos(theta_i)
    s2 = math.sin(theta_i) ** 2
    root = np.sqrt(complex(eps) - s2)
    r_te = (c - root) / (c + root)
    r_tm = (eps * c - root) / (eps * c + root)
    return complex(r_te), complex(r_tm)


def ray_basis(k) -> tuple[np.ndarray, np.ndarray]:
    """Ray-fixed (vertical, horizontal) unit vectors for propagation direction ``k``.

    h is horizontal and perpendicular to k, v = k x h points upward. For vertical rays the
    east axis stands in for h.
    """
    k = np.asarray(k, dtype=float)
    h = np.array([-k[1], k[0], 0.0])  # z x k
    n = np.linalg.norm(h)
    if n < 1e-12:
        h = np.array([1.0, 0.0, 0.0])
    else:
        h /= n
    v = np.cross(k, h)
    return v, h


def reflect(d, normal) -> np.ndarray:
    d = np.asarray(d, dtype=float)
    n = np.asarray(normal, dtype=float)
    return d - 2.0 * np.dot(d, n) * n


def reflection_matrix(incident_dir, normal, material: Material, f_c: float) -> np.ndarray:
    """2x2 complex reflection matrix mapping the incident (v, h) field to the reflected (v, h) field."""
    if material.kind is MaterialKind.BLOCKER:
        raise ValueError("blocker materials absorb; no reflection matrix")
    ki = np.asarray(incident_dir, dtype=float)
    n = np.asarray(normal, dtype=float)
    cos_i = -float(np.dot(ki, n))
    if cos_i <= 0:
        raise ValueError("incident direction must point into the surface (dot(dir, normal) < 0)")
    kr = reflect(ki, n)
    s = np.cross(ki, n)
    sn = np.linalg.norm(s)
    if sn < 1e-12:
        # normal incidence: TE/TM split is arbitrary, any s perpendicular to k works
        s = ray_basis(ki)[1]
    else:
        s = s / sn
    p_i = np.cross(s, ki)
    p_r = np.cross(s, kr)
    if material.kind is MaterialKind.PERFECT_CONDUCTOR:
        r_te, r_tm = -1.0 + 0j, 1.0 + 0j
    else:
        theta = math.acos(min(1.0, cos_i))
        r_te, r_tm = fresnel_coefficients(theta, complex_permittivity(material, f_c))
    # 3x3 dyadic, then projected onto the ray-fixed bases
    dyad = r_te * np.outer(s, s) + r_tm * np.outer(p_r, p_i)
    vi, hi = ray_basis(ki)
    vr, hr = ray_basis(kr)
    bi = np.column_stack([vi, hi])
    br = np.column_stack([vr, hr])
    return br.T @ dyad @ bi


@lru_cache(maxsize=None)
def _knife_edge_onset() -> float:
    # first crossing |F(v)| = 1 to the right of the lit-region ripple maximum
    return brentq(lambda v: _fresnel_factor(v) - 1.0, -1.2, 0.0, xtol=1e-14)


def _fresnel_factor(v) -> np.ndarray:
    s, c = fresnel(v)
    return np.sqrt((0.5 - c) ** 2 + (0.5 - s) ** 2) / math.sqrt(2.0)


def knife_edge_loss(v) -> np.ndarray | float:
    """Single knife-edge diffraction loss in dB (>= 0, monotone in v).

    Exact Fresnel-integral attenuation |F(v)| for v above the point where it first
    reaches unity; the lit-region ripple below that point is flattened to 0 dB.
    """
    v = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(v)):
        raise ValueError("Fresnel-Kirchhoff parameter must be finite")
    loss = -20.0 * np.log10(_fresnel_factor(v))
    loss = np.where(v <= _knife_edge_onset(), 0.0, np.maximum(loss, 0.0))
    return float(loss) if loss.ndim == 0 else loss


def fresnel_kirchhoff_v(excess_path: float, f_c: float, obstructed: bool = True) -> float:
    """v from the excess path length over the direct ray: |v| = 2 sqrt(excess / lambda)."""
    v = 2.0 * math.sqrt(max(excess_path, 0.0) / wavelength(f_c))
    return v if obstructed else -v


def free_space_amplitude(path_length: float, f_c: float) -> complex:
    """(lambda / 4 pi) / d with propagation phase exp(-j 2 pi f tau)."""
    if not (path_length > 0):
        raise ValueError("path length must be positive")
    if f_c <= 0:
        raise ValueError("frequency must be positive")
    tau = path_length / C0
    mag = C0 / (4.0 * math.pi * f_c) / path_length
    return mag * complex(math.cos(2 * math.pi * f_c * tau), -math.sin(2 * math.pi * f_c * tau))
