"""Coordinate and field-pattern transforms between global and local frames.

A panel is oriented in the global coordinate system (GCS) by the angles
``alpha`` (bearing, about z), ``beta`` (downtilt, about the new y) and
``gamma`` (slant, about the new x), composed as ``R = Rz(a) Ry(b) Rx(g)``
per TR 38.901 section 7.1.  Polarized elements add a further rotation
``zeta`` about the element x axis, giving the double-primed frame in
which analytic element patterns are defined.

All public functions take angles in radians.  Degrees appear only at
data-file and config boundaries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "PoleDegeneracy",
    "Orientation",
    "SphericalDirection",
    "wrap_rad",
    "wrap_deg",
    "composite_rotation",
    "unit_direction",
    "spherical_from_vector",
    "gcs_to_lcs_direction",
    "field_displacement_angle",
    "transform_field_to_gcs",
]

POLE_EPS_RAD = 1e-9


class PoleDegeneracy(ValueError):
    """Azimuthal field unit vectors are undefined at the zenith poles."""


def wrap_rad(x):
    """Wrap angles to the interval [-pi, pi)."""
    return (np.asarray(x) + np.pi) % (2.0 * np.pi) - np.pi


def wrap_deg(x):
    """Wrap angles to the interval [-180, 180) degrees.

    The result is congruent to ``x`` modulo 360.
    """
    return (np.asarray(x) + 180.0) % 360.0 - 180.0


@dataclass(frozen=True)
class Orientation:
    """Panel orientation in radians: bearing, downtilt, slant."""

    alpha: float = 0.0
    beta: float = 0.0
    gamma: float = 0.0

    @classmethod
    def from_degrees(cls, alpha: float, beta: float, gamma: float) -> "Orientation":
        return cls(math.radians(alpha), math.radians(beta), math.radians(gamma))


@dataclass(frozen=True)
class SphericalDirection:
    """Propagation direction: zenith angle ``theta`` and azimuth ``phi`` (rad).

    ``theta`` must lie in [0, pi]; ``phi`` is wrapped to [-pi, pi).
    """

    theta: float
    phi: float

    def __post_init__(self):
        th = float(self.theta)
        if not (-1e-12 <= th <= np.pi + 1e-12):
            raise ValueError(f"zenith angle {th} outside [0, pi]")
        object.__setattr__(self, "theta", min(max(th, 0.0), math.pi))
        object.__setattr__(self, "phi", float(wrap_rad(self.phi)))

    @classmethod
    def from_degrees(cls, theta: float, phi: float) -> "SphericalDirection":
        return cls(math.radians(theta), math.radians(phi))


def composite_rotation(orientation: Orientation, extra_slant: float = 0.0) -> np.ndarray:
    """Rotation from the local frame to the GCS: ``Rz(a) Ry(b) Rx(g + zeta)``.

    ``extra_slant`` is the element polarization slant ``zeta``; with the
    default 0 the matrix maps the single-primed panel frame, with a
    nonzero slant the double-primed element frame.
    """
    a, b, g = orientation.alpha, orientation.beta, orientation.gamma + extra_slant
    rz = np.array([[math.cos(a), -math.sin(a), 0.0],
                   [math.sin(a), math.cos(a), 0.0],
                   [0.0, 0.0, 1.0]])
    ry = np.array([[math.cos(b), 0.0, math.sin(b)],
                   [0.0, 1.0, 0.0],
                   [-math.sin(b), 0.0, math.cos(b)]])
    rx = np.array([[1.0, 0.0, 0.0],
                   [0.0, math.cos(g), -math.sin(g)],
                   [0.0, math.sin(g), math.cos(g)]])
    return rz @ ry @ rx


def unit_direction(d: SphericalDirection) -> np.ndarray:
    """Cartesian unit vector of a spherical direction."""
    st, ct = math.sin(d.theta), math.cos(d.theta)
    return np.array([st * math.cos(d.phi), st * math.sin(d.phi), ct])


def spherical_from_vector(v) -> SphericalDirection:
    """Inverse of :func:`unit_direction` (input need not be normalized)."""
    v = np.asarray(v, dtype=float)
    r = np.linalg.norm(v)
    if r == 0.0:
        raise ValueError("zero vector has no direction")
    return SphericalDirection(math.acos(np.clip(v[2] / r, -1.0, 1.0)),
                              math.atan2(v[1], v[0]))


def _lcs_angles(theta, phi, alpha, beta, gamma):
    """Closed-form local zenith/azimuth of a GCS direction (array-capable).

    Implements the TR 38.901 7.1-7/7.1-8 expressions for the frame
    rotated by (alpha, beta, gamma); pass ``gamma + zeta`` to land in the
    double-primed element frame.
    """
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    cb, sb = math.cos(beta), math.sin(beta)
    cg, sg = math.cos(gamma), math.sin(gamma)
    dphi = phi - alpha
    ct, st = np.cos(theta), np.sin(theta)
    cosl = cb * cg * ct + (sb * cg * np.cos(dphi) - sg * np.sin(dphi)) * st
    theta_l = np.arccos(np.clip(cosl, -1.0, 1.0))
    re = cb * st * np.cos(dphi) - sb * ct
    im = cb * sg * ct + (sb * sg * np.cos(dphi) + cg * np.sin(dphi)) * st
    phi_l = np.arctan2(im, re)
    return theta_l, phi_l


def _psi(theta, phi, alpha, beta, gamma):
    """Field displacement angle psi between GCS and local spherical bases.

    Closed form per TR 38.901 7.1-15 (array-capable); ``gamma`` already
    contains any element slant.
    """
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    cb, sb = math.cos(beta), math.sin(beta)
    cg, sg = math.cos(gamma), math.sin(gamma)
    dphi = phi - alpha
    ct, st = np.cos(theta), np.sin(theta)
    re = sg * ct * np.sin(dphi) + cg * (cb * st - sb * ct * np.cos(dphi))
    im = sg * np.cos(dphi) + sb * cg * np.sin(dphi)
    return np.arctan2(im, re)


def gcs_to_lcs_direction(d: SphericalDirection, orientation: Orientation,
                         zeta: float = 0.0) -> SphericalDirection:
    """Express a GCS propagation direction in a panel/element local frame.

    With ``zeta`` = 0 the result is in the single-primed panel frame;
    with the element slant it is in the double-primed frame used for
    pattern evaluation.
    """
    th, ph = _lcs_angles(d.theta, d.phi, orientation.alpha, orientation.beta,
                         orientation.gamma + zeta)
    return SphericalDirection(float(th), float(ph))


def field_displacement_angle(orientation: Orientation, zeta: float,
                             d: SphericalDirection) -> float:
    """Angle ``psi`` rotating a local field vector into the GCS basis.

    Raises
    ------
    PoleDegeneracy
        If the GCS direction is within ``POLE_EPS_RAD`` of a zenith pole,
        where the azimuthal unit vector is undefined.
    """
    if min(d.theta, math.pi - d.theta) < POLE_EPS_RAD:
        raise PoleDegeneracy(f"direction theta={d.theta} too close to a pole")
    return float(_psi(d.theta, d.phi, orientation.alpha, orientation.beta,
                      orientation.gamma + zeta))


def transform_field_to_gcs(f_local, orientation: Orientation, zeta: float,
                           d: SphericalDirection, pol_model: int = 1) -> np.ndarray:
    """Rotate a local (theta, phi) field vector into the GCS basis.

    Parameters
    ----------
    f_local : array-like, shape (2,)
        Field components in the local spherical basis: the double-primed
        frame for polarization Model-1 or the single-primed frame for
        Model-2 (whose slant-dependent amplitude split the caller applies).
    pol_model : int
        1 rotates by ``psi(gamma + zeta)``, 2 by ``psi(gamma)``.
    """
    if pol_model not in (1, 2):
        raise ValueError(f"unknown polarization model {pol_model}")
    slant = zeta if pol_model == 1 else 0.0
    psi = field_displacement_angle(orientation, slant, d)
    c, s = math.cos(psi), math.sin(psi)
    f = np.asarray(f_local, dtype=complex)
    if f.shape != (2,):
        raise ValueError("field vector must have shape (2,)")
    return np.array([c * f[0] - s * f[1], s * f[0] + c * f[1]])
