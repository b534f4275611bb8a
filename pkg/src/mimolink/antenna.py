"""Antenna panels, element patterns and antenna array virtualization.

A panel is a uniform rectangular array in its local y-z plane with
``n_cols`` columns (horizontal, spacing ``d_y``) and ``n_rows`` rows
(vertical, spacing ``d_z``), each position carrying one element per
polarization slant.  Elements and ports are numbered bottom-to-top,
column-by-column, with the co-polarized block before the
cross-polarized block.

The antenna array virtualization (AAV) maps elements onto logical ports
through per-port weight vectors.  The identity map (one element per
port) and broadside vertical subarrays (equal weights) are built in.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import Orientation, SphericalDirection
from .resources import data_text

__all__ = [
    "MissingPatternData",
    "ShapeMismatch",
    "Isotropic",
    "Sector3gpp",
    "PanelConfig",
    "PortMap",
    "pattern_gain",
    "apply_aav",
]


class MissingPatternData(RuntimeError):
    """Sector pattern parameters could not be loaded."""


class ShapeMismatch(ValueError):
    """Array axis length does not match the port map."""


@dataclass(frozen=True)
class Isotropic:
    """Unit-gain element in every direction."""


@dataclass(frozen=True)
class Sector3gpp:
    """Parabolic-in-dB sector element (TR 38.901 Table 7.3-1 parameters)."""

    max_gain_dbi: float = 8.0
    theta_3db_deg: float = 65.0
    phi_3db_deg: float = 65.0
    sla_v_db: float = 30.0
    a_max_db: float = 30.0

    @classmethod
    def from_data(cls, name: str = "sector_pattern.json") -> "Sector3gpp":
        try:
            raw = json.loads(data_text(name))
            return cls(max_gain_dbi=float(raw["max_gain_dbi"]),
                       theta_3db_deg=float(raw["theta_3db_deg"]),
                       phi_3db_deg=float(raw["phi_3db_deg"]),
                       sla_v_db=float(raw["sla_v_db"]),
                       a_max_db=float(raw["a_max_db"]))
        except (OSError, KeyError, ValueError) as exc:
            raise MissingPatternData(f"cannot load sector pattern {name!r}: {exc}") from exc


def pattern_gain(kind, theta, phi):
    """Linear power gain of an element pattern in its own frame.

    Parameters
    ----------
    kind : Isotropic or Sector3gpp
    theta, phi : float or ndarray
        Zenith and azimuth (radians) in the element (double-primed) frame.
    """
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    if isinstance(kind, Isotropic):
        return np.ones(np.broadcast(theta, phi).shape)
    if isinstance(kind, Sector3gpp):
        th_deg = np.degrees(theta)
        ph_deg = np.degrees((phi + np.pi) % (2 * np.pi) - np.pi)
        a_v = -np.minimum(12.0 * ((th_deg - 90.0) / kind.theta_3db_deg) ** 2,
                          kind.sla_v_db)
        a_h = -np.minimum(12.0 * (ph_deg / kind.phi_3db_deg) ** 2, kind.a_max_db)
        a_db = kind.max_gain_dbi - np.minimum(-(a_v + a_h), kind.a_max_db)
        return 10.0 ** (a_db / 10.0)
    raise TypeError(f"unknown pattern kind {type(kind).__name__}")


@dataclass(frozen=True)
class PanelConfig:
    """Uniform rectangular dual- or single-polarized panel.

    Spacings are in wavelengths.  ``pol_slants_deg`` lists the slant
    angle zeta of each polarization, e.g. ``(45.0, -45.0)``.
    """

    n_cols: int
    n_rows: int
    d_y: float = 0.5
    d_z: float = 0.5
    pol_slants_deg: tuple = (0.0,)
    orientation: Orientation = field(default_factory=Orientation)
    pattern: object = field(default_factory=Isotropic)

    def __post_init__(self):
        if self.n_cols < 1 or self.n_rows < 1:
            raise ValueError("panel needs at least one column and one row")
        if len(self.pol_slants_deg) not in (1, 2):
            raise ValueError("one or two polarization slants supported")

    @property
    def n_pol(self) -> int:
        return len(self.pol_slants_deg)

    @property
    def positions(self) -> int:
        return self.n_cols * self.n_rows

    @property
    def n_elements(self) -> int:
        return self.n_pol * self.positions

    def element_indices(self, e):
        """Map element index -> (pol, col, row)."""
        e = np.asarray(e)
        pol, rest = np.divmod(e, self.positions)
        col, row = np.divmod(rest, self.n_rows)
        return pol, col, row

    def element_position(self, e):
        """Element location in the panel frame, wavelengths, shape (..., 3).

        The array is centered on the panel origin so direct and
        virtualized maps share the phase reference.
        """
        _, col, row = self.element_indices(e)
        y_c = (self.n_cols - 1) / 2.0 * self.d_y
        z_c = (self.n_rows - 1) / 2.0 * self.d_z
        pos = np.zeros(np.shape(col) + (3,))
        pos[..., 1] = col * self.d_y - y_c
        pos[..., 2] = row * self.d_z - z_c
        return pos

    def element_slant(self, e):
        """Polarization slant zeta of each element, radians."""
        pol, _, _ = self.element_indices(e)
        slants = np.radians(np.asarray(self.pol_slants_deg, dtype=float))
        return slants[pol]


@dataclass(frozen=True)
class PortMap:
    """Per-port element weights for antenna array virtualization.

    ``weights`` has shape (n_ports, n_elements); each row must have unit
    norm and touch elements of a single polarization.
    """

    weights: np.ndarray
    pol_of_port: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=complex)
        norms = np.linalg.norm(w, axis=1)
        if not np.allclose(norms, 1.0, atol=1e-9):
            raise ValueError("port weight vectors must have unit norm")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "pol_of_port", np.asarray(self.pol_of_port, dtype=int))

    @property
    def n_ports(self) -> int:
        return self.weights.shape[0]

    @property
    def n_elements(self) -> int:
        return self.weights.shape[1]

    @classmethod
    def direct(cls, panel: PanelConfig) -> "PortMap":
        """One port per element (the Table-I style direct mapping)."""
        n = panel.n_elements
        pol, _, _ = panel.element_indices(np.arange(n))
        return cls(np.eye(n, dtype=complex), pol)

    @classmethod
    def vertical_subarrays(cls, panel: PanelConfig, rows_per_port: int) -> "PortMap":
        """Broadside-steered vertical subarrays with equal real weights."""
        if panel.n_rows % rows_per_port:
            raise ValueError("rows_per_port must divide the panel row count")
        groups = panel.n_rows // rows_per_port
        n_ports = panel.n_pol * panel.n_cols * groups
        w = np.zeros((n_ports, panel.n_elements), dtype=complex)
        pol_of_port = np.zeros(n_ports, dtype=int)
        amp = 1.0 / math.sqrt(rows_per_port)
        port = 0
        for pol in range(panel.n_pol):
            for col in range(panel.n_cols):
                for g in range(groups):
                    rows = np.arange(g * rows_per_port, (g + 1) * rows_per_port)
                    elems = pol * panel.positions + col * panel.n_rows + rows
                    w[port, elems] = amp
                    pol_of_port[port] = pol
                    port += 1
        return cls(w, pol_of_port)


def apply_aav(h, port_map: PortMap, axis: int):
    """Combine per-element channel coefficients into per-port ones.

    ``h`` is any complex array whose ``axis`` runs over elements; the
    result replaces that axis with ports, each port being the weighted
    sum of its subarray elements.
    """
    h = np.asarray(h)
    if h.shape[axis] != port_map.n_elements:
        raise ShapeMismatch(
            f"axis {axis} has length {h.shape[axis]}, "
            f"port map expects {port_map.n_elements}")
    moved = np.moveaxis(h, axis, -1)
    out = moved @ port_map.weights.T
    return np.moveaxis(out, -1, axis)
