"""Reduced-CDL derivation: spread scaling, truncation, delay rescaling.

The reduction starts from a full cluster table, scales mean angles and
per-cluster spreads so the ray-level angular spreads hit the desired
values, ranks clusters by received power through the actual antenna
setup (field patterns plus AAV), keeps the strongest ones and rescales
the surviving delays so the rms delay spread is met exactly.  Angular
scaling is not re-applied after truncation; the residual deviation is
reported instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import cdl
from .antenna import PanelConfig, PortMap
from .geometry import wrap_deg

__all__ = [
    "ZeroPower",
    "ZeroSpread",
    "DegenerateDelayProfile",
    "SpreadTargets",
    "ProbeContext",
    "ReductionReport",
    "angular_spread",
    "ray_spread",
    "scale_angles",
    "scale_table",
    "truncate_clusters",
    "rescale_delays",
    "build_rcdl",
]

# (target key, mean-angle field, per-cluster spread field) per dimension
_DIMENSIONS = (
    ("asd", "aod_deg", "c_asd_deg"),
    ("asa", "aoa_deg", "c_asa_deg"),
    ("zsd", "zod_deg", "c_zsd_deg"),
    ("zsa", "zoa_deg", "c_zsa_deg"),
)


class ZeroPower(ValueError):
    """Angular statistics of an all-zero power profile are undefined."""


class ZeroSpread(ValueError):
    """Cannot widen a zero-spread angle set to a nonzero target."""


class DegenerateDelayProfile(ValueError):
    """Delay rescaling needs a nonzero rms delay spread."""


@dataclass(frozen=True)
class SpreadTargets:
    """Desired angular spreads (degrees) and rms delay spread (ns)."""

    asd_deg: float
    asa_deg: float
    zsd_deg: float
    zsa_deg: float
    ds_ns: float

    def __post_init__(self):
        for key in ("asd_deg", "asa_deg", "zsd_deg", "zsa_deg", "ds_ns"):
            if getattr(self, key) <= 0:
                raise ValueError(f"{key} must be positive")

    def angle_deg(self, dim: str) -> float:
        return getattr(self, f"{dim}_deg")


@dataclass(frozen=True)
class ProbeContext:
    """Antenna setting the cluster-power ranking is evaluated under."""

    tx_panel: PanelConfig
    rx_panel: PanelConfig
    wavelength_m: float
    tx_map: PortMap | None = None
    rx_map: PortMap | None = None
    pol_model: int = 1


@dataclass(frozen=True)
class ReductionReport:
    """Bookkeeping of one reduction run (indices are 0-based)."""

    kept: tuple
    removed: tuple
    ds_before_ns: float
    ds_after_ns: float
    spreads_before_deg: dict
    spreads_after_deg: dict

    def __post_init__(self):
        object.__setattr__(self, "kept", tuple(int(i) for i in self.kept))
        object.__setattr__(self, "removed", tuple(int(i) for i in self.removed))
        n = len(self.kept) + len(self.removed)
        if sorted(self.kept + self.removed) != list(range(n)):
            raise ValueError("kept and removed must partition the cluster set")

    def lines(self):
        yield f"kept clusters ({len(self.kept)}): " + ",".join(
            str(i + 1) for i in self.kept)
        yield f"removed clusters ({len(self.removed)}): " + ",".join(
            str(i + 1) for i in self.removed)
        yield f"rms delay spread: {self.ds_before_ns:.3f} ns -> {self.ds_after_ns:.3f} ns"
        for dim, _, _ in _DIMENSIONS:
            yield (f"{dim} spread: {self.spreads_before_deg[dim]:.4f} deg -> "
                   f"{self.spreads_after_deg[dim]:.4f} deg")


def angular_spread(powers, angles_deg):
    """Power-weighted circular spread and mean angle, both in degrees.

    Exponential-moment form (TR 38.901 Annex A): the spread is
    ``sqrt(-2 ln |sum_k p_k exp(j theta_k)| / sum_k p_k)``.
    """
    p = np.asarray(powers, dtype=float).ravel()
    angles = np.asarray(angles_deg, dtype=float).ravel()
    total = p.sum()
    if total <= 0:
        raise ZeroPower("power profile sums to zero")
    z = (p * np.exp(1j * np.radians(angles))).sum() / total
    r = min(abs(z), 1.0)
    if r == 0.0:
        return 180.0, 0.0
    spread_deg = math.degrees(math.sqrt(-2.0 * math.log(r)))
    # mean angle: linear power-weighted mean of deviations about the
    # circular mean, so scaling about mu leaves mu invariant exactly
    mu_circ = math.degrees(np.angle(z))
    mu_deg = wrap_deg(mu_circ + float(p @ wrap_deg(angles - mu_circ)) / total)
    return spread_deg, mu_deg


def ray_spread(table: cdl.ClusterTable, dim: str):
    """Ray-level (AS, mu) of one angular dimension of a cluster table.

    Rays carry weight ``P_n / M``; coupling permutes rays within the
    cluster only, so the statistic is coupling-independent.
    """
    _, mean_field, c_field = next(d for d in _DIMENSIONS if d[0] == dim)
    angles = (getattr(table, mean_field)[:, None]
              + getattr(table, c_field) * table.ray_offsets[None, :])
    weights = np.repeat(table.powers / table.n_rays, table.n_rays)
    return angular_spread(weights, angles)


def scale_angles(angles_deg, as_deg: float, mu_deg: float, as_desired_deg: float):
    """Scale angles about the mean so the spread ratio becomes desired/actual.

    ``wrap(ratio * wrap(phi - mu) + mu)`` with wrap into [-180, 180).
    """
    if as_deg == 0.0:
        if as_desired_deg != 0.0:
            raise ZeroSpread("cannot scale a zero-spread angle set to a "
                             f"target of {as_desired_deg} deg")
        return wrap_deg(np.asarray(angles_deg, dtype=float))
    ratio = as_desired_deg / as_deg
    angles = np.asarray(angles_deg, dtype=float)
    return wrap_deg(ratio * wrap_deg(angles - mu_deg) + mu_deg)


def scale_table(table: cdl.ClusterTable, targets: SpreadTargets) -> cdl.ClusterTable:
    """Scale all four angular dimensions of a table to the target spreads.

    Mean angles move per :func:`scale_angles`; the per-cluster spreads
    pick up the same ratio, so re-derived ray angles land on target.
    """
    kw = {}
    for dim, mean_field, c_field in _DIMENSIONS:
        spread, mu = ray_spread(table, dim)
        target = targets.angle_deg(dim)
        kw[mean_field] = scale_angles(getattr(table, mean_field), spread, mu, target)
        kw[c_field] = getattr(table, c_field) * (target / spread)
    return replace(table, **kw)


def _spread_dict(table: cdl.ClusterTable) -> dict:
    return {dim: ray_spread(table, dim)[0] for dim, _, _ in _DIMENSIONS}


def truncate_clusters(table: cdl.ClusterTable, n_keep: int,
                      context: ProbeContext,
                      fixed: cdl.FixedRayData | None = None,
                      coupling: str = "fixed", seed: int = 0):
    """Keep the ``n_keep`` clusters strongest through the antenna setup.

    Ranking uses the expected per-cluster received power including field
    patterns and the AAV.  Powers of the survivors are renormalized;
    delays are left untouched (rescale separately).
    """
    if n_keep > table.n_clusters:
        raise ValueError(f"cannot keep {n_keep} of {table.n_clusters} clusters")
    rays = cdl.ray_angles(table, coupling=coupling, seed=seed, fixed=fixed)
    probe = cdl.cluster_power_probe(
        rays, context.tx_panel, context.rx_panel, context.wavelength_m,
        tx_map=context.tx_map, rx_map=context.rx_map,
        pol_model=context.pol_model)
    order = np.argsort(-probe, kind="stable")
    kept = np.sort(order[:n_keep])
    removed = np.sort(order[n_keep:])
    out = table.subset(kept)
    report = ReductionReport(
        kept=tuple(kept), removed=tuple(removed),
        ds_before_ns=table.rms_delay_spread_s * 1e9,
        ds_after_ns=out.rms_delay_spread_s * 1e9,
        spreads_before_deg=_spread_dict(table),
        spreads_after_deg=_spread_dict(out))
    return out, report


def rescale_delays(delays_s, powers, ds_desired_s: float) -> np.ndarray:
    """Scale delays so the power-weighted rms delay spread is exact."""
    delays = np.asarray(delays_s, dtype=float)
    p = np.asarray(powers, dtype=float)
    p = p / p.sum()
    m1 = p @ delays
    var = p @ delays**2 - m1 * m1
    if var <= 0.0:
        raise DegenerateDelayProfile("rms delay spread of the profile is zero")
    return delays * (ds_desired_s / math.sqrt(var))


def build_rcdl(base: cdl.ClusterTable, targets: SpreadTargets,
               fixed: cdl.FixedRayData, context: ProbeContext,
               n_keep: int = 12, name: str | None = None):
    """Full reduction pipeline; deterministic given its inputs.

    Returns the reduced table, the fixed ray data restricted to the kept
    clusters, and the report.  Angular spreads are hit by construction
    before truncation; the post-truncation deviation stays in the report.
    """
    scaled = scale_table(base, targets)
    truncated, report = truncate_clusters(scaled, n_keep, context,
                                          fixed=fixed, coupling="fixed")
    delays = rescale_delays(truncated.delays_s, truncated.powers,
                            targets.ds_ns * 1e-9)
    out = replace(truncated, delays_s=delays,
                  name=name if name is not None else f"r{base.name}")
    report = replace(report, ds_after_ns=out.rms_delay_spread_s * 1e9,
                     spreads_after_deg=_spread_dict(out))
    return out, fixed.subset(report.kept), report
