"""Clustered delay line channel generation per TR 38.901 section 7.7.1.

A cluster table (delays, powers, mean departure/arrival angles and
per-cluster ray spreads) expands into per-ray angles via the fixed
offset grid, with departure and arrival rays coupled either randomly or
through shipped coupling tables.  The per-element coefficient combines
slanted field patterns at both ends, a random or fixed cross-polarizing
phase matrix, array phase shifts evaluated in the panel frame, and a
Doppler phasor from the receiver velocity.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

import numpy as np

from .antenna import PanelConfig, PortMap, apply_aav, pattern_gain
from .channel import ChannelTensor
from .geometry import _lcs_angles, _psi, composite_rotation, wrap_deg, wrap_rad
from .resources import data_text
from .seeding import seed_stream

__all__ = [
    "MissingFixedData",
    "ClusterTable",
    "RaySet",
    "FixedRayData",
    "MotionConfig",
    "load_cluster_table",
    "load_fixed_ray_data",
    "ray_angles",
    "polarization_matrix",
    "cdl_coefficient",
    "generate_cdl_channel",
    "cluster_power_probe",
]


class MissingFixedData(RuntimeError):
    """Fixed coupling/phase tables are required but absent or mismatched."""


@dataclass(frozen=True)
class ClusterTable:
    """Cluster-level CDL description.

    ``powers`` are linear and normalized to unit total.  ``ray_offsets``
    is the unit-spread offset grid (TR 38.901 Table 7.5-3 for 20 rays).
    """

    name: str
    delays_s: np.ndarray
    powers: np.ndarray
    aod_deg: np.ndarray
    aoa_deg: np.ndarray
    zod_deg: np.ndarray
    zoa_deg: np.ndarray
    c_asd_deg: float
    c_asa_deg: float
    c_zsd_deg: float
    c_zsa_deg: float
    xpr_db: float
    ray_offsets: np.ndarray

    def __post_init__(self):
        arrays = {}
        for key in ("delays_s", "powers", "aod_deg", "aoa_deg", "zod_deg", "zoa_deg"):
            arrays[key] = np.asarray(getattr(self, key), dtype=float)
        n = arrays["delays_s"].size
        for key, a in arrays.items():
            if a.shape != (n,):
                raise ValueError(f"{key} must have shape ({n},)")
            object.__setattr__(self, key, a)
        if np.any(arrays["delays_s"] < 0):
            raise ValueError("cluster delays must be non-negative")
        if np.any(arrays["powers"] <= 0):
            raise ValueError("cluster powers must be positive")
        object.__setattr__(self, "powers", arrays["powers"] / arrays["powers"].sum())
        object.__setattr__(self, "ray_offsets",
                           np.asarray(self.ray_offsets, dtype=float))

    @property
    def n_clusters(self) -> int:
        return self.delays_s.size

    @property
    def n_rays(self) -> int:
        return self.ray_offsets.size

    @property
    def rms_delay_spread_s(self) -> float:
        m1 = float(self.powers @ self.delays_s)
        m2 = float(self.powers @ self.delays_s**2)
        return math.sqrt(max(m2 - m1 * m1, 0.0))

    def subset(self, indices) -> "ClusterTable":
        """Keep the given clusters (renormalizes powers)."""
        idx = np.asarray(indices, dtype=int)
        kw = {k: getattr(self, k)[idx]
              for k in ("delays_s", "powers", "aod_deg", "aoa_deg",
                        "zod_deg", "zoa_deg")}
        return replace(self, **kw)

    def to_csv(self, path, delay_unit: str = "ns", extra_header: dict | None = None):
        """Write the table in the documented CSV schema."""
        lines = [f"# name: {self.name}",
                 f"# delay_unit: {delay_unit}",
                 f"# c_asd_deg: {self.c_asd_deg}", f"# c_asa_deg: {self.c_asa_deg}",
                 f"# c_zsd_deg: {self.c_zsd_deg}", f"# c_zsa_deg: {self.c_zsa_deg}",
                 f"# xpr_db: {self.xpr_db}",
                 "# ray_offsets: " + ",".join(repr(float(o)) for o in self.ray_offsets)]
        for key, val in (extra_header or {}).items():
            lines.append(f"# {key}: {val}")
        lines.append("cluster,delay_ns,power_db,aod_deg,aoa_deg,zod_deg,zoa_deg")
        delays_ns = self.delays_s * 1e9 if delay_unit == "ns" else self.delays_s
        powers_db = 10.0 * np.log10(self.powers)
        for i in range(self.n_clusters):
            lines.append(",".join([str(i + 1), repr(float(delays_ns[i])),
                                   repr(float(powers_db[i])),
                                   repr(float(self.aod_deg[i])),
                                   repr(float(self.aoa_deg[i])),
                                   repr(float(self.zod_deg[i])),
                                   repr(float(self.zoa_deg[i]))]))
        with open(path, "w", encoding="utf-8") as f:
            f.write("\n".join(lines) + "\n")


def load_cluster_table(name: str, delay_spread_ns: float | None = None) -> ClusterTable:
    """Load a cluster table CSV (packaged name like ``cdl_c`` or a path).

    Normalized-delay tables require ``delay_spread_ns``; tables already
    in nanoseconds reject it.
    """
    fname = name if name.endswith(".csv") else f"{name}.csv"
    meta, rows = {}, []
    for line in data_text(fname).splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, _, val = line.lstrip("#").partition(":")
            meta[key.strip()] = val.strip()
        elif not line.startswith("cluster,"):
            rows.append([float(x) for x in line.split(",")])
    rows = np.asarray(rows)
    unit = meta.get("delay_unit", "ns")
    delays_ns = rows[:, 1]
    if unit == "normalized":
        if delay_spread_ns is None:
            raise ValueError(f"table {name!r} has normalized delays; "
                             "pass delay_spread_ns")
        delays_ns = delays_ns * delay_spread_ns
    elif delay_spread_ns is not None:
        raise ValueError(f"table {name!r} already has absolute delays")
    return ClusterTable(
        name=meta.get("name", name),
        delays_s=delays_ns * 1e-9,
        powers=10.0 ** (rows[:, 2] / 10.0),
        aod_deg=rows[:, 3], aoa_deg=rows[:, 4],
        zod_deg=rows[:, 5], zoa_deg=rows[:, 6],
        c_asd_deg=float(meta["c_asd_deg"]), c_asa_deg=float(meta["c_asa_deg"]),
        c_zsd_deg=float(meta["c_zsd_deg"]), c_zsa_deg=float(meta["c_zsa_deg"]),
        xpr_db=float(meta["xpr_db"]),
        ray_offsets=np.array([float(x) for x in meta["ray_offsets"].split(",")]))


@dataclass(frozen=True)
class FixedRayData:
    """Frozen ray coupling permutations and polarization phases.

    Arrays are (n_clusters, n_rays) integer permutations for the AoA,
    ZoD and ZoA orderings against the natural AoD order, plus
    (n_clusters, n_rays, 4) phases in radians ordered
    (theta-theta, theta-phi, phi-theta, phi-phi).
    """

    aoa_perm: np.ndarray
    zod_perm: np.ndarray
    zoa_perm: np.ndarray
    phases: np.ndarray

    def __post_init__(self):
        for key in ("aoa_perm", "zod_perm", "zoa_perm"):
            perm = np.asarray(getattr(self, key), dtype=int)
            object.__setattr__(self, key, perm)
            if not np.array_equal(np.sort(perm, axis=1),
                                  np.arange(perm.shape[1])[None, :].repeat(perm.shape[0], 0)):
                raise ValueError(f"{key} rows must be permutations")
        phases = wrap_rad(np.asarray(self.phases, dtype=float))
        object.__setattr__(self, "phases", phases)

    @property
    def n_clusters(self) -> int:
        return self.phases.shape[0]

    def subset(self, indices) -> "FixedRayData":
        idx = np.asarray(indices, dtype=int)
        return FixedRayData(self.aoa_perm[idx], self.zod_perm[idx],
                            self.zoa_perm[idx], self.phases[idx])

    def to_json(self, path):
        out = {"n_rays": int(self.phases.shape[1]), "clusters": []}
        for n in range(self.n_clusters):
            out["clusters"].append({
                "cluster": n + 1,
                "aoa_coupling": self.aoa_perm[n].tolist(),
                "zod_coupling": self.zod_perm[n].tolist(),
                "zoa_coupling": self.zoa_perm[n].tolist(),
                "phases_rad": self.phases[n].tolist()})
        with open(path, "w", encoding="utf-8") as f:
            json.dump(out, f, indent=1)
            f.write("\n")


def load_fixed_ray_data(name: str) -> FixedRayData:
    fname = name if name.endswith(".json") else f"{name}.json"
    try:
        raw = json.loads(data_text(fname))
        clusters = sorted(raw["clusters"], key=lambda c: c["cluster"])
        return FixedRayData(
            aoa_perm=np.array([c["aoa_coupling"] for c in clusters]),
            zod_perm=np.array([c["zod_coupling"] for c in clusters]),
            zoa_perm=np.array([c["zoa_coupling"] for c in clusters]),
            phases=np.array([c["phases_rad"] for c in clusters]))
    except (OSError, KeyError, ValueError) as exc:
        raise MissingFixedData(f"cannot load fixed ray data {name!r}: {exc}") from exc


@dataclass(frozen=True)
class RaySet:
    """Ray-expanded cluster table ready for coefficient generation.

    Angles are radians with shape (n_clusters, n_rays); ``phases`` holds
    the four cross-polarization phases per ray in [-pi, pi).
    """

    powers: np.ndarray
    delays_s: np.ndarray
    aod: np.ndarray
    aoa: np.ndarray
    zod: np.ndarray
    zoa: np.ndarray
    phases: np.ndarray
    xpr_db: float

    def __post_init__(self):
        for key in ("aod", "aoa", "zod", "zoa"):
            a = np.asarray(getattr(self, key), dtype=float)
            if not np.all(np.isfinite(a)):
                raise ValueError(f"{key} contains non-finite angles")
            object.__setattr__(self, key, a)

    @property
    def n_clusters(self) -> int:
        return self.aod.shape[0]

    @property
    def n_rays(self) -> int:
        return self.aod.shape[1]


def _fold_zenith_deg(z):
    """Fold zenith angles into [0, 180] (TR 38.901 7.7.1 note)."""
    z = np.asarray(z, dtype=float) % 360.0
    return np.where(z > 180.0, 360.0 - z, z)


def ray_angles(table: ClusterTable, coupling: str = "random", seed: int = 0,
               fixed: FixedRayData | None = None) -> RaySet:
    """Expand cluster means into coupled per-ray angles with phases.

    ``coupling`` is ``"random"`` (permutations and polarization phases
    drawn from the seeded stream) or ``"fixed"`` (both read from
    ``fixed``; a missing or mismatched table is a hard error).
    """
    off = table.ray_offsets
    aod = table.aod_deg[:, None] + table.c_asd_deg * off[None, :]
    aoa = table.aoa_deg[:, None] + table.c_asa_deg * off[None, :]
    zod = table.zod_deg[:, None] + table.c_zsd_deg * off[None, :]
    zoa = table.zoa_deg[:, None] + table.c_zsa_deg * off[None, :]
    n, m = table.n_clusters, table.n_rays
    if coupling == "random":
        rng = seed_stream(seed, ("cdl-coupling", table.name))
        perms = [np.stack([rng.permutation(m) for _ in range(n)]) for _ in range(3)]
        phase_rng = seed_stream(seed, ("cdl-phases", table.name))
        phases = phase_rng.uniform(-np.pi, np.pi, size=(n, m, 4))
    elif coupling == "fixed":
        if fixed is None:
            raise MissingFixedData("fixed coupling requested but no table supplied")
        if fixed.n_clusters != n or fixed.phases.shape[1] != m:
            raise MissingFixedData(
                f"fixed table covers {fixed.n_clusters} clusters x "
                f"{fixed.phases.shape[1]} rays, table needs {n} x {m}")
        perms = [fixed.aoa_perm, fixed.zod_perm, fixed.zoa_perm]
        phases = fixed.phases
    else:
        raise ValueError(f"unknown coupling mode {coupling!r}")
    rows = np.arange(n)[:, None]
    aoa = aoa[rows, perms[0]]
    zod = zod[rows, perms[1]]
    zoa = zoa[rows, perms[2]]
    return RaySet(powers=table.powers, delays_s=table.delays_s,
                  aod=np.radians(wrap_deg(aod)), aoa=np.radians(wrap_deg(aoa)),
                  zod=np.radians(_fold_zenith_deg(zod)),
                  zoa=np.radians(_fold_zenith_deg(zoa)),
                  phases=phases, xpr_db=table.xpr_db)


def polarization_matrix(phases, xpr_db: float) -> np.ndarray:
    """Cross-polarization phase matrix, shape (..., 2, 2).

    Diagonal entries are unit phasors; off-diagonals are attenuated by
    ``sqrt(1/kappa)`` with ``kappa`` the linear XPR.
    """
    phases = np.asarray(phases, dtype=float)
    inv_amp = math.sqrt(10.0 ** (-xpr_db / 10.0))
    m = np.exp(1j * phases)
    m = m * np.array([1.0, inv_amp, inv_amp, 1.0])
    return m.reshape(phases.shape[:-1] + (2, 2))


@dataclass(frozen=True)
class MotionConfig:
    """Receiver velocity: speed (m/s) and GCS travel direction (degrees)."""

    speed_mps: float = 0.0
    phi_deg: float = 0.0
    theta_deg: float = 90.0

    @property
    def velocity(self) -> np.ndarray:
        th, ph = math.radians(self.theta_deg), math.radians(self.phi_deg)
        return self.speed_mps * np.array([math.sin(th) * math.cos(ph),
                                          math.sin(th) * math.sin(ph),
                                          math.cos(th)])


def _unit_vectors(zenith, azimuth):
    st, ct = np.sin(zenith), np.cos(zenith)
    return np.stack([st * np.cos(azimuth), st * np.sin(azimuth), ct], axis=-1)


def _panel_fields(panel: PanelConfig, zenith, azimuth, pol_model: int):
    """GCS field vectors per polarization, shape (n_pol, ..., 2)."""
    o = panel.orientation
    out = []
    for slant_deg in panel.pol_slants_deg:
        zeta = math.radians(slant_deg)
        if pol_model == 1:
            th2, ph2 = _lcs_angles(zenith, azimuth, o.alpha, o.beta, o.gamma + zeta)
            amp = np.sqrt(pattern_gain(panel.pattern, th2, ph2))
            psi = _psi(zenith, azimuth, o.alpha, o.beta, o.gamma + zeta)
            f = np.stack([amp * np.cos(psi), amp * np.sin(psi)], axis=-1)
        elif pol_model == 2:
            th1, ph1 = _lcs_angles(zenith, azimuth, o.alpha, o.beta, o.gamma)
            amp = np.sqrt(pattern_gain(panel.pattern, th1, ph1))
            psi = _psi(zenith, azimuth, o.alpha, o.beta, o.gamma)
            f_th = amp * math.cos(zeta)
            f_ph = amp * math.sin(zeta)
            f = np.stack([np.cos(psi) * f_th - np.sin(psi) * f_ph,
                          np.sin(psi) * f_th + np.cos(psi) * f_ph], axis=-1)
        else:
            raise ValueError(f"unknown polarization model {pol_model}")
        out.append(f)
    return np.stack(out, axis=0)


def _element_phases(panel: PanelConfig, zenith, azimuth):
    """Array phase factors exp(j 2 pi r_hat' . d'), shape (..., n_positions)."""
    rot = composite_rotation(panel.orientation)
    r_hat = _unit_vectors(zenith, azimuth)
    r_loc = r_hat @ rot            # row vectors: (R^T r_hat)^T
    pos = panel.element_position(np.arange(panel.positions))
    return np.exp(2j * np.pi * (r_loc @ pos.T))


def cdl_coefficient(u: int, s: int, n: int, t: float, rays: RaySet,
                    tx_panel: PanelConfig, rx_panel: PanelConfig,
                    motion: MotionConfig, wavelength_m: float,
                    pol_model: int = 1) -> complex:
    """Scalar per-element cluster coefficient (reference path).

    ``u`` indexes the receive element, ``s`` the transmit element and
    ``n`` the cluster.  The vectorized generator is cross-checked against
    this implementation in the test suite.
    """
    ftx = _panel_fields(tx_panel, rays.zod[n], rays.aod[n], pol_model)
    frx = _panel_fields(rx_panel, rays.zoa[n], rays.aoa[n], pol_model)
    mpol = polarization_matrix(rays.phases[n], rays.xpr_db)
    atx = _element_phases(tx_panel, rays.zod[n], rays.aod[n])
    arx = _element_phases(rx_panel, rays.zoa[n], rays.aoa[n])
    pol_u, _, _ = rx_panel.element_indices(u)
    pol_s, _, _ = tx_panel.element_indices(s)
    pos_u = u % rx_panel.positions
    pos_s = s % tx_panel.positions
    doppler_hz = (_unit_vectors(rays.zoa[n], rays.aoa[n]) @ motion.velocity) / wavelength_m
    total = 0.0 + 0.0j
    for m in range(rays.n_rays):
        g = frx[pol_u, m] @ mpol[m] @ ftx[pol_s, m]
        total += (g * arx[m, pos_u] * atx[m, pos_s]
                  * np.exp(2j * np.pi * doppler_hz[m] * t))
    return complex(math.sqrt(rays.powers[n] / rays.n_rays) * total)


def _per_cluster_matrices(rays: RaySet, tx_panel: PanelConfig,
                          rx_panel: PanelConfig, motion: MotionConfig,
                          wavelength_m: float, times, pol_model: int):
    """Per-cluster element-level responses, shape (N, T, U, S)."""
    times = np.atleast_1d(np.asarray(times, dtype=float))
    ftx = _panel_fields(tx_panel, rays.zod, rays.aod, pol_model)   # (ptx,N,M,2)
    frx = _panel_fields(rx_panel, rays.zoa, rays.aoa, pol_model)
    mpol = polarization_matrix(rays.phases, rays.xpr_db)           # (N,M,2,2)
    atx = _element_phases(tx_panel, rays.zod, rays.aod)            # (N,M,postx)
    arx = _element_phases(rx_panel, rays.zoa, rays.aoa)
    u_idx = np.arange(rx_panel.n_elements)
    s_idx = np.arange(tx_panel.n_elements)
    pol_u = u_idx // rx_panel.positions
    pol_s = s_idx // tx_panel.positions
    pos_u = u_idx % rx_panel.positions
    pos_s = s_idx % tx_panel.positions
    # gather per-element field (with array phase folded in)
    rxf = frx[pol_u][:, :, :, :].transpose(1, 2, 0, 3) * arx[:, :, pos_u][..., None]
    txf = ftx[pol_s][:, :, :, :].transpose(1, 2, 0, 3) * atx[:, :, pos_s][..., None]
    g = np.einsum("nmua,nmab,nmsb->nmus", rxf, mpol, txf, optimize=True)
    doppler_hz = (_unit_vectors(rays.zoa, rays.aoa) @ motion.velocity) / wavelength_m
    dopp = np.exp(2j * np.pi * doppler_hz[..., None] * times[None, None, :])
    n, m = rays.n_clusters, rays.n_rays
    nu, ns = rx_panel.n_elements, tx_panel.n_elements
    out = np.empty((n, times.size, nu, ns), dtype=complex)
    scale = np.sqrt(rays.powers / m)
    for i in range(n):
        # (T, M) @ (M, U*S) keeps the contraction in BLAS
        out[i] = (dopp[i].T @ g[i].reshape(m, nu * ns)).reshape(times.size, nu, ns)
        out[i] *= scale[i]
    return out, times


def generate_cdl_channel(table: ClusterTable, tx_panel: PanelConfig,
                         rx_panel: PanelConfig, motion: MotionConfig,
                         times, freqs_hz, wavelength_m: float,
                         coupling: str = "random", seed: int = 0,
                         fixed: FixedRayData | None = None,
                         tx_map: PortMap | None = None,
                         rx_map: PortMap | None = None,
                         pol_model: int = 1,
                         rays: RaySet | None = None) -> ChannelTensor:
    """Sample a CDL channel on a time-frequency grid, per port.

    Port maps default to the direct one-element-per-port mapping.  A
    pre-expanded ``rays`` set bypasses ``ray_angles`` (used when many
    time windows share one fixed draw).
    """
    if rays is None:
        rays = ray_angles(table, coupling=coupling, seed=seed, fixed=fixed)
    freqs = np.atleast_1d(np.asarray(freqs_hz, dtype=float))
    per_cluster, times = _per_cluster_matrices(
        rays, tx_panel, rx_panel, motion, wavelength_m, times, pol_model)
    phase = np.exp(-2j * np.pi * np.outer(freqs, rays.delays_s))  # (F, N)
    n, t, nu, ns = per_cluster.shape
    h = (phase @ per_cluster.reshape(n, t * nu * ns)).reshape(freqs.size, t, nu, ns)
    h = np.moveaxis(h, 0, 1)
    h = apply_aav(h, rx_map or PortMap.direct(rx_panel), axis=2)
    h = apply_aav(h, tx_map or PortMap.direct(tx_panel), axis=3)
    return ChannelTensor(h, times, freqs)


def cluster_power_probe(rays: RaySet, tx_panel: PanelConfig,
                        rx_panel: PanelConfig, wavelength_m: float,
                        tx_map: PortMap | None = None,
                        rx_map: PortMap | None = None,
                        pol_model: int = 1) -> np.ndarray:
    """Expected per-cluster received power summed over ports.

    Exact expectation over the polarization phases: cross-ray terms
    vanish, leaving per-ray co- and cross-polar field products weighted
    by ``1/kappa``.  With isotropic ends and the direct map this reduces
    to the raw cluster powers.
    """
    tx_map = tx_map or PortMap.direct(tx_panel)
    rx_map = rx_map or PortMap.direct(rx_panel)
    ftx = _panel_fields(tx_panel, rays.zod, rays.aod, pol_model)
    frx = _panel_fields(rx_panel, rays.zoa, rays.aoa, pol_model)
    atx = _element_phases(tx_panel, rays.zod, rays.aod)
    arx = _element_phases(rx_panel, rays.zoa, rays.aoa)

    def port_fields(panel, pmap, fields, phases):
        e = np.arange(panel.n_elements)
        pol = e // panel.positions
        pos = e % panel.positions
        elem = fields[pol].transpose(1, 2, 0, 3) * phases[:, :, pos][..., None]
        return np.einsum("pe,nmea->nmpa", pmap.weights, elem, optimize=True)

    ft = port_fields(tx_panel, tx_map, ftx, atx)    # (N,M,P_tx,2)
    fr = port_fields(rx_panel, rx_map, frx, arx)
    kappa_inv = 10.0 ** (-rays.xpr_db / 10.0)
    rt2 = np.abs(fr) ** 2                            # (N,M,P_rx,2)
    tt2 = np.abs(ft) ** 2
    co = (np.einsum("nmp,nmq->nm", rt2[..., 0], tt2[..., 0])
          + np.einsum("nmp,nmq->nm", rt2[..., 1], tt2[..., 1]))
    cross = (np.einsum("nmp,nmq->nm", rt2[..., 0], tt2[..., 1])
             + np.einsum("nmp,nmq->nm", rt2[..., 1], tt2[..., 0]))
    per_ray = co + kappa_inv * cross
    return rays.powers / rays.n_rays * per_ray.sum(axis=1)
