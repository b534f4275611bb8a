"""Spatial-profile and eigenmode diagnostics.

Bartlett direction-of-arrival profiles steer a ULA response across the
receive ports and average the captured power over transmit ports; the
decorrelation metric tracks how long those profiles stay put.  The SVD
path reports per-layer SINR under ideal eigenmode precoding.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .antenna import PanelConfig, ShapeMismatch
from .channel import ChannelTensor

__all__ = [
    "RankTooLarge",
    "SpatialProfile",
    "DecorrelationCurve",
    "EigenmodeReport",
    "bartlett_profile",
    "profile_decorrelation",
    "svd_layer_sinr",
    "combine_reports",
]

_DB_FLOOR = 1e-300


class RankTooLarge(ValueError):
    """Requested more layers than the channel supports."""


@dataclass(frozen=True)
class SpatialProfile:
    """Bartlett power profile per (time, RE) over an azimuth grid."""

    azimuth_deg: np.ndarray
    power_db: np.ndarray        # (T, F, A)
    times_s: np.ndarray

    def __post_init__(self):
        grid = np.asarray(self.azimuth_deg, dtype=float)
        if grid.ndim != 1 or np.any(np.diff(grid) <= 0):
            raise ValueError("azimuth grid must be strictly increasing")
        power = np.asarray(self.power_db, dtype=float)
        if not np.all(np.isfinite(power)):
            raise ValueError("profile power must be finite")
        if power.shape[-1] != grid.size:
            raise ValueError("power grid axis does not match the azimuth grid")
        object.__setattr__(self, "azimuth_deg", grid)
        object.__setattr__(self, "power_db", power)
        object.__setattr__(self, "times_s", np.asarray(self.times_s, dtype=float))

    @property
    def peak_indices(self) -> np.ndarray:
        """Index of the strongest azimuth per (time, RE)."""
        return np.argmax(self.power_db, axis=-1)

    @property
    def peak_azimuth_deg(self) -> np.ndarray:
        return self.azimuth_deg[self.peak_indices]

    def to_csv(self, path):
        with open(path, "w", encoding="utf-8") as f:
            f.write("time_ms,re_index,azimuth_deg,power_db\n")
            for ti in range(self.power_db.shape[0]):
                for fi in range(self.power_db.shape[1]):
                    for ai, az in enumerate(self.azimuth_deg):
                        f.write(f"{self.times_s[ti] * 1e3:.6f},{fi},{az:.3f},"
                                f"{self.power_db[ti, fi, ai]:.6f}\n")


@dataclass(frozen=True)
class DecorrelationCurve:
    """Mean per-RE profile correlation against time lag."""

    lags_s: np.ndarray
    correlation: np.ndarray


@dataclass(frozen=True)
class EigenmodeReport:
    """Per-sample per-layer SINR under exact SVD precoding/combining."""

    sinr_db: np.ndarray          # (samples, layers), layers ordered by sigma

    def __post_init__(self):
        object.__setattr__(self, "sinr_db",
                           np.asarray(self.sinr_db, dtype=float))

    @property
    def n_layers(self) -> int:
        return self.sinr_db.shape[1]

    @property
    def layer_medians_db(self) -> np.ndarray:
        return np.median(self.sinr_db, axis=0)

    @property
    def spread_db(self) -> float:
        med = self.layer_medians_db
        return float(med.max() - med.min())

    def to_csv(self, path):
        with open(path, "w", encoding="utf-8") as f:
            f.write("drop,layer,sinr_db\n")
            for d in range(self.sinr_db.shape[0]):
                for layer in range(self.n_layers):
                    f.write(f"{d},{layer + 1},{self.sinr_db[d, layer]:.6f}\n")


def _ula_groups(n_rx: int, layout: PanelConfig | None):
    """Receive-port index groups that each form one horizontal ULA."""
    if layout is None:
        return [np.arange(n_rx)], 0.5
    if layout.n_elements != n_rx:
        raise ShapeMismatch(f"layout has {layout.n_elements} elements, "
                            f"channel has {n_rx} receive ports")
    groups = []
    for pol in range(layout.n_pol):
        for row in range(layout.n_rows):
            base = pol * layout.positions + row
            groups.append(base + np.arange(layout.n_cols) * layout.n_rows)
    return groups, layout.d_y


def bartlett_profile(h: ChannelTensor, azimuth_grid_deg=None,
                     element_spacing: float | None = None,
                     layout: PanelConfig | None = None) -> SpatialProfile:
    """Steered-beam power profile over the receive array.

    Each horizontal row of co-polarized receive ports acts as one ULA
    (``layout`` gives the port arrangement; without it the whole receive
    dimension is a single ULA at ``element_spacing`` wavelengths).  Power
    is averaged over ULAs and transmit ports.
    """
    if h.n_rx < 2:
        raise ShapeMismatch("Bartlett profile needs at least 2 receive ports")
    if azimuth_grid_deg is None:
        azimuth_grid_deg = np.arange(-90.0, 91.0)
    grid = np.asarray(azimuth_grid_deg, dtype=float)
    groups, spacing = _ula_groups(h.n_rx, layout)
    if element_spacing is not None:
        spacing = element_spacing
    sin_phi = np.sin(np.radians(grid))
    power = np.zeros(h.data.shape[:2] + (grid.size,))
    for idx in groups:
        if idx.size < 2:
            raise ShapeMismatch("each steered ULA needs at least 2 ports")
        steer = np.exp(-2j * np.pi * spacing * np.outer(sin_phi, np.arange(idx.size)))
        beamformed = np.einsum("ak,tfks->tfas", steer, h.data[:, :, idx, :],
                               optimize=True)
        power += np.mean(np.abs(beamformed) ** 2, axis=-1)
    power /= len(groups)
    return SpatialProfile(azimuth_deg=grid,
                          power_db=10.0 * np.log10(np.maximum(power, _DB_FLOOR)),
                          times_s=h.times_s)


def profile_decorrelation(profile: SpatialProfile,
                          reference_index: int = 0) -> DecorrelationCurve:
    """Pearson correlation of per-RE linear profiles against time lag.

    Correlations are computed per RE between the reference-time profile
    and each later snapshot, then averaged over REs.  Mean removal makes
    a fully reshuffled profile score near zero rather than near the DC
    pedestal.
    """
    if profile.power_db.shape[0] < 2:
        raise ValueError("need at least 2 time samples")
    linear = 10.0 ** (profile.power_db / 10.0)
    ref = linear[reference_index]                        # (F, A)
    ref = ref - ref.mean(axis=-1, keepdims=True)
    ref_norm = np.linalg.norm(ref, axis=-1)
    cur = linear[reference_index:]
    cur = cur - cur.mean(axis=-1, keepdims=True)
    cur_norm = np.linalg.norm(cur, axis=-1)
    inner = np.einsum("fa,tfa->tf", ref, cur)
    denom = np.maximum(ref_norm[None, :] * cur_norm, _DB_FLOOR)
    corr = (inner / denom).mean(axis=1)
    lags = profile.times_s[reference_index:] - profile.times_s[reference_index]
    return DecorrelationCurve(lags_s=lags, correlation=corr)


def svd_layer_sinr(h: ChannelTensor, rank: int, snr_db: float,
                   on_rank_deficient: str = "neginf") -> EigenmodeReport:
    """Per-layer SINR when transmitting on the top singular vectors.

    Exact SVD precoding and combining leaves the layers interference
    free; layer l sees ``(snr / rank) * sigma_l**2``.  Realizations whose
    l-th singular value is numerically zero either raise
    (``on_rank_deficient="raise"``) or yield ``-inf`` dB for that layer.
    """
    if rank > min(h.n_rx, h.n_tx):
        raise RankTooLarge(f"rank {rank} exceeds min(rx, tx) = "
                           f"{min(h.n_rx, h.n_tx)}")
    if on_rank_deficient not in ("neginf", "raise"):
        raise ValueError("on_rank_deficient must be 'neginf' or 'raise'")
    sigma = np.linalg.svd(h.data, compute_uv=False)      # (T, F, min(R,S)) desc
    sigma = sigma[..., :rank].reshape(-1, rank)
    deficient = sigma <= sigma[:, :1] * 1e-12
    if np.any(deficient) and on_rank_deficient == "raise":
        raise RankTooLarge(f"channel is rank deficient for rank {rank}")
    snr = 10.0 ** (snr_db / 10.0) / rank
    with np.errstate(divide="ignore"):
        sinr_db = 10.0 * np.log10(snr * sigma**2)
    sinr_db[deficient] = -np.inf
    return EigenmodeReport(sinr_db=sinr_db)


def combine_reports(reports) -> EigenmodeReport:
    """Stack per-drop eigenmode reports into one sample population."""
    return EigenmodeReport(sinr_db=np.concatenate([r.sinr_db for r in reports]))
