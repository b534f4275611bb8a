"""Physical-layer abstraction on top of generated channels.

Covers the receive-side chain that turns a precoded channel and an SNR
into a throughput sample: channel-estimation error models (ideal, DMRS
LS with bundle averaging, CSI-RS LS with EPRE boost and mismatched
Wiener smoothing), LMMSE equalization, per-layer SINR, MIESM effective
SINR via shipped BICM mutual-information tables, logistic BLER lookup,
Chase-combining HARQ, and spectral efficiency for an ingested PDSCH MCS
table (TS 38.214 Table 5.1.3.1-2).
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.optimize import brentq
from scipy.special import expit

from .channel import ChannelTensor
from .resources import data_text
from .seeding import seed_stream

__all__ = [
    "UnknownMcs",
    "MiCurve",
    "BlerCurve",
    "McsEntry",
    "EstimationConfig",
    "LinkResult",
    "load_mi_curve",
    "load_mcs_table",
    "load_bler_curve",
    "estimate_channel",
    "lmmse_filter",
    "per_layer_sinr",
    "miesm_effective_sinr",
    "harq_chase",
    "spectral_efficiency",
]

MODULATION_NAMES = {2: "qpsk", 4: "16qam", 6: "64qam"}


class UnknownMcs(ValueError):
    """MCS index absent from the ingested PDSCH table."""


@dataclass(frozen=True)
class MiCurve:
    """Sampled SINR(dB) -> mutual information (bits/symbol) map.

    Forward evaluation uses monotone (PCHIP) interpolation clipped to the
    sampled domain; the inverse brackets on the sampled knots and solves
    within one knot interval, so flat saturated tails resolve to the
    nearest domain edge.
    """

    q_bits: int
    snr_db: np.ndarray
    mi_bits: np.ndarray
    _pchip: PchipInterpolator = field(repr=False, compare=False, default=None)

    def __post_init__(self):
        s = np.asarray(self.snr_db, dtype=float)
        m = np.asarray(self.mi_bits, dtype=float)
        if s.ndim != 1 or s.shape != m.shape or s.size < 4:
            raise ValueError("curve needs matching 1-d samples")
        if np.any(np.diff(s) <= 0):
            raise ValueError("SNR samples must be strictly increasing")
        if np.any(np.diff(m) < 0) or m[0] < 0 or m[-1] > self.q_bits:
            raise ValueError("MI samples must be nondecreasing in [0, Q]")
        object.__setattr__(self, "snr_db", s)
        object.__setattr__(self, "mi_bits", m)
        object.__setattr__(self, "_pchip", PchipInterpolator(s, m))

    def forward(self, snr_db) -> np.ndarray:
        x = np.clip(np.asarray(snr_db, dtype=float),
                    self.snr_db[0], self.snr_db[-1])
        return np.clip(self._pchip(x), 0.0, float(self.q_bits))

    def inverse(self, mi: float) -> float:
        mi = float(mi)
        if mi <= self.mi_bits[0]:
            return float(self.snr_db[0])
        if mi >= self.mi_bits[-1]:
            return float(self.snr_db[-1])
        hi = int(np.searchsorted(self.mi_bits, mi, side="left"))
        lo, hi = self.snr_db[hi - 1], self.snr_db[hi]
        return float(brentq(lambda x: float(self._pchip(x)) - mi, lo, hi,
                            xtol=1e-6))


@functools.lru_cache(maxsize=None)
def load_mi_curve(q_bits: int) -> MiCurve:
    """Load the packaged BICM MI table for a modulation order."""
    name = MODULATION_NAMES.get(int(q_bits))
    if name is None:
        raise ValueError(f"no MI table for modulation order {q_bits}")
    rows = [line.split(",") for line in data_text(f"mi_{name}.csv").splitlines()
            if line.strip() and not line.startswith("#")]
    arr = np.asarray(rows, dtype=float)
    return MiCurve(q_bits=int(q_bits), snr_db=arr[:, 0], mi_bits=arr[:, 1])


@dataclass(frozen=True)
class McsEntry:
    index: int
    q_bits: int
    code_rate: float

    @property
    def spectral_efficiency(self) -> float:
        return self.q_bits * self.code_rate


@functools.lru_cache(maxsize=None)
def load_mcs_table() -> dict:
    """PDSCH MCS table keyed by index (TS 38.214 Table 5.1.3.1-2)."""
    table = {}
    for line in data_text("mcs_pdsch_table2.csv").splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        idx, q, rate = line.split(",")
        table[int(idx)] = McsEntry(index=int(idx), q_bits=int(q),
                                   code_rate=float(rate) / 1024.0)
    return table


def _mcs_entry(mcs: int) -> McsEntry:
    try:
        return load_mcs_table()[int(mcs)]
    except KeyError:
        raise UnknownMcs(f"MCS {mcs} not in the PDSCH table") from None


@dataclass(frozen=True)
class BlerCurve:
    """Logistic block-error curve ``1 / (1 + exp((g - gamma50)/slope))``.

    Monotone non-increasing in the effective SINR ``g`` (dB), 1 at -inf
    and 0 at +inf.
    """

    mcs: int
    q_bits: int
    code_rate: float
    gamma50_db: float
    slope_db: float

    def __post_init__(self):
        if self.slope_db <= 0:
            raise ValueError("slope must be positive")

    def bler(self, gamma_db) -> np.ndarray:
        g = np.asarray(gamma_db, dtype=float)
        # argument ordered so that large gamma -> bler 0
        return expit(-(g - self.gamma50_db) / self.slope_db)


@functools.lru_cache(maxsize=None)
def load_bler_curve(mcs: int) -> BlerCurve:
    """Logistic BLER anchors for one MCS from the shipped anchor file."""
    entry = _mcs_entry(mcs)
    for line in data_text("bler_anchors.csv").splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        idx, gamma50, slope = line.split(",")
        if int(idx) == entry.index:
            return BlerCurve(mcs=entry.index, q_bits=entry.q_bits,
                             code_rate=entry.code_rate,
                             gamma50_db=float(gamma50),
                             slope_db=float(slope))
    raise UnknownMcs(f"MCS {mcs} has no BLER anchor")


@dataclass(frozen=True)
class EstimationConfig:
    """Channel-estimation error model selection.

    ``mode`` is ``"ideal"`` or ``"practical"``.  DMRS estimates are
    per-PRB LS over the type-1 DMRS REs, averaged across a precoding
    bundle of ``dmrs_bundle_prbs`` PRBs that is assumed channel-stable
    (TS 38.214 PRG bundling), so the error variance scales with
    ``1 / (6 * bundle)``.  CSI-RS estimates are per-PRB LS at density 1
    with an ``epre_ratio`` power boost and, when ``smoothing_support_s``
    is positive, mismatched LMMSE smoothing across frequency that
    assumes a flat power-delay profile of that support.
    """

    mode: str = "ideal"
    dmrs_bundle_prbs: int = 2
    epre_ratio: float = 1.0
    smoothing_support_s: float = 4.7e-6

    def __post_init__(self):
        if self.mode not in ("ideal", "practical"):
            raise ValueError(f"unknown estimation mode {self.mode!r}")
        if self.dmrs_bundle_prbs < 1:
            raise ValueError("bundle size must be at least 1")
        if self.epre_ratio <= 0:
            raise ValueError("EPRE ratio must be positive")


@dataclass(frozen=True)
class LinkResult:
    """One drop's outcome at one SNR for one feedback scheme."""

    scheme: str
    snr_db: float
    effective_sinr_db: float
    retransmissions: int
    success: bool
    spectral_efficiency: float
    normalized_throughput: float

    def __post_init__(self):
        if not 0.0 <= self.normalized_throughput <= 1.0:
            raise ValueError("normalized throughput must be in [0, 1]")


def _as_rng(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return seed_stream(int(rng), ("linkabs",))


# Type-1 single-symbol DMRS carries 6 REs per PRB per port
# (TS 38.211 Table 7.4.1.1.2-1).
_DMRS_RES_PER_PRB = 6


def _wiener_smooth(h: np.ndarray, freqs_hz: np.ndarray, support_s: float,
                   noise_var: float) -> np.ndarray:
    """Frequency-domain Wiener filter assuming a flat PDP on [0, support]."""
    df = freqs_hz[:, None] - freqs_hz[None, :]
    x = df * support_s
    corr = np.exp(-1j * np.pi * x) * np.sinc(x)
    w = corr @ np.linalg.inv(corr + noise_var * np.eye(freqs_hz.size))
    return np.einsum("fg,tgrs->tfrs", w, h, optimize=True)


def estimate_channel(h_true: ChannelTensor, cfg: EstimationConfig, role: str,
                     noise_over_p: float, rng) -> ChannelTensor:
    """Apply the configured estimation error model to a channel tensor.

    ``role`` selects the reference-signal path.  ``"dmrs"`` adds LS
    noise at the variance left after averaging the 6 per-PRB DMRS REs
    over the precoding bundle, ``noise_over_p / (6 * bundle)``; the
    bundle is assumed channel-stable, so no selectivity penalty is
    applied.  ``"csirs"`` adds per-RE LS noise of variance
    ``noise_over_p / epre_ratio`` and optionally applies mismatched
    flat-PDP LMMSE smoothing across frequency.  Ideal mode returns the
    input unchanged.
    """
    if role not in ("dmrs", "csirs"):
        raise ValueError(f"unknown estimation role {role!r}")
    if cfg.mode == "ideal":
        return h_true
    rng = _as_rng(rng)
    if role == "dmrs":
        var = noise_over_p / (_DMRS_RES_PER_PRB * cfg.dmrs_bundle_prbs)
    else:
        var = noise_over_p / cfg.epre_ratio
    noise = math.sqrt(var / 2.0) * (
        rng.standard_normal(h_true.data.shape)
        + 1j * rng.standard_normal(h_true.data.shape))
    h = h_true.data + noise
    if role == "csirs" and cfg.smoothing_support_s > 0:
        h = _wiener_smooth(h, h_true.freqs_hz, cfg.smoothing_support_s, var)
    return ChannelTensor(h, h_true.times_s, h_true.freqs_hz)


def lmmse_filter(ghat: np.ndarray, noise_over_p: float) -> np.ndarray:
    """LMMSE equalizer ``F^H = G^H (G G^H + (s2/P) I)^-1``.

    ``ghat`` has shape (..., n_rx, n_layers); the returned filter has
    shape (..., n_layers, n_rx) and left-multiplies receive vectors.
    """
    ghat = np.asarray(ghat)
    n_rx = ghat.shape[-2]
    gram = ghat @ np.conj(np.swapaxes(ghat, -1, -2))
    gram += noise_over_p * np.eye(n_rx)
    # A is Hermitian, so (A^-1 G)^H equals G^H A^-1.
    return np.conj(np.swapaxes(np.linalg.solve(gram, ghat), -1, -2))


def per_layer_sinr(g_true: np.ndarray, fh: np.ndarray,
                   noise_over_p: float) -> np.ndarray:
    """Post-equalization SINR per layer (linear).

    ``gamma_l = |f_l^H g_l|^2 / (f_l^H C_l f_l)`` with
    ``C_l = sum_{k != l} g_k g_k^H + (s2/P) I``, evaluated with the
    ground-truth precoded channel ``g_true`` (..., n_rx, n_layers) and a
    filter from :func:`lmmse_filter` (possibly estimate-derived).
    """
    m = np.asarray(fh) @ np.asarray(g_true)
    diag = np.einsum("...ll->...l", m)
    num = np.abs(diag) ** 2
    cross = (np.abs(m) ** 2).sum(axis=-1) - num
    f_pow = (np.abs(fh) ** 2).sum(axis=-1)
    denom = cross + noise_over_p * f_pow
    return np.where(denom > 0, num / np.where(denom > 0, denom, 1.0), 0.0)


def miesm_effective_sinr(sinr_linear, curve: MiCurve) -> float:
    """Mutual-information effective SINR (dB) of a set of layer SINRs."""
    g = np.asarray(sinr_linear, dtype=float)
    if not np.all(np.isfinite(g)):
        raise ValueError("per-layer SINRs must be finite")
    with np.errstate(divide="ignore"):
        g_db = 10.0 * np.log10(np.maximum(g, 0.0))
    return curve.inverse(float(curve.forward(g_db).mean()))


def harq_chase(gamma_eff_db: float, bler: BlerCurve, n_rt_max: int,
               rng) -> tuple[int, bool]:
    """Chase-combining HARQ: retransmission count and delivery flag.

    Attempt ``n`` (0-based, ``n < n_rt_max``) sees the combined SINR
    ``gamma_eff + 10 log10(n + 1)`` and fails with probability
    ``bler(.)``; the walk stops at the first success or after
    ``n_rt_max`` attempts.
    """
    if n_rt_max < 1:
        raise ValueError("need at least one transmission attempt")
    rng = _as_rng(rng)
    n_rt = 0
    for n_rt in range(n_rt_max):
        boosted = gamma_eff_db + 10.0 * math.log10(n_rt + 1)
        if rng.random() >= float(bler.bler(boosted)):
            return n_rt, True
    return n_rt, False


def spectral_efficiency(mcs: int, rank: int, retransmissions: int,
                        success: bool) -> tuple[float, float]:
    """Achieved bits/s/Hz and the fraction of the zero-retransmission SE.

    Raises
    ------
    UnknownMcs
        If ``mcs`` is not in the ingested PDSCH table.
    """
    entry = _mcs_entry(mcs)
    if not success:
        return 0.0, 0.0
    se = rank * entry.spectral_efficiency / (1 + retransmissions)
    return se, 1.0 / (1 + retransmissions)
