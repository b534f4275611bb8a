"""Tapped delay line channel models with sum-of-sinusoids Doppler fading.

Each tap carries an independent Rayleigh process built from ``m0``
complex sinusoids.  The arrival angles use the improved-Jakes design: a
uniform angle grid with an independent random rotation per process plus
i.i.d. initial phases, which makes distinct processes uncorrelated while
keeping the classic Clarke autocorrelation ``J0(2 pi fD tau)`` exact in
expectation.

Spatial correlation follows the Kronecker model ``R = R_ue kron R_bs``
with per-end matrices either shipped as data (2x2) or grown to larger
sizes by the exponential interpolation rule ``a ** (((i - k)/(N-1))**2)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .channel import ChannelTensor
from .resources import data_path, data_text
from .seeding import seed_stream

__all__ = [
    "NotPositiveSemidefinite",
    "TapProfile",
    "SoSState",
    "CorrelationSpec",
    "load_tap_profile",
    "load_correlation_spec",
    "sos_coefficient",
    "autocorrelation_estimate",
    "jakes_psd",
    "exponential_correlation",
    "correlation_root",
    "generate_tdl_channel",
]


class NotPositiveSemidefinite(ValueError):
    """Requested correlation matrix has a meaningfully negative eigenvalue."""


@dataclass(frozen=True)
class TapProfile:
    """Power delay profile of a TDL model.

    ``powers`` are linear and normalized to unit total; ``delays_s`` are
    sorted ascending.
    """

    name: str
    delays_s: np.ndarray
    powers: np.ndarray
    max_doppler_hz: float = 0.0

    def __post_init__(self):
        d = np.asarray(self.delays_s, dtype=float)
        p = np.asarray(self.powers, dtype=float)
        if d.ndim != 1 or d.shape != p.shape:
            raise ValueError("delays and powers must be matching 1-d arrays")
        if np.any(d < 0) or np.any(np.diff(d) < 0):
            raise ValueError("tap delays must be non-negative and sorted")
        if np.any(p <= 0):
            raise ValueError("tap powers must be positive")
        object.__setattr__(self, "delays_s", d)
        object.__setattr__(self, "powers", p / p.sum())

    @property
    def n_taps(self) -> int:
        return self.delays_s.size

    @property
    def rms_delay_spread_s(self) -> float:
        m1 = float(self.powers @ self.delays_s)
        m2 = float(self.powers @ self.delays_s**2)
        return math.sqrt(max(m2 - m1 * m1, 0.0))

    def with_doppler(self, max_doppler_hz: float) -> "TapProfile":
        return replace(self, max_doppler_hz=float(max_doppler_hz))


def _parse_table(text: str):
    meta, rows = {}, []
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, _, val = line.lstrip("#").partition(":")
            meta[key.strip()] = val.strip()
        elif not line.startswith("tap,"):
            rows.append([float(x) for x in line.split(",")])
    return meta, np.asarray(rows)


def load_tap_profile(name: str, delay_spread_ns: float | None = None,
                     max_doppler_hz: float = 0.0) -> TapProfile:
    """Load a tap table CSV (``tap,delay_ns,power_db`` plus ``#`` headers).

    ``name`` is a packaged table (``tdl_a``, ``tdl_b``, ``tdl_c``,
    ``tdlc300``) or a path.  For normalized tables (header
    ``delay_unit: normalized``) the delay column is in units of RMS
    delay spread and ``delay_spread_ns`` is required.
    """
    fname = name if name.endswith(".csv") else f"{name}.csv"
    meta, rows = _parse_table(data_text(fname))
    unit = meta.get("delay_unit", "ns")
    delays = rows[:, 1]
    if unit == "normalized":
        if delay_spread_ns is None:
            raise ValueError(f"profile {name!r} has normalized delays; "
                             "pass delay_spread_ns")
        delays = delays * delay_spread_ns
    elif delay_spread_ns is not None:
        raise ValueError(f"profile {name!r} already has absolute delays")
    order = np.argsort(delays, kind="stable")
    return TapProfile(name=meta.get("name", name),
                      delays_s=delays[order] * 1e-9,
                      powers=10.0 ** (rows[order, 2] / 10.0),
                      max_doppler_hz=max_doppler_hz)


@dataclass(frozen=True)
class SoSState:
    """Frozen sum-of-sinusoids draw: arrival angles and initial phases.

    ``angles`` and ``phases`` have shape (n_taps, n_processes, m0); one
    process per spatial entry to be colored later.
    """

    max_doppler_hz: float
    angles: np.ndarray
    phases: np.ndarray

    @classmethod
    def draw(cls, n_taps: int, n_processes: int, m0: int,
             max_doppler_hz: float, rng: np.random.Generator) -> "SoSState":
        if m0 < 8:
            raise ValueError("m0 too small for a credible Rayleigh sum")
        rot = rng.uniform(0.0, 1.0, size=(n_taps, n_processes, 1))
        grid = np.arange(m0)[None, None, :]
        angles = 2.0 * np.pi * (grid + rot) / m0
        phases = rng.uniform(0.0, 2.0 * np.pi, size=(n_taps, n_processes, m0))
        return cls(max_doppler_hz=float(max_doppler_hz), angles=angles,
                   phases=phases)

    @property
    def m0(self) -> int:
        return self.angles.shape[-1]


def sos_coefficient(state: SoSState, tap: int, t) -> np.ndarray:
    """Complex tap gain(s) at time ``t`` (seconds, scalar or array).

    Returns shape (n_processes,) for scalar ``t`` and
    (n_times, n_processes) otherwise; mean power is exactly one.
    """
    t = np.asarray(t, dtype=float)
    arg = (2.0 * np.pi * state.max_doppler_hz
           * t[..., None, None] * np.cos(state.angles[tap])
           + state.phases[tap])
    return np.exp(1j * arg).sum(axis=-1) / math.sqrt(state.m0)


def _sos_all(state: SoSState, times) -> np.ndarray:
    """All taps at once, shape (n_times, n_taps, n_processes)."""
    t = np.atleast_1d(np.asarray(times, dtype=float))
    arg = (2.0 * np.pi * state.max_doppler_hz
           * t[:, None, None, None] * np.cos(state.angles)[None]
           + state.phases[None])
    return np.exp(1j * arg).sum(axis=-1) / math.sqrt(state.m0)


def autocorrelation_estimate(state: SoSState, lags) -> np.ndarray:
    """Empirical ``Re E[c(0) conj(c(lag))]`` averaged over all processes."""
    lags = np.atleast_1d(np.asarray(lags, dtype=float))
    c = _sos_all(state, np.concatenate(([0.0], lags)))
    ref = c[0]
    corr = (ref[None] * np.conj(c[1:])).mean(axis=(1, 2)).real
    power = float((np.abs(ref) ** 2).mean())
    return corr / power


def jakes_psd(f, max_doppler_hz: float):
    """Classic Jakes Doppler spectrum, infinite at the band edges.

    Zero outside ``|f| < fD``; integrates to one over the open interval.
    """
    f = np.asarray(f, dtype=float)
    fd = float(max_doppler_hz)
    out = np.zeros_like(f)
    inside = np.abs(f) < fd
    out[inside] = 1.0 / (np.pi * fd * np.sqrt(1.0 - (f[inside] / fd) ** 2))
    return out


@dataclass(frozen=True)
class CorrelationSpec:
    """Per-end Kronecker correlation description.

    Real base coefficients in [0, 1); the per-end matrix of size N has
    entries ``coeff ** (((i - k) / (N - 1)) ** 2)`` which reduces to the
    shipped 2x2 table at N = 2 and to identity for coeff = 0.
    """

    name: str
    bs_coeff: float
    ue_coeff: float

    def __post_init__(self):
        for c in (self.bs_coeff, self.ue_coeff):
            if not (0.0 <= c < 1.0):
                raise ValueError("base correlation coefficients must be in [0, 1)")

    def matrix(self, end: str, n: int) -> np.ndarray:
        coeff = {"bs": self.bs_coeff, "ue": self.ue_coeff}[end]
        return exponential_correlation(coeff, n)

    def kronecker(self, n_rx: int, n_tx: int) -> np.ndarray:
        return np.kron(self.matrix("ue", n_rx), self.matrix("bs", n_tx))


def exponential_correlation(coeff: float, n: int) -> np.ndarray:
    """Per-end correlation matrix grown from a single base coefficient."""
    if n < 1:
        raise ValueError("matrix size must be positive")
    if n == 1 or coeff == 0.0:
        return np.eye(n)
    i = np.arange(n, dtype=float)
    return coeff ** (((i[:, None] - i[None, :]) / (n - 1)) ** 2)


def load_correlation_spec(name: str) -> CorrelationSpec:
    """Load a correlation JSON (packaged ``low`` / ``medium_a`` or a path)."""
    fname = name if name.endswith(".json") else f"correlation_{name}.json"
    raw = json.loads(data_text(fname))
    spec = CorrelationSpec(name=raw.get("name", name),
                           bs_coeff=float(raw["bs"]["coeff"]),
                           ue_coeff=float(raw["ue"]["coeff"]))
    for end in ("bs", "ue"):
        shipped = raw[end].get("matrix_2x2")
        if shipped is not None:
            mat = np.array([[complex(re, im) for re, im in row] for row in shipped])
            if not np.allclose(mat, spec.matrix(end, 2), atol=1e-12):
                raise ValueError(f"{name}: shipped 2x2 {end} matrix disagrees "
                                 "with the interpolation rule")
    return spec


def correlation_root(spec: CorrelationSpec, n_rx: int, n_tx: int) -> np.ndarray:
    """Hermitian square root L of ``R = R_ue kron R_bs`` with ``L L^H = R``.

    Raises
    ------
    NotPositiveSemidefinite
        If R has an eigenvalue below -1e-9 (relative to the largest).
    """
    r = spec.kronecker(n_rx, n_tx)
    w, v = np.linalg.eigh(r)
    if w[0] < -1e-9 * max(w[-1], 1.0):
        raise NotPositiveSemidefinite(
            f"correlation matrix eigenvalue {w[0]:.3e} is negative")
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ v.conj().T


def generate_tdl_channel(profile: TapProfile, correlation: CorrelationSpec,
                         n_tx: int, n_rx: int, times, freqs_hz,
                         seed: int, m0: int = 32) -> ChannelTensor:
    """Sample a spatially correlated TDL channel on a time-frequency grid.

    The frequency response is the direct exponential sum
    ``H(t, f) = sum_n c_n(t) exp(-2j pi f tau_n)`` over taps; entry
    (r, s) of each per-tap matrix is colored by the Kronecker root so
    that ``vec`` stacking (row r major over tx) matches
    ``R_ue kron R_bs``.
    """
    times = np.atleast_1d(np.asarray(times, dtype=float))
    freqs = np.atleast_1d(np.asarray(freqs_hz, dtype=float))
    rng = seed_stream(seed, ("tdl-sos", profile.name))
    state = SoSState.draw(profile.n_taps, n_rx * n_tx, m0,
                          profile.max_doppler_hz, rng)
    c = _sos_all(state, times)                      # (T, taps, rx*tx)
    root = correlation_root(correlation, n_rx, n_tx)
    c = c @ root.T                                  # color each tap vector
    c = c.reshape(times.size, profile.n_taps, n_rx, n_tx)
    phase = np.exp(-2j * np.pi * np.outer(profile.delays_s, freqs))
    h = np.einsum("tnrs,n,nf->tfrs", c, np.sqrt(profile.powers), phase,
                  optimize=True)
    return ChannelTensor(h, times, freqs)
