"""Scenario configuration and Monte-Carlo link-level orchestration.

A ``Scenario`` (usually loaded from YAML, see ``scenarios/``) fixes the
channel model, panels, codebook and estimation settings, and the SNR
sweep.  ``run_sweep`` evaluates normalized throughput per feedback
scheme over independent drops; ``run_bartlett`` emits time-evolving
spatial profiles.  Every random draw is keyed off the master seed and
descriptive labels, so outputs are byte-for-byte reproducible and drop
aggregation is order independent.
"""

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
import yaml
from scipy.constants import c as _C_MPS

from . import cdl, rcdl, tdl
from .analysis import (EigenmodeReport, bartlett_profile, combine_reports,
                       profile_decorrelation, svd_layer_sinr)
from .antenna import Isotropic, PanelConfig, Sector3gpp
from .channel import ChannelTensor
from .csi import (DftGrid, ETypeIIPmi, Precoder, build_typeI, dft_beam,
                  etypeII_bcc, etypeii_params, fd_basis_matrix, quantize_bcc,
                  random_pmi, reconstruct_etypeII, select_beams,
                  select_fd_basis, select_typei)
from .geometry import Orientation
from .linkabs import (EstimationConfig, LinkResult, estimate_channel,
                      harq_chase, lmmse_filter, load_bler_curve,
                      load_mcs_table, load_mi_curve, miesm_effective_sinr,
                      per_layer_sinr, spectral_efficiency)
from .seeding import seed_stream

SCHEMES = ("eigen", "etypeii", "typei", "random")
CHANNEL_TYPES = ("tdl", "cdl", "rcdl", "rcdl_build")
SYMBOL_S = 0.5e-3 / 14                  # OFDM symbol at 30 kHz SCS


class ScenarioError(ValueError):
    """Scenario configuration is structurally invalid."""


class DropFailure(RuntimeError):
    """A module error raised inside the sweep, with drop/SNR context."""


def _panel_from(cfg: dict) -> PanelConfig:
    patterns = {"isotropic": Isotropic, "sector": Sector3gpp.from_data}
    kind = cfg.get("pattern", "isotropic")
    if kind not in patterns:
        raise ScenarioError(f"unknown antenna pattern {kind!r}")
    alpha, beta, gamma = cfg.get("orientation_deg", (0.0, 0.0, 0.0))
    return PanelConfig(
        n_cols=int(cfg["n1"]), n_rows=int(cfg["n2"]),
        d_y=float(cfg.get("spacing", 0.5)), d_z=float(cfg.get("spacing", 0.5)),
        pol_slants_deg=tuple(float(z) for z in
                             cfg.get("pol_slants_deg", (0.0,))),
        orientation=Orientation.from_degrees(alpha, beta, gamma),
        pattern=patterns[kind]())


def _snr_list(cfg) -> tuple:
    if isinstance(cfg, dict):
        grid = np.arange(float(cfg["start"]),
                         float(cfg["stop"]) + 1e-9, float(cfg["step"]))
        return tuple(float(x) for x in grid)
    return tuple(float(x) for x in cfg)


@dataclass(frozen=True)
class Scenario:
    """One experiment: channel, panels, codebooks, estimation, sweep.

    Structural validity is checked at construction; referenced data
    tables are resolved when the channel context is first built.
    """

    name: str
    channel: dict
    bs_panel: PanelConfig
    ue_panel: PanelConfig
    snr_db: tuple
    drops: int
    seed: int
    carrier_hz: float = 3.5e9
    scs_hz: float = 30e3
    n3: int = 14
    prbs_per_sb: int = 8
    speed_kmh: float = 3.0
    direction_deg: tuple = (65.0, 90.0)
    delay_ms: float = 7.0
    drop_window_s: float = 0.04
    schemes: tuple = SCHEMES
    typei_mode: str = "wb"
    etypeii_combination: int = 6
    o1: int = 4
    o2: int = 4
    estimation: EstimationConfig = field(default_factory=EstimationConfig)
    mcs: int = 7
    rank: int = 4
    n_rt_max: int = 4

    def __post_init__(self):
        if self.channel.get("type") not in CHANNEL_TYPES:
            raise ScenarioError(f"unknown channel type "
                                f"{self.channel.get('type')!r}")
        if not self.snr_db:
            raise ScenarioError("SNR list must be non-empty")
        if self.drops < 1:
            raise ScenarioError("drops must be at least 1")
        unknown = set(self.schemes) - set(SCHEMES)
        if unknown or not self.schemes:
            raise ScenarioError(f"unknown schemes {sorted(unknown)}")
        if self.n3 < 1 or self.prbs_per_sb < 1:
            raise ScenarioError("n3 and prbs_per_sb must be positive")
        if not 1 <= self.rank <= 4:
            raise ScenarioError("rank must be 1..4")
        object.__setattr__(self, "snr_db",
                           tuple(float(x) for x in self.snr_db))
        object.__setattr__(self, "schemes", tuple(self.schemes))

    @property
    def n_prb(self) -> int:
        return self.n3 * self.prbs_per_sb

    @property
    def freqs_hz(self) -> np.ndarray:
        spacing = 12 * self.scs_hz                  # one PRB
        return (np.arange(self.n_prb) - (self.n_prb - 1) / 2) * spacing

    @property
    def wavelength_m(self) -> float:
        return _C_MPS / self.carrier_hz

    @property
    def motion(self) -> cdl.MotionConfig:
        return cdl.MotionConfig(speed_mps=self.speed_kmh / 3.6,
                                phi_deg=self.direction_deg[0],
                                theta_deg=self.direction_deg[1])

    @property
    def max_doppler_hz(self) -> float:
        return self.speed_kmh / 3.6 * self.carrier_hz / _C_MPS

    @classmethod
    def from_mapping(cls, data: dict) -> "Scenario":
        try:
            est = EstimationConfig(**data.get("estimation", {}))
            return cls(
                name=str(data["name"]), channel=dict(data["channel"]),
                bs_panel=_panel_from(data["bs"]),
                ue_panel=_panel_from(data["ue"]),
                snr_db=_snr_list(data["snr_db"]),
                drops=int(data["drops"]), seed=int(data["seed"]),
                carrier_hz=float(data.get("carrier_hz", 3.5e9)),
                scs_hz=float(data.get("scs_hz", 30e3)),
                n3=int(data.get("n3", 14)),
                prbs_per_sb=int(data.get("prbs_per_sb", 8)),
                speed_kmh=float(data.get("speed_kmh", 3.0)),
                direction_deg=tuple(data.get("direction_deg", (65.0, 90.0))),
                delay_ms=float(data.get("delay_ms", 7.0)),
                drop_window_s=float(data.get("drop_window_s", 0.04)),
                schemes=tuple(data.get("schemes", SCHEMES)),
                typei_mode=str(data.get("typei_mode", "wb")),
                etypeii_combination=int(data.get("etypeii_combination", 6)),
                estimation=est, mcs=int(data.get("mcs", 7)),
                rank=int(data.get("rank", 4)),
                n_rt_max=int(data.get("n_rt_max", 4)))
        except KeyError as exc:
            raise ScenarioError(f"missing scenario key {exc}") from exc


def load_scenario(path) -> Scenario:
    with open(path, "r", encoding="utf-8") as f:
        data = yaml.safe_load(f)
    if not isinstance(data, dict):
        raise ScenarioError(f"{path}: expected a mapping at top level")
    return Scenario.from_mapping(data)


def _derived_seed(master: int, labels) -> int:
    return int(seed_stream(master, labels).integers(2 ** 62))


class _ChannelContext:
    """Loaded tables and fixed ray draws shared by all drops."""

    def __init__(self, s: Scenario):
        cfg = s.channel
        self.kind = cfg["type"]
        if self.kind == "tdl":
            profile = tdl.load_tap_profile(cfg["profile"],
                                           cfg.get("delay_spread_ns"))
            doppler = float(cfg.get("doppler_hz", s.max_doppler_hz))
            self.profile = profile.with_doppler(doppler)
            self.correlation = tdl.load_correlation_spec(cfg["correlation"])
        elif self.kind == "cdl":
            self.table = cdl.load_cluster_table(
                cfg["table"], cfg.get("delay_spread_ns"))
            self.rays = None
        elif self.kind == "rcdl":
            self.table = cdl.load_cluster_table(cfg["table"])
            fixed = cdl.load_fixed_ray_data(cfg["fixed"])
            self.rays = cdl.ray_angles(self.table, coupling="fixed",
                                       fixed=fixed)
        else:                                        # rcdl_build
            targets = rcdl.SpreadTargets(**cfg["targets"])
            base = cdl.load_cluster_table(cfg["base"],
                                          delay_spread_ns=targets.ds_ns)
            fixed = cdl.load_fixed_ray_data(cfg["fixed"])
            probe = rcdl.ProbeContext(s.bs_panel, s.ue_panel, s.wavelength_m)
            table, kept, _ = rcdl.build_rcdl(base, targets, fixed, probe,
                                             n_keep=int(cfg.get("n_keep", 12)))
            self.table = table
            self.rays = cdl.ray_angles(table, coupling="fixed", fixed=kept)

    def generate(self, s: Scenario, drop: int, times, freqs) -> ChannelTensor:
        if self.kind == "tdl":
            return tdl.generate_tdl_channel(
                self.profile, self.correlation, s.bs_panel.n_elements,
                s.ue_panel.n_elements, times, freqs,
                seed=_derived_seed(s.seed, ("tdl-drop", drop)))
        if self.kind == "cdl":
            return cdl.generate_cdl_channel(
                self.table, s.bs_panel, s.ue_panel, s.motion, times, freqs,
                s.wavelength_m, coupling="random",
                seed=_derived_seed(s.seed, ("cdl-drop", drop)))
        # fixed-coupling models: drops are disjoint time windows of one
        # deterministic fading process
        shifted = np.asarray(times, dtype=float) + drop * s.drop_window_s
        h = cdl.generate_cdl_channel(
            self.table, s.bs_panel, s.ue_panel, s.motion, shifted, freqs,
            s.wavelength_m, rays=self.rays)
        return ChannelTensor(h.data, np.asarray(times, dtype=float), freqs)


_CONTEXTS = {}


def _context_for(s: Scenario) -> _ChannelContext:
    key = repr(s)
    ctx = _CONTEXTS.get(key)
    if ctx is None:
        ctx = _CONTEXTS[key] = _ChannelContext(s)
    return ctx


def _sb_representative(h_prb: np.ndarray, n3: int) -> np.ndarray:
    """Per-subband representative channel: the SB's central PRB.

    Shape (n3, n_rx, n_ports).  Per-SB eigenvector feedback (the eigen
    bound and the eType-II combining coefficients) is derived from one
    representative estimate per subband, so estimation noise enters the
    per-SB eigendecomposition unaveraged; a frequency average would
    instead coherently cancel late clusters at large delay spread.
    """
    n_prb, n_rx, n_ports = h_prb.shape
    per = n_prb // n3
    return h_prb.reshape(n3, per, n_rx, n_ports)[:, per // 2]


def _pol_covariance(h_sb: np.ndarray) -> np.ndarray:
    r = np.einsum("tra,trb->ab", h_sb.conj(), h_sb) / h_sb.shape[0]
    p = r.shape[0] // 2
    return r[:p, :p] + r[p:, p:]


def _eigen_precoder(h_sb: np.ndarray, rank: int) -> Precoder:
    gram = np.einsum("tra,trb->tab", h_sb.conj(), h_sb)
    _, vecs = np.linalg.eigh(gram)
    return Precoder(vecs[:, :, ::-1][:, :, :rank] / math.sqrt(rank))


def _typei_precoder(h_prb, s: Scenario, grid: DftGrid, noise_over_p, curve):
    pmi = select_typei(h_prb, grid, s.rank, noise_over_p, curve,
                       n3=s.n3, mode=s.typei_mode)
    return build_typeI(pmi, grid)


def _etypeii_precoder(h_prb, s: Scenario, grid: DftGrid, params) -> Precoder:
    h_sb = _sb_representative(h_prb, s.n3)
    rotation, beams = select_beams(_pol_covariance(h_prb), grid,
                                   params.l_beams)
    b = np.stack([dft_beam(grid, n1, n2, *rotation) for n1, n2 in beams],
                 axis=1)
    p = grid.n1 * grid.n2
    w1 = np.zeros((2 * p, 2 * params.l_beams), dtype=complex)
    w1[:p, :params.l_beams] = b
    w1[p:, params.l_beams:] = b
    w2hat = etypeII_bcc(h_sb @ w1, s.rank)
    fds, coefs = [], []
    for layer in range(s.rank):
        fd = select_fd_basis(w2hat[layer], params.m_fd)
        w2bar = w2hat[layer] @ fd_basis_matrix(s.n3, fd)
        coefs.append(quantize_bcc(w2bar, params.k_nz))
        fds.append(fd)
    pmi = ETypeIIPmi(s.rank, rotation, beams, tuple(fds), tuple(coefs))
    return reconstruct_etypeII(pmi, grid, s.n3)


def _per_prb_precoders(prec: Precoder, n_prb: int) -> np.ndarray:
    if prec.n_sb == 1:
        return np.broadcast_to(prec.matrices[0],
                               (n_prb,) + prec.matrices[0].shape)
    return np.repeat(prec.matrices, n_prb // prec.n_sb, axis=0)


def _sweep_drop(s: Scenario, drop: int) -> list:
    ctx = _context_for(s)
    q_bits = load_mcs_table()[s.mcs].q_bits
    curve = load_mi_curve(q_bits)
    bler = load_bler_curve(s.mcs)
    grid = DftGrid(s.bs_panel.n_cols, s.bs_panel.n_rows, s.o1, s.o2)
    params = (etypeii_params(s.etypeii_combination, s.rank, s.n3)
              if "etypeii" in s.schemes else None)
    freqs = s.freqs_hz
    times = np.array([0.0, s.delay_ms * 1e-3])
    h = ctx.generate(s, drop, times, freqs)
    h_csi = ChannelTensor(h.data[:1], h.times_s[:1], freqs)
    h_data = h.data[1]
    results = []
    for k, snr in enumerate(s.snr_db):
        noise = 10.0 ** (-snr / 10.0)
        est = estimate_channel(
            h_csi, s.estimation, "csirs", noise,
            seed_stream(s.seed, ("drop", drop, "snr", k, "csirs")))
        h_est = est.data[0]
        for scheme in s.schemes:
            if scheme == "eigen":
                prec = _eigen_precoder(_sb_representative(h_est, s.n3),
                                       s.rank)
            elif scheme == "typei":
                prec = _typei_precoder(h_est, s, grid, noise, curve)
            elif scheme == "etypeii":
                prec = _etypeii_precoder(h_est, s, grid, params)
            else:
                pmi = random_pmi(grid, s.rank,
                                 seed_stream(s.seed, ("drop", drop, "pmi")))
                prec = build_typeI(pmi, grid)
            w = _per_prb_precoders(prec, s.n_prb)
            g_true = h_data @ w
            ghat = estimate_channel(
                ChannelTensor(g_true[None], times[1:], freqs), s.estimation,
                "dmrs", noise,
                seed_stream(s.seed, ("drop", drop, "snr", k, "dmrs"))).data[0]
            fh = lmmse_filter(ghat, noise)
            gamma = per_layer_sinr(g_true, fh, noise)
            eff_db = miesm_effective_sinr(gamma.ravel(), curve)
            n_rt, ok = harq_chase(
                eff_db, bler, s.n_rt_max,
                seed_stream(s.seed, ("drop", drop, "snr", k, "harq")))
            se, norm = spectral_efficiency(s.mcs, s.rank, n_rt, ok)
            results.append(LinkResult(scheme, float(snr), eff_db, n_rt, ok,
                                      se, norm))
    return results


def _sweep_drop_guarded(args):
    s, drop = args
    try:
        return _sweep_drop(s, drop)
    except Exception as exc:
        raise DropFailure(f"scenario {s.name!r}, drop {drop}: "
                          f"{type(exc).__name__}: {exc}") from exc


@dataclass(frozen=True)
class SweepResult:
    """Aggregated throughput sweep plus the per-drop result log."""

    scenario_name: str
    schemes: tuple
    snr_db: tuple
    throughput_mean: np.ndarray     # (schemes, snrs)
    throughput_ci: np.ndarray       # bootstrap 95% half-width, 0 if 1 drop
    drop_log: tuple                 # per drop: tuple of LinkResult

    def __post_init__(self):
        mean = np.asarray(self.throughput_mean, dtype=float)
        if np.any(mean < 0) or np.any(mean > 1):
            raise ValueError("mean throughput must lie in [0, 1]")

    def mean_curve(self, scheme: str) -> np.ndarray:
        return self.throughput_mean[self.schemes.index(scheme)]

    def crossing_snr_db(self, scheme: str, level: float) -> float:
        """SNR where the mean curve first reaches ``level`` (linear
        interpolation); NaN if it never does."""
        y = self.mean_curve(scheme)
        x = np.asarray(self.snr_db)
        if y[0] >= level:
            return float(x[0])
        for i in range(y.size - 1):
            if y[i] < level <= y[i + 1]:
                frac = (level - y[i]) / (y[i + 1] - y[i])
                return float(x[i] + frac * (x[i + 1] - x[i]))
        return float("nan")

    def to_csv(self, path):
        with open(path, "w", encoding="utf-8") as f:
            f.write("scheme,snr_db,throughput_mean,throughput_ci\n")
            for i, scheme in enumerate(self.schemes):
                for j, snr in enumerate(self.snr_db):
                    f.write(f"{scheme},{snr:.3f},"
                            f"{self.throughput_mean[i, j]:.6f},"
                            f"{self.throughput_ci[i, j]:.6f}\n")

    def detail_csv(self, path):
        with open(path, "w", encoding="utf-8") as f:
            f.write("drop,scheme,snr_db,effective_sinr_db,retransmissions,"
                    "success,normalized_throughput\n")
            for d, rows in enumerate(self.drop_log):
                for r in rows:
                    f.write(f"{d},{r.scheme},{r.snr_db:.3f},"
                            f"{r.effective_sinr_db:.6f},{r.retransmissions},"
                            f"{int(r.success)},"
                            f"{r.normalized_throughput:.6f}\n")


def _bootstrap_half_width(values: np.ndarray, rng, n_boot: int = 1000):
    if values.size < 2:
        return 0.0
    idx = rng.integers(0, values.size, size=(n_boot, values.size))
    means = values[idx].mean(axis=1)
    lo, hi = np.quantile(means, [0.025, 0.975])
    return float((hi - lo) / 2.0)


def run_sweep(s: Scenario, workers: int = 1) -> SweepResult:
    """Monte-Carlo throughput sweep over drops, schemes, and SNRs."""
    tasks = [(s, d) for d in range(s.drops)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            drop_log = list(pool.map(_sweep_drop_guarded, tasks))
    else:
        drop_log = [_sweep_drop_guarded(t) for t in tasks]
    table = {(r.scheme, r.snr_db): [] for rows in drop_log for r in rows}
    for rows in drop_log:
        for r in rows:
            table[(r.scheme, r.snr_db)].append(r.normalized_throughput)
    mean = np.zeros((len(s.schemes), len(s.snr_db)))
    ci = np.zeros_like(mean)
    for i, scheme in enumerate(s.schemes):
        for j, snr in enumerate(s.snr_db):
            v = np.asarray(table[(scheme, snr)], dtype=float)
            mean[i, j] = v.mean()
            ci[i, j] = _bootstrap_half_width(
                v, seed_stream(s.seed, ("bootstrap", scheme, j)))
    return SweepResult(scenario_name=s.name, schemes=s.schemes,
                       snr_db=s.snr_db, throughput_mean=mean,
                       throughput_ci=ci,
                       drop_log=tuple(tuple(rows) for rows in drop_log))


def run_bartlett(s: Scenario, duration_ms: float = 5.0, re_stride: int = 1,
                 drop: int = 0):
    """Time-evolving spatial profile over the serving-side array.

    The channel is generated on a symbol-spaced time grid and the
    steered dimension is the wide (BS) array, so the profile tracks the
    departure directions the codebooks try to exploit.  Returns the
    profile and its decorrelation curve.
    """
    ctx = _context_for(s)
    times = np.arange(0.0, duration_ms * 1e-3 + 1e-12, SYMBOL_S)
    freqs = s.freqs_hz[::re_stride]
    h = ctx.generate(s, drop, times, freqs)
    steered = ChannelTensor(np.swapaxes(h.data, 2, 3), h.times_s, h.freqs_hz)
    profile = bartlett_profile(steered, layout=s.bs_panel)
    return profile, profile_decorrelation(profile)


def _haar_precoder(n_tx: int, rank: int, rng) -> np.ndarray:
    g = rng.standard_normal((n_tx, rank)) + 1j * rng.standard_normal(
        (n_tx, rank))
    q, r = np.linalg.qr(g)
    q = q * np.sign(np.real(np.diagonal(r)))
    return q / math.sqrt(rank)


def layer_sinr_samples(s: Scenario, snr_db: float, drops: int | None = None,
                       precoding: str = "svd") -> EigenmodeReport:
    """Per-layer SINR samples over drops at one SNR.

    ``"svd"`` transmits on the exact singular vectors (interference
    free); ``"random"`` applies a Haar-random unitary precoder with an
    LMMSE receiver, whose layers are exchangeable by construction.
    """
    if precoding not in ("svd", "random"):
        raise ValueError(f"unknown precoding {precoding!r}")
    ctx = _context_for(s)
    n = s.drops if drops is None else drops
    noise = 10.0 ** (-snr_db / 10.0)
    reports, rows = [], []
    for d in range(n):
        h = ctx.generate(s, d, np.array([0.0]), np.array([0.0]))
        if precoding == "svd":
            reports.append(svd_layer_sinr(h, s.rank, snr_db))
            continue
        w = _haar_precoder(h.n_tx, s.rank,
                           seed_stream(s.seed, ("layer-precoder", d)))
        g = h.data[0, 0] @ w
        gamma = per_layer_sinr(g, lmmse_filter(g, noise), noise)
        rows.append(10.0 * np.log10(np.maximum(gamma, 1e-300)))
    if precoding == "svd":
        return combine_reports(reports)
    return EigenmodeReport(sinr_db=np.asarray(rows))
