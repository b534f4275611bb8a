"""3GPP codebook construction and PMI selection.

Implements the oversampled 2D-DFT beam grid shared by both codebooks,
Type-I precoders (wideband or per-subband co-phasing), and the Rel-16
eType-II pipeline: spatial-domain beam selection on the wideband
covariance, per-subband beam-combining coefficients from an EVD,
frequency-domain DFT compression, coefficient quantization, and
reconstruction with per-subband Gram normalization.

Port ordering convention: within one polarization, port ``k1 * N2 + k2``
sits at column ``k1``, row ``k2`` of the panel; the second polarization
occupies the next ``N1 N2`` ports.  This matches the panel port maps in
:mod:`mimolink.antenna`.
"""

from __future__ import annotations

import functools
import json
import math
from dataclasses import dataclass

import numpy as np

from .linkabs import MiCurve, lmmse_filter, per_layer_sinr
from .resources import data_text
from .seeding import seed_stream

__all__ = [
    "IndexOutOfRange",
    "EigDecompositionFailure",
    "SingularNormalization",
    "DftGrid",
    "TypeIPmi",
    "ETypeIIPmi",
    "QuantizedBcc",
    "Precoder",
    "ETypeIIParams",
    "PmiReport",
    "dft_beam",
    "build_typeI",
    "select_beams",
    "select_cophase",
    "select_typei",
    "etypeII_bcc",
    "select_fd_basis",
    "fd_basis_matrix",
    "quantize_bcc",
    "reconstruct_etypeII",
    "random_pmi",
    "etypeii_params",
]

COPHASE = (1 + 0j, 1j, -1 + 0j, -1j)

# Second-beam offsets (beam steps, i.e. k1/O1 and k2/O2 of the i13 field
# in TS 38.214 Table 5.2.2.2.1-4) available to rank 3-4 Type-I.
TYPEI_PAIR_OFFSETS = ((1, 0), (0, 1), (1, 1), (2, 0))


class IndexOutOfRange(ValueError):
    """Beam or rotation index outside the DFT grid."""


class EigDecompositionFailure(ValueError):
    """Eigendecomposition of a subband Gram matrix failed."""


class SingularNormalization(ValueError):
    """A per-subband precoder matrix is numerically rank deficient."""


@dataclass(frozen=True)
class DftGrid:
    """Oversampled DFT beam grid over a dual-polarized panel.

    ``n1``/``n2`` are the port counts per dimension of one polarization,
    ``o1``/``o2`` the oversampling factors; the grid holds
    ``n1 o1 x n2 o2`` beams in ``o1 o2`` mutually orthogonal subsets.
    """

    n1: int
    n2: int
    o1: int = 4
    o2: int = 4

    def __post_init__(self):
        if min(self.n1, self.n2, self.o1, self.o2) < 1:
            raise ValueError("grid dimensions must be at least 1")

    @property
    def ports_per_pol(self) -> int:
        return self.n1 * self.n2

    def beam_index(self, n1: int, n2: int) -> int:
        return n1 * self.n2 + n2

    def rotation_index(self, q1: int, q2: int) -> int:
        return q1 * self.o2 + q2


def dft_beam(grid: DftGrid, n1: int, n2: int, q1: int, q2: int) -> np.ndarray:
    """Rotated DFT beam ``u'(n1, q1) kron u''(n2, q2)``, length N1 N2.

    All entries have unit magnitude; beams sharing a rotation are
    mutually orthogonal.
    """
    if not (0 <= n1 < grid.n1 and 0 <= n2 < grid.n2):
        raise IndexOutOfRange(f"beam ({n1}, {n2}) outside {grid.n1}x{grid.n2}")
    if not (0 <= q1 < grid.o1 and 0 <= q2 < grid.o2):
        raise IndexOutOfRange(f"rotation ({q1}, {q2}) outside "
                              f"{grid.o1}x{grid.o2}")
    u1 = np.exp(2j * np.pi * (n1 + q1 / grid.o1) * np.arange(grid.n1)
                / grid.n1)
    u2 = np.exp(2j * np.pi * (n2 + q2 / grid.o2) * np.arange(grid.n2)
                / grid.n2)
    return np.kron(u1, u2)


def _beam_matrix(grid: DftGrid, rotation, beams) -> np.ndarray:
    q1, q2 = rotation
    return np.stack([dft_beam(grid, n1, n2, q1, q2) for n1, n2 in beams],
                    axis=1)


@dataclass(frozen=True)
class Precoder:
    """Per-subband precoding matrices, shape (n_sb, 2 N1 N2, rank).

    A single-subband instance represents a wideband precoder.  Columns
    are mutually orthogonal with squared norm 1/rank, so the per-subband
    Gram matrix equals (1/rank) I to 1e-10 (checked at construction).
    """

    matrices: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrices, dtype=complex)
        if m.ndim != 3:
            raise ValueError("expected (n_sb, n_ports, rank) matrices")
        if not np.all(np.isfinite(m)):
            raise ValueError("precoder contains non-finite entries")
        gram = np.conj(np.swapaxes(m, -1, -2)) @ m
        target = np.eye(m.shape[-1]) / m.shape[-1]
        if np.max(np.abs(gram - target)) > 1e-10:
            raise ValueError("per-subband Gram deviates from (1/rank) I")
        object.__setattr__(self, "matrices", m)

    @property
    def n_sb(self) -> int:
        return self.matrices.shape[0]

    @property
    def rank(self) -> int:
        return self.matrices.shape[2]

    def sb(self, t: int) -> np.ndarray:
        """Matrix for subband ``t`` (wideband instances broadcast)."""
        return self.matrices[0 if self.n_sb == 1 else t]


@dataclass(frozen=True)
class TypeIPmi:
    """Type-I PMI: beam indices plus per-polarization co-phasing.

    Ranks 1-2 carry one beam.  Ranks 3-4 come in two codebook shapes:
    below 16 ports, two orthogonal beams (the second offset from the
    first per the i13 table); from 16 ports up, a single half-aperture
    beam over the first N1/2 columns together with ``pair_phase`` p,
    the i13 index of the inter-half phase ``theta = exp(j pi p / 4)``.
    """

    rank: int
    beams: tuple
    rotation: tuple
    cophase: tuple
    pair_phase: int = None

    def __post_init__(self):
        if not 1 <= self.rank <= 4:
            raise ValueError("rank must be 1..4")
        beams = tuple((int(a), int(b)) for a, b in self.beams)
        if self.pair_phase is None:
            needed = 1 if self.rank <= 2 else 2
            if len(beams) != needed:
                raise ValueError(f"rank {self.rank} needs {needed} beam(s)")
        else:
            if self.rank <= 2:
                raise ValueError("pair_phase applies to ranks 3-4 only")
            if len(beams) != 1:
                raise ValueError("pair-phase PMIs carry a single beam")
            if not 0 <= int(self.pair_phase) < 4:
                raise ValueError("pair_phase must be in 0..3")
            object.__setattr__(self, "pair_phase", int(self.pair_phase))
        if len(set(beams)) != len(beams):
            raise ValueError("beams must be distinct")
        cophase = tuple(int(c) for c in self.cophase)
        if not cophase or any(not 0 <= c < 4 for c in cophase):
            raise ValueError("co-phasing indices must be in 0..3")
        object.__setattr__(self, "beams", beams)
        object.__setattr__(self, "rotation",
                           (int(self.rotation[0]), int(self.rotation[1])))
        object.__setattr__(self, "cophase", cophase)


def build_typeI(pmi: TypeIPmi, grid: DftGrid) -> Precoder:
    """Assemble the Type-I precoder for a PMI.

    Rank 1 is ``[u; phi u] / sqrt(2 N1 N2)``; rank 2 pairs the same beam
    with co-phases (+phi, -phi); ranks 3-4 below 16 ports add the second
    orthogonal beam the same way.  Pair-phase PMIs (16+ ports, ranks
    3-4) expand a half-aperture beam as ``m = [v; theta v]`` and emit
    the sign family ``[m; phi m], [m; -phi m], [m-; phi m-], ...`` with
    ``m- = [v; -theta v]``.  Columns always have a (1/rank) I Gram; the
    returned precoder has one subband per co-phasing entry.
    """
    q1, q2 = pmi.rotation
    scale = 1.0 / math.sqrt(2 * grid.ports_per_pol * pmi.rank)
    if pmi.pair_phase is not None:
        half = _half_grid(grid)
        n1, n2 = pmi.beams[0]
        v = dft_beam(half, n1, n2, q1, q2)
        theta = np.exp(1j * np.pi * pmi.pair_phase / 4)
        m_pos = np.concatenate([v, theta * v])
        m_neg = np.concatenate([v, -theta * v])
        mats = []
        for c in pmi.cophase:
            phi = COPHASE[c]
            cols = [np.concatenate([m_pos, phi * m_pos]),
                    np.concatenate([m_pos, -phi * m_pos]),
                    np.concatenate([m_neg, phi * m_neg]),
                    np.concatenate([m_neg, -phi * m_neg])]
            mats.append(np.stack(cols[:pmi.rank], axis=1) * scale)
        return Precoder(np.stack(mats))
    beams = [dft_beam(grid, n1, n2, q1, q2) for n1, n2 in pmi.beams]
    mats = []
    for c in pmi.cophase:
        phi = COPHASE[c]
        cols = []
        for b, u in enumerate(beams):
            cols.append(np.concatenate([u, phi * u]))
            if pmi.rank - 2 * b >= 2:
                cols.append(np.concatenate([u, -phi * u]))
        mats.append(np.stack(cols[:pmi.rank], axis=1) * scale)
    return Precoder(np.stack(mats))


def _half_grid(grid: DftGrid) -> DftGrid:
    """Beam grid over the first half of the azimuth columns."""
    if grid.n1 % 2 or grid.n1 < 2:
        raise ValueError("pair-phase PMIs need an even column count")
    return DftGrid(grid.n1 // 2, grid.n2, grid.o1, grid.o2)


def select_beams(r_pol_sum: np.ndarray, grid: DftGrid,
                 l_beams: int) -> tuple:
    """Pick the rotation and L orthogonal beams capturing most power.

    ``r_pol_sum`` is the polarization-summed wideband covariance
    (N1 N2 x N1 N2).  Beam power is ``u^H R u``; per rotation the top-L
    orthogonal beams are kept and the rotation with the largest captured
    sum wins.  Ties break toward the lowest beam index ``n1 N2 + n2``
    and then the lowest rotation index ``q1 O2 + q2``.
    """
    r = np.asarray(r_pol_sum, dtype=complex)
    p = grid.ports_per_pol
    if r.shape != (p, p):
        raise ValueError(f"covariance must be {p}x{p}")
    if not 1 <= l_beams <= p:
        raise ValueError("beam count must be in 1..N1N2")
    all_beams = [(n1, n2) for n1 in range(grid.n1) for n2 in range(grid.n2)]
    best = None
    for q1 in range(grid.o1):
        for q2 in range(grid.o2):
            b = _beam_matrix(grid, (q1, q2), all_beams)
            metric = np.einsum("ip,ij,jp->p", b.conj(), r, b,
                               optimize=True).real
            order = np.argsort(-metric, kind="stable")[:l_beams]
            power = float(metric[order].sum())
            if best is None or power > best[0]:
                best = (power, (q1, q2),
                        tuple(all_beams[int(i)] for i in order))
    _, rotation, beams = best
    return rotation, beams


def select_cophase(h: np.ndarray, grid: DftGrid, rank: int, beams, rotation,
                   noise_over_p: float, mi_curve: MiCurve, n3: int = None,
                   mode: str = "wb") -> TypeIPmi:
    """Choose Type-I co-phasing by average mutual information.

    ``h`` holds per-PRB channels (n_prb, n_rx, 2 N1 N2).  Each candidate
    co-phase is applied, the LMMSE per-layer SINR computed against the
    same channel, mapped through the MI curve, and averaged; ``"wb"``
    mode takes one argmax over the whole band, ``"sb"`` mode one per
    subband (``n3`` evenly dividing the PRB count).  Ties break toward
    the lowest co-phase index.
    """
    h = np.asarray(h, dtype=complex)
    if h.ndim != 3:
        raise ValueError("expected (n_prb, n_rx, n_ports) channels")
    if mode not in ("wb", "sb"):
        raise ValueError(f"unknown co-phasing mode {mode!r}")
    if mode == "sb" and (n3 is None or h.shape[0] % n3):
        raise ValueError("SB mode needs n3 dividing the PRB count")
    mi = _cophase_mi(h, grid, rank, beams, rotation, noise_over_p, mi_curve)
    cophase, _ = _best_cophase(mi, n3, mode)
    return TypeIPmi(rank, beams, rotation, cophase)


def _cophase_mi(h, grid, rank, beams, rotation, noise_over_p, mi_curve,
                pair_phase=None, candidates=(0, 1, 2, 3)):
    """Per-candidate co-phase MI table, shape (n_cand, n_prb, rank)."""
    mi = []
    for c in candidates:
        w = build_typeI(TypeIPmi(rank, beams, rotation, (c,),
                                 pair_phase=pair_phase),
                        grid).matrices[0]
        g = h @ w
        gam = per_layer_sinr(g, lmmse_filter(g, noise_over_p), noise_over_p)
        with np.errstate(divide="ignore"):
            gam_db = 10.0 * np.log10(np.maximum(gam, 1e-300))
        mi.append(mi_curve.forward(gam_db))
    return np.stack(mi)


def _best_cophase(mi, n3, mode):
    """Argmax co-phase tuple and its achieved band-mean MI."""
    if mode == "wb":
        per_band = mi.mean(axis=(1, 2))
        best = int(np.argmax(per_band))
        return (best,), float(per_band[best])
    per_sb = mi.reshape(mi.shape[0], n3, -1).mean(axis=2)
    picks = np.argmax(per_sb, axis=0)
    return (tuple(int(c) for c in picks),
            float(per_sb[picks, np.arange(n3)].mean()))


def select_typei(h: np.ndarray, grid: DftGrid, rank: int,
                 noise_over_p: float, mi_curve: MiCurve, n3: int = None,
                 mode: str = "wb") -> TypeIPmi:
    """Full Type-I PMI selection against per-PRB channels.

    The leading beam maximizes the wideband polarization-summed
    covariance power.  Ranks 1-2 then just pick co-phasing; ranks 3-4
    scan the four standard second-beam offsets (TS 38.214 i13, see
    ``TYPEI_PAIR_OFFSETS``) jointly with the shared co-phase, keeping
    the pair with the best band-mean MI.  Offsets that wrap onto the
    leading beam on small panels are skipped; ties break toward the
    earlier offset.
    """
    h = np.asarray(h, dtype=complex)
    if h.ndim != 3:
        raise ValueError("expected (n_prb, n_rx, n_ports) channels")
    if mode not in ("wb", "sb"):
        raise ValueError(f"unknown co-phasing mode {mode!r}")
    if mode == "sb" and (n3 is None or h.shape[0] % n3):
        raise ValueError("SB mode needs n3 dividing the PRB count")
    p = grid.ports_per_pol
    r = np.einsum("tra,trb->ab", h.conj(), h)
    r_pol = r[:p, :p] + r[p:, p:]
    if rank > 2 and 2 * p >= 16 and grid.n1 % 2 == 0:
        return _select_typei_pair(h, grid, rank, r_pol, noise_over_p,
                                  mi_curve, n3, mode)
    rotation, (lead,) = select_beams(r_pol, grid, 1)
    if rank <= 2:
        mi = _cophase_mi(h, grid, rank, (lead,), rotation, noise_over_p,
                         mi_curve)
        cophase, _ = _best_cophase(mi, n3, mode)
        return TypeIPmi(rank, (lead,), rotation, cophase)
    best = None
    seen = {lead}
    for k1, k2 in TYPEI_PAIR_OFFSETS:
        second = ((lead[0] + k1) % grid.n1, (lead[1] + k2) % grid.n2)
        if second in seen:
            continue
        seen.add(second)
        mi = _cophase_mi(h, grid, rank, (lead, second), rotation,
                         noise_over_p, mi_curve)
        cophase, score = _best_cophase(mi, n3, mode)
        if best is None or score > best[0]:
            best = (score, second, cophase)
    if best is None:
        raise ValueError("panel too small for two orthogonal beams")
    _, second, cophase = best
    return TypeIPmi(rank, (lead, second), rotation, cophase)


def _select_typei_pair(h, grid, rank, r_pol, noise_over_p, mi_curve, n3,
                       mode):
    """Rank 3-4 selection for the 16+ port half-aperture codebook.

    The rotation and half-beam maximize the covariance power of the
    expanded vector ``[v; theta v]`` (best theta per beam); the
    pair-phase and shared co-phase then maximize mean MI.  Co-phases
    are scanned over {1, j} only: the sign family already contains
    ``-phi`` columns, so 2 and 3 duplicate 0 and 1.
    """
    half = _half_grid(grid)
    hp = half.ports_per_pol
    r_diag = r_pol[:hp, :hp] + r_pol[hp:, hp:]
    r_cross = r_pol[:hp, hp:]
    thetas = np.exp(1j * np.pi * np.arange(4) / 4)
    best = None
    for q1 in range(grid.o1):
        for q2 in range(grid.o2):
            for n1 in range(half.n1):
                for n2 in range(half.n2):
                    v = dft_beam(half, n1, n2, q1, q2)
                    base = float((v.conj() @ r_diag @ v).real)
                    cross = complex(v.conj() @ r_cross @ v)
                    power = base + 2 * np.max((thetas * cross).real)
                    if best is None or power > best[0]:
                        best = (power, (q1, q2), (n1, n2))
    _, rotation, beam = best
    best = None
    for p in range(4):
        mi = _cophase_mi(h, grid, rank, (beam,), rotation, noise_over_p,
                         mi_curve, pair_phase=p, candidates=(0, 1))
        cophase, score = _best_cophase(mi, n3, mode)
        if best is None or score > best[0]:
            best = (score, p, cophase)
    _, pair_phase, cophase = best
    return TypeIPmi(rank, (beam,), rotation, cophase, pair_phase=pair_phase)


def etypeII_bcc(h_eff: np.ndarray, rank: int) -> np.ndarray:
    """Per-layer beam-combining coefficients, shape (rank, 2L, N3).

    ``h_eff`` holds the beam-projected channel ``H_t W1`` per subband,
    shape (N3, n_rx, 2L).  Layer ``l`` of subband ``t`` is the
    eigenvector of ``h^H h`` for the (l+1)-th largest eigenvalue,
    phase-normalized so its largest-magnitude entry is real positive.
    """
    h = np.asarray(h_eff, dtype=complex)
    if h.ndim != 3:
        raise ValueError("expected (n_sb, n_rx, 2L) effective channels")
    if not np.all(np.isfinite(h)):
        raise EigDecompositionFailure("effective channel has non-finite "
                                      "entries")
    if not 1 <= rank <= h.shape[2]:
        raise ValueError("rank must be in 1..2L")
    gram = np.conj(np.swapaxes(h, -1, -2)) @ h
    try:
        _, vecs = np.linalg.eigh(gram)
    except np.linalg.LinAlgError as exc:
        raise EigDecompositionFailure(str(exc)) from None
    top = vecs[:, :, ::-1][:, :, :rank]            # (n_sb, 2L, rank)
    peak = np.take_along_axis(
        top, np.argmax(np.abs(top), axis=1)[:, None, :], axis=1)
    top = top * (np.conj(peak) / np.abs(peak))
    return np.transpose(top, (2, 1, 0))


def fd_basis_matrix(n3: int, indices) -> np.ndarray:
    """DFT delay basis ``W_f``, shape (N3, len(indices)).

    Column ``m`` holds ``exp(2j pi t n3_m / N3)`` over subbands ``t``;
    compression is ``W2 @ W_f`` and synthesis ``W2_tilde @ W_f^H``.
    """
    idx = np.asarray(list(indices), dtype=int)
    if np.any(idx < 0) or np.any(idx >= n3):
        raise IndexOutOfRange(f"FD indices must be in 0..{n3 - 1}")
    return np.exp(2j * np.pi * np.outer(np.arange(n3), idx) / n3)


def select_fd_basis(w2hat: np.ndarray, m_fd: int) -> tuple:
    """Greedy FD delay selection for one layer's (2L, N3) coefficients.

    Picks the ``m_fd`` delay indices with the largest projection energy
    ``||W2hat y_n3||^2``; ties break toward the lowest index, so DC wins
    whenever it is among the maxima.
    """
    w = np.asarray(w2hat, dtype=complex)
    n3 = w.shape[1]
    if not 1 <= m_fd <= n3:
        raise ValueError("m_fd must be in 1..N3")
    proj = w @ fd_basis_matrix(n3, range(n3))
    metric = (np.abs(proj) ** 2).sum(axis=0)
    order = np.argsort(-metric, kind="stable")
    return tuple(int(i) for i in order[:m_fd])


@dataclass(frozen=True)
class QuantizedBcc:
    """Quantized nonzero coefficients of one layer's compressed BCC.

    ``rows``/``cols`` give the kept positions inside the (2L, M) matrix,
    ``values`` the reconstructed complex coefficients.  ``amp_idx`` and
    ``phase_idx`` are None when the quantizer ran with unlimited levels
    (lossless keep-only-support mode).
    """

    shape: tuple
    rows: tuple
    cols: tuple
    values: tuple
    ref_amp: tuple
    amp_idx: tuple = None
    phase_idx: tuple = None

    def __post_init__(self):
        if not (len(self.rows) == len(self.cols) == len(self.values)):
            raise ValueError("support arrays must have matching lengths")
        object.__setattr__(self, "shape",
                           (int(self.shape[0]), int(self.shape[1])))

    @property
    def n_nonzero(self) -> int:
        return len(self.values)

    def dense(self) -> np.ndarray:
        out = np.zeros(self.shape, dtype=complex)
        out[list(self.rows), list(self.cols)] = self.values
        return out


def quantize_bcc(w2bar: np.ndarray, k_nz: int, amp_levels: int = 8,
                 phase_levels: int = 16,
                 amp_step_db: float = 1.5) -> QuantizedBcc:
    """Keep and quantize the strongest compressed coefficients.

    The ``k_nz`` largest-magnitude entries of the (2L, M) matrix are
    kept (ties toward the lowest row-major position); each is quantized
    relative to its polarization's reference amplitude (the largest kept
    magnitude in that half of the rows) on an ``amp_levels``-point grid
    in ``amp_step_db`` steps plus a uniform ``phase_levels``-point phase
    constellation.  ``amp_levels=None`` (with ``phase_levels=None``)
    keeps exact values, reducing the op to support selection.
    """
    w = np.asarray(w2bar, dtype=complex)
    if w.ndim != 2:
        raise ValueError("expected a (2L, M) coefficient matrix")
    if not 1 <= k_nz <= w.size:
        raise ValueError("k_nz must be in 1..2LM")
    sel = np.argsort(-np.abs(w).ravel(), kind="stable")[:k_nz]
    rows, cols = np.unravel_index(sel, w.shape)
    vals = w[rows, cols]
    half = w.shape[0] // 2
    pol = (rows >= half).astype(int)
    ref = np.zeros(2)
    for p in (0, 1):
        if np.any(pol == p):
            ref[p] = np.abs(vals[pol == p]).max()
    if amp_levels is None or phase_levels is None:
        return QuantizedBcc(shape=w.shape, rows=tuple(map(int, rows)),
                            cols=tuple(map(int, cols)),
                            values=tuple(complex(v) for v in vals),
                            ref_amp=(float(ref[0]), float(ref[1])))
    with np.errstate(divide="ignore", invalid="ignore"):
        drop_db = -20.0 * np.log10(np.abs(vals)
                                   / np.where(ref[pol] > 0, ref[pol], 1.0))
    amp_idx = np.clip(np.round(np.nan_to_num(drop_db, nan=np.inf,
                                             posinf=np.inf) / amp_step_db),
                      0, amp_levels - 1).astype(int)
    phase_idx = np.mod(np.round(np.angle(vals) * phase_levels
                                / (2 * np.pi)), phase_levels).astype(int)
    quant = (ref[pol] * 10.0 ** (-amp_step_db * amp_idx / 20.0)
             * np.exp(2j * np.pi * phase_idx / phase_levels))
    quant[np.abs(vals) == 0] = 0.0
    return QuantizedBcc(shape=w.shape, rows=tuple(map(int, rows)),
                        cols=tuple(map(int, cols)),
                        values=tuple(complex(v) for v in quant),
                        ref_amp=(float(ref[0]), float(ref[1])),
                        amp_idx=tuple(map(int, amp_idx)),
                        phase_idx=tuple(map(int, phase_idx)))


@dataclass(frozen=True)
class ETypeIIPmi:
    """eType-II PMI: rotation, L spatial beams, per-layer FD delay
    indices and quantized combining coefficients."""

    rank: int
    rotation: tuple
    beams: tuple
    fd_indices: tuple
    coefficients: tuple

    def __post_init__(self):
        if not 1 <= self.rank <= 4:
            raise ValueError("rank must be 1..4")
        beams = tuple((int(a), int(b)) for a, b in self.beams)
        if len(set(beams)) != len(beams):
            raise ValueError("beams must be distinct")
        fd = tuple(tuple(int(i) for i in layer) for layer in self.fd_indices)
        if len(fd) != self.rank or len(self.coefficients) != self.rank:
            raise ValueError("need FD indices and coefficients per layer")
        for layer, coef in zip(fd, self.coefficients):
            if len(set(layer)) != len(layer):
                raise ValueError("FD indices must be distinct per layer")
            if coef.shape != (2 * len(beams), len(layer)):
                raise ValueError("coefficient shape mismatch")
        object.__setattr__(self, "beams", beams)
        object.__setattr__(self, "fd_indices", fd)
        object.__setattr__(self, "rotation",
                           (int(self.rotation[0]), int(self.rotation[1])))


def reconstruct_etypeII(pmi: ETypeIIPmi, grid: DftGrid,
                        n3: int) -> Precoder:
    """Synthesize per-subband precoders ``W1 W2_tilde Wf^H``.

    Per subband the stacked layer columns are orthonormalized with a
    symmetric (Loewdin) factor and scaled to a (1/rank) I Gram, which
    preserves column directions exactly when they are already
    orthogonal.

    Raises
    ------
    SingularNormalization
        If a subband's column set is numerically rank deficient.
    """
    b = _beam_matrix(grid, pmi.rotation, pmi.beams)
    p, l_beams = b.shape
    w1 = np.zeros((2 * p, 2 * l_beams), dtype=complex)
    w1[:p, :l_beams] = b
    w1[p:, l_beams:] = b
    cols = []
    for layer in range(pmi.rank):
        wf = fd_basis_matrix(n3, pmi.fd_indices[layer])
        w2 = pmi.coefficients[layer].dense()
        cols.append(w1 @ (w2 @ wf.conj().T))       # (2P, N3)
    raw = np.stack(cols, axis=2).transpose(1, 0, 2)  # (N3, 2P, rank)
    out = np.empty_like(raw)
    for t in range(n3):
        gram = raw[t].conj().T @ raw[t]
        w, v = np.linalg.eigh(gram)
        if w[0] <= 1e-12 * max(float(w[-1]), 1e-300):
            raise SingularNormalization(f"subband {t} precoder is rank "
                                        "deficient")
        inv_root = (v / np.sqrt(w)) @ v.conj().T
        out[t] = raw[t] @ inv_root / math.sqrt(pmi.rank)
    return Precoder(out)


def random_pmi(grid: DftGrid, rank: int, seed) -> TypeIPmi:
    """Uniform draw over valid wideband Type-I PMIs."""
    rng = seed if isinstance(seed, np.random.Generator) else seed_stream(
        int(seed), ("random-pmi",))
    q1 = int(rng.integers(grid.o1))
    q2 = int(rng.integers(grid.o2))
    if rank > 2 and 2 * grid.ports_per_pol >= 16 and grid.n1 % 2 == 0:
        half = _half_grid(grid)
        flat = int(rng.integers(half.ports_per_pol))
        return TypeIPmi(rank, ((flat // half.n2, flat % half.n2),),
                        (q1, q2), (int(rng.integers(2)),),
                        pair_phase=int(rng.integers(4)))
    flat = int(rng.integers(grid.ports_per_pol))
    lead = (flat // grid.n2, flat % grid.n2)
    beams = [lead]
    if rank > 2:
        pairs = []
        for k1, k2 in TYPEI_PAIR_OFFSETS:
            second = ((lead[0] + k1) % grid.n1, (lead[1] + k2) % grid.n2)
            if second != lead and second not in pairs:
                pairs.append(second)
        if not pairs:
            raise ValueError("panel too small for two orthogonal beams")
        beams.append(pairs[int(rng.integers(len(pairs)))])
    cophase = (int(rng.integers(4)),)
    return TypeIPmi(rank, tuple(beams), (q1, q2), cophase)


@dataclass(frozen=True)
class ETypeIIParams:
    """Resolved eType-II sizing for one rank and subband count."""

    combination: int
    l_beams: int
    beta: float
    m_fd: int
    k_nz: int


@functools.lru_cache(maxsize=None)
def _param_rows() -> dict:
    rows = {}
    for line in data_text("etypeii_params.csv").splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        comb, l_beams, p12, p34, beta = line.split(",")
        rows[int(comb)] = (int(l_beams), float(p12),
                           float(p34) if p34 else None, float(beta))
    return rows


def etypeii_params(combination: int, rank: int, n3: int) -> ETypeIIParams:
    """Resolve (L, M_v, K_NZ) from a paramCombination-r16 index.

    ``M_v = ceil(p_v N3)`` with the rank-dependent density, and
    ``K0 = ceil(beta 2 L M_1)``; the per-layer nonzero budget is ``K0``
    for rank 1 and the even split ``floor(2 K0 / rank)`` (capped at
    ``K0``) of the cross-layer budget otherwise.
    """
    try:
        l_beams, p12, p34, beta = _param_rows()[int(combination)]
    except KeyError:
        raise ValueError(f"unknown paramCombination {combination}") from None
    if not 1 <= rank <= 4:
        raise ValueError("rank must be 1..4")
    p_v = p12 if rank <= 2 else p34
    if p_v is None:
        raise ValueError(f"paramCombination {combination} supports "
                         "ranks 1-2 only")
    m_fd = math.ceil(p_v * n3)
    k0 = math.ceil(beta * 2 * l_beams * math.ceil(p12 * n3))
    k_nz = k0 if rank == 1 else min(k0, (2 * k0) // rank)
    k_nz = min(k_nz, 2 * l_beams * m_fd)
    return ETypeIIParams(combination=int(combination), l_beams=l_beams,
                         beta=beta, m_fd=m_fd, k_nz=k_nz)


@dataclass(frozen=True)
class PmiReport:
    """Loggable PMI summary with a feedback overhead estimate.

    Overhead counts rotation and beam-subset index bits, 2 bits per
    co-phase entry (Type-I), and for eType-II the per-layer FD subset,
    the nonzero-position bitmap, 4 reference-amplitude bits per
    polarization, and amplitude+phase bits per kept coefficient.
    """

    scheme: str
    rank: int
    overhead_bits: int
    payload: dict

    def to_json(self) -> str:
        return json.dumps({"scheme": self.scheme, "rank": self.rank,
                           "overhead_bits": self.overhead_bits,
                           "payload": self.payload}, sort_keys=True)

    @classmethod
    def from_typei(cls, pmi: TypeIPmi, grid: DftGrid) -> "PmiReport":
        beam_choices = (grid.ports_per_pol if pmi.pair_phase is None
                        else grid.ports_per_pol // 2)
        bits = (_index_bits(grid.o1 * grid.o2)
                + len(pmi.beams) * _index_bits(beam_choices)
                + 2 * len(pmi.cophase))
        if pmi.pair_phase is not None:
            bits += 2
        payload = {"beams": [list(b) for b in pmi.beams],
                   "rotation": list(pmi.rotation),
                   "cophase": list(pmi.cophase)}
        if pmi.pair_phase is not None:
            payload["pair_phase"] = pmi.pair_phase
        return cls("typei", pmi.rank, bits, payload)

    @classmethod
    def from_etypeii(cls, pmi: ETypeIIPmi, grid: DftGrid,
                     n3: int) -> "PmiReport":
        l_beams = len(pmi.beams)
        bits = (_index_bits(grid.o1 * grid.o2)
                + _index_bits(math.comb(grid.ports_per_pol, l_beams)))
        layers = []
        for fd, coef in zip(pmi.fd_indices, pmi.coefficients):
            bits += _index_bits(math.comb(n3, len(fd)))
            bits += 2 * l_beams * len(fd)          # nonzero-position bitmap
            bits += 2 * 4                          # reference amplitudes
            per_coef = 0
            if coef.amp_idx is not None:
                per_coef = 3 + 4
            bits += coef.n_nonzero * per_coef
            layers.append({"fd_indices": list(fd),
                           "rows": list(coef.rows),
                           "cols": list(coef.cols),
                           "amp_idx": (list(coef.amp_idx)
                                       if coef.amp_idx is not None else None),
                           "phase_idx": (list(coef.phase_idx)
                                         if coef.phase_idx is not None
                                         else None),
                           "ref_amp": list(coef.ref_amp)})
        payload = {"beams": [list(b) for b in pmi.beams],
                   "rotation": list(pmi.rotation), "layers": layers}
        return cls("etypeii", pmi.rank, bits, payload)


def _index_bits(n_choices: int) -> int:
    return max(1, math.ceil(math.log2(n_choices))) if n_choices > 1 else 0
