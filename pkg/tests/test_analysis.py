"""Bartlett profiles, profile decorrelation, and SVD layer SINR."""

import numpy as np
import pytest

from mimolink import analysis, tdl
from mimolink.antenna import Isotropic, PanelConfig, ShapeMismatch
from mimolink.channel import ChannelTensor
from mimolink.geometry import Orientation


def steering(n, phi_deg, spacing=0.5):
    return np.exp(2j * np.pi * spacing * np.arange(n)
                  * np.sin(np.radians(phi_deg)))


def tensor_from_rx(vectors):
    """Stack rx-space vectors as (1, 1, R, S) with one tx port per vector."""
    data = np.stack(vectors, axis=-1)[None, None, :, :]
    return ChannelTensor(data, [0.0], [0.0])


def test_single_plane_wave_peaks_at_nearest_grid_point():
    h = tensor_from_rx([steering(8, 23.7)])
    profile = analysis.bartlett_profile(h)
    assert profile.peak_azimuth_deg[0, 0] == 24.0


def test_two_waves_give_two_equal_peaks():
    h = tensor_from_rx([steering(8, 30.0), steering(8, -30.0)])
    profile = analysis.bartlett_profile(h)
    p = profile.power_db[0, 0]
    grid = profile.azimuth_deg
    left = p[grid < 0.0]
    right = p[grid > 0.0]
    assert grid[grid < 0.0][np.argmax(left)] == -30.0
    assert grid[grid > 0.0][np.argmax(right)] == 30.0
    assert abs(left.max() - right.max()) < 0.5


def test_profile_invariant_to_global_phase():
    rng = np.random.default_rng(3)
    data = rng.normal(size=(2, 3, 8, 2)) + 1j * rng.normal(size=(2, 3, 8, 2))
    h = ChannelTensor(data, [0.0, 1e-3], [0.0, 1e6, 2e6])
    a = analysis.bartlett_profile(h)
    b = analysis.bartlett_profile(ChannelTensor(data * np.exp(1.234j),
                                                h.times_s, h.freqs_hz))
    assert np.allclose(a.power_db, b.power_db, atol=1e-10)


def test_layout_groups_rows_and_polarizations():
    layout = PanelConfig(n_cols=4, n_rows=2, pol_slants_deg=(45.0, -45.0),
                         orientation=Orientation.from_degrees(0.0, 0.0, 0.0),
                         pattern=Isotropic())
    wave = steering(4, -17.0)
    # every (pol, row) ULA sees the same wave across its columns
    data = np.zeros((1, 1, layout.n_elements, 1), dtype=complex)
    for pol in range(2):
        for row in range(2):
            idx = pol * layout.positions + row + np.arange(4) * 2
            data[0, 0, idx, 0] = wave
    profile = analysis.bartlett_profile(
        ChannelTensor(data, [0.0], [0.0]), layout=layout)
    assert profile.peak_azimuth_deg[0, 0] == -17.0
    with pytest.raises(ShapeMismatch):
        analysis.bartlett_profile(ChannelTensor(data[:, :, :8], [0.0], [0.0]),
                                  layout=layout)


def test_profile_csv_export(tmp_path):
    h = tensor_from_rx([steering(4, 0.0)])
    profile = analysis.bartlett_profile(h, azimuth_grid_deg=[-10.0, 0.0, 10.0])
    out = tmp_path / "profile.csv"
    profile.to_csv(out)
    lines = out.read_text().strip().splitlines()
    assert lines[0] == "time_ms,re_index,azimuth_deg,power_db"
    assert len(lines) == 1 + 3


def test_static_channel_never_decorrelates():
    profile_tdl = tdl.load_tap_profile("tdlc300", max_doppler_hz=0.0)
    corr = tdl.load_correlation_spec("low")
    h = tdl.generate_tdl_channel(profile_tdl, corr, n_tx=2, n_rx=4,
                                 times=np.linspace(0.0, 5e-3, 6),
                                 freqs_hz=np.linspace(0.0, 10e6, 8), seed=1)
    curve = analysis.profile_decorrelation(analysis.bartlett_profile(h))
    assert curve.correlation[0] == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(curve.correlation, 1.0, atol=1e-9)


def test_low_correlation_profiles_decorrelate_within_milliseconds():
    profile_tdl = tdl.load_tap_profile("tdlc300", max_doppler_hz=100.0)
    corr = tdl.load_correlation_spec("low")
    times = np.linspace(0.0, 2.5e-3, 11)
    acc = np.zeros(times.size)
    drops = 25
    for d in range(drops):
        h = tdl.generate_tdl_channel(profile_tdl, corr, n_tx=2, n_rx=4,
                                     times=times,
                                     freqs_hz=np.linspace(0.0, 20e6, 12),
                                     seed=500 + d)
        curve = analysis.profile_decorrelation(analysis.bartlett_profile(h))
        acc += curve.correlation
    mean_corr = acc / drops
    assert mean_corr[0] == pytest.approx(1.0, abs=1e-12)
    assert mean_corr[-1] < 0.6
    assert mean_corr[1] > 0.8


def test_svd_identity_channel_has_equal_layers():
    data = np.broadcast_to(np.eye(4, dtype=complex), (2, 3, 4, 4))
    h = ChannelTensor(np.array(data), [0.0, 1e-3], [0.0, 1e6, 2e6])
    report = analysis.svd_layer_sinr(h, rank=4, snr_db=10.0)
    want = 10.0 * np.log10(10.0 / 4.0)
    assert np.allclose(report.sinr_db, want, atol=1e-9)
    assert report.spread_db == pytest.approx(0.0, abs=1e-9)


def test_svd_rank_deficiency_flag_and_error():
    u = steering(4, 10.0)[:, None]
    v = steering(4, -20.0)[:, None]
    data = (u @ v.conj().T)[None, None]
    h = ChannelTensor(data, [0.0], [0.0])
    report = analysis.svd_layer_sinr(h, rank=2, snr_db=0.0)
    assert np.isneginf(report.sinr_db[0, 1])
    assert np.isfinite(report.sinr_db[0, 0])
    with pytest.raises(analysis.RankTooLarge):
        analysis.svd_layer_sinr(h, rank=2, snr_db=0.0, on_rank_deficient="raise")
    with pytest.raises(analysis.RankTooLarge):
        analysis.svd_layer_sinr(h, rank=5, snr_db=0.0)


def test_svd_layers_sorted_and_combinable(tmp_path):
    rng = np.random.default_rng(11)
    reports = []
    for _ in range(3):
        data = rng.normal(size=(2, 4, 4, 4)) + 1j * rng.normal(size=(2, 4, 4, 4))
        h = ChannelTensor(data, [0.0, 1e-3], np.arange(4.0))
        reports.append(analysis.svd_layer_sinr(h, rank=3, snr_db=5.0))
    for r in reports:
        assert np.all(np.diff(r.sinr_db, axis=1) <= 1e-12)
    combined = analysis.combine_reports(reports)
    assert combined.sinr_db.shape == (3 * 8, 3)
    out = tmp_path / "eigen.csv"
    combined.to_csv(out)
    lines = out.read_text().strip().splitlines()
    assert lines[0] == "drop,layer,sinr_db"
    assert len(lines) == 1 + 24 * 3
