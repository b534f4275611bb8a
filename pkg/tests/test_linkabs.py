import numpy as np
import pytest

from mimolink.channel import ChannelTensor
from mimolink.linkabs import (
    BlerCurve,
    EstimationConfig,
    LinkResult,
    UnknownMcs,
    estimate_channel,
    harq_chase,
    lmmse_filter,
    load_bler_curve,
    load_mcs_table,
    load_mi_curve,
    miesm_effective_sinr,
    per_layer_sinr,
    spectral_efficiency,
)
from mimolink.seeding import seed_stream


def flat_tensor(n_freq=64, n_rx=2, n_tx=2):
    h = np.ones((1, n_freq, n_rx, n_tx), dtype=complex)
    freqs = np.arange(n_freq) * 360e3
    return ChannelTensor(h, np.zeros(1), freqs)


def test_mi_curve_shape_and_limits():
    for q in (2, 4, 6):
        curve = load_mi_curve(q)
        assert curve.mi_bits[0] < 0.05
        assert curve.mi_bits[-1] == pytest.approx(q, abs=1e-6)
        assert np.all(np.diff(curve.mi_bits) >= 0)
        # far outside the sampled domain the forward map saturates
        assert curve.forward(-100.0) == pytest.approx(curve.mi_bits[0])
        assert curve.forward(100.0) == pytest.approx(q, abs=1e-6)


def test_mi_curve_round_trip():
    curve = load_mi_curve(4)
    interior = (curve.mi_bits > 1e-3) & (curve.mi_bits < 4 - 1e-3)
    for x in np.linspace(curve.snr_db[interior][0],
                         curve.snr_db[interior][-1], 41):
        assert curve.inverse(float(curve.forward(x))) == pytest.approx(
            x, abs=0.01)


def test_ideal_estimation_is_identity():
    h = flat_tensor()
    cfg = EstimationConfig(mode="ideal")
    out = estimate_channel(h, cfg, "dmrs", 0.1, 0)
    assert out.data is h.data


def test_dmrs_error_variance_scales_with_res_and_bundle():
    # per-PRB LS over the 6 type-1 DMRS REs, then averaged across the
    # precoding bundle: residual variance noise / (6 * bundle)
    h = flat_tensor(n_freq=4096)
    noise_over_p = 0.5
    errs = {}
    for bundle in (2, 4):
        cfg = EstimationConfig(mode="practical", dmrs_bundle_prbs=bundle)
        est = estimate_channel(h, cfg, "dmrs", noise_over_p,
                               seed_stream(0, ("chest", bundle)))
        errs[bundle] = float(np.mean(np.abs(est.data - h.data) ** 2))
    assert errs[2] == pytest.approx(noise_over_p / 12, rel=0.1)
    assert errs[4] == pytest.approx(noise_over_p / 24, rel=0.1)


def test_csirs_epre_quarters_error_variance():
    h = flat_tensor(n_freq=4096)
    noise_over_p = 0.4
    errs = {}
    for epre in (1.0, 4.0):
        cfg = EstimationConfig(mode="practical", epre_ratio=epre,
                               smoothing_support_s=0.0)
        est = estimate_channel(h, cfg, "csirs", noise_over_p,
                               seed_stream(0, ("chest", epre)))
        errs[epre] = float(np.mean(np.abs(est.data - h.data) ** 2))
    assert errs[1.0] == pytest.approx(noise_over_p, rel=0.1)
    assert errs[4.0] == pytest.approx(noise_over_p / 4, rel=0.1)


def test_csirs_wiener_smoothing_reduces_error():
    rng = seed_stream(0, ("wiener-test",))
    n_freq = 112
    freqs = (np.arange(n_freq) - (n_freq - 1) / 2) * 360e3
    # unit-power two-tap channel (the smoother's prior assumes unit
    # average power), delay well inside the assumed flat-PDP support
    taps = rng.standard_normal(2) + 1j * rng.standard_normal(2)
    taps /= np.sqrt((np.abs(taps) ** 2).sum())
    h = (taps[0] + taps[1] * np.exp(-2j * np.pi * freqs * 0.8e-6))
    h = np.broadcast_to(h[None, :, None, None], (1, n_freq, 1, 1)).copy()
    tensor = ChannelTensor(h, np.zeros(1), freqs)
    noise_over_p = 0.2
    mses = {}
    for support in (0.0, 4.7e-6):
        cfg = EstimationConfig(mode="practical", epre_ratio=1.0,
                               smoothing_support_s=support)
        est = estimate_channel(tensor, cfg, "csirs", noise_over_p,
                               seed_stream(0, ("chest",)))
        mses[support] = float(np.mean(np.abs(est.data - h) ** 2))
    assert mses[4.7e-6] < mses[0.0]


def test_lmmse_identity_and_matched_filter_limits():
    eye = np.eye(4, dtype=complex)
    f = lmmse_filter(eye, 1e-12)
    assert np.allclose(f, eye, atol=1e-6)

    rng = seed_stream(1, ("lmmse",))
    g = rng.standard_normal((4, 2)) + 1j * rng.standard_normal((4, 2))
    n = 1e6
    f = lmmse_filter(g, n)
    assert np.allclose(f * n, g.conj().T, rtol=1e-3)


def test_lmmse_matches_dense_oracle():
    rng = seed_stream(2, ("lmmse",))
    g = rng.standard_normal((5, 4, 3)) + 1j * rng.standard_normal((5, 4, 3))
    f = lmmse_filter(g, 0.3)
    for k in range(5):
        ref = g[k].conj().T @ np.linalg.inv(
            g[k] @ g[k].conj().T + 0.3 * np.eye(4))
        assert np.allclose(f[k], ref, atol=1e-10)


def test_per_layer_sinr_single_layer():
    g = np.zeros((3, 1), dtype=complex)
    g[0, 0] = 1.0
    f = np.zeros((1, 3), dtype=complex)
    f[0, 0] = 1.0
    sinr = per_layer_sinr(g, f, 0.01)
    assert sinr[0] == pytest.approx(100.0, rel=1e-12)


def test_per_layer_sinr_orthogonal_high_snr():
    rng = seed_stream(3, ("sinr",))
    a = rng.standard_normal((4, 2)) + 1j * rng.standard_normal((4, 2))
    q, _ = np.linalg.qr(a)
    g = q[:, :2] * 2.0
    f = lmmse_filter(g, 1e-6)
    sinr = per_layer_sinr(g, f, 1e-6)
    assert sinr[0] == pytest.approx(sinr[1], rel=1e-3)


def test_lmmse_filter_maximizes_own_sinr():
    # the LMMSE filter is the per-layer SINR-optimal linear receiver, so
    # a filter derived from any perturbed estimate can only do worse
    rng = seed_stream(4, ("dominance",))
    noise_over_p = 0.05
    for _ in range(100):
        g = rng.standard_normal((4, 2)) + 1j * rng.standard_normal((4, 2))
        ghat = g + 0.3 * (rng.standard_normal((4, 2))
                          + 1j * rng.standard_normal((4, 2)))
        ideal = per_layer_sinr(g, lmmse_filter(g, noise_over_p), noise_over_p)
        pert = per_layer_sinr(g, lmmse_filter(ghat, noise_over_p),
                              noise_over_p)
        assert np.all(ideal >= pert - 1e-9)


def test_per_layer_sinr_unitary_invariance():
    rng = seed_stream(5, ("unitary",))
    g = rng.standard_normal((4, 3)) + 1j * rng.standard_normal((4, 3))
    ghat = g + 0.1 * (rng.standard_normal((4, 3))
                      + 1j * rng.standard_normal((4, 3)))
    q, _ = np.linalg.qr(rng.standard_normal((4, 4))
                        + 1j * rng.standard_normal((4, 4)))
    base = per_layer_sinr(g, lmmse_filter(ghat, 0.1), 0.1)
    rot = per_layer_sinr(q @ g, lmmse_filter(q @ ghat, 0.1), 0.1)
    assert np.allclose(base, rot, rtol=1e-9)


def test_miesm_fixed_point_and_bounds():
    curve = load_mi_curve(4)
    for gamma_db in (-3.0, 2.0, 8.0, 14.0):
        g = 10 ** (gamma_db / 10) * np.ones(24)
        assert miesm_effective_sinr(g, curve) == pytest.approx(gamma_db,
                                                               abs=0.01)
    mixed = 10 ** (np.array([0.0, 10.0]) / 10)
    eff = miesm_effective_sinr(mixed, curve)
    assert 0.0 < eff < 10.0


def test_miesm_matches_scan_oracle():
    curve = load_mi_curve(2)
    mixed = 10 ** (np.array([0.0, 10.0]) / 10)
    eff = miesm_effective_sinr(mixed, curve)
    target = float(np.mean([curve.forward(0.0), curve.forward(10.0)]))
    grid = np.arange(-10.0, 20.0, 0.001)
    oracle = grid[np.argmin(np.abs(curve.forward(grid) - target))]
    assert eff == pytest.approx(oracle, abs=0.005)


def test_miesm_monotone_in_inputs():
    curve = load_mi_curve(4)
    rng = seed_stream(6, ("miesm",))
    for _ in range(20):
        g = 10 ** (rng.uniform(-5, 15, size=8) / 10)
        base = miesm_effective_sinr(g, curve)
        bumped = g.copy()
        k = int(rng.integers(0, 8))
        bumped[k] *= 2.0
        assert miesm_effective_sinr(bumped, curve) >= base - 1e-9


def step_bler(threshold_db):
    return BlerCurve(mcs=0, q_bits=2, code_rate=0.5,
                     gamma50_db=threshold_db, slope_db=1e-9)


def test_harq_chase_combining_gain():
    # fails the first attempt, then the +3.01 dB Chase boost clears the
    # threshold exactly on the first retransmission
    curve = step_bler(5.0)
    gamma = 5.0 - 10 * np.log10(2.0) + 0.01
    n_rt, ok = harq_chase(gamma, curve, 4, seed_stream(0, ("harq",)))
    assert ok and n_rt == 1


def test_harq_chase_edge_cases():
    always_ok = step_bler(-1e6)
    n_rt, ok = harq_chase(0.0, always_ok, 4, seed_stream(1, ("harq",)))
    assert ok and n_rt == 0

    never_ok = step_bler(1e6)
    n_rt, ok = harq_chase(0.0, never_ok, 4, seed_stream(2, ("harq",)))
    assert not ok and n_rt == 3


def test_harq_success_rate_monotone():
    curve = load_bler_curve(7)
    rates = []
    for k, gamma in enumerate((3.0, 5.0, 7.0)):
        rng = seed_stream(7, ("harq-mc", k))
        wins = sum(harq_chase(gamma, curve, 1, rng)[1] for _ in range(10000))
        rates.append(wins / 10000)
    assert rates[0] < rates[1] < rates[2]


def test_spectral_efficiency_and_mcs_table():
    table = load_mcs_table()
    assert table[7].q_bits == 4
    assert table[7].code_rate == pytest.approx(490 / 1024)

    se, norm = spectral_efficiency(7, 4, 0, True)
    assert norm == pytest.approx(1.0)
    assert se == pytest.approx(4 * 4 * 490 / 1024)
    _, norm = spectral_efficiency(7, 4, 1, True)
    assert norm == pytest.approx(0.5)
    assert spectral_efficiency(7, 4, 0, False) == (0.0, 0.0)
    with pytest.raises(UnknownMcs):
        spectral_efficiency(99, 4, 0, True)


def test_link_result_validation():
    with pytest.raises(ValueError):
        LinkResult("typei", 0.0, 1.0, 0, True, 1.0, 1.5)


def test_estimation_config_validation():
    with pytest.raises(ValueError):
        EstimationConfig(mode="magic")
    with pytest.raises(ValueError):
        EstimationConfig(dmrs_bundle_prbs=0)
    with pytest.raises(ValueError):
        EstimationConfig(epre_ratio=0.0)
