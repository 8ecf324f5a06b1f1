import numpy as np
import pytest

from cavcool.errors import ConfigError
from cavcool.signals import (
    SIGNAL_COLUMNS,
    DetectorTraces,
    DivisionGuardError,
    NoiseOptions,
    expected_trap_frequency,
    normalized_scattering,
    synthesize,
)


def test_channels_and_normalisation(red_cavity, fig3_trace):
    d = synthesize(fig3_trace, red_cavity)
    s = normalized_scattering(d)
    assert s.s_n.max() == 1.0
    assert s.s_n.min() >= 0
    assert d.phase[0] == pytest.approx(0.0, abs=1e-9)
    assert d.i_c[0] == pytest.approx(abs(red_cavity.empty_field) ** 2, rel=1e-9)
    assert d.sample_rate == pytest.approx(10e6)


def test_normalisation_idempotent(red_cavity, fig3_trace):
    d = synthesize(fig3_trace, red_cavity)
    s = normalized_scattering(d)
    again = normalized_scattering(DetectorTraces(d.t, np.ones_like(d.t), d.phase, s.s_n, d.sample_rate))
    assert np.allclose(again.s_n, s.s_n, rtol=0, atol=1e-15)


def test_resampling(red_cavity, fig3_trace):
    d = synthesize(fig3_trace, red_cavity, sample_rate=5e6)
    assert d.sample_rate == 5e6
    assert np.allclose(np.diff(d.t), 2e-7)
    ref = synthesize(fig3_trace, red_cavity)
    assert np.allclose(d.i_c, np.interp(d.t, ref.t, ref.i_c), rtol=1e-3)


def test_low_sample_rate_warns(red_cavity, fig3_trace):
    with pytest.warns(RuntimeWarning):
        synthesize(fig3_trace, red_cavity, sample_rate=2e5)


def test_noise_is_seeded(red_cavity, fig3_trace):
    n = NoiseOptions(intensity=1e-3, phase=1e-3, scattering=1e-3, seed=4)
    a = synthesize(fig3_trace, red_cavity, n)
    b = synthesize(fig3_trace, red_cavity, n)
    c = synthesize(fig3_trace, red_cavity, NoiseOptions(scattering=1e-3, seed=5))
    assert np.array_equal(a.i_s, b.i_s)
    assert not np.array_equal(a.i_s, c.i_s)
    clean = synthesize(fig3_trace, red_cavity)
    resid = (a.i_s - clean.i_s) / abs(red_cavity.empty_field) ** 2
    assert np.std(resid) == pytest.approx(1e-3, rel=0.1)


def test_noisy_normalisation_bias_bounded(red_cavity, fig3_trace):
    sigma = 1e-3
    d = synthesize(fig3_trace, red_cavity, NoiseOptions(scattering=sigma, seed=1))
    clean = normalized_scattering(synthesize(fig3_trace, red_cavity))
    s = normalized_scattering(d)
    # the percentile reference sits within a few noise widths of the true peak
    peak = clean.normalization
    assert abs(s.normalization - peak) / peak < 3 * sigma * abs(red_cavity.empty_field) ** 2 / (peak * d.i_c.max()) + 0.02


def test_round_trip_and_schema(tmp_path, red_cavity, fig3_trace):
    d = synthesize(fig3_trace, red_cavity)
    path = tmp_path / "d.csv"
    d.save(path)
    assert path.read_text().splitlines()[0] == ",".join(SIGNAL_COLUMNS)
    back = DetectorTraces.load(path)
    assert np.array_equal(back.i_s, d.i_s)
    assert back.sample_rate == pytest.approx(d.sample_rate)
    bad = tmp_path / "bad.csv"
    bad.write_text("t,I_c\n0,1\n")
    with pytest.raises(ConfigError):
        DetectorTraces.load(bad)
    backwards = tmp_path / "backwards.csv"
    backwards.write_text(",".join(SIGNAL_COLUMNS) + "\n1,1,0,0,0\n0,1,0,0,0\n")
    with pytest.raises(ConfigError):
        DetectorTraces.load(backwards)


def test_division_guard():
    t = np.linspace(0, 1e-3, 100)
    with pytest.raises(DivisionGuardError):
        normalized_scattering(DetectorTraces(t, np.zeros(100), np.zeros(100), np.zeros(100), 1e5))
    with pytest.raises(DivisionGuardError):
        normalized_scattering(DetectorTraces(t, np.ones(100), np.zeros(100), np.zeros(100), 1e5))


def test_no_scatterer(red_cavity, fig3_trace):
    fig3_trace.metadata["scatterer"] = False
    try:
        d = synthesize(fig3_trace, red_cavity)
    finally:
        del fig3_trace.metadata["scatterer"]
    assert np.all(d.i_s == 0)


def test_expected_trap_frequency(red_cavity, silicon):
    f = expected_trap_frequency(2.3 * red_cavity.kappa, silicon.mass, red_cavity)
    assert 1e4 < f < 1e6
    assert expected_trap_frequency(0.0, silicon.mass, red_cavity) == 0.0
