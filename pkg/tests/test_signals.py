import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tcndpd.errors import ConfigError, NonFiniteError, ParseError, ShapeError
from tcndpd.metrics import band_power, evm_db, psd_welch
from tcndpd.signals import (
    QAM64,
    ComplexSignal,
    DatasetSchema,
    IqPair,
    OfdmConfig,
    demodulate_ofdm,
    generate_ofdm,
    load_iq_dataset,
    qam64_decide,
    save_iq_dataset,
    split_dataset,
)

SMALL = OfdmConfig(fft_size=256, cp_length=16, n_symbols=4, window_length=16)


def test_complex_signal_invariants():
    with pytest.raises(ShapeError):
        ComplexSignal(np.zeros(0, complex), 1.0)
    with pytest.raises(NonFiniteError):
        ComplexSignal(np.array([np.nan + 0j]), 1.0)
    with pytest.raises(ConfigError):
        ComplexSignal(np.ones(3, complex), 0.0)


def test_qam64_alphabet():
    assert QAM64.size == 64
    assert np.mean(np.abs(QAM64) ** 2) == pytest.approx(1.0, abs=1e-12)
    assert np.array_equal(qam64_decide(QAM64 * 1.02 + 0.01j), QAM64)


def test_signal_length_formula():
    sig, grid = generate_ofdm(SMALL)
    assert len(sig) == 1088
    assert grid.shape == (4, SMALL.active_bins().size)


def test_config_errors():
    with pytest.raises(ConfigError):
        OfdmConfig(fft_size=1000)
    with pytest.raises(ConfigError):
        OfdmConfig(fft_size=256, cp_length=256)
    with pytest.raises(ConfigError):
        OfdmConfig(cp_length=64, window_length=128)
    with pytest.raises(ConfigError):
        OfdmConfig(constellation="QPSK")
    with pytest.raises(ConfigError):
        OfdmConfig(sample_rate_hz=20e6)


def test_unit_mean_power_and_determinism():
    a, ga = generate_ofdm(OfdmConfig(seed=5))
    b, gb = generate_ofdm(OfdmConfig(seed=5))
    assert abs(a.mean_power - 1.0) < 1e-6
    assert np.array_equal(a.samples, b.samples) and np.array_equal(ga.symbols, gb.symbols)
    c, _ = generate_ofdm(OfdmConfig(seed=6))
    assert not np.array_equal(a.samples, c.samples)


def test_roundtrip_exact():
    cfg = OfdmConfig()
    sig, grid = generate_ofdm(cfg)
    rx = demodulate_ofdm(sig, cfg, gain_correct=False, time_scale=grid.time_scale)
    assert evm_db(grid, rx, gain_correct=False) <= -100
    assert np.array_equal(qam64_decide(rx.symbols), grid.symbols)
    assert evm_db(grid, demodulate_ofdm(sig, cfg)) <= -100


@settings(max_examples=15, deadline=None)
@given(
    n_channels=st.integers(1, 3), log_fft=st.integers(6, 9), n_symbols=st.integers(1, 4),
    cp_frac=st.sampled_from([0.0, 0.125, 0.25]), occ=st.sampled_from([0.5, 0.9, 1.0]),
    seed=st.integers(0, 1000),
)
def test_roundtrip_exact_property(n_channels, log_fft, n_symbols, cp_frac, occ, seed):
    n = 2**log_fft
    cp = int(cp_frac * n)
    cfg = OfdmConfig(n_channels=n_channels, fft_size=n, cp_length=cp, n_symbols=n_symbols,
                     occupancy=occ, window_length=cp, seed=seed)
    sig, grid = generate_ofdm(cfg)
    assert len(sig) == n_symbols * (n + cp)
    assert evm_db(grid, demodulate_ofdm(sig, cfg)) <= -100


def test_scaled_input_gives_identical_grid():
    cfg = OfdmConfig()
    sig, _ = generate_ofdm(cfg)
    a = demodulate_ofdm(sig, cfg)
    b = demodulate_ofdm(sig.with_samples(2.0 * sig.samples), cfg)
    assert np.allclose(a.symbols, b.symbols, rtol=0, atol=1e-12)


def test_evm_with_inband_noise():
    cfg = OfdmConfig()
    n_active = cfg.active_bins().size
    vals = []
    for seed in range(5):
        sig, grid = generate_ofdm(OfdmConfig(seed=seed))
        rng = np.random.default_rng(100 + seed)
        # -40 dB relative to the signal on every active subcarrier
        power = 1e-4 * cfg.fft_size / n_active
        noise = np.sqrt(power / 2) * (rng.normal(size=len(sig)) + 1j * rng.normal(size=len(sig)))
        rx = demodulate_ofdm(sig.with_samples(sig.samples + noise), cfg)
        vals.append(evm_db(grid, rx))
    assert np.mean(vals) == pytest.approx(-40.0, abs=0.5)


def test_power_inside_occupied_band():
    cfg = OfdmConfig()
    sig, _ = generate_ofdm(cfg)
    psd = psd_welch(sig)
    bw = cfg.occupied_bw_hz
    inside = band_power(psd.freqs_hz, psd.density, (-bw / 2, bw / 2))
    assert inside / psd.total_power() >= 0.99


def test_demodulate_length_error():
    sig, _ = generate_ofdm(SMALL)
    with pytest.raises(ShapeError):
        demodulate_ofdm(sig.with_samples(sig.samples[:-1]), SMALL)


# --- datasets -----------------------------------------------------------------

def _write(path, text):
    path.write_text(text)
    return path


def test_load_three_rows(tmp_path):
    p = _write(tmp_path / "d.csv", "I_in,Q_in,I_out,Q_out\n1,2,3,4\n0.5,-1,2e-3,7\n-1,0,0,1\n")
    pair = load_iq_dataset(p)
    assert len(pair) == 3
    assert pair.x.samples.tolist() == [1 + 2j, 0.5 - 1j, -1 + 0j]
    assert pair.y.samples.tolist() == [3 + 4j, 2e-3 + 7j, 0 + 1j]


def test_load_errors(tmp_path):
    with pytest.raises(ParseError, match="empty dataset"):
        load_iq_dataset(_write(tmp_path / "h.csv", "I_in,Q_in,I_out,Q_out\n"))
    with pytest.raises(ParseError, match="empty dataset"):
        load_iq_dataset(_write(tmp_path / "e.csv", ""))
    with pytest.raises(ParseError, match="Q_out") as exc:
        load_iq_dataset(_write(tmp_path / "m.csv", "I_in,Q_in,I_out\n1,2,3\n"))
    assert exc.value.row == 1
    with pytest.raises(ParseError, match="abc") as exc:
        load_iq_dataset(_write(tmp_path / "n.csv", "I_in,Q_in,I_out,Q_out\n1,2,3,4\n1,abc,3,4\n"))
    assert exc.value.row == 3


def test_custom_schema(tmp_path):
    schema = DatasetSchema("a", "b", "c", "d", sample_rate_hz=200e6)
    pair = load_iq_dataset(_write(tmp_path / "s.csv", "d,c,b,a\n4,3,2,1\n"), schema)
    assert pair.x.samples[0] == 1 + 2j and pair.y.samples[0] == 3 + 4j
    assert pair.x.sample_rate_hz == 200e6


@settings(max_examples=20, deadline=None)
@given(st.lists(st.tuples(*[st.floats(allow_nan=False, allow_infinity=False, width=64)] * 4),
                min_size=1, max_size=30))
def test_save_load_roundtrip_bit_identical(tmp_path_factory, rows):
    arr = np.array(rows, dtype=float)
    pair = IqPair(ComplexSignal(arr[:, 0] + 1j * arr[:, 1], 1.0),
                  ComplexSignal(arr[:, 2] + 1j * arr[:, 3], 1.0))
    path = tmp_path_factory.mktemp("rt") / "d.csv"
    save_iq_dataset(pair, path)
    back = load_iq_dataset(path)
    assert np.array_equal(back.x.samples, pair.x.samples)
    assert np.array_equal(back.y.samples, pair.y.samples)


def _pair(n):
    x = np.arange(n) + 0j
    return IqPair(ComplexSignal(x, 1.0), ComplexSignal(2 * x, 1.0))


def test_split_examples():
    parts = split_dataset(_pair(100))
    assert [len(parts[k]) for k in ("train", "val", "test")] == [60, 20, 20]
    parts = split_dataset(_pair(101))
    assert [len(parts[k]) for k in ("train", "val", "test")] == [61, 20, 20]
    assert parts["val"].x.samples[0] == 61


def test_split_degenerate():
    parts = split_dataset(_pair(50), (1.0, 0.0, 0.0))
    assert len(parts["train"]) == 50 and parts["val"] is None and parts["test"] is None
    with pytest.raises(ConfigError):
        split_dataset(_pair(50), (1.0, 0.0, 0.0), min_length=61)
    with pytest.raises(ConfigError):
        split_dataset(_pair(50), (0.5, 0.6, -0.1))


@settings(max_examples=100, deadline=None)
@given(n=st.integers(3, 5000), a=st.floats(0.05, 0.9), b=st.floats(0.05, 0.9))
def test_split_properties(n, a, b):
    if a + b >= 0.99:
        return
    ratios = (1.0 - a - b, a, b)
    parts = split_dataset(_pair(n), ratios)
    got = [len(parts[k]) if parts[k] is not None else 0 for k in ("train", "val", "test")]
    assert sum(got) == n
    # contiguous and order preserving
    joined = np.concatenate([parts[k].x.samples for k in ("train", "val", "test")
                             if parts[k] is not None])
    assert np.array_equal(joined, np.arange(n))
    for r, g in zip(ratios[1:], got[1:]):
        assert abs(g - r * n) <= 1
    assert abs(got[0] - ratios[0] * n) <= 2
