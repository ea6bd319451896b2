"""Baseband stimulus: multi-channel 64-QAM OFDM, demodulation, CSV datasets."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, NonFiniteError, ParseError, ShapeError


@dataclass(frozen=True)
class ComplexSignal:
    samples: np.ndarray
    sample_rate_hz: float = 1.0

    def __post_init__(self):
        s = np.ascontiguousarray(self.samples, dtype=np.complex128).reshape(-1)
        if s.size < 1:
            raise ShapeError("samples", ">= 1", 0)
        if not np.all(np.isfinite(s)):
            raise NonFiniteError("signal samples")
        if not self.sample_rate_hz > 0:
            raise ConfigError(f"sample rate must be positive, got {self.sample_rate_hz}")
        object.__setattr__(self, "samples", s)
        object.__setattr__(self, "sample_rate_hz", float(self.sample_rate_hz))

    def __len__(self) -> int:
        return self.samples.size

    def with_samples(self, samples) -> "ComplexSignal":
        return ComplexSignal(samples, self.sample_rate_hz)

    @property
    def mean_power(self) -> float:
        return float(np.mean(np.abs(self.samples) ** 2))


# --- 64-QAM ------------------------------------------------------------------

_QAM_LEVELS = np.arange(-7, 8, 2, dtype=np.float64)
QAM64 = ((_QAM_LEVELS[:, None] + 1j * _QAM_LEVELS[None, :]) / np.sqrt(42.0)).reshape(-1)


def qam64_decide(z: np.ndarray) -> np.ndarray:
    """Nearest 64-QAM point (unit average power alphabet)."""
    scaled = np.asarray(z) * np.sqrt(42.0)

    def level(v):
        return np.clip(2.0 * np.floor(v / 2.0) + 1.0, -7.0, 7.0)

    return (level(scaled.real) + 1j * level(scaled.imag)) / np.sqrt(42.0)


# --- OFDM --------------------------------------------------------------------

@dataclass(frozen=True)
class OfdmConfig:
    """Contiguous ``n_channels x channel_bw_hz`` OFDM centred on DC.

    ``sample_rate_hz`` defaults to ``oversampling`` times the occupied
    bandwidth. ``window_length`` is the raised-cosine overlap-add taper; it
    lives inside the cyclic prefix so demodulation stays exact.
    """

    n_channels: int = 2
    channel_bw_hz: float = 20e6
    fft_size: int = 1024
    cp_length: int = 256
    n_symbols: int = 16
    occupancy: float = 0.9
    oversampling: float = 4.0
    sample_rate_hz: float | None = None
    window_length: int = 256
    constellation: str = "QAM64"
    seed: int = 0

    def __post_init__(self):
        if self.n_channels < 1 or self.n_symbols < 1:
            raise ConfigError("n_channels and n_symbols must be >= 1")
        if self.fft_size < 2 or self.fft_size & (self.fft_size - 1):
            raise ConfigError(f"fft_size must be a power of two, got {self.fft_size}")
        if not 0 <= self.cp_length < self.fft_size:
            raise ConfigError("cp_length must satisfy 0 <= cp < fft_size")
        if not 0 <= self.window_length <= self.cp_length:
            raise ConfigError("window_length must fit inside the cyclic prefix")
        if not 0 < self.occupancy <= 1:
            raise ConfigError("occupancy must be in (0, 1]")
        if self.constellation.upper() != "QAM64":
            raise ConfigError(f"unsupported constellation {self.constellation!r}")
        if self.occupied_bw_hz > self.fs:
            raise ConfigError(
                f"occupied bandwidth {self.occupied_bw_hz:g} Hz exceeds sample rate {self.fs:g} Hz"
            )
        if self.active_bins().size == 0:
            raise ConfigError("configuration leaves no active subcarriers")

    @property
    def occupied_bw_hz(self) -> float:
        return self.n_channels * self.channel_bw_hz

    @property
    def fs(self) -> float:
        if self.sample_rate_hz is not None:
            return float(self.sample_rate_hz)
        return self.oversampling * self.occupied_bw_hz

    @property
    def subcarrier_spacing_hz(self) -> float:
        return self.fs / self.fft_size

    @property
    def symbol_length(self) -> int:
        return self.fft_size + self.cp_length

    @property
    def signal_length(self) -> int:
        return self.n_symbols * self.symbol_length

    def channel_centers_hz(self) -> np.ndarray:
        idx = np.arange(self.n_channels) - (self.n_channels - 1) / 2.0
        return idx * self.channel_bw_hz

    def active_bins_per_channel(self) -> list[np.ndarray]:
        """Signed subcarrier indices used by each channel (DC excluded)."""
        df = self.subcarrier_spacing_hz
        half = self.occupancy * self.channel_bw_hz / 2.0 / df
        j = np.arange(-self.fft_size // 2, self.fft_size // 2)
        out = []
        for fc in self.channel_centers_hz():
            sel = (np.abs(j - fc / df) <= half + 1e-9) & (j != 0)
            out.append(j[sel])
        return out

    def active_bins(self) -> np.ndarray:
        return np.unique(np.concatenate(self.active_bins_per_channel()))


@dataclass(frozen=True)
class SymbolGrid:
    """Constellation symbols ``[ofdm_symbol, active_subcarrier]``.

    ``time_scale`` maps unit-power constellation values to the transmitted
    sample amplitude (it absorbs the frame power normalisation).
    """

    symbols: np.ndarray
    time_scale: float = 1.0

    @property
    def shape(self) -> tuple[int, int]:
        return self.symbols.shape


def _rc_ramp(n: int) -> np.ndarray:
    if n == 0:
        return np.zeros(0)
    return 0.5 * (1.0 - np.cos(np.pi * (np.arange(n) + 0.5) / n))


def generate_ofdm(cfg: OfdmConfig) -> tuple[ComplexSignal, SymbolGrid]:
    """Random 64-QAM OFDM frame with unit mean power; deterministic per seed."""
    rng = np.random.default_rng(cfg.seed)
    bins = cfg.active_bins()
    n, L, W = cfg.fft_size, cfg.symbol_length, cfg.window_length
    idx = rng.integers(0, QAM64.size, size=(cfg.n_symbols, bins.size))
    symbols = QAM64[idx]

    grid = np.zeros((cfg.n_symbols, n), dtype=np.complex128)
    grid[:, bins % n] = symbols
    nominal = n / np.sqrt(bins.size)
    bodies = np.fft.ifft(grid, axis=1) * nominal

    win = np.ones(L + W)
    win[:W] = _rc_ramp(W)
    win[L:] = _rc_ramp(W)[::-1]
    out = np.zeros(cfg.signal_length + W, dtype=np.complex128)
    pos = (np.arange(L + W) - cfg.cp_length) % n
    for s in range(cfg.n_symbols):
        out[s * L:s * L + L + W] += bodies[s, pos] * win
    # wrap the last suffix onto the first prefix so the frame is cyclic
    if W:
        out[:W] += out[cfg.signal_length:]
    x = out[:cfg.signal_length]

    norm = 1.0 / np.sqrt(np.mean(np.abs(x) ** 2))
    x = x * norm
    return ComplexSignal(x, cfg.fs), SymbolGrid(symbols, time_scale=nominal * norm)


def demodulate_ofdm(
    sig: ComplexSignal,
    cfg: OfdmConfig,
    gain_correct: bool = True,
    time_scale: float | None = None,
) -> SymbolGrid:
    """Strip the cyclic prefix, FFT, pick active subcarriers.

    Without ``time_scale`` the nominal (pre-normalisation) scale is assumed.
    ``gain_correct`` then applies one decision-directed complex LS gain.
    """
    x = sig.samples if isinstance(sig, ComplexSignal) else np.asarray(sig, dtype=np.complex128)
    if x.size < cfg.signal_length:
        raise ShapeError("signal length", f">= {cfg.signal_length}", x.size)
    n, L = cfg.fft_size, cfg.symbol_length
    bins = cfg.active_bins()
    blocks = x[:cfg.signal_length].reshape(cfg.n_symbols, L)[:, cfg.cp_length:]
    scale = time_scale if time_scale is not None else n / np.sqrt(bins.size)
    rx = np.fft.fft(blocks, axis=1)[:, bins % n] / scale
    if gain_correct:
        p = np.mean(np.abs(rx) ** 2)
        if p > 0:
            rx = rx / np.sqrt(p)
            ref = qam64_decide(rx)
            g = np.vdot(rx, ref) / np.vdot(rx, rx)
            rx = rx * g
    return SymbolGrid(rx, time_scale=scale)


# --- CSV datasets ------------------------------------------------------------

@dataclass(frozen=True)
class DatasetSchema:
    i_in: str = "I_in"
    q_in: str = "Q_in"
    i_out: str = "I_out"
    q_out: str = "Q_out"
    sample_rate_hz: float = 1.0

    @property
    def columns(self) -> tuple[str, str, str, str]:
        return (self.i_in, self.q_in, self.i_out, self.q_out)


@dataclass(frozen=True)
class IqPair:
    """Time-aligned PA input/output pair."""

    x: ComplexSignal
    y: ComplexSignal

    def __post_init__(self):
        if len(self.x) != len(self.y):
            raise ShapeError("pair length", len(self.x), len(self.y))

    def __len__(self) -> int:
        return len(self.x)

    def slice(self, start: int, stop: int) -> "IqPair":
        return IqPair(
            self.x.with_samples(self.x.samples[start:stop]),
            self.y.with_samples(self.y.samples[start:stop]),
        )


def load_iq_dataset(path, schema: DatasetSchema = DatasetSchema()) -> IqPair:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError("empty dataset") from None
        cols = []
        for name in schema.columns:
            if name not in header:
                raise ParseError(f"missing column {name!r}", row=1)
            cols.append(header.index(name))
        values = []
        for rowno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                values.append([float(row[c]) for c in cols])
            except IndexError:
                raise ParseError("too few cells", row=rowno) from None
            except ValueError:
                bad = next(row[c] for c in cols if not _is_float(row[c]))
                raise ParseError(f"non-numeric cell {bad!r}", row=rowno) from None
    if not values:
        raise ParseError("empty dataset")
    arr = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ParseError("non-finite value in dataset")
    fs = schema.sample_rate_hz
    return IqPair(
        ComplexSignal(arr[:, 0] + 1j * arr[:, 1], fs),
        ComplexSignal(arr[:, 2] + 1j * arr[:, 3], fs),
    )


def _is_float(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def save_iq_dataset(pair: IqPair, path, schema: DatasetSchema = DatasetSchema()) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(schema.columns)
        for a, b in zip(pair.x.samples, pair.y.samples):
            w.writerow([f"{a.real:.17g}", f"{a.imag:.17g}", f"{b.real:.17g}", f"{b.imag:.17g}"])


def split_dataset(
    pair: IqPair,
    ratios: tuple[float, float, float] = (0.6, 0.2, 0.2),
    min_length: int = 0,
) -> dict[str, IqPair | None]:
    """Contiguous train/val/test split; rounding remainder goes to train.

    Segments shorter than ``min_length`` (e.g. the receptive field) are
    rejected. Empty segments come back as ``None`` when allowed.
    """
    if len(ratios) != 3 or any(r < 0 for r in ratios) or not math.isclose(sum(ratios), 1.0):
        raise ConfigError(f"ratios must be three non-negative numbers summing to 1, got {ratios}")
    n = len(pair)
    n_val = int(math.floor(ratios[1] * n + 1e-9))
    n_test = int(math.floor(ratios[2] * n + 1e-9))
    n_train = n - n_val - n_test
    bounds = {"train": (0, n_train), "val": (n_train, n_train + n_val),
              "test": (n_train + n_val, n)}
    out: dict[str, IqPair | None] = {}
    for name, (a, b) in bounds.items():
        if min_length > 0 and b - a < min_length:
            raise ConfigError(
                f"{name} segment has {b - a} samples, shorter than the receptive field {min_length}"
            )
        out[name] = pair.slice(a, b) if b > a else None
    return out
