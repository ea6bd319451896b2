"""RF figures of merit: NMSE, Welch PSD, ACPR, EVM and AM/AM-AM/PM curves."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import signal as sps

from .errors import ConfigError, ShapeError
from .signals import ComplexSignal, SymbolGrid

DB_FLOOR = -200.0
AM_FLOOR = 1e-6


def _samples(x) -> np.ndarray:
    if isinstance(x, ComplexSignal):
        return x.samples
    if isinstance(x, SymbolGrid):
        return np.asarray(x.symbols)
    return np.asarray(x, dtype=np.complex128)


def _db(ratio: float) -> float:
    if ratio <= 0.0:
        return DB_FLOOR
    return max(10.0 * np.log10(ratio), DB_FLOOR)


def nmse_db(reference, estimate) -> float:
    ref = _samples(reference).reshape(-1)
    est = _samples(estimate).reshape(-1)
    if ref.size == 0 or ref.size != est.size:
        raise ShapeError("length", ref.size, est.size)
    den = np.sum(np.abs(ref) ** 2)
    if den == 0.0:
        raise ConfigError("NMSE reference is all zeros")
    return _db(np.sum(np.abs(est - ref) ** 2) / den)


@dataclass(frozen=True)
class Psd:
    """Two-sided density on a DC-centred grid (linear units / Hz)."""

    freqs_hz: np.ndarray
    density: np.ndarray
    nfft: int
    overlap: float
    window: str

    @property
    def df(self) -> float:
        return float(self.freqs_hz[1] - self.freqs_hz[0]) if self.freqs_hz.size > 1 else 0.0

    @property
    def db(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.maximum(10.0 * np.log10(self.density), DB_FLOOR)

    def total_power(self) -> float:
        return float(np.sum(self.density) * self.df)


def psd_welch(sig: ComplexSignal, nfft: int = 1024, overlap: float = 0.5,
              window: str = "hann") -> Psd:
    x = _samples(sig)
    fs = sig.sample_rate_hz if isinstance(sig, ComplexSignal) else 1.0
    if nfft > x.size:
        raise ConfigError(f"nfft={nfft} exceeds signal length {x.size}")
    if not 0.0 <= overlap < 1.0:
        raise ConfigError("overlap fraction must be in [0, 1)")
    f, p = sps.welch(
        x, fs=fs, window=window, nperseg=nfft, noverlap=int(round(overlap * nfft)),
        nfft=nfft, detrend=False, return_onesided=False, scaling="density",
    )
    return Psd(np.fft.fftshift(f), np.fft.fftshift(p), nfft, overlap, window)


@dataclass(frozen=True)
class AcprPlan:
    main: tuple[float, float]
    left: tuple[float, float]
    right: tuple[float, float]

    def __post_init__(self):
        for lo, hi in (self.main, self.left, self.right):
            if not lo < hi:
                raise ConfigError(f"empty band ({lo}, {hi})")
        if not (self.left[1] <= self.main[0] and self.main[1] <= self.right[0]):
            raise ConfigError("ACPR bands overlap or are out of order")

    @classmethod
    def adjacent(cls, occupied_bw_hz: float, guard_hz: float = 0.0) -> "AcprPlan":
        b = occupied_bw_hz
        return cls(
            main=(-b / 2, b / 2),
            left=(-3 * b / 2 - guard_hz, -b / 2 - guard_hz),
            right=(b / 2 + guard_hz, 3 * b / 2 + guard_hz),
        )

    def check_nyquist(self, fs: float) -> None:
        if self.left[0] < -fs / 2 - 1e-9 or self.right[1] > fs / 2 + 1e-9:
            raise ConfigError(f"ACPR bands exceed the Nyquist range +-{fs / 2:g} Hz")


def band_power(freqs_hz: np.ndarray, density: np.ndarray, band: tuple[float, float]) -> float:
    """Integrate a PSD over ``band``; bins straddling an edge count fractionally."""
    df = freqs_hz[1] - freqs_hz[0]
    lo = np.maximum(freqs_hz - df / 2, band[0])
    hi = np.minimum(freqs_hz + df / 2, band[1])
    w = np.clip(hi - lo, 0.0, None)
    return float(np.sum(density * w))


def acpr_from_psd(psd: Psd, plan: AcprPlan) -> tuple[float, float]:
    main = band_power(psd.freqs_hz, psd.density, plan.main)
    if main <= 0:
        raise ConfigError("no power in the main channel")
    left = band_power(psd.freqs_hz, psd.density, plan.left)
    right = band_power(psd.freqs_hz, psd.density, plan.right)
    return _db(left / main), _db(right / main)


def acpr_db(sig: ComplexSignal, plan: AcprPlan, nfft: int = 1024, overlap: float = 0.5,
            window: str = "hann") -> tuple[float, float]:
    """(left, right) adjacent-to-main power ratios in dBc."""
    plan.check_nyquist(sig.sample_rate_hz)
    return acpr_from_psd(psd_welch(sig, nfft, overlap, window), plan)


def ls_gain(rx: np.ndarray, tx: np.ndarray) -> complex:
    den = np.vdot(rx, rx)
    return complex(np.vdot(rx, tx) / den) if den != 0 else 1.0 + 0j


def evm_db(tx, rx, gain_correct: bool = True) -> float:
    t = _samples(tx)
    r = _samples(rx)
    if t.shape != r.shape:
        raise ShapeError("symbol grid", t.shape, r.shape)
    t = t.reshape(-1)
    r = r.reshape(-1)
    if gain_correct:
        r = r * ls_gain(r, t)
    den = np.sum(np.abs(t) ** 2)
    if den == 0:
        raise ConfigError("EVM reference grid is all zeros")
    return _db(np.sum(np.abs(r - t) ** 2) / den)


@dataclass(frozen=True)
class AmCurves:
    amp_in: np.ndarray
    gain_db: np.ndarray
    phase_deg: np.ndarray


def am_curves(x, y, floor: float = AM_FLOOR) -> AmCurves:
    xs = _samples(x).reshape(-1)
    ys = _samples(y).reshape(-1)
    if xs.size != ys.size:
        raise ShapeError("length", xs.size, ys.size)
    keep = np.abs(xs) >= floor
    xs, ys = xs[keep], ys[keep]
    ratio = ys / xs
    with np.errstate(divide="ignore"):
        gain = 20.0 * np.log10(np.abs(ratio))
    return AmCurves(np.abs(xs), np.maximum(gain, DB_FLOOR), np.degrees(np.angle(ratio)))


@dataclass
class MetricsReport:
    nmse_db: float
    acpr_left_dbc: float
    acpr_right_dbc: float
    evm_db: float | None
    psd: Psd | None = None
    am: AmCurves | None = None
    meta: dict = field(default_factory=dict)

    @property
    def acpr_avg_dbc(self) -> float:
        return 0.5 * (self.acpr_left_dbc + self.acpr_right_dbc)

    def scalars(self) -> dict:
        return {
            "nmse_db": self.nmse_db,
            "acpr_left_dbc": self.acpr_left_dbc,
            "acpr_right_dbc": self.acpr_right_dbc,
            "evm_db": self.evm_db,
        }
