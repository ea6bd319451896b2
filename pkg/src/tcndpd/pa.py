"""Generalized memory polynomial (GMP) power-amplifier models.

A GMP maps ``x`` to

    y(n) = sum_k sum_m a[k,m] x(n-m) |x(n-m)|^(k-1)
         + sum_l sum_k sum_m b[k,m,l] x(n-m) |x(n-m-l)|^(k-1)

with odd orders ``k`` and zero-extended history. Positive lags look back
(lagging envelope), negative lags look ahead (leading envelope).

The evaluation works on split real/imag arrays and spells the complex
products out, so the per-sample oracle in the tests can reproduce the
result bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, ParseError, RankDeficientError, ShapeError
from .signals import ComplexSignal

FILE_MAGIC = "tcndpd-gmp"
FILE_VERSION = 1


@dataclass(frozen=True)
class GmpStructure:
    orders: tuple[int, ...] = (1, 3, 5, 7)
    memory: int = 4
    lags: tuple[int, ...] = (1,)

    def __post_init__(self):
        orders = tuple(int(k) for k in self.orders)
        if not orders or orders[0] != 1:
            raise ConfigError("GMP orders must start with the linear term 1")
        if any(k < 1 or k % 2 == 0 for k in orders) or list(orders) != sorted(set(orders)):
            raise ConfigError(f"GMP orders must be distinct increasing odd integers, got {orders}")
        if self.memory < 0:
            raise ConfigError("memory depth must be >= 0")
        lags = tuple(int(l) for l in self.lags)
        if 0 in lags or len(set(lags)) != len(lags):
            raise ConfigError(f"cross-term lags must be distinct and non-zero, got {lags}")
        object.__setattr__(self, "orders", orders)
        object.__setattr__(self, "lags", lags)

    @property
    def max_order(self) -> int:
        return self.orders[-1]

    def terms(self) -> list[tuple[int, int, int]]:
        """``(order, tap, lag)`` in coefficient order; lag 0 is the main block."""
        out = [(k, m, 0) for k in self.orders for m in range(self.memory + 1)]
        for l in self.lags:
            out += [(k, m, l) for k in self.orders if k > 1 for m in range(self.memory + 1)]
        return out

    @property
    def n_coeffs(self) -> int:
        return len(self.terms())

    @property
    def history(self) -> int:
        """Samples of past context any output reads."""
        return self.memory + max([0] + [l for l in self.lags if l > 0])

    @property
    def lookahead(self) -> int:
        return max([0] + [-l for l in self.lags if l < 0])


@dataclass(frozen=True)
class GmpPaModel:
    structure: GmpStructure
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=np.complex128).reshape(-1)
        if c.size != self.structure.n_coeffs:
            raise ShapeError("coeffs", self.structure.n_coeffs, c.size)
        if not np.all(np.isfinite(c)):
            raise ConfigError("GMP coefficients must be finite")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    def coeff(self, k: int, m: int, lag: int = 0) -> complex:
        return complex(self.coeffs[self.structure.terms().index((k, m, lag))])

    @classmethod
    def from_dict(cls, structure: GmpStructure, values: dict) -> "GmpPaModel":
        """Build from ``{(k, m, lag): coefficient}``; unspecified terms are 0."""
        terms = structure.terms()
        c = np.zeros(len(terms), dtype=np.complex128)
        for key, val in values.items():
            key = tuple(key) if len(key) == 3 else (key[0], key[1], 0)
            c[terms.index(key)] = val
        return cls(structure, c)

    @classmethod
    def linear(cls, gain: complex = 1.0, structure: GmpStructure | None = None) -> "GmpPaModel":
        s = structure or GmpStructure(orders=(1,), memory=0, lags=())
        return cls.from_dict(s, {(1, 0, 0): gain})


def _shift(a: np.ndarray, d: int) -> np.ndarray:
    """``out[..., n] = a[..., n - d]`` with zeros outside the record."""
    if d == 0:
        return a
    out = np.zeros_like(a)
    T = a.shape[-1]
    if abs(d) >= T:
        return out
    if d > 0:
        out[..., d:] = a[..., :T - d]
    else:
        out[..., :T + d] = a[..., -d:]
    return out


def _unshift_add(target: np.ndarray, g: np.ndarray, d: int) -> None:
    """Adjoint of :func:`_shift`: ``target[..., n - d] += g[..., n]``."""
    T = g.shape[-1]
    if d == 0:
        target += g
    elif abs(d) >= T:
        return
    elif d > 0:
        target[..., :T - d] += g[..., d:]
    else:
        target[..., -d:] += g[..., :T + d]


def _envelope(r2: np.ndarray, k: int) -> np.ndarray:
    """``|x|^(k-1)`` from ``|x|^2`` by repeated multiplication (k odd)."""
    env = np.ones_like(r2)
    for _ in range((k - 1) // 2):
        env = env * r2
    return env


def gmp_apply_iq(model: GmpPaModel, xr: np.ndarray, xi: np.ndarray):
    """Real/imag evaluation along the last axis; batch axes pass through."""
    xr = np.asarray(xr, dtype=np.float64)
    xi = np.asarray(xi, dtype=np.float64)
    yr = np.zeros_like(xr)
    yi = np.zeros_like(xi)
    base_cache: dict[int, tuple] = {}

    def shifted(d):
        if d not in base_cache:
            sr, si = _shift(xr, d), _shift(xi, d)
            base_cache[d] = (sr, si, sr * sr + si * si)
        return base_cache[d]

    for (k, m, l), a in zip(model.structure.terms(), model.coeffs):
        if a == 0:
            continue
        br, bi, _ = shifted(m)
        env = _envelope(shifted(m + l)[2], k)
        pr = br * env
        pi = bi * env
        ar, ai = a.real, a.imag
        yr += ar * pr - ai * pi
        yi += ar * pi + ai * pr
    return yr, yi


def gmp_backward_iq(model: GmpPaModel, xr, xi, gr, gi):
    """Gradient w.r.t. (xr, xi) of ``sum(gr*yr + gi*yi)``.

    The coefficients are treated as constants (the PA stays frozen).
    """
    xr = np.asarray(xr, dtype=np.float64)
    xi = np.asarray(xi, dtype=np.float64)
    dxr = np.zeros_like(xr)
    dxi = np.zeros_like(xi)
    cache: dict[int, tuple] = {}

    def shifted(d):
        if d not in cache:
            sr, si = _shift(xr, d), _shift(xi, d)
            cache[d] = (sr, si, sr * sr + si * si)
        return cache[d]

    for (k, m, l), a in zip(model.structure.terms(), model.coeffs):
        if a == 0:
            continue
        ar, ai = a.real, a.imag
        br, bi, _ = shifted(m)
        vr, vi, r2 = shifted(m + l)
        env = _envelope(r2, k)
        # y = a * b * env; d/db (complex) = env * conj(a) * g
        _unshift_add(dxr, env * (ar * gr + ai * gi), m)
        _unshift_add(dxi, env * (ar * gi - ai * gr), m)
        if k > 1:
            p = (k - 1) // 2
            # dL/d(env) = Re(conj(g) * a * b)
            abr = ar * br - ai * bi
            abi = ar * bi + ai * br
            dl_denv = gr * abr + gi * abi
            coef = dl_denv * (2.0 * p) * _envelope(r2, k - 2)
            _unshift_add(dxr, coef * vr, m + l)
            _unshift_add(dxi, coef * vi, m + l)
    return dxr, dxi


def gmp_apply(model: GmpPaModel, x):
    """Evaluate the GMP on a signal; returns the same type it was given."""
    if isinstance(x, ComplexSignal):
        yr, yi = gmp_apply_iq(model, x.samples.real, x.samples.imag)
        return x.with_samples(yr + 1j * yi)
    arr = np.asarray(x, dtype=np.complex128)
    if arr.size == 0:
        raise ShapeError("signal", ">= 1 sample", 0)
    yr, yi = gmp_apply_iq(model, arr.real, arr.imag)
    return yr + 1j * yi


def gmp_basis(structure: GmpStructure, x: np.ndarray) -> np.ndarray:
    """Regression matrix ``(T, n_coeffs)`` with one column per term."""
    x = np.asarray(x, dtype=np.complex128)
    cols = []
    for k, m, l in structure.terms():
        b = _shift(x, m)
        v = _shift(x, m + l)
        cols.append(b * _envelope(v.real ** 2 + v.imag ** 2, k))
    return np.stack(cols, axis=1)


def gmp_fit(x, y, structure: GmpStructure = GmpStructure(), ridge: float = 0.0) -> GmpPaModel:
    """Least-squares GMP identification, optionally Tikhonov-regularised.

    Columns are normalised before solving; ``ridge`` is relative to that
    normalisation.
    """
    xs = x.samples if isinstance(x, ComplexSignal) else np.asarray(x, dtype=np.complex128)
    ys = y.samples if isinstance(y, ComplexSignal) else np.asarray(y, dtype=np.complex128)
    if xs.size != ys.size:
        raise ShapeError("length", xs.size, ys.size)
    n = structure.n_coeffs
    if xs.size < 4 * n:
        raise ConfigError(f"need at least {4 * n} samples to fit {n} coefficients, got {xs.size}")
    if ridge < 0:
        raise ConfigError("ridge must be >= 0")
    phi = gmp_basis(structure, xs)
    scale = np.linalg.norm(phi, axis=0)
    scale[scale == 0] = 1.0
    phin = phi / scale
    if ridge > 0:
        gram = phin.conj().T @ phin + ridge * np.eye(n)
        c = np.linalg.solve(gram, phin.conj().T @ ys)
    else:
        c, _, rank, _ = np.linalg.lstsq(phin, ys, rcond=None)
        if rank < n:
            raise RankDeficientError(
                f"regression matrix is rank deficient ({rank} < {n}); use a ridge term lambda > 0"
            )
    return GmpPaModel(structure, c / scale)


# --- reference PAs -----------------------------------------------------------

DIFFICULTIES = ("mild", "moderate", "severe")
# Nonlinearity scale per difficulty (multiplies all k >= 3 terms).
_SEVERITY = {"mild": 0.2, "moderate": 1.0, "severe": 2.0}
# Amplitude normalisation of the static polynomial (unit-RMS OFDM peaks ~3.3).
PEAK_AMPLITUDE = 4.0
_STATIC = {3: -0.75 * np.exp(1j * 1.0), 5: 0.4 * np.exp(1j * 0.4), 7: -0.03 * np.exp(1j * 0.5)}


def make_reference_pa(seed: int = 0, difficulty: str = "moderate",
                      structure: GmpStructure = GmpStructure()) -> GmpPaModel:
    """Deterministic synthetic PA for unit-RMS OFDM drive.

    A compressive odd polynomial with strong AM/PM is spread over the memory
    taps by a short decaying response with seeded phases; the cross-term
    blocks add a weaker envelope-memory component. ``a[1,0] == 1`` so the
    small-signal gain is normalised. The static curve stays monotone well
    past the stimulus peak, which leaves the predistorter room to expand.
    """
    if difficulty not in _SEVERITY:
        raise ConfigError(f"difficulty must be one of {DIFFICULTIES}, got {difficulty!r}")
    beta = _SEVERITY[difficulty]
    rng = np.random.default_rng(seed)
    M = structure.memory
    taps = 0.2 ** np.arange(M + 1) * np.exp(1j * rng.uniform(-np.pi, np.pi, M + 1))
    taps[0] = 1.0
    lin_mem = 0.01 * 0.5 ** np.arange(M + 1) * np.exp(1j * rng.uniform(-np.pi, np.pi, M + 1))
    cross = 0.15 * 0.5 ** np.arange(M + 1) * np.exp(1j * rng.uniform(-np.pi, np.pi, M + 1))

    def static(k):
        c = _STATIC.get(k, 0.0)
        return beta * c / PEAK_AMPLITUDE ** (k - 1)

    values = {}
    for k, m, l in structure.terms():
        if k == 1:
            values[(k, m, l)] = 1.0 if m == 0 else lin_mem[m]
        elif l == 0:
            values[(k, m, l)] = static(k) * taps[m]
        else:
            values[(k, m, l)] = static(k) * cross[m]
    return GmpPaModel.from_dict(structure, values)


def static_am_curves(model: GmpPaModel, amplitudes: np.ndarray):
    """Steady-state gain (dB) and phase (deg) for constant-envelope drive."""
    amps = np.asarray(amplitudes, dtype=np.float64)
    total = np.zeros(amps.shape, dtype=np.complex128)
    for (k, m, l), a in zip(model.structure.terms(), model.coeffs):
        total = total + a * amps ** (k - 1)
    return 20 * np.log10(np.abs(total)), np.degrees(np.angle(total))


@dataclass(frozen=True)
class PaChain:
    """Frozen PA as seen by the DPD: ``y = model(g_in * x) / g_in``.

    The linear target is ``gain * x``.
    """

    model: GmpPaModel | None = None
    g_in: float = 1.0
    gain: float = 1.0

    def __post_init__(self):
        if not self.g_in > 0 or not self.gain > 0:
            raise ConfigError("PaChain g_in and gain must be positive")

    @property
    def is_identity(self) -> bool:
        return self.model is None

    @property
    def history(self) -> int:
        return 0 if self.model is None else self.model.structure.history

    @property
    def lookahead(self) -> int:
        return 0 if self.model is None else self.model.structure.lookahead

    def apply_iq(self, xr, xi):
        if self.model is None:
            return np.array(xr, dtype=np.float64), np.array(xi, dtype=np.float64)
        g = self.g_in
        yr, yi = gmp_apply_iq(self.model, g * np.asarray(xr), g * np.asarray(xi))
        return yr / g, yi / g

    def backward_iq(self, xr, xi, gr, gi):
        if self.model is None:
            return np.array(gr, dtype=np.float64), np.array(gi, dtype=np.float64)
        g = self.g_in
        dr, di = gmp_backward_iq(self.model, g * np.asarray(xr), g * np.asarray(xi),
                                 np.asarray(gr) / g, np.asarray(gi) / g)
        return dr * g, di * g

    def __call__(self, x):
        if isinstance(x, ComplexSignal):
            yr, yi = self.apply_iq(x.samples.real, x.samples.imag)
            return x.with_samples(yr + 1j * yi)
        x = np.asarray(x, dtype=np.complex128)
        yr, yi = self.apply_iq(x.real, x.imag)
        return yr + 1j * yi


# --- text persistence ----------------------------------------------------------

def save_pa_model(model: GmpPaModel, path) -> None:
    s = model.structure
    lines = [
        f"{FILE_MAGIC} v{FILE_VERSION}",
        "orders " + " ".join(str(k) for k in s.orders),
        f"memory {s.memory}",
        "lags " + " ".join(str(l) for l in s.lags),
        f"coefficients {s.n_coeffs}",
    ]
    lines += [f"{c.real:.17g} {c.imag:.17g}" for c in model.coeffs]
    Path(path).write_text("\n".join(lines) + "\n")


def load_pa_model(path) -> GmpPaModel:
    lines = [ln.strip() for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not lines:
        raise ParseError("truncated PA model file")
    if lines[0] != f"{FILE_MAGIC} v{FILE_VERSION}":
        raise ParseError(f"unsupported PA model header {lines[0]!r}", row=1)
    fields = {}
    for i, key in enumerate(("orders", "memory", "lags", "coefficients"), start=1):
        if i >= len(lines):
            raise ParseError("truncated PA model file")
        name, _, rest = lines[i].partition(" ")
        if name != key:
            raise ParseError(f"expected {key!r}, got {name!r}", row=i + 1)
        fields[key] = [int(v) for v in rest.split()]
    structure = GmpStructure(tuple(fields["orders"]), fields["memory"][0], tuple(fields["lags"]))
    n = fields["coefficients"][0]
    if n != structure.n_coeffs:
        raise ParseError(f"coefficient count mismatch: header {n}, structure {structure.n_coeffs}")
    body = lines[5:]
    if len(body) != n:
        raise ParseError(f"truncated PA model file: {len(body)} of {n} coefficients")
    coeffs = []
    for row, ln in enumerate(body, start=6):
        try:
            re_, im_ = ln.split()
            coeffs.append(complex(float(re_), float(im_)))
        except ValueError:
            raise ParseError(f"bad coefficient line {ln!r}", row=row) from None
    return GmpPaModel(structure, np.array(coeffs))
