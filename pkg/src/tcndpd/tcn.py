"""Residual TCN predistorter.

Layout, for features ``F`` and stage widths ``w0..wN``::

    features -> 1x1 conv (F -> w0) -> act
             -> N x [depthwise K, dilation d**(n-1) -> pointwise 1x1 -> act]
             -> 1x1 conv (wN -> 2) -> + raw (I, Q)

Widths are uniform (``hidden_channels``) unless the budget solver widens the
trailing stages by one channel to land closer to a parameter budget.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .activations import (
    PRELU_INIT,
    ActivationKind,
    activation_apply,
    activation_derivative,
    prelu_slope_grad,
)
from .autodiff import ConvSpec, conv1d_backward, conv1d_forward
from .errors import ConfigError, ParseError, ShapeError
from .signals import ComplexSignal

MAX_DILATION = 2**31 - 1
FEATURES = ("i", "q", "abs", "abs2", "abs3", "abs5")
DEFAULT_FEATURES = ("i", "q", "abs", "abs3")


def causal_padding(kernel_size: int) -> int:
    if kernel_size < 1:
        raise ConfigError("kernel size must be >= 1")
    return kernel_size - 1


def noncausal_padding(kernel_size: int, dilation: int = 1) -> int:
    """Zeros added on each side: ``(K - 1) / 2 * D``."""
    if kernel_size < 1 or kernel_size % 2 == 0:
        raise ConfigError(f"noncausal padding needs an odd kernel size, got K={kernel_size}")
    if dilation < 1:
        raise ConfigError("dilation must be >= 1")
    return (kernel_size - 1) // 2 * dilation


def dilation_schedule(base: int, n_layers: int) -> list[int]:
    if base < 1 or n_layers < 1:
        raise ConfigError("dilation base and layer count must be >= 1")
    out = [base**n for n in range(n_layers)]
    if out[-1] > MAX_DILATION:
        raise ConfigError(f"dilation {out[-1]} overflows the supported range")
    return out


def receptive_field(kernel_size: int, base: int, n_layers: int) -> int:
    return 1 + (kernel_size - 1) * sum(dilation_schedule(base, n_layers))


def extract_features(x, features=DEFAULT_FEATURES) -> np.ndarray:
    """Per-timestep real features ``(len(features), T)`` from complex I/Q."""
    s = x.samples if isinstance(x, ComplexSignal) else np.asarray(x, dtype=np.complex128)
    i, q = s.real, s.imag
    r2 = i * i + q * q
    r = np.sqrt(r2)
    table = {
        "i": lambda: i,
        "q": lambda: q,
        "abs": lambda: r,
        "abs2": lambda: r2,
        "abs3": lambda: r2 * r,
        "abs5": lambda: r2 * r2 * r,
    }
    rows = []
    for name in features:
        if name not in table:
            raise ConfigError(f"unknown feature {name!r}; choose from {FEATURES}")
        rows.append(np.array(table[name](), dtype=np.float64))
    return np.stack(rows)


def iq_rows(x) -> np.ndarray:
    s = x.samples if isinstance(x, ComplexSignal) else np.asarray(x, dtype=np.complex128)
    return np.stack([s.real, s.imag]).astype(np.float64)


@dataclass(frozen=True)
class TcnArch:
    n_dconv_layers: int = 4
    kernel_size: int = 5
    dilation_base: int = 2
    hidden_channels: int | tuple[int, ...] = 8
    activation: ActivationKind = ActivationKind.HARDSWISH
    features: tuple[str, ...] = DEFAULT_FEATURES
    residual: bool = True
    layer_residual: bool = False
    padding_mode: str = "noncausal"

    def __post_init__(self):
        object.__setattr__(self, "activation", ActivationKind.parse(self.activation))
        object.__setattr__(self, "features", tuple(self.features))
        if isinstance(self.hidden_channels, (list, tuple)):
            object.__setattr__(self, "hidden_channels", tuple(int(c) for c in self.hidden_channels))
        if self.n_dconv_layers < 1:
            raise ConfigError("need at least one D-Conv layer")
        if self.kernel_size < 1:
            raise ConfigError("kernel size must be >= 1")
        if self.padding_mode not in ("noncausal", "causal"):
            raise ConfigError(f"padding_mode must be noncausal or causal, got {self.padding_mode!r}")
        if self.padding_mode == "noncausal" and self.kernel_size % 2 == 0:
            raise ConfigError(f"noncausal padding needs an odd kernel size, got K={self.kernel_size}")
        if self.dilation_base < 1:
            raise ConfigError("dilation base must be >= 1")
        if not self.features:
            raise ConfigError("feature set is empty")
        for f in self.features:
            if f not in FEATURES:
                raise ConfigError(f"unknown feature {f!r}")
        w = self.widths
        if len(w) != self.n_dconv_layers + 1 or min(w) < 1:
            raise ConfigError(f"widths must be {self.n_dconv_layers + 1} positive ints, got {w}")
        if self.layer_residual and len(set(w)) != 1:
            raise ConfigError("per-layer residuals need uniform widths")
        dilation_schedule(self.dilation_base, self.n_dconv_layers)

    @property
    def widths(self) -> tuple[int, ...]:
        c = self.hidden_channels
        if isinstance(c, tuple):
            return c
        return (int(c),) * (self.n_dconv_layers + 1)

    @property
    def dilations(self) -> list[int]:
        return dilation_schedule(self.dilation_base, self.n_dconv_layers)

    @property
    def receptive_field(self) -> int:
        return receptive_field(self.kernel_size, self.dilation_base, self.n_dconv_layers)

    @property
    def n_features(self) -> int:
        return len(self.features)

    def conv_specs(self) -> dict[str, ConvSpec]:
        w = self.widths
        specs = {"in": ConvSpec(self.n_features, w[0], 1)}
        for n, d in enumerate(self.dilations, start=1):
            c_in, c_out = w[n - 1], w[n]
            specs[f"dw{n}"] = ConvSpec(c_in, c_in, self.kernel_size, d, groups=c_in,
                                       padding_mode=self.padding_mode)
            specs[f"pw{n}"] = ConvSpec(c_in, c_out, 1)
        specs["out"] = ConvSpec(w[-1], 2, 1)
        return specs

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        """Every parameter block in file/storage order."""
        shapes: dict[str, tuple[int, ...]] = {}
        for name, spec in self.conv_specs().items():
            shapes[f"{name}.w"] = spec.weight_shape
            shapes[f"{name}.b"] = (spec.out_channels,)
        if self.activation is ActivationKind.PRELU:
            for n in range(self.n_dconv_layers + 1):
                shapes[f"act{n}.a"] = (1,)
        return shapes

    def n_params(self) -> int:
        return int(sum(np.prod(s) for s in self.param_shapes().values()))


@dataclass
class TcnModel:
    arch: TcnArch
    params: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        shapes = self.arch.param_shapes()
        if set(shapes) != set(self.params):
            missing = set(shapes) ^ set(self.params)
            raise ShapeError("parameter blocks", sorted(shapes), sorted(missing))
        ordered = {}
        for name, shape in shapes.items():
            p = np.asarray(self.params[name], dtype=np.float64)
            if p.shape != shape:
                raise ShapeError(name, shape, p.shape)
            if not np.all(np.isfinite(p)):
                raise ConfigError(f"non-finite weights in {name}")
            ordered[name] = p
        self.params = ordered

    def copy(self) -> "TcnModel":
        return TcnModel(self.arch, {k: v.copy() for k, v in self.params.items()})

    def equals(self, other: "TcnModel") -> bool:
        return self.arch == other.arch and all(
            np.array_equal(self.params[k], other.params[k]) for k in self.params
        )


def init_model(arch: TcnArch, seed: int = 0, zero_output: bool = True) -> TcnModel:
    """Seeded uniform init in +-1/sqrt(fan_in * K) per block.

    With ``zero_output`` the output 1x1 starts at zero, so the model begins
    as the identity predistorter.
    """
    rng = np.random.default_rng(seed)
    specs = arch.conv_specs()
    params = {}
    for name, spec in specs.items():
        bound = 1.0 / np.sqrt((spec.in_channels // spec.groups) * spec.kernel_size)
        if name == "out" and zero_output:
            params["out.w"] = np.zeros(spec.weight_shape)
            params["out.b"] = np.zeros(spec.out_channels)
            continue
        params[f"{name}.w"] = rng.uniform(-bound, bound, spec.weight_shape)
        params[f"{name}.b"] = rng.uniform(-bound, bound, spec.out_channels)
    if arch.activation is ActivationKind.PRELU:
        for n in range(arch.n_dconv_layers + 1):
            params[f"act{n}.a"] = np.full(1, PRELU_INIT)
    return TcnModel(arch, params)


def count_params(model: TcnModel | TcnArch) -> int:
    arch = model.arch if isinstance(model, TcnModel) else model
    return arch.n_params()


@dataclass(frozen=True)
class WidthSolution:
    width: int
    widths: tuple[int, ...]
    count: int

    def apply(self, arch: TcnArch) -> TcnArch:
        return replace(arch, hidden_channels=self.widths)


def solve_width_for_budget(budget: int, arch: TcnArch, tolerance: float = 0.05) -> WidthSolution:
    """Largest width whose parameter count fits ``budget``.

    The base width ``C`` is the largest uniform width under budget. When that
    lands more than ``tolerance`` below the budget, trailing stages are
    widened to ``C + 1`` (the profile that gets closest without going over).
    Per-layer residual architectures keep uniform widths.
    """
    def count(widths):
        return replace(arch, hidden_channels=tuple(widths)).n_params()

    n = arch.n_dconv_layers + 1
    minimum = count([1] * n)
    if budget < minimum:
        raise ConfigError(f"budget {budget} is below the minimum {minimum} parameters at width 1")
    c = 1
    while count([c + 1] * n) <= budget:
        c += 1
    best = tuple([c] * n)
    best_count = count(best)
    if best_count < (1.0 - tolerance) * budget and not arch.layer_residual:
        for j in range(n - 1, -1, -1):
            cand = tuple([c] * j + [c + 1] * (n - j))
            k = count(cand)
            if best_count < k <= budget:
                best, best_count = cand, k
    return WidthSolution(c, best, best_count)


# --- forward / backward --------------------------------------------------------

def _act(model: TcnModel, n: int, z):
    a = model.params.get(f"act{n}.a")
    slope = float(a[0]) if a is not None else PRELU_INIT
    return activation_apply(model.arch.activation, z, slope), slope


def forward(model: TcnModel, features: np.ndarray, raw_iq: np.ndarray, keep: bool = False):
    """Batched forward pass on ``(B, F, T)`` / ``(B, 2, T)`` arrays.

    Returns ``(out, cache)``; the cache is ``None`` unless ``keep``.
    """
    arch = model.arch
    specs = arch.conv_specs()
    p = model.params
    cache = {} if keep else None
    z = conv1d_forward(features, p["in.w"], p["in.b"], specs["in"])
    h, slope = _act(model, 0, z)
    if keep:
        cache["in"] = (features, z, slope)
    for n in range(1, arch.n_dconv_layers + 1):
        u = conv1d_forward(h, p[f"dw{n}.w"], p[f"dw{n}.b"], specs[f"dw{n}"])
        z = conv1d_forward(u, p[f"pw{n}.w"], p[f"pw{n}.b"], specs[f"pw{n}"])
        a, slope = _act(model, n, z)
        if keep:
            cache[n] = (h, u, z, slope)
        h = a + h if arch.layer_residual else a
    out = conv1d_forward(h, p["out.w"], p["out.b"], specs["out"])
    if arch.residual:
        out = out + raw_iq
    if keep:
        cache["out"] = h
    return out, cache


def backward(model: TcnModel, cache, grad_out: np.ndarray) -> dict[str, np.ndarray]:
    """Parameter gradients of ``sum(grad_out * forward(...))``."""
    arch = model.arch
    specs = arch.conv_specs()
    p = model.params
    kind = arch.activation
    grads: dict[str, np.ndarray] = {}
    gh, grads["out.w"], grads["out.b"] = conv1d_backward(grad_out, cache["out"], p["out.w"], specs["out"])
    for n in range(arch.n_dconv_layers, 0, -1):
        h, u, z, slope = cache[n]
        gz = gh * activation_derivative(kind, z, slope)
        if kind is ActivationKind.PRELU:
            grads[f"act{n}.a"] = np.array([prelu_slope_grad(z, gh)])
        gu, grads[f"pw{n}.w"], grads[f"pw{n}.b"] = conv1d_backward(gz, u, p[f"pw{n}.w"], specs[f"pw{n}"])
        gh_prev, grads[f"dw{n}.w"], grads[f"dw{n}.b"] = conv1d_backward(gu, h, p[f"dw{n}.w"], specs[f"dw{n}"])
        gh = gh_prev + gh if arch.layer_residual else gh_prev
    features, z, slope = cache["in"]
    gz = gh * activation_derivative(kind, z, slope)
    if kind is ActivationKind.PRELU:
        grads["act0.a"] = np.array([prelu_slope_grad(z, gh)])
    _, grads["in.w"], grads["in.b"] = conv1d_backward(gz, features, p["in.w"], specs["in"])
    return {k: grads[k] for k in p}


def tcn_forward(model: TcnModel, features: np.ndarray, raw_iq: np.ndarray,
                enforce_receptive_field: bool = True) -> np.ndarray:
    """Predistorted ``(2, T)`` I/Q for one sequence (or ``(B, 2, T)`` batch)."""
    features = np.asarray(features, dtype=np.float64)
    raw_iq = np.asarray(raw_iq, dtype=np.float64)
    if features.shape[-1] != raw_iq.shape[-1]:
        raise ShapeError("time", features.shape[-1], raw_iq.shape[-1])
    if features.shape[-2] != model.arch.n_features:
        raise ShapeError("features", model.arch.n_features, features.shape[-2])
    if raw_iq.shape[-2] != 2:
        raise ShapeError("raw_iq channels", 2, raw_iq.shape[-2])
    if enforce_receptive_field and features.shape[-1] < model.arch.receptive_field:
        raise ShapeError("time", f">= receptive field {model.arch.receptive_field}",
                         features.shape[-1])
    squeeze = features.ndim == 2
    f = features[None] if squeeze else features
    r = raw_iq[None] if squeeze else raw_iq
    out, _ = forward(model, f, r)
    return out[0] if squeeze else out


def predistort(model: TcnModel | None, x: ComplexSignal) -> ComplexSignal:
    """Run the DPD over a whole signal (``None`` is the identity DPD)."""
    if model is None:
        return x
    feats = extract_features(x, model.arch.features)
    out = tcn_forward(model, feats, iq_rows(x), enforce_receptive_field=False)
    return x.with_samples(out[0] + 1j * out[1])


# --- persistence ----------------------------------------------------------------

MODEL_MAGIC = "tcndpd-model"
MODEL_VERSION = 1


def save_model(model: TcnModel, path) -> None:
    a = model.arch
    lines = [
        f"{MODEL_MAGIC} v{MODEL_VERSION}",
        f"n_dconv_layers {a.n_dconv_layers}",
        f"kernel_size {a.kernel_size}",
        f"dilation_base {a.dilation_base}",
        "widths " + " ".join(str(w) for w in a.widths),
        f"activation {a.activation.label}",
        "features " + ",".join(a.features),
        f"residual {int(a.residual)}",
        f"layer_residual {int(a.layer_residual)}",
        f"padding_mode {a.padding_mode}",
        f"param_count {count_params(model)}",
    ]
    for name, arr in model.params.items():
        lines.append(f"block {name} " + " ".join(str(s) for s in arr.shape))
        lines += [f"{v:.17g}" for v in arr.reshape(-1)]
    lines.append("end")
    Path(path).write_text("\n".join(lines) + "\n")


_HEADER_KEYS = ("n_dconv_layers", "kernel_size", "dilation_base", "widths", "activation",
                "features", "residual", "layer_residual", "padding_mode", "param_count")


def _widths_value(text: str) -> int | tuple[int, ...]:
    w = tuple(int(v) for v in text.split())
    return w[0] if len(set(w)) == 1 else w


def load_model(path) -> TcnModel:
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].strip():
        raise ParseError("truncated model file")
    magic, _, version = lines[0].partition(" ")
    if magic != MODEL_MAGIC:
        raise ParseError(f"not a model file (header {lines[0]!r})", row=1)
    if version != f"v{MODEL_VERSION}":
        raise ParseError(f"version mismatch: file {version}, supported v{MODEL_VERSION}", row=1)
    if len(lines) < 1 + len(_HEADER_KEYS):
        raise ParseError("truncated model file")
    head = {}
    for i, key in enumerate(_HEADER_KEYS, start=1):
        name, _, val = lines[i].partition(" ")
        if name != key:
            raise ParseError(f"expected {key!r}, got {name!r}", row=i + 1)
        head[key] = val.strip()
    try:
        arch = TcnArch(
            n_dconv_layers=int(head["n_dconv_layers"]),
            kernel_size=int(head["kernel_size"]),
            dilation_base=int(head["dilation_base"]),
            hidden_channels=_widths_value(head["widths"]),
            activation=ActivationKind.parse(head["activation"]),
            features=tuple(head["features"].split(",")),
            residual=bool(int(head["residual"])),
            layer_residual=bool(int(head["layer_residual"])),
            padding_mode=head["padding_mode"],
        )
        declared = int(head["param_count"])
    except (ValueError, ConfigError) as exc:
        raise ParseError(f"bad model header: {exc}") from None
    if declared != arch.n_params():
        raise ParseError(f"count mismatch: header says {declared}, architecture has {arch.n_params()}")

    pos = 1 + len(_HEADER_KEYS)
    params = {}
    for name, shape in arch.param_shapes().items():
        if pos >= len(lines):
            raise ParseError("truncated model file")
        parts = lines[pos].split()
        if len(parts) < 2 or parts[0] != "block" or parts[1] != name:
            raise ParseError(f"expected block {name!r}", row=pos + 1)
        if tuple(int(s) for s in parts[2:]) != shape:
            raise ParseError(f"block {name} has shape {parts[2:]}, expected {shape}", row=pos + 1)
        size = int(np.prod(shape))
        body = lines[pos + 1:pos + 1 + size]
        if len(body) < size:
            raise ParseError("truncated model file")
        try:
            params[name] = np.array([float(v) for v in body]).reshape(shape)
        except ValueError:
            raise ParseError(f"non-numeric weight in block {name}", row=pos + 2) from None
        pos += 1 + size
    if pos >= len(lines) or lines[pos].strip() != "end":
        raise ParseError("truncated model file (missing end marker)")
    if sum(p.size for p in params.values()) != declared:
        raise ParseError("count mismatch between header and weight blocks")
    return TcnModel(arch, params)
