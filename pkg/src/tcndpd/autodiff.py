"""Small deterministic engine for the convolutions the TCN needs.

Arrays are float64 and laid out ``(batch, channels, time)``; 2-D ``(channels,
time)`` inputs are accepted and returned in the same rank. Every operation is
a pure function: forward returns its output, backward takes the saved input
and returns gradients.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .errors import ConfigError, NonFiniteError, ShapeError

PADDING_MODES = ("noncausal", "causal", "none")


@dataclass(frozen=True)
class Tensor2:
    """Channel-major ``channels x time`` block of float64 samples."""

    data: np.ndarray

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=np.float64)
        if data.ndim != 2 or data.shape[0] < 1 or data.shape[1] < 1:
            raise ShapeError("tensor", "(channels>=1, time>=1)", data.shape)
        if not np.all(np.isfinite(data)):
            raise NonFiniteError("tensor")
        object.__setattr__(self, "data", data)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def time(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class ConvSpec:
    in_channels: int
    out_channels: int
    kernel_size: int
    dilation: int = 1
    groups: int = 1
    padding_mode: str = "noncausal"
    bias: bool = True

    def __post_init__(self):
        if min(self.in_channels, self.out_channels, self.kernel_size, self.dilation, self.groups) < 1:
            raise ConfigError(f"conv sizes must be positive: {self}")
        if self.in_channels % self.groups or self.out_channels % self.groups:
            raise ConfigError(
                f"in_channels={self.in_channels} and out_channels={self.out_channels} "
                f"must be divisible by groups={self.groups}"
            )
        if self.padding_mode not in PADDING_MODES:
            raise ConfigError(f"unknown padding mode {self.padding_mode!r}")
        if self.padding_mode == "noncausal" and self.kernel_size % 2 == 0:
            raise ConfigError(f"noncausal padding needs an odd kernel size, got K={self.kernel_size}")

    @property
    def weight_shape(self) -> tuple[int, int, int]:
        return (self.out_channels, self.in_channels // self.groups, self.kernel_size)

    @property
    def span(self) -> int:
        return (self.kernel_size - 1) * self.dilation

    def pad_sizes(self) -> tuple[int, int]:
        if self.padding_mode == "noncausal":
            half = self.span // 2
            return half, half
        if self.padding_mode == "causal":
            return self.span, 0
        return 0, 0

    def n_params(self) -> int:
        n = int(np.prod(self.weight_shape))
        return n + (self.out_channels if self.bias else 0)


def _as_batch(x: np.ndarray) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2:
        return x[None], True
    if x.ndim != 3:
        raise ShapeError("rank", "2 or 3", x.ndim)
    return x, False


def pad_input(x: np.ndarray, spec: ConvSpec) -> np.ndarray:
    """Zero-extend ``x`` (batch, C, T) into a fresh scratch buffer."""
    left, right = spec.pad_sizes()
    b, c, t = x.shape
    buf = np.zeros((b, c, left + t + right))
    buf[:, :, left:left + t] = x
    return buf


def _check_conv_args(x: np.ndarray, weight: np.ndarray, bias, spec: ConvSpec) -> None:
    if x.shape[1] != spec.in_channels:
        raise ShapeError("in_channels", spec.in_channels, x.shape[1])
    if weight.shape != spec.weight_shape:
        raise ShapeError("weight", spec.weight_shape, weight.shape)
    if spec.bias:
        if bias is None or np.shape(bias) != (spec.out_channels,):
            raise ShapeError("bias", (spec.out_channels,), None if bias is None else np.shape(bias))
    if spec.padding_mode == "none" and x.shape[2] <= spec.span:
        raise ShapeError("time", f"> {spec.span}", x.shape[2])


def _input_index(spec: ConvSpec, i: int) -> np.ndarray:
    """Input channel read by every output channel for in-group offset ``i``."""
    cin_g = spec.in_channels // spec.groups
    cout_g = spec.out_channels // spec.groups
    return (np.arange(spec.out_channels) // cout_g) * cin_g + i


def conv1d_forward(x, weight, bias, spec: ConvSpec) -> np.ndarray:
    """Dilated grouped 1-D convolution (cross-correlation, PyTorch convention).

    Each output element accumulates ``w[o, i, k] * xpad[g*cin_g + i, t + k*D]``
    over ``k`` (outer) then ``i`` (inner) starting from 0.0, and the bias is
    added last. That ordering is part of the contract: the naive oracle in the
    tests reproduces it and compares bit for bit.
    """
    xb, squeeze = _as_batch(x)
    weight = np.asarray(weight, dtype=np.float64)
    _check_conv_args(xb, weight, bias, spec)
    xp = pad_input(xb, spec)
    t_out = xp.shape[2] - spec.span
    cin_g = spec.in_channels // spec.groups
    y = np.zeros((xb.shape[0], spec.out_channels, t_out))
    for k in range(spec.kernel_size):
        off = k * spec.dilation
        for i in range(cin_g):
            w = weight[:, i, k][None, :, None]
            if spec.groups == 1:
                y += w * xp[:, i:i + 1, off:off + t_out]
            else:
                y += w * xp[:, _input_index(spec, i), off:off + t_out]
    if spec.bias:
        y += np.asarray(bias, dtype=np.float64)[None, :, None]
    return y[0] if squeeze else y


def conv1d_backward(grad_out, x, weight, spec: ConvSpec):
    """Gradients of ``sum(grad_out * conv1d_forward(x, weight, bias, spec))``.

    Returns ``(grad_x, grad_weight, grad_bias)``; ``grad_bias`` is None when
    the spec has no bias.
    """
    xb, squeeze = _as_batch(x)
    gb, _ = _as_batch(grad_out)
    weight = np.asarray(weight, dtype=np.float64)
    if weight.shape != spec.weight_shape:
        raise ShapeError("weight", spec.weight_shape, weight.shape)
    if xb.shape[1] != spec.in_channels:
        raise ShapeError("in_channels", spec.in_channels, xb.shape[1])
    xp = pad_input(xb, spec)
    t_out = xp.shape[2] - spec.span
    expected = (xb.shape[0], spec.out_channels, t_out)
    if gb.shape != expected:
        raise ShapeError("grad_out", expected, gb.shape)

    grad_xp = np.zeros_like(xp)
    grad_w = np.zeros(spec.weight_shape)
    cin_g = spec.in_channels // spec.groups
    cout_g = spec.out_channels // spec.groups
    for k in range(spec.kernel_size):
        sl = slice(k * spec.dilation, k * spec.dilation + t_out)
        if spec.groups == 1:
            grad_w[:, :, k] = np.einsum("bot,bit->oi", gb, xp[:, :, sl])
            grad_xp[:, :, sl] += np.einsum("oi,bot->bit", weight[:, :, k], gb)
        elif cin_g == 1 and cout_g == 1:
            grad_w[:, 0, k] = np.einsum("bct,bct->c", gb, xp[:, :, sl])
            grad_xp[:, :, sl] += weight[:, 0, k][None, :, None] * gb
        else:
            for g in range(spec.groups):
                outs = slice(g * cout_g, (g + 1) * cout_g)
                ins = slice(g * cin_g, (g + 1) * cin_g)
                grad_w[outs, :, k] = np.einsum("bot,bit->oi", gb[:, outs], xp[:, ins, sl])
                grad_xp[:, ins, sl] += np.einsum("oi,bot->bit", weight[outs, :, k], gb[:, outs])
    grad_b = gb.sum(axis=(0, 2)) if spec.bias else None
    left, _ = spec.pad_sizes()
    grad_x = grad_xp[:, :, left:left + xb.shape[2]]
    return (grad_x[0] if squeeze else grad_x), grad_w, grad_b


# --- gradient checking -------------------------------------------------------

def finite_difference_check(
    f: Callable[[dict], tuple[float, Mapping[str, np.ndarray]]],
    params,
    eps: float = 1e-5,
) -> float:
    """Largest relative gap between analytic and central-difference gradients.

    ``f(params) -> (value, grads)`` where ``grads`` mirrors ``params``. A bare
    array is treated as ``{"x": array}``. Per element the gap is
    ``|a - n| / max(|a|, |n|, 1e-12)``.
    """
    if eps <= 0:
        raise ConfigError("eps must be positive")
    single = isinstance(params, np.ndarray) or np.isscalar(params)
    if single:
        base = {"x": np.atleast_1d(np.asarray(params, dtype=np.float64)).copy()}

        def call(p):
            v, g = f(p["x"])
            return v, {"x": np.atleast_1d(np.asarray(g, dtype=np.float64))}
    else:
        base = {k: np.asarray(v, dtype=np.float64).copy() for k, v in params.items()}
        call = f

    value, analytic = call(base)
    if not np.isfinite(value):
        raise NonFiniteError("function value at params")
    worst = 0.0
    for name, arr in base.items():
        grad = np.asarray(analytic[name], dtype=np.float64)
        for idx in np.ndindex(arr.shape):
            orig = arr[idx]
            arr[idx] = orig + eps
            f_plus, _ = call(base)
            arr[idx] = orig - eps
            f_minus, _ = call(base)
            arr[idx] = orig
            if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
                raise NonFiniteError(f"function value near {name}{list(idx)}")
            numeric = (f_plus - f_minus) / (2.0 * eps)
            a = grad[idx]
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-12)
            worst = max(worst, err)
    return worst


# --- optimizer ---------------------------------------------------------------

@dataclass(frozen=True)
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: int = 0
    lr: float = 5e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def init(cls, params: Mapping[str, np.ndarray], **hyper) -> "AdamState":
        zeros = {k: np.zeros_like(v, dtype=np.float64) for k, v in params.items()}
        return cls(m=zeros, v={k: z.copy() for k, z in zeros.items()}, **hyper)


def adam_step(params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray], state: AdamState):
    """One bias-corrected Adam update. Returns ``(new_params, new_state)``."""
    if state.step < 0:
        raise ConfigError("Adam step counter must be non-negative")
    t = state.step + 1
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    new_p, new_m, new_v = {}, {}, {}
    for name, p in params.items():
        g = np.asarray(grads[name], dtype=np.float64)
        if g.shape != np.shape(p):
            raise ShapeError(f"grad[{name}]", np.shape(p), g.shape)
        if not np.all(np.isfinite(g)):
            raise NonFiniteError(f"gradient block {name!r}")
        m_prev = state.m.get(name, np.zeros_like(g))
        v_prev = state.v.get(name, np.zeros_like(g))
        m = state.beta1 * m_prev + (1.0 - state.beta1) * g
        v = state.beta2 * v_prev + (1.0 - state.beta2) * (g * g)
        m_hat = m / bc1
        v_hat = v / bc2
        new_p[name] = p - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
        new_m[name] = m
        new_v[name] = v
    return new_p, dataclasses.replace(state, m=new_m, v=new_v, step=t)
