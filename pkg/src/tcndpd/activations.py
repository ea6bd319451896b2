"""The 22 activation functions of the sweep, with closed-form derivatives.

Hyperparameters follow the usual PyTorch defaults. RReLU is evaluated with
its mean slope ``(lower + upper) / 2`` in both training and inference so
runs stay reproducible. PReLU takes its slope as an explicit argument; the
network owns that parameter.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.special import erf, expit

SELU_ALPHA = 1.6732632423543772848170429916717
SELU_SCALE = 1.0507009873554804934193349852946
RRELU_LOWER = 1.0 / 8.0
RRELU_UPPER = 1.0 / 3.0
RRELU_SLOPE = (RRELU_LOWER + RRELU_UPPER) / 2.0
LEAKY_SLOPE = 0.01
SHRINK_LAMBDA = 0.5
PRELU_INIT = 0.25

_SQRT2 = np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


class ActivationKind(Enum):
    # Values are the 1-based IDs of the activation sweep table.
    CELU = 1
    ELU = 2
    GELU = 3
    HARDSHRINK = 4
    HARDTANH = 5
    HARDSWISH = 6
    LEAKYRELU = 7
    LOGSIGMOID = 8
    MISH = 9
    RELU = 10
    RELU6 = 11
    RRELU = 12
    SELU = 13
    SILU = 14
    SOFTPLUS = 15
    SOFTSHRINK = 16
    SOFTSIGN = 17
    TANH = 18
    TANHSHRINK = 19
    HARDSIGMOID = 20
    SIGMOID = 21
    PRELU = 22

    @property
    def label(self) -> str:
        return _LABELS[self]

    @classmethod
    def parse(cls, name: str | "ActivationKind") -> "ActivationKind":
        if isinstance(name, ActivationKind):
            return name
        key = str(name).strip().lower()
        for kind in cls:
            if kind.name.lower() == key or kind.label.lower() == key:
                return kind
        raise ValueError(f"unknown activation {name!r}")


_LABELS = {
    ActivationKind.CELU: "CELU",
    ActivationKind.ELU: "ELU",
    ActivationKind.GELU: "GELU",
    ActivationKind.HARDSHRINK: "Hardshrink",
    ActivationKind.HARDTANH: "Hardtanh",
    ActivationKind.HARDSWISH: "Hardswish",
    ActivationKind.LEAKYRELU: "LeakyReLU",
    ActivationKind.LOGSIGMOID: "LogSigmoid",
    ActivationKind.MISH: "Mish",
    ActivationKind.RELU: "ReLU",
    ActivationKind.RELU6: "ReLU6",
    ActivationKind.RRELU: "RReLU",
    ActivationKind.SELU: "SELU",
    ActivationKind.SILU: "SiLU",
    ActivationKind.SOFTPLUS: "Softplus",
    ActivationKind.SOFTSHRINK: "Softshrink",
    ActivationKind.SOFTSIGN: "Softsign",
    ActivationKind.TANH: "Tanh",
    ActivationKind.TANHSHRINK: "Tanhshrink",
    ActivationKind.HARDSIGMOID: "Hardsigmoid",
    ActivationKind.SIGMOID: "Sigmoid",
    ActivationKind.PRELU: "PReLU",
}

# In sweep-table order (ID 1..22).
ALL_KINDS: tuple[ActivationKind, ...] = tuple(sorted(ActivationKind, key=lambda k: k.value))

# Points where the derivative jumps; derivative checks stay clear of them.
KINKS: dict[ActivationKind, tuple[float, ...]] = {
    ActivationKind.CELU: (0.0,),
    ActivationKind.ELU: (0.0,),
    ActivationKind.HARDSHRINK: (-SHRINK_LAMBDA, SHRINK_LAMBDA),
    ActivationKind.HARDTANH: (-1.0, 1.0),
    ActivationKind.HARDSWISH: (-3.0, 3.0),
    ActivationKind.LEAKYRELU: (0.0,),
    ActivationKind.RELU: (0.0,),
    ActivationKind.RELU6: (0.0, 6.0),
    ActivationKind.RRELU: (0.0,),
    ActivationKind.SELU: (0.0,),
    ActivationKind.SOFTSHRINK: (-SHRINK_LAMBDA, SHRINK_LAMBDA),
    ActivationKind.SOFTSIGN: (0.0,),
    ActivationKind.HARDSIGMOID: (-3.0, 3.0),
    ActivationKind.PRELU: (0.0,),
}

SMOOTH_KINDS = tuple(k for k in ALL_KINDS if k not in KINKS)


def _softplus(v):
    return np.maximum(v, 0.0) + np.log1p(np.exp(-np.abs(v)))


def activation_apply(kind: ActivationKind, v, slope: float = PRELU_INIT) -> np.ndarray:
    """Evaluate ``kind`` elementwise. ``slope`` is only read by PReLU."""
    kind = ActivationKind.parse(kind)
    v = np.asarray(v, dtype=np.float64)
    K = ActivationKind
    if kind in (K.CELU, K.ELU):
        return np.where(v > 0, v, np.expm1(np.minimum(v, 0.0)))
    if kind is K.GELU:
        return 0.5 * v * (1.0 + erf(v / _SQRT2))
    if kind is K.HARDSHRINK:
        return np.where(np.abs(v) > SHRINK_LAMBDA, v, 0.0)
    if kind is K.HARDTANH:
        return np.clip(v, -1.0, 1.0)
    if kind is K.HARDSWISH:
        return v * np.clip(v + 3.0, 0.0, 6.0) / 6.0
    if kind is K.LEAKYRELU:
        return np.where(v > 0, v, LEAKY_SLOPE * v)
    if kind is K.LOGSIGMOID:
        return -_softplus(-v)
    if kind is K.MISH:
        return v * np.tanh(_softplus(v))
    if kind is K.RELU:
        return np.maximum(v, 0.0)
    if kind is K.RELU6:
        return np.clip(v, 0.0, 6.0)
    if kind is K.RRELU:
        return np.where(v >= 0, v, RRELU_SLOPE * v)
    if kind is K.SELU:
        return SELU_SCALE * np.where(v > 0, v, SELU_ALPHA * np.expm1(np.minimum(v, 0.0)))
    if kind is K.SILU:
        return v * expit(v)
    if kind is K.SOFTPLUS:
        return _softplus(v)
    if kind is K.SOFTSHRINK:
        return np.where(v > SHRINK_LAMBDA, v - SHRINK_LAMBDA,
                        np.where(v < -SHRINK_LAMBDA, v + SHRINK_LAMBDA, 0.0))
    if kind is K.SOFTSIGN:
        return v / (1.0 + np.abs(v))
    if kind is K.TANH:
        return np.tanh(v)
    if kind is K.TANHSHRINK:
        return v - np.tanh(v)
    if kind is K.HARDSIGMOID:
        return np.clip(v + 3.0, 0.0, 6.0) / 6.0
    if kind is K.SIGMOID:
        return expit(v)
    if kind is K.PRELU:
        return np.where(v >= 0, v, slope * v)
    raise AssertionError(kind)


def activation_derivative(kind: ActivationKind, v, slope: float = PRELU_INIT) -> np.ndarray:
    """d/dv of :func:`activation_apply`. At kinks the right-hand value is used."""
    kind = ActivationKind.parse(kind)
    v = np.asarray(v, dtype=np.float64)
    K = ActivationKind
    one = np.ones_like(v)
    zero = np.zeros_like(v)
    if kind in (K.CELU, K.ELU):
        return np.where(v > 0, one, np.exp(np.minimum(v, 0.0)))
    if kind is K.GELU:
        return 0.5 * (1.0 + erf(v / _SQRT2)) + v * _INV_SQRT_2PI * np.exp(-0.5 * v * v)
    if kind is K.HARDSHRINK:
        return np.where(np.abs(v) > SHRINK_LAMBDA, one, zero)
    if kind is K.HARDTANH:
        return np.where((v > -1.0) & (v < 1.0), one, zero)
    if kind is K.HARDSWISH:
        return np.where(v < -3.0, zero, np.where(v > 3.0, one, (2.0 * v + 3.0) / 6.0))
    if kind is K.LEAKYRELU:
        return np.where(v > 0, one, LEAKY_SLOPE * one)
    if kind is K.LOGSIGMOID:
        return expit(-v)
    if kind is K.MISH:
        sp = _softplus(v)
        th = np.tanh(sp)
        return th + v * (1.0 - th * th) * expit(v)
    if kind is K.RELU:
        return np.where(v > 0, one, zero)
    if kind is K.RELU6:
        return np.where((v > 0) & (v < 6.0), one, zero)
    if kind is K.RRELU:
        return np.where(v >= 0, one, RRELU_SLOPE * one)
    if kind is K.SELU:
        return SELU_SCALE * np.where(v > 0, one, SELU_ALPHA * np.exp(np.minimum(v, 0.0)))
    if kind is K.SILU:
        s = expit(v)
        return s * (1.0 + v * (1.0 - s))
    if kind is K.SOFTPLUS:
        return expit(v)
    if kind is K.SOFTSHRINK:
        return np.where(np.abs(v) > SHRINK_LAMBDA, one, zero)
    if kind is K.SOFTSIGN:
        d = 1.0 + np.abs(v)
        return 1.0 / (d * d)
    if kind is K.TANH:
        t = np.tanh(v)
        return 1.0 - t * t
    if kind is K.TANHSHRINK:
        t = np.tanh(v)
        return t * t
    if kind is K.HARDSIGMOID:
        return np.where((v > -3.0) & (v < 3.0), one / 6.0, zero)
    if kind is K.SIGMOID:
        s = expit(v)
        return s * (1.0 - s)
    if kind is K.PRELU:
        return np.where(v >= 0, one, slope * one)
    raise AssertionError(kind)


def prelu_slope_grad(v, grad_out) -> float:
    """Gradient of ``sum(grad_out * prelu(v, a))`` with respect to ``a``."""
    v = np.asarray(v)
    return float(np.sum(np.where(v < 0, v, 0.0) * grad_out))


@dataclass(frozen=True)
class SpotValue:
    kind: ActivationKind
    x: float
    y: float


# Closed-form anchors used by the tests and the acceptance run.
SPOT_VALUES = (
    SpotValue(ActivationKind.HARDSWISH, 3.0, 3.0),
    SpotValue(ActivationKind.HARDSWISH, -3.0, 0.0),
    SpotValue(ActivationKind.HARDSWISH, 1.0, 2.0 / 3.0),
    SpotValue(ActivationKind.SIGMOID, 0.0, 0.5),
    SpotValue(ActivationKind.RELU, -2.0, 0.0),
    SpotValue(ActivationKind.RELU6, 7.0, 6.0),
    SpotValue(ActivationKind.SOFTSIGN, 1.0, 0.5),
    SpotValue(ActivationKind.GELU, 0.0, 0.0),
    SpotValue(ActivationKind.TANH, 0.0, 0.0),
    SpotValue(ActivationKind.HARDTANH, 2.0, 1.0),
    SpotValue(ActivationKind.HARDSHRINK, 0.3, 0.0),
    SpotValue(ActivationKind.SOFTSHRINK, 1.5, 1.0),
    SpotValue(ActivationKind.HARDSIGMOID, 0.0, 0.5),
    SpotValue(ActivationKind.LEAKYRELU, -1.0, -0.01),
    SpotValue(ActivationKind.RRELU, -48.0, -11.0),
    SpotValue(ActivationKind.ELU, 0.0, 0.0),
    SpotValue(ActivationKind.CELU, 1.0, 1.0),
    SpotValue(ActivationKind.SELU, 1.0, SELU_SCALE),
    SpotValue(ActivationKind.SILU, 0.0, 0.0),
    SpotValue(ActivationKind.SOFTPLUS, 0.0, float(np.log(2.0))),
    SpotValue(ActivationKind.LOGSIGMOID, 0.0, float(-np.log(2.0))),
    SpotValue(ActivationKind.MISH, 0.0, 0.0),
    SpotValue(ActivationKind.TANHSHRINK, 0.0, 0.0),
    SpotValue(ActivationKind.PRELU, -4.0, -1.0),
)
