"""Dense linear-algebra and differentiable-layer primitives.

Matrices are plain 2-D float64 numpy arrays. Every forward op here has a
matching ``*_backward`` that consumes the upstream gradient plus whatever the
forward cached (input or output), so higher modules can compose analytic
backward passes and verify them against :func:`finite_diff_grad`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from .errors import DimensionError, TrainingDivergenceError

__all__ = [
    "ParamTensor",
    "matmul",
    "relu",
    "relu_backward",
    "sigmoid",
    "sigmoid_backward",
    "softmax_row",
    "softmax_row_backward",
    "finite_diff_grad",
    "relative_error",
]


@dataclass
class ParamTensor:
    """A trainable tensor paired with its gradient accumulator."""

    value: np.ndarray
    grad: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        self.value = np.asarray(self.value, dtype=np.float64)
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        else:
            self.grad = np.asarray(self.grad, dtype=np.float64)
        if self.grad.shape != self.value.shape:
            raise DimensionError(
                f"grad shape {self.grad.shape} != value shape {self.value.shape}"
            )

    def zero_grad(self) -> None:
        self.grad[...] = 0.0


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(f"matmul needs 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"incompatible shapes {a.shape} x {b.shape}")
    return a @ b


def relu(m: np.ndarray) -> np.ndarray:
    return np.maximum(m, 0.0)


def relu_backward(upstream: np.ndarray, inp: np.ndarray) -> np.ndarray:
    # subgradient at exactly 0 is defined as 0
    return upstream * (inp > 0)


def sigmoid(m: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function; output strictly in (0, 1)."""
    m = np.asarray(m, dtype=np.float64)
    out = np.empty_like(m)
    pos = m >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-m[pos]))
    e = np.exp(m[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def sigmoid_backward(upstream: np.ndarray, out: np.ndarray) -> np.ndarray:
    return upstream * out * (1.0 - out)


def softmax_row(m: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max-subtraction for overflow safety."""
    m = np.asarray(m, dtype=np.float64)
    shifted = m - m.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_row_backward(upstream: np.ndarray, out: np.ndarray) -> np.ndarray:
    inner = (upstream * out).sum(axis=-1, keepdims=True)
    return out * (upstream - inner)


def finite_diff_grad(
    loss_fn: Callable[[], float],
    params: Iterable[tuple[str, ParamTensor]],
    eps: float = 1e-5,
) -> dict[str, np.ndarray]:
    """Central-difference gradient estimate for every scalar parameter.

    ``loss_fn`` is re-evaluated with each entry perturbed by +/- eps in place;
    the original values are restored afterwards. This is the independent
    oracle for every analytic backward pass in the package.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    params = list(params)
    grads: dict[str, np.ndarray] = {}
    for name, tensor in params:
        flat = tensor.value.reshape(-1)
        est = np.empty_like(flat)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            lp = loss_fn()
            flat[i] = orig - eps
            lm = loss_fn()
            flat[i] = orig
            if not (np.isfinite(lp) and np.isfinite(lm)):
                raise TrainingDivergenceError(
                    f"non-finite loss while probing parameter {name}[{i}]"
                )
            est[i] = (lp - lm) / (2.0 * eps)
        grads[name] = est.reshape(tensor.value.shape)
    return grads


def relative_error(analytic: np.ndarray, estimate: np.ndarray) -> float:
    """Max elementwise |a-f| / max(1e-8, |a|+|f|)."""
    a = np.asarray(analytic, dtype=np.float64)
    f = np.asarray(estimate, dtype=np.float64)
    denom = np.maximum(1e-8, np.abs(a) + np.abs(f))
    return float(np.max(np.abs(a - f) / denom)) if a.size else 0.0
