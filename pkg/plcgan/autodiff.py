# Copyright 2022 The plcgan Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#    http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""
A small reverse-mode automatic differentiation engine on top of numpy.

Every operation that involves a tensor requiring gradients records a
:class:`Node` (an operation tag, its parent tensors, and a function that
maps the output gradient to parent gradients). :func:`backward` walks the
recorded graph in reverse topological order and accumulates gradients
into the leaf tensors.

Convolutions are computed as a fixed-order sum over kernel offsets of
``numpy.tensordot`` contractions, so repeated runs give bit-identical results.
"""

import contextlib
import logging
import threading
from dataclasses import dataclass, field
from typing import Callable, Iterator, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import special

from . import exceptions, utils

logger = logging.getLogger(__name__)

ArrayLike = Union["Tensor", np.ndarray, float, int]
Pair = Union[int, Tuple[int, int]]

_MODE = threading.local()


def grad_enabled() -> bool:
    return getattr(_MODE, "enabled", True)


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Within this context (on the current thread), operations do not record backward nodes."""
    previous = grad_enabled()
    _MODE.enabled = False
    try:
        yield
    finally:
        _MODE.enabled = previous


class Node(NamedTuple):
    op: str
    parents: Tuple["Tensor", ...]
    backward: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class Tensor:
    """An n-dimensional array that may carry a gradient and a backward node."""

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        self.data = np.asarray(data)
        if not np.issubdtype(self.data.dtype, np.floating):
            self.data = self.data.astype(np.float64)
        self.requires_grad = requires_grad
        self.name = name
        self.grad: Optional[np.ndarray] = None
        self.node: Optional[Node] = None

    def __repr__(self) -> str:
        name = f" {self.name}" if self.name else ""
        op = f", op={self.node.op}" if self.node else ""
        return f"Tensor{name}(shape={self.shape}, dtype={self.dtype}{op})"

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def __float__(self) -> float:
        return self.item()

    def backward(self) -> None:
        backward(self)

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def sum(self) -> "Tensor":
        return sum_(self)

    def mean(self) -> "Tensor":
        return mean(self)

    def exp(self) -> "Tensor":
        return exp(self)

    def log(self) -> "Tensor":
        return log(self)

    def abs(self) -> "Tensor":
        return abs_(self)

    def sqrt(self) -> "Tensor":
        return sqrt(self)

    def square(self) -> "Tensor":
        return square(self)

    def reshape(self, *shape) -> "Tensor":
        return reshape(self, shape[0] if len(shape) == 1 else shape)


def as_tensor(x: ArrayLike, dtype=None) -> Tensor:
    """Wrap arrays and scalars as constant tensors; tensors pass through unchanged."""
    if isinstance(x, Tensor):
        return x
    data = np.asarray(x, dtype=dtype)
    return Tensor(data)


def parameter(data: np.ndarray, name: Optional[str] = None) -> Tensor:
    return Tensor(data, requires_grad=True, name=name)


def _result(data: np.ndarray, parents: Sequence[Tensor], op: str, backward_fn) -> Tensor:
    requires_grad = grad_enabled() and any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=requires_grad)
    if requires_grad:
        out.node = Node(op=op, parents=tuple(parents), backward=backward_fn)
    return out


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _binary(a: ArrayLike, b: ArrayLike) -> Tuple[Tensor, Tensor]:
    # scalars take the tensor's dtype so float32 graphs stay float32
    if isinstance(a, Tensor) and np.isscalar(b):
        b = Tensor(np.asarray(b, dtype=a.dtype))
    elif isinstance(b, Tensor) and np.isscalar(a):
        a = Tensor(np.asarray(a, dtype=b.dtype))
    a, b = as_tensor(a), as_tensor(b)
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise exceptions.ShapeMismatch(f"Cannot broadcast shapes {a.shape} and {b.shape}")
    return a, b


def add(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = _binary(a, b)
    return _result(
        a.data + b.data,
        (a, b),
        "add",
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = _binary(a, b)
    return _result(
        a.data - b.data,
        (a, b),
        "sub",
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
    )


def mul(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = _binary(a, b)
    return _result(
        a.data * b.data,
        (a, b),
        "mul",
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def div(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = _binary(a, b)
    return _result(
        a.data / b.data,
        (a, b),
        "div",
        lambda g: (
            _unbroadcast(g / b.data, a.shape),
            _unbroadcast(-g * a.data / b.data ** 2, b.shape),
        ),
    )


def neg(x: ArrayLike) -> Tensor:
    x = as_tensor(x)
    return _result(-x.data, (x,), "neg", lambda g: (-g,))


def exp(x: ArrayLike) -> Tensor:
    x = as_tensor(x)
    y = np.exp(x.data)
    return _result(y, (x,), "exp", lambda g: (g * y,))


def log(x: ArrayLike) -> Tensor:
    x = as_tensor(x)
    return _result(np.log(x.data), (x,), "log", lambda g: (g / x.data,))


def abs_(x: ArrayLike) -> Tensor:
    """Absolute value; the subgradient at 0 is 0."""
    x = as_tensor(x)
    return _result(np.abs(x.data), (x,), "abs", lambda g: (g * np.sign(x.data),))


def sqrt(x: ArrayLike) -> Tensor:
    x = as_tensor(x)
    y = np.sqrt(x.data)

    def backward_fn(g):
        # zero subgradient at the kink
        out = np.zeros_like(y, dtype=np.result_type(g, y))
        return (np.divide(0.5 * g, y, out=out, where=y > 0),)

    return _result(y, (x,), "sqrt", backward_fn)


def square(x: ArrayLike) -> Tensor:
    x = as_tensor(x)
    return _result(x.data ** 2, (x,), "square", lambda g: (2.0 * g * x.data,))


def sum_(x: ArrayLike) -> Tensor:
    x = as_tensor(x)
    return _result(
        np.sum(x.data), (x,), "sum", lambda g: (np.broadcast_to(g, x.shape).astype(x.dtype),)
    )


def mean(x: ArrayLike) -> Tensor:
    x = as_tensor(x)
    n = x.data.size
    return _result(
        np.mean(x.data), (x,), "mean", lambda g: (np.broadcast_to(g / n, x.shape).astype(x.dtype),)
    )


def reshape(x: ArrayLike, shape: Tuple[int, ...]) -> Tensor:
    x = as_tensor(x)
    return _result(x.data.reshape(shape), (x,), "reshape", lambda g: (g.reshape(x.shape),))


def leaky_relu(x: ArrayLike, slope: float = 0.2) -> Tensor:
    x = as_tensor(x)
    positive = x.data > 0
    return _result(
        np.where(positive, x.data, slope * x.data),
        (x,),
        "leaky_relu",
        lambda g: (np.where(positive, g, slope * g),),
    )


def relu(x: ArrayLike) -> Tensor:
    return leaky_relu(x, slope=0.0)


def tanh(x: ArrayLike) -> Tensor:
    x = as_tensor(x)
    y = np.tanh(x.data)
    return _result(y, (x,), "tanh", lambda g: (g * (1.0 - y ** 2),))


def sigmoid(x: ArrayLike) -> Tensor:
    x = as_tensor(x)
    y = special.expit(x.data)
    return _result(y, (x,), "sigmoid", lambda g: (g * y * (1.0 - y),))


def dropout(x: ArrayLike, p: float, seed: Union[int, Sequence[int]], train: bool = True) -> Tensor:
    """
    Zero each element with probability ``p`` and scale survivors by ``1 / (1 - p)``.

    The mask is a deterministic function of ``seed``. Outside of training this is the identity.
    """
    x = as_tensor(x)
    if not 0.0 <= p < 1.0:
        raise exceptions.InvalidParameter(f"Dropout probability must be in [0, 1), not {p}")
    if not train or p == 0.0:
        return x

    keys = (seed,) if isinstance(seed, int) else tuple(seed)
    keep = (utils.rng(*keys).random(x.shape) >= p).astype(x.dtype) / (1.0 - p)
    return _result(x.data * keep, (x,), "dropout", lambda g: (g * keep,))


def concat_channels(a: ArrayLike, b: ArrayLike) -> Tensor:
    """Concatenate two ``(batch, channel, height, width)`` tensors along the channel axis."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 4 or b.ndim != 4 or a.shape[0] != b.shape[0] or a.shape[2:] != b.shape[2:]:
        raise exceptions.ShapeMismatch(f"concat_channels: cannot join {a.shape} and {b.shape}")
    split = a.shape[1]
    return _result(
        np.concatenate([a.data, b.data], axis=1),
        (a, b),
        "concat_channels",
        lambda g: (g[:, :split], g[:, split:]),
    )


def bce_with_logits(logits: ArrayLike, targets: ArrayLike) -> Tensor:
    """Mean binary cross-entropy of ``sigmoid(logits)`` against ``targets``, computed stably."""
    z = as_tensor(logits)
    t = np.broadcast_to(np.asarray(targets.data if isinstance(targets, Tensor) else targets), z.shape)
    losses = np.maximum(z.data, 0) - z.data * t + np.log1p(np.exp(-np.abs(z.data)))
    n = max(z.data.size, 1)
    return _result(
        np.mean(losses), (z,), "bce_with_logits", lambda g: (g * (special.expit(z.data) - t) / n,)
    )


def l1_mean(a: ArrayLike, b: ArrayLike) -> Tensor:
    """Mean absolute difference; the subgradient at equality is 0."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise exceptions.ShapeMismatch(f"l1_mean: shapes {a.shape} and {b.shape} differ")
    diff = a.data - b.data
    n = max(diff.size, 1)
    return _result(
        np.mean(np.abs(diff)),
        (a, b),
        "l1_mean",
        lambda g: (g * np.sign(diff) / n, -g * np.sign(diff) / n),
    )


def _pair(v: Pair) -> Tuple[int, int]:
    return (v, v) if isinstance(v, int) else (int(v[0]), int(v[1]))


def conv2d(
    x: ArrayLike, weight: ArrayLike, bias: Optional[ArrayLike] = None, stride: Pair = 1, padding: Pair = 0
) -> Tensor:
    """
    2-D cross-correlation.

    ``x`` is ``(batch, in, height, width)``, ``weight`` is ``(out, in, kh, kw)``
    and ``bias`` is ``(out,)``. Padding is zeros on both sides of each axis.
    """
    x, weight = as_tensor(x), as_tensor(weight)
    bias = as_tensor(bias) if bias is not None else None
    (sh, sw), (ph, pw) = _pair(stride), _pair(padding)

    if x.ndim != 4 or weight.ndim != 4 or weight.shape[1] != x.shape[1]:
        raise exceptions.ShapeMismatch(f"conv2d: input {x.shape} does not fit weight {weight.shape}")
    batch, _, height, width = x.shape
    out_ch, _, kh, kw = weight.shape
    out_h = (height + 2 * ph - kh) // sh + 1
    out_w = (width + 2 * pw - kw) // sw + 1
    if out_h < 1 or out_w < 1:
        raise exceptions.ShapeMismatch(
            f"conv2d: input {x.shape} is too small for a {kh}x{kw} kernel with padding {(ph, pw)}"
        )
    if bias is not None and bias.shape != (out_ch,):
        raise exceptions.ShapeMismatch(f"conv2d: bias {bias.shape} does not fit {out_ch} channels")

    xp = np.pad(x.data, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    rows = lambda i: slice(i, i + sh * (out_h - 1) + 1, sh)
    cols = lambda j: slice(j, j + sw * (out_w - 1) + 1, sw)

    out = np.zeros((out_ch, batch, out_h, out_w), dtype=np.result_type(x.data, weight.data))
    for i in range(kh):
        for j in range(kw):
            out += np.tensordot(weight.data[:, :, i, j], xp[:, :, rows(i), cols(j)], axes=([1], [1]))
    out = out.transpose(1, 0, 2, 3)
    if bias is not None:
        out = out + bias.data.reshape(1, -1, 1, 1)

    def backward_fn(g: np.ndarray):
        go = g.transpose(1, 0, 2, 3)
        gxp = np.zeros_like(xp)
        gw = np.zeros_like(weight.data)
        for i in range(kh):
            for j in range(kw):
                gw[:, :, i, j] = np.tensordot(go, xp[:, :, rows(i), cols(j)], axes=([1, 2, 3], [0, 2, 3]))
                gxp[:, :, rows(i), cols(j)] += np.tensordot(
                    weight.data[:, :, i, j], go, axes=([0], [0])
                ).transpose(1, 0, 2, 3)
        gx = gxp[:, :, ph : ph + height, pw : pw + width]
        grads = [gx, gw]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2, 3)))
        return grads

    parents = (x, weight) if bias is None else (x, weight, bias)
    return _result(out, parents, "conv2d", backward_fn)


def conv_transpose2d(
    x: ArrayLike, weight: ArrayLike, bias: Optional[ArrayLike] = None, stride: Pair = 1, padding: Pair = 0
) -> Tensor:
    """
    The adjoint of :func:`conv2d` with respect to its input.

    ``weight`` is ``(in, out, kh, kw)``. The output has spatial size
    ``(n - 1) * stride - 2 * padding + kernel`` along each axis.
    """
    x, weight = as_tensor(x), as_tensor(weight)
    bias = as_tensor(bias) if bias is not None else None
    (sh, sw), (ph, pw) = _pair(stride), _pair(padding)

    if x.ndim != 4 or weight.ndim != 4 or weight.shape[0] != x.shape[1]:
        raise exceptions.ShapeMismatch(
            f"conv_transpose2d: input {x.shape} does not fit weight {weight.shape}"
        )
    batch, _, height, width = x.shape
    _, out_ch, kh, kw = weight.shape
    full_h = (height - 1) * sh + kh
    full_w = (width - 1) * sw + kw
    out_h = full_h - 2 * ph
    out_w = full_w - 2 * pw
    if out_h < 1 or out_w < 1:
        raise exceptions.ShapeMismatch(f"conv_transpose2d: padding {(ph, pw)} leaves no output")
    if bias is not None and bias.shape != (out_ch,):
        raise exceptions.ShapeMismatch(
            f"conv_transpose2d: bias {bias.shape} does not fit {out_ch} channels"
        )

    rows = lambda i: slice(i, i + sh * (height - 1) + 1, sh)
    cols = lambda j: slice(j, j + sw * (width - 1) + 1, sw)

    full = np.zeros((out_ch, batch, full_h, full_w), dtype=np.result_type(x.data, weight.data))
    for i in range(kh):
        for j in range(kw):
            full[:, :, rows(i), cols(j)] += np.tensordot(
                weight.data[:, :, i, j], x.data, axes=([0], [1])
            )
    out = full[:, :, ph : ph + out_h, pw : pw + out_w].transpose(1, 0, 2, 3)
    if bias is not None:
        out = out + bias.data.reshape(1, -1, 1, 1)

    def backward_fn(g: np.ndarray):
        gfull = np.zeros((out_ch, batch, full_h, full_w), dtype=g.dtype)
        gfull[:, :, ph : ph + out_h, pw : pw + out_w] = g.transpose(1, 0, 2, 3)
        gx = np.zeros((x.shape[1], batch, height, width), dtype=g.dtype)
        gw = np.zeros_like(weight.data)
        for i in range(kh):
            for j in range(kw):
                window = gfull[:, :, rows(i), cols(j)]
                gx += np.tensordot(weight.data[:, :, i, j], window, axes=([1], [0]))
                gw[:, :, i, j] = np.tensordot(x.data, window, axes=([0, 2, 3], [1, 2, 3]))
        grads = [gx.transpose(1, 0, 2, 3), gw]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2, 3)))
        return grads

    parents = (x, weight) if bias is None else (x, weight, bias)
    return _result(out, parents, "conv_transpose2d", backward_fn)


@dataclass
class BatchNormStats:
    """Running per-channel statistics, updated in place by training-mode :func:`batch_norm2d`."""

    mean: np.ndarray
    var: np.ndarray
    momentum: float = 0.1

    @classmethod
    def fresh(cls, channels: int, dtype=np.float64) -> "BatchNormStats":
        return cls(mean=np.zeros(channels, dtype=dtype), var=np.ones(channels, dtype=dtype))


def batch_norm2d(
    x: ArrayLike,
    gamma: ArrayLike,
    beta: ArrayLike,
    stats: BatchNormStats,
    train: bool = True,
    eps: float = 1e-5,
) -> Tensor:
    """
    Per-channel normalization of a ``(batch, channel, height, width)`` tensor.

    In training mode the batch statistics are used and the running
    statistics in ``stats`` are updated; otherwise the running statistics are used.
    """
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    if x.ndim != 4 or gamma.shape != (x.shape[1],) or beta.shape != (x.shape[1],):
        raise exceptions.ShapeMismatch(
            f"batch_norm2d: input {x.shape} with gamma {gamma.shape} and beta {beta.shape}"
        )
    axes = (0, 2, 3)
    shape = (1, -1, 1, 1)

    if train:
        mu = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        n = x.data.size // x.shape[1]
        m = stats.momentum
        stats.mean[...] = (1 - m) * stats.mean + m * mu
        stats.var[...] = (1 - m) * stats.var + m * var * (n / max(n - 1, 1))
    else:
        mu, var, n = stats.mean, stats.var, None

    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu.reshape(shape)) * inv_std.reshape(shape)
    out = gamma.data.reshape(shape) * xhat + beta.data.reshape(shape)

    def backward_fn(g: np.ndarray):
        dgamma = (g * xhat).sum(axis=axes)
        dbeta = g.sum(axis=axes)
        dxhat = g * gamma.data.reshape(shape)
        if train:
            dx = (inv_std.reshape(shape) / n) * (
                n * dxhat
                - dxhat.sum(axis=axes, keepdims=True)
                - xhat * (dxhat * xhat).sum(axis=axes, keepdims=True)
            )
        else:
            dx = dxhat * inv_std.reshape(shape)
        return dx, dgamma, dbeta

    return _result(out.astype(x.dtype, copy=False), (x, gamma, beta), "batch_norm2d", backward_fn)


def _topological_order(root: Tensor) -> List[Tensor]:
    order: List[Tensor] = []
    visited = set()
    stack = [(root, False)]
    while stack:
        tensor, expanded = stack.pop()
        if expanded:
            order.append(tensor)
            continue
        if id(tensor) in visited:
            continue
        visited.add(id(tensor))
        stack.append((tensor, True))
        if tensor.node is not None:
            for parent in tensor.node.parents:
                if parent.requires_grad and id(parent) not in visited:
                    stack.append((parent, False))
    return order


def backward(loss: Tensor) -> None:
    """
    Accumulate ``d loss / d leaf`` into the ``grad`` of every leaf that requires gradients.

    Leaf gradients add to whatever is already stored; call :func:`zero_grad` between steps.
    """
    if loss.data.size != 1:
        raise exceptions.ShapeMismatch(f"backward needs a scalar loss, not shape {loss.shape}")
    if not loss.requires_grad:
        raise exceptions.MissingGradient("The loss does not depend on any tensor that requires gradients")

    grads = {id(loss): np.ones_like(loss.data)}
    for tensor in reversed(_topological_order(loss)):
        g = grads.pop(id(tensor), None)
        if g is None:
            continue
        if tensor.node is None:
            tensor.grad = g.copy() if tensor.grad is None else tensor.grad + g
            continue
        for parent, parent_grad in zip(tensor.node.parents, tensor.node.backward(g)):
            if not parent.requires_grad or parent_grad is None:
                continue
            parent_grad = np.asarray(parent_grad, dtype=parent.dtype).reshape(parent.shape)
            if id(parent) in grads:
                grads[id(parent)] = grads[id(parent)] + parent_grad
            else:
                grads[id(parent)] = parent_grad


def zero_grad(params: Sequence[Tensor]) -> None:
    for p in params:
        p.grad = None


@dataclass
class AdamState:
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: List[np.ndarray] = field(default_factory=list)
    v: List[np.ndarray] = field(default_factory=list)


def adam_step(params: Sequence[Tensor], state: AdamState) -> None:
    """One bias-corrected Adam update, in place on ``params``."""
    missing = [p.name or repr(p) for p in params if p.grad is None]
    if missing:
        raise exceptions.MissingGradient(f"No gradient for parameters: {', '.join(missing)}")
    if not state.m:
        state.m = [np.zeros_like(p.data) for p in params]
        state.v = [np.zeros_like(p.data) for p in params]
    if len(state.m) != len(params):
        raise exceptions.ShapeMismatch(
            f"Optimizer state holds {len(state.m)} moments but {len(params)} parameters were given"
        )

    state.step_count += 1
    t = state.step_count
    correction1 = 1.0 - state.beta1 ** t
    correction2 = 1.0 - state.beta2 ** t
    for p, m, v in zip(params, state.m, state.v):
        g = p.grad
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        step = state.lr * (m / correction1) / (np.sqrt(v / correction2) + state.eps)
        p.data -= step.astype(p.dtype, copy=False)


@dataclass
class GradCheckReport:
    op: str
    max_abs_err: float
    max_rel_err: float
    tolerance: float
    n_checked: int

    @property
    def passed(self) -> bool:
        return self.max_rel_err < self.tolerance

    def __str__(self) -> str:
        status = "ok" if self.passed else "FAILED"
        return (
            f"{self.op}: {status} (max abs err {self.max_abs_err:.3e}, "
            f"max rel err {self.max_rel_err:.3e}, {self.n_checked} elements)"
        )


def grad_check(
    op: Callable[..., Tensor],
    shapes: Sequence[Tuple[int, ...]],
    tolerance: float = 1e-4,
    seed: int = 0,
    h: float = 1e-5,
    max_checks: int = 64,
    name: Optional[str] = None,
) -> GradCheckReport:
    """
    Compare analytic gradients of ``op`` against central finite differences in float64.

    ``op`` is called with one float64 tensor per entry of ``shapes``. Its
    output is reduced to a scalar with a fixed random projection. At most
    ``max_checks`` elements of each input are perturbed. Relative errors are
    measured against ``max(|analytic|, |numeric|, 1e-3)``.
    """
    g = utils.rng(seed)
    inputs = [g.standard_normal(shape) for shape in shapes]

    with no_grad():
        projection = g.standard_normal(op(*[Tensor(x) for x in inputs]).shape)

    def objective(arrays) -> float:
        with no_grad():
            return float(np.sum(op(*[Tensor(a) for a in arrays]).data * projection))

    leaves = [Tensor(x.copy(), requires_grad=True) for x in inputs]
    backward(sum_(mul(op(*leaves), projection)))

    max_abs = 0.0
    max_rel = 0.0
    n_checked = 0
    for k, leaf in enumerate(leaves):
        analytic = leaf.grad if leaf.grad is not None else np.zeros_like(leaf.data)
        flat_size = inputs[k].size
        indices = g.choice(flat_size, size=min(max_checks, flat_size), replace=False)
        for index in indices:
            plus = [a.copy() for a in inputs]
            minus = [a.copy() for a in inputs]
            plus[k].flat[index] += h
            minus[k].flat[index] -= h
            numeric = (objective(plus) - objective(minus)) / (2 * h)
            a = analytic.flat[index]
            err = abs(a - numeric)
            max_abs = max(max_abs, err)
            max_rel = max(max_rel, err / max(abs(a), abs(numeric), 1e-3))
            n_checked += 1

    report = GradCheckReport(
        op=name or getattr(op, "__name__", "op"),
        max_abs_err=max_abs,
        max_rel_err=max_rel,
        tolerance=tolerance,
        n_checked=n_checked,
    )
    logger.debug(str(report))
    return report
