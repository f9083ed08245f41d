"""Reverse-mode automatic differentiation over numpy arrays.

Values are stored as 32-bit floats; reductions accumulate in 64-bit.
Every operation records a backward closure on a tape; calling
``backward()`` on a scalar output walks the tape in reverse topological
order and accumulates gradients additively until they are zeroed.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable

import numpy as np
from scipy.special import erf

from .errors import ConfigurationError, DimensionError, UsageError

_GRAD_ENABLED = True
_DEFAULT_DTYPE = np.float32

_INV_SQRT2 = 0.7071067811865476
_INV_SQRT2PI = 0.3989422804014327


@contextlib.contextmanager
def no_grad():
    """Disable tape recording inside the block (inference mode)."""
    global _GRAD_ENABLED
    prev, _GRAD_ENABLED = _GRAD_ENABLED, False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


@contextlib.contextmanager
def precision(dtype):
    """Temporarily change the dtype newly created tensors default to.

    Used by gradient verification, which reruns graphs in float64 to keep
    roundoff well below the comparison tolerances.
    """
    global _DEFAULT_DTYPE
    prev, _DEFAULT_DTYPE = _DEFAULT_DTYPE, np.dtype(dtype).type
    try:
        yield
    finally:
        _DEFAULT_DTYPE = prev


def default_dtype():
    return _DEFAULT_DTYPE


def _sum64(x: np.ndarray, axis=None, keepdims=False) -> np.ndarray:
    # reductions accumulate in float64, result returned in the input dtype
    return np.sum(x, axis=axis, keepdims=keepdims, dtype=np.float64).astype(x.dtype)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce a broadcasted gradient back to ``shape``."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    """N-dimensional float array with an optional gradient accumulator."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=_DEFAULT_DTYPE)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[], None] | None = None

    @classmethod
    def _from_result(cls, data: np.ndarray, parents: tuple["Tensor", ...],
                     backward: Callable[[], None] | None) -> "Tensor":
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        track = _GRAD_ENABLED and any(p.requires_grad for p in parents)
        out.requires_grad = track
        out._parents = parents if track else ()
        out._backward = backward if track else None
        return out

    # -- bookkeeping ---------------------------------------------------

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise DimensionError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def numpy(self) -> np.ndarray:
        return self.data

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # -- graph traversal -----------------------------------------------

    def backward(self) -> None:
        """Backpropagate from this scalar through the recorded graph.

        Gradients accumulate additively across calls until zeroed.
        """
        if self.data.size != 1:
            raise UsageError(f"backward() requires a scalar loss, got shape {self.shape}")
        if not self._parents:
            raise UsageError("backward() on a tensor with no recorded graph")
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in seen:
                    stack.append((parent, False))
        self._accumulate(np.ones_like(self.data))
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward()

    # -- arithmetic ----------------------------------------------------

    def __add__(self, other):
        other = as_tensor(other, like=self)
        out_data = self.data + other.data
        a, b = self, other

        def back():
            if a.requires_grad:
                a._accumulate(_unbroadcast(out.grad, a.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(out.grad, b.shape))

        out = Tensor._from_result(out_data, (a, b), back)
        return out

    __radd__ = __add__

    def __mul__(self, other):
        other = as_tensor(other, like=self)
        out_data = self.data * other.data
        a, b = self, other

        def back():
            if a.requires_grad:
                a._accumulate(_unbroadcast(out.grad * b.data, a.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(out.grad * a.data, b.shape))

        out = Tensor._from_result(out_data, (a, b), back)
        return out

    __rmul__ = __mul__

    def __neg__(self):
        a = self

        def back():
            if a.requires_grad:
                a._accumulate(-out.grad)

        out = Tensor._from_result(-self.data, (a,), back)
        return out

    def __sub__(self, other):
        return self + (-as_tensor(other, like=self))

    def __rsub__(self, other):
        return as_tensor(other, like=self) + (-self)

    def __truediv__(self, scalar):
        if isinstance(scalar, Tensor):
            raise UsageError("tensor/tensor division is not supported; multiply by a reciprocal")
        return self * (1.0 / float(scalar))

    def __pow__(self, exponent):
        p = float(exponent)
        a = self
        out_data = self.data ** p

        def back():
            if a.requires_grad:
                a._accumulate(out.grad * p * a.data ** (p - 1.0))

        out = Tensor._from_result(out_data, (a,), back)
        return out

    def __matmul__(self, other):
        return matmul(self, other)

    # -- shape manipulation ---------------------------------------------

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        a = self
        out_data = self.data.reshape(shape)

        def back():
            if a.requires_grad:
                a._accumulate(out.grad.reshape(a.shape))

        out = Tensor._from_result(out_data, (a,), back)
        return out

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        inverse = tuple(int(np.argsort(axes)[i]) for i in range(len(axes)))
        a = self
        out_data = self.data.transpose(axes)

        def back():
            if a.requires_grad:
                a._accumulate(out.grad.transpose(inverse))

        out = Tensor._from_result(out_data, (a,), back)
        return out

    # -- reductions ------------------------------------------------------

    def sum(self, axis=None, keepdims=False):
        a = self
        out_data = _sum64(self.data, axis=axis, keepdims=keepdims)

        def back():
            if not a.requires_grad:
                return
            g = out.grad
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            a._accumulate(np.broadcast_to(g, a.shape).copy())

        out = Tensor._from_result(out_data, (a,), back)
        return out

    def mean(self, axis=None, keepdims=False):
        if axis is None:
            count = self.data.size
        else:
            count = self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    # -- pointwise nonlinearities -----------------------------------------

    def exp(self):
        a = self
        out_data = np.exp(self.data)

        def back():
            if a.requires_grad:
                a._accumulate(out.grad * out.data)

        out = Tensor._from_result(out_data, (a,), back)
        return out

    def log(self):
        a = self
        out_data = np.log(self.data)

        def back():
            if a.requires_grad:
                a._accumulate(out.grad / a.data)

        out = Tensor._from_result(out_data, (a,), back)
        return out

    def gelu(self):
        """Gaussian error linear unit, exact erf form."""
        a = self
        x = self.data
        cdf = 0.5 * (1.0 + erf(x * _INV_SQRT2))
        out_data = (x * cdf).astype(x.dtype)

        def back():
            if a.requires_grad:
                pdf = _INV_SQRT2PI * np.exp(-0.5 * a.data * a.data)
                a._accumulate(out.grad * (cdf + a.data * pdf).astype(a.data.dtype))

        out = Tensor._from_result(out_data, (a,), back)
        return out


def as_tensor(value, like: Tensor | None = None) -> Tensor:
    """Wrap scalars and arrays as constant tensors; pass tensors through."""
    if isinstance(value, Tensor):
        return value
    dtype = like.data.dtype if like is not None else _DEFAULT_DTYPE
    out = Tensor.__new__(Tensor)
    out.data = np.asarray(value, dtype=dtype)
    out.grad = None
    out.requires_grad = False
    out._parents = ()
    out._backward = None
    return out


def constant(data, dtype=None) -> Tensor:
    """Non-trainable tensor wrapping ``data`` without casting integer arrays."""
    out = Tensor.__new__(Tensor)
    out.data = np.asarray(data, dtype=dtype) if dtype is not None else np.asarray(data)
    out.grad = None
    out.requires_grad = False
    out._parents = ()
    out._backward = None
    return out


# -- binary / structural operations ---------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product with broadcast batch dimensions.

    dL/da = dL/dout @ b^T and dL/db = a^T @ dL/dout, reduced back over
    any broadcasted batch axes.
    """
    a = as_tensor(a)
    b = as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError(f"matmul needs 2-D or higher operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul inner dimensions disagree: {a.shape} x {b.shape}")
    try:
        out_data = np.matmul(a.data, b.data)
    except ValueError as exc:
        raise DimensionError(f"matmul batch dimensions disagree: {a.shape} x {b.shape}") from exc

    def back():
        g = out.grad
        if a.requires_grad:
            ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
            a._accumulate(_unbroadcast(ga, a.shape))
        if b.requires_grad:
            gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
            b._accumulate(_unbroadcast(gb, b.shape))

    out = Tensor._from_result(out_data, (a, b), back)
    return out


def embedding(weight: Tensor, ids: np.ndarray) -> Tensor:
    """Row lookup ``weight[ids]`` with scatter-add backward."""
    ids = np.asarray(ids)
    out_data = weight.data[ids]
    w = weight

    def back():
        if w.requires_grad:
            if w.grad is None:
                w.grad = np.zeros_like(w.data)
            np.add.at(w.grad, ids, out.grad)

    out = Tensor._from_result(out_data, (w,), back)
    return out


def gather_rows(x: Tensor, mask: np.ndarray) -> Tensor:
    """Select final-axis rows of ``x`` where the boolean ``mask`` is true.

    ``mask`` covers every axis of ``x`` except the last; the result is
    ``[n_selected, last_dim]`` in C order of the mask.
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != x.shape[:-1]:
        raise DimensionError(f"mask shape {mask.shape} does not cover tensor shape {x.shape}")
    out_data = x.data[mask]
    a = x

    def back():
        if a.requires_grad:
            if a.grad is None:
                a.grad = np.zeros_like(a.data)
            a.grad[mask] += out.grad

    out = Tensor._from_result(out_data, (a,), back)
    return out


def take_index(x: Tensor, idx: np.ndarray) -> Tensor:
    """Pick one column per row: out[i] = x[i, idx[i]]."""
    idx = np.asarray(idx)
    if x.ndim != 2 or idx.shape != (x.shape[0],):
        raise DimensionError(f"take_index expects [N, C] and [N] index, got {x.shape} and {idx.shape}")
    rows = np.arange(x.shape[0])
    out_data = x.data[rows, idx]
    a = x

    def back():
        if a.requires_grad:
            if a.grad is None:
                a.grad = np.zeros_like(a.data)
            np.add.at(a.grad, (rows, idx), out.grad)

    out = Tensor._from_result(out_data, (a,), back)
    return out


def select(x: Tensor, axis: int, index: int) -> Tensor:
    """Slice out a single index along ``axis``, dropping that axis."""
    out_data = np.take(x.data, index, axis=axis)
    a = x

    def back():
        if a.requires_grad:
            if a.grad is None:
                a.grad = np.zeros_like(a.data)
            sl = [slice(None)] * a.ndim
            sl[axis] = index
            a.grad[tuple(sl)] += out.grad

    out = Tensor._from_result(out_data, (a,), back)
    return out


def slice_leading(x: Tensor, n: int) -> Tensor:
    """First ``n`` rows along the leading axis."""
    out_data = x.data[:n]
    a = x

    def back():
        if a.requires_grad:
            if a.grad is None:
                a.grad = np.zeros_like(a.data)
            a.grad[:n] += out.grad

    out = Tensor._from_result(out_data, (a,), back)
    return out


def dropout(x: Tensor, rate: float, rng: np.random.Generator | None) -> Tensor:
    """Inverted dropout; identity when rate is 0 or no rng is supplied."""
    if rate < 0.0 or rate >= 1.0:
        raise ConfigurationError(f"dropout rate must be in [0, 1), got {rate}")
    if rate == 0.0 or rng is None:
        return x
    keep = (rng.random(x.shape) >= rate).astype(x.data.dtype) / (1.0 - rate)
    return x * constant(keep)


# -- softmax family ---------------------------------------------------------


def softmax(x: Tensor, temperature: float = 1.0, axis: int = -1) -> Tensor:
    """Temperature-scaled softmax with max-subtraction for stability."""
    if temperature <= 0.0:
        raise ConfigurationError(f"softmax temperature must be positive, got {temperature}")
    z = x.data / temperature
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    denom = _sum64(e, axis=axis, keepdims=True)
    out_data = e / denom
    a = x

    def back():
        if a.requires_grad:
            s = out.data
            inner = _sum64(out.grad * s, axis=axis, keepdims=True)
            a._accumulate((s * (out.grad - inner)) / temperature)

    out = Tensor._from_result(out_data, (a,), back)
    return out


def log_softmax(x: Tensor, temperature: float = 1.0, axis: int = -1) -> Tensor:
    """Numerically stable log-softmax of temperature-scaled logits."""
    if temperature <= 0.0:
        raise ConfigurationError(f"softmax temperature must be positive, got {temperature}")
    z = x.data / temperature
    m = z.max(axis=axis, keepdims=True)
    shifted = z - m
    lse = np.log(_sum64(np.exp(shifted), axis=axis, keepdims=True))
    out_data = shifted - lse
    a = x

    def back():
        if a.requires_grad:
            gsum = _sum64(out.grad, axis=axis, keepdims=True)
            a._accumulate((out.grad - np.exp(out.data) * gsum) / temperature)

    out = Tensor._from_result(out_data, (a,), back)
    return out


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the final axis to zero mean / unit variance, then affine."""
    mu = x.data.mean(axis=-1, keepdims=True, dtype=np.float64)
    var = ((x.data - mu) ** 2).mean(axis=-1, keepdims=True, dtype=np.float64)
    inv = (1.0 / np.sqrt(var + eps)).astype(x.data.dtype)
    xhat = ((x.data - mu) * inv).astype(x.data.dtype)
    out_data = gain.data * xhat + bias.data
    a, g_t, b_t = x, gain, bias
    n = x.shape[-1]

    def back():
        go = out.grad
        if g_t.requires_grad:
            g_t._accumulate(_unbroadcast(go * xhat, g_t.shape))
        if b_t.requires_grad:
            b_t._accumulate(_unbroadcast(go, b_t.shape))
        if a.requires_grad:
            dxhat = go * g_t.data
            m1 = dxhat.mean(axis=-1, keepdims=True, dtype=np.float64)
            m2 = (dxhat * xhat).mean(axis=-1, keepdims=True, dtype=np.float64)
            a._accumulate((inv * (dxhat - m1 - xhat * m2)).astype(a.data.dtype))

    _ = n
    out = Tensor._from_result(out_data, (a, g_t, b_t), back)
    return out


# -- gradient verification ---------------------------------------------------


def finite_difference_check(f: Callable[[Tensor], Tensor], x: Tensor, h: float = 1e-4) -> float:
    """Max relative error between autodiff and central-difference gradients.

    The function is re-evaluated in float64 so that roundoff stays well
    below the comparison tolerance; the relative error denominator is
    max(|analytic|, |numeric|, 1e-8) per element. Diagnostic only, never
    raises on disagreement.
    """
    start = x.data if isinstance(x, Tensor) else x
    with precision(np.float64):
        probe = Tensor(np.array(start, dtype=np.float64), requires_grad=True)
        out = f(probe)
        out.backward()
        analytic = probe.grad.copy() if probe.grad is not None else np.zeros_like(probe.data)

        numeric = np.zeros_like(probe.data)
        flat = probe.data.reshape(-1)
        num_flat = numeric.reshape(-1)
        with no_grad():
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + h
                f_plus = f(probe).item()
                flat[i] = orig - h
                f_minus = f(probe).item()
                flat[i] = orig
                num_flat[i] = (f_plus - f_minus) / (2.0 * h)

    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return float(np.max(np.abs(analytic - numeric) / denom))


def parameters_finite(tensors: Iterable[Tensor]) -> bool:
    return all(np.isfinite(t.data).all() for t in tensors)


def backward(loss: Tensor) -> None:
    """Free-function alias of ``Tensor.backward``."""
    loss.backward()
