"""Dense N-d arrays with reverse-mode automatic differentiation.

Everything the two Q-network backbones need is implemented here as numpy
operations wrapped in a small tape: each op builds a `Tensor` node whose
`_backward` closure scatters the output gradient onto its parents.
Gradients are accumulated (`+=`), so a tensor used twice receives both
contributions. Callers zero grads explicitly before each `backward()`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf

__all__ = [
    "Tensor",
    "AdamState",
    "adam_step",
    "add",
    "mul",
    "matmul",
    "reshape",
    "transpose",
    "roll2d",
    "relu",
    "gelu",
    "softmax",
    "layer_norm",
    "conv2d",
    "grouped_conv1d_mix",
    "smooth_l1",
    "mean",
    "gather",
    "index_select",
]


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Tensor:
    """A numpy array plus the bookkeeping needed for reverse-mode autodiff."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        self.data = np.asarray(data, dtype=dtype)
        if self.data.dtype not in (np.float32, np.float64):
            self.data = self.data.astype(np.float32)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    # -- construction helpers -------------------------------------------------

    @staticmethod
    def _from_op(data: np.ndarray, parents: tuple["Tensor", ...], backward) -> "Tensor":
        out = Tensor(data)
        if any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = parents
            out._backward = backward
        return out

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.dtype.name}, requires_grad={self.requires_grad})"

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, grad: np.ndarray) -> None:
        grad = _unbroadcast(np.asarray(grad, dtype=self.data.dtype), self.data.shape)
        if self.grad is None:
            self.grad = grad.copy()
        else:
            self.grad += grad

    # -- autodiff driver ------------------------------------------------------

    def backward(self) -> None:
        """Reverse-mode sweep from a scalar loss.

        Visits each reachable node exactly once in reverse topological
        order and accumulates gradients into every requires_grad tensor.
        """
        if self.data.size != 1:
            raise ValueError(
                f"backward() requires a scalar loss, got shape {self.shape}"
            )
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        self._accumulate(np.ones_like(self.data))
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- operator sugar -------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return add(self, mul(other, -1.0) if isinstance(other, Tensor) else -np.asarray(other))

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)

    def __matmul__(self, other):
        return matmul(self, other)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 or isinstance(shape[0], int) else shape[0])

    def transpose(self, axes):
        return transpose(self, axes)


def _as_tensor(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.data.dtype if like is not None else None
    return Tensor(np.asarray(x, dtype=dtype))


# -- elementwise / structural ops ---------------------------------------------


def add(a, b) -> Tensor:
    a = _as_tensor(a)
    b = _as_tensor(b, like=a)
    out_data = a.data + b.data

    def backward(grad):
        if a.requires_grad:
            a._accumulate(grad)
        if b.requires_grad:
            b._accumulate(grad)

    return Tensor._from_op(out_data, (a, b), backward)


def mul(a, b) -> Tensor:
    a = _as_tensor(a)
    b = _as_tensor(b, like=a)
    out_data = a.data * b.data

    def backward(grad):
        if a.requires_grad:
            a._accumulate(grad * b.data)
        if b.requires_grad:
            b._accumulate(grad * a.data)

    return Tensor._from_op(out_data, (a, b), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a = _as_tensor(a)
    b = _as_tensor(b, like=a)
    out_data = a.data @ b.data

    def backward(grad):
        if a.requires_grad:
            a._accumulate(grad @ np.swapaxes(b.data, -1, -2))
        if b.requires_grad:
            b._accumulate(np.swapaxes(a.data, -1, -2) @ grad)

    return Tensor._from_op(out_data, (a, b), backward)


def reshape(x: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    out_data = x.data.reshape(shape)

    def backward(grad):
        x._accumulate(grad.reshape(x.data.shape))

    return Tensor._from_op(out_data, (x,), backward)


def transpose(x: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    out_data = x.data.transpose(axes)

    def backward(grad):
        x._accumulate(grad.transpose(inv))

    return Tensor._from_op(out_data, (x,), backward)


def roll2d(x: Tensor, shifts: tuple[int, int], axes: tuple[int, int]) -> Tensor:
    """Cyclic roll along two axes; exact inverse is roll2d with negated shifts."""
    out_data = np.roll(x.data, shifts, axis=axes)

    def backward(grad):
        x._accumulate(np.roll(grad, (-shifts[0], -shifts[1]), axis=axes))

    return Tensor._from_op(out_data, (x,), backward)


def relu(x: Tensor) -> Tensor:
    out_data = np.maximum(x.data, 0)

    def backward(grad):
        x._accumulate(grad * (x.data > 0))

    return Tensor._from_op(out_data, (x,), backward)


def gelu(x: Tensor) -> Tensor:
    """Exact (erf-based) GELU: x * Phi(x)."""
    cdf = 0.5 * (1.0 + erf(x.data / np.sqrt(2.0)))
    out_data = x.data * cdf

    def backward(grad):
        pdf = np.exp(-0.5 * x.data * x.data) / np.sqrt(2.0 * np.pi)
        x._accumulate(grad * (cdf + x.data * pdf))

    return Tensor._from_op(out_data, (x,), backward)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Softmax over `axis`, computed with max-subtraction for overflow safety."""
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out_data = e / e.sum(axis=axis, keepdims=True)

    def backward(grad):
        dot = (grad * out_data).sum(axis=axis, keepdims=True)
        x._accumulate(out_data * (grad - dot))

    return Tensor._from_op(out_data, (x,), backward)


def mean(x: Tensor, axis: int | None = None) -> Tensor:
    out_data = x.data.mean(axis=axis)
    n = x.data.size if axis is None else x.data.shape[axis]

    def backward(grad):
        if axis is None:
            g = np.full_like(x.data, grad / n)
        else:
            g = np.broadcast_to(np.expand_dims(grad, axis) / n, x.data.shape)
        x._accumulate(g)

    return Tensor._from_op(out_data, (x,), backward)


def gather(x: Tensor, index: np.ndarray, axis: int = -1) -> Tensor:
    """Pick one element along `axis` per slice (e.g. Q(s, a) for taken actions)."""
    index = np.asarray(index)
    idx = np.expand_dims(index, axis)
    out_data = np.take_along_axis(x.data, idx, axis=axis).squeeze(axis)

    def backward(grad):
        g = np.zeros_like(x.data)
        np.put_along_axis(g, idx, np.expand_dims(grad, axis), axis=axis)
        x._accumulate(g)

    return Tensor._from_op(out_data, (x,), backward)


def index_select(x: Tensor, index: np.ndarray) -> Tensor:
    """Row lookup `x[index]` (embedding-style); gradients scatter-add back."""
    index = np.asarray(index)
    out_data = x.data[index]

    def backward(grad):
        g = np.zeros_like(x.data)
        np.add.at(g, index, grad)
        x._accumulate(g)

    return Tensor._from_op(out_data, (x,), backward)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize each trailing-axis slice to zero mean / unit variance, then affine."""
    if gain.shape != (x.shape[-1],) or bias.shape != (x.shape[-1],):
        raise ValueError(
            f"layer_norm affine shapes {gain.shape}/{bias.shape} do not match "
            f"channel count {x.shape[-1]}"
        )
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out_data = xhat * gain.data + bias.data

    def backward(grad):
        n = x.shape[-1]
        if gain.requires_grad:
            gain._accumulate((grad * xhat).sum(axis=tuple(range(grad.ndim - 1))))
        if bias.requires_grad:
            bias._accumulate(grad.sum(axis=tuple(range(grad.ndim - 1))))
        if x.requires_grad:
            gh = grad * gain.data
            x._accumulate(
                inv
                * (
                    gh
                    - gh.mean(axis=-1, keepdims=True)
                    - xhat * (gh * xhat).mean(axis=-1, keepdims=True)
                )
            )

    return Tensor._from_op(out_data, (x, gain, bias), backward)


def conv2d(x: Tensor, weight: Tensor, bias: Tensor, stride: int = 1) -> Tensor:
    """Valid (unpadded) 2D cross-correlation over [N, C, H, W] input."""
    n, c, h, w = x.shape
    o, cw, kh, kw = weight.shape
    if cw != c:
        raise ValueError(f"conv2d channel mismatch: input has {c}, weight expects {cw}")
    if kh > h or kw > w:
        raise ValueError(f"conv2d kernel {kh}x{kw} exceeds input {h}x{w}")
    if stride < 1:
        raise ValueError(f"conv2d stride must be >= 1, got {stride}")
    if bias.shape != (o,):
        raise ValueError(f"conv2d bias shape {bias.shape} != ({o},)")
    ho = (h - kh) // stride + 1
    wo = (w - kw) // stride + 1
    view = np.lib.stride_tricks.sliding_window_view(x.data, (kh, kw), axis=(2, 3))
    view = view[:, :, ::stride, ::stride]  # [N, C, Ho, Wo, kh, kw]
    out_data = np.einsum("nchwij,ocij->nohw", view, weight.data, optimize=True)
    out_data += bias.data[None, :, None, None]

    def backward(grad):
        if weight.requires_grad:
            weight._accumulate(np.einsum("nchwij,nohw->ocij", view, grad, optimize=True))
        if bias.requires_grad:
            bias._accumulate(grad.sum(axis=(0, 2, 3)))
        if x.requires_grad:
            dx = np.zeros_like(x.data)
            for i in range(kh):
                for j in range(kw):
                    contrib = np.einsum(
                        "nohw,oc->nchw", grad, weight.data[:, :, i, j], optimize=True
                    )
                    dx[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += contrib
            x._accumulate(dx)

    return Tensor._from_op(out_data, (x, weight, bias), backward)


def grouped_conv1d_mix(x: Tensor, weight: Tensor) -> Tensor:
    """Per-group token mixing as a kernel-size-1 grouped 1D convolution.

    `x` is [B, N, C] with the channel axis split into G equal groups;
    `weight` is [G, N, N]. Within group g every channel slot is mixed
    across the N positions by the same matrix: out[b, i, c] =
    sum_j weight[g, i, j] * x[b, j, c].
    """
    b, n, c = x.shape
    g, ni, nj = weight.shape
    if ni != n or nj != n:
        raise ValueError(f"mixing matrices are {ni}x{nj}, expected {n}x{n}")
    if c % g != 0:
        raise ValueError(f"channel count {c} not divisible by {g} groups")
    xg = x.data.reshape(b, n, g, c // g)
    out_data = np.einsum("gij,bjgc->bigc", weight.data, xg, optimize=True).reshape(b, n, c)

    def backward(grad):
        gg = grad.reshape(b, n, g, c // g)
        if weight.requires_grad:
            weight._accumulate(np.einsum("bigc,bjgc->gij", gg, xg, optimize=True))
        if x.requires_grad:
            x._accumulate(
                np.einsum("gij,bigc->bjgc", weight.data, gg, optimize=True).reshape(b, n, c)
            )

    return Tensor._from_op(out_data, (x, weight), backward)


def smooth_l1(pred: Tensor, target: np.ndarray) -> Tensor:
    """Huber loss, mean over the batch; `target` is a constant (no gradient)."""
    t = target.data if isinstance(target, Tensor) else np.asarray(target, dtype=pred.dtype)
    if t.shape != pred.shape:
        raise ValueError(f"smooth_l1 shape mismatch: {pred.shape} vs {t.shape}")
    d = pred.data - t
    absd = np.abs(d)
    quad = absd < 1.0
    loss = np.where(quad, 0.5 * d * d, absd - 0.5)
    out_data = np.asarray(loss.mean(), dtype=pred.dtype)

    def backward(grad):
        dldp = np.where(quad, d, np.sign(d)) / pred.data.size
        pred._accumulate(grad * dldp)

    return Tensor._from_op(out_data, (pred,), backward)


# -- optimizer ----------------------------------------------------------------


@dataclass
class AdamState:
    """Bias-corrected Adam with per-parameter moment buffers."""

    learning_rate: float = 0.0000625
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1.5e-4
    step_count: int = 0
    first_moment: dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: dict[str, Tensor], state: AdamState) -> None:
    """One Adam update over every parameter with a populated gradient.

    Moment buffers are keyed by parameter name and created lazily.
    Gradients are read, never modified.
    """
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    corr1 = 1.0 - b1**t
    corr2 = 1.0 - b2**t
    for name, p in params.items():
        if p.grad is None:
            continue
        g = p.grad
        m = state.first_moment.get(name)
        if m is None:
            m = state.first_moment[name] = np.zeros_like(p.data)
        v = state.second_moment.get(name)
        if v is None:
            v = state.second_moment[name] = np.zeros_like(p.data)
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        mhat = m / corr1
        vhat = v / corr2
        p.data -= state.learning_rate * mhat / (np.sqrt(vhat) + state.epsilon)
