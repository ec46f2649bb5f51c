"""Minimal reverse-mode autodiff on numpy arrays.

Each op builds a Variable holding the forward value, its parents, and a
closure that routes the incoming gradient to those parents.  backward()
walks the recorded graph once in reverse topological order, so unrolled
timestep recurrences accumulate their per-step contributions into the
same leaf gradients.

The spike op is the one non-smooth piece: its forward is a hard
threshold, its backward substitutes the arctangent surrogate.  A relaxed
variant evaluates the smooth arctangent primitive in the forward as
well, which makes the whole network differentiable and finite-difference
checkable.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .neuron import heaviside, smooth_heaviside, surrogate_grad


class Variable:
    """Node in the autodiff graph: value, gradient slot, parents."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        parents: tuple["Variable", ...] = (),
        backward: Callable[[np.ndarray], None] | None = None,
    ):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self._parents = parents
        self._backward = backward

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def zero_grad(self) -> None:
        self.grad = None

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __repr__(self) -> str:
        return f"Variable(shape={self.shape}, requires_grad={self.requires_grad})"


class Parameter(Variable):
    """Trainable leaf with a name; optimizers mutate .data in place."""

    __slots__ = ("name",)

    def __init__(self, data, name: str):
        super().__init__(data, requires_grad=True)
        self.name = name

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.shape})"


def constant(data) -> Variable:
    return Variable(data, requires_grad=False)


def _as_variable(x) -> Variable:
    return x if isinstance(x, Variable) else constant(x)


def _sum_to_shape(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Undo numpy broadcasting: reduce g back to the operand's shape."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def add(a, b) -> Variable:
    a, b = _as_variable(a), _as_variable(b)
    out = Variable(a.data + b.data, parents=(a, b))

    def backward(g):
        if a.requires_grad:
            a.accumulate(_sum_to_shape(g, a.shape))
        if b.requires_grad:
            b.accumulate(_sum_to_shape(g, b.shape))

    out._backward = backward
    return out


def sub(a, b) -> Variable:
    a, b = _as_variable(a), _as_variable(b)
    out = Variable(a.data - b.data, parents=(a, b))

    def backward(g):
        if a.requires_grad:
            a.accumulate(_sum_to_shape(g, a.shape))
        if b.requires_grad:
            b.accumulate(_sum_to_shape(-g, b.shape))

    out._backward = backward
    return out


def mul(a, b) -> Variable:
    a, b = _as_variable(a), _as_variable(b)
    out = Variable(a.data * b.data, parents=(a, b))

    def backward(g):
        if a.requires_grad:
            a.accumulate(_sum_to_shape(g * b.data, a.shape))
        if b.requires_grad:
            b.accumulate(_sum_to_shape(g * a.data, b.shape))

    out._backward = backward
    return out


def matmul(a: Variable, b: Variable) -> Variable:
    out = Variable(a.data @ b.data, parents=(a, b))

    def backward(g):
        if a.requires_grad:
            a.accumulate(g @ b.data.T)
        if b.requires_grad:
            b.accumulate(a.data.T @ g)

    out._backward = backward
    return out


def reshape(a: Variable, shape: Sequence[int]) -> Variable:
    shape = tuple(shape)
    out = Variable(a.data.reshape(shape), parents=(a,))

    def backward(g):
        if a.requires_grad:
            a.accumulate(g.reshape(a.shape))

    out._backward = backward
    return out


def detach(a: Variable) -> Variable:
    """Cut the graph: same value, no gradient path."""
    return Variable(a.data, requires_grad=False)


def _im2col(x: np.ndarray, kh: int, kw: int, stride: int, pad: int):
    n, c, h, w = x.shape
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (w + 2 * pad - kw) // stride + 1
    cols = np.empty((n, c, kh, kw, oh, ow), dtype=np.float64)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j] = x[:, :, i : i + stride * oh : stride, j : j + stride * ow : stride]
    return cols, oh, ow


def _col2im(gcols: np.ndarray, x_shape, kh: int, kw: int, stride: int, pad: int):
    n, c, h, w = x_shape
    gx = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=np.float64)
    oh, ow = gcols.shape[-2:]
    for i in range(kh):
        for j in range(kw):
            gx[:, :, i : i + stride * oh : stride, j : j + stride * ow : stride] += gcols[:, :, i, j]
    if pad:
        gx = gx[:, :, pad : pad + h, pad : pad + w]
    return gx


def conv2d(x: Variable, w: Variable, b: Variable, stride: int = 1, padding: int = 0) -> Variable:
    """2d cross-correlation: x (N,C,H,W) with filters w (O,C,KH,KW) plus bias (O,)."""
    kh, kw = w.shape[2], w.shape[3]
    cols, oh, ow = _im2col(x.data, kh, kw, stride, padding)
    # (N,C,KH,KW,OH,OW) x (O,C,KH,KW) -> (N,OH,OW,O)
    val = np.tensordot(cols, w.data, axes=([1, 2, 3], [1, 2, 3]))
    val = val.transpose(0, 3, 1, 2) + b.data[None, :, None, None]
    out = Variable(val, parents=(x, w, b))

    def backward(g):
        if b.requires_grad:
            b.accumulate(g.sum(axis=(0, 2, 3)))
        if w.requires_grad:
            # (N,O,OH,OW) x (N,C,KH,KW,OH,OW) -> (O,C,KH,KW)
            w.accumulate(np.tensordot(g, cols, axes=([0, 2, 3], [0, 4, 5])))
        if x.requires_grad:
            # (N,O,OH,OW) x (O,C,KH,KW) -> (N,OH,OW,C,KH,KW)
            gcols = np.tensordot(g, w.data, axes=([1], [0]))
            gcols = gcols.transpose(0, 3, 4, 5, 1, 2)
            x.accumulate(_col2im(gcols, x.shape, kh, kw, stride, padding))

    out._backward = backward
    return out


def avg_pool2d(x: Variable, kernel: int) -> Variable:
    n, c, h, w = x.shape
    if h % kernel or w % kernel:
        raise ValueError(f"pool kernel {kernel} does not divide spatial dims {(h, w)}")
    oh, ow = h // kernel, w // kernel
    val = x.data.reshape(n, c, oh, kernel, ow, kernel).mean(axis=(3, 5))
    out = Variable(val, parents=(x,))

    def backward(g):
        if x.requires_grad:
            gx = np.repeat(np.repeat(g, kernel, axis=2), kernel, axis=3) / (kernel * kernel)
            x.accumulate(gx)

    out._backward = backward
    return out


def spike(u: Variable, v_th: float, alpha: float) -> Variable:
    """Hard threshold forward, arctangent surrogate backward."""
    pre = u.data - v_th
    out = Variable(heaviside(pre, 0.0), parents=(u,))

    def backward(g):
        if u.requires_grad:
            u.accumulate(g * surrogate_grad(pre, alpha))

    out._backward = backward
    return out


def spike_relaxed(u: Variable, v_th: float, alpha: float) -> Variable:
    """Smooth arctangent primitive forward; backward is its exact derivative,
    which is the same surrogate the hard path uses."""
    pre = u.data - v_th
    out = Variable(smooth_heaviside(pre, alpha), parents=(u,))

    def backward(g):
        if u.requires_grad:
            u.accumulate(g * surrogate_grad(pre, alpha))

    out._backward = backward
    return out


def cross_entropy(readout: Variable, labels: np.ndarray) -> Variable:
    """Softmax over readout rows then mean negative log-likelihood."""
    labels = np.asarray(labels, dtype=np.int64)
    n, k = readout.shape
    if labels.shape != (n,):
        raise ValueError(f"labels shape {labels.shape} does not match batch {n}")
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise ValueError(f"labels must lie in [0, {k})")
    z = readout.data
    zmax = z.max(axis=1, keepdims=True)
    logsumexp = zmax + np.log(np.exp(z - zmax).sum(axis=1, keepdims=True))
    logp = z - logsumexp
    loss = -logp[np.arange(n), labels].mean()
    out = Variable(loss, parents=(readout,))

    def backward(g):
        if readout.requires_grad:
            p = np.exp(logp)
            p[np.arange(n), labels] -= 1.0
            readout.accumulate(g * p / n)

    out._backward = backward
    return out


def backward(root: Variable, seed: np.ndarray | float | None = None) -> None:
    """Reverse-topological sweep accumulating gradients into leaves.

    seed defaults to ones, the usual choice for a scalar loss root.
    """
    topo: list[Variable] = []
    visited: set[int] = set()
    stack: list[tuple[Variable, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in visited:
                stack.append((p, False))

    if seed is None:
        seed = np.ones_like(root.data)
    root.accumulate(np.asarray(seed, dtype=np.float64))
    for node in reversed(topo):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
