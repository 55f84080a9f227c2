"""Minimal reverse-mode automatic differentiation over numpy arrays.

All graph arithmetic runs in float64. A :class:`Tensor` wraps an ndarray and
remembers how it was produced; calling :meth:`Tensor.backward` on a scalar
result accumulates gradients into every reachable leaf created with
``requires_grad=True``. The op set is exactly what the networks and losses in
this package need; anything fancier belongs in the caller.

Gradient correctness is enforced by the finite-difference checks in the test
suite rather than by construction, so keep ops boring.
"""

from __future__ import annotations

import numpy as np

__all__ = ["Tensor", "concat", "conv2d", "take_rows", "select_index",
           "gather_positions", "repeat_axis", "softmax", "log_softmax"]


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum grad over axes that were broadcast to reach ``grad.shape``."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # -- graph construction -------------------------------------------------

    @staticmethod
    def _node(data, parents, backward) -> "Tensor":
        out = Tensor(data)
        if any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = parents
            out._backward = backward
        return out

    def backward(self, grad=None) -> None:
        """Accumulate d(self)/d(leaf) into every requiring leaf's ``.grad``."""
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without an explicit gradient needs a scalar")
            grad = np.ones_like(self.data)
        # iterative topological order over the requires_grad subgraph
        order, seen, stack = [], set(), [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                stack.append((p, False))

        grads = {id(self): np.asarray(grad, dtype=np.float64)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if not parent.requires_grad or pg is None:
                    continue
                if id(parent) in grads:
                    grads[id(parent)] = grads[id(parent)] + pg
                else:
                    grads[id(parent)] = pg

    # -- arithmetic ---------------------------------------------------------

    def __add__(self, other):
        other = other if isinstance(other, Tensor) else Tensor(other)
        out = np.add(self.data, other.data)
        return Tensor._node(out, (self, other), lambda g: (
            _unbroadcast(g, self.data.shape), _unbroadcast(g, other.data.shape)))

    __radd__ = __add__

    def __neg__(self):
        return Tensor._node(-self.data, (self,), lambda g: (-g,))

    def __sub__(self, other):
        other = other if isinstance(other, Tensor) else Tensor(other)
        out = np.subtract(self.data, other.data)
        return Tensor._node(out, (self, other), lambda g: (
            _unbroadcast(g, self.data.shape), _unbroadcast(-g, other.data.shape)))

    def __rsub__(self, other):
        return Tensor(other).__sub__(self)

    def __mul__(self, other):
        other = other if isinstance(other, Tensor) else Tensor(other)
        out = np.multiply(self.data, other.data)
        return Tensor._node(out, (self, other), lambda g: (
            _unbroadcast(g * other.data, self.data.shape),
            _unbroadcast(g * self.data, other.data.shape)))

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = other if isinstance(other, Tensor) else Tensor(other)
        out = np.divide(self.data, other.data)
        return Tensor._node(out, (self, other), lambda g: (
            _unbroadcast(g / other.data, self.data.shape),
            _unbroadcast(-g * self.data / (other.data * other.data), other.data.shape)))

    def __rtruediv__(self, other):
        return Tensor(other).__truediv__(self)

    def __pow__(self, p: float):
        out = np.power(self.data, p)
        return Tensor._node(out, (self,), lambda g: (g * p * np.power(self.data, p - 1),))

    def __matmul__(self, other):
        other = other if isinstance(other, Tensor) else Tensor(other)
        out = np.matmul(self.data, other.data)

        def backward(g):
            a, b = self.data, other.data
            ga = np.matmul(g, np.swapaxes(b, -1, -2))
            gb = np.matmul(np.swapaxes(a, -1, -2), g)
            return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

        return Tensor._node(out, (self, other), backward)

    # -- elementwise functions ------------------------------------------------

    def exp(self):
        out = np.exp(self.data)
        return Tensor._node(out, (self,), lambda g: (g * out,))

    def log(self):
        return Tensor._node(np.log(self.data), (self,), lambda g: (g / self.data,))

    def sqrt(self):
        out = np.sqrt(self.data)
        return Tensor._node(out, (self,), lambda g: (g * 0.5 / out,))

    def sigmoid(self):
        out = 1.0 / (1.0 + np.exp(-self.data))
        return Tensor._node(out, (self,), lambda g: (g * out * (1.0 - out),))

    def silu(self):
        s = 1.0 / (1.0 + np.exp(-self.data))
        out = self.data * s
        return Tensor._node(out, (self,), lambda g: (g * (s + out * (1.0 - s)),))

    def elu(self, alpha: float = 1.0):
        neg = alpha * (np.exp(np.minimum(self.data, 0.0)) - 1.0)
        out = np.where(self.data > 0, self.data, neg)
        dneg = neg + alpha
        return Tensor._node(out, (self,), lambda g: (g * np.where(self.data > 0, 1.0, dneg),))

    def sin(self):
        return Tensor._node(np.sin(self.data), (self,), lambda g: (g * np.cos(self.data),))

    def cos(self):
        return Tensor._node(np.cos(self.data), (self,), lambda g: (-g * np.sin(self.data),))

    def arccos(self):
        out = np.arccos(self.data)
        return Tensor._node(out, (self,), lambda g: (-g / np.sqrt(1.0 - self.data * self.data),))

    def clip(self, lo: float, hi: float):
        out = np.clip(self.data, lo, hi)
        inside = (self.data > lo) & (self.data < hi)
        return Tensor._node(out, (self,), lambda g: (g * inside,))

    # -- reductions and reshaping ----------------------------------------------

    def sum(self, axis=None, keepdims: bool = False):
        out = self.data.sum(axis=axis, keepdims=keepdims)

        def backward(g):
            g = np.asarray(g)
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, self.data.shape).copy(),)

        return Tensor._node(out, (self,), backward)

    def mean(self, axis=None, keepdims: bool = False):
        if axis is None:
            n = self.data.size
        else:
            axes = axis if isinstance(axis, tuple) else (axis,)
            n = int(np.prod([self.data.shape[a] for a in axes]))
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        out = self.data.reshape(shape)
        return Tensor._node(out, (self,), lambda g: (g.reshape(self.data.shape),))

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        inv = tuple(np.argsort(axes))
        out = self.data.transpose(axes)
        return Tensor._node(out, (self,), lambda g: (g.transpose(inv),))

    def __getitem__(self, key):
        """Basic (non-repeating) indexing only; use gather ops for fancy indexing."""
        out = self.data[key]

        def backward(g):
            full = np.zeros_like(self.data)
            full[key] = g
            return (full,)

        return Tensor._node(out, (self,), backward)


# -- free functions -----------------------------------------------------------


def concat(tensors: list[Tensor], axis: int) -> Tensor:
    datas = [t.data for t in tensors]
    out = np.concatenate(datas, axis=axis)
    sizes = [d.shape[axis] for d in datas]
    offsets = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, offsets, axis=axis))

    return Tensor._node(out, tuple(tensors), backward)


def take_rows(table: Tensor, idx: np.ndarray) -> Tensor:
    """Row gather (embedding lookup): out[i] = table[idx[i]]. idx may repeat."""
    idx = np.asarray(idx)
    out = table.data[idx]

    def backward(g):
        full = np.zeros_like(table.data)
        np.add.at(full, idx, g)
        return (full,)

    return Tensor._node(out, (table,), backward)


def select_index(t: Tensor, idx: np.ndarray) -> Tensor:
    """Per-row pick from a (B, n) tensor: out[i] = t[i, idx[i]]."""
    idx = np.asarray(idx)
    rows = np.arange(t.data.shape[0])
    out = t.data[rows, idx]

    def backward(g):
        full = np.zeros_like(t.data)
        np.add.at(full, (rows, idx), g)
        return (full,)

    return Tensor._node(out, (t,), backward)


def gather_positions(t: Tensor, idx_a: np.ndarray, idx_b: np.ndarray) -> Tensor:
    """Gather positions (idx_a[r], idx_b[r]) from the last two axes.

    out[..., r] = t[..., idx_a[r], idx_b[r]]; index pairs may repeat.
    """
    idx_a = np.asarray(idx_a)
    idx_b = np.asarray(idx_b)
    lead = (slice(None),) * (t.data.ndim - 2)
    out = t.data[lead + (idx_a, idx_b)]

    def backward(g):
        full = np.zeros_like(t.data)
        np.add.at(full, lead + (idx_a, idx_b), g)
        return (full,)

    return Tensor._node(out, (t,), backward)


def repeat_axis(t: Tensor, axis: int, k: int) -> Tensor:
    """Repeat each slice k times along an axis (nearest-neighbor upsampling)."""
    out = np.repeat(t.data, k, axis=axis)

    def backward(g):
        shape = t.data.shape
        g = g.reshape(shape[:axis] + (shape[axis], k) + shape[axis + 1:])
        return (g.sum(axis=axis + 1),)

    return Tensor._node(out, (t,), backward)


def softmax(t: Tensor, axis: int = -1) -> Tensor:
    shifted = t - Tensor(t.data.max(axis=axis, keepdims=True))
    e = shifted.exp()
    return e / e.sum(axis=axis, keepdims=True)


def log_softmax(t: Tensor, axis: int = -1) -> Tensor:
    shifted = t - Tensor(t.data.max(axis=axis, keepdims=True))
    return shifted - shifted.exp().sum(axis=axis, keepdims=True).log()


def conv2d(x: Tensor, w: Tensor, b: Tensor | None = None,
           stride: tuple = (1, 1), padding: tuple = (0, 0), groups: int = 1) -> Tensor:
    """2-D convolution (cross-correlation) with channel groups.

    x: (B, Cin, H, W), w: (Cout, Cin/groups, kh, kw), b: (Cout,).
    Implemented as an im2col matmul; the column buffer is cached for backward.
    """
    B, Cin, H, Wd = x.data.shape
    Cout, Cg, kh, kw = w.data.shape
    if Cin != Cg * groups or Cout % groups:
        raise ValueError(f"conv2d group mismatch: x has {Cin} channels, "
                         f"w is {w.data.shape} with groups={groups}")
    sh, sw = stride
    ph, pw = padding
    xp = np.pad(x.data, ((0, 0), (0, 0), (ph, ph), (pw, pw))) if (ph or pw) else x.data
    OH = (H + 2 * ph - kh) // sh + 1
    OW = (Wd + 2 * pw - kw) // sw + 1
    st = xp.strides
    view = np.lib.stride_tricks.as_strided(
        xp, (B, Cin, kh, kw, OH, OW),
        (st[0], st[1], st[2], st[3], st[2] * sh, st[3] * sw))
    cols = view.reshape(B, groups, Cg * kh * kw, OH * OW)  # copies
    wf = w.data.reshape(groups, Cout // groups, Cg * kh * kw)
    out = np.matmul(wf, cols)  # (B, groups, Cout/groups, OH*OW)
    out = out.reshape(B, Cout, OH, OW)
    if b is not None:
        out = out + b.data.reshape(1, Cout, 1, 1)

    def backward(g):
        gf = g.reshape(B, groups, Cout // groups, OH * OW)
        gw = np.matmul(gf, cols.swapaxes(-1, -2)).sum(axis=0).reshape(w.data.shape)
        gb = g.sum(axis=(0, 2, 3)) if b is not None else None
        gcols = np.matmul(wf.swapaxes(-1, -2), gf)
        gcols = gcols.reshape(B, Cin, kh, kw, OH, OW)
        gxp = np.zeros_like(xp)
        for i in range(kh):
            for j in range(kw):
                gxp[:, :, i:i + sh * OH:sh, j:j + sw * OW:sw] += gcols[:, :, i, j]
        gx = gxp[:, :, ph:ph + H, pw:pw + Wd] if (ph or pw) else gxp
        if b is not None:
            return gx, gw, gb
        return gx, gw

    parents = (x, w) if b is None else (x, w, b)
    return Tensor._node(out, parents, backward)
