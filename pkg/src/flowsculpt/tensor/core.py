"""Dense float tensors with reverse-mode automatic differentiation.

This is deliberately a small tape: it covers exactly the operations the
trainable parts of the pipeline need (3x3 convolutions, affine maps,
pointwise nonlinearities, masked reductions) and nothing else. The
frozen transformer and the ODE solvers run on plain numpy arrays and
never touch this module's graph machinery.

Design rules:

* Data is always a float32 or float64 ndarray. Binary operations
  require both operands to share dtype and shape; Python scalars are
  cast to the tensor's dtype. There is no silent broadcasting, which
  keeps gradient bookkeeping trivial and catches shape bugs early.
* Gradients accumulate into ``Tensor.grad`` (same shape/dtype as the
  data) during :meth:`Tensor.backward`, which walks the tape in
  reverse topological order. Non-differentiable points use the
  conventional subgradients noted on each op.
* Everything is deterministic: identical inputs produce bitwise
  identical outputs and gradients. Reductions delegate to numpy's
  pairwise summation, which is deterministic for a fixed shape and
  dtype even though it is not a literal left-to-right sweep.
"""
from __future__ import annotations

import contextlib
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from ..errors import InputError, ShapeError

_FLOAT_DTYPES = (np.dtype(np.float32), np.dtype(np.float64))

# Global switch consulted by every op constructor. Inside no_grad()
# blocks ops return constant tensors with no tape entries, so frozen
# forward passes cost no closure allocations.
_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    """Context manager that disables tape construction."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def grad_enabled() -> bool:
    return _GRAD_ENABLED


def _as_data(value, dtype=None) -> np.ndarray:
    arr = np.asarray(value)
    if arr.dtype not in _FLOAT_DTYPES:
        arr = arr.astype(np.float64 if dtype is None else dtype)
    if dtype is not None and arr.dtype != np.dtype(dtype):
        arr = arr.astype(dtype)
    return arr


class Tensor:
    """A node in the autodiff graph.

    Attributes:
        data: the value, a float32/float64 ndarray (any rank).
        grad: accumulated gradient of the last ``backward()`` call,
            or None if this node was not reached / does not require it.
        requires_grad: whether backward should accumulate into this
            node. Leaf parameters set this True; activations inherit
            it from their parents.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        # Leaf construction ignores no_grad(): parameters stay leaves
        # wherever they are built. Only op outputs consult the switch.
        self.data = _as_data(data, dtype)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple = ()
        self._backward = None

    # -- construction helpers -------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item(): tensor has {self.data.size} elements, expected 1")
        return float(self.data.reshape(()))

    def numpy(self) -> np.ndarray:
        """The underlying array (not a copy); treat as read-only."""
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype.name}{flag})"

    # -- tape -----------------------------------------------------------------

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = g.astype(self.data.dtype, copy=True)
        else:
            self.grad += g

    def backward(self, grad=None) -> None:
        """Backpropagate from this node.

        ``grad`` defaults to 1.0 and is only optional for single-element
        outputs (losses). Gradients accumulate into ``.grad`` of every
        reachable node with ``requires_grad``; call ``zero_grad`` on the
        parameters between steps.
        """
        if grad is None:
            if self.data.size != 1:
                raise InputError(
                    "backward() without an explicit gradient requires a "
                    f"single-element output, got shape {self.data.shape}"
                )
            grad = np.ones_like(self.data)
        seed = np.asarray(grad, dtype=self.data.dtype)
        if seed.shape != self.data.shape:
            seed = np.broadcast_to(seed, self.data.shape).astype(self.data.dtype)

        order = _topo_order(self)
        grads: dict[int, np.ndarray] = {id(self): seed}
        for node in order:
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.requires_grad and node._parents == ():
                node._accumulate(g)
            if node._backward is None:
                continue
            parent_grads = node._backward(g)
            for parent, pg in zip(node._parents, parent_grads):
                if pg is None or not parent.requires_grad:
                    continue
                if id(parent) in grads:
                    grads[id(parent)] = grads[id(parent)] + pg
                else:
                    grads[id(parent)] = pg

    # -- operators ------------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return add(neg(self), other)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None):
        return tsum(self, axis)

    def mean(self, axis=None):
        return tmean(self, axis)


def _topo_order(root: Tensor) -> list:
    """Reverse topological order of the subgraph below ``root``.

    Iterative DFS; deep chains (one op per training step per layer)
    would blow Python's recursion limit otherwise.
    """
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
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
    order.reverse()
    return order


# -- op plumbing --------------------------------------------------------------


def _result(data: np.ndarray, parents: Sequence[Tensor], backward) -> Tensor:
    out = Tensor(data)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _coerce_pair(a, b):
    """Validate a tensor/tensor or tensor/scalar pair for pointwise ops.

    Returns (a, b, scalar) where exactly one of b/scalar is set.
    """
    if not isinstance(a, Tensor):
        a, b = b, a  # __radd__ style call; a is the Tensor now
    if isinstance(b, Tensor):
        if a.data.shape != b.data.shape:
            raise ShapeError(
                f"pointwise op: shapes {a.data.shape} and {b.data.shape} differ "
                "(no implicit broadcasting)"
            )
        if a.data.dtype != b.data.dtype:
            raise InputError(
                f"pointwise op: dtypes {a.data.dtype.name} and {b.data.dtype.name} differ"
            )
        return a, b, None
    if isinstance(b, (int, float, np.floating, np.integer)):
        return a, None, a.data.dtype.type(b)
    raise InputError(f"pointwise op: unsupported operand type {type(b).__name__}")


# -- pointwise ops ------------------------------------------------------------


def add(a, b) -> Tensor:
    a, bt, scalar = _coerce_pair(a, b)
    if bt is None:
        return _result(a.data + scalar, (a,), lambda g: (g,))
    return _result(a.data + bt.data, (a, bt), lambda g: (g, g))


def sub(a, b) -> Tensor:
    if isinstance(a, Tensor) and isinstance(b, Tensor):
        a2, b2, _ = _coerce_pair(a, b)
        return _result(a2.data - b2.data, (a2, b2), lambda g: (g, -g))
    if isinstance(a, Tensor):
        a2, _, scalar = _coerce_pair(a, b)
        return _result(a2.data - scalar, (a2,), lambda g: (g,))
    return add(neg(b), a)


def mul(a, b) -> Tensor:
    a, bt, scalar = _coerce_pair(a, b)
    if bt is None:
        return _result(a.data * scalar, (a,), lambda g: (g * scalar,))
    ad, bd = a.data, bt.data
    return _result(ad * bd, (a, bt), lambda g: (g * bd, g * ad))


def div(a, b) -> Tensor:
    if not isinstance(a, Tensor):
        raise InputError("div: scalar / tensor is not supported")
    if isinstance(b, Tensor):
        a2, b2, _ = _coerce_pair(a, b)
        ad, bd = a2.data, b2.data
        out = ad / bd
        return _result(out, (a2, b2), lambda g: (g / bd, -g * ad / (bd * bd)))
    _, _, scalar = _coerce_pair(a, b)
    return _result(a.data / scalar, (a,), lambda g: (g / scalar,))


def neg(a: Tensor) -> Tensor:
    return _result(-a.data, (a,), lambda g: (-g,))


def log(a: Tensor) -> Tensor:
    """Natural log. The caller guarantees positive inputs (clamp first);
    nonpositive entries propagate numpy's -inf/nan."""
    ad = a.data
    return _result(np.log(ad), (a,), lambda g: (g / ad,))


def sigmoid(a: Tensor) -> Tensor:
    s = _sigmoid_stable(a.data)
    return _result(s, (a,), lambda g: (g * s * (1.0 - s),))


def _sigmoid_stable(x: np.ndarray) -> np.ndarray:
    # Split by sign so exp never overflows.
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def relu(a: Tensor) -> Tensor:
    return leaky_relu(a, 0.0)


def leaky_relu(a: Tensor, alpha: float = 0.01) -> Tensor:
    ad = a.data
    scale = np.where(ad > 0, ad.dtype.type(1.0), ad.dtype.type(alpha))
    return _result(ad * scale, (a,), lambda g: (g * scale,))


def clamp(a: Tensor, lo: float, hi: float) -> Tensor:
    """Clip to [lo, hi]. Gradient is 1 on the closed interval and 0
    outside, so values sitting exactly on a bound still pass gradient."""
    ad = a.data
    out = np.clip(ad, lo, hi)
    passthrough = (ad >= lo) & (ad <= hi)
    mask = passthrough.astype(ad.dtype)
    return _result(out, (a,), lambda g: (g * mask,))


def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(int(d) for d in shape)
    old = a.data.shape
    out = np.reshape(a.data, shape)
    return _result(out, (a,), lambda g: (np.reshape(g, old),))


# -- reductions ---------------------------------------------------------------


def _normalize_axis(axis, ndim):
    if axis is None:
        return None
    if isinstance(axis, int):
        axis = (axis,)
    axis = tuple(sorted(a % ndim for a in axis))
    if len(set(axis)) != len(axis):
        raise InputError(f"reduction: repeated axis in {axis}")
    return axis


def _expand_reduced(g: np.ndarray, shape, axis) -> np.ndarray:
    if axis is None:
        return np.broadcast_to(g, shape)
    for a in axis:
        g = np.expand_dims(g, a)
    return np.broadcast_to(g, shape)


def tsum(a: Tensor, axis=None) -> Tensor:
    axis = _normalize_axis(axis, a.ndim)
    out = a.data.sum(axis=axis)

    def backward(g):
        return (_expand_reduced(g, a.data.shape, axis).astype(a.data.dtype),)

    return _result(np.asarray(out, dtype=a.data.dtype), (a,), backward)


def tmean(a: Tensor, axis=None) -> Tensor:
    axis = _normalize_axis(axis, a.ndim)
    if axis is None:
        count = a.data.size
    else:
        count = 1
        for ax in axis:
            count *= a.data.shape[ax]
    out = a.data.mean(axis=axis)
    inv = a.data.dtype.type(1.0 / count)

    def backward(g):
        return ((_expand_reduced(g, a.data.shape, axis) * inv).astype(a.data.dtype),)

    return _result(np.asarray(out, dtype=a.data.dtype), (a,), backward)


# -- linear algebra -----------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if not isinstance(b, Tensor):
        raise InputError("matmul: both operands must be tensors")
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul: expects rank-2 operands, got {a.shape} @ {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dims differ, {a.shape} @ {b.shape}")
    if a.dtype != b.dtype:
        raise InputError(f"matmul: dtypes {a.dtype.name} and {b.dtype.name} differ")
    ad, bd = a.data, b.data
    return _result(ad @ bd, (a, b), lambda g: (g @ bd.T, ad.T @ g))


def linear(x: Tensor, w: Tensor, b: Optional[Tensor] = None) -> Tensor:
    """Affine map ``x @ w + b`` with x [N, in], w [in, out], b [out]."""
    if x.ndim != 2 or w.ndim != 2:
        raise ShapeError(f"linear: x and w must be rank 2, got {x.shape}, {w.shape}")
    if x.shape[1] != w.shape[0]:
        raise ShapeError(f"linear: x {x.shape} does not match w {w.shape}")
    xd, wd = x.data, w.data
    out = xd @ wd
    if b is None:
        return _result(out, (x, w), lambda g: (g @ wd.T, xd.T @ g))
    if b.ndim != 1 or b.shape[0] != w.shape[1]:
        raise ShapeError(f"linear: bias shape {b.shape} does not match w {w.shape}")
    return _result(out + b.data, (x, w, b), lambda g: (g @ wd.T, xd.T @ g, g.sum(axis=0)))


def grid_dot(feat: Tensor, vecs: Tensor) -> Tensor:
    """Per-cell dot products: feat [B,C,H,W] x vecs [B,R,C] -> [B,R,H,W].

    Used to score every spatial cell of a feature map against a bank of
    projected text vectors in one shot.
    """
    if feat.ndim != 4 or vecs.ndim != 3:
        raise ShapeError(f"grid_dot: expected [B,C,H,W] and [B,R,C], got {feat.shape}, {vecs.shape}")
    if feat.shape[0] != vecs.shape[0] or feat.shape[1] != vecs.shape[2]:
        raise ShapeError(f"grid_dot: incompatible shapes {feat.shape} and {vecs.shape}")
    fd, vd = feat.data, vecs.data
    out = np.einsum("bchw,brc->brhw", fd, vd)

    def backward(g):
        dfeat = np.einsum("brhw,brc->bchw", g, vd)
        dvecs = np.einsum("brhw,bchw->brc", g, fd)
        return dfeat, dvecs

    return _result(out, (feat, vecs), backward)


# -- convolution --------------------------------------------------------------


def _im2col(xp: np.ndarray, stride: int):
    """Extract 3x3 patches from a padded [B,C,Hp,Wp] array.

    Returns (cols [B, Ho*Wo, C*9], Ho, Wo). The copy is the price of a
    single gemm per conv, which is far faster than looping in Python.
    """
    b, c, hp, wp = xp.shape
    win = np.lib.stride_tricks.sliding_window_view(xp, (3, 3), axis=(2, 3))
    win = win[:, :, ::stride, ::stride]  # [B, C, Ho, Wo, 3, 3]
    ho, wo = win.shape[2], win.shape[3]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(b, ho * wo, c * 9)
    return np.ascontiguousarray(cols), ho, wo


def _corr_valid_s1(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Valid-mode stride-1 cross-correlation, x [B,C,H,W], w [O,C,3,3]."""
    b = x.shape[0]
    win = np.lib.stride_tricks.sliding_window_view(x, (3, 3), axis=(2, 3))
    ho, wo = win.shape[2], win.shape[3]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(b, ho * wo, -1)
    out = cols @ w.reshape(w.shape[0], -1).T
    return out.transpose(0, 2, 1).reshape(b, w.shape[0], ho, wo)


def conv2d(x: Tensor, w: Tensor, b: Optional[Tensor] = None, stride: int = 1) -> Tensor:
    """2-D convolution with a 3x3 kernel and padding 1.

    ``x`` is [C,H,W] or [B,C,H,W]; ``w`` is [C_out, C_in, 3, 3]; ``b``
    is [C_out] or None. ``stride`` must be 1 or 2; output spatial size
    is ceil(H/stride) x ceil(W/stride). What numpy calls correlation:
    kernels are not flipped.
    """
    if stride not in (1, 2):
        raise InputError(f"conv2d: stride must be 1 or 2, got {stride}")
    if w.ndim != 4 or w.shape[2:] != (3, 3):
        raise ShapeError(f"conv2d: kernel must be [C_out, C_in, 3, 3], got {w.shape}")
    squeeze = False
    if x.ndim == 3:
        squeeze = True
        xd = x.data[None]
    elif x.ndim == 4:
        xd = x.data
    else:
        raise ShapeError(f"conv2d: input must be [C,H,W] or [B,C,H,W], got {x.shape}")
    if xd.shape[1] != w.shape[1]:
        raise ShapeError(f"conv2d: input channels {xd.shape[1]} != kernel channels {w.shape[1]}")
    if x.dtype != w.dtype or (b is not None and b.dtype != x.dtype):
        raise InputError("conv2d: x, w, b must share dtype")
    if b is not None and (b.ndim != 1 or b.shape[0] != w.shape[0]):
        raise ShapeError(f"conv2d: bias shape {b.shape} does not match kernel {w.shape}")

    bsz, cin, h, wd_ = xd.shape
    cout = w.shape[0]
    xp = np.pad(xd, ((0, 0), (0, 0), (1, 1), (1, 1)))
    cols, ho, wo = _im2col(xp, stride)
    wmat = w.data.reshape(cout, cin * 9)
    out_mat = cols @ wmat.T  # [B, Ho*Wo, C_out]
    if b is not None:
        out_mat = out_mat + b.data
    out = out_mat.transpose(0, 2, 1).reshape(bsz, cout, ho, wo)
    if squeeze:
        out = out[0]

    parents = (x, w) if b is None else (x, w, b)

    def backward(g):
        gb = g[None] if squeeze else g
        g_mat = gb.reshape(gb.shape[0], cout, ho * wo).transpose(0, 2, 1)  # [B, P, C_out]
        dw = np.tensordot(g_mat, cols, axes=([0, 1], [0, 1])).reshape(w.data.shape)
        # dX: dilate the output gradient back to stride-1 spacing, then a
        # full correlation with the kernel flipped in space and transposed
        # in channels undoes the forward correlation.
        hd, wdd = (ho - 1) * stride + 1, (wo - 1) * stride + 1
        dil = np.zeros((gb.shape[0], cout, hd, wdd), dtype=gb.dtype)
        dil[:, :, ::stride, ::stride] = gb
        dil_p = np.pad(dil, ((0, 0), (0, 0), (2, 2), (2, 2)))
        wt = w.data[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)  # [C_in, C_out, 3, 3]
        dx_full = _corr_valid_s1(dil_p, np.ascontiguousarray(wt))
        dx = dx_full[:, :, 1 : 1 + h, 1 : 1 + wd_]
        if squeeze:
            dx = dx[0]
        if b is None:
            return dx, dw
        return dx, dw, gb.sum(axis=(0, 2, 3))

    return _result(out, parents, backward)


# -- convenience constructors -------------------------------------------------


def tensor(data, requires_grad: bool = False, dtype=None) -> Tensor:
    return Tensor(data, requires_grad=requires_grad, dtype=dtype)


def zeros(shape, dtype=np.float32, requires_grad: bool = False) -> Tensor:
    return Tensor(np.zeros(shape, dtype=dtype), requires_grad=requires_grad)


def ones(shape, dtype=np.float32, requires_grad: bool = False) -> Tensor:
    return Tensor(np.ones(shape, dtype=dtype), requires_grad=requires_grad)
