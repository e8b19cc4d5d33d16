"""Dense real/complex tensors with reverse-mode automatic differentiation.

Values are float64 or complex128 numpy arrays. A ``Tensor`` is immutable once
created (training code replaces parameter ``data`` between steps, never
during a forward/backward pass). Calling an operation records the node on an
implicit tape; ``backward()`` on a real scalar loss fills ``grad`` on every
reachable tensor with ``requires_grad=True``.

Gradient convention for complex tensors: ``grad`` packs the two independent
real partials as ``dL/d(re) + 1j * dL/d(im)``. For a real scalar loss this
equals twice the conjugate Wirtinger derivative, and the pair
``(grad.real, grad.imag)`` is exactly what a gradient-descent update of the
two real components needs. ``gradient_pair()`` exposes that split.
"""

from __future__ import annotations

import numpy as np

REAL = np.float64
COMPLEX = np.complex128


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


class GradientError(RuntimeError):
    """backward() called on a node that is not a real scalar loss."""


_grad_enabled = True


class no_grad:
    """Context manager that disables tape recording (inference mode)."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


def _as_array(value):
    arr = np.asarray(value)
    if np.iscomplexobj(arr):
        return arr.astype(COMPLEX, copy=False)
    return arr.astype(REAL, copy=False)


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward_fn")

    def __init__(self, data, requires_grad=False):
        self.data = _as_array(data)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._backward_fn = None

    @classmethod
    def _node(cls, data, parents, backward_fn):
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        if _grad_enabled and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._backward_fn = backward_fn
        else:
            out.requires_grad = False
            out._parents = ()
            out._backward_fn = None
        return out

    # ---- basic introspection -------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def is_complex(self):
        return self.data.dtype == COMPLEX

    def item(self):
        return self.data.item()

    def numpy(self):
        return self.data

    def detach(self):
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        kind = "complex" if self.is_complex else "real"
        return f"Tensor(shape={self.shape}, {kind}, requires_grad={self.requires_grad})"

    # ---- backward pass -------------------------------------------------------

    def _accumulate(self, raw):
        """Add a raw upstream gradient, reducing broadcasts and dtype.

        Stored gradients are never mutated in place, so adopting the first
        contribution directly (even a shared or broadcast view) is safe.
        """
        if raw.shape != self.data.shape:
            raw = _unbroadcast(raw, self.data.shape)
        if not self.is_complex and np.iscomplexobj(raw):
            raw = raw.real
        if self.grad is None:
            self.grad = raw if raw.dtype == self.data.dtype else raw.astype(self.data.dtype)
        else:
            self.grad = self.grad + raw

    def backward(self, free_graph=True):
        """Reverse-mode pass from this node, which must be a real scalar.

        Complex-dtype scalars are accepted only when their imaginary part is
        exactly zero. Fills ``grad`` on every reachable requires_grad tensor.
        """
        if self.data.size != 1:
            raise GradientError(f"loss must be a scalar, got shape {self.shape}")
        if self.is_complex and self.data.imag.item() != 0.0:
            raise GradientError("loss must be real (imaginary part is nonzero)")

        topo = []
        visited = {id(self)}
        stack = [(self, iter(self._parents))]
        while stack:
            node, parents = stack[-1]
            nxt = next(parents, None)
            if nxt is None:
                topo.append(node)
                stack.pop()
            elif id(nxt) not in visited:
                visited.add(id(nxt))
                if nxt._backward_fn is not None:
                    stack.append((nxt, iter(nxt._parents)))

        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward_fn is not None and node.grad is not None:
                node._backward_fn(node.grad)
            if free_graph:
                node._parents = ()
                node._backward_fn = None

    def gradient_pair(self):
        """Return (dL/d_re, dL/d_im) as real arrays; d_im is zero for real tensors."""
        if self.grad is None:
            raise GradientError("no gradient accumulated; call backward() first")
        if self.is_complex:
            return np.ascontiguousarray(self.grad.real), np.ascontiguousarray(self.grad.imag)
        return self.grad, np.zeros_like(self.grad)

    # ---- operator sugar --------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_wrap(other), self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return neg(self)

    def __pow__(self, p):
        if p == 2:
            return square(self)
        raise NotImplementedError("only squaring is supported")

    def __getitem__(self, index):
        return crop(self, index)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 else shape[0])

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis, keepdims)


def _wrap(value):
    return value if isinstance(value, Tensor) else Tensor(value)


def _unbroadcast(grad, shape):
    """Sum a broadcast gradient back down to `shape`."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _conj(arr):
    return arr.conj() if np.iscomplexobj(arr) else arr


def _broadcast_check(a, b, opname):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(
            f"{opname}: shapes {a.shape} and {b.shape} are not broadcast-compatible"
        ) from None


# ---- elementwise arithmetic ----------------------------------------------------


def add(x, y):
    x, y = _wrap(x), _wrap(y)
    _broadcast_check(x.data, y.data, "add")
    data = x.data + y.data

    def backward(g):
        if x.requires_grad:
            x._accumulate(g)
        if y.requires_grad:
            y._accumulate(g)

    return Tensor._node(data, (x, y), backward)


def sub(x, y):
    x, y = _wrap(x), _wrap(y)
    _broadcast_check(x.data, y.data, "sub")
    data = x.data - y.data

    def backward(g):
        if x.requires_grad:
            x._accumulate(g)
        if y.requires_grad:
            y._accumulate(-g)

    return Tensor._node(data, (x, y), backward)


def mul(x, y):
    """Elementwise (complex) product; gradients use the conjugate factors."""
    if isinstance(y, (int, float)) or isinstance(x, (int, float)):
        if isinstance(x, (int, float)):
            x, y = y, x
        scalar = float(y)
        data = x.data * scalar

        def backward_scalar(g):
            if x.requires_grad:
                x._accumulate(g * scalar)

        return Tensor._node(data, (x,), backward_scalar)

    x, y = _wrap(x), _wrap(y)
    _broadcast_check(x.data, y.data, "mul")
    data = x.data * y.data

    def backward(g):
        if x.requires_grad:
            x._accumulate(_conj(y.data) * g)
        if y.requires_grad:
            y._accumulate(_conj(x.data) * g)

    return Tensor._node(data, (x, y), backward)


def div(x, y):
    """x / y with a real denominator (sufficient for every operator here)."""
    if isinstance(y, (int, float)):
        return mul(x, 1.0 / float(y))
    x, y = _wrap(x), _wrap(y)
    if y.is_complex:
        raise NotImplementedError("division by complex tensors is not supported")
    _broadcast_check(x.data, y.data, "div")
    data = x.data / y.data

    def backward(g):
        if x.requires_grad:
            x._accumulate(g / y.data)
        if y.requires_grad:
            raw = _conj(x.data) * g / (y.data * y.data)
            y._accumulate(-raw)

    return Tensor._node(data, (x, y), backward)


def neg(x):
    data = -x.data

    def backward(g):
        if x.requires_grad:
            x._accumulate(-g)

    return Tensor._node(data, (x,), backward)


def conj(x):
    data = _conj(x.data)

    def backward(g):
        if x.requires_grad:
            x._accumulate(_conj(g))

    return Tensor._node(data, (x,), backward)


def magnitude(x):
    """|z| as a real tensor; gradient is zero at z == 0 (removable kink)."""
    data = np.abs(x.data)

    def backward(g):
        if x.requires_grad:
            if x.is_complex:
                safe = np.where(data > 0, data, 1.0)
                direction = np.where(data > 0, x.data / safe, 0.0)
                x._accumulate(g * direction)
            else:
                x._accumulate(g * np.sign(x.data))

    return Tensor._node(data, (x,), backward)


def magnitude_sq(x):
    """|z|^2 as a real tensor (re^2 + im^2); smooth everywhere."""
    if x.is_complex:
        data = x.data.real**2 + x.data.imag**2
    else:
        data = x.data * x.data

    def backward(g):
        if x.requires_grad:
            x._accumulate(2.0 * g * x.data)

    return Tensor._node(data, (x,), backward)


def real(x):
    data = np.ascontiguousarray(x.data.real)

    def backward(g):
        if x.requires_grad:
            x._accumulate(g.real if np.iscomplexobj(g) else g)

    return Tensor._node(data, (x,), backward)


def imag(x):
    data = np.ascontiguousarray(x.data.imag) if x.is_complex else np.zeros_like(x.data)

    def backward(g):
        if x.requires_grad and x.is_complex:
            x._accumulate(1j * g)

    return Tensor._node(data, (x,), backward)


def make_complex(re, im):
    """re + 1j*im from two real tensors."""
    re, im = _wrap(re), _wrap(im)
    if re.is_complex or im.is_complex:
        raise ShapeError("make_complex expects real tensors")
    _broadcast_check(re.data, im.data, "make_complex")
    data = re.data + 1j * im.data

    def backward(g):
        if re.requires_grad:
            re._accumulate(g.real)
        if im.requires_grad:
            im._accumulate(g.imag)

    return Tensor._node(data, (re, im), backward)


def square(x):
    if x.is_complex:
        raise NotImplementedError("square is defined for real tensors only")
    data = x.data * x.data

    def backward(g):
        if x.requires_grad:
            x._accumulate(2.0 * x.data * g)

    return Tensor._node(data, (x,), backward)


def sqrt(x):
    if x.is_complex:
        raise NotImplementedError("sqrt is defined for real tensors only")
    data = np.sqrt(x.data)

    def backward(g):
        if x.requires_grad:
            x._accumulate(0.5 * g / data)

    return Tensor._node(data, (x,), backward)


def exp(x):
    if x.is_complex:
        raise NotImplementedError("exp is defined for real tensors only")
    data = np.exp(x.data)

    def backward(g):
        if x.requires_grad:
            x._accumulate(g * data)

    return Tensor._node(data, (x,), backward)


def relu(x):
    if x.is_complex:
        raise NotImplementedError("relu is defined for real tensors; see mod_relu")
    data = np.maximum(x.data, 0.0)

    def backward(g):
        if x.requires_grad:
            x._accumulate(g * (x.data > 0))

    return Tensor._node(data, (x,), backward)


def sigmoid(x):
    if x.is_complex:
        raise NotImplementedError("sigmoid is defined for real tensors; see split_sigmoid")
    data = 1.0 / (1.0 + np.exp(-x.data))

    def backward(g):
        if x.requires_grad:
            x._accumulate(g * data * (1.0 - data))

    return Tensor._node(data, (x,), backward)


# ---- reductions ------------------------------------------------------------------


def _norm_axis(axis, ndim):
    if axis is None:
        return None
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


def tsum(x, axis=None, keepdims=False):
    axis = _norm_axis(axis, x.ndim)
    data = x.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if x.requires_grad:
            gg = g
            if axis is not None and not keepdims:
                gg = np.expand_dims(gg, axis)
            elif axis is None and not keepdims:
                gg = np.asarray(gg).reshape((1,) * x.ndim)
            x._accumulate(np.broadcast_to(gg, x.shape))

    return Tensor._node(np.asarray(data), (x,), backward)


def tmean(x, axis=None, keepdims=False):
    axis = _norm_axis(axis, x.ndim)
    if axis is None:
        count = x.size
    else:
        count = int(np.prod([x.shape[a] for a in axis]))
    total = tsum(x, axis, keepdims)
    return mul(total, 1.0 / count)


# ---- shape plumbing ---------------------------------------------------------------


def reshape(x, shape):
    data = x.data.reshape(shape)

    def backward(g):
        if x.requires_grad:
            x._accumulate(g.reshape(x.shape))

    return Tensor._node(data, (x,), backward)


def pad(x, pad_width):
    """Zero padding; `pad_width` is ((before, after), ...) per axis."""
    data = np.pad(x.data, pad_width)

    def backward(g):
        if x.requires_grad:
            sl = tuple(slice(b, g.shape[i] - a) for i, (b, a) in enumerate(pad_width))
            x._accumulate(g[sl])

    return Tensor._node(data, (x,), backward)


def crop(x, index):
    """Slice a tensor; the gradient re-embeds into zeros."""
    data = x.data[index]
    if data.ndim != x.ndim:
        raise ShapeError("crop supports slices only (no integer indexing)")

    def backward(g):
        if x.requires_grad:
            full = np.zeros_like(x.data)
            full[index] = g
            x._accumulate(full)

    return Tensor._node(data, (x,), backward)


def concat(tensors, axis):
    tensors = [_wrap(t) for t in tensors]
    axis = axis % tensors[0].ndim
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, bounds[:-1], bounds[1:]):
            if t.requires_grad:
                sl = tuple(
                    slice(lo, hi) if a == axis else slice(None) for a in range(g.ndim)
                )
                t._accumulate(g[sl])

    return Tensor._node(data, tuple(tensors), backward)
