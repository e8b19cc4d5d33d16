"""Parameterised layers on top of the functional operators.

Every learnable parameter is a real float64 tensor; complex kernels and
biases are stored as (re, im) pairs and combined on the fly, so optimiser
state, gradient pairs and parameter counting treat one complex weight as two
real scalars.
"""

from __future__ import annotations

import numpy as np

from .. import tensor as T
from ..tensor import Tensor
from . import functional as F


class Module:
    def __init__(self):
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_modules", {})
        object.__setattr__(self, "_buffers", {})
        object.__setattr__(self, "training", True)

    def __setattr__(self, name, value):
        if isinstance(value, Tensor) and value.requires_grad:
            self._params[name] = value
        elif isinstance(value, Module):
            self._modules[name] = value
        object.__setattr__(self, name, value)

    def register_buffer(self, name, array):
        self._buffers[name] = array
        object.__setattr__(self, name, array)

    def named_parameters(self, prefix=""):
        for name, p in self._params.items():
            yield prefix + name, p
        for name, mod in self._modules.items():
            yield from mod.named_parameters(prefix + name + ".")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix=""):
        for name, b in self._buffers.items():
            yield prefix + name, b
        for name, mod in self._modules.items():
            yield from mod.named_buffers(prefix + name + ".")

    def set_buffer(self, name, array):
        """Replace a (possibly nested) buffer by dotted name."""
        head, _, rest = name.partition(".")
        if rest:
            self._modules[head].set_buffer(rest, array)
        else:
            self._buffers[head] = array
            object.__setattr__(self, head, array)

    def train(self, mode=True):
        object.__setattr__(self, "training", mode)
        for mod in self._modules.values():
            mod.train(mode)
        return self

    def eval(self):
        return self.train(False)

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


class ModuleList(Module):
    def __init__(self, mods=()):
        super().__init__()
        self._items = []
        for mod in mods:
            self.append(mod)

    def append(self, mod):
        setattr(self, str(len(self._items)), mod)
        self._items.append(mod)

    def __iter__(self):
        return iter(self._items)

    def __len__(self):
        return len(self._items)

    def __getitem__(self, i):
        return self._items[i]


def _param(rng, shape, bound):
    if bound == 0.0:
        return Tensor(np.zeros(shape), requires_grad=True)
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


def _channel_view(t, nd):
    """Reshape a [C] parameter for broadcasting over [B, C, *spatial]."""
    return T.reshape(t, (1, t.shape[0]) + (1,) * nd)


class Conv(Module):
    """Convolution with 'same' semantics left to the caller via padding.

    He-style uniform fan-in init; complex kernels draw each component with
    halved variance so E|w|^2 matches the real case. ``zero_init`` makes the
    layer an exact zero map (used for the residual head).
    """

    def __init__(self, in_ch, out_ch, kernel, rng, stride=1, padding=0,
                 complex_weights=False, bias=True, zero_init=False):
        super().__init__()
        self.spec = F.ConvSpec(in_ch, out_ch, tuple(kernel), stride, padding)
        self.complex_weights = complex_weights
        fan_in = in_ch * int(np.prod(kernel))
        shape = (out_ch, in_ch) + tuple(kernel)
        if zero_init:
            bound = 0.0
        elif complex_weights:
            bound = np.sqrt(3.0 / fan_in)
        else:
            bound = np.sqrt(6.0 / fan_in)
        self.w_r = _param(rng, shape, bound)
        if complex_weights:
            self.w_i = _param(rng, shape, bound)
        if bias:
            self.b_r = Tensor(np.zeros(out_ch), requires_grad=True)
            if complex_weights:
                self.b_i = Tensor(np.zeros(out_ch), requires_grad=True)

    def forward(self, x):
        nd = x.ndim - 2
        if self.complex_weights:
            y = F.complex_conv(x, self.w_r, self.w_i,
                               self.spec.stride, self.spec.padding)
            if hasattr(self, "b_r"):
                bias = T.make_complex(self.b_r, self.b_i)
                y = T.add(y, T.reshape(bias, (1, -1) + (1,) * nd))
        else:
            y = F.conv(x, self.w_r, self.spec.stride, self.spec.padding)
            if hasattr(self, "b_r"):
                y = T.add(y, _channel_view(self.b_r, nd))
        return y


class ConvTranspose(Module):
    """Stride-driven upsampling; complex version follows the split formula."""

    def __init__(self, in_ch, out_ch, kernel, rng, stride, output_trim=0,
                 complex_weights=False, bias=True):
        super().__init__()
        self.stride = stride
        self.output_trim = output_trim
        self.complex_weights = complex_weights
        fan_in = in_ch * int(np.prod(kernel))
        shape = (in_ch, out_ch) + tuple(kernel)
        bound = np.sqrt(3.0 / fan_in) if complex_weights else np.sqrt(6.0 / fan_in)
        self.w_r = _param(rng, shape, bound)
        if complex_weights:
            self.w_i = _param(rng, shape, bound)
        if bias:
            self.b_r = Tensor(np.zeros(out_ch), requires_grad=True)
            if complex_weights:
                self.b_i = Tensor(np.zeros(out_ch), requires_grad=True)

    def forward(self, x):
        nd = x.ndim - 2
        if self.complex_weights:
            y = F.complex_conv_transpose(x, self.w_r, self.w_i, self.stride,
                                         0, self.output_trim)
            if hasattr(self, "b_r"):
                bias = T.make_complex(self.b_r, self.b_i)
                y = T.add(y, T.reshape(bias, (1, -1) + (1,) * nd))
        else:
            y = F.conv_transpose(x, self.w_r, self.stride, 0, self.output_trim)
            if hasattr(self, "b_r"):
                y = T.add(y, _channel_view(self.b_r, nd))
        return y


class BatchNorm(Module):
    """Per-channel normalisation by complex mean and real sqrt(V[z] + eps).

    gamma is a real per-channel scale (phase preserving); beta is a shift,
    complex for complex data. Running statistics are population estimates
    updated in training mode only.
    """

    def __init__(self, channels, complex_data=False, eps=1e-5, momentum=0.1):
        super().__init__()
        self.eps = eps
        self.momentum = momentum
        self.complex_data = complex_data
        self.gamma = Tensor(np.ones(channels), requires_grad=True)
        self.beta_r = Tensor(np.zeros(channels), requires_grad=True)
        if complex_data:
            self.beta_i = Tensor(np.zeros(channels), requires_grad=True)
        mean_dtype = np.complex128 if complex_data else np.float64
        self.register_buffer("running_mean", np.zeros(channels, dtype=mean_dtype))
        self.register_buffer("running_var", np.ones(channels))

    def forward(self, x):
        nd = x.ndim - 2
        view = (1, -1) + (1,) * nd
        if self.training:
            mu, var = F.batch_norm_stats(x)
            m = self.momentum
            self.running_mean[:] = (1 - m) * self.running_mean + m * mu.data.reshape(-1)
            self.running_var[:] = (1 - m) * self.running_var + m * var.data.reshape(-1)
        else:
            mu = Tensor(self.running_mean.reshape(view))
            var = Tensor(self.running_var.reshape(view))
        gamma = T.reshape(self.gamma, view)
        if self.complex_data:
            beta = T.reshape(T.make_complex(self.beta_r, self.beta_i), view)
        else:
            beta = T.reshape(self.beta_r, view)
        return F.batch_norm_apply(x, mu, var, gamma, beta, self.eps)


class ModReLU(Module):
    """modReLU activation with one learnable real bias per channel (init 0)."""

    def __init__(self, channels):
        super().__init__()
        self.bias = Tensor(np.zeros(channels), requires_grad=True)

    def forward(self, x):
        return F.mod_relu(x, _channel_view(self.bias, x.ndim - 2))


class ReLU(Module):
    def forward(self, x):
        return T.relu(x)


class Dropout(Module):
    """Shared-mask dropout; deterministic given the seed it was built with."""

    def __init__(self, p, seed=0):
        super().__init__()
        self.p = p
        self._rng = np.random.default_rng(seed)

    def forward(self, x):
        return F.complex_dropout(x, self.p, self._rng, training=self.training)


class MaxPool(Module):
    """Largest-magnitude selection for complex data, signed max for real."""

    def __init__(self, window, stride=None):
        super().__init__()
        self.window = window
        self.stride = stride

    def forward(self, x):
        if x.is_complex:
            return F.magnitude_max_pool(x, self.window, self.stride)
        return F.max_pool(x, self.window, self.stride)


class AvgPool(Module):
    def __init__(self, window, stride=None):
        super().__init__()
        self.window = window
        self.stride = stride

    def forward(self, x):
        return F.avg_pool(x, self.window, self.stride)
