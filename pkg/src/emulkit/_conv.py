"""N-D strided correlation and its adjoint, channel-first, no batch axis.

Forward weights are ``(out, in, *kernel)``; transposed weights follow the
usual transposed-convolution layout ``(in, out, *kernel)`` so that
``conv_transpose(y, w, s)`` is the exact adjoint of ``conv(x, w, s)``.

``wrap`` is a per-axis tuple of ``None`` (plain, non-circular axis) or an
integer offset: on such an axis the transposed output is circular with
period ``tokens * stride`` and tap ``k`` of token ``t`` lands on cell
``(t * stride + k - offset) mod period``.
"""
import itertools

import numpy as np

from .errors import DimensionError


def output_extent(length, kernel, stride):
    if length < kernel or (length - kernel) % stride:
        raise DimensionError(
            f"extent {length} incompatible with kernel {kernel}, stride {stride}"
        )
    return (length - kernel) // stride + 1


def _tap_index(n_out, k, s, wrap, length):
    idx = s * np.arange(n_out)[:, None] + np.arange(k)[None, :]
    if wrap is not None:
        idx = (idx - wrap) % length
    return idx


def gather_windows(x, kernel, strides, n_out, wrap=None):
    """``win[c, *t, *k] = x[c, *index(t, k)]`` for each axis."""
    d = x.ndim - 1
    wrap = (None,) * d if wrap is None else wrap
    index = []
    for a in range(d):
        idx = _tap_index(n_out[a], kernel[a], strides[a], wrap[a], x.shape[a + 1])
        shape = [1] * (2 * d)
        shape[a], shape[d + a] = n_out[a], kernel[a]
        index.append(idx.reshape(shape))
    return x[(slice(None),) + tuple(index)]


def _contract_axes(d):
    return [0] + list(range(d + 1, 2 * d + 1))


def conv(x, w, strides):
    d = x.ndim - 1
    if w.ndim != d + 2 or w.shape[1] != x.shape[0]:
        raise DimensionError(f"weight shape {w.shape} does not fit input {x.shape}")
    kernel = w.shape[2:]
    n_out = tuple(output_extent(n, k, s) for n, k, s in zip(x.shape[1:], kernel, strides))
    win = gather_windows(x, kernel, strides, n_out)
    return np.tensordot(w, win, axes=([1] + list(range(2, d + 2)), _contract_axes(d)))


def conv_weight_grad(x, grad_out, kernel, strides):
    """Gradient of ``sum(grad_out * conv(x, w))`` with respect to ``w``."""
    d = x.ndim - 1
    win = gather_windows(x, kernel, strides, grad_out.shape[1:])
    axes = list(range(1, d + 1))
    return np.tensordot(grad_out, win, axes=(axes, axes))


def conv_input_grad(grad_out, w, strides, in_shape):
    """Gradient of ``sum(grad_out * conv(x, w))`` with respect to ``x``."""
    out = conv_transpose(grad_out, w, strides)
    return out if out.shape[1:] == tuple(in_shape) else _embed(out, in_shape)


def _embed(x, shape):
    full = np.zeros(x.shape[:1] + tuple(shape), dtype=x.dtype)
    full[(slice(None),) + tuple(slice(0, n) for n in x.shape[1:])] = x
    return full


def _transposed_extent(t, s, k, wrap):
    return t * s if wrap is not None else (t - 1) * s + k


def conv_transpose(y, w, strides, wrap=None):
    d = y.ndim - 1
    if w.ndim != d + 2 or w.shape[0] != y.shape[0]:
        raise DimensionError(f"weight shape {w.shape} does not fit input {y.shape}")
    wrap = (None,) * d if wrap is None else tuple(wrap)
    kernel = w.shape[2:]
    n_in = y.shape[1:]
    out_ext = tuple(_transposed_extent(*args) for args in zip(n_in, strides, kernel, wrap))
    index = [
        _tap_index(n_in[a], kernel[a], strides[a], wrap[a], out_ext[a]) for a in range(d)
    ]
    out = np.zeros((w.shape[1],) + out_ext, dtype=np.result_type(y, w))
    channels = np.arange(w.shape[1])
    for offset in itertools.product(*(range(k) for k in kernel)):
        tap = w[(slice(None), slice(None)) + offset]  # (in, out)
        contrib = np.tensordot(tap, y, axes=([0], [0]))
        # Indices along each axis are distinct for a fixed tap, so += is safe.
        region = np.ix_(channels, *(index[a][:, offset[a]] for a in range(d)))
        out[region] += contrib
    return out


def conv_transpose_weight_grad(y, grad_out, kernel, strides, wrap=None):
    """Gradient of ``sum(grad_out * conv_transpose(y, w))`` with respect to ``w``."""
    d = y.ndim - 1
    win = gather_windows(grad_out, kernel, strides, y.shape[1:], wrap)
    axes = list(range(1, d + 1))
    return np.tensordot(y, win, axes=(axes, axes))


def conv_transpose_input_grad(grad_out, w, strides, n_in, wrap=None):
    """Gradient of ``sum(grad_out * conv_transpose(y, w))`` with respect to ``y``."""
    d = grad_out.ndim - 1
    win = gather_windows(grad_out, w.shape[2:], strides, n_in, wrap)
    return np.tensordot(w, win, axes=([1] + list(range(2, d + 2)), _contract_axes(d)))


def silu(x):
    return x / (1.0 + np.exp(-x))


def silu_grad(x):
    sig = 1.0 / (1.0 + np.exp(-x))
    return sig * (1.0 + x * (1.0 - sig))
