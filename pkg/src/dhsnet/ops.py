"""Standard differentiable operators on dense numpy arrays.

Every operator comes as a pure forward function plus an explicit backward
function returning exact adjoints; there is no autodiff graph.  Tensors are
plain numpy arrays in NCHW layout, float32 or float64.  All functions are
deterministic and preserve the input dtype.
"""

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DataError, InternalError, NumericError, ShapeError


def check_finite(arr, what="tensor"):
    """Raise NumericError if arr contains NaN/Inf. Cheap single-pass check."""
    if not np.isfinite(np.sum(arr)):
        if not np.all(np.isfinite(arr)):
            raise NumericError(f"non-finite values in {what}")


@dataclass
class Parameter:
    """A trainable tensor paired with its accumulated gradient."""

    name: str
    value: np.ndarray
    grad: np.ndarray = None

    def __post_init__(self):
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        if self.grad.shape != self.value.shape:
            raise ShapeError(
                f"parameter {self.name}: grad shape {self.grad.shape} "
                f"!= value shape {self.value.shape}"
            )

    def zero_grad(self):
        self.grad.fill(0.0)


@dataclass(frozen=True)
class ConvSpec:
    """Geometry of a 2D convolution: channels, kernel extents, stride, padding."""

    in_channels: int
    out_channels: int
    kernel_h: int = 3
    kernel_w: int = 3
    stride_h: int = 1
    stride_w: int = 1
    pad_h: int = 0
    pad_w: int = 0

    def __post_init__(self):
        if self.kernel_h < 1 or self.kernel_w < 1:
            raise ShapeError("kernel extents must be >= 1")
        if self.stride_h < 1 or self.stride_w < 1:
            raise ShapeError("strides must be >= 1")
        if min(self.in_channels, self.out_channels) < 1 or min(self.pad_h, self.pad_w) < 0:
            raise ShapeError("channels must be >= 1 and padding >= 0")

    def out_hw(self, h, w):
        oh = (h + 2 * self.pad_h - self.kernel_h) // self.stride_h + 1
        ow = (w + 2 * self.pad_w - self.kernel_w) // self.stride_w + 1
        if oh < 1 or ow < 1:
            raise ShapeError(f"conv output extent < 1 for input {h}x{w} with {self}")
        return oh, ow


def _check_conv_args(x, weights, bias, spec):
    if x.ndim != 4 or weights.ndim != 4 or bias.ndim != 1:
        raise ShapeError("conv2d expects input [N,C,H,W], weights [O,C,kh,kw], bias [O]")
    if weights.shape != (spec.out_channels, spec.in_channels, spec.kernel_h, spec.kernel_w):
        raise ShapeError(f"conv2d weights shape {weights.shape} inconsistent with {spec}")
    if x.shape[1] != spec.in_channels or bias.shape[0] != spec.out_channels:
        raise ShapeError(
            f"conv2d channels mismatch: input {x.shape}, bias {bias.shape}, spec {spec}"
        )


def _pad2d(x, ph, pw):
    if ph == 0 and pw == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))


def _im2col(x_pad, spec, oh, ow):
    # (N, C, oh, ow, kh, kw) windows, strided view then one copy on reshape
    win = sliding_window_view(x_pad, (spec.kernel_h, spec.kernel_w), axis=(2, 3))
    win = win[:, :, :: spec.stride_h, :: spec.stride_w][:, :, :oh, :ow]
    n = x_pad.shape[0]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * oh * ow, -1)
    return np.ascontiguousarray(cols)


def conv2d_forward(x, weights, bias, spec):
    """Zero-padded 2D convolution: per-tap weighted sum over the kernel grid plus bias."""
    _check_conv_args(x, weights, bias, spec)
    check_finite(x, "conv2d input")
    n, _, h, w = x.shape
    oh, ow = spec.out_hw(h, w)
    cols = _im2col(_pad2d(x, spec.pad_h, spec.pad_w), spec, oh, ow)
    wmat = weights.reshape(spec.out_channels, -1)
    out = cols @ wmat.T
    out += bias
    return out.reshape(n, oh, ow, spec.out_channels).transpose(0, 3, 1, 2)


def conv2d_backward(grad_out, saved_input, weights, spec):
    """Adjoints of conv2d_forward: (grad_input, grad_weights, grad_bias)."""
    n, _, h, w = saved_input.shape
    oh, ow = spec.out_hw(h, w)
    if grad_out.shape != (n, spec.out_channels, oh, ow):
        raise ShapeError(f"conv2d grad_out shape {grad_out.shape} != {(n, spec.out_channels, oh, ow)}")
    x_pad = _pad2d(saved_input, spec.pad_h, spec.pad_w)
    cols = _im2col(x_pad, spec, oh, ow)
    gmat = np.ascontiguousarray(grad_out.transpose(0, 2, 3, 1).reshape(n * oh * ow, -1))
    grad_weights = (gmat.T @ cols).reshape(weights.shape)
    grad_bias = gmat.sum(axis=0)
    dcols = (gmat @ weights.reshape(spec.out_channels, -1)).reshape(
        n, oh, ow, spec.in_channels, spec.kernel_h, spec.kernel_w
    )
    dcols = dcols.transpose(0, 3, 4, 5, 1, 2)  # (N, C, kh, kw, oh, ow)
    gx_pad = np.zeros_like(x_pad)
    sh, sw = spec.stride_h, spec.stride_w
    for i in range(spec.kernel_h):
        for j in range(spec.kernel_w):
            gx_pad[:, :, i : i + sh * oh : sh, j : j + sw * ow : sw] += dcols[:, :, i, j]
    ph, pw = spec.pad_h, spec.pad_w
    grad_input = gx_pad[:, :, ph : ph + h, pw : pw + w]
    return grad_input, grad_weights, grad_bias


def maxpool2x2_forward(x):
    """2x2/stride-2 max pooling. Ties break toward the smallest flat index.

    Returns (output, argmax) with argmax in window-local flat order 0..3.
    """
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ShapeError(f"maxpool2x2 needs even spatial extents, got {h}x{w}")
    win = x.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(
        n, c, h // 2, w // 2, 4
    )
    # np.argmax returns the first maximum, i.e. the smallest window-local flat
    # index, which in row-major layout is also the smallest input flat index.
    idx = np.argmax(win, axis=-1)
    out = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
    return out, idx.astype(np.int8)


def maxpool2x2_backward(grad_out, argmax, input_shape):
    """Route grad_out to the recorded argmax position of each 2x2 window."""
    n, c, h, w = input_shape
    if grad_out.shape != (n, c, h // 2, w // 2) or argmax.shape != grad_out.shape:
        raise ShapeError("maxpool2x2 backward shape mismatch")
    if argmax.min() < 0 or argmax.max() > 3:
        raise InternalError("maxpool argmax indices out of bounds")
    gwin = np.zeros((n, c, h // 2, w // 2, 4), dtype=grad_out.dtype)
    np.put_along_axis(gwin, argmax.astype(np.intp)[..., None], grad_out[..., None], axis=-1)
    return gwin.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(
        n, c, h, w
    )


def transposed_conv2x2_forward(x, weights, bias):
    """Stride-2 2x2 transposed convolution; output spatial extents exactly 2x input.

    weights: [Cin, Cout, 2, 2], bias: [Cout].
    """
    n, c, h, w = x.shape
    if weights.ndim != 4 or weights.shape[0] != c or weights.shape[2:] != (2, 2):
        raise ShapeError(f"transposed conv weights {weights.shape} mismatch input {x.shape}")
    if bias.shape != (weights.shape[1],):
        raise ShapeError("transposed conv bias shape mismatch")
    # non-overlapping scatter: out[n,o,2h+i,2w+j] = sum_c x[n,c,h,w] * W[c,o,i,j]
    out = np.einsum("nchw,coij->nohiwj", x, weights, optimize=True)
    out = out.reshape(n, weights.shape[1], 2 * h, 2 * w)
    out += bias[None, :, None, None]
    return out


def transposed_conv2x2_backward(grad_out, saved_input, weights):
    """Adjoints of transposed_conv2x2_forward: (grad_input, grad_weights, grad_bias)."""
    n, c, h, w = saved_input.shape
    o = weights.shape[1]
    if grad_out.shape != (n, o, 2 * h, 2 * w):
        raise ShapeError("transposed conv grad_out shape mismatch")
    g = grad_out.reshape(n, o, h, 2, w, 2)
    grad_input = np.einsum("nohiwj,coij->nchw", g, weights, optimize=True)
    grad_weights = np.einsum("nohiwj,nchw->coij", g, saved_input, optimize=True)
    grad_bias = grad_out.sum(axis=(0, 2, 3))
    return grad_input, grad_weights, grad_bias


def relu_forward(x):
    return np.maximum(x, 0)


def relu_backward(grad_out, saved_input):
    # subgradient at exactly 0 is defined as 0
    return np.where(saved_input > 0, grad_out, 0)


def sigmoid_forward(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid_backward(grad_out, saved_output):
    return grad_out * saved_output * (1.0 - saved_output)


def concat_channels(a, b):
    """Stack along the channel axis, a first."""
    if a.ndim != 4 or b.ndim != 4:
        raise ShapeError("concat_channels expects [N,C,H,W] tensors")
    if a.shape[0] != b.shape[0] or a.shape[2:] != b.shape[2:]:
        raise ShapeError(f"concat_channels N/H/W mismatch: {a.shape} vs {b.shape}")
    return np.concatenate([a, b], axis=1)


def concat_channels_backward(grad_out, ca):
    """Split the upstream gradient back into the two concatenated operands."""
    return grad_out[:, :ca], grad_out[:, ca:]


def softmax_ce_forward(logits, labels, ignore_id=255):
    """Mean pixel-wise cross-entropy of softmax(logits) against integer labels.

    Pixels whose label equals ignore_id are excluded. Returns (loss, cache).
    """
    n, c, h, w = logits.shape
    if labels.shape != (n, h, w):
        raise ShapeError(f"labels shape {labels.shape} != {(n, h, w)}")
    bad = (labels >= c) & (labels != ignore_id)
    if bad.any() or labels.min() < 0:
        raise DataError(f"label ids outside [0,{c}) and != ignore ({ignore_id})")
    m = logits.max(axis=1, keepdims=True)
    z = logits - m
    lse = np.log(np.exp(z).sum(axis=1, keepdims=True))
    logp = z - lse  # (N,C,H,W)
    mask = labels != ignore_id
    count = int(mask.sum())
    safe_labels = np.where(mask, labels, 0)
    picked = np.take_along_axis(logp, safe_labels[:, None], axis=1)[:, 0]
    loss = -(picked * mask).sum() / max(count, 1)
    cache = (logp, safe_labels, mask, count)
    return float(loss), cache


def softmax_ce_backward(cache, upstream=1.0):
    """Gradient of softmax_ce_forward w.r.t. logits."""
    logp, safe_labels, mask, count = cache
    grad = np.exp(logp)
    onehot_rows = np.take_along_axis(grad, safe_labels[:, None], axis=1)
    np.put_along_axis(grad, safe_labels[:, None], onehot_rows - 1.0, axis=1)
    grad *= mask[:, None] * (upstream / max(count, 1))
    return grad
