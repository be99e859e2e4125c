"""Dense float32 tensor operations for the classifier: forward and backward.

Tensors are plain numpy float32 arrays of rank 1 to 4, row-major, with
channel-major (C, H, W) layout for images. Convolution is cross-correlation
(no kernel flip) over a single sample; there is no batch dimension. All
operations are pure: inputs are never mutated.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError

Tensor = np.ndarray

MAX_RANK = 4


def as_tensor(values, shape: tuple[int, ...] | None = None) -> Tensor:
    """Validate and coerce array-like data into a float32 tensor.

    Rank must be 1..4 and every extent >= 1. No copy is made when the input
    is already float32 and C-contiguous.
    """
    arr = np.asarray(values)
    if arr.ndim == 0 and shape is None:
        raise ShapeError(f"tensor rank must be 1..{MAX_RANK}, got 0")
    arr = np.ascontiguousarray(arr, dtype=np.float32)
    if shape is not None:
        arr = arr.reshape(shape)
    if not 1 <= arr.ndim <= MAX_RANK:
        raise ShapeError(f"tensor rank must be 1..{MAX_RANK}, got {arr.ndim}")
    if any(e < 1 for e in arr.shape):
        raise ShapeError(f"tensor extents must all be >= 1, got {arr.shape}")
    return arr


@dataclass
class ConvParams:
    """Weights (out_channels, in_channels, k, k), bias (out_channels), stride, padding."""

    weights: Tensor
    bias: Tensor
    stride: int = 1
    padding: int = 0

    def __post_init__(self):
        self.weights = as_tensor(self.weights)
        self.bias = as_tensor(self.bias)
        if self.weights.ndim != 4:
            raise ShapeError(f"conv weights must be rank 4, got shape {self.weights.shape}")
        out_c, _, kh, kw = self.weights.shape
        if kh != kw or kh < 1:
            raise ShapeError(f"conv kernel must be square and >= 1, got {kh}x{kw}")
        if self.bias.shape != (out_c,):
            raise ShapeError(
                f"conv bias length {self.bias.shape} does not match out_channels {out_c}"
            )
        if self.stride < 1:
            raise ValueError(f"stride must be >= 1, got {self.stride}")
        if self.padding < 0:
            raise ValueError(f"padding must be >= 0, got {self.padding}")

    @property
    def out_channels(self) -> int:
        return self.weights.shape[0]

    @property
    def in_channels(self) -> int:
        return self.weights.shape[1]

    @property
    def kernel(self) -> int:
        return self.weights.shape[2]


@dataclass
class DenseParams:
    """Weights (out_dim, in_dim) and bias (out_dim) of a fully connected layer."""

    weights: Tensor
    bias: Tensor

    def __post_init__(self):
        self.weights = as_tensor(self.weights)
        self.bias = as_tensor(self.bias)
        if self.weights.ndim != 2:
            raise ShapeError(f"dense weights must be rank 2, got shape {self.weights.shape}")
        if self.bias.shape != (self.weights.shape[0],):
            raise ShapeError(
                f"dense bias length {self.bias.shape} does not match "
                f"out_dim {self.weights.shape[0]}"
            )

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]


def conv_output_extent(extent: int, kernel: int, stride: int, padding: int) -> int:
    return (extent + 2 * padding - kernel) // stride + 1


def _check_conv_input(x: Tensor, p: ConvParams) -> tuple[int, int]:
    if x.ndim != 3:
        raise ShapeError(f"conv2d input must be (C, H, W), got shape {x.shape}")
    if x.shape[0] != p.in_channels:
        raise ShapeError(
            f"input has {x.shape[0]} channels but kernel expects {p.in_channels} "
            f"(input {x.shape}, weights {p.weights.shape})"
        )
    h_out = conv_output_extent(x.shape[1], p.kernel, p.stride, p.padding)
    w_out = conv_output_extent(x.shape[2], p.kernel, p.stride, p.padding)
    if h_out < 1 or w_out < 1:
        raise ShapeError(
            f"conv2d output would be empty: input {x.shape}, kernel {p.kernel}, "
            f"stride {p.stride}, padding {p.padding}"
        )
    return h_out, w_out


def _im2col(x_padded: Tensor, kernel: int, stride: int, h_out: int, w_out: int) -> Tensor:
    """Unfold (C, Hp, Wp) into patch columns of shape (C*k*k, h_out*w_out)."""
    c = x_padded.shape[0]
    sc, sh, sw = x_padded.strides
    view = np.lib.stride_tricks.as_strided(
        x_padded,
        shape=(c, kernel, kernel, h_out, w_out),
        strides=(sc, sh, sw, stride * sh, stride * sw),
        writeable=False,
    )
    return view.reshape(c * kernel * kernel, h_out * w_out)


def _col2im(cols: Tensor, c: int, hp: int, wp: int, kernel: int, stride: int,
            h_out: int, w_out: int) -> Tensor:
    """Scatter-add patch columns back onto a zeroed (C, Hp, Wp) plane."""
    x = np.zeros((c, hp, wp), dtype=np.float32)
    patches = cols.reshape(c, kernel, kernel, h_out, w_out)
    for i in range(kernel):
        for j in range(kernel):
            x[:, i:i + stride * h_out:stride, j:j + stride * w_out:stride] += patches[:, i, j]
    return x


def _pad_chw(x: Tensor, padding: int) -> Tensor:
    if padding == 0:
        return x
    return np.pad(x, ((0, 0), (padding, padding), (padding, padding)))


def conv2d(x: Tensor, p: ConvParams) -> Tensor:
    """Cross-correlate a (C, H, W) input with p, adding bias per output channel.

    Output shape is (out_channels, H', W') with
    H' = floor((H + 2*padding - k)/stride) + 1, likewise for W'.
    """
    x = as_tensor(x)
    h_out, w_out = _check_conv_input(x, p)
    cols = _im2col(_pad_chw(x, p.padding), p.kernel, p.stride, h_out, w_out)
    w_mat = p.weights.reshape(p.out_channels, -1)
    out = w_mat @ cols + p.bias[:, None]
    return out.reshape(p.out_channels, h_out, w_out)


def conv2d_grad(x: Tensor, p: ConvParams, grad_out: Tensor):
    """Gradients of conv2d w.r.t. input, weights, and bias.

    grad_out must have the forward output's shape. Returns
    (grad_input, grad_weights, grad_bias).
    """
    x = as_tensor(x)
    grad_out = as_tensor(grad_out)
    h_out, w_out = _check_conv_input(x, p)
    if grad_out.shape != (p.out_channels, h_out, w_out):
        raise ShapeError(
            f"grad_out shape {grad_out.shape} does not match conv output "
            f"{(p.out_channels, h_out, w_out)}"
        )
    xp = _pad_chw(x, p.padding)
    cols = _im2col(xp, p.kernel, p.stride, h_out, w_out)
    go = grad_out.reshape(p.out_channels, -1)
    w_mat = p.weights.reshape(p.out_channels, -1)

    grad_bias = go.sum(axis=1)
    grad_weights = (go @ cols.T).reshape(p.weights.shape)
    grad_cols = w_mat.T @ go
    grad_xp = _col2im(grad_cols, x.shape[0], xp.shape[1], xp.shape[2],
                      p.kernel, p.stride, h_out, w_out)
    if p.padding:
        grad_x = grad_xp[:, p.padding:-p.padding, p.padding:-p.padding]
    else:
        grad_x = grad_xp
    return np.ascontiguousarray(grad_x), grad_weights, grad_bias


def relu(x: Tensor) -> Tensor:
    return np.maximum(as_tensor(x), np.float32(0.0))


def relu_grad(x: Tensor, grad_out: Tensor) -> Tensor:
    x = as_tensor(x)
    grad_out = as_tensor(grad_out)
    if x.shape != grad_out.shape:
        raise ShapeError(f"relu_grad shapes differ: input {x.shape}, upstream {grad_out.shape}")
    return np.where(x > 0, grad_out, np.float32(0.0))


def flatten(x: Tensor) -> Tensor:
    """Row-major flatten to rank 1; already-flat input is returned unchanged."""
    x = as_tensor(x)
    return x.reshape(-1)


def dense(x: Tensor, p: DenseParams) -> Tensor:
    """out[i] = sum_j weights[i, j] * x[j] + bias[i] for a rank-1 input."""
    x = as_tensor(x)
    if x.ndim != 1:
        raise ShapeError(f"dense input must be rank 1, got shape {x.shape}")
    if x.shape[0] != p.in_dim:
        raise ShapeError(f"dense input length {x.shape[0]} does not match in_dim {p.in_dim}")
    return p.weights @ x + p.bias


def dense_grad(x: Tensor, p: DenseParams, grad_out: Tensor):
    """Returns (grad_input, grad_weights, grad_bias) for dense."""
    x = as_tensor(x)
    grad_out = as_tensor(grad_out)
    if x.ndim != 1 or x.shape[0] != p.in_dim:
        raise ShapeError(f"dense input length {x.shape} does not match in_dim {p.in_dim}")
    if grad_out.shape != (p.out_dim,):
        raise ShapeError(
            f"grad_out length {grad_out.shape} does not match out_dim {p.out_dim}"
        )
    grad_input = p.weights.T @ grad_out
    grad_weights = np.outer(grad_out, x)
    grad_bias = grad_out.copy()
    return grad_input, grad_weights, grad_bias


def softmax(x: Tensor) -> Tensor:
    """Max-shifted softmax over a rank-1 tensor; outputs sum to 1."""
    x = as_tensor(x)
    if x.ndim != 1:
        raise ShapeError(f"softmax input must be rank 1, got shape {x.shape}")
    e = np.exp(x - x.max())
    return e / e.sum()


def softmax_cross_entropy(logits: Tensor, true_class: int) -> float:
    """Negative log-likelihood of true_class under softmax(logits)."""
    logits = as_tensor(logits)
    _check_class_index(logits, true_class)
    shifted = logits.astype(np.float64) - float(logits.max())
    return float(np.log(np.exp(shifted).sum()) - shifted[true_class])


def softmax_cross_entropy_grad(logits: Tensor, true_class: int) -> Tensor:
    """Gradient of the cross-entropy loss w.r.t. the logits: p - onehot."""
    logits = as_tensor(logits)
    _check_class_index(logits, true_class)
    grad = softmax(logits)
    grad[true_class] -= np.float32(1.0)
    return grad


def _check_class_index(logits: Tensor, true_class: int) -> None:
    if logits.ndim != 1:
        raise ShapeError(f"logits must be rank 1, got shape {logits.shape}")
    if not 0 <= true_class < logits.shape[0]:
        raise ValueError(
            f"class index {true_class} out of range for {logits.shape[0]} logits"
        )
