"""
Differentiable operations used by the nested model

Every inference path (full grid, single head, sliced model) goes through the
``*_raw`` kernels below. They fix the floating-point summation order with an
explicit loop nest instead of handing reductions to BLAS, which is what makes
a sliced model's output bit-identical to the corresponding head of the full
model:

  * convolution: for in-channel, for kernel row, for kernel column,
    ``out += w[:, ci, kh, kw] * x_window`` (one elementwise multiply, one add)
  * global average pooling: for row, for column, ``acc += x[:, :, h, w]``; then ``acc / (H*W)``
  * cumulative heads: per channel group, ``part += f[:, ch] * W[:, ch]`` in channel
    order, then ``z = z + part``, starting from the bias

Masked positions contribute an exact (signed) zero, so skipping them changes
no value. Backward passes use tensordot/einsum; their order only has to be
deterministic, not shared with another path.
"""

import threading
from contextlib import contextmanager
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np

from ..core.errors import ConfigError, DataError, ShapeError
from .counter import OpCounter
from .tensor import Parameter, Tensor, make_node


class MaskedConvKernel:
    """Convolution weights with a static binary mask applied at every read"""

    def __init__(self, weight: Parameter, mask: np.ndarray, stride: int = 1, padding: int = 0):
        mask = np.asarray(mask)
        if mask.shape != weight.shape:
            raise ShapeError(f"Mask shape {list(mask.shape)} does not match weight shape {list(weight.shape)}")
        if weight.ndim != 4:
            raise ShapeError(f"Kernel weights must be [out, in, k, k], got {list(weight.shape)}")
        if not np.isin(mask, (0, 1)).all():
            raise ShapeError("Mask must be binary")
        if stride < 1 or padding < 0:
            raise ShapeError(f"Invalid stride={stride} / padding={padding}")
        self.weight = weight
        self._mask = mask.astype(bool)
        self._mask.setflags(write=False)
        self.stride = int(stride)
        self.padding = int(padding)

    @property
    def mask(self) -> np.ndarray:
        return self._mask

    @property
    def out_channels(self) -> int:
        return self.weight.shape[0]

    @property
    def in_channels(self) -> int:
        return self.weight.shape[1]

    @property
    def kernel_size(self) -> int:
        return self.weight.shape[2]

    @property
    def positions(self) -> int:
        """Unmasked weight positions"""
        return int(self._mask.sum())

    def effective(self) -> np.ndarray:
        return np.where(self._mask, self.weight.data, 0).astype(self.weight.dtype)


def _output_size(size: int, k: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - k) // stride + 1


def _window(xp: np.ndarray, kh: int, kw: int, ho: int, wo: int, stride: int) -> np.ndarray:
    return xp[..., kh:kh + stride * (ho - 1) + 1:stride, kw:kw + stride * (wo - 1) + 1:stride]


def conv2d_raw(
    x: np.ndarray,
    w: np.ndarray,
    stride: int = 1,
    padding: int = 0,
    positions: Optional[int] = None,
    counter: Optional[OpCounter] = None,
    layer: str = "conv",
) -> np.ndarray:
    """Cross-correlation with the documented loop nest. ``positions`` = weight positions that count as MACs"""
    if x.ndim != 4 or w.ndim != 4 or x.shape[1] != w.shape[1]:
        raise ShapeError(f"Input shape {list(x.shape)} incompatible with kernel shape {list(w.shape)}")
    batch, cin, height, width = x.shape
    cout, _, k, _ = w.shape
    ho = _output_size(height, k, stride, padding)
    wo = _output_size(width, k, stride, padding)
    if ho < 1 or wo < 1:
        raise ShapeError(f"Input shape {list(x.shape)} too small for kernel shape {list(w.shape)}")

    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x
    out = np.zeros((batch, cout, ho, wo), dtype=np.result_type(x, w))
    for ci in range(cin):
        plane = xp[:, ci]
        for kh in range(k):
            for kw in range(k):
                out += w[:, ci, kh, kw][None, :, None, None] * _window(plane, kh, kw, ho, wo, stride)[:, None]

    if counter is not None:
        counter.read_channels(layer, cin)
        counter.add_macs((w.size if positions is None else positions) * ho * wo)
    return out


def global_avg_pool_raw(x: np.ndarray) -> np.ndarray:
    if x.ndim != 4:
        raise ShapeError(f"global_avg_pool expects [B, C, H, W], got {list(x.shape)}")
    _, _, height, width = x.shape
    acc = np.zeros(x.shape[:2], dtype=x.dtype)
    for h in range(height):
        for w in range(width):
            acc += x[:, :, h, w]
    return acc / np.asarray(height * width, dtype=x.dtype)


def batch_norm_eval_raw(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray,
                        mean: np.ndarray, var: np.ndarray, eps: float) -> np.ndarray:
    scale = gamma / np.sqrt(var + np.asarray(eps, dtype=var.dtype))
    shift = beta - mean * scale
    return x * scale[None, :, None, None] + shift[None, :, None, None]


def cumulative_logits_raw(f: np.ndarray, w: np.ndarray, b: np.ndarray, bounds: Sequence[int],
                          counter: Optional[OpCounter] = None) -> np.ndarray:
    """Logits of every channel-group prefix: out[g] = b + sum over channels < bounds[g] of W[:, ch] * f[:, ch]"""
    if f.ndim != 2 or w.ndim != 2 or f.shape[1] < bounds[-1] or w.shape[1] < bounds[-1]:
        raise ShapeError(f"Features {list(f.shape)} incompatible with head weights {list(w.shape)}")
    batch = f.shape[0]
    classes = w.shape[0]
    out = np.empty((len(bounds), batch, classes), dtype=np.result_type(f, w))
    z = np.broadcast_to(b, (batch, classes)).astype(out.dtype)
    start = 0
    for g, end in enumerate(bounds):
        part = np.zeros((batch, classes), dtype=out.dtype)
        for ch in range(start, end):
            part += f[:, ch, None] * w[None, :, ch]
        z = z + part
        out[g] = z
        start = end
    if counter is not None:
        counter.add_macs(bounds[-1] * classes)
    return out


def _check_labels(labels: np.ndarray, batch: int, classes: int) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.shape != (batch,):
        raise ShapeError(f"Expected {batch} labels, got shape {list(labels.shape)}")
    if labels.size and (labels.min() < 0 or labels.max() >= classes):
        raise DataError(f"Labels must lie in [0, {classes}), got range [{labels.min()}, {labels.max()}]")
    return labels.astype(np.int64)


def _log_softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray) -> Tuple[float, np.ndarray]:
    """Batch-mean cross-entropy and its gradient with respect to the logits"""
    if logits.ndim != 2:
        raise ShapeError(f"softmax_cross_entropy expects [B, N] logits, got {list(logits.shape)}")
    batch, classes = logits.shape
    labels = _check_labels(labels, batch, classes)
    log_probs = _log_softmax(logits)
    rows = np.arange(batch)
    loss = -log_probs[rows, labels].mean()
    grad = np.exp(log_probs)
    grad[rows, labels] -= 1
    grad /= batch
    return float(loss), grad.astype(logits.dtype)


# Autograd wrappers

def conv2d_masked(x: Tensor, kernel: MaskedConvKernel, counter: Optional[OpCounter] = None,
                  layer: str = "conv") -> Tensor:
    w_eff = kernel.effective()
    stride, padding, k = kernel.stride, kernel.padding, kernel.kernel_size
    out = conv2d_raw(x.data, w_eff, stride, padding, kernel.positions, counter, layer)
    ho, wo = out.shape[2:]

    def backward_fn(dy: np.ndarray):
        xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x.data
        dw = np.zeros_like(kernel.weight.data)
        dxp = np.zeros_like(xp)
        for kh in range(k):
            for kw in range(k):
                window = _window(xp, kh, kw, ho, wo, stride)
                dw[:, :, kh, kw] = np.tensordot(dy, window, axes=([0, 2, 3], [0, 2, 3]))
                dxp[..., kh:kh + stride * (ho - 1) + 1:stride, kw:kw + stride * (wo - 1) + 1:stride] += \
                    np.einsum('oi,bohw->bihw', w_eff[:, :, kh, kw], dy)
        dw = np.where(kernel.mask, dw, 0).astype(dw.dtype)
        dx = dxp[:, :, padding:padding + x.shape[2], padding:padding + x.shape[3]] if padding else dxp
        return dx, dw

    return make_node(out, (x, kernel.weight), backward_fn)


def global_avg_pool(x: Tensor) -> Tensor:
    out = global_avg_pool_raw(x.data)
    height, width = x.shape[2:]

    def backward_fn(dy: np.ndarray):
        scale = np.asarray(height * width, dtype=dy.dtype)
        return (np.broadcast_to((dy / scale)[:, :, None, None], x.shape).copy(),)

    return make_node(out, (x,), backward_fn)


_patterns = threading.local()


@contextmanager
def relu_patterns() -> Iterator[List[np.ndarray]]:
    """Record the on/off pattern of every relu evaluated in this thread"""
    previous = getattr(_patterns, "log", None)
    log: List[np.ndarray] = []
    _patterns.log = log
    try:
        yield log
    finally:
        _patterns.log = previous


def relu(x: Tensor) -> Tensor:
    active = x.data > 0
    log = getattr(_patterns, "log", None)
    if log is not None:
        log.append(active.copy())
    out = np.where(active, x.data, 0).astype(x.dtype)
    return make_node(out, (x,), lambda dy: (np.where(active, dy, 0).astype(dy.dtype),))


def relu_raw(x: np.ndarray) -> np.ndarray:
    return np.where(x > 0, x, 0).astype(x.dtype)


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"Cannot add shapes {list(a.shape)} and {list(b.shape)}")
    return make_node(a.data + b.data, (a, b), lambda dy: (dy, dy))


def batch_norm(
    x: Tensor,
    gamma: Parameter,
    beta: Parameter,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    training: bool,
    momentum: float = 0.1,
    eps: float = 1e-5,
) -> Tensor:
    """Per-channel normalization; in training mode the running statistics are updated in place"""
    if x.ndim != 4 or x.shape[1] != gamma.shape[0]:
        raise ShapeError(f"batch_norm input {list(x.shape)} does not match {gamma.shape[0]} channels")
    if not training:
        out = batch_norm_eval_raw(x.data, gamma.data, beta.data, running_mean, running_var, eps)
        inv_std = 1 / np.sqrt(running_var + np.asarray(eps, dtype=running_var.dtype))

        def eval_backward(dy: np.ndarray):
            x_hat = (x.data - running_mean[None, :, None, None]) * inv_std[None, :, None, None]
            dx = dy * (gamma.data * inv_std)[None, :, None, None]
            return dx, (dy * x_hat).sum(axis=(0, 2, 3)), dy.sum(axis=(0, 2, 3))

        return make_node(out, (x, gamma, beta), eval_backward)

    axes = (0, 2, 3)
    count = x.shape[0] * x.shape[2] * x.shape[3]
    mean = x.data.mean(axis=axes)
    var = x.data.var(axis=axes)
    inv_std = 1 / np.sqrt(var + np.asarray(eps, dtype=var.dtype))
    x_hat = (x.data - mean[None, :, None, None]) * inv_std[None, :, None, None]
    out = gamma.data[None, :, None, None] * x_hat + beta.data[None, :, None, None]

    unbiased = var * (count / (count - 1)) if count > 1 else var
    running_mean *= 1 - momentum
    running_mean += momentum * mean
    running_var *= 1 - momentum
    running_var += momentum * unbiased

    def train_backward(dy: np.ndarray):
        dgamma = (dy * x_hat).sum(axis=axes)
        dbeta = dy.sum(axis=axes)
        dx_hat = dy * gamma.data[None, :, None, None]
        dx = (inv_std[None, :, None, None] / count) * (
            count * dx_hat
            - dx_hat.sum(axis=axes)[None, :, None, None]
            - x_hat * (dx_hat * x_hat).sum(axis=axes)[None, :, None, None]
        )
        return dx.astype(dy.dtype), dgamma, dbeta

    return make_node(out.astype(x.dtype), (x, gamma, beta), train_backward)


def linear(x: Tensor, weight: Parameter, bias: Parameter) -> Tensor:
    """x @ W.T + b for x [B, D], W [N, D]"""
    if x.ndim != 2 or weight.shape[1] != x.shape[1]:
        raise ShapeError(f"linear input {list(x.shape)} incompatible with weight {list(weight.shape)}")
    out = x.data @ weight.data.T + bias.data

    def backward_fn(dy: np.ndarray):
        return dy @ weight.data, dy.T @ x.data, dy.sum(axis=0)

    return make_node(out, (x, weight, bias), backward_fn)


def cumulative_heads(f: Tensor, weight: Parameter, bias: Parameter, bounds: Sequence[int],
                     counter: Optional[OpCounter] = None) -> Tensor:
    """Channel-conditional logits for every group prefix, shape [G, B, N]"""
    bounds = list(bounds)
    out = cumulative_logits_raw(f.data, weight.data, bias.data, bounds, counter)
    group_of_channel = np.repeat(np.arange(len(bounds)), np.diff([0] + bounds))

    def backward_fn(dz: np.ndarray):
        # prefix g feeds every logit z_{g'} with g' >= g
        dpart = np.flip(np.cumsum(np.flip(dz, axis=0), axis=0), axis=0)
        per_channel = dpart[group_of_channel]
        used = bounds[-1]
        dw = np.zeros_like(weight.data)
        dw[:, :used] = np.einsum('cbn,bc->nc', per_channel, f.data[:, :used])
        df = np.zeros_like(f.data)
        df[:, :used] = np.einsum('cbn,nc->bc', per_channel, weight.data[:, :used])
        return df, dw, dz.sum(axis=(0, 1))

    return make_node(out, (f, weight, bias), backward_fn)


def cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Scalar batch-mean cross-entropy node"""
    loss, grad = softmax_cross_entropy(logits.data, labels)
    return make_node(np.asarray(loss, dtype=logits.dtype), (logits,), lambda dy: (grad * dy,))


def head_losses(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Cross-entropy of each head in a [G, B, N] logits stack, shape [G]"""
    if logits.ndim != 3:
        raise ShapeError(f"head_losses expects [G, B, N] logits, got {list(logits.shape)}")
    _, batch, classes = logits.shape
    labels = _check_labels(labels, batch, classes)
    log_probs = _log_softmax(logits.data)
    rows = np.arange(batch)
    losses = -log_probs[:, rows, labels].mean(axis=1)

    def backward_fn(dy: np.ndarray):
        grad = np.exp(log_probs)
        grad[:, rows, labels] -= 1
        return (grad * (dy[:, None, None] / batch),)

    return make_node(losses.astype(logits.dtype), (logits,), backward_fn)


def stack(tensors: Sequence[Tensor]) -> Tensor:
    tensors = list(tensors)
    out = np.stack([t.data for t in tensors])
    return make_node(out, tuple(tensors), lambda dy: tuple(dy[i] for i in range(len(tensors))))


def weighted_mean(grid: Tensor, weights: np.ndarray) -> Tensor:
    """sum(weights * grid) / sum(weights)"""
    weights = np.asarray(weights, dtype=grid.dtype)
    if weights.shape != grid.shape:
        raise ShapeError(f"Weight shape {list(weights.shape)} does not match loss grid {list(grid.shape)}")
    total = weights.sum()
    if not total > 0:
        raise ConfigError("Loss weights must sum to a positive value")
    share = weights / total
    out = np.asarray((share * grid.data).sum(), dtype=grid.dtype)
    return make_node(out, (grid,), lambda dy: (share * dy,))
