"""Reverse-mode differentiation primitives.

A thin layer over torch autograd in 64-bit floats. The tape is torch's graph;
these wrappers pin the primitive set the models use, check operand shapes up
front (``ShapeError`` names both shapes), and fix a few conventions:

* ``conv1d`` is cross-correlation; ``padding="same"`` keeps the length for odd
  and even kernels (even kernels pad one extra step on the right).
* ``dropout`` uses inverted scaling, so eval mode is the identity.
* ``max_pool1d(..., same=True)`` pads with -inf so stride 1 keeps the length.
"""
from __future__ import annotations

import torch
import torch.nn.functional as F

from .errors import NotScalar, ShapeError

DTYPE = torch.float64
Tensor = torch.Tensor


def tensor(data, requires_grad: bool = False) -> Tensor:
    return torch.tensor(data, dtype=DTYPE, requires_grad=requires_grad)


def _broadcast(a: Tensor, b: Tensor, op: str):
    try:
        torch.broadcast_shapes(a.shape, b.shape)
    except RuntimeError:
        raise ShapeError(f"{op}: shapes {tuple(a.shape)} and {tuple(b.shape)} do not broadcast") from None


def add(a: Tensor, b: Tensor) -> Tensor:
    _broadcast(a, b, "add")
    return a + b


def mul(a: Tensor, b: Tensor) -> Tensor:
    _broadcast(a, b, "mul")
    return a * b


def matmul(a: Tensor, b: Tensor) -> Tensor:
    ka = a.shape[-1]
    kb = b.shape[0] if b.dim() == 1 else b.shape[-2]
    if ka != kb:
        raise ShapeError(f"matmul: shapes {tuple(a.shape)} and {tuple(b.shape)} have mismatched inner dims")
    return torch.matmul(a, b)


def conv1d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1, padding="same") -> Tensor:
    """x: (B, C_in, T); weight: (C_out, C_in, K)."""
    if x.dim() != 3 or weight.dim() != 3 or x.shape[1] != weight.shape[1]:
        raise ShapeError(f"conv1d: input {tuple(x.shape)} incompatible with kernel {tuple(weight.shape)}")
    if padding == "same":
        k = weight.shape[-1]
        x = F.pad(x, ((k - 1) // 2, k // 2))
        padding = 0
    return F.conv1d(x, weight, bias, stride=stride, padding=padding)


def max_pool1d(x: Tensor, kernel: int, stride: int = 1, same: bool = True) -> Tensor:
    if x.dim() != 3:
        raise ShapeError(f"max_pool1d: expected (B, C, T), got {tuple(x.shape)}")
    if same:
        x = F.pad(x, ((kernel - 1) // 2, kernel // 2), value=float("-inf"))
    return F.max_pool1d(x, kernel, stride)


def relu(x: Tensor) -> Tensor:
    return torch.relu(x)


def sigmoid(x: Tensor) -> Tensor:
    return torch.sigmoid(x)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    return torch.softmax(x, dim=axis)


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    return torch.log_softmax(x, dim=axis)


def layer_norm(x: Tensor, weight: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    if weight.shape != x.shape[-1:] or bias.shape != x.shape[-1:]:
        raise ShapeError(f"layer_norm: input {tuple(x.shape)} vs affine {tuple(weight.shape)}/{tuple(bias.shape)}")
    return F.layer_norm(x, x.shape[-1:], weight, bias, eps)


def dropout(x: Tensor, p: float, train: bool) -> Tensor:
    """Inverted dropout drawing from the global torch RNG."""
    if not train or p == 0.0:
        return x
    return F.dropout(x, p, training=True)


def embedding_lookup(table: Tensor, idx) -> Tensor:
    idx = torch.as_tensor(idx, dtype=torch.long)
    if idx.numel() and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise ShapeError(f"embedding_lookup: indices out of range for table {tuple(table.shape)}")
    return table[idx]


def concat(xs, axis: int = 0) -> Tensor:
    shapes = [tuple(x.shape) for x in xs]
    ax = axis % len(shapes[0])
    ref = [s[:ax] + s[ax + 1:] for s in shapes]
    if any(r != ref[0] for r in ref):
        raise ShapeError(f"concat: shapes {shapes} disagree off axis {axis}")
    return torch.cat(list(xs), dim=axis)


def slice(x: Tensor, axis: int, start: int, stop: int) -> Tensor:  # noqa: A001
    return x.narrow(axis, start, stop - start)


def transpose(x: Tensor, a: int = -2, b: int = -1) -> Tensor:
    return x.transpose(a, b)


def mean(x: Tensor, axis=None, keepdim: bool = False) -> Tensor:
    return x.mean() if axis is None else x.mean(dim=axis, keepdim=keepdim)


def sum(x: Tensor, axis=None, keepdim: bool = False) -> Tensor:  # noqa: A001
    return x.sum() if axis is None else x.sum(dim=axis, keepdim=keepdim)


def batch_norm1d(x: Tensor, weight: Tensor, bias: Tensor, running_mean: Tensor, running_var: Tensor,
                 train: bool, momentum: float = 0.1, eps: float = 1e-5) -> Tensor:
    """x: (B, C, T); statistics over batch and time per channel."""
    if x.dim() != 3 or weight.shape != (x.shape[1],):
        raise ShapeError(f"batch_norm1d: input {tuple(x.shape)} vs affine {tuple(weight.shape)}")
    return F.batch_norm(x, running_mean, running_var, weight, bias, train, momentum, eps)


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every requires-grad leaf."""
    if loss.numel() != 1:
        raise NotScalar(f"backward needs a scalar loss, got shape {tuple(loss.shape)}")
    if loss.requires_grad:
        loss.backward()
