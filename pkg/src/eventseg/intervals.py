"""1-D box algebra on normalized (center, length) boxes.

Functions accept Python floats, numpy arrays or torch tensors and broadcast
elementwise, so the same code serves the matcher (no gradient) and the loss
(differentiable).

The 1-D generalized IoU used here is the direct analogue of the 2-D one::

    giou(a, b) = iou(a, b) - (|hull| - |a U b|) / |hull|

where ``hull`` is the smallest interval containing both. Zero-measure unions
give ``iou = 0`` and zero-measure hulls give ``giou = 0``.
"""
from __future__ import annotations

import numpy as np
import torch

from .errors import ShapeError


def _lib(*xs):
    return torch if any(isinstance(x, torch.Tensor) for x in xs) else np


def _where_positive(den, num, lib):
    """num / den where den > 0, else 0, without NaN gradients."""
    pos = den > 0
    safe = lib.where(pos, den, lib.ones_like(den) if lib is torch else 1.0)
    return lib.where(pos, num / safe, lib.zeros_like(num) if lib is torch else 0.0)


def cl_to_interval(center, length):
    """(center, length) -> (start, end), each clamped to [0, 1]."""
    lib = _lib(center, length)
    start = lib.clip(center - length / 2, 0.0, 1.0)
    end = lib.clip(center + length / 2, 0.0, 1.0)
    return start, end


def l1_box(a, b):
    """L1 distance between boundaries of two (center, length) boxes.

    ``a`` and ``b`` have a trailing axis of size 2.
    """
    sa, ea = cl_to_interval(a[..., 0], a[..., 1])
    sb, eb = cl_to_interval(b[..., 0], b[..., 1])
    lib = _lib(sa, sb)
    return lib.abs(sa - sb) + lib.abs(ea - eb)


def _measures(a_start, a_end, b_start, b_end):
    lib = _lib(a_start, a_end, b_start, b_end)
    inter = lib.clip(lib.minimum(a_end, b_end) - lib.maximum(a_start, b_start), 0.0, None)
    union = (a_end - a_start) + (b_end - b_start) - inter
    hull = lib.maximum(a_end, b_end) - lib.minimum(a_start, b_start)
    return lib, inter, union, hull


def iou_1d(a, b):
    """IoU of two intervals given as (start, end) pairs."""
    lib, inter, union, _ = _measures(a[0], a[1], b[0], b[1])
    return _where_positive(union, inter, lib)


def giou_1d(a, b):
    """Generalized IoU of two intervals given as (start, end) pairs."""
    lib, inter, union, hull = _measures(a[0], a[1], b[0], b[1])
    iou = _where_positive(union, inter, lib)
    return iou - _where_positive(hull, hull - union, lib)


def giou_box(a, b):
    """GIoU between (center, length) boxes with a trailing axis of size 2."""
    return giou_1d(cl_to_interval(a[..., 0], a[..., 1]), cl_to_interval(b[..., 0], b[..., 1]))


def build_cost_matrix(pred_probs, pred_boxes, tgt_classes, tgt_boxes,
                      w_class=1.0, w_bbox=5.0, w_giou=2.0) -> np.ndarray:
    """Matching cost between N predictions and M targets.

    ``cost[i, j] = -w_class * p_i[class_j] + w_bbox * l1(box_i, box_j) - w_giou * giou(box_i, box_j)``
    """
    pred_probs = np.asarray(pred_probs, dtype=np.float64)
    pred_boxes = np.asarray(pred_boxes, dtype=np.float64)
    tgt_classes = np.asarray(tgt_classes, dtype=np.int64)
    tgt_boxes = np.asarray(tgt_boxes, dtype=np.float64).reshape(-1, 2)
    if pred_probs.ndim != 2 or pred_boxes.shape != (pred_probs.shape[0], 2):
        raise ShapeError(f"prediction shapes disagree: probs {pred_probs.shape}, boxes {pred_boxes.shape}")
    if tgt_classes.shape != (tgt_boxes.shape[0],):
        raise ShapeError(f"target shapes disagree: classes {tgt_classes.shape}, boxes {tgt_boxes.shape}")
    pb = pred_boxes[:, None, :]
    tb = tgt_boxes[None, :, :]
    cost_class = -pred_probs[:, tgt_classes]
    return w_class * cost_class + w_bbox * l1_box(pb, tb) - w_giou * giou_box(pb, tb)
