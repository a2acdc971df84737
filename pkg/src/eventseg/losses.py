"""Set-prediction loss with bipartite matching, and weighted Dice loss."""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
import torch

from . import diffcore as dc
from .assignment import solve
from .errors import ShapeError, TooManyTargets
from .events import EventSet
from .intervals import build_cost_matrix, giou_box, l1_box


@dataclass
class LossWeights:
    w_class: float = 1.0
    w_bbox: float = 5.0
    w_giou: float = 2.0
    bbox_coef: float = 10.0
    giou_coef: float = 2.0
    noclass_coef: float = 0.3

    def __post_init__(self):
        for k, v in asdict(self).items():
            if v < 0:
                raise ValueError(f"loss weight {k} must be >= 0, got {v}")


@dataclass
class LossBreakdown:
    total: torch.Tensor
    ce: torch.Tensor
    l1: torch.Tensor
    giou: torch.Tensor

    def as_floats(self) -> dict:
        return {k: float(getattr(self, k).detach()) for k in ("total", "ce", "l1", "giou")}


def match(class_logits, boxes, target: EventSet, w: LossWeights):
    """Optimal (query, target) pairs for one sample; no gradient flows."""
    if len(target) == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    with torch.no_grad():
        probs = dc.softmax(class_logits, axis=-1).numpy()
        cost = build_cost_matrix(probs, boxes.detach().numpy(), target.classes(), target.boxes(),
                                 w.w_class, w.w_bbox, w.w_giou)
    a = solve(cost)
    return a.rows, a.cols


def hungarian_loss(out, targets: Sequence[EventSet], w: LossWeights | None = None,
                   matches=None) -> LossBreakdown:
    """Matched set loss averaged over the batch.

    Per sample: cross-entropy over all N queries (matched queries target their
    event's class, the rest target the dummy class weighted by
    ``noclass_coef``, reduced as a weighted mean), plus boundary L1 and
    ``1 - GIoU`` summed over matched pairs and divided by the target count.
    ``matches`` may pin the assignment (one (rows, cols) pair per sample).
    """
    w = w or LossWeights()
    logits, boxes = out.class_logits, out.boxes
    B, N, K1 = logits.shape
    if len(targets) != B:
        raise ShapeError(f"{len(targets)} targets for a batch of {B}")
    class_w = torch.ones(K1, dtype=logits.dtype)
    class_w[-1] = w.noclass_coef
    ce_terms, l1_terms, giou_terms = [], [], []
    for b, tgt in enumerate(targets):
        M = len(tgt)
        if M > N:
            raise TooManyTargets(f"sample {b} has {M} events but only {N} queries", index=b)
        rows, cols = matches[b] if matches is not None else match(logits[b], boxes[b], tgt, w)
        rows = torch.as_tensor(rows, dtype=torch.long)
        cols = torch.as_tensor(cols, dtype=torch.long)
        tgt_cls = torch.full((N,), K1 - 1, dtype=torch.long)
        if M:
            tgt_cls[rows] = torch.as_tensor(tgt.classes())[cols]
        logp = dc.log_softmax(logits[b], axis=-1)
        nll = -logp.gather(1, tgt_cls[:, None]).squeeze(1)
        wt = class_w[tgt_cls]
        ce_terms.append(dc.sum(nll * wt) / dc.sum(wt))
        if M:
            tb = torch.as_tensor(tgt.boxes(), dtype=boxes.dtype)[cols]
            pb = boxes[b][rows]
            l1_terms.append(dc.sum(l1_box(pb, tb)) / M)
            giou_terms.append(dc.sum(1.0 - giou_box(pb, tb)) / M)
        else:
            zero = dc.sum(boxes[b]) * 0.0
            l1_terms.append(zero)
            giou_terms.append(zero)
    ce = torch.stack(ce_terms).mean()
    l1 = torch.stack(l1_terms).mean()
    giou = torch.stack(giou_terms).mean()
    total = ce + w.bbox_coef * l1 + w.giou_coef * giou
    return LossBreakdown(total, ce, l1, giou)


DICE_EPS = 1e-6


def dice_loss(pred_probs, labels, class_weights) -> torch.Tensor:
    """``1 - sum_k w_k * (2 sum_t p y + eps) / (sum_t p + sum_t y + eps)``.

    pred_probs: (B, K, T) probabilities; labels: (B, T) ints; sums run over
    batch and time. Weights are renormalized to sum to 1.
    """
    B, K, T = pred_probs.shape
    labels = torch.as_tensor(np.asarray(labels), dtype=torch.long)
    if labels.shape != (B, T):
        raise ShapeError(f"dice_loss: probs {tuple(pred_probs.shape)} vs labels {tuple(labels.shape)}")
    wts = torch.as_tensor(np.asarray(class_weights, dtype=np.float64), dtype=pred_probs.dtype)
    if wts.shape != (K,):
        raise ShapeError(f"dice_loss: {K} classes but weights of shape {tuple(wts.shape)}")
    wts = wts / wts.sum()
    onehot = torch.nn.functional.one_hot(labels, K).permute(0, 2, 1).to(pred_probs.dtype)
    inter = dc.sum(pred_probs * onehot, axis=(0, 2))
    denom = dc.sum(pred_probs, axis=(0, 2)) + dc.sum(onehot, axis=(0, 2))
    dice = (2.0 * inter + DICE_EPS) / (denom + DICE_EPS)
    return 1.0 - dc.sum(wts * dice)


def inverse_frequency_weights(labels, num_classes: int) -> np.ndarray:
    """Normalized 1/frequency class weights.

    Classes that never occur get the largest weight among present classes.
    """
    counts = np.bincount(np.asarray(labels).ravel(), minlength=num_classes)[:num_classes].astype(np.float64)
    present = counts > 0
    if not present.any():
        return np.full(num_classes, 1.0 / num_classes)
    inv = np.zeros(num_classes)
    inv[present] = counts.sum() / counts[present]
    inv[~present] = inv[present].max()
    return inv / inv.sum()
