"""Turn N raw query predictions into one dense labeling.

1. Drop queries whose most likely class is the dummy class.
2. Rasterize the survivors' boxes onto integer timesteps.
3. Where survivors overlap, the one with the highest confidence wins; ties go
   to the lower query index.
4. Uncovered timesteps get the majority class.

Confidence is the query's largest real-class probability (see
``query_confidence``).
"""
from __future__ import annotations

import numpy as np

from .events import raster_range


def query_confidence(probs: np.ndarray) -> np.ndarray:
    """(N, K+1) probabilities -> (N,) confidence scores used to rank overlaps."""
    return probs[:, :-1].max(axis=1)


def decode(probs, boxes, T: int, majority: int = 0) -> np.ndarray:
    """probs: (N, K+1) softmax outputs; boxes: (N, 2) (center, length)."""
    probs = np.asarray(probs, dtype=np.float64)
    boxes = np.asarray(boxes, dtype=np.float64)
    K = probs.shape[1] - 1
    out = np.full(T, majority, dtype=np.int64)
    best = np.full(T, -np.inf)
    keep = probs.argmax(axis=1) != K
    conf = query_confidence(probs)
    cls = probs[:, :K].argmax(axis=1)
    for q in np.flatnonzero(keep):
        lo, hi = raster_range(boxes[q, 0], boxes[q, 1], T)
        # strict > keeps the earlier (lower-index) query on ties
        win = conf[q] > best[lo:hi]
        out[lo:hi][win] = cls[q]
        best[lo:hi][win] = conf[q]
    return out


def decode_batch(probs, boxes, T: int, majority: int = 0) -> np.ndarray:
    return np.stack([decode(p, b, T, majority) for p, b in zip(probs, boxes)])
