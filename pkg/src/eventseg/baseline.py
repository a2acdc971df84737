"""Dense per-timestep CNN baseline.

Stacked length-preserving conv blocks (conv -> batch norm -> relu -> max pool
with stride 1) with a residual shortcut around every ``residual_every``
blocks, then a pointwise conv to K class logits per timestep.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
import torch
from torch import nn

from . import diffcore as dc
from .errors import ShapeError
from .network import ConvBlock


@dataclass
class BaselineConfig:
    in_channels: int = 8
    seq_len: int = 100
    num_classes: int = 3
    filters: int = 16
    kernel: int = 32
    depth: int = 5
    residual_every: int = 3
    pool_kernel: int = 2

    def to_dict(self) -> dict:
        return asdict(self)


class DenseCNN(nn.Module):
    def __init__(self, cfg: BaselineConfig):
        super().__init__()
        self.cfg = cfg
        self.blocks = nn.ModuleList(
            ConvBlock(cfg.in_channels if i == 0 else cfg.filters, cfg.filters, cfg.kernel, cfg.pool_kernel)
            for i in range(cfg.depth)
        )
        # 1x1 projection so the first shortcut can bridge in_channels -> filters
        self.short_weight = nn.Parameter(torch.empty(cfg.filters, cfg.in_channels, 1, dtype=dc.DTYPE))
        nn.init.xavier_uniform_(self.short_weight)
        self.head_weight = nn.Parameter(torch.empty(cfg.num_classes, cfg.filters, 1, dtype=dc.DTYPE))
        self.head_bias = nn.Parameter(torch.zeros(cfg.num_classes, dtype=dc.DTYPE))
        nn.init.xavier_uniform_(self.head_weight)

    def forward(self, x):
        cfg = self.cfg
        if x.dim() != 3 or x.shape[1] != cfg.in_channels:
            raise ShapeError(f"expected input (B, {cfg.in_channels}, T), got {tuple(x.shape)}")
        shortcut = dc.conv1d(x, self.short_weight, None, padding="same")
        h = x
        for i, block in enumerate(self.blocks):
            h = block(h)
            if (i + 1) % cfg.residual_every == 0:
                h = dc.relu(dc.add(h, shortcut))
                shortcut = h
        return dc.conv1d(h, self.head_weight, self.head_bias, padding="same")


def baseline_predict(model: DenseCNN, x) -> np.ndarray:
    """Per-timestep argmax; ties resolve to the lowest class id."""
    with torch.no_grad():
        logits = model(torch.as_tensor(x, dtype=dc.DTYPE))
    return logits.numpy().argmax(axis=1).astype(np.int64)
