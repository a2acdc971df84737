"""Event-query transformer for time-series instance segmentation.

Pipeline: conv backbone -> sinusoidal positions -> transformer encoder over
time -> decoder over N learned event queries -> MLP heads giving K+1 class
logits and a sigmoid (center, length) box per query.

Backbone skip rule: the output of block ``i`` is added to the input of block
``i + 2`` whenever ``i % 3 == 0`` (blocks 0->2 and 3->5 for depth 6). Block
``i`` uses ``kernel_sizes[i % len(kernel_sizes)]``. All convolutions use
same-padding and pools use stride 1, so the backbone keeps the input length.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
import torch
from torch import nn

from . import diffcore as dc
from .errors import NonFinite, ShapeError


@dataclass
class ModelConfig:
    in_channels: int = 128
    seq_len: int = 500
    num_classes: int = 3
    backbone_channels: int = 16
    backbone_depth: int = 6
    backbone_kernel_sizes: tuple = (16, 8, 4)
    pool_kernel: int = 2
    hidden_dim: int = 128
    heads: int = 8
    enc_layers: int = 6
    dec_layers: int = 6
    ffn_dim: int = 2048
    dropout: float = 0.1
    num_queries: int = 20
    aux_loss: bool = False  # also emit per-decoder-layer predictions while training

    def __post_init__(self):
        self.backbone_kernel_sizes = tuple(self.backbone_kernel_sizes)
        if self.hidden_dim % self.heads:
            raise ValueError(f"hidden_dim {self.hidden_dim} not divisible by heads {self.heads}")
        if self.hidden_dim % 2:
            raise ValueError("hidden_dim must be even for the sinusoidal encoding")

    @classmethod
    def desk(cls, **overrides) -> "ModelConfig":
        base = dict(in_channels=8, seq_len=100, hidden_dim=32, heads=4, enc_layers=2,
                    dec_layers=2, ffn_dim=64, num_queries=12, dropout=0.0)
        base.update(overrides)
        return cls(**base)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["backbone_kernel_sizes"] = list(self.backbone_kernel_sizes)
        return d


@dataclass
class ModelOutput:
    class_logits: torch.Tensor  # (B, N, K+1)
    boxes: torch.Tensor  # (B, N, 2), (center, length) in (0, 1)
    aux: tuple = ()  # earlier decoder layers' outputs, training with aux_loss only

    def take(self, idx) -> "ModelOutput":
        return ModelOutput(self.class_logits[idx], self.boxes[idx], tuple(a.take(idx) for a in self.aux))


class Linear(nn.Module):
    def __init__(self, n_in: int, n_out: int):
        super().__init__()
        self.weight = nn.Parameter(torch.empty(n_out, n_in, dtype=dc.DTYPE))
        self.bias = nn.Parameter(torch.zeros(n_out, dtype=dc.DTYPE))
        nn.init.xavier_uniform_(self.weight)

    def forward(self, x):
        return dc.add(dc.matmul(x, dc.transpose(self.weight, 0, 1)), self.bias)


class LayerNorm(nn.Module):
    def __init__(self, dim: int):
        super().__init__()
        self.weight = nn.Parameter(torch.ones(dim, dtype=dc.DTYPE))
        self.bias = nn.Parameter(torch.zeros(dim, dtype=dc.DTYPE))

    def forward(self, x):
        return dc.layer_norm(x, self.weight, self.bias)


class Dropout(nn.Module):
    def __init__(self, p: float):
        super().__init__()
        self.p = p

    def forward(self, x):
        return dc.dropout(x, self.p, self.training)


class ConvBlock(nn.Module):
    """conv1d -> batch norm -> relu -> max pool (stride 1), length preserving."""

    def __init__(self, c_in: int, c_out: int, kernel: int, pool: int = 2):
        super().__init__()
        self.weight = nn.Parameter(torch.empty(c_out, c_in, kernel, dtype=dc.DTYPE))
        self.bias = nn.Parameter(torch.zeros(c_out, dtype=dc.DTYPE))
        nn.init.kaiming_uniform_(self.weight, nonlinearity="relu")
        self.bn_weight = nn.Parameter(torch.ones(c_out, dtype=dc.DTYPE))
        self.bn_bias = nn.Parameter(torch.zeros(c_out, dtype=dc.DTYPE))
        self.register_buffer("running_mean", torch.zeros(c_out, dtype=dc.DTYPE))
        self.register_buffer("running_var", torch.ones(c_out, dtype=dc.DTYPE))
        self.pool = pool

    def forward(self, x):
        h = dc.conv1d(x, self.weight, self.bias, padding="same")
        h = dc.batch_norm1d(h, self.bn_weight, self.bn_bias, self.running_mean, self.running_var, self.training)
        return dc.max_pool1d(dc.relu(h), self.pool, stride=1, same=True)


class Backbone(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        ks = cfg.backbone_kernel_sizes
        ch = cfg.backbone_channels
        self.blocks = nn.ModuleList(
            ConvBlock(cfg.in_channels if i == 0 else ch, ch, ks[i % len(ks)], cfg.pool_kernel)
            for i in range(cfg.backbone_depth)
        )
        self.proj_weight = nn.Parameter(torch.empty(cfg.hidden_dim, ch, 1, dtype=dc.DTYPE))
        self.proj_bias = nn.Parameter(torch.zeros(cfg.hidden_dim, dtype=dc.DTYPE))
        nn.init.xavier_uniform_(self.proj_weight)

    @staticmethod
    def skip_targets(depth: int) -> dict[int, int]:
        """Map target block -> source block of each residual connection."""
        return {i + 2: i for i in range(depth) if i % 3 == 0 and i + 2 < depth}

    def forward(self, x):
        skips = self.skip_targets(len(self.blocks))
        outs = []
        h = x
        for i, block in enumerate(self.blocks):
            if i in skips:
                h = dc.add(h, outs[skips[i]])
            h = block(h)
            outs.append(h)
        return dc.conv1d(h, self.proj_weight, self.proj_bias, padding="same")


def positional_encoding(length: int, dim: int) -> torch.Tensor:
    """Sinusoidal table: pe[t, 2i] = sin(t / 10000^(2i/dim)), pe[t, 2i+1] = cos(same)."""
    if dim % 2:
        raise ValueError("dim must be even")
    t = np.arange(length, dtype=np.float64)[:, None]
    freq = 10000.0 ** (np.arange(0, dim, 2, dtype=np.float64) / dim)
    pe = np.empty((length, dim))
    pe[:, 0::2] = np.sin(t / freq)
    pe[:, 1::2] = np.cos(t / freq)
    return torch.from_numpy(pe)


class MultiheadAttention(nn.Module):
    def __init__(self, dim: int, heads: int, dropout: float):
        super().__init__()
        self.heads = heads
        self.q = Linear(dim, dim)
        self.k = Linear(dim, dim)
        self.v = Linear(dim, dim)
        self.out = Linear(dim, dim)
        self.drop = Dropout(dropout)

    def _split(self, x):
        B, L, D = x.shape
        return dc.transpose(x.reshape(B, L, self.heads, D // self.heads), 1, 2)

    def forward(self, query, key, value):
        B, Lq, D = query.shape
        q = self._split(self.q(query)) * (1.0 / math.sqrt(D // self.heads))
        k, v = self._split(self.k(key)), self._split(self.v(value))
        scores = dc.matmul(q, dc.transpose(k))
        attn = self.drop(dc.softmax(scores, axis=-1))
        ctx = dc.transpose(dc.matmul(attn, v), 1, 2).reshape(B, Lq, D)
        return self.out(ctx)


class FeedForward(nn.Module):
    def __init__(self, dim: int, ffn: int, dropout: float):
        super().__init__()
        self.l1 = Linear(dim, ffn)
        self.l2 = Linear(ffn, dim)
        self.drop = Dropout(dropout)

    def forward(self, x):
        return self.l2(self.drop(dc.relu(self.l1(x))))


class EncoderLayer(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        d = cfg.hidden_dim
        self.attn = MultiheadAttention(d, cfg.heads, cfg.dropout)
        self.ffn = FeedForward(d, cfg.ffn_dim, cfg.dropout)
        self.norm1, self.norm2 = LayerNorm(d), LayerNorm(d)
        self.drop1, self.drop2 = Dropout(cfg.dropout), Dropout(cfg.dropout)

    def forward(self, src, pos):
        qk = dc.add(src, pos)
        src = self.norm1(dc.add(src, self.drop1(self.attn(qk, qk, src))))
        return self.norm2(dc.add(src, self.drop2(self.ffn(src))))


class DecoderLayer(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        d = cfg.hidden_dim
        self.self_attn = MultiheadAttention(d, cfg.heads, cfg.dropout)
        self.cross_attn = MultiheadAttention(d, cfg.heads, cfg.dropout)
        self.ffn = FeedForward(d, cfg.ffn_dim, cfg.dropout)
        self.norm1, self.norm2, self.norm3 = LayerNorm(d), LayerNorm(d), LayerNorm(d)
        self.drop1, self.drop2, self.drop3 = Dropout(cfg.dropout), Dropout(cfg.dropout), Dropout(cfg.dropout)

    def forward(self, tgt, memory, pos, query_pos):
        qk = dc.add(tgt, query_pos)
        tgt = self.norm1(dc.add(tgt, self.drop1(self.self_attn(qk, qk, tgt))))
        cross = self.cross_attn(dc.add(tgt, query_pos), dc.add(memory, pos), memory)
        tgt = self.norm2(dc.add(tgt, self.drop2(cross)))
        return self.norm3(dc.add(tgt, self.drop3(self.ffn(tgt))))


class MLP(nn.Module):
    def __init__(self, n_in: int, hidden: int, n_out: int, layers: int = 3):
        super().__init__()
        dims = [n_in] + [hidden] * (layers - 1) + [n_out]
        self.layers = nn.ModuleList(Linear(a, b) for a, b in zip(dims[:-1], dims[1:]))

    def forward(self, x):
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < len(self.layers) - 1:
                x = dc.relu(x)
        return x


class EventTransformer(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        d = cfg.hidden_dim
        self.backbone = Backbone(cfg)
        self.encoder = nn.ModuleList(EncoderLayer(cfg) for _ in range(cfg.enc_layers))
        self.decoder = nn.ModuleList(DecoderLayer(cfg) for _ in range(cfg.dec_layers))
        self.decoder_norm = LayerNorm(d)
        self.query_embed = nn.Parameter(torch.randn(cfg.num_queries, d, dtype=dc.DTYPE))
        self.class_head = MLP(d, d, cfg.num_classes + 1)
        self.box_head = MLP(d, d, 2)
        self.register_buffer("pos", positional_encoding(cfg.seq_len, d), persistent=False)

    def forward(self, x) -> ModelOutput:
        cfg = self.cfg
        if x.dim() != 3 or x.shape[1] != cfg.in_channels or x.shape[2] != cfg.seq_len:
            raise ShapeError(f"expected input (B, {cfg.in_channels}, {cfg.seq_len}), got {tuple(x.shape)}")
        B = x.shape[0]
        memory = dc.transpose(self.backbone(x), 1, 2)  # (B, T, d)
        pos = self.pos.unsqueeze(0)
        for layer in self.encoder:
            memory = layer(memory, pos)
        query_pos = dc.embedding_lookup(self.query_embed, torch.arange(cfg.num_queries)).unsqueeze(0)
        query_pos = query_pos.expand(B, -1, -1)
        tgt = torch.zeros_like(query_pos)
        aux = []
        for i, layer in enumerate(self.decoder):
            tgt = layer(tgt, memory, pos, query_pos)
            if cfg.aux_loss and self.training and i < len(self.decoder) - 1:
                aux.append(self._heads(tgt))
        out = self._heads(tgt)
        if not (torch.isfinite(out.class_logits).all() and torch.isfinite(out.boxes).all()):
            raise NonFinite("model produced non-finite outputs")
        out.aux = tuple(aux)
        return out

    def _heads(self, tgt) -> ModelOutput:
        hs = self.decoder_norm(tgt)
        return ModelOutput(self.class_head(hs), dc.sigmoid(self.box_head(hs)))


def count_parameters(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())
