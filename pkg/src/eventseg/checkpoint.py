"""Checkpoint container shared by both model kinds.

An ``.npz`` archive holding every named parameter and buffer (batch-norm
running stats included) as float64 arrays under ``state/<name>``, plus a
``__meta__`` entry with a JSON header: format tag, version, model kind,
model config and the training-step counter.
"""
from __future__ import annotations

import json
import zipfile

import numpy as np
import torch

from .baseline import BaselineConfig, DenseCNN
from .errors import ConfigError, FormatError
from .network import EventTransformer, ModelConfig

FORMAT = "eventseg-checkpoint"
VERSION = 1
KINDS = {"detrtime": (ModelConfig, EventTransformer), "baseline": (BaselineConfig, DenseCNN)}


def model_kind(model) -> str:
    for kind, (_, cls) in KINDS.items():
        if isinstance(model, cls):
            return kind
    raise TypeError(f"unknown model type {type(model).__name__}")


def build_model(kind: str, config: dict):
    if kind not in KINDS:
        raise ConfigError(f"unknown model kind {kind!r}; expected one of {sorted(KINDS)}")
    cfg_cls, model_cls = KINDS[kind]
    try:
        return model_cls(cfg_cls(**config))
    except TypeError as e:
        raise ConfigError(f"bad {kind} config: {e}") from None


def save_checkpoint(path, model, step: int = 0, extra: dict | None = None):
    meta = {
        "format": FORMAT,
        "version": VERSION,
        "kind": model_kind(model),
        "config": model.cfg.to_dict(),
        "step": int(step),
        "extra": extra or {},
    }
    arrays = {f"state/{k}": v.detach().numpy().astype(np.float64)
              for k, v in model.state_dict().items()}
    arrays["__meta__"] = np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8)
    with open(path, "wb") as f:
        np.savez(f, **arrays)


def read_checkpoint(path):
    """(meta dict, state dict of float64 tensors)."""
    try:
        with np.load(path, allow_pickle=False) as z:
            meta = json.loads(z["__meta__"].tobytes().decode())
            state = {k[len("state/"):]: torch.from_numpy(z[k].copy()) for k in z.files if k.startswith("state/")}
    except (zipfile.BadZipFile, KeyError, ValueError, EOFError) as e:
        raise FormatError(f"{path}: not a valid checkpoint ({e})") from None
    if meta.get("format") != FORMAT or meta.get("version") != VERSION:
        raise FormatError(f"{path}: unsupported checkpoint format {meta.get('format')!r} v{meta.get('version')}")
    return meta, state


def load_checkpoint(path, expect_kind: str | None = None):
    """Rebuild the model stored at ``path``; returns (model, meta)."""
    meta, state = read_checkpoint(path)
    if expect_kind is not None and meta["kind"] != expect_kind:
        raise ConfigError(f"{path} holds a {meta['kind']} model, expected {expect_kind}")
    model = build_model(meta["kind"], meta["config"])
    try:
        model.load_state_dict(state)
    except RuntimeError as e:
        raise ConfigError(f"{path}: parameters do not match the stored config: {e}") from None
    model.eval()
    return model, meta
