"""Training and evaluation loops for both model kinds."""
from __future__ import annotations

import copy
import hashlib
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from . import diffcore as dc
from .baseline import DenseCNN
from .checkpoint import load_checkpoint, model_kind, save_checkpoint
from .decode import decode_batch
from .errors import ConfigError, EmptyDataset, TooManyTargets
from .events import dense_to_events
from .losses import LossWeights, dice_loss, hungarian_loss, inverse_frequency_weights
from .metrics import confusion, f1_report
from .network import EventTransformer
from .synthdata import CLASS_NAMES, WindowRecord, biased_sampler

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    lr: float = 1e-4
    betas: tuple = (0.9, 0.999)
    weight_decay: float = 1e-4
    batch_size: int = 32
    epochs: int = 200
    steps_per_epoch: int | None = None  # default: one pass worth of windows
    lr_drop_after: int = 150
    lr_drop_every: int = 5
    lr_drop_factor: float = 0.1
    grad_clip: float | None = 0.1
    class_boost: tuple = (1.0, 1.0, 5.0)
    seed: int = 42
    majority: int = 0
    eval_batch: int = 64

    def __post_init__(self):
        self.betas = tuple(self.betas)
        self.class_boost = tuple(float(b) for b in self.class_boost)
        if not self.lr > 0:
            raise ConfigError("lr must be positive")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")

    def lr_at(self, epoch: int) -> float:
        """Learning rate for 0-based ``epoch``: x factor every ``lr_drop_every`` epochs past ``lr_drop_after``."""
        if epoch < self.lr_drop_after:
            return self.lr
        drops = (epoch - self.lr_drop_after) // self.lr_drop_every + 1
        return self.lr * self.lr_drop_factor ** drops

    def to_dict(self) -> dict:
        d = asdict(self)
        d["betas"] = list(self.betas)
        d["class_boost"] = list(self.class_boost)
        return d


def desk_train_config(kind: str = "detrtime", **overrides) -> TrainConfig:
    """Settings used for the small synthetic task (8 channels, 100-step windows)."""
    if kind == "detrtime":
        base = dict(lr=6e-4, batch_size=16, epochs=200, steps_per_epoch=62, lr_drop_after=185, grad_clip=0.1, seed=0)
    elif kind == "baseline":
        base = dict(lr=1e-3, batch_size=32, epochs=10, steps_per_epoch=62, lr_drop_after=10**6, grad_clip=None, seed=0)
    else:
        raise ConfigError(f"unknown model kind {kind!r}")
    base.update(overrides)
    return TrainConfig(**base)


@dataclass
class TrainResult:
    model: torch.nn.Module
    best_state: dict
    report: dict
    timing: dict = field(default_factory=dict)


def stack_signals(records: Sequence[WindowRecord]) -> torch.Tensor:
    return torch.from_numpy(np.stack([r.signal for r in records]).astype(np.float64))


def targets_for(records: Sequence[WindowRecord]):
    return [dense_to_events(r.labels) for r in records]


def predict_dense(model, records: Sequence[WindowRecord], majority: int = 0, batch: int = 64) -> np.ndarray:
    """(n, T) dense labels for either model kind, eval mode."""
    was_training = model.training
    model.eval()
    out = []
    with torch.no_grad():
        for s in range(0, len(records), batch):
            x = stack_signals(records[s:s + batch])
            if isinstance(model, EventTransformer):
                o = model(x)
                probs = dc.softmax(o.class_logits, axis=-1).numpy()
                out.append(decode_batch(probs, o.boxes.numpy(), x.shape[-1], majority))
            else:
                out.append(model(x).numpy().argmax(axis=1))
    model.train(was_training)
    if not out:
        return np.zeros((0, 0), dtype=np.int64)
    return np.concatenate(out).astype(np.int64)


def evaluate(model, records: Sequence[WindowRecord], majority: int = 0, batch: int = 64) -> dict:
    K = model.cfg.num_classes
    if records and records[0].signal.shape[0] != model.cfg.in_channels:
        raise ConfigError(f"dataset has {records[0].signal.shape[0]} channels, model expects {model.cfg.in_channels}")
    preds = predict_dense(model, records, majority, batch)
    cm = confusion([r.labels for r in records], list(preds), K)
    names = list(CLASS_NAMES[:K]) if K <= len(CLASS_NAMES) else None
    return f1_report(cm, names)


def evaluate_checkpoint(path, records: Sequence[WindowRecord], majority: int = 0) -> dict:
    model, _ = load_checkpoint(path)
    if records and records[0].signal.shape[1] != getattr(model.cfg, "seq_len", records[0].signal.shape[1]) \
            and isinstance(model, EventTransformer):
        raise ConfigError("dataset window length does not match the checkpoint's seq_len")
    return evaluate(model, records, majority)


def majority_report(records: Sequence[WindowRecord], num_classes: int, majority: int = 0) -> dict:
    """Scores of the constant majority-class predictor."""
    truths = [r.labels for r in records]
    cm = confusion(truths, [np.full_like(t, majority) for t in truths], num_classes)
    return f1_report(cm, list(CLASS_NAMES[:num_classes]))


def run_id(payload: dict) -> str:
    return hashlib.sha1(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:12]


def _check_targets(model, records):
    if isinstance(model, EventTransformer):
        N = model.cfg.num_queries
        for i, t in enumerate(targets_for(records)):
            if len(t) > N:
                raise TooManyTargets(f"window {i} has {len(t)} events but the model has {N} queries", index=i)


def train(model, train_records: Sequence[WindowRecord], val_records: Sequence[WindowRecord],
          cfg: TrainConfig, weights: LossWeights | None = None, out_dir=None,
          dataset_info: dict | None = None) -> TrainResult:
    """Fit ``model`` with biased sampling; keep the best validation macro-F1 weights.

    Deterministic for a fixed seed on one thread. When ``out_dir`` is given,
    writes ``best.ckpt``, ``last.ckpt``, ``report.json`` and ``timing.json``.
    """
    if not train_records:
        raise EmptyDataset("training set is empty")
    torch.set_num_threads(1)
    torch.manual_seed(cfg.seed)
    weights = weights or LossWeights()
    kind = model_kind(model)
    _check_targets(model, train_records)

    signals = stack_signals(train_records)
    events = targets_for(train_records) if kind == "detrtime" else None
    labels = np.stack([r.labels for r in train_records]).astype(np.int64)
    dice_w = inverse_frequency_weights(labels, model.cfg.num_classes) if kind == "baseline" else None
    sampler = biased_sampler(train_records, cfg.class_boost, cfg.seed)
    steps = cfg.steps_per_epoch or max(1, len(train_records) // cfg.batch_size)

    opt = torch.optim.AdamW(model.parameters(), lr=cfg.lr, betas=cfg.betas, weight_decay=cfg.weight_decay)
    payload = {"kind": kind, "model": model.cfg.to_dict(), "train": cfg.to_dict(),
               "loss_weights": asdict(weights), "dataset": dataset_info or {}}
    report = {"run_id": run_id(payload), "config": payload, "epochs": []}
    best_f1, best_state, best_epoch = -1.0, None, -1
    step = 0
    t0 = time.perf_counter()
    epoch_times = []

    for epoch in range(cfg.epochs):
        te = time.perf_counter()
        lr = cfg.lr_at(epoch)
        for g in opt.param_groups:
            g["lr"] = lr
        model.train()
        sums = {}
        for _ in range(steps):
            idx = [next(sampler) for _ in range(cfg.batch_size)]
            x = signals[idx]
            if kind == "detrtime":
                out = model(x)
                batch_events = [events[i] for i in idx]
                parts = hungarian_loss(out, batch_events, weights)
                loss = parts.total
                vals = parts.as_floats()
                for a in out.aux:
                    loss = loss + hungarian_loss(a, batch_events, weights).total
                if out.aux:
                    vals["total_with_aux"] = float(loss.detach())
            else:
                probs = dc.softmax(model(x), axis=1)
                loss = dice_loss(probs, labels[idx], dice_w)
                vals = {"total": float(loss.detach()), "dice": float(loss.detach())}
            opt.zero_grad(set_to_none=True)
            dc.backward(loss)
            if cfg.grad_clip:
                torch.nn.utils.clip_grad_norm_(model.parameters(), cfg.grad_clip)
            opt.step()
            step += 1
            for k, v in vals.items():
                sums[k] = sums.get(k, 0.0) + v
        entry = {"epoch": epoch, "lr": lr, "step": step, "loss": {k: v / steps for k, v in sums.items()}}
        if val_records:
            rep = evaluate(model, val_records, cfg.majority, cfg.eval_batch)
            entry["val_macro_f1"] = rep["macro_f1"]
            if rep["macro_f1"] > best_f1:
                best_f1, best_epoch = rep["macro_f1"], epoch
                best_state = copy.deepcopy(model.state_dict())
        report["epochs"].append(entry)
        epoch_times.append(time.perf_counter() - te)
        log.info("epoch %d lr %.2e loss %.4f val F1 %s", epoch, lr, entry["loss"]["total"],
                 entry.get("val_macro_f1"))

    last_state = copy.deepcopy(model.state_dict())
    if best_state is None:
        best_state, best_epoch = last_state, cfg.epochs - 1
    model.load_state_dict(best_state)
    report["best_epoch"] = best_epoch
    report["steps"] = step
    if val_records:
        report["validation"] = evaluate(model, val_records, cfg.majority, cfg.eval_batch)
    timing = {"wall_clock_s": time.perf_counter() - t0, "epoch_s": epoch_times}

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        save_checkpoint(out / "best.ckpt", model, step, {"epoch": best_epoch})
        model.load_state_dict(last_state)
        save_checkpoint(out / "last.ckpt", model, step, {"epoch": cfg.epochs - 1})
        model.load_state_dict(best_state)
        (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
        (out / "timing.json").write_text(json.dumps(timing, indent=2) + "\n")
    return TrainResult(model, best_state, report, timing)
