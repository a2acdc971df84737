"""Command-line entry point: ``eventseg {gen,train,eval,infer,inspect}``.

Exit codes: 0 success, 1 usage error, 2 data or format error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np
import torch

from .checkpoint import build_model, load_checkpoint
from .errors import EventSegError
from .losses import LossWeights
from .metrics import report_json
from .pipeline import TrainConfig, desk_train_config, majority_report, predict_dense, train, evaluate
from .synthdata import (CLASS_NAMES, GenConfig, class_time_distribution, event_durations, make_split,
                        max_events_per_window, read_dataset, write_dataset)
from .baseline import BaselineConfig
from .network import ModelConfig

log = logging.getLogger("eventseg")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise EventSegError(f"{path}: invalid JSON ({e})") from None


def _digest(path) -> str:
    return hashlib.sha1(Path(path).read_bytes()).hexdigest()


def _load_records(path):
    recs = read_dataset(path)
    if not recs:
        log.warning("%s holds no records", path)
    return recs


def cmd_gen(args) -> int:
    cfg = GenConfig.from_dict(_read_json(args.config)) if args.config else GenConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    recs = make_split(cfg, args.windows, args.source_id)
    write_dataset(args.out, recs, cfg.channels, cfg.window)
    print(f"wrote {len(recs)} windows ({cfg.channels}x{cfg.window}) to {args.out}")
    return 0


def _model_for(kind: str, overrides: dict, records):
    C, T = records[0].signal.shape
    if kind == "detrtime":
        cfg = ModelConfig.desk(in_channels=C, seq_len=T, **overrides)
        return build_model(kind, cfg.to_dict())
    return build_model(kind, BaselineConfig(**{"in_channels": C, "seq_len": T, **overrides}).to_dict())


def cmd_train(args) -> int:
    conf = _read_json(args.config) if args.config else {}
    unknown = set(conf) - {"model", "train", "loss"}
    if unknown:
        raise EventSegError(f"unknown config sections: {sorted(unknown)}")
    train_recs = _load_records(args.dataset)
    val_recs = _load_records(args.val) if args.val else []
    if not train_recs:
        raise EventSegError(f"{args.dataset}: training set is empty")
    tc = desk_train_config(args.model).to_dict()
    tc.update(conf.get("train", {}))
    if args.seed is not None:
        tc["seed"] = args.seed
    if args.epochs is not None:
        tc["epochs"] = args.epochs
    try:
        cfg = TrainConfig(**tc)
        weights = LossWeights(**conf.get("loss", {}))
    except TypeError as e:
        raise EventSegError(f"bad config: {e}") from None
    torch.manual_seed(cfg.seed)
    try:
        model = _model_for(args.model, conf.get("model", {}), train_recs)
    except (TypeError, ValueError) as e:
        raise EventSegError(f"bad model config: {e}") from None
    # content digests rather than paths, so reruns elsewhere produce identical reports
    info = {"train_sha1": _digest(args.dataset), "val_sha1": _digest(args.val) if args.val else None,
            "train_windows": len(train_recs), "val_windows": len(val_recs)}
    res = train(model, train_recs, val_recs, cfg, weights, args.out, info)
    summary = {"run_id": res.report["run_id"], "best_epoch": res.report["best_epoch"]}
    if "validation" in res.report:
        summary["val_macro_f1"] = res.report["validation"]["macro_f1"]
    print(json.dumps(summary, sort_keys=True))
    return 0


def cmd_eval(args) -> int:
    model, _ = load_checkpoint(args.checkpoint)
    recs = _load_records(args.dataset)
    rep = evaluate(model, recs, args.majority)
    rep["majority_baseline_macro_f1"] = majority_report(recs, model.cfg.num_classes, args.majority)["macro_f1"]
    text = report_json(rep)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return 0


def cmd_infer(args) -> int:
    model, _ = load_checkpoint(args.checkpoint)
    recs = _load_records(args.dataset)
    stop = len(recs) if args.stop is None else min(args.stop, len(recs))
    if not 0 <= args.start <= stop:
        raise UsageError(f"window range [{args.start}, {stop}) is empty or invalid")
    sel = recs[args.start:stop]
    preds = predict_dense(model, sel, args.majority)
    for r, p in zip(sel, preds):
        print(f"{r.source_id}\t{r.window_index}\t{''.join(str(int(v)) for v in p)}")
    return 0


def cmd_inspect(args) -> int:
    recs = _load_records(args.dataset)
    K = args.classes
    names = list(CLASS_NAMES[:K]) if K <= len(CLASS_NAMES) else [str(k) for k in range(K)]
    if not recs:
        print("windows,0")
        return 0
    C, T = recs[0].signal.shape
    dist = class_time_distribution(recs, K)
    durs = event_durations(recs, K)
    print(f"windows,{len(recs)}")
    print(f"channels,{C}")
    print(f"window_length,{T}")
    print(f"max_events_per_window,{max_events_per_window(recs)}")
    print("class,fraction,events,mean_length,std_length")
    for k, name in enumerate(names):
        d = np.asarray(durs[k], dtype=np.float64)
        mean = f"{d.mean():.3f}" if d.size else "nan"
        std = f"{d.std():.3f}" if d.size else "nan"
        print(f"{name},{dist[k]:.6f},{d.size},{mean},{std}")
    edges = np.arange(0, T + args.bin, args.bin)
    print("class,bin_start,bin_end,count")
    for k, name in enumerate(names):
        counts, _ = np.histogram(durs[k], bins=edges)
        for lo, hi, c in zip(edges[:-1], edges[1:], counts):
            if c:
                print(f"{name},{int(lo)},{int(hi)},{int(c)}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="eventseg", description="Event-query segmentation of multichannel time series.")
    p.add_argument("-v", "--verbose", action="store_true", help="log training progress")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="write a synthetic dataset")
    g.add_argument("--config", help="generator config (JSON)")
    g.add_argument("--seed", type=int)
    g.add_argument("--windows", type=int, default=2000)
    g.add_argument("--source-id", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    t = sub.add_parser("train", help="train a model")
    t.add_argument("--model", choices=["detrtime", "baseline"], default="detrtime")
    t.add_argument("--dataset", required=True, help="training set (DTR1)")
    t.add_argument("--val", help="validation set (DTR1)")
    t.add_argument("--config", help='JSON with optional "model", "train" and "loss" sections')
    t.add_argument("--seed", type=int)
    t.add_argument("--epochs", type=int)
    t.add_argument("--out", required=True, help="output directory")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="score a checkpoint on a dataset")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--dataset", required=True)
    e.add_argument("--majority", type=int, default=0)
    e.add_argument("--out", help="also write the report here")
    e.set_defaults(func=cmd_eval)

    i = sub.add_parser("infer", help="print decoded labels for a window range")
    i.add_argument("--checkpoint", required=True)
    i.add_argument("--dataset", required=True)
    i.add_argument("--start", type=int, default=0)
    i.add_argument("--stop", type=int)
    i.add_argument("--majority", type=int, default=0)
    i.set_defaults(func=cmd_infer)

    s = sub.add_parser("inspect", help="dataset statistics as CSV")
    s.add_argument("--dataset", required=True)
    s.add_argument("--classes", type=int, default=3)
    s.add_argument("--bin", type=int, default=5, help="duration histogram bin width")
    s.set_defaults(func=cmd_inspect)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as e:
        print(e, file=sys.stderr)
        return 1
    except SystemExit as e:  # --help
        return int(e.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(message)s")
    torch.set_num_threads(1)
    try:
        return args.func(args)
    except UsageError as e:
        print(f"eventseg: error: {e}", file=sys.stderr)
        return 1
    except (EventSegError, OSError) as e:
        print(f"eventseg: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
