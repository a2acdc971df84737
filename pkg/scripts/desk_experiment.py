"""Train DETRtime and the dense CNN on the synthetic desk task and compare.

    python scripts/desk_experiment.py --out runs/desk [--epochs N] [--train 2000] [--val 400]

Writes checkpoints and reports for both models under --out, plus
summary.json with macro F1 against the majority-class predictor.
"""
import argparse
import dataclasses
import json
import logging
import time
from pathlib import Path

import torch

from eventseg.baseline import BaselineConfig, DenseCNN
from eventseg.network import EventTransformer, ModelConfig, count_parameters
from eventseg.pipeline import desk_train_config, majority_report, train
from eventseg.synthdata import GenConfig, make_split, write_dataset


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", default="runs/desk")
    ap.add_argument("--train", type=int, default=2000)
    ap.add_argument("--val", type=int, default=400)
    ap.add_argument("--epochs", type=int, help="override the DETRtime epoch count")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    torch.set_num_threads(1)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    gen = GenConfig()
    tr = make_split(dataclasses.replace(gen, seed=1), args.train, 0)
    va = make_split(dataclasses.replace(gen, seed=2), args.val, 1)
    write_dataset(out / "train.dtr", tr)
    write_dataset(out / "val.dtr", va)
    summary = {"majority_macro_f1": majority_report(va, 3)["macro_f1"]}

    runs = {
        "detrtime": (lambda: EventTransformer(ModelConfig.desk()),
                     desk_train_config("detrtime", **({"epochs": args.epochs} if args.epochs else {}))),
        "baseline": (lambda: DenseCNN(BaselineConfig()), desk_train_config("baseline")),
    }
    for name, (make, cfg) in runs.items():
        torch.manual_seed(args.seed)
        model = make()
        t0 = time.perf_counter()
        res = train(model, tr, va, dataclasses.replace(cfg, seed=args.seed), out_dir=out / name)
        summary[name] = {
            "parameters": count_parameters(model),
            "seconds": round(time.perf_counter() - t0, 1),
            "best_epoch": res.report["best_epoch"],
            "macro_f1": res.report["validation"]["macro_f1"],
            "per_class_f1": {k: v["f1"] for k, v in res.report["validation"]["per_class"].items()},
        }
        logging.info("%s: %s", name, summary[name])
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(json.dumps(summary, indent=2))


if __name__ == "__main__":
    main()
