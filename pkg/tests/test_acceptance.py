"""Acceptance criteria. Each test prints one PASS/FAIL line, repeated in the
terminal summary. Run alone with ``pytest tests/test_acceptance.py -v``.
"""
import dataclasses
import json
import math
import time
import zlib
from itertools import permutations

import numpy as np
import pytest
import torch

from eventseg import diffcore as dc
from eventseg.assignment import solve
from eventseg.baseline import BaselineConfig, DenseCNN
from eventseg.cli import main as cli_main
from eventseg.decode import decode
from eventseg.events import dense_to_events, events_to_dense
from eventseg.intervals import giou_1d, iou_1d
from eventseg.metrics import confusion, f1_report
from eventseg.network import EventTransformer, ModelConfig, count_parameters
from eventseg.pipeline import desk_train_config, majority_report, train
from eventseg.synthdata import (TARGET_DISTRIBUTION, GenConfig, WindowRecord, biased_sampler,
                                class_time_distribution, generate_stream, make_split, read_dataset,
                                sampling_probabilities, write_dataset)

from gradcases import PRIMITIVES, check_case
from oracles import decode_brute, giou_scalar
import test_baseline
import test_losses
import test_network

_PERMS = {}


def _brute_min(c):
    """Exhaustive minimum: vectorized screen, then exact fsum over the near-optimal permutations."""
    N, M = c.shape
    if N < M:
        c, N, M = c.T, M, N
    key = (N, M)
    if key not in _PERMS:
        _PERMS[key] = np.array(list(permutations(range(N), M)), dtype=np.int64).reshape(-1, M)
    P = _PERMS[key]
    sums = c[P, np.arange(M)].sum(axis=1)
    near = np.flatnonzero(sums <= sums.min() + 1e-9 * (1 + np.abs(c).max()))
    return min(math.fsum(c[P[i, j], j] for j in range(M)) for i in near)


def test_criterion_01_matcher_oracle(criterion):
    rng = np.random.default_rng(101)
    bad, solve_time, count = 0, 0.0, 0
    for n in range(1, 7):
        for m in range(1, 7):
            for trial in range(1000):
                if trial % 2:
                    c = rng.integers(0, 4, size=(n, m)).astype(np.float64)  # many ties
                else:
                    c = rng.normal(size=(n, m))
                t0 = time.perf_counter()
                got = solve(c).total_cost
                solve_time += time.perf_counter() - t0
                count += 1
                bad += got != _brute_min(c)
    criterion(1, "Hungarian solve equals exhaustive minimum", bad == 0 and solve_time < 10,
              f"{count} matrices 1x1..6x6, {bad} mismatches, solver time {solve_time:.2f}s")


def test_criterion_02_gradient_suite(criterion):
    t0 = time.perf_counter()
    worst = {}
    for name, build in PRIMITIVES.items():
        rng = np.random.default_rng(zlib.crc32(name.encode()))
        worst[name] = max(check_case(*build(rng), rng) for _ in range(20))
    prim_ok = max(worst.values()) < 1e-4

    loss_ok = True
    try:
        # each of these runs 20 random instances
        test_losses.test_gradient_fixed_matching(np.random.default_rng(7))
        test_losses.test_dice_gradient(np.random.default_rng(8))
    except AssertionError:
        loss_ok = False

    net_ok = True
    try:
        for seed in range(20):
            test_network.test_loss_gradient_wrt_query_embedding(np.random.default_rng(seed))
            test_baseline.test_dice_gradient_through_network(np.random.default_rng(seed))
    except AssertionError:
        net_ok = False
    elapsed = time.perf_counter() - t0
    name = max(worst, key=worst.get)
    criterion(2, "gradients match finite differences", prim_ok and loss_ok and net_ok and elapsed < 120,
              f"{len(worst)} primitives, worst {name} {worst[name]:.1e}; losses {'ok' if loss_ok else 'FAIL'}; "
              f"network {'ok' if net_ok else 'FAIL'}; {elapsed:.1f}s")


def test_criterion_03_interval_properties(criterion):
    rng = np.random.default_rng(3)
    ok = abs(giou_1d((0.0, 1.0), (2.0, 3.0)) - (-1 / 3)) <= 1e-12
    ok &= abs(giou_1d((0.0, 0.6), (0.3, 0.9)) - 1 / 3) <= 1e-12
    failures = 0
    for _ in range(20000):
        a0, b0 = rng.uniform(-5, 5, 2)
        a, b = (a0, a0 + rng.exponential()), (b0, b0 + rng.exponential())
        g, i = giou_1d(a, b), iou_1d(a, b)
        s = rng.uniform(0.01, 100)
        gs = giou_1d((a[0] * s, a[1] * s), (b[0] * s, b[1] * s))
        checks = (g <= i + 1e-12, -1 < g <= 1, 0 <= i <= 1, abs(g - giou_1d(b, a)) <= 1e-12,
                  abs(g - gs) <= 1e-12, abs(g - giou_scalar(a, b)) <= 1e-12)
        failures += not all(checks)
    criterion(3, "interval math properties and worked values", ok and failures == 0,
              f"20000 random pairs, {failures} violations")


def test_criterion_04_round_trips(criterion, tmp_path):
    rng = np.random.default_rng(4)
    dense_bad = 0
    for _ in range(10_000):
        T = int(rng.integers(1, 120))
        runs = rng.integers(1, 8)
        cuts = np.sort(rng.choice(np.arange(1, T), size=min(T - 1, runs - 1), replace=False)) if T > 1 else []
        labels = np.zeros(T, dtype=np.int64)
        for c in cuts:
            labels[c:] = rng.integers(0, 3)
        dense_bad += not np.array_equal(events_to_dense(dense_to_events(labels), int(rng.integers(0, 3))), labels)
    file_bad = 0
    for k in range(100):
        C, T, n = (int(v) for v in rng.integers(1, 9, 3))
        recs = [WindowRecord(rng.normal(size=(C, T)) * 10 ** rng.uniform(-5, 5),
                             rng.integers(0, 3, T).astype(np.uint8), int(rng.integers(0, 2**32)), i)
                for i in range(n - 1)]
        p = tmp_path / f"{k}.dtr"
        write_dataset(p, recs, C, T)
        back = read_dataset(p)
        file_bad += not (back == recs and all(a.signal.tobytes() == b.signal.tobytes() for a, b in zip(back, recs)))
    criterion(4, "round-trip identities", dense_bad == 0 and file_bad == 0,
              f"10000 labelings: {dense_bad} failures; 100 record sets: {file_bad} failures")


def test_criterion_05_decode_oracle(criterion):
    rng = np.random.default_rng(5)
    bad = 0
    for _ in range(10_000):
        N, T = int(rng.integers(0, 9)), int(rng.integers(1, 51))
        probs = rng.dirichlet(np.ones(4) * 0.7, size=N)
        if N > 1 and rng.random() < 0.3:
            probs[1] = probs[0]
        boxes = np.stack([rng.integers(0, 21, N) / 20, rng.integers(0, 11, N) / 10], 1)
        maj = int(rng.integers(0, 3))
        bad += decode(probs, boxes, T, maj).tolist() != decode_brute(probs.tolist(), boxes.tolist(), T, maj)
    criterion(5, "decode equals brute-force per-timestep argmax", bad == 0, f"10000 sets, {bad} mismatches")


def test_criterion_06_metrics(criterion):
    macro = f1_report(confusion([0, 0, 1, 1], [0, 1, 1, 1], 2))["macro_f1"]
    rng = np.random.default_rng(6)
    bad = 0
    for _ in range(1000):
        K = int(rng.integers(2, 5))
        t, p = rng.integers(0, K, 50), rng.integers(0, K, 50)
        rep = f1_report(confusion(t, p, K))
        perm = rng.permutation(K)
        rp = f1_report(confusion(perm[t], perm[p], K))
        sw = f1_report(confusion(p, t, K))
        ok = abs(rp["macro_f1"] - rep["macro_f1"]) <= 1e-12
        for k in range(K):
            a, b, s = rep["per_class"][str(k)], rp["per_class"][str(perm[k])], sw["per_class"][str(k)]
            ok &= all(abs(a[f] - b[f]) <= 1e-12 for f in a)
            ok &= s["precision"] == a["recall"] and s["recall"] == a["precision"]
        bad += not ok
    criterion(6, "metrics example and symmetry properties", abs(macro - 0.7333) <= 1e-4 and bad == 0,
              f"macro F1 {macro:.6f}; 1000 random cases, {bad} violations")


def test_criterion_07_sampler(criterion):
    recs = make_split(GenConfig(seed=1), 2000, 0)
    boost = (1.0, 1.0, 5.0)
    p = sampling_probabilities(recs, boost)
    present = np.array([[np.any(r.labels == k) for k in range(3)] for r in recs])
    groups = {"blink": present[:, 2], "saccade, no blink": present[:, 1] & ~present[:, 2],
              "fixation only": ~present[:, 1] & ~present[:, 2]}
    n = 100_000
    gen = biased_sampler(recs, boost, seed=7)
    draws = np.fromiter((next(gen) for _ in range(n)), dtype=np.int64, count=n)
    worst = 0.0
    for mask in groups.values():
        q = p[mask].sum()
        z = abs((mask[draws]).mean() - q) / math.sqrt(q * (1 - q) / n)
        worst = max(worst, z)
    # per-window check on a small set where each window has a sizeable probability
    small = recs[:10]
    ps = sampling_probabilities(small, boost)
    gen = biased_sampler(small, boost, seed=8)
    counts = np.bincount([next(gen) for _ in range(n)], minlength=10) / n
    zs = np.abs(counts - ps) / np.sqrt(ps * (1 - ps) / n)
    ok = worst < 3 and zs.max() < 3
    criterion(7, "sampler frequencies within 3 sigma", ok,
              f"group max |z| {worst:.2f}, per-window max |z| {zs.max():.2f} over {n} draws")


def test_criterion_08_generator(criterion):
    _, labels = generate_stream(GenConfig(seed=0), 1_000_000)
    dist = class_time_distribution([labels])
    dev = np.abs(dist - TARGET_DISTRIBUTION).max()
    criterion(8, "generator class-time distribution within 2%", dev < 0.02,
              f"observed {np.round(dist, 4).tolist()}, max deviation {dev:.4f}")


@pytest.mark.slow
def test_criterion_09_end_to_end(criterion, tmp_path):
    gen = GenConfig()
    train_recs = make_split(dataclasses.replace(gen, seed=1), 2000, 0)
    val_recs = make_split(dataclasses.replace(gen, seed=2), 400, 1)
    majority = majority_report(val_recs, 3)["macro_f1"]

    t0 = time.perf_counter()
    torch.manual_seed(0)
    detr = EventTransformer(ModelConfig.desk())
    d_rep = train(detr, train_recs, val_recs, desk_train_config("detrtime")).report["validation"]
    t_detr = time.perf_counter() - t0

    t0 = time.perf_counter()
    torch.manual_seed(0)
    base = DenseCNN(BaselineConfig())
    b_rep = train(base, train_recs, val_recs, desk_train_config("baseline")).report["validation"]
    t_base = time.perf_counter() - t0

    f1, bf1 = d_rep["macro_f1"], b_rep["macro_f1"]
    per = ", ".join(f"{k} {v['f1']:.3f}" for k, v in d_rep["per_class"].items())
    ok = f1 >= 0.80 and f1 - majority >= 0.40 and bf1 >= 0.60 and t_detr < 1800 and t_base < 1800
    criterion(9, "end-to-end learning on the desk task", ok,
              f"DETRtime F1 {f1:.3f} ({per}) in {t_detr:.0f}s; majority {majority:.3f}; "
              f"baseline F1 {bf1:.3f} in {t_base:.0f}s")


def test_criterion_10_parameter_count(criterion):
    n = count_parameters(EventTransformer(ModelConfig()))
    rel = (n - 7_725_000) / 7_725_000
    criterion(10, "full-size config parameter count within 15%", abs(rel) <= 0.15, f"{n} parameters, {rel:+.1%}")


def test_criterion_11_determinism(criterion, tmp_path):
    conf = tmp_path / "train.json"
    conf.write_text(json.dumps({"train": {"epochs": 2, "steps_per_epoch": 5, "batch_size": 8}}))
    outputs = []
    for run in ("a", "b"):
        d = tmp_path / run
        d.mkdir()
        rc = [cli_main(["gen", "--seed", "5", "--windows", "64", "--out", str(d / "train.dtr")]),
              cli_main(["gen", "--seed", "6", "--windows", "16", "--source-id", "1", "--out", str(d / "val.dtr")])]
        for model in ("detrtime", "baseline"):
            rc.append(cli_main(["train", "--model", model, "--dataset", str(d / "train.dtr"),
                                "--val", str(d / "val.dtr"), "--config", str(conf), "--seed", "7",
                                "--out", str(d / model)]))
            rc.append(cli_main(["eval", "--checkpoint", str(d / model / "best.ckpt"),
                                "--dataset", str(d / "val.dtr"), "--out", str(d / f"{model}-eval.json")]))
        files = [d / "train.dtr", d / "val.dtr"] + [d / m / f for m in ("detrtime", "baseline")
                                                    for f in ("report.json", "best.ckpt", "last.ckpt")]
        files += [d / "detrtime-eval.json", d / "baseline-eval.json"]
        outputs.append((rc, [f.read_bytes() for f in files]))
    (rc_a, a), (rc_b, b) = outputs
    same = sum(x == y for x, y in zip(a, b))
    ok = rc_a == rc_b == [0] * len(rc_a) and same == len(a)
    criterion(11, "gen -> train -> eval is bitwise reproducible", ok, f"{same}/{len(a)} artifacts identical")
