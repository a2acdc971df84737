"""Check the synthetic generator against its class-time and duration targets.

    python scripts/generator_stats.py [--steps 1000000] [--seed 0]
"""
import argparse

import numpy as np

from eventseg.synthdata import (CLASS_NAMES, TARGET_DISTRIBUTION, GenConfig, class_time_distribution,
                                generate_stream)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--steps", type=int, default=1_000_000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    cfg = GenConfig(seed=args.seed)
    _, labels, segs = generate_stream(cfg, args.steps, return_segments=True)
    dist = class_time_distribution([labels])
    print(f"p_blink={cfg.p_blink:.4f} fixation_mean={cfg.fixation_mean:.2f}")
    print("class,target_fraction,fraction,events,mean_len,target_mean_len")
    for k, name in enumerate(CLASS_NAMES):
        d = np.array([n for c, n in segs if c == k])
        print(f"{name},{TARGET_DISTRIBUTION[k]:.4f},{dist[k]:.4f},{d.size},{d.mean():.2f},"
              f"{cfg.expected_mean_duration(k):.2f}")


if __name__ == "__main__":
    main()
