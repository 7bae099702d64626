#!/usr/bin/env python3
"""Sweep frame counts and report timing, traffic, and fidelity per scheme.

    python3 scripts/benchmark_extraction.py --scheme rss3 \
        --frames 100,200,300 --repeats 3 --mode prob
"""

import argparse

import numpy as np

from xvsmc.preprocessing import MODE_DET, MODE_PROB
from xvsmc.ring import FixedPointConfig
from xvsmc.runner import run_local
from xvsmc.xvector import extract_reference, random_graph

MODES = {"det": MODE_DET, "prob": MODE_PROB}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scheme", choices=("additive2", "rss3"), default="rss3")
    ap.add_argument("--frames", default="100,200,300")
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--mode", choices=sorted(MODES), default="prob")
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()

    cfg = FixedPointConfig()
    rng = np.random.default_rng(args.seed)
    graph = random_graph(rng)

    print(f"{'frames':>7} {'offline_s':>10} {'online_s':>9} "
          f"{'rounds':>7} {'MB/party (max)':>15} {'rel_mse':>10}")
    for frames in (int(v) for v in args.frames.split(",")):
        feats = rng.normal(0.0, 1.0, (frames, graph.layers[0].input_dim))
        ref = extract_reference(graph, feats)
        off, on, mbs, rel = [], [], [], []
        rounds = 0
        for rep in range(args.repeats):
            res = run_local(graph, feats, args.scheme, cfg,
                            mode=MODES[args.mode], seed=args.seed + rep,
                            timeout=600)
            off.append(res.offline_seconds)
            on.append(res.online_seconds)
            mbs.append(max(res.online_bytes_per_party()) / 1e6)
            rel.append(np.mean((res.embedding - ref) ** 2) / np.mean(ref ** 2))
            rounds = res.ledgers[0]["phases"]["online"]["rounds"]
        print(f"{frames:>7} {np.mean(off):>10.2f} {np.mean(on):>9.2f} "
              f"{rounds:>7} {max(mbs):>15.1f} {max(rel):>10.2e}")


if __name__ == "__main__":
    main()
