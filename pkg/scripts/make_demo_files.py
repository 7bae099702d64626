#!/usr/bin/env python3
"""Generate a random canonical-shape weight file and a matching feature file.

Handy for exercising the CLI without a trained model:

    python3 scripts/make_demo_files.py --out-dir demo --frames 300
    xvsmc local --scheme rss3 --weights demo/model.xvw \
        --features demo/input.xvf --out demo/secure.xve
"""

import argparse
import os

import numpy as np

from xvsmc.xvector import random_graph, write_features, write_weights


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out-dir", default="demo")
    ap.add_argument("--frames", type=int, default=300)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--weight-scale", type=float, default=0.05)
    ap.add_argument("--padded", action="store_true")
    ap.add_argument("--sample-variance", action="store_true")
    ap.add_argument("--eps", type=float, default=1e-5)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    graph = random_graph(rng, weight_scale=args.weight_scale,
                         padded=args.padded, sample_variance=args.sample_variance,
                         eps=args.eps)
    feats = rng.normal(0.0, 1.0, (args.frames, graph.layers[0].input_dim))

    os.makedirs(args.out_dir, exist_ok=True)
    wpath = os.path.join(args.out_dir, "model.xvw")
    fpath = os.path.join(args.out_dir, "input.xvf")
    write_weights(wpath, graph)
    write_features(fpath, feats)
    print(f"wrote {wpath} (hash {graph.graph_hash()[:16]}) and {fpath} "
          f"({args.frames}x{feats.shape[1]})")


if __name__ == "__main__":
    main()
