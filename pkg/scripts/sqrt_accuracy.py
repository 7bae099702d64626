#!/usr/bin/env python3
"""Measure secure square-root error across the fixed-point domain.

Prints, per octave of [2^-15, 2^16), the worst absolute error split into the
algorithmic part (relative to sqrt(x)) and output-quantization ULPs.

    python3 scripts/sqrt_accuracy.py --points 2000 --mode det
"""

import argparse

import numpy as np

from xvsmc.engine import CountingEngine, make_engine
from xvsmc.preprocessing import MODE_DET, MODE_PROB, deal_in_memory
from xvsmc.ring import FixedPointConfig, decode_fixed, encode_fixed
from xvsmc.transport import SCHEME_PARTIES, local_mesh

MODES = {"det": MODE_DET, "prob": MODE_PROB}


def secure_sqrt(vals, scheme, cfg, mode, seed=1):
    import threading
    ring = encode_fixed(vals, cfg)
    counter = CountingEngine(scheme, cfg)
    counter.sqrt(counter.share_input(0, np.zeros_like(ring), ring.shape, cfg.f),
                 mode)
    pools = deal_in_memory(counter.budget, scheme, cfg, seed)
    sessions = local_mesh(scheme, cfg, timeout=300)
    results, errors = {}, {}

    def party(i):
        try:
            eng = make_engine(sessions[i], pools[i], cfg)
            x = eng.share_input(0, ring if i == 0 else None, ring.shape, cfg.f)
            results[i] = eng.open(eng.sqrt(x, mode))
        except BaseException as exc:  # surfaced below
            errors[i] = exc

    threads = [threading.Thread(target=party, args=(i,))
               for i in range(SCHEME_PARTIES[scheme])]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    if errors:
        raise errors[min(errors)]
    return decode_fixed(results[0], cfg)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scheme", choices=("additive2", "rss3"), default="rss3")
    ap.add_argument("--mode", choices=sorted(MODES), default="det")
    ap.add_argument("--points", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()

    cfg = FixedPointConfig()
    ulp = 2.0 ** -cfg.f
    grid = np.geomspace(2.0 ** -cfg.f, 2.0 ** 16, args.points, endpoint=False)
    grid = decode_fixed(encode_fixed(grid, cfg), cfg)
    got = secure_sqrt(grid, args.scheme, cfg, MODES[args.mode], args.seed)
    want = np.sqrt(grid)
    err = np.abs(got - want)

    print(f"{'octave':>22} {'points':>7} {'worst rel err':>14} {'worst ULP':>10}")
    edges = 2.0 ** np.arange(-15, 17)
    for lo, hi in zip(edges[:-1], edges[1:]):
        sel = (grid >= lo) & (grid < hi)
        if not sel.any():
            continue
        rel = np.max(err[sel] / want[sel])
        print(f"[2^{int(np.log2(lo)):+d}, 2^{int(np.log2(hi)):+d})".rjust(22)
              + f" {sel.sum():>7} {rel:>14.3e} {np.max(err[sel]) / ulp:>10.2f}")
    excess = np.max(err - (1e-3 * want + (0.5 if args.mode == 'det' else 1.0) * ulp))
    print(f"\nworst excess over 1e-3*sqrt(x) + quantization floor: {excess:.3e}")


if __name__ == "__main__":
    main()
