"""Command-line entry point: export weights and golden vectors."""

from __future__ import annotations

import argparse
import os
import sys

from .export import export_golden, export_weights
from .formats import ExportError
from .model import XVectorModel


def _build_model(args) -> XVectorModel:
    model = XVectorModel(eps=args.eps, padded=args.padded,
                         sample_variance=args.sample_variance,
                         init_scale=args.init_scale, seed=args.seed)
    if args.state_dict:
        import torch
        model.load_state_dict(torch.load(args.state_dict, weights_only=True))
        model.double()
    return model


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(
        prog="xv-export",
        description="Export an x-vector model and golden test vectors to the "
                    "XVW1/XVF1/XVE1 interchange formats")
    ap.add_argument("--out-dir", required=True)
    ap.add_argument("--state-dict", help="torch state_dict to load; random "
                                         "initialization when omitted")
    ap.add_argument("--golden", type=int, default=0, metavar="N",
                    help="number of golden (features, embedding) pairs")
    ap.add_argument("--frames", type=int, default=300)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--init-scale", type=float, default=0.05)
    ap.add_argument("--eps", type=float, default=1e-5)
    ap.add_argument("--padded", action="store_true")
    ap.add_argument("--sample-variance", action="store_true")
    args = ap.parse_args(argv)

    try:
        model = _build_model(args)
        os.makedirs(args.out_dir, exist_ok=True)
        report = export_weights(model, os.path.join(args.out_dir, "model.xvw"))
        manifest = export_golden(model, args.golden, args.out_dir,
                                 frames=args.frames, seed=args.seed)
        report.golden_count = manifest["count"]
        report.write(os.path.join(args.out_dir, "export_report.json"))
    except (ExportError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"exported model.xvw (max |w| {report.max_weight_magnitude:.4g}, "
          f"padded={report.padded}, sample_variance={report.sample_variance}, "
          f"eps={report.eps}) and {report.golden_count} golden pairs "
          f"to {args.out_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
