"""Command-line entry points: dealer, party runner, local simulation,
plaintext reference, embedding comparison, and benchmarking.

Exit codes: 0 success, 2 usage/configuration problems, 3 protocol aborts,
4 preprocessing underflow.
"""

from __future__ import annotations

import argparse
import json
import statistics
import sys
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .engine import make_engine
from .errors import ConfigError, FixedPointRangeError, IncompatibleConfigError, \
    IntegrityError, PreprocessingUnderflow, ProtocolError, SchemaError, ShapeError, \
    UsageError, XvsmcError
from .preprocessing import MODE_DET, MODE_PROB, load_material, write_material
from .ring import FixedPointConfig, decode_fixed, encode_fixed
from .runner import run_local
from .transport import SCHEME_IDS, connect_all, parse_config_file
from .xvector import NetworkGraph, canonical_layers, extract_reference, \
    extract_secure, predict_budget, public_graph, quantize_weights, read_embedding, \
    read_features, read_weights, write_embedding

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_PROTOCOL = 3
EXIT_UNDERFLOW = 4

_MODES = {"det": MODE_DET, "prob": MODE_PROB}


@dataclass
class RunManifest:
    """Reproducibility record embedded (as a JSON sidecar) in run artifacts."""

    scheme: str
    config: dict
    graph_hash: str
    input_shape: list
    seed: int
    transport: str
    mode: str
    output_paths: list = field(default_factory=list)

    def write(self, path):
        with open(path, "w") as fh:
            json.dump(asdict(self), fh, indent=2, sort_keys=True)


def _fp_config(args) -> FixedPointConfig:
    return FixedPointConfig(f=args.f, m=args.m, s=args.s)


def _add_fp_args(parser):
    parser.add_argument("--f", type=int, default=15, help="fractional bits")
    parser.add_argument("--m", type=int, default=16, help="integer magnitude bits")
    parser.add_argument("--s", type=int, default=40, help="statistical security bits")


def _add_mode_arg(parser):
    parser.add_argument("--mode", choices=sorted(_MODES), default="det",
                        help="truncation mode")


def _budget_table(budget, scheme: str) -> str:
    reps = 1 if scheme == "additive2" else 2
    rows = []
    if budget.triples:
        rows.append(("triple", budget.triples, budget.triples * 3 * reps * 8))
    for (mode, shift), count in sorted(budget.trunc_pairs.items()):
        rows.append((f"trunc_{mode[:4]}(shift={shift})", count, count * 2 * reps * 8))
    if budget.bit_randoms:
        rows.append(("bits", budget.bit_randoms, budget.bit_randoms * 65 * reps * 8))
    width = max((len(r[0]) for r in rows), default=10)
    lines = [f"{'kind':<{width}}  {'count':>12}  {'bytes/party':>14}"]
    for kind, count, nbytes in rows:
        lines.append(f"{kind:<{width}}  {count:>12}  {nbytes:>14}")
    lines.append(f"{'total':<{width}}  {'':>12}  {sum(r[2] for r in rows):>14}")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# commands

def cmd_dealer(args) -> int:
    cfg = _fp_config(args)
    graph = read_weights(args.graph)
    qgraph = quantize_weights(graph, cfg)
    mode = _MODES[args.mode]
    if args.frames < graph.min_frames():
        raise ShapeError(
            f"--frames {args.frames} is below the graph minimum {graph.min_frames()}")
    budget = predict_budget(qgraph, args.frames, args.scheme, cfg, mode)
    write_material(args.out, budget, args.scheme, cfg, args.seed)
    print(f"dealt material for scheme={args.scheme} frames={args.frames} "
          f"mode={args.mode} seed={args.seed} -> {args.out}")
    print(_budget_table(budget, args.scheme))
    return EXIT_OK


def _party_graph(args, cfg):
    """The vendor reads the weight file; everyone else evaluates public shapes.

    Non-vendors take the shapes and conventions from --graph-spec (an XVW1
    file whose parameter values are ignored) or default to the canonical
    architecture with conventions passed on the command line."""
    if args.weights:
        graph = read_weights(args.weights)
        return quantize_weights(graph, cfg), graph.min_frames()
    if args.graph_spec:
        spec = read_weights(args.graph_spec)
        graph = NetworkGraph(spec.layers,
                             [np.zeros(s.weight_shape) for s in spec.layers],
                             [np.zeros(s.bias_shape) for s in spec.layers],
                             padded=spec.padded, sample_variance=spec.sample_variance,
                             eps=spec.eps)
    else:
        graph = NetworkGraph(canonical_layers(),
                             [np.zeros(s.weight_shape) for s in canonical_layers()],
                             [np.zeros(s.bias_shape) for s in canonical_layers()],
                             padded=args.padded, sample_variance=args.sample_variance,
                             eps=args.eps)
    return public_graph(quantize_weights(graph, cfg)), graph.min_frames()


def cmd_party(args) -> int:
    if args.weights and args.features:
        raise ConfigError("a party supplies --weights or --features, not both")
    pcfg = parse_config_file(args.config)
    if args.id is not None and args.id != pcfg.party_id:
        raise ConfigError(f"--id {args.id} disagrees with config party_id {pcfg.party_id}")
    cfg = pcfg.fpcfg
    mode = _MODES[args.mode]
    if args.weights and pcfg.party_id != args.vendor:
        raise ConfigError(f"--weights given but party {pcfg.party_id} is not the "
                          f"vendor (party {args.vendor})")
    if args.features and pcfg.party_id != args.client:
        raise ConfigError(f"--features given but party {pcfg.party_id} is not the "
                          f"client (party {args.client})")

    qgraph, min_frames = _party_graph(args, cfg)
    if args.features:
        feats = read_features(args.features)
        frames = feats.shape[0]
        if args.frames and args.frames != frames:
            raise ConfigError(f"--frames {args.frames} disagrees with feature file T={frames}")
        feats_ring = encode_fixed(feats, cfg)
    else:
        if not args.frames:
            raise ConfigError("--frames is required for parties without --features")
        frames = args.frames
        feats_ring = None
    if frames < min_frames:
        raise ShapeError(f"{frames} frames is below the graph minimum {min_frames}")

    # Offline: read all dealer material before any connection exists.
    material_dir = args.material or pcfg.material_dir
    if not material_dir:
        raise ConfigError("no material directory (use --material or the config file)")
    pools = load_material(material_dir, pcfg.party_id, pcfg.scheme, cfg)
    budget = predict_budget(qgraph, frames, pcfg.scheme, cfg, mode)
    pools.preflight(budget)

    # Online.
    session = connect_all(pcfg)
    try:
        result = extract_secure(make_engine(session, pools, cfg), qgraph, feats_ring,
                                frames, owner_features=args.client,
                                owner_weights=args.vendor, mode=mode,
                                open_to=args.open_to)
    finally:
        ledger = session.report_ledger()
        session.close()

    outputs = []
    if result is not None and args.out:
        write_embedding(args.out, decode_fixed(result, cfg))
        outputs.append(args.out)
    manifest = RunManifest(
        scheme=pcfg.scheme, config={"f": cfg.f, "m": cfg.m, "s": cfg.s},
        graph_hash=qgraph.source_hash, input_shape=[frames, qgraph.layers[0].input_dim],
        seed=-1, transport="tcp", mode=args.mode, output_paths=outputs)
    if args.ledger_out:
        ledger["manifest"] = asdict(manifest)
        ledger["consumption"] = pools.consumption().as_dict()
        with open(args.ledger_out, "w") as fh:
            json.dump(ledger, fh, indent=2, sort_keys=True)
    online = ledger["phases"]["online"]
    print(f"party {pcfg.party_id} done: online sent {online['bytes_sent']} bytes "
          f"in {online['rounds']} rounds")
    return EXIT_OK


def cmd_local(args) -> int:
    cfg = _fp_config(args)
    mode = _MODES[args.mode]
    graph = read_weights(args.weights)
    feats = read_features(args.features)
    pools = None
    if args.material:
        pools = [load_material(args.material, i, args.scheme, cfg)
                 for i in range(2 if args.scheme == "additive2" else 3)]
    result = run_local(graph, feats, args.scheme, cfg, mode=mode, seed=args.seed,
                       pools=pools)
    outputs = []
    if args.out:
        write_embedding(args.out, result.embedding)
        outputs.append(args.out)
        manifest = RunManifest(
            scheme=args.scheme, config={"f": cfg.f, "m": cfg.m, "s": cfg.s},
            graph_hash=quantize_weights(graph, cfg).source_hash,
            input_shape=list(np.asarray(feats).shape), seed=args.seed,
            transport="inproc", mode=args.mode, output_paths=outputs)
        manifest.write(args.out + ".manifest.json")
    if args.ledger_out:
        with open(args.ledger_out, "w") as fh:
            json.dump({"parties": result.ledgers}, fh, indent=2, sort_keys=True)
    per_party = result.online_bytes_per_party()
    print(f"offline {result.offline_seconds:.2f}s  online {result.online_seconds:.2f}s")
    print(f"online bytes sent per party: {per_party}")
    return EXIT_OK


def cmd_reference(args) -> int:
    graph = read_weights(args.weights)
    feats = read_features(args.features)
    embedding = extract_reference(graph, feats)
    write_embedding(args.out, embedding)
    print(f"reference embedding ({embedding.size} dims) -> {args.out}")
    return EXIT_OK


def cmd_compare(args) -> int:
    a = read_embedding(args.a)
    b = read_embedding(args.b)
    if a.shape != b.shape:
        raise UsageError(f"embedding dims differ: {a.size} vs {b.size}")
    mse = float(np.mean((a - b) ** 2))
    ref_power = float(np.mean(b ** 2))
    rel = mse / ref_power if ref_power else float("inf") if mse else 0.0
    print(f"mse {mse:.6e}")
    print(f"relative_mse {rel:.6e}")
    print(f"max_abs_diff {float(np.max(np.abs(a - b))):.6e}")
    return EXIT_OK


def cmd_bench(args) -> int:
    cfg = _fp_config(args)
    mode = _MODES[args.mode]
    rng = np.random.default_rng(args.seed)
    if args.weights:
        graph = read_weights(args.weights)
    else:
        from .xvector import random_graph
        graph = random_graph(rng)
    frames_list = [int(v) for v in args.frames_list.split(",")]
    print(f"{'frames':>7} {'offline_s':>18} {'online_s':>18} "
          f"{'online_bytes/party':>19} {'rounds':>7}")
    for frames in frames_list:
        feats = rng.normal(0.0, 1.0, (frames, graph.layers[0].input_dim))
        offline_times, online_times, byte_counts = [], [], []
        rounds = 0
        for rep in range(args.repeats):
            result = run_local(graph, feats, args.scheme, cfg, mode=mode,
                               seed=args.seed + rep)
            offline_times.append(result.offline_seconds)
            online_times.append(result.online_seconds)
            byte_counts.append(max(result.online_bytes_per_party()))
            rounds = result.ledgers[0]["phases"]["online"]["rounds"]
        if len(set(byte_counts)) != 1:
            raise ProtocolError(f"online bytes varied across repeats: {byte_counts}")

        def fmt(samples):
            mean = statistics.fmean(samples)
            sd = statistics.stdev(samples) if len(samples) > 1 else 0.0
            return f"{mean:9.3f}±{sd:7.3f}"

        print(f"{frames:>7} {fmt(offline_times):>18} {fmt(online_times):>18} "
              f"{byte_counts[0]:>19} {rounds:>7}")
        print(f"BENCH scheme={args.scheme} mode={args.mode} frames={frames} "
              f"repeats={args.repeats} "
              f"offline_s={statistics.fmean(offline_times):.4f} "
              f"online_s={statistics.fmean(online_times):.4f} "
              f"online_bytes={byte_counts[0]} rounds={rounds}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser wiring

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="xvsmc",
        description="Secure multiparty extraction of x-vector speaker embeddings")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("dealer", help="generate offline material files")
    p.add_argument("--scheme", choices=sorted(SCHEME_IDS), required=True)
    p.add_argument("--graph", required=True, help="XVW1 weight file (shapes drive the budget)")
    p.add_argument("--frames", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=1)
    _add_mode_arg(p)
    _add_fp_args(p)
    p.set_defaults(func=cmd_dealer)

    p = sub.add_parser("party", help="run one networked protocol party")
    p.add_argument("--id", type=int, default=None)
    p.add_argument("--config", required=True, help="party config file")
    p.add_argument("--weights", help="XVW1 file; marks this party as the vendor")
    p.add_argument("--features", help="XVF1 file; marks this party as the client")
    p.add_argument("--material", help="dealer material directory (overrides config)")
    p.add_argument("--out", help="embedding output path (XVE1)")
    p.add_argument("--ledger-out", help="write the communication ledger as JSON")
    p.add_argument("--frames", type=int, default=0)
    p.add_argument("--client", type=int, default=0, help="feature-owner party id")
    p.add_argument("--vendor", type=int, default=1, help="weight-owner party id")
    p.add_argument("--open-to", type=int, default=0)
    p.add_argument("--graph-spec",
                   help="non-vendor parties: XVW1 file giving public shapes "
                        "and conventions (parameter values are ignored)")
    p.add_argument("--padded", action="store_true",
                   help="non-vendor parties: graph uses padded convolutions")
    p.add_argument("--sample-variance", action="store_true",
                   help="non-vendor parties: pooling uses the unbiased variance")
    p.add_argument("--eps", type=float, default=1e-5,
                   help="non-vendor parties: variance regularizer")
    _add_mode_arg(p)
    p.set_defaults(func=cmd_party)

    p = sub.add_parser("local", help="run all parties in one process")
    p.add_argument("--scheme", choices=sorted(SCHEME_IDS), required=True)
    p.add_argument("--weights", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--out")
    p.add_argument("--ledger-out")
    p.add_argument("--material", help="use pre-dealt material instead of auto-dealing")
    p.add_argument("--seed", type=int, default=1)
    _add_mode_arg(p)
    _add_fp_args(p)
    p.set_defaults(func=cmd_local)

    p = sub.add_parser("reference", help="plaintext float forward pass")
    p.add_argument("--weights", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_reference)

    p = sub.add_parser("compare", help="compare two embedding files (b is the reference)")
    p.add_argument("a")
    p.add_argument("b")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("bench", help="timing and communication sweeps")
    p.add_argument("--scheme", choices=sorted(SCHEME_IDS), required=True)
    p.add_argument("--frames-list", default="100")
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--weights")
    p.add_argument("--seed", type=int, default=1)
    _add_mode_arg(p)
    _add_fp_args(p)
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except PreprocessingUnderflow as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_UNDERFLOW
    except (ProtocolError, IntegrityError, IncompatibleConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PROTOCOL
    except (UsageError, ConfigError, SchemaError, ShapeError, FixedPointRangeError,
            FileNotFoundError, IsADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except XvsmcError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
