"""Map a torch model onto the interchange format and emit golden vectors."""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np
import torch
from torch import nn

from .formats import ExportError, ExportGraph, KIND_LINEAR, KIND_STATS, \
    KIND_TDNN, LayerRow, write_embedding, write_features, write_weights
from .model import CANONICAL_TDNN, EMBEDDING_DIM, INPUT_DIM, StatsPooling

CANONICAL_ROWS = [
    LayerRow(KIND_TDNN, i, o, k, d) for i, o, k, d in CANONICAL_TDNN
] + [
    LayerRow(KIND_STATS, 1500, 3000),
    LayerRow(KIND_LINEAR, 3000, EMBEDDING_DIM),
]


@dataclass
class ExportReport:
    source: str
    layers: list = field(default_factory=list)   # one dict per exported row
    padded: bool = False
    sample_variance: bool = False
    eps: float = 1e-5
    max_weight_magnitude: float = 0.0
    golden_count: int = 0

    def write(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(asdict(self), fh, indent=2, sort_keys=True)


def _detect_padding(convs) -> bool:
    flags = set()
    for conv in convs:
        pad = conv.padding[0] if isinstance(conv.padding, tuple) else conv.padding
        same = conv.dilation[0] * (conv.kernel_size[0] - 1) // 2
        if pad not in (0, same):
            raise ExportError(f"unsupported conv padding {pad} "
                              f"(kernel {conv.kernel_size[0]}, "
                              f"dilation {conv.dilation[0]})")
        if conv.kernel_size[0] > 1:  # kernel-1 convs are padding-neutral
            flags.add(pad != 0)
    if len(flags) > 1:
        raise ExportError("convolutions mix padded and unpadded conventions")
    return flags.pop() if flags else False


def model_to_graph(model: nn.Module) -> ExportGraph:
    """Walk the model and build the serializable graph.

    Works for any module whose children, in order, are the five Conv1d
    layers, one StatsPooling-like module (exposing ``eps`` and
    ``sample_variance``), and one Linear layer of canonical shapes.
    """
    convs = [m for m in model.modules() if isinstance(m, nn.Conv1d)]
    linears = [m for m in model.modules() if isinstance(m, nn.Linear)]
    pools = [m for m in model.modules()
             if hasattr(m, "eps") and hasattr(m, "sample_variance")]
    if len(convs) != 5 or len(linears) != 1 or len(pools) != 1:
        raise ExportError(
            f"expected 5 Conv1d + 1 pooling + 1 Linear, found "
            f"{len(convs)} Conv1d, {len(pools)} pooling, {len(linears)} Linear")

    rows, weights, biases, bad = [], [], [], []
    for i, (conv, want) in enumerate(zip(convs, CANONICAL_ROWS[:5])):
        row = LayerRow(KIND_TDNN, conv.in_channels, conv.out_channels,
                       conv.kernel_size[0], conv.dilation[0])
        if (row.input_dim, row.output_dim, row.kernel, row.dilation) != \
                (want.input_dim, want.output_dim, want.kernel, want.dilation):
            bad.append(f"conv {i}: {row} != canonical {want}")
        rows.append(row)
        # torch Conv1d weights are (out, in, kernel); the format wants
        # (out, kernel, in)
        weights.append(conv.weight.detach().double().numpy().transpose(0, 2, 1))
        biases.append(conv.bias.detach().double().numpy())

    pool_in = CANONICAL_ROWS[5].input_dim
    rows.append(LayerRow(KIND_STATS, pool_in, 2 * pool_in))
    weights.append(np.zeros(0))
    biases.append(np.zeros(0))

    lin = linears[0]
    row = LayerRow(KIND_LINEAR, lin.in_features, lin.out_features)
    if (row.input_dim, row.output_dim) != (CANONICAL_ROWS[6].input_dim,
                                           CANONICAL_ROWS[6].output_dim):
        bad.append(f"linear: {row} != canonical {CANONICAL_ROWS[6]}")
    rows.append(row)
    weights.append(lin.weight.detach().double().numpy())
    biases.append(lin.bias.detach().double().numpy())
    if bad:
        raise ExportError("architecture mismatch: " + "; ".join(bad))

    pool = pools[0]
    return ExportGraph(rows, weights, biases,
                       padded=_detect_padding(convs),
                       sample_variance=bool(pool.sample_variance),
                       eps=float(pool.eps)).validate()


def export_weights(model: nn.Module, out_path) -> ExportReport:
    graph = model_to_graph(model)
    write_weights(out_path, graph)
    return ExportReport(
        source=type(model).__name__,
        layers=[{"kind": r.kind, "input_dim": r.input_dim,
                 "output_dim": r.output_dim, "kernel": r.kernel,
                 "dilation": r.dilation} for r in graph.rows],
        padded=graph.padded,
        sample_variance=graph.sample_variance,
        eps=graph.eps,
        max_weight_magnitude=float(max(
            (np.max(np.abs(w), initial=0.0) for w in graph.weights + graph.biases),
            default=0.0)))


def export_golden(model: nn.Module, n: int, out_dir, frames: int = 300,
                  seed: int = 1) -> dict:
    """Write n (features, embedding) pairs computed by the source model."""
    os.makedirs(out_dir, exist_ok=True)
    rng = np.random.default_rng(seed)
    pairs = []
    model.eval()
    with torch.no_grad():
        for i in range(n):
            feats = rng.normal(0.0, 1.0, (frames, INPUT_DIM))
            emb = model(torch.from_numpy(feats)).numpy()
            fname, ename = f"golden_{i:03d}.xvf", f"golden_{i:03d}.xve"
            write_features(os.path.join(out_dir, fname), feats)
            write_embedding(os.path.join(out_dir, ename), emb)
            pairs.append({"features": fname, "embedding": ename})
    manifest = {"count": n, "frames": frames, "seed": seed, "pairs": pairs}
    with open(os.path.join(out_dir, "golden_manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return manifest
