"""Independent writers/readers for the XVW1 / XVF1 / XVE1 interchange formats.

This module deliberately re-implements the formats rather than importing the
extraction package: the two codebases talk only through the files, so each
side keeps its own serializer and the tests cross-validate them.

Layout (all little-endian, float64 payloads, C order):

    XVW1: <4s magic><u16 version><u16 flags><f64 eps><u32 n_layers>
          then per layer <u8 kind><u32 in><u32 out><u16 kernel><u16 dilation>
          followed by the weight and bias payloads.
          kind: 1 = tdnn (weights (out, kernel, in)), 2 = stats pooling
          (empty payloads), 3 = linear (weights (out, in)).
          flags: bit 0 = padded convolutions, bit 1 = sample variance.
    XVF1: <4s magic><u32 frames><u32 dim> + frames*dim floats.
    XVE1: <4s magic><u32 dim> + dim floats.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

WEIGHTS_MAGIC = b"XVW1"
FEATURES_MAGIC = b"XVF1"
EMBEDDING_MAGIC = b"XVE1"
FORMAT_VERSION = 1

FLAG_PADDED = 1 << 0
FLAG_SAMPLE_VARIANCE = 1 << 1

KIND_TDNN, KIND_STATS, KIND_LINEAR = 1, 2, 3

_WEIGHTS_HEADER = struct.Struct("<4sHHdI")
_LAYER_HEADER = struct.Struct("<BIIHH")
_FEATURES_HEADER = struct.Struct("<4sII")
_EMBEDDING_HEADER = struct.Struct("<4sI")


class ExportError(Exception):
    """The source model or file cannot be mapped onto the format."""


@dataclass
class LayerRow:
    kind: int
    input_dim: int
    output_dim: int
    kernel: int = 1
    dilation: int = 1

    @property
    def weight_shape(self) -> tuple:
        if self.kind == KIND_TDNN:
            return (self.output_dim, self.kernel, self.input_dim)
        if self.kind == KIND_LINEAR:
            return (self.output_dim, self.input_dim)
        return (0,)

    @property
    def bias_shape(self) -> tuple:
        return (self.output_dim,) if self.kind != KIND_STATS else (0,)


@dataclass
class ExportGraph:
    """A fully materialized network ready to serialize."""
    rows: list
    weights: list
    biases: list
    padded: bool = False
    sample_variance: bool = False
    eps: float = 1e-5

    def flags(self) -> int:
        return (FLAG_PADDED if self.padded else 0) | \
               (FLAG_SAMPLE_VARIANCE if self.sample_variance else 0)

    def validate(self) -> "ExportGraph":
        bad = []
        for i, (row, w, b) in enumerate(zip(self.rows, self.weights, self.biases)):
            if np.asarray(w).shape != row.weight_shape:
                bad.append(f"layer {i}: weight shape {np.asarray(w).shape} "
                           f"!= {row.weight_shape}")
            if np.asarray(b).shape != row.bias_shape:
                bad.append(f"layer {i}: bias shape {np.asarray(b).shape} "
                           f"!= {row.bias_shape}")
        for a, b in zip(self.rows, self.rows[1:]):
            if b.input_dim != a.output_dim:
                bad.append(f"dimension break: {a.output_dim} -> {b.input_dim}")
        if bad:
            raise ExportError("; ".join(bad))
        return self


def write_weights(path, graph: ExportGraph) -> None:
    graph.validate()
    with open(path, "wb") as fh:
        fh.write(_WEIGHTS_HEADER.pack(WEIGHTS_MAGIC, FORMAT_VERSION,
                                      graph.flags(), float(graph.eps),
                                      len(graph.rows)))
        for row, w, b in zip(graph.rows, graph.weights, graph.biases):
            fh.write(_LAYER_HEADER.pack(row.kind, row.input_dim, row.output_dim,
                                        row.kernel, row.dilation))
            fh.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(b, dtype="<f8").tobytes())


def _read_exact(fh, n: int, what: str) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise ExportError(f"truncated file while reading {what}")
    return data


def read_weights(path) -> ExportGraph:
    with open(path, "rb") as fh:
        magic, version, flags, eps, n_layers = _WEIGHTS_HEADER.unpack(
            _read_exact(fh, _WEIGHTS_HEADER.size, "header"))
        if magic != WEIGHTS_MAGIC:
            raise ExportError(f"bad magic {magic!r}")
        if version != FORMAT_VERSION:
            raise ExportError(f"unsupported version {version}")
        rows, weights, biases = [], [], []
        for i in range(n_layers):
            kind, in_dim, out_dim, kernel, dilation = _LAYER_HEADER.unpack(
                _read_exact(fh, _LAYER_HEADER.size, f"layer {i} header"))
            row = LayerRow(kind, in_dim, out_dim, kernel, dilation)
            w = np.frombuffer(
                _read_exact(fh, 8 * int(np.prod(row.weight_shape)),
                            f"layer {i} weights"), dtype="<f8")
            b = np.frombuffer(
                _read_exact(fh, 8 * int(np.prod(row.bias_shape)),
                            f"layer {i} bias"), dtype="<f8")
            rows.append(row)
            weights.append(w.reshape(row.weight_shape))
            biases.append(b.reshape(row.bias_shape))
        if fh.read(1):
            raise ExportError("trailing bytes after last layer")
    return ExportGraph(rows, weights, biases,
                       padded=bool(flags & FLAG_PADDED),
                       sample_variance=bool(flags & FLAG_SAMPLE_VARIANCE),
                       eps=eps).validate()


def write_features(path, features) -> None:
    feats = np.asarray(features, dtype=np.float64)
    if feats.ndim != 2:
        raise ExportError(f"features must be 2-D, got {feats.shape}")
    with open(path, "wb") as fh:
        fh.write(_FEATURES_HEADER.pack(FEATURES_MAGIC, *feats.shape))
        fh.write(np.ascontiguousarray(feats, dtype="<f8").tobytes())


def write_embedding(path, values) -> None:
    vec = np.asarray(values, dtype=np.float64).reshape(-1)
    with open(path, "wb") as fh:
        fh.write(_EMBEDDING_HEADER.pack(EMBEDDING_MAGIC, vec.size))
        fh.write(np.ascontiguousarray(vec, dtype="<f8").tobytes())
