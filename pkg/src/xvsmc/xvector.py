"""The x-vector extractor graph: dilated TDNN layers, statistics pooling,
and the embedding linear layer.

The same graph is evaluated two ways:

* ``extract_reference`` -- double-precision plaintext forward pass, the
  oracle for every fidelity measurement;
* ``extract_secure`` -- the engine-backed secure evaluation over shared
  fixed-point values, run by each party.

The module also owns the interchange file formats: weights ("XVW1"),
feature matrices ("XVF1") and embeddings ("XVE1"), all little-endian with
float64 payloads.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field

import numpy as np

from .engine import EngineBase, SecretArray
from .errors import FixedPointRangeError, SchemaError, ShapeError
from .preprocessing import MODE_DET
from .ring import RING_DTYPE, FixedPointConfig, encode_fixed

LAYER_TDNN = "tdnn"
LAYER_STATS = "stats_pool"
LAYER_LINEAR = "linear"

_KIND_CODES = {LAYER_TDNN: 1, LAYER_STATS: 2, LAYER_LINEAR: 3}
_KIND_NAMES = {v: k for k, v in _KIND_CODES.items()}

WEIGHTS_MAGIC = b"XVW1"
FEATURES_MAGIC = b"XVF1"
EMBEDDING_MAGIC = b"XVE1"
FORMAT_VERSION = 1

FLAG_PADDED = 1 << 0           # same-length zero-padded convolutions
FLAG_SAMPLE_VARIANCE = 1 << 1  # pooling uses the unbiased (n-1) variance

_WEIGHTS_HEADER = struct.Struct("<4sHHdI")   # magic, version, flags, eps, n_layers
_LAYER_HEADER = struct.Struct("<BIIHH")      # kind, in, out, kernel, dilation
_FEATURES_HEADER = struct.Struct("<4sII")    # magic, T, dim
_EMBEDDING_HEADER = struct.Struct("<4sI")    # magic, dim

DEFAULT_EPS = 1e-5
INPUT_DIM = 24
EMBEDDING_DIM = 512


@dataclass(frozen=True)
class LayerSpec:
    """Shape and wiring of one layer of the extractor."""

    kind: str
    input_dim: int
    output_dim: int
    kernel: int = 1
    dilation: int = 1

    def __post_init__(self):
        if self.kind not in _KIND_CODES:
            raise SchemaError(f"unknown layer kind {self.kind!r}")
        if min(self.input_dim, self.output_dim, self.kernel, self.dilation) < 1:
            raise SchemaError(f"non-positive dimension in layer spec {self}")
        if self.kind != LAYER_TDNN and (self.kernel != 1 or self.dilation != 1):
            raise SchemaError(f"{self.kind} layers cannot have kernel/dilation: {self}")
        if self.kind == LAYER_STATS and self.output_dim != 2 * self.input_dim:
            raise SchemaError(f"stats pooling must double the feature dim: {self}")

    @property
    def context(self) -> int:
        """Frames consumed by a valid (unpadded) application of this layer."""
        return self.dilation * (self.kernel - 1)

    def out_frames(self, t: int, padded: bool = False) -> int:
        if self.kind != LAYER_TDNN:
            return t
        if padded:
            return t
        if t < self.context + 1:
            raise ShapeError(
                f"layer needs at least {self.context + 1} frames "
                f"(kernel {self.kernel}, dilation {self.dilation}), got {t}")
        return t - self.context

    @property
    def weight_shape(self):
        if self.kind == LAYER_TDNN:
            return (self.output_dim, self.kernel, self.input_dim)
        if self.kind == LAYER_LINEAR:
            return (self.output_dim, self.input_dim)
        return (0,)

    @property
    def bias_shape(self):
        return (self.output_dim,) if self.kind != LAYER_STATS else (0,)


def canonical_layers() -> list:
    """The fixed seven-row extractor architecture."""
    return [
        LayerSpec(LAYER_TDNN, 24, 512, kernel=5, dilation=1),
        LayerSpec(LAYER_TDNN, 512, 512, kernel=3, dilation=2),
        LayerSpec(LAYER_TDNN, 512, 512, kernel=3, dilation=3),
        LayerSpec(LAYER_TDNN, 512, 512, kernel=1, dilation=1),
        LayerSpec(LAYER_TDNN, 512, 1500, kernel=1, dilation=1),
        LayerSpec(LAYER_STATS, 1500, 3000),
        LayerSpec(LAYER_LINEAR, 3000, 512),
    ]


@dataclass
class NetworkGraph:
    """Layer specs plus double-precision parameters and evaluation conventions.

    TDNN weights are stored as (output_dim, kernel, input_dim): entry
    [o, j, c] multiplies input frame t + j*dilation, channel c.  Linear
    weights are (output_dim, input_dim).  Stats-pool rows carry empty
    parameter arrays.
    """

    layers: list
    weights: list
    biases: list
    padded: bool = False
    sample_variance: bool = False
    eps: float = DEFAULT_EPS

    def validate(self):
        if not self.layers:
            raise SchemaError("graph has no layers")
        if not (len(self.layers) == len(self.weights) == len(self.biases)):
            raise SchemaError("layers/weights/biases length mismatch")
        for i, (spec, w, b) in enumerate(zip(self.layers, self.weights, self.biases)):
            w = np.asarray(w)
            b = np.asarray(b)
            if tuple(w.shape) != spec.weight_shape:
                raise SchemaError(
                    f"layer {i} weight shape {w.shape} != expected {spec.weight_shape}")
            if tuple(b.shape) != spec.bias_shape:
                raise SchemaError(
                    f"layer {i} bias shape {b.shape} != expected {spec.bias_shape}")
            if i + 1 < len(self.layers):
                nxt = self.layers[i + 1]
                if nxt.input_dim != spec.output_dim:
                    raise SchemaError(
                        f"layer {i} output dim {spec.output_dim} feeds layer "
                        f"{i + 1} expecting {nxt.input_dim}")
        if not np.isfinite(self.eps) or self.eps < 0:
            raise SchemaError(f"bad eps {self.eps}")
        return self

    def is_canonical(self) -> bool:
        return self.layers == canonical_layers()

    def min_frames(self) -> int:
        """Smallest T the graph accepts (pooling needs two residual frames)."""
        consumed = 0 if self.padded else sum(
            s.context for s in self.layers if s.kind == LAYER_TDNN)
        return consumed + 2

    def graph_hash(self) -> str:
        h = hashlib.sha256()
        h.update(_WEIGHTS_HEADER.pack(WEIGHTS_MAGIC, FORMAT_VERSION, self._flags(),
                                      float(self.eps), len(self.layers)))
        for spec, w, b in zip(self.layers, self.weights, self.biases):
            h.update(_LAYER_HEADER.pack(_KIND_CODES[spec.kind], spec.input_dim,
                                        spec.output_dim, spec.kernel, spec.dilation))
            h.update(np.ascontiguousarray(w, dtype="<f8").tobytes())
            h.update(np.ascontiguousarray(b, dtype="<f8").tobytes())
        return h.hexdigest()

    def _flags(self) -> int:
        return (FLAG_PADDED if self.padded else 0) | \
               (FLAG_SAMPLE_VARIANCE if self.sample_variance else 0)


def random_graph(rng: np.random.Generator, layers=None, weight_scale: float = 0.05,
                 **conventions) -> NetworkGraph:
    """Random graph for fidelity runs; small weights keep activations in range."""
    layers = list(layers) if layers is not None else canonical_layers()
    weights, biases = [], []
    for spec in layers:
        weights.append(rng.normal(0.0, weight_scale, spec.weight_shape))
        biases.append(rng.normal(0.0, weight_scale, spec.bias_shape))
    return NetworkGraph(layers, weights, biases, **conventions).validate()


# ---------------------------------------------------------------------------
# quantization

@dataclass
class QuantizedGraph:
    """Graph with parameters encoded into the ring at the config's precision.

    Non-owners of the weights hold ``weights``/``biases`` as None (shapes
    and conventions stay public).
    """

    layers: list
    weights: list | None
    biases: list | None
    cfg: FixedPointConfig
    padded: bool = False
    sample_variance: bool = False
    eps: float = DEFAULT_EPS
    source_hash: str = ""


def quantize_weights(graph: NetworkGraph, cfg: FixedPointConfig) -> QuantizedGraph:
    """Encode every parameter with encode_fixed; names the offender on overflow."""
    graph.validate()
    limit = float(1 << cfg.m)
    qw, qb = [], []
    for i, (spec, w, b) in enumerate(zip(graph.layers, graph.weights, graph.biases)):
        for label, arr in (("weight", np.asarray(w)), ("bias", np.asarray(b))):
            bad = np.argwhere(~np.isfinite(arr) | (np.abs(arr) >= limit))
            if bad.size:
                idx = tuple(int(v) for v in bad[0])
                raise FixedPointRangeError(
                    f"layer {i} ({spec.kind}) {label}{idx} = "
                    f"{arr[idx]} out of fixed-point range")
        qw.append(encode_fixed(np.asarray(w, dtype=np.float64), cfg))
        qb.append(encode_fixed(np.asarray(b, dtype=np.float64), cfg))
    return QuantizedGraph(list(graph.layers), qw, qb, cfg, padded=graph.padded,
                          sample_variance=graph.sample_variance, eps=graph.eps,
                          source_hash=graph.graph_hash())


def dequantize(qgraph: QuantizedGraph) -> NetworkGraph:
    from .ring import decode_fixed
    weights = [decode_fixed(w, qgraph.cfg) for w in qgraph.weights]
    biases = [decode_fixed(b, qgraph.cfg) for b in qgraph.biases]
    return NetworkGraph(list(qgraph.layers), weights, biases, padded=qgraph.padded,
                        sample_variance=qgraph.sample_variance, eps=qgraph.eps)


def public_graph(qgraph: QuantizedGraph) -> QuantizedGraph:
    """What the non-vendor parties know: shapes and conventions, no parameters."""
    return QuantizedGraph(list(qgraph.layers), None, None, qgraph.cfg,
                          padded=qgraph.padded, sample_variance=qgraph.sample_variance,
                          eps=qgraph.eps, source_hash=qgraph.source_hash)


# ---------------------------------------------------------------------------
# plaintext reference

def _check_features(features: np.ndarray, input_dim: int) -> np.ndarray:
    feats = np.asarray(features, dtype=np.float64)
    if feats.ndim != 2 or feats.shape[1] != input_dim:
        raise ShapeError(f"features must be (T, {input_dim}), got {feats.shape}")
    return feats


def _pad_frames(x: np.ndarray, spec: LayerSpec) -> np.ndarray:
    pad = spec.context // 2
    if pad == 0:
        return x
    z = np.zeros((pad, x.shape[1]), dtype=x.dtype)
    return np.concatenate([z, x, z], axis=0)


def _conv_reference(x: np.ndarray, spec: LayerSpec, w, b, padded: bool) -> np.ndarray:
    if padded:
        x = _pad_frames(x, spec)
    t_out = x.shape[0] - spec.context
    if t_out < 1:
        raise ShapeError(
            f"{x.shape[0]} frames too few for kernel {spec.kernel} "
            f"dilation {spec.dilation}")
    # windows: (t_out, kernel * input_dim), matching w.reshape(out, -1)
    win = np.concatenate(
        [x[j * spec.dilation: j * spec.dilation + t_out] for j in range(spec.kernel)],
        axis=1)
    return win @ np.asarray(w, dtype=np.float64).reshape(spec.output_dim, -1).T \
        + np.asarray(b, dtype=np.float64)


def _stats_reference(x: np.ndarray, sample_variance: bool, eps: float) -> np.ndarray:
    t = x.shape[0]
    if t < 2:
        raise ShapeError(f"statistics pooling needs at least 2 frames, got {t}")
    mean = x.mean(axis=0)
    var = np.square(x).mean(axis=0) - np.square(mean)
    if sample_variance:
        var = var * (t / (t - 1))
    var = np.maximum(var, 0.0)
    std = np.sqrt(var + eps)
    return np.concatenate([mean, std])


def extract_reference(graph: NetworkGraph, features) -> np.ndarray:
    """Double-precision forward pass; the oracle for all fidelity tests."""
    graph.validate()
    x = _check_features(features, graph.layers[0].input_dim)
    for spec, w, b in zip(graph.layers, graph.weights, graph.biases):
        if spec.kind == LAYER_TDNN:
            x = np.maximum(_conv_reference(x, spec, w, b, graph.padded), 0.0)
        elif spec.kind == LAYER_STATS:
            x = _stats_reference(x, graph.sample_variance, graph.eps)
        else:
            x = np.asarray(w, dtype=np.float64) @ x + np.asarray(b, dtype=np.float64)
    return x


# ---------------------------------------------------------------------------
# secure evaluation

def _inv_frames_const(t: int, frac: int) -> np.uint64:
    """round(2^frac / t) as a public ring constant."""
    return np.uint64((2 * (1 << frac) + t) // (2 * t))


def _share_params(eng: EngineBase, qgraph: QuantizedGraph, owner: int):
    """Distribute the vendor's quantized parameters as shared tensors.

    Weights are shared pre-transposed to (kernel*in, out) / (in, out) so the
    online phase is pure matmul; biases are shared pre-scaled to 2f
    fractional bits so they fold into the pre-truncation accumulator.
    """
    f = eng.cfg.f
    shared = []
    for i, spec in enumerate(qgraph.layers):
        if spec.kind == LAYER_STATS:
            shared.append((None, None))
            continue
        wshape = (int(np.prod(spec.weight_shape[1:], dtype=np.int64)), spec.output_dim)
        if eng.party_id == owner and qgraph.weights is not None:
            wt = np.ascontiguousarray(
                qgraph.weights[i].reshape(spec.output_dim, -1).T)
            bias2f = qgraph.biases[i] << np.uint64(f)
        else:
            wt = bias2f = None
        w_s = eng.share_input(owner, wt, wshape, f)
        b_s = eng.share_input(owner, bias2f, spec.bias_shape, 2 * f)
        shared.append((w_s, b_s))
    return shared


def _secure_windows(eng: EngineBase, x: SecretArray, spec: LayerSpec,
                    padded: bool) -> SecretArray:
    if padded:
        pad = spec.context // 2
        if pad:
            z = eng.zeros((pad, x.shape[1]), x.frac_bits)
            x = eng.concat([z, x, z], axis=0)
    t_out = x.shape[0] - spec.context
    if t_out < 1:
        raise ShapeError(
            f"{x.shape[0]} frames too few for kernel {spec.kernel} "
            f"dilation {spec.dilation}")
    return eng.concat(
        [x[j * spec.dilation: j * spec.dilation + t_out] for j in range(spec.kernel)],
        axis=1)


def _secure_affine(eng: EngineBase, x: SecretArray, w_s: SecretArray,
                   b_s: SecretArray, mode: str) -> SecretArray:
    f = eng.cfg.f
    acc = eng.add(eng.matmul(x, w_s), SecretArray(b_s.shares, 2 * f))
    return eng.truncate_round(acc, f, mode)


def _secure_stats(eng: EngineBase, x: SecretArray, sample_variance: bool,
                  eps: float, mode: str) -> SecretArray:
    """Mean and standard deviation per feature over the frame axis.

    Inputs must keep their squares inside the fixed-point range (true for
    network activations).  eps is added at double precision, before the
    final re-scaling, so sub-LSB eps values still regularize the variance.
    """
    cfg = eng.cfg
    f = cfg.f
    t = x.shape[0]
    if t < 2:
        raise ShapeError(f"statistics pooling needs at least 2 frames, got {t}")
    inv_t = _inv_frames_const(t, 2 * f)

    mean = eng.truncate_round(eng.mul_public(eng.sum(x, axis=0), inv_t, 2 * f),
                              2 * f, mode)                       # frac f
    sq = eng.truncate_round(eng.mul(x, x), f, mode)              # frac f
    meansq2f = eng.truncate_round(
        eng.mul_public(eng.sum(sq, axis=0), inv_t, 2 * f), f, mode,
        new_frac=2 * f)                                          # frac 2f
    var2f = eng.sub(meansq2f, eng.mul(mean, mean))               # frac 2f
    if sample_variance:
        ratio = np.uint64(round(t / (t - 1) * (1 << f)))
        var2f = eng.truncate_round(eng.mul_public(var2f, ratio, f), f, mode,
                                   new_frac=2 * f)
    var2f = eng.add_public(var2f, encode_fixed(eps, FixedPointConfig(
        k=cfg.k, f=2 * f, m=cfg.m, s=cfg.s)))
    var = eng.relu(eng.truncate_round(var2f, f, mode))           # frac f, >= 0
    std = eng.sqrt(var, mode)
    return eng.concat([mean, std])


def extract_secure(eng: EngineBase, qgraph: QuantizedGraph, features,
                   frames: int, owner_features: int = 0, owner_weights: int = 1,
                   mode: str = MODE_DET, open_to=0):
    """Run the full extractor over the engine; every party calls this.

    ``features`` is the ring-encoded (frames, input_dim) matrix at the
    feature owner and None elsewhere; ``qgraph.weights`` is populated only
    at the weight owner.  ``open_to`` selects the embedding recipient: a
    party id, "all", or "shares" to skip the opening and return this
    party's SecretArray.
    """
    f = eng.cfg.f
    in_dim = qgraph.layers[0].input_dim
    if features is not None:
        features = np.asarray(features, dtype=RING_DTYPE)
        if features.shape != (frames, in_dim):
            raise ShapeError(
                f"features must be ({frames}, {in_dim}), got {features.shape}")
    params = _share_params(eng, qgraph, owner_weights)
    x = eng.share_input(owner_features, features, (frames, in_dim), f)

    for spec, (w_s, b_s) in zip(qgraph.layers, params):
        if spec.kind == LAYER_TDNN:
            win = _secure_windows(eng, x, spec, qgraph.padded)
            x = eng.relu(_secure_affine(eng, win, w_s, b_s, mode))
        elif spec.kind == LAYER_STATS:
            x = _secure_stats(eng, x, qgraph.sample_variance, qgraph.eps, mode)
        else:
            y = _secure_affine(eng, x.reshape(1, -1), w_s, b_s, mode)
            x = y.reshape(-1)

    if open_to == "shares":
        return x
    if open_to == "all":
        return eng.open(x)
    return eng.open(x, to=open_to)


def predict_budget(qgraph: QuantizedGraph, frames: int, scheme: str,
                   cfg: FixedPointConfig, mode: str = MODE_DET):
    """Randomness budget for one extraction, via a dry run of the identical
    protocol schedule."""
    from .engine import CountingEngine
    counter = CountingEngine(scheme, cfg)
    extract_secure(counter, public_graph(qgraph), None, frames, mode=mode,
                   open_to="shares")
    return counter.budget


# ---------------------------------------------------------------------------
# interchange file formats

def write_weights(path, graph: NetworkGraph):
    graph.validate()
    with open(path, "wb") as fh:
        fh.write(_WEIGHTS_HEADER.pack(WEIGHTS_MAGIC, FORMAT_VERSION, graph._flags(),
                                      float(graph.eps), len(graph.layers)))
        for spec, w, b in zip(graph.layers, graph.weights, graph.biases):
            fh.write(_LAYER_HEADER.pack(_KIND_CODES[spec.kind], spec.input_dim,
                                        spec.output_dim, spec.kernel, spec.dilation))
            fh.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(b, dtype="<f8").tobytes())


def _read_exact(fh, n: int, what: str) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise SchemaError(f"truncated file while reading {what}")
    return data


def read_weights(path) -> NetworkGraph:
    with open(path, "rb") as fh:
        magic, version, flags, eps, n_layers = _WEIGHTS_HEADER.unpack(
            _read_exact(fh, _WEIGHTS_HEADER.size, "weight header"))
        if magic != WEIGHTS_MAGIC:
            raise SchemaError(f"bad weight-file magic {magic!r}")
        if version != FORMAT_VERSION:
            raise SchemaError(f"unsupported weight-file version {version}")
        if flags & ~(FLAG_PADDED | FLAG_SAMPLE_VARIANCE):
            raise SchemaError(f"unknown weight-file flags 0x{flags:x}")
        if not 1 <= n_layers <= 64:
            raise SchemaError(f"implausible layer count {n_layers}")
        layers, weights, biases = [], [], []
        for i in range(n_layers):
            kind_code, in_dim, out_dim, kernel, dilation = _LAYER_HEADER.unpack(
                _read_exact(fh, _LAYER_HEADER.size, f"layer {i} header"))
            if kind_code not in _KIND_NAMES:
                raise SchemaError(f"layer {i}: unknown kind code {kind_code}")
            spec = LayerSpec(_KIND_NAMES[kind_code], in_dim, out_dim,
                             kernel=kernel, dilation=dilation)
            layers.append(spec)
            n_w = int(np.prod(spec.weight_shape, dtype=np.int64))
            n_b = int(np.prod(spec.bias_shape, dtype=np.int64))
            weights.append(np.frombuffer(
                _read_exact(fh, 8 * n_w, f"layer {i} weights"),
                dtype="<f8").reshape(spec.weight_shape).copy())
            biases.append(np.frombuffer(
                _read_exact(fh, 8 * n_b, f"layer {i} biases"),
                dtype="<f8").reshape(spec.bias_shape).copy())
        if fh.read(1):
            raise SchemaError("trailing bytes after last layer")
    graph = NetworkGraph(layers, weights, biases,
                         padded=bool(flags & FLAG_PADDED),
                         sample_variance=bool(flags & FLAG_SAMPLE_VARIANCE),
                         eps=eps)
    return graph.validate()


def write_features(path, features):
    feats = np.asarray(features, dtype=np.float64)
    if feats.ndim != 2:
        raise ShapeError(f"features must be 2-D, got shape {feats.shape}")
    with open(path, "wb") as fh:
        fh.write(_FEATURES_HEADER.pack(FEATURES_MAGIC, feats.shape[0], feats.shape[1]))
        fh.write(np.ascontiguousarray(feats, dtype="<f8").tobytes())


def read_features(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic, t, dim = _FEATURES_HEADER.unpack(
            _read_exact(fh, _FEATURES_HEADER.size, "feature header"))
        if magic != FEATURES_MAGIC:
            raise SchemaError(f"bad feature-file magic {magic!r}")
        if t < 1 or not 1 <= dim <= 1 << 16:
            raise SchemaError(f"implausible feature shape ({t}, {dim})")
        data = np.frombuffer(_read_exact(fh, 8 * t * dim, "feature frames"),
                             dtype="<f8").reshape(t, dim).copy()
        if fh.read(1):
            raise SchemaError("trailing bytes after feature frames")
    return data


def write_embedding(path, values):
    vec = np.asarray(values, dtype=np.float64).reshape(-1)
    with open(path, "wb") as fh:
        fh.write(_EMBEDDING_HEADER.pack(EMBEDDING_MAGIC, vec.size))
        fh.write(np.ascontiguousarray(vec, dtype="<f8").tobytes())


def read_embedding(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic, dim = _EMBEDDING_HEADER.unpack(
            _read_exact(fh, _EMBEDDING_HEADER.size, "embedding header"))
        if magic != EMBEDDING_MAGIC:
            raise SchemaError(f"bad embedding-file magic {magic!r}")
        if not 1 <= dim <= 1 << 20:
            raise SchemaError(f"implausible embedding dim {dim}")
        data = np.frombuffer(_read_exact(fh, 8 * dim, "embedding values"),
                             dtype="<f8").copy()
        if fh.read(1):
            raise SchemaError("trailing bytes after embedding values")
    return data
