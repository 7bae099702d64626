"""Secure multiparty extraction of x-vector speaker embeddings.

Fixed-point arithmetic in Z_2^64, additive and replicated secret sharing,
a trusted-dealer offline phase, and a TDNN x-vector extractor evaluated
obliviously by two or three parties.
"""

from .ring import FixedPointConfig, decode_fixed, encode_fixed
from .xvector import NetworkGraph, canonical_layers, extract_reference, \
    quantize_weights, random_graph, read_embedding, read_features, read_weights, \
    write_embedding, write_features, write_weights

__all__ = [
    "FixedPointConfig", "decode_fixed", "encode_fixed",
    "NetworkGraph", "canonical_layers", "extract_reference", "quantize_weights",
    "random_graph", "read_embedding", "read_features", "read_weights",
    "write_embedding", "write_features", "write_weights",
]

__version__ = "0.1.0"
