"""Weight and golden-vector exporter for the x-vector interchange formats."""

from .export import ExportReport, export_golden, export_weights, model_to_graph
from .formats import ExportError, ExportGraph, LayerRow, read_weights, \
    write_embedding, write_features, write_weights
from .model import XVectorModel

__version__ = "0.1.0"

__all__ = [
    "ExportError", "ExportGraph", "ExportReport", "LayerRow", "XVectorModel",
    "export_golden", "export_weights", "model_to_graph", "read_weights",
    "write_embedding", "write_features", "write_weights",
]
