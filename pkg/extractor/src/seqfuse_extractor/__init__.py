"""Offline CNN activation extraction to per-frame tensor files."""

from .extract import ExtractionJob, LAYER_INDICES, extract
from .tensorfile import write_tensor_file

__all__ = ["ExtractionJob", "LAYER_INDICES", "extract", "write_tensor_file"]
