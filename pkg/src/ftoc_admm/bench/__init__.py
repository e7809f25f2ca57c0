"""Benchmark instances, file formats, reports and the command line."""

from .generator import SIZE_PRESETS, GeneratorSpec, generate

__all__ = ["GeneratorSpec", "SIZE_PRESETS", "generate"]
