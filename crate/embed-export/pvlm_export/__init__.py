"""Export frozen encoder embeddings in the PVLMEMB1 layout read by pvlm-core."""

from .format import read_pvlmemb, write_pvlmemb
from .export import Encoder, ExportManifest, export_embeddings

__all__ = [
    "Encoder",
    "ExportManifest",
    "export_embeddings",
    "read_pvlmemb",
    "write_pvlmemb",
]
