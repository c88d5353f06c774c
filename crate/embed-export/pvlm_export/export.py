import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from .format import write_pvlmemb

log = logging.getLogger(__name__)


class Encoder(Protocol):
    name: str
    width: int

    def encode_images(self, paths: Sequence[Path]) -> np.ndarray: ...

    def encode_texts(self, texts: Sequence[str]) -> np.ndarray: ...


@dataclass
class ExportManifest:
    encoder: str
    modality: str
    ids: list
    # image paths for modality "image", caption strings for "text"
    inputs: list
    out: Path

    def __post_init__(self):
        if self.modality not in ("image", "text"):
            raise ValueError(f"modality must be image or text, got {self.modality!r}")
        if len(self.ids) != len(self.inputs):
            raise ValueError(f"{len(self.ids)} ids for {len(self.inputs)} inputs")
        if len(set(self.ids)) != len(self.ids):
            raise ValueError("ids must be unique")


def export_embeddings(manifest, encoder, skip_unreadable=False, batch_size=32):
    """One row per input in manifest order. Unreadable images abort unless
    `skip_unreadable`, in which case they are logged and dropped."""
    rows, kept = [], []
    for start in range(0, len(manifest.inputs), batch_size):
        chunk = manifest.inputs[start : start + batch_size]
        chunk_ids = manifest.ids[start : start + batch_size]
        if manifest.modality == "text":
            rows.append(encoder.encode_texts(chunk))
            kept.extend(chunk_ids)
            continue
        for i, p in zip(chunk_ids, chunk):
            try:
                rows.append(encoder.encode_images([Path(p)]))
                kept.append(i)
            except OSError as e:
                if not skip_unreadable:
                    raise
                log.warning("skipping %s: %s", p, e)
    matrix = np.concatenate(rows, axis=0)
    if matrix.shape[1] != encoder.width:
        raise ValueError(f"encoder {encoder.name} produced width {matrix.shape[1]}, expected {encoder.width}")
    write_pvlmemb(manifest.out, manifest.modality, kept, matrix)
    return matrix
