"""CLIP encoders through `transformers`; pooled, projected final-layer output."""

from pathlib import Path

import numpy as np

NAMES = {
    "ViT-B/32": "openai/clip-vit-base-patch32",
    "ViT-B/16": "openai/clip-vit-base-patch16",
}


class ClipEncoder:
    def __init__(self, name, deterministic=True):
        import torch
        from transformers import CLIPModel, CLIPProcessor

        if deterministic:
            torch.use_deterministic_algorithms(True)
            torch.manual_seed(0)
        repo = NAMES.get(name, name)
        self.name = name
        self.model = CLIPModel.from_pretrained(repo).eval()
        self.processor = CLIPProcessor.from_pretrained(repo)
        self.width = self.model.config.projection_dim
        self._torch = torch

    def encode_images(self, paths):
        from PIL import Image

        images = [Image.open(Path(p)).convert("RGB") for p in paths]
        with self._torch.no_grad():
            batch = self.processor(images=images, return_tensors="pt")
            return self.model.get_image_features(**batch).numpy().astype(np.float32)

    def encode_texts(self, texts):
        with self._torch.no_grad():
            batch = self.processor(text=list(texts), return_tensors="pt", padding=True, truncation=True)
            return self.model.get_text_features(**batch).numpy().astype(np.float32)
