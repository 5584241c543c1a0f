"""Bundle export: run the VL and ViT checkpoints on one image-caption pair.

Attention rows are post-softmax, averaged over heads; gradient rows come
from one backward pass of the image-text matching loss with respect to the
post-softmax attention (averaged over heads the same way). ViT keys are the
per-patch key projections at the configured self-attention layer.
"""

import json
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from weakbox.bundle_io import write_bundle
from weakbox.core import (FeatureBundle, GridGeometry, Provenance, TokenRecord)

from .models import load_models, word_to_vocab_id

_WORD_RE = re.compile(r"[A-Za-z']+")


@dataclass(frozen=True)
class ExtractorConfig:
    vl_checkpoint: str
    vit_checkpoint: str
    l_vl: int = 8
    l_vit: int = 11
    output_dir: str = "."
    image_size: int = 224
    patch_size: int = 16
    dim: int = 64

    def __post_init__(self):
        if self.l_vl < 0 or self.l_vit < 0:
            raise ValueError("layer indices must be non-negative")


def tokenize(caption):
    """Word tokens with byte offsets into the caption."""
    encoded = caption.encode("utf-8")
    tokens = []
    for match in _WORD_RE.finditer(caption):
        start = len(caption[: match.start()].encode("utf-8"))
        end = start + len(match.group().encode("utf-8"))
        tokens.append((match.group(), start, end))
    if not tokens:
        raise ValueError(f"caption has no word tokens: {caption!r}")
    del encoded
    return tokens


def preprocess_image(image, size):
    """Resize to a square `size` x `size` float tensor in [0, 1]."""
    if isinstance(image, (str, Path)):
        image = Image.open(image)
    image = image.convert("RGB").resize((size, size), Image.BILINEAR)
    arr = np.asarray(image, dtype=np.float32) / 255.0
    return torch.from_numpy(arr).permute(2, 0, 1)


class BundleExtractor:
    def __init__(self, cfg):
        self.cfg = cfg
        self.vl, self.vit = load_models(cfg.vl_checkpoint, cfg.vit_checkpoint,
                                        dim=cfg.dim, patch_size=cfg.patch_size)
        depth_vl = len(self.vl.cross_blocks)
        depth_vit = len(self.vit.blocks)
        if cfg.l_vl >= depth_vl or cfg.l_vit >= depth_vit:
            raise ValueError(
                f"layer indices ({cfg.l_vl}, {cfg.l_vit}) exceed model depths "
                f"({depth_vl}, {depth_vl})")

    def extract(self, image, caption):
        """Build a validated FeatureBundle for one image-caption pair."""
        cfg = self.cfg
        pixels = preprocess_image(image, cfg.image_size)
        grid = cfg.image_size // cfg.patch_size
        geometry = GridGeometry.from_image(cfg.image_size, cfg.image_size,
                                           cfg.patch_size)

        words = tokenize(caption)
        vocab_ids = torch.tensor([word_to_vocab_id(w) for w, _, _ in words])

        self.vl.zero_grad(set_to_none=True)
        itm_logit = self.vl(pixels, vocab_ids)
        loss = self.vl.itm_loss(itm_logit, match=True)
        loss.backward()

        att = self.vl.cross_attention(cfg.l_vl)          # (heads, N_T, N_P+1)
        if att.shape[2] != grid * grid + 1:
            raise RuntimeError(f"attention width {att.shape[2]} does not match "
                               f"grid {grid}x{grid} + CLS")
        att_mean = att.mean(dim=0).detach().numpy().astype(np.float64)
        grad_mean = att.grad.mean(dim=0).numpy().astype(np.float64)
        # head averaging leaves each row a convex mix of softmax rows; renormalize
        # the float64 sum drift only, never the shape
        att_mean = att_mean / att_mean.sum(axis=1, keepdims=True)

        with torch.no_grad():
            self.vit(pixels)
        keys = self.vit.patch_keys(cfg.l_vit).numpy().astype(np.float64)

        tokens = tuple(
            TokenRecord(text=word, char_start=start, char_end=end,
                        attention_row=att_mean[i], gradient_row=grad_mean[i])
            for i, (word, start, end) in enumerate(words)
        )
        return FeatureBundle(
            geometry=geometry, caption=caption, tokens=tokens, vit_keys=keys,
            provenance=Provenance(l_vl=cfg.l_vl, l_vit=cfg.l_vit,
                                  head_reduction="mean"),
        )

    def extract_to_file(self, image, caption, path):
        bundle = self.extract(image, caption)
        write_bundle(bundle, path)
        return bundle


def export_corpus(cfg, pairs_file):
    """Export bundles for a JSON-lines file of {"image": path, "caption": text}.

    Returns the list of written bundle paths, in input order.
    """
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    extractor = BundleExtractor(cfg)
    written = []
    with open(pairs_file, "r", encoding="utf-8") as f:
        for i, line in enumerate(f):
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            stem = Path(rec["image"]).stem or f"pair_{i:04d}"
            path = out_dir / f"{stem}.wsab"
            extractor.extract_to_file(rec["image"], rec["caption"], path)
            written.append(path)
    return written
