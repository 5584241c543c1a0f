"""Offline exporter writing weakbox feature bundles from torch checkpoints."""

from .extract import BundleExtractor, ExtractorConfig, export_corpus, tokenize
from .models import MiniViT, MiniVL, create_toy_checkpoints, load_models

__version__ = "0.1.0"
