"""Seed expansion: grow the object patch set via ViT key similarity.

Potential seeds whose key correlates non-negatively with the initial seed's
key are kept as object patches; the object heatmap is the sum of the
per-patch key-similarity heatmaps.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError


@dataclass(frozen=True)
class ObjectSet:
    """Patches attributed to one object; always contains the initial seed."""

    patch_indices: frozenset
    seed_index: int


@dataclass(frozen=True)
class Heatmap:
    """Per-patch real values; `kind` tags the producing stage."""

    values: np.ndarray
    kind: str = "expanded"


def build_object_set(initial_seed, seed_set, keys):
    """Keep potential seeds whose key has non-negative dot with the seed key."""
    keys = np.asarray(keys, dtype=np.float64)
    s = initial_seed.patch_index
    if s >= keys.shape[0]:
        raise ShapeError(f"seed index {s} outside key matrix of {keys.shape[0]} rows")
    k_s = keys[s]
    members = {s}
    for f in seed_set.patch_indices:
        if f >= keys.shape[0]:
            raise ShapeError(f"seed index {f} outside key matrix")
        if float(k_s @ keys[f]) >= 0.0:
            members.add(f)
    return ObjectSet(patch_indices=frozenset(members), seed_index=s)


def patch_heatmap(p, keys):
    """Similarity of every patch key to the key of patch `p`."""
    keys = np.asarray(keys, dtype=np.float64)
    if not 0 <= p < keys.shape[0]:
        raise ShapeError(f"patch index {p} outside key matrix")
    return Heatmap(values=keys @ keys[p], kind="expanded")


def object_heatmap(obj, keys):
    """Sum of the member-patch heatmaps; equals the heatmap of the summed key."""
    if not obj.patch_indices:
        raise ValueError("object set is empty")
    keys = np.asarray(keys, dtype=np.float64)
    summed_key = keys[sorted(obj.patch_indices)].sum(axis=0)
    return Heatmap(values=keys @ summed_key, kind="expanded")
