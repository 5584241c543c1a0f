"""Per-token patch importance and seed selection.

The importance of a patch for a caption token is the product of the token's
cross-attention weight on that patch and the gradient of the image-text
matching loss with respect to that weight. The [CLS] slot never participates
in the ranking.
"""

from dataclasses import dataclass

import numpy as np

from .core import patch_index_to_rc, rc_to_patch_index
from .errors import ShapeError


@dataclass(frozen=True)
class GradCamMap:
    """Per-patch importance scores for one token ([CLS] slot removed)."""

    scores: np.ndarray
    token_index: int


@dataclass(frozen=True)
class SeedSet:
    """Top-M patches by importance, descending; ties broken by patch index."""

    seeds: tuple  # of (patch_index, score)

    def __len__(self):
        return len(self.seeds)

    @property
    def patch_indices(self):
        return [p for p, _ in self.seeds]


@dataclass(frozen=True)
class InitialSeed:
    patch_index: int
    rc: tuple


def compute_attention_weights(query, keys, values=None):
    """Scaled dot-product attention weights of one query over a key set.

    Returns the softmax weights; if `values` is given, also returns the
    attention-weighted sum of the value vectors.
    """
    q = np.asarray(query, dtype=np.float64)
    k = np.atleast_2d(np.asarray(keys, dtype=np.float64))
    if q.ndim != 1 or k.shape[1] != q.shape[0]:
        raise ShapeError(f"query dim {q.shape} does not match keys {k.shape}")
    if k.shape[0] == 0:
        raise ShapeError("empty key set")
    logits = k @ q / np.sqrt(q.shape[0])
    logits -= logits.max()  # stability; softmax is shift-invariant
    e = np.exp(logits)
    weights = e / e.sum()
    if values is None:
        return weights
    v = np.atleast_2d(np.asarray(values, dtype=np.float64))
    if v.shape[0] != k.shape[0]:
        raise ShapeError("values count does not match keys count")
    return weights, weights @ v


def gradcam_scores(token, token_index=0):
    """Elementwise gradient x attention over the patch slots of one token."""
    att = token.attention_row
    grad = token.gradient_row
    if att.shape != grad.shape or att.ndim != 1 or att.shape[0] < 2:
        raise ShapeError("token rows must be 1-D, equal length >= 2")
    return GradCamMap(scores=grad[1:] * att[1:], token_index=token_index)


def select_potential_seeds(cam, m):
    """Pick the M highest-scoring patches as potential seeds."""
    scores = cam.scores
    n_p = scores.shape[0]
    if m > n_p:
        raise ValueError(f"M={m} exceeds patch count {n_p}")
    # stable sort on -score keeps ascending patch index among ties
    order = np.argsort(-scores, kind="stable")[:m]
    return SeedSet(seeds=tuple((int(i), float(scores[i])) for i in order))


def _round_half_up(x):
    return int(np.floor(x + 0.5))


def compute_initial_seed(seed_set, n, g):
    """Grid cell at the rounded mean location of the top-N potential seeds.

    The result need not be a member of the seed set.
    """
    if n > len(seed_set):
        raise ValueError(f"N={n} exceeds seed count {len(seed_set)}")
    rcs = [patch_index_to_rc(p, g) for p in seed_set.patch_indices[:n]]
    row = _round_half_up(sum(r for r, _ in rcs) / n)
    col = _round_half_up(sum(c for _, c in rcs) / n)
    row = min(max(row, 0), g.grid_h - 1)
    col = min(max(col, 0), g.grid_w - 1)
    return InitialSeed(patch_index=rc_to_patch_index(row, col, g), rc=(row, col))
