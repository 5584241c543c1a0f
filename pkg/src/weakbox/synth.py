"""Synthetic bundle generator with known planted boxes.

Keys are built from mutually repulsive unit directions (one per object plus
one background direction, pairwise-negative dots via a simplex), so seed
expansion separates objects from background by construction. Each object
gets one caption token whose importance scores peak strictly inside the
planted rectangle.
"""

from dataclasses import dataclass, field

import numpy as np

from .core import (BoxPx, FeatureBundle, GridGeometry, Provenance,
                   TokenRecord, patch_to_pixel_box, rc_to_patch_index)
from .errors import DataError


@dataclass(frozen=True)
class SynthSpec:
    grid_h: int
    grid_w: int
    patch_size: int = 16
    d_vit: int = 32
    # (category name, (row_min, col_min, row_max, col_max)) inclusive patch rect
    objects: tuple = field(default=())
    noise_sigma: float = 0.0
    rng_seed: int = 0

    def __post_init__(self):
        rects = [r for _, r in self.objects]
        for r0, c0, r1, c1 in rects:
            if not (0 <= r0 <= r1 < self.grid_h and 0 <= c0 <= c1 < self.grid_w):
                raise DataError(f"planted rect {(r0, c0, r1, c1)} outside grid")
        for i, a in enumerate(rects):
            for b in rects[i + 1:]:
                if a[0] <= b[2] and b[0] <= a[2] and a[1] <= b[3] and b[1] <= a[3]:
                    raise DataError("planted rectangles overlap")
        if self.d_vit < len(self.objects) + 2:
            raise DataError("d_vit too small for the simplex construction")


def _simplex_directions(count, dim):
    """`count` unit vectors in R^dim with pairwise dot -1/(count-1)."""
    basis = np.eye(count)
    centered = basis - basis.mean(axis=0)
    dirs = centered / np.linalg.norm(centered, axis=1, keepdims=True)
    out = np.zeros((count, dim))
    out[:, :count] = dirs
    return out


def _rect_cells(rect):
    r0, c0, r1, c1 = rect
    return [(r, c) for r in range(r0, r1 + 1) for c in range(c0, c1 + 1)]


def generate_synthetic_bundle(spec):
    """Build a bundle plus its planted ground-truth pixel boxes.

    Returns (FeatureBundle, [(category_name, BoxPx)]), deterministic in
    the spec's rng_seed.
    """
    rng = np.random.default_rng(spec.rng_seed)
    g = GridGeometry.from_image(spec.grid_w * spec.patch_size,
                                spec.grid_h * spec.patch_size, spec.patch_size)
    n_p = g.n_patches
    n_obj = len(spec.objects)

    dirs = _simplex_directions(n_obj + 1, spec.d_vit)
    background = dirs[-1]
    keys = np.tile(background, (n_p, 1))
    for j, (_, rect) in enumerate(spec.objects):
        for r, c in _rect_cells(rect):
            keys[rc_to_patch_index(r, c, g)] = dirs[j]
    keys = keys + rng.normal(0.0, spec.noise_sigma, size=keys.shape)

    caption = " ".join(name for name, _ in spec.objects)
    tokens = []
    offset = 0
    gt_boxes = []
    for j, (name, rect) in enumerate(spec.objects):
        cells = _rect_cells(rect)
        r0, c0, r1, c1 = rect
        center = ((r0 + r1) / 2.0, (c0 + c1) / 2.0)
        # attention mass concentrated on the cells nearest the rect center
        by_center = sorted(cells, key=lambda rc: ((rc[0] - center[0]) ** 2
                                                  + (rc[1] - center[1]) ** 2,
                                                  rc))
        peaks = {rc_to_patch_index(r, c, g) for r, c in by_center[:3]}
        inside = {rc_to_patch_index(r, c, g) for r, c in cells}

        logits = np.zeros(n_p + 1)
        for i in range(n_p):
            if i in peaks:
                logits[i + 1] = 6.0
            elif i in inside:
                logits[i + 1] = 3.0
        logits += rng.normal(0.0, spec.noise_sigma, size=n_p + 1)
        att = np.exp(logits - logits.max())
        att /= att.sum()

        grad = rng.normal(0.0, spec.noise_sigma * 0.01, size=n_p + 1)
        for i in inside:
            grad[i + 1] += 1.0

        char_end = offset + len(name)
        tokens.append(TokenRecord(text=name, char_start=offset, char_end=char_end,
                                  attention_row=att, gradient_row=grad))
        offset = char_end + 1
        gt_boxes.append((name, patch_to_pixel_box(r0, c0, r1, c1, g)))

    bundle = FeatureBundle(geometry=g, caption=caption, tokens=tuple(tokens),
                           vit_keys=keys, provenance=Provenance())
    return bundle, gt_boxes


def random_spec(rng_seed, categories, max_objects=3):
    """Random non-overlapping planted scene on an 8x8..32x32 grid."""
    rng = np.random.default_rng(rng_seed)
    grid = int(rng.integers(8, 33))
    n_obj = int(rng.integers(1, max_objects + 1))
    names = list(rng.choice(categories, size=n_obj, replace=False))
    rects = []
    max_side = max(2, grid // 3)
    for _ in range(n_obj):
        for _attempt in range(100):
            h = int(rng.integers(2, max_side + 1))
            w = int(rng.integers(2, max_side + 1))
            r0 = int(rng.integers(0, grid - h + 1))
            c0 = int(rng.integers(0, grid - w + 1))
            rect = (r0, c0, r0 + h - 1, c0 + w - 1)
            # keep a one-cell gap so segments never touch
            padded = (rect[0] - 1, rect[1] - 1, rect[2] + 1, rect[3] + 1)
            if all(not (padded[0] <= b[2] and b[0] <= padded[2]
                        and padded[1] <= b[3] and b[1] <= padded[3])
                   for b in rects):
                rects.append(rect)
                break
    objects = tuple(zip(names[:len(rects)], rects))
    return SynthSpec(grid_h=grid, grid_w=grid, objects=objects,
                     noise_sigma=float(rng.uniform(0.0, 0.1)),
                     rng_seed=int(rng.integers(0, 2 ** 31)))
