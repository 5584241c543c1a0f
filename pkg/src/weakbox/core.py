"""Shared domain types: grid geometry, feature bundles, boxes, configuration."""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, ShapeError

ATTENTION_SUM_TOL = 1e-4


@dataclass(frozen=True)
class GridGeometry:
    """Patch tessellation of an image: square patches of `patch_size` pixels."""

    image_w: int
    image_h: int
    patch_size: int
    grid_h: int
    grid_w: int

    def __post_init__(self):
        if self.patch_size <= 0 or self.image_w <= 0 or self.image_h <= 0:
            raise DataError("image and patch dimensions must be positive")
        if self.grid_h != math.ceil(self.image_h / self.patch_size):
            raise DataError(f"grid_h {self.grid_h} inconsistent with image_h {self.image_h}")
        if self.grid_w != math.ceil(self.image_w / self.patch_size):
            raise DataError(f"grid_w {self.grid_w} inconsistent with image_w {self.image_w}")

    @classmethod
    def from_image(cls, image_w, image_h, patch_size):
        return cls(
            image_w=image_w,
            image_h=image_h,
            patch_size=patch_size,
            grid_h=math.ceil(image_h / patch_size),
            grid_w=math.ceil(image_w / patch_size),
        )

    @property
    def n_patches(self):
        return self.grid_h * self.grid_w


def patch_index_to_rc(i, g):
    """Map a flat patch index to its (row, col) cell in row-major order."""
    if not 0 <= i < g.n_patches:
        raise IndexError(f"patch index {i} out of range [0, {g.n_patches})")
    return i // g.grid_w, i % g.grid_w


def rc_to_patch_index(row, col, g):
    """Inverse of :func:`patch_index_to_rc`."""
    if not (0 <= row < g.grid_h and 0 <= col < g.grid_w):
        raise IndexError(f"cell ({row}, {col}) outside {g.grid_h}x{g.grid_w} grid")
    return row * g.grid_w + col


@dataclass(frozen=True)
class BoxPx:
    """Axis-aligned pixel box with half-open edges [min, max)."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise DataError(f"degenerate box {self.as_tuple()}")

    def as_tuple(self):
        return (self.x_min, self.y_min, self.x_max, self.y_max)

    @property
    def area(self):
        return (self.x_max - self.x_min) * (self.y_max - self.y_min)

    def clipped(self, image_w, image_h):
        return BoxPx(
            max(self.x_min, 0.0),
            max(self.y_min, 0.0),
            min(self.x_max, float(image_w)),
            min(self.y_max, float(image_h)),
        )


def patch_to_pixel_box(row_min, col_min, row_max, col_max, g):
    """Pixel box covering an inclusive patch-cell rectangle, clipped to the image."""
    if not (0 <= row_min <= row_max < g.grid_h and 0 <= col_min <= col_max < g.grid_w):
        raise IndexError("patch rectangle outside grid")
    p = g.patch_size
    box = BoxPx(col_min * p, row_min * p, (col_max + 1) * p, (row_max + 1) * p)
    return box.clipped(g.image_w, g.image_h)


@dataclass(frozen=True)
class Detection:
    box: BoxPx
    category_id: int
    confidence: float
    image_id: str

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise DataError(f"confidence {self.confidence} outside [0, 1]")


@dataclass(frozen=True)
class TokenRecord:
    """One caption token with its cross-attention and gradient rows.

    Rows have length N_P + 1; index 0 is the [CLS] slot.
    """

    text: str
    char_start: int
    char_end: int
    attention_row: np.ndarray
    gradient_row: np.ndarray

    def __post_init__(self):
        att = np.asarray(self.attention_row, dtype=np.float64)
        grad = np.asarray(self.gradient_row, dtype=np.float64)
        object.__setattr__(self, "attention_row", att)
        object.__setattr__(self, "gradient_row", grad)
        if att.ndim != 1 or grad.shape != att.shape:
            raise ShapeError("attention and gradient rows must be 1-D and equal length")
        if not (np.isfinite(att).all() and np.isfinite(grad).all()):
            raise DataError(f"non-finite values in token {self.text!r}")
        if att.min() < 0.0 or att.max() > 1.0:
            raise DataError(f"attention weights outside [0, 1] for token {self.text!r}")
        if abs(att.sum() - 1.0) > ATTENTION_SUM_TOL:
            raise DataError(
                f"attention row of token {self.text!r} sums to {att.sum():.6f}, expected 1"
            )
        if not 0 <= self.char_start < self.char_end:
            raise DataError(f"bad char span for token {self.text!r}")


@dataclass(frozen=True)
class Provenance:
    """How the bundle was extracted; informational, not interpreted here."""

    l_vl: int = 8
    l_vit: int = 11
    head_reduction: str = "mean"


@dataclass(frozen=True)
class FeatureBundle:
    """Everything the pipeline needs for one image-caption pair."""

    geometry: GridGeometry
    caption: str
    tokens: tuple
    vit_keys: np.ndarray
    provenance: Provenance = field(default_factory=Provenance)

    def __post_init__(self):
        keys = np.asarray(self.vit_keys, dtype=np.float64)
        object.__setattr__(self, "vit_keys", keys)
        object.__setattr__(self, "tokens", tuple(self.tokens))
        n_p = self.geometry.n_patches
        if keys.ndim != 2 or keys.shape[0] != n_p:
            raise ShapeError(f"vit_keys must be ({n_p}, d), got {keys.shape}")
        if not np.isfinite(keys).all():
            raise DataError("non-finite ViT keys")
        cap_len = len(self.caption.encode("utf-8"))
        for idx, tok in enumerate(self.tokens):
            if tok.attention_row.shape[0] != n_p + 1:
                raise ShapeError(f"token {idx} rows have length "
                                 f"{tok.attention_row.shape[0]}, expected {n_p + 1}")
            if tok.char_end > cap_len:
                raise DataError(f"token {idx} char span exceeds caption length")


@dataclass(frozen=True)
class EmConfig:
    """EM fitting knobs; initialization is deterministic (percentile-based)."""

    max_iters: int = 200
    tol: float = 1e-8
    var_floor: float = 1e-8
    init: str = "percentile"

    def __post_init__(self):
        if self.max_iters < 1:
            raise DataError("max_iters must be >= 1")
        if self.tol <= 0:
            raise DataError("tol must be positive")


@dataclass(frozen=True)
class PipelineConfig:
    """All pipeline hyperparameters, defaulting to the published settings."""

    N: int = 3
    M: int = 10
    gamma: float = 1.75
    sep_factor: float = 1.5
    nms_conf: float = 0.2
    nms_iou: float = 0.5
    weighted_crossover: bool = False
    stop_word_filter: bool = False
    em: EmConfig = field(default_factory=EmConfig)

    def __post_init__(self):
        if self.N < 1:
            raise DataError("N must be >= 1")
        if self.M < self.N:
            raise DataError("M must be >= N")
        if self.gamma <= 0:
            raise DataError("gamma must be positive")
        if not 0.0 < self.nms_iou < 1.0:
            raise DataError("nms_iou must be in (0, 1)")

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        em = EmConfig(**d.pop("em", {}))
        return cls(em=em, **d)
