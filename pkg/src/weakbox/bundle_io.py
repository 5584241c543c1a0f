"""Bit-exact binary codec for feature bundles.

Layout (little-endian throughout):

    magic "WSAB" | u32 version=1 | u32 image_w | u32 image_h | u16 patch_size
    u16 grid_h | u16 grid_w | u32 d_vit | u32 n_tokens | u8 flags
    u32 caption_len + UTF-8 caption
    u16 l_vl | u16 l_vit | u8 head_reduction tag
    grid_h*grid_w*d_vit float32 ViT keys, row-major by patch index
    per token: u16 text_len + UTF-8 | u32 char_start | u32 char_end
               | (N_P+1) float32 attention row | (N_P+1) float32 gradient row

Floats are float32 on disk and widened to float64 in memory; round-trips
are byte-identical.
"""

import struct

import numpy as np

from .core import FeatureBundle, GridGeometry, Provenance, TokenRecord
from .errors import DataError, FormatError

MAGIC = b"WSAB"
VERSION = 1

HEAD_REDUCTION_TAGS = {"mean": 0, "max": 1, "sum": 2}
_TAG_NAMES = {v: k for k, v in HEAD_REDUCTION_TAGS.items()}


def _f32_bytes(arr):
    a = np.ascontiguousarray(np.asarray(arr), dtype="<f4")
    if not np.isfinite(a).all():
        raise DataError("non-finite float payload")
    return a.tobytes()


def bundle_to_bytes(bundle):
    g = bundle.geometry
    caption = bundle.caption.encode("utf-8")
    d_vit = bundle.vit_keys.shape[1]
    parts = [
        MAGIC,
        struct.pack("<IIIHHHIIB", VERSION, g.image_w, g.image_h, g.patch_size,
                    g.grid_h, g.grid_w, d_vit, len(bundle.tokens), 0),
        struct.pack("<I", len(caption)), caption,
        struct.pack("<HHB", bundle.provenance.l_vl, bundle.provenance.l_vit,
                    HEAD_REDUCTION_TAGS[bundle.provenance.head_reduction]),
        _f32_bytes(bundle.vit_keys),
    ]
    for tok in bundle.tokens:
        text = tok.text.encode("utf-8")
        parts.append(struct.pack("<H", len(text)))
        parts.append(text)
        parts.append(struct.pack("<II", tok.char_start, tok.char_end))
        parts.append(_f32_bytes(tok.attention_row))
        parts.append(_f32_bytes(tok.gradient_row))
    return b"".join(parts)


def write_bundle(bundle, path):
    data = bundle_to_bytes(bundle)
    with open(path, "wb") as f:
        f.write(data)


class _Reader:
    def __init__(self, data):
        self.data = data
        self.offset = 0

    def take(self, n, what):
        if self.offset + n > len(self.data):
            raise FormatError(f"truncated while reading {what}", self.offset)
        chunk = self.data[self.offset:self.offset + n]
        self.offset += n
        return chunk

    def unpack(self, fmt, what):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))

    def floats(self, count, what):
        raw = self.take(4 * count, what)
        arr = np.frombuffer(raw, dtype="<f4").astype(np.float64)
        if not np.isfinite(arr).all():
            raise DataError(f"non-finite values in {what}")
        return arr


def bundle_from_bytes(data):
    r = _Reader(data)
    if r.take(4, "magic") != MAGIC:
        raise FormatError("bad magic", 0)
    (version, image_w, image_h, patch_size, grid_h, grid_w,
     d_vit, n_tokens, _flags) = r.unpack("<IIIHHHIIB", "header")
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", 4)
    (cap_len,) = r.unpack("<I", "caption length")
    caption = r.take(cap_len, "caption").decode("utf-8")
    l_vl, l_vit, tag = r.unpack("<HHB", "provenance")
    if tag not in _TAG_NAMES:
        raise FormatError(f"unknown head_reduction tag {tag}", r.offset - 1)

    try:
        geometry = GridGeometry(image_w, image_h, patch_size, grid_h, grid_w)
    except DataError as exc:
        raise FormatError(str(exc), 8) from exc
    n_p = geometry.n_patches
    keys = r.floats(n_p * d_vit, "ViT keys").reshape(n_p, d_vit)

    tokens = []
    for i in range(n_tokens):
        what = f"token {i}"
        (text_len,) = r.unpack("<H", what)
        text = r.take(text_len, what).decode("utf-8")
        char_start, char_end = r.unpack("<II", what)
        att = r.floats(n_p + 1, f"{what} attention row")
        grad = r.floats(n_p + 1, f"{what} gradient row")
        tokens.append(TokenRecord(text=text, char_start=char_start,
                                  char_end=char_end, attention_row=att,
                                  gradient_row=grad))
    if r.offset != len(data):
        raise FormatError(f"{len(data) - r.offset} trailing bytes", r.offset)
    return FeatureBundle(
        geometry=geometry, caption=caption, tokens=tuple(tokens), vit_keys=keys,
        provenance=Provenance(l_vl=l_vl, l_vit=l_vit, head_reduction=_TAG_NAMES[tag]),
    )


def read_bundle(path):
    with open(path, "rb") as f:
        return bundle_from_bytes(f.read())
