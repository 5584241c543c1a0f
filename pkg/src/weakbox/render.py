"""Overlay rendering: heatmap plus boxes as a binary PPM (P6) image."""

import numpy as np


def _ramp(norm):
    """Grayscale-to-red ramp for normalized values in [0, 1]."""
    r = np.clip(128 + 127 * norm, 0, 255)
    gb = np.clip(128 * (1.0 - norm), 0, 255)
    return np.stack([r, gb, gb], axis=-1).astype(np.uint8)


def render_overlay(bundle, heatmap, boxes, path):
    """Write heatmap upsampled to pixel scale with 2-px green box outlines."""
    g = bundle.geometry
    values = np.asarray(heatmap.values, dtype=np.float64).reshape(g.grid_h, g.grid_w)
    lo, hi = values.min(), values.max()
    norm = np.zeros_like(values) + 0.5 if hi == lo else (values - lo) / (hi - lo)
    pixels = _ramp(np.repeat(np.repeat(norm, g.patch_size, 0), g.patch_size, 1))
    pixels = pixels[:g.image_h, :g.image_w]

    green = np.array([0, 255, 0], dtype=np.uint8)
    for box in boxes:
        x0, y0 = int(round(box.x_min)), int(round(box.y_min))
        x1, y1 = int(round(box.x_max)), int(round(box.y_max))
        x0, y0 = max(x0, 0), max(y0, 0)
        x1, y1 = min(x1, g.image_w), min(y1, g.image_h)
        pixels[y0:min(y0 + 2, y1), x0:x1] = green
        pixels[max(y1 - 2, y0):y1, x0:x1] = green
        pixels[y0:y1, x0:min(x0 + 2, x1)] = green
        pixels[y0:y1, max(x1 - 2, x0):x1] = green

    with open(path, "wb") as f:
        f.write(f"P6\n{g.image_w} {g.image_h}\n255\n".encode("ascii"))
        f.write(pixels.tobytes())
