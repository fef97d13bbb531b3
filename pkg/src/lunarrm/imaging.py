"""PNG side outputs for visual inspection."""

import numpy as np
from PIL import Image


def save_heightmap_png(path, elevations):
    """16-bit grayscale, min-max normalized. Returns ``(min, max)`` in meters."""
    elev = np.asarray(elevations, dtype=np.float64)
    lo, hi = float(elev.min()), float(elev.max())
    scaled = (elev - lo) / (hi - lo) if hi > lo else np.zeros_like(elev)
    img = np.round(scaled * 65535).astype(np.uint16)
    Image.fromarray(img).save(path)
    return lo, hi


def save_normalized_png(path, normalized):
    """8-bit grayscale of a [0, 1] map."""
    img = np.round(np.clip(np.asarray(normalized, dtype=np.float64), 0, 1) * 255).astype(np.uint8)
    Image.fromarray(img, mode="L").save(path)


def save_binary_png(path, mask):
    """1-bit PNG (nonzero pixels white)."""
    Image.fromarray(np.asarray(mask) != 0).convert("1").save(path)
