"""Specular-reflection detection: bright pixels relative to the image maximum.

A pixel is flagged as specular when its mean-channel intensity exceeds
``threshold_factor`` times the image's maximum intensity.  The emitted
mask follows the convention 0 = specular, 1 = keep, so masking with it
blacks out exactly the detected region.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .imaging import as_image_u8, as_mask, intensity_map


@dataclass
class DetectorConfig:
    threshold_factor: float = 0.85
    dilation_radius: int = 0

    def __post_init__(self):
        if not (0.0 < self.threshold_factor <= 1.0):
            raise ValueError("threshold_factor must lie in (0, 1]")
        if self.dilation_radius < 0:
            raise ValueError("dilation_radius must be non-negative")


def detect_sr(img: np.ndarray, cfg: DetectorConfig | None = None) -> np.ndarray:
    """Detect specular pixels, returning the real mask (0 = specular).

    Pixels with intensity strictly above ``threshold_factor * max_intensity``
    are flagged, so every surviving pixel is at most the threshold.  A uniform
    non-black image is therefore flagged in its entirety; that degenerate case
    is deliberate (a relative threshold has no absolute floor).
    """
    cfg = cfg or DetectorConfig()
    arr = as_image_u8(img)
    if arr.size == 0:
        raise ValueError("cannot detect specular reflections in an empty image")
    intensity = intensity_map(arr)
    threshold = cfg.threshold_factor * intensity.max()
    mask = (intensity <= threshold).astype(np.uint8)
    if cfg.dilation_radius > 0:
        mask = dilate_sr(mask, cfg.dilation_radius)
    return mask


def dilate_sr(mask: np.ndarray, radius: int) -> np.ndarray:
    """Grow the specular (zero) region by a Chebyshev-distance radius.

    Equivalent to a minimum filter with a (2r+1)^2 square window clipped at
    the image borders; radius 0 is the identity.
    """
    if radius < 0:
        raise ValueError("dilation radius must be non-negative")
    m = as_mask(mask)
    if radius == 0:
        return m
    # Nearest-edge padding replicates in-bounds pixels, so the filtered
    # minimum equals the minimum over the clipped window.
    return ndimage.minimum_filter(m, size=2 * radius + 1, mode="nearest")
