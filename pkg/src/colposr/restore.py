"""Apply a trained network to hidden regions or to detected specular regions.

Both entry points assemble a 5-channel input and route through the same
network; they differ only in which image and mask pair they feed it.  For
hidden regions the input is the doubly masked image with (real, hidden)
masks.  For specular removal the input is the singly masked image, the
retain mask is all ones, and the restore mask is the real mask.
"""

from __future__ import annotations

import numpy as np

from .dataset import CorpusImage, Sample
from .imaging import apply_mask, as_image_f, as_mask, to_unit
from .network import Model, assemble_input, forward


def restore_hidden(model: Model, sample: Sample) -> np.ndarray:
    """Reconstruct a sample's hidden regions; returns the raw network output."""
    x = assemble_input(sample.input_image, sample.retain_mask, sample.restore_mask)
    return forward(model, x, mode="eval")


def restore_sr(model: Model, img: CorpusImage) -> np.ndarray:
    """Reconstruct the content under the detected specular regions."""
    masked = apply_mask(to_unit(img.image), img.real_mask)
    ones = np.ones_like(img.real_mask)
    return forward(model, assemble_input(masked, ones, img.real_mask), mode="eval")


def composite(raw_output: np.ndarray, input_img: np.ndarray, keep_mask: np.ndarray) -> np.ndarray:
    """Optionally keep original pixels: input where mask 1, network output where 0."""
    raw = as_image_f(raw_output)
    src = as_image_f(input_img)
    keep = as_mask(keep_mask)
    if raw.shape != src.shape or keep.shape != raw.shape[:2]:
        raise ValueError("composite inputs must share dimensions")
    sel = keep[:, :, None].astype(bool)
    return np.where(sel, src, raw)
