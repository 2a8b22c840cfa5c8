"""Quantitative evaluation of restored images.

All metrics run on 8-bit images (restored network outputs are quantized
first), so errors are integers in 0..255.  Covered: per-channel supremum
errors, absolute-error distributions and range percentages, maximum-
intensity bookkeeping for the specular-removal verdict, and per-channel
histogram overlays written as CSV plus a rendered figure.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .dataset import CorpusImage
from .detect import DetectorConfig
from .imaging import CHANNELS, Histogram, as_image_u8, channel_histogram, intensity_map

# absolute-error bands, half-open above so every error lands in exactly one
ERROR_RANGES = ((0, 25), (25, 50), (50, 255))
RANGE_LABELS = ("0-25", "25-50", "50-255")


@dataclass
class EvalReport:
    image_id: str
    sup_errors: tuple[int, int, int]  # per channel R, G, B
    range_pcts: list[list[float]]  # [channel][range], rows sum to 100
    int_max_I: float | None = None
    int_max_prime: float | None = None
    int_max_r: float | None = None
    sr_removed: bool | None = None
    mse: float | None = None
    extras: dict = field(default_factory=dict)

    def to_json(self) -> str:
        data = vars(self).copy()
        data["sup_errors"] = list(self.sup_errors)
        return json.dumps(data, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        data = json.loads(text)
        data["sup_errors"] = tuple(data["sup_errors"])
        return cls(**data)


def _abs_errors(expected: np.ndarray, restored: np.ndarray) -> np.ndarray:
    a = as_image_u8(expected).astype(np.int16)
    b = as_image_u8(restored).astype(np.int16)
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    return np.abs(a - b)


def sup_norm_errors(expected: np.ndarray, restored: np.ndarray) -> tuple[int, int, int]:
    """Per-channel maximum absolute pixel difference, in 0..255 units."""
    err = _abs_errors(expected, restored)
    return tuple(int(err[:, :, k].max()) for k in range(3))


def error_range_table(expected: np.ndarray, restored: np.ndarray) -> list[list[float]]:
    """Percentage of pixels per channel whose absolute error falls in each band.

    Band convention: [0, 25], (25, 50], (50, 255], so shared endpoints are
    counted exactly once and each channel row sums to 100.
    """
    err = _abs_errors(expected, restored)
    total = err.shape[0] * err.shape[1]
    table = []
    for k in range(3):
        e = err[:, :, k]
        row = [
            float(((e > lo) & (e <= hi)).sum() if lo else (e <= hi).sum()) / total * 100.0
            for lo, hi in ERROR_RANGES
        ]
        table.append(row)
    return table


def abs_error_histogram(expected: np.ndarray, restored: np.ndarray, channel: str) -> Histogram:
    """Distribution of one channel's absolute errors over the 0..255 bins."""
    err = _abs_errors(expected, restored)
    k = CHANNELS.index(channel)
    counts = np.bincount(err[:, :, k].ravel(), minlength=256)
    return Histogram(bin_edges=np.arange(257), counts=counts, channel=channel)


def sr_removal_verdict(
    img: CorpusImage, restored: np.ndarray, cfg: DetectorConfig | None = None
) -> tuple[float, float, float, bool]:
    """Maximum-intensity triple and the removal verdict for one image.

    Removal holds when the restored image's maximum intensity stays below the
    brightest intensity the detector left untouched: whatever the detector
    called specular does not reappear.
    """
    restored = as_image_u8(restored)
    if restored.shape != img.image.shape:
        raise ValueError("restored image dimensions must match the original")
    intensity = intensity_map(img.image)
    int_max_i = float(intensity.max())
    kept = intensity[img.real_mask == 1]
    if kept.size == 0:
        raise ValueError(
            f"image {img.image_id}: every pixel is specular, no surviving intensity"
        )
    int_max_prime = float(kept.max())
    int_max_r = float(intensity_map(restored).max())
    return int_max_i, int_max_prime, int_max_r, int_max_prime > int_max_r


def histogram_overlay_report(
    expected: np.ndarray, restored: np.ndarray, out, stem: str = "histogram"
) -> dict[str, Path]:
    """Write per-channel intensity histograms of both images: CSV + overlay figure."""
    expected = as_image_u8(expected)
    restored = as_image_u8(restored)
    if expected.shape != restored.shape:
        raise ValueError("images must share dimensions")
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)

    expected_hists = {ch: channel_histogram(expected, ch) for ch in CHANNELS}
    restored_hists = {ch: channel_histogram(restored, ch) for ch in CHANNELS}

    csv_path = out / f"{stem}.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["value"]
            + [f"expected_{ch}" for ch in CHANNELS]
            + [f"restored_{ch}" for ch in CHANNELS]
        )
        for v in range(256):
            writer.writerow(
                [v]
                + [int(expected_hists[ch].counts[v]) for ch in CHANNELS]
                + [int(restored_hists[ch].counts[v]) for ch in CHANNELS]
            )

    fig, axes = plt.subplots(3, 1, figsize=(8, 9), sharex=True)
    colors = {"R": "red", "G": "green", "B": "blue"}
    for ax, ch in zip(axes, CHANNELS):
        ax.bar(range(256), expected_hists[ch].counts, width=1.0, color=colors[ch],
               alpha=0.6, label="expected")
        ax.bar(range(256), restored_hists[ch].counts, width=1.0, color="gray",
               alpha=0.6, label="restored")
        ax.set_ylabel(f"{ch} count")
        ax.legend(loc="upper right")
    axes[-1].set_xlabel("intensity")
    fig.tight_layout()
    fig_path = out / f"{stem}.png"
    fig.savefig(fig_path, dpi=110)
    plt.close(fig)

    return {"csv": csv_path, "figure": fig_path}
