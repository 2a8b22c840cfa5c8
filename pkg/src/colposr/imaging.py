"""Image, mask, and histogram primitives shared by the whole toolkit.

Images are numpy arrays in RGB order, row-major with origin at the top
left.  Two value conventions coexist: 8-bit integer images (``uint8``,
values 0..255) and unit-range float images (``float64``, values clamped
to [0, 1]).  Binary masks are ``uint8`` H x W arrays whose entries are
exactly 0 or 1; 0 marks a blacked-out pixel.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

CHANNELS = ("R", "G", "B")


def as_image_u8(data) -> np.ndarray:
    """Validate an 8-bit RGB image array and return it as uint8."""
    arr = np.asarray(data)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"expected an HxWx3 array, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"image must be at least 1x1, got shape {arr.shape}")
    if arr.dtype != np.uint8:
        if np.any((arr < 0) | (arr > 255)):
            raise ValueError("8-bit image values must lie in [0, 255]")
        arr = arr.astype(np.uint8)
    return arr


def as_image_f(data) -> np.ndarray:
    """Coerce to a unit-range float image, clamping to [0, 1] on construction."""
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"expected an HxWx3 array, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"image must be at least 1x1, got shape {arr.shape}")
    return np.clip(arr, 0.0, 1.0)


def as_mask(data) -> np.ndarray:
    """Validate a binary mask array (values exactly 0 or 1) as uint8."""
    arr = np.asarray(data)
    if arr.ndim != 2:
        raise ValueError(f"expected an HxW mask, got shape {arr.shape}")
    if not np.isin(arr, (0, 1)).all():
        raise ValueError("mask values must be exactly 0 or 1")
    return arr.astype(np.uint8)


@dataclass
class Histogram:
    """Per-channel intensity histogram with unit-width bins over 0..255."""

    bin_edges: np.ndarray  # 257 integer edges, 0..256
    counts: np.ndarray  # 256 non-negative counts
    channel: str  # one of R, G, B

    def __post_init__(self):
        self.bin_edges = np.asarray(self.bin_edges, dtype=np.int64)
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.bin_edges.shape != (257,) or self.counts.shape != (256,):
            raise ValueError("histogram needs 257 edges and 256 counts")
        if self.channel not in CHANNELS:
            raise ValueError(f"unknown channel {self.channel!r}")


def to_unit(img: np.ndarray) -> np.ndarray:
    """Map an 8-bit image to the unit range, value v -> v / 255."""
    return as_image_u8(img).astype(np.float64) / 255.0


def to_u8(img: np.ndarray) -> np.ndarray:
    """Quantize a unit-range image to 8 bits, rounding half up after x255.

    Exact inverse of :func:`to_unit`: ``to_u8(to_unit(x)) == x`` for every
    uint8 image ``x``.
    """
    arr = as_image_f(img)
    return np.floor(arr * 255.0 + 0.5).astype(np.uint8)


def pixel_intensity(img: np.ndarray, i: int, j: int) -> float:
    """Intensity of pixel (i, j): arithmetic mean of its three channels."""
    arr = as_image_u8(img)
    m, n = arr.shape[:2]
    if not (0 <= i < m and 0 <= j < n):
        raise IndexError(f"pixel ({i}, {j}) out of bounds for {m}x{n} image")
    r, g, b = arr[i, j]
    return (int(r) + int(g) + int(b)) / 3.0


def intensity_map(img: np.ndarray) -> np.ndarray:
    """Per-pixel mean-of-channels intensity as a float64 HxW array."""
    return as_image_u8(img).astype(np.float64).mean(axis=2)


def max_intensity(img: np.ndarray) -> float:
    """Maximum per-pixel intensity over the whole image."""
    arr = as_image_u8(img)
    if arr.size == 0:
        raise ValueError("cannot take the maximum intensity of an empty image")
    return float(intensity_map(arr).max())


def apply_mask(img: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Hadamard-mask an image: masked pixels (mask 0) go to black."""
    arr = as_image_f(img)
    m = as_mask(mask)
    if m.shape != arr.shape[:2]:
        raise ValueError(f"mask shape {m.shape} does not match image {arr.shape[:2]}")
    return arr * m[:, :, None]


def and_masks(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pointwise logical AND of two binary masks."""
    ma, mb = as_mask(a), as_mask(b)
    if ma.shape != mb.shape:
        raise ValueError(f"mask shapes differ: {ma.shape} vs {mb.shape}")
    return ma & mb


def channel_histogram(img: np.ndarray, channel: str) -> Histogram:
    """Histogram of one channel's 8-bit values; counts sum to m*n."""
    arr = as_image_u8(img)
    try:
        k = CHANNELS.index(channel)
    except ValueError:
        raise ValueError(f"unknown channel {channel!r}") from None
    counts = np.bincount(arr[:, :, k].ravel(), minlength=256)
    return Histogram(bin_edges=np.arange(257), counts=counts, channel=channel)


def read_image_png(path) -> np.ndarray:
    """Load an 8-bit RGB PNG."""
    with Image.open(path) as im:
        return as_image_u8(np.asarray(im.convert("RGB")))


def write_image_png(img: np.ndarray, path) -> None:
    """Write an 8-bit RGB image as PNG."""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(as_image_u8(img), mode="RGB").save(path, format="PNG")


def mask_from_u8(gray: np.ndarray) -> np.ndarray:
    """Decode the mask pixel convention: 0 -> 0, 255 -> 1, anything else fails."""
    gray = np.asarray(gray)
    bad = ~np.isin(gray, (0, 255))
    if bad.any():
        values = sorted(set(np.unique(gray[bad]).tolist()))
        raise ValueError(
            f"mask pixels must be 0 or 255; found {int(bad.sum())} other pixels "
            f"with values {values[:8]}"
        )
    return (gray == 255).astype(np.uint8)


def decode_mask_png_bytes(data: bytes) -> np.ndarray:
    """Decode an uploaded mask PNG, tolerating RGB(A) encodings of binary art.

    Browser canvases cannot emit single-channel PNGs, so color modes are
    accepted as long as the channels agree pixelwise, alpha is opaque, and
    the values are exactly 0 or 255.
    """
    import io

    try:
        im = Image.open(io.BytesIO(data))
    except Exception as err:
        raise ValueError(f"not a decodable PNG: {err}") from err
    with im:
        if im.mode == "L":
            gray = np.asarray(im)
        elif im.mode in ("LA", "RGB", "RGBA"):
            arr = np.asarray(im.convert("RGBA"))
            if not (arr[:, :, 3] == 255).all():
                raise ValueError("mask PNG must be fully opaque")
            if not ((arr[:, :, 0] == arr[:, :, 1]) & (arr[:, :, 0] == arr[:, :, 2])).all():
                raise ValueError("mask PNG channels disagree; not a binary mask")
            gray = arr[:, :, 0]
        else:
            raise ValueError(f"unsupported mask PNG mode {im.mode!r}")
    return mask_from_u8(gray)


def encode_mask_png_bytes(mask: np.ndarray) -> bytes:
    """Encode a binary mask as single-channel PNG bytes (0 -> 0, 1 -> 255)."""
    import io

    buf = io.BytesIO()
    Image.fromarray((as_mask(mask) * 255).astype(np.uint8), mode="L").save(buf, format="PNG")
    return buf.getvalue()


def encode_image_png_bytes(img: np.ndarray) -> bytes:
    """Encode an 8-bit RGB image as PNG bytes."""
    import io

    buf = io.BytesIO()
    Image.fromarray(as_image_u8(img), mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def read_mask_png(path) -> np.ndarray:
    """Load a binary mask from a single-channel PNG (0 -> 0, 255 -> 1)."""
    with Image.open(path) as im:
        if im.mode != "L":
            raise ValueError(
                f"mask PNG must be single-channel grayscale, got mode {im.mode!r}"
            )
        return mask_from_u8(np.asarray(im))


def write_mask_png(mask: np.ndarray, path) -> None:
    """Write a binary mask as a single-channel PNG (0 -> 0, 1 -> 255)."""
    m = as_mask(mask)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray((m * 255).astype(np.uint8), mode="L").save(path, format="PNG")
