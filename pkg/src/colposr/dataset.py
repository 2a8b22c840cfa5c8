"""Dataset construction: hidden masks, training tuples, splits, synthetic corpus.

The training reformulation needs, per image, a real mask (detected specular
pixels) and one or more hidden masks covering deliberately blacked-out,
specular-free regions whose true content is known.  This module builds those
masks, assembles (input, target) sample tuples, partitions a corpus into
patient-disjoint splits, and synthesizes a stand-in corpus when no clinical
images are available.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .detect import DetectorConfig, detect_sr
from .imaging import (
    apply_mask,
    as_image_u8,
    as_mask,
    intensity_map,
    read_image_png,
    read_mask_png,
    to_unit,
    write_image_png,
    write_mask_png,
)


class HiddenMaskError(RuntimeError):
    """Raised when no valid hidden region can be generated."""


class MaskValidationError(ValueError):
    """Raised for annotation masks that violate the dataset invariants."""

    def __init__(self, message: str, offending_pixels: int = 0):
        super().__init__(message)
        self.offending_pixels = offending_pixels


class SplitError(ValueError):
    """Raised when requested split counts cannot be satisfied."""


@dataclass
class CorpusImage:
    image_id: str
    patient_id: str
    image: np.ndarray  # uint8 HxWx3
    real_mask: np.ndarray  # uint8 HxW, 0 = specular

    def __post_init__(self):
        self.image = as_image_u8(self.image)
        self.real_mask = as_mask(self.real_mask)
        if self.real_mask.shape != self.image.shape[:2]:
            raise ValueError("real mask dimensions must equal image dimensions")


@dataclass
class Sample:
    """One training tuple: masked input, the two masks, and the known target."""

    input_image: np.ndarray  # float HxWx3, target with hidden regions blacked
    retain_mask: np.ndarray  # real mask: black pixels to keep black
    restore_mask: np.ndarray  # hidden mask: black pixels to reconstruct
    target_image: np.ndarray  # float HxWx3, image with only specular pixels black
    image_id: str = ""


@dataclass
class HiddenRegionPolicy:
    num_regions: tuple[int, int] = (1, 4)
    region_area_fraction: tuple[float, float] = (0.002, 0.05)
    shape_family: tuple[str, ...] = ("ellipse", "random-blob", "brush-stroke")
    rng_seed: int = 0

    def __post_init__(self):
        lo, hi = self.region_area_fraction
        if not (0.0 <= lo <= hi < 1.0):
            raise ValueError("area fractions must satisfy 0 <= min <= max < 1")
        if self.num_regions[0] > self.num_regions[1] or self.num_regions[0] < 1:
            raise ValueError("num_regions range must satisfy 1 <= min <= max")
        unknown = set(self.shape_family) - {"ellipse", "random-blob", "brush-stroke"}
        if unknown:
            raise ValueError(f"unknown shape families: {sorted(unknown)}")


@dataclass
class SplitSpec:
    train_count: int
    val_count: int
    test_count: int
    assignment: dict[str, str] = field(default_factory=dict)

    @classmethod
    def from_corpus_size(cls, n: int) -> "SplitSpec":
        """Scale the reference 120/20/22 train/val/test proportions to n images."""
        train = round(n * 120 / 162)
        val = round(n * 20 / 162)
        return cls(train_count=train, val_count=val, test_count=n - train - val)


def _image_rng(seed: int, image_id: str) -> np.random.Generator:
    """Independent per-image stream so corpus work can run in parallel."""
    return np.random.default_rng([seed, zlib.crc32(image_id.encode())])


def _stamp_ellipse(rng, shape, center, area_px):
    m, n = shape
    aspect = rng.uniform(0.4, 1.0)
    # a * b * pi = area, b = aspect * a
    a = max(0.5, math.sqrt(area_px / (math.pi * aspect)))
    b = max(0.5, aspect * a)
    theta = rng.uniform(0.0, math.pi)
    ii, jj = np.mgrid[0:m, 0:n]
    di, dj = ii - center[0], jj - center[1]
    u = di * math.cos(theta) + dj * math.sin(theta)
    v = -di * math.sin(theta) + dj * math.cos(theta)
    out = (u / a) ** 2 + (v / b) ** 2 <= 1.0
    out[center] = True
    return out


def _stamp_disc(canvas, center, radius):
    m, n = canvas.shape
    r = int(math.ceil(radius))
    i0, i1 = max(0, center[0] - r), min(m, center[0] + r + 1)
    j0, j1 = max(0, center[1] - r), min(n, center[1] + r + 1)
    ii, jj = np.mgrid[i0:i1, j0:j1]
    canvas[i0:i1, j0:j1] |= (ii - center[0]) ** 2 + (jj - center[1]) ** 2 <= radius**2


def _stamp_blob(rng, shape, center, area_px):
    out = np.zeros(shape, dtype=bool)
    radius = max(1.0, math.sqrt(area_px / math.pi) / 2.0)
    pos = np.array(center, dtype=float)
    while out.sum() < area_px:
        _stamp_disc(out, (int(round(pos[0])), int(round(pos[1]))), radius)
        pos += rng.normal(0.0, radius, size=2)
        pos[0] = np.clip(pos[0], 0, shape[0] - 1)
        pos[1] = np.clip(pos[1], 0, shape[1] - 1)
    return out


def _stamp_stroke(rng, shape, center, area_px):
    out = np.zeros(shape, dtype=bool)
    width = max(0.7, math.sqrt(area_px) / 4.0)
    pos = np.array(center, dtype=float)
    angle = rng.uniform(0.0, 2.0 * math.pi)
    while out.sum() < area_px:
        _stamp_disc(out, (int(round(pos[0])), int(round(pos[1]))), width)
        angle += rng.normal(0.0, 0.4)
        pos += np.array([math.sin(angle), math.cos(angle)])
        pos[0] = np.clip(pos[0], 0, shape[0] - 1)
        pos[1] = np.clip(pos[1], 0, shape[1] - 1)
    return out


_STAMPS = {
    "ellipse": _stamp_ellipse,
    "random-blob": _stamp_blob,
    "brush-stroke": _stamp_stroke,
}


def _pick_center(rng, allowed, weights):
    flat = np.flatnonzero(allowed)
    if rng.random() < 0.5 and weights is not None:
        w = weights.ravel()[flat]
        total = w.sum()
        if total > 0:
            idx = rng.choice(flat, p=w / total)
            return np.unravel_index(idx, allowed.shape)
    return np.unravel_index(rng.choice(flat), allowed.shape)


def generate_hidden_mask(img: CorpusImage, policy: HiddenRegionPolicy) -> np.ndarray:
    """Sample a hidden mask over the specular-free area of ``img``.

    The zero (hidden) set avoids every real-mask zero, its total area
    fraction lands inside the policy range, and the result is a pure
    function of (policy.rng_seed, image_id).  Region centers mix targeted
    placement (probability proportional to intensity-gradient magnitude,
    a proxy for visually distinctive tissue) with uniform placement, 50/50.
    """
    rng = _image_rng(policy.rng_seed, img.image_id)
    m, n = img.real_mask.shape
    lo, hi = policy.region_area_fraction
    if hi == 0.0:
        return np.ones((m, n), dtype=np.uint8)

    allowed = img.real_mask == 1
    if not allowed.any():
        raise HiddenMaskError(
            f"image {img.image_id}: fully covered by specular pixels, "
            "no hidden region can be placed"
        )

    cap_px = math.floor(hi * m * n)
    need_px = max(1, math.ceil(lo * m * n)) if lo > 0 else 1
    if cap_px < need_px:
        if lo == 0.0:
            return np.ones((m, n), dtype=np.uint8)
        raise HiddenMaskError(
            f"image {img.image_id}: area fraction range {policy.region_area_fraction} "
            f"admits no whole pixel count on a {m}x{n} image"
        )

    gi, gj = np.gradient(intensity_map(img.image))
    weights = np.hypot(gi, gj)

    target_px = min(cap_px, max(need_px, round(rng.uniform(lo, hi) * m * n)))
    k = int(rng.integers(policy.num_regions[0], policy.num_regions[1] + 1))
    shares = rng.dirichlet(np.ones(k)) * target_px

    hidden = np.zeros((m, n), dtype=bool)
    order: list[np.ndarray] = []  # flat indices in stamping order, for trimming

    def add_region(area_px: float) -> None:
        center = _pick_center(rng, allowed, weights)
        family = policy.shape_family[int(rng.integers(len(policy.shape_family)))]
        stamp = _STAMPS[family](rng, (m, n), center, max(1.0, area_px))
        new = stamp & allowed & ~hidden
        hidden[new] = True
        if new.any():
            order.append(np.flatnonzero(new))

    for share in shares:
        add_region(share)
    attempts = 0
    while hidden.sum() < need_px and attempts < 10 * k + 50:
        add_region(max(1.0, need_px - hidden.sum()))
        attempts += 1
    if hidden.sum() < need_px:
        raise HiddenMaskError(
            f"image {img.image_id}: could not place {need_px} hidden pixels "
            f"outside the specular region after {attempts} extra attempts"
        )

    # trim the most recently stamped pixels if overlap bookkeeping overshot
    excess = int(hidden.sum()) - cap_px
    while excess > 0 and order:
        tail = order.pop()
        k = min(excess, tail.size)
        hidden.ravel()[tail[-k:]] = False
        excess -= k

    return (~hidden).astype(np.uint8)


def import_annotation_mask(file, img: CorpusImage) -> np.ndarray:
    """Load and validate a manually painted hidden mask for ``img``.

    Rejects masks whose dimensions differ from the image or whose hidden
    pixels overlap detected specular pixels (hidden regions must lie in
    known, specular-free territory).
    """
    mask = read_mask_png(file)
    return validate_hidden_mask(mask, img)


def validate_hidden_mask(mask: np.ndarray, img: CorpusImage) -> np.ndarray:
    mask = as_mask(mask)
    if mask.shape != img.real_mask.shape:
        raise MaskValidationError(
            f"mask shape {mask.shape} does not match image {img.real_mask.shape}"
        )
    overlap = int(((mask == 0) & (img.real_mask == 0)).sum())
    if overlap:
        raise MaskValidationError(
            f"hidden mask overlaps the specular region on {overlap} pixel(s)",
            offending_pixels=overlap,
        )
    return mask


def build_sample(img: CorpusImage, hidden: np.ndarray) -> Sample:
    """Assemble the training tuple for one image and one hidden mask."""
    hidden = validate_hidden_mask(hidden, img)
    target = apply_mask(to_unit(img.image), img.real_mask)
    return Sample(
        input_image=apply_mask(target, hidden),
        retain_mask=img.real_mask,
        restore_mask=hidden,
        target_image=target,
        image_id=img.image_id,
    )


def split_corpus(
    corpus: list[CorpusImage], spec: SplitSpec
) -> tuple[list[CorpusImage], list[CorpusImage], list[CorpusImage]]:
    """Partition a corpus patient-disjointly into train/val/test.

    All images of a patient land in the same split.  Target counts are
    honored as closely as the patient grouping allows, assigning larger
    patient groups first to the split with the largest remaining deficit.
    The computed patient assignment is recorded on ``spec.assignment``.
    """
    total = spec.train_count + spec.val_count + spec.test_count
    if total != len(corpus):
        raise SplitError(
            f"split counts sum to {total} but the corpus has {len(corpus)} images "
            f"(difference {len(corpus) - total})"
        )

    groups: dict[str, list[CorpusImage]] = {}
    for ci in corpus:
        groups.setdefault(ci.patient_id, []).append(ci)

    splits = {"train": [], "val": [], "test": []}
    if spec.assignment:
        missing = set(groups) - set(spec.assignment)
        if missing:
            raise SplitError(f"assignment misses patients: {sorted(missing)}")
        for pid, images in groups.items():
            splits[spec.assignment[pid]].extend(images)
    else:
        targets = {
            "train": spec.train_count,
            "val": spec.val_count,
            "test": spec.test_count,
        }
        counts = {name: 0 for name in splits}
        for pid in sorted(groups, key=lambda p: (-len(groups[p]), p)):
            name = max(splits, key=lambda s: (targets[s] - counts[s], s == "train", s == "val"))
            spec.assignment[pid] = name
            counts[name] += len(groups[pid])
            splits[name].extend(groups[pid])

    return splits["train"], splits["val"], splits["test"]


def _smooth_field(rng, shape, components=3):
    m, n = shape
    ii, jj = np.mgrid[0:m, 0:n]
    out = np.zeros(shape)
    for _ in range(components):
        fi, fj = rng.uniform(0.5, 2.5, size=2)
        phase = rng.uniform(0.0, 2.0 * math.pi)
        out += np.cos(2.0 * math.pi * (fi * ii / m + fj * jj / n) + phase)
    return out / components


def _synth_image(rng, m, n, patient_color):
    ii, jj = np.mgrid[0:m, 0:n]
    img = np.empty((m, n, 3))

    shared = _smooth_field(rng, (m, n))
    for k in range(3):
        img[:, :, k] = patient_color[k] + 0.03 * shared + 0.02 * _smooth_field(rng, (m, n))

    # darker cervical-os ellipse near the image center, soft edged
    ci = m / 2 + rng.uniform(-0.1, 0.1) * m
    cj = n / 2 + rng.uniform(-0.1, 0.1) * n
    ra = rng.uniform(0.10, 0.18) * m
    rb = rng.uniform(0.10, 0.18) * n
    d = ((ii - ci) / ra) ** 2 + ((jj - cj) / rb) ** 2
    os_depth = rng.uniform(0.08, 0.14)
    img -= (os_depth / (1.0 + np.exp(8.0 * (d - 1.0))))[:, :, None]

    # thin vessel-like dark red curves
    vessels = np.zeros((m, n), dtype=bool)
    for _ in range(rng.integers(2, 5)):
        pos = np.array([rng.uniform(0, m - 1), rng.uniform(0, n - 1)])
        angle = rng.uniform(0.0, 2.0 * math.pi)
        for _ in range(int(1.2 * max(m, n))):
            vessels[int(round(pos[0])), int(round(pos[1]))] = True
            angle += rng.normal(0.0, 0.3)
            pos += np.array([math.sin(angle), math.cos(angle)])
            if not (0 <= pos[0] <= m - 1 and 0 <= pos[1] <= n - 1):
                break
    img[vessels] -= np.array([0.06, 0.12, 0.10])

    # cap the anatomy well below the detection threshold, then inject
    # specular blobs whose cores saturate near white
    img = np.clip(img, 0.02, 0.78)
    for _ in range(rng.integers(1, 5)):
        bi, bj = rng.uniform(0.1, 0.9) * m, rng.uniform(0.1, 0.9) * n
        sigma = rng.uniform(0.7, 0.025 * max(m, n) + 0.8)
        fall = np.exp(-(((ii - bi) ** 2 + (jj - bj) ** 2) / (2.0 * sigma**2)))
        img = img + (1.0 - img) * fall[:, :, None]

    u8 = np.floor(np.clip(img, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
    # force at least one fully saturated core pixel per image
    bi, bj = int(round(bi)), int(round(bj))
    u8[np.clip(bi, 0, m - 1), np.clip(bj, 0, n - 1)] = 255
    return u8


def synth_corpus(
    count: int,
    size: tuple[int, int] = (64, 64),
    seed: int = 0,
    images_per_patient: int = 3,
    detector: DetectorConfig | None = None,
) -> list[CorpusImage]:
    """Generate a procedural stand-in corpus with injected specular blobs.

    Every image carries a near-saturated highlight so the detector always
    finds a nonempty specular mask, while the surrounding tissue stays
    below the detection threshold.  Patient ids embed the seed, so corpora
    generated with different seeds never share a patient.
    """
    if count < 1:
        raise ValueError("corpus must contain at least one image")
    m, n = size
    corpus = []
    for k in range(count):
        pid = k // images_per_patient
        prng = np.random.default_rng([seed, 100_000 + pid])
        patient_color = np.array([0.62, 0.36, 0.40]) + prng.uniform(-0.05, 0.05, size=3)
        image = _synth_image(np.random.default_rng([seed, k]), m, n, patient_color)
        corpus.append(
            CorpusImage(
                image_id=f"s{seed}-img{k:03d}",
                patient_id=f"s{seed}-pat{pid:03d}",
                image=image,
                real_mask=detect_sr(image, detector),
            )
        )
    return corpus


def resize_corpus_image(ci: CorpusImage, size: tuple[int, int]) -> CorpusImage:
    """Resize to (height, width): bilinear for the image, nearest for the mask."""
    m, n = size
    img = Image.fromarray(ci.image, mode="RGB").resize((n, m), Image.BILINEAR)
    mask = Image.fromarray(ci.real_mask * 255, mode="L").resize((n, m), Image.NEAREST)
    return CorpusImage(
        image_id=ci.image_id,
        patient_id=ci.patient_id,
        image=np.asarray(img),
        real_mask=(np.asarray(mask) == 255).astype(np.uint8),
    )


@dataclass
class ManifestEntry:
    image_id: str
    patient_id: str
    image_path: str
    real_mask_path: str
    hidden_mask_paths: list[str] = field(default_factory=list)
    version: int = 0


def write_manifest(entries: list[ManifestEntry], path) -> None:
    """Write the corpus manifest (JSON lines) atomically."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = "".join(json.dumps(vars(e)) + "\n" for e in entries)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_manifest(path) -> list[ManifestEntry]:
    entries = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                entries.append(ManifestEntry(**json.loads(line)))
    return entries


def save_corpus(corpus: list[CorpusImage], out_dir, manifest_name="corpus.jsonl") -> Path:
    """Persist a corpus as PNGs plus a JSON-lines manifest; returns its path."""
    out = Path(out_dir)
    entries = []
    for ci in corpus:
        image_path = f"images/{ci.image_id}.png"
        mask_path = f"masks/{ci.image_id}_real.png"
        write_image_png(ci.image, out / image_path)
        write_mask_png(ci.real_mask, out / mask_path)
        entries.append(
            ManifestEntry(
                image_id=ci.image_id,
                patient_id=ci.patient_id,
                image_path=image_path,
                real_mask_path=mask_path,
            )
        )
    manifest = out / manifest_name
    write_manifest(entries, manifest)
    return manifest


def load_corpus(manifest_path) -> list[CorpusImage]:
    root = Path(manifest_path).parent
    return [
        CorpusImage(
            image_id=e.image_id,
            patient_id=e.patient_id,
            image=read_image_png(root / e.image_path),
            real_mask=read_mask_png(root / e.real_mask_path),
        )
        for e in read_manifest(manifest_path)
    ]


def build_samples(
    corpus: list[CorpusImage],
    policy: HiddenRegionPolicy,
    masks_per_image: int = 1,
) -> list[Sample]:
    """Generate hidden masks and assemble one sample per (image, mask) pair."""
    samples = []
    for ci in corpus:
        for j in range(masks_per_image):
            sub = HiddenRegionPolicy(
                num_regions=policy.num_regions,
                region_area_fraction=policy.region_area_fraction,
                shape_family=policy.shape_family,
                rng_seed=policy.rng_seed + j,
            )
            samples.append(build_sample(ci, generate_hidden_mask(ci, sub)))
    return samples


class BuiltDataset:
    """On-disk training dataset: resized corpus images, masks, and splits."""

    def __init__(self, root):
        self.root = Path(root)
        self.meta = json.loads((self.root / "dataset.json").read_text())

    def split_ids(self, split: str) -> list[str]:
        return list(self.meta["splits"][split])

    def corpus(self, split: str) -> list[CorpusImage]:
        patients = self.meta["patients"]
        return [
            CorpusImage(
                image_id=image_id,
                patient_id=patients[image_id],
                image=read_image_png(self.root / "images" / f"{image_id}.png"),
                real_mask=read_mask_png(self.root / "masks" / f"{image_id}_real.png"),
            )
            for image_id in self.split_ids(split)
        ]

    def samples(self, split: str) -> list[Sample]:
        out = []
        for ci in self.corpus(split):
            for rel in self.meta["hidden_masks"][ci.image_id]:
                out.append(build_sample(ci, read_mask_png(self.root / rel)))
        return out


def build_dataset_dir(
    corpus: list[CorpusImage],
    policy: HiddenRegionPolicy,
    split_spec: SplitSpec,
    out_dir,
    resolution: tuple[int, int] | None = None,
    masks_per_image: int = 1,
) -> BuiltDataset:
    """Materialize the training dataset under ``out_dir``.

    Images are resized to the training resolution first (masks re-detected
    implicitly through nearest-neighbor resizing), then hidden masks are
    generated per image and everything is written as PNG plus a dataset.json
    index holding splits, patients, and generation parameters.
    """
    out = Path(out_dir)
    if resolution is not None:
        corpus = [resize_corpus_image(ci, resolution) for ci in corpus]
    train, val, test = split_corpus(corpus, split_spec)

    hidden_masks: dict[str, list[str]] = {}
    patients: dict[str, str] = {}
    for ci in corpus:
        patients[ci.image_id] = ci.patient_id
        write_image_png(ci.image, out / "images" / f"{ci.image_id}.png")
        write_mask_png(ci.real_mask, out / "masks" / f"{ci.image_id}_real.png")
        rels = []
        for j in range(masks_per_image):
            sub = HiddenRegionPolicy(
                num_regions=policy.num_regions,
                region_area_fraction=policy.region_area_fraction,
                shape_family=policy.shape_family,
                rng_seed=policy.rng_seed + j,
            )
            mask = generate_hidden_mask(ci, sub)
            rel = f"masks/{ci.image_id}_hidden_{j}.png"
            write_mask_png(mask, out / rel)
            rels.append(rel)
        hidden_masks[ci.image_id] = rels

    meta = {
        "resolution": list(resolution) if resolution else None,
        "masks_per_image": masks_per_image,
        "policy": {
            "num_regions": list(policy.num_regions),
            "region_area_fraction": list(policy.region_area_fraction),
            "shape_family": list(policy.shape_family),
            "rng_seed": policy.rng_seed,
        },
        "splits": {
            "train": [ci.image_id for ci in train],
            "val": [ci.image_id for ci in val],
            "test": [ci.image_id for ci in test],
        },
        "assignment": dict(split_spec.assignment),
        "patients": patients,
        "hidden_masks": hidden_masks,
    }
    (out / "dataset.json").write_text(json.dumps(meta, indent=2))
    return BuiltDataset(out)
