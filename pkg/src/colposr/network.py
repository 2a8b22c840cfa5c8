"""Fully convolutional completion network: encoder, dilated bottleneck, decoder.

Seventeen layers: two stride-2 stages shrink the resolution to a quarter,
dilations 2/4/8/16 widen the receptive field there, and two transposed
convolutions upsample back.  Input is an RGB image plus two binary mask
channels (retain, restore); output is an RGB image squashed to [0, 1] by a
final sigmoid.  Every layer except the output carries batch normalization
and ReLU.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .imaging import as_image_f, as_mask


@dataclass
class LayerSpec:
    kind: str  # conv | dilated-conv | deconv | output
    kernel: int
    dilation: int
    stride: float  # 2 = downsample x2, 0.5 = upsample x2
    filters: int
    has_batchnorm: bool
    activation: str  # relu | sigmoid

    def __post_init__(self):
        if self.kind not in ("conv", "dilated-conv", "deconv", "output"):
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.dilation < 1 or self.filters < 1:
            raise ValueError("dilation and filters must be >= 1")
        if self.activation not in ("relu", "sigmoid"):
            raise ValueError(f"unknown activation {self.activation!r}")


# (kind, kernel, dilation, stride, filters) rows of the completion network
_BASE_LAYERS = (
    ("conv", 5, 1, 1, 32),
    ("conv", 3, 1, 2, 64),
    ("conv", 3, 1, 1, 64),
    ("conv", 3, 1, 2, 128),
    ("conv", 3, 1, 1, 128),
    ("conv", 3, 1, 1, 128),
    ("dilated-conv", 3, 2, 1, 128),
    ("dilated-conv", 3, 4, 1, 128),
    ("dilated-conv", 3, 8, 1, 128),
    ("dilated-conv", 3, 16, 1, 128),
    ("conv", 3, 1, 1, 128),
    ("conv", 3, 1, 1, 128),
    ("deconv", 4, 1, 0.5, 64),
    ("conv", 3, 1, 1, 64),
    ("deconv", 4, 1, 0.5, 32),
    ("conv", 3, 1, 1, 16),
    ("output", 3, 1, 1, 3),
)

INPUT_CHANNELS = 5
DOWNSAMPLE_FACTOR = 4  # two stride-2 stages


def _scaled_filters(base: int, width_multiplier: float) -> int:
    return max(1, round(base * width_multiplier))


@dataclass
class ModelSpec:
    layers: list[LayerSpec] = field(default_factory=list)
    input_channels: int = INPUT_CHANNELS
    width_multiplier: float = 1.0

    def __post_init__(self):
        if not self.layers:
            self.layers = [
                LayerSpec(
                    kind=kind,
                    kernel=kernel,
                    dilation=dilation,
                    stride=float(stride),
                    filters=f if kind == "output" else _scaled_filters(f, self.width_multiplier),
                    has_batchnorm=kind != "output",
                    activation="sigmoid" if kind == "output" else "relu",
                )
                for kind, kernel, dilation, stride, f in _BASE_LAYERS
            ]
        sigmoids = [i for i, l in enumerate(self.layers) if l.activation == "sigmoid"]
        if sigmoids != [len(self.layers) - 1]:
            raise ValueError("exactly the last layer must use a sigmoid activation")
        if self.layers[-1].has_batchnorm or not all(
            l.has_batchnorm for l in self.layers[:-1]
        ):
            raise ValueError("all layers except the last must carry batch normalization")

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "ModelSpec":
        raw = json.loads(text)
        raw["layers"] = [LayerSpec(**l) for l in raw["layers"]]
        return cls(**raw)


class Model(nn.Module):
    """Network instance built from a :class:`ModelSpec`; NCHW tensors."""

    def __init__(self, spec: ModelSpec):
        super().__init__()
        self.spec = spec
        convs, norms = [], []
        in_ch = spec.input_channels
        for layer in spec.layers:
            if layer.stride == 0.5:
                conv = nn.ConvTranspose2d(
                    in_ch, layer.filters, layer.kernel, stride=2, padding=1
                )
            else:
                conv = nn.Conv2d(
                    in_ch,
                    layer.filters,
                    layer.kernel,
                    stride=int(layer.stride),
                    dilation=layer.dilation,
                    # zero "same" padding so resolutions track the stride column
                    padding=layer.dilation * (layer.kernel - 1) // 2,
                )
            convs.append(conv)
            norms.append(
                # running stats decay 0.99 (torch momentum is the batch weight)
                nn.BatchNorm2d(layer.filters, eps=1e-5, momentum=0.01)
                if layer.has_batchnorm
                else nn.Identity()
            )
            in_ch = layer.filters
        self.convs = nn.ModuleList(convs)
        self.norms = nn.ModuleList(norms)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        for layer, conv, norm in zip(self.spec.layers, self.convs, self.norms):
            x = norm(conv(x))
            x = torch.relu(x) if layer.activation == "relu" else torch.sigmoid(x)
        return x


def build_model(spec: ModelSpec, init_seed: int) -> Model:
    """Instantiate the network with seeded fan-in-scaled uniform weights."""
    model = Model(spec)
    g = torch.Generator().manual_seed(init_seed)
    for layer, conv, norm in zip(spec.layers, model.convs, model.norms):
        if layer.activation == "relu":
            nn.init.kaiming_uniform_(conv.weight, nonlinearity="relu", generator=g)
        else:
            nn.init.xavier_uniform_(conv.weight, generator=g)
        nn.init.zeros_(conv.bias)
        if isinstance(norm, nn.BatchNorm2d):
            nn.init.ones_(norm.weight)
            nn.init.zeros_(norm.bias)
    return model


def assemble_input(
    img: np.ndarray, retain_mask: np.ndarray, restore_mask: np.ndarray
) -> np.ndarray:
    """Stack the 5 network input channels: R, G, B, retain, restore."""
    arr = as_image_f(img)
    retain = as_mask(retain_mask)
    restore = as_mask(restore_mask)
    if retain.shape != arr.shape[:2] or restore.shape != arr.shape[:2]:
        raise ValueError("mask dimensions must match the image")
    return np.dstack([arr, retain.astype(np.float64), restore.astype(np.float64)])


def forward(model: Model, x: np.ndarray, mode: str = "eval") -> np.ndarray:
    """Run the network on one HxWx5 input, returning an HxWx3 unit-range image.

    ``mode`` selects the batch-normalization statistics: per-batch in
    ``train``, running averages in ``eval``.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3 or x.shape[2] != model.spec.input_channels:
        raise ValueError(f"expected HxWx{model.spec.input_channels} input, got {x.shape}")
    m, n = x.shape[:2]
    if m % DOWNSAMPLE_FACTOR or n % DOWNSAMPLE_FACTOR:
        raise ValueError(
            f"input size {m}x{n} not divisible by {DOWNSAMPLE_FACTOR}; "
            f"pad the image to a multiple of {DOWNSAMPLE_FACTOR} first"
        )
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")

    dtype = next(model.parameters()).dtype
    batch = torch.from_numpy(x.transpose(2, 0, 1)[None]).to(dtype)
    was_training = model.training
    model.train(mode == "train")
    try:
        with torch.no_grad():
            out = model(batch)
    finally:
        model.train(was_training)
    return out[0].permute(1, 2, 0).double().numpy()


def layer_output_sizes(spec: ModelSpec, size: tuple[int, int]) -> list[tuple[int, int, int]]:
    """Per-layer (channels, height, width) activation shapes for a given input size."""
    m, n = size
    shapes = []
    for layer in spec.layers:
        if layer.stride == 2:
            m, n = m // 2, n // 2
        elif layer.stride == 0.5:
            m, n = m * 2, n * 2
        shapes.append((layer.filters, m, n))
    return shapes


def param_count(model: Model) -> int:
    """Learnable scalar count (convolution and batch-norm affine parameters)."""
    return sum(p.numel() for p in model.parameters())


def conv_param_counts(model: Model) -> list[int]:
    """Per-layer convolution parameter counts (kernel + bias), in layer order."""
    return [c.weight.numel() + c.bias.numel() for c in model.convs]


_CHECKPOINT_SKIP = ("num_batches_tracked",)


def _checkpoint_tensors(model: Model):
    for name, p in model.named_parameters():
        yield name, p.detach()
    for name, b in model.named_buffers():
        if not name.endswith(_CHECKPOINT_SKIP):
            yield name, b.detach()


def save_checkpoint(model: Model, directory) -> Path:
    """Write spec.json plus one little-endian float32 file per tensor."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "spec.json").write_text(model.spec.to_json())
    manifest = []
    for name, tensor in _checkpoint_tensors(model):
        data = tensor.to(torch.float32).numpy().astype("<f4")
        filename = f"{name}.bin"
        (directory / filename).write_bytes(data.tobytes())
        manifest.append(
            {
                "name": name,
                "shape": list(tensor.shape),
                "file": filename,
                "byte_offset": 0,
                "dtype": "<f4",
            }
        )
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2))
    return directory


def load_checkpoint(directory) -> Model:
    directory = Path(directory)
    spec = ModelSpec.from_json((directory / "spec.json").read_text())
    model = Model(spec)
    manifest = json.loads((directory / "manifest.json").read_text())
    tensors = dict(model.named_parameters()) | dict(model.named_buffers())
    for entry in manifest:
        raw = (directory / entry["file"]).read_bytes()[entry["byte_offset"]:]
        arr = np.frombuffer(raw, dtype=entry["dtype"]).reshape(entry["shape"]).copy()
        with torch.no_grad():
            tensors[entry["name"]].copy_(torch.from_numpy(arr))
    return model
