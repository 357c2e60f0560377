"""Residual denoising network for complex angular-delay matrices.

The network F maps a noisy matrix to an estimate of its error, so the
enhanced matrix is the input minus the network output.  Architecture:
one complex convolution + cReLU, (depth - 2) repeats of bias-free
complex convolution + complex batch norm + cReLU, and a final complex
convolution back to one channel.  All spatial shapes are preserved.

Inputs are scaled per sample by their root-mean-square magnitude before
entering the network and the output is scaled back, so one set of
weights serves inputs of any overall level (input_scaling "rms"; "none"
disables this).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np
import torch
from torch import nn

from .errors import ConfigError, WeightsFormatError
from .layers import (ComplexBatchNorm2d, ComplexConv2d, receptive_radius,
                     to_complex, to_planes)

WEIGHTS_FORMAT = "cvdnn-weights"
WEIGHTS_VERSION = 1
_SCALE_FLOOR = 1e-12


@dataclass(frozen=True)
class ModelSpec:
    """Architecture description stored alongside the weights."""

    depth: int = 17
    width: int = 64
    kernel: int = 3
    normalization: str = "whiten"
    input_scaling: str = "rms"

    def __post_init__(self):
        if self.depth < 2:
            raise ConfigError("depth must be at least 2 (input and output layers)")
        if self.width < 1:
            raise ConfigError("width must be positive")
        if self.kernel < 1 or self.kernel % 2 == 0:
            raise ConfigError("kernel must be odd and positive")
        if self.normalization not in ComplexBatchNorm2d.MODES:
            raise ConfigError(f"unknown normalization {self.normalization!r}")
        if self.input_scaling not in ("rms", "none"):
            raise ConfigError(f"unknown input_scaling {self.input_scaling!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ModelSpec":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown model keys: {sorted(unknown)}")
        return cls(**data)


class CVDnCNN(nn.Module):
    """The raw residual network; operates on the planes layout."""

    def __init__(self, spec: ModelSpec):
        super().__init__()
        self.spec = spec
        self.head = ComplexConv2d(1, spec.width, spec.kernel, bias=True)
        middle = []
        for _ in range(spec.depth - 2):
            middle.append(ComplexConv2d(spec.width, spec.width, spec.kernel,
                                        bias=False))
            middle.append(ComplexBatchNorm2d(spec.width, spec.normalization))
        self.middle = nn.ModuleList(middle)
        self.tail = ComplexConv2d(spec.width, 1, spec.kernel, bias=True)

    def forward(self, planes: torch.Tensor) -> torch.Tensor:
        # plain ReLU on planes clamps real and imaginary parts, i.e. cReLU
        h = torch.relu(self.head(planes))
        for i in range(0, len(self.middle), 2):
            h = torch.relu(self.middle[i + 1](self.middle[i](h)))
        return self.tail(h)


def _as_nchw(g: torch.Tensor) -> tuple[torch.Tensor, tuple]:
    if g.dim() == 2:
        return g[None, None], g.shape
    if g.dim() == 3:
        return g[:, None], g.shape
    if g.dim() == 4 and g.shape[1] == 1:
        return g, g.shape
    raise ValueError(f"expected a (H, W), (N, H, W) or (N, 1, H, W) map, got {tuple(g.shape)}")


def sample_scale(g: torch.Tensor) -> torch.Tensor:
    """Per-sample RMS magnitude of a complex (N, 1, H, W) batch."""
    power = (g.real ** 2 + g.imag ** 2).mean(dim=(1, 2, 3), keepdim=True)
    return torch.sqrt(power).clamp_min(_SCALE_FLOOR)


def residual(model: CVDnCNN, g: torch.Tensor, scale=None) -> torch.Tensor:
    """F(g): the network's error estimate, same shape and dtype as g.

    scale optionally overrides the per-sample normalization (used when
    g is a patch of a larger sample whose full-matrix RMS is known).
    """
    if not g.is_complex():
        raise ValueError("expected a complex tensor")
    batch, shape = _as_nchw(g)
    if model.spec.input_scaling == "none":
        out = to_complex(model(to_planes(batch)))
        return out.reshape(shape)
    if scale is None:
        scale = sample_scale(batch)
    elif not torch.is_tensor(scale):
        scale = torch.as_tensor(scale, dtype=batch.real.dtype)
    scale = scale.reshape(-1, 1, 1, 1).to(batch.real.dtype)
    out = to_complex(model(to_planes(batch / scale))) * scale
    return out.reshape(shape)


def denoise(model: CVDnCNN, g: torch.Tensor, scale=None) -> torch.Tensor:
    """Enhanced matrix g - F(g); adding back residual(model, g) recovers
    g up to one rounding of the subtraction."""
    return g - residual(model, g, scale)


def denoise_array(model: CVDnCNN, g: np.ndarray, tile: int | None = None,
                  batch: int = 8) -> np.ndarray:
    """Denoise a numpy (H, W) matrix or (n, H, W) stack.

    tile splits large matrices into cores of that size, each padded by
    the network's receptive radius so the stitched result matches the
    full-matrix pass; None runs each matrix in one pass.
    """
    arr = np.asarray(g)
    if not np.issubdtype(arr.dtype, np.complexfloating):
        arr = arr.astype(np.complex128)
    squeeze = arr.ndim == 2
    if squeeze:
        arr = arr[None]
    if arr.ndim != 3:
        raise ValueError(f"expected rank 2 or 3 input, got rank {arr.ndim}")
    param = next(model.parameters())
    cdtype = np.complex64 if param.dtype == torch.float32 else np.complex128
    n = arr.shape[0]
    if model.spec.input_scaling == "rms":
        scales = np.sqrt(np.mean(np.abs(arr) ** 2, axis=(1, 2))).clip(min=_SCALE_FLOOR)
    else:
        scales = np.ones(n)
    out = np.empty_like(arr)
    model.eval()
    with torch.no_grad():
        for lo in range(0, n, batch):
            hi = min(lo + batch, n)
            scaled = (arr[lo:hi] / scales[lo:hi, None, None]).astype(cdtype)
            block = torch.from_numpy(scaled)[:, None]
            if tile is None:
                res = to_complex(model(to_planes(block))).numpy()[:, 0]
            else:
                res = np.stack([_residual_tiled(model, block[j:j + 1], tile)
                                for j in range(hi - lo)])
            out[lo:hi] = arr[lo:hi] - res * scales[lo:hi, None, None]
    return out[0] if squeeze else out


def _residual_tiled(model: CVDnCNN, one: torch.Tensor, tile: int) -> np.ndarray:
    """Residual of a single (1, 1, H, W) map via overlapping tiles.

    Each tile extends receptive_radius pixels beyond its core (clipped
    at the true border, where zero padding matches the full pass), so
    only uncontaminated output is kept.
    """
    if tile < 1:
        raise ValueError("tile size must be positive")
    margin = receptive_radius(model.spec.depth, model.spec.kernel)
    _, _, height, width = one.shape
    res = torch.empty_like(one)
    for r0 in range(0, height, tile):
        r1 = min(r0 + tile, height)
        rlo = max(0, r0 - margin)
        rhi = min(height, r1 + margin)
        for c0 in range(0, width, tile):
            c1 = min(c0 + tile, width)
            clo = max(0, c0 - margin)
            chi = min(width, c1 + margin)
            patch = model(to_planes(one[:, :, rlo:rhi, clo:chi]))
            core = to_complex(patch)[:, :, r0 - rlo:r0 - rlo + (r1 - r0),
                                     c0 - clo:c0 - clo + (c1 - c0)]
            res[:, :, r0:r1, c0:c1] = core
    return res.numpy()[0, 0]


def save_weights(path, model: CVDnCNN, extra: dict | None = None) -> None:
    """Write weights as an npz archive with a self-describing header.

    The __spec__ entry records format, version and the ModelSpec fields
    so consumers can validate compatibility before running inference.
    """
    header = {"format": WEIGHTS_FORMAT, "version": WEIGHTS_VERSION,
              "model": model.spec.to_dict()}
    if extra:
        header["extra"] = extra
    arrays = {key: value.detach().cpu().numpy()
              for key, value in model.state_dict().items()}
    np.savez(path, __spec__=json.dumps(header, sort_keys=True), **arrays)


def load_weights(path) -> tuple[CVDnCNN, ModelSpec]:
    """Load an npz weight file; returns the model in eval mode."""
    try:
        archive = np.load(path, allow_pickle=False)
    except (OSError, ValueError) as exc:
        raise WeightsFormatError(f"weights unreadable: {path}: {exc}") from None
    with archive:
        if "__spec__" not in archive:
            raise WeightsFormatError("spec: weight file has no __spec__ entry")
        try:
            header = json.loads(str(archive["__spec__"][()]))
        except json.JSONDecodeError as exc:
            raise WeightsFormatError(f"spec: malformed header: {exc}") from None
        if header.get("format") != WEIGHTS_FORMAT:
            raise WeightsFormatError(
                f"format: expected {WEIGHTS_FORMAT!r}, found {header.get('format')!r}")
        if header.get("version") != WEIGHTS_VERSION:
            raise WeightsFormatError(
                f"version: unsupported value {header.get('version')!r}")
        try:
            spec = ModelSpec.from_dict(header.get("model", {}))
        except (ConfigError, TypeError) as exc:
            raise WeightsFormatError(f"model: {exc}") from None
        model = CVDnCNN(spec)
        state = {}
        for key, value in model.state_dict().items():
            if key not in archive:
                raise WeightsFormatError(f"missing parameter {key!r}")
            arr = archive[key]
            if arr.shape != tuple(value.shape):
                raise WeightsFormatError(
                    f"parameter {key!r}: shape {arr.shape} does not match {tuple(value.shape)}")
            state[key] = torch.from_numpy(arr.copy())
        model.load_state_dict(state)
    model.eval()
    return model, spec
