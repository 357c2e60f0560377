"""Complex-valued convolutional building blocks.

A complex feature map h = x + jy with C channels is carried internally
as a real "planes" tensor of shape (N, 2C, H, W): channels [0:C] hold
the real parts, channels [C:2C] the imaginary parts.  The helpers
to_planes/to_complex convert between that layout and torch complex
tensors of shape (N, C, H, W).

A complex kernel W = A + jB applied to h produces

    Re = A*x - B*y,   Im = B*x + A*y

which is realized as a single real convolution with the block weight
[[A, -B], [B, A]] on the stacked planes.  All convolutions zero-pad so
spatial shape is preserved.
"""

from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import nn


def to_planes(h: torch.Tensor) -> torch.Tensor:
    """Complex (N, C, H, W) -> real planes (N, 2C, H, W)."""
    if not h.is_complex():
        raise ValueError("expected a complex tensor")
    return torch.cat([h.real, h.imag], dim=1)


def to_complex(planes: torch.Tensor) -> torch.Tensor:
    """Real planes (N, 2C, H, W) -> complex (N, C, H, W)."""
    if planes.shape[1] % 2:
        raise ValueError("plane tensor needs an even channel count")
    c = planes.shape[1] // 2
    return torch.complex(planes[:, :c], planes[:, c:])


def crelu(h: torch.Tensor) -> torch.Tensor:
    """Complex ReLU: clamps real and imaginary parts independently."""
    if not h.is_complex():
        raise ValueError("expected a complex tensor")
    return torch.complex(torch.relu(h.real), torch.relu(h.imag))


def complex_conv(inp: torch.Tensor, weight: torch.Tensor,
                 bias: torch.Tensor | None = None) -> torch.Tensor:
    """Shape-preserving complex convolution of complex maps.

    inp: complex (N, C_in, H, W); weight: complex (C_out, C_in, k, k)
    with k odd; bias: complex (C_out,) or None.
    """
    if not (inp.is_complex() and weight.is_complex()):
        raise ValueError("input and weight must be complex tensors")
    if inp.shape[1] != weight.shape[1]:
        raise ValueError(
            f"channel mismatch: input has {inp.shape[1]}, kernel expects {weight.shape[1]}")
    k = weight.shape[-1]
    if k % 2 == 0 or weight.shape[-2] != k:
        raise ValueError("kernel must be square with odd size")
    a, b = weight.real, weight.imag
    block = torch.cat([torch.cat([a, -b], dim=1), torch.cat([b, a], dim=1)], dim=0)
    stacked_bias = None
    if bias is not None:
        stacked_bias = torch.cat([bias.real, bias.imag])
    out = F.conv2d(to_planes(inp), block, stacked_bias, padding=k // 2)
    return to_complex(out)


class ComplexConv2d(nn.Module):
    """Complex 2d convolution on the planes layout.

    Holds the kernel as two real parameter banks (weight_re = A,
    weight_im = B).  Initialization draws each component from a zero
    mean normal with variance 1/(2 * fan_in) so the complex variance
    per output is 1/fan_in.
    """

    def __init__(self, in_channels: int, out_channels: int, kernel: int = 3,
                 bias: bool = True):
        super().__init__()
        if kernel % 2 == 0:
            raise ValueError("kernel must be odd to preserve shape")
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel = kernel
        shape = (out_channels, in_channels, kernel, kernel)
        self.weight_re = nn.Parameter(torch.empty(shape))
        self.weight_im = nn.Parameter(torch.empty(shape))
        if bias:
            self.bias_re = nn.Parameter(torch.zeros(out_channels))
            self.bias_im = nn.Parameter(torch.zeros(out_channels))
        else:
            self.register_parameter("bias_re", None)
            self.register_parameter("bias_im", None)
        self.reset_parameters()

    def reset_parameters(self):
        fan_in = self.in_channels * self.kernel ** 2
        std = (0.5 / fan_in) ** 0.5  # component variance halved
        with torch.no_grad():
            self.weight_re.normal_(0.0, std)
            self.weight_im.normal_(0.0, std)
            if self.bias_re is not None:
                self.bias_re.zero_()
                self.bias_im.zero_()

    def complex_weight(self) -> torch.Tensor:
        return torch.complex(self.weight_re, self.weight_im)

    def forward(self, planes: torch.Tensor) -> torch.Tensor:
        if planes.shape[1] != 2 * self.in_channels:
            raise ValueError(
                f"expected {2 * self.in_channels} planes, got {planes.shape[1]}")
        a, b = self.weight_re, self.weight_im
        block = torch.cat([torch.cat([a, -b], dim=1), torch.cat([b, a], dim=1)], dim=0)
        bias = None
        if self.bias_re is not None:
            bias = torch.cat([self.bias_re, self.bias_im])
        return F.conv2d(planes, block, bias, padding=self.kernel // 2)


class ComplexBatchNorm2d(nn.Module):
    """Batch normalization for complex feature maps.

    mode "whiten" removes the full 2x2 real/imag covariance per complex
    channel (decorrelating the components), then applies a learnable
    symmetric 2x2 scale plus complex shift; the affine part starts at
    1/sqrt(2) per component so output complex variance is 1.  mode
    "split" falls back to independent standard batch norm on the real
    and imaginary planes.  Running statistics (momentum 0.1) are used
    in eval mode.
    """

    MODES = ("whiten", "split")

    def __init__(self, channels: int, mode: str = "whiten", eps: float = 1e-5,
                 momentum: float = 0.1):
        super().__init__()
        if mode not in self.MODES:
            raise ValueError(f"unknown normalization mode {mode!r}")
        self.channels = channels
        self.mode = mode
        self.eps = eps
        self.momentum = momentum
        if mode == "whiten":
            self.gamma_rr = nn.Parameter(torch.full((channels,), 2.0 ** -0.5))
            self.gamma_ii = nn.Parameter(torch.full((channels,), 2.0 ** -0.5))
            self.gamma_ri = nn.Parameter(torch.zeros(channels))
            self.beta = nn.Parameter(torch.zeros(2 * channels))
            self.register_buffer("running_mean", torch.zeros(2 * channels))
            self.register_buffer("running_vrr", torch.full((channels,), 0.5))
            self.register_buffer("running_vii", torch.full((channels,), 0.5))
            self.register_buffer("running_vri", torch.zeros(channels))
        else:
            self.weight = nn.Parameter(torch.ones(2 * channels))
            self.bias = nn.Parameter(torch.zeros(2 * channels))
            self.register_buffer("running_mean", torch.zeros(2 * channels))
            self.register_buffer("running_var", torch.ones(2 * channels))

    def forward(self, planes: torch.Tensor) -> torch.Tensor:
        if planes.shape[1] != 2 * self.channels:
            raise ValueError(
                f"expected {2 * self.channels} planes, got {planes.shape[1]}")
        if self.mode == "split":
            return F.batch_norm(planes, self.running_mean, self.running_var,
                                self.weight, self.bias, self.training,
                                self.momentum, self.eps)
        c = self.channels
        x, y = planes[:, :c], planes[:, c:]
        if self.training:
            mu_x = x.mean(dim=(0, 2, 3))
            mu_y = y.mean(dim=(0, 2, 3))
            xc = x - mu_x[None, :, None, None]
            yc = y - mu_y[None, :, None, None]
            vrr = (xc * xc).mean(dim=(0, 2, 3)) + self.eps
            vii = (yc * yc).mean(dim=(0, 2, 3)) + self.eps
            vri = (xc * yc).mean(dim=(0, 2, 3))
            with torch.no_grad():
                m = self.momentum
                self.running_mean.mul_(1 - m).add_(
                    m * torch.cat([mu_x, mu_y]).detach())
                self.running_vrr.mul_(1 - m).add_(m * vrr.detach())
                self.running_vii.mul_(1 - m).add_(m * vii.detach())
                self.running_vri.mul_(1 - m).add_(m * vri.detach())
        else:
            mu_x = self.running_mean[:c]
            mu_y = self.running_mean[c:]
            xc = x - mu_x[None, :, None, None]
            yc = y - mu_y[None, :, None, None]
            vrr, vii, vri = self.running_vrr, self.running_vii, self.running_vri
        # inverse square root of [[vrr, vri], [vri, vii]] per channel:
        # with s = sqrt(det), t = sqrt(trace + 2s), it is [[vii+s, -vri],
        # [-vri, vrr+s]] / (s*t)
        s = torch.sqrt(vrr * vii - vri * vri)
        t = torch.sqrt(vrr + vii + 2.0 * s)
        inv = 1.0 / (s * t)
        wrr = (vii + s) * inv
        wii = (vrr + s) * inv
        wri = -vri * inv
        xh = wrr[None, :, None, None] * xc + wri[None, :, None, None] * yc
        yh = wri[None, :, None, None] * xc + wii[None, :, None, None] * yc
        g_rr, g_ii, g_ri = self.gamma_rr, self.gamma_ii, self.gamma_ri
        xo = g_rr[None, :, None, None] * xh + g_ri[None, :, None, None] * yh
        yo = g_ri[None, :, None, None] * xh + g_ii[None, :, None, None] * yh
        out = torch.cat([xo, yo], dim=1)
        return out + self.beta[None, :, None, None]


def receptive_radius(depth: int, kernel: int) -> int:
    """Half-width of the receptive field of `depth` stacked convolutions."""
    return depth * (kernel // 2)
