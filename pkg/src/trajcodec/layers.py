import torch
import torch.nn.functional as F
from torch import nn


def make_coordinate_grid(size, dtype=torch.float32, device=None):
    """Identity sampling grid of shape (size, size, 2), last dim (x, y).

    Coordinates are pixel centers in normalized [-1, 1] space
    (``align_corners=False`` convention), so one pixel equals ``2 / size``.
    """
    coords = (torch.arange(size, dtype=dtype, device=device) * 2 + 1) / size - 1
    yy, xx = torch.meshgrid(coords, coords, indexing="ij")
    return torch.stack([xx, yy], dim=-1)


def warp(image, grid):
    """Bilinear backward warp with border clamping.

    image: (B, C, H, W); grid: (B, h, w, 2) absolute normalized coordinates.
    """
    return F.grid_sample(image, grid, mode="bilinear", padding_mode="border", align_corners=False)


def resize_grid(grid, size):
    """Resample a (B, h, h, 2) sampling grid to (B, size, size, 2).

    The displacement from identity is interpolated, so the identity grid
    maps to the identity grid at the new size (border pixels included).
    """
    if grid.shape[1] == size:
        return grid
    disp = grid - make_coordinate_grid(grid.shape[1], grid.dtype, grid.device)
    disp = F.interpolate(disp.permute(0, 3, 1, 2), size=(size, size), mode="bilinear", align_corners=False)
    return disp.permute(0, 2, 3, 1) + make_coordinate_grid(size, grid.dtype, grid.device)


def resize(image, size):
    if image.shape[-1] == size and image.shape[-2] == size:
        return image
    antialias = size < image.shape[-1]
    return F.interpolate(image, size=(size, size), mode="bilinear", align_corners=False, antialias=antialias)


class GDN(nn.Module):
    """Generalized divisive normalization: y_i = x_i / sqrt(beta_i + sum_j gamma_ij x_j^2)."""

    def __init__(self, channels, beta_min=1e-6, gamma_init=0.1):
        super().__init__()
        self.beta_min = beta_min
        self.beta = nn.Parameter(torch.ones(channels))
        self.gamma = nn.Parameter(gamma_init * torch.eye(channels))

    def forward(self, x):
        c = x.shape[1]
        beta = self.beta.clamp(min=self.beta_min)
        gamma = self.gamma.abs().view(c, c, 1, 1)
        norm = F.conv2d(x * x, gamma, beta)
        return x * torch.rsqrt(norm)


def _norm(channels):
    return nn.BatchNorm2d(channels, affine=True)


class SameBlock(nn.Module):
    """Residual block that keeps spatial size and channel count."""

    def __init__(self, channels):
        super().__init__()
        self.conv1 = nn.Conv2d(channels, channels, 3, padding=1)
        self.norm1 = _norm(channels)
        self.conv2 = nn.Conv2d(channels, channels, 3, padding=1)
        self.norm2 = _norm(channels)

    def forward(self, x):
        out = F.leaky_relu(self.norm1(self.conv1(x)), 0.2)
        out = self.norm2(self.conv2(out))
        return F.leaky_relu(x + out, 0.2)


class UpBlock(nn.Module):
    def __init__(self, in_channels, out_channels):
        super().__init__()
        self.conv = nn.Conv2d(in_channels, out_channels, 3, padding=1)
        self.norm = _norm(out_channels)

    def forward(self, x):
        x = F.interpolate(x, scale_factor=2, mode="nearest")
        return F.leaky_relu(self.norm(self.conv(x)), 0.2)


class DownBlock(nn.Module):
    def __init__(self, in_channels, out_channels):
        super().__init__()
        self.conv = nn.Conv2d(in_channels, out_channels, 3, stride=2, padding=1)
        self.norm = _norm(out_channels)

    def forward(self, x):
        return F.leaky_relu(self.norm(self.conv(x)), 0.2)


class UNet(nn.Module):
    """Size-preserving two-level U-Net: down 2x, bottleneck, up 2x, skip concat."""

    def __init__(self, in_channels, out_channels, width=64):
        super().__init__()
        self.inp = nn.Sequential(nn.Conv2d(in_channels, width, 3, padding=1), _norm(width), nn.LeakyReLU(0.2))
        self.down = DownBlock(width, 2 * width)
        self.bottleneck = SameBlock(2 * width)
        self.up = UpBlock(2 * width, width)
        self.fuse = nn.Sequential(nn.Conv2d(2 * width, width, 3, padding=1), _norm(width), nn.LeakyReLU(0.2))
        self.out = nn.Conv2d(width, out_channels, 3, padding=1)
        self.out_channels = out_channels

    def features(self, x):
        skip = self.inp(x)
        h = self.up(self.bottleneck(self.down(skip)))
        return self.fuse(torch.cat([h, skip], dim=1))

    def forward(self, x):
        return self.out(self.features(x))
