"""Resolution-expandable foreground/background generator.

Scales are counted in *levels*: level ``k`` is ``grid_size * 2**k``.  The
route for output resolution ``r / 2**i`` uses ``n_u = depth - i`` upsample
blocks followed by ``i`` same-size blocks at the output level.  Blocks are
registered once per scale and reused by every route that passes through
that scale:

* up block ``k`` maps level ``k-1`` to ``k`` (shared by output size),
* down block ``k`` maps level ``k`` to ``k-1`` (shared by input size),
* same-size blocks, stems and heads are keyed by their level.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

from .config import ConfigError, InputError, ModelConfig
from .layers import DownBlock, SameBlock, UNet, UpBlock, resize, resize_grid, warp


@dataclass(frozen=True)
class RoutePlan:
    resolution: int
    index: int
    num_up: int
    num_same: int
    shared_block_ids: tuple[str, ...]

    @property
    def depth(self) -> int:
        return self.num_up + self.num_same


def plan_route(r: int, r_i: int, depth: int, num_resolutions: int | None = None) -> RoutePlan:
    num_resolutions = depth if num_resolutions is None else num_resolutions
    supported = [r >> i for i in range(num_resolutions) if (r >> i) << i == r]
    if r_i not in supported:
        raise ConfigError(f"resolution {r_i} not supported (r={r}, supported {supported})")
    index = supported.index(r_i)
    num_up = depth - index
    num_same = index
    ids = [f"up{k}" for k in range(1, num_up + 1)]
    ids += [f"same{num_up}_{j}" for j in range(1, num_same + 1)]
    ids += [f"down{k}" for k in range(num_up, 0, -1)]
    return RoutePlan(r_i, index, num_up, num_same, tuple(ids))


@dataclass
class GenerationOutput:
    fg_image: torch.Tensor
    bg_image: torch.Tensor
    fg_mask: torch.Tensor
    fused: torch.Tensor


def fuse(fg, bg, mask):
    if fg.shape != bg.shape or mask.shape[-2:] != fg.shape[-2:] or mask.shape[0] != fg.shape[0]:
        raise InputError(f"fusion shapes differ: fg {tuple(fg.shape)}, bg {tuple(bg.shape)}, mask {tuple(mask.shape)}")
    return mask * fg + (1 - mask) * bg


class _Expandable(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        ch = config.generator_channels
        self.ups = nn.ModuleDict({f"up{k}": UpBlock(ch(k - 1), ch(k)) for k in range(1, config.depth + 1)})
        self.dec_same = nn.ModuleDict()
        for plan in self.routes():
            for j in range(1, plan.num_same + 1):
                self.dec_same[f"same{plan.num_up}_{j}"] = SameBlock(ch(plan.num_up))

    def routes(self):
        cfg = self.config
        return [plan_route(cfg.max_resolution, r_i, cfg.depth, cfg.num_resolutions) for r_i in cfg.resolutions]

    def plan(self, resolution):
        cfg = self.config
        return plan_route(cfg.max_resolution, resolution, cfg.depth, cfg.num_resolutions)

    def decoder_blocks(self, plan: RoutePlan):
        blocks = [self.ups[f"up{k}"] for k in range(1, plan.num_up + 1)]
        blocks += [self.dec_same[f"same{plan.num_up}_{j}"] for j in range(1, plan.num_same + 1)]
        return blocks

    def _check_grid(self, grid, name):
        g = self.config.grid_size
        if grid.dim() != 4 or tuple(grid.shape[1:]) != (g, g, 2):
            raise InputError(f"{name} must be (B, {g}, {g}, 2), got {tuple(grid.shape)}")


class BackgroundGenerator(_Expandable):
    """Warp-then-generate: warp the G x G key frame, refine, then expand."""

    def __init__(self, config: ModelConfig):
        super().__init__(config)
        self.predictor = UNet(3, config.generator_channels(0), config.generator_width)
        self.heads = nn.ModuleDict(
            {f"head{p.num_up}": nn.Conv2d(config.generator_channels(p.num_up), 3, 3, padding=1) for p in self.routes()}
        )

    def warped_input(self, key, m_bg):
        self._check_grid(m_bg, "background motion")
        return warp(resize(key, self.config.grid_size), m_bg)

    def forward(self, key, m_bg, plan: RoutePlan):
        h = self.predictor(self.warped_input(key, m_bg))
        for block in self.decoder_blocks(plan):
            h = block(h)
        return torch.sigmoid(self.heads[f"head{plan.num_up}"](h))


class ForegroundGenerator(_Expandable):
    """Warp-while-generate U-Net whose skips are warped and gated by occlusion."""

    def __init__(self, config: ModelConfig):
        super().__init__(config)
        ch = config.generator_channels
        self.downs = nn.ModuleDict({f"down{k}": DownBlock(ch(k), ch(k - 1)) for k in range(1, config.depth + 1)})
        self.stems = nn.ModuleDict()
        self.enc_same = nn.ModuleDict()
        self.heads = nn.ModuleDict()
        for plan in self.routes():
            level = plan.num_up
            self.stems[f"stem{level}"] = nn.Sequential(
                nn.Conv2d(3, ch(level), 3, padding=1), nn.BatchNorm2d(ch(level)), nn.LeakyReLU(0.2)
            )
            for j in range(1, plan.num_same + 1):
                self.enc_same[f"same{level}_{j}"] = SameBlock(ch(level))
            self.heads[f"head{level}"] = nn.Conv2d(ch(level), 4, 3, padding=1)

    def encode(self, key, plan: RoutePlan):
        """Encoder features e_0 .. e_depth; e_depth lives on the analysis grid."""
        if key.shape[-1] != plan.resolution or key.shape[-2] != plan.resolution:
            raise InputError(f"key frame {tuple(key.shape)} does not match route resolution {plan.resolution}")
        level = plan.num_up
        feats = [self.stems[f"stem{level}"](key)]
        for j in range(1, plan.num_same + 1):
            feats.append(self.enc_same[f"same{level}_{j}"](feats[-1]))
        for k in range(level, 0, -1):
            feats.append(self.downs[f"down{k}"](feats[-1]))
        return feats

    def decode(self, bottleneck, skips, m_fg, occlusion, plan: RoutePlan, return_stages=False):
        """Decoder stages; stage j gates b_j(F) against the warped skip skips[depth - j]."""
        self._check_grid(m_fg, "foreground motion")
        depth = plan.depth
        h = bottleneck
        stages = []
        for j, block in enumerate(self.decoder_blocks(plan), 1):
            skip = skips[depth - j]
            size = skip.shape[-1]
            occ = resize(occlusion, size)
            warped = warp(skip, resize_grid(m_fg, size))
            h = block(h) * (1 - occ) + warped * occ
            stages.append(h)
        out = torch.sigmoid(self.heads[f"head{plan.num_up}"](h))
        image, mask = out[:, :3], out[:, 3:]
        if return_stages:
            return image, mask, stages
        return image, mask

    def forward(self, key, m_fg, occlusion, plan: RoutePlan):
        g = self.config.grid_size
        if occlusion.shape[-2:] != (g, g):
            raise InputError(f"occlusion map must be {g}x{g}, got {tuple(occlusion.shape)}")
        feats = self.encode(key, plan)
        bottleneck = warp(feats[-1], m_fg)
        return self.decode(bottleneck, feats, m_fg, occlusion, plan)


class ParallelGenerator(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        self.foreground = ForegroundGenerator(config)
        self.background = BackgroundGenerator(config)

    def plan(self, resolution):
        return self.foreground.plan(resolution)

    def forward(self, key, m_fg, m_bg, occlusion) -> GenerationOutput:
        """key at the target resolution r_i; motions and occlusion on the analysis grid."""
        plan = self.plan(key.shape[-1])
        bg = self.background(key, m_bg, plan)
        fg, mask = self.foreground(key, m_fg, occlusion, plan)
        return GenerationOutput(fg, bg, mask, fuse(fg, bg, mask))
