"""Losses, feature/matting adapters and the training loop."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .config import ConfigError, InputError
from .layers import resize

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class LossWeights:
    perceptual: float = 10.0
    l1: float = 10.0
    background: float = 10.0

    def __post_init__(self):
        if min(self.perceptual, self.l1, self.background) < 0:
            raise ConfigError(f"loss weights must be non-negative: {self}")


# ---------------------------------------------------------------------------
# feature backends


class RandomFeatureBackend(nn.Module):
    """Fixed random conv stack returning one feature map per stage.

    Deterministic given ``seed``; stands in for VGG-19 where pretrained
    weights are unavailable.
    """

    def __init__(self, num_layers=5, width=16, seed=0):
        super().__init__()
        gen = torch.Generator().manual_seed(seed)
        self.stages = nn.ModuleList()
        in_ch = 3
        for _ in range(num_layers):
            conv = nn.Conv2d(in_ch, width, 3, padding=1)
            with torch.no_grad():
                conv.weight.copy_(torch.randn(conv.weight.shape, generator=gen) * math.sqrt(2.0 / (in_ch * 9)))
                conv.bias.zero_()
            self.stages.append(conv)
            in_ch = width
        self.requires_grad_(False)

    def forward(self, x):
        feats = []
        for i, conv in enumerate(self.stages):
            if i and min(x.shape[-2:]) >= 2:
                x = F.avg_pool2d(x, 2)
            x = F.relu(conv(x))
            feats.append(x)
        return feats


class VGG19Backend(nn.Module):
    """relu1_1 .. relu5_1 of torchvision's VGG-19 with ImageNet normalization."""

    SLICES = ((0, 2), (2, 7), (7, 12), (12, 21), (21, 30))

    def __init__(self, weights_path=None, pretrained=True):
        super().__init__()
        from torchvision.models import VGG19_Weights, vgg19

        if weights_path is not None:
            net = vgg19()
            net.load_state_dict(torch.load(weights_path, map_location="cpu"))
        else:
            net = vgg19(weights=VGG19_Weights.IMAGENET1K_V1 if pretrained else None)
        features = net.features
        self.slices = nn.ModuleList(nn.Sequential(*features[a:b]) for a, b in self.SLICES)
        self.register_buffer("mean", torch.tensor([0.485, 0.456, 0.406]).view(1, 3, 1, 1))
        self.register_buffer("std", torch.tensor([0.229, 0.224, 0.225]).view(1, 3, 1, 1))
        self.requires_grad_(False)
        self.eval()

    def forward(self, x):
        h = (x - self.mean) / self.std
        feats = []
        for s in self.slices:
            h = s(h)
            feats.append(h)
        return feats


# ---------------------------------------------------------------------------
# matting


class LuminanceThresholdMatting:
    """Foreground = pixels brighter than ``threshold`` (Rec.601 luma)."""

    def __init__(self, threshold=0.5):
        self.threshold = threshold

    def __call__(self, frame):
        luma = 0.299 * frame[:, 0:1] + 0.587 * frame[:, 1:2] + 0.114 * frame[:, 2:3]
        return (luma > self.threshold).to(frame.dtype)


# ---------------------------------------------------------------------------
# losses


def _check_same(pred, target):
    if pred.shape != target.shape:
        raise InputError(f"shape mismatch: {tuple(pred.shape)} vs {tuple(target.shape)}")


def pyramid_downsample(x, j):
    """Area downsample by 2**j (never below 1 pixel)."""
    h, w = x.shape[-2:]
    return F.interpolate(x, size=(max(1, h >> j), max(1, w >> j)), mode="area")


def perceptual_loss(pred, target, backend, num_scales=4):
    _check_same(pred, target)
    total = pred.new_zeros(())
    for j in range(1, num_scales + 1):
        fp = backend(pyramid_downsample(pred, j))
        ft = backend(pyramid_downsample(target, j))
        for a, b in zip(fp, ft):
            total = total + (a - b).abs().mean()
    return total


def l1_loss(pred, target):
    _check_same(pred, target)
    return (pred - target).abs().mean()


def background_loss(mask, frame, matting, frame_id=None):
    try:
        target = matting(frame)
    except Exception as exc:
        raise TrainingError(f"matting adapter failed on frame {frame_id}: {exc}") from exc
    if target.shape != mask.shape:
        raise InputError(f"mask {tuple(mask.shape)} does not match matting output {tuple(target.shape)}")
    return (mask - target).abs().mean()


def total_loss(l_per, l_l1, l_bg, weights: LossWeights = LossWeights()):
    return weights.perceptual * l_per + weights.l1 * l_l1 + weights.background * l_bg


def reconstruction_losses(out, target, backend, matting, weights: LossWeights = LossWeights()):
    l_per = perceptual_loss(out.fused, target, backend)
    l_l1 = l1_loss(out.fused, target)
    l_bg = background_loss(out.fg_mask, target, matting)
    return {"L_per": l_per, "L_L1": l_l1, "L_bg": l_bg, "total": total_loss(l_per, l_l1, l_bg, weights)}


def sample_resolution(rng: np.random.Generator, resolutions):
    return int(resolutions[rng.integers(len(resolutions))])


def multires_loss(model, key, inter, rng, backend, matting, weights: LossWeights = LossWeights()):
    """Loss summed over every supported output resolution.

    ``key``/``inter`` are (B, 3, r, r) at the largest resolution; the input
    resolution fed to the factorizer is drawn uniformly with ``rng``.
    Returns (loss, per-term dict, sampled resolution, number of terms).
    """
    resolutions = model.config.resolutions
    keys = {r: resize(key, r) for r in resolutions}
    inters = {r: resize(inter, r) for r in resolutions}
    r_in = sample_resolution(rng, resolutions) if len(resolutions) > 1 else resolutions[0]
    key_latent, kw, kb = model.analyze(keys[r_in])
    _, w, b = model.analyze(inters[r_in])
    terms = {"L_per": 0.0, "L_L1": 0.0, "L_bg": 0.0, "total": 0.0}
    for r in resolutions:
        out, _ = model.synthesize(keys[r], key_latent, kw, kb, w, b)
        parts = reconstruction_losses(out, inters[r], backend, matting, weights)
        for name, value in parts.items():
            terms[name] = terms[name] + value
    return terms["total"], terms, r_in, len(resolutions)


# ---------------------------------------------------------------------------
# training loop


@dataclass
class Schedule:
    epochs: int = 100
    lr: float = 2e-4
    betas: tuple[float, float] = (0.5, 0.999)
    gamma: float = 0.1
    milestones: tuple[int, ...] = (60, 90)
    steps_per_epoch: int | None = None
    batch_size: int = 4
    checkpoint_every: int = 10
    seed: int = 0


def learning_rate(epoch, base=2e-4, gamma=0.1, milestones=(60, 90)):
    return base * gamma ** sum(epoch >= m for m in milestones)


class FramePairDataset:
    """Uniform random (key, inter) pairs drawn within clips.

    clips: sequence of uint8 (T, H, W, 3) arrays or float (T, 3, H, W) tensors.
    """

    def __init__(self, clips):
        self.clips = [self._as_tensor(c) for c in clips if len(c)]

    @staticmethod
    def _as_tensor(clip):
        if isinstance(clip, np.ndarray) and clip.dtype == np.uint8:
            return torch.from_numpy(clip).permute(0, 3, 1, 2).float() / 255.0
        return torch.as_tensor(clip, dtype=torch.float32)

    def __len__(self):
        return sum(c.shape[0] for c in self.clips)

    def sample(self, batch_size, rng: np.random.Generator):
        keys, inters = [], []
        for _ in range(batch_size):
            clip = self.clips[rng.integers(len(self.clips))]
            i, j = rng.integers(clip.shape[0], size=2)
            keys.append(clip[i])
            inters.append(clip[j])
        return torch.stack(keys), torch.stack(inters)


LOG_FIELDS = ["step", "epoch", "L_per", "L_L1", "L_bg", "total", "lr"]


def train(model, dataset: FramePairDataset, schedule: Schedule = Schedule(), backend=None, matting=None,
          weights: LossWeights = LossWeights(), out_dir=None, log_path=None):
    """Adam + multi-step decay.  Returns the list of per-step log rows."""
    if len(dataset) == 0:
        raise ConfigError("training dataset is empty")
    backend = RandomFeatureBackend() if backend is None else backend
    matting = LuminanceThresholdMatting() if matting is None else matting
    rng = np.random.default_rng(schedule.seed)
    torch.manual_seed(schedule.seed)
    steps_per_epoch = schedule.steps_per_epoch or max(1, math.ceil(len(dataset) / schedule.batch_size))

    optimizer = torch.optim.Adam(model.parameters(), lr=schedule.lr, betas=schedule.betas)
    scheduler = torch.optim.lr_scheduler.MultiStepLR(optimizer, list(schedule.milestones), schedule.gamma)
    out_dir = Path(out_dir) if out_dir else None
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)
    log_file = open(log_path, "w", newline="") if log_path else None
    writer = csv.DictWriter(log_file, LOG_FIELDS) if log_file else None
    if writer:
        writer.writeheader()

    rows = []
    step = 0
    model.train()
    try:
        for epoch in range(schedule.epochs):
            for _ in range(steps_per_epoch):
                key, inter = dataset.sample(schedule.batch_size, rng)
                loss, terms, _, _ = multires_loss(model, key, inter, rng, backend, matting, weights)
                optimizer.zero_grad(set_to_none=True)
                loss.backward()
                optimizer.step()
                row = {"step": step, "epoch": epoch, "lr": optimizer.param_groups[0]["lr"]}
                row.update({k: float(v.detach()) for k, v in terms.items()})
                rows.append(row)
                if writer:
                    writer.writerow(row)
                step += 1
            scheduler.step()
            log.info("epoch %d loss %.4f lr %.2e", epoch, rows[-1]["total"], rows[-1]["lr"])
            if out_dir and ((epoch + 1) % schedule.checkpoint_every == 0 or epoch + 1 == schedule.epochs):
                model.save(out_dir / f"epoch{epoch + 1:03d}.ckpt", epoch=epoch + 1)
    finally:
        if log_file:
            log_file.close()
        model.eval()
    return rows
