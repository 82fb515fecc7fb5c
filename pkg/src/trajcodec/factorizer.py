"""Spatial latents, compact motion vectors and the channel-wise motion transform."""

import torch
import torch.nn.functional as F
from torch import nn

from .config import ConfigError, InputError, ModelConfig
from .layers import GDN, UNet, resize


class VectorPredictor(nn.Module):
    """Latent (B, N_F, G, G) -> vector (B, N_F).

    Three stride-2 convolutions, each followed by GDN, then global average
    pooling and a linear head.
    """

    def __init__(self, num_features, width=64):
        super().__init__()
        layers = []
        in_ch = num_features
        for _ in range(3):
            layers += [nn.Conv2d(in_ch, width, 3, stride=2, padding=1), GDN(width)]
            in_ch = width
        self.body = nn.Sequential(*layers)
        self.head = nn.Linear(width, num_features)

    def forward(self, latent):
        h = self.body(latent).mean(dim=(2, 3))
        return self.head(h)


def motion_transform(key_latent, weights, biases):
    """Channel-wise affine modulation of the key latent.

    key_latent: (B, N_F, G, G); weights, biases: (B, N_F).
    """
    if weights.shape != biases.shape or weights.shape[-1] != key_latent.shape[1]:
        raise InputError(
            f"vector shapes {tuple(weights.shape)}/{tuple(biases.shape)} do not match latent {tuple(key_latent.shape)}"
        )
    return weights[..., None, None] * key_latent + biases[..., None, None]


class Factorizer(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        self.extractor = UNet(3, config.num_features, config.extractor_width)
        self.weight_predictor = VectorPredictor(config.num_features, config.predictor_width)
        self.bias_predictor = VectorPredictor(config.num_features, config.predictor_width)

    def check_frame(self, frame):
        if frame.dim() != 4 or frame.shape[1] != 3 or frame.shape[2] != frame.shape[3]:
            raise InputError(f"expected (B, 3, H, H) frames, got {tuple(frame.shape)}")
        self.config.resolution_index(frame.shape[-1])
        if not torch.isfinite(frame).all():
            raise InputError("frame contains non-finite pixels")

    def extract_latent(self, frame):
        self.check_frame(frame)
        return self.extractor(resize(frame, self.config.grid_size))

    def predict_motion_vectors(self, latent):
        cfg = self.config
        expected = (cfg.num_features, cfg.grid_size, cfg.grid_size)
        if latent.dim() != 4 or tuple(latent.shape[1:]) != expected:
            raise InputError(f"latent shape {tuple(latent.shape)} does not match (B, {expected})")
        return self.weight_predictor(latent), self.bias_predictor(latent)

    def forward(self, frame):
        """frame -> (latent, weights, biases)."""
        latent = self.extract_latent(frame)
        weights, biases = self.predict_motion_vectors(latent)
        return latent, weights, biases

    def motion_transform(self, key_latent, weights, biases):
        return motion_transform(key_latent, weights, biases)


__all__ = ["Factorizer", "VectorPredictor", "motion_transform", "ConfigError", "InputError"]
