"""Coarse-to-fine motion estimation with separate foreground/background dense motion."""

import torch
from torch import nn

from .config import ConfigError, InputError, ModelConfig
from .layers import UNet, make_coordinate_grid, warp


def deform_keyframe(key_small, flows):
    """Warp the G x G key frame by every coarse flow.

    key_small: (B, 3, G, G); flows: (B, K, G, G, 2) -> (B, 3, K, G, G).
    """
    b, k, g, _, _ = flows.shape
    if key_small.shape[0] != b or key_small.shape[-1] != g:
        raise InputError(f"key frame {tuple(key_small.shape)} does not match flows {tuple(flows.shape)}")
    c = key_small.shape[1]
    src = key_small.unsqueeze(1).expand(b, k, c, g, g).reshape(b * k, c, g, g)
    out = warp(src, flows.reshape(b * k, g, g, 2))
    return out.view(b, k, c, g, g).permute(0, 2, 1, 3, 4)


def compose_dense_motion(flows, logits, num_fg, num_bg):
    """Per-group softmax over component logits and weighted sum of flows.

    flows: (B, K, G, G, 2); logits: (B, K, G, G).  Foreground components
    are indices [0, num_fg), background the remaining num_bg.
    Returns (m_fg, m_bg), each (B, G, G, 2).
    """
    k = flows.shape[1]
    if num_fg < 1 or num_bg < 1 or num_fg + num_bg != k:
        raise ConfigError(f"split {num_fg}+{num_bg} must be positive and cover {k} components")
    if logits.shape[:2] != flows.shape[:2]:
        raise InputError(f"logits {tuple(logits.shape)} do not match flows {tuple(flows.shape)}")
    out = []
    for sl in (slice(0, num_fg), slice(num_fg, k)):
        weights = torch.softmax(logits[:, sl], dim=1).unsqueeze(-1)
        out.append((weights * flows[:, sl]).sum(dim=1))
    return tuple(out)


class MotionEstimator(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        k = config.num_components
        self.flow_predictor = UNet(k, 2 * k, config.motion_width)
        nn.init.zeros_(self.flow_predictor.out.weight)
        nn.init.zeros_(self.flow_predictor.out.bias)
        self.weight_predictor = UNet(k + 3 * k, k, config.motion_width)
        self.occlusion_head = nn.Conv2d(config.motion_width, 1, 3, padding=1)
        self.register_buffer("identity", make_coordinate_grid(config.grid_size), persistent=False)

    def _check_fields(self, f_key, f_inter):
        cfg = self.config
        expected = (cfg.num_features, cfg.grid_size, cfg.grid_size)
        for f in (f_key, f_inter):
            if f.dim() != 4 or tuple(f.shape[1:]) != expected:
                raise InputError(f"motion field shape {tuple(f.shape)} does not match (B, {expected})")
        if f_key.shape[0] != f_inter.shape[0]:
            raise InputError("motion field batch sizes differ")

    def predict_coarse_flows(self, f_key, f_inter):
        """-> (B, 2N_F, G, G, 2) absolute sampling grids (identity + displacement)."""
        self._check_fields(f_key, f_inter)
        b, _, g, _ = f_key.shape
        k = self.config.num_components
        disp = self.flow_predictor(torch.cat([f_key, f_inter], dim=1))
        disp = disp.view(b, k, 2, g, g).permute(0, 1, 3, 4, 2)
        bound = 1.0 + self.config.grid_margin
        return (self.identity.to(disp.dtype) + disp).clamp(-bound, bound)

    def predict_weights_and_occlusion(self, f_key, f_inter, deformed):
        self._check_fields(f_key, f_inter)
        b, c, k, g, _ = deformed.shape
        if k != self.config.num_components or g != self.config.grid_size or b != f_key.shape[0]:
            raise InputError(f"deformed stack {tuple(deformed.shape)} inconsistent with motion fields")
        x = torch.cat([f_key, f_inter, deformed.reshape(b, c * k, g, g)], dim=1)
        h = self.weight_predictor.features(x)
        return self.weight_predictor.out(h), torch.sigmoid(self.occlusion_head(h))

    def forward(self, key_small, f_key, f_inter):
        flows = self.predict_coarse_flows(f_key, f_inter)
        deformed = deform_keyframe(key_small, flows)
        logits, occlusion = self.predict_weights_and_occlusion(f_key, f_inter, deformed)
        m_fg, m_bg = compose_dense_motion(flows, logits, self.config.num_fg, self.config.num_bg)
        return {
            "flows": flows,
            "deformed": deformed,
            "logits": logits,
            "occlusion": occlusion,
            "m_fg": m_fg,
            "m_bg": m_bg,
        }
