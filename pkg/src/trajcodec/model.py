import torch
from torch import nn

from .config import ModelConfig, load_checkpoint, save_checkpoint
from .factorizer import Factorizer, motion_transform
from .generator import ParallelGenerator
from .layers import resize
from .motion import MotionEstimator


class TrajectoryCodecModel(nn.Module):
    """Factorizer + motion estimator + parallel generator."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        self.factorizer = Factorizer(config)
        self.motion = MotionEstimator(config)
        self.generator = ParallelGenerator(config)

    def analyze(self, frame):
        """frame (B, 3, r_i, r_i) -> (latent, weights, biases)."""
        return self.factorizer(frame)

    def synthesize(self, key, key_latent, key_weights, key_biases, weights, biases):
        """Reconstruct an inter frame at the resolution of ``key``.

        Returns (GenerationOutput, motion dict).
        """
        f_key = motion_transform(key_latent, key_weights, key_biases)
        f_inter = motion_transform(key_latent, weights, biases)
        motion = self.motion(resize(key, self.config.grid_size), f_key, f_inter)
        out = self.generator(key, motion["m_fg"], motion["m_bg"], motion["occlusion"])
        return out, motion

    def forward(self, key, inter):
        key_latent, kw, kb = self.analyze(key)
        _, w, b = self.analyze(inter)
        out, _ = self.synthesize(key, key_latent, kw, kb, w, b)
        return out

    def save(self, path, **extra):
        save_checkpoint(path, self.config, self.state_dict(), extra)

    @classmethod
    def load(cls, path, map_location="cpu"):
        config, state, _ = load_checkpoint(path)
        model = cls(config)
        model.load_state_dict({k: v.to(map_location) for k, v in state.items()})
        model.eval()
        return model


def build_model(config: ModelConfig, seed: int = 0) -> TrajectoryCodecModel:
    torch.manual_seed(seed)
    model = TrajectoryCodecModel(config)
    model.eval()
    return model
