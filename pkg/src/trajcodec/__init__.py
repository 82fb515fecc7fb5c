"""Generative human-video codec built on compact motion vectors."""

from .config import ConfigError, InputError, ModelConfig
from .feature_codec import CompactMotionVector
from .model import TrajectoryCodecModel, build_model

__all__ = ["ConfigError", "InputError", "ModelConfig", "CompactMotionVector", "TrajectoryCodecModel", "build_model"]
__version__ = "0.1.0"
