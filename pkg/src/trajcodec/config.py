"""Model configuration and the checkpoint file format.

Checkpoint layout: UTF-8 ``key=value`` header lines (model configuration
plus ``format``), a blank line, then one record per tensor::

    name=<param name> dtype=<torch dtype> shape=<d0,d1,...> nbytes=<n>\\n
    <n raw little-endian bytes>
"""

from __future__ import annotations

import dataclasses
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

CHECKPOINT_FORMAT = "trajcodec-checkpoint-1"


class ConfigError(ValueError):
    pass


class InputError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    num_features: int = 20
    max_resolution: int = 384
    depth: int = 2
    num_resolutions: int = 1
    extractor_width: int = 64
    predictor_width: int = 64
    motion_width: int = 64
    generator_width: int = 64
    min_generator_width: int = 8
    num_fg: int | None = None
    num_bg: int | None = None
    grid_margin: float = 0.2

    def __post_init__(self):
        if self.num_features < 1:
            raise ConfigError("num_features must be >= 1")
        if self.depth < 1:
            raise ConfigError("depth must be >= 1")
        if self.max_resolution % (1 << self.depth):
            raise ConfigError(f"resolution {self.max_resolution} not divisible by 2**{self.depth}")
        if not 1 <= self.num_resolutions <= self.depth:
            raise ConfigError(f"num_resolutions must be in [1, depth={self.depth}]")
        if self.grid_size < 2 or self.grid_size % 2:
            raise ConfigError(f"analysis grid {self.grid_size} must be even and >= 2")
        components = 2 * self.num_features
        if self.num_fg is None and self.num_bg is None:
            num_bg = max(1, components // 8)
            object.__setattr__(self, "num_bg", num_bg)
            object.__setattr__(self, "num_fg", components - num_bg)
        elif self.num_fg is None:
            object.__setattr__(self, "num_fg", components - self.num_bg)
        elif self.num_bg is None:
            object.__setattr__(self, "num_bg", components - self.num_fg)
        check_split(self.num_fg, self.num_bg, self.num_features)

    @property
    def grid_size(self) -> int:
        return self.max_resolution >> self.depth

    @property
    def num_components(self) -> int:
        return 2 * self.num_features

    @property
    def resolutions(self) -> list[int]:
        return [self.max_resolution >> i for i in range(self.num_resolutions)]

    def resolution_index(self, size: int) -> int:
        try:
            return self.resolutions.index(size)
        except ValueError:
            raise ConfigError(f"unsupported resolution {size}; supported: {self.resolutions}") from None

    def generator_channels(self, level: int) -> int:
        """Channel width of generator features at ``grid_size * 2**level``."""
        return max(self.min_generator_width, self.generator_width >> level)

    def to_header(self) -> dict[str, str]:
        return {f.name: str(getattr(self, f.name)) for f in dataclasses.fields(self)}

    @classmethod
    def from_header(cls, header: dict[str, str]) -> "ModelConfig":
        kwargs = {}
        for f in dataclasses.fields(cls):
            if f.name not in header:
                continue
            raw = header[f.name]
            if raw == "None":
                kwargs[f.name] = None
            elif f.name == "grid_margin":
                kwargs[f.name] = float(raw)
            else:
                kwargs[f.name] = int(raw)
        return cls(**kwargs)


def check_split(num_fg, num_bg, num_features):
    if num_fg < 1 or num_bg < 1 or num_fg + num_bg != 2 * num_features:
        raise ConfigError(
            f"foreground/background split {num_fg}+{num_bg} must be positive and sum to {2 * num_features}"
        )


def parse_key_values(text: str) -> dict[str, str]:
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


_DTYPES = {str(t): t for t in (torch.float32, torch.float64, torch.float16, torch.int64, torch.int32, torch.bool)}


def save_checkpoint(path, config: ModelConfig, state_dict, extra: dict | None = None):
    buf = io.BytesIO()
    header = {"format": CHECKPOINT_FORMAT, **config.to_header(), **{k: str(v) for k, v in (extra or {}).items()}}
    buf.write("".join(f"{k}={v}\n" for k, v in header.items()).encode())
    buf.write(b"\n")
    for name, tensor in state_dict.items():
        t = tensor.detach().cpu().contiguous()
        raw = t.numpy().astype(t.numpy().dtype.newbyteorder("<")).tobytes()
        shape = ",".join(str(s) for s in t.shape)
        buf.write(f"name={name} dtype={t.dtype} shape={shape} nbytes={len(raw)}\n".encode())
        buf.write(raw)
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(buf.getvalue())
    tmp.replace(path)


def load_checkpoint(path) -> tuple[ModelConfig, dict, dict[str, str]]:
    data = Path(path).read_bytes()
    end = data.find(b"\n\n")
    if end < 0:
        raise ConfigError(f"{path}: missing checkpoint header terminator")
    header = parse_key_values(data[:end].decode())
    if header.get("format") != CHECKPOINT_FORMAT:
        raise ConfigError(f"{path}: unknown checkpoint format {header.get('format')!r}")
    pos = end + 2
    state = {}
    while pos < len(data):
        nl = data.index(b"\n", pos)
        fields = dict(item.split("=", 1) for item in data[pos:nl].decode().split(" "))
        pos = nl + 1
        nbytes = int(fields["nbytes"])
        dtype = _DTYPES[fields["dtype"]]
        shape = tuple(int(s) for s in fields["shape"].split(",") if s)
        np_dtype = torch.empty(0, dtype=dtype).numpy().dtype.newbyteorder("<")
        arr = np.frombuffer(data[pos:pos + nbytes], dtype=np_dtype).reshape(shape)
        state[fields["name"]] = torch.from_numpy(arr.astype(arr.dtype.newbyteorder("=")).copy())
        pos += nbytes
    return ModelConfig.from_header(header), state, header
