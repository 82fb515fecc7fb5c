"""Raw 8-bit planar RGB video with a JSON sidecar, and Y4M ingestion.

A raw video ``clip.rgb`` stores each frame as three planes (R, G, B) of
``height * width`` bytes.  ``clip.rgb.json`` describes it::

    {"width": 64, "height": 64, "fps": "25", "frame_count": 9}
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np
import torch


@dataclass
class Video:
    frames: np.ndarray  # uint8 (T, H, W, 3)
    fps: Fraction

    @property
    def height(self):
        return self.frames.shape[1]

    @property
    def width(self):
        return self.frames.shape[2]

    def __len__(self):
        return self.frames.shape[0]


def sidecar_path(path) -> Path:
    return Path(str(path) + ".json")


def write_raw_video(path, frames, fps):
    frames = np.asarray(frames, dtype=np.uint8)
    t, h, w, _ = frames.shape
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(np.ascontiguousarray(frames.transpose(0, 3, 1, 2)).tobytes())
    os.replace(tmp, path)
    desc = {"width": w, "height": h, "fps": str(Fraction(fps).limit_denominator(0xFFFF)), "frame_count": t}
    sidecar_path(path).write_text(json.dumps(desc, indent=2) + "\n")


def read_raw_video(path) -> Video:
    desc = json.loads(sidecar_path(path).read_text())
    w, h, t = int(desc["width"]), int(desc["height"]), int(desc["frame_count"])
    raw = np.fromfile(path, dtype=np.uint8)
    if raw.size != t * 3 * h * w:
        raise ValueError(f"{path}: {raw.size} bytes, descriptor implies {t * 3 * h * w}")
    frames = raw.reshape(t, 3, h, w).transpose(0, 2, 3, 1).copy()
    return Video(frames, Fraction(str(desc["fps"])))


def _ycbcr_to_rgb(y, cb, cr):
    y = (y.astype(np.float64) - 16) * (255 / 219)
    cb = (cb.astype(np.float64) - 128) * (255 / 224)
    cr = (cr.astype(np.float64) - 128) * (255 / 224)
    r = y + 1.402 * cr
    g = y - 0.344136 * cb - 0.714136 * cr
    b = y + 1.772 * cb
    return np.clip(np.round(np.stack([r, g, b], -1)), 0, 255).astype(np.uint8)


def read_y4m(path) -> Video:
    """8-bit Y4M, 4:4:4 or 4:2:0 (BT.601 limited range)."""
    data = Path(path).read_bytes()
    nl = data.index(b"\n")
    tags = data[:nl].split(b" ")
    if tags[0] != b"YUV4MPEG2":
        raise ValueError(f"{path}: not a YUV4MPEG2 file")
    w = h = None
    fps = Fraction(25)
    chroma = "420"
    for tag in tags[1:]:
        key, val = chr(tag[0]), tag[1:].decode()
        if key == "W":
            w = int(val)
        elif key == "H":
            h = int(val)
        elif key == "F":
            num, den = val.split(":")
            fps = Fraction(int(num), int(den))
        elif key == "C":
            chroma = val
    if chroma.startswith("444"):
        cw, ch = w, h
    elif chroma.startswith("420"):
        cw, ch = (w + 1) // 2, (h + 1) // 2
    else:
        raise ValueError(f"{path}: unsupported chroma {chroma}")
    frame_bytes = w * h + 2 * cw * ch
    pos = nl + 1
    frames = []
    while pos < len(data):
        nl = data.index(b"\n", pos)
        if not data[pos:nl].startswith(b"FRAME"):
            raise ValueError(f"{path}: expected FRAME marker at byte {pos}")
        pos = nl + 1
        buf = np.frombuffer(data, np.uint8, frame_bytes, pos)
        pos += frame_bytes
        y = buf[: w * h].reshape(h, w)
        cb = buf[w * h: w * h + cw * ch].reshape(ch, cw)
        cr = buf[w * h + cw * ch:].reshape(ch, cw)
        if cw != w:
            cb = cb.repeat(2, 0).repeat(2, 1)[:h, :w]
            cr = cr.repeat(2, 0).repeat(2, 1)[:h, :w]
        frames.append(_ycbcr_to_rgb(y, cb, cr))
    return Video(np.stack(frames), fps)


def read_video(path) -> Video:
    if str(path).endswith(".y4m"):
        return read_y4m(path)
    return read_raw_video(path)


def to_tensor(frames) -> torch.Tensor:
    """uint8 (T, H, W, 3) or (H, W, 3) -> float (T, 3, H, W) in [0, 1]."""
    frames = np.asarray(frames)
    if frames.ndim == 3:
        frames = frames[None]
    return torch.from_numpy(frames.transpose(0, 3, 1, 2).astype(np.float32) / 255.0)


def to_uint8(tensor) -> np.ndarray:
    """float (T, 3, H, W) in [0, 1] -> uint8 (T, H, W, 3)."""
    arr = tensor.detach().cpu().clamp(0, 1).numpy().transpose(0, 2, 3, 1)
    return np.round(arr * 255).astype(np.uint8)
