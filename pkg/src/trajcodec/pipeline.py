"""Encoder and decoder pipelines.

Only the reconstructed key frame feeds the factorizer on both sides, so
the encoder's prediction chain matches the decoder's exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
import torch

from .bitstream import HEADER_SIZE, KeyframeCodecAdapter, LosslessAdapter, StreamHeader, demux, encode_keyframe, mux
from .config import ConfigError
from .feature_codec import CompactMotionVector, as_step, code_sequence, decode_sequence
from .video_io import Video, to_tensor, to_uint8


@dataclass
class StreamStats:
    frames: int
    fps: float
    resolution: int
    header_bits: int
    keyframe_bits: int
    feature_bits: int
    symbols_per_frame: int
    nonzero_symbols: list[int] = field(default_factory=list)

    @property
    def total_bits(self) -> int:
        return self.header_bits + self.keyframe_bits + self.feature_bits

    def kbps(self, bits) -> float:
        return bits * self.fps / self.frames / 1000.0

    def as_dict(self) -> dict:
        return {
            "frames": self.frames,
            "fps": self.fps,
            "resolution": self.resolution,
            "header_bits": self.header_bits,
            "keyframe_bits": self.keyframe_bits,
            "feature_bits": self.feature_bits,
            "total_bits": self.total_bits,
            "total_kbps": self.kbps(self.total_bits),
            "keyframe_kbps": self.kbps(self.keyframe_bits),
            "feature_kbps": self.kbps(self.feature_bits),
            "symbols_per_frame": self.symbols_per_frame,
            "nonzero_symbols_per_frame": list(self.nonzero_symbols),
        }


def stream_kbps(stream_bytes: int, fps, frames: int) -> float:
    return 8.0 * stream_bytes * float(fps) / frames / 1000.0


def _vectors(weights, biases):
    return [CompactMotionVector(w, b) for w, b in zip(weights.double().numpy(), biases.double().numpy())]


def _as_tensors(vectors):
    w = torch.from_numpy(np.stack([v.weights for v in vectors])).float()
    b = torch.from_numpy(np.stack([v.biases for v in vectors])).float()
    return w, b


@torch.no_grad()
def analyze_key(model, key_rec):
    key = to_tensor(key_rec)
    latent, kw, kb = model.analyze(key)
    return key, latent, _vectors(kw, kb)[0]


@torch.no_grad()
def encode_video(model, video: Video, qp: int = 32, delta=Fraction(1, 50),
                 adapter: KeyframeCodecAdapter | None = None, batch_size: int = 8):
    """Returns (stream bytes, stats, decoder-side reconstructed vectors)."""
    adapter = LosslessAdapter() if adapter is None else adapter
    cfg = model.config
    frames = video.frames
    if frames.shape[1] != frames.shape[2]:
        raise ConfigError(f"frames must be square, got {frames.shape[1]}x{frames.shape[2]}")
    index = cfg.resolution_index(frames.shape[1])
    step = as_step(delta)
    model.eval()

    key_payload, key_rec = encode_keyframe(frames[0], qp, adapter)
    _, _, key_vector = analyze_key(model, key_rec)

    vectors = []
    for start in range(1, len(frames), batch_size):
        _, w, b = model.analyze(to_tensor(frames[start:start + batch_size]))
        vectors += _vectors(w, b)
    feature_payload, recon = code_sequence(vectors, key_vector, step)

    header = StreamHeader(
        r=cfg.max_resolution, resolution_index=index, num_features=cfg.num_features, depth=cfg.depth,
        num_resolutions=cfg.num_resolutions, frame_count=len(frames), fps=Fraction(video.fps).limit_denominator(0xFFFF),
        step=step, keyframe_codec_id=adapter.codec_id,
    ).with_lengths(len(key_payload), len(feature_payload))
    stream = mux(header, key_payload, feature_payload)
    stats = _stats(header, key_payload, feature_payload, key_vector, recon, step)
    return stream, stats, recon


def _stats(header, key_payload, feature_payload, key_vector, recon, step):
    nonzero, ref = [], key_vector
    for v in recon:
        nonzero.append(int(np.count_nonzero(np.round((v.as_array() - ref.as_array()) / float(step)))))
        ref = v
    return StreamStats(
        frames=header.frame_count, fps=float(header.fps), resolution=header.resolution,
        header_bits=8 * HEADER_SIZE, keyframe_bits=8 * len(key_payload), feature_bits=8 * len(feature_payload),
        symbols_per_frame=2 * header.num_features, nonzero_symbols=nonzero,
    )


@torch.no_grad()
def decode_stream(model, stream: bytes, adapter: KeyframeCodecAdapter | None = None):
    """Returns (Video, stats, reconstructed vectors)."""
    adapter = LosslessAdapter() if adapter is None else adapter
    header, key_payload, feature_payload = demux(stream)
    cfg = model.config
    expected = (cfg.max_resolution, cfg.num_features, cfg.depth, cfg.num_resolutions)
    got = (header.r, header.num_features, header.depth, header.num_resolutions)
    if expected != got:
        raise ConfigError(f"stream configuration (r, N_F, N_B, N_s)={got} does not match model {expected}")
    if header.keyframe_codec_id != adapter.codec_id:
        raise ConfigError(f"stream key frame codec {header.keyframe_codec_id} != adapter {adapter.codec_id}")
    model.eval()
    size = header.resolution
    key_rec = adapter.decode(key_payload, size, size)
    key, latent, key_vector = analyze_key(model, key_rec)
    recon = decode_sequence(feature_payload, header.frame_count - 1, key_vector, header.step)

    out = [key_rec[None]]
    kw, kb = _as_tensors([key_vector])
    for v in recon:
        w, b = _as_tensors([v])
        gen, _ = model.synthesize(key, latent, kw, kb, w, b)
        out.append(to_uint8(gen.fused))
    video = Video(np.concatenate(out), header.fps)
    stats = _stats(header, key_payload, feature_payload, key_vector, recon, header.step)
    return video, stats, recon
