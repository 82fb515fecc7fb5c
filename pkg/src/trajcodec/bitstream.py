"""``.mttf`` container and key-frame codec adapters.

Header layout (big-endian, 34 bytes)::

    offset size field
    0      4    magic b"MTTF"
    4      1    version (1)
    5      2    r, largest supported resolution
    7      1    resolution index i (frame size r >> i)
    8      1    N_F
    9      1    N_B (generator depth)
    10     1    N_s (supported resolution count)
    11     2    frame count (key frame included)
    13     2    fps numerator
    15     2    fps denominator
    17     2    quantization step numerator
    19     2    quantization step denominator
    21     1    key-frame codec id
    22     4    key-frame payload length
    26     4    feature payload length
    30     4    crc32 of bytes 0..29

The key-frame payload and the feature payload follow the header, in that
order, with no padding.
"""

from __future__ import annotations

import io
import shlex
import struct
import subprocess
import tempfile
import zlib
from dataclasses import dataclass, replace
from fractions import Fraction
from pathlib import Path

import numpy as np
from PIL import Image

MAGIC = b"MTTF"
VERSION = 1
_BODY = struct.Struct(">4sBHBBBBHHHHHBII")
_CRC = struct.Struct(">I")
HEADER_SIZE = _BODY.size + _CRC.size


class FormatError(ValueError):
    pass


class TruncatedStreamError(FormatError):
    pass


class BadMagicError(FormatError):
    pass


class UnsupportedVersionError(FormatError):
    pass


class ChecksumError(FormatError):
    pass


class LengthMismatchError(FormatError):
    pass


class AdapterError(RuntimeError):
    pass


@dataclass(frozen=True)
class StreamHeader:
    r: int
    resolution_index: int
    num_features: int
    depth: int
    num_resolutions: int
    frame_count: int
    fps: Fraction
    step: Fraction
    keyframe_codec_id: int
    keyframe_length: int = 0
    feature_length: int = 0
    version: int = VERSION

    @property
    def resolution(self) -> int:
        return self.r >> self.resolution_index

    def with_lengths(self, keyframe_length, feature_length) -> "StreamHeader":
        return replace(self, keyframe_length=keyframe_length, feature_length=feature_length)

    def pack(self) -> bytes:
        if not self.resolution_index < self.num_resolutions:
            raise FormatError(f"resolution index {self.resolution_index} >= N_s {self.num_resolutions}")
        fps, step = Fraction(self.fps), Fraction(self.step)
        try:
            body = _BODY.pack(
                MAGIC, self.version, self.r, self.resolution_index, self.num_features, self.depth,
                self.num_resolutions, self.frame_count, fps.numerator, fps.denominator,
                step.numerator, step.denominator, self.keyframe_codec_id,
                self.keyframe_length, self.feature_length,
            )
        except struct.error as exc:
            raise FormatError(f"header field out of range: {exc}") from exc
        return body + _CRC.pack(zlib.crc32(body))

    @classmethod
    def unpack(cls, data: bytes) -> "StreamHeader":
        if len(data) < HEADER_SIZE:
            raise TruncatedStreamError(f"stream has {len(data)} bytes, header needs {HEADER_SIZE}")
        body = bytes(data[:_BODY.size])
        if body[:4] != MAGIC:
            raise BadMagicError(f"bad magic {body[:4]!r}")
        if body[4] != VERSION:
            raise UnsupportedVersionError(f"unsupported stream version {body[4]}")
        (crc,) = _CRC.unpack_from(data, _BODY.size)
        if zlib.crc32(body) != crc:
            raise ChecksumError("header crc32 mismatch")
        (_, version, r, idx, nf, nb, ns, frames, fn, fd, sn, sd, codec, klen, flen) = _BODY.unpack(body)
        if fd == 0 or sd == 0 or sn == 0 or idx >= ns:
            raise FormatError("header fields inconsistent")
        return cls(r, idx, nf, nb, ns, frames, Fraction(fn, fd), Fraction(sn, sd), codec, klen, flen, version)


def mux(header: StreamHeader, keyframe_payload: bytes, feature_payload: bytes) -> bytes:
    if header.keyframe_length != len(keyframe_payload) or header.feature_length != len(feature_payload):
        raise LengthMismatchError(
            f"header lengths ({header.keyframe_length}, {header.feature_length}) do not match payloads "
            f"({len(keyframe_payload)}, {len(feature_payload)})"
        )
    return header.pack() + bytes(keyframe_payload) + bytes(feature_payload)


def demux(stream: bytes) -> tuple[StreamHeader, bytes, bytes]:
    header = StreamHeader.unpack(stream)
    end_key = HEADER_SIZE + header.keyframe_length
    end = end_key + header.feature_length
    if len(stream) < end:
        raise TruncatedStreamError(f"stream has {len(stream)} bytes, header announces {end}")
    if len(stream) > end:
        raise LengthMismatchError(f"{len(stream) - end} unexpected trailing bytes")
    return header, bytes(stream[HEADER_SIZE:end_key]), bytes(stream[end_key:end])


# ---------------------------------------------------------------------------
# key-frame codecs; frames are uint8 (H, W, 3)


class KeyframeCodecAdapter:
    codec_id: int

    def encode(self, frame: np.ndarray, qp: int) -> bytes:
        raise NotImplementedError

    def decode(self, payload: bytes, width: int, height: int) -> np.ndarray:
        raise NotImplementedError


class LosslessAdapter(KeyframeCodecAdapter):
    """PNG; exact for 8-bit frames."""

    codec_id = 0

    def encode(self, frame, qp=None):
        frame = _check_frame(frame)
        buf = io.BytesIO()
        Image.fromarray(frame, "RGB").save(buf, format="PNG", optimize=True)
        return buf.getvalue()

    def decode(self, payload, width, height):
        try:
            img = np.asarray(Image.open(io.BytesIO(payload)).convert("RGB"))
        except Exception as exc:
            raise AdapterError(f"lossless key frame decode failed: {exc}") from exc
        if img.shape != (height, width, 3):
            raise AdapterError(f"decoded key frame {img.shape} != expected {(height, width, 3)}")
        return img.copy()


class ExternalCommandAdapter(KeyframeCodecAdapter):
    """Key-frame codec run as an external program (e.g. a VVC intra encoder).

    Templates may use ``{input}``, ``{output}``, ``{qp}``, ``{width}`` and
    ``{height}``.  Raw pictures are exchanged as 8-bit planar RGB.
    """

    codec_id = 1
    QP_RANGE = range(0, 64)

    def __init__(self, encode_template: str, decode_template: str, timeout: float = 600.0):
        self.encode_template = encode_template
        self.decode_template = decode_template
        self.timeout = timeout

    def _run(self, template, **fields):
        cmd = shlex.split(template.format(**fields))
        try:
            proc = subprocess.run(cmd, capture_output=True, timeout=self.timeout)
        except (OSError, subprocess.TimeoutExpired) as exc:
            raise AdapterError(f"key-frame codec {cmd[0]!r} could not run: {exc}") from exc
        if proc.returncode != 0:
            raise AdapterError(
                f"key-frame codec exited with {proc.returncode}: {' '.join(cmd)}\n"
                f"{proc.stderr.decode(errors='replace')[-2000:]}"
            )

    def encode(self, frame, qp):
        frame = _check_frame(frame)
        if qp not in self.QP_RANGE:
            raise AdapterError(f"qp {qp} outside {self.QP_RANGE.start}..{self.QP_RANGE.stop - 1}")
        h, w, _ = frame.shape
        with tempfile.TemporaryDirectory() as tmp:
            src, out = Path(tmp) / "key.rgb", Path(tmp) / "key.bin"
            src.write_bytes(frame.transpose(2, 0, 1).tobytes())
            self._run(self.encode_template, input=src, output=out, qp=qp, width=w, height=h)
            if not out.exists():
                raise AdapterError("key-frame encoder produced no output")
            return out.read_bytes()

    def decode(self, payload, width, height):
        with tempfile.TemporaryDirectory() as tmp:
            src, out = Path(tmp) / "key.bin", Path(tmp) / "key.rgb"
            src.write_bytes(payload)
            self._run(self.decode_template, input=src, output=out, width=width, height=height)
            raw = out.read_bytes() if out.exists() else b""
        if len(raw) != 3 * width * height:
            raise AdapterError(f"decoder output has {len(raw)} bytes, expected {3 * width * height}")
        return np.frombuffer(raw, dtype=np.uint8).reshape(3, height, width).transpose(1, 2, 0).copy()


def _check_frame(frame):
    frame = np.asarray(frame)
    if frame.dtype != np.uint8 or frame.ndim != 3 or frame.shape[2] != 3:
        raise AdapterError(f"key frame must be uint8 (H, W, 3), got {frame.dtype} {frame.shape}")
    return np.ascontiguousarray(frame)


def make_adapter(codec_id: int, encode_template=None, decode_template=None) -> KeyframeCodecAdapter:
    if codec_id == LosslessAdapter.codec_id:
        return LosslessAdapter()
    if codec_id == ExternalCommandAdapter.codec_id:
        if not (encode_template and decode_template):
            raise AdapterError("external key-frame codec needs encode and decode command templates")
        return ExternalCommandAdapter(encode_template, decode_template)
    raise AdapterError(f"unknown key-frame codec id {codec_id}")


def encode_keyframe(frame, qp, adapter: KeyframeCodecAdapter) -> tuple[bytes, np.ndarray]:
    """Returns (payload, reconstructed key frame)."""
    payload = adapter.encode(frame, qp)
    h, w = frame.shape[:2]
    return payload, adapter.decode(payload, w, h)
