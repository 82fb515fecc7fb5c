"""Predictive coding of compact motion vectors.

Vectors are coded as quantized temporal residuals against the previously
*reconstructed* vector (closed loop), seeded by the key-frame vector that
the decoder derives from the reconstructed key frame at no bit cost.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .entropy import CoderState, entropy_decode, entropy_encode


class CodecConfigError(ValueError):
    pass


@dataclass(frozen=True)
class CompactMotionVector:
    weights: np.ndarray
    biases: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64).ravel()
        b = np.asarray(self.biases, dtype=np.float64).ravel()
        if w.shape != b.shape:
            raise ValueError(f"weights/biases length mismatch: {w.shape} vs {b.shape}")
        if not (np.isfinite(w).all() and np.isfinite(b).all()):
            raise ValueError("compact motion vector has non-finite entries")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "biases", b)

    @property
    def num_features(self) -> int:
        return self.weights.size

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.weights, self.biases])

    @classmethod
    def from_array(cls, values) -> "CompactMotionVector":
        values = np.asarray(values, dtype=np.float64).ravel()
        n = values.size // 2
        return cls(values[:n], values[n:])

    def __eq__(self, other):
        if not isinstance(other, CompactMotionVector):
            return NotImplemented
        return np.array_equal(self.as_array(), other.as_array())


@dataclass(frozen=True)
class CodecConfig:
    step: Fraction = Fraction(1, 50)
    num_features: int = 20

    def __post_init__(self):
        object.__setattr__(self, "step", as_step(self.step))

    @property
    def delta(self) -> float:
        return float(self.step)


def as_step(delta) -> Fraction:
    """Quantization step as a u16/u16 fraction (the form stored in the stream header)."""
    if isinstance(delta, Fraction):
        step = delta
    else:
        if not float(delta) > 0:
            raise CodecConfigError(f"quantization step must be positive, got {delta}")
        step = Fraction(delta).limit_denominator(0xFFFF)
    if step <= 0:
        raise CodecConfigError(f"quantization step must be positive, got {delta}")
    if step.numerator > 0xFFFF or step.denominator > 0xFFFF:
        raise CodecConfigError(f"step {step} not representable with 16-bit numerator/denominator")
    return step


def _delta(delta) -> float:
    if isinstance(delta, Fraction):
        delta = float(delta)
    if not delta > 0:
        raise CodecConfigError(f"quantization step must be positive, got {delta}")
    return float(delta)


def predict_and_quantize(v_t: CompactMotionVector, ref: CompactMotionVector, delta) -> np.ndarray:
    """Residual symbols ``round((v_t - ref) / delta)``, weights first then biases."""
    d = _delta(delta)
    residual = v_t.as_array() - ref.as_array()
    return np.round(residual / d).astype(np.int64)


def reconstruct(ref: CompactMotionVector, symbols, delta) -> CompactMotionVector:
    d = _delta(delta)
    return CompactMotionVector.from_array(ref.as_array() + d * np.asarray(symbols, dtype=np.float64))


def code_sequence(
    vectors: Sequence[CompactMotionVector],
    key_vector: CompactMotionVector,
    delta,
    state: CoderState | None = None,
) -> tuple[bytes, list[CompactMotionVector]]:
    """Closed-loop predictive coding of the inter-frame vectors.

    Returns the feature payload and the reconstructions the decoder will
    produce.  An empty sequence yields an empty payload.
    """
    if not len(vectors):
        _delta(delta)
        return b"", []
    ref = key_vector
    symbols, recon = [], []
    for v in vectors:
        s = predict_and_quantize(v, ref, delta)
        ref = reconstruct(ref, s, delta)
        symbols.append(s)
        recon.append(ref)
    return entropy_encode(symbols, state), recon


def decode_sequence(
    payload: bytes,
    frame_count: int,
    key_vector: CompactMotionVector,
    delta,
    state: CoderState | None = None,
) -> list[CompactMotionVector]:
    """Decoder side of :func:`code_sequence`."""
    if frame_count == 0:
        return []
    frames = entropy_decode(payload, frame_count, 2 * key_vector.num_features, state)
    ref, out = key_vector, []
    for s in frames:
        ref = reconstruct(ref, s, delta)
        out.append(ref)
    return out


def feature_kbps(payload_bytes: int, fps: float, frames: int) -> float:
    return 8.0 * payload_bytes * fps / frames / 1000.0
