"""Context-adaptive binary arithmetic coding of integer residual symbols.

Bit-exact layout
----------------
Each integer symbol ``v`` is binarized as

* zero flag: ``1`` if ``v == 0`` else ``0``
* sign (only when ``v != 0``): ``0`` positive, ``1`` negative
* order-0 exp-Golomb code of ``|v| - 1``: ``k`` prefix ones, a
  terminating zero, then the ``k`` low bits of ``|v|`` (MSB first).

Every bin is coded with an adaptive probability taken from its context.
Contexts are indexed by (bin role, coefficient group); the group is
``0`` for weight residuals and ``1`` for bias residuals.  Probabilities are
Laplace-smoothed bin counts (both counts start at 1); once the count total
exceeds ``2**15`` both counts are halved (rounding up).

The arithmetic coder is a 32-bit range coder with carry propagation
(LZMA style): 16-bit probability of a zero bin, renormalization by whole
bytes when the range drops below ``2**24``, big-endian byte output and a
5-byte flush on termination.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

PROB_BITS = 16
PROB_ONE = 1 << PROB_BITS
TOP = 1 << 24
MASK32 = 0xFFFFFFFF
RESCALE_LIMIT = 1 << 15

# bin roles inside one coefficient group
ROLE_ZERO = 0
ROLE_SIGN = 1
ROLE_PREFIX = 2
PREFIX_CONTEXTS = 8
ROLE_SUFFIX = ROLE_PREFIX + PREFIX_CONTEXTS
ROLES_PER_GROUP = ROLE_SUFFIX + 1
NUM_GROUPS = 2

# longest exp-Golomb prefix accepted by the decoder; |v| < 2**MAX_PREFIX
MAX_PREFIX = 32
FLUSH_BYTES = 5


class EntropyDecodeError(ValueError):
    """Payload is truncated or does not describe a valid symbol stream."""


@dataclass
class CoderState:
    """Adaptive context statistics shared by the encoder and the decoder.

    A fresh state is the starting point of a stream.  Passing the same
    state object to successive calls continues adaptation; encoder and
    decoder must see identical call sequences to stay in lockstep.
    """

    counts0: list[int] = field(default_factory=lambda: [1] * (NUM_GROUPS * ROLES_PER_GROUP))
    counts1: list[int] = field(default_factory=lambda: [1] * (NUM_GROUPS * ROLES_PER_GROUP))

    @property
    def context_count(self) -> int:
        return len(self.counts0)

    def probability_of_zero(self, ctx: int) -> float:
        c0, c1 = self.counts0[ctx], self.counts1[ctx]
        return c0 / (c0 + c1)

    def copy(self) -> "CoderState":
        return CoderState(list(self.counts0), list(self.counts1))


def _context(group: int, role: int) -> int:
    return group * ROLES_PER_GROUP + role


class _RangeEncoder:
    def __init__(self, state: CoderState):
        self.low = 0
        self.range = MASK32
        self.cache = 0
        self.cache_size = 1
        self.out = bytearray()
        self.c0 = state.counts0
        self.c1 = state.counts1

    def _shift_low(self):
        low = self.low
        if low < 0xFF000000 or low > MASK32:
            carry = low >> 32
            temp = self.cache
            out = self.out
            while True:
                out.append((temp + carry) & 0xFF)
                temp = 0xFF
                self.cache_size -= 1
                if self.cache_size == 0:
                    break
            self.cache = (low >> 24) & 0xFF
        self.cache_size += 1
        self.low = (low & 0x00FFFFFF) << 8

    def encode(self, ctx: int, bit: int):
        c0 = self.c0[ctx]
        c1 = self.c1[ctx]
        bound = (self.range >> PROB_BITS) * ((c0 << PROB_BITS) // (c0 + c1))
        if bit:
            self.low += bound
            self.range -= bound
            c1 += 1
        else:
            self.range = bound
            c0 += 1
        if c0 + c1 > RESCALE_LIMIT:
            c0 = (c0 + 1) >> 1
            c1 = (c1 + 1) >> 1
        self.c0[ctx] = c0
        self.c1[ctx] = c1
        while self.range < TOP:
            self.range = (self.range << 8) & MASK32
            self._shift_low()

    def finish(self) -> bytes:
        for _ in range(FLUSH_BYTES):
            self._shift_low()
        return bytes(self.out)


class _RangeDecoder:
    def __init__(self, payload: bytes, state: CoderState):
        self.data = payload
        self.pos = 0
        self.range = MASK32
        self.code = 0
        self.c0 = state.counts0
        self.c1 = state.counts1
        for _ in range(FLUSH_BYTES):
            self.code = ((self.code << 8) | self._next_byte()) & MASK32

    def _next_byte(self) -> int:
        if self.pos >= len(self.data):
            raise EntropyDecodeError(
                f"payload truncated: needed byte {self.pos}, have {len(self.data)}"
            )
        b = self.data[self.pos]
        self.pos += 1
        return b

    def decode(self, ctx: int) -> int:
        c0 = self.c0[ctx]
        c1 = self.c1[ctx]
        bound = (self.range >> PROB_BITS) * ((c0 << PROB_BITS) // (c0 + c1))
        if self.code < bound:
            self.range = bound
            c0 += 1
            bit = 0
        else:
            self.code -= bound
            self.range -= bound
            c1 += 1
            bit = 1
        if c0 + c1 > RESCALE_LIMIT:
            c0 = (c0 + 1) >> 1
            c1 = (c1 + 1) >> 1
        self.c0[ctx] = c0
        self.c1[ctx] = c1
        while self.range < TOP:
            self.range = (self.range << 8) & MASK32
            self.code = ((self.code << 8) | self._next_byte()) & MASK32
        return bit


def _encode_symbol(enc: _RangeEncoder, value: int, group: int):
    base = group * ROLES_PER_GROUP
    if value == 0:
        enc.encode(base + ROLE_ZERO, 1)
        return
    enc.encode(base + ROLE_ZERO, 0)
    enc.encode(base + ROLE_SIGN, 1 if value < 0 else 0)
    mag = abs(value)  # exp-Golomb of mag - 1 == binary of mag with k = bitlen - 1
    k = mag.bit_length() - 1
    if k >= MAX_PREFIX:
        raise OverflowError(f"symbol magnitude {mag} exceeds 2**{MAX_PREFIX} - 1")
    for i in range(k):
        enc.encode(base + ROLE_PREFIX + min(i, PREFIX_CONTEXTS - 1), 1)
    enc.encode(base + ROLE_PREFIX + min(k, PREFIX_CONTEXTS - 1), 0)
    suffix_ctx = base + ROLE_SUFFIX
    for i in range(k - 1, -1, -1):
        enc.encode(suffix_ctx, (mag >> i) & 1)


def _decode_symbol(dec: _RangeDecoder, group: int) -> int:
    base = group * ROLES_PER_GROUP
    if dec.decode(base + ROLE_ZERO):
        return 0
    negative = dec.decode(base + ROLE_SIGN)
    k = 0
    while dec.decode(base + ROLE_PREFIX + min(k, PREFIX_CONTEXTS - 1)):
        k += 1
        if k >= MAX_PREFIX:
            raise EntropyDecodeError("exp-Golomb prefix exceeds the decoder limit")
    mag = 1
    suffix_ctx = base + ROLE_SUFFIX
    for _ in range(k):
        mag = (mag << 1) | dec.decode(suffix_ctx)
    return -mag if negative else mag


def _groups(symbols_per_frame: int) -> list[int]:
    if symbols_per_frame % 2:
        raise ValueError("a residual frame holds weights then biases; length must be even")
    half = symbols_per_frame // 2
    return [0] * half + [1] * half


def entropy_encode(
    residuals: Iterable[Sequence[int]], state: CoderState | None = None
) -> bytes:
    """Code a sequence of residual frames into a byte-aligned payload.

    Each frame is ``N_F`` weight residuals followed by ``N_F`` bias
    residuals.  ``state`` is updated in place when given.
    """
    state = CoderState() if state is None else state
    enc = _RangeEncoder(state)
    groups = None
    for frame in residuals:
        frame = [int(v) for v in np.asarray(frame).ravel()]
        if groups is None or len(groups) != len(frame):
            groups = _groups(len(frame))
        for value, group in zip(frame, groups):
            _encode_symbol(enc, value, group)
    return enc.finish()


def entropy_decode(
    payload: bytes,
    frame_count: int,
    symbols_per_frame: int,
    state: CoderState | None = None,
) -> list[np.ndarray]:
    """Inverse of :func:`entropy_encode`.

    Bytes after the terminator are ignored.  Raises
    :class:`EntropyDecodeError` on truncated or malformed payloads.
    """
    state = CoderState() if state is None else state
    dec = _RangeDecoder(bytes(payload), state)
    groups = _groups(symbols_per_frame)
    frames = []
    for _ in range(frame_count):
        frames.append(np.array([_decode_symbol(dec, g) for g in groups], dtype=np.int64))
    return frames
