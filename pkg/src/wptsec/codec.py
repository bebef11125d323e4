"""Manchester framing of a node's identification key.

Convention (configurable through ``one_is_rising``): bit 1 is a low->high
mid-bit transition, chips ``(0, 1)``; bit 0 is ``(1, 0)``. Bytes are sent
most-significant bit first.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidChipPair, OddChipCount

DEFAULT_PREAMBLE_BYTE = 0xAA


@dataclass(frozen=True)
class PvkFrame:
    key: bytes
    chip_rate: float = 40e3
    preamble: bytes = b""

    def __post_init__(self):
        object.__setattr__(self, "key", bytes(self.key))
        object.__setattr__(self, "preamble", bytes(self.preamble))
        if len(self.key) < 1:
            raise ValueError("key must hold at least one byte")
        if self.chip_rate <= 0:
            raise ValueError("chip_rate must be positive")

    @property
    def n_chips(self) -> int:
        return 16 * (len(self.preamble) + len(self.key))

    @property
    def duration(self) -> float:
        return frame_duration(len(self.key), len(self.preamble), self.chip_rate)


def bytes_to_bits(data: bytes) -> np.ndarray:
    return np.unpackbits(np.frombuffer(bytes(data), dtype=np.uint8)).astype(np.uint8)


def bits_to_bytes(bits) -> bytes:
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.size % 8:
        raise ValueError("bit count must be a multiple of 8")
    return np.packbits(bits).tobytes()


def encode_manchester(bits, one_is_rising: bool = True) -> np.ndarray:
    bits = np.asarray(bits, dtype=np.uint8).ravel()
    if bits.size and bits.max() > 1:
        raise ValueError("bits must be 0 or 1")
    first = 1 - bits if one_is_rising else bits.copy()
    chips = np.empty(2 * bits.size, dtype=np.uint8)
    chips[0::2] = first
    chips[1::2] = 1 - first
    return chips


def decode_manchester(chips, one_is_rising: bool = True) -> np.ndarray:
    """Strict inverse of :func:`encode_manchester`.

    Raises InvalidChipPair at the first pair without a mid-bit transition.
    """
    chips = np.asarray(chips, dtype=np.uint8).ravel()
    if chips.size % 2:
        raise OddChipCount(f"{chips.size} chips")
    pairs = chips.reshape(-1, 2)
    bad = np.flatnonzero(pairs[:, 0] == pairs[:, 1])
    if bad.size:
        raise InvalidChipPair(int(bad[0]))
    return pairs[:, 1].copy() if one_is_rising else pairs[:, 0].copy()


def decode_manchester_lenient(chips, one_is_rising: bool = True) -> tuple[np.ndarray, list[int]]:
    """Best-effort decode: invalid pairs repeat the previous bit (0 for the first).

    Returns the bits and the indices of every invalid pair.
    """
    chips = np.asarray(chips, dtype=np.uint8).ravel()
    if chips.size % 2:
        raise OddChipCount(f"{chips.size} chips")
    pairs = chips.reshape(-1, 2)
    bits = pairs[:, 1].copy() if one_is_rising else pairs[:, 0].copy()
    bad = np.flatnonzero(pairs[:, 0] == pairs[:, 1])
    for i in bad:
        bits[i] = bits[i - 1] if i > 0 else 0
    return bits, [int(i) for i in bad]


def frame_chips(frame: PvkFrame, one_is_rising: bool = True) -> np.ndarray:
    return encode_manchester(bytes_to_bits(frame.preamble + frame.key), one_is_rising)


def frame_duration(key_len: int, preamble_len: int, chip_rate: float) -> float:
    if chip_rate <= 0:
        raise ValueError("chip_rate must be positive")
    return 16 * (key_len + preamble_len) / chip_rate
