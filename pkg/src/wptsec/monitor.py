"""P-wave monitor: recover a node's key from a scalar power trace.

Pipeline: :func:`detect_frame` finds the first excursion above the carrier
baseline, :func:`estimate_levels` splits the frame samples into high/low
clusters, :func:`slice_chips` integrates the middle of each chip against the
threshold, and Manchester pairs are turned back into bytes. The chip rate is
known to the monitor, so there is no clock recovery.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .codec import PvkFrame, bits_to_bytes, bytes_to_bits, decode_manchester_lenient
from .errors import DegenerateLevels, InsufficientOversampling, NoFrame, TraceTooShort

DEFAULT_DETECTION_FLOOR_DB = 0.01
DEFAULT_AUTH_WINDOW = 1.0
# the floor is inclusive; this absorbs round-off in dB differences taken at exactly the floor
_FLOOR_RTOL = 1e-6


@dataclass(frozen=True)
class PowerTrace:
    sample_rate: float
    samples: np.ndarray = field(repr=False)
    start_time: float = 0.0
    channel: int = 0

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        object.__setattr__(self, "samples", np.asarray(self.samples, dtype=float))

    @property
    def times(self) -> np.ndarray:
        return self.start_time + np.arange(self.samples.size) / self.sample_rate

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


class Status(str, enum.Enum):
    DECODED = "Decoded"
    NO_FRAME = "NoFrame"
    CHIP_ERRORS = "ChipErrors"


@dataclass(frozen=True)
class DecodeResult:
    status: Status
    key: bytes | None = None
    frame_start: float | None = None
    frame_end: float | None = None
    measured_dr: float = 0.0
    error_count: int = 0
    first_error_index: int | None = None

    def to_json(self) -> dict:
        return {
            "status": self.status.value,
            "key_hex": self.key.hex() if self.key is not None else None,
            "frame_start_s": self.frame_start,
            "measured_dr_db": self.measured_dr,
        }


@dataclass
class KeyRegistry:
    keys: dict[str, bytes]
    auth_window: float = DEFAULT_AUTH_WINDOW

    def __post_init__(self):
        if self.auth_window <= 0:
            raise ValueError("auth_window must be positive")


class Reason(str, enum.Enum):
    NO_FRAME = "NoFrame"
    KEY_MISMATCH = "KeyMismatch"
    WINDOW_EXPIRED = "WindowExpired"
    UNKNOWN_NODE = "UnknownNode"
    CORRUPT_FRAME = "CorruptFrame"


@dataclass(frozen=True)
class Verdict:
    accepted: bool
    reason: Reason | None = None

    def __bool__(self):
        return self.accepted


ACCEPT = Verdict(True)


def _moving_average(x: np.ndarray, width: int) -> np.ndarray:
    if width <= 1:
        return x.copy()
    left = (width - 1) // 2
    padded = np.pad(x, (left, width - 1 - left), mode="edge")
    csum = np.concatenate(([0.0], np.cumsum(padded)))
    return (csum[width:] - csum[:-width]) / width


def detect_frame(
    trace: PowerTrace,
    expected_chips: int,
    chip_rate: float,
    detection_floor: float = DEFAULT_DETECTION_FLOOR_DB,
) -> tuple[int, int]:
    """Locate the first high excursion; returns ``(start, end)`` sample indices.

    The start is the first sample of the first high chip, which may be one
    chip after the true frame start (a frame opening on a low chip is
    invisible against the baseline). :func:`decode_frame` resolves that.
    """
    x = trace.samples
    spc = trace.sample_rate / chip_rate
    frame_len = int(round(expected_chips * spc))
    if x.size < frame_len:
        raise TraceTooShort(f"{x.size} samples, frame needs {frame_len}")
    finite = np.where(np.isfinite(x), x, np.nan)
    baseline = np.nanmedian(finite[: max(1, x.size // 10)])
    if not np.isfinite(baseline):
        raise NoFrame("no carrier in the leading samples")
    quarter = max(1, int(round(spc / 4)))
    dev = np.abs(_moving_average(np.nan_to_num(finite, nan=baseline), quarter) - baseline)
    peak = dev.max()
    if peak < detection_floor * (1 - _FLOOR_RTOL):
        raise NoFrame(f"peak deviation {peak:.4g} dB below floor {detection_floor} dB")
    above = np.concatenate(([False], dev > peak / 2, [False])).astype(np.int8)
    edges = np.diff(above)
    run_starts = np.flatnonzero(edges == 1)
    run_ends = np.flatnonzero(edges == -1)
    long_runs = np.flatnonzero(run_ends - run_starts >= quarter)
    if long_runs.size == 0:
        raise NoFrame("no sustained excursion")
    start = int(run_starts[long_runs[0]])
    return start, start + frame_len


def estimate_levels(
    window,
    detection_floor: float = DEFAULT_DETECTION_FLOOR_DB,
    max_iter: int = 100,
    tol: float = 1e-9,
) -> tuple[float, float, float]:
    """Two-means split of a 1-D sample window: ``(high, low, threshold)``.

    Starts from the midrange threshold; ``high - low`` is the measured
    dynamic range.
    """
    x = np.asarray(window, dtype=float)
    x = x[np.isfinite(x)]
    if x.size == 0:
        raise DegenerateLevels("empty window")
    lo, hi = float(x.min()), float(x.max())
    if hi - lo < detection_floor * (1 - _FLOOR_RTOL):
        raise DegenerateLevels(f"spread {hi - lo:.4g} dB below floor {detection_floor} dB")
    threshold = 0.5 * (lo + hi)
    for _ in range(max_iter):
        upper = x > threshold
        high = float(x[upper].mean())
        low = float(x[~upper].mean())
        new = 0.5 * (high + low)
        if abs(new - threshold) < tol:
            threshold = new
            break
        threshold = new
    return high, low, threshold


def _chip_bounds(n_chips: int, spc: float, fraction: float) -> tuple[np.ndarray, np.ndarray]:
    k = np.arange(n_chips)
    margin = (1.0 - fraction) / 2.0
    lo = np.ceil((k + margin) * spc - 1e-9).astype(np.int64)
    hi = np.ceil((k + 1 - margin) * spc - 1e-9).astype(np.int64)
    hi = np.maximum(hi, lo + 1)
    return lo, hi


def chip_means(window, sample_rate: float, chip_rate: float, fraction: float = 0.5) -> np.ndarray:
    """Mean of the central ``fraction`` of each chip's samples."""
    x = np.asarray(window, dtype=float)
    spc = sample_rate / chip_rate
    n_chips = int(round(x.size / spc))
    lo, hi = _chip_bounds(n_chips, spc, fraction)
    hi = np.minimum(hi, x.size)
    csum = np.concatenate(([0.0], np.cumsum(x)))
    return (csum[hi] - csum[lo]) / (hi - lo)


def slice_chips(window, sample_rate: float, chip_rate: float, threshold: float, fraction: float = 0.5) -> np.ndarray:
    if sample_rate < 4 * chip_rate:
        raise InsufficientOversampling(f"{sample_rate:g} Hz sampling for {chip_rate:g} Hz chips (need 4x)")
    return (chip_means(window, sample_rate, chip_rate, fraction) > threshold).astype(np.uint8)


def _score(chips: np.ndarray, preamble_bits: np.ndarray) -> tuple[int, int]:
    pairs = chips.reshape(-1, 2)
    valid = int(np.count_nonzero(pairs[:, 0] != pairs[:, 1]))
    if preamble_bits.size == 0:
        return valid, 0
    bits = pairs[: preamble_bits.size, 1]
    return valid, int(np.count_nonzero(bits == preamble_bits))


def decode_frame(
    trace: PowerTrace,
    frame_spec: PvkFrame,
    detection_floor: float = DEFAULT_DETECTION_FLOOR_DB,
    fraction: float = 0.5,
) -> DecodeResult:
    """Detect, level, slice and decode one frame.

    Invalid Manchester pairs do not abort: they are counted and the bit is
    filled with the previous value, giving a ``ChipErrors`` result.
    """
    n_chips = frame_spec.n_chips
    chip_rate = frame_spec.chip_rate
    if trace.sample_rate < 4 * chip_rate:
        raise InsufficientOversampling(f"{trace.sample_rate:g} Hz sampling for {chip_rate:g} Hz chips (need 4x)")
    try:
        start, end = detect_frame(trace, n_chips, chip_rate, detection_floor)
    except NoFrame:
        return DecodeResult(Status.NO_FRAME)
    x = trace.samples
    spc = trace.sample_rate / chip_rate
    length = end - start
    one_chip = int(round(spc))
    try:
        high, low, threshold = estimate_levels(x[start : min(end, x.size)], detection_floor)
    except DegenerateLevels:
        return DecodeResult(Status.NO_FRAME)

    # the detected edge is the first high chip; the frame may have opened one chip earlier on a low chip
    preamble_bits = bytes_to_bits(frame_spec.preamble)
    best = None
    for candidate in (start, start - one_chip):
        if candidate < 0 or candidate + length > x.size:
            continue
        chips = slice_chips(x[candidate : candidate + length], trace.sample_rate, chip_rate, threshold, fraction)
        if chips.size != n_chips:
            continue
        score = _score(chips, preamble_bits)
        if best is None or score > best[0]:
            best = (score, candidate, chips)
    if best is None:
        # frame runs off the end of the trace
        raise TraceTooShort("detected frame does not fit inside the trace")
    _, start, chips = best

    bits, bad = decode_manchester_lenient(chips)
    decoded = bits_to_bytes(bits)[len(frame_spec.preamble) :]
    frame_start = trace.start_time + start / trace.sample_rate
    frame_end = frame_start + n_chips / chip_rate
    dr = max(0.0, high - low)
    if bad:
        return DecodeResult(Status.CHIP_ERRORS, None, frame_start, frame_end, dr, len(bad), bad[0])
    return DecodeResult(Status.DECODED, decoded, frame_start, frame_end, dr)


def authenticate(node_id: str, result: DecodeResult | None, ble_event_time: float, registry: KeyRegistry) -> Verdict:
    """Accept/reject gate for one BLE broadcast.

    ``result`` is the monitor's decode of the frame that preceded the
    broadcast, or None when no frame was observed.
    """
    if ble_event_time < 0:
        raise ValueError("ble_event_time must be >= 0")
    if node_id not in registry.keys:
        return Verdict(False, Reason.UNKNOWN_NODE)
    if result is None or result.status is Status.NO_FRAME:
        return Verdict(False, Reason.NO_FRAME)
    if result.status is Status.CHIP_ERRORS:
        return Verdict(False, Reason.CORRUPT_FRAME)
    if result.key != registry.keys[node_id]:
        return Verdict(False, Reason.KEY_MISMATCH)
    gap = ble_event_time - result.frame_end
    if not 0 <= gap <= registry.auth_window:
        return Verdict(False, Reason.WINDOW_EXPIRED)
    return ACCEPT
