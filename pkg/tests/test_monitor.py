import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from conftest import BENCH_KEY
from wptsec.codec import PvkFrame, bytes_to_bits, encode_manchester, frame_chips
from wptsec.errors import DegenerateLevels, InsufficientOversampling, NoFrame, TraceTooShort
from wptsec.monitor import (
    KeyRegistry,
    PowerTrace,
    Reason,
    Status,
    DecodeResult,
    authenticate,
    chip_means,
    decode_frame,
    detect_frame,
    estimate_levels,
    slice_chips,
)
from wptsec.rf_link import HIGH, LOW, RfParams, backscatter_power_dbm, dbm_to_mw, mw_to_dbm

FS = 1e6
CHIP_RATE = 40e3
SPC = int(FS / CHIP_RATE)


def bench_levels():
    """Carrier+low and carrier+high levels at the monitor, calibrated link, in dBm."""
    rf = RfParams()
    leak = dbm_to_mw(rf.effective_leakage)
    low = mw_to_dbm(leak + dbm_to_mw(backscatter_power_dbm(rf, LOW)))
    high = mw_to_dbm(leak + dbm_to_mw(backscatter_power_dbm(rf, HIGH)))
    return high, low


def synth(chips, high, low, start_s=0.05, total_s=0.1, sigma=0.0, rng=None, fs=FS, chip_rate=CHIP_RATE):
    """Hand-built two-level trace: chips at integer sample offsets, independent of the engine."""
    n = int(round(total_s * fs))
    x = np.full(n, low, dtype=float)
    spc = fs / chip_rate
    s0 = int(round(start_s * fs))
    for k, c in enumerate(chips):
        if c:
            x[s0 + int(round(k * spc)) : s0 + int(round((k + 1) * spc))] = high
    if sigma:
        x = x + rng.normal(0, sigma, n)
    return PowerTrace(fs, x)


def test_detect_frame_at_50ms():
    high, low = bench_levels()
    chips = frame_chips(PvkFrame(BENCH_KEY))
    trace = synth(chips, high, low)
    start, end = detect_frame(trace, 256, CHIP_RATE)
    assert abs(start - 50_000) <= SPC
    assert end - start == 256 * SPC


def test_detect_constant_trace():
    with pytest.raises(NoFrame):
        detect_frame(PowerTrace(FS, np.full(20_000, -15.0)), 256, CHIP_RATE)


def test_detect_too_short():
    with pytest.raises(TraceTooShort):
        detect_frame(PowerTrace(FS, np.full(1000, -15.0)), 256, CHIP_RATE)


def test_levels_noiseless():
    high, low = bench_levels()
    assert high - low == pytest.approx(0.15, abs=1e-9)
    x = np.r_[np.full(300, low), np.full(200, high)]
    h, l, thr = estimate_levels(x)
    assert h - l == pytest.approx(0.150, abs=1e-3)
    assert thr == pytest.approx(0.5 * (high + low))


def test_levels_constant():
    with pytest.raises(DegenerateLevels):
        estimate_levels(np.full(100, -15.0))


def test_levels_noisy():
    high, low = bench_levels()
    rng = np.random.default_rng(3)
    n = 2000
    sigma = 0.02
    x = np.r_[low + rng.normal(0, sigma, n), high + rng.normal(0, sigma, n)]
    h, l, _ = estimate_levels(x)
    assert abs(h - high) <= 3 * sigma / np.sqrt(n)
    assert abs(l - low) <= 3 * sigma / np.sqrt(n)


def test_slice_noiseless():
    high, low = bench_levels()
    chips = frame_chips(PvkFrame(BENCH_KEY))
    trace = synth(chips, high, low, start_s=0.0, total_s=256 / CHIP_RATE)
    out = slice_chips(trace.samples, FS, CHIP_RATE, 0.5 * (high + low))
    assert np.array_equal(out, chips)


def test_slice_insufficient_oversampling():
    with pytest.raises(InsufficientOversampling):
        slice_chips(np.zeros(30), 3 * CHIP_RATE, CHIP_RATE, 0.0)


def test_slice_threshold_above_high():
    high, low = bench_levels()
    chips = frame_chips(PvkFrame(BENCH_KEY))
    trace = synth(chips, high, low, start_s=0.0, total_s=256 / CHIP_RATE)
    assert not slice_chips(trace.samples, FS, CHIP_RATE, high + 1.0).any()


def test_chip_means_middle_half():
    # chip of 8 samples, middle 50% = samples 2..5
    x = np.arange(16, dtype=float)
    assert chip_means(x, 8.0, 1.0).tolist() == [3.5, 11.5]


def test_decode_end_to_end():
    high, low = bench_levels()
    spec = PvkFrame(BENCH_KEY)
    res = decode_frame(synth(frame_chips(spec), high, low), spec)
    assert res.status is Status.DECODED
    assert res.key == BENCH_KEY
    assert res.measured_dr == pytest.approx(0.150, abs=1e-3)
    assert res.frame_start == pytest.approx(0.05, abs=1e-9)
    assert res.frame_end == pytest.approx(0.05 + 6.4e-3, abs=1e-9)


def test_decode_first_chip_low():
    # key starting with bit 1 opens on a low chip: detection lands one chip late, decode must realign
    high, low = bench_levels()
    spec = PvkFrame(b"\x80" + BENCH_KEY[1:])
    res = decode_frame(synth(frame_chips(spec), high, low), spec)
    assert res.status is Status.DECODED and res.key == spec.key
    assert res.frame_start == pytest.approx(0.05, abs=1e-9)


def test_decode_pure_carrier():
    spec = PvkFrame(BENCH_KEY)
    assert decode_frame(PowerTrace(FS, np.full(20_000, -15.0)), spec).status is Status.NO_FRAME


def test_decode_collision():
    rf = RfParams()
    leak = dbm_to_mw(rf.effective_leakage)
    ph, pl = dbm_to_mw(backscatter_power_dbm(rf, HIGH)), dbm_to_mw(backscatter_power_dbm(rf, LOW))
    a = frame_chips(PvkFrame(BENCH_KEY))
    b = frame_chips(PvkFrame(bytes(reversed(BENCH_KEY))))
    n = 100_000
    s0 = 50_000
    lin = np.full(n, leak + 2 * pl)
    for chips, off in ((a, 0), (b, 40)):
        level = np.repeat(chips, SPC).astype(float)
        lin[s0 + off : s0 + off + level.size] += level * (ph - pl)
    res = decode_frame(PowerTrace(FS, mw_to_dbm(lin)), PvkFrame(BENCH_KEY))
    assert res.status is Status.CHIP_ERRORS
    assert res.error_count >= 1
    assert res.key is None


def test_decode_with_preamble():
    high, low = bench_levels()
    spec = PvkFrame(BENCH_KEY, preamble=b"\xaa")
    res = decode_frame(synth(frame_chips(spec), high, low), spec)
    assert res.status is Status.DECODED and res.key == BENCH_KEY


def test_to_json_fields():
    doc = DecodeResult(Status.DECODED, b"\x01\x02", 0.5, 0.6, 0.15).to_json()
    assert doc == {"status": "Decoded", "key_hex": "0102", "frame_start_s": 0.5, "measured_dr_db": 0.15}


# --- authentication -------------------------------------------------------

REG = KeyRegistry({"n1": BENCH_KEY})


def decoded(key=BENCH_KEY, start=0.0):
    return DecodeResult(Status.DECODED, key, start, start + 6.4e-3, 0.15)


def test_accept_after_16_4_ms():
    assert authenticate("n1", decoded(), 16.4e-3, REG).accepted


def test_single_bit_flip_rejected():
    flipped = bytes([BENCH_KEY[0] ^ 0x01]) + BENCH_KEY[1:]
    v = authenticate("n1", decoded(flipped), 16.4e-3, REG)
    assert not v.accepted and v.reason is Reason.KEY_MISMATCH


def test_no_frame_rejected():
    assert authenticate("n1", None, 1.0, REG).reason is Reason.NO_FRAME
    assert authenticate("n1", DecodeResult(Status.NO_FRAME), 1.0, REG).reason is Reason.NO_FRAME


def test_other_reasons():
    assert authenticate("ghost", decoded(), 16.4e-3, REG).reason is Reason.UNKNOWN_NODE
    assert authenticate("n1", DecodeResult(Status.CHIP_ERRORS, None, 0, 6.4e-3, 0.1, 3, 0), 0.02, REG).reason is (
        Reason.CORRUPT_FRAME
    )
    assert authenticate("n1", decoded(), 2.0, REG).reason is Reason.WINDOW_EXPIRED
    # broadcast before the frame ended
    assert authenticate("n1", decoded(), 1e-3, REG).reason is Reason.WINDOW_EXPIRED
    with pytest.raises(ValueError):
        authenticate("n1", decoded(), -1.0, REG)
    with pytest.raises(ValueError):
        KeyRegistry({}, auth_window=0)


@given(key=st.binary(min_size=16, max_size=16), other=st.binary(min_size=16, max_size=16))
def test_never_accepts_mismatch(key, other):
    assume(key != other)
    reg = KeyRegistry({"n": key})
    assert not authenticate("n", decoded(other), 16.4e-3, reg).accepted


# --- properties ------------------------------------------------------------

degenerate = {bytes(16), b"\xff" * 16}


@settings(max_examples=100, deadline=None)
@given(key=st.binary(min_size=16, max_size=16), dr=st.floats(0.01, 3.0), base=st.floats(-40, 0))
def test_zero_noise_completeness_synthetic(key, dr, base):
    assume(key not in degenerate)
    spec = PvkFrame(key)
    res = decode_frame(synth(frame_chips(spec), base + dr, base), spec)
    assert res.status is Status.DECODED and res.key == key


@settings(max_examples=30, deadline=None)
@given(key=st.binary(min_size=16, max_size=16), k=st.floats(-50, 50), seed=st.integers(0, 2**32))
def test_threshold_shift_invariance(key, k, seed):
    high, low = bench_levels()
    spec = PvkFrame(key)
    trace = synth(frame_chips(spec), high, low, sigma=0.02, rng=np.random.default_rng(seed))
    shifted = PowerTrace(FS, trace.samples + k)
    a, b = decode_frame(trace, spec), decode_frame(shifted, spec)
    assert a.status == b.status and a.key == b.key and a.frame_start == b.frame_start


def chip_error_rate(sigma, frames=200, seed=0):
    """Fraction of wrongly sliced chips at the true alignment, levels estimated per frame."""
    high, low = bench_levels()
    rng = np.random.default_rng(seed)
    errors = 0
    for _ in range(frames):
        chips = encode_manchester(rng.integers(0, 2, 128))
        trace = synth(chips, high, low, start_s=0.0, total_s=256 / CHIP_RATE, sigma=sigma, rng=rng)
        _, _, thr = estimate_levels(trace.samples)
        errors += int(np.count_nonzero(slice_chips(trace.samples, FS, CHIP_RATE, thr) != chips))
    return errors / (frames * 256)


def test_monotone_degradation():
    sigmas = [0.0, 0.05, 0.1, 0.15, 0.2, 0.3]
    rates = [chip_error_rate(s, seed=i) for i, s in enumerate(sigmas)]
    inversions = sum(1 for a, b in zip(rates, rates[1:]) if b < a)
    assert rates[0] == 0.0
    assert rates[-1] > 0.0
    assert inversions <= 1
