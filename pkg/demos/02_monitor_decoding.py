"""
From key to chips to power trace and back
==========================================

Encode a 16-byte key, drive one node's reflection with it, synthesize what
the monitor sees, and decode it again. Then push the noise up until the
slicer starts to fail.
"""

import numpy as np

from wptsec.codec import PvkFrame, frame_chips
from wptsec.engine import superpose_trace
from wptsec.monitor import decode_frame, estimate_levels
from wptsec.node import Waveform
from wptsec.rf_link import RfParams

key = bytes.fromhex("3f9a1c7e52d40b86e17c2a5f90d3b648")
spec = PvkFrame(key, chip_rate=40e3)
chips = frame_chips(spec)
print(f"{len(chips)} chips, {spec.duration * 1e3:.2f} ms on air")
print("first byte as chips:", "".join(map(str, chips[:16])))

# The frame sits 2 ms into a 12 ms window sampled at 1 MS/s
wave = Waveform("node", 2e-3, spec.chip_rate, chips)
rng = np.random.default_rng(0)

for sigma in (0.0, 0.02, 0.05, 0.1, 0.2):
    rf = RfParams(noise_sigma_db=sigma)
    trace = superpose_trace(rf, [wave], (0.0, 12e-3), 1e6, rng=rng)
    res = decode_frame(trace, spec)
    ok = res.key == key
    print(f"sigma {sigma:4.2f} dB: {res.status.value:10s} key ok={ok!s:5s} measured range {res.measured_dr:.3f} dB")

# Level estimation on its own: two-means split of the frame samples
rf = RfParams()
trace = superpose_trace(rf, [wave], (0.0, 12e-3), 1e6, rng=rng)
high, low, thr = estimate_levels(trace.samples[2000:8400])
print(f"high {high:.3f} dBm, low {low:.3f} dBm, threshold {thr:.3f} dBm")
