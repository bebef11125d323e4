"""
Duty cycle and the accept/reject gate
======================================

Run the bundled bench scenario for 100 s, then add an impostor that sends
BLE broadcasts without ever backscattering a key.
"""

from dataclasses import replace

from wptsec.codec import PvkFrame
from wptsec.node import NodeConfig, cycle_energy_budget, nominal_period
from wptsec.engine import run_scenario
from wptsec.rf_link import harvest_dc_power_w
from wptsec.scenario import parse_scenario

cfg = parse_scenario("paper_default.json")
node = cfg.nodes[0]
p_dc = harvest_dc_power_w(cfg.rf)
print(f"energy per cycle {cycle_energy_budget(node) * 1e3:.4f} mJ, dc power {p_dc * 1e6:.1f} uW")
print(f"cycle period {nominal_period(node, p_dc):.3f} s")

report = run_scenario(cfg)
print(report.dumps())

for f in report.frames[:3]:
    print(f"cycle {f.cycle}: frame at {f.waveform.start:8.4f} s -> {f.result.status.value}, {f.result.key.hex()}")

impostor = NodeConfig("impostor", PvkFrame(bytes(16)))
report = run_scenario(replace(cfg, nodes=cfg.nodes + (impostor,), attacker_nodes=("impostor",)))
print("impostor:", report.nodes["impostor"].to_json())
