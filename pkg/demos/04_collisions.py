"""
Several nodes on one monitor
=============================

How often do two nodes' frames overlap, and what do slotting and
per-node frequency bands buy?
"""

from dataclasses import replace

from wptsec.codec import PvkFrame
from wptsec.engine import Fdm, FreeRunning, Slotted, collision_prob_analytic, collision_prob_mc, run_scenario
from wptsec.node import NodeConfig
from wptsec.scenario import parse_scenario

tau, T = 6.4e-3, 10.0
for n in (2, 5, 10, 20):
    est, se = collision_prob_mc(n, tau, T, 200_000, seed=n)
    print(f"{n:3d} nodes: analytic {collision_prob_analytic(n, tau, T):.5f}  monte carlo {est:.5f} +/- {se:.5f}")

# Identical nodes at the same spot wake together: worst case
base = parse_scenario("paper_default.json")
nodes = tuple(NodeConfig(f"n{i}", PvkFrame(bytes([i * 37 % 256]) * 16), channel=i) for i in range(4))
cfg = replace(base, nodes=nodes, duration=40.0)

for label, mode in (
    ("free running", FreeRunning()),
    ("slotted", Slotted(10e-3, {n.node_id: i for i, n in enumerate(nodes)})),
    ("fdm, 4 bands", Fdm(4)),
):
    report = run_scenario(replace(cfg, mode=mode))
    accepted = sum(r.accepts for r in report.nodes.values())
    total = sum(r.ble_broadcasts for r in report.nodes.values())
    print(f"{label:13s} collisions {report.collision_events:3d}  accepted {accepted}/{total}")
